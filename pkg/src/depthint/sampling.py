"""Sparse-observation samplers; every sampler is a pure function of (input, seed)."""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .grid import SparseObservations, as_depth


def sample_random_points(gt, n: int, seed) -> SparseObservations:
    """Uniformly pick ``n`` distinct pixels with positive depth."""
    gt = as_depth(gt, "ground truth")
    candidates = np.flatnonzero(gt.ravel() > 0)
    if n < 0 or n > candidates.size:
        raise DomainError(f"cannot sample {n} points from {candidates.size} valid pixels")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(candidates, size=n, replace=False)
    mask = np.zeros(gt.size, dtype=bool)
    mask[chosen] = True
    return SparseObservations.from_dense(gt, mask.reshape(gt.shape))


def subsample_rows(obs: SparseObservations, keep_every: int) -> SparseObservations:
    """Keep observations only on rows divisible by ``keep_every``."""
    if keep_every < 1:
        raise DomainError("keep_every must be at least 1")
    rows = (np.arange(obs.shape[0]) % keep_every == 0)[:, None]
    return SparseObservations.from_dense(obs.values, obs.mask & rows)


def random_mask_augment(obs: SparseObservations, seed) -> SparseObservations:
    """Half the time return ``obs``; otherwise drop each point with a random rate.

    The drop rate is drawn uniformly from [0, 1] per call.
    """
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        return obs
    rate = rng.random()
    keep = rng.random(obs.shape) >= rate
    return SparseObservations.from_dense(obs.values, obs.mask & keep)
