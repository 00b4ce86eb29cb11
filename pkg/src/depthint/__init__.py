"""Differentiable gradient-domain depth integration."""
from .cg import SolveStats, StopConfig, solve
from .ddi import (DdiContext, DdiSolution, ddi_backward_confidence, ddi_backward_gradients,
                  ddi_forward)
from .errors import (ConvergenceError, DepthIntError, DivergenceError, DomainError,
                     EmptyMaskError, ShapeError, SingularSystemError, SizeError, StateError)
from .grid import (GradientField, SparseObservations, UpsampleWeights, convex_upsample,
                   finite_difference, flatten, masked_avg_pool, unflatten)
from .metrics import MetricReport, compute_metrics
from .operators import SystemConfig, apply_A, apply_At, apply_normal, build_rhs

__version__ = "0.1.0"
