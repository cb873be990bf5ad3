"""Adaptive decomposition in the Drury-Arveson space of the unit ball."""

from .seriescore import (PowerSeries, da_inner, da_inner_matrix, da_norm, da_weight,
                         expand_cauchy, gleason_Ru, series_eval, truncate)
from .blaschke import (BlaschkeChain, BlaschkeFactor, blaschke_vector, blaschke_vector_rudin,
                       cauchy_kernel_normalized, elementary_factor, kernel_identity_residual,
                       unitary_completion)
from .interp import InterpolationProblem, solve_multi, solve_single
from .selector import Projection, SearchConfig, SelectionResult, optimize_projection, select_max
from .engine import (DecompositionReport, DivisionError, EngineConfig, divide_by_factor,
                     extract_term, reconstruct, run_decomposition)

__version__ = "0.1.0"
