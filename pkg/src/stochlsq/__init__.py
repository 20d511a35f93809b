"""Sketched stochastic approximation for overdetermined least squares."""

from .errors import ConfigError, DimensionError, NotTrainedError, ParseError, RankDeficientError
from .problem import LsProblem, generate_regression, objective, pseudo_solve, qr_solve, weighted_solve
from .sketch import (
    GeneralizedKaczmarz,
    KaczmarzUniformColumns,
    SparseRademacher,
    SparseRandom,
    beta_of,
    block_kaczmarz,
    draw,
    kaczmarz_partition,
    row_kaczmarz,
    sketch_apply,
)
from .directions import Gradient, Newton, QuasiNewton
from .solver import Constant, Harmonic, SolveReport, StoppingRule, run, run_multi_rhs

__version__ = "0.1.0"
