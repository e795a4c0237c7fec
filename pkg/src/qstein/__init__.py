"""Finite-n numerics for composite quantum hypothesis testing."""

from .divergences import (
    Bracket,
    dh_eps,
    dh_eps_composite,
    g_afw,
    measured_relent_pinched,
    neyman_pearson_simple,
    pinch,
    relent_to_hull,
    umegaki,
)
from .errors import CapExceeded, ConfigError, QSteinError
from .families import DiscreteMeasure, NType, StateFamily, axiom_audit, stabiliser_states
from .operators import DensityOperator, HermitianOperator, Permutation
from .reports import CheckReport

__version__ = "0.1.0"
