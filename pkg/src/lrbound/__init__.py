"""Iterated Lieb-Robinson bounds for power-law interactions.

Modules:
  bound_core  bound functions lambda(r, t), tau-polynomials, evaluation
  iteration   the recursion that builds the bound family, plus lemma checks
  lightcone   LC1 / LC2 light-cone exponents, closed form and numeric
  oracle      exact small-lattice dynamics used as ground truth
  cli         the ``lrbound`` command
"""

__version__ = "0.1.0"

from .bound_core import (  # noqa: E402
    BoundDescriptor,
    BoundError,
    ConstantRegistry,
    ModelParams,
    PowerLawTerm,
    TauPolynomial,
    eval_bound,
    leading_behavior,
    theorem_bound,
)
from .iteration import SigmaSchedule, derive_bound, initial_bound, iterate_step, n_star  # noqa: E402
from .lightcone import LightconeQuery, Method, Which, exponent, lc_exponent_numeric  # noqa: E402

__all__ = [
    "BoundDescriptor",
    "BoundError",
    "ConstantRegistry",
    "LightconeQuery",
    "Method",
    "ModelParams",
    "PowerLawTerm",
    "SigmaSchedule",
    "TauPolynomial",
    "Which",
    "derive_bound",
    "eval_bound",
    "exponent",
    "initial_bound",
    "iterate_step",
    "lc_exponent_numeric",
    "leading_behavior",
    "n_star",
    "theorem_bound",
]
