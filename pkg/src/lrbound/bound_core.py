"""Bound functions lambda(r, t) and their pointwise evaluation.

A bound is a stretched-exponential term ``P(vt) exp(vt - r^(1 - sigma))``
plus a short list of power-law terms ``F_i(vt) r^mu_i``, each optionally
gated by ``Theta(R - r^sigma)``.  Every prefactor is a :class:`TauPolynomial`
in ``tau = v t`` whose monomials also carry a power of the support size |X|.
Lattice spacing is fixed to 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

TRIVIAL_BOUND = 2.0
MAX_MONOMIALS = 256
# tau powers are merged when they agree to this many decimals
_POWER_DIGITS = 12
# exp() overflows a little above 709
_EXP_CEILING = 700.0


class BoundError(ValueError):
    """Raised for malformed bounds or invalid model parameters."""


@dataclass(frozen=True)
class ConstantRegistry:
    """The unnamed constants of the construction, all defaulting to 1.

    ``c`` is the generic constant of the integral estimates, ``c1`` the
    constant of the one-step recursion, ``c2`` the velocity constant,
    ``c3`` the constant of the closed theorem form and ``lattice`` the
    sum-to-integral constant of the lattice.
    """

    c: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    lattice: float = 1.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not (value > 0 and math.isfinite(value)):
                raise BoundError(f"constant {name} must be positive and finite, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {"c": self.c, "c1": self.c1, "c2": self.c2, "c3": self.c3, "lattice": self.lattice}


@dataclass(frozen=True)
class ModelParams:
    """Assumption bundle: power-law exponent, dimension, J, C0 and |X|."""

    alpha: float
    dim: int
    j_const: float = 1.0
    c0: float = 1.0
    x_size: int = 1
    constants: ConstantRegistry = field(default_factory=ConstantRegistry)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise BoundError(f"dim must be a positive integer, got {self.dim}")
        if not self.alpha > self.dim:
            raise BoundError(f"alpha must exceed dim (alpha={self.alpha}, dim={self.dim})")
        if self.j_const < 0 or self.c0 < 0:
            raise BoundError("j_const and c0 must be nonnegative")
        if int(self.x_size) != self.x_size or self.x_size < 1:
            raise BoundError(f"x_size must be a positive integer, got {self.x_size}")
        if not self.velocity > 0:
            raise BoundError("velocity c2*max(J, C0) must be positive")

    @property
    def velocity(self) -> float:
        return self.constants.c2 * max(self.j_const, self.c0)

    @property
    def j_over_v(self) -> float:
        """J t expressed in units of tau = v t."""
        return self.j_const / self.velocity

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "dim": self.dim,
            "j_const": self.j_const,
            "c0": self.c0,
            "x_size": self.x_size,
            "velocity": self.velocity,
            "constants": self.constants.as_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelParams":
        return cls(
            alpha=float(data["alpha"]),
            dim=int(data["dim"]),
            j_const=float(data["j_const"]),
            c0=float(data["c0"]),
            x_size=int(data["x_size"]),
            constants=ConstantRegistry(**data.get("constants", {})),
        )


@dataclass(frozen=True)
class Monomial:
    coeff: float
    tau_power: float
    x_power: int


def _key(tau_power: float, x_power: int) -> tuple[float, int]:
    return (round(float(tau_power), _POWER_DIGITS) + 0.0, int(x_power))


class TauPolynomial:
    """Finite sum of ``coeff * tau**g * |X|**p`` with nonnegative coefficients.

    Tau powers are real and may be negative: those monomials come from the
    lower limit ``(v t)^(1/(1 - sigma))`` of the spread integral and are
    valid, if loose, upper bounds at small tau.
    """

    __slots__ = ("_terms",)

    def __init__(self, monomials: Iterable[Monomial | tuple] = ()):
        terms: dict[tuple[float, int], float] = {}
        for m in monomials:
            if not isinstance(m, Monomial):
                m = Monomial(*m)
            if m.coeff < 0 or not math.isfinite(m.coeff):
                raise BoundError(f"monomial coefficients must be finite and >= 0, got {m.coeff}")
            if m.x_power < 0:
                raise BoundError("x_power must be nonnegative")
            if m.coeff == 0:
                continue
            k = _key(m.tau_power, m.x_power)
            terms[k] = terms.get(k, 0.0) + float(m.coeff)
        if len(terms) > MAX_MONOMIALS:
            raise BoundError(f"TauPolynomial exceeds {MAX_MONOMIALS} monomials")
        self._terms = terms

    @classmethod
    def _wrap(cls, terms: dict[tuple[float, int], float]) -> "TauPolynomial":
        if len(terms) > MAX_MONOMIALS:
            raise BoundError(f"TauPolynomial exceeds {MAX_MONOMIALS} monomials")
        obj = cls.__new__(cls)
        obj._terms = terms
        return obj

    @classmethod
    def monomial(cls, coeff: float, tau_power: float = 0.0, x_power: int = 0) -> "TauPolynomial":
        return cls([Monomial(coeff, tau_power, x_power)])

    def __iter__(self) -> Iterator[Monomial]:
        for (g, p), c in sorted(self._terms.items()):
            yield Monomial(c, g, p)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, TauPolynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self) -> str:
        body = " + ".join(f"{m.coeff:.6g}*tau^{m.tau_power:.6g}*X^{m.x_power}" for m in self)
        return f"TauPolynomial({body or '0'})"

    def __add__(self, other: "TauPolynomial") -> "TauPolynomial":
        terms = dict(self._terms)
        for k, c in other._terms.items():
            terms[k] = terms.get(k, 0.0) + c
        return TauPolynomial._wrap(terms)

    __radd__ = __add__

    def __mul__(self, other: "TauPolynomial | float") -> "TauPolynomial":
        if isinstance(other, (int, float)):
            return self.scale(other)
        terms: dict[tuple[float, int], float] = {}
        for (g1, p1), c1 in self._terms.items():
            for (g2, p2), c2 in other._terms.items():
                k = _key(g1 + g2, p1 + p2)
                terms[k] = terms.get(k, 0.0) + c1 * c2
        return TauPolynomial._wrap(terms)

    __rmul__ = __mul__

    def scale(self, factor: float) -> "TauPolynomial":
        if factor < 0:
            raise BoundError("TauPolynomial can only be scaled by nonnegative factors")
        if factor == 0:
            return TauPolynomial()
        return TauPolynomial._wrap({k: c * factor for k, c in self._terms.items()})

    def shift(self, tau_power: float = 0.0, x_power: int = 0, coeff: float = 1.0) -> "TauPolynomial":
        """Product with a single monomial."""
        return self * TauPolynomial.monomial(coeff, tau_power, x_power)

    def __call__(self, tau: float, x_size: float = 1.0) -> float:
        total = 0.0
        for (g, p), c in self._terms.items():
            if tau == 0.0:
                if g < 0:
                    return math.inf
                if g > 0:
                    continue
                total += c * x_size**p
            else:
                try:
                    total += c * tau**g * x_size**p
                except OverflowError:
                    return math.inf
        return total

    @property
    def leading_power(self) -> float:
        if not self._terms:
            raise BoundError("empty TauPolynomial has no leading power")
        return max(g for g, _ in self._terms)

    def leading_x_power(self) -> int:
        g = self.leading_power
        return max(p for (h, p) in self._terms if h == g)

    def to_list(self) -> list[dict]:
        return [{"coeff": m.coeff, "tau_power": m.tau_power, "x_power": m.x_power} for m in self]

    @classmethod
    def from_list(cls, data: Sequence[Mapping]) -> "TauPolynomial":
        return cls(Monomial(float(d["coeff"]), float(d["tau_power"]), int(d["x_power"])) for d in data)


@dataclass(frozen=True)
class PowerLawTerm:
    """``prefactor(vt) * r**r_exponent``, optionally gated by ``Theta(R - r**cutoff_power)``."""

    r_exponent: float
    prefactor: TauPolynomial
    cutoff_power: float | None = None

    def to_dict(self) -> dict:
        return {
            "r_exponent": self.r_exponent,
            "prefactor": self.prefactor.to_list(),
            "cutoff_power": self.cutoff_power,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PowerLawTerm":
        cp = data.get("cutoff_power")
        return cls(float(data["r_exponent"]), TauPolynomial.from_list(data["prefactor"]),
                   None if cp is None else float(cp))


@dataclass(frozen=True)
class BoundDescriptor:
    """A bound lambda(r, t) on ||[tau_t(A), B]|| / (||A|| ||B||).

    ``sigma_exp=None`` marks the short-range seed, whose exponential is
    ``exp(vt - r/R)`` rather than ``exp(vt - r^(1 - sigma))``.
    """

    params: ModelParams
    sigma_exp: float | None
    exp_prefactor: TauPolynomial
    poly_terms: tuple[PowerLawTerm, ...] = ()
    cutoff: float = math.inf
    iteration_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "poly_terms", tuple(self.poly_terms))
        if self.sigma_exp is not None and not 0.0 < self.sigma_exp < 1.0:
            raise BoundError(f"sigma_exp must lie in (0, 1), got {self.sigma_exp}")
        if not self.cutoff > 0:
            raise BoundError("cutoff must be positive (or infinite)")
        if len({t.r_exponent for t in self.poly_terms}) > 2:
            raise BoundError("a bound carries at most two distinct spatial exponents")

    @property
    def is_seed(self) -> bool:
        return self.sigma_exp is None

    def with_cutoff(self, cutoff: float) -> "BoundDescriptor":
        return replace(self, cutoff=cutoff)

    def raw(self, r: float, t: float) -> float:
        """Unclamped sum of the exponential and the open power-law terms."""
        p = self.params
        tau = p.velocity * t
        value = 0.0
        if self.exp_prefactor:
            if self.is_seed:
                exponent = tau - (0.0 if math.isinf(self.cutoff) else r / self.cutoff)
            else:
                exponent = tau - r ** (1.0 - self.sigma_exp)
            if exponent > _EXP_CEILING:
                return math.inf
            value += self.exp_prefactor(tau, p.x_size) * math.exp(exponent)
        for term in self.poly_terms:
            # gate counts as open at R == r^sigma
            if term.cutoff_power is not None and r**term.cutoff_power > self.cutoff:
                continue
            value += term.prefactor(tau, p.x_size) * r**term.r_exponent
        return value

    def __call__(self, r: float, t: float) -> float:
        return eval_bound(self, r, t)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "sigma_exp": self.sigma_exp,
            "exp_prefactor": self.exp_prefactor.to_list(),
            "poly_terms": [t.to_dict() for t in self.poly_terms],
            "cutoff": "inf" if math.isinf(self.cutoff) else self.cutoff,
            "iteration_count": self.iteration_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BoundDescriptor":
        cutoff = data["cutoff"]
        return cls(
            params=ModelParams.from_dict(data["params"]),
            sigma_exp=None if data["sigma_exp"] is None else float(data["sigma_exp"]),
            exp_prefactor=TauPolynomial.from_list(data["exp_prefactor"]),
            poly_terms=tuple(PowerLawTerm.from_dict(t) for t in data["poly_terms"]),
            cutoff=math.inf if cutoff == "inf" else float(cutoff),
            iteration_count=int(data["iteration_count"]),
        )

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), allow_nan=False, **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "BoundDescriptor":
        return cls.from_dict(json.loads(text))


def clamp(r: float, value: float) -> float:
    """The trivial-bound clamp: 2 when r < 1 or when 2 is the tighter value."""
    if r < 1.0 or not value <= TRIVIAL_BOUND:
        return TRIVIAL_BOUND
    return value


def eval_bound(bound: BoundDescriptor, r: float, t: float) -> float:
    if r < 0 or t < 0:
        raise BoundError("eval_bound needs r >= 0 and t >= 0")
    if r < 1.0:
        return TRIVIAL_BOUND
    return clamp(r, bound.raw(r, t))


def leading_behavior(bound: BoundDescriptor) -> tuple[float, float]:
    """(spatial, temporal) leading exponents of the power-law part.

    The spatial exponent is the largest (least negative) r-exponent, which
    dominates at large r; the temporal one is the largest tau power over
    all prefactors.
    """
    if not bound.poly_terms:
        raise BoundError("bound has no power-law terms")
    spatial = max(t.r_exponent for t in bound.poly_terms)
    powers = [t.prefactor.leading_power for t in bound.poly_terms if t.prefactor]
    if bound.exp_prefactor:
        powers.append(bound.exp_prefactor.leading_power)
    return spatial, max(powers)


def leading_x_power(bound: BoundDescriptor) -> int:
    """Largest |X| power among the monomials that carry the leading tau power."""
    _, temporal = leading_behavior(bound)
    best = 0
    for term in bound.poly_terms:
        for m in term.prefactor:
            if round(m.tau_power - temporal, _POWER_DIGITS) == 0:
                best = max(best, m.x_power)
    return best


def exponential_bound(params: ModelParams, sigma: float) -> BoundDescriptor:
    """Exponential part only: ``2|X| exp(vt - r^(1 - sigma))``."""
    return BoundDescriptor(params, sigma, TauPolynomial.monomial(2.0, 0.0, 1))


def theorem_bound(params: ModelParams, sigma: float) -> BoundDescriptor:
    """The closed form ``2|X| e^(vt - r^(1-sigma)) + C1 C3 (tau + tau^(1+d/(1-sigma))) |X|^(n*+2) r^(-sigma alpha)``."""
    from .iteration import n_star

    k = params.constants
    d = params.dim
    xp = n_star(sigma, params) + 2
    g = TauPolynomial([Monomial(k.c1 * k.c3, 1.0, xp), Monomial(k.c1 * k.c3, 1.0 + d / (1.0 - sigma), xp)])
    return replace(exponential_bound(params, sigma), poly_terms=(PowerLawTerm(-sigma * params.alpha, g),))
