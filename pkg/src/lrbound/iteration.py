"""Derivation of the iterated bound family.

Starting from the short-range seed ``2|X| exp(vt - r/R)``, each step splits
the interactions at ``R' = r**sigma``, estimates the spread integral
``I[lambda] = lambda(0) + int_{1/2}^inf rho^(d-1) lambda(rho) drho`` of the
previous bound and folds it into two power-law terms.  Term 0 tracks the
piece that still depends on ``R'`` (the near-zone part), term 1 collects the
``R'``-independent far-zone budget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .bound_core import (
    BoundDescriptor,
    BoundError,
    ModelParams,
    PowerLawTerm,
    TauPolynomial,
    eval_bound,
)

# |d + mu| below this is treated as the logarithmic case
LOG_CASE_TOL = 1e-12
SIGMA_NUDGE = 1e-9


class LogarithmicCaseError(BoundError):
    """d + mu = 0 for some term: the spread integral picks up a logarithm."""


@dataclass(frozen=True)
class SigmaSchedule:
    """Non-increasing cutoff exponents sigma_1 >= sigma_2 >= ... in (0, 1)."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        object.__setattr__(self, "sigmas", s)
        for x in s:
            if not 0.0 < x < 1.0:
                raise BoundError(f"each sigma must lie in (0, 1), got {x}")
        if any(b > a for a, b in zip(s, s[1:])):
            raise BoundError("sigma schedule must be non-increasing")

    @classmethod
    def uniform(cls, sigma: float, length: int) -> "SigmaSchedule":
        return cls((sigma,) * length)

    def __len__(self) -> int:
        return len(self.sigmas)

    def __getitem__(self, i):
        return self.sigmas[i]

    def is_uniform(self) -> bool:
        return len(set(self.sigmas)) <= 1

    def validate_for(self, params: ModelParams) -> None:
        for x in self.sigmas:
            if not x * params.alpha > params.dim:
                raise BoundError(f"sigma={x} violates sigma*alpha > d")


@dataclass(frozen=True)
class IntegralBound:
    """Upper bound on I[lambda] as ``A(tau) + B(tau) * R'**k``."""

    rprime_independent: TauPolynomial
    rprime_term: tuple[TauPolynomial, float] | None = None

    def __post_init__(self):
        if self.rprime_term is not None and not self.rprime_term[1] > 0:
            raise BoundError("R'-dependent exponent must be positive")

    def __call__(self, tau: float, rprime: float, x_size: float = 1.0) -> float:
        value = self.rprime_independent(tau, x_size)
        if self.rprime_term is not None:
            poly, k = self.rprime_term
            value += poly(tau, x_size) * rprime**k
        return value


@dataclass(frozen=True)
class _Piece:
    target: int
    prefactor: TauPolynomial
    rprime_exponent: float | None


def _ratio(sigma: float, params: ModelParams) -> float:
    return sigma * params.dim / (sigma * params.alpha - params.dim)


def n_star(sigma: float, params: ModelParams | float, dim: int | None = None) -> int:
    """ceil(sigma d / (sigma alpha - d)); accepts ModelParams or (alpha, dim)."""
    if isinstance(params, ModelParams):
        alpha, d = params.alpha, params.dim
    else:
        alpha, d = float(params), int(dim)
    if not sigma * alpha > d:
        raise BoundError(f"no finite n*: sigma*alpha={sigma * alpha} <= d={d}")
    return max(1, math.ceil(sigma * d / (sigma * alpha - d)))


def avoid_log_case(sigma: float, params: ModelParams, nudge: float = SIGMA_NUDGE) -> float:
    """Move sigma off the values where d + mu_1^(n) hits zero."""
    r = _ratio(sigma, params)
    if abs(r - round(r)) < 1e-6:
        return sigma + nudge
    return sigma


def initial_bound(params: ModelParams, cutoff: float = math.inf) -> BoundDescriptor:
    return BoundDescriptor(params, None, TauPolynomial.monomial(2.0, 0.0, 1), (), cutoff, 0)


def _budget(params: ModelParams, sigma: float) -> TauPolynomial:
    # c |X| (1 + tau^(d/(1-sigma))): trivial region plus the exponential tail
    c = params.constants.c
    return TauPolynomial([(c, 0.0, 1), (c, params.dim / (1.0 - sigma), 1)])


def _pieces(bound: BoundDescriptor) -> list[_Piece]:
    p = bound.params
    d = p.dim
    c = p.constants.c
    if bound.is_seed:
        # c|X|(1 + (R' tau)^d)
        return [
            _Piece(0, TauPolynomial.monomial(c, float(d), 1), float(d)),
            _Piece(1, TauPolynomial.monomial(c, 0.0, 1), None),
        ]
    sigma = bound.sigma_exp
    pieces = [_Piece(len(bound.poly_terms) - 1 if bound.poly_terms else 1, _budget(p, sigma), None)]
    for i, term in enumerate(bound.poly_terms):
        s = d + term.r_exponent
        if abs(s) < LOG_CASE_TOL:
            raise LogarithmicCaseError(
                f"d + mu = {s:.3e} for term {i}; nudge sigma to avoid the logarithmic case"
            )
        if s > 0:
            # int^{R'^(1/sigma)} rho^(d-1+mu) <= R'^((d+mu)/sigma) / (d+mu)
            pieces.append(_Piece(i, term.prefactor.scale(1.0 / s), s / sigma))
        else:
            # int_{tau^(1/(1-sigma))}^inf rho^(d-1+mu) = tau^((d+mu)/(1-sigma)) / |d+mu|
            pieces.append(_Piece(i, term.prefactor.shift(s / (1.0 - sigma), 0, 1.0 / -s), None))
    return pieces


def information_integral(bound: BoundDescriptor) -> IntegralBound:
    """Symbolic upper bound on I[lambda^(R')] for a seed or iterated bound."""
    indep = TauPolynomial()
    dep: dict[float, TauPolynomial] = {}
    for piece in _pieces(bound):
        if piece.rprime_exponent is None:
            indep = indep + piece.prefactor
        else:
            k = round(piece.rprime_exponent, 12)
            dep[k] = dep.get(k, TauPolynomial()) + piece.prefactor
    if len(dep) > 1:
        raise BoundError("more than one R'-dependent exponent in the spread integral")
    term = next(((poly, k) for k, poly in dep.items()), None)
    return IntegralBound(indep, term)


def iterate_step(bound: BoundDescriptor, sigma_next: float) -> BoundDescriptor:
    """One application of the recursion with R' = r**sigma_next."""
    p = bound.params
    if not 0.0 < sigma_next < 1.0:
        raise BoundError(f"sigma must lie in (0, 1), got {sigma_next}")
    if not sigma_next * p.alpha > p.dim:
        raise BoundError(f"sigma={sigma_next} violates sigma*alpha > d")
    if bound.sigma_exp is not None and sigma_next > bound.sigma_exp:
        raise BoundError("sigma must not increase across iterations")

    # C |X| t f(R') I with f(R') = J R'^-alpha and t J = tau J/v
    hop = TauPolynomial.monomial(p.constants.c1 * p.j_over_v, 1.0, 1)
    base_mu = -sigma_next * p.alpha
    prefactors: dict[int, TauPolynomial] = {}
    exponents: dict[int, float] = {}
    for piece in _pieces(bound):
        mu = base_mu if piece.rprime_exponent is None else base_mu + sigma_next * piece.rprime_exponent
        if piece.target in exponents and not math.isclose(exponents[piece.target], mu, abs_tol=1e-12):
            raise BoundError("pieces routed to one term disagree on the spatial exponent")
        exponents[piece.target] = mu
        prefactors[piece.target] = prefactors.get(piece.target, TauPolynomial()) + piece.prefactor * hop
    terms = tuple(
        PowerLawTerm(exponents[i], prefactors[i], sigma_next) for i in sorted(prefactors)
    )
    return BoundDescriptor(
        params=p,
        sigma_exp=sigma_next,
        exp_prefactor=TauPolynomial.monomial(2.0, 0.0, 1),
        poly_terms=terms,
        cutoff=bound.cutoff,
        iteration_count=bound.iteration_count + 1,
    )


def iterate_all(params: ModelParams, schedule: SigmaSchedule | Sequence[float],
                cutoff: float = math.inf) -> list[BoundDescriptor]:
    """Every stage lambda_0, ..., lambda_m of the fold (cutoffs left as given)."""
    if not isinstance(schedule, SigmaSchedule):
        schedule = SigmaSchedule(tuple(schedule))
    stages = [initial_bound(params, cutoff)]
    for sigma in schedule.sigmas:
        stages.append(iterate_step(stages[-1], sigma))
    return stages


def derive_bound(params: ModelParams, schedule: SigmaSchedule | Sequence[float]) -> BoundDescriptor:
    """Fold the recursion over the schedule, then send the cutoff R to infinity."""
    return iterate_all(params, schedule)[-1].with_cutoff(math.inf)


def mu1_closed(schedule: SigmaSchedule | Sequence[float], n: int, alpha: float, dim: int) -> float:
    """(1 + sum_{j<n} 1/sigma_j) sigma_n d - n sigma_n alpha."""
    s = schedule.sigmas if isinstance(schedule, SigmaSchedule) else tuple(schedule)
    if not 1 <= n <= len(s):
        raise BoundError(f"n={n} outside the schedule (length {len(s)})")
    sn = s[n - 1]
    return (1.0 + sum(1.0 / x for x in s[: n - 1])) * sn * dim - n * sn * alpha


# ---------------------------------------------------------------- quadrature


def numeric_information_integral(bound: BoundDescriptor, t: float) -> float:
    """I[lambda] = lambda(0) + int_{1/2}^inf rho^(d-1) lambda(rho, t) drho by quadrature."""
    d = bound.params.dim
    if math.isinf(bound.cutoff) and (
        bound.is_seed or any(d + term.r_exponent >= 0 for term in bound.poly_terms)
    ):
        return math.inf
    f = lambda rho: rho ** (d - 1) * eval_bound(bound, rho, t)
    breaks = {0.5, 1.0}
    if math.isfinite(bound.cutoff):
        for term in bound.poly_terms:
            if term.cutoff_power:
                breaks.add(bound.cutoff ** (1.0 / term.cutoff_power))
    hi = max(breaks) * 2.0 + 10.0
    while bound.raw(hi, t) > 2.0:
        hi *= 2.0
    if bound.raw(1.0, t) > 2.0:
        breaks.add(optimize.brentq(lambda r: bound.raw(r, t) - 2.0, 1.0, hi, xtol=1e-12))
    pts = sorted(b for b in breaks if b >= 0.5) + [hi]
    total = eval_bound(bound, 0.0, t)
    for a, b in zip(pts, pts[1:]):
        if b - a > 1e-9 * b:
            total += _quad(f, a, b)
        elif b > a:
            total += f(0.5 * (a + b)) * (b - a)  # sliver between coincident breakpoints
    return total + _exact_tail(bound, hi, t)


def _exact_tail(bound: BoundDescriptor, hi: float, t: float) -> float:
    """int_hi^inf rho^(d-1) raw(rho) drho once every gate is shut and raw <= 2.

    The exponential integrates to an upper incomplete gamma function; only
    ungated power laws can remain besides it.
    """
    p = bound.params
    d, tau = p.dim, p.velocity * t
    total = 0.0
    if bound.exp_prefactor:
        pref = bound.exp_prefactor(tau, p.x_size)
        if bound.is_seed:
            # rho/R = x  ->  R^d int x^(d-1) e^-x
            s, x0, log_scale = float(d), hi / bound.cutoff, d * math.log(bound.cutoff)
        else:
            nu = 1.0 - bound.sigma_exp
            s, x0, log_scale = d / nu, hi**nu, -math.log(nu)
        q = special.gammaincc(s, x0)
        if q > 0.0:
            total += pref * math.exp(tau + log_scale + special.gammaln(s) + math.log(q))
    for term in bound.poly_terms:
        if term.cutoff_power is not None and hi**term.cutoff_power > bound.cutoff:
            continue
        k = d + term.r_exponent
        if k >= 0:
            return math.inf
        total += term.prefactor(tau, p.x_size) * hi**k / -k
    return total


def _quad(f: Callable[[float], float], a: float, b: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-10, limit=500)
        except integrate.IntegrationWarning as exc:
            raise BoundError(f"quadrature failed on [{a}, {b}]: {exc}") from exc
    return value


def incomplete_gamma_ratio(mu: float, nu: float, rho: float) -> float:
    """int_rho^inf e^{-x^nu} x^mu dx  /  (e^{-rho^nu} (1 + rho^(mu - nu + 1))).

    Computed after u = x^nu, w = u - rho^nu so the e^{-rho^nu} factor cancels
    analytically; the w-integrand is split at its maximum.
    """
    if not (rho > 0 and nu > 0):
        raise BoundError("need rho > 0 and nu > 0")
    a = rho**nu
    s = (mu + 1.0) / nu
    g = lambda w: math.exp(-w) * (a + w) ** (s - 1.0)
    peak = max(0.0, s - 1.0 - a)
    value = (_quad(g, 0.0, peak) if peak > 0 else 0.0) + _quad(g, peak, np.inf)
    return value / nu / (1.0 + rho ** (mu - nu + 1.0))


def check_incomplete_gamma(mu: float, nu: float, rho_grid: Sequence[float]) -> float:
    """Smallest C with int_rho^inf e^{-x^nu} x^mu <= C e^{-rho^nu}(1 + rho^(mu-nu+1)) on the grid."""
    if len(rho_grid) == 0:
        raise BoundError("rho_grid must be non-empty")
    c = max(incomplete_gamma_ratio(mu, nu, float(rho)) for rho in rho_grid)
    if not math.isfinite(c):
        raise BoundError(f"non-finite constant for mu={mu}, nu={nu}")
    return c


def check_sum_vs_integral(lattice, decay: Callable[[float], float], R: float) -> float:
    """Smallest C with sum_{1 <= d(z,x) <= R} decay(d) <= C int_{1/2}^R decay(r) r^(d-1) dr for all x."""
    dist = lattice.distances()
    dim = lattice.dim
    mask = (dist >= 1.0 - 1e-12) & (dist <= R + 1e-12)
    values = np.zeros_like(dist)
    for d_val in np.unique(dist[mask]):
        values[dist == d_val] = decay(float(d_val))
    sums = np.where(mask, values, 0.0).sum(axis=1)
    best = float(sums.max()) if sums.size else 0.0
    if best == 0.0:
        return 0.0
    integral = _quad(lambda r: decay(r) * r ** (dim - 1), 0.5, R)
    if integral <= 0.0:
        raise BoundError("integral vanishes while the lattice sum is positive")
    return best / integral


def check_sum_vs_integral_rows(lattice, decays: dict[str, Callable[[float], float]], R: float) -> list[dict]:
    return [{"lattice_sites": lattice.n_sites, "dim": lattice.dim, "decay": name, "R": R,
             "constant": check_sum_vs_integral(lattice, f, R)} for name, f in decays.items()]


def check_incomplete_gamma_rows(mus: Sequence[float], nus: Sequence[float],
                                rho_grid: Sequence[float]) -> list[dict]:
    return [{"mu": mu, "nu": nu, "rho_min": min(rho_grid), "rho_max": max(rho_grid),
             "constant": check_incomplete_gamma(mu, nu, rho_grid)} for mu in mus for nu in nus]


def gamma_exponents(bound: BoundDescriptor) -> list[float]:
    """Leading tau power of each power-law prefactor (gamma_1, gamma_2)."""
    return [t.prefactor.leading_power for t in bound.poly_terms]


def with_params(bound: BoundDescriptor, params: ModelParams) -> BoundDescriptor:
    return replace(bound, params=params)
