"""Power-law light-cone exponents (LC1 and LC2).

Closed forms for the iterated bound ("this_work") and for the two earlier
bounds, plus a numerical optimizer that rebuilds the derived bound for each
(sigma, n) and reads the critical exponent off its terms along r = t**gamma:

* the stretched exponential needs gamma >= 1/(1 - sigma);
* a power-law term tau**g r**mu needs gamma > g/(-mu) for LC1 and
  gamma > (1 + g)/(-mu - d) for LC2, the latter only when mu + d < 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import optimize

from .bound_core import BoundDescriptor, BoundError, ModelParams
from .iteration import SigmaSchedule, iterate_all, n_star


class Method(str, Enum):
    THIS_WORK = "this_work"
    FOSS_FEIG = "foss_feig"
    MATSUTA = "matsuta"


class Which(str, Enum):
    LC1 = "LC1"
    LC2 = "LC2"


class Branch(str, Enum):
    EXP_POLY = "exp∩poly"
    POLY_MIN = "poly-minimum"
    CLOSED_FORM = "closed-form"


@dataclass(frozen=True)
class LightconeQuery:
    alpha: float
    dim: int
    method: Method = Method.THIS_WORK
    which: Which = Which.LC2

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "which", Which(self.which))
        if not self.alpha > self.dim:
            raise BoundError(f"light-cones need alpha > d (alpha={self.alpha}, d={self.dim})")


@dataclass(frozen=True)
class ExponentResult:
    value: float | None
    optimizer_sigma: float | None = None
    optimizer_n: int | None = None
    branch: Branch | None = None

    @property
    def exists(self) -> bool:
        return self.value is not None


# ------------------------------------------------------------ closed forms


def alpha_m(dim: int) -> float:
    """Crossover above which the LC2 exponent equals the single-iteration one."""
    return 1.5 * dim * (1.0 + math.sqrt(1.0 + 8.0 / (9.0 * dim)))


def beta_tilde(alpha: float, dim: int) -> float:
    d = dim
    root = math.sqrt(1.0 + 2.0 / d - 2.0 / alpha)
    return 2.0 / (alpha - d) ** 2 * (alpha - d + alpha * d * (1.0 + root))


def sigma_optima(alpha: float, dim: int) -> tuple[float, float, float]:
    """(sigma_1;exp, sigma_2;exp, sigma_2;min)."""
    if not alpha > dim:
        raise BoundError("sigma optima need alpha > d")
    d = dim
    return (
        (d + 1.0) / (alpha + 1.0),
        (2.0 * d + 2.0) / (alpha + 2.0),
        1.0 + d / 2.0 - d / 2.0 * math.sqrt(1.0 + 2.0 / d - 2.0 / alpha),
    )


def lc1_exponent(q: LightconeQuery) -> ExponentResult:
    value = (q.alpha + 1.0) / (q.alpha - q.dim)
    if q.method is Method.THIS_WORK:
        return ExponentResult(value, sigma_optima(q.alpha, q.dim)[0], None, Branch.EXP_POLY)
    return ExponentResult(value, branch=Branch.CLOSED_FORM)


def lc2_exponent(q: LightconeQuery) -> ExponentResult:
    a, d = q.alpha, q.dim
    if q.method is Method.FOSS_FEIG:
        return ExponentResult((a + d) / a * (a + 1.0) / (a - d) + 1.0 / a, branch=Branch.CLOSED_FORM)
    if q.method is Method.MATSUTA:
        if a <= 2 * d:
            return ExponentResult(None, branch=Branch.CLOSED_FORM)
        return ExponentResult((a + 2.0) / (a - 2.0 * d), sigma_optima(a, d)[1], 1, Branch.CLOSED_FORM)
    _, s_exp, s_min = sigma_optima(a, d)
    if a < alpha_m(d):
        return ExponentResult(beta_tilde(a, d), s_min, None, Branch.POLY_MIN)
    return ExponentResult((a + 2.0) / (a - 2.0 * d), s_exp, None, Branch.EXP_POLY)


def exponent(q: LightconeQuery) -> ExponentResult:
    return lc1_exponent(q) if q.which is Which.LC1 else lc2_exponent(q)


# --------------------------------------------------------------- numerics


def term_exponents(bound: BoundDescriptor, which: Which | str) -> list[float]:
    """Critical gamma of each term: [exponential, poly_0, poly_1, ...]."""
    which = Which(which)
    d = bound.params.dim
    out = [1.0 / (1.0 - bound.sigma_exp)]
    for term in bound.poly_terms:
        g, mu = term.prefactor.leading_power, term.r_exponent
        if which is Which.LC1:
            out.append(max(0.0, g / -mu) if mu < 0 else math.inf)
        else:
            out.append(max(0.0, (1.0 + g) / (-mu - d)) if mu + d < 0 else math.inf)
    return out


def critical_exponent(bound: BoundDescriptor, which: Which | str) -> float:
    return max(term_exponents(bound, which))


def _best_over_n(params: ModelParams, sigma: float, which: Which, n_max: int) -> tuple[float, int | None]:
    try:
        n_cap = min(n_max, n_star(sigma, params) + 3)
        stages = iterate_all(params, SigmaSchedule.uniform(sigma, n_cap))
    except BoundError:
        return math.inf, None
    best, best_n = math.inf, None
    for n, bound in enumerate(stages[1:], start=1):
        v = critical_exponent(bound, which)
        if v < best:
            best, best_n = v, n
    return best, best_n


def lc_exponent_numeric(
    params: ModelParams,
    which: Which | str,
    n_max: int = 64,
    sigma_grid: int = 2000,
    xtol: float = 1e-8,
) -> ExponentResult:
    """inf over (sigma, n) of the largest per-term exponent of the derived bound.

    sigma is scanned on a uniform grid over ((d+1)/(alpha+1), 1) and the best
    grid point is refined by golden-section search inside its neighbours.
    """
    which = Which(which)
    a, d = params.alpha, params.dim
    lo, hi = (d + 1.0) / (a + 1.0) + 1e-6, 1.0 - 1e-6
    grid = np.linspace(lo, hi, sigma_grid)
    values = [_best_over_n(params, float(s), which, n_max)[0] for s in grid]
    k = int(np.argmin(values))
    if not math.isfinite(values[k]):
        return ExponentResult(None)
    best_sigma, best_value = float(grid[k]), values[k]
    if 0 < k < len(grid) - 1:
        f = lambda s: _best_over_n(params, float(s), which, n_max)[0]
        try:
            res = optimize.minimize_scalar(
                f, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden", tol=xtol
            )
            if res.fun < best_value and grid[k - 1] <= res.x <= grid[k + 1]:
                best_sigma, best_value = float(res.x), float(res.fun)
        except ValueError:
            pass  # flat or kinked neighbourhood; grid optimum stands
    _, best_n = _best_over_n(params, best_sigma, which, n_max)
    exp_part = 1.0 / (1.0 - best_sigma)
    branch = Branch.EXP_POLY if abs(exp_part - best_value) <= 1e-4 * best_value else Branch.POLY_MIN
    return ExponentResult(best_value, best_sigma, best_n, branch)


# ------------------------------------------------------------------ curves


@dataclass(frozen=True)
class CurveRow:
    alpha: float
    this_work: float | None
    foss_feig: float | None
    matsuta: float | None


def _row(args) -> CurveRow:
    alpha, dim, which, numeric = args
    vals = {}
    for m in Method:
        q = LightconeQuery(alpha, dim, m, which)
        if numeric and m is Method.THIS_WORK:
            vals[m.value] = lc_exponent_numeric(ModelParams(alpha, dim), which).value
        else:
            vals[m.value] = exponent(q).value
    return CurveRow(alpha, **vals)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("LRBOUND_THREADS", "1")))
    except ValueError:
        return 1


def curve(dim: int, alpha_min: float, alpha_max: float, steps: int, which: Which | str,
          numeric: bool = False) -> list[CurveRow]:
    """Exponents of all three bounds on a uniform alpha grid (absent = None)."""
    which = Which(which)
    if not alpha_min > dim:
        raise BoundError(f"alpha_min must exceed dim (got {alpha_min} <= {dim})")
    if steps < 2 or alpha_max <= alpha_min:
        raise BoundError("need steps >= 2 and alpha_max > alpha_min")
    jobs = [(float(a), dim, which, numeric) for a in np.linspace(alpha_min, alpha_max, steps)]
    workers = _workers()
    if numeric and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_row, jobs))
    return [_row(j) for j in jobs]


def _fmt(x: float | None) -> str:
    return "" if x is None else format(x, ".17g")


def curve_to_csv(rows: Sequence[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "this_work", "foss_feig", "matsuta"])
    for r in rows:
        w.writerow([_fmt(r.alpha), _fmt(r.this_work), _fmt(r.foss_feig), _fmt(r.matsuta)])
    return buf.getvalue()


def curve_to_json(rows: Sequence[CurveRow], **meta) -> str:
    return json.dumps({**meta, "rows": [asdict(r) for r in rows]}, indent=2, allow_nan=False)


def curve_from_csv(text: str) -> list[CurveRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        conv = lambda s: None if s == "" else float(s)
        rows.append(CurveRow(float(rec["alpha"]), conv(rec["this_work"]), conv(rec["foss_feig"]),
                             conv(rec["matsuta"])))
    return rows
