"""Command-line front end: ``lrbound {derive,lightcone,verify,perturb,lemmas}``.

Exit codes: 0 success, 2 invalid parameters, 3 an oracle invariant failed.
Outputs carry no timestamps, so identical arguments give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bound_core import BoundDescriptor, BoundError, ModelParams, leading_behavior, leading_x_power
from .iteration import (
    SigmaSchedule,
    avoid_log_case,
    check_incomplete_gamma_rows,
    check_sum_vs_integral_rows,
    derive_bound,
    n_star,
)
from .lightcone import Method, Which, curve, curve_to_csv, curve_to_json
from .oracle import (
    MAX_SITES,
    HamiltonianSpec,
    Lattice,
    ObservableSpec,
    OracleError,
    Term,
    bound_volume_integral,
    build_power_law_ising,
    commutator_norm,
    delta_j,
    dominance_report,
    duhamel_bound,
    fit_decay,
    front_scan,
    heisenberg_evolve,
    interaction_budget,
    operator_norm,
    perturbation_diff,
    site_sum_bound,
    term_difference_norms,
)

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3
INVARIANT_TOL = 1e-9


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    fmt: str = "json"
    seed: int | None = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        skip = {"command", "func", "out", "format", "seed"}
        params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
        return cls(args.command, params, args.out, getattr(args, "format", "json"), getattr(args, "seed", None))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def _rows_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0]) if rows else []
    w.writerow(keys)
    for row in rows:
        w.writerow(["" if row[k] is None else format(row[k], ".17g") if isinstance(row[k], float) else row[k]
                    for k in keys])
    return buf.getvalue()


# ------------------------------------------------------------------ derive


def _model_params(args) -> ModelParams:
    return ModelParams(args.alpha, args.dim, args.j_const, args.c0, args.x_size)


def _checked_sigma(sigma: float, params: ModelParams, allow_loose: bool) -> float:
    a, d = params.alpha, params.dim
    if not 0.0 < sigma < 1.0:
        raise ValidationError(f"sigma must lie in (0, 1), got {sigma}")
    lo = (d + 1.0) / (a + 1.0)
    if not allow_loose and sigma <= lo:
        raise ValidationError(f"sigma={sigma} is not above (d+1)/(alpha+1)={lo:.6g}; "
                              "pass --allow-loose-sigma to override")
    if sigma * a <= d:
        raise ValidationError(f"sigma*alpha must exceed d (sigma={sigma}, alpha={a}, d={d})")
    return avoid_log_case(sigma, params)


def derive_summary(bound: BoundDescriptor, sigma_requested: float, sigma_used: float) -> dict:
    summary = {"sigma_requested": sigma_requested, "sigma_used": sigma_used,
               "iterations": bound.iteration_count, "n_star": n_star(sigma_used, bound.params)}
    if bound.poly_terms:
        spatial, temporal = leading_behavior(bound)
        summary.update(spatial_exponent=spatial, temporal_exponent=temporal,
                       x_power=leading_x_power(bound))
    return summary


def cmd_derive(args) -> int:
    params = _model_params(args)
    sigma = _checked_sigma(args.sigma, params, args.allow_loose_sigma)
    iterations = n_star(sigma, params) + 2 if args.iterations is None else args.iterations
    if iterations < 0:
        raise ValidationError("iterations must be >= 0")
    bound = derive_bound(params, SigmaSchedule.uniform(sigma, iterations) if iterations else SigmaSchedule(()))
    data = bound.to_dict()
    data["summary"] = derive_summary(bound, args.sigma, sigma)
    _emit(_dumps(data), args.out)
    return EXIT_OK


# --------------------------------------------------------------- lightcone


def cmd_lightcone(args) -> int:
    rows = curve(args.dim, args.alpha_min, args.alpha_max, args.steps, args.which, numeric=args.numeric)
    if args.method != "all":
        keep = args.method
        if args.format == "csv":
            body = [{"alpha": r.alpha, keep: getattr(r, keep)} for r in rows]
            _emit(_rows_csv(body), args.out)
        else:
            body = [{"alpha": r.alpha, keep: getattr(r, keep)} for r in rows]
            _emit(_dumps({"dim": args.dim, "which": args.which, "rows": body}), args.out)
        return EXIT_OK
    if args.format == "csv":
        _emit(curve_to_csv(rows), args.out)
    else:
        _emit(curve_to_json(rows, dim=args.dim, which=args.which) + "\n", args.out)
    return EXIT_OK


# ------------------------------------------------------------------ verify


def _check_sites(n: int) -> None:
    if n > MAX_SITES:
        raise ValidationError(f"sites={n} exceeds the cap of {MAX_SITES}")
    if n < 2:
        raise ValidationError("need at least 2 sites")


def _chain_model(sites: int, alpha: float, field_strength: float) -> HamiltonianSpec:
    _check_sites(sites)
    short = tuple(Term((i,), "X", field_strength) for i in range(sites)) if field_strength else ()
    return build_power_law_ising(sites, alpha, 1, short_range=short)


def _fitted_params(h: HamiltonianSpec, alpha: float) -> ModelParams:
    return ModelParams(alpha, h.lattice.dim, fit_decay(h, alpha), interaction_budget(h))


def _oracle_invariants(h: HamiltonianSpec, a: ObservableSpec, times, front) -> dict:
    norm_a = operator_norm(a.matrix(h.n_sites))
    unitarity = max(abs(operator_norm(heisenberg_evolve(h, a, t)) - norm_a) for t in times)
    zero_rows = [v for r, t, v in front.rows if t == 0.0]
    zero_at_t0 = max(zero_rows, default=0.0)
    return {
        "unitarity_max_dev": unitarity,
        "unitarity_pass": bool(unitarity <= INVARIANT_TOL),
        "zero_at_t0_max": zero_at_t0,
        "zero_at_t0_pass": bool(zero_at_t0 <= INVARIANT_TOL),
        "norm_bound_pass": bool(max(front.values(), default=0.0) <= 2.0 + INVARIANT_TOL),
    }


def cmd_verify(args) -> int:
    times = np.linspace(0.0, args.tmax, args.steps + 1)
    report: dict = {"config": asdict(RunConfig.from_args(args))}
    if args.model == "two-site":
        h = build_power_law_ising(2, args.alpha, 1, short_range=())
        a, b = ObservableSpec.single(0, "X"), ObservableSpec.single(1, "X")
        measured = np.array([commutator_norm(h, a, b, t) for t in times])
        analytic = 2.0 * np.abs(np.sin(2.0 * h.terms[0].coeff * times))
        report["analytic_max_dev"] = float(np.abs(measured - analytic).max())
        front = front_scan(h, a, times=times)
        invariants = _oracle_invariants(h, a, times, front)
        invariants["analytic_pass"] = bool(report["analytic_max_dev"] <= 1e-10)
    else:
        h = _chain_model(args.sites, args.alpha, args.field)
        a = ObservableSpec.single(0, args.observable)
        front = front_scan(h, a, times=times, alpha=args.alpha)
        invariants = _oracle_invariants(h, a, times, front)

    if args.bound_file:
        bound = BoundDescriptor.from_json(Path(args.bound_file).read_text())
    else:
        params = _fitted_params(h, args.alpha) if args.model != "two-site" else ModelParams(args.alpha, 1)
        sigma = avoid_log_case(args.sigma, params)
        bound = derive_bound(params, SigmaSchedule.uniform(sigma, n_star(sigma, params) + 2))
    dom = dominance_report(front, bound)
    vals = front.values()
    report.update(
        model=h.name,
        sites=h.n_sites,
        kappa=dom.kappa,
        kappa_location=None if dom.location is None else list(dom.location),
        front_min=float(vals.min()) if vals.size else None,
        front_max=float(vals.max()) if vals.size else None,
        invariants=invariants,
        bound_params=bound.params.to_dict(),
    )
    if args.front_out:
        Path(args.front_out).write_text(front.to_csv())
        Path(args.front_out).with_suffix(".json").write_text(front.metadata_json() + "\n")
    _emit(_dumps(report), args.out)
    ok = all(v for k, v in invariants.items() if k.endswith("_pass"))
    if not ok:
        print("error: oracle invariant failed", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ----------------------------------------------------------------- perturb


def perturbation_terms(lattice: Lattice, o: ObservableSpec, r_min: float, op: str, strength: float,
                       sites: Sequence[int] | None = None) -> tuple[Term, ...]:
    """Single-site ``strength * op`` terms at distance >= r_min from O."""
    if sites is None:
        sites = [s for s in range(lattice.n_sites) if lattice.distance(o.support, [s]) >= r_min]
    for s in sites:
        if not 0 <= s < lattice.n_sites:
            raise ValidationError(f"perturbation site {s} outside the lattice")
        if lattice.distance(o.support, [s]) < r_min:
            raise ValidationError(f"perturbation site {s} lies inside the exclusion ball r < {r_min}")
    if strength == 0.0:
        return ()
    return tuple(Term((s,), op, strength) for s in sites)


def cmd_perturb(args) -> int:
    h1 = _chain_model(args.sites, args.alpha, args.field)
    o = ObservableSpec.single(args.observable_site, args.observable)
    if not 0 <= args.observable_site < h1.n_sites:
        raise ValidationError("observable site outside the lattice")
    delta = perturbation_terms(h1.lattice, o, args.r_min, args.delta_op, args.delta_strength * args.delta_scale,
                               args.delta_sites)
    h2 = h1.with_terms(delta)
    params = _fitted_params(h1, args.alpha)
    sigma = avoid_log_case(args.sigma, params)
    bound = derive_bound(params, SigmaSchedule.uniform(sigma, n_star(sigma, params) + 2))
    dj = delta_j(h1, h2)
    rows = []
    for t in np.linspace(0.0, args.tmax, args.steps + 1):
        t = float(t)
        # the time integral over [0, t] vanishes at t = 0
        shape = dj * t * bound_volume_integral(bound, args.r_min, t) if dj > 0 and t > 0 else 0.0
        rows.append({
            "t": t,
            "lhs": perturbation_diff(h1, h2, o, t),
            "duhamel_rhs": duhamel_bound(h1, h2, t),
            "site_sum_rhs": site_sum_bound(h1, h2, o, bound, t),
            "bound_integral_shape": _finite(shape),
        })
    fitted = max((r["lhs"] / r["bound_integral_shape"] for r in rows
                  if r["bound_integral_shape"]), default=0.0)
    for r in rows:
        s = r.pop("bound_integral_shape")
        r["bound_integral_rhs"] = None if s is None else fitted * s
    duhamel_ok = all(r["lhs"] <= min(2.0, r["duhamel_rhs"]) + INVARIANT_TOL for r in rows)
    if args.format == "csv":
        _emit(_rows_csv(rows), args.out)
    else:
        _emit(_dumps({
            "config": asdict(RunConfig.from_args(args)),
            "delta_j": dj,
            "delta_terms": len(term_difference_norms(h1, h2)),
            "fitted_constant": fitted,
            "duhamel_pass": duhamel_ok,
            "rows": rows,
        }), args.out)
    if not duhamel_ok:
        print("error: perturbation difference exceeds the Duhamel bound", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ------------------------------------------------------------------ lemmas


def cmd_lemmas(args) -> int:
    rho_grid = np.linspace(args.rho_min, args.rho_max, args.rho_points)
    gamma_rows = check_incomplete_gamma_rows(args.mu, args.nu, rho_grid)
    decays = {f"r^-{k:g}": (lambda r, k=k: r ** -k) for k in args.decay}
    lattice_rows = []
    for lat, R in ((Lattice.chain(args.chain_length), args.chain_length / 2.0),
                   (Lattice.square(args.square_side), args.square_side / 2.0)):
        lattice_rows += check_sum_vs_integral_rows(lat, decays, R)
    if args.format == "csv":
        _emit(_rows_csv(gamma_rows) + "\n" + _rows_csv(lattice_rows), args.out)
    else:
        _emit(_dumps({"incomplete_gamma": gamma_rows, "sum_vs_integral": lattice_rows}), args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrbound", description="Lieb-Robinson bounds for power-law interactions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="derive the iterated bound and write it as JSON")
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--dim", type=int, default=1)
    d.add_argument("--sigma", type=float, required=True)
    d.add_argument("--iterations", type=int, default=None, help="default n*+2")
    d.add_argument("--x-size", type=int, default=1)
    d.add_argument("--j-const", type=float, default=1.0)
    d.add_argument("--c0", type=float, default=1.0)
    d.add_argument("--allow-loose-sigma", action="store_true")
    d.add_argument("--out")
    d.set_defaults(func=cmd_derive, format="json")

    lc = sub.add_parser("lightcone", help="LC1/LC2 exponent curves over alpha")
    lc.add_argument("--dim", type=int, default=1)
    lc.add_argument("--alpha-min", type=float, required=True)
    lc.add_argument("--alpha-max", type=float, required=True)
    lc.add_argument("--steps", type=int, default=50)
    lc.add_argument("--which", choices=[w.value for w in Which], default="LC2")
    lc.add_argument("--method", choices=[m.value for m in Method] + ["all"], default="all")
    lc.add_argument("--numeric", action="store_true", help="optimize this_work numerically")
    lc.add_argument("--format", choices=["csv", "json"], default="csv")
    lc.add_argument("--out")
    lc.set_defaults(func=cmd_lightcone)

    v = sub.add_parser("verify", help="exact-dynamics front vs a derived bound")
    v.add_argument("--model", choices=["ising", "two-site"], default="ising")
    v.add_argument("--sites", type=int, default=8)
    v.add_argument("--alpha", type=float, default=2.0)
    v.add_argument("--field", type=float, default=1.0, help="transverse field strength")
    v.add_argument("--observable", choices=list("XYZ"), default="Z")
    v.add_argument("--sigma", type=float, default=0.9)
    v.add_argument("--tmax", type=float, default=1.5)
    v.add_argument("--steps", type=int, default=15)
    v.add_argument("--bound-file")
    v.add_argument("--front-out", help="also write the front CSV (plus .json metadata)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify, format="json")

    pt = sub.add_parser("perturb", help="effect of a distant Hamiltonian change on a local observable")
    pt.add_argument("--sites", type=int, default=8)
    pt.add_argument("--alpha", type=float, default=2.0)
    pt.add_argument("--field", type=float, default=1.0)
    pt.add_argument("--observable", choices=list("XYZ"), default="Z")
    pt.add_argument("--observable-site", type=int, default=0)
    pt.add_argument("--r-min", type=float, default=3.0)
    pt.add_argument("--delta-op", choices=list("XYZ"), default="Z")
    pt.add_argument("--delta-strength", type=float, default=0.1)
    pt.add_argument("--delta-scale", type=float, default=1.0)
    pt.add_argument("--delta-sites", type=int, nargs="*", default=None)
    pt.add_argument("--sigma", type=float, default=0.9)
    pt.add_argument("--tmax", type=float, default=2.0)
    pt.add_argument("--steps", type=int, default=10)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--format", choices=["csv", "json"], default="json")
    pt.add_argument("--out")
    pt.set_defaults(func=cmd_perturb)

    lm = sub.add_parser("lemmas", help="numerical checks of the two integral lemmas")
    lm.add_argument("--mu", type=float, nargs="+", default=[-1.0, 0.0, 1.0, 2.0])
    lm.add_argument("--nu", type=float, nargs="+", default=[0.1, 0.5, 1.0])
    lm.add_argument("--rho-min", type=float, default=0.1)
    lm.add_argument("--rho-max", type=float, default=10.0)
    lm.add_argument("--rho-points", type=int, default=50)
    lm.add_argument("--decay", type=float, nargs="+", default=[3.0, 4.0])
    lm.add_argument("--chain-length", type=int, default=101)
    lm.add_argument("--square-side", type=int, default=21)
    lm.add_argument("--format", choices=["csv", "json"], default="json")
    lm.add_argument("--out")
    lm.set_defaults(func=cmd_lemmas)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, BoundError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
