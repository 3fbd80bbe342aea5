"""Exact small-lattice dynamics for checking bounds against real fronts.

Qubit lattices only.  Hamiltonians are sums of real-coefficient Pauli
strings; terms sharing a support are grouped into one local block H_Z so
that norms like ||H_Z|| match the usual definitions.  Site 0 is the
leftmost tensor factor.
"""

from __future__ import annotations

import csv
import functools
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.sparse.linalg import LinearOperator, eigsh

from .bound_core import BoundDescriptor, eval_bound

MAX_SITES = 14
_DENSE_NORM_DIM = 2**10
PAULIS = "IXYZ"


class OracleError(ValueError):
    pass


# ------------------------------------------------------------------ lattice


@dataclass(frozen=True)
class Lattice:
    """Sites embedded in R^d with Euclidean metric and spacing >= 1."""

    positions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        pos = tuple(tuple(float(x) for x in p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        if not pos:
            raise OracleError("lattice needs at least one site")
        if len({len(p) for p in pos}) != 1:
            raise OracleError("all sites must share one dimension")
        dist = self.distances()
        off = dist[~np.eye(len(pos), dtype=bool)]
        if off.size and off.min() < 1.0 - 1e-12:
            raise OracleError("sites closer than the unit spacing")

    @classmethod
    def chain(cls, length: int) -> "Lattice":
        return cls(tuple((float(i),) for i in range(length)))

    @classmethod
    def square(cls, lx: int, ly: int | None = None) -> "Lattice":
        ly = lx if ly is None else ly
        return cls(tuple((float(i), float(j)) for i in range(lx) for j in range(ly)))

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return len(self.positions[0])

    def distances(self) -> np.ndarray:
        return _distance_matrix(self.positions)

    def distance(self, xs: Iterable[int], ys: Iterable[int]) -> float:
        """Set distance: minimum over pairs."""
        xs, ys = list(xs), list(ys)
        return float(self.distances()[np.ix_(xs, ys)].min())

    def diameter(self, sites: Iterable[int] | None = None) -> float:
        s = list(range(self.n_sites)) if sites is None else list(sites)
        if len(s) < 2:
            return 0.0
        return float(self.distances()[np.ix_(s, s)].max())


@functools.lru_cache(maxsize=64)
def _distance_matrix(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    out = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=-1))
    out.setflags(write=False)
    return out


# ---------------------------------------------------------- pauli algebra


def pauli_action(n_sites: int, support: Sequence[int], ops: str) -> tuple[np.ndarray, np.ndarray]:
    """(rows, vals) with P e_c = vals[c] e_{rows[c]}; rows is an involution."""
    dim = 2**n_sites
    cols = np.arange(dim)
    rows = cols.copy()
    vals = np.ones(dim, dtype=complex)
    for site, op in zip(support, ops):
        bit = (cols >> (n_sites - 1 - site)) & 1
        if op in "XY":
            rows ^= 1 << (n_sites - 1 - site)
        if op == "Y":
            vals *= np.where(bit == 0, 1j, -1j)
        elif op == "Z":
            vals *= np.where(bit == 0, 1.0, -1.0)
    return rows, vals


def pauli_string_matrix(n_sites: int, support: Sequence[int], ops: str) -> np.ndarray:
    """Dense matrix of a Pauli string acting on ``support`` of an n-qubit register."""
    rows, vals = pauli_action(n_sites, support, ops)
    out = np.zeros((rows.size, rows.size), dtype=complex)
    out[rows, np.arange(rows.size)] = vals
    return out


def _pauli_commutator_norm(a: np.ndarray, rows: np.ndarray, vals: np.ndarray) -> float:
    """||[A, P]|| for Hermitian A and a Pauli string P given by its action."""
    ap = a[:, rows] * vals[None, :]
    pa = vals[rows][:, None] * a[rows, :]
    c = ap - pa  # anti-Hermitian
    if c.shape[0] <= _DENSE_NORM_DIM:
        return float(np.abs(np.linalg.eigvalsh(1j * c)).max())
    return operator_norm(c)


def operator_norm(m: np.ndarray) -> float:
    """Largest singular value; dense below 2**10, Lanczos on M^dag M above."""
    if m.shape[0] <= _DENSE_NORM_DIM:
        if np.allclose(m, m.conj().T, atol=1e-13):
            return float(np.abs(np.linalg.eigvalsh(m)).max())
        if np.allclose(m, -m.conj().T, atol=1e-13):
            return float(np.abs(np.linalg.eigvalsh(1j * m)).max())
        return float(np.linalg.norm(m, 2))
    op = LinearOperator(m.shape, matvec=lambda v: m.conj().T @ (m @ v), dtype=m.dtype)
    top = eigsh(op, k=1, which="LA", tol=1e-10, maxiter=10_000, return_eigenvectors=False)
    return float(math.sqrt(max(top[0].real, 0.0)))


# ------------------------------------------------------------ hamiltonians


@dataclass(frozen=True)
class Term:
    """``coeff * (Pauli string ops on support)``; identity factors are dropped."""

    support: tuple[int, ...]
    ops: str
    coeff: float

    def __post_init__(self):
        if len(self.support) != len(self.ops):
            raise OracleError("support and ops must have equal length")
        if any(o not in PAULIS for o in self.ops):
            raise OracleError(f"ops must be over {PAULIS}, got {self.ops!r}")
        if len(set(self.support)) != len(self.support):
            raise OracleError("support sites must be distinct")
        pairs = sorted((s, o) for s, o in zip(self.support, self.ops) if o != "I")
        object.__setattr__(self, "support", tuple(int(s) for s, _ in pairs))
        object.__setattr__(self, "ops", "".join(o for _, o in pairs))
        object.__setattr__(self, "coeff", float(self.coeff))


@dataclass(frozen=True)
class HamiltonianSpec:
    lattice: Lattice
    terms: tuple[Term, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.lattice.n_sites > MAX_SITES:
            raise OracleError(f"Hilbert dimension 2^{self.lattice.n_sites} exceeds 2^{MAX_SITES}")
        for t in self.terms:
            if any(not 0 <= s < self.lattice.n_sites for s in t.support):
                raise OracleError(f"term support {t.support} outside the lattice")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def with_terms(self, extra: Iterable[Term]) -> "HamiltonianSpec":
        return HamiltonianSpec(self.lattice, self.terms + tuple(extra), self.name)

    def scaled(self, factor: float) -> "HamiltonianSpec":
        return HamiltonianSpec(self.lattice, tuple(Term(t.support, t.ops, t.coeff * factor)
                                                    for t in self.terms), self.name)

    def matrix(self) -> np.ndarray:
        return _hamiltonian_matrix(self)

    def blocks(self) -> dict[tuple[int, ...], list[Term]]:
        out: dict[tuple[int, ...], list[Term]] = {}
        for t in self.terms:
            if t.support:
                out.setdefault(t.support, []).append(t)
        return out

    def block_norms(self) -> dict[tuple[int, ...], float]:
        return _block_norms(self)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sites": [list(p) for p in self.lattice.positions],
            "terms": [{"support": list(t.support), "ops": t.ops, "coeff": t.coeff} for t in self.terms],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "HamiltonianSpec":
        return cls(
            Lattice(tuple(tuple(p) for p in data["sites"])),
            tuple(Term(tuple(t["support"]), t["ops"], t["coeff"]) for t in data["terms"]),
            data.get("name", "custom"),
        )


def _local_matrix(terms: Sequence[Term], support: tuple[int, ...]) -> np.ndarray:
    k = len(support)
    index = {s: i for i, s in enumerate(support)}
    m = np.zeros((2**k, 2**k), dtype=complex)
    for t in terms:
        m += t.coeff * pauli_string_matrix(k, [index[s] for s in t.support], t.ops)
    return m


@functools.lru_cache(maxsize=32)
def _block_norms(h: HamiltonianSpec) -> dict[tuple[int, ...], float]:
    return {z: operator_norm(_local_matrix(ts, z)) for z, ts in h.blocks().items()}


@functools.lru_cache(maxsize=8)
def _hamiltonian_matrix(h: HamiltonianSpec) -> np.ndarray:
    dim = 2**h.n_sites
    m = np.zeros((dim, dim), dtype=complex)
    for t in h.terms:
        if t.support:
            m += t.coeff * pauli_string_matrix(h.n_sites, t.support, t.ops)
        else:
            m += t.coeff * np.eye(dim)
    m.setflags(write=False)
    return m


def build_power_law_ising(
    L: int,
    alpha: float,
    dim: int = 1,
    coupling: float = 1.0,
    short_range: Iterable[Term] | None = None,
) -> HamiltonianSpec:
    """Pairwise ``J / r^(d + alpha) Z_i Z_j`` plus a short-range part.

    ``L`` is the linear size: a chain for dim=1, an L x L patch for dim=2.
    ``short_range=None`` adds a unit transverse field ``sum_i X_i``; pass
    ``()`` for the bare Ising couplings.
    """
    if L < 2:
        raise OracleError("need L >= 2")
    if dim == 1:
        lattice = Lattice.chain(L)
    elif dim == 2:
        lattice = Lattice.square(L)
    else:
        raise OracleError("dim must be 1 or 2")
    if lattice.n_sites > MAX_SITES:
        raise OracleError(f"{lattice.n_sites} sites exceed the cap of {MAX_SITES}")
    dist = lattice.distances()
    terms = [
        Term((i, j), "ZZ", coupling / dist[i, j] ** (dim + alpha))
        for i, j in itertools.combinations(range(lattice.n_sites), 2)
    ]
    if short_range is None:
        short_range = transverse_field(lattice.n_sites)
    return HamiltonianSpec(lattice, tuple(terms) + tuple(short_range), f"ising-a{alpha:g}-d{dim}-L{L}")


def transverse_field(n_sites: int, strength: float = 1.0) -> tuple[Term, ...]:
    return tuple(Term((i,), "X", strength) for i in range(n_sites))


def random_hamiltonian(lattice: Lattice, rng: np.random.Generator, n_terms: int = 12,
                       max_support: int = 3, name: str = "random") -> HamiltonianSpec:
    """Random Pauli terms with coefficients uniform in [-1, 1] on supports of size <= max_support."""
    terms = []
    for _ in range(n_terms):
        k = int(rng.integers(1, max_support + 1))
        support = tuple(int(s) for s in rng.choice(lattice.n_sites, size=k, replace=False))
        ops = "".join(rng.choice(list("XYZ"), size=k))
        terms.append(Term(support, ops, float(rng.uniform(-1.0, 1.0))))
    return HamiltonianSpec(lattice, tuple(terms), name)


@dataclass(frozen=True)
class ObservableSpec:
    """Unit-norm Pauli string observable."""

    support: tuple[int, ...]
    ops: str

    def __post_init__(self):
        t = Term(tuple(self.support), self.ops, 1.0)
        if not t.support:
            raise OracleError("observable must act on at least one site")
        object.__setattr__(self, "support", t.support)
        object.__setattr__(self, "ops", t.ops)

    @classmethod
    def single(cls, site: int, op: str = "Z") -> "ObservableSpec":
        return cls((site,), op)

    def matrix(self, n_sites: int) -> np.ndarray:
        return pauli_string_matrix(n_sites, self.support, self.ops)


# --------------------------------------------------------------- dynamics


class Evolver:
    """Heisenberg evolution tau_t(O) = e^{iHt} O e^{-iHt} from one eigendecomposition."""

    def __init__(self, h: HamiltonianSpec):
        m = h.matrix()
        if np.abs(m.imag).max(initial=0.0) == 0.0:
            energies, vecs = np.linalg.eigh(m.real)
        else:
            energies, vecs = np.linalg.eigh(m)
        self.n_sites = h.n_sites
        self.energies = energies
        self.vecs = vecs.astype(complex)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vecs.conj().T @ op @ self.vecs

    def evolve(self, op: np.ndarray, t: float, eigenbasis_op: np.ndarray | None = None) -> np.ndarray:
        a = self.to_eigenbasis(op) if eigenbasis_op is None else eigenbasis_op
        phase = np.exp(1j * self.energies * t)
        return self.vecs @ (phase[:, None] * a * phase.conj()[None, :]) @ self.vecs.conj().T


@functools.lru_cache(maxsize=8)
def evolver(h: HamiltonianSpec) -> Evolver:
    return Evolver(h)


def _as_matrix(op, n_sites: int) -> np.ndarray:
    return op.matrix(n_sites) if isinstance(op, ObservableSpec) else np.asarray(op)


def heisenberg_evolve(h: HamiltonianSpec, a, t: float) -> np.ndarray:
    return evolver(h).evolve(_as_matrix(a, h.n_sites), t)


def commutator_norm(h: HamiltonianSpec, a, b, t: float) -> float:
    at = heisenberg_evolve(h, a, t)
    bm = _as_matrix(b, h.n_sites)
    return operator_norm(at @ bm - bm @ at)


# ------------------------------------------------------------------ fronts


@dataclass
class FrontTable:
    """Measured commutator norms keyed by (r, t)."""

    rows: list[tuple[float, float, float]]
    metadata: dict = field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.array([v for _, _, v in self.rows])

    def at(self, r: float, t: float) -> float:
        for rr, tt, v in self.rows:
            if math.isclose(rr, r) and math.isclose(tt, t, abs_tol=1e-15):
                return v
        raise KeyError((r, t))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "t", "value"])
        for r, t, v in self.rows:
            w.writerow([format(r, ".17g"), format(t, ".17g"), format(v, ".17g")])
        return buf.getvalue()

    def metadata_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_csv(cls, text: str, metadata: Mapping | None = None) -> "FrontTable":
        rows = [(float(r["r"]), float(r["t"]), float(r["value"])) for r in csv.DictReader(io.StringIO(text))]
        return cls(rows, dict(metadata or {}))


def front_scan(h: HamiltonianSpec, a: ObservableSpec, probe_sites: Sequence[int] | None = None,
               times: Sequence[float] = (0.0,), probe_paulis: str = "XYZ", **meta) -> FrontTable:
    """max over single-site Pauli probes of ||[tau_t(A), B]|| on an (r, t) grid."""
    n = h.n_sites
    if probe_sites is None:
        probe_sites = [s for s in range(n) if s not in a.support]
    ev = evolver(h)
    a0 = ev.to_eigenbasis(a.matrix(n))
    probes = {s: [pauli_action(n, [s], p) for p in probe_paulis] for s in probe_sites}
    best: dict[tuple[float, float], float] = {}
    for t in times:
        at = ev.evolve(None, t, eigenbasis_op=a0)
        for s, mats in probes.items():
            r = h.lattice.distance(a.support, [s])
            v = max(_pauli_commutator_norm(at, rows, vals) for rows, vals in mats)
            key = (r, float(t))
            best[key] = max(best.get(key, 0.0), v)
    rows = [(r, t, v) for (r, t), v in sorted(best.items())]
    metadata = {"model": h.name, "L": n, "observable": {"support": list(a.support), "ops": a.ops}}
    metadata.update(meta)
    return FrontTable(rows, metadata)


@dataclass(frozen=True)
class DominanceReport:
    kappa: float
    location: tuple[float, float] | None


def dominance_report(front: FrontTable, bound: BoundDescriptor) -> DominanceReport:
    """Smallest kappa with kappa * bound(r, t) >= front(r, t) for all r >= 1."""
    kappa, where = 0.0, None
    for r, t, v in front.rows:
        if r < 1.0 or v <= 0.0:
            continue
        ratio = v / eval_bound(bound, r, t)
        if ratio > kappa:
            kappa, where = ratio, (r, t)
    return DominanceReport(kappa, where)


# ------------------------------------------------------ assumption checks


def decay_profile(h: HamiltonianSpec, R: float) -> float:
    """f(R) = sup_z sum_{Z containing z, diam Z >= R} ||H_Z||."""
    per_site = np.zeros(h.n_sites)
    for z, w in h.block_norms().items():
        if h.lattice.diameter(z) >= R - 1e-12:
            per_site[list(z)] += w
    return float(per_site.max())


def interaction_budget(h: HamiltonianSpec) -> float:
    """C0 = sup_x sum_y sum_{Z containing x and y} ||H_Z|| (y = x included)."""
    per_site = np.zeros(h.n_sites)
    for z, w in h.block_norms().items():
        per_site[list(z)] += len(z) * w
    return float(per_site.max())


def fit_decay(h: HamiltonianSpec, alpha: float) -> float:
    """Smallest J with f(R) <= J R^-alpha for every R >= 1 (checked at each term diameter)."""
    diams = {h.lattice.diameter(z) for z in h.block_norms()}
    radii = sorted({1.0} | {d for d in diams if d >= 1.0})
    return max((decay_profile(h, R) * R**alpha for R in radii), default=0.0)


def term_difference_norms(h1: HamiltonianSpec, h2: HamiltonianSpec) -> dict[tuple[int, ...], float]:
    """||(H1)_Z - (H2)_Z|| for every support present in either Hamiltonian."""
    if h1.lattice != h2.lattice:
        raise OracleError("Hamiltonians live on different lattices")
    b1, b2 = h1.blocks(), h2.blocks()
    out = {}
    for z in sorted(set(b1) | set(b2)):
        diff = list(b1.get(z, [])) + [Term(t.support, t.ops, -t.coeff) for t in b2.get(z, [])]
        w = operator_norm(_local_matrix(diff, z))
        if w > 0.0:
            out[z] = w
    return out


def delta_j(h1: HamiltonianSpec, h2: HamiltonianSpec) -> float:
    per_site = np.zeros(h1.n_sites)
    for z, w in term_difference_norms(h1, h2).items():
        per_site[list(z)] += w
    return float(per_site.max())


def perturbation_diff(h1: HamiltonianSpec, h2: HamiltonianSpec, o: ObservableSpec, t: float) -> float:
    """||tau_t^{H1}(O) - tau_t^{H2}(O)||."""
    if h1.lattice != h2.lattice:
        raise OracleError("Hamiltonians live on different lattices")
    return operator_norm(heisenberg_evolve(h1, o, t) - heisenberg_evolve(h2, o, t))


def duhamel_bound(h1: HamiltonianSpec, h2: HamiltonianSpec, t: float) -> float:
    """2 t sum_Z ||Delta H_Z|| for a unit-norm observable."""
    return 2.0 * t * sum(term_difference_norms(h1, h2).values())


def site_sum_bound(h1: HamiltonianSpec, h2: HamiltonianSpec, o: ObservableSpec,
                   bound: BoundDescriptor, t: float) -> float:
    """t sum_Z ||Delta H_Z|| C(d(O, Z), t), each term charged to its site closest to O."""
    lat = h1.lattice
    return t * sum(w * eval_bound(bound, lat.distance(o.support, z), t)
                   for z, w in term_difference_norms(h1, h2).items())


def bound_volume_integral(bound: BoundDescriptor, r_min: float, t: float) -> float:
    """int_{r_min}^inf r^(d-1) C(r, t) dr by quadrature; inf when the tail diverges.

    The integral runs in u = log r, where power-law tails decay exponentially.
    """
    d = bound.params.dim
    if math.isinf(bound.cutoff) and (bound.is_seed or any(d + p.r_exponent >= 0 for p in bound.poly_terms)):
        return math.inf
    f = lambda u: math.exp(d * u) * eval_bound(bound, math.exp(u), t)
    lo = math.log(max(r_min, 1e-12))
    pts = sorted({lo, max(lo, 0.0), max(lo, 0.0) + 5.0})
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        if b > a:
            total += integrate.quad(f, a, b, limit=400)[0]
    # beyond u_max only the (ungated) power-law terms survive; add their tail exactly
    u_max = pts[-1] + 200.0
    total += integrate.quad(f, pts[-1], u_max, limit=400)[0]
    tau = bound.params.velocity * t
    for p in bound.poly_terms:
        k = d + p.r_exponent
        total += p.prefactor(tau, bound.params.x_size) * math.exp(k * u_max) / -k
    return total
