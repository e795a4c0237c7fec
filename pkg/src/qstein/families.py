"""Hypothesis families, method-of-types constructions and membership tests.

A :class:`StateFamily` describes the n-copy level of a hypothesis sequence.
Hull-like kinds are understood as convex hulls of their extreme points; the
separable kinds carry exact membership criteria where these exist (product
test, PPT in dimension at most 6) and report ``None`` otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.optimize import linprog

from . import spectral
from .errors import CapExceeded, DimensionMismatch, UnsupportedFamily
from .operators import (
    DensityOperator,
    HermitianOperator,
    Permutation,
    check_dim,
    depolarise,
    partial_trace,
    partial_transpose,
    permute,
    replace_factors,
    support_contained,
    tensor,
    tensor_all,
    tensor_power,
)
from .random_states import haar_unitary
from .reports import CheckReport

MEASURE_TOL = 1e-10
MAX_SUPPORT = 64
MAX_TYPES = 10 ** 6
MEMBERSHIP_TOL = 1e-8
PSD_TOL = 1e-9
FIDELITY_DEDUP = 1 - 1e-9

KINDS = ("ExplicitHull", "IIDPower", "AVProduct", "SeparableInner", "SeparableOuter", "StabiliserHull")


# ---------------------------------------------------------------- measures and types

class DiscreteMeasure:
    """Finitely supported probability measure on a list of states."""

    def __init__(self, support: Sequence[DensityOperator], weights):
        support = tuple(support)
        weights = np.asarray(weights, dtype=float)
        if not support or len(support) != len(weights):
            raise ValueError("support and weights must be nonempty and of equal length")
        if len(support) > MAX_SUPPORT:
            raise CapExceeded(f"measure support {len(support)} exceeds {MAX_SUPPORT}")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > MEASURE_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        dims = support[0].dims
        if any(s.dims != dims for s in support):
            raise DimensionMismatch("measure support states must share dims")
        weights = weights.copy()
        weights.setflags(write=False)
        self.support = support
        self.weights = weights

    @classmethod
    def point(cls, state: DensityOperator) -> "DiscreteMeasure":
        return cls([state], [1.0])

    @classmethod
    def uniform(cls, states: Sequence[DensityOperator]) -> "DiscreteMeasure":
        return cls(states, np.full(len(states), 1.0 / len(states)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.support[0].dims

    def barycentre(self) -> DensityOperator:
        m = np.tensordot(self.weights, np.stack([s.matrix for s in self.support]), axes=1)
        return DensityOperator._trusted(m, self.dims)

    def compressed(self, atol: float = 1e-12) -> "DiscreteMeasure":
        """Merge numerically identical support points and drop zero weights."""
        pts: list[DensityOperator] = []
        ws: list[float] = []
        for s, w in zip(self.support, self.weights):
            if w <= 0:
                continue
            for i, t in enumerate(pts):
                if np.allclose(s.matrix, t.matrix, atol=atol, rtol=0):
                    ws[i] += w
                    break
            else:
                pts.append(s)
                ws.append(float(w))
        total = sum(ws)
        return DiscreteMeasure(pts, np.asarray(ws) / total)

    def to_dict(self) -> dict:
        return {"support": [s.to_dict() for s in self.support], "weights": self.weights.tolist()}


@dataclass(frozen=True)
class NType:
    """An n-type: letter counts over an alphabet, summing to ``n``."""

    alphabet_size: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.alphabet_size or any(c < 0 for c in counts):
            raise ValueError(f"invalid counts {self.counts} for alphabet of size {self.alphabet_size}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n

    def class_size(self) -> int:
        out = math.factorial(self.n)
        for c in self.counts:
            out //= math.factorial(c)
        return out

    def iid_probability(self) -> float:
        """``V^n(T_V)``: probability that ``n`` draws from ``V`` have type ``V``."""
        v = self.distribution()
        logp = math.log(self.class_size()) + sum(c * math.log(p) for c, p in zip(self.counts, v) if c)
        return math.exp(logp)

    def sequences(self) -> Iterator[tuple[int, ...]]:
        """All sequences of this type in lexicographic order."""
        seq = [x for x, c in enumerate(self.counts) for _ in range(c)]
        yield from _multiset_permutations(seq)


def _multiset_permutations(seq: list[int]) -> Iterator[tuple[int, ...]]:
    a = sorted(seq)
    n = len(a)
    while True:
        yield tuple(a)
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1:] = reversed(a[i + 1:])


def count_types(alphabet_size: int, n: int) -> int:
    return math.comb(n + alphabet_size - 1, alphabet_size - 1)


def enumerate_types(alphabet_size: int, n: int) -> list[NType]:
    """All n-types over ``alphabet_size`` letters, lexicographic in the count vector."""
    if alphabet_size < 1 or n < 0:
        raise ValueError("need alphabet_size >= 1 and n >= 0")
    total = count_types(alphabet_size, n)
    if total > MAX_TYPES:
        raise CapExceeded(f"{total} types exceed the cap {MAX_TYPES}")

    def rec(k: int, left: int):
        if k == 1:
            yield (left,)
            return
        for c in range(left + 1):
            for rest in rec(k - 1, left - c):
                yield (c,) + rest

    return [NType(alphabet_size, c) for c in rec(alphabet_size, n)]


def iid_mixture_state(mu: DiscreteMeasure, n: int) -> DensityOperator:
    """``Σ_j w_j σ_j^{⊗n}`` for a discrete measure ``mu``."""
    d = math.prod(mu.dims)
    check_dim(d ** n, "i.i.d. mixture")
    m = sum(w * tensor_power(s, n).matrix for s, w in zip(mu.support, mu.weights) if w > 0)
    return DensityOperator._trusted(m, mu.dims * n)


def type_class_state(base: Sequence[DensityOperator], v: NType) -> DensityOperator:
    """Uniform mixture of ``σ_{x_1} ⊗ ... ⊗ σ_{x_n}`` over the sequences of type ``v``."""
    base = list(base)
    if len(base) != v.alphabet_size:
        raise ValueError("type alphabet must match the base list")
    dims = base[0].dims
    check_dim(math.prod(dims) ** v.n, "type-class state")
    acc = None
    count = 0
    for seq in v.sequences():
        m = tensor_all(base[x] for x in seq).matrix
        acc = m.copy() if acc is None else acc + m
        count += 1
    return DensityOperator._trusted(acc / count, dims * v.n)


def av_hull_symmetric_decomposition(base: Sequence[DensityOperator], n: int) -> list[tuple[NType, DensityOperator]]:
    """The type-class states spanning the permutation-symmetric part of the AV hull."""
    base = list(base)
    return [(v, type_class_state(base, v)) for v in enumerate_types(len(base), n)]


def av_product_states(base: Sequence[DensityOperator], n: int, cap: int = 4096) -> list[DensityOperator]:
    """All ``|base|^n`` product states ``σ_{x_1} ⊗ ... ⊗ σ_{x_n}``."""
    base = list(base)
    if len(base) ** n > cap:
        raise CapExceeded(f"{len(base)}^{n} product states exceed {cap}")
    return [tensor_all(base[x] for x in seq) for seq in itertools.product(range(len(base)), repeat=n)]


# ---------------------------------------------------------------- delta cover

@dataclass
class DeltaCover:
    centers: list
    assignment: list
    delta: float
    worst_min_eig: float
    support_reduction: str | None = None


def dominates(center: HermitianOperator, sigma: HermitianOperator, factor: float) -> float:
    """``min-eig(factor·center - sigma)``; nonnegative means ``sigma <= factor·center``."""
    return spectral.min_eig(factor * center.matrix - sigma.matrix)


def delta_cover(base: Sequence[DensityOperator], delta: float) -> DeltaCover:
    """Greedy centers with ``σ <= 2^δ · center(σ)`` for every base state.

    Groups are grown in list order; a candidate joins the current group when
    the barycentre of the enlarged group still dominates every member.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    base = list(base)
    factor = 2.0 ** delta
    unassigned = list(range(len(base)))
    centers: list[DensityOperator] = []
    assignment = [0] * len(base)
    worst = math.inf
    while unassigned:
        group = [unassigned[0]]
        for j in unassigned[1:]:
            trial = group + [j]
            c = DiscreteMeasure.uniform([base[i] for i in trial]).barycentre()
            if all(dominates(c, base[i], factor) >= -PSD_TOL for i in trial):
                group = trial
        c = DiscreteMeasure.uniform([base[i] for i in group]).barycentre()
        for i in group:
            assignment[i] = len(centers)
            worst = min(worst, dominates(c, base[i], factor))
            unassigned.remove(i)
        centers.append(c)
    return DeltaCover(centers, assignment, delta, worst)


# ---------------------------------------------------------------- stabiliser states

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j])


def _clifford_generators(n: int) -> list[np.ndarray]:
    gens = []
    for q in range(n):
        for g in (_H, _S):
            ops = [np.eye(2)] * n
            ops[q] = g
            u = ops[0]
            for o in ops[1:]:
                u = np.kron(u, o)
            gens.append(u)
    if n == 2:
        cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
        swap = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
        gens.append(cnot)
        gens.append(swap @ cnot @ swap)
    return gens


def stabiliser_states(n_qubits: int) -> list[DensityOperator]:
    """Pure stabiliser states as the Clifford orbit of ``|0...0>`` (breadth first)."""
    if n_qubits not in (1, 2):
        raise UnsupportedFamily("stabiliser enumeration supports 1 or 2 qubits")
    d = 2 ** n_qubits
    gens = _clifford_generators(n_qubits)
    start = np.zeros(d, dtype=complex)
    start[0] = 1
    found = [start]
    frontier = [start]
    while frontier:
        nxt = []
        for psi in frontier:
            for g in gens:
                phi = g @ psi
                if all(abs(np.vdot(f, phi)) ** 2 < FIDELITY_DEDUP for f in found):
                    found.append(phi)
                    nxt.append(phi)
        frontier = nxt
    return [DensityOperator.from_vector(psi, (2,) * n_qubits) for psi in found]


def stabiliser_count(n_qubits: int) -> int:
    """``2^n Π_{k=1..n} (2^k + 1)``."""
    out = 2 ** n_qubits
    for k in range(1, n_qubits + 1):
        out *= 2 ** k + 1
    return out


# ---------------------------------------------------------------- membership

def _real_coords(m: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(m.shape[0])
    il = np.triu_indices(m.shape[0], 1)
    return np.concatenate([np.real(m[iu]), np.imag(m[il])])


def hull_membership(ext: Sequence[HermitianOperator], rho: HermitianOperator,
                    tol: float = MEMBERSHIP_TOL) -> tuple[bool, float, np.ndarray]:
    """Exact convex-hull membership by LP: minimize the entrywise residual ``t``.

    Returns ``(member, t, weights)`` with ``member = t <= tol``.
    """
    ext = list(ext)
    a = np.stack([_real_coords(x.matrix) for x in ext], axis=1)
    r = _real_coords(rho.matrix)
    k = a.shape[1]
    c = np.zeros(k + 1)
    c[-1] = 1.0
    ones = np.ones((a.shape[0], 1))
    a_ub = np.vstack([np.hstack([a, -ones]), np.hstack([-a, -ones])])
    b_ub = np.concatenate([r, -r])
    a_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs")
    if res.status != 0:
        return False, math.inf, np.zeros(k)
    t = float(res.x[-1])
    return t <= tol, t, res.x[:k]


def membership_distance(family: "StateFamily", rho: DensityOperator, gap_tol: float = 1e-7,
                        max_iter: int = 100000) -> float:
    """Frobenius distance from ``rho`` to the hull of the family's extreme points.

    Pairwise Frank–Wolfe with exact line search on ``½‖Σ w_j τ_j - ρ‖_F²``,
    stopped once the certified bracket on the distance is narrower than ``gap_tol``.
    """
    if family.kind == "SeparableOuter":
        raise UnsupportedFamily("the outer separable family has no extreme-point list")
    ext = family.extreme_points()
    vs = np.stack([x.matrix.ravel() for x in ext])
    r = rho.matrix.ravel()
    gram = np.real(vs.conj() @ vs.T)
    lin = np.real(vs.conj() @ r)
    k = len(ext)
    w = np.zeros(k)
    w[int(np.argmax(lin - 0.5 * np.diag(gram)))] = 1.0
    for _ in range(max_iter):
        grad = gram @ w - lin
        s = int(np.argmin(grad))
        active = np.flatnonzero(w > 0)
        a = active[int(np.argmax(grad[active]))]
        gap = float(grad @ w - grad[s])
        # stop on the certified distance bracket [sqrt(2(f - gap)), sqrt(2f)]
        f = 0.5 * float(w @ gram @ w) - float(lin @ w) + 0.5 * float(np.real(np.vdot(r, r)))
        if math.sqrt(max(2 * f, 0.0)) - math.sqrt(max(2 * (f - gap), 0.0)) <= gap_tol:
            break
        direction = np.zeros(k)
        direction[s] += 1.0
        direction[a] -= 1.0
        curv = float(direction @ gram @ direction)
        step = w[a] if curv <= 0 else min(w[a], float(-(grad @ direction)) / curv)
        w = w + step * direction
        w[w < 0] = 0.0
    diff = vs.T @ w - r
    return float(np.sqrt(max(np.real(np.vdot(diff, diff)), 0.0)))


def _bipartite_reorder(rho: HermitianOperator, copy_dims: tuple[int, int]) -> tuple[HermitianOperator, int, int]:
    """Reorder ``(A1 B1 A2 B2 ...)`` into ``(A1 A2 ... B1 B2 ...)``."""
    n = rho.n_factors // 2
    order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    mapping = [0] * (2 * n)
    for new, old in enumerate(order):
        mapping[old] = new
    out = permute(rho, Permutation(tuple(mapping)))
    return out, copy_dims[0] ** n, copy_dims[1] ** n


def is_product_across(rho: HermitianOperator, copy_dims: tuple[int, int]) -> tuple[bool, float]:
    """Whether ``rho = ρ_A ⊗ ρ_B`` across the ``A^n : B^n`` cut; returns the deviation."""
    x, da, db = _bipartite_reorder(rho, copy_dims)
    n = rho.n_factors // 2
    ra = partial_trace(x, range(n))
    rb = partial_trace(x, range(n, 2 * n))
    dev = float(np.max(np.abs(np.kron(ra.matrix, rb.matrix) - x.matrix)))
    return dev <= 1e-9, dev


def separable_outer_check(rho: HermitianOperator, copy_dims: tuple[int, int] | None = None,
                          tol: float = PSD_TOL) -> bool:
    """PPT test across the ``A^n : B^n`` cut (default: two factors ``A B``)."""
    if copy_dims is None:
        if rho.n_factors != 2:
            raise DimensionMismatch("declare copy_dims for operators with more than two factors")
        copy_dims = rho.dims
    return ppt_min_eig(rho, copy_dims) >= -tol


def ppt_min_eig(rho: HermitianOperator, copy_dims: tuple[int, int]) -> float:
    n = rho.n_factors // 2
    x, _, _ = _bipartite_reorder(rho, copy_dims)
    return spectral.min_eig(partial_transpose(x, range(n, 2 * n)).matrix)


def separable_membership(rho: HermitianOperator, copy_dims: tuple[int, int]) -> tuple[bool | None, float]:
    """Exact where possible: product test, then PPT (exact when ``d_A d_B <= 6``)."""
    prod, dev = is_product_across(rho, copy_dims)
    if prod:
        return True, 0.0
    n = rho.n_factors // 2
    w = spectral.eigvalsh(rho.matrix)
    if np.sum(w > 1e-9) == 1:
        return False, dev
    pt = ppt_min_eig(rho, copy_dims)
    if pt < -PSD_TOL:
        return False, -pt
    if (copy_dims[0] * copy_dims[1]) ** n <= 6:
        return True, 0.0
    return None, math.nan


# ---------------------------------------------------------------- families

def _as_states(states) -> tuple[DensityOperator, ...]:
    out = []
    for s in states:
        out.append(s if isinstance(s, DensityOperator) else DensityOperator.from_operator(s))
    return tuple(out)


@dataclass(frozen=True)
class StateFamily:
    """Descriptor of a hypothesis set at copy count ``n``.

    ``base`` holds single-copy states for the power kinds and the generators
    for ``ExplicitHull``. ``copy_dims`` are the tensor factors of one copy.
    Separable kinds use ``copy_dims = (d_A, d_B)``; ``StabiliserHull`` uses
    ``qubits_per_copy``.
    """

    kind: str
    base: tuple = ()
    n: int = 1
    copy_dims: tuple = ()
    qubits_per_copy: int = 1
    sample_count: int = 16
    seed: int = 0
    label: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedFamily(f"unknown family kind {self.kind!r}")
        base = _as_states(self.base)
        object.__setattr__(self, "base", base)
        if self.kind in ("ExplicitHull", "IIDPower", "AVProduct"):
            if not base:
                raise ValueError(f"{self.kind} needs a nonempty base")
            dims = base[0].dims
            if any(b.dims != dims for b in base):
                raise DimensionMismatch("base states must share dims")
            if not self.copy_dims:
                object.__setattr__(self, "copy_dims", dims)
        elif self.kind == "StabiliserHull":
            object.__setattr__(self, "copy_dims", (2,) * self.qubits_per_copy)
        elif len(self.copy_dims) != 2:
            raise ValueError("separable families need copy_dims = (d_A, d_B)")
        object.__setattr__(self, "copy_dims", tuple(int(d) for d in self.copy_dims))
        if self.n < 1:
            raise ValueError("copy count must be >= 1")

    # -- constructors
    @classmethod
    def explicit(cls, states, label: str = "") -> "StateFamily":
        states = _as_states(states)
        return cls("ExplicitHull", states, 1, states[0].dims, label=label)

    @classmethod
    def iid(cls, base, n: int = 1, label: str = "") -> "StateFamily":
        return cls("IIDPower", _as_states(base), n, label=label)

    @classmethod
    def av(cls, base, n: int = 1, label: str = "") -> "StateFamily":
        return cls("AVProduct", _as_states(base), n, label=label)

    @classmethod
    def stabiliser(cls, qubits_per_copy: int = 1, n: int = 1) -> "StateFamily":
        return cls("StabiliserHull", (), n, qubits_per_copy=qubits_per_copy)

    def at(self, n: int) -> "StateFamily":
        """The same family at copy count ``n`` (``ExplicitHull`` is fixed-size)."""
        if self.kind == "ExplicitHull":
            if n != self.n:
                raise UnsupportedFamily("an explicit hull is defined at one copy count only")
            return self
        return StateFamily(self.kind, self.base, n, self.copy_dims, self.qubits_per_copy,
                           self.sample_count, self.seed, self.label)

    @property
    def factors_per_copy(self) -> int:
        return len(self.copy_dims)

    @property
    def dims(self) -> tuple[int, ...]:
        if self.kind == "ExplicitHull":
            return self.base[0].dims
        return self.copy_dims * self.n

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def is_convex(self) -> bool:
        """``IIDPower`` denotes the set of powers itself; every other kind is a convex set."""
        return self.kind != "IIDPower"

    # -- materialization
    def extreme_points(self) -> list[DensityOperator]:
        if "ext" in self._cache:
            return self._cache["ext"]
        check_dim(self.dim, f"{self.kind} at n={self.n}")
        if self.kind == "ExplicitHull":
            pts = list(self.base)
        elif self.kind == "IIDPower":
            pts = [tensor_power(b, self.n) for b in self.base]
        elif self.kind == "AVProduct":
            pts = av_product_states(self.base, self.n)
        elif self.kind == "StabiliserHull":
            pts = stabiliser_states(self.qubits_per_copy * self.n)
        elif self.kind == "SeparableInner":
            pts = _separable_samples(self.copy_dims, self.n, self.sample_count, self.seed)
        else:
            raise UnsupportedFamily("the outer separable family is defined by a test, not a list")
        self._cache["ext"] = pts
        return pts

    def spanning_points(self) -> list[DensityOperator]:
        """Points whose hull contains the permutation-symmetric part of the family.

        For ``AVProduct`` these are the type-class states; for other kinds the
        extreme points themselves.
        """
        if self.kind == "AVProduct":
            return [g for _, g in av_hull_symmetric_decomposition(self.base, self.n)]
        return self.extreme_points()

    # -- membership
    def contains(self, rho: HermitianOperator, tol: float = MEMBERSHIP_TOL) -> tuple[bool | None, float]:
        """Membership verdict and residual (``None`` when undecidable here)."""
        if rho.dims != self.dims:
            return False, math.inf
        if self.kind in ("SeparableInner", "SeparableOuter"):
            return separable_membership(rho, self.copy_dims)
        if self.kind == "StabiliserHull" and self.qubits_per_copy * self.n > 2:
            return None, math.nan
        member, t, _ = hull_membership(self.extreme_points(), rho, tol)
        return member, t

    # -- serialization
    def to_dict(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        if self.base:
            out["base"] = [b.to_dict() for b in self.base]
        if self.kind in ("SeparableInner", "SeparableOuter"):
            out["copy_dims"] = list(self.copy_dims)
        if self.kind == "SeparableInner":
            out["sample_count"] = self.sample_count
            out["seed"] = self.seed
        if self.kind == "StabiliserHull":
            out["qubits_per_copy"] = self.qubits_per_copy
        if self.label:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict, resolve: Callable | None = None) -> "StateFamily":
        """Build from a descriptor; base entries may be operator objects, names or ``{"file": ...}``."""
        resolve = resolve or resolve_state
        kind = data["kind"]
        base = tuple(resolve(b) for b in data.get("base", ()))
        return cls(kind, base, int(data.get("n", 1)), tuple(data.get("copy_dims", ())),
                   int(data.get("qubits_per_copy", 1)), int(data.get("sample_count", 16)),
                   int(data.get("seed", 0)), str(data.get("label", "")))


def _separable_samples(copy_dims, n: int, count: int, seed: int) -> list[DensityOperator]:
    da, db = copy_dims
    rng = np.random.default_rng([int(seed), int(n)])
    pts = []
    for _ in range(count):
        psi_a = haar_unitary(rng, da ** n)[:, 0]
        psi_b = haar_unitary(rng, db ** n)[:, 0]
        pts.append(_product_to_copy_order(np.kron(psi_a, psi_b), copy_dims, n))
    pts.append(DensityOperator.maximally_mixed(tuple(copy_dims) * n))
    return pts


def _product_to_copy_order(psi: np.ndarray, copy_dims, n: int) -> DensityOperator:
    da, db = copy_dims
    x = DensityOperator.from_vector(psi, (da,) * n + (db,) * n)
    # factor A_i sits at 2i, B_i at 2i+1
    mapping = tuple([2 * i for i in range(n)] + [2 * i + 1 for i in range(n)])
    return permute(x, Permutation(mapping))


def separable_inner(copy_dims: tuple[int, int], sample_count: int, seed: int, n: int = 1) -> StateFamily:
    """Inner approximation of the separable set on ``(A B)^n`` across the ``A^n : B^n`` cut.

    Extreme points are seeded Haar-random pure product states plus the
    maximally mixed state.
    """
    return StateFamily("SeparableInner", (), n, tuple(copy_dims), sample_count=sample_count, seed=seed)


# ---------------------------------------------------------------- named states

def werner_state(p: float) -> DensityOperator:
    """``p |Ψ⁻><Ψ⁻| + (1-p) I/4`` on two qubits."""
    psi = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    m = p * np.outer(psi, psi.conj()) + (1 - p) * np.eye(4) / 4
    return DensityOperator(m, (2, 2))


def named_state(name: str) -> DensityOperator:
    """Small library of states addressable from config files.

    Names: ``zero``, ``one``, ``plus``, ``minus``, ``plus_i``, ``minus_i``,
    ``mixed``, ``bell``, ``werner:<p>``, ``diag:<p0>,<p1>,...``,
    ``maximally_mixed:<d>``.
    """
    s2 = 1 / math.sqrt(2)
    vectors = {
        "zero": [1, 0], "one": [0, 1], "plus": [s2, s2], "minus": [s2, -s2],
        "plus_i": [s2, 1j * s2], "minus_i": [s2, -1j * s2], "bell": [s2, 0, 0, s2],
    }
    if name in vectors:
        v = vectors[name]
        return DensityOperator.from_vector(v, (2, 2) if len(v) == 4 else (2,))
    if name == "mixed":
        return DensityOperator.maximally_mixed((2,))
    head, _, arg = name.partition(":")
    try:
        if head == "werner":
            return werner_state(float(arg))
        if head == "diag":
            return DensityOperator.diagonal([float(x) for x in arg.split(",")])
        if head == "maximally_mixed":
            return DensityOperator.maximally_mixed((int(arg),))
    except ValueError as exc:
        raise UnsupportedFamily(f"bad state name {name!r}: {exc}") from exc
    raise UnsupportedFamily(f"unknown state name {name!r}")


def resolve_state(ref) -> DensityOperator:
    if isinstance(ref, DensityOperator):
        return ref
    if isinstance(ref, str):
        return named_state(ref)
    if isinstance(ref, dict) and "file" in ref:
        from .operators import load_operator
        return DensityOperator.from_operator(load_operator(ref["file"]))
    if isinstance(ref, dict):
        return DensityOperator.from_dict(ref)
    raise UnsupportedFamily(f"cannot interpret state reference {ref!r}")


# ---------------------------------------------------------------- axiom audit

def permute_copies(x: HermitianOperator, perm: Sequence[int], factors_per_copy: int) -> HermitianOperator:
    """Move copy ``c`` (a block of ``factors_per_copy`` factors) to position ``perm[c]``."""
    f = factors_per_copy
    mapping = [0] * (len(perm) * f)
    for c, target in enumerate(perm):
        for j in range(f):
            mapping[c * f + j] = target * f + j
    return permute(x, Permutation(tuple(mapping)))


def blockwise_depolarise(rho: HermitianOperator, delta: float, tau_block: DensityOperator,
                         block_factors: int) -> HermitianOperator:
    """Apply ``X -> (1-δ) X + δ Tr[X] τ_block`` to each consecutive block of factors."""
    m = rho.n_factors // block_factors
    out = rho
    for b in range(m):
        positions = list(range(b * block_factors, (b + 1) * block_factors))
        replaced = replace_factors(out, positions, tau_block)
        out = HermitianOperator._trusted((1 - delta) * out.matrix + delta * replaced.matrix, rho.dims)
    return DensityOperator._trusted(out.matrix, rho.dims)


def blockwise_depolarise_terms(rho: HermitianOperator, tau_block: DensityOperator,
                               block_factors: int) -> list[tuple[tuple[int, ...], DensityOperator]]:
    """Every term ``Tr_S ρ`` with ``τ_block`` reinserted on the blocks in ``S``."""
    m = rho.n_factors // block_factors
    terms = []
    for r in range(m + 1):
        for subset in itertools.combinations(range(m), r):
            out = rho
            for b in subset:
                out = replace_factors(out, list(range(b * block_factors, (b + 1) * block_factors)), tau_block)
            terms.append((subset, DensityOperator._trusted(out.matrix, rho.dims)))
    return terms


def filter_reduce(rho: HermitianOperator, filt: HermitianOperator, keep_factors: int) -> HermitianOperator:
    """``Tr_{last}[ρ (I ⊗ F)]`` where ``F`` acts on the factors after ``keep_factors``."""
    d_keep = math.prod(rho.dims[:keep_factors])
    op = np.kron(np.eye(d_keep), filt.matrix)
    prod = HermitianOperator(rho.matrix @ op, rho.dims)
    return partial_trace(prod, range(keep_factors))


class _AxiomTally:
    def __init__(self):
        self.worst = math.inf
        self.count = 0
        self.undecided = 0
        self.failures: list[dict] = []

    def add(self, member, residual, instance):
        self.count += 1
        if member is None:
            self.undecided += 1
            return
        slack = -residual if member is False or residual > 0 else 0.0
        if member is False:
            slack = min(slack, -max(residual, MEMBERSHIP_TOL * 10))
            if len(self.failures) < 5:
                self.failures.append(instance)
        self.worst = min(self.worst, slack)

    def verdict(self) -> str:
        if self.failures:
            return "fail"
        if self.count == 0 or self.undecided:
            return "inconclusive"
        return "pass"

    def summary(self) -> dict:
        return {"verdict": self.verdict(), "instances": self.count, "undecided": self.undecided,
                "worst_slack": self.worst if self.count > self.undecided else math.nan,
                "failures": self.failures}


def axiom_audit(family, tau: DensityOperator, c: float | None = None, max_n: int = 2, samples: int = 4,
                seed: int = 0, deltas: Sequence[float] = (0.25, 0.5, 1.0),
                lambdas: Sequence[float] = (0.0, 0.25, 0.5, 0.75), filter_radius: float = 0.5,
                max_members: int = 64, tol: float = MEMBERSHIP_TOL) -> CheckReport:
    """Audit the four structural axioms of a null-hypothesis family up to ``max_n`` copies.

    ``family`` is a :class:`StateFamily` (levels obtained with ``at``) or a
    callable ``n -> StateFamily``. Linear axioms (support, blockwise
    depolarising, permutations, filtering) are checked on extreme points,
    which is exhaustive for convex families; tensor-power closure is checked
    on extreme points as well. The filtering axiom is tested on the grid
    ``F = (1-λ) G + λ I`` for seeded ``G`` with ``‖G - I‖_∞ = filter_radius``;
    when some grid point fails it is reported as inconclusive, since the
    neighbourhood it quantifies over is unsized.
    """
    level = family.at if isinstance(family, StateFamily) else family
    rng = np.random.default_rng(seed)
    fam1 = level(1)
    copy_dims = fam1.copy_dims
    fpc = len(copy_dims)
    if tau.dims != copy_dims:
        raise DimensionMismatch("tau must act on one copy")
    tau_w = spectral.eigvalsh(tau.matrix)
    lam_min = float(tau_w[tau_w > 1e-12][0])
    c = lam_min - 1e-10 if c is None else float(c)

    members_cache: dict[int, list] = {}

    def members(n):
        if n not in members_cache:
            pts = level(n).extreme_points()
            if len(pts) > max_members:
                idx = np.sort(rng.choice(len(pts), size=samples, replace=False))
                pts = [pts[i] for i in idx]
                members_cache[n] = list(zip(idx.tolist(), pts))
            else:
                members_cache[n] = list(enumerate(pts))
        return members_cache[n]

    q1a, q1b, q2, q3, q4 = (_AxiomTally() for _ in range(5))
    # Q.I: tau in F_1, c valid, supports, blockwise depolarising
    mem, res = fam1.contains(tau, tol)
    q1a.add(mem, res, {"what": "tau in F_1"})
    q1a.add(c <= lam_min and c > 0, max(c - lam_min, 0.0), {"what": "c bounds tau's smallest nonzero eigenvalue"})
    for n in range(1, max_n + 1):
        tn = tensor_power(tau, n)
        for i, rho in members(n):
            ok = support_contained(rho, tn)
            q1a.add(ok, 0.0 if ok else 1.0, {"n": n, "member": i})
    for mk in range(1, max_n + 1):
        for k in [k for k in range(1, mk + 1) if mk % k == 0]:
            tau_block = tensor_power(tau, k)
            fam = level(mk)
            for i, rho in members(mk):
                for delta in deltas:
                    out = blockwise_depolarise(rho, delta, tau_block, k * fpc)
                    mem, res = fam.contains(out, tol)
                    if mem is None:
                        mem, res = _members_by_terms(fam, rho, tau_block, k * fpc, tol)
                    q1b.add(mem, res, {"m": mk // k, "k": k, "member": i, "delta": delta})
    # Q.II: tensor powers
    for k in range(1, max_n + 1):
        for m in range(2, max_n // k + 1):
            fam = level(m * k)
            for i, rho in members(k):
                mem, res = fam.contains(tensor_power(rho, m), tol)
                q2.add(mem, res, {"k": k, "m": m, "member": i})
    # Q.III: permutations of copies
    for n in range(2, max_n + 1):
        fam = level(n)
        for i, rho in members(n):
            for perm in itertools.permutations(range(n)):
                if perm == tuple(range(n)):
                    continue
                mem, res = fam.contains(permute_copies(rho, perm, fpc), tol)
                q3.add(mem, res, {"n": n, "member": i, "perm": list(perm)})
    # Q.IV: filtering on a lambda grid
    held = {lam: True for lam in lambdas}
    q4_checked = 0
    for total in range(2, max_n + 1):
        for k in range(1, total):
            n = total - k
            fam_n = level(n)
            dk = math.prod(copy_dims) ** k
            for s in range(samples):
                h = rng.standard_normal((dk, dk)) + 1j * rng.standard_normal((dk, dk))
                h = h + h.conj().T
                h /= np.max(np.abs(spectral.eigvalsh(h)))
                g = np.eye(dk) + filter_radius * h
                for lam in lambdas:
                    filt = HermitianOperator((1 - lam) * g + lam * np.eye(dk), copy_dims * k)
                    for i, rho in members(total):
                        out = filter_reduce(rho, filt, n * fpc)
                        tr = out.trace()
                        q4_checked += 1
                        if tr <= 1e-12:
                            continue
                        mem, res = fam_n.contains(HermitianOperator(out.matrix / tr, out.dims), tol)
                        if mem is not True:
                            held[lam] = False
                            q4.add(mem, res, {"n": n, "k": k, "sample": s, "lambda": lam, "member": i})
    radius = None
    for lam in sorted(lambdas):
        if all(held[l2] for l2 in lambdas if l2 >= lam):
            radius = (1 - lam) * filter_radius
            break
    if q4_checked == 0:
        q4_summary = {"verdict": "inconclusive", "reason": "no (n, k) with n + k <= max_n", "instances": 0}
    elif all(held.values()):
        q4_summary = {"verdict": "pass", "note": "pass-at-grid", "instances": q4_checked,
                      "largest_radius_held": radius}
    else:
        q4_summary = {"verdict": "inconclusive", "instances": q4_checked, "largest_radius_held": radius,
                      "failing_points": q4.failures}

    axioms = {"Q.I(a)": q1a.summary(), "Q.I(b)": q1b.summary(), "Q.II": q2.summary(),
              "Q.III": q3.summary(), "Q.IV": q4_summary}
    core = [axioms[k] for k in ("Q.I(a)", "Q.I(b)", "Q.II", "Q.III")]
    if any(a["verdict"] == "fail" for a in core):
        verdict = "fail"
    elif any(a["verdict"] == "inconclusive" for a in core):
        verdict = "inconclusive"
    else:
        verdict = "pass"
    slacks = [a["worst_slack"] for a in core if not math.isnan(a["worst_slack"]) and math.isfinite(a["worst_slack"])]
    worst = min(slacks) if slacks else math.nan
    return CheckReport(
        check_id=f"axiom-audit:{fam1.kind}",
        anchor="structural axioms: support, depolarising, tensor powers, permutations, filtering",
        instances=sum(a.get("instances", 0) for a in axioms.values()),
        worst_slack=worst,
        tolerance=tol,
        seed=seed,
        verdict=verdict,
        detail={"axioms": axioms, "c": c, "max_n": max_n, "family": fam1.kind},
    )


def _members_by_terms(fam: StateFamily, rho, tau_block, block_factors, tol):
    """Membership of a blockwise-depolarised state via its convex decomposition."""
    worst = 0.0
    for _, term in blockwise_depolarise_terms(rho, tau_block, block_factors):
        mem, res = fam.contains(term, tol)
        if mem is not True:
            return mem, res
        worst = max(worst, res)
    return True, worst
