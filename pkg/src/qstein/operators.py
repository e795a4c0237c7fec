"""Dense Hermitian operators on tensor-product spaces.

Values are immutable: the backing array is made read-only at construction and
every operation returns a new object. All logarithms are base 2.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import spectral
from .errors import BadSubsystem, CapExceeded, DimensionMismatch, NotDensity, NotPSD

DEFAULT_DIM_CAP = 4096
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
TRACE_TOL = 1e-9
SUPPORT_CUTOFF = 1e-12
SUPPORT_CUTOFF_COARSE = 1e-10
FULL_GROUP_MAX_N = 6

_dim_cap = DEFAULT_DIM_CAP


def get_dim_cap() -> int:
    return _dim_cap


def set_dim_cap(cap: int) -> None:
    global _dim_cap
    if cap < 1:
        raise ValueError("dimension cap must be positive")
    _dim_cap = int(cap)


@contextlib.contextmanager
def dim_cap(cap: int):
    """Temporarily change the global dense-dimension cap."""
    old = get_dim_cap()
    set_dim_cap(cap)
    try:
        yield
    finally:
        set_dim_cap(old)


def check_dim(total: int, what: str = "operator") -> None:
    if total > _dim_cap:
        raise CapExceeded(f"{what} dimension {total} exceeds cap {_dim_cap}")


class HermitianOperator:
    """Complex Hermitian matrix acting on ``C^dims[0] ⊗ ... ⊗ C^dims[-1]``.

    The input matrix is projected onto the Hermitian subspace via ``(M + M†)/2``.
    ``dims`` defaults to a single factor of the full size; an empty ``dims``
    denotes a scalar (1x1) operator, produced by tracing out every factor.
    """

    __slots__ = ("_dims", "_m")

    def __init__(self, matrix, dims: Sequence[int] | None = None):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        if dims is None:
            dims = (m.shape[0],) if m.shape[0] > 1 else ()
        dims = tuple(int(d) for d in dims)
        if any(d < 2 for d in dims):
            raise DimensionMismatch(f"local dimensions must be >= 2, got {dims}")
        if math.prod(dims) != m.shape[0]:
            raise DimensionMismatch(f"dims {dims} do not multiply to {m.shape[0]}")
        check_dim(m.shape[0])
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        self._dims = dims
        self._m = m

    @classmethod
    def _trusted(cls, matrix: np.ndarray, dims: tuple[int, ...]):
        obj = object.__new__(cls)
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        matrix.setflags(write=False)
        obj._dims = dims
        obj._m = matrix
        return obj

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def n_factors(self) -> int:
        return len(self._dims)

    def trace(self) -> float:
        return float(np.real(np.trace(self._m)))

    def eigvals(self) -> np.ndarray:
        """Ascending real eigenvalues."""
        return spectral.eigvalsh(self._m)

    def expectation(self, other: "HermitianOperator") -> float:
        """``Tr[self · other]`` for two operators of equal size."""
        _check_same_shape(self, other)
        return float(np.real(np.vdot(self._m.conj().T, other._m)))

    def tensor(self, other: "HermitianOperator") -> "HermitianOperator":
        return tensor(self, other)

    def as_hermitian(self) -> "HermitianOperator":
        return HermitianOperator._trusted(self._m, self._dims)

    def __add__(self, other):
        _check_same_shape(self, other)
        return HermitianOperator._trusted(self._m + other._m, self._dims)

    def __sub__(self, other):
        _check_same_shape(self, other)
        return HermitianOperator._trusted(self._m - other._m, self._dims)

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            return NotImplemented
        return HermitianOperator._trusted(self._m * float(scalar), self._dims)

    __rmul__ = __mul__

    def __neg__(self):
        return HermitianOperator._trusted(-self._m, self._dims)

    def allclose(self, other: "HermitianOperator", atol: float = 1e-9) -> bool:
        return self._dims == other._dims and bool(np.allclose(self._m, other._m, atol=atol, rtol=0))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dims={list(self._dims)})"

    def to_dict(self) -> dict:
        return {
            "dims": list(self._dims),
            "re": np.real(self._m).tolist(),
            "im": np.imag(self._m).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict):
        try:
            re = np.asarray(data["re"], dtype=float)
            im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
            dims = data.get("dims")
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch(f"malformed operator JSON: {exc}") from exc
        return cls(re + 1j * im, dims)


class DensityOperator(HermitianOperator):
    """A Hermitian operator that is PSD (to ``-1e-9``) with unit trace (to ``1e-9``)."""

    __slots__ = ()

    def __init__(self, matrix, dims: Sequence[int] | None = None):
        super().__init__(matrix, dims)
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise NotDensity(f"trace {tr!r} is not 1 within {TRACE_TOL}")
        lo = float(self.eigvals()[0])
        if lo < -PSD_TOL:
            raise NotDensity(f"minimum eigenvalue {lo!r} below -{PSD_TOL}")

    @classmethod
    def from_operator(cls, x: HermitianOperator) -> "DensityOperator":
        return cls(x.matrix, x.dims)

    @classmethod
    def from_vector(cls, psi, dims: Sequence[int] | None = None) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), dims)

    @classmethod
    def basis(cls, index: int, dims: Sequence[int]) -> "DensityOperator":
        dims = tuple(dims)
        m = np.zeros((math.prod(dims),) * 2, dtype=complex)
        m[index, index] = 1.0
        return cls(m, dims)

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityOperator":
        dims = tuple(dims)
        d = math.prod(dims)
        return cls._trusted(np.eye(d, dtype=complex) / d, dims)

    @classmethod
    def diagonal(cls, probs, dims: Sequence[int] | None = None) -> "DensityOperator":
        return cls(np.diag(np.asarray(probs, dtype=float)), dims)


def _check_same_shape(a: HermitianOperator, b: HermitianOperator) -> None:
    if a.dims != b.dims:
        raise DimensionMismatch(f"dims {a.dims} and {b.dims} differ")


def _wrap(like: HermitianOperator, matrix: np.ndarray, dims: tuple[int, ...], state: bool):
    cls = DensityOperator if state else HermitianOperator
    return cls._trusted(matrix, dims)


def as_state(x: HermitianOperator) -> DensityOperator:
    """Validate and re-type ``x`` as a density operator."""
    if isinstance(x, DensityOperator):
        return x
    return DensityOperator.from_operator(x)


def mixture(states: Sequence[HermitianOperator], weights) -> HermitianOperator:
    """``Σ_j w_j x_j``; returns a DensityOperator when inputs are states and weights a distribution."""
    weights = np.asarray(weights, dtype=float)
    if len(states) != len(weights) or not states:
        raise DimensionMismatch("states and weights must be nonempty and of equal length")
    dims = states[0].dims
    for s in states:
        if s.dims != dims:
            raise DimensionMismatch("mixture components must share dims")
    m = np.tensordot(weights, np.stack([s.matrix for s in states]), axes=1)
    is_state = (all(isinstance(s, DensityOperator) for s in states)
                and np.all(weights >= -1e-15) and abs(weights.sum() - 1.0) <= 1e-10)
    return _wrap(states[0], m, dims, is_state)


# ---------------------------------------------------------------- composition

def tensor(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Kronecker product with concatenated ``dims``."""
    check_dim(a.dim * b.dim, "tensor product")
    both = isinstance(a, DensityOperator) and isinstance(b, DensityOperator)
    return _wrap(a, np.kron(a.matrix, b.matrix), a.dims + b.dims, both)


def tensor_all(ops: Iterable[HermitianOperator]) -> HermitianOperator:
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    total = math.prod(op.dim for op in ops)
    check_dim(total, "tensor product")
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def tensor_power(a: HermitianOperator, n: int) -> HermitianOperator:
    if n < 1:
        raise ValueError("tensor power needs n >= 1")
    check_dim(a.dim ** n, "tensor power")
    return tensor_all([a] * n)


def _validate_factors(x: HermitianOperator, idx: Iterable[int], allow_empty: bool = True) -> list[int]:
    idx = list(idx)
    if len(set(idx)) != len(idx):
        raise BadSubsystem(f"repeated subsystem index in {idx}")
    for i in idx:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < x.n_factors:
            raise BadSubsystem(f"subsystem {i!r} out of range for {x.n_factors} factors")
    if not idx and not allow_empty:
        raise BadSubsystem("empty subsystem selection")
    return sorted(int(i) for i in idx)


def partial_trace(x: HermitianOperator, keep: Iterable[int]) -> HermitianOperator:
    """Trace out every factor not listed in ``keep`` (0-based, order preserved).

    An empty ``keep`` traces everything and yields a 1x1 scalar operator.
    """
    keep = _validate_factors(x, keep)
    dims = x.dims
    n = len(dims)
    drop = [i for i in range(n) if i not in keep]
    if not drop:
        return x
    t = x.matrix.reshape(dims + dims)
    perm = keep + drop
    t = t.transpose(perm + [n + p for p in perm])
    dk = math.prod(dims[i] for i in keep)
    dd = math.prod(dims[i] for i in drop)
    t = t.reshape(dk, dd, dk, dd)
    out = np.einsum("ajbj->ab", t)
    return _wrap(x, out, tuple(dims[i] for i in keep), isinstance(x, DensityOperator))


def trace_out(x: HermitianOperator, remove: Iterable[int]) -> HermitianOperator:
    remove = set(_validate_factors(x, remove))
    return partial_trace(x, [i for i in range(x.n_factors) if i not in remove])


def partial_transpose(x: HermitianOperator, subsystems: Iterable[int] | None = None) -> HermitianOperator:
    """Transpose the indices of the listed factors (default: the last factor)."""
    if x.n_factors < 2 and subsystems is None:
        raise BadSubsystem("partial transpose needs a declared bipartition (>= 2 factors)")
    subsystems = [x.n_factors - 1] if subsystems is None else subsystems
    subsystems = _validate_factors(x, subsystems, allow_empty=False)
    dims = x.dims
    n = len(dims)
    t = x.matrix.reshape(dims + dims)
    axes = list(range(2 * n))
    for i in subsystems:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    out = t.transpose(axes).reshape(x.dim, x.dim)
    return HermitianOperator._trusted(out, dims)


# ---------------------------------------------------------------- spectra

def eig_hermitian(x: HermitianOperator, method: str = "lapack") -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and a unitary of matching eigenvectors."""
    w, v = spectral.eigh(x.matrix, method=method)
    return w[::-1].copy(), v[:, ::-1].copy()


def matrix_log2(x: HermitianOperator, support_only: bool = True,
                cutoff: float = SUPPORT_CUTOFF) -> HermitianOperator:
    """Base-2 logarithm of a PSD operator.

    Eigenvalues at or below ``cutoff`` are mapped to 0 when ``support_only``;
    otherwise their presence is an error, since the log would be unbounded.
    """
    w, v = spectral.eigh(x.matrix)
    if w[0] < -PSD_TOL:
        raise NotPSD(f"minimum eigenvalue {w[0]!r} below -{PSD_TOL}")
    if not support_only and w[0] <= cutoff:
        raise NotPSD("operator is singular; use support_only=True")
    lw = spectral.log2_on_support(w, cutoff)
    return HermitianOperator._trusted((v * lw) @ v.conj().T, x.dims)


def positive_negative_parts(x: HermitianOperator) -> tuple[HermitianOperator, HermitianOperator]:
    """``(X_+, X_-)`` with ``X = X_+ - X_-`` and orthogonal supports."""
    w, v = spectral.eigh(x.matrix)
    pos = (v * np.maximum(w, 0.0)) @ v.conj().T
    neg = (v * np.maximum(-w, 0.0)) @ v.conj().T
    return HermitianOperator._trusted(pos, x.dims), HermitianOperator._trusted(neg, x.dims)


def trace_norm(x: HermitianOperator) -> float:
    return float(np.sum(np.abs(x.eigvals())))


def support_projector(x: HermitianOperator, tol: float = SUPPORT_CUTOFF) -> HermitianOperator:
    w, v = spectral.eigh(x.matrix)
    if w[0] < -PSD_TOL:
        raise NotPSD(f"minimum eigenvalue {w[0]!r} below -{PSD_TOL}")
    cols = v[:, w > tol]
    return HermitianOperator._trusted(cols @ cols.conj().T, x.dims)


def support_contained(a: HermitianOperator, b: HermitianOperator, tol: float = SUPPORT_CUTOFF) -> bool:
    """Whether ``supp(a) ⊆ supp(b)``, i.e. ``||(I - P_b) P_a||_∞ <= tol``."""
    _check_same_shape(a, b)
    pa = support_projector(a, tol).matrix
    pb = support_projector(b, tol).matrix
    leak = pa - pb @ pa
    return float(np.linalg.norm(leak, 2)) <= tol


def support_sensitive(a: HermitianOperator, b: HermitianOperator) -> bool:
    """True when the containment verdict differs between the two declared cutoffs."""
    return (support_contained(a, b, SUPPORT_CUTOFF)
            != support_contained(a, b, SUPPORT_CUTOFF_COARSE))


def min_eig(x: HermitianOperator) -> float:
    return float(x.eigvals()[0])


# ---------------------------------------------------------------- permutations

@dataclass(frozen=True)
class Permutation:
    """Bijection on tensor-factor positions ``0..n-1``.

    Factor ``k`` of the input ends up at position ``mapping[k]``, so that
    ``U_π (x_0 ⊗ ... ⊗ x_{n-1}) U_π†`` has ``x_k`` at slot ``mapping[k]``.
    """

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"{self.mapping} is not a bijection on 0..{len(m) - 1}")
        object.__setattr__(self, "mapping", m)

    @property
    def n(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for k, j in enumerate(self.mapping):
            inv[j] = k
        return Permutation(tuple(inv))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def swap(cls, n: int, i: int, j: int) -> "Permutation":
        m = list(range(n))
        m[i], m[j] = m[j], m[i]
        return cls(tuple(m))


def all_permutations(n: int) -> list[Permutation]:
    return [Permutation(p) for p in itertools.permutations(range(n))]


def permute(x: HermitianOperator, p: Permutation) -> HermitianOperator:
    """``U_π x U_π†`` computed by axis transposition (no unitary is formed)."""
    if p.n != x.n_factors:
        raise BadSubsystem(f"permutation on {p.n} factors applied to {x.n_factors}")
    dims = x.dims
    n = len(dims)
    inv = p.inverse().mapping
    t = x.matrix.reshape(dims + dims)
    t = t.transpose(list(inv) + [n + i for i in inv])
    new_dims = tuple(dims[i] for i in inv)
    return _wrap(x, t.reshape(x.dim, x.dim), new_dims, isinstance(x, DensityOperator))


def permutation_unitary(p: Permutation, local_dim: int) -> np.ndarray:
    """The unitary ``U_π`` on ``(C^local_dim)^{⊗n}`` as a dense array."""
    n = p.n
    total = local_dim ** n
    check_dim(total, "permutation unitary")
    inv = p.inverse().mapping
    eye = np.eye(total, dtype=complex).reshape((local_dim,) * n + (total,))
    return eye.transpose(list(inv) + [n]).reshape(total, total)


def symmetrize(x: HermitianOperator, samples: int | None = None,
               rng: np.random.Generator | None = None) -> HermitianOperator:
    """Average of ``U_π x U_π†`` over the symmetric group on the factors.

    The full group is used for up to six factors. Beyond that a ``samples``
    count (and optionally ``rng``) must be supplied to average over random
    permutations instead.
    """
    n = x.n_factors
    if len(set(x.dims)) > 1:
        raise BadSubsystem("symmetrization needs equal local dimensions")
    if n <= 1:
        return x
    if samples is None:
        if n > FULL_GROUP_MAX_N:
            raise CapExceeded(f"full symmetric group on {n} factors exceeds {FULL_GROUP_MAX_N}; pass samples=")
        perms = itertools.permutations(range(n))
        count = math.factorial(n)
    else:
        rng = np.random.default_rng() if rng is None else rng
        perms = (tuple(rng.permutation(n)) for _ in range(samples))
        count = samples
    dims = x.dims
    t = x.matrix.reshape(dims + dims)
    acc = np.zeros_like(t)
    for perm in perms:
        acc += t.transpose(list(perm) + [n + i for i in perm])
    acc /= count
    return _wrap(x, acc.reshape(x.dim, x.dim), dims, isinstance(x, DensityOperator))


def is_permutation_invariant(x: HermitianOperator, atol: float = 1e-8) -> bool:
    n = x.n_factors
    if n <= 1:
        return True
    # adjacent transpositions generate S_n
    for i in range(n - 1):
        if not permute(x, Permutation.swap(n, i, i + 1)).allclose(x, atol):
            return False
    return True


# ---------------------------------------------------------------- channels

def depolarise(x: HermitianOperator, delta: float, tau: DensityOperator) -> HermitianOperator:
    """``(1-δ) X + δ Tr[X] τ``; equals ``(1-δ) X + δ τ`` on unit-trace inputs."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    _check_same_shape(x, tau)
    m = (1.0 - delta) * x.matrix + delta * x.trace() * tau.matrix
    return _wrap(x, m, x.dims, isinstance(x, DensityOperator))


def insert_state(x: HermitianOperator, state: HermitianOperator, positions: Sequence[int]) -> HermitianOperator:
    """Place ``state`` on the factor slots ``positions`` of ``x ⊗ state``.

    The result has ``x.n_factors + state.n_factors`` factors; the factors of
    ``x`` fill the remaining slots in their original order.
    """
    positions = list(positions)
    total = x.n_factors + state.n_factors
    if len(positions) != state.n_factors or len(set(positions)) != len(positions):
        raise BadSubsystem("positions must list one distinct slot per factor of state")
    if any(not 0 <= p < total for p in positions):
        raise BadSubsystem(f"positions {positions} out of range for {total} factors")
    rest = [i for i in range(total) if i not in positions]
    joint = tensor(x, state)
    return permute(joint, Permutation(tuple(rest + positions)))


def replace_factors(x: HermitianOperator, positions: Sequence[int], state: HermitianOperator) -> HermitianOperator:
    """Trace out ``positions`` of ``x`` and put ``state`` in their place."""
    reduced = trace_out(x, positions)
    if reduced.n_factors == 0:
        return state
    return insert_state(reduced, state, sorted(positions))


# ---------------------------------------------------------------- JSON I/O

def dumps_operator(x: HermitianOperator) -> str:
    return json.dumps(x.to_dict())


def loads_operator(text: str, state: bool = False) -> HermitianOperator:
    data = json.loads(text)
    return (DensityOperator if state else HermitianOperator).from_dict(data)


def load_operator(path, state: bool = False) -> HermitianOperator:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_operator(fh.read(), state=state)


def save_operator(x: HermitianOperator, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_operator(x))
