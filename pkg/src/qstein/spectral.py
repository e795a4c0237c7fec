"""Hermitian eigendecomposition and spectral calculus on raw arrays.

Two backends are provided. ``"lapack"`` (numpy's ``eigh``) is the default used
by every solver loop; ``"jacobi"`` is a dependency-free cyclic Jacobi sweep
kept as an independent cross-check of the LAPACK path.
"""

from __future__ import annotations

import numpy as np

from .errors import EigFailure

JACOBI_THRESHOLD = 1e-12
JACOBI_MAX_SWEEPS = 100


def jacobi_eigh(a: np.ndarray, threshold: float = JACOBI_THRESHOLD,
                max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Each 2x2 pivot block ``[[a, b], [b*, d]]`` is first made real by the phase
    ``diag(1, exp(-i arg b))`` and then annihilated by a real plane rotation.
    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``threshold * ||A||_F``.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    v : ndarray
        Unitary matrix whose columns are the matching eigenvectors.
    """
    a = np.array(a, dtype=complex)
    a = (a + a.conj().T) / 2
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return np.real(np.diag(a)).copy(), v
    target = threshold * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            w = np.real(np.diag(a))
            order = np.argsort(w, kind="stable")
            return w[order], v[:, order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                r = abs(b)
                if r <= target * 1e-3:
                    continue
                phase = b / r
                app = a[p, p].real
                aqq = a[q, q].real
                zeta = (aqq - app) / (2.0 * r)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    raise EigFailure(f"Jacobi did not converge within {max_sweeps} sweeps (n={n})")


def eigh(a: np.ndarray, method: str = "lapack") -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and eigenvectors of a Hermitian array."""
    if method == "lapack":
        try:
            return np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure is rare
            raise EigFailure(str(exc)) from exc
    if method == "jacobi":
        return jacobi_eigh(a)
    raise ValueError(f"unknown eigensolver {method!r}")


def eigvalsh(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise EigFailure(str(exc)) from exc


def apply_function(a: np.ndarray, fn) -> np.ndarray:
    """``V f(Λ) V†`` for a Hermitian array ``a`` and a vectorised real function."""
    w, v = eigh(a)
    return (v * fn(w)) @ v.conj().T


def min_eig(a: np.ndarray) -> float:
    return float(eigvalsh(a)[0])


def log2_on_support(w: np.ndarray, cutoff: float) -> np.ndarray:
    """Elementwise log2 on eigenvalues above ``cutoff``; zero elsewhere."""
    out = np.zeros_like(w, dtype=float)
    mask = w > cutoff
    out[mask] = np.log2(w[mask])
    return out


def log_derivative_kernel(w: np.ndarray, cutoff: float) -> np.ndarray:
    """First divided differences of the natural log at eigenvalues ``w``.

    ``K[k, l] = (ln w_k - ln w_l) / (w_k - w_l)``, with ``1/w_k`` on (near-)ties.
    Entries touching eigenvalues below ``cutoff`` are set to zero; callers only
    pair the kernel with operators supported where ``w > cutoff``.
    """
    w = np.asarray(w, dtype=float)
    good = w > cutoff
    safe = np.where(good, w, 1.0)
    lw = np.log(safe)
    dw = safe[:, None] - safe[None, :]
    dl = lw[:, None] - lw[None, :]
    close = np.abs(dw) <= 1e-12 * np.maximum(safe[:, None], safe[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(close, 2.0 / (safe[:, None] + safe[None, :]), dl / np.where(close, 1.0, dw))
    k[~good, :] = 0.0
    k[:, ~good] = 0.0
    return k
