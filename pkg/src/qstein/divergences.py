"""Relative entropies, hypothesis-testing errors and certified brackets.

Every value is in bits. A support violation gives ``math.inf``, which is
serialized as the string ``"inf"``. Solver-derived quantities are returned as
:class:`Bracket` objects carrying a certified ``[lower, upper]`` interval and a
description of the objects that certify each end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import expit, logsumexp

from . import spectral
from .errors import DimensionMismatch, NoFeasibleTest, NotPSD
from .operators import (
    SUPPORT_CUTOFF,
    SUPPORT_CUTOFF_COARSE,
    DensityOperator,
    HermitianOperator,
    mixture,
    support_contained,
)

INF = math.inf
LN2 = math.log(2.0)
BRACKET_ORDER_TOL = 1e-7
NP_BISECTION_ITERS = 200
NP_GAP_TOL = 1e-8
COMPOSITE_MAX_ITER = 5000
COMPOSITE_DUAL_ITER = 40
COMPOSITE_SMOOTHING = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10)
COMPOSITE_WIDTH_TOL = 1e-8
PINCH_GROUP_GAP = 1e-9
HULL_GAP_TOL = 1e-6
MAX_LIST = 64


# ---------------------------------------------------------------- helpers

def encode_float(x: float):
    """JSON-safe rendering: infinities become ``"inf"`` / ``"-inf"``, NaN becomes ``"nan"``."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def decode_float(x) -> float:
    if isinstance(x, str):
        return {"inf": INF, "-inf": -INF, "nan": math.nan}[x]
    return float(x)


def neg_log2(beta: float) -> float:
    """``-log2(beta)`` with ``beta <= 0`` mapped to ``+inf``."""
    return INF if beta <= 0.0 else -math.log2(beta)


def h2(x: float) -> float:
    """Binary entropy in bits."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def g_afw(x: float) -> float:
    """``(x+1) log2(x+1) - x log2 x``, continuous at ``g(0) = 0``."""
    if x < 0:
        raise ValueError(f"g_afw needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (x + 1) * math.log2(x + 1) - x * math.log2(x)


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return eps


def _same_dims(*ops: HermitianOperator) -> None:
    dims = ops[0].dims
    for op in ops[1:]:
        if op.dims != dims:
            raise DimensionMismatch(f"dims {dims} and {op.dims} differ")


# ---------------------------------------------------------------- brackets

@dataclass(frozen=True)
class Bracket:
    """Certified interval ``lower <= value <= upper`` for a solver quantity.

    ``quantity`` names what is bracketed (``"beta"`` for a type-II error
    probability, ``"bits"`` for a divergence). ``cert`` records the objects
    behind each end, e.g. mixture weights or the feasible test's constraint
    values.
    """

    lower: float
    upper: float
    quantity: str = "bits"
    cert: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lower > self.upper + BRACKET_ORDER_TOL:
            raise ValueError(f"ill-ordered bracket [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        if math.isinf(self.upper) and math.isinf(self.lower):
            return 0.0
        return self.upper - self.lower

    @property
    def mid(self) -> float:
        if math.isinf(self.upper) or math.isinf(self.lower):
            return self.upper if math.isinf(self.lower) else self.lower
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol

    def overlaps(self, other: "Bracket", tol: float = 0.0) -> bool:
        return self.lower <= other.upper + tol and other.lower <= self.upper + tol

    def scaled(self, factor: float) -> "Bracket":
        if factor < 0:
            raise ValueError("scale factor must be nonnegative")
        return Bracket(self.lower * factor, self.upper * factor, self.quantity, self.cert)

    def to_bits(self) -> "Bracket":
        """Map a bracket on ``beta`` to one on ``-log2 beta`` (ends swap)."""
        if self.quantity != "beta":
            raise ValueError("only beta brackets convert to bits")
        return Bracket(neg_log2(self.upper), neg_log2(max(self.lower, 0.0)), "bits", self.cert)

    def to_dict(self) -> dict:
        return {"lower": encode_float(self.lower), "upper": encode_float(self.upper),
                "quantity": self.quantity, "cert": self.cert}

    @classmethod
    def from_dict(cls, data: dict) -> "Bracket":
        return cls(decode_float(data["lower"]), decode_float(data["upper"]),
                   data.get("quantity", "bits"), data.get("cert", {}))

    @classmethod
    def exact(cls, value: float, quantity: str = "bits", cert: dict | None = None) -> "Bracket":
        return cls(value, value, quantity, cert or {})


DivergenceBracket = Bracket


# ---------------------------------------------------------------- classical tools

def kl_bits(p, q, cutoff: float = 0.0) -> float:
    """Classical relative entropy ``sum p log2(p/q)``; ``inf`` if ``p`` charges a zero of ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    on = p > cutoff
    if np.any(q[on] <= 0.0):
        return INF
    return float(np.sum(p[on] * (np.log2(p[on]) - np.log2(q[on]))))


def classical_np_beta(p, q, eps: float) -> float:
    """Optimal type-II error of a randomized likelihood-ratio test between distributions.

    Outcomes are admitted in decreasing order of ``p/q`` (outcomes with
    ``q = 0`` first) until the acceptance mass under ``p`` reaches ``1 - eps``;
    the boundary ratio class is accepted with a common fractional weight.
    """
    eps = _check_eps(eps)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    need = 1.0 - eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, p / np.where(q > 0, q, 1.0), np.where(p > 0, INF, 0.0))
    # group equal ratios so ties share one randomization weight
    order = np.argsort(-ratio, kind="stable")
    r_sorted = ratio[order]
    acc_p = 0.0
    beta = 0.0
    i = 0
    n = len(order)
    while i < n and acc_p < need:
        j = i
        while j + 1 < n and (r_sorted[j + 1] == r_sorted[i]
                             or (np.isfinite(r_sorted[i])
                                 and abs(r_sorted[j + 1] - r_sorted[i]) <= 1e-12 * max(1.0, r_sorted[i]))):
            j += 1
        idx = order[i:j + 1]
        gp = float(p[idx].sum())
        gq = float(q[idx].sum())
        if gp <= 0.0:
            i = j + 1
            continue
        frac = min(1.0, (need - acc_p) / gp)
        acc_p += frac * gp
        beta += frac * gq
        i = j + 1
    return beta


def classical_dh_bits(p, q, eps: float) -> float:
    return neg_log2(classical_np_beta(p, q, eps))


def iid_distribution(p, n: int) -> np.ndarray:
    """Outcome distribution of ``n`` i.i.d. draws from ``p`` over ``len(p)**n`` sequences."""
    out = np.ones(1)
    p = np.asarray(p, dtype=float)
    for _ in range(n):
        out = np.kron(out, p)
    return out


# ---------------------------------------------------------------- Umegaki

def umegaki(rho: DensityOperator, sigma: DensityOperator, tol: float = SUPPORT_CUTOFF_COARSE) -> float:
    """``Tr[ρ (log2 ρ - log2 σ)]``, or ``inf`` when ``supp ρ ⊄ supp σ`` at ``tol``."""
    _same_dims(rho, sigma)
    wr, _ = spectral.eigh(rho.matrix)
    ws, vs = spectral.eigh(sigma.matrix)
    if wr[0] < -1e-9 or ws[0] < -1e-9:
        raise NotPSD("umegaki needs PSD arguments")
    if not support_contained(rho, sigma, tol):
        return INF
    ent = float(np.sum(wr[wr > SUPPORT_CUTOFF] * np.log2(wr[wr > SUPPORT_CUTOFF])))
    diag = np.real(np.einsum("ik,ij,jk->k", vs.conj(), rho.matrix, vs))
    cross = float(np.sum(diag * spectral.log2_on_support(ws, SUPPORT_CUTOFF)))
    return ent - cross


def umegaki_support_report(rho: DensityOperator, sigma: DensityOperator) -> dict:
    """Value at both support cutoffs, flagging cases where the verdict depends on it."""
    fine = umegaki(rho, sigma, SUPPORT_CUTOFF)
    coarse = umegaki(rho, sigma, SUPPORT_CUTOFF_COARSE)
    return {"value": coarse, "value_fine_cutoff": fine,
            "support_sensitive": math.isinf(fine) != math.isinf(coarse)}


# ---------------------------------------------------------------- Neyman–Pearson

class NPResult(NamedTuple):
    """Optimal simple test and its certificate.

    ``beta`` is the type-II error of ``test``; ``lower`` is the dual value at
    multiplier ``multiplier``; ``gap = beta - lower`` is the optimality residual.
    """

    test: HermitianOperator
    beta: float
    lower: float
    multiplier: float
    gap: float

    @property
    def dh_bits(self) -> float:
        return neg_log2(self.beta)


def _np_dual(rho_m: np.ndarray, sigma_m: np.ndarray, s: float, eps: float) -> float:
    w = spectral.eigvalsh(rho_m - s * sigma_m)
    return (1.0 - eps - float(np.sum(w[w > 0]))) / s


def _accept_mass(rho_m: np.ndarray, sigma_m: np.ndarray, s: float) -> float:
    w, v = spectral.eigh(rho_m - s * sigma_m)
    pos = v[:, w > 0]
    return float(np.real(np.einsum("ik,ij,jk->", pos.conj(), rho_m, pos)))


def _greedy_test(rho_m: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    """Fill the eigenbasis of ``x`` from the top until ``Tr[ρE] = 1 - eps``.

    The eigenvalue group straddling the threshold receives one common
    fractional weight.
    """
    w, v = spectral.eigh(x)
    w = w[::-1]
    v = v[:, ::-1]
    mass = np.real(np.einsum("ik,ij,jk->k", v.conj(), rho_m, v))
    need = 1.0 - eps
    cum = np.cumsum(mass)
    k = int(np.searchsorted(cum, need - 1e-15))
    k = min(k, len(w) - 1)
    tie = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    group = np.abs(w - w[k]) <= tie
    above = (w > w[k]) & ~group
    weights = above.astype(float)
    gmass = float(mass[group].sum())
    if gmass > 0:
        weights[group] = np.clip((need - float(mass[above].sum())) / gmass, 0.0, 1.0)
    return (v * weights) @ v.conj().T


def neyman_pearson_simple(rho: DensityOperator, sigma: DensityOperator, eps: float,
                          iters: int = NP_BISECTION_ITERS) -> NPResult:
    """Minimal ``Tr[σE]`` over ``0 <= E <= I`` with ``Tr[ρE] >= 1 - eps``.

    The multiplier ``s`` in ``ρ - sσ`` is found by bisection on
    ``[0, 2 λmax(ρ)/λmin⁺(σ)]`` (doubled if needed); the test fills the
    eigenbasis of ``ρ - sσ``. The lower bound is the Lagrange dual value
    ``(1 - eps - Tr(ρ - sσ)_+) / s``.
    """
    eps = _check_eps(eps)
    _same_dims(rho, sigma)
    r = rho.matrix
    s_m = sigma.matrix
    ws, vs = spectral.eigh(s_m)
    ker = vs[:, ws <= SUPPORT_CUTOFF]
    if ker.shape[1]:
        ker_mass = float(np.real(np.einsum("ik,ij,jk->", ker.conj(), r, ker)))
        if ker_mass >= 1.0 - eps:
            test = HermitianOperator._trusted(ker @ ker.conj().T, rho.dims)
            return NPResult(test, 0.0, 0.0, INF, 0.0)
    need = 1.0 - eps
    lam_max = float(spectral.eigvalsh(r)[-1])
    lam_min_pos = float(ws[ws > SUPPORT_CUTOFF][0])
    hi = 2.0 * lam_max / lam_min_pos
    while _accept_mass(r, s_m, hi) > need:
        hi *= 2.0
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _accept_mass(r, s_m, mid) >= need:
            lo = mid
        else:
            hi = mid
    best = None
    for s in {lo, hi, 0.5 * (lo + hi)}:
        if s <= 0:
            continue
        e = _greedy_test(r, r - s * s_m, eps)
        beta = float(np.real(np.vdot(s_m.conj().T, e)))
        lower = _np_dual(r, s_m, s, eps)
        cand = (beta - lower, s, e, beta, lower)
        if best is None or cand[0] < best[0]:
            best = cand
    gap, s, e, beta, lower = best
    lower = min(max(lower, 0.0), beta)
    return NPResult(HermitianOperator._trusted(e, rho.dims), beta, lower, s, max(beta - lower, 0.0))


def dh_eps(rho: DensityOperator, sigma: DensityOperator, eps: float) -> float:
    """Hypothesis-testing relative entropy ``-log2 β`` of the optimal simple test."""
    return neyman_pearson_simple(rho, sigma, eps).dh_bits


# ---------------------------------------------------------------- composite

def _test_values(e: np.ndarray, stack: np.ndarray) -> np.ndarray:
    """``Tr[S_i E]`` for every matrix in ``stack``."""
    return np.real(np.einsum("kij,ji->k", stack, e))


def _repair(e: np.ndarray, rho_stack: np.ndarray, eps: float) -> np.ndarray:
    """Smallest ``θ`` pushing ``(1-θ)E + θI`` into the type-I feasible set."""
    vals = _test_values(e, rho_stack)
    need = 1.0 - eps
    worst = float(vals.min())
    if worst >= need:
        return e
    theta = (need - worst) / (1.0 - worst)
    return (1.0 - theta) * e + theta * np.eye(e.shape[0])


def _clip_test(e: np.ndarray) -> np.ndarray:
    w, v = spectral.eigh((e + e.conj().T) / 2)
    return (v * np.clip(w, 0.0, 1.0)) @ v.conj().T


def _lp_in_basis(v: np.ndarray, rho_stack: np.ndarray, sigma_stack: np.ndarray, eps: float):
    """Best test diagonal in the basis ``v`` by linear programming."""
    a = np.real(np.einsum("ik,nij,jk->nk", v.conj(), rho_stack, v))
    b = np.real(np.einsum("ik,nij,jk->nk", v.conj(), sigma_stack, v))
    d = v.shape[1]
    # variables (e_1..e_d, beta); minimize beta
    c = np.zeros(d + 1)
    c[-1] = 1.0
    a_ub = np.vstack([np.hstack([-a, np.zeros((a.shape[0], 1))]),
                      np.hstack([b, -np.ones((b.shape[0], 1))])])
    b_ub = np.concatenate([-(1.0 - eps) * np.ones(a.shape[0]), np.zeros(b.shape[0])])
    bounds = [(0.0, 1.0)] * d + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    e = (v * np.clip(res.x[:d], 0.0, 1.0)) @ v.conj().T
    return e


def _composite_dual_value(mu: np.ndarray, q: np.ndarray, rho_stack, sigma_stack, eps: float) -> float:
    """Weak-duality value ``(1-ε) Σμ - Tr[(Σ μ_i ρ_i - Σ q_j σ_j)_+]`` for ``μ >= 0``, ``q`` in the simplex."""
    x = np.tensordot(mu, rho_stack, axes=1) - np.tensordot(q, sigma_stack, axes=1)
    w = spectral.eigvalsh(x)
    return (1.0 - eps) * float(mu.sum()) - float(w[w > 0].sum())


def _smoothed_dual(rho_stack, sigma_stack, eps: float, mu0: np.ndarray, q0: np.ndarray, offer_basis):
    """Maximize the dual with ``x_+`` replaced by ``t log(1 + e^{x/t})`` for decreasing ``t``.

    The smoothed objective is a lower bound on the exact dual minus
    ``t d ln 2``; every stage is re-evaluated exactly, so only exact values
    are kept. ``q`` is parametrized by a softmax. Each stage's eigenbasis is
    handed to ``offer_basis`` for primal recovery.
    """
    na, nb = len(rho_stack), len(sigma_stack)

    def unpack(x):
        mu = np.clip(x[:na], 0.0, None)
        q = np.exp(x[na:] - logsumexp(x[na:])) if nb > 1 else np.ones(1)
        return mu, q

    best = (_composite_dual_value(mu0, q0, rho_stack, sigma_stack, eps), mu0, q0)
    x = np.concatenate([mu0, np.log(np.maximum(q0, 1e-300))])
    for t in COMPOSITE_SMOOTHING:
        def f(x, t=t):
            mu, q = unpack(x)
            w, v = spectral.eigh(np.tensordot(mu, rho_stack, axes=1) - np.tensordot(q, sigma_stack, axes=1))
            val = (1.0 - eps) * mu.sum() - t * np.logaddexp(0.0, w / t).sum()
            soft = (v * expit(w / t)) @ v.conj().T
            g_mu = (1.0 - eps) - _test_values(soft, rho_stack)
            g_q = _test_values(soft, sigma_stack)
            g_z = q * (g_q - q @ g_q) if nb > 1 else np.zeros(nb)
            return -val, -np.concatenate([g_mu, g_z])

        res = minimize(f, x, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * na + [(None, None)] * nb,
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        x = res.x
        mu, q = unpack(x)
        val = _composite_dual_value(mu, q, rho_stack, sigma_stack, eps)
        if val > best[0]:
            best = (val, mu, q)
        _, v = spectral.eigh(np.tensordot(mu, rho_stack, axes=1) - np.tensordot(q, sigma_stack, axes=1))
        offer_basis(v)
    return best


def dh_eps_composite(a_ext: Sequence[DensityOperator], b_ext: Sequence[DensityOperator], eps: float,
                     max_iter: int = COMPOSITE_MAX_ITER, dual_iter: int = COMPOSITE_DUAL_ITER,
                     width_tol: float = COMPOSITE_WIDTH_TOL) -> Bracket:
    """Bracket on ``min_E max_j Tr[σ_j E]`` subject to ``min_i Tr[ρ_i E] >= 1 - eps``.

    Lower end: weak duality. For mixture weights ``p`` over ``a_ext`` and ``q``
    over ``b_ext`` the simple Neyman–Pearson dual value between the two
    mixtures lower-bounds the composite optimum; weights are improved by a
    short exponentiated ascent, then by maximizing a softplus-smoothed dual
    whose stages are all re-evaluated exactly.

    Upper end: an explicitly feasible test. Candidates come from a linear
    program over tests diagonal in the eigenbasis of each dual iterate's
    ``Σ μ_i ρ_i - Σ q_j σ_j``, refined by a penalized projected subgradient method on
    ``0 <= E <= I`` with feasibility restored by mixing toward ``I``.

    Returns a bracket with ``quantity="beta"``; use :meth:`Bracket.to_bits`
    for ``-log2 β``.
    """
    eps = _check_eps(eps)
    a_ext = list(a_ext)
    b_ext = list(b_ext)
    if not a_ext or not b_ext:
        raise ValueError("composite test needs nonempty families")
    if len(a_ext) > MAX_LIST or len(b_ext) > MAX_LIST:
        raise ValueError(f"family lists are capped at {MAX_LIST} extreme points")
    _same_dims(*a_ext, *b_ext)
    dims = a_ext[0].dims
    rho_stack = np.stack([x.matrix for x in a_ext])
    sigma_stack = np.stack([x.matrix for x in b_ext])
    need = 1.0 - eps
    d = rho_stack.shape[1]

    best_upper = INF
    best_e = None

    def offer(e):
        nonlocal best_upper, best_e
        if e is None:
            return
        e = _repair(_clip_test(e), rho_stack, eps)
        if _test_values(e, rho_stack).min() < need - 1e-12:
            return
        val = float(_test_values(e, sigma_stack).max())
        if val < best_upper:
            best_upper, best_e = val, e

    offer(np.eye(d))
    if best_e is None:
        raise NoFeasibleTest("E = I violates the type-I constraint; inputs are not states")

    p = np.full(len(a_ext), 1.0 / len(a_ext))
    q = np.full(len(b_ext), 1.0 / len(b_ext))
    best_lower = 0.0
    best_pq = (p.copy(), q.copy())
    smooth_dual = None
    single = len(a_ext) == 1 and len(b_ext) == 1
    step = 1.0
    for k in range(1 if single else dual_iter):
        rho_bar = DensityOperator._trusted(np.tensordot(p, rho_stack, axes=1), dims)
        sigma_bar = DensityOperator._trusted(np.tensordot(q, sigma_stack, axes=1), dims)
        res = neyman_pearson_simple(rho_bar, sigma_bar, eps)
        if res.lower > best_lower:
            best_lower = res.lower
            best_pq = (p.copy(), q.copy())
        e = res.test.matrix
        offer(e)
        if math.isfinite(res.multiplier):
            x = rho_bar.matrix - res.multiplier * sigma_bar.matrix
            _, v = spectral.eigh(x)
            offer(_lp_in_basis(v, rho_stack, sigma_stack, eps))
        if best_upper - best_lower <= width_tol:
            break
        # ascend: weight type-I states the test accepts least, type-II states it accepts most
        ga = _test_values(e, rho_stack)
        gb = _test_values(e, sigma_stack)
        eta = step / math.sqrt(k + 1)
        if len(a_ext) > 1:
            p = p * np.exp(-eta * (ga - ga.min()) / max(res.beta, 1e-3) * 4.0)
            p /= p.sum()
        if len(b_ext) > 1:
            q = q * np.exp(eta * (gb - gb.max()) / max(res.beta, 1e-3) * 4.0)
            q /= q.sum()

    if best_upper - best_lower > width_tol and not single:
        p, q = best_pq
        rho_bar = DensityOperator._trusted(np.tensordot(p, rho_stack, axes=1), dims)
        sigma_bar = DensityOperator._trusted(np.tensordot(q, sigma_stack, axes=1), dims)
        s = neyman_pearson_simple(rho_bar, sigma_bar, eps).multiplier
        # the simple dual at multiplier s is the composite dual at mu = p / s
        mu0 = p / s if math.isfinite(s) and s > 0 else p
        val, mu, q = _smoothed_dual(rho_stack, sigma_stack, eps, mu0, q,
                                    lambda v: offer(_lp_in_basis(v, rho_stack, sigma_stack, eps)))
        if val > best_lower:
            best_lower = val
            smooth_dual = (mu.tolist(), q.tolist())
    iters = 0
    if best_upper - best_lower > width_tol and not single:
        iters = _subgradient_refine(best_e, rho_stack, sigma_stack, eps, max_iter, offer,
                                    lambda: best_upper - best_lower <= width_tol)
    lower = min(best_lower, best_upper)
    at = _test_values(best_e, rho_stack)
    bt = _test_values(best_e, sigma_stack)
    cert = {
        "dual_weights_a": best_pq[0].tolist(),
        "dual_weights_b": best_pq[1].tolist(),
        "test_type1_acceptance": at.tolist(),
        "test_type2_values": bt.tolist(),
        "subgradient_iterations": iters,
        "dual_multipliers": smooth_dual,
    }
    return Bracket(lower, best_upper, "beta", cert)


def _subgradient_refine(e0, rho_stack, sigma_stack, eps, max_iter, offer, done) -> int:
    need = 1.0 - eps
    e = e0.copy()
    penalty = 1.0
    scale = 0.5
    for k in range(1, max_iter + 1):
        av = _test_values(e, rho_stack)
        bv = _test_values(e, sigma_stack)
        j = int(np.argmax(bv))
        grad = sigma_stack[j].copy()
        i = int(np.argmin(av))
        if av[i] < need:
            grad = grad - penalty * rho_stack[i]
        else:
            offer(e)
        e = _clip_test(e - (scale / math.sqrt(k)) * grad)
        if k % 250 == 0:
            if _test_values(e, rho_stack).min() < need - 1e-6:
                penalty *= 2.0
            offer(e)
            if done():
                return k
    offer(e)
    return max_iter


def composite_dh_bits(a_ext, b_ext, eps: float, **kwargs) -> Bracket:
    return dh_eps_composite(a_ext, b_ext, eps, **kwargs).to_bits()


# ---------------------------------------------------------------- pinching

def eigen_groups(w: np.ndarray, gap: float = PINCH_GROUP_GAP) -> list[np.ndarray]:
    """Index groups of ascending eigenvalues whose consecutive gaps are ``<= gap``."""
    groups = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > gap:
            groups.append(np.arange(start, i))
            start = i
    return groups


def pinch(rho: DensityOperator, sigma: DensityOperator, gap: float = PINCH_GROUP_GAP) -> DensityOperator:
    """``Σ_λ P_λ ρ P_λ`` over the (grouped) eigenprojectors of ``σ``."""
    _same_dims(rho, sigma)
    w, v = spectral.eigh(sigma.matrix)
    if w[0] < -1e-9:
        raise NotPSD("pinching reference must be PSD")
    out = np.zeros_like(rho.matrix)
    for g in eigen_groups(w, gap):
        vg = v[:, g]
        out += vg @ (vg.conj().T @ rho.matrix @ vg) @ vg.conj().T
    return DensityOperator._trusted(out, rho.dims)


def pinched_measurement(rho: DensityOperator, sigma: DensityOperator,
                        gap: float = PINCH_GROUP_GAP) -> tuple[np.ndarray, np.ndarray]:
    """Outcome distributions of ``ρ`` and ``σ`` under a projective eigenbasis measurement of ``σ``.

    Inside each eigenspace of ``σ`` the basis diagonalizes the compressed
    ``ρ``, so the measured pair carries all of ``D(pinch(ρ)‖σ)``.
    """
    _same_dims(rho, sigma)
    w, v = spectral.eigh(sigma.matrix)
    p_out, q_out = [], []
    for g in eigen_groups(w, gap):
        vg = v[:, g]
        block = vg.conj().T @ rho.matrix @ vg
        bw = spectral.eigvalsh(block)
        lam = float(np.mean(w[g]))
        p_out.extend(np.clip(bw, 0.0, None))
        q_out.extend([max(lam, 0.0)] * len(g))
    return np.asarray(p_out), np.asarray(q_out)


def measured_relent_pinched(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Classical KL of the pinched eigenbasis measurement; a lower bound on ``D(ρ‖σ)``."""
    p, q = pinched_measurement(rho, sigma)
    bad = (q <= SUPPORT_CUTOFF) & (p > SUPPORT_CUTOFF_COARSE)
    if np.any(bad):
        return INF
    on = (p > 0) & (q > SUPPORT_CUTOFF)
    return float(np.sum(p[on] * (np.log2(p[on]) - np.log2(q[on]))))


def pinching_constant(d: int, n: int) -> float:
    """``(d-1)(d/2+1) log2(n+1)``, the spectral-count penalty for symmetric ``σ_n``."""
    return (d - 1) * (d / 2 + 1) * math.log2(n + 1)


# ---------------------------------------------------------------- hull minimization

def _log2_and_kernel(m: np.ndarray):
    w, v = spectral.eigh(m)
    return w, v, spectral.log2_on_support(w, SUPPORT_CUTOFF), spectral.log_derivative_kernel(w, SUPPORT_CUTOFF)


def _relent_value_grad_sigma(rho_m: np.ndarray, ent_rho: float, sigma_m: np.ndarray,
                             stack: np.ndarray) -> tuple[float, np.ndarray]:
    """``D(ρ‖σ)`` and its gradient in the mixture weights generating ``σ`` from ``stack``."""
    w, v, lw, kern = _log2_and_kernel(sigma_m)
    r = v.conj().T @ rho_m @ v
    rd = np.real(np.diag(r))
    if np.any((w <= SUPPORT_CUTOFF) & (rd > SUPPORT_CUTOFF_COARSE)):
        return INF, np.zeros(len(stack))
    value = ent_rho - float(np.sum(rd * lw))
    # Fréchet derivative of log pulled back to the original basis
    g = v @ (r * kern.T) @ v.conj().T
    grad = -np.real(np.einsum("ji,nij->n", g, stack)) / LN2
    return value, grad


def _entropy_term(rho_m: np.ndarray) -> float:
    w = spectral.eigvalsh(rho_m)
    w = w[w > SUPPORT_CUTOFF]
    return float(np.sum(w * np.log2(w)))


def _eg_simplex(fun, w0: np.ndarray, gap_tol: float, max_iter: int):
    """Exponentiated-gradient minimization on the simplex with Armijo backtracking.

    ``fun(w) -> (value, grad)``. Returns ``(w, value, fw_gap, iterations)``
    where ``fw_gap = <grad, w> - min(grad)`` bounds ``value - min`` for convex ``fun``.
    """
    return _eg_blocks(fun, w0, [slice(0, len(w0))], gap_tol, max_iter)


def _fw_gap(grad: np.ndarray, z: np.ndarray, blocks) -> float:
    return float(sum(grad[b] @ z[b] - grad[b].min() for b in blocks))


def _eg_run(fun, z, val, grad, blocks, gap_tol, max_iter):
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if _fw_gap(grad, z, blocks) <= gap_tol:
            break
        g = grad.copy()
        for b in blocks:
            g[b] -= g[b].min()
        while True:
            trial = z * np.exp(-step * g)
            for b in blocks:
                trial[b] /= trial[b].sum()
            tval, tgrad = fun(trial)
            if tval <= val - 1e-4 * float(grad @ (z - trial)) or step < 1e-12:
                break
            step *= 0.5
        if tval > val:
            break
        z, val, grad = trial, tval, tgrad
        step = min(step * 2.0, 1e6)
    return z, val, grad, it


def _slsqp_polish(fun, z, val, grad, blocks):
    """Quasi-Newton refinement on the product of simplices; keeps the start if it does not improve."""
    cons = []
    for b in blocks:
        row = np.zeros(len(z))
        row[b] = 1.0
        cons.append({"type": "eq", "fun": (lambda x, r=row: r @ x - 1.0), "jac": (lambda x, r=row: r)})

    def f(x):
        v, g = fun(np.clip(x, 0.0, None))
        return (v, g) if math.isfinite(v) else (1e300, np.zeros_like(x))

    try:
        res = minimize(f, z, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * len(z),
                       constraints=cons, options={"ftol": 1e-15, "maxiter": 200})
    except (ValueError, np.linalg.LinAlgError):
        return z, val, grad
    x = np.clip(res.x, 0.0, None)
    for b in blocks:
        x[b] /= x[b].sum()
    # keep strictly positive weights so multiplicative updates can still move
    x = np.maximum(x, 1e-300)
    xv, xg = fun(x)
    if math.isfinite(xv) and xv <= val:
        return x, xv, xg
    return z, val, grad


def _eg_blocks(fun, z0: np.ndarray, blocks, gap_tol: float, max_iter: int):
    """Exponentiated gradient on a product of simplices, polished by SLSQP.

    A short multiplicative phase finds the active face; a quasi-Newton step
    then converges superlinearly; multiplicative steps resume if the gap
    certificate is still above ``gap_tol``. Returns ``(z, value, gap, iterations)``.
    """
    z = z0.copy()
    val, grad = fun(z)
    z, val, grad, it = _eg_run(fun, z, val, grad, blocks, max(gap_tol, 1e-4), min(max_iter, 500))
    total = it
    for _ in range(3):
        if _fw_gap(grad, z, blocks) <= gap_tol:
            break
        z, val, grad = _slsqp_polish(fun, z, val, grad, blocks)
        z, val, grad, it = _eg_run(fun, z, val, grad, blocks, gap_tol, max(1, min(1000, (max_iter - total) // 3)))
        total += it
    return z, val, max(_fw_gap(grad, z, blocks), 0.0), total


def relent_to_hull(rho: DensityOperator, hull_ext: Sequence[DensityOperator],
                   gap_tol: float = HULL_GAP_TOL, max_iter: int = 20000) -> Bracket:
    """Bracket on ``min_w D(ρ ‖ Σ_j w_j τ_j)`` over the simplex.

    Upper end is the achieved value; lower end subtracts the Frank–Wolfe
    stationarity gap, which bounds the suboptimality of a convex objective.
    """
    hull_ext = list(hull_ext)
    if not hull_ext:
        raise ValueError("hull needs at least one extreme point")
    if len(hull_ext) > MAX_LIST:
        raise ValueError(f"hull lists are capped at {MAX_LIST} extreme points")
    _same_dims(rho, *hull_ext)
    if len(hull_ext) == 1:
        v = umegaki(rho, hull_ext[0])
        return Bracket(v, v, "bits", {"weights": [1.0], "gap": 0.0})
    for j, tau in enumerate(hull_ext):
        if np.allclose(tau.matrix, rho.matrix, atol=1e-13):
            w = np.zeros(len(hull_ext))
            w[j] = 1.0
            return Bracket(0.0, 0.0, "bits", {"weights": w.tolist(), "gap": 0.0})
    stack = np.stack([t.matrix for t in hull_ext])
    rho_m = rho.matrix
    ent = _entropy_term(rho_m)

    def fun(w):
        return _relent_value_grad_sigma(rho_m, ent, np.tensordot(w, stack, axes=1), stack)

    w0 = np.full(len(hull_ext), 1.0 / len(hull_ext))
    if math.isinf(fun(w0)[0]):
        return Bracket(INF, INF, "bits", {"reason": "support of rho not inside the hull's support"})
    w, val, gap, it = _eg_simplex(fun, w0, gap_tol, max_iter)
    lower = max(val - gap, 0.0)
    return Bracket(min(lower, val), val, "bits", {"weights": w.tolist(), "gap": gap, "iterations": it})


def relent_between_hulls(a_ext: Sequence[DensityOperator], b_ext: Sequence[DensityOperator],
                         gap_tol: float = HULL_GAP_TOL, max_iter: int = 20000) -> Bracket:
    """Bracket on ``min D(ρ_p ‖ σ_q)`` jointly over mixtures of ``a_ext`` and ``b_ext``.

    Joint convexity makes the problem convex on the product of simplices; the
    certified lower end subtracts the summed Frank–Wolfe gaps of both blocks.
    """
    a_ext = list(a_ext)
    b_ext = list(b_ext)
    if len(a_ext) == 1:
        br = relent_to_hull(a_ext[0], b_ext, gap_tol, max_iter)
        cert = dict(br.cert)
        cert["weights_a"] = [1.0]
        cert["weights_b"] = cert.pop("weights", None)
        return Bracket(br.lower, br.upper, "bits", cert)
    if len(a_ext) > MAX_LIST or len(b_ext) > MAX_LIST:
        raise ValueError(f"hull lists are capped at {MAX_LIST} extreme points")
    _same_dims(*a_ext, *b_ext)
    sa = np.stack([x.matrix for x in a_ext])
    sb = np.stack([x.matrix for x in b_ext])
    na = len(a_ext)

    def fun(z):
        p, q = z[:na], z[na:]
        rho_m = np.tensordot(p, sa, axes=1)
        sigma_m = np.tensordot(q, sb, axes=1)
        wr, vr, lr, _ = _log2_and_kernel(rho_m)
        ent = float(np.sum(wr[wr > SUPPORT_CUTOFF] * lr[wr > SUPPORT_CUTOFF]))
        val, gq = _relent_value_grad_sigma(rho_m, ent, sigma_m, sb)
        if math.isinf(val):
            return INF, np.zeros(len(z))
        log_rho = (vr * lr) @ vr.conj().T
        ws, vs = spectral.eigh(sigma_m)
        log_sigma = (vs * spectral.log2_on_support(ws, SUPPORT_CUTOFF)) @ vs.conj().T
        gp = np.real(np.einsum("nij,ji->n", sa, log_rho - log_sigma)) + 1.0 / LN2
        return val, np.concatenate([gp, gq])

    z = np.concatenate([np.full(na, 1.0 / na), np.full(len(b_ext), 1.0 / len(b_ext))])
    val, grad = fun(z)
    if math.isinf(val):
        return Bracket(INF, INF, "bits", {"reason": "support of the null hull not inside the alternative hull"})
    z, val, gap, it = _eg_product(fun, z, na, gap_tol, max_iter)
    lower = max(val - gap, 0.0)
    return Bracket(min(lower, val), val, "bits",
                   {"weights_a": z[:na].tolist(), "weights_b": z[na:].tolist(), "gap": gap, "iterations": it})


def _eg_product(fun, z0: np.ndarray, na: int, gap_tol: float, max_iter: int):
    """Exponentiated-gradient descent on a product of two simplices."""
    return _eg_blocks(fun, z0, [slice(0, na), slice(na, len(z0))], gap_tol, max_iter)
