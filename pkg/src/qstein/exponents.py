"""Finite-n Stein-exponent estimates between composite hypothesis families."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spectral
from .divergences import (
    Bracket,
    dh_eps_composite,
    relent_between_hulls,
)
from .errors import CapExceeded
from .families import (
    DiscreteMeasure,
    StateFamily,
    av_hull_symmetric_decomposition,
    enumerate_types,
    iid_mixture_state,
)
from .operators import SUPPORT_CUTOFF, SUPPORT_CUTOFF_COARSE, DensityOperator, mixture, tensor_power
from .reports import CheckReport, inequality_slack

CSV_COLUMNS = ("n", "beta_lower", "beta_upper", "rate_lower", "rate_upper", "relent_lower", "relent_upper")
MAX_BASEL = 64


def _level(seq, n: int) -> StateFamily:
    if isinstance(seq, StateFamily):
        return seq.at(n)
    return seq(n)


def _materialize(fam: StateFamily) -> list[DensityOperator]:
    return fam.spanning_points()


def beta_eps_families(a: StateFamily, b: StateFamily, eps: float, **solver) -> Bracket:
    """Bracket on the optimal worst-case type-II error between two families at their ``n``.

    ``AVProduct`` families contribute their type-class states; this is exact
    when the other family is permutation-closed and convex, since an optimal
    test can then be taken permutation invariant.
    """
    return dh_eps_composite(_materialize(a), _materialize(b), eps, **solver)


def alternative_points(b_base: Sequence[DensityOperator], n: int, mode: str) -> list[DensityOperator]:
    """Spanning points of the convexified alternative at ``n`` copies."""
    if mode == "iid":
        return [tensor_power(s, n) for s in b_base]
    if mode == "av":
        return [g for _, g in av_hull_symmetric_decomposition(b_base, n)]
    raise ValueError(f"mode must be 'iid' or 'av', got {mode!r}")


@dataclass
class ScanRow:
    n: int
    beta: Bracket | None
    relent: Bracket | None

    @property
    def rate(self) -> Bracket | None:
        if self.beta is None:
            return None
        return self.beta.to_bits().scaled(1.0 / self.n)

    @property
    def relent_rate(self) -> Bracket | None:
        return None if self.relent is None else self.relent.scaled(1.0 / self.n)


@dataclass
class ExponentScan:
    """Per-n brackets on ``-(1/n) log2 β_ε`` and on ``(1/n) D(A_n ‖ co B_n)``."""

    scenario: str
    eps: float | None
    mode: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("scan n values must be strictly increasing")

    @property
    def ns(self) -> list[int]:
        return [r.n for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            beta, rate, rel = r.beta, r.rate, r.relent_rate
            w.writerow([r.n] + [_fmt(x) for x in (
                beta.lower if beta else None, beta.upper if beta else None,
                rate.lower if rate else None, rate.upper if rate else None,
                rel.lower if rel else None, rel.upper if rel else None)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            rows.append({
                "n": r.n,
                "beta": r.beta.to_dict() if r.beta else None,
                "rate": r.rate.to_dict() if r.rate else None,
                "relent_rate": r.relent_rate.to_dict() if r.relent else None,
            })
        return {"scenario": self.scenario, "eps": self.eps, "mode": self.mode, "n": self.ns,
                "rows": rows, "metadata": self.metadata}


def _fmt(x) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def regularised_relent_scan(a_seq, b_base: Sequence[DensityOperator], mode: str = "iid", n_max: int = 3,
                            eps: float | None = None, n_min: int = 1, scenario: str = "scan",
                            gap_tol: float = 1e-6, **solver) -> ExponentScan:
    """Per-n brackets on the regularised relative entropy and, if ``eps`` is given, on β_ε.

    ``a_seq`` is a :class:`StateFamily` or a callable ``n -> StateFamily``.
    The alternative is the convex hull of ``b_base`` powers (``mode="iid"``)
    or of the arbitrarily varying products (``mode="av"``, represented by its
    type-class states).
    """
    b_base = list(b_base)
    rows = []
    for n in range(n_min, n_max + 1):
        fam = _level(a_seq, n)
        a_pts = _materialize(fam)
        b_pts = alternative_points(b_base, n, mode)
        rel = relent_between_hulls(a_pts, b_pts, gap_tol=gap_tol)
        beta = dh_eps_composite(a_pts, b_pts, eps, **solver) if eps is not None else None
        rows.append(ScanRow(n, beta, rel))
    meta = {"null_kind": _level(a_seq, n_min).kind, "alt_base_size": len(b_base), "hull_gap_tol": gap_tol}
    return ExponentScan(scenario, eps, mode, rows, meta)


# ---------------------------------------------------------------- av <-> iid sandwich

def _mixture_grid(b_base: Sequence[DensityOperator], resolution: int) -> list[DensityOperator]:
    """Mixtures of ``b_base`` with weights on the simplex grid of step ``1/resolution``."""
    out = []
    for v in enumerate_types(len(b_base), resolution):
        w = v.distribution()
        out.append(DiscreteMeasure(b_base, w).barycentre())
    return out


def _segment_hull_lower(a_pts: Sequence[DensityOperator], b_base: Sequence[DensityOperator], n: int,
                        grid: Sequence[DensityOperator], br: Bracket) -> float:
    """Certified lower end of ``min D(co A ‖ co{σ_t^{⊗n} : t in [0, 1]})``, ``σ_t = (1-t) σ_0 + t σ_1``.

    Linearizes the jointly convex objective at the grid optimum and takes the
    Frank–Wolfe gap against the whole segment: ``t -> Tr[M σ_t^{⊗n}]`` is a
    polynomial of degree ``n``, minimized exactly through the roots of its
    derivative.
    """
    p = np.asarray(br.cert.get("weights_a") or [1.0], dtype=float)
    q = np.asarray(br.cert["weights_b"], dtype=float)
    rho_m = np.tensordot(p, np.stack([a.matrix for a in a_pts]), axes=1)
    sigma_m = np.tensordot(q, np.stack([g.matrix for g in grid]), axes=1)
    wr, vr = spectral.eigh(rho_m)
    ws, vs = spectral.eigh(sigma_m)
    r = vs.conj().T @ rho_m @ vs
    if np.any((ws <= SUPPORT_CUTOFF) & (np.real(np.diag(r)) > SUPPORT_CUTOFF_COARSE)):
        return br.lower
    lr = spectral.log2_on_support(wr, SUPPORT_CUTOFF)
    ls = spectral.log2_on_support(ws, SUPPORT_CUTOFF)
    value = float(np.sum(wr * lr) - np.sum(np.real(np.diag(r)) * ls))
    # gradients: in ρ, log2 ρ - log2 σ + I/ln2; in σ, minus the Fréchet derivative of log2 paired with ρ
    log_diff = (vr * lr) @ vr.conj().T - (vs * ls) @ vs.conj().T + np.eye(len(ws)) / math.log(2.0)
    grad_a = np.array([np.real(np.vdot(a.matrix, log_diff)) for a in a_pts])
    kern = spectral.log_derivative_kernel(ws, SUPPORT_CUTOFF)
    m_sigma = -(vs @ (r * kern.T) @ vs.conj().T) / math.log(2.0)

    def phi(t):
        st = DensityOperator.from_operator(mixture(b_base, [1.0 - t, t]))
        return float(np.real(np.vdot(m_sigma, tensor_power(st, n).matrix)))

    nodes = 0.5 - 0.5 * np.cos(np.pi * (np.arange(n + 1) + 0.5) / (n + 1))
    poly = np.polynomial.Chebyshev.fit(nodes, [phi(t) for t in nodes], n, domain=[0.0, 1.0])
    crit = [float(np.real(x)) for x in poly.deriv().roots() if abs(np.imag(x)) < 1e-9 and 0.0 < np.real(x) < 1.0]
    seg_min = min(phi(t) for t in [0.0, 1.0] + crit)
    gap = float(grad_a @ p - grad_a.min()) + max(float(np.real(np.vdot(m_sigma, sigma_m))) - seg_min, 0.0)
    return max(value - gap, 0.0)


def sandwich_av_iid(a_seq, b_base: Sequence[DensityOperator], delta_cover_size: int | None = None,
                    delta: float = 0.0, n: int = 2, grid_factor: int = 8, gap_tol: float = 1e-8,
                    tol: float = 1e-6) -> CheckReport:
    """Check ``L <= M <= L + δ + (1 + |X_δ| log2(n+1))/n`` with certified brackets.

    ``L = (1/n) D(A_n ‖ co B^av)`` over the type-class states and
    ``M = (1/n) D(A_n ‖ co(co(B)^iid))``. The middle term is bracketed from
    above by a simplex grid of mixtures containing every n-type mixture, and
    from below (two-element bases) by the Frank–Wolfe gap of the grid optimum
    against the whole mixture segment; for larger bases the lower end falls
    back to ``L`` by inclusion.
    The base list serves as its own cover by default (``δ = 0``).
    """
    b_base = list(b_base)
    x_size = len(b_base) if delta_cover_size is None else int(delta_cover_size)
    fam = _level(a_seq, n)
    a_pts = _materialize(fam)
    left = relent_between_hulls(a_pts, alternative_points(b_base, n, "av"), gap_tol=gap_tol).scaled(1.0 / n)
    resolution = grid_factor * n
    grid = [tensor_power(s, n) for s in _mixture_grid(b_base, resolution)]
    if len(grid) > 64:
        raise CapExceeded(f"mixture grid of {len(grid)} points exceeds the hull cap; lower grid_factor")
    mid_raw = relent_between_hulls(a_pts, grid, gap_tol=gap_tol)
    mid_grid = mid_raw.scaled(1.0 / n)
    if len(b_base) == 2 and math.isfinite(mid_grid.upper):
        mid_lower = _segment_hull_lower(a_pts, b_base, n, grid, mid_raw) / n
        mid_lower_source = "continuum Frank-Wolfe gap"
    else:
        mid_lower = left.lower
        mid_lower_source = "inclusion"
    if len(b_base) == 1:
        mid_lower = max(mid_lower, left.lower)
    mid_lower = min(mid_lower, mid_grid.upper)
    correction = delta + (1 + x_size * math.log2(n + 1)) / n
    right_lower, right_upper = left.lower + correction, left.upper + correction

    s1, w1 = inequality_slack(left.lower, left.upper, mid_lower, mid_grid.upper)
    s2, w2 = inequality_slack(mid_lower, mid_grid.upper, right_lower, right_upper)
    # report the binding link: the one with the smallest slack net of its allowance
    links = [(s1, tol + w1), (s2, tol + w2)]
    slack, allowance = min(links, key=lambda sw: sw[0] + sw[1])
    return CheckReport(
        check_id=f"sandwich:n={n}",
        anchor="arbitrarily varying vs i.i.d. alternative sandwich",
        instances=2,
        worst_slack=slack,
        tolerance=allowance,
        verdict="",
        detail={
            "n": n, "left": [left.lower, left.upper],
            "middle": [mid_lower, mid_grid.upper], "middle_lower_source": mid_lower_source,
            "grid_resolution": resolution,
            "right": [right_lower, right_upper], "correction": correction,
            "slack_left_middle": s1, "slack_middle_right": s2,
            "allowances": [links[0][1], links[1][1]],
        },
    )


# ---------------------------------------------------------------- measures

def basel_weights(length: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw weights ``6/(π² k²)`` for ``k = 1..length`` and their renormalization."""
    if length < 1:
        raise ValueError("need at least one measure")
    if length > MAX_BASEL:
        raise CapExceeded(f"Basel truncation {length} exceeds {MAX_BASEL}")
    k = np.arange(1, length + 1, dtype=float)
    raw = 6.0 / (math.pi ** 2 * k ** 2)
    return raw, raw / raw.sum()


def basel_mix(measures: Sequence[DiscreteMeasure]) -> DiscreteMeasure:
    """``Σ_k (6/π²k²) μ_k`` renormalized by the truncated mass."""
    measures = list(measures)
    if not measures:
        raise ValueError("basel_mix needs at least one measure")
    _, w = basel_weights(len(measures))
    support, weights = [], []
    for wk, mu in zip(w, measures):
        support.extend(mu.support)
        weights.extend(wk * mu.weights)
    weights = np.asarray(weights)
    return DiscreteMeasure(support, weights / weights.sum()).compressed()


def best_attacker_measure(a_n: StateFamily, b_base: Sequence[DensityOperator], n: int | None = None,
                          gap_tol: float = 1e-6) -> tuple[DiscreteMeasure, Bracket]:
    """Measure on ``b_base`` minimizing ``D(A_n ‖ Σ_j μ_j σ_j^{⊗n})`` to stationarity ``gap_tol``."""
    b_base = list(b_base)
    n = a_n.n if n is None else n
    a_pts = _materialize(a_n.at(n) if a_n.n != n else a_n)
    br = relent_between_hulls(a_pts, [tensor_power(s, n) for s in b_base], gap_tol=gap_tol)
    w = np.asarray(br.cert.get("weights_b") or [1.0])
    w = np.clip(w, 0.0, None)
    return DiscreteMeasure(b_base, w / w.sum()), br


# ---------------------------------------------------------------- Fekete

def fekete_report(values, subadditive_expected: bool = True, tol: float = 1e-6, n_values=None) -> dict:
    """Limit candidate and pairwise additivity violations for a per-n rate sequence.

    ``values[i]`` is the rate ``a_n = b_n / n`` at ``n = n_values[i]`` (default
    ``1, 2, ...``), either a float or a :class:`Bracket`. For a subadditive
    ``b_n`` the candidate limit is ``inf_n a_n``; for a superadditive one it is
    ``sup_n a_n``. A pair ``(m, k)`` is flagged when ``b_{m+k}`` violates the
    expected inequality even at the most favourable bracket ends.
    """
    vals = list(values)
    if len(vals) < 3:
        raise ValueError("fekete_report needs at least three values")
    ns = list(range(1, len(vals) + 1)) if n_values is None else [int(n) for n in n_values]
    lo = {n: (v.lower if isinstance(v, Bracket) else float(v)) for n, v in zip(ns, vals)}
    hi = {n: (v.upper if isinstance(v, Bracket) else float(v)) for n, v in zip(ns, vals)}
    violations = []
    for i, m in enumerate(ns):
        for k in ns[i:]:
            s = m + k
            if s not in lo:
                continue
            if subadditive_expected:
                excess = s * lo[s] - (m * hi[m] + k * hi[k])
            else:
                excess = (m * lo[m] + k * lo[k]) - s * hi[s]
            if excess > tol:
                violations.append({"m": m, "k": k, "excess": excess})
    mids = [0.5 * (lo[n] + hi[n]) for n in ns]
    candidate = min(hi.values()) if subadditive_expected else max(lo.values())
    diffs = np.diff(mids)
    sign_changes = int(np.sum(np.diff(np.sign(diffs[np.abs(diffs) > tol])) != 0)) if len(diffs) > 1 else 0
    return {
        "limit_candidate": candidate,
        "last_value": mids[-1],
        "violations": violations,
        "subadditive_expected": subadditive_expected,
        "oscillation_sign_changes": sign_changes,
        "n": ns,
    }


def measure_domination_slacks(measures: Sequence[DiscreteMeasure], n: int) -> list[float]:
    """``min-eig[ P_μ,n - (w_k / Z) P_μk,n ]`` for the Basel mix ``μ`` of ``measures``."""
    mu = basel_mix(measures)
    total = iid_mixture_state(mu, n).matrix
    _, w = basel_weights(len(measures))
    return [spectral.min_eig(total - wk * iid_mixture_state(m, n).matrix) for wk, m in zip(w, measures)]
