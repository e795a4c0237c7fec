"""Structured pass/fail records shared by the audit and the check harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .divergences import encode_float

VERDICTS = ("pass", "fail", "inconclusive")


@dataclass
class CheckReport:
    """Outcome of one verified inequality family.

    ``worst_slack`` is signed: negative values mean the inequality was violated
    by that amount at the worst instance. The verdict is ``"fail"`` exactly
    when ``worst_slack < -tolerance``, unless the check could not be run, in
    which case it is ``"inconclusive"``.
    """

    check_id: str
    anchor: str
    instances: int
    worst_slack: float
    tolerance: float
    seed: int | None = None
    verdict: str = ""
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.verdict:
            self.verdict = verdict_for(self.worst_slack, self.tolerance, self.instances)
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "anchor": self.anchor,
            "instances": self.instances,
            "worst_slack": encode_float(self.worst_slack),
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "seed": self.seed,
            "detail": _jsonable(self.detail),
        }


def verdict_for(worst_slack: float, tolerance: float, instances: int = 1) -> str:
    if instances == 0 or (isinstance(worst_slack, float) and math.isnan(worst_slack)):
        return "inconclusive"
    return "fail" if worst_slack < -tolerance else "pass"


class SlackTracker:
    """Accumulates the worst slack over instances together with the instance that produced it."""

    def __init__(self):
        self.worst = math.inf
        self.count = 0
        self.worst_instance = None

    def add(self, slack: float, instance=None) -> None:
        self.count += 1
        if slack < self.worst:
            self.worst = slack
            self.worst_instance = instance

    def value(self) -> float:
        return self.worst if self.count else math.nan


def inequality_slack(a_lower: float, a_upper: float, b_lower: float, b_upper: float) -> tuple[float, float]:
    """Adversarial slack and bracket-width allowance for the claim ``a <= b``.

    The slack compares the worst bracket ends (``b_lower - a_upper``); the
    returned allowance is the sum of both bracket widths, which callers add to
    the base tolerance.
    """
    slack = b_lower - a_upper
    widths = 0.0
    for lo, hi in ((a_lower, a_upper), (b_lower, b_upper)):
        if math.isfinite(lo) and math.isfinite(hi):
            widths += hi - lo
    if math.isinf(a_upper) and math.isinf(b_lower) and a_upper > 0 and b_lower > 0:
        slack = 0.0
    return slack, widths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return encode_float(obj)
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj
