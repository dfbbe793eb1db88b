import math
from dataclasses import dataclass

from etp.Timeline import TemporalInterval

MAX_LOG_SPAN = 20.0


@dataclass(frozen=True)
class RegressionTarget:
    """Center offset in anchor lengths and log length ratio."""
    c: float
    s: float


def regression_target(gt: TemporalInterval, anchor: TemporalInterval) -> RegressionTarget:
    return RegressionTarget(
        c=(gt.center - anchor.center) / anchor.length,
        s=math.log(gt.length / anchor.length),
    )


def apply_offsets_continuous(anchor: TemporalInterval, t: RegressionTarget) -> tuple:
    """``(center, length)`` of the regressed interval before frame rounding."""
    s = min(max(t.s, -MAX_LOG_SPAN), MAX_LOG_SPAN)
    return anchor.center + t.c * anchor.length, anchor.length * math.exp(s)


def apply_offsets(anchor: TemporalInterval, t: RegressionTarget, num_frames: int) -> TemporalInterval:
    center, length = apply_offsets_continuous(anchor, t)
    start = math.floor(center - length / 2.0 + 0.5)
    end = math.floor(center + length / 2.0 + 0.5)
    start = min(max(0, start), num_frames - 1)
    end = min(max(start + 1, end), num_frames)
    return TemporalInterval(start, end)
