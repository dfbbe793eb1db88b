"""Interval algebra shared by every phase of the pipeline.

Intervals are half-open ``[start, end)`` on 0-based frame indices. The
annotation and proposal documents use 1-based closed spans; conversion
happens in ``data.dataset_io`` and nowhere else.
"""
from dataclasses import dataclass, field
from enum import IntEnum
from numbers import Real
from typing import Optional, Sequence

from beartype import beartype

from etp.Utils.errors import InputError

POSITIVE_IOU = 0.7
INCOMPLETE_IOU = 0.3
BACKGROUND_IOU = 0.1


@dataclass(frozen=True)
class TemporalInterval:
    start: int
    end: int

    def __post_init__(self):
        # numpy integers are accepted and stored as python ints
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))
        if self.start < 0:
            raise InputError(f"interval start must be >= 0, got [{self.start}, {self.end})")
        if self.end <= self.start:
            raise InputError(f"interval end must exceed start, got [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def center(self) -> float:
        return (self.start + self.end) / 2.0

    def within(self, num_frames: int) -> bool:
        return self.end <= num_frames

    def __repr__(self):
        return f"[{self.start},{self.end})"


@dataclass(frozen=True)
class GroundTruthInstance:
    interval: TemporalInterval
    label: int

    def __post_init__(self):
        object.__setattr__(self, "label", int(self.label))
        if self.label < 0:
            raise InputError(f"groundtruth label must be >= 0, got {self.label}")


@dataclass(frozen=True)
class ScoredInterval:
    interval: TemporalInterval
    score: float
    label: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not (self.score == self.score and abs(self.score) != float("inf")):
            raise InputError(f"score must be finite, got {self.score}")


class ProposalKind(IntEnum):
    POSITIVE = 0
    INCOMPLETE = 1
    BACKGROUND = 2
    IGNORED = 3


@dataclass(frozen=True)
class ProposalLabel:
    kind: ProposalKind
    matched_gt: Optional[GroundTruthInstance]
    iou: float


@beartype
def make_interval(start: int, end: int, num_frames: Optional[int] = None) -> TemporalInterval:
    interval = TemporalInterval(start, end)
    if num_frames is not None and not interval.within(num_frames):
        raise InputError(f"interval {interval} exceeds video length {num_frames}")
    return interval


@beartype
def iou(a: TemporalInterval, b: TemporalInterval) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union


def _nms_order(candidate: ScoredInterval):
    return (-candidate.score, candidate.interval.start, candidate.interval.length)


@beartype
def sort_by_score(candidates: Sequence[ScoredInterval]) -> list:
    """Score descending; ties go to the earlier start, then the shorter span."""
    return sorted(candidates, key=_nms_order)


@beartype
def nms(candidates: Sequence[ScoredInterval], threshold: Real) -> list:
    kept = []
    for candidate in sort_by_score(candidates):
        if all(iou(candidate.interval, k.interval) <= threshold for k in kept):
            kept.append(candidate)
    return kept


def kind_for_iou(value: float) -> ProposalKind:
    if value > POSITIVE_IOU:
        return ProposalKind.POSITIVE
    if value >= INCOMPLETE_IOU:
        return ProposalKind.INCOMPLETE
    if value < BACKGROUND_IOU:
        return ProposalKind.BACKGROUND
    return ProposalKind.IGNORED


@beartype
def best_match(p: TemporalInterval, gts: Sequence[GroundTruthInstance]):
    """Highest-IoU groundtruth for ``p``; ties go to the earliest start."""
    best, best_iou = None, 0.0
    for gt in sorted(gts, key=lambda g: (g.interval.start, g.interval.end)):
        value = iou(p, gt.interval)
        if value > best_iou:
            best, best_iou = gt, value
    return best, best_iou


@beartype
def label_proposal(p: TemporalInterval, gts: Sequence[GroundTruthInstance]) -> ProposalLabel:
    matched, value = best_match(p, gts)
    return ProposalLabel(kind=kind_for_iou(value), matched_gt=matched, iou=value)
