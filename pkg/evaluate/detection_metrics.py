"""Detection scoring: greedy IoU matching, step-integrated AP and mAP@alpha.

Detections and groundtruth are given per video as mappings
``video_id -> list``; matching never crosses videos.
"""
import math
from typing import Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from etp.Localization import Detection
from etp.Timeline import GroundTruthInstance, TemporalInterval, iou
from etp.Utils.errors import InputError
from logs import logger

__all__ = [
    "THUMOS_ALPHAS", "MatchRecord", "EvalReport", "match_detections", "average_precision", "map_at",
    "proposal_recall", "boundary_error",
]

THUMOS_ALPHAS = (0.3, 0.4, 0.5, 0.6, 0.7)
BOUNDARY_MIN_IOU = 0.3


class MatchRecord(BaseModel):
    video_id: str
    label: int
    alpha: float
    start: int
    end: int
    score: float
    # index into the video's groundtruth list, None for a false positive
    matched_gt: Optional[int] = None


class EvalReport(BaseModel):
    alphas: list[float]
    class_names: list[str]
    num_gt: list[int] = Field(..., description="groundtruth count per class")
    ap: list[list[float]] = Field(..., description="AP per class (rows) and alpha (columns)")
    mean_ap: list[float] = Field(..., description="mAP per alpha over classes with groundtruth")
    matches: list[MatchRecord] = Field(default_factory=list)

    def map_at(self, alpha: float) -> float:
        return self.mean_ap[self.alphas.index(alpha)]


def _det_order(item):
    video_id, det = item
    return -det.score, det.interval.start, det.interval.length, video_id


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruthInstance], alpha: float) -> list:
    """TP flags for one class in one video; ``dets`` must already be in rank order."""
    return [gt is not None for gt in _greedy_match(dets, gts, alpha)]


def _greedy_match(dets, gts, alpha):
    used = [False] * len(gts)
    assigned = []
    for det in dets:
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if used[j]:
                continue
            value = iou(det.interval, gt.interval)
            # strict comparison keeps the earliest groundtruth on ties
            if value >= alpha and value > best_iou:
                best, best_iou = j, value
        if best is not None:
            used[best] = True
        assigned.append(best)
    return assigned


def average_precision(flags: Sequence[bool], num_gt: int) -> float:
    """Step-integrated AP: the precision at every rank where recall increases.

    A class without groundtruth scores 0.0 here and is left out of mAP.
    """
    if num_gt <= 0 or len(flags) == 0:
        return 0.0
    hits = np.asarray(flags, dtype=bool)
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return math.fsum(precision[hits] / num_gt)


def _check_labels(dets_by_video, gts_by_video, num_classes):
    for video_id, dets in dets_by_video.items():
        for det in dets:
            if not 0 <= det.label < num_classes:
                raise InputError(f"video {video_id}: detection label {det.label} outside the "
                                 f"{num_classes} known classes")
    for video_id, gts in gts_by_video.items():
        for gt in gts:
            if not 0 <= gt.label < num_classes:
                raise InputError(f"video {video_id}: groundtruth label {gt.label} outside the "
                                 f"{num_classes} known classes")


def map_at(dets_by_video: Mapping[str, Sequence[Detection]],
           gts_by_video: Mapping[str, Sequence[GroundTruthInstance]],
           alphas: Sequence[float] = THUMOS_ALPHAS, class_names: Optional[Sequence[str]] = None,
           keep_matches: bool = False) -> EvalReport:
    if class_names is None:
        labels = [gt.label for gts in gts_by_video.values() for gt in gts]
        labels += [d.label for dets in dets_by_video.values() for d in dets]
        class_names = [str(k) for k in range(max(labels) + 1 if labels else 0)]
    num_classes = len(class_names)
    _check_labels(dets_by_video, gts_by_video, num_classes)
    unknown = sorted(set(dets_by_video) - set(gts_by_video))
    if unknown:
        logger.warning(f"detections for {len(unknown)} video(s) without annotations are all false positives")

    ap = [[0.0] * len(alphas) for _ in range(num_classes)]
    num_gt = [0] * num_classes
    matches = []
    for k in range(num_classes):
        gts = {v: [g for g in items if g.label == k] for v, items in gts_by_video.items()}
        num_gt[k] = sum(len(g) for g in gts.values())
        ranked = sorted(((v, d) for v, items in dets_by_video.items() for d in items if d.label == k),
                        key=_det_order)
        for a, alpha in enumerate(alphas):
            flags = []
            per_video = {}
            for video_id, det in ranked:
                per_video.setdefault(video_id, []).append(det)
            assigned = {v: iter(_greedy_match(d, gts.get(v, []), alpha)) for v, d in per_video.items()}
            for video_id, det in ranked:
                gt_index = next(assigned[video_id])
                flags.append(gt_index is not None)
                if keep_matches:
                    matches.append(MatchRecord(video_id=video_id, label=k, alpha=alpha,
                                               start=det.interval.start, end=det.interval.end,
                                               score=det.score, matched_gt=gt_index))
            ap[k][a] = average_precision(flags, num_gt[k])

    scored = [k for k in range(num_classes) if num_gt[k] > 0]
    mean_ap = [float(np.mean([ap[k][a] for k in scored])) if scored else 0.0 for a in range(len(alphas))]
    return EvalReport(alphas=list(alphas), class_names=list(class_names), num_gt=num_gt, ap=ap,
                      mean_ap=mean_ap, matches=matches)


def proposal_recall(proposals_by_video: Mapping[str, Sequence[TemporalInterval]],
                    gts_by_video: Mapping[str, Sequence[GroundTruthInstance]], alpha: float) -> float:
    """Fraction of groundtruth instances covered by some proposal with IoU >= alpha."""
    hit, total = 0, 0
    for video_id, gts in gts_by_video.items():
        proposals = proposals_by_video.get(video_id, [])
        for gt in gts:
            total += 1
            hit += any(iou(p, gt.interval) >= alpha for p in proposals)
    return hit / total if total else 0.0


def boundary_error(proposals_by_video: Mapping[str, Sequence[TemporalInterval]],
                   gts_by_video: Mapping[str, Sequence[GroundTruthInstance]]) -> Optional[float]:
    """Mean absolute start/end offset to the best groundtruth, over proposals with IoU >= 0.3.

    None when no proposal overlaps any groundtruth that much.
    """
    errors = []
    for video_id, proposals in proposals_by_video.items():
        gts = gts_by_video.get(video_id, [])
        for p in proposals:
            if not gts:
                break
            overlaps = [iou(p, g.interval) for g in gts]
            j = int(np.argmax(overlaps))
            if overlaps[j] >= BOUNDARY_MIN_IOU:
                gt = gts[j].interval
                errors.append((abs(p.start - gt.start) + abs(p.end - gt.end)) / 2.0)
    return float(np.mean(errors)) if errors else None
