from dataclasses import dataclass
from typing import Sequence

import numpy as np

from etp.Engine import softmax
from etp.Refinement import RegressionTarget, UnitConfig, apply_offsets
from etp.Timeline import ScoredInterval, TemporalInterval, nms
from etp.Utils.errors import InputError
from .model import LnModel
from .stages import pooling_weights, stage_augment, stage_units

COMPLETENESS_CLIP = 50.0


@dataclass(frozen=True)
class Detection:
    interval: TemporalInterval
    label: int
    score: float

    def __post_init__(self):
        if not self.score > 0.0 or not np.isfinite(self.score):
            raise InputError(f"detection score must be finite and > 0, got {self.score}")


def ranking_score(p_cls: np.ndarray, s_comp: float) -> tuple:
    """Top action class and ``p_cls[k] * exp(s_comp)``; ``None`` when background wins.

    ``p_cls`` holds the K action probabilities followed by background.
    """
    k = int(np.argmax(p_cls[:-1]))
    if p_cls[-1] >= p_cls[k]:
        return None
    s = float(np.clip(s_comp, -COMPLETENESS_CLIP, COMPLETENESS_CLIP))
    return k, float(p_cls[k] * np.exp(s))


def rank_and_detect(proposals: Sequence[TemporalInterval], features: np.ndarray, model: LnModel,
                    units: UnitConfig, nms_threshold: float, batch_size: int = 256) -> list:
    num_frames = features.shape[0]
    by_class = {}
    for begin in range(0, len(proposals), batch_size):
        chunk = proposals[begin:begin + batch_size]
        inputs = []
        for p in chunk:
            x, segments = stage_units(features, stage_augment(p, num_frames), units)
            inputs.append((x, pooling_weights(segments)))
        (logits, comp, offsets), _ = model.forward(inputs)
        for p, probs, s_comp, (c, s) in zip(chunk, softmax(logits), comp, offsets):
            ranked = ranking_score(probs, s_comp)
            if ranked is None:
                continue
            label, score = ranked
            interval = apply_offsets(p, RegressionTarget(float(c), float(s)), num_frames)
            by_class.setdefault(label, []).append(ScoredInterval(interval, score, label))

    detections = []
    for label in sorted(by_class):
        for kept in nms(by_class[label], nms_threshold):
            detections.append(Detection(kept.interval, label, kept.score))
    detections.sort(key=lambda d: (-d.score, d.interval.start, d.interval.length))
    return detections
