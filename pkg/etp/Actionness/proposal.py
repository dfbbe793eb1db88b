from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field, model_validator

from etp.Timeline import ScoredInterval, nms
from etp.Utils.errors import InputError
from .grouping import conn_component, smooth_track


@dataclass(frozen=True)
class ScoreTrack:
    """Per-frame class scores, shape ``(num_frames, num_classes)``."""
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 1:
            raise InputError(f"score track must be a non-empty T x K matrix, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
            raise InputError("score track values must be finite and within [0, 1]")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def num_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    def average(self):
        return self.scores.mean(axis=1)


class ActionnessConfig(BaseModel):
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    min_len: int = Field(16, ge=1)
    max_len: int = Field(1024, ge=2)
    smooth_sigma: float = Field(2.0, gt=0.0)
    nms_threshold: float = Field(0.36, ge=0.0, le=1.0)

    @model_validator(mode='after')
    def check_lengths(self):
        if not self.min_len < self.max_len:
            raise ValueError(f"min_len ({self.min_len}) must be smaller than max_len ({self.max_len})")
        return self


def _track_candidates(track, class_id: int, cfg: ActionnessConfig):
    candidates = []
    for source in (track, smooth_track(track, cfg.smooth_sigma)):
        for interval in conn_component(source, cfg.min_len, cfg.max_len, cfg.threshold):
            score = float(source[interval.start:interval.end].mean())
            candidates.append(ScoredInterval(interval, score, label=class_id))
    return candidates


def generate_proposals(track: ScoreTrack, cfg: ActionnessConfig) -> list:
    """Initial proposals from the K class tracks and their average.

    Returns ``(ScoredInterval, class_id)`` pairs after NMS; proposals grown
    on the average track carry the class-agnostic id ``K``.
    """
    candidates = []
    for k in range(track.num_classes):
        candidates.extend(_track_candidates(track.scores[:, k], k, cfg))
    candidates.extend(_track_candidates(track.average(), track.num_classes, cfg))
    return [(kept, kept.label) for kept in nms(candidates, cfg.nms_threshold)]
