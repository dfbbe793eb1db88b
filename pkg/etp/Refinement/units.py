from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from etp.Timeline import TemporalInterval


class UnitConfig(BaseModel):
    unit_len: int = Field(64, ge=2)
    # defaults to half the unit length
    stride: Optional[int] = Field(None, ge=1)

    @model_validator(mode='after')
    def default_stride(self):
        if self.stride is None:
            self.stride = max(1, self.unit_len // 2)
        return self


@dataclass(frozen=True)
class Unit:
    span: TemporalInterval
    context_span: TemporalInterval


def context_of(span: TemporalInterval, num_frames: int) -> TemporalInterval:
    half = span.length // 2
    return TemporalInterval(max(0, span.start - half), min(num_frames, span.end + half))


def crop_units(p: TemporalInterval, unit_len: int, stride: int, num_frames: int) -> list:
    """Fixed-length units along ``p``; a proposal shorter than one unit is one unit."""
    if p.length < unit_len:
        spans = [p]
    else:
        spans = [TemporalInterval(s, s + unit_len)
                 for s in range(p.start, p.end - unit_len + 1, stride)]
    return [Unit(span, context_of(span, num_frames)) for span in spans]


def span_feature(features: np.ndarray, span: TemporalInterval) -> np.ndarray:
    return features[span.start:span.end].mean(axis=0)


def unit_feature(features: np.ndarray, u: Unit) -> np.ndarray:
    return span_feature(features, u.context_span)


def unit_sequence(features: np.ndarray, p: TemporalInterval, cfg: UnitConfig) -> np.ndarray:
    """``(num_units, D)`` context-augmented features of the units of ``p``."""
    units = crop_units(p, cfg.unit_len, cfg.stride, features.shape[0])
    return np.stack([unit_feature(features, u) for u in units])


def snap_to_grid(p: TemporalInterval, stride: int, num_frames: int) -> TemporalInterval:
    """Move both boundaries to the nearest multiple of ``stride`` inside the video."""
    start = min(int(np.floor(p.start / stride + 0.5)) * stride, num_frames - 1)
    end = min(int(np.floor(p.end / stride + 0.5)) * stride, num_frames)
    if end <= start:
        end = min(num_frames, start + stride)
        start = max(0, min(start, end - stride))
    return TemporalInterval(start, end)
