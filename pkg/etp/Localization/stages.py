import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from etp.Engine import NonLocalBlock
from etp.Refinement import UnitConfig, crop_units, span_feature
from etp.Timeline import TemporalInterval
from etp.Utils.errors import InputError

NUM_POOLED = 5


@dataclass(frozen=True)
class StagedProposal:
    """``starting`` / ``ending`` are None when clamped away at the video edges."""
    starting: Optional[TemporalInterval]
    course: TemporalInterval
    ending: Optional[TemporalInterval]


def stage_augment(p: TemporalInterval, num_frames: int) -> StagedProposal:
    half = p.length // 2
    start = max(0, p.start - half)
    end = min(num_frames, p.end + half)
    starting = TemporalInterval(start, p.start) if start < p.start else None
    ending = TemporalInterval(p.end, end) if p.end < end else None
    return StagedProposal(starting, p, ending)


def _stage_features(features, stage, units: UnitConfig):
    if stage is None:
        return np.zeros((0, features.shape[1]))
    spans = crop_units(stage, units.unit_len, units.stride, features.shape[0])
    return np.stack([span_feature(features, u.span) for u in spans])


def stage_units(features: np.ndarray, sp: StagedProposal, units: UnitConfig) -> tuple:
    """Unit features over starting + course + ending and the three segment sizes."""
    parts = [_stage_features(features, stage, units) for stage in (sp.starting, sp.course, sp.ending)]
    if len(parts[1]) == 0:
        raise InputError(f"course stage {sp.course} produced no units")
    return np.concatenate(parts, axis=0), tuple(len(p) for p in parts)


def pooling_weights(segments) -> np.ndarray:
    """``(5, L)`` averaging rows: starting, course, course halves, ending.

    Empty stages pool to zero; a one-unit course fills both halves.
    """
    n_start, n_course, n_end = segments
    weights = np.zeros((NUM_POOLED, n_start + n_course + n_end))
    if n_start:
        weights[0, :n_start] = 1.0 / n_start
    c0, c1 = n_start, n_start + n_course
    weights[1, c0:c1] = 1.0 / n_course
    half = math.ceil(n_course / 2)
    weights[2, c0:c0 + half] = 1.0 / half
    if n_course - half:
        weights[3, c0 + half:c1] = 1.0 / (n_course - half)
    else:
        weights[3] = weights[2]
    if n_end:
        weights[4, c1:] = 1.0 / n_end
    return weights


def pyramid_feature(features: np.ndarray, sp: StagedProposal, block: Optional[NonLocalBlock],
                    units: UnitConfig) -> np.ndarray:
    """Non-local pyramid feature of one staged proposal, length ``5 * D``."""
    x, segments = stage_units(features, sp, units)
    if block is not None:
        x, _ = block.forward(x)
    return (pooling_weights(segments) @ x).reshape(-1)


def non_local(x: np.ndarray, block: NonLocalBlock) -> np.ndarray:
    return block.forward(x)[0]
