import math
from typing import Optional

import numpy as np
from scipy.ndimage import convolve1d

from etp.Timeline import TemporalInterval
from etp.Utils.errors import ConvergenceError, InputError
from logs import logger


def _merge_overlapping(components):
    """Merge every chain of intersecting intervals; input sorted by start."""
    merged = []
    for start, end in components:
        if merged and start < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return merged


def conn_component(scores, min_len: int, max_len: int, t: float,
                   max_iterations: Optional[int] = None) -> list:
    """Connected-component growth over a thresholded score vector.

    Seeds are the frames scoring at least ``t``. While more than one
    component is alive, every component grows one frame on each side
    (clamped to the timeline), intersecting components merge, and any
    component with ``min_len < length < max_len`` is frozen into the
    result. Components stay contiguous throughout, so they are kept as
    ``[start, end)`` pairs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise InputError(f"score vector must be 1-D, got shape {scores.shape}")
    num_frames = len(scores)
    if max_iterations is None:
        max_iterations = 2 * num_frames

    seeds = np.flatnonzero(scores >= t)
    alive = [[int(i), int(i) + 1] for i in seeds]
    result = []
    iterations = 0
    while len(alive) > 1:
        if iterations >= max_iterations:
            logger.error(f"conn_component hit the iteration cap {max_iterations} (T={num_frames})")
            raise ConvergenceError(f"conn_component exceeded {max_iterations} iterations")
        iterations += 1
        grown = [[max(0, s - 1), min(num_frames, e + 1)] for s, e in alive]
        grown = _merge_overlapping(grown)
        alive = []
        for s, e in grown:
            if min_len < e - s < max_len:
                result.append(TemporalInterval(s, e))
            else:
                alive.append([s, e])
    return sorted(result, key=lambda interval: (interval.start, interval.end))


def gaussian_kernel(sigma: float):
    radius = int(math.ceil(4.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def smooth_track(scores, sigma: float):
    """Gaussian smoothing with the kernel renormalized at the boundaries.

    The kernel is truncated at ``ceil(4 * sigma)``; near the ends of the
    timeline only the in-range taps contribute and their weights are
    renormalized to sum to one.
    """
    if sigma <= 0:
        raise InputError(f"smoothing sigma must be > 0, got {sigma}")
    scores = np.asarray(scores, dtype=np.float64)
    kernel = gaussian_kernel(sigma)
    numerator = convolve1d(scores, kernel, mode='constant', cval=0.0)
    denominator = convolve1d(np.ones_like(scores), kernel, mode='constant', cval=0.0)
    return numerator / denominator
