import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from etp.Engine import cross_entropy, hinge
from logs import logger

INCOMPLETE_RATIO = 4


class LossWeights(BaseModel):
    alpha: float = Field(0.1, ge=0.0)
    beta: float = Field(0.1, ge=0.0)


@dataclass(frozen=True)
class OhemBatch:
    positives: np.ndarray
    incompletes: np.ndarray


def classification_loss(logits, labels) -> float:
    return cross_entropy(logits, labels)[0]


def completeness_loss(preds, signs) -> float:
    return hinge(preds, signs)[0]


def multitask_loss(l_cls: float, l_comp: float, l_loc: float, weights: LossWeights) -> float:
    return l_cls + weights.alpha * l_comp + weights.beta * l_loc


def ohem_sample(positives, incompletes, per_sample_losses, rng, quiet=False) -> OhemBatch:
    """Draw ``4 * len(positives)`` incompletes and keep the hardest quarter.

    ``per_sample_losses`` is aligned with ``incompletes``; equal losses keep
    the lower index. When fewer incompletes exist, all of them are used.
    """
    positives = np.asarray(positives, dtype=np.int64)
    incompletes = np.asarray(incompletes, dtype=np.int64)
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    if len(incompletes) == 0:
        if not quiet:
            logger.warning("no incomplete proposals available; completeness batch holds positives only")
        return OhemBatch(positives, incompletes)

    wanted = INCOMPLETE_RATIO * len(positives)
    if len(positives) == 0 or len(incompletes) < wanted:
        if not quiet:
            logger.warning(f"only {len(incompletes)} incomplete proposals for {len(positives)} positives; "
                           f"using all of them")
        drawn = np.arange(len(incompletes))
    else:
        drawn = np.sort(rng.choice(len(incompletes), size=wanted, replace=False))

    keep = math.ceil(len(drawn) / INCOMPLETE_RATIO)
    hardest = sorted(drawn, key=lambda i: (-losses[i], i))[:keep]
    return OhemBatch(positives, incompletes[np.sort(hardest)])
