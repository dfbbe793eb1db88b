from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator

from etp.Engine import OptimizerState, regression_loss, sgd_step
from etp.Timeline import ProposalKind, ProposalLabel, TemporalInterval
from etp.Utils.errors import TrainingError
from etp.Utils.utils import make_rng
from logs import logger
from .model import RnModel
from .regression import RegressionTarget, apply_offsets, regression_target
from .units import UnitConfig, snap_to_grid, unit_sequence

TRAINABLE_KINDS = (ProposalKind.POSITIVE, ProposalKind.INCOMPLETE)


class RefinementConfig(BaseModel):
    hidden: int = Field(512, ge=1)
    depth: int = Field(2, ge=1)
    batch_size: int = Field(128, ge=1)
    iterations: int = Field(20000, ge=1)
    learning_rate: float = Field(0.1, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    decay_factor: float = Field(0.1, gt=0.0, le=1.0)
    decay_every: int = Field(5000, ge=1)
    log_every: int = Field(100, ge=1)
    inference_batch: int = Field(256, ge=1)
    # (center, log-span) targets are multiplied by these before the loss
    target_weights: tuple[float, float] = (1.0, 1.0)

    @field_validator("target_weights")
    @classmethod
    def check_weights(cls, weights):
        if min(weights) <= 0.0:
            raise ValueError(f"target weights must be positive, got {weights}")
        return weights


@dataclass(frozen=True)
class LabelledProposal:
    """One labelled proposal together with the frame features of its video."""
    proposal: TemporalInterval
    label: ProposalLabel
    features: np.ndarray


@dataclass(frozen=True)
class RnSample:
    anchor: TemporalInterval
    target: RegressionTarget
    units: np.ndarray


def build_samples(dataset: Sequence[LabelledProposal], units: UnitConfig) -> list:
    """Positive and incomplete proposals, snapped to the unit grid as anchors."""
    samples = []
    for example in dataset:
        if example.label.kind not in TRAINABLE_KINDS:
            continue
        num_frames = example.features.shape[0]
        anchor = snap_to_grid(example.proposal, units.stride, num_frames)
        target = regression_target(example.label.matched_gt.interval, anchor)
        samples.append(RnSample(anchor, target, unit_sequence(example.features, anchor, units)))
    return samples


def train_rn(model: RnModel, dataset: Sequence[LabelledProposal], hyper: RefinementConfig,
             units: UnitConfig, seed: int) -> tuple:
    samples = build_samples(dataset, units)
    if not samples:
        logger.error("refinement training set has no positive or incomplete proposals")
        raise TrainingError("no positive or incomplete proposals to train the refinement network")
    logger.info(f"training refinement network on {len(samples)} proposals "
                f"({hyper.iterations} iterations, batch {hyper.batch_size})")

    targets = np.array([[s.target.c, s.target.s] for s in samples]) * np.asarray(hyper.target_weights)
    rng = make_rng(seed, 2)
    opt = OptimizerState(learning_rate=hyper.learning_rate, momentum_coeff=hyper.momentum,
                         decay_factor=hyper.decay_factor, decay_every=hyper.decay_every)
    batch = min(hyper.batch_size, len(samples))
    losses = []
    model.zero_grad()
    for iteration in range(hyper.iterations):
        idx = np.sort(rng.choice(len(samples), size=batch, replace=False))
        preds, cache = model.forward([samples[i].units for i in idx])
        loss, d_preds = regression_loss(preds, targets[idx])
        model.backward(d_preds, cache)
        lr = sgd_step(model.parameters(), opt, iteration)
        losses.append(loss)
        if (iteration + 1) % hyper.log_every == 0:
            window = np.mean(losses[-hyper.log_every:])
            logger.info(f"[RN] iteration {iteration + 1}/{hyper.iterations} loss {window:.6f} lr {lr:.2e}")
    return model, losses


def refine_proposals(model: RnModel, proposals: Sequence[TemporalInterval], features: np.ndarray,
                     units: UnitConfig, batch_size: int = 256, target_weights=(1.0, 1.0)) -> list:
    """Snap each proposal to the grid and apply the regressed offsets.

    ``target_weights`` must match the ones the model was trained with.
    """
    num_frames = features.shape[0]
    anchors = [snap_to_grid(p, units.stride, num_frames) for p in proposals]
    refined = []
    for begin in range(0, len(anchors), batch_size):
        chunk = anchors[begin:begin + batch_size]
        preds, _ = model.forward([unit_sequence(features, a, units) for a in chunk])
        preds = preds / np.asarray(target_weights)
        for anchor, (c, s) in zip(chunk, preds):
            refined.append(apply_offsets(anchor, RegressionTarget(float(c), float(s)), num_frames))
    return refined
