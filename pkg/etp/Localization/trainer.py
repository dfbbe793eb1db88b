from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from etp.Engine import OptimizerState, cross_entropy, hinge, hinge_per_sample, regression_loss, sgd_step
from etp.Refinement import LabelledProposal, RegressionTarget, UnitConfig, regression_target
from etp.Timeline import ProposalKind
from etp.Utils.errors import TrainingError
from etp.Utils.utils import make_rng
from logs import logger
from .losses import INCOMPLETE_RATIO, LossWeights, multitask_loss, ohem_sample
from .model import LnModel
from .stages import pooling_weights, stage_augment, stage_units


class LocalizationConfig(BaseModel):
    batch_size: int = Field(128, ge=2)
    iterations: int = Field(90000, ge=1)
    learning_rate: float = Field(0.1, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    decay_factor: float = Field(0.1, gt=0.0, le=1.0)
    decay_every: int = Field(5000, ge=1)
    # decay stops once the rate falls below this floor
    min_learning_rate: Optional[float] = Field(1e-5, gt=0.0)
    alpha: float = Field(0.1, ge=0.0)
    beta: float = Field(0.1, ge=0.0)
    non_local: bool = True
    nms_threshold: float = Field(0.36, gt=0.0, le=1.0)
    random_windows: int = Field(32, ge=0)
    log_every: int = Field(100, ge=1)
    inference_batch: int = Field(256, ge=1)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True)
class LnSample:
    kind: ProposalKind
    class_id: int
    target: Optional[RegressionTarget]
    units: np.ndarray
    weights: np.ndarray

    @property
    def pyramid_input(self):
        return self.units, self.weights


def build_ln_samples(dataset: Sequence[LabelledProposal], num_classes: int, units: UnitConfig) -> list:
    """Stage-augmented samples; ignored proposals are dropped."""
    samples = []
    for example in dataset:
        kind = example.label.kind
        if kind == ProposalKind.IGNORED:
            continue
        staged = stage_augment(example.proposal, example.features.shape[0])
        x, segments = stage_units(example.features, staged, units)
        class_id, target = num_classes, None
        if kind != ProposalKind.BACKGROUND:
            gt = example.label.matched_gt
            class_id = gt.label
            target = regression_target(gt.interval, example.proposal)
        samples.append(LnSample(kind, class_id, target, x, pooling_weights(segments)))
    return samples


def _indices(samples, kind):
    return np.array([i for i, s in enumerate(samples) if s.kind == kind], dtype=np.int64)


def _draw(rng, pool, size):
    if len(pool) == 0 or size == 0:
        return pool[:0]
    return np.sort(rng.choice(pool, size=size, replace=len(pool) < size))


def _scatter(shape, rows, values):
    out = np.zeros(shape)
    np.add.at(out, rows, values)
    return out


def train_ln(model: LnModel, dataset: Sequence[LabelledProposal], hyper: LocalizationConfig,
             units: UnitConfig, seed: int) -> tuple:
    """SGD on ``L_cls + alpha * L_comp + beta * L_loc``; returns the model and the loss curve.

    Each batch holds positives and backgrounds 1:1 for classification, the
    OHEM-selected incompletes plus the positives for completeness, and the
    positives alone for regression.
    """
    samples = build_ln_samples(dataset, model.num_classes, units)
    positives = _indices(samples, ProposalKind.POSITIVE)
    incompletes = _indices(samples, ProposalKind.INCOMPLETE)
    backgrounds = _indices(samples, ProposalKind.BACKGROUND)
    if len(positives) == 0:
        logger.error("localization training set has no positive proposals")
        raise TrainingError("no positive proposals to train the localization network")
    if len(backgrounds) == 0:
        logger.warning("no background proposals; classification batches hold positives only")
    logger.info(f"training localization network on {len(positives)} positive, {len(incompletes)} incomplete "
                f"and {len(backgrounds)} background proposals ({hyper.iterations} iterations)")

    weights = hyper.loss_weights
    rng = make_rng(seed, 3)
    opt = OptimizerState(learning_rate=hyper.learning_rate, momentum_coeff=hyper.momentum,
                         decay_factor=hyper.decay_factor, decay_every=hyper.decay_every,
                         min_learning_rate=hyper.min_learning_rate)
    half = hyper.batch_size // 2
    losses = []
    model.zero_grad()
    for iteration in range(hyper.iterations):
        pos = _draw(rng, positives, half)
        bg = _draw(rng, backgrounds, half)
        wanted = INCOMPLETE_RATIO * len(pos)
        inc = _draw(rng, incompletes, wanted) if len(incompletes) >= wanted else incompletes
        rows = np.concatenate([pos, bg, inc])
        (logits, comp, offsets), cache = model.forward([samples[i].pyramid_input for i in rows])

        n_pos, n_bg = len(pos), len(bg)
        cls_rows = np.arange(n_pos + n_bg)
        inc_rows = np.arange(n_pos + n_bg, len(rows))
        inc_losses = hinge_per_sample(comp[inc_rows], -np.ones(len(inc_rows)))
        batch = ohem_sample(np.arange(n_pos), inc_rows, inc_losses, rng, quiet=iteration > 0)
        comp_rows = np.concatenate([batch.positives, batch.incompletes])
        signs = np.concatenate([np.ones(len(batch.positives)), -np.ones(len(batch.incompletes))])
        pos_rows = np.arange(n_pos)

        l_cls, d_cls = cross_entropy(logits[cls_rows], [samples[i].class_id for i in rows[cls_rows]])
        l_comp, d_comp = hinge(comp[comp_rows], signs)
        targets = np.array([[samples[i].target.c, samples[i].target.s] for i in pos])
        l_loc, d_loc = regression_loss(offsets[pos_rows], targets)
        loss = multitask_loss(l_cls, l_comp, l_loc, weights)

        model.backward(_scatter(logits.shape, cls_rows, d_cls),
                       _scatter(comp.shape, comp_rows, weights.alpha * d_comp),
                       _scatter(offsets.shape, pos_rows, weights.beta * d_loc), cache)
        lr = sgd_step(model.parameters(), opt, iteration)
        losses.append(loss)
        if (iteration + 1) % hyper.log_every == 0:
            window = np.mean(losses[-hyper.log_every:])
            logger.info(f"[LN] iteration {iteration + 1}/{hyper.iterations} loss {window:.6f} "
                        f"(cls {l_cls:.4f} comp {l_comp:.4f} loc {l_loc:.4f}) lr {lr:.2e}")
    return model, losses
