"""Synthetic videos with planted actions.

Every class owns a unit-norm feature signature; frames inside an action
carry the signature of its class plus white noise, background frames carry
noise only. Score tracks are the per-class indicators of the planted
actions plus clipped Gaussian noise.
"""
import os
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field, model_validator

from etp.Timeline import GroundTruthInstance, TemporalInterval
from etp.Utils.errors import InputError
from etp.Utils.utils import make_rng
from logs import logger
from .dataset_io import FeatureKind, VideoMeta, feature_path, save_annotations, write_feature_file

MAX_PLACEMENT_TRIES = 100


class SynthConfig(BaseModel):
    num_videos: int = Field(40, ge=1)
    num_frames: int = Field(512, ge=2)
    num_classes: int = Field(3, ge=1)
    feature_dim: int = Field(16, ge=1)
    min_actions: int = Field(1, ge=0)
    max_actions: int = Field(3, ge=0)
    min_action_len: int = Field(32, ge=1)
    max_action_len: int = Field(128, ge=1)
    # background frames kept between two planted actions
    min_gap: int = Field(8, ge=0)
    score_noise: float = Field(0.05, ge=0.0)
    feature_snr: float = Field(4.0, gt=0.0)
    fps: float = Field(30.0, gt=0.0)
    # the last share of the videos is marked "test", the rest "validation"; 0 disables subsets
    test_fraction: float = Field(0.5, ge=0.0, lt=1.0)
    seed: int = 0

    @model_validator(mode='after')
    def check_ranges(self):
        if self.min_actions > self.max_actions:
            raise ValueError(f"min_actions ({self.min_actions}) exceeds max_actions ({self.max_actions})")
        if not 0 < self.min_action_len <= self.max_action_len <= self.num_frames:
            raise ValueError(f"action length range [{self.min_action_len}, {self.max_action_len}] "
                             f"must lie within (0, {self.num_frames}]")
        return self

    @property
    def class_names(self) -> tuple:
        return tuple(f"action_{k}" for k in range(self.num_classes))


@dataclass(frozen=True)
class SynthVideo:
    meta: VideoMeta
    instances: list
    features: np.ndarray
    scores: np.ndarray


def class_signatures(cfg: SynthConfig) -> np.ndarray:
    mu = make_rng(cfg.seed, 0).standard_normal((cfg.num_classes, cfg.feature_dim))
    return mu / np.linalg.norm(mu, axis=1, keepdims=True)


def plant_actions(cfg: SynthConfig, rng: np.random.Generator) -> list:
    """Non-overlapping instances separated by at least ``min_gap`` frames, sorted by start."""
    count = int(rng.integers(cfg.min_actions, cfg.max_actions + 1))
    planted = []
    for _ in range(count):
        for _ in range(MAX_PLACEMENT_TRIES):
            length = int(rng.integers(cfg.min_action_len, cfg.max_action_len + 1))
            start = int(rng.integers(0, cfg.num_frames - length + 1))
            span = TemporalInterval(start, start + length)
            if all(span.end + cfg.min_gap <= g.interval.start or g.interval.end + cfg.min_gap <= span.start
                   for g in planted):
                planted.append(GroundTruthInstance(span, int(rng.integers(cfg.num_classes))))
                break
        else:
            logger.error(f"could not place {count} actions in {cfg.num_frames} frames")
            raise InputError(f"infeasible placement: {count} actions of length up to {cfg.max_action_len} "
                             f"do not fit into {cfg.num_frames} frames after {MAX_PLACEMENT_TRIES} tries")
    return sorted(planted, key=lambda g: g.interval.start)


def _subset(cfg: SynthConfig, index: int):
    if cfg.test_fraction == 0.0:
        return None
    num_test = max(1, int(round(cfg.num_videos * cfg.test_fraction)))
    return "test" if index >= cfg.num_videos - num_test else "validation"


def synth_video(cfg: SynthConfig, index: int, signatures: np.ndarray) -> SynthVideo:
    rng = make_rng(cfg.seed, 1, index)
    instances = plant_actions(cfg, rng)
    noise_scale = 1.0 / cfg.feature_snr / np.sqrt(cfg.feature_dim)
    features = rng.standard_normal((cfg.num_frames, cfg.feature_dim)) * noise_scale
    indicator = np.zeros((cfg.num_frames, cfg.num_classes))
    for g in instances:
        features[g.interval.start:g.interval.end] += signatures[g.label]
        indicator[g.interval.start:g.interval.end, g.label] = 1.0
    scores = indicator
    if cfg.score_noise > 0.0:
        scores = np.clip(indicator + rng.normal(0.0, cfg.score_noise, indicator.shape), 0.0, 1.0)
    meta = VideoMeta(f"video_{index:04d}", cfg.num_frames, cfg.fps, cfg.class_names, _subset(cfg, index))
    return SynthVideo(meta, instances, features, scores)


def synth_generate(cfg: SynthConfig) -> list:
    signatures = class_signatures(cfg)
    videos = [synth_video(cfg, v, signatures) for v in range(cfg.num_videos)]
    logger.info(f"generated {len(videos)} synthetic videos with "
                f"{sum(len(v.instances) for v in videos)} planted actions")
    return videos


def write_synth(videos, out_dir: str) -> None:
    """``features/`` and ``scores/`` feature files plus ``annotations.json``."""
    for video in videos:
        write_feature_file(feature_path(os.path.join(out_dir, "features"), video.meta.video_id), video.features)
        write_feature_file(feature_path(os.path.join(out_dir, "scores"), video.meta.video_id), video.scores,
                           FeatureKind.SCORES)
    save_annotations(os.path.join(out_dir, "annotations.json"), [(v.meta, v.instances) for v in videos])
    logger.info(f"wrote synthetic dataset to {out_dir}")
