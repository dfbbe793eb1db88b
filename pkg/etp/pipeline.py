"""Stage orchestration shared by the command line and the end-to-end tests."""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from data import (DocItem, load_annotations, load_features, load_scores, interval_doc_path,
                  read_interval_doc, save_checkpoint, write_interval_doc)
from etp.Actionness import ScoreTrack, generate_proposals
from etp.Localization import LnModel, rank_and_detect, train_ln
from etp.Refinement import LabelledProposal, RnModel, refine_proposals, train_rn
from etp.Timeline import ScoredInterval, TemporalInterval, label_proposal
from etp.Utils.config import RunConfig
from etp.Utils.errors import InputError
from etp.Utils.utils import make_rng
from evaluate import boundary_error, map_at, proposal_recall
from experiment_results import write_report
from logs import logger


@dataclass
class VideoRecord:
    meta: object
    gts: list
    features: np.ndarray
    scores: Optional[np.ndarray] = None

    @property
    def video_id(self) -> str:
        return self.meta.video_id

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class PipelineResult:
    proposals: dict
    refined: dict
    detections: dict
    report: object
    diagnostics: dict = field(default_factory=dict)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map, on a thread pool when ``threads > 1``."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def load_videos(annotations_path: str, feature_dirs: Sequence[str], scores_dir: Optional[str] = None) -> list:
    videos = []
    for meta, gts in load_annotations(annotations_path):
        features = load_features(feature_dirs, meta.video_id) if feature_dirs else None
        scores = load_scores(scores_dir, meta.video_id) if scores_dir else None
        for name, matrix in (("features", features), ("scores", scores)):
            if matrix is not None and matrix.shape[0] != meta.num_frames:
                raise InputError(f"video {meta.video_id}: {name} have {matrix.shape[0]} frames, "
                                 f"annotation says {meta.num_frames}")
        if features is None:
            features = np.zeros((meta.num_frames, 0))
        videos.append(VideoRecord(meta, gts, features, scores))
    logger.info(f"loaded {len(videos)} videos from {annotations_path}")
    return videos


def split_subsets(videos) -> tuple:
    """Train on "validation" videos and evaluate on "test" ones; without subsets use all for both."""
    train = [v for v in videos if v.meta.subset == "validation"]
    test = [v for v in videos if v.meta.subset == "test"]
    if not train or not test:
        if any(v.meta.subset for v in videos):
            logger.warning("annotations lack a validation/test pair; training and evaluating on every video")
        return list(videos), list(videos)
    return train, test


def actionness_stage(videos, config: RunConfig, threads: int = 1) -> dict:
    def run(video):
        if video.scores is None:
            raise InputError(f"video {video.video_id} has no score track")
        return [proposal for proposal, _ in generate_proposals(ScoreTrack(video.scores), config.actionness)]

    results = parallel_map(run, videos, threads)
    logger.info(f"actionness stage emitted {sum(len(r) for r in results)} proposals")
    return {v.video_id: r for v, r in zip(videos, results)}


def labelled_pool(video: VideoRecord, intervals) -> list:
    return [LabelledProposal(p, label_proposal(p, video.gts), video.features) for p in intervals]


def train_refinement(videos, proposals: dict, config: RunConfig, seed: int) -> RnModel:
    dataset = []
    for video in videos:
        dataset.extend(labelled_pool(video, [s.interval for s in proposals.get(video.video_id, [])]))
    model = RnModel(videos[0].features.shape[1], hidden=config.refinement.hidden,
                    depth=config.refinement.depth, rng=make_rng(seed, 1))
    model, _ = train_rn(model, dataset, config.refinement, config.units, seed)
    return model


def refinement_stage(model: RnModel, videos, proposals: dict, config: RunConfig, threads: int = 1) -> dict:
    """Refined intervals keep the score and class id of the proposal they came from."""
    def run(video):
        scored = proposals.get(video.video_id, [])
        if not scored:
            return []
        refined = refine_proposals(model, [s.interval for s in scored], video.features, config.units,
                                   config.refinement.inference_batch, config.refinement.target_weights)
        return [ScoredInterval(r, s.score, s.label) for r, s in zip(refined, scored)]

    results = parallel_map(run, videos, threads)
    return {v.video_id: r for v, r in zip(videos, results)}


def random_windows(num_frames: int, count: int, rng: np.random.Generator) -> list:
    low = max(1, min(8, num_frames))
    high = max(low, num_frames // 2)
    windows = []
    for _ in range(count):
        length = int(rng.integers(low, high + 1))
        start = int(rng.integers(0, num_frames - length + 1))
        windows.append(TemporalInterval(start, start + length))
    return windows


def localization_pool(video: VideoRecord, intervals, count: int, rng: np.random.Generator) -> list:
    """Stage proposals plus the groundtruth instances and random windows, deduplicated in order."""
    pool = list(intervals) + [g.interval for g in video.gts] + random_windows(video.num_frames, count, rng)
    return labelled_pool(video, list(dict.fromkeys(pool)))


def train_localization(videos, proposals: dict, config: RunConfig, seed: int, num_classes: int) -> LnModel:
    rng = make_rng(seed, 4)
    dataset = []
    for video in videos:
        intervals = [s.interval for s in proposals.get(video.video_id, [])]
        dataset.extend(localization_pool(video, intervals, config.localization.random_windows, rng))
    model = LnModel(videos[0].features.shape[1], num_classes, rng=make_rng(seed, 5),
                    non_local=config.localization.non_local)
    model, _ = train_ln(model, dataset, config.localization, config.units, seed)
    return model


def localization_stage(model: LnModel, videos, proposals: dict, config: RunConfig, threads: int = 1) -> dict:
    def run(video):
        intervals = list(dict.fromkeys(s.interval for s in proposals.get(video.video_id, [])))
        if not intervals:
            return []
        return rank_and_detect(intervals, video.features, model, config.units,
                               config.localization.nms_threshold, config.localization.inference_batch)

    results = parallel_map(run, videos, threads)
    logger.info(f"localization stage emitted {sum(len(r) for r in results)} detections")
    return {v.video_id: r for v, r in zip(videos, results)}


def proposal_diagnostics(name: str, proposals: dict, videos, alpha: float = 0.5) -> dict:
    intervals = {vid: [s.interval for s in items] for vid, items in proposals.items()}
    gts = {v.video_id: v.gts for v in videos}
    recall = proposal_recall(intervals, gts, alpha)
    error = boundary_error(intervals, gts)
    shown = "n/a" if error is None else f"{error:.2f}"
    logger.info(f"{name}: {sum(len(i) for i in intervals.values())} proposals, "
                f"recall@{alpha} {recall:.3f}, boundary error {shown} frames")
    return {"recall": recall, "boundary_error": error}


def write_stage_docs(directory: str, items_by_video: dict, class_names=None) -> None:
    for video_id, items in items_by_video.items():
        rows = []
        for item in items:
            label = item.label
            name = class_names[label] if class_names is not None and label is not None \
                and label < len(class_names) else None
            rows.append(DocItem(item.interval, item.score, name))
        write_interval_doc(interval_doc_path(directory, video_id), video_id, rows)


def read_stage_docs(directory: str, videos) -> dict:
    """Proposal documents of ``videos`` as ScoredIntervals (labels dropped)."""
    proposals = {}
    for video in videos:
        video_id, items = read_interval_doc(interval_doc_path(directory, video.video_id))
        if video_id != video.video_id:
            raise InputError(f"{directory}: document for {video.video_id} names video {video_id}")
        proposals[video_id] = [ScoredInterval(i.interval, i.score) for i in items]
    return proposals


def run_pipeline(videos, config: RunConfig, out_dir: str, skip_refinement: bool = False,
                 threads: int = 1) -> PipelineResult:
    """Actionness -> refinement -> localization -> evaluation, with every stage written to ``out_dir``."""
    seed = config.basic.seed
    class_names = list(videos[0].meta.classes)
    train, test = split_subsets(videos)
    every = list({v.video_id: v for v in train + test}.values())

    proposals = actionness_stage(every, config, threads)
    write_stage_docs(os.path.join(out_dir, "proposals"), proposals)
    diagnostics = {"actionness": proposal_diagnostics("actionness", {v.video_id: proposals[v.video_id] for v in test},
                                                      test)}

    if skip_refinement:
        logger.info("refinement skipped; actionness proposals go straight to localization")
        refined = proposals
    else:
        rn = train_refinement(train, proposals, config, seed)
        save_checkpoint(os.path.join(out_dir, "rn.ckpt"), rn)
        refined = refinement_stage(rn, every, proposals, config, threads)
        write_stage_docs(os.path.join(out_dir, "refined"), refined)
        diagnostics["refinement"] = proposal_diagnostics(
            "refinement", {v.video_id: refined[v.video_id] for v in test}, test)

    ln = train_localization(train, refined, config, seed, len(class_names))
    save_checkpoint(os.path.join(out_dir, "ln.ckpt"), ln)
    detections = localization_stage(ln, test, refined, config, threads)
    write_stage_docs(os.path.join(out_dir, "detections"), detections, class_names)

    report = map_at(detections, {v.video_id: v.gts for v in test}, config.evaluation.iou_thresholds, class_names)
    write_report(report, os.path.join(out_dir, "report"))
    return PipelineResult(proposals, refined, detections, report, diagnostics)
