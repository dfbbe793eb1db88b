"""Feature files, annotation documents and proposal/detection documents.

Feature files are little-endian: the magic ``ETPF``, then version, kind,
T and D as unsigned 32-bit integers, then T*D float32 values frame by
frame. Annotation and proposal documents count frames from 1 with
inclusive ends; in memory every span is the half-open ``[start - 1, end)``.
"""
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from etp.Timeline import GroundTruthInstance, TemporalInterval
from etp.Utils.errors import FormatError, InputError
from etp.Utils.utils import read_json_file, save_json
from logs import logger

FEATURE_MAGIC = b"ETPF"
FEATURE_VERSION = 1
FEATURE_SUFFIX = ".etpf"
_HEADER = struct.Struct("<4sIIII")


class FeatureKind(IntEnum):
    FEATURES = 0
    SCORES = 1


def write_feature_file(path: str, matrix, kind: FeatureKind = FeatureKind.FEATURES):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InputError(f"feature matrix must be a non-empty T x D matrix, got shape {matrix.shape}")
    payload = matrix.astype("<f4")
    if kind == FeatureKind.SCORES and (not np.all(np.isfinite(payload)) or payload.min() < 0 or payload.max() > 1):
        raise FormatError("value out of range", f"score file {path} needs values in [0, 1]")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, int(kind), *payload.shape))
        f.write(payload.tobytes(order='C'))


def read_feature_file(path: str, expected_kind: Optional[FeatureKind] = None) -> np.ndarray:
    """Matrix of a feature file widened to float64."""
    try:
        with open(path, 'rb') as f:
            blob = f.read()
    except FileNotFoundError:
        raise InputError(f"File not found: {path}")
    if len(blob) < _HEADER.size:
        raise FormatError("size mismatch", f"{path} is shorter than the {_HEADER.size}-byte header")
    magic, version, kind, num_frames, dim = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise FormatError("bad magic", f"{path} starts with {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError("unsupported version", f"{path} has version {version}")
    if kind not in tuple(FeatureKind):
        raise FormatError("value out of range", f"{path} has unknown kind {kind}")
    expected_size = _HEADER.size + 4 * num_frames * dim
    if len(blob) != expected_size:
        raise FormatError("size mismatch", f"{path} holds {len(blob)} bytes, header implies {expected_size}")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError("value out of range",
                          f"{path} holds {FeatureKind(kind).name.lower()}, expected {expected_kind.name.lower()}")
    matrix = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(num_frames, dim)
    if kind == FeatureKind.SCORES and (not np.all(np.isfinite(matrix)) or matrix.min() < 0 or matrix.max() > 1):
        raise FormatError("value out of range", f"score file {path} has values outside [0, 1]")
    return matrix.astype(np.float64)


def feature_path(directory: str, video_id: str) -> str:
    return os.path.join(directory, video_id + FEATURE_SUFFIX)


def load_features(directories: Sequence[str], video_id: str) -> np.ndarray:
    """Frame features of one video, concatenated across modality directories."""
    parts = [read_feature_file(feature_path(d, video_id), FeatureKind.FEATURES) for d in directories]
    lengths = {p.shape[0] for p in parts}
    if len(lengths) != 1:
        raise InputError(f"video {video_id}: feature directories disagree on the frame count {sorted(lengths)}")
    return np.concatenate(parts, axis=1)


def load_scores(directory: str, video_id: str) -> np.ndarray:
    return read_feature_file(feature_path(directory, video_id), FeatureKind.SCORES)


class InstanceDoc(BaseModel):
    label: str
    start_frame: int = Field(..., ge=1, description="first frame, counted from 1")
    end_frame: int = Field(..., ge=1, description="last frame, inclusive")


class AnnotationDoc(BaseModel):
    video_id: str
    num_frames: int = Field(..., ge=1)
    fps: float = Field(..., gt=0.0)
    classes: list[str] = Field(..., min_length=1)
    instances: list[InstanceDoc] = Field(default_factory=list)
    subset: Optional[Literal["validation", "test"]] = Field(
        None, description="training videos are 'validation', evaluation videos are 'test'")

    @model_validator(mode='after')
    def check_instances(self):
        for i, inst in enumerate(self.instances):
            if not inst.start_frame <= inst.end_frame <= self.num_frames:
                raise ValueError(f"instances.{i}: need 1 <= start_frame <= end_frame <= num_frames "
                                 f"({inst.start_frame}, {inst.end_frame}, {self.num_frames})")
            if inst.label not in self.classes:
                raise ValueError(f"instances.{i}.label: {inst.label!r} is not one of {self.classes}")
        return self


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    num_frames: int
    fps: float
    classes: tuple
    subset: Optional[str] = None


def _validate(model, document, path):
    try:
        return model.model_validate(document)
    except ValidationError as e:
        logger.error(f"{path} failed validation")
        raise FormatError("schema", f"{path}: {e}")


def load_annotations(path: str) -> list:
    """``[(VideoMeta, [GroundTruthInstance, ...]), ...]`` from one JSON file.

    The file holds one annotation document or a list of them; every document
    must share the same class vocabulary.
    """
    document = read_json_file(path)
    documents = document if isinstance(document, list) else [document]
    records, classes, seen = [], None, set()
    for index, doc in enumerate(documents):
        ann = _validate(AnnotationDoc, doc, f"{path}[{index}]")
        if classes is None:
            classes = ann.classes
        elif ann.classes != classes:
            raise FormatError("schema", f"{path}[{index}].classes: differs from the first document")
        if ann.video_id in seen:
            raise FormatError("schema", f"{path}[{index}].video_id: duplicate {ann.video_id!r}")
        seen.add(ann.video_id)
        meta = VideoMeta(ann.video_id, ann.num_frames, ann.fps, tuple(ann.classes), ann.subset)
        gts = [GroundTruthInstance(TemporalInterval(inst.start_frame - 1, inst.end_frame),
                                   classes.index(inst.label))
               for inst in ann.instances]
        records.append((meta, gts))
    return records


def annotation_document(meta: VideoMeta, gts: Sequence[GroundTruthInstance]) -> dict:
    doc = {
        "video_id": meta.video_id,
        "num_frames": meta.num_frames,
        "fps": meta.fps,
        "classes": list(meta.classes),
        "instances": [{"label": meta.classes[g.label], "start_frame": g.interval.start + 1,
                       "end_frame": g.interval.end} for g in gts],
    }
    if meta.subset is not None:
        doc["subset"] = meta.subset
    return doc


def save_annotations(path: str, records) -> None:
    save_json([annotation_document(meta, gts) for meta, gts in records], path)


class ItemDoc(BaseModel):
    start_frame: int = Field(..., ge=1)
    end_frame: int = Field(..., ge=1)
    label: Optional[str] = None
    score: float

    @model_validator(mode='after')
    def check_span(self):
        if self.end_frame < self.start_frame:
            raise ValueError(f"end_frame {self.end_frame} precedes start_frame {self.start_frame}")
        return self


class IntervalDoc(BaseModel):
    video_id: str
    items: list[ItemDoc] = Field(default_factory=list)


@dataclass(frozen=True)
class DocItem:
    interval: TemporalInterval
    score: float
    label: Optional[str] = None


def write_interval_doc(path: str, video_id: str, items: Sequence[DocItem]) -> None:
    """Proposals and detections share this document."""
    rows = []
    for item in items:
        row = {"start_frame": item.interval.start + 1, "end_frame": item.interval.end, "score": item.score}
        if item.label is not None:
            row["label"] = item.label
        rows.append(row)
    save_json({"video_id": video_id, "items": rows}, path)


def read_interval_doc(path: str) -> tuple:
    doc = _validate(IntervalDoc, read_json_file(path), path)
    items = [DocItem(TemporalInterval(it.start_frame - 1, it.end_frame), it.score, it.label) for it in doc.items]
    return doc.video_id, items


def interval_doc_path(directory: str, video_id: str) -> str:
    return os.path.join(directory, video_id + ".json")
