"""Model checkpoints.

Layout (little-endian): ``ETPM``, version, model kind and parameter count
as u32, then per parameter the name length, UTF-8 name, rank, one u32 per
dimension and the float64 payload; a CRC-32 of everything before it closes
the file.
"""
import os
import struct
import zlib
from enum import IntEnum

import numpy as np

from etp.Localization import LnModel
from etp.Refinement import RnModel
from etp.Utils.errors import FormatError, InputError
from logs import logger

CHECKPOINT_MAGIC = b"ETPM"
CHECKPOINT_VERSION = 1
_U32 = struct.Struct("<I")


class ModelKind(IntEnum):
    RN = 0
    LN = 1


def _kind_of(model) -> ModelKind:
    if isinstance(model, RnModel):
        return ModelKind.RN
    if isinstance(model, LnModel):
        return ModelKind.LN
    raise InputError(f"cannot checkpoint a {type(model).__name__}")


def encode_state(kind: ModelKind, state: dict) -> bytes:
    chunks = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(int(kind)), _U32.pack(len(state))]
    for name in sorted(state):
        value = np.asarray(state[name], dtype="<f8")
        if not np.all(np.isfinite(value)):
            raise InputError(f"parameter {name} holds non-finite values")
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(value.ndim))
        chunks.extend(_U32.pack(d) for d in value.shape)
        chunks.append(value.tobytes(order='C'))
    body = b"".join(chunks)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise FormatError("size mismatch", f"{self.path} ends inside a parameter record")
        chunk = self.blob[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_state(blob: bytes, path: str = "<bytes>") -> tuple:
    """``(ModelKind, {name: float64 array})`` from checkpoint bytes."""
    if len(blob) < 20:
        raise FormatError("size mismatch", f"{path} is too short to be a checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad magic", f"{path} starts with {blob[:4]!r}")
    body, (crc,) = blob[:-4], _U32.unpack(blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("crc mismatch", f"{path} fails its CRC-32 check")

    reader = _Reader(body, path)
    reader.take(4)
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError("unsupported version", f"{path} has version {version}")
    kind = reader.u32()
    if kind not in tuple(ModelKind):
        raise FormatError("unknown model kind", f"{path} declares kind {kind}")
    state = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
        if name in state:
            raise FormatError("duplicate parameter name", f"{path} repeats {name}")
        state[name] = value.astype(np.float64)
    if reader.pos != len(body):
        raise FormatError("size mismatch", f"{path} has {len(body) - reader.pos} trailing bytes")
    return ModelKind(kind), state


def save_state(path: str, kind: ModelKind, state: dict) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode_state(kind, state))


def load_state(path: str) -> tuple:
    try:
        with open(path, 'rb') as f:
            return decode_state(f.read(), path)
    except FileNotFoundError:
        raise InputError(f"File not found: {path}")


def save_checkpoint(path: str, model) -> None:
    kind = _kind_of(model)
    save_state(path, kind, model.state_dict())
    logger.info(f"saved {kind.name} checkpoint with {len(model.parameters())} parameters to {path}")


def load_checkpoint(path: str, expected_kind=None):
    kind, state = load_state(path)
    if expected_kind is not None and kind != expected_kind:
        raise FormatError("unknown model kind", f"{path} holds a {kind.name} model, expected {expected_kind.name}")
    if kind == ModelKind.RN:
        return RnModel.from_state(state)
    return LnModel.from_state(state)
