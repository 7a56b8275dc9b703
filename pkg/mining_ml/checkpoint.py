"""
Versioned binary checkpoints.

Layout (all integers little-endian):
    b"MROI" | u16 format version | u16 len + architecture tag
    | u32 len + JSON header (config, feature order, metadata; sorted keys)
    | u32 tensor count | per tensor: u16 len + name, u8 ndim, u32 dims, float64 data
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from mining_etl.core.errors import CheckpointError, ShapeError
from mining_etl.core.models import FEATURE_NAMES

from .lstm_baseline import ARCH_TAG as LSTM_TAG, LstmBaseline, LstmConfig
from .model import ARCH_TAG as MINEROI_TAG, MineROINet, ModelConfig
from .preprocessing import Scaler

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

MAGIC = b"MROI"
FORMAT_VERSION = 1

Model = Union[MineROINet, LstmBaseline]

ARCHITECTURES = {
    MINEROI_TAG: (MineROINet, ModelConfig),
    LSTM_TAG: (LstmBaseline, LstmConfig),
}

_SCALER_MIN = "scaler.min"
_SCALER_MAX = "scaler.max"


@dataclass
class Checkpoint:
    model: Model
    scaler: Optional[Scaler] = None
    feature_order: Tuple[str, ...] = FEATURE_NAMES
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def window(self) -> int:
        return self.model.config.window


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _tensor_bytes(name: str, value: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(value, dtype="<f8")
    out = struct.pack("<H", len(encoded)) + encoded + struct.pack("<B", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return out + arr.tobytes()


def to_bytes(checkpoint: Checkpoint) -> bytes:
    model = checkpoint.model
    header = {
        "config": model.config_dict(),
        "feature_order": list(checkpoint.feature_order),
        "metadata": checkpoint.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tag = model.arch_tag.encode("utf-8")

    tensors = dict(model.params)
    if checkpoint.scaler is not None:
        tensors[_SCALER_MIN] = checkpoint.scaler.data_min
        tensors[_SCALER_MAX] = checkpoint.scaler.data_max

    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<H", len(tag)), tag,
             struct.pack("<I", len(header_bytes)), header_bytes, struct.pack("<I", len(tensors))]
    parts.extend(_tensor_bytes(name, tensors[name]) for name in sorted(tensors))
    return b"".join(parts)


def from_bytes(data: bytes, expected_arch: Optional[str] = None) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    (tag_len,) = reader.unpack("<H")
    arch = reader.take(tag_len).decode("utf-8")
    if arch not in ARCHITECTURES:
        raise CheckpointError(f"unknown architecture tag {arch!r}")
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(f"checkpoint holds {arch!r}, expected {expected_arch!r}")

    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e

    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64)
        tensors[name] = values.reshape(shape)
    if reader.pos != len(data):
        raise CheckpointError("trailing bytes after the last tensor")

    model_cls, config_cls = ARCHITECTURES[arch]
    config = config_cls.create(source="checkpoint header", **header["config"])
    scaler = None
    if _SCALER_MIN in tensors:
        scaler = Scaler(tensors.pop(_SCALER_MIN), tensors.pop(_SCALER_MAX))
    try:
        model = model_cls(config, params=tensors)
    except ShapeError as e:
        raise CheckpointError(f"tensors do not match the {arch} header: {e}") from e
    return Checkpoint(model=model, scaler=scaler, feature_order=tuple(header["feature_order"]),
                      metadata=header.get("metadata", {}))


def save_checkpoint(path: Path, model: Model, scaler: Optional[Scaler] = None,
                    feature_order: Sequence[str] = FEATURE_NAMES,
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(Checkpoint(model, scaler, tuple(feature_order), metadata or {}))
    path.write_bytes(data)
    logger.info(f"Saved {model.arch_tag} checkpoint ({model.n_parameters} parameters) to {path}")
    return path


def load_checkpoint(path: Path, expected_arch: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes(), expected_arch)
