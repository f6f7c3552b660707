"""Embedding-matrix container and its on-disk formats.

An embedding matrix is the raw material of the package: N rows of sentence
embeddings in d columns, one matrix per encoder. Matrices are stored as
float32 on disk and promoted to float64 the moment they are read; all
computation downstream is float64.

Binary layout (little-endian), 32-byte header followed by the payload:

    magic    4 bytes  b"EMAP"
    version  u32      1
    n_rows   u64
    n_cols   u64
    dtype    u8       1 (float32)
    reserved 7 bytes  zero
    payload  n_rows * n_cols float32, row-major

Each binary artifact may carry a ``<path>.meta.json`` sidecar with encoder
metadata. Sidecars are canonical JSON: keys sorted, fixed separators, one
trailing newline, UTF-8. Canonical form makes byte equality meaningful.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    DegenerateInputError,
    FormatError,
    ValidationError,
)

MAGIC = b"EMAP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQB7x")
_DTYPE_FLOAT32 = 1

# Row norms may drift from 1.0 by accumulated float error when a matrix was
# normalized, serialized at 32 bits, and read back.
_NORMALIZED_ATOL = 1e-6


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(values, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EmbeddingMatrix:
    """An encoder's embedding table: one float64 row per sentence.

    Instances are immutable; ``values`` is a read-only array, so a matrix can
    be shared freely across threads.
    """

    encoder_id: str
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValidationError(
                f"embedding matrix must be 2-dimensional, got ndim={values.ndim}"
            )
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError(
                f"embedding matrix must be at least 1x1, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError(
                f"embedding matrix {self.encoder_id!r} contains non-finite entries"
            )
        if not self.encoder_id:
            raise ValidationError("encoder_id must be a non-empty string")
        object.__setattr__(self, "values", _freeze(values))
        if self.normalized:
            norms = np.linalg.norm(self.values, axis=1)
            bad = np.where(np.abs(norms - 1.0) > _NORMALIZED_ATOL)[0]
            if bad.size:
                raise ValidationError(
                    f"matrix {self.encoder_id!r} is flagged normalized but row "
                    f"{int(bad[0])} has norm {norms[bad[0]]!r}"
                )

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class EncoderRecord:
    """Descriptive metadata for one encoder, as stored in sidecars."""

    encoder_id: str
    encoder_type: str = "unknown"
    param_count: int | None = None
    dimensionality: int | None = None
    languages: tuple[str, ...] = field(default_factory=tuple)
    tasks: tuple[str, ...] = field(default_factory=tuple)
    datasets: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.encoder_id:
            raise ValidationError("encoder_id must be a non-empty string")
        if self.param_count is not None and self.param_count < 0:
            raise ValidationError("param_count must be nonnegative")
        for name in ("languages", "tasks", "datasets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def to_mapping(self) -> dict:
        out = dataclasses.asdict(self)
        for name in ("languages", "tasks", "datasets"):
            out[name] = list(out[name])
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "EncoderRecord":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in mapping.items() if k in known}
        return cls(**kwargs)


def write_sidecar(path: str | Path, mapping: dict) -> Path:
    """Write ``mapping`` as canonical JSON to ``<path>.meta.json``."""
    sidecar = Path(str(path) + ".meta.json")
    text = json.dumps(mapping, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    sidecar.write_text(text + "\n", encoding="utf-8")
    return sidecar


def read_sidecar(path: str | Path) -> dict | None:
    """Read the sidecar for ``path``; None when absent."""
    sidecar = Path(str(path) + ".meta.json")
    if not sidecar.exists():
        return None
    try:
        loaded = json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"sidecar {sidecar} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise FormatError(f"sidecar {sidecar} must hold a JSON object")
    return loaded


def write_embedding_matrix(
    matrix: EmbeddingMatrix,
    path: str | Path,
    record: EncoderRecord | None = None,
    extra_meta: dict | None = None,
) -> Path:
    """Serialize ``matrix`` to ``path`` (float32 payload) plus a sidecar.

    The sidecar preserves encoder_id and the normalized flag so a read
    round-trips the full object, not just the numbers. ``record`` fields and
    ``extra_meta`` entries are merged into the sidecar when given.
    """
    path = Path(path)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, matrix.n_rows, matrix.n_cols, _DTYPE_FLOAT32
    )
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    meta: dict = {"encoder_id": matrix.encoder_id, "normalized": matrix.normalized}
    if record is not None:
        if record.encoder_id != matrix.encoder_id:
            raise ValidationError(
                f"record id {record.encoder_id!r} does not match matrix id "
                f"{matrix.encoder_id!r}"
            )
        meta.update(record.to_mapping())
    if extra_meta:
        meta.update(extra_meta)
    write_sidecar(path, meta)
    return path


def read_embedding_matrix(path: str | Path) -> EmbeddingMatrix:
    """Read a matrix written by :func:`write_embedding_matrix`.

    The payload is promoted to float64. encoder_id and the normalized flag
    come from the sidecar when present, else the filename stem / False.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path} is too short to hold a header")
    magic, version, n_rows, n_cols, dtype = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path} does not start with magic {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path} has unsupported version {version}")
    if dtype != _DTYPE_FLOAT32:
        raise FormatError(f"{path} has unknown dtype code {dtype}")
    expected = n_rows * n_cols * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path} declares {n_rows}x{n_cols} float32 ({expected} bytes) but "
            f"carries {len(payload)} payload bytes"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    values = values.reshape(n_rows, n_cols)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path} contains non-finite entries")
    meta = read_sidecar(path)
    encoder_id = _strip_suffix(path.name)
    normalized = False
    if meta is not None:
        encoder_id = meta.get("encoder_id", encoder_id)
        normalized = bool(meta.get("normalized", False))
    return EmbeddingMatrix(encoder_id=encoder_id, values=values, normalized=normalized)


def _strip_suffix(name: str) -> str:
    return name.rsplit(".", 1)[0] if "." in name else name


def l2_normalize_rows(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit Euclidean norm.

    A matrix whose rows are already unit-norm passes through unchanged up to
    one rounding division. Zero rows cannot be normalized.
    """
    norms = np.linalg.norm(matrix.values, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise DegenerateInputError(
            f"matrix {matrix.encoder_id!r} has a zero row at index {int(zero[0])}"
        )
    values = matrix.values / norms[:, None]
    return EmbeddingMatrix(
        encoder_id=matrix.encoder_id, values=values, normalized=True
    )
