"""Batch embedding extraction: models in, embedding-matrix files out.

Every model in a job embeds the same sentence list, so all output files of
one job share their row count. Outputs use the embedding-matrix format of
the encmap library (float32 payload plus JSON sidecar, written exactly as
the model emits them, with normalization left to the consumer) so they feed
straight into its spectrum pipeline.

A model that fails to load or run is skipped and recorded in the job report
rather than aborting the job; only an unusable sentence file is fatal. File
writes are atomic (temporary name in the target directory, then rename), so
an interrupted job never leaves a truncated matrix behind.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from encmap import EmbeddingMatrix, EncoderRecord, write_embedding_matrix

from .errors import ParameterError
from .sentences import read_sentences

REPORT_NAME = "job_report.json"


@dataclass(frozen=True)
class ExtractionJob:
    """One batch of models to embed against one fixed sentence file."""

    model_ids: tuple[str, ...]
    sentence_file: Path
    output_dir: Path
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "sentence_file", Path(self.sentence_file))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if not self.model_ids:
            raise ParameterError("a job needs at least one model id")
        if self.batch_size < 1:
            raise ParameterError(
                f"batch_size must be positive, got {self.batch_size}"
            )


@dataclass(frozen=True)
class WrittenEmbedding:
    """One successfully embedded model and the file it produced."""

    model_id: str
    encoder_id: str
    file_name: str
    n_rows: int
    n_cols: int


@dataclass(frozen=True)
class SkippedModel:
    """One model that produced no file, and why."""

    model_id: str
    reason: str


@dataclass(frozen=True)
class JobReport:
    """Everything extract() did: written files, skips, and the report path."""

    sentence_count: int
    written: tuple[WrittenEmbedding, ...]
    skipped: tuple[SkippedModel, ...]
    report_path: Path


def _unique_encoder_id(model_id: str, used: set[str]) -> str:
    """Filesystem-safe id derived from the model id, deduplicated per job."""
    base = re.sub(r"[^A-Za-z0-9._-]+", "__", model_id).strip("_.") or "model"
    candidate = base
    serial = 1
    while candidate in used:
        serial += 1
        candidate = f"{base}-{serial}"
    return candidate


def _encoder_type(model) -> str:
    """The underlying architecture's self-declared model type, else unknown."""
    for module in model.modules():
        model_type = getattr(getattr(module, "config", None), "model_type", None)
        if model_type:
            return str(model_type)
    return "unknown"


def _embed(
    model_id: str, sentences: list[str], batch_size: int, device: str
) -> tuple[np.ndarray, str, int]:
    # Deferred import: loading torch stacks takes seconds and is only needed
    # once a job actually runs.
    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer(model_id, device=device)
    values = model.encode(
        sentences,
        batch_size=batch_size,
        convert_to_numpy=True,
        normalize_embeddings=False,
        show_progress_bar=False,
    )
    param_count = sum(int(p.numel()) for p in model.parameters())
    return np.asarray(values), _encoder_type(model), param_count


def _atomic_write_matrix(
    matrix: EmbeddingMatrix,
    record: EncoderRecord,
    directory: Path,
    file_name: str,
    extra_meta: dict,
) -> None:
    tmp = directory / f".tmp-{file_name}"
    write_embedding_matrix(matrix, tmp, record=record, extra_meta=extra_meta)
    # Sidecar first: readers treat the matrix file as the completion marker.
    os.replace(f"{tmp}.meta.json", directory / f"{file_name}.meta.json")
    os.replace(tmp, directory / file_name)


def _write_report(
    job: ExtractionJob,
    sentence_count: int,
    written: list[WrittenEmbedding],
    skipped: list[SkippedModel],
) -> Path:
    payload = {
        "sentence_file": str(job.sentence_file),
        "sentence_count": sentence_count,
        "batch_size": job.batch_size,
        "device": job.device,
        "written": [dataclasses.asdict(w) for w in written],
        "skipped": [dataclasses.asdict(s) for s in skipped],
    }
    tmp = job.output_dir / f".tmp-{REPORT_NAME}"
    tmp.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    final = job.output_dir / REPORT_NAME
    os.replace(tmp, final)
    return final


def extract(job: ExtractionJob) -> JobReport:
    """Embed the job's sentence file with every model, skipping failures.

    Raises DataError when the sentence file is missing or empty; any
    per-model failure (download, auth, loading, inference) is recorded as a
    skip instead of raised. Returns the full report, also written as JSON to
    the output directory.
    """
    sentences = read_sentences(job.sentence_file)
    job.output_dir.mkdir(parents=True, exist_ok=True)
    used_ids: set[str] = set()
    written: list[WrittenEmbedding] = []
    skipped: list[SkippedModel] = []
    for model_id in job.model_ids:
        try:
            values, encoder_type, param_count = _embed(
                model_id, sentences, job.batch_size, job.device
            )
        except Exception as exc:  # per-model failures are skips, never fatal
            skipped.append(
                SkippedModel(model_id=model_id, reason=f"{type(exc).__name__}: {exc}")
            )
            continue
        if values.ndim != 2 or values.shape[0] != len(sentences):
            skipped.append(
                SkippedModel(
                    model_id=model_id,
                    reason=(
                        f"model returned shape {values.shape} for "
                        f"{len(sentences)} sentences"
                    ),
                )
            )
            continue
        encoder_id = _unique_encoder_id(model_id, used_ids)
        used_ids.add(encoder_id)
        matrix = EmbeddingMatrix(encoder_id=encoder_id, values=values)
        record = EncoderRecord(
            encoder_id=encoder_id,
            encoder_type=encoder_type,
            param_count=param_count,
            dimensionality=int(values.shape[1]),
        )
        file_name = f"{encoder_id}.emap"
        _atomic_write_matrix(
            matrix,
            record,
            job.output_dir,
            file_name,
            extra_meta={"model_id": model_id, "sentence_count": len(sentences)},
        )
        written.append(
            WrittenEmbedding(
                model_id=model_id,
                encoder_id=encoder_id,
                file_name=file_name,
                n_rows=int(values.shape[0]),
                n_cols=int(values.shape[1]),
            )
        )
    report_path = _write_report(job, len(sentences), written, skipped)
    return JobReport(
        sentence_count=len(sentences),
        written=tuple(written),
        skipped=tuple(skipped),
        report_path=report_path,
    )
