"""Command-line entry point: embed one sentence file with a list of models.

Exit codes: 0 when every model produced a file; 1 when at least one model
was skipped but at least one succeeded; 2 for usage errors; 3 for unusable
input data (missing or empty model or sentence files, or every model
failing).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import DataError, ExtractorError, ParameterError
from .extract import ExtractionJob, extract


def _read_model_ids(path: Path) -> list[str]:
    """Model ids from ``path``, one per line; blanks and # comments ignored."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    ids = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.append(line)
    if not ids:
        raise DataError(f"model file {path} lists no models")
    return ids


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hf-extract",
        description=(
            "Embed a fixed sentence list with each listed model and write "
            "one embedding-matrix file per model plus a job report."
        ),
    )
    parser.add_argument(
        "--models", required=True, type=Path,
        help="file of model ids or paths, one per line",
    )
    parser.add_argument(
        "--sentences", required=True, type=Path,
        help="sentence file, one sentence per line",
    )
    parser.add_argument(
        "--out", required=True, type=Path, help="output directory"
    )
    parser.add_argument(
        "--batch-size", type=int, default=32, help="sentences per forward pass"
    )
    parser.add_argument(
        "--device", default="cpu", help="torch device string, e.g. cpu or cuda"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model_ids = _read_model_ids(args.models)
        job = ExtractionJob(
            model_ids=tuple(model_ids),
            sentence_file=args.sentences,
            output_dir=args.out,
            batch_size=args.batch_size,
            device=args.device,
        )
        report = extract(job)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for w in report.written:
        print(f"wrote {w.file_name} ({w.n_rows} x {w.n_cols}) from {w.model_id}")
    for s in report.skipped:
        print(f"skipped {s.model_id}: {s.reason}")
    print(f"report: {report.report_path}")
    if not report.written:
        return 3
    return 1 if report.skipped else 0


if __name__ == "__main__":
    sys.exit(main())
