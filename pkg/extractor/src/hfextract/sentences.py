"""Sentence-file utilities: reading and seeded subsampling.

A sentence file is UTF-8 text, one sentence per line. Blank and
whitespace-only lines are ignored so that trailing newlines and editor
artifacts never change the sentence count.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError


def read_sentences(path: str | Path) -> list[str]:
    """All nonblank lines of ``path``, stripped; DataError when none remain."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read sentence file {path}: {exc}") from exc
    sentences = [line.strip() for line in text.splitlines()]
    sentences = [line for line in sentences if line]
    if not sentences:
        raise DataError(f"sentence file {path} holds no sentences")
    return sentences


def sample_sentences(
    source: str | Path, destination: str | Path, n: int, seed: int
) -> Path:
    """Write a seeded uniform sample of ``n`` source lines to ``destination``.

    Sampling contract: output lines are the source lines indexed by
    ``np.random.default_rng(seed).permutation(count)[:n]``, in that order.
    Same seed and source give byte-identical output; n equal to the source
    count gives a full permuted copy.
    """
    if n < 1:
        raise ParameterError(f"sample size must be positive, got {n}")
    lines = read_sentences(source)
    if n > len(lines):
        raise DataError(
            f"asked for {n} sentences but {source} holds only {len(lines)}"
        )
    picked = np.random.default_rng(seed).permutation(len(lines))[:n]
    destination = Path(destination)
    destination.write_text(
        "".join(lines[i] + "\n" for i in picked), encoding="utf-8"
    )
    return destination
