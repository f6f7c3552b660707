"""Trace-normalized Gram spectra of embedding matrices.

For an N x d embedding matrix A, the Gram matrix G = A A^T rescaled to unit
trace is a density operator: symmetric, positive semidefinite, trace one. Its
nonzero eigenvalues are the squared singular values of A divided by their sum,
and its eigenvectors are A's left singular vectors. The fast path therefore
never materializes the N x N Gram matrix; a thin SVD of A gives the same
spectrum in O(N d^2).

A deliberately naive dense route (:func:`explicit_spectrum_oracle`) builds the
Gram matrix and eigendecomposes it, so the two routes can be checked against
each other. Keep them independent: the oracle must not call the fast path.

On-disk layout (little-endian), header then payload:

    magic    4 bytes  b"ESPC"
    version  u32      1
    n        u64      ambient dimension N
    k        u64      retained rank K
    payload  K float64 eigenvalues, then N*K float64 eigenvector
             entries in column-major order
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    DegenerateInputError,
    FormatError,
    NumericalError,
    ResourceLimitError,
    ValidationError,
)
from .io import EmbeddingMatrix, read_sidecar, write_sidecar

MAGIC = b"ESPC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

DEFAULT_RANK_TOLERANCE = 1e-12

# Hard cap for the dense oracle; it exists for cross-checking, not production.
_ORACLE_MAX_N = 2048


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive (first index wins ties)."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


@dataclass(frozen=True)
class DensitySpectrum:
    """Retained eigenvalues and eigenvectors of a unit-trace Gram matrix.

    ``eigenvalues`` holds the K values above the rank tolerance in descending
    order; they sum to one minus only what truncation discarded (the retained
    spectrum is not renormalized). ``eigenvectors`` is N x K with orthonormal
    columns, each column's largest-magnitude entry made positive so that the
    decomposition is deterministic.
    """

    encoder_id: str
    ambient_dim: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        evals = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        evecs = np.ascontiguousarray(self.eigenvectors, dtype=np.float64)
        if evals.ndim != 1:
            raise ValidationError("eigenvalues must be a 1-d array")
        if evecs.ndim != 2 or evecs.shape != (self.ambient_dim, evals.shape[0]):
            raise ValidationError(
                f"eigenvectors must be {self.ambient_dim}x{evals.shape[0]}, "
                f"got {evecs.shape}"
            )
        if evals.shape[0] < 1:
            raise ValidationError("a spectrum must retain at least one eigenvalue")
        evals.setflags(write=False)
        evecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", evals)
        object.__setattr__(self, "eigenvectors", evecs)

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.shape[0])

    def validate(self) -> None:
        """Check the spectral invariants, raising ValidationError on failure."""
        ev = self.eigenvalues
        if np.any(ev < 0):
            raise ValidationError(f"{self.encoder_id!r}: negative eigenvalue")
        if np.any(np.diff(ev) > 0):
            raise ValidationError(f"{self.encoder_id!r}: eigenvalues not sorted descending")
        total = float(ev.sum())
        if abs(total - 1.0) > 1e-10:
            raise ValidationError(
                f"{self.encoder_id!r}: eigenvalue sum {total!r} is not 1 within 1e-10"
            )
        gram = self.eigenvectors.T @ self.eigenvectors
        if not np.allclose(gram, np.eye(self.rank), atol=1e-8):
            raise ValidationError(f"{self.encoder_id!r}: eigenvectors not orthonormal")


def compute_spectrum(
    matrix: EmbeddingMatrix, rank_tolerance: float = DEFAULT_RANK_TOLERANCE
) -> DensitySpectrum:
    """Spectrum of the unit-trace Gram matrix of ``matrix``, via thin SVD.

    Eigenvalues are the squared singular values normalized by their sum;
    eigenvalues at or below ``rank_tolerance`` are dropped and the rest are
    kept as-is (no renormalization). Raises DegenerateInputError for an
    all-zero matrix and NumericalError if the decomposition fails.
    """
    if rank_tolerance < 0:
        raise ValidationError(f"rank_tolerance must be nonnegative, got {rank_tolerance!r}")
    values = matrix.values
    if not values.any():
        raise DegenerateInputError(
            f"matrix {matrix.encoder_id!r} is all zeros; its Gram matrix has no spectrum"
        )
    try:
        u, s, _ = np.linalg.svd(values, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD failed for {matrix.encoder_id!r} "
            f"(shape {values.shape}): {exc}"
        ) from exc
    sq = s * s
    eigenvalues = sq / sq.sum()
    keep = eigenvalues > rank_tolerance
    if not keep.any():
        raise DegenerateInputError(
            f"matrix {matrix.encoder_id!r} retains no eigenvalue above {rank_tolerance!r}"
        )
    return DensitySpectrum(
        encoder_id=matrix.encoder_id,
        ambient_dim=matrix.n_rows,
        eigenvalues=eigenvalues[keep],
        eigenvectors=_fix_signs(u[:, keep]),
    )


def explicit_spectrum_oracle(
    matrix: EmbeddingMatrix,
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
    max_n: int = _ORACLE_MAX_N,
) -> DensitySpectrum:
    """Reference spectrum via the dense N x N Gram matrix.

    Builds G = A A^T explicitly, trace-normalizes it, and eigendecomposes with
    a symmetric solver. Quadratic in N by design; refuses N > ``max_n``.
    """
    n = matrix.n_rows
    if n > max_n:
        raise ResourceLimitError(
            f"dense oracle capped at N={max_n}, got N={n}"
        )
    values = matrix.values
    if not values.any():
        raise DegenerateInputError(
            f"matrix {matrix.encoder_id!r} is all zeros; its Gram matrix has no spectrum"
        )
    gram = values @ values.T
    rho = gram / np.trace(gram)
    try:
        evals, evecs = np.linalg.eigh(rho)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for {matrix.encoder_id!r}: {exc}"
        ) from exc
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    keep = evals > rank_tolerance
    if not keep.any():
        raise DegenerateInputError(
            f"matrix {matrix.encoder_id!r} retains no eigenvalue above {rank_tolerance!r}"
        )
    return DensitySpectrum(
        encoder_id=matrix.encoder_id,
        ambient_dim=n,
        eigenvalues=evals[keep],
        eigenvectors=_fix_signs(evecs[:, keep]),
    )


def von_neumann_entropy(spectrum: DensitySpectrum) -> float:
    """Entropy -sum(lambda_i ln lambda_i), with 0 ln 0 read as 0."""
    ev = spectrum.eigenvalues
    pos = ev > 0
    return float(-np.sum(ev[pos] * np.log(ev[pos])))


def unit_base_spectrum(n: int) -> DensitySpectrum:
    """Spectrum of the maximally mixed reference state on R^n: I/n exactly."""
    if n < 1:
        raise ValidationError(f"ambient dimension must be positive, got {n}")
    return DensitySpectrum(
        encoder_id=f"unit-base-{n}",
        ambient_dim=n,
        eigenvalues=np.full(n, 1.0 / n),
        eigenvectors=np.eye(n),
    )


def write_spectrum(
    spectrum: DensitySpectrum, path: str | Path, extra_meta: dict | None = None
) -> Path:
    """Serialize a spectrum (float64 payload) plus its sidecar."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, spectrum.ambient_dim, spectrum.rank)
    evals = np.ascontiguousarray(spectrum.eigenvalues, dtype="<f8").tobytes()
    evecs = spectrum.eigenvectors.astype("<f8").ravel(order="F").tobytes()
    path.write_bytes(header + evals + evecs)
    meta: dict = {"encoder_id": spectrum.encoder_id, "ambient_dim": spectrum.ambient_dim}
    if extra_meta:
        meta.update(extra_meta)
    write_sidecar(path, meta)
    return path


def read_spectrum(path: str | Path) -> DensitySpectrum:
    """Read a spectrum written by :func:`write_spectrum`; float64 round-trips exactly."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path} is too short to hold a header")
    magic, version, n, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path} does not start with magic {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path} has unsupported version {version}")
    expected = (k + n * k) * 8
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path} declares N={n} K={k} ({expected} payload bytes) but "
            f"carries {len(payload)}"
        )
    evals = np.frombuffer(payload[: k * 8], dtype="<f8").astype(np.float64)
    evecs = np.frombuffer(payload[k * 8 :], dtype="<f8").astype(np.float64)
    evecs = evecs.reshape((n, k), order="F")
    meta = read_sidecar(path)
    encoder_id = path.name.rsplit(".", 1)[0]
    if meta is not None:
        encoder_id = meta.get("encoder_id", encoder_id)
    spectrum = DensitySpectrum(
        encoder_id=encoder_id, ambient_dim=n, eigenvalues=evals, eigenvectors=evecs
    )
    # Disk bytes are untrusted; a well-formed file can still carry a broken
    # spectrum, so the numerical invariants are re-checked here.
    spectrum.validate()
    return spectrum


def max_principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle (radians) between the column spans of a and b.

    Both inputs must have orthonormal columns of equal count. Used to compare
    eigenvector subspaces where individual columns are only defined up to
    rotation within degenerate eigenspaces.
    """
    if a.shape != b.shape:
        raise ValidationError(f"subspace shapes differ: {a.shape} vs {b.shape}")
    sv = np.linalg.svd(a.T @ b, compute_uv=False)
    cos = min(1.0, max(-1.0, float(sv.min())))
    return math.acos(cos)
