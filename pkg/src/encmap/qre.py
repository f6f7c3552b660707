"""Quantum relative entropy between density spectra, and per-axis features.

For density operators rho and sigma the relative entropy is

    S(rho || sigma) = Tr(rho ln rho) - Tr(rho ln sigma).

A rank-deficient sigma makes the second trace diverge, so sigma's null space
is padded with a small floor: sigma_eps = sigma + eps * P_null. In the
eigenbasis {(lambda_i, v_i)} of rho and {(mu_j, u_j)} of sigma this gives

    S = sum_i lambda_i ln lambda_i - sum_i lambda_i (C_i + r_i ln eps)

    C_i = sum_j (v_i . u_j)^2 ln mu_j          aligned cross-entropy
    c_i = sum_j (v_i . u_j)^2                  captured mass, in [0, 1]
    r_i = 1 - c_i                              residual mass

The whole computation runs through one K_rho x K_sigma projection matrix
V^T U; dense N x N operators appear only in the testing oracle.

Feature vectors specialize rho to the maximally mixed state I/N, whose
eigenvectors are the standard basis: the projections v_w . u_j collapse to
u_j's w-th coordinate, so each axis w contributes

    phi_w = (1/N) ln(1/N) - (1/N) (C_w + r_w ln eps)

and the entries sum to the full divergence from the mixed state to sigma.

On-disk layout for feature vectors (little-endian):

    magic     4 bytes  b"EFVC"
    version   u32      1
    n         u64      ambient dimension N
    epsilon   f64
    qre_total f64
    payload   N float64 feature values
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    ParameterError,
    ResourceLimitError,
    ShapeError,
    ValidationError,
)
from .io import read_sidecar, write_sidecar
from .spectral import DensitySpectrum

MAGIC = b"EFVC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQdd")

# Null-space floor. Intended usage keeps epsilon below the smallest retained
# eigenvalue of sigma so the floor never outranks real spectrum; that bound is
# advisory because heavily noised inputs legitimately carry eigenvalues below
# any fixed floor.
DEFAULT_EPSILON = math.exp(-12.0)

_ORACLE_MAX_N = 512


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 < epsilon < 1.0):
        raise ParameterError(
            f"epsilon must lie in (0, 1), got {epsilon!r}"
        )


@dataclass(frozen=True)
class QreBreakdown:
    """Per-eigenvector decomposition of one relative-entropy evaluation.

    Arrays are indexed by rho's retained eigenvectors. ``captured_mass`` and
    ``residual_mass`` sum to one exactly by construction; ``total`` is the
    relative-entropy value assembled from these very components.
    """

    captured_mass: np.ndarray
    residual_mass: np.ndarray
    aligned_cross_entropy: np.ndarray
    total: float
    epsilon: float

    def __post_init__(self) -> None:
        for name in ("captured_mass", "residual_mass", "aligned_cross_entropy"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def qre(
    rho: DensitySpectrum, sigma: DensitySpectrum, epsilon: float = DEFAULT_EPSILON
) -> QreBreakdown:
    """Relative entropy of ``rho`` against epsilon-padded ``sigma``.

    Both spectra must live in the same ambient dimension. The projection
    matrix V^T U is the only object formed; cost is O(N K_rho K_sigma).
    """
    if rho.ambient_dim != sigma.ambient_dim:
        raise ShapeError(
            f"ambient dimensions differ: rho has {rho.ambient_dim}, "
            f"sigma has {sigma.ambient_dim}"
        )
    _check_epsilon(epsilon)
    lam = rho.eigenvalues
    mu = sigma.eigenvalues
    proj = rho.eigenvectors.T @ sigma.eigenvectors
    weights = proj * proj
    aligned = weights @ np.log(mu)
    captured = np.clip(weights.sum(axis=1), 0.0, 1.0)
    residual = 1.0 - captured
    log_eps = math.log(epsilon)
    total = float(np.dot(lam, np.log(lam)) - np.dot(lam, aligned + residual * log_eps))
    return QreBreakdown(
        captured_mass=captured,
        residual_mass=residual,
        aligned_cross_entropy=aligned,
        total=total,
        epsilon=epsilon,
    )


@dataclass(frozen=True)
class FeatureVector:
    """Per-axis divergence contributions of one encoder against the mixed state.

    ``values[w]`` is axis w's share of the divergence; the entries sum to
    ``qre_total``. Vectors are comparable only when they share ambient
    dimension and epsilon.
    """

    encoder_id: str
    values: np.ndarray
    epsilon: float
    qre_total: float

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] < 1:
            raise ValidationError("feature values must form a nonempty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValidationError(
                f"feature vector {self.encoder_id!r} contains non-finite entries"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def ambient_dim(self) -> int:
        return int(self.values.shape[0])


def feature_vector(
    sigma: DensitySpectrum, epsilon: float = DEFAULT_EPSILON
) -> FeatureVector:
    """Feature vector of ``sigma``: divergence from the mixed state, per axis.

    Uses the standard-basis specialization, so the mixed state's N x N
    eigenvector matrix is never formed: squared basis projections are just
    squared rows of sigma's eigenvector matrix. Inner sums run through fixed
    matrix-vector products, so output is bitwise deterministic however many
    encoders are processed in parallel.
    """
    _check_epsilon(epsilon)
    n = sigma.ambient_dim
    weights = sigma.eigenvectors * sigma.eigenvectors
    aligned = weights @ np.log(sigma.eigenvalues)
    captured = np.clip(weights.sum(axis=1), 0.0, 1.0)
    residual = 1.0 - captured
    base = 1.0 / n
    values = base * math.log(base) - base * (aligned + residual * math.log(epsilon))
    return FeatureVector(
        encoder_id=sigma.encoder_id,
        values=values,
        epsilon=epsilon,
        qre_total=float(values.sum()),
    )


def closed_form_qre_total(sigma: DensitySpectrum, epsilon: float = DEFAULT_EPSILON) -> float:
    """Closed form of the feature-vector sum: an independent identity check.

    Summing the per-axis contributions over the full basis and applying
    Parseval collapses the divergence to

        -ln N - (1/N) sum_j ln mu_j - ((N - K)/N) ln eps.
    """
    _check_epsilon(epsilon)
    n = sigma.ambient_dim
    k = sigma.rank
    return float(
        -math.log(n)
        - np.log(sigma.eigenvalues).sum() / n
        - ((n - k) / n) * math.log(epsilon)
    )


def qre_dense_oracle(
    rho_matrix: np.ndarray, sigma: DensitySpectrum, epsilon: float = DEFAULT_EPSILON
) -> float:
    """Reference relative entropy via dense matrix logarithms.

    Materializes sigma_eps = U diag(mu) U^T + eps (I - U U^T) as a full
    matrix, takes its logarithm by symmetric eigendecomposition, and
    evaluates Tr(rho ln rho) - Tr(rho ln sigma_eps) directly. Testing oracle
    only: quadratic memory, capped ambient dimension.
    """
    _check_epsilon(epsilon)
    rho_matrix = np.asarray(rho_matrix, dtype=np.float64)
    n = sigma.ambient_dim
    if n > _ORACLE_MAX_N:
        raise ResourceLimitError(f"dense oracle capped at N={_ORACLE_MAX_N}, got N={n}")
    if rho_matrix.shape != (n, n):
        raise ShapeError(
            f"rho must be {n}x{n} to match sigma, got {rho_matrix.shape}"
        )
    if not np.allclose(rho_matrix, rho_matrix.T, atol=1e-8):
        raise ValidationError("rho is not symmetric within 1e-8")
    if abs(float(np.trace(rho_matrix)) - 1.0) > 1e-8:
        raise ValidationError("rho does not have unit trace within 1e-8")
    rho_evals, _ = np.linalg.eigh(rho_matrix)
    if rho_evals.min() < -1e-8:
        raise ValidationError("rho is not positive semidefinite within 1e-8")

    u = sigma.eigenvectors
    sigma_eps = (u * sigma.eigenvalues) @ u.T + epsilon * (np.eye(n) - u @ u.T)
    w, q = np.linalg.eigh(sigma_eps)
    log_sigma = (q * np.log(w)) @ q.T

    # Tr(rho ln rho) evaluated spectrally with the 0 ln 0 = 0 convention;
    # eigh can return tiny negative eigenvalues for a PSD input.
    pos = rho_evals > 1e-300
    term1 = float(np.sum(rho_evals[pos] * np.log(rho_evals[pos])))
    term2 = float(np.trace(rho_matrix @ log_sigma))
    return term1 - term2


def write_feature_vector(
    vector: FeatureVector, path: str | Path, extra_meta: dict | None = None
) -> Path:
    """Serialize a feature vector (float64 payload) plus its sidecar.

    The sidecar records encoder_id, epsilon, and the observed minimum entry
    (entries are usually positive but are not guaranteed to be).
    """
    path = Path(path)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, vector.ambient_dim, vector.epsilon, vector.qre_total
    )
    payload = np.ascontiguousarray(vector.values, dtype="<f8").tobytes()
    path.write_bytes(header + payload)
    meta: dict = {
        "encoder_id": vector.encoder_id,
        "epsilon": vector.epsilon,
        "qre_total": vector.qre_total,
        "min_value": float(vector.values.min()),
    }
    if extra_meta:
        meta.update(extra_meta)
    write_sidecar(path, meta)
    return path


def read_feature_vector(path: str | Path) -> FeatureVector:
    """Read a feature vector written by :func:`write_feature_vector`."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path} is too short to hold a header")
    magic, version, n, epsilon, qre_total = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path} does not start with magic {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path} has unsupported version {version}")
    payload = raw[_HEADER.size :]
    if len(payload) != n * 8:
        raise CorruptionError(
            f"{path} declares N={n} ({n * 8} payload bytes) but carries {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    meta = read_sidecar(path)
    encoder_id = path.name.rsplit(".", 1)[0]
    if meta is not None:
        encoder_id = meta.get("encoder_id", encoder_id)
    return FeatureVector(
        encoder_id=encoder_id, values=values, epsilon=epsilon, qre_total=qre_total
    )
