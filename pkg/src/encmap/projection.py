"""Dimensionality reduction: exact t-SNE for 2D maps, PCA for regression prep.

The t-SNE here is the exact O(M^2) algorithm run on a precomputed l1
distance matrix: squared distances feed per-point Gaussian kernels whose
bandwidths are bisected to the target perplexity, the joint P is symmetrized,
and a Student-t Q is fit by gradient descent with early exaggeration, a
momentum schedule, and per-coordinate gain adaptation. Everything downstream
of the seed is deterministic, which is the property the map artifacts rely on.

PCA is plain mean-centered SVD. It deliberately does not scale variance;
standardization is a separate step owned by the prediction pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError, ShapeError, ValidationError
from .distance import DistanceMatrix
from .io import write_sidecar
from .qre import FeatureVector

_EXAGGERATION = 12.0
_EXAGGERATION_ITERS = 250
_MOMENTUM_EARLY = 0.5
_MOMENTUM_LATE = 0.8
_PERPLEXITY_TOL = 1e-5
_MAX_BISECTION_STEPS = 50
_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TsneParams:
    """Settings a layout was produced under; stored with every MapLayout."""

    perplexity: float
    iterations: int
    learning_rate: float
    seed: int
    distance_metric: str = "l1"

    def to_mapping(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "distance_metric": self.distance_metric,
        }


@dataclass(frozen=True)
class MapLayout:
    """2D embedding of the encoder collection plus fit diagnostics."""

    ids: tuple[str, ...]
    coords: np.ndarray
    params: TsneParams
    kl_divergence: float
    kl_history: np.ndarray
    achieved_perplexity: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(self.ids)
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.shape != (len(ids), 2):
            raise ValidationError(
                f"coords must be {len(ids)}x2, got {coords.shape}"
            )
        if not np.all(np.isfinite(coords)):
            raise ValidationError("layout coordinates contain non-finite values")
        coords.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)


def _conditional_probabilities(
    sq_distances: np.ndarray, perplexity: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point Gaussian rows P[i, :] matching ``perplexity``, by bisection.

    Returns (conditional P with zero diagonal, achieved perplexity per point).
    The bandwidth bracket is expanded by doubling first, then bisected up to
    the step cap; points whose neighborhood is degenerate (all equal
    distances) keep their best-effort row.
    """
    m = sq_distances.shape[0]
    p = np.zeros((m, m))
    achieved = np.zeros(m)
    mask = ~np.eye(m, dtype=bool)
    for i in range(m):
        d = sq_distances[i][mask[i]]
        mean_d = d.mean()
        beta = 1.0 / mean_d if mean_d > 0 else 1.0
        lo, hi = 0.0, np.inf

        def row_stats(b: float) -> tuple[np.ndarray, float]:
            w = np.exp(-b * (d - d.min()))
            total = w.sum()
            probs = w / total
            pos = probs > 0
            entropy = float(-np.sum(probs[pos] * np.log(probs[pos])))
            return probs, math.exp(entropy)

        probs, perp = row_stats(beta)
        # Expand the bracket until the target is enclosed.
        for _ in range(_MAX_BISECTION_STEPS):
            if abs(perp - perplexity) <= _PERPLEXITY_TOL:
                break
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
            probs, perp = row_stats(beta)
        for _ in range(_MAX_BISECTION_STEPS):
            if abs(perp - perplexity) <= _PERPLEXITY_TOL:
                break
            if perp > perplexity:
                lo = beta
            else:
                hi = beta
            if hi == np.inf:
                beta *= 2.0
            else:
                beta = (lo + hi) / 2.0
            probs, perp = row_stats(beta)
        p[i][mask[i]] = probs
        achieved[i] = perp
    return p, achieved


def tsne(
    d: DistanceMatrix,
    perplexity: float = 30.0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
    seed: int = 0,
) -> MapLayout:
    """Exact t-SNE over a precomputed l1 distance matrix.

    The recommended operating range keeps perplexity below (M - 1)/3; values
    up to M - 1 are accepted because the bandwidth search stays well posed
    there. Raises NumericalError (with the iteration index) if the descent
    produces a non-finite gradient.
    """
    m = d.size
    if m < 4:
        raise ParameterError(f"t-SNE needs at least 4 points, got {m}")
    if not (1.0 < perplexity < m - 1):
        raise ParameterError(
            f"perplexity must lie in (1, {m - 1}) for M={m}, got {perplexity!r}"
        )
    if iterations < 1:
        raise ParameterError(f"iterations must be positive, got {iterations}")
    if learning_rate <= 0:
        raise ParameterError(f"learning_rate must be positive, got {learning_rate!r}")

    sq = d.values * d.values
    cond, achieved = _conditional_probabilities(sq, perplexity)
    p = (cond + cond.T) / (2.0 * m)
    p = np.maximum(p, _PROB_FLOOR)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(m, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history = np.zeros(iterations)

    for it in range(iterations):
        exaggerate = it < _EXAGGERATION_ITERS
        p_eff = p * _EXAGGERATION if exaggerate else p
        momentum = _MOMENTUM_EARLY if exaggerate else _MOMENTUM_LATE

        diff = y[:, None, :] - y[None, :, :]
        inv = 1.0 / (1.0 + np.sum(diff * diff, axis=2))
        np.fill_diagonal(inv, 0.0)
        q_norm = inv.sum()
        q = np.maximum(inv / q_norm, _PROB_FLOOR)

        grad = 4.0 * np.sum(((p_eff - q) * inv)[:, :, None] * diff, axis=1)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite t-SNE gradient at iteration {it}")

        flip = (grad > 0.0) != (update > 0.0)
        gains = np.where(flip, gains + 0.2, gains * 0.8)
        np.clip(gains, 0.01, None, out=gains)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

        kl_history[it] = float(np.sum(p * (np.log(p) - np.log(q))))

    return MapLayout(
        ids=d.ids,
        coords=y,
        params=TsneParams(
            perplexity=perplexity,
            iterations=iterations,
            learning_rate=learning_rate,
            seed=seed,
        ),
        kl_divergence=float(kl_history[-1]),
        kl_history=kl_history,
        achieved_perplexity=achieved,
    )


def write_layout_csv(layout: MapLayout, path: str | Path) -> Path:
    """Write (id, x, y) rows plus a sidecar carrying the run parameters."""
    path = Path(path)
    lines = ["id,x,y"]
    for eid, (x, yv) in zip(layout.ids, layout.coords):
        lines.append(f"{eid},{format(x, '.17g')},{format(yv, '.17g')}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_sidecar(
        path,
        {"params": layout.params.to_mapping(), "kl_divergence": layout.kl_divergence},
    )
    return path


@dataclass(frozen=True)
class PcaModel:
    """Mean vector and top-k principal directions of a feature collection."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        comp = np.ascontiguousarray(self.components, dtype=np.float64)
        var = np.ascontiguousarray(self.explained_variance, dtype=np.float64)
        if comp.ndim != 2 or comp.shape[1] != mean.shape[0]:
            raise ValidationError(
                f"components must be k x {mean.shape[0]}, got {comp.shape}"
            )
        if var.shape != (comp.shape[0],):
            raise ValidationError("explained_variance must have one entry per component")
        if np.any(var < 0) or np.any(np.diff(var) > 1e-12):
            raise ValidationError("explained_variance must be nonnegative, nonincreasing")
        for arr in (mean, comp, var):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "explained_variance", var)

    @property
    def k(self) -> int:
        return int(self.components.shape[0])


def _as_matrix(vectors: "list[FeatureVector] | np.ndarray") -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        if vectors.ndim != 2:
            raise ShapeError(f"expected a 2-d data matrix, got ndim={vectors.ndim}")
        return np.asarray(vectors, dtype=np.float64)
    return np.stack([v.values for v in vectors])


def fit_pca(vectors: "list[FeatureVector] | np.ndarray", k: int) -> PcaModel:
    """Mean-centered SVD PCA keeping the top k right singular directions.

    Component signs follow the same convention as spectra (largest-magnitude
    entry positive) so fits are deterministic.
    """
    x = _as_matrix(vectors)
    m, n = x.shape
    if not (1 <= k <= min(m, n)):
        raise ParameterError(f"k must be in [1, {min(m, n)}], got {k}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comp = vt[:k]
    idx = np.argmax(np.abs(comp), axis=1)
    signs = np.sign(comp[np.arange(k), idx])
    signs[signs == 0] = 1.0
    comp = comp * signs[:, None]
    denom = max(m - 1, 1)
    return PcaModel(
        mean=mean, components=comp, explained_variance=(s[:k] * s[:k]) / denom
    )


def apply_pca(model: PcaModel, vector: "FeatureVector | np.ndarray") -> np.ndarray:
    """Project one vector onto the model's components."""
    values = vector.values if isinstance(vector, FeatureVector) else np.asarray(vector)
    if values.ndim != 1 or values.shape[0] != model.mean.shape[0]:
        raise ShapeError(
            f"vector has shape {values.shape}, model expects ({model.mean.shape[0]},)"
        )
    return (values - model.mean) @ model.components.T


def transform_pca(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Batch form of :func:`apply_pca` for an M x N data matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.mean.shape[0]:
        raise ShapeError(
            f"matrix has shape {x.shape}, model expects (*, {model.mean.shape[0]})"
        )
    return (x - model.mean) @ model.components.T
