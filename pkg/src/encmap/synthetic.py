"""Synthetic noisy encoders for end-to-end pipeline validation.

Starting from the identity "base" matrix (row w = basis vector e_w), each
synthetic encoder displaces every row along a random direction. The noise
level sigma^2 sets the displacement length through

    x_hat = x + noise_scale * sqrt(sigma2) * n / ||n||,   n ~ N(0, sigma2 I)

so every row moves by exactly noise_scale * sqrt(sigma2). Groups drawing
sigma^2 from separated ranges then produce separated divergence values,
which is the property the acceptance suite checks end to end.

All randomness flows from one spec-level seed: group draws and per-matrix
streams are derived by mixing the seed with group and matrix indices, so
serial and parallel generation agree and any single matrix can be
regenerated in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError, ValidationError
from .io import EmbeddingMatrix

_REDRAW_LIMIT = 100
_NORM_FLOOR = 1e-30


@dataclass(frozen=True)
class GroupSpec:
    """One noise group: a sigma^2 range and how many matrices to draw."""

    sigma2_low: float
    sigma2_high: float
    count: int

    def __post_init__(self) -> None:
        if self.sigma2_low < 0 or self.sigma2_low > self.sigma2_high:
            raise ValidationError(
                f"sigma2 range must satisfy 0 <= low <= high, got "
                f"[{self.sigma2_low!r}, {self.sigma2_high!r}]"
            )
        if self.count < 1:
            raise ValidationError(f"group count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Full recipe for one synthetic run."""

    ambient_dim: int
    groups: tuple[GroupSpec, ...]
    noise_scale: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ambient_dim < 1:
            raise ValidationError(
                f"ambient_dim must be >= 1, got {self.ambient_dim}"
            )
        if not self.groups:
            raise ValidationError("at least one group is required")
        object.__setattr__(self, "groups", tuple(self.groups))


@dataclass(frozen=True)
class GeneratedEmbedding:
    """One synthetic encoder with its generation provenance."""

    group_label: str
    matrix: EmbeddingMatrix
    sigma2: float
    seed: int
    group_index: int = field(default=0)


def base_matrix(n: int) -> EmbeddingMatrix:
    """The n x n identity as an embedding matrix (row i = e_i)."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return EmbeddingMatrix(encoder_id=f"base-{n}", values=np.eye(n))


def perturb(
    matrix: EmbeddingMatrix, sigma2: float, noise_scale: float, seed: int
) -> EmbeddingMatrix:
    """Displace every row by noise_scale * sqrt(sigma2) along a random direction.

    sigma2 = 0 returns the input unchanged (zero noise means zero step).
    Direction vectors whose norm underflows are redrawn a bounded number of
    times; exhausting the retries raises NumericalError.
    """
    if sigma2 < 0:
        raise ParameterError(f"sigma2 must be nonnegative, got {sigma2!r}")
    if sigma2 == 0.0:
        return matrix
    rng = np.random.default_rng(seed)
    std = float(np.sqrt(sigma2))
    noise = rng.normal(0.0, std, size=matrix.values.shape)
    norms = np.linalg.norm(noise, axis=1)
    for _ in range(_REDRAW_LIMIT):
        bad = norms < _NORM_FLOOR
        if not bad.any():
            break
        noise[bad] = rng.normal(0.0, std, size=(int(bad.sum()), matrix.n_cols))
        norms = np.linalg.norm(noise, axis=1)
    else:
        raise NumericalError(
            f"could not draw a usable noise direction for {matrix.encoder_id!r} "
            f"after {_REDRAW_LIMIT} retries"
        )
    step = noise_scale * std
    values = matrix.values + step * (noise / norms[:, None])
    return EmbeddingMatrix(encoder_id=matrix.encoder_id, values=values)


def _matrix_seed(spec_seed: int, group_index: int, matrix_index: int) -> int:
    seq = np.random.SeedSequence([spec_seed, group_index, matrix_index])
    return int(seq.generate_state(1)[0])


def generate(spec: SyntheticSpec) -> list[GeneratedEmbedding]:
    """All matrices of the spec, groups in order, deterministic in the seed.

    Each group's sigma^2 values are drawn uniformly from its range on a
    stream keyed by (seed, group index); each matrix is perturbed on its own
    stream keyed by (seed, group index, matrix index).
    """
    base = base_matrix(spec.ambient_dim)
    out: list[GeneratedEmbedding] = []
    for g, group in enumerate(spec.groups):
        draw_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, g]))
        sigma2s = draw_rng.uniform(group.sigma2_low, group.sigma2_high, group.count)
        for i, sigma2 in enumerate(sigma2s):
            mseed = _matrix_seed(spec.seed, g, i)
            perturbed = perturb(base, float(sigma2), spec.noise_scale, mseed)
            matrix = EmbeddingMatrix(
                encoder_id=f"synth-g{g}-m{i:03d}",
                values=perturbed.values,
            )
            out.append(
                GeneratedEmbedding(
                    group_label=f"group{g}|sigma2={sigma2:.12g}",
                    matrix=matrix,
                    sigma2=float(sigma2),
                    seed=mseed,
                    group_index=g,
                )
            )
    return out
