"""Downstream-score prediction from feature vectors.

Pipeline: standardize the raw feature matrix, project to a small PCA space,
then per task fit an elastic net whose regularization strength is chosen by
internal cross-validation. Reported correlations are always computed between
true targets and pooled out-of-fold predictions, so a model never scores
itself on points it trained on.

The elastic net minimizes

    (1/2M) ||y - X b - b0||^2 + alpha * l1_ratio * ||b||_1
        + (alpha/2) (1 - l1_ratio) ||b||^2

by cyclic coordinate descent on centered data. With zero initialization and
alpha >= alpha_max = max_j |x_j . (y - mean y)| / (M * l1_ratio), every
coordinate stays exactly zero, which pins the top of the regularization path.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import (
    ComparabilityError,
    DegenerateInputError,
    ParameterError,
    UndefinedCorrelationError,
    UnknownIdError,
    ValidationError,
)
from .projection import fit_pca, transform_pca
from .qre import FeatureVector

logger = logging.getLogger(__name__)

MIN_TASK_ENCODERS = 10


@dataclass(frozen=True)
class Standardizer:
    """Column means and standard deviations fit on one matrix."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self) -> None:
        for name in ("means", "stds"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def standardize_fit(x: np.ndarray) -> tuple[Standardizer, np.ndarray]:
    """Fit per-column standardization and return the transformed matrix.

    Population standard deviation. Constant columns map to all-zeros (their
    std is treated as 1 so the division is harmless).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got ndim={x.ndim}")
    if x.shape[0] < 2:
        raise ParameterError(
            f"standardization needs at least 2 rows, got {x.shape[0]}"
        )
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    standardizer = Standardizer(means=means, stds=stds)
    return standardizer, standardize_apply(standardizer, x)


def standardize_apply(standardizer: Standardizer, x: np.ndarray) -> np.ndarray:
    """Apply a fitted standardizer to new rows."""
    x = np.asarray(x, dtype=np.float64)
    effective = np.where(standardizer.stds == 0.0, 1.0, standardizer.stds)
    return (x - standardizer.means) / effective


@dataclass(frozen=True)
class ElasticNetModel:
    """One fitted elastic net plus its fit diagnostics."""

    coefficients: np.ndarray
    intercept: float
    alpha: float
    l1_ratio: float
    n_sweeps: int
    converged: bool
    objective_path: np.ndarray
    standardizer: Standardizer | None = None

    def __post_init__(self) -> None:
        for name in ("coefficients", "objective_path"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.standardizer is not None:
            x = standardize_apply(self.standardizer, x)
        return x @ self.coefficients + self.intercept


def _check_l1_ratio(l1_ratio: float) -> None:
    if not (0.0 < l1_ratio <= 1.0):
        raise ParameterError(f"l1_ratio must lie in (0, 1], got {l1_ratio!r}")


def alpha_max(x: np.ndarray, y: np.ndarray, l1_ratio: float) -> float:
    """Smallest alpha at which the elastic net zeroes every coefficient.

    Computed as max_j |x_cj . y_c| / (M * l1_ratio) with both sides centered,
    the same arithmetic the fit loop uses for its correlation vector, so the
    all-zero guarantee at alpha >= alpha_max holds exactly in floating point,
    not just in exact math. (Centering x changes nothing analytically because
    y_c sums to zero.)
    """
    _check_l1_ratio(l1_ratio)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    corr = (xc.T @ yc) / m
    return float(np.max(np.abs(corr)) / l1_ratio)


def elastic_net_fit(
    x: np.ndarray,
    y: np.ndarray,
    alpha: float,
    l1_ratio: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 10_000,
    warm_start: np.ndarray | None = None,
) -> ElasticNetModel:
    """Cyclic coordinate descent on the elastic-net objective.

    ``x`` is expected to be standardized by the caller; the fit still centers
    internally so the intercept is handled exactly. One iteration is one full
    sweep over the coordinates; the fit stops when the largest coefficient
    update in a sweep drops below ``tol``. Non-convergence degrades to a
    warning (``converged=False``), never an exception.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValidationError(
            f"x must be M x p and y length M, got {x.shape} and {y.shape}"
        )
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ParameterError("x must have at least one row and one column")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha!r}")
    _check_l1_ratio(l1_ratio)

    m, p = x.shape
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean

    # Gram formulation: each coordinate update is O(p) given G = Xc^T Xc / M.
    gram = (xc.T @ xc) / m
    corr = (xc.T @ yc) / m
    diag = np.diag(gram).copy()

    l1_pen = alpha * l1_ratio
    l2_pen = alpha * (1.0 - l1_ratio)
    denom = diag + l2_pen

    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    if beta.shape != (p,):
        raise ValidationError(f"warm_start must have shape ({p},), got {beta.shape}")

    objective_path = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            old = beta[j]
            z = float(corr[j] - gram[j] @ beta + diag[j] * old)
            # The activation test divides instead of multiplying so it is
            # exactly consistent with alpha_max: |z|/r is monotone in |z|,
            # hence nothing activates at alpha >= alpha_max, bit for bit.
            over = abs(z) - l1_pen
            if abs(z) / l1_ratio > alpha and over > 0.0 and denom[j] > 0.0:
                new = math.copysign(over, z) / denom[j]
            else:
                new = 0.0
            if new != old:
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        resid = yc - xc @ beta
        objective_path.append(
            0.5 * float(resid @ resid) / m
            + l1_pen * float(np.abs(beta).sum())
            + 0.5 * l2_pen * float(beta @ beta)
        )
        if max_delta < tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "elastic net did not converge in %d sweeps (alpha=%g)", max_iter, alpha
        )
    intercept = y_mean - float(x_mean @ beta)
    return ElasticNetModel(
        coefficients=beta,
        intercept=intercept,
        alpha=alpha,
        l1_ratio=l1_ratio,
        n_sweeps=sweeps,
        converged=converged,
        objective_path=np.asarray(objective_path),
    )


@dataclass(frozen=True)
class EnetCvResult:
    """Cross-validated fit: final model, alpha path, and fold bookkeeping."""

    model: ElasticNetModel
    alphas: np.ndarray
    mean_cv_mse: np.ndarray
    oof_predictions: np.ndarray
    fold_indices: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for name in ("alphas", "mean_cv_mse", "oof_predictions"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "fold_indices", tuple(self.fold_indices))


def make_folds(m: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic fold assignment: contiguous blocks of a seeded shuffle."""
    if not (2 <= folds <= m):
        raise ParameterError(f"folds must be in [2, {m}], got {folds}")
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(block) for block in np.array_split(perm, folds)]


def elastic_net_cv(
    x: np.ndarray,
    y: np.ndarray,
    folds: int = 5,
    l1_ratio: float = 0.5,
    n_alphas: int = 100,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> EnetCvResult:
    """Select alpha by K-fold cross-validation and refit on all data.

    The alpha grid is log-spaced from alpha_max down to alpha_max * 1e-3
    (descending, warm-started along the path). The alpha with the lowest
    mean validation squared error wins; ties go to the stronger penalty.
    Out-of-fold predictions at the selected alpha are pooled over folds.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValidationError(
            f"x must be M x p and y length M, got {x.shape} and {y.shape}"
        )
    m = x.shape[0]
    if m < folds:
        raise ParameterError(f"need at least {folds} rows for {folds} folds, got {m}")
    _check_l1_ratio(l1_ratio)
    if n_alphas < 1:
        raise ParameterError(f"n_alphas must be >= 1, got {n_alphas}")

    amax = alpha_max(x, y, l1_ratio)
    if amax <= 0.0 or not math.isfinite(amax):
        raise DegenerateInputError(
            "alpha_max is zero: targets are constant or exactly orthogonal to x"
        )
    alphas = np.geomspace(amax, amax * 1e-3, n_alphas)

    fold_blocks = make_folds(m, folds, seed)
    fold_mse = np.zeros((folds, n_alphas))
    fold_preds: list[np.ndarray] = []
    for f, val_idx in enumerate(fold_blocks):
        train_mask = np.ones(m, dtype=bool)
        train_mask[val_idx] = False
        x_tr, y_tr = x[train_mask], y[train_mask]
        x_val, y_val = x[val_idx], y[val_idx]
        beta = None
        preds = np.zeros((len(val_idx), n_alphas))
        for a, alpha in enumerate(alphas):
            fit = elastic_net_fit(
                x_tr, y_tr, float(alpha), l1_ratio, tol, max_iter, warm_start=beta
            )
            beta = fit.coefficients
            pred = x_val @ fit.coefficients + fit.intercept
            preds[:, a] = pred
            fold_mse[f, a] = float(np.mean((y_val - pred) ** 2))
        fold_preds.append(preds)

    mean_mse = fold_mse.mean(axis=0)
    best = int(np.argmin(mean_mse))
    oof = np.zeros(m)
    for f, val_idx in enumerate(fold_blocks):
        oof[val_idx] = fold_preds[f][:, best]

    final = elastic_net_fit(x, y, float(alphas[best]), l1_ratio, tol, max_iter)
    return EnetCvResult(
        model=final,
        alphas=alphas,
        mean_cv_mse=mean_mse,
        oof_predictions=oof,
        fold_indices=tuple(fold_blocks),
    )


def _rank_average(x: np.ndarray) -> np.ndarray:
    """Ranks 1..M with ties assigned their average rank."""
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    order = np.argsort(x, kind="stable")
    ranks = np.empty(m)
    i = 0
    while i < m:
        j = i
        while j + 1 < m and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _t_p_value(r: float, m: int) -> float:
    """Two-sided p-value for a correlation via the t approximation."""
    df = m - 2
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    t2 = r * r * df / denom
    return float(betainc(df / 2.0, 0.5, df / (df + t2)))


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Product-moment correlation and its t-approximation p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"x and y must be equal-length 1-d, got {x.shape}, {y.shape}")
    m = x.shape[0]
    if m < 3:
        raise ParameterError(f"correlation needs at least 3 points, got {m}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined: an argument has zero variance"
        )
    r = float(xc @ yc) / denom
    r = max(-1.0, min(1.0, r))
    return r, _t_p_value(r, m)


def spearman(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Rank correlation (average ranks for ties) and its p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"x and y must be equal-length 1-d, got {x.shape}, {y.shape}")
    if x.shape[0] < 3:
        raise ParameterError(f"correlation needs at least 3 points, got {x.shape[0]}")
    rx = _rank_average(x)
    ry = _rank_average(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise UndefinedCorrelationError(
            "rank correlation undefined: an argument has zero rank variance"
        )
    return pearson(rx, ry)


@dataclass(frozen=True)
class PredictionReport:
    """Per-task outcome of the prediction pipeline."""

    task_name: str
    spearman: float
    spearman_p: float
    pearson: float
    pearson_p: float
    fold_predictions: dict[str, float]
    n_encoders: int
    selected_alpha: float


def run_prediction_suite(
    vectors: list[FeatureVector],
    scores: dict[str, dict[str, float]],
    pca_dim: int = 50,
    folds: int = 5,
    l1_ratio: float = 0.5,
    seed: int = 0,
) -> list[PredictionReport]:
    """Standardize, project to ``pca_dim``, and cross-validate one model per task.

    ``scores`` maps task name to {encoder_id: score}. Every scored encoder
    must have a feature vector; encoders without a score are dropped for that
    task only. Tasks with fewer than 10 scored encoders are skipped with a
    warning. Reports come back in sorted task order.
    """
    if not vectors:
        raise ParameterError("run_prediction_suite needs at least one feature vector")
    first = vectors[0]
    for v in vectors[1:]:
        if v.ambient_dim != first.ambient_dim or v.epsilon != first.epsilon:
            raise ComparabilityError(
                f"{first.encoder_id!r} and {v.encoder_id!r} are not comparable "
                "(ambient dimension or epsilon differs)"
            )
    ids = [v.encoder_id for v in vectors]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate encoder ids in the feature collection")
    index = {eid: i for i, eid in enumerate(ids)}
    for task_name, table in scores.items():
        for eid in table:
            if eid not in index:
                raise UnknownIdError(
                    f"task {task_name!r} scores encoder {eid!r}, which has no "
                    "feature vector"
                )

    x_raw = np.stack([v.values for v in vectors])
    _, x_std = standardize_fit(x_raw)
    if pca_dim > min(x_std.shape):
        raise ParameterError(
            f"pca_dim must be <= {min(x_std.shape)} for this data, got {pca_dim}"
        )
    pca = fit_pca(x_std, pca_dim)
    z = transform_pca(pca, x_std)

    reports: list[PredictionReport] = []
    for task_name in sorted(scores):
        table = scores[task_name]
        rows = [index[eid] for eid in ids if eid in table]
        if len(rows) < MIN_TASK_ENCODERS:
            logger.warning(
                "task %r skipped: %d scored encoders (< %d)",
                task_name,
                len(rows),
                MIN_TASK_ENCODERS,
            )
            continue
        task_ids = [ids[i] for i in rows]
        y = np.array([table[eid] for eid in task_ids])
        _, x_task = standardize_fit(z[rows])
        cv = elastic_net_cv(
            x_task, y, folds=folds, l1_ratio=l1_ratio, seed=seed
        )
        rho_s, p_s = spearman(y, cv.oof_predictions)
        rho_p, p_p = pearson(y, cv.oof_predictions)
        reports.append(
            PredictionReport(
                task_name=task_name,
                spearman=rho_s,
                spearman_p=p_s,
                pearson=rho_p,
                pearson_p=p_p,
                fold_predictions=dict(zip(task_ids, cv.oof_predictions.tolist())),
                n_encoders=len(rows),
                selected_alpha=cv.model.alpha,
            )
        )
    return reports


def load_scores_csv(path) -> dict[str, dict[str, float]]:
    """Parse a scores table: header encoder_id,task_name,score then data rows."""
    import csv
    from pathlib import Path

    path = Path(path)
    scores: dict[str, dict[str, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "encoder_id",
            "task_name",
            "score",
        ]:
            raise ValidationError(
                f"{path} must start with header 'encoder_id,task_name,score', "
                f"got {header!r}"
            )
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{ln}: expected 3 columns, got {len(row)}")
            eid, task, score_text = row
            try:
                score = float(score_text)
            except ValueError as exc:
                raise ValidationError(
                    f"{path}:{ln}: score {score_text!r} is not a number"
                ) from exc
            if not math.isfinite(score):
                raise ValidationError(f"{path}:{ln}: score must be finite")
            scores.setdefault(task, {})[eid] = score
    if not scores:
        raise ValidationError(f"{path} contains no score rows")
    return scores
