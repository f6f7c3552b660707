"""l1 geometry over feature vectors: distances, neighbors, clustering.

Feature vectors are comparable only when they share ambient dimension and the
epsilon they were computed under; l1 values across epsilons are meaningless,
so every pairwise operation enforces provenance before arithmetic.

Clustering is plain agglomerative merging with Lance-Williams distance
updates. Determinism is part of the contract: merge ties resolve to the
smallest pair of cluster creation indices (leaves are 0..M-1 in input order,
every merge gets the next index), and nearest-neighbor ties resolve to the
lexicographically smaller encoder id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ComparabilityError,
    ParameterError,
    UnknownIdError,
    ValidationError,
)
from .qre import FeatureVector

LINKAGES = ("single", "complete", "average")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances over an ordered id list."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(self.ids)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        m = len(ids)
        if len(set(ids)) != m:
            raise ValidationError("distance matrix ids must be unique")
        if values.shape != (m, m):
            raise ValidationError(
                f"distance matrix must be {m}x{m} to match ids, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("distance matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValidationError("distance matrix contains negative entries")
        if np.any(np.diag(values) != 0.0):
            raise ValidationError("distance matrix diagonal must be exactly zero")
        if not np.array_equal(values, values.T):
            raise ValidationError("distance matrix must be exactly symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return len(self.ids)

    def index_of(self, encoder_id: str) -> int:
        """Row/column index of ``encoder_id``."""
        try:
            return self.ids.index(encoder_id)
        except ValueError:
            raise UnknownIdError(
                f"encoder id {encoder_id!r} is not in this distance matrix"
            ) from None


def _check_comparable(a: FeatureVector, b: FeatureVector) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise ComparabilityError(
            f"{a.encoder_id!r} and {b.encoder_id!r} have different ambient "
            f"dimensions ({a.ambient_dim} vs {b.ambient_dim})"
        )
    if a.epsilon != b.epsilon:
        raise ComparabilityError(
            f"{a.encoder_id!r} and {b.encoder_id!r} were computed under "
            f"different epsilons ({a.epsilon!r} vs {b.epsilon!r})"
        )


def l1_distance(a: FeatureVector, b: FeatureVector) -> float:
    """Sum of absolute coordinate differences between two comparable vectors."""
    _check_comparable(a, b)
    return float(np.abs(a.values - b.values).sum())


def pairwise_distances(vectors: list[FeatureVector]) -> DistanceMatrix:
    """All-pairs l1 distances, rows and columns in input order."""
    if not vectors:
        raise ParameterError("pairwise_distances needs at least one vector")
    first = vectors[0]
    for other in vectors[1:]:
        _check_comparable(first, other)
    m = len(vectors)
    stacked = np.stack([v.values for v in vectors])
    out = np.zeros((m, m))
    for i in range(m):
        if i + 1 < m:
            row = np.abs(stacked[i + 1 :] - stacked[i]).sum(axis=1)
            out[i, i + 1 :] = row
            out[i + 1 :, i] = row
    return DistanceMatrix(ids=tuple(v.encoder_id for v in vectors), values=out)


def nearest_neighbors(
    d: DistanceMatrix, target: str, k: int
) -> list[tuple[str, float]]:
    """The k closest encoders to ``target``, ascending, ties by id."""
    idx = d.index_of(target)
    m = d.size
    if not (1 <= k <= m - 1):
        raise ParameterError(f"k must be in [1, {m - 1}], got {k}")
    entries = [
        (float(d.values[idx, j]), d.ids[j], j) for j in range(m) if j != idx
    ]
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return [(eid, dist) for dist, eid, _ in entries[:k]]


@dataclass(frozen=True)
class DendrogramNode:
    """An internal merge in the dendrogram; leaves are encoder_id strings."""

    left: "DendrogramNode | str"
    right: "DendrogramNode | str"
    merge_height: float
    member_count: int


def _leaf_count(node: DendrogramNode | str) -> int:
    return 1 if isinstance(node, str) else node.member_count


def leaf_ids(node: DendrogramNode | str) -> list[str]:
    """Leaves of ``node`` in left-to-right traversal order."""
    if isinstance(node, str):
        return [node]
    return leaf_ids(node.left) + leaf_ids(node.right)


def hierarchical_cluster(
    d: DistanceMatrix, linkage: str = "average"
) -> DendrogramNode:
    """Agglomerative clustering of the full distance matrix.

    Repeatedly merges the closest active pair under the chosen linkage,
    updating distances by the Lance-Williams rules. Cluster creation indices
    (leaves first, merges after) break ties and order children, making the
    tree a deterministic function of the matrix.
    """
    if linkage not in LINKAGES:
        raise ParameterError(
            f"linkage must be one of {LINKAGES}, got {linkage!r}"
        )
    m = d.size
    if m < 2:
        raise ParameterError(f"clustering needs at least 2 encoders, got {m}")

    dist = d.values.copy()
    np.fill_diagonal(dist, np.inf)
    alive = np.ones(m, dtype=bool)
    # Slot bookkeeping: the merged cluster reuses the lower slot.
    cluster_id = list(range(m))
    nodes: list[DendrogramNode | str] = list(d.ids)
    sizes = np.ones(m)
    next_id = m

    for _ in range(m - 1):
        masked = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        dmin = masked.min()
        cand = np.argwhere(masked == dmin)
        best = None
        for si, sj in cand:
            if si >= sj:
                continue
            pair = (min(cluster_id[si], cluster_id[sj]), max(cluster_id[si], cluster_id[sj]))
            if best is None or pair < best[0]:
                best = (pair, int(si), int(sj))
        assert best is not None
        _, si, sj = best
        a, b = nodes[si], nodes[sj]
        if cluster_id[sj] < cluster_id[si]:
            a, b = b, a
        merged = DendrogramNode(
            left=a,
            right=b,
            merge_height=float(dmin),
            member_count=_leaf_count(a) + _leaf_count(b),
        )
        others = alive.copy()
        others[si] = False
        others[sj] = False
        di = dist[si, others]
        dj = dist[sj, others]
        if linkage == "single":
            new = np.minimum(di, dj)
        elif linkage == "complete":
            new = np.maximum(di, dj)
        else:
            new = (sizes[si] * di + sizes[sj] * dj) / (sizes[si] + sizes[sj])
        dist[si, others] = new
        dist[others, si] = new
        alive[sj] = False
        sizes[si] = sizes[si] + sizes[sj]
        nodes[si] = merged
        cluster_id[si] = next_id
        next_id += 1

    root = nodes[int(np.argmax(alive))]
    assert isinstance(root, DendrogramNode)
    return root


def cut_dendrogram(root: DendrogramNode | str, k: int) -> dict[str, int]:
    """Split the tree into k clusters by undoing the highest merges.

    Returns encoder_id -> cluster label; labels number the clusters in
    left-to-right leaf order.
    """
    total = _leaf_count(root)
    if not (1 <= k <= total):
        raise ParameterError(f"k must be in [1, {total}], got {k}")
    groups: list[DendrogramNode | str] = [root]
    while len(groups) < k:
        # Split the subtree with the highest merge; ties go to the leftmost.
        best = None
        for pos, node in enumerate(groups):
            if isinstance(node, str):
                continue
            if best is None or node.merge_height > groups[best].merge_height:
                best = pos
        if best is None:
            raise ParameterError(
                f"tree has only {len(groups)} splittable groups, k={k} unreachable"
            )
        node = groups[best]
        groups[best : best + 1] = [node.left, node.right]
    labels: dict[str, int] = {}
    for label, group in enumerate(groups):
        for eid in leaf_ids(group):
            labels[eid] = label
    return labels


def _newick_escape(name: str) -> str:
    if any(c in name for c in "(),:;[] \t'"):
        return "'" + name.replace("'", "''") + "'"
    return name


def _newick_node(node: DendrogramNode | str, parent_height: float) -> str:
    if isinstance(node, str):
        return f"{_newick_escape(node)}:{parent_height:.12g}"
    branch = parent_height - node.merge_height
    left = _newick_node(node.left, node.merge_height)
    right = _newick_node(node.right, node.merge_height)
    return f"({left},{right}):{branch:.12g}"


def to_newick(root: DendrogramNode | str) -> str:
    """Newick text for the tree, with branch lengths derived from merge heights."""
    if isinstance(root, str):
        return f"{_newick_escape(root)}:0;"
    left = _newick_node(root.left, root.merge_height)
    right = _newick_node(root.right, root.merge_height)
    return f"({left},{right});"


def distance_matrix_to_csv(d: DistanceMatrix, path: str | Path) -> Path:
    """Write the matrix as CSV: header row of ids, one labeled row per encoder."""
    path = Path(path)
    lines = ["id," + ",".join(d.ids)]
    for i, eid in enumerate(d.ids):
        row = ",".join(format(x, ".17g") for x in d.values[i])
        lines.append(f"{eid},{row}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def distance_matrix_from_csv(path: str | Path) -> DistanceMatrix:
    """Read a matrix written by :func:`distance_matrix_to_csv`."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("id,"):
        raise ValidationError(f"{path} does not look like a distance CSV (no id header)")
    ids = lines[0].split(",")[1:]
    m = len(ids)
    rows = [line for line in lines[1:] if line]
    if len(rows) != m:
        raise ValidationError(f"{path} has {len(rows)} data rows for {m} ids")
    values = np.zeros((m, m))
    for i, line in enumerate(rows):
        cells = line.split(",")
        if len(cells) != m + 1:
            raise ValidationError(f"{path} row {i + 2} has {len(cells)} cells, wanted {m + 1}")
        if cells[0] != ids[i]:
            raise ValidationError(
                f"{path} row {i + 2} is labeled {cells[0]!r}, header says {ids[i]!r}"
            )
        try:
            values[i] = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ValidationError(f"{path} row {i + 2} has a non-numeric cell") from exc
    return DistanceMatrix(ids=tuple(ids), values=values)
