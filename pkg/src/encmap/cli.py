"""Command-line pipeline driver.

Every subcommand resolves its settings as CLI flag > config file > built-in
default, performs its work, and writes a provenance manifest alongside the
artifacts. The manifest filename is a digest of (tool version, subcommand,
parameters, input digests), so reruns of the same command land on the same
manifest file and every artifact sidecar can reference it by name without
breaking byte-level reproducibility; wall-clock timestamps live only inside
the manifest document itself.

Exit codes: 0 success, 1 partial failure (some inputs failed), 2 invalid
invocation, 3 data validation error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .distance import (
    DistanceMatrix,
    distance_matrix_from_csv,
    distance_matrix_to_csv,
    hierarchical_cluster,
    nearest_neighbors,
    pairwise_distances,
    to_newick,
)
from .errors import (
    ComparabilityError,
    EncmapError,
    FormatError,
    ParameterError,
)
from .io import (
    EncoderRecord,
    read_embedding_matrix,
    read_sidecar,
    write_embedding_matrix,
    write_sidecar,
    l2_normalize_rows,
)
from .prediction import load_scores_csv, run_prediction_suite
from .projection import tsne, write_layout_csv
from .qre import (
    DEFAULT_EPSILON,
    FeatureVector,
    feature_vector,
    read_feature_vector,
    write_feature_vector,
)
from .report import PlotSpec, render_dendrogram, render_scatter
from .spectral import (
    DEFAULT_RANK_TOLERANCE,
    compute_spectrum,
    read_spectrum,
    write_spectrum,
)
from .synthetic import GroupSpec, SyntheticSpec, generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3

DEFAULTS: dict = {
    "epsilon": DEFAULT_EPSILON,
    "rank_tol": DEFAULT_RANK_TOLERANCE,
    "normalize": False,
    "seed": 0,
    "perplexity": 30.0,
    "iterations": 1000,
    "learning_rate": 200.0,
    "linkage": "average",
    "l1_ratio": 0.5,
    "folds": 5,
    "pca_dim": 50,
    "jobs": 1,
    "force": False,
    "k": 5,
    "n": 500,
    "noise_scale": 0.5,
    "color_by": "encoder_type",
    "log_heights": True,
}

_RECORD_KEYS = (
    "encoder_type",
    "param_count",
    "dimensionality",
    "languages",
    "tasks",
    "datasets",
)
_PROVENANCE_KEYS = ("group_label", "sigma2", "normalized", "rank_tolerance")


class _Settings:
    """Flag > config > default resolution for one parsed invocation."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self._args = args
        self._config = config

    def __getattr__(self, key: str):
        value = getattr(self._args, key, None)
        if value is not None:
            return value
        if key in self._config:
            return self._config[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise AttributeError(key)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ParameterError(f"config file {p} does not exist")
    try:
        loaded = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ParameterError(f"config file {p} must hold a JSON object")
    return loaded


def _output_dir(settings: _Settings) -> Path:
    explicit = getattr(settings._args, "output_dir", None)
    if explicit is None:
        explicit = settings._config.get("output_dir") or os.environ.get(
            "ENCMAP_OUTPUT_DIR"
        )
    out = Path(explicit) if explicit else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class _ManifestWriter:
    """Collects run provenance and writes the manifest document at the end."""

    def __init__(self, subcommand: str, parameters: dict, inputs: list[Path]):
        self.subcommand = subcommand
        self.parameters = parameters
        self.inputs = [
            {"path": str(p), "sha256": _sha256(p)} for p in inputs
        ]
        self.started_at = datetime.now(timezone.utc).isoformat()
        self.artifacts: list[str] = []
        self.errors: list[dict] = []
        digest = hashlib.sha256(
            _canonical_json(
                {
                    "tool_version": __version__,
                    "subcommand": subcommand,
                    "parameters": parameters,
                    "inputs": self.inputs,
                }
            ).encode("utf-8")
        ).hexdigest()
        self.name = f"manifest-{digest[:12]}.json"

    def add_artifact(self, path: Path) -> None:
        self.artifacts.append(path.name)

    def add_error(self, source: str, error: Exception) -> None:
        self.errors.append({"input": source, "error": f"{type(error).__name__}: {error}"})

    def write(self, out_dir: Path) -> Path:
        doc = {
            "tool_version": __version__,
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "inputs": self.inputs,
            "artifacts": sorted(self.artifacts),
            "errors": self.errors,
            "started_at": self.started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }
        path = out_dir / self.name
        path.write_text(_canonical_json(doc) + "\n", encoding="utf-8")
        return path


def _attach_manifest(artifact: Path, manifest: _ManifestWriter) -> None:
    """Merge the manifest reference into an artifact's sidecar."""
    existing = read_sidecar(artifact) or {}
    existing["manifest"] = manifest.name
    write_sidecar(artifact, existing)


def _read_magic(path: Path) -> bytes:
    with path.open("rb") as fh:
        return fh.read(4)


def _map_jobs(jobs: int, work, items: list) -> list:
    """Run ``work`` over ``items`` in input order, catching per-item errors.

    Returns (item, result, error) triples. Items are independent, so a
    thread pool changes nothing about the outputs, only the wall clock.
    """

    def run(item):
        try:
            return item, work(item), None
        except (OSError, EncmapError) as exc:
            return item, None, exc

    if jobs <= 1 or len(items) <= 1:
        return [run(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, items))


def _provenance_sidecar_fields(meta: dict | None) -> dict:
    out = {}
    if meta:
        for key in _RECORD_KEYS + _PROVENANCE_KEYS:
            if key in meta:
                out[key] = meta[key]
    return out


# --- subcommand implementations -------------------------------------------


def _cmd_spectrum(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    params = {
        "rank_tol": settings.rank_tol,
        "normalize": bool(settings.normalize),
        "jobs": settings.jobs,
    }
    manifest = _ManifestWriter("spectrum", params, [p for p in inputs if p.exists()])

    def work(path: Path):
        matrix = read_embedding_matrix(path)
        if settings.normalize:
            matrix = l2_normalize_rows(matrix)
        spectrum = compute_spectrum(matrix, rank_tolerance=settings.rank_tol)
        out = out_dir / (path.stem + ".espc")
        write_spectrum(
            spectrum,
            out,
            extra_meta={
                **_provenance_sidecar_fields(read_sidecar(path)),
                "rank_tolerance": settings.rank_tol,
                "normalized": matrix.normalized,
                "manifest": manifest.name,
            },
        )
        return out

    return _finish_per_file(settings, manifest, work, inputs, out_dir, "spectrum")


def _finish_per_file(
    settings: _Settings,
    manifest: _ManifestWriter,
    work,
    inputs: list[Path],
    out_dir: Path,
    label: str,
) -> int:
    successes = 0
    for path, out, exc in _map_jobs(settings.jobs, work, inputs):
        if exc is None:
            manifest.add_artifact(out)
            successes += 1
        else:
            logger.error("%s failed for %s: %s", label, path, exc)
            manifest.add_error(str(path), exc)
    manifest.write(out_dir)
    if manifest.errors:
        return EXIT_PARTIAL if successes else EXIT_DATA
    return EXIT_OK


def _cmd_features(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    params = {
        "epsilon": settings.epsilon,
        "rank_tol": settings.rank_tol,
        "normalize": bool(settings.normalize),
        "jobs": settings.jobs,
    }
    manifest = _ManifestWriter("features", params, [p for p in inputs if p.exists()])

    def work(path: Path):
        magic = _read_magic(path)
        meta = read_sidecar(path)
        if magic == b"ESPC":
            spectrum = read_spectrum(path)
            normalized = bool(meta.get("normalized", False)) if meta else False
        elif magic == b"EMAP":
            matrix = read_embedding_matrix(path)
            if settings.normalize:
                matrix = l2_normalize_rows(matrix)
            normalized = matrix.normalized
            spectrum = compute_spectrum(matrix, rank_tolerance=settings.rank_tol)
        else:
            raise FormatError(f"{path} is neither an embedding nor a spectrum file")
        vector = feature_vector(spectrum, epsilon=settings.epsilon)
        out = out_dir / (path.stem + ".efvc")
        write_feature_vector(
            vector,
            out,
            extra_meta={
                **_provenance_sidecar_fields(meta),
                "normalized": normalized,
                "rank_tolerance": settings.rank_tol,
                "manifest": manifest.name,
            },
        )
        return out

    return _finish_per_file(settings, manifest, work, inputs, out_dir, "features")


def _load_feature_collection(
    paths: list[Path], force: bool
) -> tuple[list[FeatureVector], list[dict]]:
    vectors = []
    metas = []
    for path in paths:
        vectors.append(read_feature_vector(path))
        metas.append(read_sidecar(path) or {})
    if not force:
        first_v, first_m = vectors[0], metas[0]
        for v, m in zip(vectors[1:], metas[1:]):
            if v.ambient_dim != first_v.ambient_dim or v.epsilon != first_v.epsilon:
                raise ComparabilityError(
                    f"{first_v.encoder_id!r} and {v.encoder_id!r} differ in ambient "
                    "dimension or epsilon; pass --force to override"
                )
            if m.get("normalized") != first_m.get("normalized"):
                raise ComparabilityError(
                    f"{first_v.encoder_id!r} and {v.encoder_id!r} differ in "
                    "normalization provenance; pass --force to override"
                )
    return vectors, metas


def _records_from_metas(vectors: list[FeatureVector], metas: list[dict]) -> list[EncoderRecord]:
    records = []
    for v, m in zip(vectors, metas):
        known = {k: m[k] for k in _RECORD_KEYS if k in m and m[k] is not None}
        if "group_label" in m and "encoder_type" not in known:
            known["encoder_type"] = str(m["group_label"]).split("|")[0]
        records.append(EncoderRecord(encoder_id=v.encoder_id, **known))
    return records


def _cmd_map(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    params = {
        "perplexity": settings.perplexity,
        "iterations": settings.iterations,
        "learning_rate": settings.learning_rate,
        "seed": settings.seed,
        "color_by": settings.color_by,
        "force": bool(settings.force),
    }
    manifest = _ManifestWriter("map", params, inputs)
    vectors, metas = _load_feature_collection(inputs, bool(settings.force))
    distances = pairwise_distances(vectors)

    dist_path = distance_matrix_to_csv(distances, out_dir / "distances.csv")
    write_sidecar(dist_path, {"manifest": manifest.name})
    manifest.add_artifact(dist_path)

    layout = tsne(
        distances,
        perplexity=settings.perplexity,
        iterations=settings.iterations,
        learning_rate=settings.learning_rate,
        seed=settings.seed,
    )
    layout_path = write_layout_csv(layout, out_dir / "layout.csv")
    _attach_manifest(layout_path, manifest)
    manifest.add_artifact(layout_path)

    records = _records_from_metas(vectors, metas)
    plot = PlotSpec(
        layout=layout,
        records=tuple(records),
        color_by=settings.color_by,
        title="Encoder map",
    )
    svg_path = render_scatter(
        plot, out_dir / f"map_{settings.color_by}.svg", description=manifest.name
    )
    manifest.add_artifact(svg_path)
    manifest.write(out_dir)
    return EXIT_OK


def _load_distances_or_features(
    inputs: list[Path], force: bool
) -> DistanceMatrix:
    if len(inputs) == 1 and inputs[0].suffix.lower() == ".csv":
        return distance_matrix_from_csv(inputs[0])
    vectors, _ = _load_feature_collection(inputs, force)
    return pairwise_distances(vectors)


def _sanitize(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _cmd_neighbors(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    target = settings._args.target
    params = {"target": target, "k": settings.k, "force": bool(settings.force)}
    manifest = _ManifestWriter("neighbors", params, inputs)
    distances = _load_distances_or_features(inputs, bool(settings.force))
    neighbors = nearest_neighbors(distances, target, settings.k)

    lines = ["rank,encoder_id,distance"]
    print(f"nearest neighbors of {target}:")
    for rank, (eid, dist) in enumerate(neighbors, start=1):
        lines.append(f"{rank},{eid},{dist:.12f}")
        print(f"  {rank:2d}. {eid}  {dist:.12f}")
    out = out_dir / f"neighbors_{_sanitize(target)}.csv"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_sidecar(out, {"manifest": manifest.name})
    manifest.add_artifact(out)
    manifest.write(out_dir)
    return EXIT_OK


def _parse_groups(raw: list[str] | None) -> tuple[GroupSpec, ...]:
    if not raw:
        return (GroupSpec(0.0, 1.0, 10), GroupSpec(3.0, 4.0, 10))
    groups = []
    for txt in raw:
        pieces = txt.split(",")
        if len(pieces) != 3:
            raise ParameterError(
                f"--groups expects 'low,high,count', got {txt!r}"
            )
        try:
            groups.append(
                GroupSpec(float(pieces[0]), float(pieces[1]), int(pieces[2]))
            )
        except ValueError as exc:
            raise ParameterError(f"--groups {txt!r} is not numeric") from exc
    return tuple(groups)


def _cmd_synth(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    groups = _parse_groups(settings._args.groups)
    spec = SyntheticSpec(
        ambient_dim=settings.n,
        groups=groups,
        noise_scale=settings.noise_scale,
        seed=settings.seed,
    )
    params = {
        "n": settings.n,
        "groups": [[g.sigma2_low, g.sigma2_high, g.count] for g in groups],
        "noise_scale": settings.noise_scale,
        "seed": settings.seed,
    }
    manifest = _ManifestWriter("synth", params, [])
    for item in generate(spec):
        out = out_dir / f"{item.matrix.encoder_id}.emap"
        write_embedding_matrix(
            item.matrix,
            out,
            extra_meta={
                "group_label": item.group_label,
                "sigma2": item.sigma2,
                "seed": item.seed,
                "rng": "numpy default_rng (PCG64)",
                "manifest": manifest.name,
            },
        )
        manifest.add_artifact(out)
    manifest.write(out_dir)
    return EXIT_OK


def _cmd_predict(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    scores_path = Path(settings._args.scores)
    params = {
        "pca_dim": settings.pca_dim,
        "folds": settings.folds,
        "l1_ratio": settings.l1_ratio,
        "seed": settings.seed,
        "force": bool(settings.force),
    }
    manifest = _ManifestWriter("predict", params, inputs + [scores_path])
    vectors, _ = _load_feature_collection(inputs, bool(settings.force))
    scores = load_scores_csv(scores_path)
    reports = run_prediction_suite(
        vectors,
        scores,
        pca_dim=settings.pca_dim,
        folds=settings.folds,
        l1_ratio=settings.l1_ratio,
        seed=settings.seed,
    )

    report_lines = ["task,spearman,spearman_p,pearson,pearson_p,n_encoders"]
    pred_lines = ["task,encoder_id,true_score,predicted_score"]
    for rep in reports:
        report_lines.append(
            f"{rep.task_name},{format(rep.spearman, '.17g')},"
            f"{format(rep.spearman_p, '.17g')},{format(rep.pearson, '.17g')},"
            f"{format(rep.pearson_p, '.17g')},{rep.n_encoders}"
        )
        table = scores[rep.task_name]
        for eid in sorted(rep.fold_predictions):
            pred_lines.append(
                f"{rep.task_name},{eid},{format(table[eid], '.17g')},"
                f"{format(rep.fold_predictions[eid], '.17g')}"
            )
        print(
            f"{rep.task_name}: spearman={rep.spearman:.4f} (p={rep.spearman_p:.3g}) "
            f"pearson={rep.pearson:.4f} (p={rep.pearson_p:.3g}) "
            f"n={rep.n_encoders}"
        )

    report_path = out_dir / "prediction_report.csv"
    report_path.write_text("\n".join(report_lines) + "\n", encoding="utf-8")
    write_sidecar(report_path, {"manifest": manifest.name})
    manifest.add_artifact(report_path)

    pred_path = out_dir / "oof_predictions.csv"
    pred_path.write_text("\n".join(pred_lines) + "\n", encoding="utf-8")
    write_sidecar(pred_path, {"manifest": manifest.name})
    manifest.add_artifact(pred_path)
    manifest.write(out_dir)
    return EXIT_OK


def _cmd_cluster(settings: _Settings) -> int:
    out_dir = _output_dir(settings)
    inputs = [Path(p) for p in settings._args.inputs]
    params = {
        "linkage": settings.linkage,
        "force": bool(settings.force),
        "log_heights": bool(settings.log_heights),
    }
    manifest = _ManifestWriter("cluster", params, inputs)
    distances = _load_distances_or_features(inputs, bool(settings.force))
    root = hierarchical_cluster(distances, linkage=settings.linkage)

    tree_path = out_dir / "tree.nwk"
    tree_path.write_text(to_newick(root) + "\n", encoding="utf-8")
    write_sidecar(tree_path, {"manifest": manifest.name, "linkage": settings.linkage})
    manifest.add_artifact(tree_path)

    svg_path = render_dendrogram(
        root,
        bool(settings.log_heights),
        out_dir / "dendrogram.svg",
        description=manifest.name,
    )
    manifest.add_artifact(svg_path)
    manifest.write(out_dir)
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output-dir", default=None, help="artifact directory (env ENCMAP_OUTPUT_DIR, default '.')")
    parser.add_argument("--config", default=None, help="JSON config file; flags win over config values")


def _flag(parser: argparse.ArgumentParser, name: str, **kwargs) -> None:
    # Flags default to None so config-file values can fill the gap.
    parser.add_argument(name, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encmap",
        description="Spectral feature vectors and map analytics for sentence encoders",
    )
    parser.add_argument("--version", action="version", version=f"encmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="compute density spectra from embedding matrices")
    p.add_argument("inputs", nargs="+", metavar="EMBEDDING")
    _flag(p, "--rank-tol", type=float, dest="rank_tol")
    p.add_argument("--normalize", action="store_const", const=True, default=None)
    _flag(p, "--jobs", type=int)
    _add_common(p)

    p = sub.add_parser("features", help="compute feature vectors from spectra or embeddings")
    p.add_argument("inputs", nargs="+", metavar="SPECTRUM_OR_EMBEDDING")
    _flag(p, "--epsilon", type=float)
    _flag(p, "--rank-tol", type=float, dest="rank_tol")
    p.add_argument("--normalize", action="store_const", const=True, default=None)
    _flag(p, "--jobs", type=int)
    _add_common(p)

    p = sub.add_parser("map", help="distances, t-SNE layout, and scatter render")
    p.add_argument("inputs", nargs="+", metavar="FEATURES")
    _flag(p, "--perplexity", type=float)
    _flag(p, "--iterations", type=int)
    _flag(p, "--learning-rate", type=float, dest="learning_rate")
    _flag(p, "--seed", type=int)
    _flag(p, "--color-by", dest="color_by")
    p.add_argument("--force", action="store_const", const=True, default=None)
    _add_common(p)

    p = sub.add_parser("neighbors", help="nearest neighbors of one encoder")
    p.add_argument("inputs", nargs="+", metavar="FEATURES_OR_DISTANCES")
    p.add_argument("--target", required=True)
    _flag(p, "--k", type=int)
    p.add_argument("--force", action="store_const", const=True, default=None)
    _add_common(p)

    p = sub.add_parser("synth", help="generate synthetic noisy encoders")
    _flag(p, "--n", type=int)
    p.add_argument("--groups", action="append", default=None, metavar="LOW,HIGH,COUNT")
    _flag(p, "--noise-scale", type=float, dest="noise_scale")
    _flag(p, "--seed", type=int)
    _add_common(p)

    p = sub.add_parser("predict", help="predict task scores from feature vectors")
    p.add_argument("inputs", nargs="+", metavar="FEATURES")
    p.add_argument("--scores", required=True)
    _flag(p, "--pca-dim", type=int, dest="pca_dim")
    _flag(p, "--folds", type=int)
    _flag(p, "--l1-ratio", type=float, dest="l1_ratio")
    _flag(p, "--seed", type=int)
    p.add_argument("--force", action="store_const", const=True, default=None)
    _add_common(p)

    p = sub.add_parser("cluster", help="hierarchical clustering and dendrogram")
    p.add_argument("inputs", nargs="+", metavar="FEATURES_OR_DISTANCES")
    _flag(p, "--linkage", choices=["single", "complete", "average"])
    p.add_argument("--force", action="store_const", const=True, default=None)
    p.add_argument(
        "--raw-heights",
        action="store_const",
        const=False,
        default=None,
        dest="log_heights",
        help="plot dendrogram heights untransformed instead of ln(1+h)",
    )
    _add_common(p)

    return parser


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "features": _cmd_features,
    "map": _cmd_map,
    "neighbors": _cmd_neighbors,
    "synth": _cmd_synth,
    "predict": _cmd_predict,
    "cluster": _cmd_cluster,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _load_config(args.config)
        settings = _Settings(args, config)
        return _HANDLERS[args.command](settings)
    except ParameterError as exc:
        logger.error("invalid invocation: %s", exc)
        return EXIT_USAGE
    except EncmapError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA
    except OSError as exc:
        logger.error("i/o failure: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
