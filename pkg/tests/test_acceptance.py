"""End-to-end acceptance checks, one test per shipping criterion.

Each test is self-contained and prints a single pass/fail line under
pytest -v. Tolerances and runtime budgets are part of the contract, so
they are asserted here rather than in the per-module suites.
"""

import math
import time

import numpy as np

from encmap import (
    DEFAULT_EPSILON,
    EmbeddingMatrix,
    GroupSpec,
    SyntheticSpec,
    alpha_max,
    closed_form_qre_total,
    compute_spectrum,
    elastic_net_cv,
    elastic_net_fit,
    explicit_spectrum_oracle,
    feature_vector,
    generate,
    l1_distance,
    max_principal_angle,
    nearest_neighbors,
    pairwise_distances,
    qre,
    qre_dense_oracle,
    run_prediction_suite,
    spearman,
    standardize_fit,
    tsne,
    unit_base_spectrum,
)
from encmap.cli import main
from helpers import (
    make_feature,
    purity,
    random_embedding,
    random_orthogonal,
    two_means_labels,
)


def test_primary_spectral_paths_agree_on_seeded_matrices():
    started = time.monotonic()
    rng = np.random.default_rng(201)
    for _ in range(50):
        n = int(rng.integers(2, 257))
        d = int(rng.integers(2, 33))
        m = random_embedding(rng, n, d)
        fast = compute_spectrum(m)
        slow = explicit_spectrum_oracle(m)
        np.testing.assert_allclose(fast.eigenvalues, slow.eigenvalues, atol=1e-10)
        assert max_principal_angle(fast.eigenvectors, slow.eigenvectors) < 1e-6
    assert time.monotonic() - started < 30.0


def test_primary_qre_matches_dense_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(202)
    for _ in range(20):
        rho = compute_spectrum(random_embedding(rng, 32, int(rng.integers(3, 17)), "r"))
        sigma = compute_spectrum(random_embedding(rng, 32, int(rng.integers(3, 17)), "s"))
        dense = (rho.eigenvectors * rho.eigenvalues) @ rho.eigenvectors.T
        fast = qre(rho, sigma).total
        slow = qre_dense_oracle(dense, sigma)
        assert abs(fast - slow) <= 1e-7
    # Exactly solvable 3-point case: uniform reference against a rank-2
    # axis-aligned target, checked against both routes.
    sigma = compute_spectrum(
        EmbeddingMatrix(
            encoder_id="ax", values=np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        )
    )
    expected = -math.log(3.0) - (2.0 / 3.0) * math.log(0.5) + 4.0
    assert abs(qre(unit_base_spectrum(3), sigma).total - expected) <= 1e-7
    assert abs(qre_dense_oracle(np.eye(3) / 3.0, sigma) - expected) <= 1e-7
    assert time.monotonic() - started < 10.0


def test_primary_feature_vector_identities():
    started = time.monotonic()
    rng = np.random.default_rng(203)
    for _ in range(100):
        n = int(rng.integers(2, 129))
        d = int(rng.integers(2, 17))
        m = random_embedding(rng, n, d)
        sigma = compute_spectrum(m)
        fv = feature_vector(sigma)
        total = float(fv.values.sum())
        # (a) entries sum to the divergence from the uniform reference.
        ref = qre(unit_base_spectrum(n), sigma).total
        assert abs(total - ref) <= 1e-8 * max(abs(ref), 1.0)
        # (b) the same sum has a closed form in the retained eigenvalues.
        closed = closed_form_qre_total(sigma, DEFAULT_EPSILON)
        assert abs(total - closed) <= 1e-8 * max(abs(closed), 1.0)
        # (c) right-orthogonal transforms and positive scaling are invisible.
        q = random_orthogonal(rng, d)
        scale = float(rng.uniform(0.5, 3.0))
        moved = EmbeddingMatrix(encoder_id=m.encoder_id, values=(m.values @ q) * scale)
        fv2 = feature_vector(compute_spectrum(moved))
        assert float(np.max(np.abs(fv.values - fv2.values))) <= 1e-8
    assert time.monotonic() - started < 60.0


def test_primary_self_and_copy_features_are_null():
    for n in (3, 17, 64):
        fv = feature_vector(compute_spectrum(EmbeddingMatrix("eye", np.eye(n))))
        assert float(np.max(np.abs(fv.values))) <= 1e-10
    rng = np.random.default_rng(204)
    m = random_embedding(rng, 40, 9, "orig")
    # Rebuild the matrix from its own bytes so the copy is bit-identical.
    raw = np.frombuffer(m.values.tobytes(), dtype=np.float64).reshape(m.values.shape)
    copy = EmbeddingMatrix(encoder_id="copy", values=raw)
    fa = feature_vector(compute_spectrum(m))
    fb = feature_vector(compute_spectrum(copy))
    assert l1_distance(fa, fb) < 1e-12


def test_primary_synthetic_groups_separate():
    started = time.monotonic()
    spec = SyntheticSpec(
        ambient_dim=500,
        groups=(GroupSpec(0.0, 1.0, 10), GroupSpec(3.0, 4.0, 10)),
        seed=7,
    )
    generated = generate(spec)
    features = [feature_vector(compute_spectrum(g.matrix)) for g in generated]
    groups = np.array([g.group_index for g in generated])
    # (a) noisier generators sit strictly farther from the uniform reference.
    low = [f.qre_total for f, g in zip(features, generated) if g.group_index == 0]
    high = [f.qre_total for f, g in zip(features, generated) if g.group_index == 1]
    assert max(low) < min(high)
    dist = pairwise_distances(features)
    # (c) every encoder's nearest neighbor stays inside its own group.
    for i, encoder_id in enumerate(dist.ids):
        neighbor, _ = nearest_neighbors(dist, encoder_id, 1)[0]
        assert groups[dist.ids.index(neighbor)] == groups[i]
    # (b) the projected map splits cleanly into the two generating groups.
    layout = tsne(dist, perplexity=6.0, iterations=1000, seed=0)
    assert purity(two_means_labels(layout.coords), groups) == 1.0
    assert time.monotonic() - started < 300.0


def test_primary_regression_pipeline_behavior():
    started = time.monotonic()
    # (a) at the computed threshold every coefficient is exactly zero.
    rng = np.random.default_rng(205)
    ratios = (0.25, 0.5, 0.75, 1.0)
    for trial in range(20):
        n = int(rng.integers(20, 61))
        p = int(rng.integers(2, 11))
        x = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        l1_ratio = ratios[trial % len(ratios)]
        amax = alpha_max(x, y, l1_ratio=l1_ratio)
        model = elastic_net_fit(x, y, alpha=amax, l1_ratio=l1_ratio)
        assert np.all(model.coefficients == 0.0)
    # (b) a noiseless standardized signal is ranked perfectly out of fold.
    raw = np.random.default_rng(92).normal(size=(40, 1))
    _, x = standardize_fit(raw)
    y = 2.0 * x[:, 0] + 1.0
    cv = elastic_net_cv(x, y, folds=5, seed=0)
    rho, _ = spearman(y, cv.oof_predictions)
    assert rho == 1.0
    # (c) the full pipeline recovers the generating quantity from features.
    spec = SyntheticSpec(
        ambient_dim=128, groups=(GroupSpec(0.0, 4.0, 112),), seed=11
    )
    features = [feature_vector(compute_spectrum(g.matrix)) for g in generate(spec)]
    truth = {f.encoder_id: f.qre_total for f in features}
    report = run_prediction_suite(features, {"qre": truth}, pca_dim=50, seed=0)[0]
    assert report.n_encoders == 112
    assert report.spearman >= 0.99
    # (d) permuted targets carry no recoverable signal on average.
    values = np.array([truth[f.encoder_id] for f in features])
    rhos = []
    for seed in range(20):
        shuffled = np.random.default_rng(seed).permutation(values)
        noise = {f.encoder_id: v for f, v in zip(features, shuffled)}
        rep = run_prediction_suite(features, {"null": noise}, pca_dim=50, seed=0)[0]
        rhos.append(abs(rep.spearman))
    assert float(np.mean(rhos)) < 0.3
    assert time.monotonic() - started < 120.0


def test_primary_l1_metric_axioms():
    rng = np.random.default_rng(206)
    for _ in range(200):
        dim = int(rng.integers(2, 33))
        a = make_feature(rng.normal(size=dim), "a")
        b = make_feature(rng.normal(size=dim), "b")
        c = make_feature(rng.normal(size=dim), "c")
        dab = l1_distance(a, b)
        assert dab >= 0.0
        assert dab > 0.0
        assert dab == l1_distance(b, a)
        assert l1_distance(a, a) == 0.0
        assert l1_distance(a, c) <= dab + l1_distance(b, c) + 1e-9


def test_primary_cli_outputs_are_byte_deterministic(tmp_path):
    def run(*argv):
        assert main(list(argv)) == 0

    def snapshot(directory):
        # The manifest name is content-addressed but its body holds a
        # timestamp, so determinism is judged on everything else.
        return {
            p.name: p.read_bytes()
            for p in sorted(directory.iterdir())
            if not p.name.startswith("manifest-")
        }

    emb = tmp_path / "emb"
    run("synth", "--n", "24", "--groups", "0,1,6", "--groups", "3,4,6",
        "--seed", "5", "--output-dir", str(emb))
    emaps = sorted(str(p) for p in emb.glob("*.emap"))
    assert len(emaps) == 12

    fvc_a = tmp_path / "fvc_a"
    fvc_b = tmp_path / "fvc_b"
    run("features", *emaps, "--output-dir", str(fvc_a))
    run("features", *emaps, "--output-dir", str(fvc_b))
    assert snapshot(fvc_a) == snapshot(fvc_b)

    efvcs = sorted(str(p) for p in fvc_a.glob("*.efvc"))
    map_args = ("map", *efvcs, "--perplexity", "3", "--iterations", "60", "--seed", "4")
    map_a = tmp_path / "map_a"
    map_b = tmp_path / "map_b"
    run(*map_args, "--output-dir", str(map_a))
    run(*map_args, "--output-dir", str(map_b))
    assert snapshot(map_a) == snapshot(map_b)

    scores = tmp_path / "scores.csv"
    ids = [p.stem for p in sorted(fvc_a.glob("*.efvc"))]
    rows = ["encoder_id,task_name,score"]
    rows += [f"{eid},taskA,{0.1 * i:.3f}" for i, eid in enumerate(ids)]
    scores.write_text("\n".join(rows) + "\n")
    predict_args = (
        "predict", *efvcs, "--scores", str(scores), "--pca-dim", "5", "--folds", "3"
    )
    pred_a = tmp_path / "pred_a"
    pred_b = tmp_path / "pred_b"
    run(*predict_args, "--output-dir", str(pred_a))
    run(*predict_args, "--output-dir", str(pred_b))
    assert snapshot(pred_a) == snapshot(pred_b)
