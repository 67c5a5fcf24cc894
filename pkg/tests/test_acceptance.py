"""Shipping gate: one test per release criterion, stated tolerances pinned.

Every test prints exactly one `criterion N: PASS/FAIL/SKIP — detail` line, so
a verbose run doubles as the release checklist.  Criteria 5 and 6 share one
set of trainings (module-scoped fixture); criterion 8 only runs when a real
reverse-QA corpus is supplied from outside.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from antnet.autodiff import Value
from antnet.cli import main as cli_main
from antnet.corpus import (
    SynthConfig,
    Vocab,
    generate_synthetic,
    index_corpus,
    load_corpus,
)
from antnet.fusion import ClassifierParams, HopParams, classify, fuse, hop
from antnet.gradcheck import check_all_variants
from antnet.model import AntNetModel, Hyper, VariantSpec
from antnet.answer_repr import enlarge
from antnet.question_repr import full_repr, skeleton_repr, skeleton_scores
from antnet.training import TrainConfig, build_skeleton_cache, run_experiment, train


def _line(num: int, ok: bool, detail: str) -> bool:
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} — {detail}")
    return ok


def test_criterion_1_gradients_match_finite_differences():
    t0 = time.perf_counter()
    reports = check_all_variants()  # toy fixture, dropout off, tolerance 1e-4
    elapsed = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 60.0
    assert _line(1, ok, f"{len(reports)} variants, max rel err {worst:.2e} "
                        f"(tol 1e-4), {elapsed:.1f}s (< 60s)")


def test_criterion_2_softmax_distributions_sum_to_one():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        scale = 10.0 ** rng.uniform(-2.0, 2.0)
        m = int(rng.integers(1, 9))
        emb = int(rng.integers(2, 9))
        d = 2 * int(rng.integers(1, 5))
        n = int(rng.integers(1, 7))
        ne = int(rng.integers(1, 5))
        r = int(rng.integers(2, 9))

        sums = []
        # normalized skeleton scores
        q_emb = Value(rng.normal(scale=scale, size=(m, emb)))
        w_s = Value(rng.normal(scale=scale, size=(emb, emb)))
        ctx = rng.normal(scale=scale, size=emb)
        sums.append(skeleton_scores(q_emb, ctx, w_s).normalized.data.sum())
        # full-question attention
        hq = Value(rng.normal(scale=scale, size=(m, d)))
        u = Value(rng.normal(scale=scale, size=d))
        w_a = Value(rng.normal(scale=scale, size=(d, d)))
        sums.append(full_repr(hq, u, w_a)[1].data.sum())
        # per-hop attention over answer positions
        params = HopParams.init(d, d + ne, r, rng)
        f_prev = Value(rng.normal(scale=scale, size=d))
        h_prime = Value(rng.normal(scale=scale, size=(n, d + ne)))
        sums.append(hop(f_prev, h_prime, params)[1].data.sum())
        # classifier output
        clf = ClassifierParams.init(2 * d, rng)
        sums.append(classify(Value(rng.normal(scale=scale, size=2 * d)), clf).data.sum())

        worst = max(worst, max(abs(s - 1.0) for s in sums))
    ok = worst <= 1e-6
    assert _line(2, ok, f"4 sites x 1,000 random configs, "
                        f"max |sum - 1| = {worst:.2e} (tol 1e-6)")


def test_criterion_3_exact_definition_identities():
    rng = np.random.default_rng(33)
    checks = {}

    # enlarging replicates the score bit-exactly into every copy
    p_vec = Value(rng.normal(size=7))
    e = enlarge(p_vec, 4)
    checks["vector replication"] = all(
        e.data[:, k].tobytes() == p_vec.data.tobytes() for k in range(4))
    p_scalar = Value(0.37)
    e2 = enlarge(p_scalar, 5)
    checks["scalar replication"] = (
        e2.data.tobytes() == np.repeat(p_scalar.data, 5).tobytes())

    # a single-word skeleton is that word's hidden state, same bits
    basis = np.zeros(4)
    basis[0] = 1.0
    q_emb = Value(np.vstack([10.0 * basis, -basis, -2.0 * basis]))
    weights = skeleton_scores(q_emb, 10.0 * basis, Value(np.eye(4)))
    checks["single member"] = weights.members.tolist() == [True, False, False]
    hq = Value(rng.normal(size=(3, 6)))
    checks["single-word skeleton"] = (
        skeleton_repr(hq, weights).data.tobytes() == hq.data[0].tobytes())

    # zero hops bypasses the answer: fuse == classify [v; u]
    v = Value(rng.normal(size=6))
    u = Value(rng.normal(size=6))
    h_prime = Value(rng.normal(size=(5, 8)))
    v_final, _ = fuse(v, u, h_prime, None, hops=0)
    cat = np.concatenate([v.data, u.data])
    checks["zero-hop concat"] = v_final.data.tobytes() == cat.tobytes()
    clf = ClassifierParams.init(12, rng)
    checks["zero-hop classify"] = (
        classify(v_final, clf).data.tobytes() == classify(Value(cat), clf).data.tobytes())

    failed = [k for k, good in checks.items() if not good]
    ok = not failed
    assert _line(3, ok, "replication / single-word skeleton / zero-hop "
                        "identities all bit-exact" if ok else
                        f"bit-exactness broken: {failed}")


def test_criterion_4_overfits_default_synthetic_corpus():
    t0 = time.perf_counter()
    samples = generate_synthetic(SynthConfig(seed=7))  # 20 TF + 20 MC, 8 answers
    vocab = Vocab.from_samples(samples)
    hyper = Hyper(emb_dim=32, hidden_dim=32, ne=5, hops=2)
    train_set = index_corpus(samples, vocab, hyper.max_len)
    model = AntNetModel(VariantSpec.parse("antnet"), hyper, vocab, seed=7)
    cache = build_skeleton_cache(train_set, model.embeddings)
    config = TrainConfig(learning_rate=2e-2, dropout=0.0, max_epochs=200,
                         batch_size=16, seed=7, patience=None,
                         target_train_acc=0.95)
    result = train(model, train_set, None, config, cache)
    elapsed = time.perf_counter() - t0
    acc = result.final_train_accuracy
    epochs = len(result.history)
    ok = acc >= 0.95 and epochs <= 200 and elapsed < 300.0
    assert _line(4, ok, f"train accuracy {acc:.4f} (>= 0.95) after {epochs} "
                        f"epochs (<= 200), {elapsed:.0f}s (< 300s)")


# Criteria 5/6 share one corpus and one set of trainings.  The corpus keeps
# every multi-choice question at exactly two options so the labels hinge on
# matching the asked-about option against the option the answer mentions —
# the relation only the full model can represent; see tests below.
_NOISY = SynthConfig(n_tf_questions=8, n_mc_questions=12,
                     answers_per_question=6, n_options_range=(2, 2),
                     irrelevant_span_prob=0.5, seed=7)
_DIRECTION_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="module")
def direction_means():
    samples = generate_synthetic(_NOISY)
    hyper = Hyper(emb_dim=16, hidden_dim=16, ne=3, hops=2)
    out = {}
    for name in ("antnet", "antnet-sa-mf", "bilstm-a"):
        accs = []
        for seed in _DIRECTION_SEEDS:
            config = TrainConfig(learning_rate=1e-2, dropout=0.0,
                                 max_epochs=50, batch_size=16, seed=seed,
                                 patience=None)
            accs.append(run_experiment(name, samples, hyper, config)
                        .test_report.accuracy)
        out[name] = (float(np.mean(accs)), accs)
    return out


def test_criterion_5_full_model_beats_double_ablation(direction_means):
    full, full_accs = direction_means["antnet"]
    ablated, abl_accs = direction_means["antnet-sa-mf"]
    ok = full > ablated
    assert _line(5, ok, f"mean test accuracy over {len(full_accs)} seeds: "
                        f"antnet {full:.4f} > antnet-sa-mf {ablated:.4f} "
                        f"(strict, direction only)")


def test_criterion_6_full_model_beats_answer_only_baseline(direction_means):
    full, full_accs = direction_means["antnet"]
    baseline, base_accs = direction_means["bilstm-a"]
    ok = full > baseline
    assert _line(6, ok, f"mean test accuracy over {len(full_accs)} seeds: "
                        f"antnet {full:.4f} > bilstm-a {baseline:.4f} "
                        f"(strict, direction only)")


def test_criterion_7_identical_manifests_reproduce_bitwise(tmp_path):
    outdir = tmp_path / "run"
    flags = ["train", "--synthetic", "default", "--outdir", str(outdir),
             "--variant", "antnet", "--seed", "11", "--emb-dim", "6",
             "--hidden-dim", "8", "--ne", "2", "--hops", "1",
             "--epochs", "2", "--batch-size", "8"]
    tracked = ("manifest.json", "history.jsonl", "model.ckpt")

    assert cli_main(flags) == 0
    first = {name: (outdir / name).read_bytes() for name in tracked}
    assert cli_main(flags) == 0
    second = {name: (outdir / name).read_bytes() for name in tracked}

    same_manifest = first["manifest.json"] == second["manifest.json"]
    same_outputs = all(first[n] == second[n] for n in tracked[1:])
    ok = same_manifest and same_outputs
    assert _line(7, ok, "reruns under one manifest: history.jsonl and "
                        "model.ckpt byte-identical" if ok else
                        f"bytes differ (manifest equal: {same_manifest})")


def test_criterion_8_external_corpus_reproduction():
    """Runs only against a real reverse-QA corpus supplied from outside.

    Reference operating point: ne=13, hops=3 at d=128, expected test accuracy
    0.7986 ± 0.05 on the short-answer corpus.  Deviations beyond the tolerance
    are reported, not hard-failed (batch size, stopping rule, and d are not
    pinned by the reference setup).
    """
    path = Path(os.environ.get("ANTNET_EVAL_CORPUS", "data/reverse_qa.jsonl"))
    if not path.exists():
        print("criterion 8: SKIP — no external reverse-QA corpus at "
              f"{path}; criteria 1–7 constitute acceptance")
        pytest.skip("external corpus unavailable")

    samples, _ = load_corpus(path)
    hyper = Hyper(emb_dim=128, hidden_dim=128, ne=13, hops=3)
    config = TrainConfig(max_epochs=50, seed=0)  # reference lr/dropout defaults
    outcome = run_experiment("antnet", samples, hyper, config)
    acc = outcome.test_report.accuracy
    within = abs(acc - 0.7986) <= 0.05
    print(f"criterion 8: {'PASS' if within else 'REPORTED'} — test accuracy "
          f"{acc:.4f} vs reference 0.7986 ± 0.05 (deviations reported, "
          f"not failed)")
