"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them live)."""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from conftest import (
    analytic_grads,
    build_joint_model,
    finite_difference_grads,
    max_pool_margin,
    random_chunkset,
    relative_error,
    synthetic_settings,
)
from qaclarity.chunking import ChunkingConfig, chunk, chunk_spans, expected_chunk_count
from qaclarity.cli import main
from qaclarity.dataset import (
    NUM_CLARITY_CLASSES,
    NUM_EVASION_CLASSES,
    ClarityLabel,
    EvasionLabel,
    Instance,
    save_dataset,
)
from qaclarity.ensemble import Ensemble
from qaclarity.evaluation import combined_f1, fleiss_kappa, macro_f1
from qaclarity.model import (
    LossConfig,
    LossKind,
    PoolingStrategy,
    loss,
    pool,
)
from qaclarity.synthetic import annotate_instances, generate_marker_dataset
from qaclarity.tokenization import TokenSequence
from qaclarity.training import EarlyStopper, run_cv, stratified_folds, train_fold


def _report(criterion: int, description: str, passed: bool) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[criterion {criterion:02d}] {status}  {description}")
    assert passed, f"criterion {criterion}: {description}"


# ---------------------------------------------------------------- criterion 1

def test_c01_chunking_loop_matches_closed_form_everywhere():
    started = time.monotonic()
    ok = True
    for window, stride in ((8, 4), (16, 8), (512, 256)):
        cfg = ChunkingConfig(window=window, stride=stride)
        for length in range(1, 5001):
            spans = chunk_spans(length, cfg)
            if len(spans) != expected_chunk_count(length, cfg):
                ok = False
            if spans[-1][1] != length:  # final chunk ends exactly at |T|
                ok = False
            # contiguity from 0 proves full index coverage
            if spans[0][0] != 0:
                ok = False
            for k in range(1, len(spans)):
                if spans[k][0] != k * stride or spans[k][0] > spans[k - 1][1]:
                    ok = False
        # materialized chunks agree with the span arithmetic on a subsample
        for length in range(1, 5001, 97):
            cs = chunk(TokenSequence("a", tuple(range(3, 3 + length))), cfg, pad_id=0)
            covered = np.zeros(length, dtype=bool)
            for c in cs.chunks:
                start = c.index * stride
                covered[start: start + c.real_length] = True
            if not covered.all():
                ok = False
    elapsed = time.monotonic() - started
    _report(1, f"chunk loop == closed form, full coverage, exact final end "
               f"for |T| in [1,5000] x 3 configs ({elapsed:.1f}s < 10s)",
            ok and elapsed < 10.0)


# ---------------------------------------------------------------- criterion 2

def test_c02_max_pool_oracle_and_permutation_invariance():
    rng = np.random.default_rng(2020)
    ok = True
    for _ in range(1000):
        m = int(rng.integers(1, 11))
        d = int(rng.integers(1, 33))
        h = rng.normal(size=(m, d))
        got = pool(h, PoolingStrategy.MAX)
        scan = np.empty(d)
        for j in range(d):
            best = h[0, j]
            for k in range(1, m):
                if h[k, j] > best:
                    best = h[k, j]
            scan[j] = best
        if not (got == scan).all():
            ok = False
        if not (pool(h[rng.permutation(m)], PoolingStrategy.MAX) == got).all():
            ok = False
        if m == 1:
            for strategy in PoolingStrategy:
                if not (pool(h, strategy) == h[0]).all():
                    ok = False
    single = rng.normal(size=(1, 16))
    coincide = all((pool(single, s) == single[0]).all() for s in PoolingStrategy)
    _report(2, "max-pool == scan oracle, permutation-invariant (exact, 1000 "
               "random lists); M=1 strategies coincide", ok and coincide)


# ---------------------------------------------------------------- criterion 3

def test_c03_full_model_gradients_match_finite_differences():
    rng = np.random.default_rng(3030)
    poolings = list(PoolingStrategy)
    worst = 0.0
    checked = 0
    attempt = 0
    while checked < 20:
        attempt += 1
        pooling = poolings[checked % 3]
        model = build_joint_model(seed=500 + attempt, d=8, window=16, vocab=32,
                                  pooling=pooling)
        cs = random_chunkset(rng, vocab=32, window=16, stride=8, max_tokens=40)
        gold_c = int(rng.integers(0, 3))
        gold_e = int(rng.integers(0, 9))
        if pooling is PoolingStrategy.MAX and max_pool_margin(model, cs) < 1e-3:
            continue  # finite differences are invalid at an argmax switch
        cfg = LossConfig()
        _, grads = analytic_grads(model, cs, gold_c, gold_e, cfg)
        fd = finite_difference_grads(
            model, lambda: analytic_grads(model, cs, gold_c, gold_e, cfg)[0],
            step=1e-5,
        )
        for name in model.params:
            worst = max(worst, relative_error(grads[name], fd[name]))
        checked += 1
    _report(3, f"analytic gradients match central finite differences on 20 "
               f"instances, worst relative error {worst:.2e} < 1e-4",
            worst < 1e-4)


# ---------------------------------------------------------------- criterion 4

def test_c04_loss_identities():
    rng = np.random.default_rng(4040)
    ok = True
    ce = LossConfig()
    focal0 = LossConfig(kind=LossKind.FOCAL, focal_gamma=0.0)
    unit = LossConfig(kind=LossKind.CLASS_WEIGHTED,
                      clarity_weights=(1.0,) * 3, evasion_weights=(1.0,) * 9)
    for _ in range(200):
        zc = rng.normal(size=3) * 5
        ze = rng.normal(size=9) * 5
        gc, ge = int(rng.integers(0, 3)), int(rng.integers(0, 9))
        base = loss(zc, ze, gc, ge, ce)
        for other_cfg in (focal0, unit):
            other = loss(zc, ze, gc, ge, other_cfg)
            if abs(base[0] - other[0]) > 1e-12:
                ok = False
            if np.abs(base[1] - other[1]).max() > 1e-12:
                ok = False
            if np.abs(base[2] - other[2]).max() > 1e-12:
                ok = False
    uniform, _, _ = loss(np.zeros(3), np.zeros(9), 0, 0,
                         LossConfig(evasion_enabled=False))
    ln3_ok = abs(uniform - math.log(3)) < 1e-9
    _report(4, "focal(gamma=0) == CE and unit-weight CE == CE to 1e-12; "
               "uniform 3-class CE == ln 3 +/- 1e-9", ok and ln3_ok)


# ---------------------------------------------------------------- criterion 5

def test_c05_macro_f1_oracle_and_combined_value():
    rng = np.random.default_rng(5050)

    def oracle(gold, pred, k):
        m = np.zeros((k, k), dtype=int)
        for g, p in zip(gold, pred):
            m[g, p] += 1
        total = 0.0
        for c in range(k):
            col, row, tp = m[:, c].sum(), m[c, :].sum(), m[c, c]
            prec = tp / col if col else 0.0
            rec = tp / row if row else 0.0
            total += 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return total / k

    ok = True
    for _ in range(1000):
        k = int(rng.choice([3, 9]))
        n = int(rng.integers(1, 51))
        gold = rng.integers(0, k, n)
        pred = rng.integers(0, k, n)
        if abs(macro_f1(gold, pred, k) - oracle(gold, pred, k)) > 1e-12:
            ok = False
    exact = combined_f1(0.70, 0.45) == 0.575
    _report(5, "macro-F1 matches independent confusion-matrix oracle on 1000 "
               "cases; combined_f1(0.70, 0.45) == 0.575 exactly", ok and exact)


# ---------------------------------------------------------------- criterion 6

def test_c06_ensemble_identities():
    instances = generate_marker_dataset(45, window=16, seed=66)
    settings = synthetic_settings(max_epochs=1)
    ckpt = train_fold(instances[:30], instances[30:], settings, seed=0).checkpoint
    single = Ensemble([ckpt])
    bitwise = True
    sums_ok = True
    for k in (1, 2, 4):
        ens = Ensemble([ckpt] * k)
        for inst in instances[:10]:
            a = single.predict(inst)
            b = ens.predict(inst)
            if not ((a.clarity_probs == b.clarity_probs).all()
                    and (a.evasion_probs == b.evasion_probs).all()):
                bitwise = False
            if abs(b.clarity_probs.sum() - 1.0) > 1e-9 \
                    or abs(b.evasion_probs.sum() - 1.0) > 1e-9:
                sums_ok = False
    _report(6, "k identical checkpoints reproduce the single model bitwise "
               "(k in {1,2,4}); averaged probabilities sum to 1 +/- 1e-9",
            bitwise and sums_ok)


# ---------------------------------------------------------------- criterion 7

def test_c07_stratification_proportionality():
    # clarity class sizes of the real training split
    sizes = {ClarityLabel.AMBIVALENT: 2040, ClarityLabel.CLEAR_NON_REPLY: 356,
             ClarityLabel.CLEAR_REPLY: 1052}
    instances = []
    i = 0
    for label, n in sizes.items():
        for _ in range(n):
            instances.append(Instance(id=f"s{i}", question="q", answer="a",
                                      clarity=label, evasion=EvasionLabel(i % 9)))
            i += 1
    plan = stratified_folds(instances, k=7, seed=42)
    partition_ok = sorted(plan.assignment) == sorted(inst.id for inst in instances)
    folds_seen = set(plan.assignment.values())
    ok = partition_ok and folds_seen == set(range(7))
    for label, n in sizes.items():
        share = n / 7
        counts = np.zeros(7, dtype=int)
        for inst in instances:
            if inst.clarity is label:
                counts[plan.assignment[inst.id]] += 1
        if np.abs(counts - share).max() > 1.0:
            ok = False
        if counts.sum() != n:
            ok = False
    _report(7, "k=7 folds partition 3448 ids exactly; per-fold class counts "
               "within 1 of the proportional share", ok)


# ---------------------------------------------------------------- criterion 8

def test_c08_end_to_end_learning_direction():
    started = time.monotonic()
    window = 16
    instances = generate_marker_dataset(300, window=window, seed=101)
    gold_c = [int(inst.clarity) for inst in instances]
    gold_e = [int(inst.evasion) for inst in instances]
    settings = synthetic_settings(window=window, hidden=32, folds=3,
                                  max_epochs=15, learning_rate=0.05)

    def oof_scores(result):
        pc = [int(ClarityLabel.from_name(r["clarity"])) for r in result.oof_rows]
        pe = [int(EvasionLabel.from_name(r["evasion"])) for r in result.oof_rows]
        return (macro_f1(gold_c, pc, NUM_CLARITY_CLASSES),
                macro_f1(gold_e, pe, NUM_EVASION_CLASSES))

    max_result = run_cv(instances, settings)
    max_c, max_e = oof_scores(max_result)

    preds = Ensemble(max_result.checkpoints).predict_many(instances)
    ens_c = macro_f1(gold_c, [int(p.clarity) for p in preds], NUM_CLARITY_CLASSES)
    ens_e = macro_f1(gold_e, [int(p.evasion) for p in preds], NUM_EVASION_CLASSES)

    first_result = run_cv(
        instances, replace(settings, pooling=PoolingStrategy.FIRST_CHUNK))
    first_c, first_e = oof_scores(first_result)

    elapsed = time.monotonic() - started
    epochs_ok = all(len(r.epochs) <= 15
                    for r in max_result.fold_results + first_result.fold_results)
    _report(8, f"max-pool 3-fold: OOF F1 ({max_c:.3f}, {max_e:.3f}) >= 0.95, "
               f"ensemble ({ens_c:.3f}, {ens_e:.3f}) >= 0.95; first-chunk OOF "
               f"({first_c:.3f}, {first_e:.3f}) <= 0.6; {elapsed:.0f}s < 300s",
            min(max_c, max_e, ens_c, ens_e) >= 0.95
            and max(first_c, first_e) <= 0.6
            and epochs_ok and elapsed < 300.0)


# ---------------------------------------------------------------- criterion 9

def test_c09_training_reruns_byte_identical(tmp_path):
    import json

    from qaclarity.synthetic import marker_tokenizer_config

    train_path = tmp_path / "train.jsonl"
    save_dataset(generate_marker_dataset(60, window=16, seed=99), train_path)
    payload = {
        "data": {"train": str(train_path)},
        "output_dir": str(tmp_path / "a"),
        "tokenizer": marker_tokenizer_config(),
        "encoder": {"hidden_width": 16, "max_positions": 16},
        "chunking": {"stride": 8},
        "train": {"learning_rate": 0.05, "batch_size": 8, "max_epochs": 2,
                  "base_seed": 42, "folds": 3},
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(payload), encoding="utf-8")
    code_a = main(["train", "--config", str(cfg)])
    code_b = main(["train", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "oof_predictions.jsonl").read_bytes()
    b = (tmp_path / "b" / "oof_predictions.jsonl").read_bytes()
    _report(9, "two cmd_train runs with identical config + seed produce "
               "byte-identical out-of-fold prediction files",
            code_a == 0 and code_b == 0 and a == b)


# --------------------------------------------------------------- criterion 10

def test_c10_any_annotator_dominates_and_kappa_calibration():
    rng = np.random.default_rng(1010)
    dominance_ok = True
    for trial in range(5):
        base = generate_marker_dataset(120, window=16, seed=200 + trial)
        annotated = annotate_instances(base, seed=300 + trial,
                                       unanimous=0.3 + 0.1 * trial, split_2_1=0.25)
        for taxonomy, k in (("clarity", 3), ("evasion", 9)):
            any_hits = 0
            maj_hits = 0
            for inst in annotated:
                ann = (inst.clarity_annotations if taxonomy == "clarity"
                       else inst.evasion_annotations)
                codes = [int(a) for a in ann]
                pred = int(rng.integers(0, k))
                any_hits += pred in codes
                values, counts = np.unique(codes, return_counts=True)
                top = counts.max()
                majority = (int(values[counts.argmax()])
                            if (counts == top).sum() == 1 else None)
                maj_hits += majority is not None and pred == majority
            if any_hits < maj_hits:
                dominance_ok = False

    perfect = [[0, 0, 0]] * 6 + [[2, 2, 2]] * 6 + [[1, 1, 1]] * 3
    kappa_one = abs(fleiss_kappa(perfect, 3) - 1.0) < 1e-12
    random_lists = rng.integers(0, 3, size=(10000, 3)).tolist()
    kappa_zero = abs(fleiss_kappa(random_lists, 3)) < 0.05
    _report(10, "any-annotator accuracy >= majority-vote accuracy on every "
                "generated annotated set; kappa == 1 for perfect agreement "
                "and |kappa| < 0.05 for 10000 uniform items",
            dominance_ok and kappa_one and kappa_zero)


# --------------------------------------------------------------- criterion 11

def test_c11_early_stopping_patience_semantics():
    stopper = EarlyStopper(patience=3)
    stopped_at = None
    for epoch, score in enumerate([0.5, 0.6, 0.6, 0.6, 0.6], start=1):
        stopper.observe(epoch, score)
        if stopper.should_stop:
            stopped_at = epoch
            break
    _report(11, "scripted scores [.5,.6,.6,.6,.6] stop after epoch 5 and "
                "select epoch 2",
            stopped_at == 5 and stopper.best_epoch == 2)
