"""Acceptance gate: one pass/fail line per criterion, collected in the terminal summary."""
import json
import math
import shutil
import time

import numpy as np
import pandas as pd
import pytest
import torch

from gliomapipe.attention_unet import (
    AttentionParams,
    NetworkConfig,
    TrainConfig,
    build_model,
    channel_attention,
    predict,
    seg_loss,
    skip_attention_forward,
    spatial_attention,
    train,
)
from gliomapipe.cli import bland_altman, main
from gliomapipe.data import PhantomSpec, generate_phantom, region_mask
from gliomapipe.metrics import (
    CohortSummary,
    STATISTICS,
    dice,
    hausdorff95,
    metric_columns,
    sensitivity,
    specificity,
)
from gliomapipe.radiomics import eccentricities, fractal_dimension, histogram_stats, principal_axes
from gliomapipe.survival import bucketize, evaluate_os, rfe_rank, select_k, spearman_r
from oracles import (
    brute_dice,
    brute_hausdorff,
    brute_sensitivity,
    brute_specificity,
    central_difference_grad,
    max_relative_error,
    random_mask_pair,
)

pytestmark = pytest.mark.slow


def run(*argv):
    return main([str(a) for a in argv])


def _leaves(*tensors):
    return [t.detach().clone().double().requires_grad_(True) for t in tensors]


def test_criterion_01_gradients(record_criterion):
    start = time.perf_counter()
    g = torch.Generator().manual_seed(0)
    errors = {}
    for c, spatial in ((8, (3, 4, 5)), (4, (6, 6, 6)), (2, (2, 3, 2))):
        p = AttentionParams.random(c, 2, generator=g)
        leaves = _leaves(torch.randn(1, c, *spatial, generator=g), *p.tensors())
        params = AttentionParams(*leaves[1:])
        f = leaves[0]
        w_s = torch.randn(1, 1, *spatial, dtype=torch.float64, generator=g)
        w_c = torch.randn(1, c, dtype=torch.float64, generator=g)
        w_o = torch.randn(1, c, *spatial, dtype=torch.float64, generator=g)
        cases = {
            "spatial": (lambda: (spatial_attention(f, params) * w_s).sum(),
                        [f, params.spatial_weight, params.spatial_bias]),
            "channel": (lambda: (channel_attention(f, params) * w_c).sum(),
                        [f, params.w1, params.b1, params.w2, params.b2]),
            "skip": (lambda: (skip_attention_forward(f, params) * w_o).sum(), leaves),
        }
        for name, (fn, wrt) in cases.items():
            analytic = torch.autograd.grad(fn(), wrt)
            errors[f"{name}_c{c}"] = max_relative_error(analytic, central_difference_grad(fn, wrt))
    labels = np.random.default_rng(0).choice([0, 1, 2, 4], size=(1, 6, 6, 6))
    (logits,) = _leaves(torch.randn(1, 4, 6, 6, 6, generator=g))
    fn = lambda: seg_loss(logits, labels)  # noqa: E731
    errors["seg_loss"] = max_relative_error(torch.autograd.grad(fn(), [logits]),
                                            central_difference_grad(fn, [logits]))
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    passed = worst < 1e-4 and elapsed < 120
    record_criterion(1, "analytic gradients match central differences",
                     passed, f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert passed, errors


def test_criterion_02_attention_algebra(record_criterion):
    rng = np.random.default_rng(2)
    exact, shapes_ok = True, True
    for _ in range(20):
        c = int(rng.choice([2, 4, 6, 8, 16]))
        shape = (int(rng.integers(1, 4)), c, *(int(s) for s in rng.integers(1, 9, size=3)))
        f = torch.from_numpy(rng.normal(size=shape))
        exact &= torch.equal(skip_attention_forward(f, AttentionParams.zeros(c)), 2 * f)
        random_params = AttentionParams.random(c, 2, generator=torch.Generator().manual_seed(int(rng.integers(1e6))))
        shapes_ok &= skip_attention_forward(f, random_params).shape == f.shape
    passed = bool(exact and shapes_ok)
    record_criterion(2, "zero attention parameters give 2F; shapes preserved over 20 shapes", passed)
    assert passed


def _overfit_phantoms(n=4, seed=0):
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(n):
        wt = rng.uniform(6.5, 8.0, size=3)
        tc = wt * rng.uniform(0.5, 0.8, size=3)
        ncr = tc * rng.uniform(0.3, 0.7, size=3)
        center = 7.5 + rng.uniform(-1, 1, size=3)
        spec = PhantomSpec(seed=i, dims=(16, 16, 16), ncr_axes=tuple(ncr), tc_axes=tuple(tc), wt_axes=tuple(wt),
                           center=tuple(center), noise_sigma=0.0, case_id=f"fit_{i}")
        cases.append(generate_phantom(spec))
    return cases


def test_criterion_03_overfit(record_criterion):
    start = time.perf_counter()
    cases = _overfit_phantoms()
    model = build_model(NetworkConfig(base_filters=8, depth=3, seed=0))
    tc = TrainConfig(learning_rate=0.00015, weight_decay=0.005, max_steps=300, batch_size=4, seed=0)
    train(model, cases, tc)
    dices = [dice(region_mask(predict(model, vol), "wt"), region_mask(lab, "wt")) for vol, lab in cases]
    elapsed = time.perf_counter() - start
    mean_wt = float(np.mean(dices))
    passed = mean_wt > 0.90 and elapsed < 600
    record_criterion(3, "attention UNet overfits 4 phantoms (mean WT Dice > 0.90)",
                     passed, f"WT Dice {mean_wt:.4f}, {elapsed:.1f}s")
    assert passed


def test_criterion_04_metric_oracles(record_criterion):
    rng = np.random.default_rng(4)
    mismatches, kinds = [], set()
    for i in range(200):
        p, g = random_mask_pair(rng, 16)
        kinds.add((bool(p.any()), bool(g.any())))
        spacing = (1.0, 1.0, 1.0) if i % 2 else tuple(rng.uniform(0.5, 2.0, size=3))
        if dice(p, g) != brute_dice(p, g) or sensitivity(p, g) != brute_sensitivity(p, g) \
                or specificity(p, g) != brute_specificity(p, g):
            mismatches.append((i, "overlap"))
        if abs(hausdorff95(p, g, spacing) - brute_hausdorff(p, g, spacing, 95)) > 1e-9:
            mismatches.append((i, "hd95"))
    covered = kinds == {(False, False), (False, True), (True, False), (True, True)}
    passed = not mismatches and covered
    record_criterion(4, "metrics match brute-force references on 200 mask pairs",
                     passed, f"{len(mismatches)} mismatches, empty cases covered: {covered}")
    assert passed, mismatches[:5]


def test_criterion_05_radiomics(record_criterion):
    start = time.perf_counter()
    grid = np.stack(np.meshgrid(*(np.arange(n) - (n - 1) / 2 for n in (48, 28, 16)), indexing="ij"), -1)
    ellipsoid = ((grid / np.array([20.0, 10.0, 5.0])) ** 2).sum(-1) <= 1
    lengths = principal_axes(ellipsoid).axis_lengths
    mer, eq = eccentricities(lengths)
    mer_true, eq_true = math.sqrt(1 - (5 / 20) ** 2), math.sqrt(1 - (10 / 20) ** 2)
    plane = np.zeros((64, 64, 64), bool)
    plane[:, :, 31] = True
    checks = {
        "axis_lengths": bool(np.all(np.abs(lengths / np.array([40, 20, 10]) - 1) < 0.05)),
        "eccentricities": abs(mer / mer_true - 1) < 0.02 and abs(eq / eq_true - 1) < 0.02,
        "cube": abs(fractal_dimension(np.ones((64, 64, 64), bool)) - 3.0) <= 0.15,
        "plane": abs(fractal_dimension(plane) - 2.0) <= 0.15,
        "entropy": abs(histogram_stats(np.repeat(np.arange(32) + 0.5, 7))[0] - 5.0) <= 1e-6,
        "kurtosis": abs(histogram_stats(np.random.default_rng(5).normal(size=10 ** 6))[2] - 3.0) <= 0.05,
    }
    elapsed = time.perf_counter() - start
    passed = all(checks.values()) and elapsed < 180
    failed = [k for k, v in checks.items() if not v]
    record_criterion(5, "radiomics analytic checks", passed, f"failed: {failed or 'none'}, {elapsed:.1f}s")
    assert passed


def _step_cohort(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((160, 15))
    y = 200 + 175 * (X[:, :3] > 0.5).sum(axis=1) + rng.normal(0, 10, 160)
    return pd.DataFrame(X, columns=[f"f{i:02d}" for i in range(15)]), y


def test_criterion_06_rfe_recovery(record_criterion):
    informative = {"f00", "f01", "f02"}
    top3_hits, k_hits, ks = 0, 0, []
    for seed in range(20):
        X, y = _step_cohort(seed)
        ranking = rfe_rank(X, y, "gbt", seed=seed)
        top3_hits += set(ranking[:3]) == informative
        sel = select_k(X, y, ranking, 10, "gbt", cv_folds=4, seed=seed)
        ks.append(sel.best_k)
        k_hits += sel.best_k in (3, 4, 5)
    passed = top3_hits >= 18 and k_hits >= 16
    record_criterion(6, "RFE recovers informative features; best_k in {3,4,5}",
                     passed, f"top-3 {top3_hits}/20, best_k {k_hits}/20, ks={ks}")
    assert passed


def test_criterion_07_survival_fixtures(record_criterion):
    ev = evaluate_os([100, 400, 500], [200, 350, 600])
    buckets = [bucketize(d) for d in (299, 300, 450, 451)]
    x = np.array([3.0, 10, 42, 97, 400, 1200])
    checks = [ev.mse == 7500.0, ev.accuracy == 1.0, buckets == ["short", "mid", "mid", "long"],
              spearman_r(x, np.log(x) * 7 - 2) == 1.0]
    passed = all(checks)
    record_criterion(7, "survival metric fixtures", passed, f"mse {ev.mse}, buckets {buckets}")
    assert passed


PLANTED = {
    "synth": {"n_cases": 64, "dims": [24, 24, 24], "wt_axes_range": [4.0, 9.0]},
    "survival": {"models": ["gbt"]},
}


def test_criterion_08_planted_signal(record_criterion, tmp_path):
    start = time.perf_counter()
    cfg = tmp_path / "planted.json"
    cfg.write_text(json.dumps(PLANTED))
    assert run("synth", "--config", cfg, "--seed", 7, "--out", tmp_path / "synth") == 0
    assert run("extract-features", "--config", cfg, "--seed", 7, "--out", tmp_path / "feat",
               "--dataset", tmp_path / "synth", "--survival", tmp_path / "synth" / "survival.csv") == 0
    assert run("train-os", "--config", cfg, "--seed", 7, "--out", tmp_path / "os", "--no-render",
               "--features", tmp_path / "feat" / "features.csv",
               "--survival", tmp_path / "synth" / "survival.csv") == 0
    elapsed = time.perf_counter() - start
    row = pd.read_csv(tmp_path / "os" / "cv_results.csv").set_index("model").loc["gbt"]
    passed = row["Accuracy"] > 0.8 and row["SpearmanR"] > 0.8 and elapsed < 300
    record_criterion(8, "planted survival signal recovered by GBT 4-fold CV", passed,
                     f"accuracy {row['Accuracy']:.3f}, SpearmanR {row['SpearmanR']:.3f}, {elapsed:.1f}s")
    assert passed


DETERMINISM = {
    "synth": {"n_cases": 8, "dims": [16, 16, 16], "wt_axes_range": [4.0, 6.0], "noise_sigma": 0.05},
    "network": {"base_filters": 4, "depth": 2},
    "train": {"max_steps": 3, "batch_size": 2, "crop_dims": [8, 8, 8]},
    "survival": {"k_max": 3, "inner_folds": 2,
                 "hyperparams": {"gbt": {"n_rounds": 20}, "rf": {"n_trees": 10}, "mlp": {"epochs": 50}}},
}


def _run_everything(root, cfg):
    s, seg, inf = root / "synth", root / "seg", root / "infer"
    common = ("--config", cfg, "--seed", 11)
    steps = [
        ("synth", "--out", s),
        ("train-seg", "--out", seg, "--dataset", s),
        ("infer-seg", "--out", inf, "--dataset", s, "--checkpoint", seg / "checkpoint.safetensors"),
        ("eval-seg", "--out", root / "eval", "--dataset", s, "--labels", inf / "predictions"),
        ("eval-seg", "--out", root / "arms", "--dataset", s, "--arm", f"gt={s}", "--arm", f"net={inf / 'predictions'}"),
        ("extract-features", "--out", root / "feat", "--dataset", s, "--survival", s / "survival.csv"),
        ("train-os", "--out", root / "os", "--features", root / "feat" / "features.csv", "--survival", s / "survival.csv"),
        ("eval-os", "--out", root / "evalos", "--features", root / "feat" / "features.csv",
         "--survival", s / "survival.csv", "--models-dir", root / "os"),
        ("report", "--out", root / "report", "--predictions", root / "os" / "oof_gbt.csv",
         "--survival", s / "survival.csv"),
    ]
    for cmd, *rest in steps:
        assert run(cmd, *common, *rest) == 0, cmd
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_09_determinism(record_criterion, tmp_path):
    cfg = tmp_path / "det.json"
    cfg.write_text(json.dumps(DETERMINISM))
    root = tmp_path / "run"
    first = _run_everything(root, cfg)
    shutil.rmtree(root)
    second = _run_everything(root, cfg)
    differing = sorted(k for k in first if first[k] != second.get(k))
    same_set = set(first) == set(second)
    passed = same_set and not differing
    record_criterion(9, "every command is byte-identical on re-run", passed,
                     f"{len(first)} files compared, differing: {differing or 'none'}")
    assert passed


def test_criterion_10_report_fixtures(record_criterion):
    dice_means = {"dice_et": 0.704, "dice_wt": 0.898, "dice_tc": 0.792}
    stats = {s: {c: 0.0 for c, _, _ in metric_columns()} for s in STATISTICS}
    stats["Mean"].update(dice_means)
    lines = CohortSummary(stats, 1).render().splitlines()
    titles = [t.strip() for t in lines[0].split("|")[1:]]
    regions = [t.strip() for t in lines[1].split("|")[1:]]
    mean_cells = [t.strip() for t in lines[2].split("|")]
    layout_ok = (titles == ["Dice", "Hausdorff", "Sensitivity", "Specificity"]
                 and regions == ["ET", "WT", "TC"] * 4
                 and mean_cells[0] == "Mean" and mean_cells[1:4] == ["0.704", "0.898", "0.792"]
                 and [ln.split("|")[0].strip() for ln in lines[2:]] == ["Mean", "StdDev", "Median"])
    row = evaluate_os([100, 400, 500], [200, 350, 600]).as_row()
    columns_ok = list(row)[:4] == ["Accuracy", "MSE", "MedianSE", "stdSE"]
    true = np.array([150.0, 310, 460, 800, 1020])
    ba = bland_altman(true + 10, true)
    ba_ok = ba["mean_diff"] == 10.0 and ba["sd"] == 0.0
    passed = layout_ok and columns_ok and ba_ok
    record_criterion(10, "report-format fixtures (summary layout, OS columns, Bland-Altman bias)", passed,
                     f"layout {layout_ok}, columns {columns_ok}, bias {ba_ok}")
    assert passed
