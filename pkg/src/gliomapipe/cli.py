"""``gliomapipe`` command line: one entry point, one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import plotting
from .attention_unet import NetworkConfig, TrainConfig, build_model, load_checkpoint, predict, save_checkpoint, train
from .attention_unet.training import deterministic_mode
from .config import dump_config, resolve_config, set_path
from .data import PhantomSpec, generate_phantom, region_mask, save_raw_case
from .dataset import CaseEntry, read_manifest, write_manifest
from .errors import ConfigError, DataError, EmptyRegionError, IoError, PipelineError, SpecError
from .metrics import evaluate_case, summarize_cohort
from .radiomics import FeatureOptions, apply_scaler, extract_case_features, feature_table, fit_scaler
from .survival import (
    RegressorKind,
    SurvivalRecord,
    bucketize,
    cross_validate,
    evaluate_os,
    fit_pipeline,
    make_params,
    permutation_importance,
    read_survival_csv,
    tune_hyperparameters,
    write_survival_csv,
)
from .survival.evaluation import OS_COLUMNS, OS_HEADERS
from .survival.validation import params_dict

RESOLVED_CONFIG = "resolved_config.json"


def write_csv(df: pd.DataFrame, path, index=False):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=index, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv(path, **kw) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **kw)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def require(cfg, key: str):
    value = cfg["data"].get(key)
    if value is None:
        raise ConfigError(f"data.{key} is required for this command")
    return value


def network_config(cfg) -> NetworkConfig:
    return NetworkConfig(**cfg["network"], seed=cfg["seed"])


# --------------------------------------------------------------------------
# synth


def phantom_cohort(cfg) -> list:
    """[(PhantomSpec, age)] drawn from the synth section under the master seed."""
    sc = cfg["synth"]
    rng = np.random.default_rng(cfg["seed"])
    dims = tuple(int(d) for d in sc["dims"])
    if sc["phantoms"] is not None:
        out = []
        for i, raw in enumerate(sc["phantoms"]):
            raw = dict(raw)
            age = float(raw.pop("age", rng.uniform(*sc["age_range"])))
            raw.setdefault("seed", cfg["seed"] * 100003 + i)
            raw.setdefault("dims", dims)
            raw.setdefault("case_id", f"phantom_{i:04d}")
            try:
                spec = PhantomSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
            except TypeError as exc:
                raise SpecError(f"phantom {i}: {exc}") from exc
            spec.validate()
            out.append((spec, age))
        return out
    for name in ("tc_fraction_range", "ncr_fraction_range"):
        lo, hi = sc[name]
        if not 0 < lo <= hi <= 1:
            raise SpecError(f"synth.{name} must satisfy 0 < lo <= hi <= 1, got {sc[name]}")
    lo, hi = sc["wt_axes_range"]
    if not 0 < lo <= hi:
        raise SpecError(f"synth.wt_axes_range must satisfy 0 < lo <= hi, got {sc['wt_axes_range']}")
    out = []
    for i in range(int(sc["n_cases"])):
        wt = rng.uniform(*sc["wt_axes_range"], size=3)
        tc = wt * rng.uniform(*sc["tc_fraction_range"], size=3)
        ncr = tc * rng.uniform(*sc["ncr_fraction_range"], size=3)
        drop_ncr = rng.uniform() < sc["ncr_absent_fraction"]
        center = (np.array(dims) - 1) / 2.0 + rng.uniform(-sc["center_jitter"], sc["center_jitter"], size=3)
        age = float(rng.uniform(*sc["age_range"]))
        spec = PhantomSpec(
            seed=cfg["seed"] * 100003 + i, dims=dims,
            ncr_axes=None if drop_ncr else tuple(ncr), tc_axes=tuple(tc), wt_axes=tuple(wt),
            center=tuple(center), noise_sigma=float(sc["noise_sigma"]),
            spacing=tuple(sc["spacing"]), case_id=f"phantom_{i:04d}",
        )
        spec.validate()
        out.append((spec, age))
    return out


def planted_survival(label, spacing, age, coeffs) -> float:
    wt_mm3 = float(region_mask(label, "wt").sum() * np.prod(spacing))
    days = coeffs["intercept"] - coeffs["per_wt_mm3"] * wt_mm3 - coeffs["per_age_year"] * age
    return round(max(days, 0.0), 6)


def cmd_synth(cfg, out: Path):
    entries, records = [], []
    for spec, age in phantom_cohort(cfg):
        vol, lab = generate_phantom(spec)
        save_raw_case(out / "cases" / vol.case_id, vol, lab)
        entries.append(CaseEntry(vol.case_id, out, f"cases/{vol.case_id}"))
        records.append(SurvivalRecord(vol.case_id, round(age, 3),
                                      planted_survival(lab, vol.spacing, age, cfg["synth"]["survival"])))
    write_manifest(out, entries)
    write_survival_csv(records, out / "survival.csv")
    print(f"wrote {len(entries)} phantom cases to {out}")


# --------------------------------------------------------------------------
# segmentation


def cmd_train_seg(cfg, out: Path):
    entries = [e for e in read_manifest(require(cfg, "dataset")) if e.split == "train"]
    dataset = []
    for e in entries:
        vol, lab = e.load()
        if vol is None or lab is None:
            raise DataError(f"case {e.case_id!r} lacks an image or a label")
        dataset.append((vol, lab))
    tc = TrainConfig(**{**cfg["train"], "crop_dims": tuple(cfg["train"]["crop_dims"]) if cfg["train"]["crop_dims"] else None},
                     seed=cfg["seed"], deterministic=cfg["deterministic"])
    model = build_model(network_config(cfg))
    ckpt, history = train(model, dataset, tc)
    save_checkpoint(ckpt, out / "checkpoint.safetensors")
    write_csv(pd.DataFrame({"step": np.arange(1, len(history) + 1, dtype=int), "loss": history}),
              out / "loss_history.csv")
    if cfg["report"]["render"]:
        plotting.loss_plot(history, out / "loss_history.png")
    final = f"{history[-1]:.4f}" if history else "n/a"
    print(f"trained {len(history)} steps on {len(dataset)} cases; final loss {final}")


def cmd_infer_seg(cfg, out: Path):
    ckpt = load_checkpoint(require(cfg, "checkpoint"), expected_config=network_config(cfg))
    model = ckpt.model()
    window = cfg["infer"]["window"] or (ckpt.train_config or {}).get("crop_dims")
    pred_dir = out / "predictions"
    entries = []
    with deterministic_mode(cfg["deterministic"]):
        for e in read_manifest(require(cfg, "dataset")):
            vol, _ = e.load()
            if vol is None:
                raise DataError(f"case {e.case_id!r} has no image")
            pred = predict(model, vol, tuple(window) if window else None)
            save_raw_case(pred_dir / e.case_id, None, pred, spacing=vol.spacing)
            entries.append(CaseEntry(e.case_id, pred_dir, e.case_id, split=e.split))
    write_manifest(pred_dir, entries)
    print(f"wrote {len(entries)} predictions to {pred_dir}")


def _evaluate_arm(gt_entries: dict, pred_location, hd_percentile):
    cases = []
    for p in read_manifest(pred_location):
        if p.case_id not in gt_entries:
            raise DataError(f"no ground truth for predicted case {p.case_id!r}")
        gt_vol, gt_lab = gt_entries[p.case_id].load()
        if gt_lab is None:
            raise DataError(f"ground-truth case {p.case_id!r} has no label")
        _, pred_lab = p.load()
        spacing = gt_vol.spacing if gt_vol is not None else (1.0, 1.0, 1.0)
        cases.append(evaluate_case(pred_lab, gt_lab, spacing, hd_percentile))
    return cases


def _write_seg_reports(cases, directory: Path):
    write_csv(pd.DataFrame([c.as_row() for c in cases]), directory / "per_case_metrics.csv")
    summary = summarize_cohort(cases)
    write_csv(pd.DataFrame(summary.to_rows()), directory / "cohort_summary.csv")
    (directory / "cohort_summary.txt").write_text(summary.render())
    return summary


def cmd_eval_seg(cfg, out: Path):
    gt_entries = {e.case_id: e for e in read_manifest(require(cfg, "dataset"))}
    arms = cfg["eval"]["arms"]
    if not arms:
        cases = _evaluate_arm(gt_entries, require(cfg, "labels"), cfg["eval"]["hd_percentile"])
        summary = _write_seg_reports(cases, out)
        print(summary.render(), end="")
        return
    rows = []
    for arm, location in arms.items():
        cases = _evaluate_arm(gt_entries, location, cfg["eval"]["hd_percentile"])
        summary = _write_seg_reports(cases, out / arm)
        means = summary.stats["Mean"]
        rows.append({"arm": arm, "dice_et": means["dice_et"], "dice_wt": means["dice_wt"], "dice_tc": means["dice_tc"]})
    write_csv(pd.DataFrame(rows, columns=["arm", "dice_et", "dice_wt", "dice_tc"]), out / "comparison.csv")
    if cfg["report"]["render"]:
        plotting.comparison_plot(rows, out / "comparison.png")
    print(pd.DataFrame(rows).to_string(index=False))


# --------------------------------------------------------------------------
# radiomics and survival


def cmd_extract_features(cfg, out: Path):
    entries = read_manifest(require(cfg, "dataset"))
    label_entries = None
    if cfg["data"]["labels"]:
        label_entries = {e.case_id: e for e in read_manifest(cfg["data"]["labels"])}
    records = read_survival_csv(require(cfg, "survival_csv"))
    options = FeatureOptions(**cfg["radiomics"])
    vectors, splits, warnings = [], [], []
    for e in entries:
        if e.case_id not in records:
            warnings.append(f"{e.case_id}: no survival record; case excluded")
            continue
        vol, lab = e.load()
        if label_entries is not None:
            if e.case_id not in label_entries:
                warnings.append(f"{e.case_id}: no label in {cfg['data']['labels']}; case excluded")
                continue
            _, lab = label_entries[e.case_id].load()
        if vol is None or lab is None:
            warnings.append(f"{e.case_id}: missing image or label; case excluded")
            continue
        try:
            vectors.append(extract_case_features(vol, lab, records[e.case_id], options))
        except EmptyRegionError as exc:
            warnings.append(f"{e.case_id}: {exc}; case excluded")
            continue
        splits.append(e.split)
    (out / "warnings.txt").write_text("".join(w + "\n" for w in warnings))
    if not vectors:
        raise DataError("no cases left to extract features from")
    table = feature_table(vectors)
    training = table[[s == "train" for s in splits]]
    if training.empty:
        raise DataError("no training cases to fit the feature scaler on")
    scaler = fit_scaler(training)
    scaler.save(out / "scaler.json")
    table.insert(0, "split", splits)
    write_csv(table, out / "features.csv", index=True)
    scaled = apply_scaler(table.drop(columns="split"), scaler)
    scaled.insert(0, "split", splits)
    write_csv(scaled, out / "features_scaled.csv", index=True)
    print(f"extracted {table.shape[1] - 1} features for {len(vectors)} cases ({len(warnings)} warnings)")


def load_feature_table(path):
    table = read_csv(path, index_col="case_id", dtype={"case_id": str})
    splits = table.pop("split") if "split" in table.columns else pd.Series("train", index=table.index)
    return table.astype(np.float64), splits


def _survival_targets(table, records, require_all=True):
    missing = [c for c in table.index if c not in records or records[c].survival_days is None]
    if missing and require_all:
        raise DataError(f"no survival days for cases {missing[:5]}{'...' if len(missing) > 5 else ''}")
    keep = [c for c in table.index if c not in missing]
    return table.loc[keep], np.array([records[c].survival_days for c in keep], dtype=np.float64)


def _predictions_frame(case_ids, days, sc) -> pd.DataFrame:
    return pd.DataFrame({
        "case_id": list(case_ids),
        "predicted_days": days,
        "bucket": [bucketize(d, sc["short_below"], sc["long_above"]) for d in days],
    })


def _os_row(name, evaluation) -> dict:
    return {"model": name, **evaluation.as_row()}


def cmd_train_os(cfg, out: Path):
    sc = cfg["survival"]
    table, splits = load_feature_table(require(cfg, "features_csv"))
    records = read_survival_csv(require(cfg, "survival_csv"))
    X, y = _survival_targets(table[splits == "train"], records, require_all=False)
    if len(y) < sc["folds"]:
        raise DataError(f"{len(y)} training rows are fewer than {sc['folds']} folds")
    options = dict(select_features=sc["select_features"], k_max=sc["k_max"],
                   rfe_kind=RegressorKind(sc["rfe_estimator"]),
                   rfe_params=make_params(sc["rfe_estimator"], sc["hyperparams"].get(sc["rfe_estimator"])),
                   inner_folds=sc["inner_folds"])
    cv_rows, fold_rows, importance_rows, selected, used_params = [], [], [], {}, {}
    (out / "models").mkdir(parents=True, exist_ok=True)
    for name in sc["models"]:
        kind = RegressorKind(name)
        params = make_params(kind, sc["hyperparams"].get(kind.value))
        if sc["tune"].get(kind.value):
            scaled = apply_scaler(X, fit_scaler(X))
            params, _ = tune_hyperparameters(kind, scaled, y, sc["tune"][kind.value], sc["folds"], cfg["seed"],
                                             base=sc["hyperparams"].get(kind.value))
        used_params[kind.value] = params_dict(params)
        cv = cross_validate(kind, X, y, sc["folds"], cfg["seed"], params, **options)
        cv_rows.append(_os_row(kind.value, cv.aggregate))
        for fr in cv.folds:
            fold_rows.append({"model": kind.value, "fold": fr.fold, "n_validation": len(fr.validation_rows),
                              "n_selected": len(fr.selected), **fr.evaluation.as_row()})
        write_csv(_predictions_frame(X.index, cv.oof_predictions, sc), out / f"oof_{kind.value}.csv")

        pipe = fit_pipeline(kind, X, y, params, cfg["seed"], **options)
        with open(out / "models" / f"{kind.value}.pkl", "wb") as fh:
            pickle.dump(pipe, fh, protocol=4)
        selected[kind.value] = pipe.selected
        scaled_sel = apply_scaler(X, pipe.scaler)[pipe.selected]
        scores = permutation_importance(pipe.model, scaled_sel, y, sc["permutation_repeats"], cfg["seed"])
        for feat, s in sorted(zip(pipe.selected, scores), key=lambda t: -t[1]):
            importance_rows.append({"model": kind.value, "feature": feat, "importance": float(s)})
    columns = ["model"] + [OS_HEADERS[c] for c in OS_COLUMNS]
    write_csv(pd.DataFrame(cv_rows, columns=columns), out / "cv_results.csv")
    write_csv(pd.DataFrame(fold_rows), out / "cv_folds.csv")
    write_csv(pd.DataFrame(importance_rows, columns=["model", "feature", "importance"]),
              out / "permutation_importance.csv")
    (out / "selected_features.json").write_text(json.dumps(selected, indent=2) + "\n")
    (out / "model_params.json").write_text(json.dumps(used_params, indent=2, sort_keys=True) + "\n")
    print(pd.DataFrame(cv_rows, columns=columns).to_string(index=False))


def cmd_eval_os(cfg, out: Path):
    sc = cfg["survival"]
    models_dir = Path(require(cfg, "models_dir"))
    table, _ = load_feature_table(require(cfg, "features_csv"))
    records = read_survival_csv(cfg["data"]["survival_csv"]) if cfg["data"]["survival_csv"] else {}
    rows = []
    for name in sc["models"]:
        kind = RegressorKind(name)
        path = models_dir / "models" / f"{kind.value}.pkl"
        if not path.is_file():
            path = models_dir / f"{kind.value}.pkl"
        try:
            with open(path, "rb") as fh:
                pipe = pickle.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read model {path}: {exc}") from exc
        days = pipe.predict(table)
        write_csv(_predictions_frame(table.index, days, sc), out / f"predictions_{kind.value}.csv")
        truth = [records.get(c) for c in table.index]
        if truth and all(r is not None and r.survival_days is not None for r in truth):
            ev = evaluate_os(days, [r.survival_days for r in truth], sc["short_below"], sc["long_above"])
            rows.append(_os_row(kind.value, ev))
    if rows:
        columns = ["model"] + [OS_HEADERS[c] for c in OS_COLUMNS]
        write_csv(pd.DataFrame(rows, columns=columns), out / "os_results.csv")
        print(pd.DataFrame(rows, columns=columns).to_string(index=False))
    else:
        print(f"wrote predictions for {len(table)} cases (no ground truth to score)")


def bland_altman(pred, true) -> dict:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.size == 0:
        raise DataError("no predictions to report")
    diff = pred - true
    mean_diff = float(diff.mean())
    sd = float(diff.std())
    return {
        "mean": (pred + true) / 2.0,
        "diff": diff,
        "mean_diff": mean_diff,
        "sd": sd,
        "loa_lower": mean_diff - 1.96 * sd,
        "loa_upper": mean_diff + 1.96 * sd,
    }


def cmd_report(cfg, out: Path):
    preds = read_csv(require(cfg, "predictions_csv"), dtype={"case_id": str})
    records = read_survival_csv(require(cfg, "survival_csv"))
    preds = preds[[c in records and records[c].survival_days is not None for c in preds["case_id"]]]
    if preds.empty:
        raise DataError("no predictions with ground-truth survival to report")
    true = np.array([records[c].survival_days for c in preds["case_id"]])
    pred = preds["predicted_days"].to_numpy(dtype=np.float64)
    ba = bland_altman(pred, true)
    rows = pd.DataFrame({
        "row": "case", "case_id": preds["case_id"].to_numpy(), "true_days": true,
        "predicted_days": pred, "mean": ba["mean"], "diff": ba["diff"],
    })
    summary = pd.DataFrame({
        "row": "summary", "case_id": ["mean_diff", "sd", "loa_lower", "loa_upper"],
        "diff": [ba["mean_diff"], ba["sd"], ba["loa_lower"], ba["loa_upper"]],
    })
    write_csv(pd.concat([rows, summary], ignore_index=True), out / "bland_altman.csv")
    write_csv(pd.DataFrame({"case_id": preds["case_id"].to_numpy(), "true": true, "pred": pred}),
              out / "scatter.csv")
    if cfg["report"]["render"]:
        plotting.bland_altman_plot(ba["mean"], ba["diff"], ba["mean_diff"], ba["loa_lower"], ba["loa_upper"],
                                   out / "bland_altman.png")
        plotting.scatter_plot(true, pred, out / "scatter.png")
    print(f"mean difference {ba['mean_diff']:.3f} days, limits [{ba['loa_lower']:.3f}, {ba['loa_upper']:.3f}]")


COMMANDS = {
    "synth": cmd_synth,
    "train-seg": cmd_train_seg,
    "infer-seg": cmd_infer_seg,
    "eval-seg": cmd_eval_seg,
    "extract-features": cmd_extract_features,
    "train-os": cmd_train_os,
    "eval-os": cmd_eval_os,
    "report": cmd_report,
}

# flag -> dotted config key
FLAG_KEYS = {
    "dataset": "data.dataset",
    "labels": "data.labels",
    "checkpoint": "data.checkpoint",
    "survival": "data.survival_csv",
    "features": "data.features_csv",
    "models_dir": "data.models_dir",
    "predictions": "data.predictions_csv",
    "n_cases": "synth.n_cases",
    "max_steps": "train.max_steps",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                        help="single-threaded, bitwise-reproducible numerics (default on)")
    common.add_argument("--no-render", dest="render", action="store_false", default=None,
                        help="skip PNG figures")

    parser = argparse.ArgumentParser(prog="gliomapipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write a phantom dataset")
    p.add_argument("--n-cases", type=int)

    for name in ("train-seg", "infer-seg"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--dataset")
        p.add_argument("--attention", choices=("on", "off"))
        if name == "train-seg":
            p.add_argument("--max-steps", type=int)
        else:
            p.add_argument("--checkpoint")

    p = sub.add_parser("eval-seg", parents=[common])
    p.add_argument("--dataset")
    p.add_argument("--labels", help="prediction manifest or directory")
    p.add_argument("--arm", action="append", metavar="NAME=DIR", help="compare several prediction sets")

    p = sub.add_parser("extract-features", parents=[common])
    p.add_argument("--dataset")
    p.add_argument("--labels", help="use these labels instead of the dataset's ground truth")
    p.add_argument("--survival")

    for name in ("train-os", "eval-os"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--features")
        p.add_argument("--survival")
        p.add_argument("--models", help="comma-separated subset of gbt,mlp,rf,svr")
        if name == "eval-os":
            p.add_argument("--models-dir")

    p = sub.add_parser("report", parents=[common])
    p.add_argument("--predictions")
    p.add_argument("--survival")
    return parser


def cli_overrides(args) -> dict:
    tree: dict = {}
    if args.seed is not None:
        tree["seed"] = args.seed
    if args.out is not None:
        tree["out_dir"] = args.out
    if args.deterministic is not None:
        tree["deterministic"] = args.deterministic
    if args.render is not None:
        set_path(tree, "report.render", args.render)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            set_path(tree, key, value)
    if getattr(args, "attention", None):
        set_path(tree, "network.attention_enabled", args.attention == "on")
    if getattr(args, "models", None):
        set_path(tree, "survival.models", [m.strip() for m in args.models.split(",") if m.strip()])
    if getattr(args, "arm", None):
        arms = {}
        for item in args.arm:
            name, sep, location = item.partition("=")
            if not sep:
                raise ConfigError(f"--arm expects NAME=DIR, got {item!r}")
            arms[name] = location
        set_path(tree, "eval.arms", arms)
    return tree


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, overrides=cli_overrides(args))
        out = Path(cfg["out_dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / RESOLVED_CONFIG).write_text(dump_config(cfg))
        except OSError as exc:
            raise IoError(f"cannot write to output directory {out}: {exc}") from exc
        COMMANDS[args.command](cfg, out)
    except PipelineError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        # malformed config values surface here; keep the typed-category contract
        print(f"error [ConfigError]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
