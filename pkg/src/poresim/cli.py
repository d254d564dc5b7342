"""Command line entry point: ``poresim <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .config import PipelineConfig, thread_count
from .datapipe import (
    TIME_WINDOWS,
    CleanConfig,
    clean_samples,
    daily_mean,
    prepare_daily,
    read_samples_csv,
    select_representative_index,
    write_samples_csv,
)
from .deform import build_flow_field, pore_circles, simulate, solve_warp_strength, window_features, write_flow_field
from .errors import PoresimError
from .imagecore import atomic_write_bytes, read_png, write_png
from .poreseg import detect_pores, mask_metrics, pore_stats, write_components_csv
from .rfregress import (
    RandomForestModel,
    build_regression_samples,
    fit_forest,
    predict,
    regression_metrics,
    samples_to_arrays,
)
from .synth import SyntheticSheetSpec, gen_synthetic_cohort, gen_synthetic_sheet

log = logging.getLogger("poresim")


def _write_json(path, payload) -> None:
    def writer(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    atomic_write_bytes(path, writer)


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    return cfg.validate()


def cmd_segment(args, cfg):
    img = read_png(args.inp)
    mask, comps = detect_pores(img, cfg.detection)
    write_png(args.out, mask.astype(float))
    if args.components:
        write_components_csv(args.components, comps)
    stats = pore_stats(comps)
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return {"pore_stats": stats.to_dict()}


def cmd_clean(args, cfg):
    clean_cfg = CleanConfig(
        window_days=args.window if args.window is not None else cfg.clean.window_days,
        k_sigma=args.k if args.k is not None else cfg.clean.k_sigma,
    ).validate()
    cfg.clean = clean_cfg
    samples = read_samples_csv(args.inp)
    kept, removed = clean_samples(samples, clean_cfg)
    write_samples_csv(args.out, kept)
    if args.removed:
        write_samples_csv(args.removed, removed)
    print(f"kept {len(kept)} rows, removed {len(removed)} rows", file=sys.stderr)
    return {"kept_rows": len(kept), "removed_rows": len(removed)}


def cmd_analyze(args, cfg):
    daily = prepare_daily(read_samples_csv(args.inp))
    report = select_representative_index(daily)
    _write_json(args.report, report)
    print(report["representative"])
    return {"representative": report["representative"]}


def cmd_train(args, cfg):
    if args.seed is not None:
        cfg.forest.rng_seed = args.seed
    samples = read_samples_csv(args.inp)
    rows = build_regression_samples(prepare_daily(samples), daily_mean(samples))
    X, y = samples_to_arrays(rows)
    model = fit_forest(X, y, cfg.forest, n_jobs=thread_count())
    model.save(args.model)
    metrics = regression_metrics(model.predict(X), y)
    per_window = {}
    for label in TIME_WINDOWS:
        sel = [i for i, r in enumerate(rows) if r.window == label]
        if len(sel) >= 1 and np.ptp(y[sel]) > 0:
            per_window[label] = regression_metrics(model.predict(X[sel]), y[sel])
    print(json.dumps({"train": metrics, "per_window": per_window}, sort_keys=True))
    return {"train_metrics": metrics, "per_window": per_window, "n_samples": len(rows)}


def cmd_simulate(args, cfg):
    beta = args.beta if args.beta is not None else cfg.beta
    img = read_png(args.inp)
    model = RandomForestModel.load(args.model)
    _, comps = detect_pores(img, cfg.detection)
    out = simulate(img, comps, model, args.window, beta)
    write_png(args.out, out)
    rho = predict(model, window_features(args.window, comps))
    if args.flow:
        h, w = img.shape[:2]
        write_flow_field(args.flow, build_flow_field(w, h, pore_circles(comps, solve_warp_strength(rho, beta), beta)))
    info = {"window": args.window, "area_ratio": rho, "strength": solve_warp_strength(rho, beta),
            "beta": beta, "pores": len(comps)}
    print(json.dumps(info, sort_keys=True))
    return info


def cmd_gen_sheet(args, cfg):
    spec = SyntheticSheetSpec(
        width=args.width, height=args.height, n_pores=args.n_pores,
        radius_range=(args.rmin, args.rmax), contrast_range=(args.contrast, args.contrast),
        n_lines=args.n_lines, rgb=not args.gray, rng_seed=args.seed,
    )
    sheet = gen_synthetic_sheet(spec)
    write_png(args.out, sheet.image)
    if args.truth:
        write_png(args.truth, sheet.truth_mask.astype(float))
    if args.pores:
        def writer(tmp):
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["id", "kind", "cx", "cy", "semi_major", "semi_minor", "angle_deg", "contrast", "area"])
                for i, p in enumerate(sheet.pores + sheet.lines):
                    wr.writerow([i, p.kind, p.cx, p.cy, p.semi_major, p.semi_minor, p.angle_deg, p.contrast, p.area])
        atomic_write_bytes(args.pores, writer)
    return {"spec": asdict(spec), "truth_area": sheet.truth_area}


def _parse_extra(items):
    out = {}
    for item in items or ():
        name, _, trend = item.partition("=")
        out[name] = float(trend or 0.0)
    return out


def cmd_gen_cohort(args, cfg):
    cohort = gen_synthetic_cohort(
        n_subjects=args.subjects, days=args.days, trend=args.trend, noise=args.noise,
        outlier_rate=args.outlier_rate, outlier_amplitude=args.outlier_amplitude,
        seed=args.seed, extra_indexes=_parse_extra(args.extra_index),
    )
    write_samples_csv(args.out, cohort.samples)
    if args.truth:
        def writer(tmp):
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh)
                wr.writerow(["subject_id", "day", "index_name", "factor"])
                for o in cohort.outliers:
                    wr.writerow([o.subject_id, o.day, o.index_name, repr(o.factor)])
        atomic_write_bytes(args.truth, writer)
    return {"samples": len(cohort.samples), "planted_outliers": len(cohort.outliers)}


def cmd_eval_seg(args, cfg):
    pred = read_png(args.pred)
    truth = read_png(args.truth)
    pred = (pred.mean(axis=2) if pred.ndim == 3 else pred) >= 0.5
    truth = (truth.mean(axis=2) if truth.ndim == 3 else truth) >= 0.5
    m = mask_metrics(pred, truth)
    for k in ("dice", "iou", "precision", "accuracy"):
        print(f"{k}\t{m[k]:.6f}")
    return m


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poresim", description="Facial pore detection, cleaning, regression and warp simulation.")
    p.add_argument("--version", action="version", version=f"poresim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--run-report", metavar="PATH", help="write a JSON run report (config hash, seed, versions)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", help="detect pores in a PNG")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True, help="mask PNG (0/255)")
    s.add_argument("--components", help="component CSV")
    s.add_argument("--config")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("clean", help="sliding-window outlier removal on an index CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--removed")
    s.add_argument("--window", type=int)
    s.add_argument("--k", type=float)
    s.add_argument("--config")
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("analyze", help="trend fit and representative index ranking")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="fit the random forest on cleaned data")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="warp pores for a time window")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--window", required=True, choices=sorted(TIME_WINDOWS))
    s.add_argument("--out", required=True)
    s.add_argument("--beta", type=float)
    s.add_argument("--flow", help="write the flow field sidecar (PSFF)")
    s.add_argument("--config")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen-sheet", help="synthetic pore sheet with truth mask")
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.add_argument("--pores", help="planted shapes CSV")
    s.add_argument("--width", type=int, default=512)
    s.add_argument("--height", type=int, default=512)
    s.add_argument("--n-pores", type=int, default=30)
    s.add_argument("--rmin", type=float, default=2.0)
    s.add_argument("--rmax", type=float, default=6.0)
    s.add_argument("--contrast", type=float, default=0.3)
    s.add_argument("--n-lines", type=int, default=0)
    s.add_argument("--gray", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_sheet)

    s = sub.add_parser("gen-cohort", help="synthetic index series CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="planted outliers CSV")
    s.add_argument("--subjects", type=int, default=60)
    s.add_argument("--days", type=int, default=30)
    s.add_argument("--trend", type=float, default=-0.005)
    s.add_argument("--noise", type=float, default=0.02)
    s.add_argument("--outlier-rate", type=float, default=0.0)
    s.add_argument("--outlier-amplitude", type=float, default=5.0)
    s.add_argument("--extra-index", action="append", metavar="NAME=TREND")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_cohort)

    s = sub.add_parser("eval-seg", help="Dice/IoU/Precision/Accuracy between two masks")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.set_defaults(func=cmd_eval_seg)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = _load_config(args)
        result = args.func(args, cfg)
    except (PoresimError, OSError) as exc:
        print(f"poresim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.run_report:
        seed = getattr(args, "seed", None)
        _write_json(args.run_report, {
            "command": args.command,
            "argv": list(argv) if argv is not None else sys.argv[1:],
            "config": cfg.to_dict(),
            "config_sha256": cfg.digest(),
            "seed": seed if seed is not None else cfg.forest.rng_seed,
            "versions": {"poresim": __version__, "python": platform.python_version(), "numpy": np.__version__},
            "elapsed_s": time.perf_counter() - started,
            "result": result,
        })
    return 0


if __name__ == "__main__":
    sys.exit(main())
