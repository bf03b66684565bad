"""``comfort-index`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or training failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ComfortIndexError, ParameterError, TrainingError
from .features import comfort_labels, emotion_matrix, label_windows, split_dataset, uncomfort_labels

log = logging.getLogger("comfort_index")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _settings(args, section_defaults: dict) -> dict:
    """Config-file values overlaid by explicitly given CLI flags."""
    cfg = dict(section_defaults)
    if args.config:
        cfg.update(io.load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _pipeline_config(cfg: dict, models=None):
    from .pipeline import PipelineConfig

    if models is not None:
        cfg = {**cfg, "models": tuple(models)}
    return PipelineConfig.from_dict(cfg)


def _models_arg(value):
    return ("rf", "nn") if value == "both" else (value,)


def _targets(samples, target, source="complement"):
    return comfort_labels(samples) if target == "comfort" else uncomfort_labels(samples, source)


def _subset_av(samples, target):
    from .circumplex import EmotionAngles
    from .pipeline import reported_av

    av_ci, ok_ci, av_un, ok_un = reported_av(emotion_matrix(samples), EmotionAngles())
    return (av_ci, ok_ci) if target == "comfort" else (av_un, ok_un)


# commands ------------------------------------------------------------------

def cmd_synth(args):
    from .synth import SynthConfig, spike_latent, synth_generate

    cfg = _settings(args, {})
    if args.subjects is not None:
        cfg["n_subjects"] = args.subjects
    if args.trials is not None:
        cfg["trials_per_subject"] = args.trials
    spikes = args.spike_trial or cfg.pop("spike_trial", None)
    sc = SynthConfig.from_mapping(cfg)
    if spikes:
        sc = SynthConfig.from_mapping({**cfg, "latent_overrides": {spikes: spike_latent(sc.duration_s)}})
    records, truth = synth_generate(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rec in records:
        io.save_trial(rec, out / f"{rec.trial_id}.trial")
    io.save_json_doc({"seed": sc.seed, "trials": truth}, out / "ground_truth.json", "comfort-index-truth")
    print(f"wrote {len(records)} trials and ground_truth.json to {out} (seed {sc.seed})")


def cmd_extract(args):
    cfg = _settings(args, {"half_width": 6.0, "min_coverage": 0.8, "gsr_method": "als"})
    paths = io.trial_paths(args.inp)
    if not paths:
        raise ComfortIndexError(f"no .trial files in {args.inp}")
    samples, n_reports = [], 0
    for p in paths:
        trial = io.load_trial(p)
        n_reports += len(trial.reports)
        samples += label_windows(trial, float(cfg["half_width"]), float(cfg["min_coverage"]), cfg["gsr_method"])
    io.save_features(samples, args.out)
    print(f"extracted {len(samples)} windows from {len(paths)} trials ({n_reports - len(samples)} reports dropped)")


def cmd_fit_axis(args):
    from .circumplex import fit_axis
    from .plotting import figure_path, plot_axis_fit

    cfg = _settings(args, {})
    samples = io.load_features(args.features)
    av, ok = _subset_av(samples, args.target)
    y = _targets(samples, args.target, cfg.get("uncomfort_source", "complement"))
    model = fit_axis(av[ok], y[ok])
    io.save_json_doc({"target": args.target, "axis": model.to_dict(), "seed": cfg["seed"]},
                     args.out, "comfort-index-axis")
    plot_axis_fit(figure_path(args.out), av[ok], y[ok], model.theta_deg, title=f"{args.target} axis")
    print(f"theta_deg,{model.theta_deg!r}")
    print(f"fit_mse,{model.fit_mse!r}")


def cmd_fit_kde(args):
    from .kde import fit_weighted_kde
    from .plotting import figure_path, plot_kde

    cfg = _settings(args, {"kde_grid": 201})
    samples = io.load_features(args.features)
    av, ok = _subset_av(samples, args.target)
    y = _targets(samples, args.target, cfg.get("uncomfort_source", "complement"))
    kde = fit_weighted_kde(av[ok], y[ok], int(cfg["kde_grid"]))
    io.save_json_doc({"target": args.target, "kde": kde.to_dict(), "seed": cfg["seed"]},
                     args.out, "comfort-index-kde")
    plot_kde(figure_path(args.out), kde, title=f"{args.target} KDE")
    print(f"n_points,{len(kde.points)}")
    print(f"bandwidth_factor,{kde.bandwidth_factor!r}")
    print(f"kernel_max,{kde.kernel_max!r}")


def cmd_train(args):
    from .pipeline import train_pipeline

    cfg = _settings(args, {})
    pc = _pipeline_config(cfg, _models_arg(args.model))
    samples = io.load_features(args.features)
    train, test = split_dataset(samples, args.split, seed=pc.seed)
    pipeline = train_pipeline(train, pc)
    pipeline.train_info.update({"split": args.split, "n_test": len(test)})
    io.save_bundle(pipeline, args.out)
    if args.test_out:
        io.save_features(test, args.test_out)
    print(f"trained {','.join(pc.models)} on {len(train)} samples ({len(test)} held out), seed {pc.seed}")
    print(f"axis_ci_deg,{pipeline.axis_ci.theta_deg!r}")
    print(f"axis_unci_deg,{pipeline.axis_unci.theta_deg!r}")


def _metrics_rows(table):
    from .pipeline import TARGETS

    header = ["variant"] + [f"{t}_{s}" for t in TARGETS for s in ("rmse", "mae")]
    rows = [[key] + [getattr(m[t], s) for t in TARGETS for s in ("rmse", "mae")] for key, m in table.items()]
    return header, rows


def _print_table(header, rows):
    print(",".join(header))
    for r in rows:
        print(",".join([r[0]] + [f"{v:.4f}" for v in r[1:]]))


def cmd_eval(args):
    from .pipeline import METHODS, TARGETS, evaluate
    from .plotting import figure_path, plot_metrics

    _settings(args, {})
    pipeline = io.load_bundle(args.bundle)
    samples = io.load_features(args.features)
    methods = METHODS if args.method == "all" else (args.method,)
    models = sorted(pipeline.emotion_models) if args.model == "all" else [args.model]
    table = {}
    for k in models:
        for m in methods:
            table[f"{m}({k})"] = evaluate(pipeline, samples, m, k, log_path=args.log)
    if args.reported:
        for m in methods:
            if m != "direct":
                table[f"{m}(reported)"] = evaluate(pipeline, samples, m, models[0], emotion_source="reported")
    header, rows = _metrics_rows(table)
    _print_table(header, rows)
    if args.out:
        io.write_csv(args.out, header, rows)
        plot_metrics(figure_path(args.out), table, TARGETS)


def cmd_loto(args):
    from .pipeline import leave_one_trial_out
    from .plotting import figure_path, plot_trace

    args.config = args.config or args.bundle_config
    cfg = _settings(args, {})
    pc = _pipeline_config(cfg, _models_arg(args.model) if args.model else None)
    model = args.model if args.model in ("rf", "nn") else pc.models[0]
    samples = io.load_features(args.features)
    res = leave_one_trial_out(samples, args.trial, args.method, model, pc)
    header = ("t", "ci_pred", "unci_pred", "ci_reported", "unci_reported")
    out = args.out or f"loto_{args.trial}.csv"
    io.write_csv(out, header, res.trace)
    tr = np.array(res.trace)
    plot_trace(figure_path(out), tr[:, 0], tr[:, 2], reported=tr[:, 4],
               title=f"{args.trial}: {args.method}({model}) held out")
    print(f"trial,{args.trial}")
    for t in ("ci", "unci"):
        print(f"{t}_rmse,{res.metrics[t].rmse:.4f}")
        print(f"{t}_mae,{res.metrics[t].mae:.4f}")
    print(f"trace,{out}")


def cmd_replay(args):
    from .plotting import figure_path, plot_trace
    from .streaming import replay

    cfg = _settings(args, {"buffer_seconds": 60.0, "feature_seconds": 12.0})
    pipeline = io.load_bundle(args.bundle)
    trial = io.load_trial(args.trial)
    trace = replay(trial, pipeline, buffer_seconds=float(cfg["buffer_seconds"]),
                   feature_seconds=float(cfg["feature_seconds"]), trace_path=args.out)
    if trace:
        t = [e.t for e in trace]
        plot_trace(figure_path(args.out), t, [e.raw_unci for e in trace],
                   smoothed=[e.smoothed_unci for e in trace], title=f"{trial.trial_id} replay")
    print(f"ticks,{len(trace)}")
    print(f"trace,{args.out}")


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed overriding the config file")
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--verbose", "-v", action="store_true")

    p = _Parser(prog="comfort-index", description="Comfortability index estimation from physiology.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--subjects", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--spike-trial", help="trial id given three uncomfort spikes")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="windowed feature extraction")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    for name, func in (("fit-axis", cmd_fit_axis), ("fit-kde", cmd_fit_kde)):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--features", required=True)
        s.add_argument("--target", choices=("comfort", "uncomfort"), default="comfort")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("train", parents=[common], help="train a pipeline bundle")
    s.add_argument("--features", required=True)
    s.add_argument("--model", choices=("rf", "nn", "both"), default="rf")
    s.add_argument("--split", default="fraction:0.7")
    s.add_argument("--out", required=True)
    s.add_argument("--test-out", help="write the held-out partition as a feature table")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="RMSE/MAE matrix on a feature table")
    s.add_argument("--bundle", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--method", choices=("direct", "circumplex", "kde", "all"), default="all")
    s.add_argument("--model", choices=("rf", "nn", "all"), default="all")
    s.add_argument("--reported", action="store_true", help="also score reported emotions")
    s.add_argument("--log", help="append per-sample predictions to this CSV")
    s.add_argument("--out", help="write the matrix as CSV plus a bar chart")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("loto", parents=[common], help="leave-one-trial-out trace")
    s.add_argument("--bundle-config", help="training settings file (same format as --config)")
    s.add_argument("--features", required=True)
    s.add_argument("--trial", required=True)
    s.add_argument("--method", choices=("direct", "circumplex", "kde"), default="circumplex")
    s.add_argument("--model", choices=("rf", "nn"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_loto)

    s = sub.add_parser("replay", parents=[common], help="streaming estimator replay")
    s.add_argument("--bundle", required=True)
    s.add_argument("--trial", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ComfortIndexError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
