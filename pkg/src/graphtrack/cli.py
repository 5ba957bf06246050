"""Command-line interface.

Subcommands: ``synth`` (generate a synthetic sequence), ``train`` (fit
association parameters, write the parameter file, loss trace, and loss
figure), ``track`` (run the tracker over detection files), ``eval`` (score
results against ground truth, render report figures), ``ablate`` (named
experiment presets). Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import ablate as ablate_mod
from . import figures, mpn
from .core import ConfigError, DataFormatError, TrackerConfig, TrainConfig, apply_config_overrides
from .metrics import evaluate
from .mot_files import (
    align_frames,
    load_config_file,
    load_gt,
    load_mot,
    load_results,
    write_detections,
    write_gt,
    write_results,
)
from .pipeline import outputs_per_frame, run_tracker
from .synth import make_benchmark_spec, synth_generate
from .training import TrainingError, build_training_pairs, train_loop


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_tracker_flags(parser):
    parser.add_argument("--config", help="key=value config file (flags win)")
    for f in fields(TrackerConfig):
        parser.add_argument(f"--{f.name.replace('_', '-').lower()}", dest=f"cfg_{f.name}")
    parser.add_argument(
        "--age-max-seconds",
        type=float,
        help="age_max expressed in seconds, converted with --fps",
    )
    parser.add_argument("--fps", type=int, default=30)


def _tracker_config(args) -> TrackerConfig:
    cfg = TrackerConfig()
    if args.config:
        file_overrides = load_config_file(args.config)
        tracker_keys = {f.name for f in fields(TrackerConfig)}
        cfg = apply_config_overrides(cfg, {k: v for k, v in file_overrides.items() if k in tracker_keys})
    flag_overrides = {}
    for f in fields(TrackerConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            flag_overrides[f.name] = value
    if getattr(args, "age_max_seconds", None) is not None:
        flag_overrides["age_max_frames"] = str(int(round(args.age_max_seconds * args.fps)))
    cfg = apply_config_overrides(cfg, flag_overrides)
    return cfg.validate()


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        file_overrides = load_config_file(args.config)
        train_keys = {f.name for f in fields(TrainConfig)}
        cfg = apply_config_overrides(cfg, {k: v for k, v in file_overrides.items() if k in train_keys})
    if getattr(args, "lr", None) is not None:
        cfg = apply_config_overrides(cfg, {"learning_rate": str(args.lr)})
    if getattr(args, "w_edge", None) is not None:
        cfg = apply_config_overrides(cfg, {"w_edge": str(args.w_edge)})
    return cfg.validate()


def _synth_spec(args, embedding_dim: int):
    rng = np.random.default_rng(args.seed)
    return make_benchmark_spec(
        rng,
        n_frames=args.frames,
        n_identities=args.identities,
        embedding_dim=embedding_dim,
        dip_fraction=args.dip_fraction,
        occlusion_fraction=args.occlusion_fraction,
        fragments=args.fragments,
        clutter_per_frame=args.clutter,
        speed_px=args.speed,
    )


def _add_synth_flags(parser):
    parser.add_argument("--frames", type=int, default=200)
    parser.add_argument("--identities", type=int, default=10)
    parser.add_argument("--dip-fraction", type=float, default=0.25)
    parser.add_argument("--occlusion-fraction", type=float, default=0.0)
    parser.add_argument("--fragments", type=int, default=0)
    parser.add_argument("--clutter", type=float, default=0.0)
    parser.add_argument("--speed", type=float, default=4.0)


def build_parser() -> _Parser:
    parser = _Parser(prog="graphtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic sequence")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embedding-dim", type=int, default=64)
    _add_synth_flags(p)

    p = sub.add_parser("train", help="train association parameters")
    p.add_argument("--det", help="detection file (with --emb and --gt)")
    p.add_argument("--emb")
    p.add_argument("--gt")
    p.add_argument("--synth-seed", type=int, help="train on a generated corpus instead of files")
    p.add_argument("--sequences", type=int, default=3)
    p.add_argument("--steps", type=int, default=250)
    p.add_argument("--pairs", type=int, default=40)
    p.add_argument("--max-gap", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float)
    p.add_argument("--w-edge", type=float)
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--trace", help="loss trace file (step,loss per line)")
    p.add_argument("--figures-dir", help="directory for the loss curve figure")
    _add_tracker_flags(p)
    _add_synth_flags(p)

    p = sub.add_parser("track", help="run the tracker over detections")
    p.add_argument("--det", required=True)
    p.add_argument("--emb")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--events", help="companion events file (frame,id,recovered)")
    p.add_argument("--no-recovery", action="store_true")
    p.add_argument("--no-node-gate", action="store_true")
    _add_tracker_flags(p)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--report-dir", help="write report.csv and figures here")

    p = sub.add_parser("ablate", help="run a named experiment preset")
    p.add_argument("experiment", choices=ablate_mod.EXPERIMENTS)
    p.add_argument("values", nargs="*")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences", type=int, default=4)
    p.add_argument("--frames", type=int, default=150)
    p.add_argument("--steps", type=int, default=250)
    return parser


def _cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _synth_spec(args, args.embedding_dim)
    dets, gts = synth_generate(spec, args.seed)
    write_detections(dets, out_dir / "det.txt", out_dir / "emb.txt")
    write_gt(gts, out_dir / "gt.txt")
    n_dets = sum(len(d) for d in dets)
    print(f"wrote {len(dets)} frames, {n_dets} detections to {out_dir}")
    return 0


def _train_dataset(args, tracker_cfg, train_cfg):
    if args.synth_seed is None and not (args.det and args.gt):
        raise UsageError("train needs either --synth-seed or --det/--gt files")
    if args.synth_seed is not None:
        rng = np.random.default_rng(args.synth_seed)
        sequences = []
        for _ in range(args.sequences):
            spec = make_benchmark_spec(
                rng,
                n_frames=args.frames,
                n_identities=args.identities,
                embedding_dim=tracker_cfg.d_node,
                dip_fraction=args.dip_fraction,
                occlusion_fraction=args.occlusion_fraction,
                fragments=args.fragments,
                clutter_per_frame=args.clutter,
                speed_px=args.speed,
            )
            sequences.append(synth_generate(spec, int(rng.integers(2**31))))
    else:
        first_d, dets = load_mot(args.det, args.emb, embedding_dim=tracker_cfg.d_node)
        first_g, gts = load_gt(args.gt)
        dets, gts = align_frames(first_d, dets, first_g, gts)
        sequences = [(dets, gts)]
    rng = np.random.default_rng(args.seed)
    return build_training_pairs(
        sequences, tracker_cfg, train_cfg, rng, args.pairs, max_gap=args.max_gap
    )


def _cmd_train(args) -> int:
    tracker_cfg = _tracker_config(args)
    train_cfg = _train_config(args)
    dataset = _train_dataset(args, tracker_cfg, train_cfg)
    params = mpn.init_parameters(args.seed, tracker_cfg.d_node, tracker_cfg.d_edge)
    trained, trace = train_loop(dataset, params, train_cfg, args.steps, n_iter=tracker_cfg.n_iter)
    mpn.save_parameter_file(trained, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for step_idx, loss in enumerate(trace):
                fh.write(f"{step_idx},{loss:.8f}\n")
    if args.figures_dir:
        fig_dir = Path(args.figures_dir)
        fig_dir.mkdir(parents=True, exist_ok=True)
        figures.save_loss_curve(trace, fig_dir / "loss_curve.png")
    first = trace[0] if trace else float("nan")
    last = trace[-1] if trace else float("nan")
    print(f"trained {args.steps} steps on {len(dataset)} pairs: loss {first:.5f} -> {last:.5f}")
    print(f"parameters written to {args.out}")
    return 0


def _cmd_track(args) -> int:
    cfg = _tracker_config(args)
    params = mpn.load_parameter_file(args.params)
    if params.d_node != cfg.d_node or params.d_edge != cfg.d_edge:
        cfg = apply_config_overrides(
            cfg, {"d_node": str(params.d_node), "d_edge": str(params.d_edge)}
        )
    first_frame, dets = load_mot(args.det, args.emb, embedding_dim=cfg.d_node)
    results = run_tracker(
        dets, params, cfg, recovery=not args.no_recovery, node_gate=not args.no_node_gate
    )
    write_results(results, args.out, first_frame=first_frame, events_path=args.events)
    n_out = sum(len(r.outputs) for r in results)
    n_rec = sum(r.events.recovered for r in results)
    print(f"tracked {len(dets)} frames: {n_out} outputs ({n_rec} recovered) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    first_r, results = load_results(args.results)
    first_g, gts = load_gt(args.gt)
    results, gts = align_frames(first_r, results, first_g, gts)
    report = evaluate(results, gts, iou_match_threshold=args.iou_threshold)
    rows = report.as_rows()
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    print(f"MOTA={report.mota:.3f}")
    print(f"IDF1={report.idf1:.3f}")
    print(f"FP={report.fp}")
    print(f"FN={report.fn}")
    print(f"IDS={report.ids}")
    print(f"MT={report.mt:.3f}")
    print(f"ML={report.ml:.3f}")
    if args.report_dir:
        report_dir = Path(args.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        ablate_mod.write_report_csv([("all", report)], report_dir / "report.csv")
        figures.save_recall_by_visibility(report, report_dir / "recall_by_visibility.png")
        print(f"report written to {report_dir}")
    return 0


def _cmd_ablate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = ablate_mod.default_context(
        args.seed, n_sequences=args.sequences, n_frames=args.frames, steps=args.steps
    )
    rows = ablate_mod.run_experiment(args.experiment, args.values, ctx)
    csv_path = out_dir / f"{args.experiment}_report.csv"
    ablate_mod.write_report_csv(rows, csv_path)
    figures.save_metric_sweep(
        [label for label, _ in rows],
        [report for _, report in rows],
        out_dir / f"{args.experiment}_sweep.png",
        xlabel=args.experiment,
    )
    for label, report in rows:
        print(
            f"{args.experiment}={label}: MOTA={report.mota:.4f} IDF1={report.idf1:.4f} "
            f"FP={report.fp} FN={report.fn} IDS={report.ids}"
        )
    print(f"report written to {csv_path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "track": _cmd_track,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
}


def cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (DataFormatError, ConfigError, TrainingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
