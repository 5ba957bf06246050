"""Named ablation experiments over a seeded synthetic corpus.

Each experiment trains what it needs on held-out training sequences, runs
the tracker across its settings, and emits one evaluation report per
setting plus a CSV table and sweep figure.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import mpn
from .core import TrackerConfig, TrainConfig
from .metrics import EvalReport, aggregate_reports, evaluate
from .pipeline import outputs_per_frame, run_tracker
from .synth import generate_corpus
from .training import build_training_pairs, train_loop

EXPERIMENTS = ("recovery", "node_gate", "n_iter", "k", "age")


@dataclass
class AblationContext:
    """Everything shared across settings of one experiment run."""

    tracker_cfg: TrackerConfig
    train_cfg: TrainConfig
    eval_corpus: list
    train_sequences: list
    pairs: list
    seed: int
    steps: int
    params: mpn.MpnParameters = None


def default_context(
    seed: int = 0,
    *,
    n_sequences: int = 4,
    n_frames: int = 150,
    n_identities: int = 8,
    steps: int = 250,
    n_pairs: int = 30,
    tracker_cfg: TrackerConfig = None,
    train_cfg: TrainConfig = None,
) -> AblationContext:
    tracker_cfg = tracker_cfg or TrackerConfig(d_node=16, d_edge=16)
    train_cfg = train_cfg or TrainConfig(w_edge=1.0, learning_rate=0.05)
    corpus_kwargs = dict(
        n_frames=n_frames,
        n_identities=n_identities,
        embedding_dim=tracker_cfg.d_node,
        dip_fraction=0.25,
        occlusion_fraction=0.2,
        fragments=2,
        clutter_per_frame=0.3,
    )
    eval_corpus = generate_corpus(seed, n_sequences, **corpus_kwargs)
    train_sequences = generate_corpus(seed + 10_000, max(2, n_sequences // 2), **corpus_kwargs)
    rng = np.random.default_rng(seed + 20_000)
    pairs = build_training_pairs(train_sequences, tracker_cfg, train_cfg, rng, n_pairs)
    return AblationContext(
        tracker_cfg=tracker_cfg,
        train_cfg=train_cfg,
        eval_corpus=eval_corpus,
        train_sequences=train_sequences,
        pairs=pairs,
        seed=seed,
        steps=steps,
    )


def train_model(ctx: AblationContext, n_iter: int) -> mpn.MpnParameters:
    params = mpn.init_parameters(ctx.seed, ctx.tracker_cfg.d_node, ctx.tracker_cfg.d_edge)
    trained, _ = train_loop(ctx.pairs, params, ctx.train_cfg, ctx.steps, n_iter=n_iter)
    return trained


def evaluate_corpus(
    ctx: AblationContext,
    params: mpn.MpnParameters,
    cfg: TrackerConfig,
    *,
    recovery: bool = True,
    node_gate: bool = True,
) -> EvalReport:
    reports = []
    for dets, gts in ctx.eval_corpus:
        results = run_tracker(dets, params, cfg, recovery=recovery, node_gate=node_gate)
        reports.append(evaluate(outputs_per_frame(results), gts))
    return aggregate_reports(reports)


def run_experiment(name: str, values: list, ctx: AblationContext) -> list:
    """Returns [(setting label, EvalReport)] for one named experiment."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment '{name}' (choose from {EXPERIMENTS})")
    cfg = ctx.tracker_cfg
    if name == "n_iter":
        values = [int(v) for v in (values or (0, 1, 2, 3))]
        out = []
        for v in values:
            model = train_model(ctx, n_iter=v)
            out.append((str(v), evaluate_corpus(ctx, model, replace(cfg, n_iter=v))))
        return out

    if ctx.params is None:
        ctx.params = train_model(ctx, n_iter=cfg.n_iter)
    if name == "recovery":
        return [
            ("on", evaluate_corpus(ctx, ctx.params, cfg, recovery=True)),
            ("off", evaluate_corpus(ctx, ctx.params, cfg, recovery=False)),
        ]
    if name == "node_gate":
        return [
            ("on", evaluate_corpus(ctx, ctx.params, cfg, node_gate=True)),
            ("off", evaluate_corpus(ctx, ctx.params, cfg, node_gate=False)),
        ]
    if name == "k":
        values = [int(v) for v in (values or (50, 100, 300))]
        return [
            (str(v), evaluate_corpus(ctx, ctx.params, replace(cfg, K=v))) for v in values
        ]
    # age sweep: values are age_max in seconds, converted at 30 fps.
    values = [float(v) for v in (values or (0.0, 0.5, 1.0, 2.0))]
    out = []
    for v in values:
        frames = int(round(v * 30))
        out.append(
            (str(v), evaluate_corpus(ctx, ctx.params, replace(cfg, age_max_frames=frames)))
        )
    return out


def write_report_csv(rows: list, path):
    """rows: [(setting label, EvalReport)] -> delimited report table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "mota", "idf1", "fp", "fn", "ids", "mt", "ml", "gt"])
        for label, report in rows:
            writer.writerow(
                [
                    label,
                    f"{report.mota:.4f}",
                    f"{report.idf1:.4f}",
                    report.fp,
                    report.fn,
                    report.ids,
                    f"{report.mt:.4f}",
                    f"{report.ml:.4f}",
                    report.n_gt,
                ]
            )
