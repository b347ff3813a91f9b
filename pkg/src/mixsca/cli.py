"""Command-line entry point: ``mixsca <stage> [options]``.

Exit status: 0 on success, 2 for configuration/input errors, 3 for runtime failures.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from . import attack as atk
from . import cpa
from .config import ConfigError, ExperimentConfig, load_config, parse_key
from .experiment import ExperimentResult, report, run_experiment
from .labeling import LeakageModel, compute_label, one_hot
from .mixup import MixupConfig, augment_trace_set
from .nn.checkpoint import load_model, save_model
from .nn.network import Model, build_network
from .nn.train import TrainConfig, train
from .synth import RandomDelay, simulate
from .tracestore import (
    FormatError,
    StandardizationStats,
    compute_stats,
    is_soft_file,
    load_soft_set,
    load_trace_set,
    save_soft_set,
    save_trace_set,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("mixsca")


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _require(path):
    if not path or not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")
    return path


def cmd_simulate(args):
    cfg = _config(args)
    sim = cfg.sim
    overrides = {
        "n_traces": args.n_traces, "n_samples": args.n_samples, "noise_sigma": args.sigma,
        "desync_window": args.desync, "target_byte": args.target_byte,
        "leak_center": args.leak_center, "leak_width": args.leak_width,
    }
    sim = dataclasses.replace(sim, **{k: v for k, v in overrides.items() if v is not None})
    if args.key:
        sim = dataclasses.replace(sim, true_key=parse_key(args.key))
    if args.max_delays is not None or args.delay_len is not None:
        rd = sim.random_delay or RandomDelay(0, 0)
        sim = dataclasses.replace(sim, random_delay=RandomDelay(
            args.max_delays if args.max_delays is not None else rd.max_delays,
            args.delay_len if args.delay_len is not None else rd.delay_len))
    sim = dataclasses.replace(sim, role=args.role, vary_key=args.vary_key and args.role == "profiling",
                              seed=args.seed)
    try:
        sim.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ts = simulate(sim)
    path = _out(args, args.output)
    save_trace_set(ts, path)
    print(f"wrote {ts.n_traces} x {ts.n_samples} {ts.role} traces to {path}")


def cmd_augment(args):
    ts = load_trace_set(_require(args.input))
    leakage = LeakageModel.parse(args.leakage)
    y = one_hot(compute_label(ts.target_plaintexts, ts.target_keys, leakage), leakage.n_classes)
    mix = MixupConfig(args.alpha, args.pairing, args.ratio, args.seed)
    try:
        mix.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_ts, soft = augment_trace_set(ts, y, mix)
    path = _out(args, args.output)
    save_soft_set(out_ts, soft, path)
    print(f"wrote {out_ts.n_traces} examples ({len(soft.lambdas)} generated) to {path}")


def _parse_keys(text, default):
    if not text:
        return [default]
    if text == "all":
        return list(range(256))
    return [int(k, 0) for k in text.split(",")]


def cmd_cpa(args):
    path = _require(args.input)
    soft = None
    if is_soft_file(path):
        ts, soft = load_soft_set(path)
    else:
        ts = load_trace_set(path)
    keys = _parse_keys(args.keys, int(ts.target_keys[0]) if ts.n_traces else 0)
    if args.generated:
        if soft is None or not len(soft.lambdas):
            raise ConfigError("--generated needs an augmented file with a PAIR block")
        n_orig = ts.n_traces - len(soft.lambdas)
        gen = ts.take(np.arange(n_orig, ts.n_traces))
        parent_pts = ts.target_plaintexts[:n_orig]
        traces = [cpa.cpa_correct_key(gen, k, cpa.mixed_hypothesis(parent_pts, soft.parents, soft.lambdas, k))
                  for k in keys]
    else:
        if soft is not None and len(soft.lambdas):
            ts = ts.take(np.arange(ts.n_traces - len(soft.lambdas)))
        traces = [cpa.cpa_correct_key(ts, k) for k in keys]
    out = _out(args, args.output)
    cpa.write_cpa_csv(out, traces)
    best = max(traces, key=lambda t: np.abs(t.correlations).max())
    print(f"n_traces={best.n_traces} best key 0x{best.key:02x} peak |r|={np.abs(best.correlations).max():.4f} "
          f"at sample {int(np.argmax(np.abs(best.correlations)))}; wrote {out}")


def cmd_train(args):
    cfg = _config(args)
    path = _require(args.input)
    leakage = LeakageModel.parse(args.leakage or cfg.leakage)
    if is_soft_file(path):
        ts, soft = load_soft_set(path)
        y = soft.probs
        if y.shape[1] != leakage.n_classes:
            raise ConfigError(f"soft labels have {y.shape[1]} classes, {leakage.value} needs {leakage.n_classes}")
        y = y / y.sum(axis=1, keepdims=True)  # float32 storage: renormalize onto the simplex
    else:
        ts = load_trace_set(path)
        y = one_hot(compute_label(ts.target_plaintexts, ts.target_keys, leakage), leakage.n_classes)
    x = ts.traces
    meta = {"leakage": leakage.value, "target_byte": ts.target_byte, "network": args.network or cfg.network}
    if not args.no_standardize and cfg.standardize:
        stats = compute_stats(ts)
        x = stats.apply(x)
        meta["standardization"] = {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
    tcfg = cfg.train
    overrides = {"learning_rate": args.lr, "max_epochs": args.epochs, "batch_size": args.batch_size}
    tcfg = dataclasses.replace(tcfg, seed=args.seed, **{k: v for k, v in overrides.items() if v is not None})
    try:
        tcfg.validate()
        spec = build_network(meta["network"], ts.n_samples, leakage.n_classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep = train(spec, x, y, tcfg)
    if rep.best_params is None:
        raise ConfigError("max_epochs is 0; nothing to save")
    meta["best_epoch"] = rep.best_epoch
    model_path = _out(args, args.output)
    save_model(Model(spec, rep.best_params, meta), model_path)
    with open(_out(args, "train_log.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss_nats", "val_loss_nats"])
        for e, (tl, vl) in enumerate(zip(rep.train_loss, rep.val_loss)):
            w.writerow([e, repr(tl), repr(vl)])
    print(f"best epoch {rep.best_epoch} (val loss {rep.val_loss[rep.best_epoch]:.4f} nats); wrote {model_path}")


def cmd_attack(args):
    model = load_model(_require(args.model))
    ts = load_trace_set(_require(args.input))
    leakage = LeakageModel.parse(model.meta.get("leakage", "LSB"))
    if "standardization" in model.meta:
        st = model.meta["standardization"]
        ts = ts.with_traces(StandardizationStats(np.asarray(st["mean"]), np.asarray(st["std"])).apply(ts.traces))
    cfg = _config(args)
    acfg = dataclasses.replace(cfg.attack, leakage=leakage, seed=args.seed)
    if args.reps is not None:
        acfg = dataclasses.replace(acfg, n_repetitions=args.reps)
    if args.n_max is not None:
        acfg = dataclasses.replace(acfg, n_max=args.n_max)
    if acfg.n_max is not None:
        acfg = dataclasses.replace(acfg, n_max=min(acfg.n_max, ts.n_traces))
    try:
        acfg.validate(ts.n_traces)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    curve = atk.average_rank_curve(model, ts, acfg)
    out = _out(args, args.output)
    atk.write_rank_curve_csv(out, curve)
    print(f"traces_to_rank0,{atk.format_count(atk.traces_to_rank0(curve))}")


def cmd_experiment(args):
    cfg = _config(args)
    if args.seed_given:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    result = run_experiment(cfg, args.out, resume=args.resume)
    print(report(result))
    failed = [c.key for c in result.cells if c.error]
    if failed:
        print(f"{len(failed)} cell(s) failed: {', '.join(failed)}", file=sys.stderr)


def cmd_report(args):
    path = _require(args.input or os.path.join(args.out, "results.json"))
    with open(path) as fh:
        result = ExperimentResult.from_json(fh.read())
    os.makedirs(args.out, exist_ok=True)
    print(report(result, args.out))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mixsca", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic SCAT trace set")
    s.add_argument("--output", default="traces.scat")
    s.add_argument("--role", choices=["profiling", "attack"], default="profiling")
    s.add_argument("--n-traces", type=int)
    s.add_argument("--n-samples", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--desync", type=int)
    s.add_argument("--max-delays", type=int)
    s.add_argument("--delay-len", type=int)
    s.add_argument("--target-byte", type=int)
    s.add_argument("--leak-center", type=int)
    s.add_argument("--leak-width", type=int)
    s.add_argument("--key", help="16-byte key as 32 hex digits")
    s.add_argument("--vary-key", action="store_true", help="random key per profiling trace")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("augment", parents=[common], help="mixup-augment a profiling set")
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="augmented.scat")
    s.add_argument("--leakage", default="LSB")
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--ratio", type=float, default=0.5)
    s.add_argument("--pairing", default="disjoint-shuffle")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("cpa", parents=[common], help="per-sample CPA correlation to CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="cpa.csv")
    s.add_argument("--keys", help="comma-separated key guesses, or 'all' (default: the set's key)")
    s.add_argument("--generated", action="store_true", help="analyse only generated rows of an augmented file")
    s.set_defaults(func=cmd_cpa)

    s = sub.add_parser("train", parents=[common], help="train a classifier")
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="model.scnn")
    s.add_argument("--leakage")
    s.add_argument("--network")
    s.add_argument("--lr", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--no-standardize", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", parents=[common], help="average rank curve of a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", default="rank_curve.csv")
    s.add_argument("--reps", type=int)
    s.add_argument("--n-max", type=int)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("experiment", parents=[common], help="run the profiling-size x mixup grid")
    s.add_argument("--resume", action="store_true", help="reuse cells that already have results")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="summary CSV and table from results.json")
    s.add_argument("--input")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        from threadpoolctl import threadpool_limits
        limits = threadpool_limits(max(1, args.threads))
    except ImportError:  # pragma: no cover
        limits = contextlib.nullcontext()
    try:
        with limits:
            args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
