"""Experiment grid: profiling sizes x {original, mixup} x alpha.

Every random stage draws its seed from :func:`derive_seed`, a hash of the
master seed, the stage name and the grid coordinates, so adding or removing
cells never changes the numbers of the others. Original and mixup variants
of one profiling size share the subsample, the weight initialization and
the attack orderings.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .attack import AttackConfig, average_rank_curve, format_count, traces_to_rank0, write_rank_curve_csv
from .config import ExperimentConfig
from .labeling import LeakageModel, compute_label, one_hot
from .mixup import MixupConfig, augment_dataset
from .nn.checkpoint import save_model
from .nn.network import Model, build_network
from .nn.train import train
from .synth import simulate
from .tracestore import TraceSet, compute_stats, load_trace_set, standardize, subsample

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("profiling_size", "variant", "alpha", "traces_to_rank0", "best_epoch")


def derive_seed(master: int, stage: str, *parts) -> int:
    """64-bit seed from blake2b("<master>|<stage>|<part>|...")."""
    text = "|".join([str(int(master)), stage, *map(str, parts)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass
class CellResult:
    profiling_size: int | str
    variant: str
    alpha: float | None
    traces_to_rank0: int | None = None
    best_epoch: int | None = None
    curve_path: str | None = None
    error: str | None = None

    @property
    def key(self) -> str:
        tag = f"n{self.profiling_size}_{self.variant}"
        return tag if self.alpha is None else f"{tag}_a{self.alpha:g}"


@dataclass
class ExperimentResult:
    cells: list

    def to_json(self) -> str:
        return json.dumps({"cells": [dataclasses.asdict(c) for c in self.cells]}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentResult":
        return cls([CellResult(**c) for c in json.loads(text)["cells"]])

    def get(self, size, variant, alpha=None) -> CellResult:
        for c in self.cells:
            if c.profiling_size == size and c.variant == variant and c.alpha == alpha:
                return c
        raise KeyError((size, variant, alpha))


def load_datasets(cfg: ExperimentConfig) -> tuple[TraceSet, TraceSet]:
    if cfg.source == "files":
        return load_trace_set(cfg.profiling_path), load_trace_set(cfg.attack_path)
    prof = simulate(dataclasses.replace(cfg.sim, role="profiling", seed=derive_seed(cfg.seed, "simulate", "profiling")))
    att = simulate(
        dataclasses.replace(
            cfg.sim, role="attack", vary_key=False, n_traces=cfg.attack_traces,
            seed=derive_seed(cfg.seed, "simulate", "attack"),
        )
    )
    return prof, att


def grid(cfg: ExperimentConfig) -> list[CellResult]:
    cells = []
    for size in cfg.profiling_sizes:
        for variant in cfg.variants:
            for alpha in (cfg.alphas if variant == "mixup" else (None,)):
                cells.append(CellResult(size, variant, alpha))
    return cells


def _hard_labels(ts: TraceSet, leakage: LeakageModel) -> np.ndarray:
    return one_hot(compute_label(ts.target_plaintexts, ts.target_keys, leakage), leakage.n_classes)


def _write_train_log(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss_nats", "val_loss_nats"])
        for e, (tl, vl) in enumerate(zip(report.train_loss, report.val_loss)):
            w.writerow([e, repr(tl), repr(vl)])


def _run_cell(cfg, cell, prof, att, out_dir, leakage):
    size = prof.n_traces if cell.profiling_size == "all" else cell.profiling_size
    if size > prof.n_traces:
        raise ValueError(f"profiling size {size} exceeds the {prof.n_traces} available traces")
    sub = subsample(prof, size, derive_seed(cfg.seed, "subsample", cell.profiling_size))
    attack_set = att
    stats = None
    if cfg.standardize:
        stats = compute_stats(sub)
        sub, attack_set = standardize(sub, stats), standardize(att, stats)
    x, y = sub.traces, _hard_labels(sub, leakage)
    if cell.variant == "mixup":
        mix = MixupConfig(cell.alpha, cfg.pairing, cfg.expansion_ratio,
                          derive_seed(cfg.seed, "mixup", cell.profiling_size, cell.alpha))
        aug = augment_dataset(x, y, mix)
        x, y = aug.traces, aug.labels

    spec = build_network(cfg.network, sub.n_samples, leakage.n_classes)
    tcfg = dataclasses.replace(cfg.train, seed=derive_seed(cfg.seed, "train", cell.profiling_size))
    acfg = dataclasses.replace(cfg.attack, leakage=leakage, seed=derive_seed(cfg.seed, "attack", cell.profiling_size))
    epoch_score = None
    if cfg.selection == "attack":
        # hold out half of the attack set for epoch selection, evaluate on the rest
        half = attack_set.n_traces // 2
        sel, attack_set = attack_set.take(np.arange(half)), attack_set.take(np.arange(half, attack_set.n_traces))
        sel_cfg = dataclasses.replace(acfg, n_max=min(acfg.n_max or half, half), n_repetitions=10)

        def epoch_score(epoch, params):
            # area under the rank curve: smaller means the key falls sooner,
            # and unlike traces_to_rank0 it still orders epochs that never reach rank 0
            return float(np.mean(average_rank_curve(Model(spec, params), sel, sel_cfg).avg_rank))

    if acfg.n_max is not None:
        acfg = dataclasses.replace(acfg, n_max=min(acfg.n_max, attack_set.n_traces))
    report = train(spec, x, y, tcfg, epoch_score=epoch_score)
    if report.best_params is None:
        raise RuntimeError("training produced no epochs to select from")
    model = Model(spec, report.best_params, _model_meta(cfg, leakage, sub, stats))
    curve = average_rank_curve(model, attack_set, acfg)

    cell_dir = os.path.join(out_dir, "cells", cell.key)
    os.makedirs(cell_dir, exist_ok=True)
    curve_path = os.path.join(cell_dir, "rank_curve.csv")
    write_rank_curve_csv(curve_path, curve)
    _write_train_log(os.path.join(cell_dir, "train_log.csv"), report)
    if cfg.save_models:
        save_model(model, os.path.join(cell_dir, "model.scnn"))
    cell.traces_to_rank0 = traces_to_rank0(curve)
    cell.best_epoch = report.best_epoch
    cell.curve_path = os.path.relpath(curve_path, out_dir)


def _model_meta(cfg, leakage, ts, stats):
    meta = {"leakage": leakage.value, "target_byte": ts.target_byte, "network": cfg.network}
    if stats is not None:
        meta["standardization"] = {"mean": stats.mean.tolist(), "std": stats.std.tolist()}
    return meta


def run_experiment(cfg: ExperimentConfig, out_dir: str, resume: bool = False) -> ExperimentResult:
    """Run every grid cell; failures are recorded per cell and do not stop the grid.

    With ``resume`` a cell whose ``cell.json`` already exists is loaded instead
    of recomputed.
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    leakage = LeakageModel.parse(cfg.leakage)
    cells = grid(cfg)
    datasets = None
    for cell in cells:
        cell_json = os.path.join(out_dir, "cells", cell.key, "cell.json")
        if resume and os.path.exists(cell_json):
            with open(cell_json) as fh:
                cell.__dict__.update(json.load(fh))
            continue
        if datasets is None:
            datasets = load_datasets(cfg)
        try:
            _run_cell(cfg, cell, *datasets, out_dir, leakage)
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            log.warning("cell %s failed: %s", cell.key, exc)
            cell.error = f"{type(exc).__name__}: {exc}"
        os.makedirs(os.path.dirname(cell_json), exist_ok=True)
        with open(cell_json, "w") as fh:
            json.dump(dataclasses.asdict(cell), fh, indent=2, sort_keys=True)
    result = ExperimentResult(cells)
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        fh.write(result.to_json())
    report(result, out_dir)
    return result


def summary_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for c in result.cells:
        w.writerow([
            c.profiling_size,
            c.variant,
            "NA" if c.alpha is None else f"{c.alpha:g}",
            format_count(c.traces_to_rank0),
            format_count(c.best_epoch),
        ])
    return buf.getvalue()


def summary_table(result: ExperimentResult) -> str:
    """Profiling sizes down, variants across; cells show traces to rank 0 (best epoch)."""
    sizes = list(dict.fromkeys(c.profiling_size for c in result.cells))
    cols = list(dict.fromkeys((c.variant, c.alpha) for c in result.cells))
    head = ["profiling"] + [v if a is None else f"{v} a={a:g}" for v, a in cols]
    rows = [head]
    for s in sizes:
        row = [str(s)]
        for v, a in cols:
            try:
                c = result.get(s, v, a)
            except KeyError:
                row.append("")
                continue
            row.append("error" if c.error else f"{format_count(c.traces_to_rank0)} ({format_count(c.best_epoch)})")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report(result: ExperimentResult, out_dir: str | None = None) -> str:
    """Write ``summary.csv`` (when ``out_dir`` is given) and return the text table."""
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            fh.write(summary_csv(result))
    return summary_table(result)
