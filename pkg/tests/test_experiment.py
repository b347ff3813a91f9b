import os
import shutil

import pytest

from mixsca.config import ConfigError, ExperimentConfig, parse_config
from mixsca.experiment import (
    CellResult,
    ExperimentResult,
    derive_seed,
    report,
    run_experiment,
    summary_csv,
)
from mixsca.labeling import LeakageModel

SMALL = """
[experiment]
seed = 5
leakage = HW
profiling_sizes = 200, all
alphas = 0.5
[simulate]
n_traces = 400
attack_traces = 600
noise_sigma = 0.5
[train]
learning_rate = 1e-3
max_epochs = 8
[attack]
n_repetitions = 10
n_max = 300
"""


def test_parse_config_values():
    cfg = parse_config(SMALL)
    assert cfg.seed == 5 and cfg.leakage is LeakageModel.HW
    assert cfg.profiling_sizes == (200, "all")
    assert cfg.sim.n_traces == 400 and cfg.attack_traces == 600 and cfg.sim.noise_sigma == 0.5
    assert cfg.train.learning_rate == 1e-3 and cfg.attack.n_max == 300


def test_parse_random_delay_and_key():
    cfg = parse_config("[simulate]\nmax_delays = 3\ndelay_len = 4\nkey = 000102030405060708090a0b0c0d0e0f\n")
    assert cfg.sim.random_delay.max_delays == 3 and cfg.sim.random_delay.delay_len == 4
    assert cfg.sim.true_key == tuple(range(16))


@pytest.mark.parametrize(
    "text",
    [
        "[bogus]\na = 1\n",
        "[experiment]\nnope = 1\n",
        "[experiment]\nseed = abc\n",
        "[experiment]\nprofiling_sizes =\n",
        "[experiment]\nleakage = MSB\n",
        "[train]\nvalidation_fraction = 1.5\n",
        "[simulate]\nkey = 00\n",
        "no section header\n",
        "[dataset]\nsource = files\n",
    ],
)
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, "train", 300) == derive_seed(1, "train", 300)
    assert len({derive_seed(1, "train", 300), derive_seed(1, "train", 500), derive_seed(2, "train", 300),
                derive_seed(1, "attack", 300)}) == 4
    assert 0 <= derive_seed(0, "x") < 2**64


def test_report_shapes():
    assert summary_csv(ExperimentResult([])) == "profiling_size,variant,alpha,traces_to_rank0,best_epoch\n"
    cells = [CellResult(s, v, a, t, 3) for s in (300, 500) for v, a, t in (("original", None, None), ("mixup", 0.5, 40))]
    lines = summary_csv(ExperimentResult(cells)).splitlines()
    assert len(lines) == 5
    assert lines[1] == "300,original,NA,NA,3" and lines[2] == "300,mixup,0.5,40,3"
    assert "mixup a=0.5" in report(ExperimentResult(cells))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    cfg = parse_config(SMALL)
    return cfg, out, run_experiment(cfg, str(out))


def test_experiment_grid(small_run):
    cfg, out, result = small_run
    assert [c.key for c in result.cells] == ["n200_original", "n200_mixup_a0.5", "nall_original", "nall_mixup_a0.5"]
    for c in result.cells:
        assert c.error is None and c.best_epoch is not None
        assert os.path.exists(out / c.curve_path)
        assert os.path.exists(out / "cells" / c.key / "model.scnn")
    assert (out / "summary.csv").read_text().count("\n") == 5


def test_experiment_is_reproducible(small_run, tmp_path):
    cfg, out, _ = small_run
    run_experiment(cfg, str(tmp_path))
    assert (tmp_path / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()


def test_adding_cells_does_not_perturb_others(small_run, tmp_path):
    cfg, out, result = small_run
    import dataclasses

    bigger = dataclasses.replace(cfg, profiling_sizes=(100, 200, "all"))
    r2 = run_experiment(bigger, str(tmp_path))
    for c in result.cells:
        assert r2.get(c.profiling_size, c.variant, c.alpha).traces_to_rank0 == c.traces_to_rank0


def test_cell_isolation_on_resume(small_run, tmp_path):
    cfg, out, result = small_run
    work = tmp_path / "w"
    shutil.copytree(out, work)
    victim = work / "cells" / "n200_mixup_a0.5"
    untouched = work / "cells" / "n200_original" / "rank_curve.csv"
    mtime = untouched.stat().st_mtime_ns
    shutil.rmtree(victim)
    run_experiment(cfg, str(work), resume=True)
    assert (victim / "rank_curve.csv").read_bytes() == (out / "cells" / "n200_mixup_a0.5" / "rank_curve.csv").read_bytes()
    assert untouched.stat().st_mtime_ns == mtime
    assert (work / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()


def test_oversized_cell_fails_alone(tmp_path):
    cfg = parse_config(SMALL.replace("profiling_sizes = 200, all", "profiling_sizes = 200, 5000"))
    result = run_experiment(cfg, str(tmp_path))
    assert result.get(5000, "original").error and result.get(5000, "mixup", 0.5).error
    assert result.get(200, "original").error is None
    assert "5000,original,NA,NA,NA" in (tmp_path / "summary.csv").read_text()


def test_results_json_round_trip(small_run):
    _, out, result = small_run
    back = ExperimentResult.from_json((out / "results.json").read_text())
    assert summary_csv(back) == summary_csv(result)


def test_noiseless_full_set_breaks_quickly(tmp_path):
    cfg = parse_config(
        "[experiment]\nleakage = HW\nprofiling_sizes = all\nvariants = original\n"
        "[simulate]\nn_traces = 2000\nattack_traces = 1000\nnoise_sigma = 0\n"
        "[train]\nlearning_rate = 1e-3\nmax_epochs = 20\n[attack]\nn_repetitions = 20\nn_max = 500\n"
    )
    result = run_experiment(cfg, str(tmp_path))
    t = result.get("all", "original").traces_to_rank0
    assert t is not None and t <= 20


def test_attack_selection_mode(tmp_path):
    cfg = parse_config(SMALL.replace("alphas = 0.5", "alphas = 0.5\nselection = attack\nvariants = original"))
    result = run_experiment(cfg, str(tmp_path))
    assert all(c.error is None and c.best_epoch is not None for c in result.cells)
