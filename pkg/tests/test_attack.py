import numpy as np
import pytest

from mixsca import kernels
from mixsca.attack import (
    AttackConfig,
    RankCurve,
    accumulate_scores,
    average_rank_curve,
    candidate_labels,
    log_probs,
    key_rank,
    traces_to_rank0,
    write_rank_curve_csv,
)
from mixsca.labeling import LeakageModel, compute_label, one_hot
from mixsca.synth import SimConfig, simulate


def sort_rank(scores, true_key):
    """Position of the true key in a stable descending sort where ties favour the true key."""
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], k != true_key))
    return order.index(true_key)


def test_key_rank_examples():
    s = np.zeros(256)
    s[5] = 1.0
    assert key_rank(s, 5) == 0
    assert key_rank(np.zeros(256), 17) == 0
    assert key_rank([1, 3, 2, 0], 2) == 1 == sort_rank([1, 3, 2, 0], 2)


def test_key_rank_matches_sort_oracle(rng):
    for _ in range(2000):
        s = rng.integers(0, 6, size=16).astype(float)  # small range forces ties
        k = int(rng.integers(16))
        assert key_rank(s, k) == sort_rank(list(s), k)


def test_key_rank_monotone_transform_invariance(rng):
    s = rng.normal(size=256)
    for k in (0, 100, 255):
        r = key_rank(s, k)
        assert key_rank(np.exp(s), k) == r == key_rank(3 * s - 2, k)
        assert 0 <= r <= 255


def test_uniform_classifier_gives_equal_scores():
    probs = np.full((1, 256), 1 / 256)
    scores = accumulate_scores(probs, [0x42], LeakageModel.ID)
    assert np.all(scores == scores[0, 0])


def test_lsb_scores_split_in_two_groups():
    eps = 0.1
    probs = np.array([[1 - eps, eps]])
    p = 0x3A
    scores = accumulate_scores(probs, [p], LeakageModel.LSB)[0]
    lsb = compute_label(p, np.arange(256), LeakageModel.LSB)
    assert np.allclose(scores[lsb == 0], np.log(1 - eps))
    assert np.allclose(scores[lsb == 1], np.log(eps))


def test_scores_are_prefix_sums_and_order_free(rng):
    probs = rng.dirichlet(np.ones(9), size=30)
    pts = rng.integers(0, 256, 30)
    s = accumulate_scores(probs, pts, LeakageModel.HW)
    one = accumulate_scores(probs[[7]], pts[[7]], LeakageModel.HW)
    assert np.allclose(s[7] - s[6], one[0])
    perm = rng.permutation(30)
    assert np.allclose(accumulate_scores(probs[perm], pts[perm], LeakageModel.HW)[-1], s[-1])


def test_width_mismatch():
    with pytest.raises(ValueError):
        accumulate_scores(np.full((1, 9), 1 / 9), [0], LeakageModel.ID)


def perfect_probs(ts, model):
    labels = compute_label(ts.target_plaintexts, ts.target_keys, model)
    return np.clip(one_hot(labels, model.n_classes), 1e-6, 1)


def test_perfect_classifier_curve():
    ts = simulate(SimConfig(n_traces=300, noise_sigma=0.0, seed=5, role="attack"))
    probs = perfect_probs(ts, LeakageModel.ID)
    curve = average_rank_curve(probs, ts, AttackConfig(50, 100, 1, LeakageModel.ID))
    assert traces_to_rank0(curve) is not None and traces_to_rank0(curve) <= 5
    # per repetition the rank never leaves 0 once it got there
    lp, lab = log_probs(probs), candidate_labels(ts.target_plaintexts, LeakageModel.ID)
    for rep in range(10):
        order = np.random.default_rng(rep).permutation(300)
        ranks = kernels.prefix_ranks(lp, lab, order, ts.true_key)
        first = int(np.argmax(ranks == 0))
        assert ranks[first] == 0 and np.all(ranks[first:] == 0)


def test_random_classifier_curve():
    ts = simulate(SimConfig(n_traces=500, noise_sigma=1.0, seed=6, role="attack"))
    noise_logits = np.random.default_rng(0).normal(size=(500, 256))
    probs = np.exp(noise_logits) / np.exp(noise_logits).sum(axis=1, keepdims=True)
    curve = average_rank_curve(probs, ts, AttackConfig(50, 50, 2, LeakageModel.ID))
    assert abs(curve.avg_rank[0] - 127.5) < 10


def test_curve_determinism_and_model_input():
    ts = simulate(SimConfig(n_traces=200, noise_sigma=1.0, seed=7, role="attack"))
    probs = np.random.default_rng(1).dirichlet(np.ones(2), size=200)

    class Fixed:
        def predict(self, x):
            return probs

    cfg = AttackConfig(1, 50, 9, LeakageModel.LSB)
    a, b = average_rank_curve(probs, ts, cfg), average_rank_curve(Fixed(), ts, cfg)
    assert np.array_equal(a.avg_rank, b.avg_rank) and len(a) == 50
    assert np.all((a.avg_rank >= 0) & (a.avg_rank <= 255))
    with pytest.raises(ValueError):
        average_rank_curve(probs, ts, AttackConfig(1, 201, 0, LeakageModel.LSB))
    with pytest.raises(ValueError):
        average_rank_curve(probs, ts, AttackConfig(0, 10, 0, LeakageModel.LSB))


@pytest.mark.parametrize(
    "curve, expected", [([3, 1, 0, 0, 0], 3), ([0, 2, 0, 0], 3), ([1, 1, 1], None), ([0, 0], 1), ([], None)]
)
def test_traces_to_rank0(curve, expected):
    assert traces_to_rank0(curve) == expected


def test_rank_curve_csv(tmp_path):
    path = tmp_path / "c.csv"
    write_rank_curve_csv(path, RankCurve(np.array([2.0, 0.25, 0.0]), 3, 0))
    assert path.read_text().splitlines() == [
        "n_traces,avg_rank", "1,2.0", "2,0.25", "3,0.0", "traces_to_rank0,2",
    ]
    write_rank_curve_csv(path, RankCurve(np.array([2.0]), 1, 0))
    assert path.read_text().splitlines()[-1] == "traces_to_rank0,NA"
