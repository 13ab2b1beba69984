import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augmentlab import sampler as sp

SHIFTS = {"a": 1.0, "b": 10.0, "c": 100.0, "d": 1000.0}


def shift_apply(images, tid, magnitudes, rng):
    # each transform adds its own constant, so applied steps are readable
    return images + SHIFTS[tid]


def config(ids=("a", "b", "c", "d"), **kw):
    return sp.PolicyConfig(transform_ids=ids, magnitude_ranges={t: (0.0, 1.0) for t in SHIFTS}, **kw)


class FixedLosses:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)
        self.calls = 0

    def losses(self, x, y):
        self.calls += 1
        return np.tile(self.values, len(x) // len(self.values))


class SumLoss:
    def losses(self, x, y):
        return x.sum(axis=1)


# -- configuration -----------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(L=5), dict(L=0), dict(S=5), dict(S=0), dict(apply_probability_range=(0.5, 1.2))])
def test_bad_config(kw):
    with pytest.raises(sp.ConfigError):
        config(**kw)


def test_config_needs_ranges_and_distinct_ids():
    with pytest.raises(sp.ConfigError):
        config(ids=("a", "a"))
    with pytest.raises(sp.ConfigError):
        config(ids=("zz",))
    with pytest.raises(sp.ConfigError):
        config(ids=())
    with pytest.raises(sp.ConfigError):
        sp.PolicyConfig(transform_ids=("a",), magnitude_ranges={"a": (2.0, 1.0)})
    assert config().K == 4


# -- selection -----------------------------------------------------------------

def test_highest_loss_candidate_is_kept():
    x = np.zeros((1, 3))
    model = FixedLosses([0.1, 0.9, 0.5, 0.2])
    sel = sp.sample_batch(x, [0], config(L=1, C=4, S=1), model, shift_apply, seed=0)
    assert sel.losses.tolist() == [0.9]
    assert model.calls == 1
    assert sel.x.shape == (1, 3)


def test_output_size_and_order():
    x = np.arange(6, dtype=float).reshape(2, 3)
    sel = sp.sample_batch(x, [5, 7], config(C=4, S=2), SumLoss(), shift_apply, seed=1)
    assert sel.x.shape == (4, 3)
    assert sel.y.tolist() == [5, 5, 7, 7]
    assert sel.source_index.tolist() == [0, 0, 1, 1]
    assert len(sel.pipelines) == 4


def test_keeping_all_candidates():
    x = np.zeros((3, 2))
    cfg = config(L=2, C=3, S=3)
    sel = sp.sample_batch(x, [0, 1, 2], cfg, SumLoss(), shift_apply, seed=2)
    uni = sp.sample_batch_uniform(x, [0, 1, 2], cfg, shift_apply, seed=2)
    # with S = C nothing is discarded and both samplers see the same candidates
    assert sel.pipelines == uni.pipelines
    np.testing.assert_array_equal(sel.x, uni.x)


def test_single_certain_transform():
    cfg = config(ids=("b",), L=1, C=3, S=1, apply_probability_range=(1.0, 1.0))
    sel = sp.sample_batch(np.zeros((50, 2)), np.zeros(50), cfg, SumLoss(), shift_apply, seed=3)
    np.testing.assert_array_equal(sel.x, 10.0)
    assert set(sel.pipelines) == {("b",)}


def test_never_applied_leaves_inputs():
    cfg = config(apply_probability_range=(0.0, 0.0))
    x = np.random.default_rng(0).random((5, 4))
    sel = sp.sample_batch_uniform(x, np.zeros(5), cfg, shift_apply, seed=0)
    np.testing.assert_array_equal(sel.x, x)


def test_losses_choose_the_largest_shift():
    # SumLoss picks the candidate whose applied transforms add the most
    cfg = config(L=1, C=4, S=1, apply_probability_range=(1.0, 1.0))
    sel = sp.sample_batch(np.zeros((200, 1)), np.zeros(200), cfg, SumLoss(), shift_apply, seed=4)
    pipes = sp.draw_pipelines(cfg, 200 * 4, np.random.default_rng(np.random.SeedSequence(4).spawn(2)[0]))
    best = np.array([[SHIFTS[cfg.transform_ids[k]] for k in pipes.ids[r * 4:(r + 1) * 4, 0]] for r in range(200)])
    np.testing.assert_array_equal(sel.x[:, 0], best.max(axis=1))


def test_sample_batch_is_deterministic():
    x = np.random.default_rng(1).random((8, 3))
    cfg = config()
    a = sp.sample_batch(x, np.arange(8), cfg, SumLoss(), shift_apply, seed=9)
    b = sp.sample_batch(x, np.arange(8), cfg, SumLoss(), shift_apply, seed=9)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.pipelines == b.pipelines
    c = sp.sample_batch(x, np.arange(8), cfg, SumLoss(), shift_apply, seed=10)
    assert a.pipelines != c.pipelines


def test_uniform_has_no_losses():
    sel = sp.sample_batch_uniform(np.zeros((4, 2)), np.zeros(4), config(), shift_apply, seed=0)
    assert sel.losses is None
    assert sel.x.shape == (4, 2)


# -- pipeline draws ----------------------------------------------------------------

def test_uniform_transform_frequencies():
    cfg = config(L=1)
    pipes = sp.draw_pipelines(cfg, 10_000, np.random.default_rng(0))
    freq = np.bincount(pipes.ids[:, 0], minlength=4) / 10_000
    np.testing.assert_allclose(freq, 0.25, atol=0.02)


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_pipeline_transforms_are_distinct(seed, L):
    cfg = config(L=L)
    pipes = sp.draw_pipelines(cfg, 50, np.random.default_rng(seed))
    assert pipes.ids.shape == (50, L)
    assert all(len(set(row)) == L for row in pipes.ids.tolist())
    assert np.all((pipes.magnitudes >= 0) & (pipes.magnitudes <= 1))


def test_apply_probability_matches_range():
    cfg = config(apply_probability_range=(0.2, 0.8))
    pipes = sp.draw_pipelines(cfg, 20_000, np.random.default_rng(1))
    assert pipes.applied.mean() == pytest.approx(0.5, abs=0.02)


def test_default_transforms_always_run():
    cfg = sp.PolicyConfig(transform_ids=("a",), magnitude_ranges={t: (0.0, 1.0) for t in SHIFTS}, L=1, C=1, S=1,
                          apply_probability_range=(0.0, 0.0), default_transform_ids=("d",))
    sel = sp.sample_batch_uniform(np.zeros((3, 2)), np.zeros(3), cfg, shift_apply, seed=0)
    np.testing.assert_array_equal(sel.x, 1000.0)


# -- top S -----------------------------------------------------------------------

def test_top_s_ties_go_to_lowest_index():
    np.testing.assert_array_equal(sp.top_s_indices([[1.0, 3.0, 3.0, 3.0]], 2), [[1, 2]])
    np.testing.assert_array_equal(sp.top_s_indices([[0.0, 0.0, 0.0]], 1), [[0]])


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.integers(1, 8))
def test_top_s_are_the_largest(values, s):
    s = min(s, len(values))
    keep = sp.top_s_indices([values], s)[0]
    rest = np.delete(values, keep)
    assert len(keep) == s
    if rest.size:
        assert min(np.asarray(values)[keep]) >= rest.max()


def test_equal_losses_pick_first_candidates():
    sel = sp.sample_batch(np.zeros((10, 1)), np.zeros(10), config(C=4, S=2), FixedLosses([1.0] * 4), shift_apply,
                          seed=0)
    np.testing.assert_array_equal(sel.losses, 1.0)
    assert len(sel.pipelines) == 20


# -- frequencies -------------------------------------------------------------------

def test_frequency_counts_conserve_selections():
    cfg = config()
    rec = sp.FrequencyRecorder()
    total = 0
    for w in range(3):
        sel = sp.sample_batch(np.zeros((7, 1)), np.zeros(7), cfg, SumLoss(), shift_apply, seed=w)
        rec.add(w, sel.pipelines)
        total += len(sel.pipelines)
    assert sum(n for _, _, n in rec.rows()) == total
    assert rec.windows() == [0, 1, 2]


def test_merge_adds_counts():
    a = sp.record_frequencies([(0, ("a", "b")), (0, ("a", "b")), (1, ("c",))])
    b = sp.record_frequencies([(0, ("a", "b")), (2, ("d",))])
    merged = a.merge(b)
    assert merged is a
    assert merged.rows() == [(0, "a+b", 3), (1, "c", 1), (2, "d", 1)]


def test_pipeline_id_keeps_order():
    assert sp.pipeline_id(("b", "a")) == "b+a"
    assert sp.pipeline_id(("a", "b")) != sp.pipeline_id(("b", "a"))


def test_write_frequency_csv(tmp_path):
    rec = sp.record_frequencies([(0, ("a", "b")), (1, ("c",))])
    path = tmp_path / "f.csv"
    sp.write_frequency_csv(path, rec, header_comment="config_hash=x")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=x"
    assert list(csv.reader(lines[1:])) == [["window_index", "pipeline_id", "count"], ["0", "a+b", "1"],
                                           ["1", "c", "1"]]
