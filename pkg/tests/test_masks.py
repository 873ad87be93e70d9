import numpy as np
import pytest

from lapprune.criteria import score_lap
from lapprune.data import synthetic_blobs
from lapprune.masks import (
    PruneConfig,
    SparsitySchedule,
    _chunk_targets,
    channel_scores,
    keep_count,
    prune,
    select_channels,
    select_global,
    select_layerwise,
)
from lapprune.nn import architecture, glorot_init


@pytest.fixture
def fcn():
    return glorot_init(architecture("fcn-small", input_shape=(12,)), seed=5)


def test_keep_count_rounding():
    assert keep_count(0.5, 5) == 3  # 2.5 rounds up
    assert keep_count(0.49, 5) == 2
    assert keep_count(0.0, 100) == 1
    assert keep_count(1.0, 7) == 7


def test_schedule_fractions():
    net = glorot_init(architecture("conv6-small", input_shape=(1, 8, 8)), seed=0)
    fr = SparsitySchedule(p=0.8, q=0.5, tau=2).keep_fractions(net)
    kinds = [net.layers[i].kind for i in net.prunable]
    for i, k in zip(net.prunable, kinds):
        if k == "conv2d":
            assert fr[i] == pytest.approx(0.64)
    dense = [i for i, k in zip(net.prunable, kinds) if k == "dense"]
    assert fr[dense[0]] == pytest.approx(0.25)
    assert fr[dense[-1]] == pytest.approx(0.75 ** 2)


def test_schedule_tau_zero_keeps_everything(fcn):
    assert SparsitySchedule(0.0, 0.5, 0).surviving_fraction(fcn) == 1.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        SparsitySchedule(q=1.5)
    with pytest.raises(ValueError):
        SparsitySchedule(tau=-1)


def test_fcn_paper_schedule_value():
    net = glorot_init(architecture("fcn-paper"), seed=0)
    # (1,142,000 * 0.5**4 + 5,000 * 0.75**4) / 1,147,000
    assert SparsitySchedule(0.0, 0.5, 4).surviving_fraction(net) == pytest.approx(72957 / 1147000)


def test_layerwise_ties_keep_lowest_index():
    s = np.array([[1.0, 2.0, 2.0], [2.0, 0.5, 2.0]])
    np.testing.assert_array_equal(select_layerwise(s, 2), [[0, 1, 1], [0, 0, 0]])
    np.testing.assert_array_equal(select_layerwise(s, 4), [[0, 1, 1], [1, 0, 1]])


def test_layerwise_respects_existing_mask():
    s = np.array([5.0, 4.0, 3.0, 2.0])
    alive = np.array([0, 1, 1, 1])
    np.testing.assert_array_equal(select_layerwise(s, 2, alive), [0, 1, 1, 0])
    with pytest.raises(ValueError):
        select_layerwise(s, 5)


def test_global_selection_and_normalisation():
    scores = {0: np.array([10.0, 9.0, 8.0]), 1: np.array([1.0, 0.9, 0.1])}
    plain = select_global(scores, 3)
    np.testing.assert_array_equal(plain[0], [1, 1, 1])
    np.testing.assert_array_equal(plain[1], [0, 0, 0])
    norm = select_global(scores, 3, normalize=True)
    assert sum(int(m.sum()) for m in norm.values()) == 3
    np.testing.assert_array_equal(norm[1], [1, 1, 0])


def test_channel_selection():
    s = np.array([[3.0, 0.0], [2.0, 2.0], [0.1, 0.1]])
    np.testing.assert_allclose(channel_scores(s, "l1"), [3.0, 4.0, 0.2])
    np.testing.assert_allclose(channel_scores(s, "l2"), [3.0, np.sqrt(8.0), np.sqrt(0.02)])
    np.testing.assert_array_equal(select_channels(s, 1, "l1"), [[0, 0], [1, 1], [0, 0]])
    np.testing.assert_array_equal(select_channels(s, 1, "l2"), [[1, 1], [0, 0], [0, 0]])
    with pytest.raises(ValueError):
        channel_scores(s, "linf")


def test_chunk_targets():
    assert _chunk_targets(10, 3, 1) == [3]
    assert _chunk_targets(10, 3, 3) == [8, 6, 3]
    assert _chunk_targets(5, 5, 2) == [5, 5]


def test_prune_counts_match_schedule(fcn):
    sched = SparsitySchedule(q=0.5, tau=3)
    pruned, masks = prune(fcn, PruneConfig("LAP", sched))
    counts = sched.keep_counts(fcn)
    for i in fcn.prunable:
        assert int(masks[i].sum()) == counts[i]
        assert np.all(pruned.weight(i)[masks[i] == 0] == 0)
    assert fcn.masks == {}


@pytest.mark.parametrize("crit", ["MP", "LAP", "LFP", "LBP", "LAP_all", "RP"])
def test_reprune_is_idempotent(fcn, crit):
    cfg = PruneConfig(crit, SparsitySchedule(q=0.5, tau=2))
    once, m1 = prune(fcn, cfg)
    _, m2 = prune(once, cfg)
    for i in m1:
        np.testing.assert_array_equal(m1[i], m2[i])


def test_deeper_pruning_nests_inside_existing_masks(fcn):
    once, m1 = prune(fcn, PruneConfig("LAP", SparsitySchedule(q=0.5, tau=1)))
    _, m2 = prune(once, PruneConfig("LAP", SparsitySchedule(q=0.5, tau=3)))
    for i in m1:
        assert np.all(m2[i] <= m1[i])


def test_ordered_pruning_edges(fcn):
    sched = SparsitySchedule(q=0.5, tau=2)
    _, sim = prune(fcn, PruneConfig("LAP", sched))
    _, fwd = prune(fcn, PruneConfig("LAP", sched, order="forward"))
    _, bwd = prune(fcn, PruneConfig("LAP", sched, order="backward"))
    first, last = fcn.prunable[0], fcn.prunable[-1]
    np.testing.assert_array_equal(fwd[first], sim[first])
    np.testing.assert_array_equal(bwd[last], sim[last])
    # later layers see pruned neighbours, so they generally differ
    assert any(not np.array_equal(fwd[i], sim[i]) for i in fcn.prunable[1:])


def test_sequential_single_step_is_plain(fcn):
    sched = SparsitySchedule(q=0.5, tau=2)
    _, a = prune(fcn, PruneConfig("LAP", sched, order="forward"))
    _, b = prune(fcn, PruneConfig("LAP", sched, order="forward", sequential_steps=1))
    _, c = prune(fcn, PruneConfig("LAP", sched, order="forward", sequential_steps=5))
    for i in a:
        np.testing.assert_array_equal(a[i], b[i])
        assert c[i].sum() == a[i].sum()


def test_global_scopes(fcn):
    sched = SparsitySchedule(q=0.5, tau=2)
    total = sum(sched.keep_counts(fcn).values())
    for scope in ("global", "global_normalized"):
        _, m = prune(fcn, PruneConfig("LAP", sched, scope=scope))
        assert sum(int(v.sum()) for v in m.values()) == total


def test_channel_structure(fcn):
    _, m = prune(fcn, PruneConfig("LAP", SparsitySchedule(q=0.5, tau=1), structure="channel_l1"))
    for i in fcn.prunable:
        rows = m[i].reshape(m[i].shape[0], -1)
        assert np.all((rows.min(axis=1) == rows.max(axis=1)))
        assert rows[:, 0].sum() == keep_count(0.5 if i != fcn.prunable[-1] else 0.75, rows.shape[0])


def test_data_dependent_criteria_need_inputs(fcn):
    data = synthetic_blobs(10, 12, 50, seed=0)
    with pytest.raises(ValueError, match="statistics"):
        prune(fcn, PruneConfig("LAP_act", SparsitySchedule(tau=1)))
    with pytest.raises(ValueError, match="hessian"):
        prune(fcn, PruneConfig("OBD", SparsitySchedule(tau=1)))
    for crit in ("LAP_act", "OBD", "OBD_LAP"):
        _, m = prune(fcn, PruneConfig(crit, SparsitySchedule(tau=1)), data=data)
        assert set(m) == set(fcn.prunable)


def test_config_validation():
    with pytest.raises(ValueError):
        PruneConfig("MP", order="forward")
    with pytest.raises(ValueError):
        PruneConfig("LAP_all", structure="channel_l1")
    with pytest.raises(ValueError):
        PruneConfig("LAP", scope="global", order="forward")
    with pytest.raises(ValueError):
        PruneConfig("LAP", sequential_steps=0)
    with pytest.raises(ValueError):
        PruneConfig("LAP", scope="everywhere")


def test_lap_mask_is_top_scores(fcn):
    _, m = prune(fcn, PruneConfig("LAP", SparsitySchedule(q=0.5, tau=2)))
    i = fcn.prunable[1]
    s = score_lap(fcn, i)
    assert s[m[i] == 1].min() >= s[m[i] == 0].max()
