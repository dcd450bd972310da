import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_subarrays.errors import InfeasibleInstance, InvalidArgument
from sparse_subarrays.geometry import (expand_super_array, is_feasible, make_design_grid,
                                       shape_signature)
from sparse_subarrays.placement import (Dictionary, ObjectiveRanges, ObjectiveWeights,
                                        _bin_index, _signatures, build_dictionary,
                                        default_tau, local_refine, normalize_objective,
                                        refinement_offsets, select_optimum, weighted_cost)
from sparse_subarrays.beampattern import attributes_from_positions, ebp_rho


@pytest.fixture(scope="module")
def small_dict(layout):
    g = make_design_grid(10, pitch=1.0)
    return build_dictionary(g, layout, 4, n_init=4, tau=1.0, seed=5, n_pattern=128)


def test_weights_validation():
    with pytest.raises(InvalidArgument):
        ObjectiveWeights(-1, 1, 1)
    with pytest.raises(InvalidArgument):
        ObjectiveWeights(0, 0, 0)


@given(st.floats(-100, 100), st.floats(-50, 50), st.floats(0.01, 50))
def test_normalize_is_clamped(x, lo, span):
    y = normalize_objective(x, (lo, lo + span))
    assert 0.0 <= y <= 1.0


def test_normalize_rejects_degenerate_range():
    with pytest.raises(InvalidArgument):
        normalize_objective(1.0, (2.0, 2.0))


def test_weighted_cost_endpoints():
    r = ObjectiveRanges((2.0, 12.0), (-12.0, -2.0), (0.0, 1.0))
    w = ObjectiveWeights(1, 2, 3)
    assert weighted_cost((2.0, -12.0, 0.0), w, r) == pytest.approx(0.0)
    assert weighted_cost((12.0, -2.0, 1.0), w, r) == pytest.approx(6.0)
    # a missing sidelobe counts as the best level
    assert weighted_cost((2.0, -np.inf, 0.0), w, r) == pytest.approx(0.0)
    # constant objectives drop out
    r2 = ObjectiveRanges((2.0, 12.0), (-5.0, -5.0), (0.0, 1.0))
    assert weighted_cost((7.0, -5.0, 0.0), w, r2) == pytest.approx(0.5)


def test_incremental_signature_matches_direct():
    rng = np.random.default_rng(4)
    centers = rng.uniform(-5, 5, size=(3, 4, 2))
    points = rng.uniform(-5, 5, size=(7, 2))
    sig = _signatures(centers, points)
    for p in range(3):
        for g in range(7):
            full = np.vstack([centers[p], points[g]])
            assert np.allclose(sig[p, g], shape_signature(full).as_array(), atol=1e-9)


def test_default_tau():
    g = make_design_grid(20, pitch=1.0)
    t = default_tau(g, 8)
    assert t[0] == pytest.approx((2 * np.hypot(10, 10) + 1) * np.sqrt(2) / 8)


def test_dictionary_members_are_feasible(layout, small_dict):
    assert len(small_dict) > 10
    assert small_dict.layer_sizes[-1] >= len(small_dict)
    for cfg in small_dict.configs:
        assert is_feasible(cfg, layout)
        assert cfg.n_subarrays == 4


def test_dictionary_has_one_member_per_bin(small_dict):
    sig = np.array([shape_signature(c).as_array() for c in small_dict.centers])
    bins = _bin_index(sig, small_dict.tau)
    assert len(np.unique(bins, axis=0)) == len(bins)


def test_dictionary_is_seeded(layout):
    g = make_design_grid(8, pitch=1.0)
    a = build_dictionary(g, layout, 3, n_init=3, tau=1.0, seed=9, score=False)
    b = build_dictionary(g, layout, 3, n_init=3, tau=1.0, seed=9, score=False)
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.poses, b.poses)


def test_dictionary_infeasible(layout):
    g = make_design_grid(3, pitch=1.0)
    with pytest.raises(InfeasibleInstance):
        build_dictionary(g, layout, 3, n_init=2, tau=1.0, seed=0, score=False)


def test_dictionary_scores_match_reference(layout, small_dict):
    for i in (0, len(small_dict) // 2):
        D = expand_super_array(small_dict.config(i), layout)
        a = attributes_from_positions(D, 128, with_directivity=False)
        assert small_dict.bw[i] == pytest.approx(a.bw_doa, rel=1e-9)
        assert small_dict.msll[i] == pytest.approx(a.msll, abs=1e-3)


def test_dictionary_round_trip(tmp_path, layout, small_dict):
    p = tmp_path / "dict.txt"
    small_dict.save(p, "# test\n")
    d2 = Dictionary.load(p, layout)
    assert np.allclose(d2.centers, small_dict.centers)
    assert np.array_equal(d2.poses, small_dict.poses)
    assert np.allclose(d2.msll, small_dict.msll, atol=1e-9)


def test_select_optimum_is_argmin(small_dict):
    w = ObjectiveWeights(1, 1, 1)
    cfg, i = select_optimum(small_dict, w)
    cost = weighted_cost((small_dict.bw, small_dict.msll, small_dict.ecc), w, small_dict.ranges)
    assert cost[i] == pytest.approx(cost.min())
    assert cfg == small_dict.config(i)


def test_bw_weight_prefers_narrow_beam(small_dict):
    _, i = select_optimum(small_dict, ObjectiveWeights(1, 0, 0))
    assert small_dict.bw[i] == pytest.approx(small_dict.bw.min())


def test_refinement_offsets_span_one_cell():
    off = refinement_offsets(1.0)
    assert off.shape == (25, 2)
    assert off.min() == -0.5 and off.max() == 0.5


def test_local_refine_is_monotone(layout, small_dict):
    w = ObjectiveWeights(1, 1, 1)
    cfg, _ = select_optimum(small_dict, w)
    res = local_refine(cfg, layout, w, small_dict.ranges, rounds=2, n=128)
    costs = [row["cost"] for row in res.trace]
    assert all(b < a for a, b in zip(costs, costs[1:]))
    assert is_feasible(res.config, layout)
    assert tuple(res.config.poses) == tuple(cfg.poses)
    # every module stays within half a cell of its grid point
    assert np.all(np.abs(res.config.centers - cfg.centers) <= 0.5 + 1e-12)


def test_two_module_dictionary_is_exhaustive_enumeration():
    from itertools import combinations
    from sparse_subarrays.geometry import Footprint, build_subarray_layout, footprints_overlap
    lay = build_subarray_layout(2, 2, 0.4, 0.4, footprint=Footprint(1.2, 1.0, (0.2, 0.0)))
    g = make_design_grid(3, pitch=1.0)
    d = build_dictionary(g, lay, 2, n_init=9, tau=1e-9, seed=0, score=False)
    sigs = set()
    for a, b in combinations(range(9), 2):
        pa, pb = g.points[a], g.points[b]
        ok = any(not footprints_overlap(pa, p, pb, q, lay.footprint)
                 for p in (1, 2) for q in (1, 2))
        if ok:
            sigs.add(tuple(np.round(shape_signature(np.array([pa, pb])).as_array(), 9)))
    got = {tuple(np.round(shape_signature(c).as_array(), 9)) for c in d.centers}
    assert got == sigs
    assert len(d) == len(sigs)


def test_singleton_dictionary_selection(layout, small_dict):
    one = Dictionary(small_dict.centers[:1], small_dict.poses[:1], small_dict.tau, 0,
                     n_pattern=128).score(layout)
    cfg, i = select_optimum(one, ObjectiveWeights(1, 1, 1))
    assert i == 0


def test_selection_is_deterministic(layout):
    g = make_design_grid(10, pitch=1.0)
    picks = []
    for _ in range(2):
        d = build_dictionary(g, layout, 4, n_init=4, tau=1.0, seed=21, n_pattern=128)
        picks.append(select_optimum(d, ObjectiveWeights(1, 1, 1))[0])
    assert picks[0] == picks[1]


def _toy_cost(centers, layout, w, ranges, n):
    from sparse_subarrays.placement import _score
    from sparse_subarrays.beampattern import element_pattern
    el = element_pattern(layout, n, ebp_rho(30))
    b, m, e = _score(centers, layout, n, 30.0, 2, el)
    return weighted_cost((b, m, e), w, ranges)


def test_two_module_refinement_against_exhaustive(layout):
    from sparse_subarrays.geometry import Pose, SuperArrayConfig, footprints_overlap
    cfg = SuperArrayConfig(np.array([[-1.5, 0.5], [1.5, -1.5]]), (Pose.DOWN, Pose.UP))
    w = ObjectiveWeights(1, 1, 1)
    ranges = ObjectiveRanges((10.0, 30.0), (-12.0, 0.0), (0.0, 1.0))
    off = refinement_offsets(1.0, 3)
    res = local_refine(cfg, layout, w, ranges, offsets=off, rounds=4, n=128)
    # exhaustive search over the joint lattice
    trial = np.array([[cfg.centers[0] + a, cfg.centers[1] + b] for a in off for b in off])
    ok = ~footprints_overlap(trial[:, 0], 2, trial[:, 1], 1, layout.footprint)
    costs = _toy_cost(trial[ok], layout, w, ranges, 128)
    start = _toy_cost(cfg.centers[None], layout, w, ranges, 128)[0]
    assert costs.min() - 1e-12 <= res.cost <= start
    # cyclic coordinate search reaches the joint optimum on this instance
    assert res.cost == pytest.approx(costs.min(), abs=1e-9)


def test_refinement_fixed_point(layout, small_dict):
    w = ObjectiveWeights(1, 1, 1)
    cfg, _ = select_optimum(small_dict, w)
    res = local_refine(cfg, layout, w, small_dict.ranges, rounds=6, n=128)
    again = local_refine(res.config, layout, w, small_dict.ranges, rounds=1, n=128,
                         anchors=cfg.centers)
    if res.trace[-1]["round"] < 6:  # converged before the last round
        assert len(again.trace) == 1
        assert again.config == res.config
