import math

import numpy as np
import pytest

from gigaqbx import costmodel as cm
from gigaqbx import geometry as geo
from gigaqbx.expansion import ExpansionOrders
from gigaqbx.ilists import compute_lists
from gigaqbx.tree import TreeParams, build_tree

rng = np.random.default_rng(314)

ORDERS = ExpansionOrders(5, 15)
REF = cm.CalibrationConstants.reference()


def test_speedup_ratio_anchor():
    # per-pair cost reduction of the direct stages at p_qbx = 5
    assert cm.direct_speedup_ratio(REF, 5) == pytest.approx(9.0, rel=0.01)


def test_nmpole_optimum_anchor():
    assert cm.nmpole_optimum(REF, ORDERS) == pytest.approx(291.0, abs=1.0)


def test_nmpole_optimum_trivials():
    z = cm.CalibrationConstants(**{**cm.REFERENCE_CONSTANTS, "c_m2qbxl": 0.0})
    assert cm.nmpole_optimum(z, ORDERS) == 0.0
    d = cm.CalibrationConstants(
        **{**cm.REFERENCE_CONSTANTS,
           "c_m2qbxl": 2 * cm.REFERENCE_CONSTANTS["c_m2qbxl"]})
    assert cm.nmpole_optimum(d, ORDERS) == pytest.approx(
        2 * cm.nmpole_optimum(REF, ORDERS), rel=1e-14)


def test_single_ts_pair_modeled_seconds():
    rep = cm.modeled_time(cm.InteractionCounts(ts=1), ORDERS, REF)
    assert rep.total == pytest.approx(9.45e-9 * 6, rel=1e-12)


def test_zero_counts_zero_total():
    rep = cm.modeled_time(cm.InteractionCounts(), ORDERS, REF)
    assert rep.total == 0.0


def test_model_linearity():
    c1 = cm.InteractionCounts(p2l=3, ts=10, m2l=7, qbxl2p=2)
    c2 = cm.InteractionCounts(p2l=6, ts=20, m2l=14, qbxl2p=4)
    assert cm.modeled_time(c2, ORDERS, REF).total == pytest.approx(
        2 * cm.modeled_time(c1, ORDERS, REF).total, rel=1e-14)
    half = cm.CalibrationConstants(
        **{k: v / 2 for k, v in cm.REFERENCE_CONSTANTS.items()})
    assert cm.modeled_time(c1, ORDERS, half).total == pytest.approx(
        0.5 * cm.modeled_time(c1, ORDERS, REF).total, rel=1e-14)


def test_counts_single_box_ts():
    src = rng.normal(size=(37, 3))
    ctr = np.array([src.mean(axis=0)])
    tree = build_tree(src, np.zeros((0, 3)), ctr, np.array([1e-3]),
                      TreeParams(nmax=100))
    lists = compute_lists(tree, 0.0)
    counts = cm.count_interactions(tree, lists, "ts")
    assert counts.ts == 37
    assert counts.m2l == counts.m2qbxl == counts.l2l == counts.p2l == 0
    base = cm.count_interactions(tree, lists, "base")
    assert base.p2qbxl == 37 and base.ts == 0


def test_counts_uniform_two_level_m2m():
    corners = np.array([[x, y, z] for x in (0.25, 0.75)
                        for y in (0.25, 0.75) for z in (0.25, 0.75)])
    tree = build_tree(corners, corners, np.zeros((0, 3)), np.zeros(0),
                      TreeParams(nmax=2))
    lists = compute_lists(tree, 0.0)
    counts = cm.count_interactions(tree, lists, "ts")
    assert counts.m2m == 8


def test_count_exactness_against_raw_list_recount():
    src = rng.normal(size=(500, 3))
    ctr = src[::6] + rng.normal(size=(84, 3)) * 0.03
    tree = build_tree(src, rng.normal(size=(40, 3)), ctr,
                      rng.uniform(0.01, 0.1, 84), TreeParams(nmax=16, t_f=0.9))
    lists = compute_lists(tree, 20.0)
    counts = cm.count_interactions(tree, lists, "ts")
    # independent recount straight from serialized list contents
    from gigaqbx.tree import CENTERS, SOURCES, TARGETS

    ts = m2qbxl = m2p = 0
    for b in lists.target_boxes:
        b = int(b)
        nsrc = 0
        for csr in (lists.list1, lists.list3close, lists.list4close):
            for d in csr.get(b):
                nsrc += tree.owned_count(int(d), SOURCES)
        nfar = sum(1 for d in lists.list3far.get(b)
                   if tree.subtree_count(int(d), SOURCES) > 0)
        ts += tree.owned_count(b, CENTERS) * nsrc
        m2qbxl += tree.owned_count(b, CENTERS) * nfar
        m2p += tree.owned_count(b, TARGETS) * nfar
    assert counts.ts == ts
    assert counts.m2qbxl == m2qbxl
    assert counts.m2p == m2p


def _synth_run(counts, split=(0.6, 0.3, 0.1)):
    rep = cm.modeled_time(counts, ORDERS, REF)
    t = dict(rep.seconds_by_stage)
    td = t.pop("stage3_5a_6a")
    t["stage3"], t["stage5a"], t["stage6a"] = (s * td for s in split)
    return (t, counts)


def test_fit_round_trip():
    runs = [
        _synth_run(cm.InteractionCounts(p2l=1200, p2m=5000, ts=90000, l2l=300,
                                        l2qbxl=900, m2l=4000, m2m=250,
                                        m2qbxl=700, qbxl2p=900, m2p=120)),
        _synth_run(cm.InteractionCounts(p2l=400, p2m=2500, p2qbxl=50000,
                                        l2l=100, l2qbxl=500, m2l=1500, m2m=90,
                                        m2qbxl=350, qbxl2p=500, m2p=60)),
    ]
    fit = cm.fit_constants(runs, ORDERS)
    for key, val in cm.REFERENCE_CONSTANTS.items():
        assert getattr(fit.constants, key) == pytest.approx(val, rel=1e-8)


def test_fit_scales_linearly_with_timings():
    runs = [
        _synth_run(cm.InteractionCounts(p2l=1200, p2m=5000, ts=90000, l2l=300,
                                        l2qbxl=900, m2l=4000, m2m=250,
                                        m2qbxl=700, qbxl2p=900, m2p=120)),
        _synth_run(cm.InteractionCounts(p2l=400, p2m=2500, p2qbxl=50000,
                                        l2l=100, l2qbxl=500, m2l=1500, m2m=90,
                                        m2qbxl=350, qbxl2p=500, m2p=60)),
    ]
    runs2 = [({k: 2 * v for k, v in t.items()}, c) for t, c in runs]
    f1 = cm.fit_constants(runs, ORDERS)
    f2 = cm.fit_constants(runs2, ORDERS)
    for key in cm.REFERENCE_CONSTANTS:
        assert getattr(f2.constants, key) == pytest.approx(
            2 * getattr(f1.constants, key), rel=1e-10)


def test_fit_rank_deficiency_names_constants():
    # runs exercising only TS-mode direct pairs cannot identify c_p2qbxl
    runs = [_synth_run(cm.InteractionCounts(ts=1000, p2m=100, m2m=10,
                                            m2l=50, l2l=10, l2qbxl=20,
                                            qbxl2p=20))]
    with pytest.raises(cm.RankDeficiencyError) as exc:
        cm.fit_constants(runs, ORDERS)
    assert "c_p2qbxl" in exc.value.unidentifiable
    assert "c_p2l" in exc.value.unidentifiable


def test_mc_statistic_trivials_and_brute_force():
    assert cm.mc_statistic(np.zeros((3, 3)), np.full(3, 0.1),
                           np.zeros((0, 3)) + 100.0, 0.9) == 0.0
    centers = rng.normal(size=(20, 3))
    radii = rng.uniform(0.05, 0.3, 20)
    sources = rng.normal(size=(400, 3))
    got = cm.mc_statistic(centers, radii, sources, 0.9)
    brute = np.mean([
        np.sum(np.max(np.abs(sources - c), axis=1) <= 4 * math.sqrt(3) * r / 0.9)
        for c, r in zip(centers, radii)])
    assert got == pytest.approx(brute, abs=1e-12)


def test_mc_statistic_all_sources_inside():
    centers = np.zeros((2, 3))
    radii = np.array([10.0, 10.0])
    sources = rng.normal(size=(50, 3)) * 0.1
    assert cm.mc_statistic(centers, radii, sources, 0.9) == 50.0


@pytest.fixture(scope="module")
def sweep_geometry():
    disc = geo.make_urchin(2, 1, 6)
    centers = geo.place_qbx_centers(disc, +1, 0.5)
    return disc, centers


def test_sweep_single_point(sweep_geometry):
    disc, centers = sweep_geometry
    res = cm.balance_sweep(disc.nodes, np.zeros((0, 3)), centers.centers,
                           centers.radii, ORDERS, [64], [40.0], REF)
    assert len(res.points) == 1
    assert res.best.nmax == 64 and res.best.nmpole == 40.0


def test_sweep_list2_cost_nonincreasing_in_nmax(sweep_geometry):
    disc, centers = sweep_geometry
    res = cm.balance_sweep(disc.nodes, np.zeros((0, 3)), centers.centers,
                           centers.radii, ORDERS, [16, 64, 256], [40.0], REF)
    m2l_costs = [p.report.seconds_by_category["m2l"] for p in res.points]
    assert all(b <= a + 1e-15 for a, b in zip(m2l_costs, m2l_costs[1:]))


def test_sweep_grid_rows(sweep_geometry):
    disc, centers = sweep_geometry
    res = cm.balance_sweep(disc.nodes, np.zeros((0, 3)), centers.centers,
                           centers.radii, ORDERS, [32, 128], [0.0, math.inf],
                           REF, mode="base")
    rows = res.rows()
    assert len(rows) == 5            # header + 4 points
    assert rows[0][:3] == ["nmax", "nmpole", "mode"]


def test_sweep_validation(sweep_geometry):
    disc, centers = sweep_geometry
    with pytest.raises(ValueError):
        cm.balance_sweep(disc.nodes, np.zeros((0, 3)), centers.centers,
                         centers.radii, ORDERS, [], [0.0], REF)
