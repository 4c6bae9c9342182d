import math

import numpy as np
import pytest

from gigaqbx.tree import (CENTERS, SOURCES, TARGETS, Octree, TreeDepthError,
                          TreeParams, build_tree)

rng = np.random.default_rng(31)

NO_PTS = np.zeros((0, 3))
NO_R = np.zeros(0)


def _tree(src, ctr=NO_PTS, rad=NO_R, tgt=NO_PTS, **kw):
    return build_tree(src, tgt, ctr, rad, TreeParams(**kw))


def test_single_box_tree():
    t = _tree(rng.normal(size=(5, 3)), nmax=10)
    assert t.n_boxes == 1
    assert t.is_leaf(0)
    assert t.owned_count(0, SOURCES) == 5


def test_eight_corners_nmax_one():
    corners = np.array([[x, y, z] for x in (0.0, 1.0)
                        for y in (0.0, 1.0) for z in (0.0, 1.0)])
    t = _tree(corners, nmax=1)
    assert t.n_levels == 2
    assert t.n_boxes == 9
    leaves = [b for b in range(t.n_boxes) if t.is_leaf(b)]
    assert len(leaves) == 8
    assert all(t.owned_count(b, SOURCES) == 1 for b in leaves)


def test_oversized_ball_sticks_at_root():
    src = rng.normal(size=(100, 3))
    t = _tree(src, ctr=np.zeros((1, 3)), rad=np.array([50.0]), nmax=4)
    assert t.owned_count(0, CENTERS) == 1
    assert t.n_boxes > 1     # sources still subdivide


def test_root_cube_contains_expansion_balls():
    ctr = np.array([[5.0, 0.0, 0.0]])
    rad = np.array([3.0])
    t = _tree(rng.uniform(-1, 1, (20, 3)), ctr=ctr, rad=rad, nmax=64)
    lo = t.root_center - t.root_half_width
    hi = t.root_center + t.root_half_width
    assert np.all(ctr[0] - rad[0] >= lo) and np.all(ctr[0] + rad[0] <= hi)


def test_tcr_radius_formula():
    t = _tree(rng.normal(size=(9, 3)), nmax=100, t_f=0.0)
    _, rho = t.tcr(0)
    assert rho == pytest.approx(math.sqrt(3.0) * t.root_half_width, rel=1e-15)
    t2 = _tree(rng.normal(size=(9, 3)), nmax=100, t_f=0.9)
    _, rho2 = t2.tcr(0)
    assert rho2 == pytest.approx(math.sqrt(3.0) * 1.9 * t2.root_half_width,
                                 rel=1e-15)


def test_colleague_counts_uniform_level():
    grid = (np.indices((8, 8, 8)).reshape(3, -1).T + 0.5) / 8.0
    t = _tree(grid, nmax=1)
    lvl3 = [b for b in range(t.n_boxes) if t.levels[b] == 3]
    interior = [b for b in lvl3
                if np.all((t.icoords[b] >= 2) & (t.icoords[b] <= 5))]
    assert len(t.knear_colleagues(interior[0], 2)) == 125
    assert len(t.knear_colleagues(interior[0], 1)) == 27


def test_root_colleagues_is_root():
    t = _tree(rng.normal(size=(3, 3)), nmax=1000)
    assert t.knear_colleagues(0, 2) == [0]


def test_prec_checks_coincident_and_distant():
    # two separated clusters give distant sibling boxes plus the root
    src = np.concatenate([rng.normal(size=(40, 3)) * 1e-4,
                          rng.normal(size=(40, 3)) * 1e-4 + 10.0])
    t = _tree(src, nmax=8, t_f=0.5)
    res = t.prec_checks(0, 0)
    assert not res["a_prec_tcr_b"] and not res["tcr_a_prec_b"]
    # a deep small box far from a distant shallow box passes both
    deep = max(range(t.n_boxes), key=lambda b: t.levels[b])
    far = [b for b in range(t.n_boxes)
           if np.linalg.norm(t.centers[b] - t.centers[deep]) > 5.0
           and t.levels[b] >= 1]
    assert far
    res = t.prec_checks(deep, far[0])
    assert res["a_prec_tcr_b"] and res["tcr_a_prec_b"]


def test_linf_shortcut_implies_exact_l2_predicate():
    src = rng.normal(size=(600, 3))
    ctr = src[::13] + rng.normal(size=(len(src[::13]), 3)) * 0.05
    t = _tree(src, ctr=ctr, rad=np.full(ctr.shape[0], 0.05), nmax=8, t_f=0.9)
    checked = 0
    for a in range(0, t.n_boxes, 3):
        for b in range(0, t.n_boxes, 7):
            if t.tcr_sep_from_box(a, b):
                assert t.tcr_sep_from_box_exact(a, b)
                checked += 1
    assert checked > 0


def test_ownership_partition_and_ball_confinement():
    src = rng.normal(size=(400, 3))
    ctr = src[::5] + rng.normal(size=(80, 3)) * 0.02
    rad = rng.uniform(0.01, 0.5, 80)
    tgt = rng.normal(size=(30, 3))
    t = _tree(src, ctr=ctr, rad=rad, tgt=tgt, nmax=10, t_f=0.9)
    for cls, n in ((SOURCES, 400), (TARGETS, 30), (CENTERS, 80)):
        owned = np.zeros(n, dtype=int)
        for b in range(t.n_boxes):
            sl = t.owned_slice(b, cls)
            owned[sl.start:sl.stop] += 1
        assert np.all(owned == 1)
        # subtree ranges nest owned ranges
        for b in range(t.n_boxes):
            assert t.subtree_start[b, cls] <= t.owned_start[b, cls] \
                <= t.owned_end[b, cls] <= t.subtree_end[b, cls]
    # every owned center ball fits inside the owner's TCR
    for b in range(t.n_boxes):
        sl = t.owned_slice(b, CENTERS)
        for i in range(sl.start, sl.stop):
            c_b, rho = t.tcr(b)
            dist = np.linalg.norm(t.points[CENTERS][i] - c_b)
            assert dist + t.center_radii[i] <= rho + 1e-12
    # sources and targets live only in leaves
    for b in range(t.n_boxes):
        if not t.is_leaf(b):
            assert t.owned_count(b, SOURCES) == 0
            assert t.owned_count(b, TARGETS) == 0


def test_half_widths_halve_exactly():
    src = rng.normal(size=(500, 3))
    t = _tree(src, nmax=4)
    for b in range(1, t.n_boxes):
        assert t.half_widths[b] == t.half_widths[t.parents[b]] / 2


def test_depth_cap_error_on_duplicates():
    src = np.zeros((5, 3))             # exactly coincident points
    with pytest.raises(TreeDepthError):
        build_tree(src, NO_PTS, NO_PTS, NO_R,
                   TreeParams(nmax=1, max_depth=8))


def test_dump_format(tmp_path):
    t = _tree(rng.normal(size=(50, 3)), nmax=8)
    path = tmp_path / "tree.txt"
    with open(path, "w") as f:
        t.dump(f)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == t.n_boxes
    first = lines[0].split()
    assert len(first) == 10
    assert int(first[0]) == 0 and int(first[1]) == 0 and int(first[6]) == -1
