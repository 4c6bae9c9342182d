import numpy as np
import pytest

from gigaqbx import geometry as geo
from gigaqbx.driver import (EvalParams, Mode, UnsupportedModeError,
                            direct_reference, evaluate,
                            greens_identity_residual, solve_exterior_neumann)
from gigaqbx.expansion import ExpansionOrders
from gigaqbx.kernels import Equation, KernelSpec, Variant, kernel_value
from gigaqbx.tree import TreeParams
from gigaqbx.tsqbx import TsConfig, ts_eval

rng = np.random.default_rng(11)

ORDERS = ExpansionOrders(p_qbx=4, p_fmm=8)
TREE = TreeParams(nmax=40, t_f=0.9)


@pytest.fixture(scope="module")
def sphere():
    disc = geo.make_sphere(1.0, 1, 6)
    centers = geo.place_qbx_centers(disc, +1, 0.5)
    return disc, centers


def _params(mode, spec=None, nmpole=20.0):
    return EvalParams(orders=ORDERS, tree=TREE, nmpole=nmpole, mode=mode,
                      spec=spec or KernelSpec())


def test_zero_density(sphere):
    disc, centers = sphere
    res = evaluate(disc, centers, np.zeros(disc.n_nodes),
                   _params(Mode.TARGET_SPECIFIC))
    assert np.all(res.qbx_values == 0)


@pytest.mark.parametrize("variant", [Variant.SINGLE_LAYER,
                                     Variant.TARGET_NORMAL_DERIV,
                                     Variant.SOURCE_NORMAL_DERIV])
def test_mode_equivalence(sphere, variant):
    disc, centers = sphere
    dens = rng.normal(size=disc.n_nodes)
    spec = KernelSpec(variant=variant)
    rb = evaluate(disc, centers, dens, _params(Mode.BASELINE, spec))
    rt = evaluate(disc, centers, dens, _params(Mode.TARGET_SPECIFIC, spec))
    scale = np.max(np.abs(rb.qbx_values))
    assert np.max(np.abs(rb.qbx_values - rt.qbx_values)) <= 1e-11 * scale


def test_superposition(sphere):
    disc, centers = sphere
    d1 = rng.normal(size=disc.n_nodes)
    d2 = rng.normal(size=disc.n_nodes)
    p = _params(Mode.TARGET_SPECIFIC)
    r1 = evaluate(disc, centers, d1, p).qbx_values
    r2 = evaluate(disc, centers, d2, p).qbx_values
    r12 = evaluate(disc, centers, d1 + d2, p).qbx_values
    assert np.max(np.abs(r12 - (r1 + r2))) <= 1e-12 * np.max(np.abs(r12))


def test_decomposition_bit_exact(sphere):
    disc, centers = sphere
    dens = rng.normal(size=disc.n_nodes)
    res = evaluate(disc, centers, dens, _params(Mode.TARGET_SPECIFIC))
    near, w, far = res.qbx_parts
    recomposed = (near + w) + far
    assert np.array_equal(recomposed, res.qbx_values)


def test_acceleration_error_decreases_with_pfmm(sphere):
    disc, centers = sphere
    dens = rng.normal(size=disc.n_nodes)
    rd = direct_reference(disc, centers, dens,
                          _params(Mode.DIRECT_REFERENCE))
    scale = np.max(np.abs(rd.qbx_values))
    errs = []
    for pf in (4, 6, 8):
        p = EvalParams(orders=ExpansionOrders(4, pf), tree=TREE, nmpole=20.0,
                       mode=Mode.TARGET_SPECIFIC)
        rr = evaluate(disc, centers, dens, p)
        errs.append(np.max(np.abs(rr.qbx_values - rd.qbx_values)) / scale)
    assert errs[2] < errs[1] < errs[0]


def test_direct_reference_single_source_matches_ts(sphere):
    # one source far from a single center/target: same truncated formula
    src = np.array([[2.0, 0.1, -0.3]])
    disc = geo.Discretization(
        nodes=src, weights=np.array([1.0]),
        normals=np.array([[1.0, 0, 0]]), element_id=np.zeros(1, dtype=np.int64),
        element_size=np.array([0.5]), target_nodes=np.array([[0.05, 0.0, 0.0]]),
        target_normals=np.array([[1.0, 0, 0]]),
        target_element_id=np.zeros(1, dtype=np.int64))
    centers = geo.QbxCenterSet(centers=np.array([[0.0, 0.0, 0.0]]),
                               radii=np.array([0.1]),
                               target_index=np.zeros(1, dtype=np.int64),
                               side=+1)
    res = direct_reference(disc, centers, np.ones(1),
                           _params(Mode.DIRECT_REFERENCE))
    expect = ts_eval(TsConfig(KernelSpec(), ORDERS.p_qbx), src[0],
                     centers.centers[0], disc.target_nodes[0])
    assert res.qbx_values[0] == pytest.approx(expect, rel=1e-13)


def test_direct_reference_constant_density_approaches_analytic():
    # S[1] = 1 on the unit sphere; tighter under refinement
    errs = []
    for ref in (0, 1):
        disc = geo.make_sphere(1.0, ref, 10)
        centers = geo.place_qbx_centers(disc, +1, 0.5)
        res = direct_reference(disc, centers, np.ones(disc.n_nodes),
                               _params(Mode.DIRECT_REFERENCE))
        errs.append(np.max(np.abs(res.qbx_values.real - 1.0)))
    assert errs[1] < errs[0]
    assert errs[1] < 1e-3


def test_direct_reference_source_permutation_determinism(sphere):
    disc, centers = sphere
    dens = rng.normal(size=disc.n_nodes)
    perm = rng.permutation(disc.n_nodes)
    disc2 = geo.Discretization(
        nodes=disc.nodes[perm], weights=disc.weights[perm],
        normals=disc.normals[perm], element_id=disc.element_id[perm],
        element_size=disc.element_size, target_nodes=disc.target_nodes,
        target_normals=disc.target_normals,
        target_element_id=disc.target_element_id)
    p = _params(Mode.DIRECT_REFERENCE)
    r1 = direct_reference(disc, centers, dens, p).qbx_values
    r2 = direct_reference(disc2, centers, dens[perm], p).qbx_values
    assert np.max(np.abs(r1 - r2)) <= 1e-14 * np.max(np.abs(r1))


def test_helmholtz_fmm_mode_rejected():
    spec = KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=2.0)
    with pytest.raises(UnsupportedModeError):
        EvalParams(orders=ORDERS, tree=TREE, mode=Mode.TARGET_SPECIFIC,
                   spec=spec)


def test_helmholtz_direct_reference_runs(sphere):
    disc, centers = sphere
    spec = KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=1.5)
    p = _params(Mode.DIRECT_REFERENCE, spec)
    res = direct_reference(disc, centers, np.ones(disc.n_nodes), p)
    assert np.all(np.isfinite(res.qbx_values.real))
    assert np.any(res.qbx_values.imag != 0)


def test_counts_match_recount(sphere):
    from gigaqbx import costmodel

    disc, centers = sphere
    dens = np.ones(disc.n_nodes)
    for mode, name in ((Mode.TARGET_SPECIFIC, "ts"), (Mode.BASELINE, "base")):
        res = evaluate(disc, centers, dens, _params(mode))
        rec = costmodel.count_interactions(res.tree, res.lists, name)
        for key, val in res.interaction_counts.items():
            assert val == getattr(rec, key), key


def test_greens_identity_residual_small_and_refining():
    params = EvalParams(orders=ExpansionOrders(5, 13),
                        tree=TreeParams(nmax=100, t_f=0.9), nmpole=30.0,
                        mode=Mode.TARGET_SPECIFIC)
    res = []
    for ref in (0, 1):
        disc = geo.make_sphere(1.0, ref, 14)
        centers = geo.place_qbx_centers(disc, +1, 0.5)
        res.append(greens_identity_residual(disc, centers, params,
                                            "PointChargeInside"))
    assert res[1] < res[0]
    assert res[1] < 5e-3


def test_greens_identity_side_validation(sphere):
    disc, centers = sphere
    with pytest.raises(ValueError):
        greens_identity_residual(disc, centers, _params(Mode.TARGET_SPECIFIC),
                                 "PointChargeOutside")


def test_solve_zero_data_gives_zero_density():
    disc = geo.make_sphere(1.0, 0, 8, target_order=3)
    params = _params(Mode.TARGET_SPECIFIC)
    mu, info = solve_exterior_neumann(disc, params, np.zeros(disc.n_targets))
    assert np.max(np.abs(mu)) == 0.0


def test_solve_iteration_count_stable_across_modes():
    from gigaqbx.driver import _interior_point
    from gigaqbx.kernels import direct_sum

    disc = geo.make_sphere(1.0, 0, 10, target_order=3)
    x0 = _interior_point(disc)
    g = direct_sum(KernelSpec(variant=Variant.TARGET_NORMAL_DERIV),
                   x0[None, :], np.ones(1, dtype=complex), disc.target_nodes,
                   target_normals=disc.target_normals).real
    counts = {}
    for mode in (Mode.TARGET_SPECIFIC, Mode.BASELINE):
        params = EvalParams(orders=ORDERS, tree=TREE, nmpole=20.0, mode=mode)
        _, info = solve_exterior_neumann(disc, params, g)
        counts[mode] = info["n_apply"]
    a, b = counts[Mode.TARGET_SPECIFIC], counts[Mode.BASELINE]
    assert abs(a - b) <= 0.2 * max(a, b)
