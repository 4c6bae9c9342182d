"""Full evaluation pipeline: tree build, upward pass, direct stages,
translations, downward pass, and per-target summation.

Three modes:

  baseline          direct stages form order-p_qbx spherical-harmonic QBX
                    local expansions from sources (P2QBXL), evaluated at
                    the associated target;
  target-specific   direct stages accumulate per-pair scalars instead
                    (mathematically identical, O(p+1) per pair);
  direct            global QBX reference: one local expansion per center
                    formed from all sources, no tree.

The potential reaching a QBX target is assembled from three accumulators
(near, W from List 3 far, far from the downward pass), summed in a fixed
order.  Helmholtz is supported in direct mode only, since Helmholtz
multipole/local translations are not implemented.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from ._backend import impl as _impl
from ._backend.common import ncoeffs
from .expansion import ExpansionOrders
from .geometry import Discretization, QbxCenterSet
from .kernels import Equation, KernelSpec, Variant, direct_sum
from .tree import CENTERS, SOURCES, TARGETS, Octree, TreeParams, build_tree
from .ilists import InteractionLists, compute_lists


class Mode(enum.Enum):
    BASELINE = "base"
    TARGET_SPECIFIC = "ts"
    DIRECT_REFERENCE = "direct"


class UnsupportedModeError(ValueError):
    pass


@dataclass(frozen=True)
class EvalParams:
    orders: ExpansionOrders
    tree: TreeParams
    nmpole: float = 0.0
    mode: Mode = Mode.TARGET_SPECIFIC
    spec: KernelSpec = field(default_factory=KernelSpec)
    threads: int = 1

    def __post_init__(self):
        if self.nmpole < 0:
            raise ValueError("nmpole must be nonnegative")
        if (self.spec.equation is Equation.HELMHOLTZ
                and self.mode is not Mode.DIRECT_REFERENCE):
            raise UnsupportedModeError(
                "Helmholtz is supported in direct-reference mode only "
                "(no Helmholtz multipole/local translations)")


@dataclass
class PotentialResult:
    qbx_values: np.ndarray
    conventional_values: np.ndarray
    stage_timings: dict
    interaction_counts: dict
    qbx_parts: tuple | None = None     # (near, w, far) per on-surface target
    tree: Octree | None = None
    lists: InteractionLists | None = None


class _StageClock:
    def __init__(self):
        self.timings = {}

    def stage(self, name):
        return _StageTimer(self, name)


class _StageTimer:
    def __init__(self, clock, name):
        self.clock, self.name = clock, name

    def __enter__(self):
        self.t0 = time.process_time()
        return self

    def __exit__(self, *exc):
        dt = time.process_time() - self.t0
        self.clock.timings[self.name] = self.clock.timings.get(self.name, 0.0) + dt
        return False


def _permute(arr, perm):
    out = np.empty_like(arr)
    out[perm] = arr
    return out


def _unpermute(arr, perm):
    return arr[perm]


def _gather_sources(tree, boxes):
    slices = [tree.owned_slice(int(d), SOURCES) for d in boxes]
    idx = np.concatenate([np.arange(s.start, s.stop) for s in slices]) \
        if slices else np.empty(0, dtype=np.int64)
    return idx


def evaluate(disc: Discretization, centers: QbxCenterSet, density,
             params: EvalParams, extra_targets=None,
             extra_target_normals=None, prepared=None) -> PotentialResult:
    """Algorithm stages 1-9; returns per-target potentials, per-stage
    process times, and interaction counts.  ``prepared`` may carry a
    (tree, lists) pair from a previous call with identical geometry and
    tree parameters, skipping stage 1 (used by iterative solves)."""
    if params.mode is Mode.DIRECT_REFERENCE:
        return direct_reference(disc, centers, density, params,
                                extra_targets, extra_target_normals)

    spec = params.spec
    p_fmm = params.orders.p_fmm
    p_qbx = params.orders.p_qbx
    nc_fmm = ncoeffs(p_fmm)
    nc_qbx = ncoeffs(p_qbx)
    clock = _StageClock()
    counts = {k: 0 for k in ("p2l", "p2m", "p2qbxl", "ts", "l2l", "l2qbxl",
                             "m2l", "m2m", "m2qbxl", "qbxl2p", "m2p")}

    density = np.asarray(density, dtype=np.complex128).reshape(-1)
    if density.shape[0] != disc.n_nodes:
        raise ValueError("density must have one value per source node")
    w_src = disc.weights * density

    extra_targets = (np.zeros((0, 3)) if extra_targets is None
                     else np.asarray(extra_targets, dtype=np.float64).reshape(-1, 3))
    if spec.needs_target_normals and extra_targets.shape[0] \
            and extra_target_normals is None:
        raise ValueError("S' variant requires normals for conventional targets")

    # ---- Stage 1: tree + interaction lists ---------------------------
    with clock.stage("stage1"):
        if prepared is not None:
            tree, lists = prepared
        else:
            tree = build_tree(disc.nodes, extra_targets, centers.centers,
                              centers.radii, params.tree)
            lists = compute_lists(tree, params.nmpole)

    sperm = tree.perms[SOURCES]
    w = _permute(w_src, sperm)
    snormals = _permute(disc.normals, sperm) if spec.needs_source_normals else None
    sn_or_none = snormals

    tperm = tree.perms[TARGETS]
    conv_targets = tree.points[TARGETS]
    conv_normals = None
    if spec.needs_target_normals and extra_targets.shape[0]:
        conv_normals = _permute(
            np.asarray(extra_target_normals, dtype=np.float64).reshape(-1, 3), tperm)

    cperm = tree.perms[CENTERS]
    qcenters = tree.points[CENTERS]
    tgt_of_center = _permute(centers.target_index, cperm)
    qtargets = disc.target_nodes[tgt_of_center]
    qnormals = disc.target_normals[tgt_of_center] \
        if spec.needs_target_normals else None

    n_centers = qcenters.shape[0]
    n_conv = conv_targets.shape[0]
    deriv = spec.needs_target_normals
    is_ts = params.mode is Mode.TARGET_SPECIFIC

    conv_near = np.zeros(n_conv, dtype=np.complex128)
    conv_w = np.zeros(n_conv, dtype=np.complex128)
    qbx_near_val = np.zeros(n_centers, dtype=np.complex128)
    qbx_near_coef = None if is_ts else np.zeros((n_centers, nc_qbx), dtype=np.complex128)
    qbx_w_coef = np.zeros((n_centers, nc_qbx), dtype=np.complex128)
    qbx_far_coef = np.zeros((n_centers, nc_qbx), dtype=np.complex128)

    def p2p(src_idx, tgts, tnrm):
        if spec.is_laplace:
            return _impl.laplace_p2p(
                spec.variant_code, tree.points[SOURCES][src_idx], w[src_idx],
                None if sn_or_none is None else sn_or_none[src_idx], tgts, tnrm)
        return _impl.helmholtz_p2p(
            spec.variant_code, spec.helmholtz_k, tree.points[SOURCES][src_idx],
            w[src_idx], None if sn_or_none is None else sn_or_none[src_idx],
            tgts, tnrm)

    def direct_stage(stage_name, list_csr):
        with clock.stage(stage_name):
            for b in lists.target_boxes:
                b = int(b)
                boxes = list_csr.get(b)
                if boxes.shape[0] == 0:
                    continue
                src_idx = _gather_sources(tree, boxes)
                if src_idx.shape[0] == 0:
                    continue
                ct = tree.owned_slice(b, TARGETS)
                if ct.stop > ct.start:
                    tnrm = conv_normals[ct] if conv_normals is not None else None
                    conv_near[ct] += p2p(src_idx, conv_targets[ct], tnrm)
                cs = tree.owned_slice(b, CENTERS)
                if cs.stop == cs.start:
                    continue
                src_b = np.ascontiguousarray(tree.points[SOURCES][src_idx])
                w_b = np.ascontiguousarray(w[src_idx])
                sn_b = None if sn_or_none is None else \
                    np.ascontiguousarray(sn_or_none[src_idx])
                for ic in range(cs.start, cs.stop):
                    tn_i = qnormals[ic] if qnormals is not None else None
                    if is_ts:
                        qbx_near_val[ic] += _ts_accum(
                            spec, p_qbx, src_b, w_b, sn_b,
                            qcenters[ic], qtargets[ic], tn_i)
                        counts["ts"] += src_idx.shape[0]
                    else:
                        qbx_near_coef[ic] += _impl.p2l(
                            p_qbx, src_b, w_b, sn_b, qcenters[ic])
                        counts["p2qbxl"] += src_idx.shape[0]

    # ---- Stage 2: upward pass ----------------------------------------
    with clock.stage("stage2"):
        mpoles = np.zeros((tree.n_boxes, nc_fmm), dtype=np.complex128)
        has_mpole = np.zeros(tree.n_boxes, dtype=bool)
        for b in range(tree.n_boxes):
            os = tree.owned_slice(b, SOURCES)
            if os.stop > os.start:
                mpoles[b] = _impl.p2m(
                    p_fmm, tree.points[SOURCES][os], w[os],
                    None if sn_or_none is None else sn_or_none[os],
                    tree.centers[b])
                has_mpole[b] = True
                counts["p2m"] += os.stop - os.start
        # children always carry larger box ids than parents
        for b in range(tree.n_boxes - 1, 0, -1):
            if tree.subtree_count(b, SOURCES) == 0:
                continue
            parent = int(tree.parents[b])
            mpoles[parent] += _impl.m2m(p_fmm, p_fmm, mpoles[b],
                                        tree.centers[parent] - tree.centers[b])
            counts["m2m"] += 1

    # ---- Stage 3: List 1 direct --------------------------------------
    direct_stage("stage3", lists.list1)

    # ---- Stage 4: multipole -> local (List 2) ------------------------
    with clock.stage("stage4"):
        locs = np.zeros((tree.n_boxes, nc_fmm), dtype=np.complex128)
        for b in range(tree.n_boxes):
            if not lists.target_or_ancestor[b]:
                continue
            for d in lists.list2.get(b):
                d = int(d)
                if tree.subtree_count(d, SOURCES) == 0:
                    continue
                locs[b] += _impl.m2l(p_fmm, p_fmm, mpoles[d],
                                     tree.centers[b] - tree.centers[d])
                counts["m2l"] += 1

    # ---- Stage 5(a): List 3 close direct -----------------------------
    direct_stage("stage5a", lists.list3close)

    # ---- Stage 5(b): List 3 far multipole evaluation ------------------
    with clock.stage("stage5b"):
        for b in lists.target_boxes:
            b = int(b)
            boxes = [int(d) for d in lists.list3far.get(b)
                     if tree.subtree_count(int(d), SOURCES) > 0]
            if not boxes:
                continue
            ct = tree.owned_slice(b, TARGETS)
            cs = tree.owned_slice(b, CENTERS)
            for d in boxes:
                if ct.stop > ct.start:
                    tnrm = conv_normals[ct] if conv_normals is not None else None
                    conv_w[ct] += _impl.eval_multipole(
                        p_fmm, mpoles[d], tree.centers[d], conv_targets[ct],
                        tnrm, deriv)
                    counts["m2p"] += ct.stop - ct.start
                for ic in range(cs.start, cs.stop):
                    qbx_w_coef[ic] += _impl.m2l(
                        p_fmm, p_qbx, mpoles[d], qcenters[ic] - tree.centers[d])
                    counts["m2qbxl"] += 1

    # ---- Stage 6(a): List 4 close direct ------------------------------
    direct_stage("stage6a", lists.list4close)

    # ---- Stage 6(b): List 4 far -> box locals --------------------------
    with clock.stage("stage6b"):
        for b in range(tree.n_boxes):
            if not lists.target_or_ancestor[b]:
                continue
            boxes = lists.list4far.get(b)
            if boxes.shape[0] == 0:
                continue
            src_idx = _gather_sources(tree, boxes)
            if src_idx.shape[0] == 0:
                continue
            locs[b] += _impl.p2l(
                p_fmm, tree.points[SOURCES][src_idx], w[src_idx],
                None if sn_or_none is None else sn_or_none[src_idx],
                tree.centers[b])
            counts["p2l"] += src_idx.shape[0]

    # ---- Stage 7: downward pass ---------------------------------------
    with clock.stage("stage7"):
        for b in range(1, tree.n_boxes):              # parents before children
            if not lists.target_or_ancestor[b]:
                continue
            parent = int(tree.parents[b])
            locs[b] += _impl.l2l(p_fmm, p_fmm, locs[parent],
                                 tree.centers[b] - tree.centers[parent])
            counts["l2l"] += 1

    # ---- Stage 8: box local -> QBX local -------------------------------
    with clock.stage("stage8"):
        for b in lists.target_boxes:
            b = int(b)
            cs = tree.owned_slice(b, CENTERS)
            for ic in range(cs.start, cs.stop):
                qbx_far_coef[ic] = _impl.l2l(
                    p_fmm, p_qbx, locs[b], qcenters[ic] - tree.centers[b])
                counts["l2qbxl"] += 1

    # ---- Stage 9: final evaluation --------------------------------------
    with clock.stage("stage9"):
        conv_far = np.zeros(n_conv, dtype=np.complex128)
        for b in lists.target_boxes:
            b = int(b)
            ct = tree.owned_slice(b, TARGETS)
            if ct.stop > ct.start:
                tnrm = conv_normals[ct] if conv_normals is not None else None
                conv_far[ct] = _impl.eval_local(
                    p_fmm, locs[b], tree.centers[b], conv_targets[ct],
                    tnrm, deriv)
        qbx_w_val = np.zeros(n_centers, dtype=np.complex128)
        qbx_far_val = np.zeros(n_centers, dtype=np.complex128)
        for ic in range(n_centers):
            tgt = qtargets[ic][None, :]
            tn_i = qnormals[ic][None, :] if qnormals is not None else None
            if not is_ts:
                qbx_near_val[ic] = _impl.eval_local(
                    p_qbx, qbx_near_coef[ic], qcenters[ic], tgt, tn_i, deriv)[0]
            qbx_w_val[ic] = _impl.eval_local(
                p_qbx, qbx_w_coef[ic], qcenters[ic], tgt, tn_i, deriv)[0]
            qbx_far_val[ic] = _impl.eval_local(
                p_qbx, qbx_far_coef[ic], qcenters[ic], tgt, tn_i, deriv)[0]
            counts["qbxl2p"] += 1
        qbx_total = (qbx_near_val + qbx_w_val) + qbx_far_val
        conv_total = (conv_near + conv_w) + conv_far

    # un-permute into caller order
    qbx_out = np.zeros(disc.n_targets, dtype=np.complex128)
    qbx_out[tgt_of_center] = qbx_total
    near_out = np.zeros(disc.n_targets, dtype=np.complex128)
    near_out[tgt_of_center] = qbx_near_val
    w_out = np.zeros(disc.n_targets, dtype=np.complex128)
    w_out[tgt_of_center] = qbx_w_val
    far_out = np.zeros(disc.n_targets, dtype=np.complex128)
    far_out[tgt_of_center] = qbx_far_val
    conv_out = _unpermute(conv_total, tperm) if n_conv else conv_total

    return PotentialResult(
        qbx_values=qbx_out,
        conventional_values=conv_out,
        stage_timings=clock.timings,
        interaction_counts=counts,
        qbx_parts=(near_out, w_out, far_out),
        tree=tree,
        lists=lists,
    )


def _ts_accum(spec, p, sources, weights, snormals, center, target, tnormal):
    if spec.is_laplace:
        return _impl.ts_accum_laplace(spec.variant_code, p, sources, weights,
                                      snormals, center, target, tnormal)
    return _impl.ts_accum_helmholtz(spec.variant_code, spec.helmholtz_k, p,
                                    sources, weights, snormals, center,
                                    target, tnormal)


def direct_reference(disc: Discretization, centers: QbxCenterSet, density,
                     params: EvalParams, extra_targets=None,
                     extra_target_normals=None) -> PotentialResult:
    """Global QBX: per center, a local expansion formed from all sources,
    evaluated at the associated target.  O(N^2); the acceleration oracle."""
    spec = params.spec
    p = params.orders.p_qbx
    clock = _StageClock()
    density = np.asarray(density, dtype=np.complex128).reshape(-1)
    w = disc.weights * density
    sn = disc.normals if spec.needs_source_normals else None
    deriv = spec.needs_target_normals

    qbx_out = np.zeros(disc.n_targets, dtype=np.complex128)
    with clock.stage("direct"):
        for i in range(centers.n_centers):
            c = centers.centers[i]
            tgt = disc.target_nodes[centers.target_index[i]][None, :]
            tn = disc.target_normals[centers.target_index[i]][None, :] \
                if deriv else None
            if spec.is_laplace:
                coeffs = _impl.p2l(p, disc.nodes, w, sn, c)
                val = _impl.eval_local(p, coeffs, c, tgt, tn, deriv)[0]
            else:
                k = spec.helmholtz_k
                coeffs = _impl.hh_p2l(k, p, disc.nodes, w, sn, c)
                val = _impl.hh_eval_local(k, p, coeffs, c, tgt, tn, deriv)[0]
            qbx_out[centers.target_index[i]] = val

        conv_out = np.zeros(0, dtype=np.complex128)
        if extra_targets is not None and np.asarray(extra_targets).size:
            conv_out = direct_sum(
                spec, disc.nodes, w, np.asarray(extra_targets, dtype=np.float64),
                source_normals=sn, target_normals=extra_target_normals)

    counts = {k: 0 for k in ("p2l", "p2m", "p2qbxl", "ts", "l2l", "l2qbxl",
                             "m2l", "m2m", "m2qbxl", "qbxl2p", "m2p")}
    counts["p2qbxl"] = int(centers.n_centers) * int(disc.n_nodes)
    counts["qbxl2p"] = int(centers.n_centers)
    return PotentialResult(
        qbx_values=qbx_out,
        conventional_values=conv_out,
        stage_timings=clock.timings,
        interaction_counts=counts,
    )


# ----------------------------------------------------------------------
# Green's identity proxy test and the exterior Neumann solve
# ----------------------------------------------------------------------

def _interior_point(disc):
    centroid = disc.nodes.mean(axis=0)
    radii = np.linalg.norm(disc.nodes - centroid, axis=1)
    off = np.array([0.11, 0.07, -0.05])
    return centroid + off * (0.3 * radii.min())


def _exterior_point(disc):
    centroid = disc.nodes.mean(axis=0)
    radii = np.linalg.norm(disc.nodes - centroid, axis=1)
    d = np.array([0.3, -0.5, 0.8])
    return centroid + d / np.linalg.norm(d) * (2.5 * radii.max())


def greens_identity_residual(disc: Discretization, centers: QbxCenterSet,
                             params: EvalParams, test_field: str) -> float:
    """max_t |S[du/dnu](t) - D[u](t) -/+ u(t)| / max|u| for the field of a
    point charge on the side opposite the evaluation side.  With one-sided
    QBX limits this is the on-surface Green identity
    S(du/dnu) - D(u) = u/2 after accounting for the double-layer jump."""
    if test_field == "PointChargeOutside":
        if centers.side != -1:
            raise ValueError("charge outside requires interior-side centers")
        x0 = _exterior_point(disc)
        sign = +1.0
    elif test_field == "PointChargeInside":
        if centers.side != +1:
            raise ValueError("charge inside requires exterior-side centers")
        x0 = _interior_point(disc)
        sign = -1.0
    else:
        raise ValueError(f"unknown test field {test_field!r}")

    kspec = KernelSpec(equation=params.spec.equation,
                       helmholtz_k=params.spec.helmholtz_k)
    u_nodes = direct_sum(kspec, x0[None, :], np.ones(1, dtype=np.complex128),
                         disc.nodes)
    dudn_nodes = direct_sum(
        KernelSpec(equation=kspec.equation, helmholtz_k=kspec.helmholtz_k,
                   variant=Variant.TARGET_NORMAL_DERIV),
        x0[None, :], np.ones(1, dtype=np.complex128), disc.nodes,
        target_normals=disc.normals)
    u_tgt = direct_sum(kspec, x0[None, :], np.ones(1, dtype=np.complex128),
                       disc.target_nodes)

    s_params = EvalParams(orders=params.orders, tree=params.tree,
                          nmpole=params.nmpole, mode=params.mode,
                          spec=kspec, threads=params.threads)
    d_params = EvalParams(orders=params.orders, tree=params.tree,
                          nmpole=params.nmpole, mode=params.mode,
                          spec=KernelSpec(equation=kspec.equation,
                                          helmholtz_k=kspec.helmholtz_k,
                                          variant=Variant.SOURCE_NORMAL_DERIV),
                          threads=params.threads)
    s_val = evaluate(disc, centers, dudn_nodes, s_params).qbx_values
    d_val = evaluate(disc, centers, u_nodes, d_params).qbx_values

    resid = sign * (s_val - d_val) - u_tgt
    return float(np.max(np.abs(resid)) / np.max(np.abs(u_tgt)))


def solve_exterior_neumann(disc: Discretization, params: EvalParams, g,
                           alpha: float = 0.5, rtol: float = 1e-6,
                           maxiter: int = 200):
    """Solve g = (S' - 1/2) mu for the exterior Neumann problem, Laplace
    only.  The density unknowns and the collocation points live on the
    per-element on-surface target grid; each operator application
    interpolates the density to the quadrature nodes (exact on the tensor
    polynomial space of the target grid) and evaluates the one-sided
    exterior limit of d(S mu)/dnu through QBX, which is the operator
    g = (S' - 1/2) mu directly.  Returns (mu at the quadrature nodes,
    info dict with the collocation density and iteration count)."""
    from scipy.sparse.linalg import LinearOperator, gmres

    from .geometry import (place_qbx_centers, quadrature_order_of,
                           target_degree, upsample_matrix)

    if params.spec.equation is not Equation.LAPLACE:
        raise UnsupportedModeError("exterior Neumann solve supports Laplace only")

    deg = target_degree(disc)
    if deg < 2:
        raise ValueError(
            "solve needs a target lattice of degree >= 2 "
            "(build the geometry with target_order >= 2)")
    n_el = disc.element_size.shape[0]
    U = upsample_matrix(deg, quadrature_order_of(disc))
    centers = place_qbx_centers(disc, +1, alpha)
    op_params = EvalParams(
        orders=params.orders, tree=params.tree, nmpole=params.nmpole,
        mode=params.mode,
        spec=KernelSpec(variant=Variant.TARGET_NORMAL_DERIV),
        threads=params.threads)

    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.shape[0] != disc.n_targets:
        raise ValueError("boundary data must be sampled at the target nodes")

    n_coll = (deg + 1) * (deg + 2) // 2

    def upsample(mu_coll):
        per_el = mu_coll.reshape(n_el, n_coll)
        return (per_el @ U.T).reshape(-1)

    tree = build_tree(disc.nodes, np.zeros((0, 3)), centers.centers,
                      centers.radii, params.tree)
    lists = compute_lists(tree, params.nmpole)
    n_apply = [0]

    def apply_op(mu_coll):
        n_apply[0] += 1
        mu_quad = upsample(mu_coll).astype(np.complex128)
        res = evaluate(disc, centers, mu_quad, op_params,
                       prepared=(tree, lists))
        return res.qbx_values.real

    A = LinearOperator((disc.n_targets, disc.n_targets), matvec=apply_op,
                       dtype=np.float64)
    mu_coll, code = gmres(A, g, rtol=rtol, atol=0.0, restart=50,
                          maxiter=maxiter)
    if code != 0:
        raise RuntimeError(f"GMRES did not reach rtol={rtol} "
                           f"(code {code}, {n_apply[0]} applications)")
    return upsample(mu_coll), {"n_apply": n_apply[0], "centers": centers,
                               "mu_collocation": mu_coll}
