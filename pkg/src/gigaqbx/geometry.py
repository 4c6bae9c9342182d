"""Parametric test geometries with high-order quadrature.

Surfaces are built from curved triangular patches: an icosahedron-based
subdivision for the sphere and its radial "urchin" warps, and a tiled
parameter rectangle (split into triangles) for the self-intersecting
torus family.  Each patch carries a smooth chart with analytic partials,
so quadrature weights include exact Jacobians.  Triangle rules are
collapsed (Duffy) tensor Gauss-Legendre rules: positive weights, exact
for total degree >= quad_order.

On-surface targets are a separate, coarser per-element node set; QBX
centers are spawned from targets along the normal at a distance
proportional to the element size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

_MAX_QUAD_ORDER = 48


@dataclass
class Discretization:
    nodes: np.ndarray            # (N, 3) oversampled quadrature nodes
    weights: np.ndarray          # (N,)  quadrature weight x surface Jacobian
    normals: np.ndarray          # (N, 3) unit normals
    element_id: np.ndarray       # (N,)  owning element per node
    element_size: np.ndarray     # (K,)  diameter proxy h per element
    target_nodes: np.ndarray     # (T, 3) on-surface targets
    target_normals: np.ndarray   # (T, 3)
    target_element_id: np.ndarray  # (T,)

    def __post_init__(self):
        n = self.nodes.shape[0]
        if not (self.weights.shape[0] == self.normals.shape[0]
                == self.element_id.shape[0] == n):
            raise ValueError("inconsistent discretization array lengths")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_targets(self) -> int:
        return self.target_nodes.shape[0]


@dataclass
class QbxCenterSet:
    centers: np.ndarray      # (T, 3)
    radii: np.ndarray        # (T,) expansion radius r_c
    target_index: np.ndarray  # (T,) target driven by each center
    side: int                # +1 exterior, -1 interior

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]


# ------------------------------------------------------------------
# reference-triangle quadrature (collapsed tensor Gauss-Legendre)
# ------------------------------------------------------------------

@lru_cache(maxsize=32)
def triangle_rule(quad_order: int):
    """Nodes/weights on {u, v >= 0, u + v <= 1}, exact for total degree
    quad_order; node count grows as O(quad_order^2)."""
    if not 1 <= quad_order <= _MAX_QUAD_ORDER:
        raise ValueError(f"unsupported quadrature order {quad_order}")
    n = (quad_order + 2 + 1) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (x + 1.0)          # map to [0, 1]
    wa = 0.5 * w
    A, B = np.meshgrid(a, a, indexing="ij")
    WA, WB = np.meshgrid(wa, wa, indexing="ij")
    u = A.ravel()
    v = (B * (1.0 - A)).ravel()
    wgt = (WA * WB * (1.0 - A)).ravel()
    return np.column_stack([u, v]), wgt


_LATTICE_SHRINK = 0.78


@lru_cache(maxsize=32)
def _target_rule(degree: int = 2):
    """Per-element on-surface target set: the uniform degree-d barycentric
    lattice shrunk toward the centroid (interior, well-separated, and
    unisolvent for total-degree-d polynomials)."""
    if degree < 1:
        raise ValueError("target degree must be >= 1")
    pts = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            pts.append((i / degree, j / degree))
    uv = np.asarray(pts)
    centroid = np.array([1.0 / 3.0, 1.0 / 3.0])
    return centroid + _LATTICE_SHRINK * (uv - centroid), None


def _pd_vandermonde(degree: int, uv: np.ndarray) -> np.ndarray:
    cols = [uv[:, 0] ** i * uv[:, 1] ** j
            for i in range(degree + 1) for j in range(degree + 1 - i)]
    return np.column_stack(cols)


@lru_cache(maxsize=32)
def upsample_matrix(degree: int, quad_order: int) -> np.ndarray:
    """Per-element interpolation from the degree-d target lattice to the
    quadrature nodes, exact for total-degree-d polynomials."""
    uv_t, _ = _target_rule(degree)
    uv_q, _ = triangle_rule(quad_order)
    V_t = _pd_vandermonde(degree, uv_t)
    V_q = _pd_vandermonde(degree, uv_q)
    return V_q @ np.linalg.inv(V_t)


def target_degree(disc: "Discretization") -> int:
    """Lattice degree of the per-element target set."""
    n_el = disc.element_size.shape[0]
    per_el, rem = divmod(disc.n_targets, n_el)
    for d in range(1, 30):
        if (d + 1) * (d + 2) // 2 == per_el and rem == 0:
            return d
    raise ValueError("target set is not a per-element lattice")


def quadrature_order_of(disc: "Discretization") -> int:
    """A quadrature order whose rule reproduces the per-element node grid."""
    n_el = disc.element_size.shape[0]
    n = math.isqrt(disc.n_nodes // n_el)
    if n * n * n_el != disc.n_nodes:
        raise ValueError("quadrature nodes are not a per-element tensor grid")
    return 2 * n - 2


# ------------------------------------------------------------------
# icosahedron subdivision
# ------------------------------------------------------------------

def _icosahedron():
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    # orient every face so the normal points away from the origin
    for f in faces:
        a, b, c = verts[f]
        if np.dot(np.cross(b - a, c - a), a + b + c) < 0:
            f[1], f[2] = f[2], f[1]
    return verts, faces


def _subdivide(verts, faces, levels):
    verts = [v for v in verts]
    for _ in range(levels):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = 0.5 * (verts[i] + verts[j])
                m /= np.linalg.norm(m)
                verts.append(m)
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        faces = np.asarray(new_faces, dtype=np.int64)
    return np.asarray(verts), faces


# ------------------------------------------------------------------
# radial profile of the urchin family
# ------------------------------------------------------------------

@lru_cache(maxsize=16)
def _stripped_legendre_coeffs(k: int, m: int):
    """Polynomial W with P_k^m(mu) = (1-mu^2)^{m/2} W(mu), as coefficient
    arrays of W and W' (phase-free Ferrers)."""
    coeffs = {}
    dfact = 1.0
    for i in range(1, m + 1):
        dfact *= 2 * i - 1
    coeffs[m] = np.array([dfact])
    if k > m:
        coeffs[m + 1] = np.array([0.0, (2 * m + 1) * dfact])
    for n in range(m + 2, k + 1):
        up = np.concatenate([[0.0], coeffs[n - 1]]) * (2 * n - 1)
        lo = np.concatenate([coeffs[n - 2], [0.0, 0.0]]) * (n + m - 1)
        coeffs[n] = (up - lo[: len(up)]) / (n - m)
    W = coeffs[k]
    Wp = np.polynomial.polynomial.polyder(W) if len(W) > 1 else np.array([0.0])
    return W, Wp


def _re_ynm_and_grad(k: int, m: int, d: np.ndarray):
    """Re Y_k^m as a function of a unit direction, with its 3D polynomial
    gradient (valid on the unit sphere)."""
    W, Wp = _stripped_legendre_coeffs(k, m)
    norm = math.sqrt((2 * k + 1) / (4.0 * math.pi)
                     * math.factorial(k - m) / math.factorial(k + m))
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    w = np.polynomial.polynomial.polyval(z, W)
    wp = np.polynomial.polynomial.polyval(z, Wp)
    xy = x + 1j * y
    if m == 0:
        azi = np.ones_like(x)
        azim1 = np.zeros_like(xy)
    else:
        azim1 = xy ** (m - 1)
        azi = (azim1 * xy).real
        azim1 = m * azim1
    val = norm * w * azi
    gx = norm * w * azim1.real
    gy = norm * w * (-azim1.imag)
    gz = norm * wp * azi
    return val, np.stack([gx, gy, gz], axis=-1)


@lru_cache(maxsize=16)
def _urchin_extrema(k: int):
    """min/max of Re Y_k^{floor(k/2)} over the sphere: dense sampling plus
    local refinement."""
    m = k // 2
    th = np.linspace(0.0, math.pi, 181)
    ph = np.linspace(0.0, 2 * math.pi, 361)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    d = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH),
                  np.cos(TH)], axis=-1)
    vals = _re_ynm_and_grad(k, m, d)[0]

    def f(x, sgn):
        dd = np.array([math.sin(x[0]) * math.cos(x[1]),
                       math.sin(x[0]) * math.sin(x[1]), math.cos(x[0])])
        return sgn * float(_re_ynm_and_grad(k, m, dd)[0])

    res = []
    for sgn, pick in ((1.0, np.argmin), (-1.0, np.argmax)):
        i, j = np.unravel_index(pick(vals), vals.shape)
        r = minimize(f, x0=[TH[i, j], PH[i, j]], args=(sgn,),
                     method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
        res.append(sgn * r.fun)
    mn, mx = res
    return mn, mx


def urchin_radius(k: int, directions: np.ndarray):
    """r_k = 0.2 + (Re Y_k^{floor(k/2)} - min)/(max - min) on unit directions,
    together with the 3D gradient of the extension r_k(w/|w|)."""
    m = k // 2
    mn, mx = _urchin_extrema(k)
    val, grad = _re_ynm_and_grad(k, m, directions)
    return 0.2 + (val - mn) / (mx - mn), grad / (mx - mn)


# ------------------------------------------------------------------
# charts
# ------------------------------------------------------------------

class _ProjectedTriangleChart:
    """Map the reference triangle through a flat triangle, normalize to the
    unit sphere, then scale radially: X = rho(d) * d with d = p/|p|."""

    def __init__(self, corners, radial):
        self.corners = corners          # (3, 3)
        self.radial = radial            # callable: directions -> (rho, grad rho)

    def __call__(self, uv):
        A, B, C = self.corners
        p = A[None, :] + np.outer(uv[:, 0], B - A) + np.outer(uv[:, 1], C - A)
        pn = np.linalg.norm(p, axis=1)
        d = p / pn[:, None]
        rho, grho = self.radial(d)
        X = rho[:, None] * d

        def tangent(du):
            # dd = (I - d d^T) du / |p|, then product rule on rho(d) * d
            dd = (du[None, :] - d * (d @ du)[:, None]) / pn[:, None]
            dr = np.einsum("ni,ni->n", grho, dd)
            return dr[:, None] * d + rho[:, None] * dd

        return X, tangent(B - A), tangent(C - A)


class _TorusTriangleChart:
    """Triangle in (u, v) parameter space of one torus copy."""

    def __init__(self, corners_uv, offset):
        self.corners_uv = corners_uv    # (3, 2)
        self.offset = offset            # (3,)

    def __call__(self, uv):
        A, B, C = self.corners_uv
        par = A[None, :] + np.outer(uv[:, 0], B - A) + np.outer(uv[:, 1], C - A)
        u, v = par[:, 0], par[:, 1]
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        ring = 1.0 + 2.0 * cv
        X = np.column_stack([cu * ring, su * ring, 2.0 * sv]) + self.offset
        dXdu = np.column_stack([-su * ring, cu * ring, np.zeros_like(u)])
        dXdv = np.column_stack([-2.0 * sv * cu, -2.0 * sv * su, 2.0 * cv])
        du1, du2 = B - A, C - A
        X_u = dXdu * du1[0] + dXdv * du1[1]
        X_v = dXdu * du2[0] + dXdv * du2[1]
        return X, X_u, X_v


def _discretize(charts, quad_order: int, target_order: int) -> Discretization:
    uv, wq = triangle_rule(quad_order)
    uv_t, _ = _target_rule(target_order)
    nodes, weights, normals, elem_id = [], [], [], []
    tnodes, tnormals, telem = [], [], []
    sizes = []
    for e, chart in enumerate(charts):
        X, X_u, X_v = chart(uv)
        cross = np.cross(X_u, X_v)
        jac = np.linalg.norm(cross, axis=1)
        nodes.append(X)
        weights.append(wq * jac)
        normals.append(cross / jac[:, None])
        elem_id.append(np.full(X.shape[0], e, dtype=np.int64))
        Xt, Xt_u, Xt_v = chart(uv_t)
        crosst = np.cross(Xt_u, Xt_v)
        tnodes.append(Xt)
        tnormals.append(crosst / np.linalg.norm(crosst, axis=1)[:, None])
        telem.append(np.full(Xt.shape[0], e, dtype=np.int64))
        corners, _, _ = chart(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        sizes.append(max(np.linalg.norm(corners[i] - corners[j])
                         for i in range(3) for j in range(i + 1, 3)))
    return Discretization(
        nodes=np.concatenate(nodes),
        weights=np.concatenate(weights),
        normals=np.concatenate(normals),
        element_id=np.concatenate(elem_id),
        element_size=np.asarray(sizes),
        target_nodes=np.concatenate(tnodes),
        target_normals=np.concatenate(tnormals),
        target_element_id=np.concatenate(telem),
    )


def make_sphere(radius: float, refinement: int, quad_order: int,
                target_order: int = 2) -> Discretization:
    verts, faces = _subdivide(*_icosahedron(), refinement)

    def radial(d):
        return np.full(d.shape[0], radius), np.zeros_like(d)

    charts = [_ProjectedTriangleChart(verts[f], radial) for f in faces]
    return _discretize(charts, quad_order, target_order)


def make_urchin(k: int, refinement: int, quad_order: int,
                target_order: int = 2) -> Discretization:
    if k < 1:
        raise ValueError("urchin index must be >= 1")
    verts, faces = _subdivide(*_icosahedron(), refinement)
    radial = lambda d: urchin_radius(k, d)  # noqa: E731
    charts = [_ProjectedTriangleChart(verts[f], radial) for f in faces]
    return _discretize(charts, quad_order, target_order)


def make_torus_grid(copies_k: int, refinement: int, quad_order: int,
                    base_tiles: tuple[int, int] = (24, 12),
                    target_order: int = 2) -> Discretization:
    """2 x copies_k grid of tori with 0.6 spacing; each torus tiled into
    parameter rectangles split into two triangles.  The v-tiling keeps the
    |1 + 2 cos v| = 0 lines on element boundaries (base tiles divisible
    by 3) so per-element integrands stay smooth."""
    if copies_k < 1:
        raise ValueError("need at least one torus copy")
    nu = base_tiles[0] * 2**refinement
    nv = base_tiles[1] * 2**refinement
    two_pi = 2.0 * math.pi
    us = np.arange(nu + 1) * (two_pi / nu)
    vs = np.arange(nv + 1) * (two_pi / nv)
    # bounding box of one torus is 6 x 6 x 4; pitch = extent + 0.6
    pitch = 6.6
    charts = []
    for gi in range(2):
        for gj in range(copies_k):
            off = np.array([gi * pitch, gj * pitch, 0.0])
            for i in range(nu):
                for j in range(nv):
                    q = np.array([[us[i], vs[j]], [us[i + 1], vs[j]],
                                  [us[i + 1], vs[j + 1]], [us[i], vs[j + 1]]])
                    charts.append(_TorusTriangleChart(q[[0, 1, 2]], off))
                    charts.append(_TorusTriangleChart(q[[0, 2, 3]], off))
    return _discretize(charts, quad_order, target_order)


def place_qbx_centers(disc: Discretization, side: int, alpha: float) -> QbxCenterSet:
    """One center per on-surface target, offset side * r_c along the normal
    with r_c = alpha * element_size."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if side not in (+1, -1):
        raise ValueError("side must be +1 (exterior) or -1 (interior)")
    radii = alpha * disc.element_size[disc.target_element_id]
    centers = disc.target_nodes + side * radii[:, None] * disc.target_normals
    return QbxCenterSet(
        centers=centers,
        radii=radii,
        target_index=np.arange(disc.n_targets, dtype=np.int64),
        side=side,
    )


# ------------------------------------------------------------------
# geometry file format (JSON, >= 17 significant digits)
# ------------------------------------------------------------------

def _fmt_array(a):
    return [[format(x, ".17g") for x in row] for row in np.atleast_2d(a)]


def save_geometry(path, disc: Discretization, centers: QbxCenterSet | None = None):
    doc = {
        "nodes": _fmt_array(disc.nodes),
        "weights": [format(x, ".17g") for x in disc.weights],
        "normals": _fmt_array(disc.normals),
        "element_id": disc.element_id.tolist(),
        "element_size": [format(x, ".17g") for x in disc.element_size],
        "targets": _fmt_array(disc.target_nodes),
        "target_normals": _fmt_array(disc.target_normals),
        "target_element_id": disc.target_element_id.tolist(),
    }
    if centers is not None:
        doc["centers"] = _fmt_array(centers.centers)
        doc["radii"] = [format(x, ".17g") for x in centers.radii]
        doc["target_index"] = centers.target_index.tolist()
        doc["side"] = "exterior" if centers.side > 0 else "interior"
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_geometry(path):
    with open(path) as f:
        doc = json.load(f)
    nodes = np.asarray(doc["nodes"], dtype=np.float64)
    targets = np.asarray(doc["targets"], dtype=np.float64)
    if "target_element_id" in doc:
        teid = np.asarray(doc["target_element_id"], dtype=np.int64)
    else:
        # nearest quadrature node decides the owning element
        from scipy.spatial import cKDTree

        eid = np.asarray(doc["element_id"], dtype=np.int64)
        teid = eid[cKDTree(nodes).query(targets)[1]]
    if "target_normals" in doc:
        tnrm = np.asarray(doc["target_normals"], dtype=np.float64)
    else:
        from scipy.spatial import cKDTree

        nrm = np.asarray(doc["normals"], dtype=np.float64)
        tnrm = nrm[cKDTree(nodes).query(targets)[1]]
        tnrm /= np.linalg.norm(tnrm, axis=1)[:, None]
    disc = Discretization(
        nodes=nodes,
        weights=np.asarray(doc["weights"], dtype=np.float64),
        normals=np.asarray(doc["normals"], dtype=np.float64),
        element_id=np.asarray(doc["element_id"], dtype=np.int64),
        element_size=np.asarray(doc["element_size"], dtype=np.float64),
        target_nodes=targets,
        target_normals=tnrm,
        target_element_id=teid,
    )
    centers = None
    if "centers" in doc:
        centers = QbxCenterSet(
            centers=np.asarray(doc["centers"], dtype=np.float64),
            radii=np.asarray(doc["radii"], dtype=np.float64),
            target_index=np.asarray(doc["target_index"], dtype=np.int64),
            side=+1 if doc.get("side", "exterior") == "exterior" else -1,
        )
    return disc, centers
