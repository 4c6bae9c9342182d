"""Spherical-harmonic multipole and local expansions plus translations.

Coefficient vectors are dense, linearized over (n, m) with m-major order
within each n (flat index n^2 + n + m).  Formation follows

    M_n^m = sum_j w_j/(2n+1) |y_j-c|^n     Y_n^{-m}(y_j-c)
    L_n^m = sum_j w_j/(2n+1) Y_n^{-m}(y_j-c) / |y_j-c|^{n+1}

and evaluation sums M_n^m Y_n^m / r^{n+1} resp. L_n^m r^n Y_n^m.
Translations (M2M, M2L, L2L and the QBX variants M2QBXL, L2QBXL) are
direct O((p+1)^4) reexpansions.  For Helmholtz only point-to-QBX-local
formation and evaluation are provided (Bessel radial form); Helmholtz
multipole/local FMM translations are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import impl as _impl
from ._backend.common import ncoeffs


@dataclass
class CoefficientVector:
    order: int
    center: np.ndarray
    coeffs: np.ndarray
    kind: str  # "M" or "L"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (ncoeffs(self.order),):
            raise ValueError("coefficient vector has wrong length for its order")
        if self.kind not in ("M", "L"):
            raise ValueError("kind must be 'M' or 'L'")


@dataclass(frozen=True)
class ExpansionOrders:
    p_qbx: int
    p_fmm: int

    def __post_init__(self):
        if not (0 <= self.p_qbx <= self.p_fmm):
            raise ValueError("require 0 <= p_qbx <= p_fmm")


def _as_sources(sources, weights, center):
    sources = np.ascontiguousarray(sources, dtype=np.float64).reshape(-1, 3)
    weights = np.ascontiguousarray(weights, dtype=np.complex128).reshape(-1)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    return sources, weights, center


def p2l(sources, weights, center, p, source_normals=None) -> CoefficientVector:
    sources, weights, center = _as_sources(sources, weights, center)
    if sources.shape[0] and np.min(np.linalg.norm(sources - center, axis=1)) == 0.0:
        raise ValueError("source coincides with expansion center")
    sn = None if source_normals is None else \
        np.ascontiguousarray(source_normals, dtype=np.float64)
    coeffs = _impl.p2l(p, sources, weights, sn, center)
    return CoefficientVector(order=p, center=center, coeffs=coeffs, kind="L")


def p2m(sources, weights, center, p, source_normals=None) -> CoefficientVector:
    sources, weights, center = _as_sources(sources, weights, center)
    sn = None if source_normals is None else \
        np.ascontiguousarray(source_normals, dtype=np.float64)
    coeffs = _impl.p2m(p, sources, weights, sn, center)
    return CoefficientVector(order=p, center=center, coeffs=coeffs, kind="M")


def eval_local(L: CoefficientVector, target, target_normal=None) -> complex:
    target = np.asarray(target, dtype=np.float64).reshape(1, 3)
    tn = None if target_normal is None else \
        np.asarray(target_normal, dtype=np.float64).reshape(1, 3)
    out = _impl.eval_local(L.order, L.coeffs, L.center, target, tn,
                           target_normal is not None)
    return complex(out[0])


def eval_multipole(M: CoefficientVector, target, target_normal=None) -> complex:
    target = np.asarray(target, dtype=np.float64).reshape(1, 3)
    tn = None if target_normal is None else \
        np.asarray(target_normal, dtype=np.float64).reshape(1, 3)
    out = _impl.eval_multipole(M.order, M.coeffs, M.center, target, tn,
                               target_normal is not None)
    return complex(out[0])


def m2m(M: CoefficientVector, new_center, p: int) -> CoefficientVector:
    new_center = np.asarray(new_center, dtype=np.float64).reshape(3)
    d = new_center - M.center
    coeffs = _impl.m2m(M.order, p, M.coeffs, d)
    return CoefficientVector(order=p, center=new_center, coeffs=coeffs, kind="M")


def m2l(M: CoefficientVector, local_center, p_tgt: int) -> CoefficientVector:
    local_center = np.asarray(local_center, dtype=np.float64).reshape(3)
    d = local_center - M.center
    coeffs = _impl.m2l(M.order, p_tgt, M.coeffs, d)
    return CoefficientVector(order=p_tgt, center=local_center, coeffs=coeffs, kind="L")


def l2l(L: CoefficientVector, new_center, p: int) -> CoefficientVector:
    new_center = np.asarray(new_center, dtype=np.float64).reshape(3)
    d = new_center - L.center
    coeffs = _impl.l2l(L.order, p, L.coeffs, d)
    return CoefficientVector(order=p, center=new_center, coeffs=coeffs, kind="L")


def l2qbxl(L_box: CoefficientVector, qbx_center, p_qbx: int) -> CoefficientVector:
    """Shift a box local expansion to a QBX center, truncating to p_qbx."""
    return l2l(L_box, qbx_center, p_qbx)


def m2qbxl(M_box: CoefficientVector, qbx_center, p_qbx: int) -> CoefficientVector:
    """Convert a box multipole directly to a QBX-center local expansion."""
    return m2l(M_box, qbx_center, p_qbx)


# ------------------------------------------------------------------
# Helmholtz QBX-local expansions (no FMM translations)
# ------------------------------------------------------------------

def p2l_helmholtz(k: float, sources, weights, center, p,
                  source_normals=None) -> CoefficientVector:
    """L_n^m = ik sum_j w_j h_n(k|y_j-c|) Y_n^{-m}(y_j-c)."""
    sources, weights, center = _as_sources(sources, weights, center)
    if sources.shape[0] and np.min(np.linalg.norm(sources - center, axis=1)) == 0.0:
        raise ValueError("source coincides with expansion center")
    sn = None if source_normals is None else \
        np.ascontiguousarray(source_normals, dtype=np.float64)
    coeffs = _impl.hh_p2l(k, p, sources, weights, sn, center)
    return CoefficientVector(order=p, center=center, coeffs=coeffs, kind="L")


def eval_local_helmholtz(k: float, L: CoefficientVector, target,
                         target_normal=None) -> complex:
    """Evaluate sum L_n^m j_n(k|t-c|) Y_n^m(t-c), optionally nu(t).grad."""
    target = np.asarray(target, dtype=np.float64).reshape(1, 3)
    tn = None if target_normal is None else \
        np.asarray(target_normal, dtype=np.float64).reshape(1, 3)
    out = _impl.hh_eval_local(k, L.order, L.coeffs, L.center, target, tn,
                              target_normal is not None)
    return complex(out[0])


# ------------------------------------------------------------------
# debug dump format
# ------------------------------------------------------------------

def dump_expansion(cv: CoefficientVector, fobj) -> None:
    """Text dump: header 'p <p> center <x> <y> <z> kind <M|L>' then one
    'n m re im' line per coefficient."""
    cx, cy, cz = (float(v) for v in cv.center)
    fobj.write(f"p {cv.order} center {cx!r} {cy!r} {cz!r} kind {cv.kind}\n")
    i = 0
    for n in range(cv.order + 1):
        for m in range(-n, n + 1):
            c = cv.coeffs[i]
            fobj.write(f"{n} {m} {float(c.real)!r} {float(c.imag)!r}\n")
            i += 1


def load_expansion(fobj) -> CoefficientVector:
    header = fobj.readline().split()
    p = int(header[1])
    center = np.array([float(header[3]), float(header[4]), float(header[5])])
    kind = header[7]
    coeffs = np.empty(ncoeffs(p), dtype=np.complex128)
    for i in range(ncoeffs(p)):
        parts = fobj.readline().split()
        coeffs[i] = complex(float(parts[2]), float(parts[3]))
    return CoefficientVector(order=p, center=center, coeffs=coeffs, kind=kind)
