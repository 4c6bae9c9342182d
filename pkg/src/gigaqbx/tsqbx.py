"""Target-specific QBX evaluation.

Rewrites the truncated QBX local expansion per source-target pair through
the Legendre addition theorem, so each pair costs O(p+1) instead of
O((p+1)^2), with no error relative to the spherical-harmonic form.  For
the Laplace single layer

    G^(p)(t, s) = 1/(4 pi) sum_{n<=p} |t-c|^n / |s-c|^{n+1} P_n(cos gamma),

gamma the angle between s-c and t-c; the S' and D variants apply the
target resp. source gradient of the truncated sum, and the Helmholtz
family replaces the radial powers by j_n(k|t-c|) h_n(k|s-c|) with the
(ik/4pi)(2n+1) prefactor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import impl as _impl
from .kernels import Equation, KernelSpec, Variant

_SEP_SLACK = 1e-12


@dataclass(frozen=True)
class TsConfig:
    spec: KernelSpec
    p_qbx: int

    def __post_init__(self):
        if self.p_qbx < 0:
            raise ValueError("p_qbx must be nonnegative")


def _prep(cfg, sources, weights, source_normals, center, target, target_normal):
    sources = np.ascontiguousarray(sources, dtype=np.float64).reshape(-1, 3)
    weights = np.ascontiguousarray(weights, dtype=np.complex128).reshape(-1)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)

    R = np.linalg.norm(sources - center, axis=1)
    if np.any(R == 0.0):
        bad = int(np.argmin(R))
        raise ValueError(f"source {bad} coincides with the expansion center")
    r = float(np.linalg.norm(target - center))
    viol = R * (1.0 + _SEP_SLACK) < r
    if np.any(viol):
        bad = int(np.argmax(viol))
        raise ValueError(
            f"separation violation for source {bad}: |t-c| = {r} exceeds |s-c| = {R[bad]}")

    sn = None
    if cfg.spec.needs_source_normals:
        if source_normals is None:
            raise ValueError("double-layer variant requires source normals")
        sn = np.ascontiguousarray(source_normals, dtype=np.float64).reshape(-1, 3)
    tn = None
    if cfg.spec.needs_target_normals:
        if target_normal is None:
            raise ValueError("S' variant requires a target normal")
        tn = np.asarray(target_normal, dtype=np.float64).reshape(3)
    return sources, weights, sn, center, target, tn


def ts_accumulate(cfg: TsConfig, sources, weights, center, target,
                  source_normals=None, target_normal=None) -> complex:
    """sum_j w_j * (p-th order target-specific expansion of source j)."""
    sources, weights, sn, center, target, tn = _prep(
        cfg, sources, weights, source_normals, center, target, target_normal)
    if sources.shape[0] == 0:
        return 0.0 + 0.0j
    if cfg.spec.equation is Equation.LAPLACE:
        return _impl.ts_accum_laplace(cfg.spec.variant_code, cfg.p_qbx,
                                      sources, weights, sn, center, target, tn)
    return _impl.ts_accum_helmholtz(cfg.spec.variant_code, cfg.spec.helmholtz_k,
                                    cfg.p_qbx, sources, weights, sn,
                                    center, target, tn)


def ts_eval(cfg: TsConfig, source, center, target,
            source_normal=None, target_normal=None) -> complex:
    """Target-specific expansion value for a single unit-weight source."""
    sn = None if source_normal is None else np.asarray(source_normal).reshape(1, 3)
    return ts_accumulate(
        cfg,
        np.asarray(source, dtype=np.float64).reshape(1, 3),
        np.ones(1, dtype=np.complex128),
        center, target,
        source_normals=sn, target_normal=target_normal)
