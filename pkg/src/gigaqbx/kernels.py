"""Pointwise Green's functions and weighted direct summation.

Covers Laplace and Helmholtz in three flavors: single layer S, its
target-normal derivative S', and the double layer D (source-normal
derivative).  All values are complex; Laplace results carry a zero
imaginary part so that one coefficient pipeline serves both equations.
Densities are expected with quadrature weights premultiplied, so the
summation core only ever sees weighted point charges/dipoles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import impl as _impl
from ._backend.common import VARIANT_D, VARIANT_S, VARIANT_SPRIME

_FOUR_PI = 4.0 * math.pi
_NORMAL_TOL = 1e-12


class Equation(enum.Enum):
    LAPLACE = "laplace"
    HELMHOLTZ = "helmholtz"


class Variant(enum.Enum):
    SINGLE_LAYER = "s"
    TARGET_NORMAL_DERIV = "sprime"
    SOURCE_NORMAL_DERIV = "d"


_VARIANT_CODE = {
    Variant.SINGLE_LAYER: VARIANT_S,
    Variant.TARGET_NORMAL_DERIV: VARIANT_SPRIME,
    Variant.SOURCE_NORMAL_DERIV: VARIANT_D,
}


@dataclass(frozen=True)
class KernelSpec:
    equation: Equation = Equation.LAPLACE
    variant: Variant = Variant.SINGLE_LAYER
    helmholtz_k: float | None = None

    def __post_init__(self):
        if self.equation is Equation.HELMHOLTZ:
            if self.helmholtz_k is None or self.helmholtz_k <= 0:
                raise ValueError("Helmholtz requires helmholtz_k > 0")
        elif self.helmholtz_k is not None:
            raise ValueError("helmholtz_k only valid for the Helmholtz equation")

    @property
    def is_laplace(self) -> bool:
        return self.equation is Equation.LAPLACE

    @property
    def variant_code(self) -> int:
        return _VARIANT_CODE[self.variant]

    @property
    def needs_source_normals(self) -> bool:
        return self.variant is Variant.SOURCE_NORMAL_DERIV

    @property
    def needs_target_normals(self) -> bool:
        return self.variant is Variant.TARGET_NORMAL_DERIV


def _check_normal(normal, name):
    if normal is None:
        raise ValueError(f"kernel variant requires a {name} normal")
    normal = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(normal) - 1.0) > _NORMAL_TOL:
        raise ValueError(f"{name} normal must be unit length")
    return normal


def kernel_value(spec: KernelSpec, target, source,
                 target_normal=None, source_normal=None) -> complex:
    """K(t, s), nu(t).grad_t K, or nu(s).grad_s K at a single pair."""
    t = np.asarray(target, dtype=np.float64)
    s = np.asarray(source, dtype=np.float64)
    d = t - s
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("singular point: target coincides with source")

    if spec.is_laplace:
        if spec.variant is Variant.SINGLE_LAYER:
            return complex(1.0 / (_FOUR_PI * r))
        if spec.variant is Variant.TARGET_NORMAL_DERIV:
            nu = _check_normal(target_normal, "target")
            return complex(-float(nu @ d) / (_FOUR_PI * r**3))
        nu = _check_normal(source_normal, "source")
        return complex(float(nu @ d) / (_FOUR_PI * r**3))

    k = spec.helmholtz_k
    phase = np.exp(1j * k * r)
    if spec.variant is Variant.SINGLE_LAYER:
        return complex(phase / (_FOUR_PI * r))
    radial = phase * (1j * k * r - 1.0) / (_FOUR_PI * r**3)
    if spec.variant is Variant.TARGET_NORMAL_DERIV:
        nu = _check_normal(target_normal, "target")
        return complex(float(nu @ d) * radial)
    nu = _check_normal(source_normal, "source")
    return complex(-float(nu @ d) * radial)


def direct_sum(spec: KernelSpec, sources, weights, targets,
               source_normals=None, target_normals=None) -> np.ndarray:
    """Exact O(NM) summation sum_j w_j K(x_i, y_j): the brute-force oracle
    for every accelerated path."""
    sources = np.asarray(sources, dtype=np.float64).reshape(-1, 3)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.complex128).reshape(-1)
    if weights.shape[0] != sources.shape[0]:
        raise ValueError("weights must have one entry per source")
    sn = None
    if spec.needs_source_normals:
        if source_normals is None:
            raise ValueError("kernel variant requires source normals")
        sn = np.ascontiguousarray(source_normals, dtype=np.float64)
    tn = None
    if spec.needs_target_normals:
        if target_normals is None:
            raise ValueError("kernel variant requires target normals")
        tn = np.ascontiguousarray(target_normals, dtype=np.float64)
    if spec.is_laplace:
        return _impl.laplace_p2p(spec.variant_code, sources, weights, sn, targets, tn)
    return _impl.helmholtz_p2p(spec.variant_code, spec.helmholtz_k,
                               sources, weights, sn, targets, tn)
