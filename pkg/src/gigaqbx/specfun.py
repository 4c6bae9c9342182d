"""Special functions via stable recurrences.

Legendre polynomials and derivatives, associated Legendre functions in the
phase-free Ferrers convention (no Condon-Shortley factor), orthonormal
spherical harmonics, and spherical Bessel/Hankel functions of the first
kind.  The Ferrers phase choice makes

    Y_n^{-m} = conj(Y_n^m)

and keeps the Legendre addition theorem

    P_n(cos gamma) = 4 pi/(2n+1) sum_m Y_n^m(a) Y_n^{-m}(b)

valid as written; both are pinned by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class LegendreSeq:
    """P_0..P_p and P'_0..P'_p at a fixed argument."""
    values: np.ndarray
    derivs: np.ndarray


@dataclass(frozen=True)
class SphBesselSeq:
    """j_n, h_n (first kind) and derivatives for n = 0..p at a fixed x > 0."""
    j: np.ndarray
    jprime: np.ndarray
    h: np.ndarray
    hprime: np.ndarray
    argument: float


def _clamp_argument(x: float) -> float:
    if abs(x) > 1.0 + _DOMAIN_SLACK:
        raise ValueError(f"Legendre argument out of range: {x}")
    return min(1.0, max(-1.0, x))


def legendre_all(p: int, x: float) -> LegendreSeq:
    """Three-term recurrence for P_n and the derivative ladder
    P'_{n+1} = P'_{n-1} + (2n+1) P_n (division-free, valid at |x| = 1)."""
    if p < 0:
        raise ValueError("order must be nonnegative")
    x = _clamp_argument(x)
    P = np.empty(p + 1)
    D = np.empty(p + 1)
    P[0], D[0] = 1.0, 0.0
    if p >= 1:
        P[1], D[1] = x, 1.0
    for n in range(1, p):
        P[n + 1] = ((2 * n + 1) * x * P[n] - n * P[n - 1]) / (n + 1)
        D[n + 1] = D[n - 1] + (2 * n + 1) * P[n]
    return LegendreSeq(values=P, derivs=D)


def assoc_legendre(n: int, m: int, x: float) -> float:
    """Ferrers P_n^m without Condon-Shortley phase, 0 <= m <= n."""
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got n={n}, m={m}")
    x = _clamp_argument(x)
    s = math.sqrt(max(0.0, 1.0 - x * x))
    # P_m^m = (2m-1)!! s^m, then upward in degree
    pmm = 1.0
    for i in range(1, m + 1):
        pmm *= (2 * i - 1) * s
    if n == m:
        return pmm
    pm1 = x * (2 * m + 1) * pmm
    if n == m + 1:
        return pm1
    for nn in range(m + 2, n + 1):
        pmm, pm1 = pm1, ((2 * nn - 1) * x * pm1 - (nn + m - 1) * pmm) / (nn - m)
    return pm1


def ynm(n: int, m: int, theta: float, phi: float) -> complex:
    """Orthonormal spherical harmonic
    sqrt((2n+1)/(4pi) (n-|m|)!/(n+|m|)!) P_n^{|m|}(cos theta) e^{i m phi}."""
    if abs(m) > n:
        raise IndexError(f"|m| <= n required, got n={n}, m={m}")
    am = abs(m)
    norm = math.sqrt(
        (2 * n + 1) / (4.0 * math.pi)
        * math.factorial(n - am) / math.factorial(n + am)
    )
    val = norm * assoc_legendre(n, am, math.cos(theta))
    if m >= 0:
        return val * complex(math.cos(m * phi), math.sin(m * phi))
    return val * complex(math.cos(am * phi), -math.sin(am * phi))


def sph_bessel_all(p: int, x: float) -> SphBesselSeq:
    """j_n by Miller's downward recurrence normalized against j_0,
    h_n upward from h_0 = -i e^{ix}/x; derivatives from
    f'_n = f_{n-1} - (n+1) f_n / x."""
    if x <= 0.0:
        raise ValueError(f"argument must be positive, got {x}")
    nstart = p + 16 + math.ceil(x)
    f = np.zeros(nstart + 2)
    f[nstart] = 1e-290
    for n in range(nstart, 0, -1):
        f[n - 1] = (2 * n + 1) / x * f[n] - f[n + 1]
        if abs(f[n - 1]) > 1e250:
            f *= 1e-250
    j0 = math.sin(x) / x
    j = f[: p + 2] * (j0 / f[0])
    h = np.empty(p + 2, dtype=np.complex128)
    h[0] = -1j * np.exp(1j * x) / x
    h[1] = h[0] * (1.0 / x - 1j)
    for n in range(1, p + 1):
        h[n + 1] = (2 * n + 1) / x * h[n] - h[n - 1]
    jp = np.empty(p + 1)
    hp = np.empty(p + 1, dtype=np.complex128)
    jp[0] = -j[1]
    hp[0] = -h[1]
    for n in range(1, p + 1):
        jp[n] = j[n - 1] - (n + 1) / x * j[n]
        hp[n] = h[n - 1] - (n + 1) / x * h[n]
    return SphBesselSeq(j=j[: p + 1], jprime=jp, h=h[: p + 1], hprime=hp, argument=x)
