"""Shared constants and index plans for the expansion backends.

Expansion coefficients are stored in the "analyst" convention

    multipole:  M_n^m = sum_j w_j/(2n+1) * |y_j-c|^n  * Y_n^{-m}(y_j-c)
    local:      L_n^m = sum_j w_j/(2n+1) * Y_n^{-m}(y_j-c) / |y_j-c|^{n+1}

with Y_n^m the orthonormal spherical harmonics built on phase-free Ferrers
associated Legendre functions.  Internally all translations run on scaled
solid harmonics

    Rt_n^m(x) = r^n P_n^{|m|}(cos th) e^{im ph} / (n+|m|)!
    It_n^m(x) = (n-|m|)! P_n^{|m|}(cos th) e^{im ph} / r^{n+1}

whose addition theorems carry only +-1 sign factors.  Both backends share
the index plans built here so they agree bit-for-bit on semantics.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# kernel variant codes used across backends
VARIANT_S = 0        # single layer
VARIANT_SPRIME = 1   # target-normal derivative
VARIANT_D = 2        # source-normal derivative (double layer)


def nm_index(n: int, m: int) -> int:
    """Flat index of coefficient (n, m), m-major within n."""
    return n * n + n + m


def ncoeffs(p: int) -> int:
    return (p + 1) * (p + 1)


@lru_cache(maxsize=64)
def n_of_index(p: int) -> np.ndarray:
    out = np.empty(ncoeffs(p), dtype=np.int64)
    for n in range(p + 1):
        out[n * n:(n + 1) * (n + 1)] = n
    return out


@lru_cache(maxsize=64)
def m_of_index(p: int) -> np.ndarray:
    out = np.empty(ncoeffs(p), dtype=np.int64)
    for n in range(p + 1):
        out[n * n:(n + 1) * (n + 1)] = np.arange(-n, n + 1)
    return out


@lru_cache(maxsize=64)
def mflip_perm(p: int) -> np.ndarray:
    """Permutation sending index (n, m) to (n, -m)."""
    n = n_of_index(p)
    m = m_of_index(p)
    return (n * n + n - m).astype(np.int64)


@lru_cache(maxsize=64)
def alpha_vec(p: int) -> np.ndarray:
    """R_n^m = alpha * Rt_n^m with R_n^m = r^n Y_n^m."""
    out = np.empty(ncoeffs(p))
    for n in range(p + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            out[nm_index(n, m)] = math.sqrt(
                (2 * n + 1) / (4.0 * math.pi)
                * math.factorial(n - am) * math.factorial(n + am)
            )
    return out


@lru_cache(maxsize=64)
def beta_vec(p: int) -> np.ndarray:
    """I_n^m = beta * It_n^m with I_n^m = Y_n^m / r^{n+1}."""
    out = np.empty(ncoeffs(p))
    for n in range(p + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            out[nm_index(n, m)] = math.sqrt(
                (2 * n + 1) / (4.0 * math.pi)
                / (math.factorial(n - am) * math.factorial(n + am))
            )
    return out


@lru_cache(maxsize=64)
def inv_2np1_vec(p: int) -> np.ndarray:
    return 1.0 / (2.0 * n_of_index(p) + 1.0)


def _eps(a: int, b: int) -> float:
    # sign picked up when composing x+iy / x-iy derivative ladders
    return -1.0 if ((abs(a) + abs(b) - abs(a + b)) // 2) % 2 else 1.0


@lru_cache(maxsize=64)
def translation_plan(kind: str, p_src: int, p_tgt: int):
    """Dense gather/sign plan mapping scaled source coeffs to scaled targets.

    Returns (table_order, table_kind, gather, sign) where out[j] =
    sum_i sign[j, i] * table[gather[j, i]] * src[i] and `table` is the flat
    scaled regular/irregular table of the shift vector at `table_order`.
    """
    nt, ns = ncoeffs(p_tgt), ncoeffs(p_src)
    gather = np.zeros((nt, ns), dtype=np.int64)
    sign = np.zeros((nt, ns))
    if kind == "m2m":
        table_order, table_kind = p_tgt, "regular"
        for n in range(p_tgt + 1):
            for m in range(-n, n + 1):
                j = nm_index(n, m)
                for nu in range(min(n, p_src) + 1):
                    dn = n - nu
                    for mu in range(-nu, nu + 1):
                        if abs(mu - m) > dn:
                            continue
                        i = nm_index(nu, mu)
                        gather[j, i] = nm_index(dn, mu - m)
                        sign[j, i] = (-1.0) ** dn * _eps(mu, m - mu)
    elif kind == "l2l":
        table_order, table_kind = p_src, "regular"
        for k in range(p_tgt + 1):
            for mp in range(-k, k + 1):
                j = nm_index(k, mp)
                for nu in range(k, p_src + 1):
                    dn = nu - k
                    for mu in range(-nu, nu + 1):
                        if abs(mu - mp) > dn:
                            continue
                        i = nm_index(nu, mu)
                        gather[j, i] = nm_index(dn, mu - mp)
                        sign[j, i] = _eps(mp, mu - mp)
    elif kind == "m2l":
        table_order, table_kind = p_src + p_tgt, "irregular"
        for k in range(p_tgt + 1):
            for mp in range(-k, k + 1):
                j = nm_index(k, mp)
                for nu in range(p_src + 1):
                    for mu in range(-nu, nu + 1):
                        i = nm_index(nu, mu)
                        gather[j, i] = nm_index(nu + k, mu - mp)
                        sign[j, i] = (-1.0) ** k * _eps(mu, -mp)
    else:
        raise ValueError(f"unknown translation kind: {kind}")
    return table_order, table_kind, gather, sign


@lru_cache(maxsize=64)
def grad_maps(p: int, table_kind: str):
    """Index/sign maps expressing d/dx, d/dy, d/dz of scaled solid harmonics.

    For entry (n, m) of a p-table, the derivative is a +-1/half-weighted
    combination of entries of the same table (regular, order shifts down;
    needs order p) or of a (p+1)-table (irregular, order shifts up).
    Returns (idx_z, s_z, idx_p, s_p, idx_m, s_m): contributions of the
    D_z, D_+ = dx+i*dy and D_- = dx-i*dy ladders; invalid entries carry
    sign 0 and index 0.  dx = (D_+ + D_-)/2, dy = -i (D_+ - D_-)/2.
    """
    nc = ncoeffs(p)
    idx_z = np.zeros(nc, dtype=np.int64)
    s_z = np.zeros(nc)
    idx_p = np.zeros(nc, dtype=np.int64)
    s_p = np.zeros(nc)
    idx_m = np.zeros(nc, dtype=np.int64)
    s_m = np.zeros(nc)
    for n in range(p + 1):
        for m in range(-n, n + 1):
            j = nm_index(n, m)
            if table_kind == "regular":
                if abs(m) <= n - 1:
                    idx_z[j], s_z[j] = nm_index(n - 1, m), 1.0
                if abs(m + 1) <= n - 1:
                    idx_p[j], s_p[j] = nm_index(n - 1, m + 1), (-1.0 if m >= 0 else 1.0)
                if abs(m - 1) <= n - 1:
                    idx_m[j], s_m[j] = nm_index(n - 1, m - 1), (-1.0 if m <= 0 else 1.0)
            else:
                idx_z[j], s_z[j] = nm_index(n + 1, m), -1.0
                idx_p[j], s_p[j] = nm_index(n + 1, m + 1), (-1.0 if m >= 0 else 1.0)
                idx_m[j], s_m[j] = nm_index(n + 1, m - 1), (-1.0 if m <= 0 else 1.0)
    return idx_z, s_z, idx_p, s_p, idx_m, s_m
