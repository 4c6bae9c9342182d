"""Pure-NumPy backend: vectorized implementations of the hot kernels.

Semantically identical to the compiled backend in ``gigaqbx._core``; used
as the import-time fallback and as the comparison side of the backend
benchmark.  All public functions operate on float64/complex128 arrays and
follow the coefficient conventions documented in ``common``.
"""

from __future__ import annotations

import numpy as np

from . import common
from .common import VARIANT_D, VARIANT_S, VARIANT_SPRIME

BACKEND_NAME = "python"

_FOUR_PI = 4.0 * np.pi


# ------------------------------------------------------------------
# scaled solid harmonic tables, vectorized over points
# ------------------------------------------------------------------

def regular_tables(p: int, v: np.ndarray) -> np.ndarray:
    """Rt_n^m(v_i) for all n <= p; v has shape (N, 3); result (N, (p+1)^2)."""
    v = np.atleast_2d(v)
    N = v.shape[0]
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    r2 = x * x + y * y + z * z
    xy = x + 1j * y
    T = np.zeros((N, common.ncoeffs(p)), dtype=np.complex128)
    T[:, common.nm_index(0, 0)] = 1.0
    for m in range(1, p + 1):
        T[:, common.nm_index(m, m)] = T[:, common.nm_index(m - 1, m - 1)] * xy / (2 * m)
    for m in range(0, p):
        T[:, common.nm_index(m + 1, m)] = z * T[:, common.nm_index(m, m)]
    for m in range(0, p + 1):
        for n in range(m + 2, p + 1):
            T[:, common.nm_index(n, m)] = (
                (2 * n - 1) * z * T[:, common.nm_index(n - 1, m)]
                - r2 * T[:, common.nm_index(n - 2, m)]
            ) / ((n - m) * (n + m))
    for m in range(1, p + 1):
        for n in range(m, p + 1):
            T[:, common.nm_index(n, -m)] = np.conj(T[:, common.nm_index(n, m)])
    return T


def irregular_tables(p: int, v: np.ndarray) -> np.ndarray:
    """It_n^m(v_i) for all n <= p; singular if any |v_i| = 0."""
    v = np.atleast_2d(v)
    N = v.shape[0]
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    r2 = x * x + y * y + z * z
    if np.any(r2 == 0.0):
        raise ZeroDivisionError("irregular solid harmonic at zero radius")
    inv_r2 = 1.0 / r2
    xy = x + 1j * y
    T = np.zeros((N, common.ncoeffs(p)), dtype=np.complex128)
    T[:, common.nm_index(0, 0)] = np.sqrt(inv_r2)
    for m in range(1, p + 1):
        T[:, common.nm_index(m, m)] = (
            (2 * m - 1) * xy * T[:, common.nm_index(m - 1, m - 1)] * inv_r2
        )
    for m in range(0, p):
        T[:, common.nm_index(m + 1, m)] = (2 * m + 1) * z * T[:, common.nm_index(m, m)] * inv_r2
    for m in range(0, p + 1):
        for n in range(m + 2, p + 1):
            T[:, common.nm_index(n, m)] = (
                (2 * n - 1) * z * T[:, common.nm_index(n - 1, m)]
                - (n + m - 1) * (n - m - 1) * T[:, common.nm_index(n - 2, m)]
            ) * inv_r2
    for m in range(1, p + 1):
        for n in range(m, p + 1):
            T[:, common.nm_index(n, -m)] = np.conj(T[:, common.nm_index(n, m)])
    return T


def _directional_deriv_tables(tables: np.ndarray, p: int, kind: str,
                              normals: np.ndarray) -> np.ndarray:
    """nu . grad of every table entry; ``tables`` must have order p (regular)
    or p+1 (irregular) and the result is indexed for order p."""
    idx_z, s_z, idx_p, s_p, idx_m, s_m = common.grad_maps(p, kind)
    nx = normals[:, 0:1]
    ny = normals[:, 1:2]
    nz = normals[:, 2:3]
    Dz = tables[:, idx_z] * s_z
    Dp = tables[:, idx_p] * s_p
    Dm = tables[:, idx_m] * s_m
    if kind == "regular":
        nc = common.ncoeffs(p)
        Dz, Dp, Dm = Dz[:, :nc], Dp[:, :nc], Dm[:, :nc]
    return nz * Dz + 0.5 * (nx - 1j * ny) * Dp + 0.5 * (nx + 1j * ny) * Dm


# ------------------------------------------------------------------
# point-to-point kernels
# ------------------------------------------------------------------

def _p2p_common(sources, targets):
    d = targets[:, None, :] - sources[None, :, :]      # (M, N, 3)
    r2 = np.einsum("mni,mni->mn", d, d)
    if np.any(r2 == 0.0):
        m, n = np.argwhere(r2 == 0.0)[0]
        raise ValueError(f"singular source/target pair: target {m}, source {n}")
    r = np.sqrt(r2)
    return d, r


def laplace_p2p(variant, sources, weights, snormals, targets, tnormals):
    M = targets.shape[0]
    if sources.shape[0] == 0:
        return np.zeros(M, dtype=np.complex128)
    d, r = _p2p_common(sources, targets)
    if variant == VARIANT_S:
        ker = 1.0 / (_FOUR_PI * r)
    elif variant == VARIANT_SPRIME:
        # nu(t) . grad_t (1/4pi r) = -nu(t).(t-s) / (4 pi r^3)
        num = np.einsum("mni,mi->mn", d, tnormals)
        ker = -num / (_FOUR_PI * r**3)
    elif variant == VARIANT_D:
        # nu(s) . grad_s (1/4pi r) = +nu(s).(t-s) / (4 pi r^3)
        num = np.einsum("mni,ni->mn", d, snormals)
        ker = num / (_FOUR_PI * r**3)
    else:
        raise ValueError(f"bad variant {variant}")
    return ker.astype(np.complex128) @ weights


def helmholtz_p2p(variant, k, sources, weights, snormals, targets, tnormals):
    M = targets.shape[0]
    if sources.shape[0] == 0:
        return np.zeros(M, dtype=np.complex128)
    d, r = _p2p_common(sources, targets)
    phase = np.exp(1j * k * r)
    if variant == VARIANT_S:
        ker = phase / (_FOUR_PI * r)
    else:
        # grad_t G_k = (t-s)/r * (ik - 1/r) * G_k;  grad_s = -grad_t
        radial = phase * (1j * k * r - 1.0) / (_FOUR_PI * r**3)
        if variant == VARIANT_SPRIME:
            num = np.einsum("mni,mi->mn", d, tnormals)
            ker = num * radial
        elif variant == VARIANT_D:
            num = np.einsum("mni,ni->mn", d, snormals)
            ker = -num * radial
        else:
            raise ValueError(f"bad variant {variant}")
    return ker @ weights


# ------------------------------------------------------------------
# target-specific expansions (Legendre recurrence per source batch)
# ------------------------------------------------------------------

def _legendre_batch(p, x, want_deriv):
    """P_n(x_i) and optionally P'_n(x_i) for n <= p; x shape (N,)."""
    N = x.shape[0]
    P = np.empty((p + 1, N))
    P[0] = 1.0
    if p >= 1:
        P[1] = x
    for n in range(1, p):
        P[n + 1] = ((2 * n + 1) * x * P[n] - n * P[n - 1]) / (n + 1)
    if not want_deriv:
        return P, None
    D = np.empty((p + 1, N))
    D[0] = 0.0
    if p >= 1:
        D[1] = 1.0
    for n in range(1, p):
        D[n + 1] = D[n - 1] + (2 * n + 1) * P[n]
    return P, D


def ts_accum_laplace(variant, p, sources, weights, snormals, center, target, tnormal):
    if sources.shape[0] == 0:
        return 0.0 + 0.0j
    tc = target - center
    r = float(np.linalg.norm(tc))
    sc = sources - center
    R = np.linalg.norm(sc, axis=1)
    s_hat = sc / R[:, None]
    if r == 0.0:
        t_hat = s_hat          # every surviving term is direction-independent
        cos_g = np.ones_like(R)
    else:
        t_hat = np.broadcast_to(tc / r, s_hat.shape)
        cos_g = np.clip(s_hat @ (tc / r), -1.0, 1.0)

    rho = r / R                                   # (N,)
    P, D = _legendre_batch(p, cos_g, variant != VARIANT_S)

    if variant == VARIANT_S:
        # 1/(4pi) sum_n r^n / R^{n+1} P_n
        acc = np.zeros_like(R)
        radial = 1.0 / R
        for n in range(p + 1):
            acc += radial * P[n]
            radial *= rho
        return complex((acc / _FOUR_PI) @ weights)

    if variant == VARIANT_SPRIME:
        nt_dot_that = t_hat @ tnormal
        nt_dot_shat = s_hat @ tnormal
        acc = np.zeros_like(R)
        radial = 1.0 / (R * R)                    # r^{n-1}/R^{n+1} at n=1
        for n in range(1, p + 1):
            ang = n * nt_dot_that * P[n] + (nt_dot_shat - nt_dot_that * cos_g) * D[n]
            acc += radial * ang
            radial *= rho
        return complex((acc / _FOUR_PI) @ weights)

    if variant == VARIANT_D:
        ns_dot_shat = np.einsum("ni,ni->n", s_hat, snormals)
        ns_dot_that = np.einsum("ni,ni->n", t_hat, snormals)
        acc = np.zeros_like(R)
        radial = 1.0 / (R * R)                    # r^n/R^{n+2} at n=0
        for n in range(p + 1):
            ang = -(n + 1) * ns_dot_shat * P[n] + (ns_dot_that - ns_dot_shat * cos_g) * D[n]
            acc += radial * ang
            radial *= rho
        return complex((acc / _FOUR_PI) @ weights)

    raise ValueError(f"bad variant {variant}")


def _sph_jh_batch(p, x):
    """j_n(x_i), h_n(x_i) and derivatives for n <= p, vectorized over x > 0."""
    x = np.asarray(x, dtype=np.float64)
    N = x.shape[0]
    nstart = p + 16 + int(np.ceil(np.max(x, initial=0.0)))
    f = np.zeros((nstart + 2, N))
    f[nstart + 1] = 0.0
    f[nstart] = 1e-290
    for n in range(nstart, 0, -1):
        f[n - 1] = (2 * n + 1) / x * f[n] - f[n + 1]
        big = np.abs(f[n - 1]) > 1e250
        if np.any(big):
            f[:, big] *= 1e-250
    j0 = np.sin(x) / x
    scale = j0 / np.where(f[0] == 0.0, 1.0, f[0])
    j = f[: p + 2] * scale
    h = np.empty((p + 2, N), dtype=np.complex128)
    h[0] = -1j * np.exp(1j * x) / x
    if p + 1 >= 1:
        h[1] = h[0] * (1.0 / x - 1j)
    for n in range(1, p + 1):
        h[n + 1] = (2 * n + 1) / x * h[n] - h[n - 1]
    jp = np.empty((p + 1, N))
    hp = np.empty((p + 1, N), dtype=np.complex128)
    jp[0] = -j[1]
    hp[0] = -h[1]
    for n in range(1, p + 1):
        jp[n] = j[n - 1] - (n + 1) / x * j[n]
        hp[n] = h[n - 1] - (n + 1) / x * h[n]
    return j[: p + 1], jp, h[: p + 1], hp


def _jn_over_xn(p, x_scalar):
    """q_n = j_n(x)/x^n (finite at x = 0) plus q'_n, for scalar x >= 0."""
    if x_scalar == 0.0:
        q = np.empty(p + 1)
        dfact = 1.0
        for n in range(p + 1):
            dfact *= (2 * n + 1)
            q[n] = 1.0 / dfact
        return q, np.zeros(p + 1)
    xa = np.array([x_scalar])
    j, jp, _, _ = _sph_jh_batch(p, xa)
    xn = x_scalar ** np.arange(p + 1)
    q = j[:, 0] / xn
    qp = (jp[:, 0] - np.arange(p + 1) * j[:, 0] / x_scalar) / xn
    return q, qp


def ts_accum_helmholtz(variant, k, p, sources, weights, snormals, center, target, tnormal):
    if sources.shape[0] == 0:
        return 0.0 + 0.0j
    tc = target - center
    r = float(np.linalg.norm(tc))
    sc = sources - center
    R = np.linalg.norm(sc, axis=1)
    s_hat = sc / R[:, None]
    if r == 0.0:
        t_hat = s_hat
        cos_g = np.ones_like(R)
    else:
        t_hat = np.broadcast_to(tc / r, s_hat.shape)
        cos_g = np.clip(s_hat @ (tc / r), -1.0, 1.0)

    P, D = _legendre_batch(p, cos_g, variant != VARIANT_S)
    h, hp = _sph_jh_batch(p, k * R)[2:4]
    pref = 1j * k / _FOUR_PI
    two_np1 = (2 * np.arange(p + 1) + 1.0)[:, None]

    if variant == VARIANT_S:
        jt = _sph_jh_batch(p, np.array([k * r]))[0][:, 0] if r > 0.0 else \
            np.array([1.0] + [0.0] * p)
        acc = (two_np1 * jt[:, None] * h * P).sum(axis=0)
        return complex(pref * (acc @ weights))

    if variant == VARIANT_SPRIME:
        if r > 0.0:
            xa = np.array([k * r])
            jt, jtp = (a[:, 0] for a in _sph_jh_batch(p, xa)[:2])
        else:
            jt = np.array([1.0] + [0.0] * p)
            jtp = np.zeros(p + 1)
            if p >= 1:
                jtp[1] = 1.0 / 3.0
        nt_dot_that = t_hat @ tnormal
        nt_dot_shat = s_hat @ tnormal
        # (2n+1) h_n(kR)/r [ k (t-c) j'_n(kr) P_n + (shat - that cos g) j_n(kr) P'_n ]
        term1 = k * nt_dot_that[None, :] * jtp[:, None] * P
        ang = (nt_dot_shat - nt_dot_that * cos_g)[None, :] * jt[:, None] * D
        if r > 0.0:
            acc = (two_np1 * h * (term1 + ang / r)).sum(axis=0)
        else:
            # ang vanishes identically at r=0 for n=0 (P'_0=0) and carries
            # j_n(0)=0 for n>=1; with the that:=shat convention it is 0
            acc = (two_np1 * h * term1).sum(axis=0)
        return complex(pref * (acc @ weights))

    if variant == VARIANT_D:
        jt = _sph_jh_batch(p, np.array([k * r]))[0][:, 0] if r > 0.0 else \
            np.array([1.0] + [0.0] * p)
        ns_dot_shat = np.einsum("ni,ni->n", s_hat, snormals)
        ns_dot_that = np.einsum("ni,ni->n", t_hat, snormals)
        term1 = k * ns_dot_shat[None, :] * hp * P
        term2 = ((ns_dot_that - ns_dot_shat * cos_g)[None, :] / R[None, :]) * h * D
        acc = (two_np1 * jt[:, None] * (term1 + term2)).sum(axis=0)
        return complex(pref * (acc @ weights))

    raise ValueError(f"bad variant {variant}")


# ------------------------------------------------------------------
# expansion formation / evaluation / translation (Laplace)
# ------------------------------------------------------------------

def p2m(p, sources, weights, snormals, center):
    nc = common.ncoeffs(p)
    if sources.shape[0] == 0:
        return np.zeros(nc, dtype=np.complex128)
    v = sources - center
    T = regular_tables(p, v)
    if snormals is not None:
        T = _directional_deriv_tables(T, p, "regular", snormals)
    flip = common.mflip_perm(p)
    coeffs = weights @ T[:, flip]
    return coeffs * (common.alpha_vec(p) * common.inv_2np1_vec(p))


def p2l(p, sources, weights, snormals, center):
    nc = common.ncoeffs(p)
    if sources.shape[0] == 0:
        return np.zeros(nc, dtype=np.complex128)
    v = sources - center
    order = p + 1 if snormals is not None else p
    T = irregular_tables(order, v)
    if snormals is not None:
        T = _directional_deriv_tables(T, p, "irregular", snormals)
    else:
        T = T[:, :nc]
    flip = common.mflip_perm(p)
    coeffs = weights @ T[:, flip]
    return coeffs * (common.beta_vec(p) * common.inv_2np1_vec(p))


def eval_local(p, coeffs, center, targets, tnormals, deriv):
    targets = np.atleast_2d(targets)
    v = targets - center
    T = regular_tables(p, v)
    if deriv:
        T = _directional_deriv_tables(T, p, "regular", np.atleast_2d(tnormals))
    return T @ (coeffs * common.alpha_vec(p))


def eval_multipole(p, coeffs, center, targets, tnormals, deriv):
    targets = np.atleast_2d(targets)
    v = targets - center
    if deriv:
        T = irregular_tables(p + 1, v)
        T = _directional_deriv_tables(T, p, "irregular", np.atleast_2d(tnormals))
    else:
        T = irregular_tables(p, v)
    return T @ (coeffs * common.beta_vec(p))


def _apply_plan(kind, p_src, p_tgt, coeffs_scaled, d):
    table_order, table_kind, gather, sign = common.translation_plan(kind, p_src, p_tgt)
    if table_kind == "regular":
        table = regular_tables(table_order, d[None, :])[0]
    else:
        table = irregular_tables(table_order, d[None, :])[0]
    W = sign * table[gather]
    return W @ coeffs_scaled


def m2m(p_src, p_tgt, coeffs, d):
    scaled = coeffs * common.beta_vec(p_src)
    out = _apply_plan("m2m", p_src, p_tgt, scaled, d)
    return out / common.beta_vec(p_tgt)


def m2l(p_src, p_tgt, coeffs, d):
    scaled = coeffs * common.beta_vec(p_src)
    out = _apply_plan("m2l", p_src, p_tgt, scaled, d)
    return out / common.alpha_vec(p_tgt)


def l2l(p_src, p_tgt, coeffs, d):
    scaled = coeffs * common.alpha_vec(p_src)
    out = _apply_plan("l2l", p_src, p_tgt, scaled, d)
    return out / common.alpha_vec(p_tgt)


# ------------------------------------------------------------------
# Helmholtz local expansions (Bessel radial form)
# ------------------------------------------------------------------

def hh_p2l(k, p, sources, weights, snormals, center):
    """L_n^m = ik sum_j w_j h_n(k R_j) Y_n^{-m}(s_j - c)."""
    nc = common.ncoeffs(p)
    if sources.shape[0] == 0:
        return np.zeros(nc, dtype=np.complex128)
    v = sources - center
    R = np.linalg.norm(v, axis=1)
    h, hp = _sph_jh_batch(p, k * R)[2:4]
    n_of = common.n_of_index(p)
    Rn = R[:, None] ** n_of[None, :]
    T = regular_tables(p, v)          # Y_n^m(v) = alpha * Rt / R^n
    if snormals is None:
        rad = h[n_of, :].T            # (N, nc)
        coeffs = weights @ (rad * T / Rn)
    else:
        # nu . grad_s [ h_n(kR) Y_n^{-m}; via g(R) Rt_n^m with g = h_n/R^n ]
        g = h[n_of, :].T / Rn
        gp = (k * hp[n_of, :].T - n_of[None, :] * h[n_of, :].T / R[:, None]) / Rn
        nu_dot_rhat = np.einsum("ni,ni->n", snormals, v / R[:, None])
        gradT = _directional_deriv_tables(T, p, "regular", snormals)
        coeffs = weights @ (gp * nu_dot_rhat[:, None] * T + g * gradT)
    flip = common.mflip_perm(p)
    return 1j * k * coeffs[flip] * common.alpha_vec(p)


def hh_eval_local(k, p, coeffs, center, targets, tnormals, deriv):
    """Evaluate sum L_n^m j_n(k r) Y_n^m(t - c), optionally nu(t).grad."""
    targets = np.atleast_2d(targets)
    v = targets - center
    r = np.linalg.norm(v, axis=1)
    n_of = common.n_of_index(p)
    scaled = coeffs * common.alpha_vec(p)
    out = np.empty(targets.shape[0], dtype=np.complex128)
    for i in range(targets.shape[0]):       # q_n needs per-point special-casing at r=0
        q, qp = _jn_over_xn(p, k * r[i])
        q = q[n_of] * (k ** n_of)           # j_n(kr)/r^n
        qp = qp[n_of] * (k ** (n_of + 1))   # d/dr of the above
        T = regular_tables(p, v[i][None, :])[0]
        if not deriv:
            out[i] = np.sum(scaled * q * T)
        else:
            nu = np.atleast_2d(tnormals)[i]
            gradT = _directional_deriv_tables(T[None, :], p, "regular", nu[None, :])[0]
            if r[i] == 0.0:
                out[i] = np.sum(scaled * q * gradT)
            else:
                nu_dot_rhat = float(nu @ (v[i] / r[i]))
                out[i] = np.sum(scaled * (qp * nu_dot_rhat * T + q * gradT))
    return out
