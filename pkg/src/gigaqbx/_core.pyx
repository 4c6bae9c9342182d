# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend: hot kernels for direct sums, target-specific
accumulation, expansion formation/evaluation, and translations.

Mirrors gigaqbx._backend._ref semantically; the Python wrapper in
gigaqbx._backend.compiled supplies scale vectors and translation plans
from gigaqbx._backend.common so both backends share one set of
conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, cos, sin, sqrt

cnp.import_array()

cdef double FOUR_PI = 4.0 * 3.14159265358979323846264338327950288


cdef inline int nm_index(int n, int m) nogil:
    return n * n + n + m


# ------------------------------------------------------------------
# scaled solid harmonic tables (single point)
# ------------------------------------------------------------------

cdef void _reg_table(int P, double x, double y, double z,
                     double complex* T) nogil:
    cdef double r2 = x * x + y * y + z * z
    cdef double complex xy = x + 1j * y
    cdef int n, m
    T[0] = 1.0
    for m in range(1, P + 1):
        T[nm_index(m, m)] = T[nm_index(m - 1, m - 1)] * xy / (2.0 * m)
    for m in range(0, P):
        T[nm_index(m + 1, m)] = z * T[nm_index(m, m)]
    for m in range(0, P + 1):
        for n in range(m + 2, P + 1):
            T[nm_index(n, m)] = ((2 * n - 1) * z * T[nm_index(n - 1, m)]
                                 - r2 * T[nm_index(n - 2, m)]) \
                / ((<double>(n - m)) * (n + m))
    for m in range(1, P + 1):
        for n in range(m, P + 1):
            T[nm_index(n, -m)] = T[nm_index(n, m)].conjugate()


cdef void _irr_table(int P, double x, double y, double z,
                     double complex* T) nogil:
    cdef double r2 = x * x + y * y + z * z
    cdef double inv_r2 = 1.0 / r2
    cdef double complex xy = x + 1j * y
    cdef int n, m
    T[0] = sqrt(inv_r2)
    for m in range(1, P + 1):
        T[nm_index(m, m)] = (2.0 * m - 1.0) * xy * T[nm_index(m - 1, m - 1)] * inv_r2
    for m in range(0, P):
        T[nm_index(m + 1, m)] = (2.0 * m + 1.0) * z * T[nm_index(m, m)] * inv_r2
    for m in range(0, P + 1):
        for n in range(m + 2, P + 1):
            T[nm_index(n, m)] = ((2 * n - 1) * z * T[nm_index(n - 1, m)]
                                 - (<double>(n + m - 1)) * (n - m - 1)
                                 * T[nm_index(n - 2, m)]) * inv_r2
    for m in range(1, P + 1):
        for n in range(m, P + 1):
            T[nm_index(n, -m)] = T[nm_index(n, m)].conjugate()


cdef inline double complex _dir_deriv_entry(double complex* T, int n, int m,
                                            int regular, double nx, double ny,
                                            double nz) nogil:
    """nu . grad of scaled solid harmonic entry (n, m); for regular tables
    order shifts down (same table), for irregular up (table order >= n+1)."""
    cdef double complex dz = 0.0, dp = 0.0, dm = 0.0
    if regular:
        if (m if m >= 0 else -m) <= n - 1:
            dz = T[nm_index(n - 1, m)]
        if (m + 1 if m + 1 >= 0 else -m - 1) <= n - 1:
            dp = (-1.0 if m >= 0 else 1.0) * T[nm_index(n - 1, m + 1)]
        if (m - 1 if m - 1 >= 0 else 1 - m) <= n - 1:
            dm = (-1.0 if m <= 0 else 1.0) * T[nm_index(n - 1, m - 1)]
    else:
        dz = -T[nm_index(n + 1, m)]
        dp = (-1.0 if m >= 0 else 1.0) * T[nm_index(n + 1, m + 1)]
        dm = (-1.0 if m <= 0 else 1.0) * T[nm_index(n + 1, m - 1)]
    return nz * dz + 0.5 * (nx - 1j * ny) * dp + 0.5 * (nx + 1j * ny) * dm


# ------------------------------------------------------------------
# point-to-point
# ------------------------------------------------------------------

def laplace_p2p(int variant, double[:, ::1] sources, double complex[::1] weights,
                snormals, double[:, ::1] targets, tnormals):
    cdef Py_ssize_t M = targets.shape[0], N = sources.shape[0]
    out_arr = np.zeros(M, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    if N == 0:
        return out_arr
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef double[:, ::1] tn = tnormals if tnormals is not None else None
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, r, dot
    cdef double complex acc
    for i in range(M):
        acc = 0.0
        for j in range(N):
            dx = targets[i, 0] - sources[j, 0]
            dy = targets[i, 1] - sources[j, 1]
            dz = targets[i, 2] - sources[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                raise ValueError(
                    f"singular source/target pair: target {i}, source {j}")
            r = sqrt(r2)
            if variant == 0:
                acc = acc + weights[j] / (FOUR_PI * r)
            elif variant == 1:
                dot = tn[i, 0] * dx + tn[i, 1] * dy + tn[i, 2] * dz
                acc = acc - weights[j] * dot / (FOUR_PI * r2 * r)
            else:
                dot = sn[j, 0] * dx + sn[j, 1] * dy + sn[j, 2] * dz
                acc = acc + weights[j] * dot / (FOUR_PI * r2 * r)
        out[i] = acc
    return out_arr


def helmholtz_p2p(int variant, double k, double[:, ::1] sources,
                  double complex[::1] weights, snormals,
                  double[:, ::1] targets, tnormals):
    cdef Py_ssize_t M = targets.shape[0], N = sources.shape[0]
    out_arr = np.zeros(M, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    if N == 0:
        return out_arr
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef double[:, ::1] tn = tnormals if tnormals is not None else None
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, r, dot
    cdef double complex acc, phase, radial
    for i in range(M):
        acc = 0.0
        for j in range(N):
            dx = targets[i, 0] - sources[j, 0]
            dy = targets[i, 1] - sources[j, 1]
            dz = targets[i, 2] - sources[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                raise ValueError(
                    f"singular source/target pair: target {i}, source {j}")
            r = sqrt(r2)
            phase = cos(k * r) + 1j * sin(k * r)
            if variant == 0:
                acc = acc + weights[j] * phase / (FOUR_PI * r)
            else:
                radial = phase * (1j * k * r - 1.0) / (FOUR_PI * r2 * r)
                if variant == 1:
                    dot = tn[i, 0] * dx + tn[i, 1] * dy + tn[i, 2] * dz
                    acc = acc + weights[j] * dot * radial
                else:
                    dot = sn[j, 0] * dx + sn[j, 1] * dy + sn[j, 2] * dz
                    acc = acc - weights[j] * dot * radial
        out[i] = acc
    return out_arr


# ------------------------------------------------------------------
# spherical Bessel/Hankel recurrences (scalar argument)
# ------------------------------------------------------------------

cdef void _sph_jh(int p, double x, double* j, double* jp,
                  double complex* h, double complex* hp,
                  double* fbuf, int nbuf) nogil:
    """j_0..j_{p+1}, h_0..h_{p+1} and derivatives j'_0..j'_p, h'_0..h'_p.
    fbuf has room for nbuf >= p + 18 + ceil(x) entries."""
    cdef int nstart = nbuf - 2
    cdef int n, nn
    cdef double scale
    fbuf[nstart + 1] = 0.0
    fbuf[nstart] = 1e-290
    for n in range(nstart, 0, -1):
        fbuf[n - 1] = (2.0 * n + 1.0) / x * fbuf[n] - fbuf[n + 1]
        if fbuf[n - 1] > 1e250 or fbuf[n - 1] < -1e250:
            for nn in range(n - 1, nstart + 2):
                fbuf[nn] *= 1e-250
    scale = (sin(x) / x) / fbuf[0]
    for n in range(p + 2):
        j[n] = fbuf[n] * scale
    h[0] = (sin(x) - 1j * cos(x)) / x
    h[1] = h[0] * (1.0 / x - 1j)
    for n in range(1, p + 1):
        h[n + 1] = (2.0 * n + 1.0) / x * h[n] - h[n - 1]
    jp[0] = -j[1]
    hp[0] = -h[1]
    for n in range(1, p + 1):
        jp[n] = j[n - 1] - (n + 1.0) / x * j[n]
        hp[n] = h[n - 1] - (n + 1.0) / x * h[n]


# ------------------------------------------------------------------
# target-specific accumulation
# ------------------------------------------------------------------

def ts_accum_laplace(int variant, int p, double[:, ::1] sources,
                     double complex[::1] weights, snormals,
                     double[::1] center, double[::1] target, tnormal):
    cdef Py_ssize_t N = sources.shape[0]
    if N == 0:
        return 0.0 + 0.0j
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef double[::1] tnv = tnormal if tnormal is not None else None
    cdef double tcx = target[0] - center[0]
    cdef double tcy = target[1] - center[1]
    cdef double tcz = target[2] - center[2]
    cdef double r = sqrt(tcx * tcx + tcy * tcy + tcz * tcz)
    cdef double thx = 0.0, thy = 0.0, thz = 0.0
    if r > 0.0:
        thx, thy, thz = tcx / r, tcy / r, tcz / r
    cdef double ntx = 0.0, nty = 0.0, ntz = 0.0
    if tnv is not None:
        ntx, nty, ntz = tnv[0], tnv[1], tnv[2]

    cdef double complex acc = 0.0
    cdef Py_ssize_t jsrc
    cdef double scx, scy, scz, R, shx, shy, shz, cg, rho, radial
    cdef double pm1, pcur, pnext, dm1, dcur, dnext, s, nt_th, nt_sh, ns_sh, ns_th
    cdef int n
    for jsrc in range(N):
        scx = sources[jsrc, 0] - center[0]
        scy = sources[jsrc, 1] - center[1]
        scz = sources[jsrc, 2] - center[2]
        R = sqrt(scx * scx + scy * scy + scz * scz)
        shx, shy, shz = scx / R, scy / R, scz / R
        if r > 0.0:
            cg = shx * thx + shy * thy + shz * thz
            if cg > 1.0:
                cg = 1.0
            elif cg < -1.0:
                cg = -1.0
        else:
            cg = 1.0
        rho = r / R
        if variant == 0:
            # sum r^n/R^{n+1} P_n
            radial = 1.0 / R
            pm1 = 1.0
            pcur = cg
            s = radial * 1.0
            if p >= 1:
                radial *= rho
                s += radial * pcur
            for n in range(1, p):
                pnext = ((2 * n + 1) * cg * pcur - n * pm1) / (n + 1.0)
                pm1 = pcur
                pcur = pnext
                radial *= rho
                s += radial * pcur
            acc = acc + weights[jsrc] * s / FOUR_PI
        elif variant == 1:
            if r > 0.0:
                nt_th = ntx * thx + nty * thy + ntz * thz
            else:
                nt_th = ntx * shx + nty * shy + ntz * shz
            nt_sh = ntx * shx + nty * shy + ntz * shz
            radial = 1.0 / (R * R)
            pm1 = 1.0
            pcur = cg
            dm1 = 0.0
            dcur = 1.0
            s = 0.0
            for n in range(1, p + 1):
                s += radial * (n * nt_th * pcur + (nt_sh - nt_th * cg) * dcur)
                if n < p:
                    pnext = ((2 * n + 1) * cg * pcur - n * pm1) / (n + 1.0)
                    dnext = dm1 + (2 * n + 1) * pcur
                    pm1 = pcur
                    pcur = pnext
                    dm1 = dcur
                    dcur = dnext
                    radial *= rho
            acc = acc + weights[jsrc] * s / FOUR_PI
        else:
            ns_sh = sn[jsrc, 0] * shx + sn[jsrc, 1] * shy + sn[jsrc, 2] * shz
            if r > 0.0:
                ns_th = sn[jsrc, 0] * thx + sn[jsrc, 1] * thy + sn[jsrc, 2] * thz
            else:
                ns_th = ns_sh
            radial = 1.0 / (R * R)
            pm1 = 1.0
            pcur = cg
            dm1 = 0.0
            dcur = 1.0
            s = radial * (-1.0 * ns_sh)          # n = 0 term, P'_0 = 0
            for n in range(1, p + 1):
                radial *= rho
                s += radial * (-(n + 1.0) * ns_sh * pcur
                               + (ns_th - ns_sh * cg) * dcur)
                if n < p:
                    pnext = ((2 * n + 1) * cg * pcur - n * pm1) / (n + 1.0)
                    dnext = dm1 + (2 * n + 1) * pcur
                    pm1 = pcur
                    pcur = pnext
                    dm1 = dcur
                    dcur = dnext
            acc = acc + weights[jsrc] * s / FOUR_PI
    return complex(acc)


def ts_accum_helmholtz(int variant, double k, int p, double[:, ::1] sources,
                       double complex[::1] weights, snormals,
                       double[::1] center, double[::1] target, tnormal):
    cdef Py_ssize_t N = sources.shape[0]
    if N == 0:
        return 0.0 + 0.0j
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef double[::1] tnv = tnormal if tnormal is not None else None
    cdef double tcx = target[0] - center[0]
    cdef double tcy = target[1] - center[1]
    cdef double tcz = target[2] - center[2]
    cdef double r = sqrt(tcx * tcx + tcy * tcy + tcz * tcz)
    cdef double thx = 0.0, thy = 0.0, thz = 0.0
    if r > 0.0:
        thx, thy, thz = tcx / r, tcy / r, tcz / r
    cdef double ntx = 0.0, nty = 0.0, ntz = 0.0
    if tnv is not None:
        ntx, nty, ntz = tnv[0], tnv[1], tnv[2]

    # target-side Bessel values once per call; per-source buffers reused
    cdef double Rmax = 0.0, Rj
    cdef Py_ssize_t jsrc
    for jsrc in range(N):
        Rj = sqrt((sources[jsrc, 0] - center[0]) ** 2
                  + (sources[jsrc, 1] - center[1]) ** 2
                  + (sources[jsrc, 2] - center[2]) ** 2)
        if Rj > Rmax:
            Rmax = Rj
    cdef int nbuf = p + 18 + <int>ceil(k * (Rmax if Rmax > r else r))
    fbuf_arr = np.zeros(nbuf)
    jt_arr = np.zeros(p + 2)
    jtp_arr = np.zeros(p + 1)
    js_arr = np.zeros(p + 2)
    jsp_arr = np.zeros(p + 1)
    hh_arr = np.zeros(p + 2, dtype=np.complex128)
    hhp_arr = np.zeros(p + 1, dtype=np.complex128)
    cdef double[::1] fbuf = fbuf_arr
    cdef double[::1] jt = jt_arr
    cdef double[::1] jtp = jtp_arr
    cdef double[::1] js = js_arr
    cdef double[::1] jsp = jsp_arr
    cdef double complex[::1] hh = hh_arr
    cdef double complex[::1] hhp = hhp_arr
    cdef int n
    if r > 0.0:
        _sph_jh(p, k * r, &jt[0], &jtp[0], &hh[0], &hhp[0], &fbuf[0], nbuf)
    else:
        jt[0] = 1.0
        if p >= 1:
            jtp[1] = 1.0 / 3.0

    cdef double complex acc = 0.0, s, pref = 1j * k / FOUR_PI
    cdef double scx, scy, scz, R, shx, shy, shz, cg
    cdef double pm1, pcur, pnext, dm1, dcur, dnext, nt_th, nt_sh, ns_sh, ns_th
    cdef double pn, dn
    for jsrc in range(N):
        scx = sources[jsrc, 0] - center[0]
        scy = sources[jsrc, 1] - center[1]
        scz = sources[jsrc, 2] - center[2]
        R = sqrt(scx * scx + scy * scy + scz * scz)
        shx, shy, shz = scx / R, scy / R, scz / R
        if r > 0.0:
            cg = shx * thx + shy * thy + shz * thz
            if cg > 1.0:
                cg = 1.0
            elif cg < -1.0:
                cg = -1.0
        else:
            cg = 1.0
        # h_n(kR) per source (js/jsp are scratch here)
        _sph_jh(p, k * R, &js[0], &jsp[0], &hh[0], &hhp[0], &fbuf[0],
                p + 18 + <int>ceil(k * R))
        s = 0.0
        pm1 = 1.0
        pcur = cg
        dm1 = 0.0
        dcur = 1.0
        for n in range(p + 1):
            pn = 1.0 if n == 0 else pcur
            dn = 0.0 if n == 0 else dcur
            if n >= 1 and n < p:
                pnext = ((2 * n + 1) * cg * pcur - n * pm1) / (n + 1.0)
                dnext = dm1 + (2 * n + 1) * pcur
                pm1 = pcur
                pcur = pnext
                dm1 = dcur
                dcur = dnext
            if variant == 0:
                s = s + (2 * n + 1.0) * jt[n] * hh[n] * pn
            elif variant == 1:
                if r > 0.0:
                    nt_th = ntx * thx + nty * thy + ntz * thz
                    nt_sh = ntx * shx + nty * shy + ntz * shz
                    s = s + (2 * n + 1.0) * hh[n] * (
                        k * nt_th * jtp[n] * pn
                        + (nt_sh - nt_th * cg) * jt[n] * dn / r)
                else:
                    nt_sh = ntx * shx + nty * shy + ntz * shz
                    s = s + (2 * n + 1.0) * hh[n] * k * nt_sh * jtp[n] * pn
            else:
                ns_sh = sn[jsrc, 0] * shx + sn[jsrc, 1] * shy + sn[jsrc, 2] * shz
                if r > 0.0:
                    ns_th = sn[jsrc, 0] * thx + sn[jsrc, 1] * thy + sn[jsrc, 2] * thz
                else:
                    ns_th = ns_sh
                s = s + (2 * n + 1.0) * jt[n] * (
                    k * ns_sh * hhp[n] * pn
                    + (ns_th - ns_sh * cg) * hh[n] * dn / R)
        acc = acc + weights[jsrc] * s
    return complex(pref * acc)


# ------------------------------------------------------------------
# expansion formation / evaluation
# ------------------------------------------------------------------

def p2m(int p, double[:, ::1] sources, double complex[::1] weights, snormals,
        double[::1] center, double[::1] scale, double complex[::1] work):
    """scale = alpha * inv(2n+1); work is a (p+1)^2 scratch table."""
    cdef int nc = (p + 1) * (p + 1)
    out_arr = np.zeros(nc, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef Py_ssize_t j, N = sources.shape[0]
    cdef int n, m
    cdef double complex wj, val
    for j in range(N):
        _reg_table(p, sources[j, 0] - center[0], sources[j, 1] - center[1],
                   sources[j, 2] - center[2], &work[0])
        wj = weights[j]
        if sn is None:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    out[nm_index(n, m)] = out[nm_index(n, m)] \
                        + wj * work[nm_index(n, -m)]
        else:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    val = _dir_deriv_entry(&work[0], n, -m, 1,
                                           sn[j, 0], sn[j, 1], sn[j, 2])
                    out[nm_index(n, m)] = out[nm_index(n, m)] + wj * val
    for n in range(nc):
        out[n] = out[n] * scale[n]
    return out_arr


def p2l(int p, double[:, ::1] sources, double complex[::1] weights, snormals,
        double[::1] center, double[::1] scale, double complex[::1] work):
    """scale = beta * inv(2n+1); work holds a (p+2)^2 scratch table."""
    cdef int nc = (p + 1) * (p + 1)
    out_arr = np.zeros(nc, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef int order = p + 1 if sn is not None else p
    cdef Py_ssize_t j, N = sources.shape[0]
    cdef int n, m
    cdef double complex wj, val
    for j in range(N):
        _irr_table(order, sources[j, 0] - center[0], sources[j, 1] - center[1],
                   sources[j, 2] - center[2], &work[0])
        wj = weights[j]
        if sn is None:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    out[nm_index(n, m)] = out[nm_index(n, m)] \
                        + wj * work[nm_index(n, -m)]
        else:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    val = _dir_deriv_entry(&work[0], n, -m, 0,
                                           sn[j, 0], sn[j, 1], sn[j, 2])
                    out[nm_index(n, m)] = out[nm_index(n, m)] + wj * val
    for n in range(nc):
        out[n] = out[n] * scale[n]
    return out_arr


def eval_local(int p, double complex[::1] coeffs, double[::1] center,
               double[:, ::1] targets, tnormals, bint deriv,
               double[::1] alpha, double complex[::1] work):
    cdef Py_ssize_t M = targets.shape[0]
    out_arr = np.zeros(M, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] tn = tnormals if tnormals is not None else None
    cdef Py_ssize_t i
    cdef int n, m
    cdef double complex acc
    for i in range(M):
        _reg_table(p, targets[i, 0] - center[0], targets[i, 1] - center[1],
                   targets[i, 2] - center[2], &work[0])
        acc = 0.0
        if not deriv:
            for n in range((p + 1) * (p + 1)):
                acc = acc + coeffs[n] * alpha[n] * work[n]
        else:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    acc = acc + coeffs[nm_index(n, m)] * alpha[nm_index(n, m)] \
                        * _dir_deriv_entry(&work[0], n, m, 1,
                                           tn[i, 0], tn[i, 1], tn[i, 2])
        out[i] = acc
    return out_arr


def eval_multipole(int p, double complex[::1] coeffs, double[::1] center,
                   double[:, ::1] targets, tnormals, bint deriv,
                   double[::1] beta, double complex[::1] work):
    cdef Py_ssize_t M = targets.shape[0]
    out_arr = np.zeros(M, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] tn = tnormals if tnormals is not None else None
    cdef int order = p + 1 if deriv else p
    cdef Py_ssize_t i
    cdef int n, m
    cdef double complex acc
    for i in range(M):
        _irr_table(order, targets[i, 0] - center[0], targets[i, 1] - center[1],
                   targets[i, 2] - center[2], &work[0])
        acc = 0.0
        if not deriv:
            for n in range((p + 1) * (p + 1)):
                acc = acc + coeffs[n] * beta[n] * work[n]
        else:
            for n in range(p + 1):
                for m in range(-n, n + 1):
                    acc = acc + coeffs[nm_index(n, m)] * beta[nm_index(n, m)] \
                        * _dir_deriv_entry(&work[0], n, m, 0,
                                           tn[i, 0], tn[i, 1], tn[i, 2])
        out[i] = acc
    return out_arr


def translate(double complex[::1] scaled_in, double[::1] d, int table_order,
              bint table_regular, long[:, ::1] gather, double[:, ::1] sign,
              double complex[::1] work):
    """out[j] = sum_i sign[j,i] table[gather[j,i]] in[i]; work holds the
    (table_order+1)^2 shift table."""
    cdef Py_ssize_t nt = gather.shape[0], ns = gather.shape[1]
    out_arr = np.zeros(nt, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    if table_regular:
        _reg_table(table_order, d[0], d[1], d[2], &work[0])
    else:
        _irr_table(table_order, d[0], d[1], d[2], &work[0])
    cdef Py_ssize_t i, j
    cdef double complex acc
    cdef double s
    for j in range(nt):
        acc = 0.0
        for i in range(ns):
            s = sign[j, i]
            if s != 0.0:
                acc = acc + s * work[gather[j, i]] * scaled_in[i]
        out[j] = acc
    return out_arr


# ------------------------------------------------------------------
# Helmholtz local expansions
# ------------------------------------------------------------------

def hh_p2l(double k, int p, double[:, ::1] sources,
           double complex[::1] weights, snormals, double[::1] center,
           double[::1] alpha, double complex[::1] work):
    cdef int nc = (p + 1) * (p + 1)
    out_arr = np.zeros(nc, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] sn = snormals if snormals is not None else None
    cdef Py_ssize_t j, N = sources.shape[0]
    cdef int n, m, nbuf
    cdef double vx, vy, vz, R, Rn, nu_rhat
    cdef double complex wj, g, gp, val
    jb_arr = np.zeros(p + 2)
    jbp_arr = np.zeros(p + 1)
    hb_arr = np.zeros(p + 2, dtype=np.complex128)
    hbp_arr = np.zeros(p + 1, dtype=np.complex128)
    cdef double[::1] jb = jb_arr
    cdef double[::1] jbp = jbp_arr
    cdef double complex[::1] hb = hb_arr
    cdef double complex[::1] hbp = hbp_arr
    cdef double[::1] fbuf
    for j in range(N):
        vx = sources[j, 0] - center[0]
        vy = sources[j, 1] - center[1]
        vz = sources[j, 2] - center[2]
        R = sqrt(vx * vx + vy * vy + vz * vz)
        nbuf = p + 18 + <int>ceil(k * R)
        fbuf_arr = np.zeros(nbuf)
        fbuf = fbuf_arr
        _sph_jh(p, k * R, &jb[0], &jbp[0], &hb[0], &hbp[0], &fbuf[0], nbuf)
        _reg_table(p, vx, vy, vz, &work[0])
        wj = weights[j]
        if sn is None:
            for n in range(p + 1):
                Rn = R ** n
                for m in range(-n, n + 1):
                    out[nm_index(n, m)] = out[nm_index(n, m)] \
                        + wj * hb[n] * work[nm_index(n, -m)] / Rn
        else:
            nu_rhat = (sn[j, 0] * vx + sn[j, 1] * vy + sn[j, 2] * vz) / R
            for n in range(p + 1):
                Rn = R ** n
                g = hb[n] / Rn
                gp = (k * hbp[n] - n * hb[n] / R) / Rn
                for m in range(-n, n + 1):
                    val = gp * nu_rhat * work[nm_index(n, -m)] \
                        + g * _dir_deriv_entry(&work[0], n, -m, 1,
                                               sn[j, 0], sn[j, 1], sn[j, 2])
                    out[nm_index(n, m)] = out[nm_index(n, m)] + wj * val
    cdef double complex ik = 1j * k
    for n in range(p + 1):
        for m in range(-n, n + 1):
            out[nm_index(n, m)] = out[nm_index(n, m)] * ik * alpha[nm_index(n, m)]
    return out_arr


def hh_eval_local(double k, int p, double complex[::1] coeffs,
                  double[::1] center, double[:, ::1] targets, tnormals,
                  bint deriv, double[::1] alpha, double complex[::1] work):
    cdef Py_ssize_t M = targets.shape[0]
    out_arr = np.zeros(M, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double[:, ::1] tn = tnormals if tnormals is not None else None
    cdef Py_ssize_t i
    cdef int n, m, nbuf
    cdef double vx, vy, vz, r, kn, dfact, nu_rhat
    cdef double complex acc, q, qp
    jb_arr = np.zeros(p + 2)
    jbp_arr = np.zeros(p + 1)
    hb_arr = np.zeros(p + 2, dtype=np.complex128)
    hbp_arr = np.zeros(p + 1, dtype=np.complex128)
    cdef double[::1] jb = jb_arr
    cdef double[::1] jbp = jbp_arr
    cdef double complex[::1] hb = hb_arr
    cdef double complex[::1] hbp = hbp_arr
    cdef double[::1] fbuf
    for i in range(M):
        vx = targets[i, 0] - center[0]
        vy = targets[i, 1] - center[1]
        vz = targets[i, 2] - center[2]
        r = sqrt(vx * vx + vy * vy + vz * vz)
        _reg_table(p, vx, vy, vz, &work[0])
        acc = 0.0
        if r > 0.0:
            nbuf = p + 18 + <int>ceil(k * r)
            fbuf_arr = np.zeros(nbuf)
            fbuf = fbuf_arr
            _sph_jh(p, k * r, &jb[0], &jbp[0], &hb[0], &hbp[0], &fbuf[0], nbuf)
            nu_rhat = 0.0
            if deriv:
                nu_rhat = (tn[i, 0] * vx + tn[i, 1] * vy + tn[i, 2] * vz) / r
            for n in range(p + 1):
                q = jb[n] / (r ** n)
                qp = (k * jbp[n] - n * jb[n] / r) / (r ** n)
                for m in range(-n, n + 1):
                    if not deriv:
                        acc = acc + coeffs[nm_index(n, m)] * alpha[nm_index(n, m)] \
                            * q * work[nm_index(n, m)]
                    else:
                        acc = acc + coeffs[nm_index(n, m)] * alpha[nm_index(n, m)] \
                            * (qp * nu_rhat * work[nm_index(n, m)]
                               + q * _dir_deriv_entry(&work[0], n, m, 1,
                                                      tn[i, 0], tn[i, 1], tn[i, 2]))
        else:
            dfact = 1.0
            for n in range(p + 1):
                dfact *= (2.0 * n + 1.0)
                # q_n(0) = k^n/(2n+1)!!, gradient term only through grad Rt
                q = (k ** n) / dfact
                for m in range(-n, n + 1):
                    if not deriv:
                        acc = acc + coeffs[nm_index(n, m)] * alpha[nm_index(n, m)] \
                            * q * work[nm_index(n, m)]
                    else:
                        acc = acc + coeffs[nm_index(n, m)] * alpha[nm_index(n, m)] \
                            * q * _dir_deriv_entry(&work[0], n, m, 1,
                                                   tn[i, 0], tn[i, 1], tn[i, 2])
        out[i] = acc
    return out_arr
