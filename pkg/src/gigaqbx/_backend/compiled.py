"""Wrapper presenting gigaqbx._core under the common backend API.

Supplies the shared scale vectors and translation plans from ``common``
and scratch buffers, so the compiled kernels stay convention-free.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import _core
from . import common

BACKEND_NAME = "compiled"


@lru_cache(maxsize=64)
def _p2m_scale(p):
    return np.ascontiguousarray(common.alpha_vec(p) * common.inv_2np1_vec(p))


@lru_cache(maxsize=64)
def _p2l_scale(p):
    return np.ascontiguousarray(common.beta_vec(p) * common.inv_2np1_vec(p))


@lru_cache(maxsize=64)
def _alpha(p):
    return np.ascontiguousarray(common.alpha_vec(p))


@lru_cache(maxsize=64)
def _beta(p):
    return np.ascontiguousarray(common.beta_vec(p))


def _work(order):
    return np.zeros((order + 1) * (order + 1), dtype=np.complex128)


@lru_cache(maxsize=64)
def _plan(kind, p_src, p_tgt):
    table_order, table_kind, gather, sign = common.translation_plan(
        kind, p_src, p_tgt)
    return (table_order, table_kind == "regular",
            np.ascontiguousarray(gather), np.ascontiguousarray(sign))


def _c3(v):
    return np.ascontiguousarray(v, dtype=np.float64).reshape(3)


def laplace_p2p(variant, sources, weights, snormals, targets, tnormals):
    return _core.laplace_p2p(variant, sources, weights, snormals,
                             np.ascontiguousarray(targets), tnormals)


def helmholtz_p2p(variant, k, sources, weights, snormals, targets, tnormals):
    return _core.helmholtz_p2p(variant, k, sources, weights, snormals,
                               np.ascontiguousarray(targets), tnormals)


def ts_accum_laplace(variant, p, sources, weights, snormals, center, target,
                     tnormal):
    tn = None if tnormal is None else _c3(tnormal)
    return _core.ts_accum_laplace(variant, p, sources, weights, snormals,
                                  _c3(center), _c3(target), tn)


def ts_accum_helmholtz(variant, k, p, sources, weights, snormals, center,
                       target, tnormal):
    tn = None if tnormal is None else _c3(tnormal)
    return _core.ts_accum_helmholtz(variant, k, p, sources, weights, snormals,
                                    _c3(center), _c3(target), tn)


def p2m(p, sources, weights, snormals, center):
    return _core.p2m(p, sources, weights, snormals, _c3(center),
                     _p2m_scale(p), _work(p))


def p2l(p, sources, weights, snormals, center):
    order = p + 1 if snormals is not None else p
    return _core.p2l(p, sources, weights, snormals, _c3(center),
                     _p2l_scale(p), _work(order))


def eval_local(p, coeffs, center, targets, tnormals, deriv):
    targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
    tn = None if tnormals is None else \
        np.ascontiguousarray(np.atleast_2d(tnormals), dtype=np.float64)
    return _core.eval_local(p, np.ascontiguousarray(coeffs), _c3(center),
                            targets, tn, deriv, _alpha(p), _work(p))


def eval_multipole(p, coeffs, center, targets, tnormals, deriv):
    targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
    tn = None if tnormals is None else \
        np.ascontiguousarray(np.atleast_2d(tnormals), dtype=np.float64)
    order = p + 1 if deriv else p
    return _core.eval_multipole(p, np.ascontiguousarray(coeffs), _c3(center),
                                targets, tn, deriv, _beta(p), _work(order))


def _translate(kind, p_src, p_tgt, coeffs, d, scale_in, scale_out):
    table_order, regular, gather, sign = _plan(kind, p_src, p_tgt)
    scaled = np.ascontiguousarray(coeffs * scale_in)
    out = _core.translate(scaled, _c3(d), table_order, regular, gather, sign,
                          _work(table_order))
    return out / scale_out


def m2m(p_src, p_tgt, coeffs, d):
    return _translate("m2m", p_src, p_tgt, coeffs, d,
                      _beta(p_src), _beta(p_tgt))


def m2l(p_src, p_tgt, coeffs, d):
    return _translate("m2l", p_src, p_tgt, coeffs, d,
                      _beta(p_src), _alpha(p_tgt))


def l2l(p_src, p_tgt, coeffs, d):
    return _translate("l2l", p_src, p_tgt, coeffs, d,
                      _alpha(p_src), _alpha(p_tgt))


def hh_p2l(k, p, sources, weights, snormals, center):
    return _core.hh_p2l(k, p, sources, weights, snormals, _c3(center),
                        _alpha(p), _work(p))


def hh_eval_local(k, p, coeffs, center, targets, tnormals, deriv):
    targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
    tn = None if tnormals is None else \
        np.ascontiguousarray(np.atleast_2d(tnormals), dtype=np.float64)
    return _core.hh_eval_local(k, p, np.ascontiguousarray(coeffs), _c3(center),
                               targets, tn, deriv, _alpha(p), _work(p))
