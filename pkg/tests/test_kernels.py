import math

import numpy as np
import pytest

from gigaqbx.kernels import Equation, KernelSpec, Variant, direct_sum, kernel_value

rng = np.random.default_rng(77)

LAPLACE = KernelSpec()
HELM = KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=1.3)


def _unit(v):
    return v / np.linalg.norm(v)


def test_laplace_single_layer_at_unit_distance():
    v = kernel_value(LAPLACE, np.array([1.0, 0, 0]), np.zeros(3))
    assert v == pytest.approx(1.0 / (4 * math.pi), rel=1e-15)
    assert v.imag == 0.0


def test_helmholtz_small_k_approaches_laplace():
    t, s = np.array([0.3, -0.2, 0.9]), np.array([-0.1, 0.4, 0.2])
    hk = KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=1e-9)
    a = kernel_value(hk, t, s)
    b = kernel_value(LAPLACE, t, s)
    assert abs(a - b) < 1e-8 * abs(b)


def test_kernelspec_validation():
    with pytest.raises(ValueError):
        KernelSpec(equation=Equation.HELMHOLTZ)
    with pytest.raises(ValueError):
        KernelSpec(helmholtz_k=2.0)


def test_singular_point_raises():
    p = np.array([0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        kernel_value(LAPLACE, p, p)


def test_missing_normal_raises():
    spec = KernelSpec(variant=Variant.SOURCE_NORMAL_DERIV)
    with pytest.raises(ValueError):
        kernel_value(spec, np.array([1.0, 0, 0]), np.zeros(3))


def test_non_unit_normal_raises():
    spec = KernelSpec(variant=Variant.SOURCE_NORMAL_DERIV)
    with pytest.raises(ValueError):
        kernel_value(spec, np.array([1.0, 0, 0]), np.zeros(3),
                     source_normal=np.array([0.0, 0, 2.0]))


def test_source_normal_deriv_on_sphere_vs_finite_differences():
    s_hat = _unit(np.array([0.3, 0.5, 0.81]))
    t = 2.0 * s_hat
    spec = KernelSpec(variant=Variant.SOURCE_NORMAL_DERIV)
    val = kernel_value(spec, t, s_hat, source_normal=s_hat)
    h = 1e-6
    fd = (kernel_value(LAPLACE, t, s_hat + h * s_hat)
          - kernel_value(LAPLACE, t, s_hat - h * s_hat)) / (2 * h)
    assert abs(val - fd) < 1e-7 * abs(fd)


@pytest.mark.parametrize("spec", [
    KernelSpec(variant=Variant.TARGET_NORMAL_DERIV),
    KernelSpec(variant=Variant.SOURCE_NORMAL_DERIV),
    KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=1.3,
               variant=Variant.TARGET_NORMAL_DERIV),
    KernelSpec(equation=Equation.HELMHOLTZ, helmholtz_k=1.3,
               variant=Variant.SOURCE_NORMAL_DERIV),
])
def test_derivative_variants_match_finite_differences(spec):
    h = 1e-5
    base = KernelSpec(equation=spec.equation, helmholtz_k=spec.helmholtz_k)
    for _ in range(100):
        t = rng.normal(size=3)
        s = rng.normal(size=3)
        if np.linalg.norm(t - s) < 0.1:
            s = t + _unit(s - t) * 0.1
        nu = _unit(rng.normal(size=3))
        if spec.variant is Variant.TARGET_NORMAL_DERIV:
            val = kernel_value(spec, t, s, target_normal=nu)
            fd = (kernel_value(base, t + h * nu, s)
                  - kernel_value(base, t - h * nu, s)) / (2 * h)
        else:
            val = kernel_value(spec, t, s, source_normal=nu)
            fd = (kernel_value(base, t, s + h * nu)
                  - kernel_value(base, t, s - h * nu)) / (2 * h)
        assert abs(val - fd) <= 1e-6 * max(1e-3, abs(fd))


def test_laplace_symmetry():
    t, s = rng.normal(size=3), rng.normal(size=3)
    assert kernel_value(LAPLACE, t, s) == kernel_value(LAPLACE, s, t)


def test_direct_sum_empty_sources():
    out = direct_sum(LAPLACE, np.zeros((0, 3)), np.zeros(0), rng.normal(size=(4, 3)))
    assert out.shape == (4,) and np.all(out == 0)


def test_direct_sum_single_pair_matches_kernel_value():
    s = rng.normal(size=(1, 3))
    t = rng.normal(size=(1, 3)) + 2.0
    w = np.array([1.7 - 0.4j])
    out = direct_sum(HELM, s, w, t)
    assert out[0] == pytest.approx(w[0] * kernel_value(HELM, t[0], s[0]), rel=1e-14)


def test_direct_sum_against_reversed_order_oracle():
    sources = rng.normal(size=(200, 3))
    targets = rng.normal(size=(50, 3)) * 3.0 + 5.0
    w = rng.normal(size=200) + 1j * rng.normal(size=200)
    out = direct_sum(LAPLACE, sources, w, targets)
    # independent re-summation in reverse source order
    oracle = np.zeros(50, dtype=complex)
    for i, t in enumerate(targets):
        acc = 0.0 + 0.0j
        for j in range(199, -1, -1):
            acc += w[j] * kernel_value(LAPLACE, t, sources[j])
        oracle[i] = acc
    assert np.max(np.abs(out - oracle)) < 1e-12 * np.max(np.abs(oracle))


def test_direct_sum_singular_pair_reports_indices():
    sources = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    targets = np.array([[2.0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(ValueError, match="target 1, source 1"):
        direct_sum(LAPLACE, sources, np.ones(2), targets)


def test_laplace_values_have_zero_imaginary_part():
    sources = rng.normal(size=(30, 3))
    targets = rng.normal(size=(7, 3)) + 4.0
    out = direct_sum(LAPLACE, sources, np.ones(30, dtype=complex), targets)
    assert np.all(out.imag == 0.0)
