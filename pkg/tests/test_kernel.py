import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from anisokernel.kernel import (
    AngularDensity,
    KernelSpec,
    MultiplierQuad,
    check_structural_properties,
    kernel_eval,
    multiplier_eval,
)


def radial_cos_integral(alpha):
    """Oracle for int_0^inf (1 - cos t) / t^(1+alpha) dt, 0 < alpha < 2.

    Classical closed form used only as an independent reference.
    """
    return 0.5 * np.pi / (gamma(1.0 + alpha) * np.sin(0.5 * np.pi * alpha))


def test_kernel_eval_unit_distance():
    spec = KernelSpec(2, 0.5, AngularDensity.constant(1.0))
    assert kernel_eval(spec, (1.0, 0.0)) == pytest.approx(1.0)


def test_kernel_eval_homogeneity_simple():
    spec = KernelSpec(2, 0.5, AngularDensity.constant(1.0))
    assert kernel_eval(spec, (2.0, 0.0)) == pytest.approx(0.125)


def test_kernel_eval_anisotropic_direction():
    # a(pi/2) = 1 + 0.5*cos(pi) = 0.5, |y| = 1
    density = AngularDensity.from_callable(lambda t: 1.0 + 0.5 * np.cos(2 * t))
    spec = KernelSpec(2, 0.4, density)
    assert kernel_eval(spec, (0.0, 1.0)) == pytest.approx(0.5, rel=1e-12)


def test_kernel_eval_rejects_origin():
    spec = KernelSpec(1, 0.25, AngularDensity.constant(1.0))
    with pytest.raises(ValueError):
        kernel_eval(spec, 0.0)


def test_kernel_eval_symmetric_in_sign():
    density = AngularDensity.from_callable(lambda t: 1.2 + 0.3 * np.cos(4 * t))
    spec = KernelSpec(2, 0.3, density)
    y = np.array([0.37, -0.81])
    assert kernel_eval(spec, y) == pytest.approx(kernel_eval(spec, -y), rel=1e-12)


@given(t=st.floats(min_value=0.1, max_value=8.0),
       s=st.floats(min_value=0.05, max_value=0.45))
@settings(max_examples=40, deadline=None)
def test_kernel_scaling_property_1d(t, s):
    spec = KernelSpec(1, s, AngularDensity.constant(1.0))
    y = 0.7
    expected = t ** (-1.0 - 2.0 * s) * kernel_eval(spec, y)
    assert kernel_eval(spec, t * y) == pytest.approx(expected, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError, match="n > 2s"):
        KernelSpec(1, 0.8, AngularDensity.constant(1.0))
    with pytest.raises(ValueError):
        KernelSpec(2, 1.2, AngularDensity.constant(1.0))
    with pytest.raises(ValueError):
        AngularDensity.constant(-1.0)
    with pytest.raises(ValueError):
        KernelSpec(1, 0.25, AngularDensity.samples([1.0, 2.0, 1.0, 2.0]))


def test_beta_is_infimum_of_density():
    density = AngularDensity.sectors([0, np.pi / 2, np.pi, 3 * np.pi / 2, 2 * np.pi],
                                     [2.0, 0.5, 2.0, 0.5])
    spec = KernelSpec(2, 0.3, density)
    assert spec.beta == pytest.approx(0.5)


def test_multiplier_at_zero_vanishes():
    spec = KernelSpec(2, 0.5, AngularDensity.constant(1.0))
    assert multiplier_eval(spec, (0.0, 0.0)) == 0.0


def test_multiplier_1d_against_radial_oracle():
    s = 0.25
    spec = KernelSpec(1, s, AngularDensity.constant(1.0))
    # two directions on the zero-sphere, each contributing the radial value
    expected = 2.0 * radial_cos_integral(2.0 * s)
    assert multiplier_eval(spec, 1.0) == pytest.approx(expected, rel=1e-9)


def test_multiplier_2d_isotropic_value():
    # s = 1/2: radial integral is |cos(theta)| * pi/2, circle integral 4,
    # so S(e_1) = 2*pi; frozen from the independent radial oracle.
    spec = KernelSpec(2, 0.5, AngularDensity.constant(1.0))
    assert multiplier_eval(spec, (1.0, 0.0)) == pytest.approx(2.0 * np.pi, rel=1e-8)


def test_multiplier_even_in_xi():
    density = AngularDensity.from_callable(lambda t: 1.0 + 0.5 * np.cos(2 * t))
    spec = KernelSpec(2, 0.3, density)
    a = multiplier_eval(spec, (0.7, -0.4))
    b = multiplier_eval(spec, (-0.7, 0.4))
    assert a == pytest.approx(b, rel=1e-10)


@pytest.mark.parametrize("t", [0.5, 2.0, 4.0])
def test_multiplier_homogeneity_isotropic(t):
    s = 0.5
    spec = KernelSpec(2, s, AngularDensity.constant(1.0))
    base = multiplier_eval(spec, (1.0, 0.0))
    scaled = multiplier_eval(spec, (t, 0.0))
    assert scaled == pytest.approx(t ** (2 * s) * base, rel=1e-8)


def test_multiplier_ratio_constant_for_isotropic():
    s = 0.5
    spec = KernelSpec(2, s, AngularDensity.constant(1.0))
    xis = [(1.0, 0.0), (0.3, 0.4), (-1.2, 0.7)]
    ratios = [multiplier_eval(spec, xi) / np.hypot(*xi) ** (2 * s) for xi in xis]
    assert max(ratios) - min(ratios) <= 1e-7 * max(ratios)


def test_structural_properties_closed_form_1d():
    spec = KernelSpec(1, 0.25, AngularDensity.constant(1.0))
    report = check_structural_properties(spec)
    assert report.mk_integral == pytest.approx(16.0 / 3.0, rel=1e-14)
    assert report.all_ok


def test_structural_properties_canonical_2d():
    spec = KernelSpec(2, 0.5, AngularDensity.constant(1.0))
    report = check_structural_properties(spec)
    assert report.integrable and report.lower_bound_ok and report.even_ok


def test_structural_properties_catch_odd_density():
    density = AngularDensity.from_callable(lambda t: 1.0 + 0.9 * np.sin(t),
                                           even=False)
    spec = KernelSpec(2, 0.5, density)
    report = check_structural_properties(spec)
    assert not report.even_ok
    assert report.evenness_defect > 0.5


def test_structural_properties_pass_for_admissible_batch():
    densities = [
        AngularDensity.constant(2.5),
        AngularDensity.sectors(
            [0, np.pi / 3, np.pi, np.pi + np.pi / 3, 2 * np.pi],
            [1.0, 3.0, 1.0, 3.0]),
        AngularDensity.from_callable(lambda t: 1.0 + 0.5 * np.cos(2 * t)),
    ]
    for density in densities:
        report = check_structural_properties(KernelSpec(2, 0.35, density))
        assert report.all_ok


def test_sector_density_lookup():
    density = AngularDensity.sectors([0, np.pi, 2 * np.pi], [1.0, 3.0])
    assert density.value(0.5) == pytest.approx(1.0)
    assert density.value(4.0) == pytest.approx(3.0)
    assert density.circle_integral() == pytest.approx(4.0 * np.pi)


def test_sample_density_interpolation_and_integral():
    vals = [1.0, 2.0, 1.0, 2.0]
    density = AngularDensity.samples(vals)
    assert density.circle_integral() == pytest.approx(2 * np.pi * 1.5)
    quarter = np.pi / 2
    assert density.value(quarter / 2) == pytest.approx(1.5)


def test_multiplier_quad_error_reported():
    spec = KernelSpec(2, 0.3, AngularDensity.constant(1.0))
    value, err = multiplier_eval(spec, (1.0, 0.0),
                                 MultiplierQuad(), with_error=True)
    assert value > 0.0
    assert err < 1e-8 * value


def test_multiplier_failure_reports_achieved_error():
    from anisokernel.kernel import QuadratureFailure
    spec = KernelSpec(2, 0.3, AngularDensity.constant(1.0))
    strict = MultiplierQuad(tolerance=1e-18, epsabs=1e-30, epsrel=1e-16)
    with pytest.raises(QuadratureFailure) as err:
        multiplier_eval(spec, (1.0, 0.0), strict)
    assert err.value.achieved is None or err.value.achieved > 0.0
