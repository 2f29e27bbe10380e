import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from twostage_spade.models import (
    LINE,
    TWO_POINT,
    ImagingSystem,
    MisalignmentState,
    ObjectModel,
    bspade_prob,
    bspade_prob_numeric_oracle,
    direct_density,
    psf_intensity,
    q_factor,
)

PEAK = 1.0 / math.sqrt(2.0 * math.pi)


def test_psf_peak_and_unit_width_value():
    assert psf_intensity(0.0) == pytest.approx(0.398942280401, abs=1e-11)
    assert psf_intensity(1.0) == pytest.approx(math.exp(-0.5) * PEAK, rel=1e-14)


def test_psf_normalized():
    total, _ = integrate.quad(lambda x: psf_intensity(x), -10, 10, epsabs=1e-13)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_q_factor_values():
    assert q_factor(0.0, 2.0) == pytest.approx(0.25)
    assert q_factor(0.7, 1.4) == 0.0
    assert q_factor(0.0, 4.0) == pytest.approx(1.0)


def test_direct_density_point_source():
    d = direct_density(0.0, 0.0, ObjectModel(TWO_POINT, 0.0))
    assert d == pytest.approx(PEAK, rel=1e-14)


@pytest.mark.parametrize("kind", [TWO_POINT, LINE])
@pytest.mark.parametrize("xi,theta", [(0.0, 0.0), (0.3, 0.5), (-1.0, 2.0), (2.0, 4.0), (0.1, 6.0)])
def test_direct_density_normalized(kind, xi, theta):
    obj = ObjectModel(kind, theta)
    total, _ = integrate.quad(lambda x: direct_density(x, xi, obj), -40, 40, points=[xi], limit=200,
                              epsabs=1e-13, epsrel=1e-13)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_line_density_small_length_limit():
    for theta in [1e-3, 1e-6, 1e-9]:
        d = direct_density(0.4, 0.4, ObjectModel(LINE, theta))
        assert d == pytest.approx(PEAK, rel=1e-6)


def test_direct_density_scales_with_sigma():
    sys = ImagingSystem(2.5)
    obj = ObjectModel(TWO_POINT, 2.5)
    assert direct_density(1.0, 0.5, obj, sys) == pytest.approx(
        direct_density(0.4, 0.2, ObjectModel(TWO_POINT, 1.0)) / 2.5, rel=1e-13)


def test_direct_density_rejects_nan():
    with pytest.raises(ValueError):
        direct_density(float("nan"), 0.0, ObjectModel(LINE, 1.0))


def test_bspade_prob_closed_values():
    assert bspade_prob(0.0, ObjectModel(TWO_POINT, 0.0)) == pytest.approx(1.0, abs=1e-15)
    assert bspade_prob(0.0, ObjectModel(TWO_POINT, 4.0)) == pytest.approx(math.exp(-1), rel=1e-14)
    assert bspade_prob(1.0, ObjectModel(TWO_POINT, 2.0)) == pytest.approx(0.5 * (1 + math.exp(-1)), rel=1e-14)
    assert bspade_prob(0.0, ObjectModel(LINE, 4.0)) == pytest.approx(0.5 * math.sqrt(math.pi) * math.erf(1),
                                                                     rel=1e-14)


@pytest.mark.parametrize("kind", [TWO_POINT, LINE])
@pytest.mark.parametrize("xi,theta", [(0.0, 0.0), (0.0, 4.0), (-1.5, 0.5), (2.0, 3.0)])
def test_bspade_prob_matches_oracle(kind, xi, theta):
    obj = ObjectModel(kind, theta)
    assert bspade_prob(xi, obj) == pytest.approx(bspade_prob_numeric_oracle(xi, obj), abs=1e-9)


def test_oracle_point_source_and_line():
    assert bspade_prob_numeric_oracle(0.0, ObjectModel(TWO_POINT, 0.0)) == pytest.approx(1.0, abs=1e-12)
    assert bspade_prob_numeric_oracle(0.0, ObjectModel(LINE, 4.0)) == pytest.approx(0.74682, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(xi=st.floats(-6, 6), theta=st.floats(0, 10), kind=st.sampled_from([TWO_POINT, LINE]))
def test_bspade_prob_is_probability_and_even(xi, theta, kind):
    obj = ObjectModel(kind, theta)
    g = bspade_prob(xi, obj)
    assert 0.0 <= g <= 1.0
    assert g == pytest.approx(bspade_prob(-xi, obj), rel=1e-12, abs=1e-300)


def test_bspade_prob_sigma_scaling():
    sys = ImagingSystem(3.0)
    assert bspade_prob(1.5, ObjectModel(LINE, 6.0), sys) == pytest.approx(
        bspade_prob(0.5, ObjectModel(LINE, 2.0)), rel=1e-14)


def test_object_and_system_validation():
    with pytest.raises(ValueError):
        ObjectModel(TWO_POINT, -1.0)
    with pytest.raises(ValueError):
        ObjectModel("disk", 1.0)
    with pytest.raises(ValueError):
        ImagingSystem(0.0)
    assert ObjectModel(LINE, 6.0).second_moment() == pytest.approx(3.0)
    assert MisalignmentState(0.1, -0.3).xi == pytest.approx(-0.2)
    assert ImagingSystem.from_numerical_aperture(2 * math.pi, 1.0).sigma == pytest.approx(1.0)
