"""Risk curve: analytic root, asymmetry, monotone branches, domain guard."""

import math

import numpy as np
import pytest

from banditrx.errors import ConfigError
from banditrx.reward import (DOMAIN_FLOOR, MagniParams, magni_risk, reward,
                             zero_risk_glucose)

ROOT = 138.88973299799676  # exp(3.7932 ** (1 / 0.8353)), frozen from mpmath at 50 digits


def test_zero_risk_root_value():
    assert abs(zero_risk_glucose() - ROOT) < 1e-11
    assert magni_risk(ROOT) < 1e-9


def test_root_matches_closed_form():
    p = MagniParams()
    assert zero_risk_glucose(p) == math.exp(p.c2 ** (1.0 / p.c1))


def test_asymmetry_hypo_worse_than_hyper():
    assert magni_risk(ROOT / 2) > magni_risk(2 * ROOT)


def test_monotone_on_each_side():
    lo = np.linspace(DOMAIN_FLOOR + 1e-6, ROOT, 3000)
    hi = np.linspace(ROOT, 600.0, 3000)
    assert np.all(np.diff(magni_risk(lo)) <= 0)
    assert np.all(np.diff(magni_risk(hi)) >= 0)


def test_scalar_and_array_agree():
    xs = np.array([2.0, 50.0, ROOT, 300.0])
    arr = magni_risk(xs)
    for x, r in zip(xs, arr):
        assert magni_risk(float(x)) == r


def test_reward_is_negated_risk():
    for bg in (3.0, 138.0, 250.0):
        assert reward(bg) == -magni_risk(bg)


def test_subfloor_values_clamp_to_floor():
    assert magni_risk(0.25) == magni_risk(DOMAIN_FLOOR)
    assert magni_risk(np.array([0.5, 2.0]))[0] == magni_risk(DOMAIN_FLOOR)


def test_nonpositive_glucose_rejected():
    with pytest.raises(ConfigError):
        magni_risk(0.0)
    with pytest.raises(ConfigError):
        magni_risk(np.array([5.0, -1.0]))


def test_params_round_trip():
    p = MagniParams(c0=1.5, c1=0.9, c2=2.0, unit="mg/dL")
    assert MagniParams.from_dict(p.to_dict()) == p


def test_risk_positive_away_from_root():
    rng = np.random.default_rng(7)
    xs = rng.uniform(1.0, 500.0, size=2000)
    risks = magni_risk(xs)
    assert np.all(risks >= 0.0)
    # zero only in a vanishing neighborhood of the root
    far = np.abs(xs - ROOT) > 1.0
    assert np.all(risks[far] > 1e-4)
