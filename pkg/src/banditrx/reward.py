"""Glucose risk scoring and the bandit reward.

The risk curve is a squared deviation of a power of log-glucose from a
fixed constant. With the shipped coefficients it is asymmetric: low
glucose is penalized more severely than high glucose, because
hypoglycemia is the more dangerous excursion. The bandit reward is the
negated risk, so all rewards are <= 0 with equality only at the
zero-risk glucose value.

Unit caveat: the shipped coefficients place the zero-risk point near
139, which is physiologic only on the mg/dL scale, yet survey glucose
ships in mmol/L. The engine applies the formula to whatever unit the
pipeline supplies and carries the unit as a label; it never rescales
silently. See README for the full discussion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

# Glucose below this (in the configured unit) is clamped before evaluation:
# log(bg) < 0 would raise a negative base to a non-integer power.
DOMAIN_FLOOR = 1.0


@dataclass(frozen=True)
class MagniParams:
    c0: float = 3.35506
    c1: float = 0.8353
    c2: float = 3.7932
    unit: str = "mmol/L"

    def zero_risk_glucose(self) -> float:
        """Analytic root of the risk curve: exp(c2 ** (1 / c1))."""
        return math.exp(self.c2 ** (1.0 / self.c1))

    def to_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2, "unit": self.unit}

    @classmethod
    def from_dict(cls, d: dict) -> "MagniParams":
        return cls(float(d.get("c0", 3.35506)), float(d.get("c1", 0.8353)),
                   float(d.get("c2", 3.7932)), str(d.get("unit", "mmol/L")))


DEFAULT_PARAMS = MagniParams()


def zero_risk_glucose(params: MagniParams = DEFAULT_PARAMS) -> float:
    """Glucose value at which the risk curve touches zero."""
    return params.zero_risk_glucose()


def magni_risk(bg, params: MagniParams = DEFAULT_PARAMS):
    """Risk = 10 * (c0 * (log(bg) ** c1 - c2)) ** 2.

    Accepts a scalar or an array; bg must be > 0. Values in (0, 1) are
    clamped to the domain floor (logged), so the power of the logarithm
    stays real.
    """
    arr = np.asarray(bg, dtype=float)
    if np.any(arr <= 0.0):
        raise ConfigError(f"glucose must be > 0 {params.unit}, got {arr.min()}")
    if np.any(arr < DOMAIN_FLOOR):
        log.debug("clamping %d glucose value(s) below %s to the domain floor",
                  int(np.sum(arr < DOMAIN_FLOOR)), DOMAIN_FLOOR)
        arr = np.maximum(arr, DOMAIN_FLOOR)
    risk = 10.0 * (params.c0 * (np.log(arr) ** params.c1 - params.c2)) ** 2
    if np.isscalar(bg) or np.ndim(bg) == 0:
        return float(risk)
    return risk


def reward(bg, params: MagniParams = DEFAULT_PARAMS):
    """Negative risk; the bandit maximizes this."""
    return -magni_risk(bg, params)
