"""Exact relative entropy of trinomial martingale models and its scaling limit.

A martingale on a trinomial tree moves by -s_bar*sqrt(h), 0 or
+s_bar*sqrt(h) per step, with up/down probability sigma^2/(2 s_bar^2) so
the one-step variance is sigma^2 h.  Increments are independent, so the
path entropy is the number of steps times the one-step KL divergence.
Rescaled by (s_bar sqrt(h))^2 it converges, as s_bar grows, to the
reciprocal-entropy integrand sigma^2 log(sigma^2) - sigma^2 + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import integrand_reciprocal


@dataclass(frozen=True)
class TrinomialSpec:
    """Parameters (h, sigma_bar, sigma, sigma0) of the discrete model."""

    h: float
    sigma_bar: float
    sigma: float
    sigma0: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        n = 1.0 / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("1/h must be an integer number of steps")
        for name in ("sigma_bar", "sigma", "sigma0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p_mid < 0.0 or self.p0_mid < 0.0:
            raise ValueError("invalid probabilities: need sigma, sigma0 <= sigma_bar")

    @property
    def n_steps(self) -> int:
        return int(round(1.0 / self.h))

    @property
    def p_up(self) -> float:
        return self.sigma**2 / (2.0 * self.sigma_bar**2)

    @property
    def p0_up(self) -> float:
        return self.sigma0**2 / (2.0 * self.sigma_bar**2)

    # middle probabilities 1 - 2p, formed without cancellation so the
    # KL stays accurate when sigma approaches sigma_bar
    @property
    def p_mid(self) -> float:
        return (self.sigma_bar**2 - self.sigma**2) / self.sigma_bar**2

    @property
    def p0_mid(self) -> float:
        return (self.sigma_bar**2 - self.sigma0**2) / self.sigma_bar**2


def _kl_term(p, q):
    # p*log(p/q) with 0*log(0/q)=0 and p*log(p/0)=+inf for p>0
    if p == 0.0:
        return 0.0
    if q == 0.0:
        return math.inf
    return p * math.log(p / q)


def one_step_kl(spec: TrinomialSpec) -> float:
    """KL divergence of the one-step law at sigma from the one at sigma0.

    2p log(p/p0) + (1-2p) log((1-2p)/(1-2p0)) with 0 log(0/q) = 0 and
    p log(p/0) = +inf.
    """
    return (2.0 * _kl_term(spec.p_up, spec.p0_up)
            + _kl_term(spec.p_mid, spec.p0_mid))


def scaled_path_entropy(spec: TrinomialSpec) -> float:
    """(s_bar sqrt(h))^2 * N * one_step_kl, summed over the N steps.

    Exactly h-independent up to rounding of h*N, since N = 1/h.
    """
    per_step = (spec.sigma_bar * math.sqrt(spec.h)) ** 2 * one_step_kl(spec)
    return spec.n_steps * per_step


def scaled_entropy_closed_form(sigma: float, sigma0: float, sigma_bar: float) -> float:
    """s^2 log(s^2/s0^2) + (sb^2-s^2) log((sb^2-s^2)/(sb^2-s0^2)).

    Independent route for cross-checking scaled_path_entropy.
    """
    s2, s02, sb2 = sigma**2, sigma0**2, sigma_bar**2
    if not (s2 <= sb2 and s02 <= sb2):
        raise ValueError("need sigma, sigma0 <= sigma_bar")
    return _kl_term(s2, s02) + _kl_term(sb2 - s2, sb2 - s02)


def brownian_reference_limit(sigma: float) -> float:
    """Large-s_bar limit with sigma0=1: sigma^2 log sigma^2 - sigma^2 + 1."""
    return float(integrand_reciprocal(sigma**2))


def scaling_limit_gap(sigma: float, sigma_bar: float) -> float:
    """|scaled entropy at sigma0=1 minus its limit|; decays like 1/s_bar^2."""
    if not (sigma_bar > sigma and sigma_bar > 1.0):
        raise ValueError("need sigma_bar > sigma and sigma_bar > 1")
    spec = TrinomialSpec(h=1.0, sigma_bar=sigma_bar, sigma=sigma, sigma0=1.0)
    return abs(scaled_path_entropy(spec) - brownian_reference_limit(sigma))


def extended_entropy(density_ratios, reference_masses) -> float:
    """H(q|p) = sum over cells of (r log r - r + 1) * p-mass, r = dq/dp.

    The extension of relative entropy beyond probability measures; it is
    nonnegative and vanishes only when q = p cellwise.
    """
    r = np.asarray(density_ratios, dtype=float)
    m = np.asarray(reference_masses, dtype=float)
    if r.shape != m.shape:
        raise ValueError("one density ratio per cell mass required")
    if np.any(np.isnan(r)) or np.any(r < 0):
        raise ValueError("density ratios must be nonnegative")
    if np.any(m < 0):
        raise ValueError("reference masses must be nonnegative")
    return float(np.sum(integrand_reciprocal(r) * m))
