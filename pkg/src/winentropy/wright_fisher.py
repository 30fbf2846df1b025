"""Wright-Fisher diffusions, generic scalar SDEs and the Jacobi density.

The scaled neutral Wright-Fisher diffusion
    dX = sqrt( X(1-X) / (1-t) ) dB  on [t0, 1),
is the entropy-minimal win-martingale; its squared volatility
S_t = X(1-X)/(1-t) is itself a martingale.  The standard diffusion
    dX = sqrt( X(1-X) ) dB  on [0, inf)
is its image under the clock change s(t) = 1 - exp(-t).

Scheme: Euler-Maruyama with full truncation (the diffusion coefficient
uses max(x(1-x), 0)), states clamped to [0,1] after each step, and
states within absorb_tol of a boundary snapped there and frozen.  The
weak bias is O(dt) and is absorbed into the acceptance tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .entropy import DivergenceEstimate, _mc_estimate, _per_path_integrals, xlogx
from .paths import (DENSE_ELEMENT_LIMIT, NumericalError, PathEnsemble,
                    StepPolicy, draw_block_normals)

DEFAULT_ABSORB_TOL = 1e-6


def _check_seed(seed):
    s = int(seed)
    if not 0 <= s < (1 << 64):
        raise ValueError("seed must fit in 64 bits")
    return s


# ---------------------------------------------------------------------------
# simulators
# ---------------------------------------------------------------------------

def _wf_block_fn(times, x0, seed, absorb_tol, scaled):
    dts = np.diff(times)
    n_steps = len(dts)
    denom = 1.0 - times[:-1] if scaled else np.ones(n_steps)

    def block(lo, hi):
        bs = hi - lo
        z = draw_block_normals(seed, lo, hi, n_steps)
        x = np.full(bs, float(x0))
        states = np.empty((bs, n_steps + 1))
        stepvar = np.empty((bs, n_steps))
        abst = np.full(bs, np.nan)
        states[:, 0] = x
        alive = np.ones(bs, dtype=bool)
        start_absorbed = (x0 <= absorb_tol) or (x0 >= 1.0 - absorb_tol)
        if start_absorbed:
            x[:] = round(x0)
            states[:, 0] = x
            abst[:] = times[0]
            alive[:] = False
        for k in range(n_steps):
            var = np.where(alive, np.maximum(x * (1.0 - x), 0.0) / denom[k], 0.0)
            stepvar[:, k] = var
            x = x + np.sqrt(var * dts[k]) * z[:, k]
            np.clip(x, 0.0, 1.0, out=x)
            hit = alive & ((x <= absorb_tol) | (x >= 1.0 - absorb_tol))
            x[hit] = np.round(x[hit])
            abst[hit] = times[k + 1]
            alive &= ~hit
            states[:, k + 1] = x
        return states, stepvar, abst

    return block


def simulate_scaled_wf(x0: float, t0: float = 0.0, *, eps: float = 1e-3,
                       n_paths: int = 1000, seed: int = 0,
                       policy: Optional[StepPolicy] = None,
                       absorb_tol: float = DEFAULT_ABSORB_TOL) -> PathEnsemble:
    """Paths of dX = sqrt(X(1-X)/(1-t)) dB from (t0, x0) up to 1-eps."""
    if not (0.0 <= x0 <= 1.0):
        raise ValueError("x0 must lie in [0, 1]")
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    if not t0 < 1.0 - eps:
        raise ValueError("t0 must be below 1 - eps")
    seed = _check_seed(seed)
    policy = policy or StepPolicy()
    times = policy.time_grid(t0, 1.0 - eps)
    scheme = (f"scaled_wf|base_dt={policy.base_dt}|adaptive={policy.adaptive}"
              f"|shrink={policy.shrink}|absorb_tol={absorb_tol}")
    ens = PathEnsemble(times, n_paths, seed, scheme, x0, t0, eps,
                       block_fn=_wf_block_fn(times, x0, seed, absorb_tol, True))
    return _maybe_materialize(ens)


def simulate_standard_wf(x0: float, horizon: float, dt: float, *,
                         n_paths: int = 1000, seed: int = 0,
                         absorb_tol: float = DEFAULT_ABSORB_TOL) -> PathEnsemble:
    """Paths of dX = sqrt(X(1-X)) dB on [0, horizon] with a fixed step."""
    if not (0.0 <= x0 <= 1.0):
        raise ValueError("x0 must lie in [0, 1]")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    seed = _check_seed(seed)
    if horizon == 0.0:
        # no time to evolve: every path is the constant x0
        return PathEnsemble.from_arrays(
            np.array([0.0, 1e-12]),
            np.full((n_paths, 2), float(x0)),
            np.zeros((n_paths, 1)),
            scheme="standard_wf|degenerate", master_seed=seed, eps=0.0)
    if not (0 < dt <= horizon):
        raise ValueError("need 0 < dt <= horizon")
    n_steps = max(1, int(round(horizon / dt)))
    times = np.linspace(0.0, horizon, n_steps + 1)
    scheme = f"standard_wf|dt={dt}|absorb_tol={absorb_tol}"
    ens = PathEnsemble(times, n_paths, seed, scheme, x0, 0.0, 0.0,
                       block_fn=_wf_block_fn(times, x0, seed, absorb_tol, False))
    return _maybe_materialize(ens)


def simulate_generic_sde(sigma: Callable[[np.ndarray], np.ndarray], x0: float,
                         horizon: float, dt: float, *, n_paths: int = 1000,
                         seed: int = 0, sigma_min: float = 1.0,
                         sigma_max: float = 1.0) -> PathEnsemble:
    """Euler-Maruyama paths of dX = sigma(X) dB on the real line.

    The caller asserts 0 < sigma_min <= sigma(x) <= sigma_max on the
    reachable range.  The horizon must satisfy horizon >= 1/sigma_min^2
    so the quadratic variation of every path exceeds 1.
    """
    if not sigma_min > 0:
        raise ValueError("sigma_min must be positive")
    if sigma_max < sigma_min:
        raise ValueError("sigma_max must be >= sigma_min")
    if horizon * sigma_min**2 < 1.0 - 1e-12:
        raise ValueError("horizon too short: need horizon >= 1/sigma_min^2")
    if not (0 < dt <= horizon):
        raise ValueError("need 0 < dt <= horizon")
    seed = _check_seed(seed)
    n_steps = max(1, int(round(horizon / dt)))
    times = np.linspace(0.0, horizon, n_steps + 1)
    dts = np.diff(times)

    def block(lo, hi):
        bs = hi - lo
        z = draw_block_normals(seed, lo, hi, n_steps)
        x = np.full(bs, float(x0))
        states = np.empty((bs, n_steps + 1))
        stepvar = np.empty((bs, n_steps))
        states[:, 0] = x
        for k in range(n_steps):
            s = np.asarray(sigma(x), dtype=float)
            stepvar[:, k] = s * s
            x = x + s * np.sqrt(dts[k]) * z[:, k]
            states[:, k + 1] = x
        return states, stepvar, np.full(bs, np.nan)

    ens = PathEnsemble(times, n_paths, seed, "generic_sde", x0, 0.0, 0.0,
                       block_fn=block, bounded=False)
    return _maybe_materialize(ens)


def _maybe_materialize(ens: PathEnsemble) -> PathEnsemble:
    if 2 * ens.n_paths * ens.n_times <= DENSE_ELEMENT_LIMIT:
        ens.materialize()
    return ens


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def time_change_map(t: float) -> float:
    """Clock change s(t) = 1 - exp(-t) taking [0, inf) onto [0, 1)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(-np.expm1(-t))


@dataclass(frozen=True)
class CheckpointStat:
    t: float
    mean_sigma: float
    std_error: float
    reference: float
    z_score: float


def sigma_martingale_check(ens: PathEnsemble,
                           checkpoints: Sequence[float]) -> list[CheckpointStat]:
    """Mean of S_t = X(1-X)/(1-t) at each checkpoint vs x0(1-x0)/(1-t0).

    The squared volatility of the scaled diffusion is a martingale, so
    its expectation is constant in t; the report carries a z-score per
    checkpoint.
    """
    cps = [float(c) for c in checkpoints]
    for c in cps:
        if c < ens.t0 - 1e-12 or c > ens.times[-1] + 1e-12:
            raise ValueError(f"checkpoint {c} outside the simulated horizon")
    idx = [int(np.argmin(np.abs(ens.times - c))) for c in cps]
    tgrid = ens.times[idx]

    def red(blk):
        xs = blk.states[:, idx]
        return xs * (1.0 - xs) / (1.0 - tgrid)

    vals = ens.reduce_paths(red)
    x0 = float(np.asarray(ens.x0).ravel()[0])
    ref = x0 * (1.0 - x0) / (1.0 - ens.t0)
    out = []
    for j, c in enumerate(cps):
        m = float(vals[:, j].mean())
        se = float(vals[:, j].std(ddof=1) / math.sqrt(ens.n_paths)) \
            if ens.n_paths > 1 else 0.0
        z = 0.0 if se == 0 else (m - ref) / se
        out.append(CheckpointStat(float(tgrid[j]), m, se, ref, z))
    return out


def p_moment_estimate(ens: PathEnsemble, q: float, eps: float | None = None) -> DivergenceEstimate:
    """Monte Carlo E[int S^q dt] up to 1-eps (integrability diagnostics)."""
    if not q > 0:
        raise ValueError("q must be positive")
    eps = float(ens.eps) if eps is None else float(eps)
    vals = _per_path_integrals(ens, lambda s: np.power(s, q), eps)
    return _mc_estimate(vals, 1.0, ens, eps, f"sigma_moment({q})")


# ---------------------------------------------------------------------------
# Jacobi eigen-expansion of the standard diffusion's transition density
# ---------------------------------------------------------------------------

def jacobi_p11(n: int, z):
    """Jacobi (1,1) polynomial of degree n, normalized to 1 at z=1.

    Three-term recurrence; the unnormalized value at 1 is n+1, and the
    normalized recurrence (m+2) p_m = (2m+1) z p_{m-1} - (m-1) p_{m-2}
    yields exactly 1.0 at z=1 in floating point.
    """
    if n < 0 or n != int(n):
        raise ValueError("degree must be a nonnegative integer")
    a = np.asarray(z, dtype=float)
    if np.any(np.abs(a) > 1.0 + 1e-12):
        raise ValueError("argument must lie in [-1, 1]")
    pm2 = np.ones_like(a)
    if n == 0:
        return float(pm2) if np.ndim(z) == 0 else pm2
    pm1 = a.copy()
    for m in range(2, n + 1):
        pm1, pm2 = ((2 * m + 1) * a * pm1 - (m - 1) * pm2) / (m + 2), pm1
    return float(pm1) if np.ndim(z) == 0 else pm1


def _eigenmode(k: int, x):
    """phi_k(x) = x(1-x) * p11_{k-1}(1-2x), k >= 1."""
    xx = np.asarray(x, dtype=float)
    return xx * (1.0 - xx) * jacobi_p11(k - 1, 1.0 - 2.0 * xx)


def density_truncation_terms(t: float, tol: float = 1e-10, max_terms: int = 200) -> int:
    """Smallest n so the first omitted term bound drops below tol.

    Term k of the density series is bounded in magnitude by
    exp(-k(k+1)t/2) k(k+1)(2k+1) / 4 for x, y in [0,1]; the cruder bound
    without the 1/4 is used here.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    for n in range(1, max_terms + 1):
        k = n + 1
        if math.exp(-k * (k + 1) * t / 2.0) * k * (k + 1) * (2 * k + 1) < tol:
            return n
    return max_terms


def transition_density(t: float, x: float, y, n_terms: Optional[int] = None):
    """Sub-probability density of the standard diffusion at time t.

    rho(t, x, y) = sum_{k>=1} exp(-k(k+1)t/2) k(k+1)(2k+1)
                   phi_k(x) phi_k(y) / (y(1-y)),
    truncated at n_terms and floored at 0.  Mode k decays at rate
    k(k+1)/2, matching the heterozygosity law E[X(1-X)] = x(1-x)e^{-t}
    of dX = sqrt(X(1-X)) dB; the k=1 spatial factor is proportional to
    y(1-y).  Its integral over y is the survival probability, so it is
    at most 1 and decreasing in t.
    """
    if not t > 0:
        raise ValueError("the series only converges for t > 0")
    if not (0.0 < x < 1.0):
        raise ValueError("x must be interior")
    yy = np.asarray(y, dtype=float)
    if np.any(yy <= 0.0) or np.any(yy >= 1.0):
        raise ValueError("y must be interior")
    if n_terms is None:
        n_terms = density_truncation_terms(t)
    if n_terms < 1:
        raise ValueError("need at least one term")
    out = np.zeros_like(yy)
    for k in range(1, n_terms + 1):
        rate = 0.5 * k * (k + 1)
        coeff = math.exp(-rate * t) * k * (k + 1) * (2 * k + 1)
        out = out + coeff * float(_eigenmode(k, x)) * jacobi_p11(k - 1, 1.0 - 2.0 * yy)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(y) == 0 else out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(128)


def transition_density_mass(t: float, x: float,
                            n_terms: Optional[int] = None) -> float:
    """int_0^1 rho(t, x, y) dy by Gauss-Legendre quadrature (survival mass)."""
    ynodes = 0.5 * (_GL_NODES + 1.0)
    w = 0.5 * _GL_WEIGHTS
    return float(np.sum(transition_density(t, x, ynodes, n_terms) * w))


def moment_series_bound(t: float, n_terms: int = 30) -> float:
    """Truncated sum of exp(-n(n+1)t) n(n+1)(2n+1).

    Series upper bound for E[sqrt(X(1-X))] of the standard diffusion,
    kept with the stated rates n(n+1); it dominates the Monte Carlo
    means at the moderate times where it is used.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if n_terms < 1:
        raise ValueError("need at least one term")
    ns = np.arange(1, n_terms + 1, dtype=float)
    return float(np.sum(np.exp(-ns * (ns + 1) * t) * ns * (ns + 1) * (2 * ns + 1)))


# ---------------------------------------------------------------------------
# reciprocity between the specific and reciprocal entropies
# ---------------------------------------------------------------------------

def reciprocity_check(sigma: Callable, x0: float, n_paths: int, seed: int, *,
                      sigma_min: float, sigma_max: float, dt: float = 1e-3,
                      horizon: Optional[float] = None,
                      block_size: int = 8192):
    """Both sides of h(W|Q) for Q the law of dX = sigma(X) dB.

    lhs: (1/2) E over Brownian paths Y of
         int_0^1 [1/sigma(Y)^2 + log sigma(Y)^2 - 1] dt.
    rhs: (1/2) E over SDE paths X of
         int_0^tau [1 + S log S - S] ds,  S = sigma(X)^2,
    where tau is the first time the running quadratic variation hits 1.
    The time change tau = <X>^{-1}(1) makes the two expectations equal.

    Returns (lhs, rhs) as DivergenceEstimate values; they must agree
    within combined Monte Carlo error.
    """
    if not sigma_min > 0:
        raise ValueError("sigma_min must be positive")
    seed = _check_seed(seed)
    if horizon is None:
        horizon = 1.05 / sigma_min**2
    if horizon * sigma_min**2 < 1.0 - 1e-12:
        raise ValueError("horizon too short to exhaust quadratic variation 1")

    n_steps_r = int(math.ceil(horizon / dt))
    rhs_vals = np.empty(n_paths)
    for lo in range(0, n_paths, block_size):
        hi = min(lo + block_size, n_paths)
        bs = hi - lo
        z = draw_block_normals(seed, lo, hi, n_steps_r)
        x = np.full(bs, float(x0))
        q = np.zeros(bs)           # running quadratic variation
        acc = np.zeros(bs)
        running = np.ones(bs, dtype=bool)
        for k in range(n_steps_r):
            s2 = np.asarray(sigma(x), dtype=float) ** 2
            cost = 1.0 + xlogx(s2) - s2
            q_next = q + s2 * dt
            crossing = running & (q_next >= 1.0)
            cont = running & ~crossing
            acc[cont] += cost[cont] * dt
            if np.any(crossing):
                # partial step: only the time needed to bring <X> to 1
                frac_dt = (1.0 - q[crossing]) / s2[crossing]
                acc[crossing] += cost[crossing] * frac_dt
                running[crossing] = False
            x = x + np.sqrt(s2 * dt) * z[:, k]
            q = q_next
            if not running.any():
                break
        if running.any():
            raise NumericalError("some paths never exhausted quadratic "
                                 "variation 1; enlarge the horizon")
        rhs_vals[lo:hi] = acc

    n_steps_l = int(round(1.0 / dt))
    lhs_vals = np.empty(n_paths)
    lhs_seed = (seed + 1) % (1 << 64)
    for lo in range(0, n_paths, block_size):
        hi = min(lo + block_size, n_paths)
        bs = hi - lo
        z = draw_block_normals(lhs_seed, lo, hi, n_steps_l)
        y = np.full(bs, float(x0))   # Brownian under the reference measure
        acc = np.zeros(bs)
        sq_dt = math.sqrt(dt)
        for k in range(n_steps_l):
            s2 = np.asarray(sigma(y), dtype=float) ** 2
            acc += (1.0 / s2 + np.log(s2) - 1.0) * dt
            y = y + sq_dt * z[:, k]
        lhs_vals[lo:hi] = acc

    def _est(vals, flavor):
        m = 0.5 * float(vals.mean())
        se = 0.0 if n_paths < 2 else \
            0.5 * float(vals.std(ddof=1) / math.sqrt(n_paths))
        return DivergenceEstimate(m, se, n_paths, 0.0, flavor)

    return _est(lhs_vals, "reciprocity_lhs"), _est(rhs_vals, "reciprocity_rhs")
