"""Containers for simulated martingale paths.

All simulators in this package produce ensembles of scalar paths on one
shared, deterministic time grid.  Per-path randomness comes from a
counter-based generator keyed by (master_seed, path_index), so the same
seed reproduces the same ensemble bit for bit, no matter how the paths
are partitioned into blocks or how many worker threads reduce them.

Large ensembles are not held in memory: the ensemble keeps its
simulation recipe and regenerates path blocks on demand.
"""

from __future__ import annotations

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

ENSEMBLE_MAGIC = b"WMEN"
ENSEMBLE_FORMAT_VERSION = 1

DEFAULT_BLOCK_SIZE = 8192
# states + step variances above this many elements stay lazy
DENSE_ELEMENT_LIMIT = 8_000_000

_MAX_WORKERS = None


class NumericalError(RuntimeError):
    """A computation failed numerically (CLI exit code 3)."""


def set_max_workers(n: Optional[int]) -> None:
    """Cap the number of threads used for block reductions (None = env/1)."""
    global _MAX_WORKERS
    _MAX_WORKERS = n


def get_max_workers() -> int:
    if _MAX_WORKERS is not None:
        return max(1, int(_MAX_WORKERS))
    env = os.environ.get("WINENTROPY_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Counter-based RNG stream for one path, keyed by (seed, index)."""
    key = np.array([master_seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_block_normals(master_seed: int, lo: int, hi: int, n: int) -> np.ndarray:
    """Standard normals for paths lo..hi-1, one independent stream per path."""
    out = np.empty((hi - lo, n))
    for j in range(hi - lo):
        out[j] = path_rng(master_seed, lo + j).standard_normal(n)
    return out


@dataclass(frozen=True)
class StepPolicy:
    """Time stepping for simulations on [t0, 1).

    The scaled Wright-Fisher volatility grows like 1/(1-t), so adaptive
    policies shrink the step near t=1: dt(t) = min(base_dt, shrink*(1-t)).
    """

    base_dt: float = 1e-3
    adaptive: bool = True
    shrink: float = 0.1

    def __post_init__(self):
        if not (self.base_dt > 0):
            raise ValueError("base_dt must be positive")
        if self.adaptive and not (self.shrink > 0):
            raise ValueError("shrink must be positive")

    def dt_at(self, t: float) -> float:
        if self.adaptive:
            return min(self.base_dt, self.shrink * (1.0 - t))
        return self.base_dt

    def time_grid(self, t0: float, t_end: float) -> np.ndarray:
        """Strictly increasing grid from t0 to t_end, final step truncated."""
        if not t_end > t0:
            raise ValueError("t_end must exceed t0")
        ts = [t0]
        t = t0
        while True:
            dt = self.dt_at(t)
            if dt <= 0:
                raise NumericalError("step policy produced a nonpositive dt")
            if t + dt >= t_end - 1e-15:
                break
            t += dt
            ts.append(t)
        ts.append(t_end)
        return np.asarray(ts)


# accuracy policy used by the acceptance suite for the scaled diffusion;
# tighter than the defaults so Euler bias sits well below Monte Carlo noise
ACCURATE_POLICY = StepPolicy(base_dt=1.25e-4, adaptive=True, shrink=0.01)


@dataclass
class SamplePath:
    """One trajectory: time grid, states, per-step variance, absorption."""

    times: np.ndarray
    states: np.ndarray
    step_variance: np.ndarray
    absorption_time: Optional[float] = None


@dataclass
class _Block:
    lo: int
    hi: int
    states: np.ndarray          # (bs, n_times)
    step_variance: np.ndarray   # (bs, n_steps)
    absorption_time: np.ndarray  # (bs,), NaN when never absorbed


class PathEnsemble:
    """A seeded collection of sample paths sharing one time grid.

    Either fully materialized (states/step_variance arrays present) or
    lazy (a block_fn regenerates any contiguous block of paths).  All
    reductions are computed per path and assembled in path order, so
    results do not depend on block size or thread count.
    """

    def __init__(self, times, n_paths, master_seed, scheme, x0, t0, eps,
                 states=None, step_variance=None, absorption_time=None,
                 block_fn: Optional[Callable[[int, int], tuple]] = None,
                 bounded=True):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("times must be a 1-d grid with at least 2 nodes")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.n_paths = int(n_paths)
        if self.n_paths <= 0:
            raise ValueError("ensemble needs at least one path")
        self.master_seed = int(master_seed)
        self.scheme = str(scheme)
        self.x0 = x0
        self.t0 = float(t0)
        self.eps = float(eps)
        self.bounded = bool(bounded)
        self._states = None if states is None else np.asarray(states, dtype=float)
        self._step_variance = (None if step_variance is None
                               else np.asarray(step_variance, dtype=float))
        if absorption_time is None:
            self._absorption_time = None
        else:
            self._absorption_time = np.asarray(absorption_time, dtype=float)
        self._block_fn = block_fn
        if self._states is None and self._block_fn is None:
            raise ValueError("ensemble needs either arrays or a block recipe")
        if self._states is not None:
            if self._states.shape != (self.n_paths, self.n_times):
                raise ValueError("states shape does not match grid")
            if self._step_variance is None or \
                    self._step_variance.shape != (self.n_paths, self.n_steps):
                raise ValueError("step_variance shape does not match grid")
            if self._absorption_time is None:
                self._absorption_time = np.full(self.n_paths, np.nan)

    # -- basic geometry -------------------------------------------------

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def is_materialized(self) -> bool:
        return self._states is not None

    # -- block access ----------------------------------------------------

    def _default_block_size(self) -> int:
        # keep one regenerated block near or below ~256 MB of doubles
        cap = int(33_000_000 // max(1, self.n_steps))
        return max(256, min(DEFAULT_BLOCK_SIZE, cap))

    def iter_blocks(self, block_size: Optional[int] = None) -> Iterator[_Block]:
        block_size = block_size or self._default_block_size()
        for lo in range(0, self.n_paths, block_size):
            hi = min(lo + block_size, self.n_paths)
            yield self._get_block(lo, hi)

    def _get_block(self, lo: int, hi: int) -> _Block:
        if self.is_materialized:
            return _Block(lo, hi, self._states[lo:hi],
                          self._step_variance[lo:hi],
                          self._absorption_time[lo:hi])
        states, stepvar, abst = self._block_fn(lo, hi)
        return _Block(lo, hi, states, stepvar, abst)

    def reduce_paths(self, fn: Callable[[_Block], np.ndarray],
                     block_size: Optional[int] = None) -> np.ndarray:
        """Apply fn to each block, assembling one row per path.

        fn returns an array whose leading axis is the block's path axis.
        Output slots are preassigned per path, so scheduling cannot
        change the result.
        """
        block_size = block_size or self._default_block_size()
        ranges = [(lo, min(lo + block_size, self.n_paths))
                  for lo in range(0, self.n_paths, block_size)]
        first = fn(self._get_block(*ranges[0]))
        first = np.asarray(first)
        out_shape = (self.n_paths,) + first.shape[1:]
        out = np.empty(out_shape, dtype=first.dtype)
        out[ranges[0][0]:ranges[0][1]] = first
        rest = ranges[1:]
        workers = get_max_workers()

        def work(rng):
            lo, hi = rng
            out[lo:hi] = fn(self._get_block(lo, hi))

        if workers > 1 and len(rest) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, rest))
        else:
            for rng in rest:
                work(rng)
        return out

    def path(self, i: int) -> SamplePath:
        if not (0 <= i < self.n_paths):
            raise IndexError("path index out of range")
        blk = self._get_block(i, i + 1)
        at = blk.absorption_time[0]
        return SamplePath(self.times, blk.states[0], blk.step_variance[0],
                          None if np.isnan(at) else float(at))

    def materialize(self) -> "PathEnsemble":
        if self.is_materialized:
            return self
        n_el = 2 * self.n_paths * self.n_times
        if n_el > 30 * DENSE_ELEMENT_LIMIT:
            raise MemoryError("ensemble too large to materialize; "
                              "use iter_blocks/reduce_paths")
        states = np.empty((self.n_paths, self.n_times))
        stepvar = np.empty((self.n_paths, self.n_steps))
        abst = np.empty(self.n_paths)
        for blk in self.iter_blocks():
            states[blk.lo:blk.hi] = blk.states
            stepvar[blk.lo:blk.hi] = blk.step_variance
            abst[blk.lo:blk.hi] = blk.absorption_time
        self._states = states
        self._step_variance = stepvar
        self._absorption_time = abst
        self._block_fn = None
        return self

    # -- construction helpers ---------------------------------------------

    @classmethod
    def from_arrays(cls, times, states, step_variance, absorption_time=None,
                    master_seed=0, scheme="synthetic", x0=None, t0=None,
                    eps=0.0, bounded=True):
        times = np.asarray(times, dtype=float)
        states = np.atleast_2d(np.asarray(states, dtype=float))
        step_variance = np.atleast_2d(np.asarray(step_variance, dtype=float))
        if x0 is None:
            x0 = float(states[0, 0])
        if t0 is None:
            t0 = float(times[0])
        return cls(times, states.shape[0], master_seed, scheme, x0, t0, eps,
                   states=states, step_variance=step_variance,
                   absorption_time=absorption_time, bounded=bounded)

    # -- serialization ----------------------------------------------------

    def to_csv(self, path_or_file) -> None:
        """Columnar CSV (path_id, t, x, sigma_sq); 17 significant digits.

        sigma_sq on a row is the variance used on the step starting at
        that row's t; the final grid time carries 0.
        """
        own = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["path_id", "t", "x", "sigma_sq"])
            for blk in self.iter_blocks():
                for j in range(blk.hi - blk.lo):
                    pid = blk.lo + j
                    for k in range(self.n_times):
                        sv = blk.step_variance[j, k] if k < self.n_steps else 0.0
                        w.writerow([pid, format(self.times[k], ".17g"),
                                    format(blk.states[j, k], ".17g"),
                                    format(sv, ".17g")])
        finally:
            if own:
                fh.close()

    def to_binary(self, path) -> None:
        """Compact binary layout.

        Header: magic "WMEN", u32 version, u32 n_paths, u32 n_times,
        u64 master_seed, f64 x0, f64 t0, f64 eps, u32 scheme length,
        scheme utf-8.  Payload: times as f64[n_times], then per path
        states f64[n_times], step variances f64[n_times-1] and the
        absorption time as one f64 (NaN when never absorbed).  All
        integers and doubles little-endian.
        """
        x0s = float(self.x0) if np.isscalar(self.x0) or np.ndim(self.x0) == 0 \
            else float(np.asarray(self.x0).ravel()[0])
        scheme_b = self.scheme.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(ENSEMBLE_MAGIC)
            fh.write(struct.pack("<III", ENSEMBLE_FORMAT_VERSION,
                                 self.n_paths, self.n_times))
            fh.write(struct.pack("<Qddd", self.master_seed % (1 << 64),
                                 x0s, self.t0, self.eps))
            fh.write(struct.pack("<I", len(scheme_b)))
            fh.write(scheme_b)
            fh.write(self.times.astype("<f8").tobytes())
            for blk in self.iter_blocks():
                for j in range(blk.hi - blk.lo):
                    fh.write(blk.states[j].astype("<f8").tobytes())
                    fh.write(blk.step_variance[j].astype("<f8").tobytes())
                    fh.write(struct.pack("<d", blk.absorption_time[j]))

    @classmethod
    def from_binary(cls, path) -> "PathEnsemble":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != ENSEMBLE_MAGIC:
                raise ValueError("not an ensemble file (bad magic)")
            version, n_paths, n_times = struct.unpack("<III", fh.read(12))
            if version != ENSEMBLE_FORMAT_VERSION:
                raise ValueError(f"unsupported ensemble format version {version}")
            seed, x0, t0, eps = struct.unpack("<Qddd", fh.read(32))
            (slen,) = struct.unpack("<I", fh.read(4))
            scheme = fh.read(slen).decode("utf-8")
            times = np.frombuffer(fh.read(8 * n_times), dtype="<f8").copy()
            states = np.empty((n_paths, n_times))
            stepvar = np.empty((n_paths, n_times - 1))
            abst = np.empty(n_paths)
            for j in range(n_paths):
                states[j] = np.frombuffer(fh.read(8 * n_times), dtype="<f8")
                stepvar[j] = np.frombuffer(fh.read(8 * (n_times - 1)), dtype="<f8")
                (abst[j],) = struct.unpack("<d", fh.read(8))
        return cls(times, n_paths, seed, scheme, x0, t0, eps,
                   states=states, step_variance=stepvar, absorption_time=abst)


def constant_variance_ensemble(sigma_sq, n_steps=100, n_paths=4,
                               t0=0.0, t_end=1.0) -> PathEnsemble:
    """Deterministic ensemble with constant instantaneous variance."""
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be nonnegative")
    times = np.linspace(t0, t_end, n_steps + 1)
    states = np.full((n_paths, n_steps + 1), 0.5)
    stepvar = np.full((n_paths, n_steps), float(sigma_sq))
    return PathEnsemble.from_arrays(times, states, stepvar,
                                    scheme=f"constant({sigma_sq})", eps=0.0)


def piecewise_constant_ensemble(times, sigma_sq_steps, n_paths=4) -> PathEnsemble:
    """Deterministic ensemble with a shared piecewise-constant variance."""
    times = np.asarray(times, dtype=float)
    sv = np.asarray(sigma_sq_steps, dtype=float)
    if sv.ndim != 1 or len(sv) != len(times) - 1:
        raise ValueError("need one variance per step")
    if np.any(sv < 0):
        raise ValueError("variances must be nonnegative")
    states = np.full((n_paths, len(times)), 0.5)
    stepvar = np.tile(sv, (n_paths, 1))
    return PathEnsemble.from_arrays(times, states, stepvar,
                                    scheme="piecewise_constant", eps=0.0)
