"""Ensemble statistics: collapse times, scaling fits, and bound checks.

Everything here reduces to many independent trajectories.  Reproducibility
rests on one rule: trajectory i of a run always uses the stream derived
from (master_seed, i), and aggregation happens in index order over the
complete result arrays.  Worker processes only change who computes which
block, never the numbers, so any statistic is a pure function of its
inputs and the seed.

The headline experiment sweeps the register size N and fits the mean
collapse time to T = a * lnln(N) + b over rows with N >= 4, the smallest
size for which ln ln N is positive.  Rows where
more than 1% of trajectories hit the time horizon are excluded from the
fit and flagged, never silently averaged.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import linregress

from .core import SimParams, derive_seed, derive_stream, noise_sampler
from .sde import euler_step, run_trajectory

__all__ = [
    "CollapseStats",
    "SweepTable",
    "FitResult",
    "run_ensemble",
    "scaling_sweep",
    "fit_lnln",
    "BoundCheckReport",
    "correlation_bound_check",
    "StepSizeReport",
    "initial_step_experiment",
]

# Trajectories are dealt to workers in fixed blocks of this size so the
# partitioning never depends on the worker count.
_BLOCK = 256

# Rows with more exceedances than this fraction of m are unfit for fitting.
_EXCEED_FRACTION = 0.01


@dataclass(frozen=True)
class CollapseStats:
    """Summary of one ensemble at fixed N.

    mean_time and stderr_time cover collapsed trajectories only;
    horizon_exceeded counts the rest, so the winner histogram plus the
    exceedances always add up to the number of realizations.
    """

    n_sites: int
    realizations: int
    mean_time: float
    stderr_time: float
    winner_histogram: np.ndarray
    horizon_exceeded: int

    def __post_init__(self) -> None:
        hist = np.asarray(self.winner_histogram, dtype=np.int64)
        object.__setattr__(self, "winner_histogram", hist)
        if int(hist.sum()) + self.horizon_exceeded != self.realizations:
            raise ValueError("histogram and exceedances must account for every run")

    @property
    def fit_valid(self) -> bool:
        return self.horizon_exceeded <= _EXCEED_FRACTION * self.realizations


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[CollapseStats, ...]

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise ValueError("sweep table cannot be empty")
        sizes = [r.n_sites for r in rows]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("rows must be strictly increasing in N")

    @property
    def n_values(self) -> np.ndarray:
        return np.array([r.n_sites for r in self.rows])

    @property
    def mean_times(self) -> np.ndarray:
        return np.array([r.mean_time for r in self.rows])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr_time for r in self.rows])


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of mean collapse time against ln ln N.

    a is the slope, b the intercept of T = a lnln(N) + b.  slope_stderr
    is the standard error of a, used when comparing fits across noise
    families.  r_squared is 0 by convention when the responses carry no
    variance.
    """

    a: float
    b: float
    r_squared: float
    slope_stderr: float

    def __post_init__(self) -> None:
        if not -1e-12 <= self.r_squared <= 1.0 + 1e-12:
            raise ValueError("r_squared out of range")


def _run_block(args) -> tuple[np.ndarray, np.ndarray]:
    params, start, count, initial = args
    times = np.empty(count)
    winners = np.empty(count, dtype=np.int64)
    for k in range(count):
        stream = derive_stream(params.master_seed, start + k)
        result = run_trajectory(params, stream, initial)
        if result.collapse_time is None:
            times[k] = np.nan
            winners[k] = -1
        else:
            times[k] = result.collapse_time
            winners[k] = result.winner
    return times, winners


def run_ensemble(
    params: SimParams,
    m: int,
    initial: np.ndarray | None = None,
    workers: int = 1,
) -> CollapseStats:
    """Collapse-time statistics over m independent trajectories.

    Trajectory i always runs on the stream derived from
    (params.master_seed, i); with workers > 1 the index blocks are farmed
    out to processes, and the concatenated results are identical to the
    serial ones.  Path recording is disabled regardless of params.
    """
    if m < 1:
        raise ValueError("need at least one realization")
    if workers < 1:
        raise ValueError("workers must be positive")
    params = replace(params, record_path=False)
    if initial is not None:
        initial = np.asarray(initial, dtype=float)

    blocks = [
        (params, start, min(_BLOCK, m - start), initial)
        for start in range(0, m, _BLOCK)
    ]
    if workers == 1 or len(blocks) == 1:
        parts = [_run_block(b) for b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, blocks))

    times = np.concatenate([p[0] for p in parts])
    winners = np.concatenate([p[1] for p in parts])
    collapsed = ~np.isnan(times)
    k = int(collapsed.sum())
    if k > 0:
        mean = float(times[collapsed].mean())
        stderr = (
            float(times[collapsed].std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        )
    else:
        mean = math.nan
        stderr = math.nan
    hist = np.bincount(winners[collapsed], minlength=params.n_sites)
    return CollapseStats(
        n_sites=params.n_sites,
        realizations=m,
        mean_time=mean,
        stderr_time=stderr,
        winner_histogram=hist,
        horizon_exceeded=m - k,
    )


def scaling_sweep(
    n_list,
    params: SimParams,
    m: int,
    workers: int = 1,
) -> SweepTable:
    """One ensemble per register size, each with an independent seed.

    n_list must be strictly increasing.  Row seeds are derived from
    (params.master_seed, N), so adding or removing sizes never perturbs
    the other rows.  The time horizon is recomputed per N from the
    default rule rather than inherited, since a horizon sized for small N
    would truncate large-N runs.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("n_list must be nonempty")
    rows = []
    for n in n_list:
        row_params = SimParams(
            n_sites=int(n),
            dt=params.dt,
            delta=params.delta,
            t_max=None,
            noise_kind=params.noise_kind,
            master_seed=derive_seed(params.master_seed, int(n)),
        )
        rows.append(run_ensemble(row_params, m, workers=workers))
    return SweepTable(rows=tuple(rows))


def fit_lnln(table: SweepTable, n_min: int = 4) -> FitResult:
    """Ordinary least squares of mean time on ln ln N.

    Uses rows with N >= n_min that kept their exceedance rate under 1%.
    n_min below 4 is rejected because ln ln N is zero or negative there
    and the regressor loses meaning.
    """
    if n_min < 4:
        raise ValueError("n_min must be at least 4")
    rows = [r for r in table.rows if r.n_sites >= n_min and r.fit_valid]
    if len(rows) < 3:
        raise ValueError("need at least 3 qualifying rows to fit")
    x = np.array([math.log(math.log(r.n_sites)) for r in rows])
    y = np.array([r.mean_time for r in rows])
    if float(np.ptp(y)) == 0.0:
        # Degenerate response: horizontal line, no explained variance.
        return FitResult(a=0.0, b=float(y[0]), r_squared=0.0, slope_stderr=0.0)
    fit = linregress(x, y)
    r2 = float(fit.rvalue) ** 2
    return FitResult(
        a=float(fit.slope),
        b=float(fit.intercept),
        r_squared=r2,
        slope_stderr=float(fit.stderr),
    )


@dataclass(frozen=True)
class BoundCheckReport:
    """Pairwise product moments against the bound 4 / (4t + (N-1)^2).

    For each requested time: the mean of V_n V_k over unordered pairs and
    over the ensemble, the single largest pair mean, their standard
    errors, the bound, and the two margins in units of standard error
    (positive margin = below the bound).
    """

    n_sites: int
    realizations: int
    times: np.ndarray
    mean_pair: np.ndarray
    stderr_mean: np.ndarray
    max_pair: np.ndarray
    stderr_max: np.ndarray
    bound: np.ndarray
    margin_mean: np.ndarray
    margin_max: np.ndarray

    def satisfied(self, sigmas: float = 3.0) -> bool:
        """True when no grid point exceeds the bound by more than sigmas."""
        return bool(np.all(self.margin_max >= -sigmas))


def correlation_bound_check(
    params: SimParams,
    m: int,
    t_grid,
) -> BoundCheckReport:
    """Monte Carlo estimate of E[V_n V_k] on a time grid, with the bound.

    The diffusion is integrated without any collapse stopping rule, since
    the moment inequality concerns the raw process.  Grid times snap to
    the nearest step.  All m trajectories start uniform, the situation
    the bound addresses.
    """
    if m < 2:
        raise ValueError("need at least two realizations for standard errors")
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if t_grid[0] < 0.0:
        raise ValueError("grid times must be nonnegative")
    n = params.n_sites
    if n < 2:
        raise ValueError("pairwise moments need at least two sites")
    dt = params.dt
    steps_at = np.array([int(round(t / dt)) for t in t_grid])
    grid_times = steps_at * dt
    total_steps = int(steps_at.max())
    draw = noise_sampler(params.noise_kind)
    n_pairs = n * (n - 1) / 2.0

    g = t_grid.size
    sum_mean = np.zeros(g)
    sumsq_mean = np.zeros(g)
    # Per-pair running sums for locating the worst pair at each time.
    sum_outer = np.zeros((g, n, n))
    sumsq_outer = np.zeros((g, n, n))

    for i in range(m):
        stream = derive_stream(params.master_seed, i)
        v = np.full(n, 2.0 / n)
        step_to_slot = {int(s): idx for idx, s in enumerate(steps_at)}
        if 0 in step_to_slot:
            _record_pair_stats(
                v, step_to_slot[0], sum_mean, sumsq_mean, sum_outer, sumsq_outer, n_pairs
            )
        for k in range(1, total_steps + 1):
            v = euler_step(v, draw(stream, n), dt)
            slot = step_to_slot.get(k)
            if slot is not None:
                _record_pair_stats(
                    v, slot, sum_mean, sumsq_mean, sum_outer, sumsq_outer, n_pairs
                )

    mean_pair = sum_mean / m
    var_mean = np.maximum(sumsq_mean / m - mean_pair**2, 0.0)
    stderr_mean = np.sqrt(var_mean / (m - 1))

    mean_outer = sum_outer / m
    off = ~np.eye(n, dtype=bool)
    max_pair = np.empty(g)
    stderr_max = np.empty(g)
    for idx in range(g):
        masked = np.where(off, mean_outer[idx], -np.inf)
        flat = int(np.argmax(masked))
        a, b = divmod(flat, n)
        max_pair[idx] = mean_outer[idx, a, b]
        var = max(sumsq_outer[idx, a, b] / m - max_pair[idx] ** 2, 0.0)
        stderr_max[idx] = math.sqrt(var / (m - 1))

    bound = 4.0 / (4.0 * grid_times + (n - 1) ** 2)
    margin_mean = _margin(bound, mean_pair, stderr_mean)
    margin_max = _margin(bound, max_pair, stderr_max)
    return BoundCheckReport(
        n_sites=n,
        realizations=m,
        times=grid_times,
        mean_pair=mean_pair,
        stderr_mean=stderr_mean,
        max_pair=max_pair,
        stderr_max=stderr_max,
        bound=bound,
        margin_mean=margin_mean,
        margin_max=margin_max,
    )


def _record_pair_stats(v, slot, sum_mean, sumsq_mean, sum_outer, sumsq_outer, n_pairs):
    outer = np.outer(v, v)
    pair_mean = (float(v.sum()) ** 2 - float((v * v).sum())) / (2.0 * n_pairs)
    sum_mean[slot] += pair_mean
    sumsq_mean[slot] += pair_mean * pair_mean
    sum_outer[slot] += outer
    sumsq_outer[slot] += outer * outer


def _margin(bound, value, stderr):
    safe = np.where(stderr > 0.0, stderr, 1.0)
    raw = (bound - value) / safe
    # With zero spread the margin is determined by the sign alone.
    return np.where(stderr > 0.0, raw, np.where(bound >= value, np.inf, -np.inf))


@dataclass(frozen=True)
class StepSizeReport:
    """Running maximum of the first site's early rise, per register size.

    rise is max over t <= horizon of V_1(t) - V_1(0), averaged over
    realizations.  The statistic shrinks as N grows, mirroring the slow
    growth of the collapse time.
    """

    n_values: np.ndarray
    horizon: float
    realizations: int
    mean_rise: np.ndarray
    stderr_rise: np.ndarray


def initial_step_experiment(
    n_list,
    params: SimParams,
    horizon: float = 1.0,
    m: int = 64,
) -> StepSizeReport:
    """Track how far site 1 climbs within a fixed early window.

    Integrates the raw diffusion to the horizon with no stopping rule and
    records the running maximum of V_1 minus its starting value.  Rejects
    horizons shorter than one step.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("n_list must be nonempty")
    if horizon < params.dt:
        raise ValueError("horizon must cover at least one step")
    if m < 1:
        raise ValueError("need at least one realization")
    dt = params.dt
    steps = int(math.floor(horizon / dt + 1e-9))
    means = np.empty(len(n_list))
    stderrs = np.empty(len(n_list))
    for row, n in enumerate(n_list):
        seed = derive_seed(params.master_seed, int(n))
        draw = noise_sampler(params.noise_kind)
        rises = np.empty(m)
        for i in range(m):
            stream = derive_stream(seed, i)
            v = np.full(int(n), 2.0 / int(n))
            v0 = v[0]
            best = 0.0
            for _ in range(steps):
                v = euler_step(v, draw(stream, int(n)), dt)
                rise = v[0] - v0
                if rise > best:
                    best = rise
            rises[i] = best
        means[row] = rises.mean()
        stderrs[row] = rises.std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
    return StepSizeReport(
        n_values=np.asarray([int(n) for n in n_list]),
        horizon=steps * dt,
        realizations=m,
        mean_rise=means,
        stderr_rise=stderrs,
    )
