"""Closed-form readout statistics and state conditioning, no time stepping.

Because the monitoring is quantum nondemolition, the whole measurement
record enters the state update only through the time-integrated,
rescaled signals R_j = (1/tau_m) * integral of r_j.  Conditioned on the
excitation sitting at site n, each R_j is Gaussian with variance t/tau_m
and mean +t/tau_m for j = n, -t/tau_m otherwise; unconditionally the
record is the mixture of these with weights |alpha_n(0)|^2.  Conditioning
the state on a record is a single Bayes update,

    alpha_n(t)  proportional to  alpha_n(0) * exp(R_n),

so outcome statistics at any time come from direct sampling instead of
integrating a stochastic equation.  This makes the module an independent
oracle for the dynamics modules: same physics, disjoint numerics.

All exponential reweighting is done with max-shifted exponents, keeping
results finite for records up to |R| of order 1e4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import derive_stream

__all__ = [
    "ReadoutRecord",
    "draw_latent_site",
    "sample_readouts_for_site",
    "sample_readouts",
    "conditional_state",
    "collapse_criterion",
    "BornResult",
    "born_frequencies",
]

_NORM_ATOL = 1e-9


def _check_amplitudes(alpha0: np.ndarray) -> np.ndarray:
    a = np.asarray(alpha0)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("amplitudes must be a nonempty 1-D vector")
    total = float(np.sum(np.abs(a) ** 2))
    if abs(total - 1.0) > _NORM_ATOL:
        raise ValueError("amplitudes must satisfy sum |alpha|^2 = 1")
    return a


@dataclass(frozen=True)
class ReadoutRecord:
    """Integrated signals R_1..R_N after monitoring for time t."""

    r: np.ndarray
    t: float
    tau_m: float

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size == 0:
            raise ValueError("r must be a nonempty 1-D vector")
        if not np.all(np.isfinite(r)):
            raise ValueError("readout entries must be finite")
        object.__setattr__(self, "r", r)
        if self.t < 0.0:
            raise ValueError("t must be nonnegative")
        if not self.tau_m > 0.0:
            raise ValueError("tau_m must be positive")

    @property
    def n_sites(self) -> int:
        return self.r.size


def draw_latent_site(alpha0: np.ndarray, stream: np.random.Generator) -> int:
    """Sample the excited site with Born weights |alpha_n(0)|^2."""
    a = _check_amplitudes(alpha0)
    p = np.abs(a) ** 2
    p = p / p.sum()
    return int(stream.choice(p.size, p=p))


def sample_readouts_for_site(
    site: int,
    n_sites: int,
    t: float,
    tau_m: float,
    stream: np.random.Generator,
) -> ReadoutRecord:
    """Record conditioned on the excitation occupying a known site.

    Each signal is Gaussian with variance t/tau_m; the occupied site
    drifts to +t/tau_m, all others to -t/tau_m.  At t = 0 the record is
    exactly zero.
    """
    if not 0 <= site < n_sites:
        raise ValueError("site index out of range")
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if not tau_m > 0.0:
        raise ValueError("tau_m must be positive")
    if t == 0.0:
        return ReadoutRecord(np.zeros(n_sites), 0.0, tau_m)
    drift = t / tau_m
    mean = np.full(n_sites, -drift)
    mean[site] = drift
    r = mean + np.sqrt(drift) * stream.standard_normal(n_sites)
    return ReadoutRecord(r, t, tau_m)


def sample_readouts(
    alpha0: np.ndarray,
    t: float,
    tau_m: float,
    stream: np.random.Generator,
) -> ReadoutRecord:
    """Draw one unconditional record: latent site first, then the signals."""
    a = _check_amplitudes(alpha0)
    site = draw_latent_site(a, stream)
    return sample_readouts_for_site(site, a.size, t, tau_m, stream)


def conditional_state(alpha0: np.ndarray, record: ReadoutRecord) -> np.ndarray:
    """Bayes-updated normalized amplitudes given an integrated record.

    Applies alpha_n(t) proportional to alpha_n(0) exp(R_n) with the
    largest R subtracted before exponentiating.  Phases of complex input
    amplitudes carry through untouched; the record only reweights moduli.
    Raises if every site with nonvanishing weight has zero initial
    amplitude, since the posterior is then undefined.
    """
    a = _check_amplitudes(alpha0)
    if record.n_sites != a.size:
        raise ValueError("record length does not match amplitudes")
    shifted = np.exp(record.r - record.r.max())
    raw = a * shifted
    norm = float(np.sqrt(np.sum(np.abs(raw) ** 2)))
    if norm == 0.0:
        raise ValueError("degenerate posterior: no support survives the record")
    return raw / norm


def collapse_criterion(
    record: ReadoutRecord,
    n: int,
    delta: float,
    alpha0: np.ndarray | None = None,
) -> bool:
    """Has the record pushed site n past the collapse confidence level?

    True when the conditioned weights satisfy

        |alpha_n(t)|^2  >=  K * sum_{j != n} |alpha_j(t)|^2,
        K = (1 - delta/2) / (delta/2),

    equivalently 2|alpha_n(t)|^2 - 1 >= 1 - delta, the same threshold the
    trajectory picture applies to V_n = 2|alpha_n|^2.  The comparison is
    done on max-shifted log weights.  alpha0 defaults to the uniform
    superposition.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    size = record.n_sites
    if not 0 <= n < size:
        raise ValueError("site index out of range")
    if alpha0 is None:
        weights = np.full(size, 1.0 / size)
    else:
        weights = np.abs(_check_amplitudes(alpha0)) ** 2
        if weights.size != size:
            raise ValueError("record length does not match amplitudes")
    if weights[n] == 0.0:
        return False
    log_k = np.log(1.0 - delta / 2.0) - np.log(delta / 2.0)
    log_self = 2.0 * record.r[n] + np.log(weights[n])
    others = np.ones(size, dtype=bool)
    others[n] = False
    if not np.any(weights[others] > 0.0):
        return True
    log_rest = float(
        logsumexp(2.0 * record.r[others], b=weights[others])
    )
    return bool(log_self >= log_k + log_rest)


@dataclass(frozen=True)
class BornResult:
    """Outcome tally of repeated sample-and-condition experiments.

    counts[n] is how many runs ended with site n carrying the strictly
    largest conditioned weight; runs whose maximum was tied (always the
    case at t = 0 from a uniform start) land in `unresolved` instead of
    being broken arbitrarily.  frequencies = counts / m.
    """

    counts: np.ndarray
    unresolved: int
    m: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.m


def born_frequencies(
    alpha0: np.ndarray,
    t: float,
    tau_m: float,
    m: int,
    seed: int,
) -> BornResult:
    """Estimate outcome probabilities by direct record sampling.

    Draws m records, conditions the state on each, and assigns the run to
    the site of maximal conditioned weight.  Per-run streams are derived
    from the seed, so the tally does not depend on evaluation order.
    """
    if m < 1:
        raise ValueError("need at least one run")
    a = _check_amplitudes(alpha0)
    size = a.size
    counts = np.zeros(size, dtype=np.int64)
    unresolved = 0
    for idx in range(m):
        stream = derive_stream(seed, idx)
        record = sample_readouts(a, t, tau_m, stream)
        post = np.abs(conditional_state(a, record)) ** 2
        top = post.max()
        winners = np.flatnonzero(post == top)
        if winners.size != 1:
            unresolved += 1
        else:
            counts[winners[0]] += 1
    return BornResult(counts=counts, unresolved=unresolved, m=m)
