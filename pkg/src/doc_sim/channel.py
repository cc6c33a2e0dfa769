"""Per-station transmission-rate models.

A :class:`RateModel` describes the distribution of the instantaneous rate a
station observes when it wins a contention.  Three kinds are supported:

* ``iid-rayleigh``: a fresh Rayleigh fade per observation; the rate is the
  Shannon capacity ``W * log2(1 + rho * |h|^2)`` with ``|h|^2 ~ Exp(1)``.
* ``jakes-rayleigh``: the same marginal, but the fade evolves in time as a
  sum of sinusoids whose autocorrelation follows the Bessel profile
  ``J0(doppler * lag)``.
* ``discrete-mapped``: the Shannon rate is floored to the largest table
  entry strictly below it (0 if there is none).

Models are immutable descriptions.  Sampling state (oscillator phases, the
position of the random stream) lives in a :class:`ChannelSampler`, one per
(station, replication); a sampler is single-threaded.

The analytic functionals (:func:`tail_prob`, :func:`censored_mean`,
:func:`excess_mean`) refer to the stationary distribution, which for the
Jakes kind coincides with the i.i.d. Rayleigh one.  Rates are in bits/s
and thresholds in the same unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from . import _rng

KIND_IID = "iid-rayleigh"
KIND_JAKES = "jakes-rayleigh"
KIND_DISCRETE = "discrete-mapped"
KINDS = (KIND_IID, KIND_JAKES, KIND_DISCRETE)

JAKES_OSCILLATORS = 16

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class RateModel:
    """Immutable description of one station's rate distribution."""

    kind: str
    W: float = 1e7
    rho: float = 1.0
    doppler: float = 0.0            # radians per mini-slot, jakes only
    rate_table: tuple = ()          # ascending allowed rates in bits/s, discrete only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        if not self.W > 0:
            raise ValueError("W must be > 0")
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if self.kind == KIND_JAKES and not self.doppler > 0:
            raise ValueError("jakes-rayleigh needs doppler > 0")
        if self.kind == KIND_DISCRETE:
            t = self.rate_table
            if not t:
                raise ValueError("discrete-mapped needs a nonempty rate_table")
            if any(r <= 0 for r in t) or any(b <= a for a, b in zip(t, t[1:])):
                raise ValueError("rate_table must be strictly ascending and positive")
            object.__setattr__(self, "rate_table", tuple(float(r) for r in t))


def gain_of_rate(model: RateModel, rate: float) -> float:
    """Fading power |h|^2 at which the Shannon rate equals ``rate``."""
    return (2.0 ** (rate / model.W) - 1.0) / model.rho


def shannon_rate(model: RateModel, gain: float) -> float:
    """Shannon rate at fading power |h|^2 = ``gain``."""
    return model.W * math.log2(1.0 + model.rho * gain)


def map_to_table(table, rate: float) -> float:
    """Floor ``rate`` to the largest table entry strictly below it, else 0."""
    out = 0.0
    for r in table:
        if r < rate:
            out = r
        else:
            break
    return out


def tail_prob(model: RateModel, threshold: float) -> float:
    """P(R >= threshold) under the stationary rate distribution."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if threshold == 0:
        return 1.0
    if model.kind == KIND_DISCRETE:
        # The emitted rate is >= threshold iff the underlying Shannon rate
        # exceeds the smallest table entry at or above the threshold.
        for r in model.rate_table:
            if r >= threshold:
                return math.exp(-gain_of_rate(model, r))
        return 0.0
    return math.exp(-gain_of_rate(model, threshold))


def _shannon_censored_mean(model: RateModel, threshold: float) -> float:
    """E[R 1{R >= threshold}] for the continuous Shannon/Rayleigh rate.

    Closed form: with g0 the gain at the threshold,
    E = (W/ln 2) * (exp(-g0) ln(1 + rho g0) + exp(1/rho) E1(g0 + 1/rho)).
    """
    g0 = gain_of_rate(model, threshold)
    inv_rho = 1.0 / model.rho
    if inv_rho > 600.0:
        # exp(1/rho) overflows; fall back to direct quadrature of the tail.
        from scipy.integrate import quad

        val, _ = quad(
            lambda g: model.W * math.log2(1.0 + model.rho * g) * math.exp(-g),
            g0, np.inf,
        )
        return val
    return (model.W / _LN2) * (
        math.exp(-g0) * math.log1p(model.rho * g0) + math.exp(inv_rho) * exp1(g0 + inv_rho)
    )


def censored_mean(model: RateModel, threshold: float) -> float:
    """E[R 1{R >= threshold}] in bits/s."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if model.kind != KIND_DISCRETE:
        return _shannon_censored_mean(model, threshold)
    out = 0.0
    table = model.rate_table
    for k, r in enumerate(table):
        if r < threshold:
            continue
        hi = math.exp(-gain_of_rate(model, table[k + 1])) if k + 1 < len(table) else 0.0
        lo = math.exp(-gain_of_rate(model, r))
        out += r * (lo - hi)
    return out


def excess_mean(model: RateModel, threshold: float) -> float:
    """Mean excess E[(R - threshold)^+] in bits/s."""
    return censored_mean(model, threshold) - threshold * tail_prob(model, threshold)


def mean_rate(model: RateModel) -> float:
    """E[R] in bits/s."""
    return censored_mean(model, 0.0)


def jakes_oscillators(model: RateModel, master_seed: int, station: int, replication: int):
    """Angular rates and phases of one station's fading synthesizer.

    Arrival angles sit on a jittered midpoint grid over the half circle, so
    the per-realization autocorrelation is the midpoint quadrature of the
    Bessel integral and all oscillator frequencies are distinct (duplicate
    frequencies would bias the long-run mean fading power).
    """
    key = _rng.stream_key(master_seed, station, replication, _rng.FADING)
    u = _rng.draw_block(key, 0, JAKES_OSCILLATORS + 1)
    m = np.arange(1, JAKES_OSCILLATORS + 1, dtype=np.float64)
    angles = math.pi * (m - u[0]) / JAKES_OSCILLATORS
    omega = model.doppler * np.cos(angles)
    phase = 2.0 * math.pi * u[1:]
    return omega, phase


def jakes_gain(omega: np.ndarray, phase: np.ndarray, now) -> np.ndarray | float:
    """Fading power |h|^2 of the sum-of-sinusoids process at time ``now``."""
    now = np.asarray(now, dtype=np.float64)
    arg = np.multiply.outer(now, omega) + phase
    re = np.cos(arg).sum(axis=-1)
    im = np.sin(arg).sum(axis=-1)
    g = (re * re + im * im) / omega.shape[0]
    return float(g) if g.ndim == 0 else g


class ChannelSampler:
    """Sampling context of one (station, replication).

    ``sample(now)`` draws the instantaneous rate seen at time ``now`` (in
    mini-slots).  For the Jakes kind, ``now`` must be nondecreasing across
    calls; for the memoryless kinds each call consumes one stream draw.
    """

    def __init__(self, model: RateModel, master_seed: int, station: int = 0,
                 replication: int = 0):
        self.model = model
        self._key = _rng.stream_key(master_seed, station, replication, _rng.GAIN)
        self._n = 0
        self._last_now = -math.inf
        if model.kind == KIND_JAKES:
            self._omega, self._phase = jakes_oscillators(
                model, master_seed, station, replication)

    def sample_gain(self, now: float) -> float:
        """Fading power |h|^2 at time ``now``."""
        if self.model.kind == KIND_JAKES:
            if now < self._last_now:
                raise ValueError("jakes sampling times must be nondecreasing")
            self._last_now = now
            return jakes_gain(self._omega, self._phase, now)
        self._n += 1
        return -math.log1p(-_rng.draw(self._key, self._n))

    def sample(self, now: float) -> float:
        """Instantaneous rate in bits/s at time ``now``."""
        g = self.sample_gain(now)
        rate = shannon_rate(self.model, g)
        if self.model.kind == KIND_DISCRETE:
            return map_to_table(self.model.rate_table, rate)
        return rate


def sample_rate(sampler: ChannelSampler, now: float) -> float:
    """Draw one rate observation from a sampling context."""
    return sampler.sample(now)
