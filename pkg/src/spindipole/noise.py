"""Stationary Gaussian magnetic noise: collective field offsets and gradient jitter.

Both processes are Ornstein-Uhlenbeck, sampled with the exact AR(1) update

    x[k+1] = x[k] * exp(-dt/tau) + sigma * sqrt(1 - exp(-2 dt/tau)) * n[k]

and started from the stationary law, so every sample has standard
deviation ``sigma`` regardless of ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# dt must resolve the correlation time by at least this factor
RESOLUTION = 5.0


@dataclass(frozen=True)
class NoiseConfig:
    collective_rms: float = 0.0  # T
    collective_corr_time: float = 10e-3  # s
    grad_static: float = 0.0  # T/m
    grad_rms: float = 0.0  # T/m
    grad_corr_time: float = 20e-3  # s
    seed: int | None = None

    def __post_init__(self):
        if self.collective_rms < 0 or self.grad_rms < 0:
            raise ValueError("noise RMS amplitudes must be non-negative")
        if self.collective_corr_time <= 0 or self.grad_corr_time <= 0:
            raise ValueError("correlation times must be positive")

    def check_resolution(self, dt: float) -> None:
        for rms, tau, name in (
            (self.collective_rms, self.collective_corr_time, "collective"),
            (self.grad_rms, self.grad_corr_time, "gradient"),
        ):
            if rms > 0 and dt > tau / RESOLUTION:
                raise ValueError(
                    f"dt={dt:g} s does not resolve the {name} noise correlation time "
                    f"{tau:g} s (need dt <= tau/{RESOLUTION:g})"
                )


@dataclass(frozen=True)
class NoiseRealization:
    """One shot's noise trace; sample k holds over [times[k], times[k+1])."""

    times: np.ndarray
    deltaB: np.ndarray
    grad: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("noise time grid must be strictly increasing with >= 2 points")
        if self.deltaB.shape != self.times.shape or self.grad.shape != self.times.shape:
            raise ValueError("noise samples must match the time grid")


class OUStream:
    """``shape``-many independent OU processes advanced one step at a time."""

    def __init__(self, sigma: float, tau: float, dt: float, rng: np.random.Generator,
                 shape: int | tuple = (), mean: float = 0.0):
        self.sigma = float(sigma)
        self.mean = float(mean)
        self.rng = rng
        self.shape = shape
        self._decay = np.exp(-dt / tau)
        self._kick = self.sigma * np.sqrt(-np.expm1(-2.0 * dt / tau))
        if self.sigma > 0:
            self.x = self.sigma * rng.standard_normal(shape)
        else:
            self.x = np.zeros(shape)

    @property
    def value(self) -> np.ndarray:
        return self.mean + self.x

    def step(self) -> np.ndarray:
        """Advance one sample and return the new value."""
        if self.sigma > 0:
            self.x = self.x * self._decay + self._kick * self.rng.standard_normal(self.shape)
        return self.mean + self.x


def sample_noise(cfg: NoiseConfig, duration: float, dt: float,
                 rng: np.random.Generator) -> NoiseRealization:
    """Draw collective-field and gradient traces covering ``[0, duration]``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration < dt:
        raise ValueError("duration must be at least one time step")
    cfg.check_resolution(dt)
    n = int(np.ceil(duration / dt - 1e-9)) + 1
    times = dt * np.arange(n)
    collective = OUStream(cfg.collective_rms, cfg.collective_corr_time, dt, rng)
    gradient = OUStream(cfg.grad_rms, cfg.grad_corr_time, dt, rng, mean=cfg.grad_static)
    dB = np.empty(n)
    gr = np.empty(n)
    dB[0], gr[0] = collective.value, gradient.value
    for k in range(1, n):
        dB[k] = collective.step()
        gr[k] = gradient.step()
    return NoiseRealization(times, dB, gr)


def echo_phase_variance(duration: float, f0: float | None, sigma: float, tau: float) -> float:
    """Variance of the echo-filtered phase int s(t) x(t) dt for OU noise x.

    ``s(t)`` is the +-1 toggling function of a symmetric echo train at rate
    ``f0`` (``None`` for free evolution). Exact for the continuous process.
    """
    if f0:
        n_pulses = int(round(duration * f0))
        lengths = np.array([0.5 / f0] + [1.0 / f0] * (n_pulses - 1) + [0.5 / f0]) if n_pulses else np.array([duration])
    else:
        lengths = np.array([duration])
    signs = (-1.0) ** np.arange(len(lengths))
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    ends = starts + lengths
    grow = -np.expm1(-lengths / tau)
    var = np.sum(2.0 * sigma**2 * tau * (lengths - tau * grow))
    for i in range(len(lengths)):
        for j in range(i + 1, len(lengths)):
            gap = starts[j] - ends[i]
            var += 2.0 * signs[i] * signs[j] * sigma**2 * tau**2 * grow[i] * grow[j] * np.exp(-gap / tau)
    return float(var)
