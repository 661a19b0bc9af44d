"""
Pulse sequences and exact single-state propagation.

A sequence is a timeline of instantaneous pulses and free-evolution
windows. Free evolution is integrated slice by slice: inside a slice the
field (and thus the Hamiltonian) is frozen and the state is advanced by
the exact exponential, which for this Hamiltonian is a phase on each of
uu/dd and an SU(2) rotation (times a phase) on the {ud, du} block.

All propagation happens in the frame rotating at the mean Larmor
frequency, where resonant rf pulses are time independent.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .noise import NoiseRealization
from .physics import CODATA, DD, DU, UD, UU, BASIS_LABELS, FieldConfig

ECHO_TOL = 1e-9


# --- states ----------------------------------------------------------------

@dataclass
class TwoSpinState:
    """Pure (``vector``) or mixed (``rho``) state over (uu, ud, du, dd)."""

    vector: np.ndarray | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        if (self.vector is None) == (self.rho is None):
            raise ValueError("give exactly one of vector or rho")
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=complex).reshape(4)
        else:
            self.rho = np.asarray(self.rho, dtype=complex).reshape(4, 4)

    @classmethod
    def basis(cls, k) -> "TwoSpinState":
        if isinstance(k, str):
            k = BASIS_LABELS.index(k.lower())
        v = np.zeros(4, dtype=complex)
        v[k] = 1.0
        return cls(vector=v)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    def density(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.outer(self.vector, self.vector.conj())

    def probabilities(self) -> np.ndarray:
        if self.vector is not None:
            return np.abs(self.vector) ** 2
        return np.real(np.diag(self.rho)).clip(0.0)

    def norm(self) -> float:
        if self.vector is not None:
            return float(np.linalg.norm(self.vector))
        return float(np.real(np.trace(self.rho)))

    def dfs_block(self) -> np.ndarray:
        return self.density()[1:3, 1:3]

    def parity(self) -> float:
        """Coherence between ud and du, 2 Re rho[ud, du]."""
        return float(2.0 * np.real(self.density()[UD, DU]))

    def dfs_bloch(self) -> np.ndarray:
        """Bloch vector of the {ud, du} block with ud at the north pole (unnormalised)."""
        r = self.dfs_block()
        return np.array([2 * r[0, 1].real, -2 * r[0, 1].imag, (r[0, 0] - r[1, 1]).real])

    def apply(self, U: np.ndarray) -> "TwoSpinState":
        if self.vector is not None:
            return TwoSpinState(vector=U @ self.vector)
        return TwoSpinState(rho=U @ self.rho @ U.conj().T)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(0.5 * ((rho - sigma) + (rho - sigma).conj().T))
    return 0.5 * float(np.sum(np.abs(ev)))


def state_fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    return float(abs(np.vdot(psi, phi)) ** 2)


CHI_PLUS = np.array([0, 1, 1j, 0], dtype=complex) / np.sqrt(2)


# --- segments ---------------------------------------------------------------

@dataclass(frozen=True)
class Prepare:
    target: str = "ud"  # 'uu', 'ud', 'du', 'dd' or 'psi+'
    init_sign: int = 1


@dataclass(frozen=True)
class FreeEvolve:
    duration: float


@dataclass(frozen=True)
class CollectivePulse:
    axis: str
    angle: float


@dataclass(frozen=True)
class DifferentialPhase:
    phi: float


@dataclass(frozen=True)
class Measure:
    pass


Segment = Union[Prepare, FreeEvolve, CollectivePulse, DifferentialPhase, Measure]


@dataclass(frozen=True)
class PulseSequence:
    """Segments with their absolute start times (s)."""

    segments: tuple[Segment, ...]
    times: tuple[float, ...]
    T: float
    f0: float | None = None

    def __post_init__(self):
        if not self.segments or not isinstance(self.segments[0], Prepare):
            raise ValueError("a sequence starts with exactly one Prepare")
        if not isinstance(self.segments[-1], Measure):
            raise ValueError("a sequence ends with exactly one Measure")
        if sum(isinstance(s, Prepare) for s in self.segments) != 1 or \
                sum(isinstance(s, Measure) for s in self.segments) != 1:
            raise ValueError("a sequence holds exactly one Prepare and one Measure")
        if len(self.times) != len(self.segments):
            raise ValueError("one start time per segment")

    @property
    def prepare(self) -> Prepare:
        return self.segments[0]

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments if isinstance(s, FreeEvolve))

    @property
    def echo_times(self) -> list[float]:
        return [t for t, s in zip(self.times, self.segments)
                if isinstance(s, CollectivePulse) and abs(s.angle - math.pi) < 1e-12]

    @classmethod
    def from_segments(cls, segments: Sequence[Segment], f0=None) -> "PulseSequence":
        t, times = 0.0, []
        for s in segments:
            times.append(t)
            if isinstance(s, FreeEvolve):
                t += s.duration
        return cls(tuple(segments), tuple(times), t, f0)


def echo_count(T: float, f0: float) -> int:
    """Number of pi pulses in a symmetric train of rate ``f0`` over ``T``; must be even."""
    x = T * f0
    n = int(round(x))
    if abs(x - n) > ECHO_TOL * max(1.0, x) or n % 2:
        raise ValueError(
            f"T*f0 = {x:g} must be an even integer so the echo pulses come in pairs")
    return n


def echo_train(T: float, f0: float | None) -> list[Segment]:
    """Free evolution over ``T`` interrupted by equidistant x pi pulses.

    Layout: half interval, then (n - 1) full intervals of 1/f0 separated by
    pulses, then a closing half interval. ``f0=None`` gives plain free
    evolution.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if not f0:
        return [FreeEvolve(T)] if T > 0 else []
    if f0 < 0:
        raise ValueError("f0 must be positive")
    n = echo_count(T, f0)
    if n == 0:
        return []
    out: list[Segment] = [FreeEvolve(0.5 / f0)]
    for _ in range(n - 1):
        out += [CollectivePulse("x", math.pi), FreeEvolve(1.0 / f0)]
    out += [CollectivePulse("x", math.pi), FreeEvolve(0.5 / f0)]
    return out


def build_standard_sequence(T: float, f0: float | None, phi_parity: float,
                            phi_init_sign: int = 1, init: str = "ud",
                            analysis: bool = True) -> PulseSequence:
    """Prepare, echo train over ``T``, differential phase, pi/2 analysis, measure.

    ``phi_init_sign=-1`` prepares the DFS partner of ``init`` (ud <-> du),
    which flips the sign of the parity signal. ``analysis=False`` drops
    the differential phase and the pi/2 pulse so the populations
    themselves are measured.
    """
    if phi_init_sign not in (1, -1):
        raise ValueError("phi_init_sign must be +1 or -1")
    if T < 0:
        raise ValueError("T must be non-negative")
    if f0 is not None and f0 <= 0:
        raise ValueError("f0 must be positive")
    segs: list[Segment] = [Prepare(init, phi_init_sign)]
    segs += echo_train(T, f0)
    if analysis:
        segs += [DifferentialPhase(phi_parity), CollectivePulse("x", math.pi / 2)]
    segs.append(Measure())
    return PulseSequence.from_segments(segs, f0)


def effective_target(prep: Prepare) -> str:
    t = prep.target.lower()
    if prep.init_sign == -1:
        swap = {"ud": "du", "du": "ud"}
        if t not in swap:
            raise ValueError("phi_init interleaving needs a ud or du initial state")
        t = swap[t]
    return t


# --- elementary operations ---------------------------------------------------

def single_spin_rotation(axis: str, angle: float) -> np.ndarray:
    from .physics import I2, SX, SY

    sig = {"x": SX, "y": SY}[axis]
    return math.cos(angle / 2) * I2 - 1j * math.sin(angle / 2) * sig


def collective_rotation(axis: str, angle: float) -> np.ndarray:
    r = single_spin_rotation(axis, angle)
    return np.kron(r, r)


def differential_phase_diag(phi) -> np.ndarray:
    """Diagonal of the differential z rotation: ud gains e^{+i phi/2}, du e^{-i phi/2}."""
    phi = np.asarray(phi, dtype=float)
    one = np.ones_like(phi, dtype=complex)
    return np.stack([one, np.exp(0.5j * phi), np.exp(-0.5j * phi), one], axis=-1)


def apply_collective_pulse(state: TwoSpinState, axis: str, angle: float) -> TwoSpinState:
    """Same single-spin rotation on both spins."""
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    return state.apply(collective_rotation(axis, angle))


def apply_differential_phase(state: TwoSpinState, phi: float) -> TwoSpinState:
    return state.apply(np.diag(differential_phase_diag(phi)))


# --- exact slice propagation -------------------------------------------------

def slice_grid(t0: float, t1: float, dt: float):
    """Noise-grid indices and slice lengths covering ``[t0, t1)``."""
    if t1 <= t0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    k0 = int(math.floor(t0 / dt + 1e-9))
    k1 = int(math.ceil(t1 / dt - 1e-9))
    edges = np.clip(dt * np.arange(k0, k1 + 1), t0, t1)
    edges[0], edges[-1] = t0, t1
    lengths = np.diff(edges)
    keep = lengths > 0
    return np.arange(k0, k1)[keep], lengths[keep]


def check_dt(dt: float, xi: float, delta: float = 0.0) -> None:
    rate = abs(delta) + 4.0 * abs(xi)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rate > 0 and dt > 1.0 / (10.0 * rate):
        raise ValueError(f"dt={dt:g} s is too coarse for a DFS rotation rate of {rate:g} rad/s")


def slice_propagator(w1: float, w2: float, xi: float, tau: float) -> np.ndarray:
    """exp(-i H tau / hbar) for constant per-spin frequencies, via the block structure."""
    wbar = 0.5 * (w1 + w2)
    delta = w1 - w2
    U = np.zeros((4, 4), dtype=complex)
    U[UU, UU] = cmath.exp(-1j * (wbar + 2 * xi) * tau)
    U[DD, DD] = cmath.exp(-1j * (-wbar + 2 * xi) * tau)
    r = math.hypot(0.5 * delta, 2 * xi)
    c = math.cos(r * tau)
    sr = tau if r == 0 else math.sin(r * tau) / r
    a = complex(c, -0.5 * delta * sr)
    b = complex(0.0, 2 * xi * sr)
    ph = cmath.exp(2j * xi * tau)
    U[UD, UD], U[UD, DU] = ph * a, -ph * b.conjugate()
    U[DU, UD], U[DU, DU] = ph * b, ph * a.conjugate()
    return U


def evolve_segment(state: TwoSpinState, duration: float, xi: float, d: float = 2.4e-6,
                   field: FieldConfig = FieldConfig(), noise: NoiseRealization | None = None,
                   dt: float = 1e-3, t0: float = 0.0, rotating_frame: bool = True,
                   constants=CODATA) -> TwoSpinState:
    """Propagate ``state`` through ``duration`` of free evolution starting at ``t0``.

    Per-spin frequencies in each slice are ``gamma * B_i`` with
    ``B_{1,2} = B_coll +- grad * d / 2``; ``B_coll`` is the noise offset
    (plus ``field.B0`` when ``rotating_frame`` is False) and ``grad`` is the
    noise trace's gradient, or ``field.grad`` without noise.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    gamma = constants.gyromagnetic
    grad0 = field.grad if noise is None else float(np.max(np.abs(noise.grad)))
    check_dt(dt, xi, gamma * grad0 * d)
    if duration == 0:
        return state
    if noise is not None:
        if noise.times[0] > t0 + 1e-12 or noise.times[-1] + dt < t0 + duration - 1e-9:
            raise ValueError("noise realization does not cover the segment")
        step = float(noise.times[1] - noise.times[0])
        idx, lengths = slice_grid(t0 - noise.times[0], t0 + duration - noise.times[0], step)
    else:
        idx, lengths = slice_grid(t0, t0 + duration, dt)
    base = 0.0 if rotating_frame else field.B0
    U = np.eye(4, dtype=complex)
    for k, tau in zip(idx, lengths):
        if noise is None:
            b_coll, grad = base, field.grad
        else:
            b_coll, grad = base + noise.deltaB[k], noise.grad[k]
        w1 = gamma * (b_coll + 0.5 * grad * d)
        w2 = gamma * (b_coll - 0.5 * grad * d)
        U = slice_propagator(w1, w2, xi, tau) @ U
    return state.apply(U)
