"""
Monte-Carlo shot engine.

Shots are propagated in batches. For each batch the full sequence
propagator ``U`` (shape ``(n, 4, 4)``) is built once per shot: free
evolution windows contribute an SU(2) rotation on the {ud, du} block
(a time-ordered product of exact per-slice rotations, reduced pairwise)
and opposite collective phases on uu and dd. Pulses are tensor squares
of single-spin rotations. The same propagators feed both the sampled
outcomes and the exact outcome probabilities used as an oracle.

Randomness: every (cell, batch) pair draws from its own stream,
``SeedSequence(seed, spawn_key=(cell, batch))``, so results do not depend
on thread scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .instrument import (
    PSI_PLUS,
    DetectionOutcome,
    InstrumentModel,
    basis_confusion,
    classify,
    product_state_probs,
    _target_index,
)
from .noise import NoiseConfig
from .physics import CODATA, FieldConfig, coupling_strength
from .sequence import (
    CollectivePulse,
    DifferentialPhase,
    FreeEvolve,
    PulseSequence,
    build_standard_sequence,
    check_dt,
    differential_phase_diag,
    effective_target,
    single_spin_rotation,
    slice_grid,
)

BATCH_SIZE = 1000
# longest run of slices reduced at once (memory bound)
TIME_CHUNK = 2048


@dataclass(frozen=True)
class SimContext:
    """Everything a shot needs besides the pulse sequence."""

    d: float = 2.4e-6
    field: FieldConfig = FieldConfig()
    noise: NoiseConfig = NoiseConfig()
    instrument: InstrumentModel = InstrumentModel()
    dt: float = 1e-3
    xi: float | None = None  # defaults to the dipolar value at d
    prep: str = "product"  # or "psi+"

    def __post_init__(self):
        if self.xi is None:
            object.__setattr__(self, "xi", coupling_strength(self.d))
        if self.prep not in ("product", "psi+"):
            raise ValueError("prep must be 'product' or 'psi+'")

    @property
    def static_grad(self) -> float:
        return self.field.grad + self.noise.grad_static

    @property
    def static_detuning(self) -> float:
        return CODATA.gyromagnetic * self.static_grad * self.d


@dataclass
class ShotResult:
    outcome: DetectionOutcome
    dfs_bloch: np.ndarray | None = None


@dataclass
class MeasurementRecord:
    n_UU: int
    n_DD: int
    n_ONE: int
    T: float
    d: float
    phi_parity: float
    init_sign: int = 1
    oracle: np.ndarray | None = field(default=None, repr=False)  # expected (UU, DD, ONE) frequencies
    outcomes: np.ndarray | None = field(default=None, repr=False)  # per-shot classes

    def __post_init__(self):
        if min(self.n_UU, self.n_DD, self.n_ONE) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def N(self) -> int:
        return self.n_UU + self.n_DD + self.n_ONE

    @property
    def counts(self) -> np.ndarray:
        return np.array([self.n_UU, self.n_DD, self.n_ONE])

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.N


# --- noise on the time grid ---------------------------------------------------

class _GridOU:
    """OU samples on the grid t_k = k*dt for ``n`` shots, drawn lazily in blocks."""

    def __init__(self, sigma, tau, dt, rng, n):
        self.rng = rng
        self.n = n
        self.a = math.exp(-dt / tau)
        self.b = sigma * math.sqrt(-math.expm1(-2.0 * dt / tau))
        self.x = sigma * rng.standard_normal(n)
        self.k = 0

    def take(self, k0: int, k1: int) -> np.ndarray:
        if k0 < self.k:
            raise RuntimeError("noise grid cannot rewind")
        need = k1 - 1 - self.k
        block = self.x[:, None]
        if need > 0:
            w = self.rng.standard_normal((self.n, need))
            y, _ = lfilter([self.b], [1.0, -self.a], w, axis=1, zi=(self.a * self.x)[:, None])
            block = np.concatenate([block, y], axis=1)
            self.x = y[:, -1]
            self.k = k1 - 1
        return block[:, k0 - (self.k - block.shape[1] + 1):]


def _dfs_slices(delta, tau, xi):
    """First columns (a, b) of the exact slice rotations exp(-i tau (delta/2 sz - 2 xi sx))."""
    r = np.hypot(0.5 * delta, 2.0 * xi)
    x = r * tau
    with np.errstate(invalid="ignore", divide="ignore"):
        sr = np.where(r > 0, np.sin(x) / np.where(r > 0, r, 1.0), tau)
    a = np.cos(x) - 0.5j * delta * sr
    b = 2j * xi * sr
    return a, b


def _chain(a, b):
    """Time-ordered product of SU(2) matrices along the last axis (index 0 first)."""
    while a.shape[-1] > 1:
        if a.shape[-1] % 2:
            pad = [(0, 0)] * (a.ndim - 1) + [(0, 1)]
            a = np.pad(a, pad, constant_values=1.0)
            b = np.pad(b, pad, constant_values=0.0)
        a1, b1, a2, b2 = a[..., 0::2], b[..., 0::2], a[..., 1::2], b[..., 1::2]
        a, b = a2 * a1 - np.conj(b2) * b1, b2 * a1 + np.conj(a2) * b1
    return a[..., 0], b[..., 0]


def _compose(a2, b2, a1, b1):
    return a2 * a1 - np.conj(b2) * b1, b2 * a1 + np.conj(a2) * b1


class _BatchPropagator:
    def __init__(self, ctx: SimContext, n: int, rng: np.random.Generator):
        self.ctx = ctx
        self.n = n
        self.rng = rng
        nz = ctx.noise
        nz.check_resolution(ctx.dt)
        self.gamma = CODATA.gyromagnetic
        self.coll = _GridOU(nz.collective_rms, nz.collective_corr_time, ctx.dt, rng, n) \
            if nz.collective_rms > 0 else None
        self.grad = _GridOU(nz.grad_rms, nz.grad_corr_time, ctx.dt, rng, n) \
            if nz.grad_rms > 0 else None

    def free(self, U, t0, L):
        ctx, xi = self.ctx, self.ctx.xi
        delta0 = ctx.static_detuning
        if self.grad is None:
            a, b = _dfs_slices(np.array(delta0), np.array(L), xi)
            a = np.broadcast_to(a, (self.n,))
            b = np.broadcast_to(b, (self.n,))
        else:
            a = np.ones(self.n, dtype=complex)
            b = np.zeros(self.n, dtype=complex)
        phi_c = np.zeros(self.n)
        if self.grad is not None or self.coll is not None:
            idx, lengths = slice_grid(t0, t0 + L, ctx.dt)
            for s in range(0, len(idx), TIME_CHUNK):
                ii, tau = idx[s:s + TIME_CHUNK], lengths[s:s + TIME_CHUNK]
                if self.grad is not None:
                    g = self.grad.take(ii[0], ii[-1] + 1)
                    delta = delta0 + self.gamma * ctx.d * g
                    ca, cb = _chain(*_dfs_slices(delta, tau, xi))
                    a, b = _compose(ca, cb, a, b)
                if self.coll is not None:
                    phi_c += self.gamma * (self.coll.take(ii[0], ii[-1] + 1) @ tau)
        ph = np.exp(2j * xi * L)
        r1, r2 = U[:, 1, :].copy(), U[:, 2, :]
        U[:, 1, :] = ph * (a[:, None] * r1 - np.conj(b)[:, None] * r2)
        U[:, 2, :] = ph * (b[:, None] * r1 + np.conj(a)[:, None] * r2)
        U[:, 0, :] *= np.exp(-1j * (phi_c + 2 * xi * L))[:, None]
        U[:, 3, :] *= np.exp(-1j * (-phi_c + 2 * xi * L))[:, None]
        return U

    def pulse(self, U, seg: CollectivePulse):
        err = self.ctx.instrument.pulse_error
        if err > 0:
            ang = seg.angle + err * self.rng.standard_normal(self.n)
            sig = {"x": np.array([[0, 1], [1, 0]]), "y": np.array([[0, -1j], [1j, 0]])}[seg.axis]
            r = np.cos(ang / 2)[:, None, None] * np.eye(2) - 1j * np.sin(ang / 2)[:, None, None] * sig
            P = np.einsum("nac,nbd->nabcd", r, r).reshape(self.n, 4, 4)
        else:
            r = single_spin_rotation(seg.axis, seg.angle)
            P = np.kron(r, r)
        return P @ U

    def run(self, seq: PulseSequence) -> np.ndarray:
        ctx = self.ctx
        if ctx.noise.grad_rms > 0 or ctx.noise.collective_rms > 0:
            check_dt(ctx.dt, ctx.xi, ctx.static_detuning + self.gamma * ctx.d * 5 * ctx.noise.grad_rms)
        U = np.broadcast_to(np.eye(4, dtype=complex), (self.n, 4, 4)).copy()
        for t0, seg in zip(seq.times, seq.segments):
            if isinstance(seg, FreeEvolve):
                if seg.duration > 0:
                    U = self.free(U, t0, seg.duration)
            elif isinstance(seg, CollectivePulse):
                U = self.pulse(U, seg)
            elif isinstance(seg, DifferentialPhase):
                U = U * differential_phase_diag(seg.phi)[None, :, None]
        return U


def propagate_batch(seq: PulseSequence, ctx: SimContext, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Sequence propagators for ``n`` independent noise realizations, shape ``(n, 4, 4)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return _BatchPropagator(ctx, n, rng).run(seq)


# --- sampling -----------------------------------------------------------------

def _initial_weights(seq: PulseSequence, ctx: SimContext):
    """(pure states (K, 4), weights (K,)) of the prepared mixture."""
    if ctx.prep == "psi+":
        F = ctx.instrument.entangled_fidelity
        states = np.vstack([PSI_PLUS, np.eye(4, dtype=complex)])
        return states, np.array([F] + [(1 - F) / 4] * 4)
    target = _target_index(effective_target(seq.prepare))
    return np.eye(4, dtype=complex), product_state_probs(target, ctx.instrument.prep_fidelity)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


def simulate_batch(seq: PulseSequence, ctx: SimContext, n: int, rng: np.random.Generator):
    """Sample ``n`` shots. Returns (outcomes, oracle outcome probabilities, final amplitudes)."""
    U = propagate_batch(seq, ctx, n, rng)
    states, weights = _initial_weights(seq, ctx)
    # exact basis populations averaged over the prepared mixture, per realization
    amps_all = np.einsum("nij,kj->nki", U, states)
    pops = np.einsum("k,nki->ni", weights, np.abs(amps_all) ** 2)
    choice = _sample_rows(np.broadcast_to(weights, (n, len(weights))), rng)
    amps = amps_all[np.arange(n), choice]
    true = _sample_rows(np.abs(amps) ** 2, rng)
    T = seq.duration
    u, d = ctx.instrument.D_up(T), ctx.instrument.D_down(T)
    outcomes = classify(true, u, d, rng)
    oracle = pops.mean(axis=0) @ basis_confusion(u, d).T
    return outcomes, oracle, amps


def _batch_rng(seed: int, cell: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, batch)))


def simulate_cell(seq: PulseSequence, ctx: SimContext, shots: int, seed: int,
                  cell: int = 0, batch_size: int = BATCH_SIZE):
    """All shots of one configuration. Returns (outcomes, oracle frequencies)."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    outs, oracle = [], np.zeros(3)
    for b, start in enumerate(range(0, shots, batch_size)):
        n = min(batch_size, shots - start)
        o, p, _ = simulate_batch(seq, ctx, n, _batch_rng(seed, cell, b))
        outs.append(o)
        oracle += n * p
    return np.concatenate(outs), oracle / shots


def record_from_outcomes(outcomes, oracle, seq: PulseSequence, ctx: SimContext,
                         phi_parity: float, init_sign: int) -> MeasurementRecord:
    c = np.bincount(outcomes, minlength=3)
    return MeasurementRecord(int(c[DetectionOutcome.UU]), int(c[DetectionOutcome.DD]),
                             int(c[DetectionOutcome.ONE]), seq.duration, ctx.d,
                             float(phi_parity), init_sign, oracle, outcomes.astype(np.int8))


# --- config-level entry points ------------------------------------------------

def run_shot(cfg, rng: np.random.Generator, phi_parity: float | None = None,
             init_sign: int = 1) -> ShotResult:
    """One stochastic realization of the configured experiment."""
    sq = cfg.sequence
    phi = sq.phi_parity[0] if phi_parity is None else phi_parity
    seq = build_standard_sequence(sq.T, sq.f0, phi, init_sign, sq.init, sq.analysis)
    out, _, amps = simulate_batch(seq, cfg.context(), 1, rng)
    a, b = amps[0, 1], amps[0, 2]
    bloch = np.array([2 * (np.conj(b) * a).real, 2 * (np.conj(b) * a).imag, abs(a) ** 2 - abs(b) ** 2])
    return ShotResult(DetectionOutcome(int(out[0])), bloch)


def experiment_cells(cfg):
    """(phi_parity, init_sign, shots) for every cell; signs split the shots evenly."""
    sq = cfg.sequence
    N = cfg.run.shots
    if N < 1:
        raise ValueError("shots must be at least 1")
    signs = [(1, N - N // 2), (-1, N // 2)] if sq.interleave else [(1, N)]
    return [(phi, s, n) for phi in sq.phi_parity for s, n in signs if n > 0]


def run_experiment(cfg, threads: int = 1, cell_offset: int = 0) -> list[MeasurementRecord]:
    """One record per (phi_parity, init sign) cell, in grid order."""
    ctx = cfg.context()
    sq = cfg.sequence
    cells = experiment_cells(cfg)

    def work(i):
        phi, s, n = cells[i]
        seq = build_standard_sequence(sq.T, sq.f0, phi, s, sq.init, sq.analysis)
        outs, oracle = simulate_cell(seq, ctx, n, cfg.run.seed, cell_offset + i, cfg.run.batch_size)
        return record_from_outcomes(outs, oracle, seq, ctx, phi, s)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(work, range(len(cells))))
    return [work(i) for i in range(len(cells))]
