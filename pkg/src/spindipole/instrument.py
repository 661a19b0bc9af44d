"""
Preparation and state-detection imperfections.

Detection distinguishes three fluorescence classes: both spins up (UU),
both down (DD), or exactly one up (ONE). Each spin is misread
independently: up is read correctly with probability ``D_up(T)`` and
down with ``D_down(T)``. Both fidelities drift linearly with the
experiment time ``T`` and are clamped to ``[0.5, 1]``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .physics import BASIS_LABELS, DD, DU, UD, UU


class DetectionOutcome(enum.IntEnum):
    UU = 0
    DD = 1
    ONE = 2


OUTCOMES = (DetectionOutcome.UU, DetectionOutcome.DD, DetectionOutcome.ONE)

# basis index -> outcome class under perfect detection
TRUE_CLASS = np.array([DetectionOutcome.UU, DetectionOutcome.ONE, DetectionOutcome.ONE, DetectionOutcome.DD])


@dataclass(frozen=True)
class FidelityLine:
    """Affine fidelity ``intercept + slope * x`` clamped to ``[lo, hi]``."""

    intercept: float
    slope: float = 0.0
    lo: float = 0.5
    hi: float = 1.0

    def __call__(self, x):
        return np.clip(self.intercept + self.slope * np.asarray(x, dtype=float), self.lo, self.hi)

    def shifted(self, delta: float) -> "FidelityLine":
        return replace(self, intercept=self.intercept + delta)


@dataclass(frozen=True)
class InstrumentModel:
    prep_fidelity: float = 0.99
    up: FidelityLine = FidelityLine(1.0)
    down: FidelityLine = FidelityLine(1.0)
    entangled_fidelity: float = 0.95
    pi_pulse_duration: float = 10e-6  # informational; pulses are instantaneous
    pulse_error: float = 0.0  # rad RMS

    def __post_init__(self):
        for name in ("prep_fidelity", "entangled_fidelity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.pulse_error < 0:
            raise ValueError("pulse_error must be non-negative")

    def D_up(self, T: float) -> float:
        return float(self.up(T))

    def D_down(self, T: float) -> float:
        return float(self.down(T))

    def confusion(self, T: float) -> np.ndarray:
        return confusion_matrix(self.D_up(T), self.D_down(T))

    @property
    def prep_contrast(self) -> float:
        """Parity contrast surviving preparation: P(ud) - P(du) for a ud target."""
        return 2.0 * self.prep_fidelity - 1.0


def confusion_matrix(d_up: float, d_down: float) -> np.ndarray:
    """``C[observed, true]`` over (UU, DD, ONE) for independent per-spin misreads."""
    u, d = d_up, d_down
    return np.array([
        [u * u, (1 - d) ** 2, u * (1 - d)],
        [(1 - u) ** 2, d * d, (1 - u) * d],
        [2 * u * (1 - u), 2 * d * (1 - d), u * d + (1 - u) * (1 - d)],
    ])


def basis_confusion(d_up: float, d_down: float) -> np.ndarray:
    """``C[observed class, true basis state]``, shape (3, 4)."""
    C = confusion_matrix(d_up, d_down)
    return C[:, TRUE_CLASS]


def outcome_distribution(basis_probs, d_up: float, d_down: float) -> np.ndarray:
    """Probabilities of (UU, DD, ONE) for a distribution over basis states."""
    p = np.asarray(basis_probs, dtype=float)
    return p @ basis_confusion(d_up, d_down).T


def product_state_probs(target: int, fidelity: float) -> np.ndarray:
    """Distribution over basis states when each spin lands on its target w.p. ``fidelity``."""
    s1, s2 = divmod(target, 2)
    probs = np.empty(4)
    for k in range(4):
        k1, k2 = divmod(k, 2)
        probs[k] = (fidelity if k1 == s1 else 1 - fidelity) * (fidelity if k2 == s2 else 1 - fidelity)
    return probs


def _target_index(target) -> int:
    if isinstance(target, str):
        return BASIS_LABELS.index(target.lower())
    target = int(target)
    if target not in (UU, UD, DU, DD):
        raise ValueError(f"unknown product state {target!r}")
    return target


def prepare_state(target, model: InstrumentModel, rng: np.random.Generator, size=None):
    """Sample the basis state actually prepared when aiming for ``target``.

    Returns a :class:`~spindipole.sequence.TwoSpinState` for a single draw,
    or an integer array of basis indices when ``size`` is given.
    """
    from .sequence import TwoSpinState

    t = _target_index(target)
    flips = rng.random((2,) if size is None else (2, size)) >= model.prep_fidelity
    s1, s2 = divmod(t, 2)
    k = 2 * (s1 ^ flips[0]) + (s2 ^ flips[1])
    if size is None:
        return TwoSpinState.basis(int(k))
    return k.astype(np.int64)


PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)


def prepare_entangled(fidelity: float, rng: np.random.Generator | None = None):
    """Werner-type mixture ``F |psi+><psi+| + (1 - F) I/4``."""
    from .sequence import TwoSpinState

    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    rho = fidelity * np.outer(PSI_PLUS, PSI_PLUS.conj()) + (1 - fidelity) * np.eye(4) / 4
    return TwoSpinState(rho=rho)


def detect(state_probs, model: InstrumentModel, T: float, rng: np.random.Generator, size=None):
    """Projective measurement followed by independent per-spin misreads."""
    p = np.asarray(state_probs, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("state probabilities must sum to 1")
    n = 1 if size is None else size
    true = rng.choice(4, size=n, p=p)
    out = classify(true, model.D_up(T), model.D_down(T), rng)
    return DetectionOutcome(int(out[0])) if size is None else out


def classify(true_states: np.ndarray, d_up: float, d_down: float,
             rng: np.random.Generator) -> np.ndarray:
    """Map true basis indices to observed outcome classes with random misreads."""
    true_states = np.asarray(true_states)
    spins = np.stack([true_states // 2, true_states % 2])  # 0 = up, 1 = down
    keep = np.where(spins == 0, d_up, d_down)
    read = spins ^ (rng.random(spins.shape) >= keep)
    n_down = read.sum(axis=0)
    return np.choose(n_down, [DetectionOutcome.UU, DetectionOutcome.ONE, DetectionOutcome.DD]).astype(np.int64)


def contrast_from_fidelity(D: float) -> float:
    """Parity visibility factor 1 - 4 D (1 - D) = (2D - 1)^2."""
    return 1.0 - 4.0 * D * (1.0 - D)


def detection_contrast(model: InstrumentModel, T: float) -> float:
    D = 0.5 * (model.D_up(T) + model.D_down(T))
    return contrast_from_fidelity(D)


def parity_contrast(model: InstrumentModel, T: float) -> float:
    """Detection contrast times the preparation contrast."""
    return detection_contrast(model, T) * model.prep_contrast


# --- calibration -----------------------------------------------------------

def fit_fidelity_line(xs, fs) -> FidelityLine:
    """Least-squares straight line through ``(x, fidelity)`` points."""
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least two calibration points")
    if np.ptp(xs) == 0:
        raise ValueError("calibration points must span more than one abscissa")
    slope, intercept = np.polyfit(xs, fs, 1)
    return FidelityLine(float(intercept), float(slope))


def fidelity_from_calibration(points: Iterable[tuple[float, str, float]],
                              readout: str = "pair") -> tuple[FidelityLine, FidelityLine]:
    """Per-spin detection lines ``(up, down)`` from calibration measurements.

    ``points`` are ``(x, label, fidelity)`` with label ``"UU"`` or ``"DD"``
    and ``x`` the experiment time (or ion distance). With
    ``readout="pair"`` each fidelity is the probability of reading the
    pair correctly, i.e. ``D**2`` under independent misreads, and is
    converted to a per-spin fidelity before fitting. ``readout="spin"``
    takes the numbers as per-spin fidelities directly.
    """
    if readout not in ("pair", "spin"):
        raise ValueError("readout must be 'pair' or 'spin'")
    by_class: dict[str, list[tuple[float, float]]] = {"UU": [], "DD": []}
    for x, label, f in points:
        label = str(label).upper()
        if label not in by_class:
            raise ValueError(f"unknown calibration class {label!r}")
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"fidelity {f} outside [0, 1]")
        by_class[label].append((float(x), float(f)))
    lines = []
    for label in ("UU", "DD"):
        pts = by_class[label]
        if len(pts) < 2:
            raise ValueError(f"class {label} needs at least two calibration points")
        xs, fs = np.array(pts).T
        if readout == "pair":
            fs = np.sqrt(fs)
        lines.append(fit_fidelity_line(xs, fs))
    return lines[0], lines[1]


def read_calibration_table(path) -> list[tuple[float, str, float]]:
    """Read a calibration CSV with columns ``x, class, fidelity``.

    Blank lines and lines starting with ``#`` are skipped; the header row
    is optional.
    """
    rows = []
    with open(Path(path), newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    for row in csv.reader(lines):
        row = [c.strip() for c in row]
        if len(row) != 3:
            raise ValueError(f"{path}: expected 3 columns, got {row}")
        try:
            x = float(row[0])
        except ValueError:
            continue  # header
        rows.append((x, row[1], float(row[2])))
    if not rows:
        raise ValueError(f"{path}: no calibration rows")
    return rows


def write_calibration_table(path, points) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "class", "fidelity"])
        for x, label, f in points:
            w.writerow([f"{x:.12g}", label, f"{f:.12g}"])
