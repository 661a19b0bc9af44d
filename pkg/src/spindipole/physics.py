"""
Closed-form physics for two trapped electron spins.

Constants, the ion-separation and coupling formulas, the two-spin Zeeman +
dipolar Hamiltonian in the basis {uu, ud, du, dd}, and the noiseless parity
signal used as an oracle by the simulator.

Conventions
-----------
* ``u`` (spin up) is the +1 eigenstate of sigma_z; basis order is
  ``UU, UD, DU, DD`` (indices 0..3).
* A per-spin Zeeman frequency ``omega`` is the full up/down splitting,
  ``g * muB * B / hbar``, and enters the Hamiltonian as ``hbar*omega*sz/2``.
* Couplings are stored in rad/s. ``*_hz`` helpers report cycles per second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UU, UD, DU, DD = 0, 1, 2, 3
BASIS_LABELS = ("uu", "ud", "du", "dd")


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants (CODATA 2018) and the 88Sr mass."""

    mu0: float = 1.25663706212e-6
    muB: float = 9.2740100783e-24
    g: float = 2.00231930436256
    hbar: float = 1.054571817e-34
    ke: float = 8.9875517923e9
    e: float = 1.602176634e-19
    # 88Sr, 87.905612 u
    M: float = 87.905612 * 1.66053906660e-27
    h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", 2.0 * np.pi * self.hbar)

    @property
    def gyromagnetic(self) -> float:
        """Spin-flip angular frequency per tesla, g*muB/hbar (rad/s/T)."""
        return self.g * self.muB / self.hbar


CODATA = PhysicalConstants()


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def coupling_strength(d: float, constants: PhysicalConstants = CODATA) -> float:
    """Dipolar coupling xi = mu0 (g muB / 2)^2 / (4 pi hbar d^3), in rad/s."""
    d = _positive("d", d)
    c = constants
    return c.mu0 * (c.g * c.muB / 2.0) ** 2 / (4.0 * np.pi * c.hbar * d**3)


def coupling_strength_hz(d: float, constants: PhysicalConstants = CODATA) -> float:
    return coupling_strength(d, constants) / (2.0 * np.pi)


def ion_separation(f_trap: float, constants: PhysicalConstants = CODATA) -> float:
    """Equilibrium spacing of two ions in a harmonic well of axial frequency f_trap (Hz)."""
    f_trap = _positive("f_trap", f_trap)
    c = constants
    return (2.0 * c.ke * c.e**2 / (c.M * (2.0 * np.pi * f_trap) ** 2)) ** (1.0 / 3.0)


def trap_frequency(d: float, constants: PhysicalConstants = CODATA) -> float:
    """Inverse of :func:`ion_separation`."""
    d = _positive("d", d)
    c = constants
    return np.sqrt(2.0 * c.ke * c.e**2 / (c.M * d**3)) / (2.0 * np.pi)


def larmor_splitting(B: float, constants: PhysicalConstants = CODATA) -> float:
    """Up/down Zeeman splitting g muB B / h, in Hz."""
    B = float(B)
    if B < 0:
        raise ValueError(f"B must be non-negative, got {B!r}")
    return constants.g * constants.muB * B / constants.h


def gradient_detuning(grad: float, d: float, constants: PhysicalConstants = CODATA) -> float:
    """Zeeman frequency difference between the ions, g muB grad d / hbar (rad/s)."""
    d = _positive("d", d)
    return constants.g * constants.muB * float(grad) * d / constants.hbar


@dataclass(frozen=True)
class Geometry:
    """Ion spacing; build with ``Geometry(d=...)`` or ``Geometry.from_trap_frequency``."""

    d: float

    def __post_init__(self):
        _positive("d", self.d)

    @classmethod
    def from_trap_frequency(cls, f_trap: float, constants: PhysicalConstants = CODATA) -> "Geometry":
        return cls(ion_separation(f_trap, constants))

    @property
    def f_trap(self) -> float:
        return trap_frequency(self.d)

    @property
    def xi(self) -> float:
        return coupling_strength(self.d)


@dataclass(frozen=True)
class FieldConfig:
    B0: float = 0.44e-3
    grad: float = 0.0

    def __post_init__(self):
        if self.B0 < 0:
            raise ValueError("B0 must be non-negative")


# Pauli matrices in the {u, d} single-spin basis
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class TwoSpinHamiltonian:
    """H / hbar for two spins; ``matrix`` is in rad/s.

    Multiply by hbar for energies. Only the {ud, du} block carries
    off-diagonal elements.
    """

    omegaA1: float
    omegaA2: float
    xi: float
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def energies(self) -> np.ndarray:
        """Eigenvalues of H/hbar in ascending order (rad/s)."""
        return np.linalg.eigvalsh(self.matrix)


def build_hamiltonian(omegaA1: float, omegaA2: float, xi: float) -> TwoSpinHamiltonian:
    """Zeeman plus magnetic dipole-dipole Hamiltonian, divided by hbar.

    H/hbar = (w1 sz1 + w2 sz2)/2 + 2 xi sz1 sz2 - xi (sx1 sx2 + sy1 sy2)
    """
    vals = np.array([omegaA1, omegaA2, xi], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("Hamiltonian parameters must be finite")
    zeeman = 0.5 * (omegaA1 * np.kron(SZ, I2) + omegaA2 * np.kron(I2, SZ))
    zz = 2.0 * xi * np.kron(SZ, SZ)
    flipflop = -xi * (np.kron(SX, SX) + np.kron(SY, SY))
    H = zeeman + zz + flipflop
    H = 0.5 * (H + H.conj().T)
    return TwoSpinHamiltonian(float(omegaA1), float(omegaA2), float(xi), H)


def dfs_effective_hamiltonian(H: TwoSpinHamiltonian, atol: float = 1e-12) -> tuple[float, float]:
    """Rotation rates of the {ud, du} Bloch vector generated by ``H``.

    Returns ``(delta, coupling)``: the z-rate (Zeeman difference
    w1 - w2) and the x-rate (4 xi), both in rad/s. With ud as the north
    pole the Bloch vector precesses about (-coupling, 0, delta).
    """
    m = H.matrix
    scale = max(1.0, float(np.max(np.abs(m))))
    block = np.zeros((4, 4), dtype=bool)
    block[1:3, 1:3] = True
    offdiag = m.copy()
    np.fill_diagonal(offdiag, 0.0)
    if np.max(np.abs(offdiag[~block]), initial=0.0) > atol * scale:
        raise ValueError("Hamiltonian couples the decoherence-free subspace to uu/dd")
    delta = float(np.real(m[UD, UD] - m[DU, DU]))
    coupling = float(-2.0 * np.real(m[UD, DU]))
    return delta, coupling


def ideal_parity(T: float, xi: float, phi_parity: float, init_sign: int = 1) -> float:
    """Noiseless, perfectly detected parity signal s * sin(4 xi T) * sin(phi)."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if init_sign not in (1, -1):
        raise ValueError("init_sign must be +1 or -1")
    return init_sign * float(np.sin(4.0 * xi * T) * np.sin(phi_parity))


def entangling_time(xi: float) -> float:
    """Time for the ud -> (ud + i du)/sqrt(2) quarter turn, pi / (8 xi)."""
    return np.pi / (8.0 * _positive("xi", xi))
