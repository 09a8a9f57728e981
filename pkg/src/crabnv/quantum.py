"""Spin operators, states, density matrices and fidelity measures.

Basis order everywhere is (|m_s=0>, |m_s=-1>, |m_s=+1>), so the working
qubit {|0>, |-1>} is the leading 2x2 block of every operator.

Bloch vectors follow the parameterization

    rho = 1/2 [[1 + z, x + i y],
               [x - i y, 1 - z]]

with |0> at the north pole (z = +1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError, LeakageError

NORM_TOL = 1e-9
LEAKAGE_THRESHOLD = 0.01


def _readonly(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state of the 2-level qubit or the full 3-level spin."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _readonly(np.ravel(self.amplitudes))
        if amps.size not in (2, 3):
            raise DimensionMismatch(f"state dimension must be 2 or 3, got {amps.size}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> "QuantumState":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise DomainError("cannot normalize the zero vector")
        return cls(amps / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def embed(self, dim: int) -> "QuantumState":
        """Zero-pad (2 -> 3) or truncate a leakage-free state (3 -> 2)."""
        if dim == self.dim:
            return self
        if dim == 3:
            return QuantumState(np.append(self.amplitudes, 0.0))
        if abs(self.amplitudes[2]) ** 2 >= LEAKAGE_THRESHOLD:
            raise LeakageError("cannot truncate a state with |+1> population >= 0.01")
        return QuantumState.normalized(self.amplitudes[:2])

    def __repr__(self):
        return f"QuantumState({np.array2string(self.amplitudes, precision=6)})"


def basis_state(label: str, dim: int = 2) -> QuantumState:
    """Return |m_s=label> for label in {"0", "-1", "+1"}."""
    index = {"0": 0, "-1": 1, "+1": 2}[label]
    if index >= dim:
        raise DimensionMismatch(f"|{label}> does not exist in dimension {dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[index] = 1.0
    return QuantumState(amps)


def state_from_bloch(theta: float, phi: float) -> QuantumState:
    """Qubit state whose Bloch vector is (sin t cos p, sin t sin p, cos t)."""
    return QuantumState([np.cos(theta / 2), np.exp(-1j * phi) * np.sin(theta / 2)])


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.x**2 + self.y**2 + self.z**2 > 1 + NORM_TOL:
            raise DomainError(f"Bloch vector {self.as_array()} lies outside the unit ball")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """2x2 density matrix over the qubit subspace {|0>, |-1>}."""

    entries: np.ndarray

    def __post_init__(self):
        rho = _readonly(self.entries)
        if rho.shape != (2, 2):
            raise DimensionMismatch(f"density matrix must be 2x2, got {rho.shape}")
        if not np.allclose(rho, rho.conj().T, rtol=0, atol=NORM_TOL):
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > NORM_TOL:
            raise DomainError(f"density matrix trace is {np.trace(rho).real}, not 1")
        if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
            raise DomainError("density matrix is not positive semidefinite")
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_bloch(cls, b: BlochVector) -> "DensityMatrix":
        return cls(0.5 * np.array([[1 + b.z, b.x + 1j * b.y], [b.x - 1j * b.y, 1 - b.z]]))

    def as_real_list(self) -> list[float]:
        """Entries flattened row-major as (re, im) pairs: 8 real numbers."""
        return [float(v) for z in self.entries.ravel() for v in (z.real, z.imag)]

    def __repr__(self):
        return f"DensityMatrix({np.array2string(self.entries, precision=4)})"


@dataclass(frozen=True, eq=False)
class SpinOperators:
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray


def spin1_operators() -> SpinOperators:
    """Spin-1 matrices in the (|0>, |-1>, |+1>) basis."""
    s_plus = np.zeros((3, 3), dtype=complex)
    # S+|-1> = sqrt(2)|0>, S+|0> = sqrt(2)|+1>
    s_plus[0, 1] = np.sqrt(2)
    s_plus[2, 0] = np.sqrt(2)
    s_minus = s_plus.conj().T
    sx = (s_plus + s_minus) / 2
    sy = (s_plus - s_minus) / 2j
    sz = np.diag([0.0, -1.0, 1.0]).astype(complex)
    for m in (sx, sy, sz):
        m.setflags(write=False)
    return SpinOperators(sx, sy, sz)


def density_from_state(psi: QuantumState) -> DensityMatrix:
    amps = psi.amplitudes
    if psi.dim == 3:
        if abs(amps[2]) ** 2 >= LEAKAGE_THRESHOLD:
            raise LeakageError(
                f"|+1> population {abs(amps[2]) ** 2:.4g} exceeds {LEAKAGE_THRESHOLD}")
        amps = amps[:2]
    rho = np.outer(amps, amps.conj())
    rho /= np.trace(rho).real
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def fidelity(target: QuantumState, rho) -> float:
    """F = sqrt(<target|rho|target>) for a pure qubit target.

    ``rho`` may also be a plain Hermitian, unit-trace 2x2 array: measured
    reconstructions are not always positive semidefinite.
    """
    if target.dim != 2:
        raise DimensionMismatch("fidelity target must be a 2-level state")
    if isinstance(rho, DensityMatrix):
        entries = rho.entries
    else:
        entries = np.asarray(rho, dtype=complex)
        if entries.shape != (2, 2):
            raise DimensionMismatch(f"density matrix must be 2x2, got {entries.shape}")
        if not np.allclose(entries, entries.conj().T, rtol=0, atol=NORM_TOL):
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(entries) - 1) > NORM_TOL:
            raise DomainError("density matrix trace is not 1")
    t = target.amplitudes
    value = np.real(t.conj() @ entries @ t)
    return float(np.sqrt(np.clip(value, 0.0, 1.0)))


def overlap_probability(psi: QuantumState, phi: QuantumState) -> float:
    """|<psi|phi>|^2; equal to fidelity squared for pure states."""
    if psi.dim != phi.dim:
        raise DimensionMismatch(f"dimensions differ: {psi.dim} vs {phi.dim}")
    return float(np.clip(abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2, 0.0, 1.0))


def bloch_from_density(rho: DensityMatrix) -> BlochVector:
    r = rho.entries
    z = float((r[0, 0] - r[1, 1]).real)
    x = float(2 * r[0, 1].real)
    y = float(2 * r[0, 1].imag)
    # roundoff on pure states can push |r| just past 1
    length = np.sqrt(x * x + y * y + z * z)
    if length > 1:
        x, y, z = x / length, y / length, z / length
    return BlochVector(x, y, z)


def larmor_phase(tau: float, omega_L: float) -> float:
    """Phase in radians accumulated over tau (ns) at omega_L (MHz)."""
    return 2 * np.pi * omega_L * tau * 1e-3


def free_phase_evolve(rho: DensityMatrix, tau: float, omega_L: float) -> DensityMatrix:
    """Free precession of a qubit density matrix for tau ns at omega_L MHz.

    The coherence <-1|rho|0> picks up exp(-i phi) and <0|rho|-1> picks up
    exp(+i phi), phi = 2 pi omega_L tau 1e-3, which is what the qubit block
    diag(0, omega_L) of the lab-frame Hamiltonian produces. Populations
    are unchanged.
    """
    if tau < 0:
        raise DomainError("free evolution time must be non-negative")
    phase = np.exp(1j * larmor_phase(tau, omega_L))
    r = np.array(rho.entries)
    r[0, 1] *= phase
    r[1, 0] *= np.conj(phase)
    return DensityMatrix(r)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(rho.entries - sigma.entries)).sum())
