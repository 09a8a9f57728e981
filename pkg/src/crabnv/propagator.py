"""Lab-frame Schrodinger propagation of the driven NV spin.

Hamiltonians are linear frequencies in MHz (H / 2 pi hbar), times are in ns,
so a step of length dt contributes the phase 2 pi * H * dt * 1e-3.

The integrator is piecewise constant: every step uses the exact exponential
of H evaluated at the step midpoint, which keeps the evolution unitary to
machine precision regardless of the step size.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BadStep, DomainError, StepTooLarge
from .quantum import QuantumState, basis_state, overlap_probability, spin1_operators

TWO_PI_NS_MHZ = 2 * np.pi * 1e-3
# g * mu_B / h for the electron; kept for reference only, omega_z is always
# derived from the measured transition frequency.
GYROMAGNETIC_MHZ_PER_GAUSS = 2.8025
DEFAULT_DT = 0.001
CONVERGENCE_TOL = 1e-8

_OPS = spin1_operators()


@dataclass(frozen=True)
class SpinSystem:
    """Static part of the NV ground-state Hamiltonian.

    ``omega_z`` follows from ``D - omega_L``; ``B0`` (gauss) is metadata.
    """

    omega_L: float = 30.0
    D: float = 2870.0
    levels: int = 2
    B0: Optional[float] = None

    def __post_init__(self):
        if not self.omega_L > 0:
            raise DomainError("omega_L must be positive")
        if self.levels not in (2, 3):
            raise DomainError("levels must be 2 or 3")

    @property
    def omega_z(self) -> float:
        return self.D - self.omega_L

    def with_levels(self, levels: int) -> "SpinSystem":
        return SpinSystem(self.omega_L, self.D, levels, self.B0)


@dataclass(frozen=True)
class AnalyticControl:
    """Wraps a vectorized callable Gamma_x(t) (MHz) defined on [0, duration] ns."""

    func: Callable
    duration: float

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CosineDrive:
    """Rectangular-envelope carrier: amplitude * cos(2 pi f t + phase).

    ``t`` is measured from the start of the pulse, so ``phase`` is the
    carrier phase at the leading edge.
    """

    amplitude: float
    frequency: float
    duration: float
    phase: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.cos(TWO_PI_NS_MHZ * self.frequency * t + self.phase)


@dataclass(frozen=True)
class ZeroControl:
    duration: float

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


def hamiltonian_at(t: float, control, sys: SpinSystem) -> np.ndarray:
    gamma = float(control(np.array([t]))[0])
    if sys.levels == 2:
        return np.array([[0.0, gamma], [gamma, sys.omega_L]], dtype=complex)
    sz = _OPS.sz
    return sys.D * sz @ sz + sys.omega_z * sz + np.sqrt(2) * gamma * _OPS.sx


def _qubit_steps(gamma: np.ndarray, omega_L: float, dt: float) -> np.ndarray:
    """exp(-i theta [[0, g], [g, w]]) for each g, closed form."""
    theta = TWO_PI_NS_MHZ * dt
    half_w = 0.5 * omega_L
    r = np.sqrt(gamma * gamma + half_w * half_w)
    c = np.cos(theta * r)
    s_over_r = theta * np.sinc(theta * r / np.pi)
    phase = np.exp(-1j * theta * half_w)
    u = np.empty(gamma.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = phase * (c + 1j * s_over_r * half_w)
    u[..., 1, 1] = phase * (c - 1j * s_over_r * half_w)
    u[..., 0, 1] = u[..., 1, 0] = phase * (-1j * s_over_r * gamma)
    return u


def _spin1_steps(gamma: np.ndarray, sys: SpinSystem, dt: float) -> np.ndarray:
    sz = _OPS.sz.real
    static = sys.D * sz @ sz + sys.omega_z * sz
    h = static + np.sqrt(2) * gamma[..., None, None] * _OPS.sx.real
    energies, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * TWO_PI_NS_MHZ * dt * energies)
    return (vecs * phases[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def step_unitaries(gamma_mid: np.ndarray, sys: SpinSystem, dt: float) -> np.ndarray:
    gamma_mid = np.asarray(gamma_mid, dtype=float)
    if sys.levels == 2:
        return _qubit_steps(gamma_mid, sys.omega_L, dt)
    return _spin1_steps(gamma_mid, sys, dt)


def _matmul(a, b):
    if a.shape[-1] != 2:
        return a @ b
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
    b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def chain_product(u: np.ndarray) -> np.ndarray:
    """Time-ordered product U[K-1] ... U[1] U[0] along axis -3.

    Pairwise tree reduction, so the work stays vectorized.
    """
    while u.shape[-3] > 1:
        tail = None
        if u.shape[-3] % 2:
            tail = u[..., -1:, :, :]
            u = u[..., :-1, :, :]
        u = _matmul(u[..., 1::2, :, :], u[..., 0::2, :, :])
        if tail is not None:
            u = np.concatenate([u, tail], axis=-3)
    return u[..., 0, :, :]


def _grid(duration: float, dt: float):
    if not dt > 0:
        raise BadStep("dt must be positive")
    if duration < 0:
        raise DomainError("duration must be non-negative")
    n = max(1, int(round(duration / dt)))
    return n, duration / n


def midpoint_amplitudes(control, dt: float):
    """Gamma_x at the midpoints of a uniform grid over the control's duration."""
    n, h = _grid(control.duration, dt)
    return control((np.arange(n) + 0.5) * h), h


def pulse_unitary(control, sys: SpinSystem, dt: float = DEFAULT_DT) -> np.ndarray:
    """Full propagator of ``control`` in the chosen level model."""
    if control.duration == 0:
        return np.eye(sys.levels, dtype=complex)
    gamma, h = midpoint_amplitudes(control, dt)
    return chain_product(step_unitaries(gamma, sys, h))


@dataclass(frozen=True)
class PropagationResult:
    psi_final: QuantumState
    trajectory: Optional[list] = None
    steps: int = 0


def _as_dim(psi: QuantumState, dim: int) -> QuantumState:
    return psi if psi.dim == dim else psi.embed(dim)


def cumulative_propagators(control, sys: SpinSystem, dt: float, stride: int):
    """U(t_k, 0) at t_k = 0, stride*h, 2*stride*h, ..., duration.

    Returns (times, unitaries) with unitaries of shape (len(times), d, d).
    """
    if stride < 1:
        raise BadStep("stride must be >= 1")
    gamma, h = midpoint_amplitudes(control, dt)
    steps = step_unitaries(gamma, sys, h)
    n, d = gamma.size, sys.levels
    nblocks = -(-n // stride)
    pad = nblocks * stride - n
    if pad:
        steps = np.concatenate([steps, np.broadcast_to(np.eye(d, dtype=complex), (pad, d, d))])
    blocks = chain_product(steps.reshape(nblocks, stride, d, d))
    out = np.empty((nblocks + 1, d, d), dtype=complex)
    out[0] = np.eye(d)
    for k, block in enumerate(blocks):
        out[k + 1] = block @ out[k]
    times = np.minimum(np.arange(nblocks + 1) * stride, n) * h
    return times, out


def _run(psi0, control, sys, dt, stride):
    psi = psi0.amplitudes
    n = _grid(control.duration, dt)[0]
    if stride is None:
        return PropagationResult(QuantumState(pulse_unitary(control, sys, dt) @ psi), None, n)
    times, props = cumulative_propagators(control, sys, dt, stride)
    trajectory = [(float(t), QuantumState(s)) for t, s in zip(times, props @ psi)]
    return PropagationResult(trajectory[-1][1], trajectory, n)


def propagate(psi0: QuantumState, control, sys: SpinSystem, dt: float = DEFAULT_DT, *,
              stride: Optional[int] = None, check_convergence: bool = False
              ) -> PropagationResult:
    """Evolve ``psi0`` under the lab-frame Hamiltonian driven by ``control``.

    Parameters
    ----------
    psi0 : QuantumState
        Initial state; 2-level states are zero-padded in the 3-level model.
    control
        Any object with a ``duration`` attribute (ns) that returns Gamma_x in
        MHz when called on an array of times: CrabParams, PulseWaveform,
        AnalyticControl, CosineDrive.
    sys : SpinSystem
    dt : float
        Requested step in ns; rounded so that an integer number of steps
        covers the duration.
    stride : int, optional
        Record the state every ``stride`` steps (plus the initial and final
        state).
    check_convergence : bool
        Repeat at dt/2 and raise StepTooLarge when the two final states
        overlap by less than 1 - 1e-8.
    """
    if abs(psi0.norm - 1) > 1e-9:
        raise DomainError("initial state must be normalized")
    psi0 = _as_dim(psi0, sys.levels)
    result = _run(psi0, control, sys, dt, stride)
    if check_convergence:
        fine = _run(psi0, control, sys, dt / 2, None)
        overlap = overlap_probability(result.psi_final, fine.psi_final)
        if 1 - overlap > CONVERGENCE_TOL:
            raise StepTooLarge(f"dt={dt} ns: halving the step moves the final state by "
                               f"1 - overlap = {1 - overlap:.3g}")
    return result


def free_propagator(tau: float, sys: SpinSystem) -> np.ndarray:
    if tau < 0:
        raise DomainError("free evolution time must be non-negative")
    sz = np.diag(_OPS.sz).real
    energies = (sys.D * sz**2 + sys.omega_z * sz)[: sys.levels]
    return np.diag(np.exp(-1j * TWO_PI_NS_MHZ * tau * energies))


def propagate_free(psi: QuantumState, tau: float, sys: SpinSystem) -> QuantumState:
    """Exact undriven evolution for tau ns."""
    psi = _as_dim(psi, sys.levels)
    return QuantumState(free_propagator(tau, sys) @ psi.amplitudes)


def two_vs_three_level_check(control, sys: SpinSystem, target: QuantumState = None,
                             dt: float = DEFAULT_DT) -> float:
    """|f2 - f3|: transfer probabilities to ``target`` in the two level models.

    Small values confirm that |+1> can be ignored for this control.
    """
    target = target if target is not None else basis_state("-1")
    psi0 = basis_state("0")
    f = []
    for levels in (2, 3):
        model = sys.with_levels(levels)
        psi = propagate(psi0, control, model, dt).psi_final
        f.append(overlap_probability(_as_dim(target, levels), psi))
    return abs(f[0] - f[1])


def cosine_pulse_unitaries(amplitude: float, frequency: float, duration: float, phases,
                           sys: SpinSystem, dt: float = DEFAULT_DT,
                           chunk_steps: int = 2_000_000) -> np.ndarray:
    """Propagators of CosineDrive pulses for many carrier phases at once.

    Returns an array of shape (len(phases), levels, levels).
    """
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    n, h = _grid(duration, dt)
    t_mid = (np.arange(n) + 0.5) * h
    carrier = TWO_PI_NS_MHZ * frequency * t_mid
    per_chunk = max(1, chunk_steps // n)
    out = []
    for start in range(0, phases.size, per_chunk):
        ph = phases[start:start + per_chunk]
        gamma = amplitude * np.cos(carrier[None, :] + ph[:, None])
        out.append(chain_product(step_unitaries(gamma, sys, h)))
    return np.concatenate(out) if out else np.empty((0, sys.levels, sys.levels), complex)
