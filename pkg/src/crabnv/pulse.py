"""CRAB pulse synthesis.

The control amplitude is

    Gamma_x(t) = g0 * envelope(t) / (2N) * sum_n [a_n sin(2 pi w_n t) + b_n cos(2 pi w_n t)]

with w_n in GHz and t in ns, and envelope(t) = 1 - ((t - T/2) / (T/2))**p,
which pins Gamma_x to zero at both ends of the pulse.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BadStep, DomainError

_EDGE_TOL = 1e-12


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CrabParams:
    """Full CRAB parameter set.

    Attributes
    ----------
    a, b : ndarray
        Sine and cosine coefficients (dimensionless).
    omega : ndarray
        Basis frequencies in GHz.
    T : float
        Pulse duration in ns.
    p : int
        Even exponent of the boundary envelope.
    g0 : float
        Constant initial-guess amplitude in MHz.
    c_f : float
        Amplitude-penalty weight used when the pulse was optimized.
    """

    a: np.ndarray
    b: np.ndarray
    omega: np.ndarray
    T: float
    p: int
    g0: float = 30.0
    c_f: float = 0.0

    def __post_init__(self):
        a, b, w = (_frozen_array(np.ravel(v)) for v in (self.a, self.b, self.omega))
        if not (a.size == b.size == w.size) or a.size < 1:
            raise DomainError("a, b and omega must have the same length N >= 1")
        if int(self.p) != self.p or self.p < 2 or self.p % 2:
            raise DomainError(f"p must be an even integer >= 2, got {self.p}")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if not self.g0 > 0:
            raise DomainError("g0 must be positive")
        if self.c_f < 0:
            raise DomainError("c_f must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "g0", float(self.g0))
        object.__setattr__(self, "c_f", float(self.c_f))

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def duration(self) -> float:
        return self.T

    def __call__(self, t):
        return control_amplitude(t, self)

    def scaled(self, factor: float) -> "CrabParams":
        """Coefficients a, b multiplied by ``factor``."""
        return replace(self, a=self.a * factor, b=self.b * factor)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "a": [float(v) for v in self.a],
            "b": [float(v) for v in self.b],
            "omega_GHz": [float(v) for v in self.omega],
            "T_ns": self.T,
            "p": self.p,
            "g0_MHz": self.g0,
            "c_f": self.c_f,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrabParams":
        params = cls(a=d["a"], b=d["b"], omega=d["omega_GHz"], T=d["T_ns"],
                     p=d["p"], g0=d["g0_MHz"], c_f=d["c_f"])
        if "N" in d and d["N"] != params.N:
            raise DomainError(f"N={d['N']} does not match {params.N} coefficients")
        return params


# Best parameters for the two target rotations (omega_L = g0 = 30 MHz).
TABLE1_PI = CrabParams(
    a=[-5.4865, 2.4803, -0.5404, 1.5659, 1.4673],
    b=[0.2812, 1.8823, 5.8533, -2.2123, 3.6469],
    omega=[0.0201, 0.0415, 0.0513, 0.0687, 0.0892],
    T=15.4071, p=60, g0=30.0, c_f=0.35,
)
TABLE1_PI_HALF = CrabParams(
    a=[2.1123, -5.5973, -9.7577, 26.3464, -10.4212],
    b=[9.6205, -28.7365, -3.9425, 5.4267, 7.2445],
    omega=[0.0149, 0.0401, 0.0464, 0.0664, 0.0909],
    T=7.7036, p=38, g0=30.0, c_f=0.23,
)
TABLE1_LARMOR_MHZ = 30.0


def scale_to_larmor(params: CrabParams, omega_L: float,
                    reference_omega_L: float = TABLE1_LARMOR_MHZ) -> CrabParams:
    """Rescale a pulse designed at ``reference_omega_L`` to another Larmor frequency.

    Time shrinks and amplitude/frequencies grow by the same factor, which
    leaves the qubit dynamics invariant.
    """
    k = omega_L / reference_omega_L
    return replace(params, omega=params.omega * k, T=params.T / k, g0=params.g0 * k)


def _check_domain(t, T):
    t = np.asarray(t, dtype=float)
    if np.any(t < -_EDGE_TOL * T) or np.any(t > T * (1 + _EDGE_TOL)):
        raise DomainError(f"t must lie in [0, {T}]")
    return np.clip(t, 0.0, T)


def boundary_envelope(t, T: float, p: int):
    """Inverse of the bounding function: 1 - ((t - h)/h)**p with h = T/2.

    Evaluated in closed form so it stays finite (zero) at t = 0 and t = T.
    """
    t = _check_domain(t, T)
    h = T / 2
    return 1.0 - ((t - h) / h) ** p


def crab_correction(t, params: CrabParams):
    """Correction function g(t); scalar in, scalar out, arrays vectorized."""
    t = _check_domain(t, params.T)
    phase = 2 * np.pi * np.multiply.outer(t, params.omega)
    series = np.sin(phase) @ params.a + np.cos(phase) @ params.b
    return boundary_envelope(t, params.T, params.p) * series / (2 * params.N)


def control_amplitude(t, params: CrabParams):
    """Gamma_x(t) in MHz."""
    return params.g0 * crab_correction(t, params)


@dataclass(frozen=True, eq=False)
class PulseWaveform:
    """Uniformly sampled control amplitude on [0, T], endpoints included."""

    dt: float
    samples: np.ndarray
    T: float

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.size != int(round(self.T / self.dt)) + 1:
            raise BadStep("sample count must be round(T/dt) + 1")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.T

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.samples.size)

    def __call__(self, t):
        """Linear interpolation between samples."""
        return np.interp(_check_domain(t, self.T), self.times, self.samples)


def sample_waveform(params: CrabParams, dt: float) -> PulseWaveform:
    """Sample Gamma_x on a uniform grid covering [0, T] inclusive.

    The step is adjusted to T / round(T / dt) so that the last sample falls
    exactly on T.
    """
    if not dt > 0 or dt > params.T / 10 * (1 + 1e-12):
        raise BadStep(f"dt must satisfy 0 < dt <= T/10, got {dt}")
    n = int(round(params.T / dt))
    t = np.linspace(0.0, params.T, n + 1)
    samples = control_amplitude(t, params)
    samples[0] = samples[-1] = 0.0
    return PulseWaveform(dt=params.T / n, samples=samples, T=params.T)


def max_abs_amplitude(w: PulseWaveform) -> float:
    if w.samples.size == 0:
        raise DomainError("empty waveform")
    return float(np.max(np.abs(w.samples)))


def bang_bang_min_time(omega_L: float, Omega: float) -> float:
    """Minimum pi-rotation time (ns) for |Gamma_x| <= Omega, both in MHz.

    pi / sqrt((pi w_L)^2 + (2 pi Omega)^2) reduces to 1/sqrt(w_L^2 + 4 Omega^2).
    """
    if omega_L < 0 or Omega < 0:
        raise DomainError("frequencies must be non-negative")
    if omega_L == 0 and Omega == 0:
        raise DomainError("omega_L and Omega cannot both be zero")
    return 1e3 / np.hypot(omega_L, 2 * Omega)
