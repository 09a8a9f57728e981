"""Virtual magnetic-resonance experiments on the driven NV qubit.

All dynamics run in the laboratory frame. Reference frames differ only in
how the carrier phase of later pulses is chosen relative to the first one:

``lab``
    every pulse starts with the same carrier phase, whatever the delay;
``rotating``
    all pulses share one continuous carrier clock at the microwave
    frequency f = omega_L + detuning, as a phase-continuous source would;
``following``
    the continuous clock is additionally corrected by the detuning, so the
    readout pulse phase advances at the spin's own precession frequency.

Signals are the population of |0> (normalized fluorescence).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.special import ndtri

from .errors import DomainError, FitFailure, NonUniformGrid
from .propagator import (DEFAULT_DT, TWO_PI_NS_MHZ, CosineDrive, SpinSystem,
                         cosine_pulse_unitaries, cumulative_propagators,
                         free_propagator, pulse_unitary)
from .pulse import TABLE1_PI, TABLE1_PI_HALF, CrabParams, scale_to_larmor
from .quantum import (BlochVector, DensityMatrix, QuantumState, basis_state,
                      density_from_state)

FRAMES = ("lab", "rotating", "following")
PULSE_KINDS = ("crab", "rectangular")
ANHARMONIC_MIN_SIGNAL = 0.02
FIT_MAX_RELATIVE_RESIDUAL = 0.2
RADICAND_FLOOR = 1e-9  # smaller tomography radicands are treated as zero


@dataclass(frozen=True, eq=False)
class Trace:
    times: np.ndarray
    signal: np.ndarray
    frame: str = "lab"
    detuning: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        signal = np.array(self.signal, dtype=float)
        if times.shape != signal.shape or times.ndim != 1:
            raise DomainError("times and signal must be 1-D arrays of equal length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if self.frame not in FRAMES:
            raise DomainError(f"unknown frame {self.frame!r}")
        for arr in (times, signal):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "signal", signal)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class NoiseModel:
    """Readout shot noise and quasi-static detuning spread.

    ``photons_per_shot = 0`` means noiseless readout. ``detuning_sigma`` (MHz)
    together with ``ensemble_size`` sets a Gaussian ensemble of transition
    frequencies that traces are averaged over.
    """

    photons_per_shot: float = 0.0
    shots: int = 1
    detuning_sigma: float = 0.0
    ensemble_size: int = 1
    bright: float = 1.0
    dark: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.photons_per_shot < 0 or self.detuning_sigma < 0:
            raise DomainError("photons_per_shot and detuning_sigma must be >= 0")
        if self.photons_per_shot > 0 and self.shots < 1:
            raise DomainError("shots must be >= 1 when photons_per_shot > 0")
        if self.ensemble_size < 1:
            raise DomainError("ensemble_size must be >= 1")
        if self.bright == self.dark:
            raise DomainError("bright and dark fluorescence levels must differ")

    @property
    def noisy(self) -> bool:
        return self.photons_per_shot > 0


NOISELESS = NoiseModel()


def readout_probability(p0: float, noise: NoiseModel = NOISELESS,
                        rng: Optional[np.random.Generator] = None) -> float:
    """Map the |0> population to a (possibly noisy) normalized signal."""
    if not noise.noisy:
        return float(p0)
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    rate = noise.photons_per_shot * (noise.bright * p0 + noise.dark * (1 - p0))
    mean_counts = rng.poisson(rate * noise.shots) / noise.shots
    estimate = (mean_counts / noise.photons_per_shot - noise.dark) / (noise.bright - noise.dark)
    return float(max(estimate, 0.0))


def readout(psi: QuantumState, noise: NoiseModel = NOISELESS,
            rng: Optional[np.random.Generator] = None) -> float:
    return readout_probability(float(abs(psi.amplitudes[0]) ** 2), noise, rng)


def detuning_ensemble(noise: NoiseModel):
    """Detuning offsets (MHz) and weights for quasi-static dephasing.

    Equal-weight stratified samples at the midpoints of ``ensemble_size``
    equal-probability bins of N(0, sigma^2); deterministic.
    """
    if noise.detuning_sigma == 0 or noise.ensemble_size == 1:
        return np.zeros(1), np.ones(1)
    k = noise.ensemble_size
    offsets = noise.detuning_sigma * ndtri((np.arange(k) + 0.5) / k)
    return offsets, np.full(k, 1.0 / k)


def _populations0(states: np.ndarray) -> np.ndarray:
    return np.abs(states[..., 0]) ** 2


def _apply_readout(p0: np.ndarray, noise: NoiseModel) -> np.ndarray:
    if not noise.noisy:
        return np.clip(p0, 0.0, 1.0)
    rng = np.random.default_rng(noise.seed)
    return np.array([readout_probability(p, noise, rng) for p in p0])


# -- spectra and fits ------------------------------------------------------


def _uniform_step(times: np.ndarray) -> float:
    steps = np.diff(times)
    if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
        raise NonUniformGrid("trace times are not uniformly spaced")
    return float(steps[0])


def fourier_spectrum(trace: Trace):
    """Magnitude spectrum (MHz axis) after mean removal and a Hann taper."""
    if len(trace) < 16:
        raise DomainError("need at least 16 samples for a spectrum")
    step = _uniform_step(trace.times)
    y = trace.signal - trace.signal.mean()
    mags = np.abs(np.fft.rfft(y * np.hanning(y.size)))
    freqs = np.fft.rfftfreq(y.size, d=step) * 1e3
    return freqs, mags


def peak_frequency(trace: Trace, exclude_dc: bool = True) -> float:
    freqs, mags = fourier_spectrum(trace)
    start = 1 if exclude_dc else 0
    return float(freqs[start + np.argmax(mags[start:])])


@dataclass(frozen=True)
class SinusoidFit:
    """A * cos(2 pi f t + phi0) + y0 with f in MHz and t in ns."""

    A: float
    f: float
    phi0: float
    y0: float
    residual: float
    r_squared: float

    def __call__(self, t):
        return self.A * np.cos(TWO_PI_NS_MHZ * self.f * np.asarray(t) + self.phi0) + self.y0


def _linear_fit(t, y, f):
    w = TWO_PI_NS_MHZ * f * t
    design = np.column_stack([np.cos(w), np.sin(w), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef, float(np.sum((design @ coef - y) ** 2))


def fit_sinusoid_at(trace: Trace, f: float) -> SinusoidFit:
    """Linear least-squares fit of amplitude, phase and offset at a known frequency f."""
    t, y = trace.times, trace.signal
    (c, s, y0), ss_res = _linear_fit(t, y, f)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rel = np.sqrt(ss_res / ss_tot) if ss_tot > 0 else 0.0
    return SinusoidFit(float(np.hypot(c, s)), float(f), float(np.arctan2(-s, c)), float(y0),
                       float(rel), float(r2))


def fit_sinusoid(trace: Trace, f_guess: Optional[float] = None) -> SinusoidFit:
    """Least-squares fit of A cos(2 pi f t + phi0) + y0 (A >= 0).

    The starting frequency comes from the spectrum peak (refined by a scan
    of the linear sub-problem), unless ``f_guess`` is given. A constant trace
    returns A = 0 with f = 0.

    Raises
    ------
    FitFailure
        If the residual norm exceeds 20 % of the signal's deviation norm.
    """
    t, y = trace.times, trace.signal
    if t.size < 8:
        raise DomainError("need at least 8 samples to fit a sinusoid")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot < 1e-24 * max(1.0, float(np.sum(y**2))):
        return SinusoidFit(0.0, 0.0, 0.0, float(y.mean()), 0.0, 1.0)

    span = t[-1] - t[0]
    if f_guess is None:
        try:
            f_guess = peak_frequency(trace)
        except (NonUniformGrid, DomainError):
            f_guess = 1e3 / span
    bin_width = 1e3 / span
    scan = np.linspace(max(f_guess - 1.5 * bin_width, 0.05 * bin_width),
                       f_guess + 1.5 * bin_width, 121)
    f0 = min(scan, key=lambda f: _linear_fit(t, y, f)[1])
    (c, s, y0), _ = _linear_fit(t, y, f0)

    def residuals(x):
        A, f, phi, off = x
        return A * np.cos(TWO_PI_NS_MHZ * f * t + phi) + off - y

    x0 = [np.hypot(c, s), f0, np.arctan2(-s, c), y0]
    sol = least_squares(residuals, x0, x_scale=[0.1, bin_width, 1.0, 0.1],
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    A, f, phi, off = sol.x
    if A < 0:
        A, phi = -A, phi + np.pi
    if f < 0:
        f, phi = -f, -phi
    phi = float(np.angle(np.exp(1j * phi)))
    ss_res = float(np.sum(sol.fun**2))
    rel = np.sqrt(ss_res / ss_tot)
    if rel > FIT_MAX_RELATIVE_RESIDUAL:
        raise FitFailure(f"relative residual {rel:.3g} exceeds {FIT_MAX_RELATIVE_RESIDUAL}")
    return SinusoidFit(float(A), float(f), phi, float(off), float(rel), 1 - ss_res / ss_tot)


# -- Rabi ----------------------------------------------------------------


def larmor_strobe(omega_L: float) -> float:
    """Half a Larmor period (ns): sampling step that hides the 2 omega_L micromotion."""
    return 500.0 / omega_L


def rabi_sample_step(omega_d: float, omega_L: float, per_period: int = 20) -> float:
    """Largest integer fraction of the Larmor strobe giving ``per_period`` samples per Rabi period."""
    strobe = larmor_strobe(omega_L)
    if omega_d <= 0:
        return strobe
    return strobe / int(np.ceil(strobe * per_period * omega_d / 1e3 - 1e-9))


def _sample_stride(dt_sample: float, dt: float) -> tuple[int, float]:
    stride = max(1, int(round(dt_sample / dt)))
    return stride, dt_sample / stride


def rabi_sweep(omega_d: float, omega_L: float, t_max: float, dt_sample: float,
               noise: NoiseModel = NOISELESS, dt: float = DEFAULT_DT,
               sys: Optional[SpinSystem] = None) -> Trace:
    """Signal after a resonant lab-frame drive Omega_d cos(2 pi omega_L t) of length t.

    Metadata records ``anharmonic``: whether the minimum signal over the
    first extrapolated Rabi period 1/Omega_d stays above 0.02.
    """
    if omega_d < 0:
        raise DomainError("drive amplitude must be >= 0")
    sys = sys if sys is not None else SpinSystem(omega_L=omega_L)
    duration = round(t_max / dt_sample) * dt_sample
    stride, step = _sample_stride(dt_sample, dt)
    drive = CosineDrive(omega_d, omega_L, duration)
    times, props = cumulative_propagators(drive, sys, step, stride)
    p0 = _populations0(props[:, :, 0])
    signal = _apply_readout(p0, noise)
    meta = {"omega_d_MHz": omega_d, "omega_L_MHz": omega_L, "kind": "rabi"}
    if omega_d > 0:
        period = 1e3 / omega_d
        window = times <= period + 1e-9
        meta["min_signal_first_period"] = float(signal[window].min())
        meta["anharmonic"] = bool(meta["min_signal_first_period"] > ANHARMONIC_MIN_SIGNAL)
    return Trace(times, signal, "lab", 0.0, meta)


# -- pulses used by the sequences ------------------------------------------


@dataclass(frozen=True)
class PulseSet:
    """Pulses for one transition frequency.

    CRAB pulses default to the built-in pi/2 and pi pulses rescaled to
    ``sys.omega_L``. Rectangular pulses are lab-frame cosine drives at
    ``omega_L + detuning`` with RWA durations 1/(4 Omega) and 1/(2 Omega).
    """

    rect_amplitude: float = 8.0
    crab_pi_half: CrabParams = TABLE1_PI_HALF
    crab_pi: CrabParams = TABLE1_PI
    rescale_crab: bool = True

    def crab(self, which: str, sys: SpinSystem) -> CrabParams:
        params = self.crab_pi_half if which == "pi_half" else self.crab_pi
        return scale_to_larmor(params, sys.omega_L) if self.rescale_crab else params

    def rect_duration(self, angle_fraction: float) -> float:
        """Duration (ns) of a rotation by angle_fraction * pi."""
        return 1e3 * angle_fraction / (2 * self.rect_amplitude)


def _frame_phase(frame: str, elapsed: float, omega_L: float, detuning: float) -> float:
    """Carrier phase at the leading edge of a pulse starting ``elapsed`` ns after the first."""
    if frame == "lab":
        return 0.0
    rate = omega_L + detuning if frame == "rotating" else omega_L
    return TWO_PI_NS_MHZ * rate * elapsed


def frame_strobe(frame: str, omega_L: float, detuning: float = 0.0) -> float:
    """Half a period (ns) of the clock that sets later pulse phases in ``frame``.

    Delays on this grid see the counter-rotating part of the readout pulse
    with the same phase, so on-resonance traces are flat to numerical
    precision rather than rippling at twice the carrier frequency.
    """
    if frame == "lab":
        return 500.0 / omega_L
    rate = omega_L + detuning if frame == "rotating" else omega_L
    return 500.0 / rate


def _phase_unitaries(amplitude, frequency, duration, phases, sys, dt):
    """cosine_pulse_unitaries with repeated phases (mod 2 pi) computed once."""
    wrapped = np.round(np.mod(phases, 2 * np.pi), 9) % np.round(2 * np.pi, 9)
    unique, inverse = np.unique(wrapped, return_inverse=True)
    return cosine_pulse_unitaries(amplitude, frequency, duration, unique, sys, dt)[inverse]


def _check_kinds(pulse_kind, frame):
    if pulse_kind not in PULSE_KINDS:
        raise DomainError(f"pulse_kind must be one of {PULSE_KINDS}")
    if frame not in FRAMES:
        raise DomainError(f"frame must be one of {FRAMES}")


def _member_system(sys: SpinSystem, offset: float) -> SpinSystem:
    return replace(sys, omega_L=sys.omega_L + offset)


def _free_phases(taus: np.ndarray, sys: SpinSystem) -> np.ndarray:
    """Diagonal free propagators for every tau, shape (n_tau, d)."""
    sz = np.array([0.0, -1.0, 1.0])[: sys.levels]
    energies = sys.D * sz**2 + sys.omega_z * sz
    return np.exp(-1j * TWO_PI_NS_MHZ * np.outer(taus, energies))


# -- free induction decay ----------------------------------------------------


def fid(pulse_kind: str, frame: str, detuning: float, taus, sys: SpinSystem,
        noise: NoiseModel = NOISELESS, pulses: PulseSet = PulseSet(),
        dt: float = DEFAULT_DT) -> Trace:
    """pi/2 - tau - pi/2 - readout for every tau in ``taus`` (ns).

    With ``pulse_kind="crab"`` the first pulse is the CRAB pi/2 pulse. In
    the lab frame the second pulse is the same CRAB pulse; otherwise it is a
    phase-controlled rectangular pi/2 pulse, since only a carrier pulse has
    a phase to adjust. ``detuning`` shifts the rectangular carrier to
    omega_L + detuning.
    """
    _check_kinds(pulse_kind, frame)
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise DomainError("free evolution times must be >= 0")
    f_mw = sys.omega_L + detuning
    offsets, weights = detuning_ensemble(noise)
    t90 = pulses.rect_duration(0.5)
    p0 = np.zeros(taus.size)
    for offset, weight in zip(offsets, weights):
        member = _member_system(sys, offset)
        psi0 = basis_state("0", sys.levels).amplitudes
        if pulse_kind == "crab":
            first = pulses.crab("pi_half", sys)
            u1, t1 = pulse_unitary(first, member, dt), first.T
        else:
            u1 = pulse_unitary(CosineDrive(pulses.rect_amplitude, f_mw, t90), member, dt)
            t1 = t90
        psi1 = u1 @ psi0
        psi_tau = _free_phases(taus, member) * psi1
        if pulse_kind == "crab" and frame == "lab":
            u2 = pulse_unitary(pulses.crab("pi_half", sys), member, dt)
            final = psi_tau @ u2.T
        else:
            phases = np.array([_frame_phase(frame, t1 + tau, sys.omega_L, detuning)
                               for tau in taus])
            u2 = _phase_unitaries(pulses.rect_amplitude, f_mw, t90, phases, member, dt)
            final = np.einsum("kij,kj->ki", u2, psi_tau)
        p0 += weight * _populations0(final)
    meta = {"kind": "fid", "pulse_kind": pulse_kind, "omega_L_MHz": sys.omega_L,
            "detuning_sigma_MHz": noise.detuning_sigma, "ensemble_size": offsets.size}
    return Trace(taus, _apply_readout(p0, noise), frame, detuning, meta)


# -- Hahn echo ---------------------------------------------------------------


def hahn_echo(pulse_kind: str, frame: str, tau0: float, taus, sys: SpinSystem,
              noise: NoiseModel = NOISELESS, pulses: PulseSet = PulseSet(),
              detuning: float = 0.0, dt: float = DEFAULT_DT) -> Trace:
    """pi/2 - tau0 - pi - tau - pi/2 - readout for every tau in ``taus``.

    Rectangular pulses share one carrier clock in the rotating frame (and
    the detuning-corrected clock in the following frame); in the lab frame
    each pulse starts with phase zero. CRAB sequences use CRAB pi/2 and pi
    pulses, with a phase-controlled rectangular readout pulse outside the
    lab frame.
    """
    _check_kinds(pulse_kind, frame)
    if not tau0 > 0:
        raise DomainError("tau0 must be positive")
    taus = np.asarray(taus, dtype=float)
    f_mw = sys.omega_L + detuning
    offsets, weights = detuning_ensemble(noise)
    amp = pulses.rect_amplitude
    t90, t180 = pulses.rect_duration(0.5), pulses.rect_duration(1.0)
    p0 = np.zeros(taus.size)
    for offset, weight in zip(offsets, weights):
        member = _member_system(sys, offset)
        psi = basis_state("0", sys.levels).amplitudes
        if pulse_kind == "crab":
            first, flip = pulses.crab("pi_half", sys), pulses.crab("pi", sys)
            u1, d1 = pulse_unitary(first, member, dt), first.T
            u_pi, d_pi = pulse_unitary(flip, member, dt), flip.T
        else:
            u1, d1 = pulse_unitary(CosineDrive(amp, f_mw, t90), member, dt), t90
            phase_pi = _frame_phase(frame, d1 + tau0, sys.omega_L, detuning)
            u_pi = pulse_unitary(CosineDrive(amp, f_mw, t180, phase_pi), member, dt)
            d_pi = t180
        psi = u_pi @ (free_propagator(tau0, member) @ (u1 @ psi))
        psi_tau = _free_phases(taus, member) * psi
        if frame == "lab" and pulse_kind == "crab":
            u3 = pulse_unitary(first, member, dt)
            final = psi_tau @ u3.T
        elif frame == "lab":
            u3 = pulse_unitary(CosineDrive(amp, f_mw, t90), member, dt)
            final = psi_tau @ u3.T
        else:
            start = d1 + tau0 + d_pi
            phases = np.array([_frame_phase(frame, start + tau, sys.omega_L, detuning)
                               for tau in taus])
            u3 = _phase_unitaries(amp, f_mw, t90, phases, member, dt)
            final = np.einsum("kij,kj->ki", u3, psi_tau)
        p0 += weight * _populations0(final)
    meta = {"kind": "hahn", "pulse_kind": pulse_kind, "tau0_ns": tau0,
            "omega_L_MHz": sys.omega_L, "detuning_sigma_MHz": noise.detuning_sigma,
            "ensemble_size": offsets.size}
    return Trace(taus, _apply_readout(p0, noise), frame, detuning, meta)


def gaussian_echo_envelope(taus, tau0: float, sigma: float) -> np.ndarray:
    """Ensemble average of cos(2 pi delta (tau - tau0)) for delta ~ N(0, sigma^2)."""
    x = TWO_PI_NS_MHZ * sigma * (np.asarray(taus) - tau0)
    return np.exp(-0.5 * x**2)


# -- tomography ---------------------------------------------------------------


@dataclass(frozen=True)
class Preparation:
    """What happens before tomography starts.

    Either ``state`` is given directly, or |0> is driven by ``control``
    (anything ``propagate`` accepts) and then evolves freely for ``t_evol`` ns.
    """

    control: object = None
    t_evol: float = 0.0
    state: Optional[QuantumState] = None

    def prepare(self, sys: SpinSystem, dt: float = DEFAULT_DT) -> np.ndarray:
        if self.state is not None:
            psi = self.state.amplitudes
            if psi.size < sys.levels:
                psi = np.append(psi, np.zeros(sys.levels - psi.size))
        else:
            psi = basis_state("0", sys.levels).amplitudes
        if self.control is not None:
            psi = pulse_unitary(self.control, sys, dt) @ psi
        if self.t_evol:
            psi = free_propagator(self.t_evol, sys) @ psi
        return psi


@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho: DensityMatrix
    bloch: BlochVector
    raw: dict


TOMOGRAPHY_RABI_MHZ = 8.0


def _floquet_axis(f: float, sys: SpinSystem, rabi: float, dt: float) -> np.ndarray:
    """Rotation axis of one period of the drive rabi * cos(2 pi f t)."""
    u = pulse_unitary(CosineDrive(rabi, f, 1e3 / f), sys.with_levels(2), dt)
    u = u / np.sqrt(np.linalg.det(u))
    # u = cos(a) I - i sin(a) n.sigma
    v = np.array([-(u[0, 1] + u[1, 0]).imag, (u[1, 0] - u[0, 1]).real, (u[1, 1] - u[0, 0]).imag])
    return v / np.linalg.norm(v)


@lru_cache(maxsize=32)
def resonance_frequency(sys: SpinSystem, rabi: float, dt: float = DEFAULT_DT) -> float:
    """Drive frequency (MHz) whose stroboscopic rotation axis lies in the equator.

    Differs from omega_L by the Bloch-Siegert shift of the counter-rotating
    field, about rabi**2 / (4 omega_L). This is the numerical counterpart of
    calibrating the microwave on resonance before a measurement.
    """
    half = min(rabi, sys.omega_L) / 2
    return float(brentq(lambda f: _floquet_axis(f, sys, rabi, dt)[2],
                        sys.omega_L - half, sys.omega_L + half, xtol=1e-10))


@lru_cache(maxsize=16)
def _tomography_propagators(sys: SpinSystem, rabi: float, t_max: float,
                            dt_sample: Optional[float], dt: float):
    f = resonance_frequency(sys, rabi, dt)
    dt_sample = dt_sample if dt_sample is not None else 500.0 / f
    stride, step = _sample_stride(dt_sample, dt)
    duration = round(t_max / dt_sample) * dt_sample
    times, u_x = cumulative_propagators(CosineDrive(rabi, f, duration), sys, step, stride)
    # a quarter Larmor period of free precession turns the y axis onto x
    u_y = u_x @ free_propagator(250.0 / sys.omega_L, sys)
    return f, times, {"x": u_x, "y": u_y}


def reconstruct_bloch(trace_x: Trace, trace_y: Trace, fit_x: SinusoidFit,
                      fit_y: SinusoidFit) -> tuple[BlochVector, dict]:
    """Bloch vector from Rabi traces about x (gives y) and about y (gives x).

    z is read from the undriven first points; |x| and |y| follow from the
    Rabi amplitudes, (2 Amp_y)^2 = y^2 + z^2 for the rotation about x and
    (2 Amp_x)^2 = x^2 + z^2 for the rotation about y, with signs taken from
    the fitted phases.
    """
    z = float(trace_x.signal[0] + trace_y.signal[0] - 1.0)
    rad_y = (2 * fit_x.A) ** 2 - z**2
    rad_x = (2 * fit_y.A) ** 2 - z**2
    # P0 = 1/2 + (z cos(theta) - c sin(theta)) / 2 with c = y about x, c = x about y,
    # so the fitted phase satisfies sin(phi0) ~ c
    y = np.sign(np.sin(fit_x.phi0)) * np.sqrt(rad_y) if rad_y > RADICAND_FLOOR else 0.0
    x = np.sign(np.sin(fit_y.phi0)) * np.sqrt(rad_x) if rad_x > RADICAND_FLOOR else 0.0
    # quarter-turn point estimates cross-check the signs
    y_point = x_point = 0.0
    if fit_x.f > 0:
        y_point = 1 - 2 * float(np.interp(250.0 / fit_x.f, trace_x.times, trace_x.signal))
    if fit_y.f > 0:
        x_point = 1 - 2 * float(np.interp(250.0 / fit_y.f, trace_y.times, trace_y.signal))
    vec = np.array([x, y, z])
    length = np.linalg.norm(vec)
    if length > 1:
        vec /= length
    signs_agree = all(abs(c) < 0.05 or np.sign(c) == np.sign(pt)
                      for c, pt in ((x, x_point), (y, y_point)))
    raw = {
        "z": z, "Amp_x": fit_y.A, "Amp_y": fit_x.A,
        "phi0_rot_x": fit_x.phi0, "phi0_rot_y": fit_y.phi0,
        "f_rot_x_MHz": fit_x.f, "f_rot_y_MHz": fit_y.f,
        "x_point": x_point, "y_point": y_point, "signs_agree": bool(signs_agree),
    }
    return BlochVector(*vec), raw


def tomography(preparation: Preparation, sys: SpinSystem, noise: NoiseModel = NOISELESS,
               rabi: float = TOMOGRAPHY_RABI_MHZ, t_max: Optional[float] = None,
               dt_sample: Optional[float] = None, dt: float = DEFAULT_DT) -> TomographyResult:
    """Reconstruct the qubit density matrix at the end of ``preparation``.

    Two low-power Rabi drives record the |0> population for ``t_max`` ns
    (default: two Rabi periods). The drive is calibrated on resonance (see
    ``resonance_frequency``) and rotates about x of the frame that coincides
    with the lab frame when the readout starts; the rotation about y is the
    same drive preceded by a quarter Larmor period of free precession, which
    equals a pi/2 carrier phase shift in the rotating frame. The default
    sampling step is half a drive period, which strobes out the
    counter-rotating micromotion.
    """
    t_max = t_max if t_max is not None else 2e3 / rabi
    f, times, props = _tomography_propagators(sys, rabi, t_max, dt_sample, dt)
    psi = preparation.prepare(sys, dt)
    rng = np.random.default_rng(noise.seed) if noise.noisy else None
    traces, fits = {}, {}
    for axis in ("x", "y"):
        p0 = _populations0(props[axis] @ psi)
        if rng is not None:
            p0 = np.array([readout_probability(p, noise, rng) for p in p0])
        traces[axis] = Trace(times, np.clip(p0, 0.0, None), "rotating", 0.0,
                             {"kind": "tomography", "axis": axis, "drive_MHz": f})
    # R_x^2 + R_y^2 = 1 + z^2, so one trace always oscillates strongly; its
    # frequency is reused for the other
    lead, other = sorted("xy", key=lambda a: -np.ptp(traces[a].signal))
    fits[lead] = fit_sinusoid(traces[lead], f_guess=rabi)
    fits[other] = fit_sinusoid_at(traces[other], fits[lead].f)
    bloch, raw = reconstruct_bloch(traces["x"], traces["y"], fits["x"], fits["y"])
    raw["rabi_x"] = traces["x"]
    raw["rabi_y"] = traces["y"]
    return TomographyResult(DensityMatrix.from_bloch(bloch), bloch, raw)


def direct_density(preparation: Preparation, sys: SpinSystem, dt: float = DEFAULT_DT):
    """Density matrix of the prepared state computed without tomography."""
    return density_from_state(QuantumState(preparation.prepare(sys, dt)))
