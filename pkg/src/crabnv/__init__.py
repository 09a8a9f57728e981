"""CRAB optimal control and virtual magnetic-resonance experiments for NV spins."""
from .errors import (BadStep, ConfigError, CrabError, DimensionMismatch, DomainError,
                     FitFailure, LeakageError, NoFeasibleResult, NonFiniteObjective,
                     NonUniformGrid, StepTooLarge, WindowTooNarrow)
from .experiments import (NoiseModel, Preparation, PulseSet, Trace, fid, fit_sinusoid,
                          fourier_spectrum, hahn_echo, rabi_sweep, readout, tomography)
from .neldermead import NelderMeadOptions, NelderMeadResult, nelder_mead
from .optimizer import (OptimizationConfig, OptimizationResult, figure_of_merit,
                        optimize_multi_start, random_init)
from .propagator import (CosineDrive, SpinSystem, propagate, propagate_free,
                         two_vs_three_level_check)
from .pulse import (TABLE1_PI, TABLE1_PI_HALF, CrabParams, PulseWaveform,
                    bang_bang_min_time, boundary_envelope, control_amplitude,
                    crab_correction, max_abs_amplitude, sample_waveform)
from .quantum import (BlochVector, DensityMatrix, QuantumState, basis_state,
                      bloch_from_density, density_from_state, fidelity,
                      free_phase_evolve, overlap_probability, spin1_operators)

__version__ = "0.1.0"
