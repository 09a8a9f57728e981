"""CRAB optimization: figure of merit and the parallel multi-start search.

Each start draws random CRAB coefficients and frequencies, then runs an
independent Nelder-Mead search over the 3N-vector (a, b, omega). Starts are
fanned out over ``c_f_set x N_set x range(S)`` and reduced to the
lowest-merit pulse that meets both acceptance thresholds.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainError, NoFeasibleResult, WindowTooNarrow
from .neldermead import NelderMeadOptions, nelder_mead
from .propagator import DEFAULT_DT, _qubit_steps, chain_product
from .pulse import CrabParams
from .quantum import QuantumState, basis_state

log = logging.getLogger(__name__)

MIN_SEPARATION_MHZ = 1.0
_MAX_RESAMPLES = 1000


@dataclass(frozen=True)
class OptimizationConfig:
    """Settings for one target rotation.

    Frequencies (``omega_L``, ``g0``, ``omega_window``, ``kappa_gamma``) are
    in MHz and times in ns. ``c_f_set`` and ``N_set`` are typically drawn
    from (0.01, 0.5) and (3, 7).
    """

    T: float
    p: int
    target: QuantumState = field(default_factory=lambda: basis_state("-1"))
    omega_L: float = 30.0
    g0: float = 30.0
    c_f_set: Sequence[float] = (0.35,)
    N_set: Sequence[int] = (5,)
    S: int = 30
    omega_window: tuple = (10.0, 100.0)
    kappa_f: float = 1.0
    kappa_gamma: float = 30.5
    seed: int = 0
    dt: float = DEFAULT_DT
    max_evals: int = 20000
    tol_f: float = 1e-8
    tol_x: float = 1e-6
    freeze_frequencies: bool = False

    def __post_init__(self):
        lo, hi = self.omega_window
        if not (self.omega_L > 0 and self.g0 > 0 and lo > 0 and hi > 0):
            raise DomainError("frequencies must be positive")
        if not lo < hi:
            raise DomainError("omega_window must satisfy min < max")
        if self.S < 1:
            raise DomainError("S must be >= 1")
        if not self.kappa_gamma > 0:
            raise DomainError("kappa_gamma must be positive")
        if not self.c_f_set or not self.N_set:
            raise DomainError("c_f_set and N_set must be non-empty")
        if any(c < 0 for c in self.c_f_set) or any(int(n) < 1 for n in self.N_set):
            raise DomainError("c_f values must be >= 0 and N values >= 1")
        if self.target.dim != 2:
            raise DomainError("target must be a qubit state")
        object.__setattr__(self, "c_f_set", tuple(float(c) for c in self.c_f_set))
        object.__setattr__(self, "N_set", tuple(int(n) for n in self.N_set))
        object.__setattr__(self, "omega_window", (float(lo), float(hi)))

    @property
    def n_starts(self) -> int:
        return self.S * len(self.c_f_set) * len(self.N_set)

    def nelder_mead_options(self) -> NelderMeadOptions:
        return NelderMeadOptions(tol_f=self.tol_f, tol_x=self.tol_x, max_evals=self.max_evals)


@dataclass(frozen=True)
class OptimizationResult:
    params: CrabParams
    merit: float
    fidelity_f: float
    max_amp: float
    evaluations: int
    start_index: int
    converged: bool

    @property
    def fidelity_F(self) -> float:
        return float(np.sqrt(self.fidelity_f))

    def feasible(self, kappa_f: float, kappa_gamma: float) -> bool:
        return self.merit <= kappa_f and self.max_amp <= kappa_gamma

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "merit": self.merit,
            "fidelity_f": self.fidelity_f,
            "fidelity_F": self.fidelity_F,
            "max_amp_MHz": self.max_amp,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationResult":
        return cls(CrabParams.from_dict(d["params"]), d["merit"], d["fidelity_f"],
                   d["max_amp_MHz"], d["evaluations"], d["start_index"], d["converged"])


class MeritEvaluator:
    """Figure of merit on a fixed time grid, reused across objective calls.

    The waveform is sampled on the propagation grid (endpoints included);
    each step uses the midpoint average of its two samples, and the same
    samples give max|Gamma_x|.
    """

    def __init__(self, T: float, p: int, g0: float, omega_L: float,
                 target: QuantumState, dt: float = DEFAULT_DT):
        self.T, self.p, self.g0, self.omega_L = T, p, g0, omega_L
        n = max(10, int(round(T / dt)))
        self.dt = T / n
        self.t = np.linspace(0.0, T, n + 1)
        h = T / 2
        self.envelope = 1.0 - ((self.t - h) / h) ** p
        self.target = np.asarray(target.amplitudes)

    def waveform(self, a, b, omega_ghz):
        phase = (2 * np.pi) * np.multiply.outer(np.asarray(omega_ghz), self.t)
        series = a @ np.sin(phase) + b @ np.cos(phase)
        samples = self.g0 / (2 * len(a)) * self.envelope * series
        samples[0] = samples[-1] = 0.0
        return samples

    def evaluate(self, a, b, omega_ghz, c_f):
        """Return (merit, f, max_amp)."""
        samples = self.waveform(a, b, omega_ghz)
        mid = 0.5 * (samples[1:] + samples[:-1])
        u = chain_product(_qubit_steps(mid, self.omega_L, self.dt))
        psi = u[:, 0]
        f = float(abs(np.vdot(self.target, psi)) ** 2)
        max_amp = float(np.max(np.abs(samples)))
        return (1.0 - f) + c_f * max_amp / self.g0, f, max_amp


def figure_of_merit(params: CrabParams, cfg: OptimizationConfig) -> float:
    """(1 - f) + c_f * max|Gamma_x| / g0 with f the transfer probability |0> -> target.

    ``c_f`` is taken from ``params``; the 2-level model and ``cfg.dt`` are used.
    """
    ev = MeritEvaluator(params.T, params.p, params.g0, cfg.omega_L, cfg.target, cfg.dt)
    return ev.evaluate(params.a, params.b, params.omega, params.c_f)[0]


class CrabCoefficients(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    omega: np.ndarray  # GHz


def random_init(N: int, omega_window, g0: float, rng: np.random.Generator,
                min_separation: float = MIN_SEPARATION_MHZ) -> CrabCoefficients:
    """Random starting point for one simplex search.

    a_n, b_n ~ U[-1, 1]; omega_n ~ U(window) in MHz, sorted, redrawn until
    adjacent frequencies are at least ``min_separation`` apart. ``g0`` does
    not enter: the coefficients are relative to the initial guess.
    """
    lo, hi = omega_window
    if hi - lo <= (N - 1) * min_separation:
        raise WindowTooNarrow(
            f"window ({lo}, {hi}) MHz cannot hold {N} frequencies {min_separation} MHz apart")
    a = rng.uniform(-1.0, 1.0, N)
    b = rng.uniform(-1.0, 1.0, N)
    for _ in range(_MAX_RESAMPLES):
        w = np.sort(rng.uniform(lo, hi, N))
        if np.all(w > lo) and np.all(w < hi) and np.all(np.diff(w) >= min_separation):
            return CrabCoefficients(a, b, w * 1e-3)
    raise WindowTooNarrow(f"no valid frequency draw after {_MAX_RESAMPLES} attempts")


def reflect_into(u, lo: float, hi: float):
    """Fold unbounded values into (lo, hi) by mirror reflection at the edges."""
    width = hi - lo
    y = np.mod(np.asarray(u, dtype=float) - lo, 2 * width)
    folded = lo + np.where(y <= width, y, 2 * width - y)
    eps = 1e-9 * width
    return np.clip(folded, lo + eps, hi - eps)


def _start_rng(seed: int, start_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(start_index)]))


def run_start(cfg: OptimizationConfig, start_index: int, c_f: float, N: int) -> OptimizationResult:
    """One isolated simplex search; deterministic in (cfg.seed, start_index)."""
    rng = _start_rng(cfg.seed, start_index)
    init = random_init(N, cfg.omega_window, cfg.g0, rng)
    ev = MeritEvaluator(cfg.T, cfg.p, cfg.g0, cfg.omega_L, cfg.target, cfg.dt)
    lo, hi = cfg.omega_window

    if cfg.freeze_frequencies:
        omega_fixed = init.omega

        def unpack(x):
            return x[:N], x[N:2 * N], omega_fixed

        x0 = np.concatenate([init.a, init.b])
    else:
        def unpack(x):
            return x[:N], x[N:2 * N], reflect_into(x[2 * N:], lo, hi) * 1e-3

        x0 = np.concatenate([init.a, init.b, init.omega * 1e3])

    def objective(x):
        return ev.evaluate(*unpack(x), c_f)[0]

    nm = nelder_mead(objective, x0, cfg.nelder_mead_options())
    a, b, omega = unpack(nm.x)
    merit, f, max_amp = ev.evaluate(a, b, omega, c_f)
    params = CrabParams(a=a, b=b, omega=omega, T=cfg.T, p=cfg.p, g0=cfg.g0, c_f=c_f)
    log.debug("start %d (c_f=%g, N=%d): merit %.6g, f %.6g, max %.4g MHz, %d evals",
              start_index, c_f, N, merit, f, max_amp, nm.evaluations)
    return OptimizationResult(params, merit, f, max_amp, nm.evaluations, start_index,
                              nm.converged)


def _run_task(task):
    return run_start(*task)


def start_tasks(cfg: OptimizationConfig) -> list:
    tasks = []
    for c_f in cfg.c_f_set:
        for N in cfg.N_set:
            for _ in range(cfg.S):
                tasks.append((cfg, len(tasks), c_f, N))
    return tasks


@dataclass(frozen=True)
class MultiStartOutcome:
    best: OptimizationResult
    results: list


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def optimize_multi_start(cfg: OptimizationConfig, workers: Optional[int] = None) -> MultiStartOutcome:
    """Run all S x |c_f_set| x |N_set| starts and pick the best feasible pulse.

    A result is feasible when merit <= kappa_f and max_amp <= kappa_gamma.
    Results do not depend on ``workers``.

    Raises
    ------
    NoFeasibleResult
        When no start is feasible; carries the best infeasible candidate and
        the full result list so the caller can decide whether to retry.
    """
    tasks = start_tasks(cfg)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    return select_best(results, cfg.kappa_f, cfg.kappa_gamma)


def select_best(results: list, kappa_f: float, kappa_gamma: float) -> MultiStartOutcome:
    def key(r):
        return (r.merit, r.start_index)

    feasible = [r for r in results if r.feasible(kappa_f, kappa_gamma)]
    if not feasible:
        best = min(results, key=key) if results else None
        raise NoFeasibleResult(
            f"none of {len(results)} starts satisfies merit <= {kappa_f} and "
            f"max amplitude <= {kappa_gamma} MHz", best=best, results=results)
    return MultiStartOutcome(min(feasible, key=key), list(results))
