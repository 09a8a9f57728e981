"""Nelder-Mead downhill simplex minimization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteObjective


@dataclass(frozen=True)
class NelderMeadOptions:
    tol_f: float = 1e-8
    tol_x: float = 1e-6
    max_evals: int = 20000
    alpha: float = 1.0  # reflection
    gamma: float = 2.0  # expansion
    rho: float = 0.5  # contraction
    sigma: float = 0.5  # shrink
    initial_step: float = 0.05
    zero_step: float = 0.00025


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    evaluations: int
    converged: bool
    iterations: int


def initial_simplex(x0: np.ndarray, step: float = 0.05, zero_step: float = 0.00025) -> np.ndarray:
    """x0 plus one vertex per coordinate, displaced by ``step`` * |x0_i|."""
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] = x0[i] * (1 + step) if x0[i] != 0 else zero_step
    return simplex


def nelder_mead(fun, x0, opts: NelderMeadOptions = NelderMeadOptions()) -> NelderMeadResult:
    """Minimize ``fun`` starting from ``x0``.

    Stops when the spread of function values over the simplex drops below
    ``tol_f`` and every vertex lies within ``tol_x`` (max-norm) of the best
    one, or when ``max_evals`` objective calls have been spent.

    Raises
    ------
    NonFiniteObjective
        If ``fun`` returns NaN or inf.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        value = float(fun(x))
        if not np.isfinite(value):
            raise NonFiniteObjective(f"objective returned {value} at {x}")
        return value

    simplex = initial_simplex(x0, opts.initial_step, opts.zero_step)
    values = np.array([f(v) for v in simplex])
    n = x0.size
    iterations = 0
    converged = False

    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        spread = values[-1] - values[0]
        size = np.max(np.abs(simplex[1:] - simplex[0])) if n else 0.0
        if spread < opts.tol_f and size < opts.tol_x:
            converged = True
            break
        if evals >= opts.max_evals:
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + opts.alpha * (centroid - worst)
        fr = f(xr)

        if fr < values[0]:
            xe = centroid + opts.gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue

        if fr < values[-1]:
            xc = centroid + opts.rho * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + opts.rho * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue

        best = simplex[0]
        simplex[1:] = best + opts.sigma * (simplex[1:] - best)
        values[1:] = [f(v) for v in simplex[1:]]

    return NelderMeadResult(simplex[0].copy(), float(values[0]), evals, converged, iterations)
