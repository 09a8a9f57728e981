"""Command-line front end.

Subcommands ``optimize``, ``verify-table1``, ``experiment`` and
``export-pulse`` read an optional strict JSON config and write deterministic
JSON/CSV files into the output directory.

Exit codes: 0 success, 2 usage or config error, 3 no feasible optimization
result.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ConfigError, CrabError, DomainError, NoFeasibleResult, NonUniformGrid
from .io import write_csv, write_json
from .optimizer import OptimizationConfig, optimize_multi_start
from .propagator import DEFAULT_DT, SpinSystem, propagate
from .pulse import (TABLE1_LARMOR_MHZ, TABLE1_PI, TABLE1_PI_HALF, CrabParams,
                    bang_bang_min_time, max_abs_amplitude, sample_waveform,
                    scale_to_larmor)
from .quantum import (QuantumState, basis_state, density_from_state, fidelity,
                      overlap_probability)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
DEFAULT_SAMPLE_RATE_GSPS = 24.0
OPTIMIZE_DT_NS = 0.005

# reference fidelities of the built-in pulses
TABLE1_REFERENCE = {
    "pi": {"params": TABLE1_PI, "F_reference": 0.9986, "tolerance": 0.002},
    "pi_half": {"params": TABLE1_PI_HALF, "F_reference": 0.9545, "tolerance": 0.005},
}

COMMON_DEFAULTS = {
    "system": None,
    "output_dir": ".",
    "seed": 0,
    "dt_ns": None,
    "noise": None,
}
SYSTEM_DEFAULTS = {"D_MHz": 2870.0, "omega_L_MHz": 30.0, "levels": 2, "B0_G": None}
NOISE_DEFAULTS = {"photons_per_shot": 0.0, "shots": 1, "detuning_sigma_MHz": 0.0,
                  "ensemble_size": 1}
OPTIMIZE_DEFAULTS = {
    "target": "pi", "T_ns": None, "p": None, "g0_MHz": 30.0, "c_f_set": None,
    "N_set": [5], "S": 30, "omega_window_MHz": [10.0, 100.0], "kappa_f": 1.0,
    "kappa_gamma_MHz": 30.5, "max_evals": 20000, "tol_f": 1e-8, "tol_x": 1e-6,
    "freeze_frequencies": False,
}
TAU_GRID_DEFAULTS = {"start_ns": 0.0, "step_ns": None, "count": 256}
EXPERIMENT_DEFAULTS = {
    "rabi": {"omega_d_MHz": 3.0, "t_max_ns": 400.0, "dt_sample_ns": None},
    "fid": {"pulse_kind": "rectangular", "frame": "rotating", "detuning_MHz": 0.0,
            "tau_grid": None, "rect_amplitude_MHz": 8.0},
    "hahn": {"pulse_kind": "rectangular", "frame": "rotating", "detuning_MHz": 0.0,
             "tau0_ns": 300.0, "tau_grid": None, "rect_amplitude_MHz": 8.0},
    "tomography": {"preparation": "pi", "t_evol_ns": 0.0, "rabi_MHz": ex.TOMOGRAPHY_RABI_MHZ},
}
EXPORT_DEFAULTS = {"pulse": "pi", "params_file": None}

log = logging.getLogger("crabnv")


# -- config ------------------------------------------------------------------


def strict(section, defaults: dict, where: str) -> dict:
    """Merge ``section`` over ``defaults``, rejecting unknown keys."""
    section = {} if section is None else section
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(section) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return {**defaults, **section}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def build_system(section) -> SpinSystem:
    s = strict(section, SYSTEM_DEFAULTS, "system")
    return SpinSystem(omega_L=float(s["omega_L_MHz"]), D=float(s["D_MHz"]),
                      levels=int(s["levels"]), B0=s["B0_G"])


def build_noise(section, seed: int) -> ex.NoiseModel:
    s = strict(section, NOISE_DEFAULTS, "noise")
    return ex.NoiseModel(photons_per_shot=float(s["photons_per_shot"]), shots=int(s["shots"]),
                         detuning_sigma=float(s["detuning_sigma_MHz"]),
                         ensemble_size=int(s["ensemble_size"]), seed=seed)


def split_config(raw: dict, specific: dict, where: str, seed=None, out=None):
    """(common settings, subcommand settings) with CLI overrides applied."""
    merged = strict(raw, {**COMMON_DEFAULTS, **specific}, where)
    common = {k: merged[k] for k in COMMON_DEFAULTS}
    if seed is not None:
        common["seed"] = seed
    if out is not None:
        common["output_dir"] = out
    if not isinstance(common["seed"], int) or common["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if common["dt_ns"] is not None and not float(common["dt_ns"]) > 0:
        raise ConfigError("dt_ns must be positive")
    return common, {k: merged[k] for k in specific}


def target_state(spec) -> tuple[QuantumState, str]:
    """|-1> for "pi", (|0> + |-1>)/sqrt 2 for "pi_half", or a custom rotation of |0>."""
    if spec == "pi":
        return basis_state("-1"), "pi"
    if spec == "pi_half":
        return QuantumState(np.array([1, 1]) / np.sqrt(2)), "pi_half"
    if isinstance(spec, dict):
        s = strict(spec, {"theta_rad": None, "axis": "x"}, "target")
        if s["theta_rad"] is None or s["axis"] not in ("x", "y"):
            raise ConfigError("custom target needs theta_rad and axis in {x, y}")
        half = float(s["theta_rad"]) / 2
        second = -1j * np.sin(half) if s["axis"] == "x" else np.sin(half)
        return QuantumState(np.array([np.cos(half), second])), "custom"
    raise ConfigError(f"target must be 'pi', 'pi_half' or an object, got {spec!r}")


def build_optimization(raw: dict, seed=None, out=None):
    common, o = split_config(raw, OPTIMIZE_DEFAULTS, "optimize config", seed, out)
    sys_ = build_system(common["system"])
    target, kind = target_state(o["target"])
    defaults = {"pi": (TABLE1_PI.T, TABLE1_PI.p, TABLE1_PI.c_f),
                "pi_half": (TABLE1_PI_HALF.T, TABLE1_PI_HALF.p, TABLE1_PI_HALF.c_f)}
    T0, p0, c0 = defaults.get(kind, (None, None, 0.35))
    T = o["T_ns"] if o["T_ns"] is not None else T0
    p = o["p"] if o["p"] is not None else p0
    if T is None or p is None:
        raise ConfigError("custom targets need T_ns and p")
    window = o["omega_window_MHz"]
    if not isinstance(window, list) or len(window) != 2:
        raise ConfigError("omega_window_MHz must be [min, max]")
    cfg = OptimizationConfig(
        T=float(T), p=int(p), target=target, omega_L=sys_.omega_L, g0=float(o["g0_MHz"]),
        c_f_set=tuple(o["c_f_set"] if o["c_f_set"] is not None else [c0]),
        N_set=tuple(o["N_set"]), S=int(o["S"]), omega_window=tuple(window),
        kappa_f=float(o["kappa_f"]), kappa_gamma=float(o["kappa_gamma_MHz"]),
        seed=common["seed"], dt=float(common["dt_ns"] or OPTIMIZE_DT_NS),
        max_evals=int(o["max_evals"]), tol_f=float(o["tol_f"]), tol_x=float(o["tol_x"]),
        freeze_frequencies=bool(o["freeze_frequencies"]),
    )
    return common, sys_, cfg


# -- shared helpers -----------------------------------------------------------


def builtin_pulse(name: str, sys_: SpinSystem) -> CrabParams:
    if name not in TABLE1_REFERENCE:
        raise ConfigError(f"unknown built-in pulse {name!r}; use 'pi' or 'pi_half'")
    params = TABLE1_REFERENCE[name]["params"]
    if sys_.omega_L != TABLE1_LARMOR_MHZ:
        params = scale_to_larmor(params, sys_.omega_L)
    return params


def pulse_report(params: CrabParams, target: QuantumState, sys_: SpinSystem, dt: float) -> dict:
    """F (root-overlap convention) and f (squared overlap) in both level models."""
    psi0 = basis_state("0")
    report = {}
    for levels in (2, 3):
        psi = propagate(psi0, params, sys_.with_levels(levels), dt).psi_final
        f = overlap_probability(target.embed(levels), psi)
        rho = density_from_state(psi)
        report[f"level{levels}"] = {"F": fidelity(target, rho), "f": f}
    report["two_vs_three_level"] = abs(report["level2"]["f"] - report["level3"]["f"])
    report["max_amp_MHz"] = max_abs_amplitude(sample_waveform(params, min(dt, params.T / 10)))
    return report


def waveform_columns(params: CrabParams, sample_rate_gsps: float):
    w = sample_waveform(params, 1.0 / sample_rate_gsps)
    return w.times, w.samples


def _out_dir(common) -> Path:
    out = Path(common["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands --------------------------------------------------------------


def cmd_optimize(args) -> int:
    try:
        common, sys_, cfg = build_optimization(load_config(args.config), args.seed, args.out)
        out = _out_dir(common)
    except (CrabError, ValueError, TypeError) as exc:
        return _config_error(exc)
    started = time.perf_counter()
    try:
        outcome = optimize_multi_start(cfg, workers=args.workers)
    except NoFeasibleResult as exc:
        _write_all_starts(out / "all_starts.json", exc.results, None)
        best = exc.best
        print(f"no feasible pulse among {len(exc.results)} starts"
              + (f"; best merit {best.merit:.6g}, max amp {best.max_amp:.4g} MHz" if best else ""),
              file=sys.stderr)
        return EXIT_INFEASIBLE
    log.info("optimization took %.1f s", time.perf_counter() - started)
    best = outcome.best
    _write_all_starts(out / "all_starts.json", outcome.results, best.start_index)
    check = pulse_report(best.params, cfg.target, sys_, DEFAULT_DT)
    write_json(out / "best_params.json", {
        **best.to_dict(),
        "verification": {"dt_ns": DEFAULT_DT, **check},
        "settings": {"T_ns": cfg.T, "p": cfg.p, "omega_L_MHz": cfg.omega_L, "g0_MHz": cfg.g0,
                     "S": cfg.S, "c_f_set": list(cfg.c_f_set), "N_set": list(cfg.N_set),
                     "omega_window_MHz": list(cfg.omega_window), "kappa_f": cfg.kappa_f,
                     "kappa_gamma_MHz": cfg.kappa_gamma, "seed": cfg.seed, "dt_ns": cfg.dt,
                     "freeze_frequencies": cfg.freeze_frequencies},
    })
    write_csv(out / "waveform.csv", ["t_ns", "gamma_MHz"],
              waveform_columns(best.params, args.sample_rate_gsps))
    print(f"best start {best.start_index}: F = {best.fidelity_F:.6f}, f = {best.fidelity_f:.6f}, "
          f"max |Gamma_x| = {best.max_amp:.4f} MHz, merit = {best.merit:.6f}")
    return EXIT_OK


def _write_all_starts(path, results, best_index):
    write_json(path, {"best_start_index": best_index,
                      "results": [r.to_dict() for r in results]})


def cmd_verify_table1(args) -> int:
    try:
        common, _ = split_config(load_config(args.config), {}, "verify-table1 config",
                                 args.seed, args.out)
        sys_ = build_system(common["system"])
        dt = float(common["dt_ns"] or DEFAULT_DT)
        out = _out_dir(common)
    except (CrabError, ValueError, TypeError) as exc:
        return _config_error(exc)
    cap = TABLE1_PI.g0 * sys_.omega_L / TABLE1_LARMOR_MHZ
    bound = bang_bang_min_time(sys_.omega_L, cap)
    report = {"omega_L_MHz": sys_.omega_L, "dt_ns": dt, "bang_bang_pi_ns": bound, "pulses": {}}
    for name, ref in TABLE1_REFERENCE.items():
        params = builtin_pulse(name, sys_)
        target, _ = target_state(name)
        r = pulse_report(params, target, sys_, dt)
        F, f = r["level2"]["F"], r["level2"]["f"]
        entry = {
            "T_ns": params.T, "p": params.p, "c_f": params.c_f, **r,
            "F_reference": ref["F_reference"], "tolerance": ref["tolerance"],
            "residual_F": F - ref["F_reference"], "residual_f": f - ref["F_reference"],
            "within_tolerance_F": abs(F - ref["F_reference"]) <= ref["tolerance"],
            "within_tolerance_f": abs(f - ref["F_reference"]) <= ref["tolerance"],
        }
        if name == "pi":
            entry["exceeds_bang_bang"] = params.T > bound
        report["pulses"][name] = entry
        print(f"{name:8s} T = {params.T:.4f} ns  F = {F:.5f}  f = {f:.5f}  "
              f"(reference {ref['F_reference']})  max |Gamma_x| = {r['max_amp_MHz']:.3f} MHz  "
              f"|f2 - f3| = {r['two_vs_three_level']:.2e}")
    print(f"bang-bang pi bound: {bound:.3f} ns")
    write_json(out / "verify_report.json", report)
    return EXIT_OK


def echo_grid(tau0: float, frame: str, sys_: SpinSystem, detuning: float, half_width: int = 128):
    """tau0 snapped to the frame strobe and a symmetric strobe grid around it."""
    step = ex.frame_strobe(frame, sys_.omega_L, detuning)
    k0 = max(1, round(tau0 / step))
    ks = np.arange(max(0, k0 - half_width), k0 + half_width)
    return k0 * step, ks * step


def _tau_grid(section, frame: str, sys_: SpinSystem, detuning: float):
    g = strict(section, TAU_GRID_DEFAULTS, "tau_grid")
    step = g["step_ns"] if g["step_ns"] is not None else ex.frame_strobe(frame, sys_.omega_L,
                                                                       detuning)
    count = int(g["count"])
    if not step > 0 or count < 1 or g["start_ns"] < 0:
        raise ConfigError("tau_grid needs start_ns >= 0, step_ns > 0 and count >= 1")
    return float(g["start_ns"]) + step * np.arange(count)


def build_experiment(raw: dict, seed=None, out=None):
    kind = raw.get("experiment") if isinstance(raw, dict) else None
    if kind not in EXPERIMENT_DEFAULTS:
        raise ConfigError(f"experiment must be one of {sorted(EXPERIMENT_DEFAULTS)}")
    body = {k: v for k, v in raw.items() if k != "experiment"}
    common, e = split_config(body, EXPERIMENT_DEFAULTS[kind], f"{kind} config", seed, out)
    sys_ = build_system(common["system"])
    noise = build_noise(common["noise"], common["seed"])
    dt = float(common["dt_ns"] or DEFAULT_DT)
    if kind in ("fid", "hahn"):
        if e["pulse_kind"] not in ex.PULSE_KINDS or e["frame"] not in ex.FRAMES:
            raise ConfigError(f"pulse_kind must be in {ex.PULSE_KINDS}, frame in {ex.FRAMES}")
        detuning = float(e["detuning_MHz"])
        if kind == "hahn" and e["tau_grid"] is None:
            e["tau0_ns"], e["taus"] = echo_grid(float(e["tau0_ns"]), e["frame"], sys_, detuning)
        else:
            e["taus"] = _tau_grid(e["tau_grid"], e["frame"], sys_, detuning)
    if kind == "tomography" and e["preparation"] not in ("pi", "pi_half", "none"):
        raise ConfigError("preparation must be 'pi', 'pi_half' or 'none'")
    return kind, common, sys_, noise, dt, e


def cmd_experiment(args) -> int:
    try:
        kind, common, sys_, noise, dt, e = build_experiment(load_config(args.config),
                                                            args.seed, args.out)
        out = _out_dir(common)
    except (CrabError, ValueError, TypeError) as exc:
        return _config_error(exc)
    if kind == "tomography":
        control = None if e["preparation"] == "none" else builtin_pulse(e["preparation"], sys_)
        prep = ex.Preparation(control=control, t_evol=float(e["t_evol_ns"]))
        result = ex.tomography(prep, sys_.with_levels(2), noise, rabi=float(e["rabi_MHz"]), dt=dt)
        for axis in ("x", "y"):
            tr = result.raw[f"rabi_{axis}"]
            write_csv(out / f"tomography_rabi_{axis}.csv", ["t_ns", "signal"],
                      [tr.times, tr.signal])
        raw = {k: v for k, v in result.raw.items() if not k.startswith("rabi_")}
        write_json(out / "tomography.json", {
            "experiment": "tomography", "preparation": e["preparation"],
            "t_evol_ns": e["t_evol_ns"], "rho": result.rho.as_real_list(),
            "bloch": list(result.bloch.as_array()), "raw": raw,
        })
        print("rho (re, im per entry, row-major):",
              " ".join(f"{v:.6f}" for v in result.rho.as_real_list()))
        return EXIT_OK
    if kind == "rabi":
        omega_d = float(e["omega_d_MHz"])
        step = e["dt_sample_ns"] or ex.rabi_sample_step(omega_d, sys_.omega_L)
        trace = ex.rabi_sweep(omega_d, sys_.omega_L, float(e["t_max_ns"]), float(step),
                              noise, dt, sys_)
    else:
        pulses = ex.PulseSet(rect_amplitude=float(e["rect_amplitude_MHz"]))
        if kind == "fid":
            trace = ex.fid(e["pulse_kind"], e["frame"], float(e["detuning_MHz"]), e["taus"],
                           sys_, noise, pulses, dt)
        else:
            trace = ex.hahn_echo(e["pulse_kind"], e["frame"], float(e["tau0_ns"]), e["taus"],
                                 sys_, noise, pulses, float(e["detuning_MHz"]), dt)
    write_trace(out, kind, trace, {k: v for k, v in e.items() if k not in ("taus", "tau_grid")})
    print(f"{kind}: {len(trace)} points written to {out}")
    return EXIT_OK


def write_trace(out: Path, kind: str, trace: ex.Trace, settings: dict):
    """Trace CSV, JSON sidecar, and spectrum CSV when the grid allows one."""
    write_csv(out / f"{kind}_trace.csv", ["tau_ns", "signal"], [trace.times, trace.signal])
    sidecar = {"experiment": kind, "frame": trace.frame, "detuning_MHz": trace.detuning,
               "metadata": trace.metadata, "settings": settings}
    try:
        freqs, mags = ex.fourier_spectrum(trace)
    except (NonUniformGrid, DomainError):
        sidecar["spectrum_peak_MHz"] = None
    else:
        write_csv(out / f"{kind}_spectrum.csv", ["f_MHz", "magnitude"], [freqs, mags])
        sidecar["spectrum_peak_MHz"] = float(freqs[1 + np.argmax(mags[1:])])
    write_json(out / f"{kind}_trace.json", sidecar)


def cmd_export_pulse(args) -> int:
    try:
        common, e = split_config(load_config(args.config), EXPORT_DEFAULTS,
                                 "export-pulse config", args.seed, args.out)
        sys_ = build_system(common["system"])
        if e["params_file"] is not None:
            doc = json.loads(Path(e["params_file"]).read_text())
            params = CrabParams.from_dict(doc.get("params", doc))
        else:
            params = builtin_pulse(e["pulse"], sys_)
        if not args.sample_rate_gsps > 0:
            raise ConfigError("--sample-rate-gsps must be positive")
        out = _out_dir(common)
    except (CrabError, ValueError, TypeError, KeyError, OSError) as exc:
        return _config_error(exc)
    t, g = waveform_columns(params, args.sample_rate_gsps)
    write_csv(out / "waveform.csv", ["t_ns", "gamma_MHz"], [t, g])
    write_json(out / "pulse.json", {"params": params.to_dict(),
                                    "sample_rate_gsps": args.sample_rate_gsps,
                                    "samples": int(t.size)})
    print(f"{t.size} samples at {args.sample_rate_gsps:g} GS/s written to {out / 'waveform.csv'}")
    return EXIT_OK


def _config_error(exc) -> int:
    print(f"config error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crabnv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "optimize": (cmd_optimize, "multi-start CRAB optimization"),
        "verify-table1": (cmd_verify_table1, "simulate the built-in pi and pi/2 pulses"),
        "experiment": (cmd_experiment, "run a virtual rabi, fid, hahn or tomography experiment"),
        "export-pulse": (cmd_export_pulse, "sample a pulse on the AWG grid"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel optimization starts (default: available cores)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--sample-rate-gsps", type=float, default=DEFAULT_SAMPLE_RATE_GSPS,
                       help="waveform export rate in GS/s (default 24)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        return _config_error(ValueError("--workers must be >= 1"))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
