"""Reproducible experiment runner.

A run is described by a JSON config with a flat parameter namespace plus a
preset name; command-line flags override file values.  Every run emits CSV
data files and a manifest.json recording the fully resolved parameters, so
each number in the outputs is reproducible from the manifest alone.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalGuardError
from .evolve import PropagationConfig, compare_generators
from .interferometry import (
    ProtocolSpec,
    SystemSpec,
    branch_propagator,
    build_drive,
    sweep_u,
)
from .model import (
    BathMode,
    ModelParams,
    drive_inclusive,
    effective_frequency,
    h_rabi,
    h_softmode,
    h_system,
    h_system_bath,
    h_two_diag,
    h_two_rabi,
    qubit_splittings,
    single_qubit_drive,
)
from .qop import (
    DensityMatrix,
    Operator,
    PI_MINUS,
    PI_PLUS,
    embed_matrix,
    thermal_state,
)
from .workstats import (
    crooks_check,
    exclusive_oracle,
    free_energy_oscillator,
    free_energy_spectral,
    jarzynski_check,
    pdf_from_char,
    tmp_oracle,
)

PRESET_NAMES = ("fig1", "fig2", "fig3-drives", "fig4", "fig4-reverse",
                "crooks", "exclusive", "open-system", "oracle-only")

_PARAM_FIELDS = {f.name: f.type for f in dataclasses.fields(ModelParams)}

_RUN_FIELDS = {
    "preset": str,
    "out": str,
    "seed": int,
    "shots": int,
    "u_max": float,
    "du": float,
    "window": str,
    "full_rabi": bool,
    "dt": float,
    "n_workers": int,
    "bath_omega": float,
    "bath_coupling": float,
    "bath_levels": int,
    "schedule_u": float,
}

# Preset-specific defaults layered under the config file and CLI flags.  The
# two-qubit pipeline runs at reduced dimension and u-resolution to keep the
# dense-propagation cost bounded; the resolution still separates the work
# peaks (spacing >= 0.39 at the canonical parameters) and the u-window is
# long enough for a stable fluctuation-theorem fit.
_PRESET_DEFAULTS: dict[str, dict] = {
    "fig1": {},
    "fig2": {"schedule_u": 3.0},
    "fig3-drives": {"schedule_u": 3.0},
    "fig4": {"n_fock": 26, "u_max": 42.0, "du": 0.6, "dt": 2.5e-3},
    "fig4-reverse": {"n_fock": 40, "u_max": 42.0, "du": 0.6, "dt": 2.5e-3},
    # Fluctuation-theorem fits want narrow reconstruction kernels, so the
    # cheap single-ancilla presets run a longer u-window.
    "crooks": {"u_max": 120.0},
    "exclusive": {"u_max": 120.0},
    "open-system": {"u_max": 120.0},
    "oracle-only": {},
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description."""

    preset: str
    params: ModelParams
    out: str = "out"
    seed: int = 0
    shots: int | None = None
    u_max: float = 60.0
    du: float = 0.1
    window: str = "hann"
    full_rabi: bool = True
    dt: float | None = None
    n_workers: int = 1
    bath_omega: float = 5.0
    bath_coupling: float = 0.3
    bath_levels: int = 6
    schedule_u: float = 3.0

    def __post_init__(self):
        errors = []
        if self.preset not in PRESET_NAMES:
            errors.append(f"unknown preset {self.preset!r}; "
                          f"choose from {', '.join(PRESET_NAMES)}")
        if self.window not in ("hann", "rect"):
            errors.append(f"unknown window {self.window!r}")
        if self.u_max <= 0 or self.du <= 0:
            errors.append("u_max and du must be positive")
        if self.du > self.u_max:
            errors.append("du must not exceed u_max")
        if self.shots is not None and self.shots < 1:
            errors.append("shots must be >= 1")
        if self.dt is not None and self.dt <= 0:
            errors.append("dt must be positive")
        if self.n_workers < 1:
            errors.append("n_workers must be >= 1")
        if errors:
            raise ConfigError("; ".join(errors))

    def bath(self) -> tuple[BathMode, ...]:
        return (BathMode(freq=self.bath_omega, coupling=self.bath_coupling,
                         n_levels=self.bath_levels),)

    def u_grid(self) -> np.ndarray:
        n = int(round(self.u_max / self.du))
        return np.arange(n + 1) * self.du

    def prop_config(self) -> PropagationConfig:
        if self.dt is None:
            return PropagationConfig()
        return PropagationConfig(dt=self.dt)

    def to_flat_dict(self) -> dict:
        d = {k: getattr(self, k) for k in _RUN_FIELDS}
        d.update(dataclasses.asdict(self.params))
        return d


def _coerce(key: str, value, target_type):
    if target_type is bool or target_type == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be a boolean, got {value!r}")
    if target_type is int or target_type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if target_type is float or target_type == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def resolve_config(file_values: dict, cli_values: dict) -> ExperimentConfig:
    """Layer preset defaults under file values under CLI flag values."""
    merged = dict(file_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    preset = merged.get("preset")
    if preset is None:
        raise ConfigError("no preset given (config file key or --preset)")
    if preset not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {preset!r}; "
                          f"choose from {', '.join(PRESET_NAMES)}")
    values = dict(_PRESET_DEFAULTS[preset])
    values.update(file_values)
    values.update({k: v for k, v in cli_values.items() if v is not None})

    errors = []
    run_kwargs: dict = {}
    param_kwargs: dict = {}
    for key, value in values.items():
        try:
            if key in _RUN_FIELDS:
                run_kwargs[key] = _coerce(key, value, _RUN_FIELDS[key])
            elif key in _PARAM_FIELDS:
                param_kwargs[key] = _coerce(key, value, _PARAM_FIELDS[key])
            else:
                errors.append(f"unknown config key {key!r}")
        except ConfigError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError("; ".join(errors))
    try:
        params = ModelParams(**param_kwargs)
        return ExperimentConfig(params=params, **run_kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def validate_config(config: ExperimentConfig) -> dict:
    """Regime-condition ratios, stability margin, and truncation forecast.

    Diagnostics only; nothing here raises.
    """
    p = config.params
    diag: dict = {}
    lam_max = max(p.lambda0, p.lambda_tau)
    diag["stability_margin"] = p.omega / 4.0 - lam_max
    diag["stability_ok"] = diag["stability_margin"] > 0
    if p.beta * p.omega > 0:
        n_bar = 1.0 / np.expm1(p.beta * p.omega)
        diag["thermal_occupation"] = n_bar
        diag["truncation_forecast_top_pop"] = float(
            np.exp(-p.beta * p.omega * (p.n_fock - 1)))
    if p.g1 == 0.0 or p.g2 == 0.0:
        diag["degenerate_coupling"] = True
        return diag
    try:
        drive = drive_inclusive(p.ramp(), p.tau, min(3.0, config.u_max))
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            eps1, eps2 = qubit_splittings(drive, p)
        t = np.linspace(0.0, drive.total_T, 2001)
        e1 = np.array([eps1.value(tt) for tt in t])
        e2 = np.array([eps2.value(tt) for tt in t])
        diag["eps1_min"] = float(np.min(np.abs(e1)))
        diag["eps2_min_clamped"] = float(np.min(np.abs(e2)))
        diag["ratio_g1_eps1"] = p.g1 / diag["eps1_min"]
        diag["ratio_g2_eps2"] = p.g2 / diag["eps2_min_clamped"]
        diag["ratio_omega_eps1"] = p.omega / diag["eps1_min"]
        diag["regime_ok"] = max(diag["ratio_g1_eps1"],
                                diag["ratio_omega_eps1"]) < 0.2
    except ValueError as exc:
        diag["splitting_error"] = str(exc)
    return diag


# ---------------------------------------------------------------------------
# Artifact formatting
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else _fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _g_samples_csv(samples) -> str:
    return _csv(["u", "re_g", "im_g", "abs_g", "shots"],
                [(s.u, s.g_value.real, s.g_value.imag, abs(s.g_value),
                  s.shots_used) for s in samples])


def _density_csv(dist) -> str:
    return _csv(["w", "p"], zip(dist.w_grid, dist.values))


def _peaks_csv(dist) -> str:
    return _csv(["w", "prob"], dist.peaks)


def _write_outputs(out_dir: str, artifacts: dict[str, str]):
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in artifacts.items():
            tmp = os.path.join(out_dir, name + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
        for tmp, final in staged:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def _ramp_unitary(params: ModelParams, reverse: bool,
                  bath: tuple[BathMode, ...], cache: dict) -> Operator:
    """Propagator of the bare driven system over the ramp, shared between
    the oracle and free-energy accounting."""
    system = SystemSpec(params, bath)
    lam = params.ramp_reversed() if reverse else params.ramp()
    cfg = PropagationConfig(dt=5e-4)
    return Operator(system.layout,
                    branch_propagator(system, lam, cfg, cache))


def _oracle_distribution(config: ExperimentConfig, reverse: bool,
                         exclusive: bool, bath: tuple[BathMode, ...],
                         cache: dict, delta_F: float | None):
    p = config.params
    u_ramp = _ramp_unitary(p, reverse, bath, cache)
    lam0 = p.lambda_tau if reverse else p.lambda0
    lam1 = p.lambda0 if reverse else p.lambda_tau

    def h_of(lam):
        if bath:
            return h_system_bath(lam, p, bath)
        return h_system(lam, p)

    if exclusive:
        dist = exclusive_oracle(h_of(0.0), u_ramp, p.beta)
    else:
        dist = tmp_oracle(h_of(lam0), h_of(lam1), u_ramp, p.beta)
    return dataclasses.replace(dist, delta_F=delta_F)


def _sweep_pipeline(config: ExperimentConfig, spec: ProtocolSpec,
                    delta_F: float | None, diagnostics: dict):
    samples = sweep_u(config.params, spec, list(config.u_grid()),
                      cfg=config.prop_config(), n_workers=config.n_workers,
                      diagnostics=diagnostics)
    density = pdf_from_char(samples, beta=config.params.beta, delta_F=delta_F,
                            window=config.window)
    return samples, density


def _delta_f_system(params: ModelParams) -> float:
    return free_energy_oscillator(
        effective_frequency(params.lambda0, params.omega),
        effective_frequency(params.lambda_tau, params.omega), params.beta)


def _schedule_artifacts(config: ExperimentConfig) -> dict[str, str]:
    p = config.params
    drive = drive_inclusive(p.ramp(), p.tau, config.schedule_u)
    eps1, eps2 = qubit_splittings(drive, p)
    t = np.linspace(0.0, drive.total_T, 1201)
    chi_rows = [(tt, drive.chi_plus.value(tt), drive.chi_minus.value(tt))
                for tt in t]
    eps_rows = [(tt, eps1.value(tt), eps2.value(tt)) for tt in t]
    return {
        "chi_schedules.csv": _csv(["t", "chi_plus", "chi_minus"], chi_rows),
        "eps_schedules.csv": _csv(["t", "eps1", "eps2"], eps_rows),
    }


def _generator_comparison(config: ExperimentConfig, two_qubit: bool) -> str:
    """Population traces under the full and effective generators."""
    p = config.params
    cfg = config.prop_config()
    n = p.n_fock
    if two_qubit:
        drive = drive_inclusive(p.ramp(), p.tau, config.schedule_u)
        eps1, eps2 = qubit_splittings(drive, p)
        h_a = lambda t: h_two_rabi(eps1.value(t), eps2.value(t), p)
        h_b = lambda t: h_two_diag(eps1.value(t), eps2.value(t), p)
        layout = p.layout_two()
        osc_slot = 2
        rho0 = np.kron(PI_MINUS, np.kron(
            PI_MINUS, thermal_state(h_system(p.lambda0, p), p.beta).entries))
        qubit_obs = [("p_qubit1", embed_matrix(PI_PLUS, 0, layout)),
                     ("p_qubit2", embed_matrix(PI_PLUS, 1, layout))]
        horizon = drive.total_T
    else:
        eps = single_qubit_drive(p.ramp(), p)
        h_a = lambda t: h_rabi(eps.value(t), p)
        h_b = lambda t: h_softmode(eps.value(t), p)
        layout = p.layout_single()
        osc_slot = 1
        rho0 = np.kron(PI_MINUS,
                       thermal_state(h_system(p.lambda0, p), p.beta).entries)
        qubit_obs = [("p_qubit", embed_matrix(PI_PLUS, 0, layout))]
        horizon = p.tau
    names, observables = [], []
    for k in range(3):
        proj = np.zeros((n, n), dtype=complex)
        proj[k, k] = 1.0
        names.append(f"p_fock{k}")
        observables.append(embed_matrix(proj, osc_slot, layout))
    for name, op in qubit_obs:
        names.append(name)
        observables.append(op)
    trace = compare_generators(h_a, h_b, DensityMatrix(layout, rho0),
                               horizon, observables, cfg=cfg)
    header = ["t"]
    for name in names:
        header += [f"{name}_full", f"{name}_effective"]
    rows = []
    for j, tt in enumerate(trace.times):
        row = [tt]
        for i in range(len(names)):
            row += [trace.values_a[i, j], trace.values_b[i, j]]
        rows.append(row)
    return _csv(header, rows)


def run(config: ExperimentConfig) -> dict:
    """Execute one experiment and write its artifacts; returns the manifest."""
    t_start = time.perf_counter()
    p = config.params
    diagnostics: dict = {}
    artifacts: dict[str, str] = {}
    report: dict = {"window": config.window}
    cache: dict = {}

    preset = config.preset
    if preset == "fig1":
        artifacts["populations.csv"] = _generator_comparison(config, False)
    elif preset == "fig2":
        artifacts["populations.csv"] = _generator_comparison(config, True)
    elif preset == "fig3-drives":
        artifacts.update(_schedule_artifacts(config))
    else:
        reverse = preset == "fig4-reverse"
        exclusive = preset == "exclusive"
        bath = config.bath() if preset == "open-system" else ()
        delta_F = 0.0 if exclusive else _delta_f_system(p)
        if reverse:
            delta_F = -delta_F
        report["delta_F"] = delta_F

        oracle = _oracle_distribution(config, reverse, exclusive, bath,
                                      cache, delta_F)
        artifacts["oracle_peaks.csv"] = _peaks_csv(oracle)
        report["jarzynski_oracle"] = jarzynski_check(oracle, p.beta, delta_F)
        if preset == "open-system":
            lam0, lam1 = p.lambda0, p.lambda_tau
            report["delta_F_spectral_full"] = free_energy_spectral(
                h_system_bath(lam0, p, bath), h_system_bath(lam1, p, bath),
                p.beta)
            report["delta_F_system"] = delta_F

        if preset != "oracle-only":
            spec_kwargs = dict(
                work_kind="exclusive" if exclusive else "inclusive",
                shots=config.shots, seed=config.seed)
            if preset in ("fig4", "fig4-reverse"):
                spec = ProtocolSpec(variant="cqed-two-qubit", reverse=reverse,
                                    use_full_rabi=config.full_rabi,
                                    **spec_kwargs)
            elif preset == "open-system":
                spec = ProtocolSpec(variant="open-system", bath=bath,
                                    **spec_kwargs)
            else:
                spec = ProtocolSpec(variant="ideal-single", **spec_kwargs)
            samples, density = _sweep_pipeline(config, spec, delta_F,
                                               diagnostics)
            artifacts["g_samples.csv"] = _g_samples_csv(samples)
            artifacts["work_density.csv"] = _density_csv(density)
            report["jarzynski_density"] = jarzynski_check(
                density, p.beta, delta_F, w_band=10.0)
            if preset in ("crooks", "exclusive", "open-system"):
                spec_b = dataclasses.replace(spec, reverse=True)
                oracle_b = _oracle_distribution(config, True, exclusive,
                                                bath, cache, -delta_F)
                artifacts["oracle_peaks_reverse.csv"] = _peaks_csv(oracle_b)
                samples_b, density_b = _sweep_pipeline(config, spec_b,
                                                       -delta_F, diagnostics)
                artifacts["g_samples_reverse.csv"] = _g_samples_csv(samples_b)
                artifacts["work_density_reverse.csv"] = _density_csv(density_b)
                fit = crooks_check(density, density_b, p.beta, w_band=10.0)
                report["crooks"] = fit.to_dict()

    manifest = {
        "schema_version": 1,
        "tool_version": __version__,
        "preset": preset,
        "parameters": config.to_flat_dict(),
        "seed": config.seed,
        "wall_time_s": None,
        "guard_pop_max": diagnostics.get("guard_pop_max", 0.0),
        "unitarity_defect_max": diagnostics.get("unitarity_defect_max", 0.0),
        "diagnostics": validate_config(config),
        "report": report,
        "files": sorted(artifacts),
    }
    if "ft_report.json" not in artifacts and preset not in (
            "fig1", "fig2", "fig3-drives"):
        artifacts["ft_report.json"] = json.dumps(report, indent=2,
                                                 sort_keys=True) + "\n"
        manifest["files"] = sorted(artifacts)
    manifest["wall_time_s"] = time.perf_counter() - t_start
    artifacts["manifest.json"] = json.dumps(manifest, indent=2,
                                            sort_keys=True) + "\n"
    _write_outputs(config.out, artifacts)
    return manifest


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="workqed",
        description="Work-statistics interferometry experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute one experiment from a config")
    runp.add_argument("config", help="JSON config file")
    runp.add_argument("--preset", choices=PRESET_NAMES)
    runp.add_argument("--out")
    runp.add_argument("--seed", type=int)
    runp.add_argument("--shots", type=int)
    runp.add_argument("--u-max", type=float, dest="u_max")
    runp.add_argument("--du", type=float)
    runp.add_argument("--window", choices=("hann", "rect"))
    rabi = runp.add_mutually_exclusive_group()
    rabi.add_argument("--full-rabi", dest="full_rabi", action="store_true",
                      default=None)
    rabi.add_argument("--diagonal", dest="full_rabi", action="store_false",
                      default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    cli_values = {k: getattr(args, k) for k in
                  ("preset", "out", "seed", "shots", "u_max", "du", "window",
                   "full_rabi")}
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config must be a JSON object")
        config = resolve_config(file_values, cli_values)
        run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalGuardError as exc:
        print(f"numerical guard abort: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
