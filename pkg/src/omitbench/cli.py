"""Command-line front end.

Verbs: simulate | map | fit | photons | linewidth | convert.  Global flags
--config/--seed/--out/--db apply across verbs.  All file and printed
frequencies are Hz; magnitudes are stored linear and rendered in dB only
under --db.

Exit codes: 0 success; 2 config or file parse error; 3 model singularity;
4 fit did not converge; 5 insufficient data for the requested fit;
6 no resolvable spectral feature.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, load_config
from .datafiles import (
    DatasetFile,
    DatasetFormatError,
    atomic_write_text,
    read_dataset,
    write_dataset,
    write_fit_report,
    write_map,
    write_residual_csv,
)
from .fitting import (
    LOG_PARAMS,
    PARAM_NAMES,
    FeatureNotFound,
    FitDataset,
    FitProblem,
    InsufficientData,
    ParamBinding,
    UnderResolved,
    extract_linewidth,
    fit as run_fit,
)
from .model import (
    TWO_PI,
    PumpConfig,
    PumpScheme,
    SingularDenominator,
    cooperativity,
    intracavity_photon_number,
)
from .sweeps import (
    NoiseSpec,
    add_noise,
    dbm_to_watts,
    default_delta_grid,
    default_line_grid,
    simulate_line_cut,
    simulate_map,
    watts_to_dbm,
)
from .svgmap import render_heatmap, render_line

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SINGULAR = 3
EXIT_NOT_CONVERGED = 4
EXIT_INSUFFICIENT = 5
EXIT_NO_FEATURE = 6


@dataclass
class CliState:
    config_path: str | None = None
    seed: int | None = None
    out: str | None = None
    db: bool = False


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _require_config(state: CliState) -> RunConfig:
    if state.config_path is None:
        _fail(EXIT_CONFIG, "this command needs --config <file>")
    try:
        return load_config(state.config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _require_out(state: CliState) -> Path:
    if state.out is None:
        _fail(EXIT_CONFIG, "this command needs --out <path>")
    return Path(state.out)


def _display_mag(value: float, db: bool) -> str:
    if db:
        return f"{20.0 * math.log10(max(value, 1e-12)):.3f} dB"
    return f"{value:.6f}"


def _pump_condition_str(pump: PumpConfig) -> str:
    drive = (f"n_cav={pump.n_cav:g}" if pump.n_cav is not None
             else f"p_in={pump.p_in:g} W")
    return (f"scheme={pump.scheme.value}, "
            f"detuning_hz={pump.delta / TWO_PI:g}, {drive}")


def _resolve_pumps(cfg: RunConfig, scheme, detuning_hz, ncav, power_dbm):
    """Pump list for simulate/map: CLI overrides win over the config list."""
    overrides = any(v is not None for v in (scheme, detuning_hz, ncav, power_dbm))
    if not overrides:
        if not cfg.pumps:
            _fail(EXIT_CONFIG, "config has no pumps and no pump flags were given")
        return cfg.pumps
    base = cfg.pumps[0] if cfg.pumps else None
    sch = PumpScheme.parse(scheme) if scheme else (base.scheme if base
                                                   else PumpScheme.RED)
    if detuning_hz is not None:
        delta = TWO_PI * detuning_hz
    elif base is not None and scheme is None:
        delta = base.delta
    else:
        delta = sch.sign * cfg.mechanics.omega_m
    if ncav is not None and power_dbm is not None:
        _fail(EXIT_CONFIG, "--ncav and --power-dbm are mutually exclusive")
    if ncav is not None:
        return [PumpConfig(sch, delta, n_cav=ncav)]
    if power_dbm is not None:
        return [PumpConfig(sch, delta, p_in=dbm_to_watts(power_dbm))]
    if base is not None:
        return [PumpConfig(sch, delta, n_cav=base.n_cav, p_in=base.p_in)]
    _fail(EXIT_CONFIG, "no pump strength: give --ncav or --power-dbm "
                       "or a pumps entry in the config")


def _numbered(path: Path, index: int, count: int) -> Path:
    if count == 1:
        return path
    return path.with_name(f"{path.stem}_{index}{path.suffix}")


@click.group()
@click.version_option(package_name="omitbench", prog_name="omitbench")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON run configuration.")
@click.option("--seed", type=int, default=None,
              help="Noise seed override (deterministic outputs per seed).")
@click.option("--out", type=click.Path(), default=None,
              help="Output file path.")
@click.option("--db", is_flag=True,
              help="Print magnitudes as 20*log10 dB (display only; files "
                   "always store linear values).")
@click.pass_context
def main(ctx, config_path, seed, out, db):
    """Two-tone transmission workbench: simulate, map, fit, inspect."""
    ctx.obj = CliState(config_path=config_path, seed=seed, out=out, db=db)


@main.command()
@click.option("--scheme", type=click.Choice(["red", "blue"]), default=None,
              help="Pump scheme override.")
@click.option("--detuning-hz", type=float, default=None,
              help="Pump detuning (omega_d - omega_c)/2pi override.")
@click.option("--ncav", type=float, default=None,
              help="Pump strength as an intracavity photon number (0 = pump off).")
@click.option("--power-dbm", type=float, default=None,
              help="Pump strength as input power in dBm.")
@click.option("--points", type=int, default=None, help="Probe points override.")
@click.option("--svg", "svg_path", type=click.Path(), default=None,
              help="Also render each trace to SVG.")
@click.pass_obj
def simulate(state: CliState, scheme, detuning_hz, ncav, power_dbm, points,
             svg_path):
    """Write swept-probe trace files for the configured pump conditions."""
    cfg = _require_config(state)
    out = _require_out(state)
    pumps = _resolve_pumps(cfg, scheme, detuning_hz, ncav, power_dbm)
    n_points = points if points is not None else cfg.grid.points
    for i, pump in enumerate(pumps):
        try:
            grid = default_line_grid(pump, cfg.cavity, cfg.mechanics,
                                     points=n_points,
                                     half_width_gamma_eff=cfg.grid.half_width_gamma_eff)
            trace = simulate_line_cut(pump, cfg.cavity, cfg.mechanics, grid,
                                      meta=cfg.meta)
        except SingularDenominator as exc:
            _fail(EXIT_SINGULAR,
                  f"singular response at {_pump_condition_str(pump)}: {exc}")
        if cfg.noise is not None and cfg.noise.sigma > 0:
            seed = state.seed if state.seed is not None else cfg.noise.seed
            trace = add_noise(trace, NoiseSpec(cfg.noise.sigma, seed + i))
        data = DatasetFile.from_trace(trace)
        path = _numbered(out, i, len(pumps))
        write_dataset(path, data)
        mag = data.s21_mag
        click.echo(f"{path}: {len(mag)} points, "
                   f"min={_display_mag(float(mag.min()), state.db)}, "
                   f"max={_display_mag(float(mag.max()), state.db)}")
        if svg_path is not None:
            spath = _numbered(Path(svg_path), i, len(pumps))
            atomic_write_text(spath, render_line(trace, db=state.db))
            click.echo(f"{spath}: line plot")


@main.command(name="map")
@click.option("--scheme", type=click.Choice(["red", "blue"]), default=None,
              help="Pump scheme override.")
@click.option("--ncav", type=float, default=None,
              help="Photon number held fixed across detuning rows.")
@click.option("--power-dbm", type=float, default=None,
              help="Fixed input power; photon number recomputed per row.")
@click.option("--svg", "svg_path", type=click.Path(), default=None,
              help="Also render the map to an SVG heatmap.")
@click.pass_obj
def map_cmd(state: CliState, scheme, ncav, power_dbm, svg_path):
    """Write a detuning-by-probe transmission matrix around the sideband."""
    cfg = _require_config(state)
    out = _require_out(state)
    pump = _resolve_pumps(cfg, scheme, None, ncav, power_dbm)[0]
    aligned = pump.at_delta(pump.scheme.sign * cfg.mechanics.omega_m)
    try:
        delta_grid = default_delta_grid(
            pump.scheme, cfg.cavity, cfg.mechanics,
            points=cfg.grid.map_delta_points,
            half_width_kappa=cfg.grid.map_half_width_kappa)
        omega_grid = default_line_grid(
            aligned, cfg.cavity, cfg.mechanics,
            points=cfg.grid.map_omega_points,
            half_width_gamma_eff=cfg.grid.half_width_gamma_eff)
        smap = simulate_map(pump.scheme, cfg.cavity, cfg.mechanics,
                            delta_grid, omega_grid,
                            n_cav=pump.n_cav, p_in=pump.p_in, meta=cfg.meta)
    except SingularDenominator as exc:
        _fail(EXIT_SINGULAR,
              f"singular response at {_pump_condition_str(pump)}: {exc}")
    write_map(out, smap)
    values = smap.s21_mag
    click.echo(f"{out}: {values.shape[0]}x{values.shape[1]} map, "
               f"min={_display_mag(float(values.min()), state.db)}, "
               f"max={_display_mag(float(values.max()), state.db)}")
    if svg_path is not None:
        atomic_write_text(svg_path, render_heatmap(smap, db=state.db))
        click.echo(f"{svg_path}: heatmap")


def _default_bounds(name: str, init: float) -> tuple[float, float]:
    """Fallback bounds when a free/shared binding omits lo/hi: a decade for
    positive rates, a narrow relative window for the two frequencies."""
    if name in LOG_PARAMS:
        return init / 10.0, init * 10.0
    if name == "omega_c":
        return init * (1 - 1e-3), init * (1 + 1e-3)
    return init * (1 - 1e-2), init * (1 + 1e-2)


def _spec_value(name: str, value: float | None) -> float | None:
    """Config binding values are Hz except the photon count."""
    if value is None:
        return None
    return value if name == "n_cav" else TWO_PI * value


def _binding_from_spec(spec, defaults: dict) -> ParamBinding:
    init = _spec_value(spec.name, spec.init)
    if init is None:
        init = defaults[spec.name]
    if init is None:
        raise ConfigError(f"binding {spec.name}: no init value available")
    lo = _spec_value(spec.name, spec.lo)
    hi = _spec_value(spec.name, spec.hi)
    if spec.mode in ("free", "shared") and (lo is None or hi is None):
        dlo, dhi = _default_bounds(spec.name, init)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    kwargs = {}
    if lo is not None:
        kwargs["lo"] = lo
    if hi is not None:
        kwargs["hi"] = hi
    return ParamBinding(spec.name, spec.mode, init, group=spec.group, **kwargs)


def _file_n_cav(data: DatasetFile, cfg: RunConfig) -> float | None:
    if "n_cav" in data.meta:
        return float(data.meta["n_cav"])
    if "pump_power_dbm" in data.meta:
        omega_d = TWO_PI * float(np.median(data.pump_freq_hz))
        pump = PumpConfig(data.scheme, omega_d - cfg.cavity.omega_c,
                          p_in=dbm_to_watts(float(data.meta["pump_power_dbm"])))
        return intracavity_photon_number(pump, cfg.cavity)
    return None


def _dataset_bindings(data: DatasetFile, cfg: RunConfig, spec_lists) -> dict:
    defaults = {
        "omega_c": cfg.cavity.omega_c,
        "kappa": cfg.cavity.kappa,
        "kappa_ext": cfg.cavity.kappa_ext,
        "omega_m": cfg.mechanics.omega_m,
        "gamma_m": cfg.mechanics.gamma_m,
        "g0": cfg.mechanics.g0,
        "n_cav": _file_n_cav(data, cfg),
    }
    bindings = {}
    for specs in spec_lists:
        for spec in specs:
            bindings[spec.name] = _binding_from_spec(spec, defaults)
    for name in PARAM_NAMES:
        if name not in bindings:
            if defaults[name] is None:
                raise ConfigError(
                    f"dataset carries neither n_cav nor pump_power_dbm metadata "
                    f"and no {name} binding was configured")
            bindings[name] = ParamBinding.fixed(name, defaults[name])
    return bindings


@main.command(name="fit")
@click.argument("datasets", nargs=-1, type=click.Path())
@click.pass_obj
def fit_cmd(state: CliState, datasets):
    """Fit the transmission model to dataset files; write a JSON report
    plus a residual CSV next to it."""
    cfg = _require_config(state)
    fit_cfg = cfg.fit
    paths = [str(p) for p in datasets]
    if not paths and fit_cfg is not None:
        paths = [d.path for d in fit_cfg.datasets if d.path]
    if not paths:
        _fail(EXIT_CONFIG, "no datasets: pass file arguments or configure fit.datasets")

    by_path = {}
    if fit_cfg is not None:
        by_path = {d.path: d.bindings for d in fit_cfg.datasets if d.path}
    global_bindings = fit_cfg.bindings if fit_cfg is not None else ()

    fit_datasets = []
    try:
        for p in paths:
            data = read_dataset(p)
            spec_lists = [global_bindings, by_path.get(p, ())]
            bindings = _dataset_bindings(data, cfg, spec_lists)
            fit_datasets.append(FitDataset(data.to_trace(), data.scheme, bindings))
        problem = FitProblem(fit_datasets)
    except (DatasetFormatError, ConfigError, ValueError, OSError) as exc:
        _fail(EXIT_CONFIG, str(exc))

    try:
        result = run_fit(problem)
    except InsufficientData as exc:
        _fail(EXIT_INSUFFICIENT, str(exc))

    out = Path(state.out) if state.out is not None else Path("fit_report.json")
    write_fit_report(out, result, problem, paths)
    write_residual_csv(out.with_name(out.stem + "_residuals.csv"), problem, result)
    click.echo(f"{out}: converged={result.converged} "
               f"iterations={result.iterations} "
               f"rms_residual={result.rms_residual:.6e}")
    for slot in problem.slot_names:
        base = slot.split("[")[0].split("@")[0]
        v, s = result.values[slot], result.stderr[slot]
        if base == "n_cav":
            click.echo(f"  {slot} = {v:.6e} +/- {s:.2e}")
        else:
            click.echo(f"  {slot} = {v / TWO_PI:.6f} Hz +/- {s / TWO_PI:.2e} Hz")
    if not result.converged:
        _fail(EXIT_NOT_CONVERGED,
              f"fit did not converge within {result.iterations} iterations")


@main.command()
@click.option("--power-dbm", type=float, default=None, help="Pump power in dBm.")
@click.option("--power-w", type=float, default=None, help="Pump power in watts.")
@click.option("--detuning-hz", type=float, default=None,
              help="Pump detuning in Hz (default: configured pump, else -omega_m).")
@click.pass_obj
def photons(state: CliState, power_dbm, power_w, detuning_hz):
    """Print the intracavity photon number and cooperativity for a pump."""
    cfg = _require_config(state)
    base = cfg.pumps[0] if cfg.pumps else None
    if power_dbm is not None and power_w is not None:
        _fail(EXIT_CONFIG, "--power-dbm and --power-w are mutually exclusive")
    if power_dbm is not None:
        watts = dbm_to_watts(power_dbm)
    elif power_w is not None:
        if power_w < 0:
            _fail(EXIT_CONFIG, "--power-w must be >= 0")
        watts = power_w
    elif base is not None and base.p_in is not None:
        watts = base.p_in
    else:
        _fail(EXIT_CONFIG, "no pump power: give --power-dbm or --power-w "
                           "or a power-driven pumps entry in the config")
    scheme = base.scheme if base is not None else PumpScheme.RED
    if detuning_hz is not None:
        delta = TWO_PI * detuning_hz
    elif base is not None:
        delta = base.delta
    else:
        delta = scheme.sign * cfg.mechanics.omega_m
    try:
        pump = PumpConfig(scheme, delta, p_in=watts)
        n = intracavity_photon_number(pump, cfg.cavity)
        coop = cooperativity(cfg.mechanics.g0, n, cfg.cavity.kappa,
                             cfg.mechanics.gamma_m)
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(f"n_cav = {n:.6e}")
    click.echo(f"C = {coop:.6e}")


@main.command()
@click.argument("dataset", type=click.Path())
@click.pass_obj
def linewidth(state: CliState, dataset):
    """Print the FWHM (Hz) of the feature in a dataset file; with a config,
    also the cooperativity implied by the backaction width law."""
    try:
        data = read_dataset(dataset)
        trace = data.to_trace()
    except (DatasetFormatError, ValueError, OSError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    try:
        fwhm = extract_linewidth(trace)
    except (FeatureNotFound, UnderResolved) as exc:
        _fail(EXIT_NO_FEATURE, str(exc))
    click.echo(f"FWHM = {fwhm / TWO_PI:.6f} Hz")
    if state.config_path is not None:
        cfg = _require_config(state)
        ratio = fwhm / cfg.mechanics.gamma_m
        implied = ratio - 1.0 if data.scheme is PumpScheme.RED else 1.0 - ratio
        click.echo(f"implied C = {implied:.6f}")


@main.command()
@click.option("--dbm", type=float, default=None, help="Power in dBm to convert to W.")
@click.option("--watts", type=float, default=None, help="Power in W to convert to dBm.")
def convert(dbm, watts):
    """Convert pump/probe power between dBm and watts."""
    if (dbm is None) == (watts is None):
        _fail(EXIT_CONFIG, "give exactly one of --dbm or --watts")
    if dbm is not None:
        click.echo(f"{dbm_to_watts(dbm):.12e} W")
    else:
        try:
            click.echo(f"{watts_to_dbm(watts):.12f} dBm")
        except ValueError as exc:
            _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    main()
