"""Synthetic probe sweeps: line cuts, (Omega, Delta) maps and two-tone runs.

Mirrors the measurement protocol: at each pump frequency the probe is swept
over a narrow window (a few effective mechanical linewidths) centred on the
pump sideband, so stepping the pump builds up a map of the transmission
versus probe offset and pump detuning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    TWO_PI,
    CavityParams,
    MechanicalParams,
    PumpConfig,
    PumpScheme,
    SingularDenominator,
    cooperativity,
    effective_linewidth,
    intracavity_photon_number,
    probe_transmission,
)

__all__ = [
    "SweepTrace",
    "SweepMap",
    "NoiseSpec",
    "simulate_line_cut",
    "simulate_map",
    "emulate_protocol",
    "add_noise",
    "default_line_grid",
    "default_delta_grid",
    "dbm_to_watts",
    "watts_to_dbm",
]

# Engineering defaults for grid construction; narrow sweeps resolve the
# mechanical feature, the detuning axis resolves the cavity.
LINE_POINTS = 801
LINE_HALF_WIDTH_GAMMA_EFF = 25.0
MAP_DELTA_POINTS = 201
MAP_OMEGA_POINTS = 401
MAP_DELTA_HALF_WIDTH_KAPPA = 2.0


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise, std ``sigma`` per S21 quadrature."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class SweepTrace:
    """One probe sweep.

    Attributes
    ----------
    omega : ndarray
        Strictly increasing probe frequency axis (rad/s); probe offset from
        the pump when ``axis == "offset"``, absolute when ``axis == "absolute"``.
    s21 : ndarray
        Complex S21 samples, or real non-negative magnitudes.
    axis : str
        "offset" or "absolute".
    meta : dict
        Measurement metadata (temperature_mK, probe_power_dbm, pump
        descriptor, scheme, ...).
    """

    omega: np.ndarray
    s21: np.ndarray
    axis: str = "offset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        s21 = np.asarray(self.s21)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "s21", s21)
        if self.axis not in ("offset", "absolute"):
            raise ValueError("axis must be 'offset' or 'absolute'")
        if omega.ndim != 1 or len(omega) < 2:
            raise ValueError("omega must be a 1-D axis with at least 2 points")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("omega axis must be strictly increasing")
        if s21.shape != omega.shape:
            raise ValueError("s21 length must match the omega axis")
        mag = np.abs(s21)
        if not np.all(np.isfinite(mag)):
            raise ValueError("s21 samples must be finite")
        if not self.is_complex and np.any(s21 < 0):
            raise ValueError("magnitude samples must be non-negative")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.s21)

    def magnitude(self) -> np.ndarray:
        """|S21| samples regardless of storage kind."""
        return np.abs(self.s21)


@dataclass(frozen=True)
class SweepMap:
    """|S21| on a (Delta, Omega) grid: one row per pump detuning."""

    delta: np.ndarray
    omega: np.ndarray
    s21_mag: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        mag = np.asarray(self.s21_mag, dtype=float)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "s21_mag", mag)
        if np.any(np.diff(delta) <= 0) or np.any(np.diff(omega) <= 0):
            raise ValueError("map axes must be strictly increasing")
        if mag.shape != (len(delta), len(omega)):
            raise ValueError("s21_mag shape must be (len(delta), len(omega))")
        if not np.all(np.isfinite(mag)):
            raise ValueError("map entries must be finite")


def dbm_to_watts(p_dbm: float) -> float:
    """Power in watts for a level in dBm (0 dBm = 1 mW)."""
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watts_to_dbm(p_watts: float) -> float:
    """Level in dBm for a power in watts; requires p_watts > 0."""
    if p_watts <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(p_watts / 1e-3)


def _pump_meta(pump: PumpConfig, cav: CavityParams, n_cav: float) -> dict:
    return {
        "scheme": pump.scheme.value,
        "pump_detuning_hz": pump.delta / TWO_PI,
        "pump_freq_hz": pump.omega_d(cav) / TWO_PI,
        "n_cav": n_cav,
    }


def default_line_grid(pump: PumpConfig, cav: CavityParams, mech: MechanicalParams,
                      points: int = LINE_POINTS,
                      half_width_gamma_eff: float = LINE_HALF_WIDTH_GAMMA_EFF) -> np.ndarray:
    """Probe-offset grid centred on the pump sideband.

    Spans +/- ``half_width_gamma_eff`` effective linewidths around the
    sideband at Omega = -sign * omega_m (red: +omega_m, blue: -omega_m); the
    width is floored at the bare gamma_m so a quenched blue feature is still
    resolved.
    """
    n_cav = intracavity_photon_number(pump, cav)
    coop = cooperativity(mech.g0, n_cav, cav.kappa, mech.gamma_m)
    g_eff = effective_linewidth(mech, coop, pump.scheme)
    scale = max(abs(g_eff), mech.gamma_m * 0.05)
    center = -pump.scheme.sign * mech.omega_m
    half = half_width_gamma_eff * scale
    return np.linspace(center - half, center + half, points)


def default_delta_grid(scheme: PumpScheme, cav: CavityParams, mech: MechanicalParams,
                       points: int = MAP_DELTA_POINTS,
                       half_width_kappa: float = MAP_DELTA_HALF_WIDTH_KAPPA) -> np.ndarray:
    """Pump-detuning grid around the sideband-aligned point Delta = -/+ omega_m."""
    center = PumpScheme.parse(scheme).sign * mech.omega_m
    half = half_width_kappa * cav.kappa
    return np.linspace(center - half, center + half, points)


def simulate_line_cut(pump: PumpConfig, cav: CavityParams, mech: MechanicalParams,
                      omega_grid, meta: dict | None = None) -> SweepTrace:
    """Evaluate the transmission model over a probe-offset grid.

    Returns a complex-valued trace; the pump descriptor (scheme, detuning,
    pump frequency, photon number) is recorded in ``meta``.

    Raises
    ------
    SingularDenominator
        Propagated from the model, annotated with the offending grid point.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    n_cav = intracavity_photon_number(pump, cav)
    s21 = probe_transmission(omega_grid, pump, cav, mech)
    full_meta = _pump_meta(pump, cav, n_cav)
    if meta:
        full_meta.update(meta)
    return SweepTrace(omega=omega_grid, s21=s21, axis="offset", meta=full_meta)


def simulate_map(scheme, cav: CavityParams, mech: MechanicalParams,
                 delta_grid, omega_grid, *, n_cav: float | None = None,
                 p_in: float | None = None, meta: dict | None = None) -> SweepMap:
    """|S21| over a (Delta, Omega) grid.

    The drive is either a photon number ``n_cav`` held fixed across detuning
    rows (matching how map-level photon numbers are quoted) or a fixed input
    power ``p_in``, in which case the photon number is recomputed per row
    from the photon relation.  Each row is exactly the corresponding line
    cut.

    Raises
    ------
    SingularDenominator
        Propagated, annotated with the offending detuning row.
    """
    scheme = PumpScheme.parse(scheme)
    if (n_cav is None) == (p_in is None):
        raise ValueError("specify exactly one of n_cav or p_in")
    delta_grid = np.asarray(delta_grid, dtype=float)
    omega_grid = np.asarray(omega_grid, dtype=float)
    rows = np.empty((len(delta_grid), len(omega_grid)))
    for r, delta in enumerate(delta_grid):
        pump = PumpConfig(scheme, float(delta), n_cav=n_cav, p_in=p_in)
        try:
            rows[r] = np.abs(probe_transmission(omega_grid, pump, cav, mech))
        except SingularDenominator as exc:
            raise SingularDenominator(
                f"map row {r} (detuning {delta / TWO_PI:.6f} Hz): {exc}",
                omega=exc.omega, delta=float(delta),
            ) from exc
    full_meta = {"scheme": scheme.value}
    if n_cav is not None:
        full_meta["n_cav"] = float(n_cav)
    else:
        full_meta["pump_power_w"] = float(p_in)
    if meta:
        full_meta.update(meta)
    return SweepMap(delta=delta_grid, omega=omega_grid, s21_mag=rows, meta=full_meta)


def emulate_protocol(scheme, cav: CavityParams, mech: MechanicalParams, *,
                     n_cav: float | None = None, p_in: float | None = None,
                     n_pump_steps: int = 41,
                     detuning_half_span: float | None = None,
                     sweep_half_width_gamma_eff: float = LINE_HALF_WIDTH_GAMMA_EFF,
                     points_per_sweep: int = LINE_POINTS,
                     meta: dict | None = None) -> list[SweepTrace]:
    """Narrow probe sweeps at stepped pump frequencies.

    One trace per pump step, each centred on the pump sideband; the pump
    detunings cover Delta = -/+ omega_m +/- ``detuning_half_span`` (default
    2 kappa), so the set of absolute sweep centres omega_d -/+ omega_m spans
    the microwave resonance.  A single step degenerates to one line cut at
    the aligned detuning.
    """
    scheme = PumpScheme.parse(scheme)
    if n_pump_steps < 1:
        raise ValueError("n_pump_steps must be >= 1")
    if detuning_half_span is None:
        detuning_half_span = MAP_DELTA_HALF_WIDTH_KAPPA * cav.kappa
    center = scheme.sign * mech.omega_m
    if n_pump_steps == 1:
        deltas = np.array([center])
    else:
        deltas = center + np.linspace(-detuning_half_span, detuning_half_span, n_pump_steps)
    traces = []
    for delta in deltas:
        pump = PumpConfig(scheme, float(delta), n_cav=n_cav, p_in=p_in)
        grid = default_line_grid(pump, cav, mech, points=points_per_sweep,
                                 half_width_gamma_eff=sweep_half_width_gamma_eff)
        traces.append(simulate_line_cut(pump, cav, mech, grid, meta=meta))
    return traces


def add_noise(trace: SweepTrace, noise: NoiseSpec) -> SweepTrace:
    """Additive white Gaussian noise, deterministic for a given seed.

    Complex traces get independent noise per quadrature; magnitude traces get
    noise on the magnitude directly (flagged in ``meta['noise_on']``).  A
    zero sigma returns the input unchanged.
    """
    if noise.sigma == 0:
        return trace
    rng = np.random.default_rng(noise.seed)
    n = len(trace.omega)
    meta = dict(trace.meta)
    meta["noise_sigma"] = noise.sigma
    meta["noise_seed"] = noise.seed
    if trace.is_complex:
        draws = rng.standard_normal((2, n))
        s21 = trace.s21 + noise.sigma * (draws[0] + 1j * draws[1])
        meta["noise_on"] = "quadratures"
    else:
        s21 = np.maximum(trace.s21 + noise.sigma * rng.standard_normal(n), 0.0)
        meta["noise_on"] = "magnitude"
    return replace(trace, s21=s21, meta=meta)
