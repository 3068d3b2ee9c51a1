"""Parameter extraction from |S21| sweeps by damped nonlinear least squares.

Supports the joint (shared-parameter) scheme used for multi-condition
datasets: a single mechanical frequency and linewidth can be tied across all
traces taken at one temperature while cavity frequency and linewidth stay
free per trace.  Residuals are magnitude differences; the optimizer is a
Levenberg-Marquardt loop with a numeric Jacobian, multiplicative damping
control and bound projection.  Positive-definite rates (kappa, gamma_m,
n_cav, g0) are optimized in log coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    TWO_PI,
    CavityParams,
    MechanicalParams,
    PumpConfig,
    PumpScheme,
    SingularDenominator,
    probe_transmission,
)
from .sweeps import SweepTrace

__all__ = [
    "PARAM_NAMES",
    "LOG_PARAMS",
    "FeatureNotFound",
    "UnderResolved",
    "InsufficientData",
    "ParamBinding",
    "FitDataset",
    "FitProblem",
    "FitResult",
    "residuals",
    "fit",
    "init_heuristics",
    "extract_linewidth",
]

PARAM_NAMES = ("omega_c", "kappa", "kappa_ext", "omega_m", "gamma_m", "g0", "n_cav")

# Rates kept positive by optimizing their logarithm.
LOG_PARAMS = frozenset({"kappa", "gamma_m", "n_cav", "g0"})

# Residual value substituted when a trial point is singular/unphysical, large
# against O(1) magnitude residuals but small enough to keep the normal
# equations well conditioned.
PENALTY_RESIDUAL = 1e3

MAX_ITERATIONS = 200
INITIAL_DAMPING = 1e-3
DAMPING_FACTOR = 10.0
REL_REDUCTION_TOL = 1e-10
REL_STEP_TOL = 1e-10
JACOBIAN_REL_STEP = 1e-6
JACOBIAN_ABS_STEP = 1e-12
MIN_POINTS_ACROSS_FWHM = 20


class FeatureNotFound(Exception):
    """No resolvable spectral feature in the trace."""


class UnderResolved(Exception):
    """Feature present but sampled by too few grid points for a width."""


class InsufficientData(Exception):
    """Fewer data points than adjustable parameters."""


@dataclass(frozen=True)
class ParamBinding:
    """How one physical parameter enters a fit.

    Attributes
    ----------
    name : str
        One of ``PARAM_NAMES``.
    mode : str
        "fixed" (held at ``init``), "free" (one slot per dataset) or
        "shared" (one slot per ``group`` across datasets).
    init : float
        Starting value; the held value for fixed bindings.  Angular units
        for frequencies/rates, a count for n_cav.
    lo, hi : float
        Bounds; must be finite for free/shared bindings.
    group : str or None
        Group id tying shared bindings together.
    """

    name: str
    mode: str
    init: float
    lo: float = -math.inf
    hi: float = math.inf
    group: str | None = None

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {self.name!r}")
        if self.mode not in ("fixed", "free", "shared"):
            raise ValueError(f"unknown binding mode {self.mode!r}")
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: bounds must satisfy lo < hi")
        if not (self.lo <= self.init <= self.hi):
            raise ValueError(f"{self.name}: init {self.init} outside bounds")
        if self.mode in ("free", "shared"):
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise ValueError(f"{self.name}: free/shared bindings need finite bounds")
            if self.name in LOG_PARAMS and self.lo <= 0:
                raise ValueError(f"{self.name}: lower bound must be positive "
                                 "(optimized in log coordinates)")
        if self.mode == "shared" and not self.group:
            raise ValueError(f"{self.name}: shared binding needs a group id")

    @classmethod
    def fixed(cls, name, value):
        return cls(name, "fixed", value)

    @classmethod
    def free(cls, name, init, lo, hi):
        return cls(name, "free", init, lo, hi)

    @classmethod
    def shared(cls, name, group, init, lo, hi):
        return cls(name, "shared", init, lo, hi, group=group)


@dataclass
class FitDataset:
    """One trace plus its pump scheme and parameter bindings."""

    trace: SweepTrace
    scheme: PumpScheme
    bindings: dict[str, ParamBinding]
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.scheme = PumpScheme.parse(self.scheme)
        for name, b in self.bindings.items():
            if b.name != name:
                raise ValueError(f"binding key {name!r} does not match binding name {b.name!r}")
        if "pump_freq_hz" not in self.trace.meta:
            raise ValueError("trace meta must carry pump_freq_hz")
        omega_d = TWO_PI * float(self.trace.meta["pump_freq_hz"])
        if self.trace.axis == "offset":
            omega_p = omega_d + self.trace.omega
        else:
            omega_p = self.trace.omega
        self._omega_d = omega_d
        self._omega_p = np.asarray(omega_p, dtype=float)
        self._data = self.trace.magnitude()
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self._data.shape:
                raise ValueError("weights length must match the trace")

    @property
    def n_points(self) -> int:
        return len(self._data)


class FitProblem:
    """A set of datasets fitted together through their parameter bindings.

    Free bindings get one slot per dataset; shared bindings one slot per
    (name, group) pair, which must be declared identically wherever it
    appears.  ``shared`` bindings passed at problem level are merged into
    every dataset that does not bind that name itself.
    """

    def __init__(self, datasets, shared: dict[str, ParamBinding] | None = None):
        if not datasets:
            raise ValueError("need at least one dataset")
        self.datasets = list(datasets)
        if shared:
            for ds in self.datasets:
                for name, b in shared.items():
                    ds.bindings.setdefault(name, b)
        for i, ds in enumerate(self.datasets):
            missing = [n for n in PARAM_NAMES if n not in ds.bindings]
            if missing:
                raise ValueError(f"dataset {i}: bindings incomplete; missing {missing}")
        self._build_slots()

    def _build_slots(self):
        slots: list[str] = []
        inits: list[float] = []
        los: list[float] = []
        his: list[float] = []
        log_flags: list[bool] = []
        shared_seen: dict[str, ParamBinding] = {}
        index_maps: list[dict[str, int | float]] = []

        def add_slot(key, binding):
            slots.append(key)
            inits.append(binding.init)
            los.append(binding.lo)
            his.append(binding.hi)
            log_flags.append(binding.name in LOG_PARAMS)
            return len(slots) - 1

        for i, ds in enumerate(self.datasets):
            mapping: dict[str, int | float] = {}
            for name in PARAM_NAMES:
                b = ds.bindings[name]
                if b.mode == "fixed":
                    mapping[name] = ("const", b.init)
                elif b.mode == "free":
                    mapping[name] = ("slot", add_slot(f"{name}[{i}]", b))
                else:
                    key = f"{name}@{b.group}"
                    if key in shared_seen:
                        prev = shared_seen[key]
                        if (prev.init, prev.lo, prev.hi) != (b.init, b.lo, b.hi):
                            raise ValueError(
                                f"inconsistent shared binding {key}: "
                                f"{(b.init, b.lo, b.hi)} vs {(prev.init, prev.lo, prev.hi)}")
                        mapping[name] = ("slot", slots.index(key))
                    else:
                        shared_seen[key] = b
                        mapping[name] = ("slot", add_slot(key, b))
            index_maps.append(mapping)

        self.slot_names = tuple(slots)
        self.init_values = np.array(inits, dtype=float)
        self.lower_bounds = np.array(los, dtype=float)
        self.upper_bounds = np.array(his, dtype=float)
        self._log_flags = np.array(log_flags, dtype=bool)
        self._index_maps = index_maps

    @property
    def n_parameters(self) -> int:
        return len(self.slot_names)

    @property
    def n_points(self) -> int:
        return sum(ds.n_points for ds in self.datasets)

    def dataset_values(self, values) -> list[dict[str, float]]:
        """Resolve the full parameter dict of every dataset from a slot vector."""
        values = np.asarray(values, dtype=float)
        out = []
        for mapping in self._index_maps:
            d = {}
            for name, ref in mapping.items():
                kind, v = ref
                d[name] = float(values[v]) if kind == "slot" else float(v)
            out.append(d)
        return out


def _dataset_residuals(ds: FitDataset, p: dict[str, float]) -> np.ndarray:
    try:
        cav = CavityParams(p["omega_c"], p["kappa"], p["kappa_ext"])
        mech = MechanicalParams(p["omega_m"], p["gamma_m"], p["g0"])
        pump = PumpConfig(ds.scheme, ds._omega_d - p["omega_c"], n_cav=p["n_cav"])
        model = np.abs(probe_transmission(ds._omega_p - ds._omega_d, pump, cav, mech))
        res = model - ds._data
    except (SingularDenominator, ValueError):
        return np.full(ds.n_points, PENALTY_RESIDUAL)
    if ds.weights is not None:
        res = res * ds.weights
    # Guard: a trial evaluation must never leak a non-finite residual.
    return np.nan_to_num(res, nan=PENALTY_RESIDUAL,
                         posinf=PENALTY_RESIDUAL, neginf=-PENALTY_RESIDUAL)


def residuals(problem: FitProblem, values) -> np.ndarray:
    """Weighted residual vector |S21_model| - |S21_data| over all datasets.

    ``values`` holds the physical slot values (rad/s, counts) in
    ``problem.slot_names`` order.  Singular or unphysical trial points
    contribute the finite penalty value instead of raising.
    """
    parts = [_dataset_residuals(ds, p)
             for ds, p in zip(problem.datasets, problem.dataset_values(values))]
    return np.concatenate(parts)


@dataclass
class FitResult:
    """Outcome of :func:`fit`.

    ``values``/``stderr`` are keyed by slot name and hold physical (angular)
    units; uncertainties come from the linearized normal equations at the
    optimum scaled by the reduced residual variance.  ``cost_history`` is the
    sequence of accepted residual norms (monotone non-increasing).
    """

    values: dict[str, float]
    stderr: dict[str, float]
    rms_residual: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)
    dataset_params: list[dict[str, float]] = field(default_factory=list)


def _to_internal(v, log_flags):
    x = np.array(v, dtype=float)
    x[log_flags] = np.log(x[log_flags])
    return x


def _to_physical(x, log_flags):
    v = np.array(x, dtype=float)
    v[log_flags] = np.exp(v[log_flags])
    return v


def _jacobian(fun, x, n_res):
    """Central-difference Jacobian with per-parameter relative steps."""
    jac = np.empty((n_res, len(x)))
    for j in range(len(x)):
        h = max(JACOBIAN_REL_STEP * abs(x[j]), JACOBIAN_ABS_STEP)
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return jac


def fit(problem: FitProblem) -> FitResult:
    """Damped least squares over the problem's free and shared slots.

    Levenberg-Marquardt with a central-difference Jacobian, damping divided
    (multiplied) by 10 on accepted (rejected) steps from 1e-3, bound handling
    by projection, and convergence once the relative residual-norm reduction
    or the relative parameter step drops below 1e-10, capped at 200
    iterations.  On hitting the cap the best parameters so far are returned
    with ``converged=False``.

    Raises
    ------
    InsufficientData
        If the problem has fewer points than adjustable parameters.
    """
    n_par = problem.n_parameters
    n_pts = problem.n_points
    if n_pts < n_par:
        raise InsufficientData(
            f"{n_pts} data points for {n_par} adjustable parameters")

    log_flags = problem._log_flags
    lo = _to_internal(problem.lower_bounds, log_flags)
    hi = _to_internal(problem.upper_bounds, log_flags)

    def res_internal(x):
        return residuals(problem, _to_physical(x, log_flags))

    x = np.clip(_to_internal(problem.init_values, log_flags), lo, hi)
    r = res_internal(x)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    lam = INITIAL_DAMPING
    iterations = 0
    converged = rnorm == 0.0 or n_par == 0
    jac = None if converged else _jacobian(res_internal, x, n_pts)

    while not converged and iterations < MAX_ITERATIONS:
        iterations += 1
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(a).copy()
        diag[diag <= 0] = 1.0
        try:
            step = np.linalg.solve(a + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= DAMPING_FACTOR
            continue
        x_trial = np.clip(x + step, lo, hi)
        actual = x_trial - x
        # Per-parameter relative step: a vector norm would let large linear
        # coordinates (omega_c ~ 1e10 rad/s) mask meaningful motion in the
        # O(1) logarithmic coordinates and stop the loop early.
        step_rel = float(np.max(np.abs(actual) / (1.0 + np.abs(x))))
        r_trial = res_internal(x_trial)
        rt_norm = float(np.linalg.norm(r_trial))
        if rt_norm < rnorm:
            drop = (rnorm - rt_norm) / rnorm
            x, r, rnorm = x_trial, r_trial, rt_norm
            history.append(rnorm)
            lam /= DAMPING_FACTOR
            if drop < REL_REDUCTION_TOL or step_rel < REL_STEP_TOL or rnorm == 0.0:
                converged = True
            else:
                jac = _jacobian(res_internal, x, n_pts)
        else:
            lam *= DAMPING_FACTOR
            if step_rel < REL_STEP_TOL:
                # Damping has pinned the proposal; no reducing step exists.
                converged = True

    values_phys = _to_physical(x, log_flags)
    stderr_phys = _uncertainties(res_internal, x, rnorm, n_pts, n_par,
                                 values_phys, log_flags)
    values = dict(zip(problem.slot_names, values_phys.tolist()))
    stderr = dict(zip(problem.slot_names, stderr_phys.tolist()))
    return FitResult(
        values=values,
        stderr=stderr,
        rms_residual=rnorm / math.sqrt(n_pts),
        iterations=iterations,
        converged=converged,
        cost_history=history,
        dataset_params=problem.dataset_values(values_phys),
    )


def _uncertainties(res_internal, x, rnorm, n_pts, n_par, values_phys, log_flags):
    if n_par == 0:
        return np.array([])
    jac = _jacobian(res_internal, x, n_pts)
    a = jac.T @ jac
    if n_pts > n_par:
        s2 = rnorm ** 2 / (n_pts - n_par)
    else:
        s2 = math.nan
    cov = np.linalg.pinv(a) * s2
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    # Delta method back to physical units for log-coordinate slots.
    sig = np.where(log_flags, sig * values_phys, sig)
    return sig


def _smooth(y: np.ndarray, window: int) -> np.ndarray:
    window = max(3, int(window) | 1)
    kernel = np.ones(window) / window
    pad = window // 2
    padded = np.concatenate([np.full(pad, y[0]), y, np.full(pad, y[-1])])
    return np.convolve(padded, kernel, mode="valid")


def _noise_estimate(y: np.ndarray) -> float:
    """Robust noise std from first differences (immune to slow structure)."""
    d = np.diff(y)
    return float(np.median(np.abs(d - np.median(d)))) / (math.sqrt(2.0) * 0.6745)


def _half_crossings(axis, dev, idx, half):
    """Interpolated axis positions where |dev| falls through |half| around idx."""
    left = None
    for j in range(idx, 0, -1):
        if (dev[j - 1] - half) * (dev[j] - half) <= 0 and dev[j] != dev[j - 1]:
            frac = (half - dev[j - 1]) / (dev[j] - dev[j - 1])
            left = axis[j - 1] + frac * (axis[j] - axis[j - 1])
            break
    right = None
    for j in range(idx, len(dev) - 1):
        if (dev[j] - half) * (dev[j + 1] - half) <= 0 and dev[j + 1] != dev[j]:
            frac = (half - dev[j]) / (dev[j + 1] - dev[j])
            right = axis[j] + frac * (axis[j + 1] - axis[j])
            break
    return left, right


def extract_linewidth(trace: SweepTrace) -> float:
    """FWHM of the optomechanical feature (rad/s), by half-contrast crossing.

    The width is measured on the power response |S21|^2, whose feature is an
    exact offset Lorentzian in the sideband-resolved limit (the magnitude
    feature is not).  The slowly varying cavity background is removed by a
    quadratic fitted to the trace edges, so a pump-off scan (pure cavity
    curvature, no mechanical feature) is rejected rather than measured.
    Crossings are located by linear interpolation between bracketing samples.

    Raises
    ------
    FeatureNotFound
        No feature above the noise floor, or no bracketing half crossing
        inside the trace.
    UnderResolved
        Fewer than 20 grid points across the measured width.
    """
    power = trace.magnitude() ** 2
    axis = trace.omega
    n = len(power)
    k = max(3, n // 20)
    edge = np.concatenate([np.arange(k), np.arange(n - k, n)])
    # Normalized abscissa keeps the polynomial fit conditioned on absolute
    # frequency axes (~1e10 rad/s).
    x = (axis - axis[len(axis) // 2]) / max(axis[-1] - axis[0], 1e-30)
    coeffs = np.polyfit(x[edge], power[edge], 2)
    dev = power - np.polyval(coeffs, x)
    idx = int(np.argmax(np.abs(dev)))
    contrast = float(dev[idx])
    level = float(np.median(power))
    threshold = max(3.0 * _noise_estimate(power), 1e-4 * max(level, 1e-30))
    if abs(contrast) <= threshold:
        raise FeatureNotFound("no spectral feature above the noise floor")
    half = contrast / 2.0
    left, right = _half_crossings(axis, dev, idx, half)
    if left is None or right is None:
        raise FeatureNotFound("feature has no half-contrast crossing inside the trace")
    inside = np.count_nonzero((axis > left) & (axis < right))
    if inside < MIN_POINTS_ACROSS_FWHM:
        raise UnderResolved(
            f"only {inside} grid points across the feature width "
            f"(need >= {MIN_POINTS_ACROSS_FWHM})")
    return float(right - left)


def init_heuristics(trace: SweepTrace) -> dict:
    """Starting values from a raw trace.

    Returns a dict with ``omega_c`` (axis position of the smoothed notch
    minimum), ``kappa`` (full width at half dip depth, measured on power)
    and ``feature_center`` (extremum of the background-subtracted signal),
    all in the units of the trace axis (rad/s).

    Raises
    ------
    FeatureNotFound
        If the dip contrast is below 3x the noise estimate.
    """
    mag = trace.magnitude()
    axis = trace.omega
    n = len(mag)
    power = mag ** 2
    smooth = _smooth(power, n // 50)
    k = max(3, n // 20)
    background = float(np.median(np.concatenate([smooth[:k], smooth[-k:]])))
    dip_idx = int(np.argmin(smooth))
    depth = background - float(smooth[dip_idx])
    noise = _noise_estimate(power)
    if depth <= max(3.0 * noise, 1e-9 * max(background, 1e-30)):
        raise FeatureNotFound("no dip above the noise floor")
    left, right = _half_crossings(axis, smooth - background, dip_idx, -depth / 2.0)
    if left is None or right is None:
        raise FeatureNotFound("dip has no half-depth crossing inside the trace")
    dev = power - background
    feat_idx = int(np.argmax(np.abs(dev)))
    return {
        "omega_c": float(axis[dip_idx]),
        "kappa": float(right - left),
        "feature_center": float(axis[feat_idx]),
    }
