"""Steady-state two-tone response of a mechanically compliant microwave cavity.

A strong pump at ``omega_d`` and a weak probe at ``omega_p`` drive a cavity
(resonance ``omega_c``, total linewidth ``kappa``, feedline coupling
``kappa_ext``) whose frequency is modulated by a mechanical mode
(``omega_m``, ``gamma_m``, vacuum coupling ``g0``).  Input-output theory for
the side-coupled (notch) geometry gives the probe transmission

    S21 = 1 - (kappa_ext/2) * chi_c / (1 -/+ g0^2 n_cav chi_c chi_m)

with the cavity and mechanical susceptibilities

    chi_c^-1 = kappa/2   - i (Omega + Delta)
    chi_m^-1 = gamma_m/2 - i (Omega +/- omega_m)

where ``Omega = omega_p - omega_d`` is the probe offset from the pump,
``Delta = omega_d - omega_c`` the pump detuning, and the upper (lower) signs
apply to blue (red) pumping.  Red pumping produces a transparency window
(OMIT), blue pumping an absorption window (OMIA).  The pump photon number is

    n_cav = P_in * kappa_ext * |chi_c(omega_d)|^2 / (2 hbar omega_d).

Everything here works in angular frequency (rad/s).  Use the ``from_hz``
constructors to enter from ordinary frequencies.  All functions are pure and
accept scalar or ndarray probe offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

# Reduced Planck constant, J*s (CODATA 2018).
HBAR = 1.054571817e-34

# Relative floor on |1 -/+ g0^2 n chi_c chi_m| below which the linear
# steady-state response is treated as singular.
DENOMINATOR_GUARD = 1e-9

TWO_PI = 2.0 * np.pi

__all__ = [
    "HBAR",
    "DENOMINATOR_GUARD",
    "SingularDenominator",
    "PumpScheme",
    "CavityParams",
    "MechanicalParams",
    "PumpConfig",
    "cavity_susceptibility",
    "mechanical_susceptibility",
    "intracavity_photon_number",
    "probe_transmission",
    "cooperativity",
    "effective_linewidth",
    "instability_check",
]


class SingularDenominator(Exception):
    """Linear response is singular: at or past the parametric instability.

    Raised when the interference denominator of the transmission model falls
    below :data:`DENOMINATOR_GUARD`, or when a blue-pumped configuration has
    vanishing effective mechanical damping (self-sustained oscillation
    regime), where the steady-state formula is no longer meaningful.
    """

    def __init__(self, message, omega=None, delta=None):
        super().__init__(message)
        self.omega = omega
        self.delta = delta


class PumpScheme(Enum):
    """Pump placement relative to the cavity: red (below) or blue (above)."""

    RED = "red"
    BLUE = "blue"

    @property
    def sign(self) -> int:
        """Upper-sign (+1, blue) or lower-sign (-1, red) branch of the model."""
        return +1 if self is PumpScheme.BLUE else -1

    @classmethod
    def parse(cls, value) -> "PumpScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown pump scheme {value!r}; expected 'red' or 'blue'") from None


@dataclass(frozen=True)
class CavityParams:
    """Microwave cavity parameters, angular units (rad/s).

    Attributes
    ----------
    omega_c : float
        Cavity resonance frequency.
    kappa : float
        Total cavity linewidth.
    kappa_ext : float
        Feedline-coupling part of the linewidth, 0 < kappa_ext <= kappa.
    """

    omega_c: float
    kappa: float
    kappa_ext: float

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 0 < self.kappa_ext <= self.kappa:
            raise ValueError("kappa_ext must satisfy 0 < kappa_ext <= kappa")

    @classmethod
    def from_hz(cls, f_c, kappa_hz, kappa_ext_hz) -> "CavityParams":
        return cls(TWO_PI * f_c, TWO_PI * kappa_hz, TWO_PI * kappa_ext_hz)


@dataclass(frozen=True)
class MechanicalParams:
    """Mechanical mode parameters, angular units (rad/s).

    Attributes
    ----------
    omega_m : float
        Mechanical resonance frequency.
    gamma_m : float
        Intrinsic mechanical linewidth.
    g0 : float
        Vacuum optomechanical coupling (cavity shift per zero-point motion).
    """

    omega_m: float
    gamma_m: float
    g0: float

    def __post_init__(self):
        if not self.omega_m > 0:
            raise ValueError("omega_m must be positive")
        if not self.gamma_m > 0:
            raise ValueError("gamma_m must be positive")
        if self.g0 < 0:
            raise ValueError("g0 must be non-negative")

    @classmethod
    def from_hz(cls, f_m, gamma_m_hz, g0_hz) -> "MechanicalParams":
        return cls(TWO_PI * f_m, TWO_PI * gamma_m_hz, TWO_PI * g0_hz)

    def is_sideband_resolved(self, cav: CavityParams) -> bool:
        """Whether the mode sits outside the cavity linewidth (omega_m > kappa)."""
        return self.omega_m > cav.kappa


@dataclass(frozen=True)
class PumpConfig:
    """One pump condition: scheme, detuning and drive strength.

    Exactly one of ``n_cav`` (intracavity photon number) or ``p_in`` (input
    power in watts) is authoritative; the other follows from the photon
    relation via :func:`intracavity_photon_number`.

    Attributes
    ----------
    scheme : PumpScheme
    delta : float
        Pump detuning Delta = omega_d - omega_c (rad/s).
    n_cav : float or None
        Pump photon number, >= 0.
    p_in : float or None
        Pump power at the device input, watts, >= 0.
    """

    scheme: PumpScheme
    delta: float
    n_cav: float | None = None
    p_in: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", PumpScheme.parse(self.scheme))
        if (self.n_cav is None) == (self.p_in is None):
            raise ValueError("specify exactly one of n_cav or p_in")
        if self.n_cav is not None and self.n_cav < 0:
            raise ValueError("n_cav must be non-negative")
        if self.p_in is not None and self.p_in < 0:
            raise ValueError("p_in must be non-negative")

    @classmethod
    def from_hz(cls, scheme, delta_hz, n_cav=None, p_in=None) -> "PumpConfig":
        return cls(PumpScheme.parse(scheme), TWO_PI * delta_hz, n_cav=n_cav, p_in=p_in)

    def omega_d(self, cav: CavityParams) -> float:
        """Absolute pump frequency omega_c + Delta (rad/s)."""
        return cav.omega_c + self.delta

    def at_delta(self, delta) -> "PumpConfig":
        """Same drive, different detuning (rad/s)."""
        return replace(self, delta=delta)


def cavity_susceptibility(omega, delta, kappa):
    """Cavity susceptibility chi_c = 1 / (kappa/2 - i (Omega + Delta)).

    Parameters
    ----------
    omega : float or ndarray
        Probe offset from the pump, Omega = omega_p - omega_d (rad/s).
    delta : float
        Pump detuning Delta = omega_d - omega_c (rad/s).
    kappa : float
        Total cavity linewidth (rad/s).

    Returns
    -------
    complex or ndarray
        chi_c in 1/(rad/s); |chi_c| peaks at 2/kappa where Omega + Delta = 0.
    """
    return 1.0 / (0.5 * kappa - 1j * (np.asarray(omega) + delta))


def mechanical_susceptibility(omega, mech: MechanicalParams, scheme: PumpScheme):
    """Mechanical susceptibility chi_m = 1 / (gamma_m/2 - i (Omega +/- omega_m)).

    The upper sign (Omega + omega_m, peak at Omega = -omega_m) applies to blue
    pumping, the lower sign (Omega - omega_m, peak at Omega = +omega_m) to red.

    Parameters
    ----------
    omega : float or ndarray
        Probe offset from the pump (rad/s).
    mech : MechanicalParams
    scheme : PumpScheme

    Returns
    -------
    complex or ndarray
        chi_m in 1/(rad/s); peak magnitude 2/gamma_m on the sideband.
    """
    scheme = PumpScheme.parse(scheme)
    x = np.asarray(omega) + scheme.sign * mech.omega_m
    return 1.0 / (0.5 * mech.gamma_m - 1j * x)


def intracavity_photon_number(pump: PumpConfig, cav: CavityParams) -> float:
    """Pump photons stored in the cavity.

    n_cav = P_in * kappa_ext * |chi_c(omega_d)|^2 / (2 hbar omega_d), with the
    pump-tone susceptibility chi_c(omega_d) = 1/(kappa/2 - i Delta).  If the
    pump drive is already given as a photon number it is returned as-is.
    """
    if pump.n_cav is not None:
        return float(pump.n_cav)
    chi_d = cavity_susceptibility(0.0, pump.delta, cav.kappa)
    omega_d = pump.omega_d(cav)
    return float(pump.p_in * cav.kappa_ext * abs(chi_d) ** 2 / (2.0 * HBAR * omega_d))


def cooperativity(g0, n_cav, kappa, gamma_m) -> float:
    """Optomechanical cooperativity C = 4 g0^2 n_cav / (kappa gamma_m).

    All arguments in rad/s (the 2*pi factors cancel, so consistent Hz inputs
    give the same value).  C sets the on-resonance OMIT peak height
    1 - (kappa_ext/kappa)/(1+C), the OMIA dip 1 - (kappa_ext/kappa)/(1-C),
    and the backaction-modified linewidth gamma_m (1 +/- C).
    """
    if kappa <= 0 or gamma_m <= 0:
        raise ValueError("kappa and gamma_m must be positive")
    if g0 < 0 or n_cav < 0:
        raise ValueError("g0 and n_cav must be non-negative")
    return 4.0 * g0 * g0 * n_cav / (kappa * gamma_m)


def effective_linewidth(mech: MechanicalParams, coop: float, scheme: PumpScheme) -> float:
    """Backaction-modified mechanical linewidth (rad/s).

    Red pumping adds damping, gamma_eff = gamma_m (1 + C); blue pumping
    removes it, gamma_eff = gamma_m (1 - C), which reaches zero at the
    parametric instability C = 1.  A non-positive return is meaningful --
    see :func:`instability_check`.
    """
    if coop < 0:
        raise ValueError("cooperativity must be non-negative")
    scheme = PumpScheme.parse(scheme)
    return mech.gamma_m * (1.0 - scheme.sign * coop)


def instability_check(mech: MechanicalParams, coop: float, scheme: PumpScheme) -> bool:
    """True when the mechanical mode self-oscillates (blue pumping, C >= 1).

    Red pumping only ever broadens the mode and is unconditionally stable.
    """
    if coop < 0:
        raise ValueError("cooperativity must be non-negative")
    scheme = PumpScheme.parse(scheme)
    return scheme is PumpScheme.BLUE and coop >= 1.0


def _local_cooperativity(pump: PumpConfig, cav: CavityParams, mech: MechanicalParams,
                         n_cav: float) -> float:
    """Cooperativity weighted by cavity-sideband alignment.

    The backaction strength follows |chi_c|^2 at the pump sideband; detuning
    the sideband from the cavity by d = Delta +/- omega_m reduces the aligned
    cooperativity by (kappa/2)^2 / ((kappa/2)^2 + d^2).
    """
    coop = cooperativity(mech.g0, n_cav, cav.kappa, mech.gamma_m)
    d = pump.delta + pump.scheme.sign * (-mech.omega_m)  # Delta - sign*omega_m
    half_kappa_sq = (0.5 * cav.kappa) ** 2
    return coop * half_kappa_sq / (half_kappa_sq + d * d)


def probe_transmission(omega, pump: PumpConfig, cav: CavityParams,
                       mech: MechanicalParams):
    """Complex probe transmission S21 at probe offset(s) ``omega``.

    S21 = 1 - (kappa_ext/2) chi_c / (1 -/+ g0^2 n_cav chi_c chi_m), evaluated
    at absolute probe frequency omega_p = omega_c + Delta + Omega.  The upper
    sign (blue) produces absorption, the lower (red) transparency.  With zero
    pump photons this reduces exactly to the bare notch 1 - chi_c kappa_ext/2.

    Parameters
    ----------
    omega : float or ndarray
        Probe offset(s) Omega = omega_p - omega_d (rad/s).
    pump : PumpConfig
    cav : CavityParams
    mech : MechanicalParams

    Returns
    -------
    complex or ndarray

    Raises
    ------
    SingularDenominator
        If the interference denominator magnitude drops below
        :data:`DENOMINATOR_GUARD` at any requested point, or the pump
        configuration is at/past the blue parametric instability (effective
        damping <= 0 at this detuning).
    """
    n_cav = intracavity_photon_number(pump, cav)
    if pump.scheme is PumpScheme.BLUE and n_cav > 0:
        c_loc = _local_cooperativity(pump, cav, mech, n_cav)
        if c_loc >= 1.0:
            raise SingularDenominator(
                "blue pumping past the parametric instability "
                f"(sideband-aligned cooperativity {c_loc:.6g} >= 1); "
                "steady-state response is undefined",
                delta=pump.delta,
            )

    omega = np.asarray(omega, dtype=float)
    chi_c = cavity_susceptibility(omega, pump.delta, cav.kappa)
    chi_m = mechanical_susceptibility(omega, mech, pump.scheme)
    denom = 1.0 - pump.scheme.sign * (mech.g0 ** 2) * n_cav * chi_c * chi_m
    mag = np.abs(denom)
    if np.min(mag) < DENOMINATOR_GUARD:
        idx = int(np.argmin(mag))
        bad = float(np.ravel(omega)[idx]) if omega.ndim else float(omega)
        raise SingularDenominator(
            f"interference denominator |1 -/+ g0^2 n chi_c chi_m| = {np.min(mag):.3e} "
            f"< {DENOMINATOR_GUARD:g} at probe offset {bad / TWO_PI:.6f} Hz",
            omega=bad, delta=pump.delta,
        )
    s21 = 1.0 - 0.5 * cav.kappa_ext * chi_c / denom
    if omega.ndim == 0:
        return complex(s21)
    return s21
