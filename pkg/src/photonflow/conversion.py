"""Difference-frequency conversion stage.

Maps photons from the emitter band to the telecom band, with pump-power
dependent efficiency, Gaussian spectral filtering, a loss budget, and optional
broadband noise.  Also implements the classical characterization: the
saturation fit and the two internal-efficiency bound estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .core import ConfigError, Origin, PhotonRecord, Polarization, Wavelength

_FWHM_TO_GAUSS = 4.0 * math.log(2.0)  # exp(-4 ln2 (d/FWHM)^2) is 1/2 at d = FWHM/2


class FitError(RuntimeError):
    """A least-squares fit could not be performed or did not converge."""


class MeasurementError(ValueError):
    """Measured values are mutually inconsistent."""


@dataclass(frozen=True)
class LossBudget:
    """Passive loss fractions of the conversion setup, input fiber to output fiber."""

    lens_in: float = 0.065
    lens_out: float = 0.065
    coupling: float = 0.04
    filter_chain: float = 0.30
    fiber_out: float = 0.25

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"loss fraction {name} must be in [0, 1]")

    def transmission(self) -> float:
        t = 1.0
        for value in self.__dict__.values():
            t *= 1.0 - value
        return t


@dataclass(frozen=True)
class ConversionConfig:
    pump_wavelength: Wavelength
    pump_power_mw: float
    eta_max: float
    p_sat_mw: float
    filter_fwhm_ghz: float = 115.0
    filter_center: Wavelength | None = None
    loss_budget: LossBudget = field(default_factory=LossBudget)
    noise_rate_cps: float = 0.0
    conversion_dephasing_ghz: float = 0.0  # hook, phase-preserving conversion by default

    def __post_init__(self):
        if not 0.0 < self.eta_max <= 1.0:
            raise ConfigError("eta_max must be in (0, 1]")
        if not self.p_sat_mw > 0:
            raise ConfigError("p_sat_mw must be positive")
        if not self.filter_fwhm_ghz > 0:
            raise ConfigError("filter_fwhm_ghz must be positive")
        if self.pump_power_mw < 0 or self.noise_rate_cps < 0:
            raise ConfigError("pump power and noise rate must be non-negative")
        if self.eta_max > self.loss_budget.transmission() + 1e-12:
            raise ConfigError(
                f"eta_max {self.eta_max} exceeds the loss-budget transmission "
                f"{self.loss_budget.transmission():.4f}"
            )


@dataclass(frozen=True)
class SaturationFit:
    eta_max: float
    p_sat_mw: float
    residual_rms: float
    eta_max_err: float = 0.0
    p_sat_err_mw: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta_max <= 1.0:
            raise ConfigError("fitted eta_max must be in (0, 1]")
        if not self.p_sat_mw > 0:
            raise ConfigError("fitted p_sat_mw must be positive")


@dataclass(frozen=True)
class EfficiencyBounds:
    eta_int_lower: float
    eta_int_upper: float

    def __post_init__(self):
        if self.eta_int_lower > self.eta_int_upper:
            raise MeasurementError("lower efficiency bound exceeds upper bound")


def dfg_wavelength(lambda1: Wavelength, lambda2: Wavelength) -> Wavelength:
    """Difference-frequency output wavelength 1/(1/l1 - 1/l2).

    Energy conservation 1/l3 = 1/l1 - 1/l2 holds to machine precision.
    """
    if lambda2.nm <= lambda1.nm:
        raise ConfigError(
            f"pump ({lambda2.nm} nm) must be redder than the signal ({lambda1.nm} nm)"
        )
    return Wavelength(1.0 / (1.0 / lambda1.nm - 1.0 / lambda2.nm))


def saturation_efficiency(cfg: ConversionConfig, pump_power_mw: float) -> float:
    """External conversion efficiency at the given in-waveguide pump power."""
    if pump_power_mw < 0:
        raise ConfigError("pump power must be non-negative")
    eta = cfg.eta_max * math.sin(0.5 * math.pi * math.sqrt(pump_power_mw / cfg.p_sat_mw)) ** 2
    return min(max(eta, 0.0), cfg.eta_max)


def _saturation_model(p, eta_max, p_sat):
    return eta_max * np.sin(0.5 * np.pi * np.sqrt(p / p_sat)) ** 2


def fit_saturation(points: list[tuple[float, float]]) -> SaturationFit:
    """Least-squares fit of the sin^2 saturation model to (power, efficiency) points."""
    if len(points) < 4:
        raise FitError(f"need at least 4 scan points, got {len(points)}")
    p = np.asarray([pt[0] for pt in points], dtype=float)
    eta = np.asarray([pt[1] for pt in points], dtype=float)
    if np.ptp(p) == 0:
        raise FitError("all scan powers are equal")
    order = np.argsort(p)
    imax = int(np.argmax(eta[order]))
    if imax in (0, len(points) - 1):
        raise FitError("scan does not span the efficiency maximum")

    p0 = [float(np.max(eta)), float(p[order][imax])]
    try:
        popt, pcov = curve_fit(
            _saturation_model, p, eta, p0=p0,
            bounds=([1e-9, 1e-9], [1.0, 100.0 * float(np.max(p))]),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitError(f"saturation fit did not converge: {exc}") from exc
    residuals = eta - _saturation_model(p, *popt)
    perr = np.sqrt(np.diag(pcov))
    return SaturationFit(
        eta_max=float(popt[0]),
        p_sat_mw=float(popt[1]),
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        eta_max_err=float(perr[0]),
        p_sat_err_mw=float(perr[1]),
    )


def filter_transmission(cfg: ConversionConfig, detuning_ghz) -> np.ndarray | float:
    """Gaussian bandpass transmission at the given offset from the filter center."""
    d = np.asarray(detuning_ghz, dtype=float)
    out = np.exp(-_FWHM_TO_GAUSS * (d / cfg.filter_fwhm_ghz) ** 2)
    return float(out) if out.ndim == 0 else out


def filter_offset_ghz(cfg: ConversionConfig, converted_center: Wavelength) -> float:
    """Frequency offset between the converted line center and the filter center."""
    if cfg.filter_center is None:
        return 0.0
    return converted_center.frequency_ghz - cfg.filter_center.frequency_ghz


def survival_probability(cfg: ConversionConfig, detuning_ghz, center_offset_ghz: float = 0.0):
    """Per-photon probability of surviving conversion plus filtering."""
    eta = saturation_efficiency(cfg, cfg.pump_power_mw)
    return eta * filter_transmission(cfg, np.asarray(detuning_ghz) + center_offset_ghz)


def convert_photon(
    cfg: ConversionConfig, photon: PhotonRecord, rng: np.random.Generator
) -> PhotonRecord | None:
    """Convert one photon; returns None if it is lost in conversion or filtering.

    Emission time, detuning, and origin are preserved: the stage is a
    phase-preserving spectral translation.
    """
    if photon.origin == Origin.NOISE:
        raise ConfigError("noise photons are created inside the conversion stage")
    out_wavelength = dfg_wavelength(photon.wavelength, cfg.pump_wavelength)
    offset = filter_offset_ghz(cfg, out_wavelength)
    p_survive = survival_probability(cfg, photon.detuning_ghz, offset)
    if rng.random() >= p_survive:
        return None
    return PhotonRecord(
        emit_time_ps=photon.emit_time_ps,
        wavelength=out_wavelength,
        detuning_ghz=photon.detuning_ghz,
        polarization=photon.polarization,
        origin=photon.origin,
        pulse_index=photon.pulse_index,
        env_start_ps=photon.env_start_ps,
        wavepacket_tau_ps=photon.wavepacket_tau_ps,
    )


def sample_noise_times(
    cfg: ConversionConfig, window_ps: tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    """Poisson-distributed noise photon times (integer ps), sorted."""
    t0, t1 = window_ps
    if t1 <= t0:
        raise ConfigError("noise window must have t1 > t0")
    if cfg.noise_rate_cps == 0:
        return np.empty(0, dtype=np.int64)
    mean = cfg.noise_rate_cps * (t1 - t0) * 1e-12
    count = rng.poisson(mean)
    times = t0 + np.floor(rng.random(count) * (t1 - t0)).astype(np.int64)
    times.sort()
    return times


def inject_noise(
    cfg: ConversionConfig,
    window_ps: tuple[int, int],
    rng: np.random.Generator,
    wavelength: Wavelength | None = None,
) -> list[PhotonRecord]:
    """Noise photons inside the filter band, uniform in the given window."""
    wl = wavelength or cfg.filter_center
    if wl is None:
        raise ConfigError("inject_noise needs a filter_center or explicit wavelength")
    times = sample_noise_times(cfg, window_ps, rng)
    return [
        PhotonRecord(
            emit_time_ps=int(t),
            wavelength=wl,
            detuning_ghz=0.0,
            polarization=Polarization.H,
            origin=Origin.NOISE,
            pulse_index=-1,
            env_start_ps=float(t),
            wavepacket_tau_ps=0.0,
        )
        for t in times
    ]


@dataclass(frozen=True)
class BoundsMeasurement:
    """Raw numbers entering the internal-efficiency bound estimators."""

    p_in_before_lens_mw: float
    p_out_after_lens_mw: float
    lens_loss: float
    coupling: float
    depletion_on_mw: float
    depletion_off_mw: float
    lambda_in: Wavelength
    lambda_out: Wavelength


def internal_efficiency_bounds(m: BoundsMeasurement) -> EfficiencyBounds:
    """Bracket the internal conversion efficiency from two measurements.

    Lower bound: photon-number ratio with lens and coupling losses factored
    out (scattering neglected, hence a lower bound).  Upper bound: one minus
    the signal depletion with the pump on (output loss neglected).
    """
    if not m.depletion_off_mw > 0:
        raise MeasurementError("depletion_off must be positive")
    if not 0.0 <= m.lens_loss < 1.0:
        raise MeasurementError("lens_loss must be in [0, 1)")
    if not 0.0 < m.coupling <= 1.0:
        raise MeasurementError("coupling efficiency must be in (0, 1]")
    if m.p_in_before_lens_mw <= 0 or m.p_out_after_lens_mw < 0:
        raise MeasurementError("powers must be positive (input) and non-negative (output)")

    photon_ratio = (m.p_out_after_lens_mw * m.lambda_out.nm) / (m.p_in_before_lens_mw * m.lambda_in.nm)
    lower = photon_ratio / ((1.0 - m.lens_loss) ** 2 * m.coupling**2)
    upper = 1.0 - m.depletion_on_mw / m.depletion_off_mw
    if not 0.0 <= lower <= 1.0 or not 0.0 <= upper <= 1.0:
        raise MeasurementError(
            f"efficiency bounds outside [0, 1]: lower={lower:.4f}, upper={upper:.4f}"
        )
    return EfficiencyBounds(eta_int_lower=lower, eta_int_upper=upper)


def external_efficiency(
    p_in: float,
    p_out: float,
    lambda_in: Wavelength | None = None,
    lambda_out: Wavelength | None = None,
) -> float:
    """Photon-number conversion ratio.

    With wavelengths given, converts the power ratio to a photon-number ratio
    (P_out * l_out)/(P_in * l_in); without them the inputs are already photon
    rates and the plain ratio is returned.
    """
    if not p_in > 0:
        raise ConfigError("input power/rate must be positive")
    if (lambda_in is None) != (lambda_out is None):
        raise ConfigError("give both wavelengths or neither")
    if lambda_in is None:
        return p_out / p_in
    return (p_out * lambda_out.nm) / (p_in * lambda_in.nm)
