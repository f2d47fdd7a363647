"""Conversion stage: wavelength mapping, saturation, filtering, efficiencies."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from photonflow.conversion import (
    BoundsMeasurement,
    ConversionConfig,
    FitError,
    LossBudget,
    MeasurementError,
    convert_photon,
    dfg_wavelength,
    external_efficiency,
    filter_transmission,
    fit_saturation,
    inject_noise,
    internal_efficiency_bounds,
    sample_noise_times,
    saturation_efficiency,
    survival_probability,
)
from photonflow.core import ConfigError, Origin, PhotonRecord, Polarization, RunSeed, Wavelength, substream


def conversion(**kwargs):
    defaults = dict(
        pump_wavelength=Wavelength(2400.0),
        pump_power_mw=327.0,
        eta_max=0.417,
        p_sat_mw=327.0,
    )
    defaults.update(kwargs)
    return ConversionConfig(**defaults)


def photon(detuning=0.0, origin=Origin.SIGNAL, wavelength=940.0):
    return PhotonRecord(
        emit_time_ps=1000,
        wavelength=Wavelength(wavelength),
        detuning_ghz=detuning,
        polarization=Polarization.H,
        origin=origin,
        pulse_index=0,
        env_start_ps=990.0,
        wavepacket_tau_ps=271.0,
    )


class TestDfgWavelength:
    def test_reference_point(self):
        out = dfg_wavelength(Wavelength(940.0), Wavelength(2400.0))
        assert out.nm == pytest.approx(940.0 * 2400.0 / (2400.0 - 940.0))
        assert out.nm == pytest.approx(1545.2, abs=0.01)

    def test_pump_solved_for_telecom_output(self):
        # invert the relation: which pump maps 942 nm onto 1550 nm
        lambda2 = 1.0 / (1.0 / 942.0 - 1.0 / 1550.0)
        assert lambda2 == pytest.approx(2401.5, abs=0.1)
        assert dfg_wavelength(Wavelength(942.0), Wavelength(lambda2)).nm == pytest.approx(1550.0)

    def test_infinite_pump_limit(self):
        out = dfg_wavelength(Wavelength(940.0), Wavelength(1e12))
        assert out.nm == pytest.approx(940.0, rel=1e-9)

    def test_pump_must_be_redder(self):
        with pytest.raises(ConfigError):
            dfg_wavelength(Wavelength(940.0), Wavelength(940.0))
        with pytest.raises(ConfigError):
            dfg_wavelength(Wavelength(940.0), Wavelength(800.0))

    @given(
        l1=st.floats(min_value=300.0, max_value=2000.0),
        l2_over=st.floats(min_value=1.0001, max_value=100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_energy_conservation(self, l1, l2_over):
        l2 = l1 * l2_over
        l3 = dfg_wavelength(Wavelength(l1), Wavelength(l2))
        assert abs(1.0 / l3.nm + 1.0 / l2 - 1.0 / l1) <= 1e-12 * (1.0 / l1)


class TestSaturation:
    def test_peak_power_value(self):
        assert saturation_efficiency(conversion(), 327.0) == pytest.approx(0.417)

    def test_zero_power(self):
        assert saturation_efficiency(conversion(), 0.0) == 0.0

    def test_quarter_power_half_efficiency(self):
        assert saturation_efficiency(conversion(), 327.0 / 4) == pytest.approx(0.417 / 2)

    def test_bounded_and_symmetric_in_sqrt_power(self):
        cfg = conversion()
        for x in (0.1, 0.3, 0.7):
            below = cfg.p_sat_mw * (1 - x) ** 2
            above = cfg.p_sat_mw * (1 + x) ** 2
            assert saturation_efficiency(cfg, below) == pytest.approx(
                saturation_efficiency(cfg, above), rel=1e-12
            )
        for p in np.linspace(0, 2000, 200):
            assert saturation_efficiency(cfg, p) <= cfg.eta_max

    def test_eta_max_capped_by_loss_budget(self):
        with pytest.raises(ConfigError):
            conversion(eta_max=0.9)


class TestFitSaturation:
    def test_noiseless_roundtrip(self):
        cfg = conversion()
        powers = np.linspace(20, 500, 15)
        points = [(p, saturation_efficiency(cfg, p)) for p in powers]
        fit = fit_saturation(points)
        assert abs(fit.eta_max - 0.417) / 0.417 < 1e-3
        assert abs(fit.p_sat_mw - 327.0) / 327.0 < 1e-3
        assert fit.residual_rms < 1e-9

    def test_noisy_recovery_over_realizations(self):
        cfg = conversion()
        powers = np.linspace(20, 500, 15)
        eta = np.array([saturation_efficiency(cfg, p) for p in powers])
        rng = np.random.default_rng(42)
        for _ in range(100):
            noisy = eta * (1.0 + 0.01 * rng.standard_normal(eta.size))
            fit = fit_saturation(list(zip(powers, noisy)))
            assert abs(fit.eta_max - 0.417) < 0.01

    def test_two_points_rejected(self):
        with pytest.raises(FitError):
            fit_saturation([(0.0, 0.0), (327.0, 0.417)])

    def test_degenerate_powers_rejected(self):
        with pytest.raises(FitError):
            fit_saturation([(100.0, 0.2)] * 6)

    def test_scan_must_span_maximum(self):
        cfg = conversion()
        powers = np.linspace(5, 100, 8)  # all below saturation
        with pytest.raises(FitError):
            fit_saturation([(p, saturation_efficiency(cfg, p)) for p in powers])


class TestConvertPhoton:
    def test_survival_probability_value(self):
        cfg = conversion(pump_power_mw=268.4928066597639)
        assert survival_probability(cfg, 0.0) == pytest.approx(0.408, abs=1e-4)

    def test_monte_carlo_survival_matches(self):
        cfg = conversion()
        rng = substream(RunSeed(4), 0, 0)
        n = 200_000
        survived = sum(convert_photon(cfg, photon(), rng) is not None for _ in range(n))
        sigma = math.sqrt(n * 0.417 * (1 - 0.417))
        assert abs(survived - 0.417 * n) < 3 * sigma

    def test_half_maximum_filter_point(self):
        cfg = conversion()
        assert filter_transmission(cfg, 57.5) == pytest.approx(0.5)

    def test_band_average_of_narrow_line(self):
        # numerical average of the filter over a 0.5 GHz-wide Gaussian line
        cfg = conversion()
        sigma = 0.5 / 2.3548
        avg, _ = integrate.quad(
            lambda d: filter_transmission(cfg, d) * stats.norm.pdf(d, scale=sigma), -30, 30
        )
        assert avg > 0.9999

    def test_preserves_time_detuning_origin(self):
        cfg = conversion()
        rng = substream(RunSeed(12), 0, 0)
        p = photon(detuning=2.5)
        for _ in range(50):
            out = convert_photon(cfg, p, rng)
            if out is not None:
                break
        assert out is not None
        assert out.emit_time_ps == p.emit_time_ps
        assert out.detuning_ghz == p.detuning_ghz
        assert out.origin == p.origin
        assert out.env_start_ps == p.env_start_ps
        assert out.wavelength.nm == pytest.approx(1545.2054794520548)

    def test_noise_photons_rejected_as_input(self):
        rng = substream(RunSeed(0), 0, 0)
        with pytest.raises(ConfigError):
            convert_photon(conversion(), photon(origin=Origin.NOISE), rng)


class TestInjectNoise:
    def test_zero_rate_empty(self):
        rng = substream(RunSeed(1), 0, 0)
        assert inject_noise(conversion(), (0, 10**12), rng, Wavelength(1545.0)) == []

    def test_poisson_counts(self):
        cfg = conversion(noise_rate_cps=1000.0)
        rng = substream(RunSeed(2), 0, 0)
        counts = [sample_noise_times(cfg, (0, 10**12), rng).size for _ in range(100)]
        mean = np.mean(counts)
        assert abs(mean - 1000.0) < 3 * math.sqrt(1000.0 / 100)
        assert abs(np.var(counts) - 1000.0) < 5 * 1000.0 * math.sqrt(2.0 / 99)

    def test_records_are_noise_tagged(self):
        cfg = conversion(noise_rate_cps=1e6, filter_center=Wavelength(1545.0))
        rng = substream(RunSeed(3), 0, 0)
        photons = inject_noise(cfg, (0, 10**9), rng)
        assert photons
        assert all(p.origin == Origin.NOISE for p in photons)
        times = [p.emit_time_ps for p in photons]
        assert times == sorted(times)

    def test_window_validated(self):
        rng = substream(RunSeed(4), 0, 0)
        with pytest.raises(ConfigError):
            sample_noise_times(conversion(noise_rate_cps=10.0), (100, 100), rng)


class TestEfficiencyBounds:
    def geometry(self, p_out):
        return BoundsMeasurement(
            p_in_before_lens_mw=1.0,
            p_out_after_lens_mw=p_out,
            lens_loss=0.065,
            coupling=0.96,
            depletion_on_mw=0.05,
            depletion_off_mw=1.0,
            lambda_in=Wavelength(940.0),
            lambda_out=Wavelength(1550.0),
        )

    def test_inverted_paper_geometry(self):
        # p_out chosen so the loss-factoring estimator returns exactly 0.86
        p_out = 0.86 * (1 - 0.065) ** 2 * 0.96**2 * 940.0 / 1550.0
        bounds = internal_efficiency_bounds(self.geometry(p_out))
        assert bounds.eta_int_lower == pytest.approx(0.86)
        assert bounds.eta_int_upper == pytest.approx(0.95)

    def test_lossless_identity(self):
        m = BoundsMeasurement(
            p_in_before_lens_mw=1.0,
            p_out_after_lens_mw=940.0 / 1550.0,
            lens_loss=0.0,
            coupling=1.0,
            depletion_on_mw=0.0,
            depletion_off_mw=1.0,
            lambda_in=Wavelength(940.0),
            lambda_out=Wavelength(1550.0),
        )
        bounds = internal_efficiency_bounds(m)
        assert bounds.eta_int_lower == pytest.approx(1.0)
        assert bounds.eta_int_upper == pytest.approx(1.0)

    def test_inconsistent_measurements_rejected(self):
        with pytest.raises(MeasurementError):
            internal_efficiency_bounds(self.geometry(1.0))  # lower bound above 1
        m = self.geometry(0.1)
        with pytest.raises(MeasurementError):
            internal_efficiency_bounds(
                BoundsMeasurement(**{**m.__dict__, "depletion_on_mw": 2.0})
            )
        with pytest.raises(MeasurementError):
            # lower bound 0.86 with a contradictory upper bound below it
            p_out = 0.86 * (1 - 0.065) ** 2 * 0.96**2 * 940.0 / 1550.0
            internal_efficiency_bounds(
                BoundsMeasurement(**{**self.geometry(p_out).__dict__, "depletion_on_mw": 0.5})
            )


class TestExternalEfficiency:
    def test_power_ratio_with_wavelengths(self):
        eta = external_efficiency(1.000, 0.2529, Wavelength(940.0), Wavelength(1550.0))
        assert eta == pytest.approx(0.417, abs=1e-3)

    def test_zero_output(self):
        assert external_efficiency(1.0, 0.0, Wavelength(940.0), Wavelength(1550.0)) == 0.0

    def test_photon_rate_units(self):
        assert external_efficiency(2.21e6, 905e3) == pytest.approx(0.4095, abs=5e-4)

    def test_argument_validation(self):
        with pytest.raises(ConfigError):
            external_efficiency(0.0, 1.0)
        with pytest.raises(ConfigError):
            external_efficiency(1.0, 0.5, Wavelength(940.0), None)


class TestLossBudget:
    def test_transmission_product(self):
        budget = LossBudget(lens_in=0.1, lens_out=0.1, coupling=0.0, filter_chain=0.0, fiber_out=0.5)
        assert budget.transmission() == pytest.approx(0.9 * 0.9 * 0.5)

    def test_fraction_range(self):
        with pytest.raises(ConfigError):
            LossBudget(lens_in=1.5)
