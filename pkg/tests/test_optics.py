"""Splitters, the two-photon interferometer core, and the detector model."""

import math

import numpy as np
import pytest

from photonflow.core import (
    ConfigError,
    Origin,
    PhotonRecord,
    Polarization,
    RunSeed,
    Wavelength,
    substream,
)
from photonflow.optics import (
    BeamSplitter,
    DetectorConfig,
    DetectStats,
    HomInterferometer,
    PolarizationConfig,
    SplitPort,
    apply_dead_time,
    detect,
    hom_interfere,
    joint_split_probabilities,
    pair_overlap,
    split,
)


def record(time_ps, detuning=0.0, origin=Origin.SIGNAL, env=None, tau=271.0, pol=Polarization.H):
    return PhotonRecord(
        emit_time_ps=time_ps,
        wavelength=Wavelength(940.0),
        detuning_ghz=detuning,
        polarization=pol,
        origin=origin,
        pulse_index=0,
        env_start_ps=float(time_ps) if env is None else env,
        wavepacket_tau_ps=tau,
    )


def ifo(r2=0.5, t2=0.5, visibility=1.0, pol=PolarizationConfig.CO, delay=13699):
    return HomInterferometer(
        bs_in=BeamSplitter(0.5, 0.5),
        bs_out=BeamSplitter(r2, t2),
        arm_delay_ps=delay,
        classical_visibility=visibility,
        polarization_config=pol,
    )


class TestSplit:
    def test_full_reflectance(self):
        rng = substream(RunSeed(0), 0, 0)
        bs = BeamSplitter(1.0, 0.0)
        assert all(split(bs, record(0), rng) == SplitPort.REFLECT for _ in range(100))

    def test_balanced_binomial(self):
        rng = substream(RunSeed(1), 0, 0)
        bs = BeamSplitter(0.5, 0.5)
        n = 1_000_000
        photon = record(0)
        reflected = sum(split(bs, photon, rng) == SplitPort.REFLECT for _ in range(n))
        assert abs(reflected / n - 0.5) < 3 * 0.5 / math.sqrt(n)

    def test_lossy_splitter(self):
        bs = BeamSplitter(0.45, 0.45)
        rng = substream(RunSeed(2), 0, 0)
        n = 100_000
        lost = sum(split(bs, record(0), rng) == SplitPort.LOST for _ in range(n))
        assert abs(lost / n - 0.1) < 3 * math.sqrt(0.1 * 0.9 / n)

    def test_invalid_ratios(self):
        with pytest.raises(ConfigError):
            BeamSplitter(0.7, 0.7)


class TestPairOverlap:
    def test_companion_and_noise_are_distinguishable(self):
        a = record(0)
        assert pair_overlap(record(0, origin=Origin.MULTIPHOTON), a, 13699) == 0.0
        assert pair_overlap(record(0, origin=Origin.NOISE), a, 13699) == 0.0

    def test_polarization_mismatch(self):
        assert pair_overlap(record(0), record(0, pol=Polarization.V), 13699) == 0.0

    def test_detuning_beyond_coherence(self):
        early = record(0, detuning=0.0)
        late = record(13699, detuning=50.0, env=13699.0)
        assert pair_overlap(early, late, 13699) == 0.0

    def test_formula(self):
        tau = 271.0
        early = record(0, detuning=0.0, env=0.0)
        late = record(13699, detuning=0.1, env=13699.0 + 40.0)
        x = 2 * math.pi * 1e-3 * 0.1 * tau
        expected = math.exp(-0.5 * x * x) * math.exp(-40.0 / tau)
        assert pair_overlap(early, late, 13699) == pytest.approx(expected)


def run_pairs(interferometer, n_pairs, seed, early_builder, late_builder):
    """Feed photon pairs one repetition apart; count outcomes."""
    central = 0
    rng = substream(RunSeed(seed), 0, 0)
    for _ in range(n_pairs):
        d1, d2 = hom_interfere(interferometer, early_builder(), late_builder(), rng)
        for t1 in d1:
            for t2 in d2:
                if abs(t2 - t1) < 2000:
                    central += 1
    return central


class TestHomInterfere:
    def test_perfect_dip(self):
        # identical photons, balanced splitter, perfect mode matching
        central = run_pairs(
            ifo(), 20_000, 3, lambda: record(0, env=0.0), lambda: record(13699, env=13699.0)
        )
        assert central == 0

    def test_cross_polarized_central_rate(self):
        r2, t2 = 0.6, 0.4
        setup = ifo(r2=r2, t2=t2, pol=PolarizationConfig.CROSS)
        n = 60_000
        central = run_pairs(setup, n, 4, lambda: record(0, env=0.0), lambda: record(13699, env=13699.0))
        expected = 0.25 * (r2**2 + t2**2)  # meeting probability times classical coincidence
        sigma = math.sqrt(n * expected * (1 - expected))
        assert abs(central - n * expected) < 3 * sigma

    def test_partial_overlap_suppression(self):
        # detuning chosen for a 0.95 overlap factor: central peak at 5% of cross
        tau = 271.0
        x = math.sqrt(-2.0 * math.log(0.95))
        detuning = x / (2 * math.pi * 1e-3 * tau)
        n = 100_000
        late = lambda: record(13699, detuning=detuning, env=13699.0)
        co = run_pairs(ifo(), n, 5, lambda: record(0, env=0.0), late)
        cross = run_pairs(ifo(pol=PolarizationConfig.CROSS), n, 6, lambda: record(0, env=0.0), late)
        ratio = co / cross
        sigma = ratio * math.sqrt(1 / co + 1 / cross)
        assert abs(ratio - 0.05) < 3 * sigma

    def test_joint_probabilities_normalize(self):
        for m in (0.0, 0.3, 1.0):
            for r2, t2 in ((0.5, 0.5), (0.6, 0.3), (0.2, 0.7)):
                b1, b2, s, w = joint_split_probabilities(r2, t2, m)
                assert b1 + b2 + s == pytest.approx(1.0)
                assert 0.0 <= w <= 1.0

    def test_photons_must_be_ordered(self):
        rng = substream(RunSeed(7), 0, 0)
        with pytest.raises(ConfigError):
            hom_interfere(ifo(), record(100), record(0), rng)


class TestDetect:
    def test_ideal_detector_exact_times(self):
        photons = [record(t) for t in (100, 2000, 2000, 50_000)]
        rng = substream(RunSeed(8), 0, 0)
        stream = detect(DetectorConfig(), photons, (0, 100_000), rng)
        assert stream.tags.tolist() == [100, 2000, 2000, 50_000]

    def test_jitter_sigma_recovered(self):
        cfg = DetectorConfig(efficiency=1.0, irf_sigma_ps=100.0)
        n = 100_000
        photons = [record(10_000_000)] * n
        rng = substream(RunSeed(9), 0, 0)
        stream = detect(cfg, photons, (0, 20_000_000), rng)
        spread = stream.tags.astype(float) - 10_000_000
        assert abs(spread.std(ddof=1) - 100.0) < 2.0
        assert abs(spread.mean()) < 3 * 100.0 / math.sqrt(n)

    def test_dead_time_veto(self):
        cfg = DetectorConfig(dead_time_ps=50_000)
        rng = substream(RunSeed(10), 0, 0)
        stream = detect(cfg, [record(1000), record(1010)], (0, 100_000), rng)
        assert stream.tags.tolist() == [1000]

    def test_efficiency_thinning_and_accounting(self):
        cfg = DetectorConfig(efficiency=0.3)
        stats = DetectStats()
        rng = substream(RunSeed(11), 0, 0)
        photons = [record(100 * i) for i in range(100_000)]
        stream = detect(cfg, photons, (0, 10_000_000), rng, stats=stats)
        assert stats.n_in == 100_000
        assert stats.registered + stats.undetected == stats.n_in
        assert stats.registered == len(stream) + stats.vetoed - stats.dark
        assert abs(stats.registered / 1e5 - 0.3) < 3 * math.sqrt(0.3 * 0.7 / 1e5)

    def test_dark_counts_poisson(self):
        cfg = DetectorConfig(efficiency=1.0, dark_rate_cps=1e6)
        rng = substream(RunSeed(12), 0, 0)
        counts = [len(detect(cfg, [], (0, 10**9), rng)) for _ in range(200)]
        mean = np.mean(counts)  # expect 1000 per window
        assert abs(mean - 1000.0) < 3 * math.sqrt(1000.0 / 200)

    def test_irf_moment_matching(self):
        # tag law equals emission law convolved with the jitter kernel:
        # mean shift zero, variance adds in quadrature
        tau, sigma = 271.0, 180.0
        rng = substream(RunSeed(13), 0, 0)
        n = 1_000_000
        emit = np.rint(rng.exponential(tau, n)).astype(np.int64) + 1_000_000
        photons_var = emit.var()
        cfg = DetectorConfig(efficiency=1.0, irf_sigma_ps=sigma)
        u = rng.random(n)
        z = rng.standard_normal(n)
        from photonflow.optics import register_arrivals

        tags = register_arrivals(cfg, emit, u, z)
        added = tags.var() - photons_var
        assert abs(tags.mean() - emit.mean()) < 3 * sigma / math.sqrt(n)
        assert abs(added - sigma**2) < 0.05 * sigma**2


class TestApplyDeadTime:
    def test_greedy_semantics(self):
        tags = np.array([0, 10, 20, 30, 100, 105, 200])
        kept, vetoed = apply_dead_time(tags, 25)
        assert kept.tolist() == [0, 30, 100, 200]
        assert vetoed == 3

    def test_boundary_is_exclusive(self):
        kept, _ = apply_dead_time(np.array([0, 25]), 25)
        assert kept.tolist() == [0, 25]

    def test_dense_stream_alternates(self):
        tags = np.arange(0, 100_000, 10)
        kept, vetoed = apply_dead_time(tags, 15)
        assert np.all(np.diff(kept) >= 15)
        assert kept.size + vetoed == tags.size
        assert kept.tolist() == list(range(0, 100_000, 20))

    def test_zero_dead_time_passthrough(self):
        tags = np.array([1, 2, 3])
        kept, vetoed = apply_dead_time(tags, 0)
        assert np.array_equal(kept, tags)
        assert vetoed == 0
