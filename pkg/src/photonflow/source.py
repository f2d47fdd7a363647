"""Pulsed two-level emitter: single photons with impurity, dephasing, blinking.

The emitter fires once per excitation pulse.  A signal photon is produced with
probability ``p_emit``; given a signal photon, a spectrally offset,
distinguishable companion is added with probability ``p_multi`` (this is what
gives the source a nonzero central correlation peak).  Detunings combine a
slow Gaussian wander (spectral diffusion, redrawn every ``diffusion_block``
pulses) with a fast per-photon Lorentzian (pure dephasing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, wofz

from .core import (
    STAGE_DIFFUSION,
    ConfigError,
    Origin,
    PhotonRecord,
    Polarization,
    PulseTrainConfig,
    RunSeed,
    substream,
    Wavelength,
)


def natural_linewidth_ghz(tau_ps: float) -> float:
    """Lifetime-limited (FWHM = 1/(2 pi tau)) linewidth in GHz."""
    return 1e3 / (2.0 * math.pi * tau_ps)


@dataclass(frozen=True)
class EmitterConfig:
    wavelength: Wavelength
    lifetime_tau_ps: float
    p_emit: float
    p_multi: float = 0.0
    dephasing_linewidth_ghz: float = 0.0
    spectral_diffusion_sigma_ghz: float = 0.0
    blink_on_rate_per_us: float = 0.0
    blink_off_rate_per_us: float = 0.0
    diffusion_block_pulses: int = 1000
    multi_detuning_offset_ghz: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.p_emit <= 1.0:
            raise ConfigError("p_emit must be in [0, 1]")
        if not 0.0 <= self.p_multi <= self.p_emit:
            raise ConfigError("p_multi must be in [0, p_emit]")
        if not self.lifetime_tau_ps > 0:
            raise ConfigError("lifetime_tau_ps must be positive")
        if self.dephasing_linewidth_ghz < 0 or self.spectral_diffusion_sigma_ghz < 0:
            raise ConfigError("linewidths must be non-negative")
        if min(self.blink_on_rate_per_us, self.blink_off_rate_per_us) < 0:
            raise ConfigError("blink rates must be non-negative")
        if (self.blink_on_rate_per_us > 0) != (self.blink_off_rate_per_us > 0):
            raise ConfigError("blinking needs both on and off rates (or neither)")
        if self.diffusion_block_pulses < 1:
            raise ConfigError("diffusion_block_pulses must be >= 1")

    @property
    def blinking_enabled(self) -> bool:
        return self.blink_on_rate_per_us > 0


@dataclass
class BlinkState:
    """Two-state telegraph: current state and the absolute time of the next switch."""

    bright: bool
    next_switch_ps: float

    def advance(self, cfg: EmitterConfig, to_time_ps: float, rng: np.random.Generator) -> None:
        """Step the telegraph so the state is valid at ``to_time_ps``."""
        if not cfg.blinking_enabled:
            return
        while self.next_switch_ps <= to_time_ps:
            self.bright = not self.bright
            rate = cfg.blink_off_rate_per_us if self.bright else cfg.blink_on_rate_per_us
            self.next_switch_ps += rng.exponential(1e6 / rate)


def initial_blink_state(cfg: EmitterConfig, rng: np.random.Generator) -> BlinkState:
    """Stationary-distribution initial state at t = 0."""
    if not cfg.blinking_enabled:
        return BlinkState(bright=True, next_switch_ps=math.inf)
    p_bright = cfg.blink_on_rate_per_us / (cfg.blink_on_rate_per_us + cfg.blink_off_rate_per_us)
    bright = rng.random() < p_bright
    rate = cfg.blink_off_rate_per_us if bright else cfg.blink_on_rate_per_us
    return BlinkState(bright=bright, next_switch_ps=rng.exponential(1e6 / rate))


class BlinkTable:
    """Precomputed telegraph switch times for one run.

    Built in a single sequential pass so that parallel pulse blocks can query
    the bright/dark state without advancing shared mutable state.
    """

    def __init__(self, initial_bright: bool, switch_times_ps: np.ndarray):
        self.initial_bright = initial_bright
        self.switch_times_ps = np.asarray(switch_times_ps, dtype=np.float64)

    @classmethod
    def build(cls, cfg: EmitterConfig, duration_ps: float, rng: np.random.Generator) -> "BlinkTable":
        state = initial_blink_state(cfg, rng)
        switches = []
        if cfg.blinking_enabled:
            t, bright = state.next_switch_ps, state.bright
            while t <= duration_ps:
                switches.append(t)
                bright = not bright
                rate = cfg.blink_off_rate_per_us if bright else cfg.blink_on_rate_per_us
                t += rng.exponential(1e6 / rate)
        return cls(state.bright, np.asarray(switches))

    def bright_at(self, times_ps: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.switch_times_ps, np.asarray(times_ps, dtype=np.float64), side="right")
        even = idx % 2 == 0
        return even if self.initial_bright else ~even


def _sample_cauchy(fwhm_ghz: float, u: np.ndarray) -> np.ndarray:
    # Lorentzian line of given FWHM <=> Cauchy with scale FWHM/2
    if fwhm_ghz == 0:
        return np.zeros_like(u)
    return 0.5 * fwhm_ghz * np.tan(np.pi * (u - 0.5))


def _sample_exponential(tau_ps: float, u: np.ndarray) -> np.ndarray:
    if tau_ps == 0:
        return np.zeros_like(u)
    return -tau_ps * np.log1p(-u)


# columns of the fixed per-pulse uniform draw block
_U_EMIT, _U_W_S, _U_EXP_S, _U_CAU_S, _U_MULTI, _U_W_C, _U_EXP_C, _U_CAU_C = range(8)
EMIT_DRAWS_PER_PULSE = 8


@dataclass
class EmissionBlock:
    """Struct-of-arrays emission result for a contiguous pulse range.

    ``sig_time_ps`` is quantized to the 1 ps recording grid;
    ``sig_time_exact_ps`` keeps the continuous sample for analyses of the
    emission law itself.
    """

    first_pulse: int
    sig_exists: np.ndarray
    sig_time_ps: np.ndarray
    sig_time_exact_ps: np.ndarray
    sig_env_ps: np.ndarray
    sig_detuning_ghz: np.ndarray
    comp_exists: np.ndarray
    comp_time_ps: np.ndarray
    comp_env_ps: np.ndarray
    comp_detuning_ghz: np.ndarray

    @property
    def n_pulses(self) -> int:
        return int(self.sig_exists.size)


def diffusion_offsets_ghz(cfg: EmitterConfig, seed: RunSeed, block_indices: np.ndarray) -> np.ndarray:
    """Slow-wander detuning for the given diffusion-block indices.

    Each diffusion block draws its offset from its own substream, so any
    engine block can evaluate it without sequential state.
    """
    if cfg.spectral_diffusion_sigma_ghz == 0:
        return np.zeros(len(block_indices))
    out = np.empty(len(block_indices))
    for i, bidx in enumerate(block_indices):
        rng = substream(seed, int(bidx), STAGE_DIFFUSION)
        out[i] = rng.normal(0.0, cfg.spectral_diffusion_sigma_ghz)
    return out


def sample_emission(
    cfg: EmitterConfig,
    train: PulseTrainConfig,
    first_pulse: int,
    uniforms: np.ndarray,
    wander_ghz: np.ndarray,
    bright: np.ndarray,
) -> EmissionBlock:
    """Turn a fixed-layout uniform block into emission arrays.

    ``uniforms`` has shape (n_pulses, EMIT_DRAWS_PER_PULSE); pulse i of the
    block consumes exactly row i, so any sub-range of pulses can be
    regenerated independently.
    """
    n = uniforms.shape[0]
    u = uniforms
    starts = train.pulse_start_ps(first_pulse + np.arange(n)).astype(np.float64)

    sig_exists = bright & (u[:, _U_EMIT] < cfg.p_emit)
    sig_env = starts + u[:, _U_W_S] * train.pulse_width_ps
    sig_exact = sig_env + _sample_exponential(cfg.lifetime_tau_ps, u[:, _U_EXP_S])
    sig_time = np.rint(sig_exact).astype(np.int64)
    sig_det = wander_ghz + _sample_cauchy(cfg.dephasing_linewidth_ghz, u[:, _U_CAU_S])

    comp_exists = sig_exists & (u[:, _U_MULTI] < cfg.p_multi)
    comp_env = starts + u[:, _U_W_C] * train.pulse_width_ps
    comp_time = np.rint(comp_env + _sample_exponential(cfg.lifetime_tau_ps, u[:, _U_EXP_C])).astype(np.int64)
    comp_det = (
        wander_ghz
        + _sample_cauchy(cfg.dephasing_linewidth_ghz, u[:, _U_CAU_C])
        + cfg.multi_detuning_offset_ghz
    )

    return EmissionBlock(
        first_pulse=first_pulse,
        sig_exists=sig_exists,
        sig_time_ps=sig_time,
        sig_time_exact_ps=sig_exact,
        sig_env_ps=sig_env,
        sig_detuning_ghz=sig_det,
        comp_exists=comp_exists,
        comp_time_ps=comp_time,
        comp_env_ps=comp_env,
        comp_detuning_ghz=comp_det,
    )


def emit_pulse(
    cfg: EmitterConfig,
    train: PulseTrainConfig,
    pulse_index: int,
    rng: np.random.Generator,
    blink: BlinkState | None = None,
) -> list[PhotonRecord]:
    """Photons emitted by one excitation pulse.

    The slow spectral wander is drawn per call here; the block engine keys it
    per diffusion block instead, which only matters for correlations between
    nearby pulses.
    """
    if pulse_index >= train.n_pulses:
        raise ConfigError("pulse_index beyond configured pulse train")
    bright = True
    if blink is not None and cfg.blinking_enabled:
        blink.advance(cfg, float(train.pulse_start_ps(pulse_index)), rng)
        bright = blink.bright
    uniforms = rng.random((1, EMIT_DRAWS_PER_PULSE))
    wander = rng.normal(0.0, cfg.spectral_diffusion_sigma_ghz) if cfg.spectral_diffusion_sigma_ghz else 0.0
    block = sample_emission(cfg, train, pulse_index, uniforms, np.array([wander]), np.array([bright]))

    photons = []
    if block.sig_exists[0]:
        photons.append(
            PhotonRecord(
                emit_time_ps=int(block.sig_time_ps[0]),
                wavelength=cfg.wavelength,
                detuning_ghz=float(block.sig_detuning_ghz[0]),
                polarization=Polarization.H,
                origin=Origin.SIGNAL,
                pulse_index=pulse_index,
                env_start_ps=float(block.sig_env_ps[0]),
                wavepacket_tau_ps=cfg.lifetime_tau_ps,
            )
        )
    if block.comp_exists[0]:
        photons.append(
            PhotonRecord(
                emit_time_ps=int(block.comp_time_ps[0]),
                wavelength=cfg.wavelength,
                detuning_ghz=float(block.comp_detuning_ghz[0]),
                polarization=Polarization.H,
                origin=Origin.MULTIPHOTON,
                pulse_index=pulse_index,
                env_start_ps=float(block.comp_env_ps[0]),
                wavepacket_tau_ps=cfg.lifetime_tau_ps,
            )
        )
    return photons


def temporal_jitter_overlap(pulse_width_ps: float, tau_ps: float) -> float:
    """E[exp(-|U1 - U2|/tau)] for independent U(0, w) excitation jitters.

    This is the envelope-overlap penalty between photons whose wavepacket
    start times each carry the excitation-pulse timing jitter.
    """
    w, tau = pulse_width_ps, tau_ps
    if w == 0:
        return 1.0
    return (2.0 * tau / w**2) * (w - tau * (1.0 - math.exp(-w / tau)))


def pairwise_overlap(cfg: EmitterConfig, train: PulseTrainConfig) -> float:
    """Expected two-photon wavepacket overlap for consecutive-pulse photons.

    Overlap of two exponential wavepackets with detuning difference D is
    1/(1 + (2 pi D tau)^2); this averages that kernel over independent
    per-photon detunings (Lorentzian dephasing plus Gaussian wander), which
    has a closed form through the Faddeeva function, and multiplies the
    excitation-jitter envelope factor.
    """
    tau = cfg.lifetime_tau_ps
    b = natural_linewidth_ghz(tau)  # overlap kernel scale
    c = cfg.dephasing_linewidth_ghz  # Cauchy scale of the detuning difference
    s = cfg.spectral_diffusion_sigma_ghz * math.sqrt(2.0)  # Gaussian sigma of the difference

    if s < 1e-9 * (b + c):  # Gaussian part negligible: pure Cauchy limit
        spectral = b / (b + c)
    else:
        # pi*b * VoigtPDF(0; lorentz scale b+c, gauss sigma s)
        z = 1j * (b + c) / (s * math.sqrt(2.0))
        spectral = math.pi * b * float(np.real(wofz(z))) / (s * math.sqrt(2.0 * math.pi))
    return temporal_jitter_overlap(train.pulse_width_ps, tau) * spectral


def expected_pair_overlap(cfg: EmitterConfig, train: PulseTrainConfig) -> float:
    """Expected value of the interferometer's per-pair overlap factor.

    This is the engine-matched ground truth: the interferometer scores each
    pair with a Gaussian detuning kernel exp(-(2 pi D tau)^2 / 2), and
    consecutive pulses share the slow wander, so only the Lorentzian dephasing
    contributes to D.  E[exp(-D^2/(2 b^2))] over Cauchy(c) has the closed form
    exp(q^2/2) erfc(q/sqrt(2)) with q = c/b.
    """
    tau = cfg.lifetime_tau_ps
    q = cfg.dephasing_linewidth_ghz / natural_linewidth_ghz(tau)
    spectral = math.exp(q * q / 2.0) * float(erfc(q / math.sqrt(2.0)))
    return temporal_jitter_overlap(train.pulse_width_ps, tau) * spectral
