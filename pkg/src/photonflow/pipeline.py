"""End-to-end experiment runners on a block-parallel Monte Carlo engine.

Pulses are processed in fixed-size blocks.  Every random decision is drawn
from a substream keyed by (master seed, owning chunk, stage) with a fixed
number of draws per pulse, so any pulse's samples can be regenerated in
isolation; consecutive-pulse photon pairs that straddle a block boundary are
completed by re-deriving the neighbour chunk's draws.  Results are therefore
bit-identical for any worker count.

A fixed instrument path delay keeps all timestamps positive for the unsigned
on-disk format; it shifts both channels equally and cancels in every delay
histogram.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    STAGE_BASE_IRF,
    STAGE_BLINK,
    STAGE_CONVERT,
    STAGE_DARK,
    STAGE_DETECT,
    STAGE_EMIT,
    STAGE_JITTER,
    STAGE_JOINT,
    STAGE_NOISE,
    STAGE_ROUTE,
    CoincidenceHistogram,
    ConfigError,
    PulseTrainConfig,
    RunSeed,
    TagStream,
    Wavelength,
    substream,
)
from .conversion import (
    ConversionConfig,
    dfg_wavelength,
    filter_offset_ghz,
    sample_noise_times,
    survival_probability,
)
from .optics import (
    COHERENCE_X_MAX,
    BeamSplitter,
    DetectorConfig,
    DetectStats,
    HomInterferometer,
    PolarizationConfig,
    apply_dead_time,
    sample_dark_counts,
)
from .source import (
    EMIT_DRAWS_PER_PULSE,
    BlinkTable,
    EmitterConfig,
    diffusion_offsets_ghz,
    sample_emission,
)

BLOCK_PULSES = 16384
PATH_DELAY_PS = 1_000_000


@dataclass(frozen=True)
class Pipeline:
    """Source plus optional conversion stage feeding a measurement topology."""

    emitter: EmitterConfig
    train: PulseTrainConfig
    seed: RunSeed
    conversion: ConversionConfig | None = None

    def output_wavelength(self) -> Wavelength:
        if self.conversion is None:
            return self.emitter.wavelength
        return dfg_wavelength(self.emitter.wavelength, self.conversion.pump_wavelength)

    def filter_center_offset_ghz(self) -> float:
        if self.conversion is None:
            return 0.0
        return filter_offset_ghz(self.conversion, self.output_wavelength())


@dataclass
class RunStats:
    pulses: int = 0
    emitted_signal: int = 0
    emitted_multi: int = 0
    conversion_lost: int = 0
    noise_injected: int = 0
    routed_lost: int = 0
    channels: tuple[DetectStats, ...] = field(default_factory=tuple)

    @property
    def emitted(self) -> int:
        return self.emitted_signal + self.emitted_multi

    @property
    def converted(self) -> int:
        return self.emitted - self.conversion_lost

    def merge(self, other: "RunStats") -> None:
        self.pulses += other.pulses
        self.emitted_signal += other.emitted_signal
        self.emitted_multi += other.emitted_multi
        self.conversion_lost += other.conversion_lost
        self.noise_injected += other.noise_injected
        self.routed_lost += other.routed_lost
        for mine, theirs in zip(self.channels, other.channels):
            mine.merge(theirs)


@dataclass
class RunResult:
    streams: tuple[TagStream, ...]
    stats: RunStats

    def __iter__(self):
        return iter(self.streams)


# ---------------------------------------------------------------------------
# chunk-keyed draw reconstruction

@dataclass
class _Rows:
    """Per-pulse samples for rows [0, n) of one chunk's fixed-layout draws."""

    sig_exists: np.ndarray
    sig_ok: np.ndarray  # exists and survived conversion
    sig_time: np.ndarray
    sig_env: np.ndarray
    sig_det: np.ndarray
    comp_exists: np.ndarray
    comp_ok: np.ndarray
    comp_time: np.ndarray
    comp_env: np.ndarray
    route: np.ndarray  # (n, 4) uniforms: signal arm/port, companion arm/port
    det_u: np.ndarray  # (n, 2) efficiency uniforms: signal, companion
    det_z: np.ndarray  # (n, 2) jitter normals


def _emission_rows(
    pipe: Pipeline, chunk_start: int, n_rows: int, blink: BlinkTable | None
) -> _Rows:
    seed, emitter, train = pipe.seed, pipe.emitter, pipe.train
    uniforms = substream(seed, chunk_start, STAGE_EMIT).random((n_rows, EMIT_DRAWS_PER_PULSE))
    pulses = chunk_start + np.arange(n_rows)

    if emitter.spectral_diffusion_sigma_ghz > 0:
        dblocks = pulses // emitter.diffusion_block_pulses
        unique, inverse = np.unique(dblocks, return_inverse=True)
        wander = diffusion_offsets_ghz(emitter, seed, unique)[inverse]
    else:
        wander = np.zeros(n_rows)

    if blink is not None and emitter.blinking_enabled:
        bright = blink.bright_at(train.pulse_start_ps(pulses).astype(np.float64))
    else:
        bright = np.ones(n_rows, dtype=bool)

    block = sample_emission(emitter, train, chunk_start, uniforms, wander, bright)

    u_conv = substream(seed, chunk_start, STAGE_CONVERT).random((n_rows, 2))
    if pipe.conversion is not None:
        offset = pipe.filter_center_offset_ghz()
        sig_ok = block.sig_exists & (
            u_conv[:, 0] < survival_probability(pipe.conversion, block.sig_detuning_ghz, offset)
        )
        comp_ok = block.comp_exists & (
            u_conv[:, 1] < survival_probability(pipe.conversion, block.comp_detuning_ghz, offset)
        )
    else:
        sig_ok = block.sig_exists
        comp_ok = block.comp_exists

    route = substream(seed, chunk_start, STAGE_ROUTE).random((n_rows, 4))
    det_u = substream(seed, chunk_start, STAGE_DETECT).random((n_rows, 2))
    det_z = substream(seed, chunk_start, STAGE_JITTER).standard_normal((n_rows, 2))

    return _Rows(
        sig_exists=block.sig_exists,
        sig_ok=sig_ok,
        sig_time=block.sig_time_ps,
        sig_env=block.sig_env_ps,
        sig_det=block.sig_detuning_ghz,
        comp_exists=block.comp_exists,
        comp_ok=comp_ok,
        comp_time=block.comp_time_ps,
        comp_env=block.comp_env_ps,
        route=route,
        det_u=det_u,
        det_z=det_z,
    )


def _build_blink_table(pipe: Pipeline) -> BlinkTable | None:
    if not pipe.emitter.blinking_enabled:
        return None
    rng = substream(pipe.seed, 0, STAGE_BLINK)
    return BlinkTable.build(pipe.emitter, float(pipe.train.duration_ps), rng)


# ---------------------------------------------------------------------------
# per-channel tag accumulation

class _ChannelSink:
    """Collects (arrival, efficiency uniform, jitter normal) per channel."""

    def __init__(self, n_channels: int):
        self.arrivals = [[] for _ in range(n_channels)]
        self.u_eff = [[] for _ in range(n_channels)]
        self.z = [[] for _ in range(n_channels)]
        self.dark = [[] for _ in range(n_channels)]

    def add(self, channel: int, arrivals, u_eff, z) -> None:
        if len(arrivals):
            self.arrivals[channel].append(np.asarray(arrivals, dtype=np.int64))
            self.u_eff[channel].append(np.asarray(u_eff))
            self.z[channel].append(np.asarray(z))

    def add_ports(self, ports: np.ndarray, arrivals, u_eff, z) -> int:
        """Route by port code (0/1 detector, negative lost); returns lost count."""
        ports = np.asarray(ports)
        for channel in range(len(self.arrivals)):
            mask = ports == channel
            self.add(channel, np.asarray(arrivals)[mask], np.asarray(u_eff)[mask], np.asarray(z)[mask])
        return int(np.count_nonzero(ports < 0))

    def register(self, detectors: tuple[DetectorConfig, ...], stats: RunStats) -> list[np.ndarray]:
        out = []
        for ch, cfg in enumerate(detectors):
            if self.arrivals[ch]:
                arrivals = np.concatenate(self.arrivals[ch])
                u = np.concatenate(self.u_eff[ch])
                z = np.concatenate(self.z[ch])
            else:
                arrivals = np.empty(0, dtype=np.int64)
                u = np.empty(0)
                z = np.empty(0)
            mask = u < cfg.efficiency
            tags = arrivals[mask] + PATH_DELAY_PS
            if cfg.irf_sigma_ps > 0:
                tags = tags + np.rint(z[mask] * cfg.irf_sigma_ps).astype(np.int64)
            st = stats.channels[ch]
            st.n_in += int(arrivals.size)
            st.registered += int(tags.size)
            st.undetected += int(arrivals.size - tags.size)
            if self.dark[ch]:
                dark = np.concatenate(self.dark[ch])
                st.dark += int(dark.size)
                tags = np.concatenate([tags, dark])
            out.append(tags)
        return out


def _block_window_ps(train: PulseTrainConfig, i0: int, i1: int) -> tuple[int, int]:
    return int(train.pulse_start_ps(i0)), int(train.pulse_start_ps(i1))


def _dark_counts(
    pipe: Pipeline, detectors, i0: int, i1: int, sink: _ChannelSink
) -> None:
    if not any(d.dark_rate_cps > 0 for d in detectors):
        return
    rng = substream(pipe.seed, i0, STAGE_DARK)
    t0, t1 = _block_window_ps(pipe.train, i0, i1)
    window = (t0 + PATH_DELAY_PS, t1 + PATH_DELAY_PS)
    for ch, det in enumerate(detectors):
        sink.dark[ch].append(sample_dark_counts(det, window, rng))


def _noise_photons(pipe: Pipeline, i0: int, i1: int) -> tuple[np.ndarray, np.random.Generator]:
    """Noise photon times for this block plus the stream for their later draws."""
    rng = substream(pipe.seed, i0, STAGE_NOISE)
    if pipe.conversion is None or pipe.conversion.noise_rate_cps == 0:
        return np.empty(0, dtype=np.int64), rng
    window = _block_window_ps(pipe.train, i0, i1)
    return sample_noise_times(pipe.conversion, window, rng), rng


# ---------------------------------------------------------------------------
# topologies

def _block_direct(pipe: Pipeline, detectors, i0: int, i1: int, blink) -> tuple[list[np.ndarray], RunStats]:
    n = i1 - i0
    rows = _emission_rows(pipe, i0, n, blink)
    stats = _new_stats(pipe, rows, i0, i1, n_channels=1)
    sink = _ChannelSink(1)
    sink.add(0, rows.sig_time[rows.sig_ok], rows.det_u[rows.sig_ok, 0], rows.det_z[rows.sig_ok, 0])
    sink.add(0, rows.comp_time[rows.comp_ok], rows.det_u[rows.comp_ok, 1], rows.det_z[rows.comp_ok, 1])

    noise_times, noise_rng = _noise_photons(pipe, i0, i1)
    if noise_times.size:
        stats.noise_injected += int(noise_times.size)
        sink.add(0, noise_times, noise_rng.random(noise_times.size), noise_rng.standard_normal(noise_times.size))

    _dark_counts(pipe, detectors, i0, i1, sink)
    tags = sink.register(detectors, stats)
    return tags, stats


def _block_hbt(pipe: Pipeline, detectors, bs: BeamSplitter, i0: int, i1: int, blink):
    n = i1 - i0
    rows = _emission_rows(pipe, i0, n, blink)
    stats = _new_stats(pipe, rows, i0, i1, n_channels=2)
    sink = _ChannelSink(2)

    def ports_for(u):
        return np.where(u < bs.r, 0, np.where(u < bs.r + bs.t, 1, -1))

    for ok, times, u_arm, col in (
        (rows.sig_ok, rows.sig_time, rows.route[:, 0], 0),
        (rows.comp_ok, rows.comp_time, rows.route[:, 2], 1),
    ):
        ports = ports_for(u_arm[ok])
        stats.routed_lost += sink.add_ports(ports, times[ok], rows.det_u[ok, col], rows.det_z[ok, col])

    noise_times, noise_rng = _noise_photons(pipe, i0, i1)
    if noise_times.size:
        stats.noise_injected += int(noise_times.size)
        ports = ports_for(noise_rng.random(noise_times.size))
        stats.routed_lost += sink.add_ports(
            ports, noise_times, noise_rng.random(noise_times.size), noise_rng.standard_normal(noise_times.size)
        )

    _dark_counts(pipe, detectors, i0, i1, sink)
    return sink.register(detectors, stats), stats


def _independent_ports(long_arm: np.ndarray, u_port: np.ndarray, r2: float, t2: float) -> np.ndarray:
    """Port codes for independently routed photons; loss encoded as -1.

    Photons from the long arm transmit to detector 1 and reflect to detector
    2; short-arm photons see the mirrored mapping.
    """
    from_long = np.where(u_port < t2, 0, np.where(u_port < r2 + t2, 1, -1))
    from_short = np.where(u_port < r2, 0, np.where(u_port < r2 + t2, 1, -1))
    return np.where(long_arm, from_long, from_short)


def _pair_overlap_vec(pipe: Pipeline, det_e, det_l, env_e, env_l, arm_delay_ps: float) -> np.ndarray:
    tau = pipe.emitter.lifetime_tau_ps
    x = 2.0 * math.pi * 1e-3 * (det_l - det_e) * tau
    m = np.exp(-0.5 * x * x) * np.exp(-np.abs(env_e + arm_delay_ps - env_l) / tau)
    m[np.abs(x) > COHERENCE_X_MAX] = 0.0
    return m


def _block_hom(pipe: Pipeline, detectors, ifo: HomInterferometer, i0: int, i1: int, blink, n_total: int):
    n = i1 - i0
    rows = _emission_rows(pipe, i0, n, blink)
    stats = _new_stats(pipe, rows, i0, i1, n_channels=2)
    sink = _ChannelSink(2)
    r1, t1 = ifo.bs_in.r, ifo.bs_in.t
    r2, t2 = ifo.bs_out.r, ifo.bs_out.t
    delay = ifo.arm_delay_ps

    # right halo: the first pulse of the next chunk completes the last pair
    has_halo = i1 < n_total
    if has_halo:
        halo = _emission_rows(pipe, i1, 1, blink)
        sig_ok_ext = np.concatenate([rows.sig_ok, halo.sig_ok])
        sig_time_ext = np.concatenate([rows.sig_time, halo.sig_time])
        sig_env_ext = np.concatenate([rows.sig_env, halo.sig_env])
        sig_det_ext = np.concatenate([rows.sig_det, halo.sig_det])
        u_arm_ext = np.concatenate([rows.route[:, 0], halo.route[:, 0]])
        u_port_ext = np.concatenate([rows.route[:, 1], halo.route[:, 1]])
        det_u_ext = np.concatenate([rows.det_u[:, 0], halo.det_u[:, 0]])
        det_z_ext = np.concatenate([rows.det_z[:, 0], halo.det_z[:, 0]])
    else:
        sig_ok_ext, sig_time_ext = rows.sig_ok, rows.sig_time
        sig_env_ext, sig_det_ext = rows.sig_env, rows.sig_det
        u_arm_ext, u_port_ext = rows.route[:, 0], rows.route[:, 1]
        det_u_ext, det_z_ext = rows.det_u[:, 0], rows.det_z[:, 0]

    n_ext = sig_ok_ext.size
    long_arm = u_arm_ext < r1
    short_arm = (u_arm_ext < r1 + t1) & ~long_arm
    arm_lost = sig_ok_ext & ~long_arm & ~short_arm

    # meeting pairs (early pulse e long, next pulse short), owned by this block
    n_pairs = n_ext - 1
    meet = (
        sig_ok_ext[:-1] & long_arm[:-1] & sig_ok_ext[1:] & short_arm[1:]
        if n_pairs > 0
        else np.zeros(0, dtype=bool)
    )
    meet = meet[:n]  # only pairs whose early pulse belongs to this block

    # left halo: if the previous block's last pulse formed a meeting pair with
    # our first pulse, that block already routed and detected our photon
    consumed_left = False
    if i0 > 0 and rows.sig_ok[0] and short_arm[0]:
        prev_start = i0 - BLOCK_PULSES
        prev = _emission_rows(pipe, prev_start, i0 - prev_start, blink)
        consumed_left = bool(prev.sig_ok[-1] and prev.route[-1, 0] < r1)

    consumed = np.zeros(n_ext, dtype=bool)
    pair_idx = np.flatnonzero(meet)
    consumed[pair_idx] = True
    consumed[pair_idx + 1] = True
    if consumed_left:
        consumed[0] = True

    # joint routing of meeting pairs
    if pair_idx.size:
        u_join = substream(pipe.seed, i0, STAGE_JOINT).random((n, 2))
        e, l = pair_idx, pair_idx + 1
        if ifo.polarization_config == PolarizationConfig.CROSS:
            m_eff = np.zeros(e.size)
        else:
            m_eff = ifo.classical_visibility**2 * _pair_overlap_vec(
                pipe, sig_det_ext[e], sig_det_ext[l], sig_env_ext[e], sig_env_ext[l], delay
            )
        s = r2 + t2
        e_surv = u_port_ext[e] < s
        l_surv = u_port_ext[l] < s
        arr_e = sig_time_ext[e] + delay
        arr_l = sig_time_ext[l]

        rr, tt = r2 / s, t2 / s
        p_bunch = (1.0 + m_eff) * rr * tt
        p_split = rr**2 + tt**2 - 2.0 * rr * tt * m_eff
        with np.errstate(divide="ignore", invalid="ignore"):
            w_e_d1 = np.where(
                p_split > 0,
                ((1.0 - m_eff) * tt**2 + 0.5 * m_eff * (tt - rr) ** 2) / p_split,
                0.5,
            )
        u, ua = u_join[pair_idx, 0], u_join[pair_idx, 1]
        port_e = np.full(e.size, -1)
        port_l = np.full(e.size, -1)
        both = e_surv & l_surv
        bunch1 = both & (u < p_bunch)
        bunch2 = both & ~bunch1 & (u < 2 * p_bunch)
        split_mask = both & ~bunch1 & ~bunch2
        e_to_d1 = split_mask & (ua < w_e_d1)
        port_e[bunch1] = 0
        port_l[bunch1] = 0
        port_e[bunch2] = 1
        port_l[bunch2] = 1
        port_e[e_to_d1] = 0
        port_l[e_to_d1] = 1
        port_e[split_mask & ~e_to_d1] = 1
        port_l[split_mask & ~e_to_d1] = 0
        # lone survivor routes independently off its own port uniform
        only_e = e_surv & ~l_surv
        only_l = l_surv & ~e_surv
        port_e[only_e] = np.where(u_port_ext[e[only_e]] < t2, 0, 1)
        port_l[only_l] = np.where(u_port_ext[l[only_l]] < r2, 0, 1)

        stats.routed_lost += sink.add_ports(port_e, arr_e, det_u_ext[e], det_z_ext[e])
        stats.routed_lost += sink.add_ports(port_l, arr_l, det_u_ext[l], det_z_ext[l])

    # independent signal photons owned by this block
    own = np.zeros(n_ext, dtype=bool)
    own[:n] = True
    solo = sig_ok_ext & own & ~consumed & ~arm_lost
    stats.routed_lost += int(np.count_nonzero(sig_ok_ext & own & arm_lost))
    if np.any(solo):
        arr = sig_time_ext[solo] + np.where(long_arm[solo], delay, 0)
        ports = _independent_ports(long_arm[solo], u_port_ext[solo], r2, t2)
        stats.routed_lost += sink.add_ports(ports, arr, det_u_ext[solo], det_z_ext[solo])

    # companions and noise photons route independently (zero overlap factor)
    comp_ok = rows.comp_ok
    if np.any(comp_ok):
        u_arm_c = rows.route[comp_ok, 2]
        long_c = u_arm_c < r1
        lost_c = u_arm_c >= r1 + t1
        arr_c = rows.comp_time[comp_ok] + np.where(long_c, delay, 0)
        ports_c = _independent_ports(long_c, rows.route[comp_ok, 3], r2, t2)
        ports_c[lost_c] = -1
        stats.routed_lost += sink.add_ports(ports_c, arr_c, rows.det_u[comp_ok, 1], rows.det_z[comp_ok, 1])

    noise_times, noise_rng = _noise_photons(pipe, i0, i1)
    if noise_times.size:
        stats.noise_injected += int(noise_times.size)
        u_arm_n = noise_rng.random(noise_times.size)
        u_port_n = noise_rng.random(noise_times.size)
        long_n = u_arm_n < r1
        lost_n = u_arm_n >= r1 + t1
        arr_n = noise_times + np.where(long_n, delay, 0)
        ports_n = _independent_ports(long_n, u_port_n, r2, t2)
        ports_n[lost_n] = -1
        stats.routed_lost += sink.add_ports(
            ports_n, arr_n, noise_rng.random(arr_n.size), noise_rng.standard_normal(arr_n.size)
        )

    _dark_counts(pipe, detectors, i0, i1, sink)
    return sink.register(detectors, stats), stats


def _new_stats(pipe: Pipeline, rows: _Rows, i0: int, i1: int, n_channels: int) -> RunStats:
    n = i1 - i0
    return RunStats(
        pulses=n,
        emitted_signal=int(np.count_nonzero(rows.sig_exists[:n])),
        emitted_multi=int(np.count_nonzero(rows.comp_exists[:n])),
        conversion_lost=int(
            np.count_nonzero(rows.sig_exists[:n] & ~rows.sig_ok[:n])
            + np.count_nonzero(rows.comp_exists[:n] & ~rows.comp_ok[:n])
        ),
        channels=tuple(DetectStats() for _ in range(n_channels)),
    )


# ---------------------------------------------------------------------------
# engine

def _block_ranges(n_pulses: int) -> list[tuple[int, int]]:
    return [(i0, min(i0 + BLOCK_PULSES, n_pulses)) for i0 in range(0, n_pulses, BLOCK_PULSES)]


def _run_blocks(block_fn, pipe: Pipeline, detectors, workers: int) -> RunResult:
    n_pulses = pipe.train.n_pulses
    if n_pulses <= 0:
        raise ConfigError("n_pulses must be positive")
    blink = _build_blink_table(pipe)
    ranges = _block_ranges(n_pulses)

    def job(rng_pair):
        i0, i1 = rng_pair
        return block_fn(pipe, detectors, i0, i1, blink)

    if workers <= 1:
        results = [job(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, ranges))

    total = RunStats(channels=tuple(DetectStats() for _ in detectors))
    per_channel: list[list[np.ndarray]] = [[] for _ in detectors]
    for tags, stats in results:
        total.merge(stats)
        for ch, arr in enumerate(tags):
            per_channel[ch].append(arr)

    streams = []
    for ch, det in enumerate(detectors):
        merged = np.sort(np.concatenate(per_channel[ch])) if per_channel[ch] else np.empty(0, np.int64)
        kept, vetoed = apply_dead_time(merged, det.dead_time_ps)
        total.channels[ch].vetoed += vetoed
        streams.append(TagStream(channel_id=ch, tags=kept))
    return RunResult(streams=tuple(streams), stats=total)


def _with_pulses(pipe: Pipeline, n_pulses: int | None) -> Pipeline:
    if n_pulses is None:
        return pipe
    return replace(pipe, train=replace(pipe.train, n_pulses=n_pulses))


def run_direct(
    pipe: Pipeline, det: DetectorConfig, n_pulses: int | None = None, workers: int = 1
) -> RunResult:
    """Single-detector topology: photon counting and lifetime measurements."""
    pipe = _with_pulses(pipe, n_pulses)
    return _run_blocks(_block_direct, pipe, (det,), workers)


def run_hbt(
    pipe: Pipeline,
    bs: BeamSplitter,
    det1: DetectorConfig,
    det2: DetectorConfig,
    n_pulses: int | None = None,
    workers: int = 1,
) -> RunResult:
    """Splitter with a detector on each output port (purity measurement)."""
    pipe = _with_pulses(pipe, n_pulses)

    def block(p, dets, i0, i1, blink):
        return _block_hbt(p, dets, bs, i0, i1, blink)

    return _run_blocks(block, pipe, (det1, det2), workers)


def run_hom(
    pipe: Pipeline,
    ifo: HomInterferometer,
    det1: DetectorConfig,
    det2: DetectorConfig,
    n_pulses: int | None = None,
    workers: int = 1,
) -> RunResult:
    """Delay-matched interferometer topology (indistinguishability measurement)."""
    pipe = _with_pulses(pipe, n_pulses)
    n_total = pipe.train.n_pulses

    def block(p, dets, i0, i1, blink):
        return _block_hom(p, dets, ifo, i0, i1, blink, n_total)

    return _run_blocks(block, pipe, (det1, det2), workers)


def irf_pipeline(pipe: Pipeline) -> Pipeline:
    """Reference pipeline measuring the instrument response.

    The emitter is replaced by an effectively instantaneous one (the excitation
    pulse itself), conversion is bypassed, and all random stages draw from a
    disjoint substream family so the reference run is independent of the main
    run at the same master seed.
    """
    delta_emitter = replace(
        pipe.emitter,
        lifetime_tau_ps=1e-3,
        p_emit=1.0,
        p_multi=0.0,
        dephasing_linewidth_ghz=0.0,
        spectral_diffusion_sigma_ghz=0.0,
        blink_on_rate_per_us=0.0,
        blink_off_rate_per_us=0.0,
    )
    return Pipeline(
        emitter=delta_emitter,
        train=pipe.train,
        seed=pipe.seed.with_stage_base(STAGE_BASE_IRF),
        conversion=None,
    )


def fold_decay(stream: TagStream, period_ps: float, bin_width_ps: int) -> CoincidenceHistogram:
    """Fold tags modulo the pulse period into a decay histogram."""
    n_bins = int(math.ceil(period_ps / bin_width_ps))
    span = n_bins * bin_width_ps
    t = stream.tags.astype(np.float64)
    rel = t - np.rint(t / period_ps) * period_ps  # [-period/2, period/2)
    idx = np.floor((rel + span / 2.0) / bin_width_ps).astype(np.int64)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return CoincidenceHistogram(
        bin_width_ps=bin_width_ps,
        offset_ps=-span / 2.0 + bin_width_ps / 2.0,
        counts=counts,
    )
