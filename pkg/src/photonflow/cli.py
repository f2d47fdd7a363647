"""Command-line entry point: configuration-driven runs, comparison, verification.

Exit codes: 0 success, 1 runtime/analysis failure, 2 invalid configuration,
3 analysis completed but produced a flagged (out-of-range) result.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    AnalysisError,
    VisibilityCalib,
    estimate_g2,
    estimate_visibility,
    fit_lifetime,
    integrate_peaks,
    lifetime_model_counts,
)
from .config import RunConfig, load_config
from .conversion import (
    FitError,
    MeasurementError,
    fit_saturation,
    internal_efficiency_bounds,
    saturation_efficiency,
)
from .core import STAGE_SCAN, ConfigError, substream
from .correlate import cross_correlate
from .enumeration import hbt_expected
from .optics import PolarizationConfig
from .pipeline import (
    Pipeline,
    RunResult,
    fold_decay,
    irf_pipeline,
    run_direct,
    run_hbt,
    run_hom,
)
from .svgplot import Series, write_svg_plot

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_FLAGGED = 3


def expected_source_g2(pipe: Pipeline, r: float = 0.5, t: float = 0.5) -> float:
    """Central-peak ratio this pipeline's source should show in a splitter setup.

    Used as the calibration input of the visibility correction; mirrors an
    independently measured purity value.
    """
    surv_signal = surv_multi = 1.0
    if pipe.conversion is not None:
        from .conversion import survival_probability

        offset = pipe.filter_center_offset_ghz()
        surv_signal = float(survival_probability(pipe.conversion, 0.0, offset))
        surv_multi = float(
            survival_probability(pipe.conversion, pipe.emitter.multi_detuning_offset_ghz, offset)
        )
    if pipe.emitter.p_multi == 0:
        return 0.0
    return hbt_expected(
        pipe.emitter.p_emit, pipe.emitter.p_multi, r, t, surv_signal, surv_multi
    ).g2


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Artifacts:
    """Tracks every file written below the output directory."""

    def __init__(self, outdir: Path, fmt: str):
        self.outdir = outdir
        self.fmt = fmt
        self.files: list[str] = []
        outdir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.outdir / name

    def want_csv(self) -> bool:
        return self.fmt in ("csv", "both")

    def want_svg(self) -> bool:
        return self.fmt in ("svg", "both")

    def write_manifest(self, cfg: RunConfig) -> None:
        manifest = {
            "experiment": cfg.experiment,
            "seed": cfg.seed.master_seed,
            "config_sha256": cfg.config_sha256(),
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "artifacts": {name: _sha256(self.outdir / name) for name in sorted(self.files)},
        }
        (self.outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _base_report(cfg: RunConfig, result: RunResult | None) -> dict:
    report = {
        "experiment": cfg.experiment,
        "seed": cfg.seed.master_seed,
        "n_pulses": cfg.n_pulses,
    }
    if result is not None:
        st = result.stats
        report.update(
            {
                "emitted_signal": st.emitted_signal,
                "emitted_multi": st.emitted_multi,
                "conversion_lost": st.conversion_lost,
                "noise_injected": st.noise_injected,
                "routed_lost": st.routed_lost,
            }
        )
        for ch, det in enumerate(st.channels):
            report[f"tags_ch{ch}"] = det.registered + det.dark - det.vetoed
    return report


def _write_streams(art: _Artifacts, result: RunResult, prefix: str = "tags") -> None:
    for stream in result.streams:
        io.write_tagstream(art.path(f"{prefix}_ch{stream.channel_id}.pftg"), stream)


def _run_lifetime(cfg: RunConfig, art: _Artifacts) -> tuple[dict, bool]:
    pipe = cfg.pipeline()
    result = run_direct(pipe, cfg.det1, workers=cfg.workers)
    irf_result = run_direct(irf_pipeline(pipe), cfg.det1, workers=cfg.workers)
    _write_streams(art, result)
    _write_streams(art, irf_result, prefix="irf_tags")

    bw = cfg.analysis.lifetime_bin_width_ps
    decay = fold_decay(result.streams[0], cfg.train.period_ps, bw)
    irf = fold_decay(irf_result.streams[0], cfg.train.period_ps, bw)
    if art.want_csv():
        io.write_histogram_csv(art.path("decay_hist.csv"), decay)
        io.write_histogram_csv(art.path("irf_hist.csv"), irf)
    fit = fit_lifetime(decay, irf)
    if art.want_svg():
        centers = decay.bin_centers()
        write_svg_plot(
            art.path("lifetime_fit.svg"),
            [
                Series(centers, decay.counts.tolist(), "decay", "points"),
                Series(centers, irf.counts.tolist(), "IRF", "line"),
                Series(centers, lifetime_model_counts(fit, irf).tolist(), "fit", "dashed"),
            ],
            title="Decay histogram with reconvolution fit",
            xlabel="time in period (ps)",
            ylabel="counts",
        )
    report = _base_report(cfg, result)
    report.update(
        {
            "tau_ps": fit.tau_ps,
            "tau_ps_err": fit.tau_err_ps,
            "amplitude": fit.amplitude,
            "baseline": fit.baseline,
            "t0_ps": fit.t0_ps,
            "residual_rms": fit.residual_rms,
            "irf_sigma_used_ps": fit.irf_sigma_used_ps,
        }
    )
    return report, False


def _run_hbt(cfg: RunConfig, art: _Artifacts) -> tuple[dict, bool]:
    result = run_hbt(cfg.pipeline(), cfg.bs, cfg.det1, cfg.det2, workers=cfg.workers)
    _write_streams(art, result)
    hist = cross_correlate(
        result.streams[0], result.streams[1], cfg.analysis.max_delay_ps, cfg.analysis.bin_width_ps
    )
    if art.want_csv():
        io.write_histogram_csv(art.path("correlation.csv"), hist)
    peaks = integrate_peaks(hist, cfg.train.period_ps, cfg.analysis.peak_half_window_ps)
    g2 = estimate_g2(peaks, cfg.analysis.g2_reference_delay_ps, cfg.train.period_ps)
    if art.want_svg():
        write_svg_plot(
            art.path("correlation.svg"),
            [Series(hist.bin_centers().tolist(), hist.counts.tolist(), "coincidences", "line")],
            title="Coincidence histogram (splitter setup)",
            xlabel="delay (ps)",
            ylabel="counts",
        )
    report = _base_report(cfg, result)
    report.update(
        {
            "g2": g2.value,
            "g2_err": g2.sigma,
            "central_area": g2.central_area,
            "reference_area": g2.reference_area,
            "reference_delay_ps": g2.reference_delay_ps,
        }
    )
    return report, False


def _run_hom(cfg: RunConfig, art: _Artifacts) -> tuple[dict, bool]:
    pipe = cfg.pipeline()
    polarizations = {
        "hom_co": (PolarizationConfig.CO,),
        "hom_cross": (PolarizationConfig.CROSS,),
        "hom_paired": (PolarizationConfig.CO, PolarizationConfig.CROSS),
    }[cfg.experiment]

    histograms: dict[str, object] = {}
    result = None
    report: dict = {}
    for pol in polarizations:
        tag = pol.value
        result = run_hom(pipe, cfg.interferometer(pol), cfg.det1, cfg.det2, workers=cfg.workers)
        _write_streams(art, result, prefix=f"tags_{tag}")
        hist = cross_correlate(
            result.streams[0], result.streams[1], cfg.analysis.max_delay_ps, cfg.analysis.bin_width_ps
        )
        histograms[tag] = hist
        if art.want_csv():
            io.write_histogram_csv(art.path(f"correlation_{tag}.csv"), hist)
        peaks = integrate_peaks(hist, cfg.train.period_ps, cfg.analysis.peak_half_window_ps)
        central, _ = peaks.area_at(0.0, cfg.train.period_ps)
        norm, _ = peaks.area_at(cfg.analysis.norm_delay_ps, cfg.train.period_ps)
        report[f"central_area_{tag}"] = central
        report[f"norm_area_{tag}"] = norm

    flagged = False
    if cfg.experiment == "hom_paired":
        calib = VisibilityCalib(
            r2=cfg.bs2.r,
            t2=cfg.bs2.t,
            epsilon=1.0 - cfg.classical_visibility,
            g2=expected_source_g2(pipe),
            r1=cfg.bs1.r,
            t1=cfg.bs1.t,
        )
        vis = estimate_visibility(
            histograms["co"],
            histograms["cross"],
            cfg.analysis.norm_delay_ps,
            calib,
            cfg.train.period_ps,
            cfg.analysis.peak_half_window_ps,
        )
        flagged = vis.flagged
        report.update(
            {
                "a_par": vis.a_par,
                "a_perp": vis.a_perp,
                "v_raw": vis.v_raw,
                "v_raw_err": vis.v_raw_err,
                "v_corr": vis.v_corr,
                "v_corr_err": vis.v_corr_err,
                "calib_g2": calib.g2,
                "calib_epsilon": calib.epsilon,
                "flagged": int(vis.flagged),
            }
        )
        if art.want_svg():
            co, cross = histograms["co"], histograms["cross"]
            centers = co.bin_centers()
            window = np.abs(centers) <= 3.2 * cfg.train.period_ps
            write_svg_plot(
                art.path("hom_central.svg"),
                [
                    Series(centers[window].tolist(), cross.counts[window].tolist(), "cross-polarized", "line"),
                    Series(centers[window].tolist(), co.counts[window].tolist(), "co-polarized", "line"),
                ],
                title="Central interference peaks",
                xlabel="delay (ps)",
                ylabel="counts",
            )
    elif art.want_svg():
        tag = polarizations[0].value
        hist = histograms[tag]
        write_svg_plot(
            art.path(f"correlation_{tag}.svg"),
            [Series(hist.bin_centers().tolist(), hist.counts.tolist(), tag, "line")],
            title="Coincidence histogram (interferometer)",
            xlabel="delay (ps)",
            ylabel="counts",
        )

    full = _base_report(cfg, result)
    full.update(report)
    return full, flagged


def _run_rate(cfg: RunConfig, art: _Artifacts) -> tuple[dict, bool]:
    result = run_direct(cfg.pipeline(), cfg.det1, workers=cfg.workers)
    _write_streams(art, result)
    st = result.stats
    n_in, n_out = st.emitted, st.converted
    if n_in == 0:
        raise AnalysisError("no photons were emitted")
    eta = n_out / n_in
    duration_s = cfg.train.duration_ps * 1e-12
    report = _base_report(cfg, result)
    report.update(
        {
            "n_in": n_in,
            "n_out": n_out,
            "eta_ext": eta,
            "eta_ext_err": float(np.sqrt(eta * (1 - eta) / n_in)),
            "rate_in_cps": n_in / duration_s,
            "rate_out_cps": n_out / duration_s,
        }
    )
    return report, False


def _run_saturation(cfg: RunConfig, art: _Artifacts) -> tuple[dict, bool]:
    scan = cfg.scan
    conv = cfg.conversion
    rng = substream(cfg.seed, 0, STAGE_SCAN)
    powers = np.linspace(scan["p_min_mw"], scan["p_max_mw"], scan["n_points"])
    eta_true = np.array([saturation_efficiency(conv, p) for p in powers])
    eta_meas = eta_true * (1.0 + scan["noise_fraction"] * rng.standard_normal(powers.size))
    fit = fit_saturation(list(zip(powers.tolist(), eta_meas.tolist())))
    eta_fit = np.array(
        [fit.eta_max * np.sin(0.5 * np.pi * np.sqrt(p / fit.p_sat_mw)) ** 2 for p in powers]
    )

    if art.want_csv():
        with open(art.path("saturation.csv"), "w") as fh:
            fh.write("pump_mw,eta_measured,eta_fit\n")
            for p, em, ef in zip(powers, eta_meas, eta_fit):
                fh.write(f"{p:.6g},{em:.8g},{ef:.8g}\n")
    if art.want_svg():
        ideal = conv.loss_budget.transmission()
        band = scan["ideal_band_fraction"]
        grid = np.linspace(powers[0], powers[-1], 200)
        fit_curve = fit.eta_max * np.sin(0.5 * np.pi * np.sqrt(grid / fit.p_sat_mw)) ** 2
        write_svg_plot(
            art.path("saturation.svg"),
            [
                Series(powers.tolist(), eta_meas.tolist(), "measured", "points"),
                Series(grid.tolist(), fit_curve.tolist(), "fit", "dashed"),
                Series([powers[0], powers[-1]], [ideal, ideal], "ideal upper", "line"),
                Series([powers[0], powers[-1]], [ideal * (1 - band)] * 2, "ideal lower", "line"),
            ],
            title="Conversion efficiency vs pump power",
            xlabel="pump power (mW)",
            ylabel="external efficiency",
        )

    report = {
        "experiment": cfg.experiment,
        "seed": cfg.seed.master_seed,
        "eta_max": fit.eta_max,
        "eta_max_err": fit.eta_max_err,
        "p_sat_mw": fit.p_sat_mw,
        "p_sat_mw_err": fit.p_sat_err_mw,
        "residual_rms": fit.residual_rms,
        "ideal_transmission": conv.loss_budget.transmission(),
    }
    measurement = cfg.bounds_measurement()
    if measurement is not None:
        bounds = internal_efficiency_bounds(measurement)
        report["eta_int_lower"] = bounds.eta_int_lower
        report["eta_int_upper"] = bounds.eta_int_upper
    return report, False


_RUNNERS = {
    "lifetime": _run_lifetime,
    "hbt": _run_hbt,
    "hom_co": _run_hom,
    "hom_cross": _run_hom,
    "hom_paired": _run_hom,
    "rate": _run_rate,
    "saturation_scan": _run_saturation,
}


def _resolve_output_dir(cfg: RunConfig, flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("PHOTONFLOW_OUTPUT")
    if env:
        return Path(env)
    return Path(cfg.output_dir)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, seed_override=args.seed, workers_override=args.workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        for key, value in cfg.resolved_items().items():
            print(f"{key} = {value}")
        return EXIT_OK

    outdir = _resolve_output_dir(cfg, args.output)
    art = _Artifacts(outdir, args.format)
    try:
        report, flagged = _RUNNERS[cfg.experiment](cfg, art)
    except (ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnalysisError, FitError, MeasurementError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    io.write_report(outdir / "report.txt", report)
    art.files.append("report.txt")
    art.write_manifest(cfg)
    for key, value in report.items():
        print(f"{key} = {value}")
    if flagged:
        print("result flagged: corrected value outside [0, 1.05]", file=sys.stderr)
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        ra = io.read_report(Path(args.run_a) / "report.txt")
        rb = io.read_report(Path(args.run_b) / "report.txt")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ra.get("experiment") != rb.get("experiment"):
        print(
            f"error: experiment types differ: {ra.get('experiment')} vs {rb.get('experiment')}",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    all_consistent = True
    compared = 0
    print(f"{'quantity':<22}{'a':>14}{'b':>14}{'delta':>12}{'sigma':>12}  verdict")
    for key in ra:
        err_key = f"{key}_err"
        if err_key not in ra or key not in rb or err_key not in rb:
            continue
        va, vb = float(ra[key]), float(rb[key])
        sigma_joint = float(np.hypot(ra[err_key], rb[err_key]))
        delta = vb - va
        consistent = abs(delta) <= 2.0 * sigma_joint
        all_consistent &= consistent
        compared += 1
        verdict = "consistent" if consistent else "INCONSISTENT"
        print(f"{key:<22}{va:>14.6g}{vb:>14.6g}{delta:>12.3g}{sigma_joint:>12.3g}  {verdict}")
    if compared == 0:
        print("no paired quantities with uncertainties found", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if all_consistent else EXIT_RUNTIME


def cmd_verify(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bad = 0
    for name, digest in manifest["artifacts"].items():
        target = run_dir / name
        if not target.is_file():
            print(f"missing: {name}")
            bad += 1
        elif _sha256(target) != digest:
            print(f"hash mismatch: {name}")
            bad += 1
    print(f"{len(manifest['artifacts']) - bad}/{len(manifest['artifacts'])} artifacts verified")
    return EXIT_OK if bad == 0 else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonflow",
        description="Pulsed single-photon source simulator with telecom-band conversion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="path to the run configuration")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--workers", type=int, default=None, help="override the worker count")
    p_run.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    p_run.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    p_run.add_argument("--output", default=None, help="override the output directory")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two run reports")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="verify artifact hashes against the manifest")
    p_ver.add_argument("run_dir")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
