"""Command-line front end.

Subcommands: ``skr`` (single-point key rate), ``sweep`` (turbulence
sweep), ``max-xi`` (tolerable-noise curve), ``traces`` (oscilloscope trace
analysis), ``ao-sim`` (loop characterisation) and ``validate`` (acceptance
report). Every report is written as CSV with a provenance line, and
rendered to a PNG alongside.

Exit codes: 0 success, 2 validation failure, 3 input/format error,
4 numerical domain error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import figures, refdata, validation
from .aoloop import make_loop, run_characterization
from .config import ConfigError, ScenarioConfig, fixture, load_config
from .harness import (
    evaluate_skr_point,
    channel_visibility_map,
    max_xi_curve,
    run_sweep,
    sweep_rows_to_csv,
    write_csv,
)
from .skr import DetectionScheme, DomainError
from .traces import (
    TraceFormatError,
    TraceSet,
    excess_noise_estimate,
    excess_noise_estimate_model_consistent,
    inferred_visibility,
    normalize_to_snu,
    read_trace,
    trace_mean_magnitude,
)
from .wavefront import GRID, VALID_MASK, preset_setting

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


def _detections(name: str) -> list[DetectionScheme]:
    if name == "both":
        return [DetectionScheme.HOMODYNE, DetectionScheme.HETERODYNE]
    return [DetectionScheme(name)]


def _resolve_config(args) -> ScenarioConfig:
    if args.config:
        config = load_config(args.config)
        if args.channel and args.channel != config.channel:
            raise ConfigError(
                f"--channel {args.channel} contradicts config channel "
                f"{config.channel}")
    else:
        channel = args.channel or "cm60"
        config = fixture(channel if channel != "custom" else "cm60")
        if channel == "custom":
            config = config.with_(channel="custom")
    if args.seed is not None:
        config = config.with_(seeds=(args.seed,))
    if args.out is not None:
        config = config.with_(output_dir=args.out)
    return config


def _outdir(config: ScenarioConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_skr(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    lines = []
    points = {}
    for det in _detections(args.detection):
        point = evaluate_skr_point(config, args.visibility, det)
        points[det] = point
        print(f"[{det.value}] visibility={args.visibility}")
        print(f"  Z        = {point.z:.6f}")
        print(f"  V_B      = {point.v_b_model:.6f}  (model, incl. v_el)")
        print(f"  lambda_1 = {point.lambda1:.6f}")
        print(f"  lambda_2 = {point.lambda2:.6f}")
        print(f"  lambda_3 = {point.lambda3:.6f}")
        print(f"  I_AB     = {point.mutual_information:.6f} bits")
        print(f"  S_BE     = {point.holevo_bound:.6f} bits")
        print(f"  SKR      = {point.skr:.6e} bits/use "
              f"({'positive' if point.positive else 'non-positive'})")
        lines.append(
            f"{det.value},{args.visibility!r},{point.z!r},"
            f"{point.v_b_model!r},{point.lambda1!r},{point.lambda2!r},"
            f"{point.lambda3!r},{point.mutual_information!r},"
            f"{point.holevo_bound!r},{point.skr!r},{int(point.positive)}")
    if len(points) == 2:
        hom = points[DetectionScheme.HOMODYNE].skr
        het = points[DetectionScheme.HETERODYNE].skr
        if hom != 0.0:
            print(f"het/hom SKR ratio = {het / hom:.3f}")
    write_csv(out / "skr.csv",
              "detection,visibility,z,v_b_model,lambda1,lambda2,lambda3,"
              "i_ab,s_be,skr,positive", lines, config)
    print(f"wrote {out / 'skr.csv'}")
    return EXIT_OK


def cmd_sweep(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    fit = channel_visibility_map(config)
    print(f"calibrated visibility map: v0={fit.map.ambient_visibility} "
          f"kappa={fit.map.coupling_coefficient:.1f} (fit RMS {fit.rms:.4f})")
    rows = run_sweep(config, vmap=fit,
                     optimize_modulation=args.optimize_va)
    sweep_rows_to_csv(rows, out / "sweep.csv", config)
    # per-figure plot data
    vis_lines = [f"{r.setting},{r.orientation},{'on' if r.ao else 'off'},"
                 f"{r.slope_variance!r},{r.visibility!r}" for r in rows]
    write_csv(out / "fig_visibility.csv",
              "setting,orientation,ao,slope_variance,visibility",
              vis_lines, config)
    for det, attr in (("homodyne", "skr_hom"), ("heterodyne", "skr_het")):
        lines = [f"{r.slope_variance!r},{'on' if r.ao else 'off'},"
                 f"{getattr(r, attr)!r},{int(getattr(r, attr) <= 0)}"
                 for r in rows]
        write_csv(out / f"fig_skr_{det}.csv",
                  "slope_variance,ao,skr,negative", lines, config)
        figures.plot_skr_sweep(rows, out / f"skr_{det}.png", detection=det)
    figures.plot_visibility_sweep(rows, out / "visibility.png")
    print(f"wrote {out / 'sweep.csv'} and figures ({len(rows)} rows)")
    return EXIT_OK


def cmd_max_xi(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    if not (0.0 < args.t_min < args.t_max <= 1.0):
        raise DomainError(f"T range ({args.t_min}, {args.t_max}) not in (0, 1]")
    t_values = np.linspace(args.t_min, args.t_max, args.t_steps)
    curves = {}
    for det in _detections(args.detection):
        curve = max_xi_curve(config, det, t_values)
        curves[det.value] = curve
        lines = [f"{t!r},{xi!r}" for t, xi in curve]
        write_csv(out / f"max_xi_{det.value}.csv", "transmittance,xi_max",
                  lines, config)
    figures.plot_max_xi(curves, out / "max_xi.png")
    for det, curve in curves.items():
        for marker in (0.4433, 0.0644):
            if args.t_min <= marker <= args.t_max:
                nearest = min(curve, key=lambda p: abs(p[0] - marker))
                print(f"{det}: xi_max ~= {nearest[1]:.5f} at T={nearest[0]:.4f}"
                      f" (marker {marker})")
    print(f"wrote max-xi curves to {out}")
    return EXIT_OK


def cmd_traces(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    cs, sn, dn = (read_trace(p) for p in (args.cs, args.sn, args.dn))
    ts = TraceSet(cs=cs, sn=sn, dn=dn)
    wv = normalize_to_snu(ts, window_count=args.windows)
    det = DetectionScheme(args.detection)
    lines = []
    for i, v_b in enumerate(map(float, wv.v_b_per_window)):
        xi = excess_noise_estimate(v_b, wv.v_el, config.transmittance, det)
        xi_mc = excess_noise_estimate_model_consistent(
            v_b, wv.v_el, config.transmittance,
            config.detector_efficiency, config.ambient_visibility,
            config.modulation_variance_homodyne)
        lines.append(f"{i},{v_b!r},{float(wv.v_el)!r},{xi!r},{xi_mc!r}")
    write_csv(out / "traces_report.csv",
              "window_index,v_b_snu,v_el_snu,xi_literal,xi_model_consistent",
              lines, config)
    mean_v_b = float(np.mean(wv.v_b_per_window))
    print(f"windows={wv.window_count} window_size={wv.window_size}")
    print(f"mean V_B = {mean_v_b:.5f} SNU, v_el = {wv.v_el:.5f} SNU")
    if args.baseline_mean is not None:
        vis = inferred_visibility(trace_mean_magnitude(ts.cs),
                                  args.baseline_mean,
                                  args.baseline_visibility)
        print(f"inferred visibility = {vis.value:.4f} (raw {vis.raw:.4f})")
    figures.plot_trace_report(wv.v_b_per_window, wv.v_el, out / "traces.png")
    print(f"wrote {out / 'traces_report.csv'}")
    return EXIT_OK


def cmd_ao_sim(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    channel = config.channel if config.channel != "custom" else "cm60"
    loop = make_loop()
    lines = []
    records = []
    for label in config.settings:
        setting = preset_setting(channel, label, config.orientation)
        for seed in config.seeds:
            run = run_characterization(setting, loop_enabled=not args.open_only,
                                       frames=config.frames, seed=seed,
                                       loop=loop)
            pairs = [("open", run.open_stats.slope_variance,
                      float(np.sqrt(run.open_wavefront_variance)))]
            if run.closed_stats is not None:
                pairs.append(("closed", run.closed_stats.slope_variance,
                              float(np.sqrt(run.closed_wavefront_variance))))
            for mode, sv, rms in pairs:
                lines.append(f"{label},{config.orientation},{mode},{sv!r},"
                             f"{rms!r},{config.frames},{seed}")
                records.append((label, mode, sv))
            if args.dump_frames:
                _dump_frames(setting, config, seed, args.dump_frames,
                             out / f"frames_{label}_{seed}.csv")
    write_csv(out / "characterization.csv",
              "setting,orientation,loop,slope_variance,residual_rms,frames,seed",
              lines, config)
    figures.plot_characterization(records, out / "characterization.png")
    print(f"wrote {out / 'characterization.csv'} ({len(lines)} rows)")
    return EXIT_OK


def _dump_frames(setting, config: ScenarioConfig, seed: int, count: int,
                 path: Path) -> None:
    from .harness import provenance_line
    from .wavefront import TurbulenceGenerator
    turb_seed = np.random.SeedSequence(seed).spawn(3)[0]
    gen = TurbulenceGenerator(setting, seed=turb_seed)
    sx, sy, inten = gen.frames(count)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(provenance_line(config) + "\n")
        fh.write("frame,subap_row,subap_col,slope_x,slope_y,intensity,valid\n")
        for f in range(count):
            for r in range(GRID):
                for c in range(GRID):
                    fh.write(f"{f},{r},{c},{float(sx[f, r, c])!r},"
                             f"{float(sy[f, r, c])!r},"
                             f"{float(inten[f, r, c])!r},"
                             f"{int(VALID_MASK[r, c])}\n")


def cmd_validate(config: ScenarioConfig, args) -> int:
    out = _outdir(config)
    cm60_rows = m30_rows = None
    if args.dataset:
        base = Path(args.dataset)
        if not base.exists():
            print(f"error: dataset {base} not found", file=sys.stderr)
            return EXIT_INPUT
        cm60_rows = refdata.load_reference(base / "cm60_reference.csv")
        m30_rows = refdata.load_reference(base / "m30_reference.csv")
    results = validation.all_checks(out, quick=args.quick,
                                    cm60_rows=cm60_rows, m30_rows=m30_rows)
    lines = []
    for res in results:
        print(res.line())
        detail = res.detail.replace('"', "'")
        lines.append(f"{res.criterion},{'pass' if res.passed else 'fail'},"
                     f"\"{detail}\"")
    write_csv(out / "validation.csv", "criterion,status,detail", lines, config)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; "
          f"report in {out / 'validation.csv'}")
    return EXIT_VALIDATION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aoqkd",
        description="Free-space CVQKD key-rate lab with an AO channel simulator")
    p.add_argument("--config", help="scenario config file (key = value INI)")
    p.add_argument("--seed", type=int, help="override the scenario seed list")
    p.add_argument("--out", help="output directory")
    p.add_argument("--channel", choices=("cm60", "m30", "custom"),
                   help="bundled channel fixture (default cm60)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("skr", help="single-point key-rate evaluation")
    s.add_argument("--visibility", type=float, required=True,
                   help="amplitude visibility sqrt(eta_vis)")
    s.add_argument("--detection", choices=("homodyne", "heterodyne", "both"),
                   default="both")
    s.set_defaults(func=cmd_skr)

    s = sub.add_parser("sweep", help="setting x AO x seed turbulence sweep")
    s.add_argument("--optimize-va", action="store_true",
                   help="re-optimise the modulation variance at every "
                        "operating point instead of the fixture values")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("max-xi", help="tolerable excess noise vs transmittance")
    s.add_argument("--detection", choices=("homodyne", "heterodyne", "both"),
                   default="both")
    s.add_argument("--t-min", type=float, default=0.02)
    s.add_argument("--t-max", type=float, default=1.0)
    s.add_argument("--t-steps", type=int, default=50)
    s.set_defaults(func=cmd_max_xi)

    s = sub.add_parser("traces", help="three-trace analysis report")
    s.add_argument("cs", help="coherent-state trace file")
    s.add_argument("sn", help="shot-noise trace file")
    s.add_argument("dn", help="dark-noise trace file")
    s.add_argument("--windows", type=int, default=20)
    s.add_argument("--detection", choices=("homodyne", "heterodyne"),
                   default="homodyne",
                   help="detection scheme for the literal noise estimate")
    s.add_argument("--baseline-mean", type=float,
                   help="baseline mean of the demodulated trace magnitude")
    s.add_argument("--baseline-visibility", type=float, default=0.6)
    s.set_defaults(func=cmd_traces)

    s = sub.add_parser("ao-sim", help="adaptive-optics characterisation runs")
    s.add_argument("--open-only", action="store_true",
                   help="skip the closed-loop pass")
    s.add_argument("--dump-frames", type=int, metavar="N",
                   help="dump the first N turbulence frames per run")
    s.set_defaults(func=cmd_ao_sim)

    s = sub.add_parser("validate", help="run the acceptance report")
    s.add_argument("--dataset",
                   help="directory with cm60/m30 reference CSVs "
                        "(default: bundled)")
    s.add_argument("--quick", action="store_true",
                   help="dataset-derived checks only")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        return args.func(config, args)
    except (ConfigError, TraceFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
