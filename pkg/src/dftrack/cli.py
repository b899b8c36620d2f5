"""Command-line front end: simulate, calibrate, track, evaluate, heatmap, verify."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace

from .evaluation import (
    EvalReport,
    _filter_streams,
    build_fingerprint_from_calibration,
    CalibrationData,
    count_error,
    distance_error,
    export_heatmap,
    track_frames,
)
from .fingerprint import load_fingerprint, save_fingerprint
from .preprocess import select_streams, smooth_frames
from .simulate import (
    TestbedConfig,
    default_config,
    generate_baseline,
    generate_calibration,
    generate_test,
    load_config,
    random_walk,
    save_config,
    static_trajectories,
)
from .traceio import (
    load_estimates,
    load_ground_truth,
    load_trace,
    save_estimates,
    save_ground_truth,
    save_trace,
)
from .types import EnvironmentMap, ModelParams
from .verify import run_oracle_suite, run_regularity_suite

_PARAM_TYPES = {f.name: f.type for f in fields(ModelParams)}


def _parse_param_overrides(pairs: list[str]) -> dict:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"--params expects key=value, got {pair!r}")
        if key not in _PARAM_TYPES:
            raise SystemExit(
                f"unknown parameter {key!r}; valid: {', '.join(sorted(_PARAM_TYPES))}"
            )
        if key in ("q", "w", "hmm_order", "anova_window"):
            overrides[key] = int(value)
        elif key == "spatial_contrast":
            overrides[key] = value
        else:
            overrides[key] = float(value)
    return overrides


def _load_calibration_dir(sessions_dir: str) -> tuple[CalibrationData, TestbedConfig]:
    config = load_config(os.path.join(sessions_dir, "config.cfg"))
    grid = config.grid
    sessions = []
    for loc in grid:
        path = os.path.join(sessions_dir, "sessions", f"session_{loc.index:03d}.trace")
        sessions.append((loc, tuple(load_trace(path))))
    baseline_path = os.path.join(sessions_dir, "baseline.trace")
    baseline = tuple(load_trace(baseline_path)) if os.path.exists(baseline_path) else None
    walk_path = os.path.join(sessions_dir, "walk.truth")
    walk = tuple(load_ground_truth(walk_path)) if os.path.exists(walk_path) else None
    return CalibrationData(tuple(sessions), grid, baseline, walk), config


def _cmd_init_config(args) -> int:
    save_config(default_config(), args.path)
    print(f"wrote default testbed config to {args.path}")
    return 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    os.makedirs(os.path.join(args.out, "sessions"), exist_ok=True)

    save_config(config, os.path.join(args.out, "config.cfg"))
    for loc, frames in generate_calibration(config):
        save_trace(
            frames, os.path.join(args.out, "sessions", f"session_{loc.index:03d}.trace")
        )
    save_trace(generate_baseline(config), os.path.join(args.out, "baseline.trace"))

    walk = random_walk(config, duration=args.walk_duration)
    walk_frames, walk_truth = generate_test(config, [walk])
    save_trace(walk_frames, os.path.join(args.out, "walk.trace"))
    save_ground_truth(walk_truth, os.path.join(args.out, "walk.truth"))

    trajectories = static_trajectories(
        config, args.entities, start=args.lead_in, dwell=args.duration
    )
    frames, truth = generate_test(config, trajectories, start=0.0)
    save_trace(frames, os.path.join(args.out, "test.trace"))
    save_ground_truth(truth, os.path.join(args.out, "test.truth"))
    print(
        f"simulated testbed (n={config.n}, k={config.n_streams}) into {args.out}: "
        f"{len(frames)} test frames, {args.entities} entities"
    )
    return 0


def _cmd_calibrate(args) -> int:
    calibration, config = _load_calibration_dir(args.sessions)
    params = ModelParams(**_parse_param_overrides(args.params or []))
    fp = build_fingerprint_from_calibration(calibration, params)
    save_fingerprint(fp, args.out)
    print(
        f"fingerprint: {fp.n} locations, {len(fp.streams)} streams, "
        f"{len(fp.neighbors)} neighbor pairs -> {args.out}"
    )
    return 0


def _cmd_track(args) -> int:
    fp = load_fingerprint(args.fp)
    params = fp.params
    frames = load_trace(args.trace)
    if not frames:
        save_estimates([], args.out)
        print("empty trace; wrote empty estimates")
        return 0
    smoothed = smooth_frames(frames, params)
    kept = select_streams(fp, frames[: params.anova_window], params.anova_significance)
    dropped = sorted(set(fp.streams) - kept)
    if dropped:
        print(f"dropped streams: {', '.join(dropped)}")
    estimates, maps, _ = track_frames(
        fp, params, _filter_streams(smoothed, kept), collect=True
    )
    save_estimates(estimates, args.out)
    if args.maps:
        _save_maps(maps, args.maps)
    detections = sum(1 for e in estimates if e.m_hat > 0)
    print(f"tracked {len(estimates)} frames -> {args.out} ({detections} detections)")
    return 0


def _save_maps(maps, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in maps:
            bits = "".join("1" if a else "0" for a in m.active)
            fh.write(f"t={m.timestamp!r} map={bits}\n")


def _load_maps(path) -> list[EnvironmentMap]:
    maps = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 2 or not tokens[0].startswith("t=") or not tokens[1].startswith("map="):
                raise SystemExit(f"{path}:{line_no}: expected 't=<float> map=<bits>'")
            bits = tokens[1][4:]
            maps.append(
                EnvironmentMap(float(tokens[0][2:]), tuple(c == "1" for c in bits))
            )
    return maps


def _cmd_evaluate(args) -> int:
    estimates = load_estimates(args.est)
    truth = load_ground_truth(args.truth)
    config = load_config(args.grid)
    grid = config.grid
    if len(estimates) != len(truth):
        raise SystemExit(
            f"estimate/truth length mismatch: {len(estimates)} vs {len(truth)}"
        )
    locations_errors = []
    zones_errors = []
    for est, tru in zip(estimates, truth):
        locations_errors.append(
            tuple(distance_error(est, tru, grid, "locations", config.center))
        )
        zones_errors.append(
            tuple(distance_error(est, tru, grid, "zones", config.center))
        )
    counts = count_error(estimates, truth)
    report = EvalReport(
        locations_errors=tuple(locations_errors),
        zones_errors=tuple(zones_errors),
        count_errors=tuple(counts),
    )
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    med = (
        report.median_zones_error if args.mode == "zones" else report.median_locations_error
    )
    mean = (
        report.mean_zones_error if args.mode == "zones" else report.mean_locations_error
    )
    print(f"{args.mode}-based error: median {med:.3f} m, mean {mean:.3f} m")
    print(
        f"count within one: {report.fraction_count_within_one:.3f} "
        f"({len(counts)} frames) -> {args.report}"
    )
    return 0


def _cmd_heatmap(args) -> int:
    maps = _load_maps(args.est_window)
    config = load_config(args.config)
    window = maps[-args.window :] if args.window else maps
    export_heatmap(window, config.grid, args.out)
    print(f"heatmap of {len(window)} maps -> {args.out}")
    return 0


def _cmd_verify(args) -> int:
    if not args.oracle:
        raise SystemExit("nothing to verify; pass --oracle")
    ok = True
    report = run_oracle_suite(trials=args.trials, seed=args.seed)
    status = "PASS" if report.passed else "FAIL"
    print(
        f"[{status}] min-cut vs exhaustive search: {report.trials} instances, "
        f"{report.failures} failures, max energy gap {report.max_energy_gap:.3g} "
        f"({report.elapsed_seconds:.1f}s)"
    )
    ok &= report.passed
    regular, checked = run_regularity_suite(trials=args.regularity_trials, seed=args.seed)
    status = "PASS" if regular else "FAIL"
    print(f"[{status}] regularity held on {checked} generated instances")
    ok &= regular
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dftrack",
        description="Device-free multi-entity localization from WiFi RSS streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write the default testbed config")
    p.add_argument("path")
    p.set_defaults(fn=_cmd_init_config)

    p = sub.add_parser("simulate", help="generate calibration, walk and test traces")
    p.add_argument("--config", required=True, help="testbed config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--entities", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=300.0, help="entity dwell seconds")
    p.add_argument("--lead-in", type=float, default=60.0, help="empty lead-in seconds")
    p.add_argument("--walk-duration", type=float, default=240.0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("calibrate", help="build a fingerprint from session traces")
    p.add_argument("--sessions", required=True, help="directory written by simulate")
    p.add_argument("--out", required=True, help="fingerprint output path (.spotfp)")
    p.add_argument("--params", nargs="*", metavar="k=v", help="ModelParams overrides")
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("track", help="run the online tracker over a trace")
    p.add_argument("--fp", required=True, help="fingerprint file")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="estimates output file")
    p.add_argument("--maps", help="optional per-frame activation map dump")
    p.set_defaults(fn=_cmd_track)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--grid", required=True, help="testbed config file (grid geometry)")
    p.add_argument("--mode", choices=("zones", "locations"), default="locations")
    p.add_argument("--report", required=True, help="JSON report output path")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("heatmap", help="export window activation counts as CSV")
    p.add_argument("--est-window", required=True, help="maps file from track --maps")
    p.add_argument("--config", required=True, help="testbed config file")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=13)
    p.set_defaults(fn=_cmd_heatmap)

    p = sub.add_parser("verify", help="run the solver self-check suites")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--regularity-trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_verify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
