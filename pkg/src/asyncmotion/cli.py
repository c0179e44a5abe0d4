"""Command-line entry point.

Subcommands:
  sim         run synthetic noise-sweep experiments, emit CSV (and figures)
  solve       estimate velocity from track/IMU CSV files over sliding windows
  minimality  classify a (tracks, observations, order) configuration
  bench       time the minimal-case solve and the linear accumulation scaling

Exit codes: 0 success, 2 usage/config error, 3 experiment failure,
4 no solvable window / no solution.
"""

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import io as amio
from .errors import (
    AsyncMotionError,
    ExperimentError,
    GenerationError,
    InsufficientDataError,
    InvalidInputError,
    NoSolutionError,
    UnderconstrainedError,
)
from .geometry import (
    AngularRate,
    Asynchronous,
    CameraIntrinsics,
    GlobalShutter,
    RollingShutter,
)
from .robust import RansacConfig, ransac
from .sim import (
    CSV_HEADER,
    NoiseConfig,
    PRESETS,
    SimConfig,
    generate_scene,
    run_trials,
    stats_csv_row,
)
from .solver import classify_minimality, solve, solve_with_known_accel

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EXPERIMENT = 3
EXIT_NO_SOLUTION = 4


def _float_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _int_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncmotion",
        description="Linear velocity and structure from asynchronous point tracks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="run synthetic noise-sweep experiments")
    p_sim.add_argument(
        "--preset",
        action="append",
        choices=sorted(PRESETS),
        help="named (tracks, observations) preset; repeatable (default: moderate)",
    )
    p_sim.add_argument("--tracks", type=int, help="override track count")
    p_sim.add_argument("--obs", type=int, help="override observations per track")
    p_sim.add_argument("--pixel-noise", type=_float_list, default=[0.0], metavar="PX[,PX...]")
    p_sim.add_argument("--jitter-ms", type=_float_list, default=[0.0], metavar="MS[,MS...]")
    p_sim.add_argument("--omega-noise", type=_float_list, default=[0.0], metavar="DPS[,DPS...]")
    p_sim.add_argument("--jitter-uniform", action="store_true", help="uniform instead of Gaussian jitter")
    p_sim.add_argument("--window", type=float, default=0.2, help="time window in seconds")
    p_sim.add_argument("--trials", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--ransac", action="store_true", help="solve each trial through RANSAC")
    p_sim.add_argument("--out", type=Path, help="CSV output file (default: stdout)")
    p_sim.add_argument("--plot", type=Path, help="render a median-error figure to this file")
    p_sim.add_argument(
        "--dump-tracks",
        type=Path,
        metavar="DIR",
        help="write one noiseless scene as tracks/imu/intrinsics fixture files",
    )
    p_sim.set_defaults(func=cmd_sim)

    p_solve = sub.add_parser("solve", help="solve velocity from track/IMU files")
    p_solve.add_argument("tracks", type=Path, help="tracks CSV (track_id,t,u,v)")
    p_solve.add_argument("imu", type=Path, help="IMU CSV (t,wx,wy,wz[,ax,ay,az])")
    p_solve.add_argument("--intrinsics", type=Path, help="key=value intrinsics file")
    p_solve.add_argument("--fx", type=float)
    p_solve.add_argument("--fy", type=float)
    p_solve.add_argument("--cx", type=float)
    p_solve.add_argument("--cy", type=float)
    p_solve.add_argument("--width", type=int)
    p_solve.add_argument("--height", type=int)
    p_solve.add_argument("--window", type=float, default=0.2)
    p_solve.add_argument("--stride", type=float, default=0.1)
    p_solve.add_argument(
        "--timestamp-model",
        choices=["global", "rolling-shutter", "async"],
        default="async",
    )
    p_solve.add_argument("--trs", type=float, help="rolling-shutter full-frame scan time [s]")
    p_solve.add_argument("--rs-sign", type=int, default=1, choices=[1, -1])
    p_solve.add_argument("--gs-offset", type=float, default=0.0, help="global-shutter exposure midpoint offset [s]")
    p_solve.add_argument("--accel", action="store_true", help="metric solve using IMU acceleration")
    p_solve.add_argument("--ransac", action="store_true")
    p_solve.add_argument("--ransac-iters", type=int, default=200)
    p_solve.add_argument("--ransac-tracks", type=int, default=4)
    p_solve.add_argument("--ransac-obs", type=int, default=5)
    p_solve.add_argument("--inlier-threshold", type=float, default=5.0)
    p_solve.add_argument("--early-stop", type=float, default=0.9)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--min-track-length-px", type=float, default=10.0)
    p_solve.add_argument("--format", choices=["csv", "json"], default="csv")
    p_solve.add_argument("--out", type=Path, help="output file (default: stdout)")
    p_solve.set_defaults(func=cmd_solve)

    p_min = sub.add_parser("minimality", help="classify a solver configuration")
    p_min.add_argument("-M", "--num-tracks", type=int, required=True)
    p_min.add_argument("-n", "--obs-per-track", type=_int_list, required=True, metavar="N[,N...]")
    p_min.add_argument("-S", "--order", type=int, default=1)
    p_min.set_defaults(func=cmd_minimality)

    p_bench = sub.add_parser("bench", help="timing report")
    p_bench.add_argument("--repeats", type=int, default=10000)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def cmd_sim(args) -> int:
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    presets = args.preset or ["moderate"]
    rows, csv_lines = [], [CSV_HEADER]
    for preset in presets:
        m, n = PRESETS[preset]
        if args.tracks is not None:
            m = args.tracks
        if args.obs is not None:
            n = args.obs
        for px in args.pixel_noise:
            for jit_ms in args.jitter_ms:
                for wn in args.omega_noise:
                    config = SimConfig(
                        num_tracks=m,
                        obs_per_track=n,
                        window=args.window,
                        trials=args.trials,
                        seed=args.seed,
                        use_ransac=args.ransac,
                        noise=NoiseConfig(
                            pixel_sigma=px,
                            timestamp_jitter=jit_ms / 1000.0,
                            jitter_uniform=args.jitter_uniform,
                            omega_noise_dps=wn,
                        ),
                    )
                    stats = run_trials(config)
                    rows.append((preset, config, stats))
                    csv_lines.append(stats_csv_row(config, stats, preset))
    text = "\n".join(csv_lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.dump_tracks:
        _dump_fixture(args, rows[0][1])
    if args.plot:
        from .report import render_sweep_figure

        render_sweep_figure(rows, str(args.plot))
    return EXIT_OK


def _dump_fixture(args, config: SimConfig) -> None:
    """Write one noiseless scene as CSV fixtures usable by `solve`."""
    out = args.dump_tracks
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_scene(config, np.random.default_rng([config.seed, 0]))
    amio.write_tracks_csv(scene.tracks, out / "tracks.csv")
    t_imu = np.linspace(0.0, config.window, 5)
    w = np.tile(scene.omega, (len(t_imu), 1))
    a = None if scene.accel is None else np.tile(scene.accel, (len(t_imu), 1))
    amio.write_imu_csv(out / "imu.csv", t_imu, w, a)
    amio.write_intrinsics_file(out / "intrinsics.txt", config.intrinsics())
    (out / "groundtruth.json").write_text(
        json.dumps(
            {
                "v": list(scene.v),
                "omega": list(scene.omega),
                "accel": None if scene.accel is None else list(scene.accel),
                "window": config.window,
                "t_ref": scene.t_ref,
            },
            indent=2,
        )
    )


def _intrinsics_from_args(args) -> CameraIntrinsics:
    if args.intrinsics:
        return amio.read_intrinsics_file(args.intrinsics)
    fields = [args.fx, args.fy, args.cx, args.cy, args.width, args.height]
    if any(f is None for f in fields):
        raise InvalidInputError(
            "provide --intrinsics FILE or all of --fx --fy --cx --cy --width --height"
        )
    return CameraIntrinsics(
        fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy,
        width=args.width, height=args.height,
    )


def _timestamp_model(args):
    if args.timestamp_model == "global":
        return GlobalShutter(offset=args.gs_offset)
    if args.timestamp_model == "rolling-shutter":
        if args.trs is None:
            raise InvalidInputError("--timestamp-model rolling-shutter requires --trs")
        return RollingShutter(t_rs=args.trs, sign=args.rs_sign)
    return Asynchronous()


def cmd_solve(args) -> int:
    intr = _intrinsics_from_args(args)
    try:
        tracks = amio.read_tracks_csv(args.tracks)
        imu = amio.read_imu_csv(args.imu)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    model = _timestamp_model(args)
    tracks = amio.apply_timestamp_model(tracks, model, intr.height)
    all_t = np.concatenate([t.times for t in tracks if len(t)])
    if all_t.size == 0:
        return EXIT_NO_SOLUTION
    reports = []
    t0 = float(all_t.min())
    t_end = float(all_t.max())
    while t0 <= t_end:
        t1 = t0 + args.window
        window = amio.window_tracks(tracks, t0, t1 + 1e-12)
        window = [
            t for t in window
            if amio.track_length_px(t) >= args.min_track_length_px
        ]
        if window:
            omega = AngularRate(imu.window_mean_omega(t0, t1))
            try:
                if args.accel:
                    accel = imu.window_mean_accel(t0, t1)
                    if accel is None:
                        raise InvalidInputError("--accel requires ax,ay,az IMU columns")
                    est = solve_with_known_accel(window, omega, accel, intr, model)
                    inlier_ratio = None
                elif args.ransac:
                    result = ransac(
                        window, omega, intr,
                        RansacConfig(
                            max_iterations=args.ransac_iters,
                            sample_tracks=args.ransac_tracks,
                            sample_obs_per_track=args.ransac_obs,
                            inlier_threshold_deg=args.inlier_threshold,
                            early_stop_inlier_ratio=args.early_stop,
                            rng_seed=args.seed,
                        ),
                        model,
                    )
                    est, inlier_ratio = result.estimate, result.inlier_ratio
                else:
                    est = solve(window, omega, intr, model)
                    inlier_ratio = None
                reports.append(
                    {
                        "t_start": t0,
                        "t_end": t1,
                        "t_ref": est.t_ref,
                        "v": [float(x) for x in est.velocity],
                        "metric": est.metric,
                        "inlier_ratio": inlier_ratio,
                        "degenerate": est.degenerate,
                        "degenerate_reason": est.degenerate_reason,
                        "sign_flipped": est.sign_flipped,
                        "n_tracks": len(window),
                    }
                )
            except AsyncMotionError:
                pass
        if t1 > t_end:
            break
        t0 += args.stride
    if not reports:
        return EXIT_NO_SOLUTION
    if args.format == "json":
        text = json.dumps(reports, indent=2) + "\n"
    else:
        lines = [
            "t_start,t_end,t_ref,vx,vy,vz,metric,inlier_ratio,degenerate,"
            "sign_flipped,n_tracks"
        ]
        for r in reports:
            ir = "" if r["inlier_ratio"] is None else f"{r['inlier_ratio']:.17g}"
            lines.append(
                f"{r['t_start']:.17g},{r['t_end']:.17g},{r['t_ref']:.17g},"
                f"{r['v'][0]:.17g},{r['v'][1]:.17g},{r['v'][2]:.17g},"
                f"{int(r['metric'])},{ir},{int(r['degenerate'])},"
                f"{int(r['sign_flipped'])},{r['n_tracks']}"
            )
        text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_minimality(args) -> int:
    result = classify_minimality(args.num_tracks, args.obs_per_track, args.order)
    print(result.classification.value)
    return EXIT_OK


def _bench_case(num_tracks: int, obs: int, repeats: int, seed: int = 0):
    from .sim import SimConfig, generate_scene

    config = SimConfig(num_tracks=num_tracks, obs_per_track=obs, trials=1, seed=seed)
    scene = generate_scene(config, np.random.default_rng(seed))
    omega = AngularRate(scene.omega)
    intr = config.intrinsics()
    solve(scene.tracks, omega, intr)  # warm up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        solve(scene.tracks, omega, intr)
        times.append(time.perf_counter() - start)
    return statistics.median(times) * 1e6


def cmd_bench(args) -> int:
    med_sample = _bench_case(4, 5, args.repeats)
    med_minimal = _bench_case(2, 2, args.repeats)
    print(f"sample case (M=4, n=5): median {med_sample:.1f} us over {args.repeats} runs")
    print(f"minimal case (M=2, n=2): median {med_minimal:.1f} us over {args.repeats} runs")
    from .linsys import accumulate_schur, track_blocks
    from .geometry import compensate, reference_time

    scaling = {}
    for m in (100, 1000):
        config = SimConfig(num_tracks=m, obs_per_track=5, trials=1, seed=1)
        scene = generate_scene(config, np.random.default_rng(1))
        t_ref = reference_time(scene.tracks)
        blocks = [
            track_blocks(compensate(t, AngularRate(scene.omega), t_ref, config.intrinsics()), 1, t.id)
            for t in scene.tracks
        ]
        reps = max(1, 2000 // m)
        accumulate_schur(blocks)  # warm the per-track inverse caches
        start = time.perf_counter()
        for _ in range(reps):
            accumulate_schur(blocks)
        scaling[m] = (time.perf_counter() - start) / reps
    ratio = scaling[1000] / scaling[100]
    print(f"accumulate scaling M=100 -> M=1000: x{ratio:.2f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExperimentError, GenerationError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except (NoSolutionError, UnderconstrainedError, InsufficientDataError) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION


if __name__ == "__main__":
    sys.exit(main())
