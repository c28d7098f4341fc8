"""Command-line interface.

Subcommands: render, reference, calibrate, landscape, bench, summarize.
Exit codes: 0 success, 2 config/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    BenchmarkConfig,
    emit_landscape,
    load_results,
    run_benchmark,
    summarize,
    timing_summary,
    write_summary,
)
from .config import AXIS_NAMES, NOISE_LABELS, ConfigError, load_config, write_thresholds
from .env import (
    Pose,
    VarianceBundle,
    build_reference,
    calibrate_threshold,
    make_env_config,
    observe,
)
from .imgio import write_floats, write_pgm16
from .render import RenderParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_noise(value: str) -> tuple[float, ...]:
    if value == "all":
        return NOISE_LABELS
    out = []
    for part in value.split(","):
        label = float(part)
        if label not in NOISE_LABELS:
            raise ConfigError(f"noise must be one of {NOISE_LABELS} or 'all', got {part}")
        out.append(label)
    return tuple(out)


def _parse_dims(value: str) -> list[tuple[int, int]] | None:
    if value == "all":
        return None
    pairs = []
    for token in value.split():
        names = token.split(",")
        if len(names) != 2:
            raise ConfigError(f"bad dim pair '{token}', expected like 'x,y'")
        try:
            pairs.append((AXIS_NAMES.index(names[0]), AXIS_NAMES.index(names[1])))
        except ValueError as exc:
            raise ConfigError(f"unknown axis in '{token}' (axes: {AXIS_NAMES})") from exc
    return pairs


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="scene/env config (default: built-in)")
    sub.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    sub.add_argument("--spp", type=int, default=None, help="samples per pixel override")
    sub.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lensalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one pose to a 16-bit PGM")
    _add_common(p)
    p.add_argument("--pose", default="0.5,0.5,0.5,0.5,0.5,0.5", help="normalized 6-vector, comma separated")
    p.add_argument("--raw", action="store_true", help="also write the float32 sidecar")

    p = sub.add_parser("reference", help="build and store the reference image")
    _add_common(p)
    p.add_argument("--samples", type=int, default=None, help="renders to average (default from config)")

    p = sub.add_parser("calibrate", help="calibrate the optimality threshold per noise level")
    _add_common(p)
    p.add_argument("--noise", default="all", help="noise levels: 'all' or comma list of 0,0.25,0.5")
    p.add_argument("--trials", type=int, default=8, help="variance bundles per level (>= 5)")

    p = sub.add_parser("landscape", help="two-dimensional objective slices")
    _add_common(p)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--dims", default="all", help="'all' or pairs like 'x,y z,rx'")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("bench", help="run the benchmark matrix")
    _add_common(p)
    p.add_argument("--noise", default="all")
    p.add_argument("--algos", default=None, help="comma list (default from config)")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--stat", choices=("median", "mean"), default="median")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("summarize", help="aggregate an existing results CSV")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--stat", choices=("median", "mean"), default="median")
    p.add_argument("--no-figures", action="store_true")

    return parser


def cmd_render(args) -> int:
    app = load_config(args.config)
    coords = np.array([float(v) for v in args.pose.split(",")])
    if coords.shape != (6,):
        raise ConfigError("--pose must have 6 comma-separated values")
    env_cfg = make_env_config(app, samples_per_pixel=args.spp, reference_seed=args.seed)
    img = observe(
        env_cfg, Pose(coords), VarianceBundle.zeros(len(app.system.elements)), args.seed
    )
    args.out.mkdir(parents=True, exist_ok=True)
    pgm = args.out / "render.pgm"
    write_pgm16(pgm, img.data)
    if args.raw:
        write_floats(args.out / "render.f32", img.data)
    print(f"wrote {pgm} (mean {img.data.mean():.5f}, max {img.data.max():.5f})")
    return EXIT_OK


def cmd_reference(args) -> int:
    app = load_config(args.config)
    spp = args.spp or app.env.samples_per_pixel
    n = args.samples or app.env.reference_samples
    ref = build_reference(app.system, n, args.seed, spp)
    args.out.mkdir(parents=True, exist_ok=True)
    write_pgm16(args.out / "reference.pgm", ref.data)
    write_floats(args.out / "reference.f32", ref.data)
    print(f"wrote {args.out / 'reference.pgm'} and .f32 ({n} renders @ {spp} spp)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    app = load_config(args.config)
    levels = _parse_noise(args.noise)
    thresholds = dict(app.env.thresholds)
    for label in levels:
        env_cfg = make_env_config(app, noise_label=label, samples_per_pixel=args.spp)
        theta = calibrate_threshold(env_cfg, env_cfg.noise, args.trials, args.seed)
        thresholds[label] = theta
        print(f"noise {label:g}: threshold = {theta:.9g}")
    if args.config is not None:
        write_thresholds(args.config, thresholds)
        print(f"updated [thresholds] in {args.config}")
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / "thresholds.ini"
        path.write_text("[thresholds]\n" + "".join(f"{k} = {v!r}\n" for k, v in sorted(thresholds.items())))
        print(f"built-in config is read-only; wrote {path}")
    return EXIT_OK


def cmd_landscape(args) -> int:
    app = load_config(args.config)
    dims = _parse_dims(args.dims)
    t0 = time.perf_counter()
    files = emit_landscape(
        app,
        dims,
        args.grid,
        args.out,
        seed=args.seed,
        samples_per_pixel=args.spp or 16,
        figures=not args.no_figures,
    )
    print(f"wrote {len(files)} slices to {args.out} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_bench(args) -> int:
    app = load_config(args.config)
    algos = tuple((args.algos or " ".join(app.bench.algorithms)).replace(",", " ").split())
    bcfg = BenchmarkConfig(
        app=app,
        algorithms=algos,
        noise_levels=_parse_noise(args.noise),
        episodes=args.episodes or app.bench.episodes,
        steps=args.steps or app.bench.steps,
        master_seed=args.seed,
        out_dir=args.out,
        thresholds=dict(app.env.thresholds),
        samples_per_pixel=args.spp,
        box_fraction=app.bench.box_fraction,
        box_mode=app.bench.box_mode,
    )
    progress = None
    if not args.quiet:
        progress = lambda algo, noise, ep: print(f"  done {algo} noise={noise:g} episode={ep}", flush=True)
    result = run_benchmark(bcfg, progress=progress)
    rows = load_results(result.csv_path)
    aggregates = summarize(rows, stat=args.stat)
    write_summary(aggregates, Path(args.out) / "summary.csv", stat=args.stat)
    if not args.no_figures:
        from .figures import benchmark_figure

        benchmark_figure(aggregates, Path(args.out) / "benchmark.png", stat=args.stat)
    for (algo, noise), ms in sorted(timing_summary(result).items()):
        print(f"timing {algo} noise={noise:g}: {ms:.1f} ms/step")
    print(f"wrote {result.csv_path} and summary.csv")
    return EXIT_OK


def cmd_summarize(args) -> int:
    rows = load_results(args.results)
    aggregates = summarize(rows, stat=args.stat)
    args.out.mkdir(parents=True, exist_ok=True)
    write_summary(aggregates, args.out / "summary.csv", stat=args.stat)
    if not args.no_figures:
        from .figures import benchmark_figure

        benchmark_figure(aggregates, args.out / "benchmark.png", stat=args.stat)
    print(f"wrote {args.out / 'summary.csv'}")
    return EXIT_OK


COMMANDS = {
    "render": cmd_render,
    "reference": cmd_reference,
    "calibrate": cmd_calibrate,
    "landscape": cmd_landscape,
    "bench": cmd_bench,
    "summarize": cmd_summarize,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
