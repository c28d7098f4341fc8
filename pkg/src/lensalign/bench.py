"""Benchmark orchestration: run the algorithm x noise matrix on shared
problem instances, stream results to CSV, and aggregate per-step curves.

Episode seeds depend only on (master seed, episode index), so every
algorithm and every noise level faces the same initial offset and movement
distortion; noise levels differ only in the per-lens variances drawn from
the same stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AppConfig
from .env import AlignmentEnv, derive_seed, make_env_config
from .render import SensorImage
from .search import ALGORITHMS, EpisodeTrajectory, SearchBox, run_episode

CSV_COLUMNS = [
    "algorithm",
    "noise",
    "episode",
    "step",
    "target_x",
    "target_y",
    "target_z",
    "target_rx",
    "target_ry",
    "target_rz",
    "score",
    "best_rmse",
    "step_ms",
    "terminated",
    "failed",
]
TIMING_COLUMNS = ("step_ms",)

_REFERENCE_STREAM = 11
_EPISODE_STREAM = 12
_ALGO_STREAM = 13


@dataclass(frozen=True)
class BenchmarkConfig:
    app: AppConfig
    algorithms: tuple[str, ...]
    noise_levels: tuple[float, ...]
    episodes: int
    steps: int
    master_seed: int
    out_dir: Path
    thresholds: dict = field(default_factory=dict)
    samples_per_pixel: int | None = None
    box_fraction: float = 0.08
    box_mode: str = "volume"

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unregistered algorithms: {unknown} (known: {sorted(ALGORITHMS)})")


@dataclass(frozen=True)
class EpisodeRecord:
    algorithm: str
    noise: float
    episode: int
    best_curve: np.ndarray  # best-so-far RMSE at steps 0..steps (padded)
    score_curve: np.ndarray
    step_ms: np.ndarray
    terminated: bool
    terminal_step: int | None
    bundle_digest: str
    failed: bool = False


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    records: list[EpisodeRecord] = field(default_factory=list)
    csv_path: Path | None = None


def _pad_trajectory(traj: EpisodeTrajectory, steps: int) -> list[dict]:
    """Exactly steps+1 rows; rows after early termination repeat the final
    observation so per-step aggregates stay well defined."""
    rows = []
    last = traj.rows[-1]
    for s in range(steps + 1):
        if s < len(traj.rows):
            r = traj.rows[s]
            ms = traj.step_ms[s - 1] if 1 <= s <= len(traj.step_ms) else 0.0
        else:
            r = last
            ms = 0.0
        terminated = traj.terminated and traj.terminal_step is not None and s >= traj.terminal_step
        rows.append(
            {
                "step": s,
                "target": r.proposal,
                "score": r.score,
                "best": r.best,
                "ms": ms,
                "terminated": terminated,
            }
        )
    return rows


def _format_row(algorithm: str, noise: float, episode: int, row: dict, failed: bool) -> str:
    cells = [
        algorithm,
        f"{noise:.9g}",
        str(episode),
        str(row["step"]),
        *(f"{v:.9g}" for v in row["target"]),
        f"{row['score']:.9g}",
        f"{row['best']:.9g}",
        f"{row['ms']:.9g}",
        "1" if row["terminated"] else "0",
        "1" if failed else "0",
    ]
    return ",".join(cells) + "\n"


def _failed_rows(steps: int) -> list[dict]:
    nan = float("nan")
    return [
        {
            "step": s,
            "target": np.full(6, nan),
            "score": nan,
            "best": nan,
            "ms": 0.0,
            "terminated": False,
        }
        for s in range(steps + 1)
    ]


def run_benchmark(
    bcfg: BenchmarkConfig, reference: SensorImage | None = None, progress=None
) -> BenchmarkResult:
    """Execute the full matrix, appending one row-atomic block per episode
    to <out_dir>/results.csv as it completes."""
    app = bcfg.app
    spp = bcfg.samples_per_pixel or app.env.samples_per_pixel
    if bcfg.steps > app.env.max_steps:
        raise ValueError("step budget exceeds the env step limit")
    out_dir = Path(bcfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"

    from .env import build_reference  # local import to keep module load light

    if reference is None:
        reference = build_reference(
            app.system, app.env.reference_samples, derive_seed(bcfg.master_seed, _REFERENCE_STREAM), spp
        )

    n_active = int(np.sum(app.env.active_mask))
    box = SearchBox.centered(n_active, bcfg.box_fraction, bcfg.box_mode)
    result = BenchmarkResult(config=bcfg, csv_path=csv_path)

    with open(csv_path, "w", newline="") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for noise in bcfg.noise_levels:
            env_cfg = make_env_config(
                app,
                noise_label=noise,
                threshold=bcfg.thresholds.get(noise),
                reference=reference,
                samples_per_pixel=spp,
            )
            for algo_idx, algo_name in enumerate(bcfg.algorithms):
                for episode in range(bcfg.episodes):
                    ep_seed = derive_seed(bcfg.master_seed, _EPISODE_STREAM, episode)
                    algo_seed = derive_seed(bcfg.master_seed, _ALGO_STREAM, algo_idx, episode)
                    failed = False
                    try:
                        env = AlignmentEnv(env_cfg)
                        algo = ALGORITHMS[algo_name](box, algo_seed)
                        traj = run_episode(algo, env, bcfg.steps, ep_seed)
                        rows = _pad_trajectory(traj, bcfg.steps)
                        record = EpisodeRecord(
                            algorithm=algo_name,
                            noise=noise,
                            episode=episode,
                            best_curve=np.array([r["best"] for r in rows]),
                            score_curve=np.array([r["score"] for r in rows]),
                            step_ms=np.array(traj.step_ms),
                            terminated=traj.terminated,
                            terminal_step=traj.terminal_step,
                            bundle_digest=traj.bundle_digest,
                        )
                    except Exception:
                        failed = True
                        rows = _failed_rows(bcfg.steps)
                        record = EpisodeRecord(
                            algorithm=algo_name,
                            noise=noise,
                            episode=episode,
                            best_curve=np.full(bcfg.steps + 1, np.nan),
                            score_curve=np.full(bcfg.steps + 1, np.nan),
                            step_ms=np.zeros(0),
                            terminated=False,
                            terminal_step=None,
                            bundle_digest="",
                            failed=True,
                        )
                    result.records.append(record)
                    block = "".join(
                        _format_row(algo_name, noise, episode, row, failed) for row in rows
                    )
                    f.write(block)
                    f.flush()
                    if progress is not None:
                        progress(algo_name, noise, episode)
    return result


def emit_landscape(
    app: AppConfig,
    dims: list[tuple[int, int]] | None,
    grid_n: int,
    out_dir,
    seed: int = 0,
    samples_per_pixel: int = 16,
    figures: bool = True,
) -> list[Path]:
    """Two-dimensional objective slices for every requested (or every
    active) dim pair: CSV matrix + 16-bit PGM heatmap, plus a PNG figure
    unless disabled. Returns the CSV paths."""
    from .config import AXIS_NAMES
    from .env import axis_pairs, landscape_slice
    from .imgio import write_pgm16

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env_cfg = make_env_config(app, noise_label=0.0, samples_per_pixel=samples_per_pixel)
    if dims is None:
        dims = axis_pairs(app.env.active_mask)
    written = []
    for dim_i, dim_j in dims:
        matrix = landscape_slice(env_cfg, dim_i, dim_j, grid_n, seed)
        stem = f"landscape_{AXIS_NAMES[dim_i]}_{AXIS_NAMES[dim_j]}"
        csv_file = out_dir / f"{stem}.csv"
        np.savetxt(csv_file, matrix, fmt="%.9g", delimiter=",")
        write_pgm16(out_dir / f"{stem}.pgm", matrix)
        if figures:
            from .figures import landscape_figure

            landscape_figure(matrix, (AXIS_NAMES[dim_i], AXIS_NAMES[dim_j]), out_dir / f"{stem}.png")
        written.append(csv_file)
    return written


def load_results(csv_path) -> list[dict]:
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            rows.append(
                {
                    "algorithm": raw["algorithm"],
                    "noise": float(raw["noise"]),
                    "episode": int(raw["episode"]),
                    "step": int(raw["step"]),
                    "score": float(raw["score"]),
                    "best_rmse": float(raw["best_rmse"]),
                    "step_ms": float(raw["step_ms"]),
                    "terminated": raw["terminated"] == "1",
                    "failed": raw["failed"] == "1",
                }
            )
    return rows


def summarize(rows: list[dict], stat: str = "median") -> list[dict]:
    """Per-(algorithm, noise, step) aggregates of best-so-far RMSE across
    episodes: p25 / p50-or-mean / p75 plus episode count."""
    if not rows:
        raise ValueError("empty result set")
    if stat not in ("median", "mean"):
        raise ValueError("stat must be 'median' or 'mean'")
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if r["failed"] or not np.isfinite(r["best_rmse"]):
            continue
        groups.setdefault((r["algorithm"], r["noise"], r["step"]), []).append(r["best_rmse"])
    out = []
    for (algo, noise, step_i) in sorted(groups):
        vals = np.array(groups[(algo, noise, step_i)])
        center = float(np.median(vals)) if stat == "median" else float(np.mean(vals))
        out.append(
            {
                "algorithm": algo,
                "noise": noise,
                "step": step_i,
                "p25": float(np.percentile(vals, 25)),
                stat: center,
                "p75": float(np.percentile(vals, 75)),
                "episodes": len(vals),
            }
        )
    return out


def write_summary(aggregates: list[dict], path, stat: str = "median") -> None:
    cols = ["algorithm", "noise", "step", "p25", stat, "p75", "episodes"]
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in aggregates:
            f.write(
                ",".join(
                    str(row[c]) if c in ("algorithm", "step", "episodes") else f"{row[c]:.9g}"
                    for c in cols
                )
                + "\n"
            )


def timing_summary(result: BenchmarkResult) -> dict[tuple, float]:
    """Mean wall-clock ms per step for each (algorithm, noise); each
    episode's first step is dropped as JIT/cache warm-up."""
    acc: dict[tuple, list[float]] = {}
    for rec in result.records:
        if rec.failed or len(rec.step_ms) < 2:
            continue
        acc.setdefault((rec.algorithm, rec.noise), []).extend(rec.step_ms[1:])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def strip_timing_columns(csv_path) -> bytes:
    """CSV bytes with timing columns removed, for determinism checks."""
    out_lines = []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        keep = [i for i, c in enumerate(header) if c not in TIMING_COLUMNS]
        out_lines.append(",".join(header[i] for i in keep))
        for row in reader:
            out_lines.append(",".join(row[i] for i in keep))
    return ("\n".join(out_lines) + "\n").encode()
