"""Config file handling: one INI-style file describes the optical scene,
the environment, and benchmark defaults.

The shipped default scene is a stand-in 4-element f/2 objective (EFL
2.90 mm at 589 nm) designed for this simulator; see data/default_scene.ini.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import patterns
from .imgio import read_pgm8
from .optics import EmitterGeometry, LensElement, LensSurface, LensSystem, SensorGeometry, Stop

AXIS_NAMES = ("x", "y", "z", "rx", "ry", "rz")
NOISE_LABELS = (0.0, 0.25, 0.5)

# Translation stds of the per-lens placement error, scene units, before the
# configurable scale factor; rotation stds in degrees.
WL_TRANSLATION_STD = {0.0: 0.0, 0.25: 1.25e-4, 0.5: 2.5e-4}
WL_ROTATION_STD = {0.0: 0.0, 0.25: 0.375, 0.5: 0.75}


class ConfigError(Exception):
    """Raised for malformed or inconsistent config files."""


@dataclass(frozen=True)
class EnvSettings:
    pose_lo: np.ndarray
    pose_hi: np.ndarray
    active_mask: np.ndarray
    a_max: float = 0.2
    max_steps: int = 50
    reward_mode: str = "combined"
    combined_radius: float = 0.1
    reference_samples: int = 100
    sigma_dist: float = 0.05
    wl_translation_scale: float = 1000.0
    samples_per_pixel: int = 64
    render_seed: int = 0
    max_irradiance: float = 1.0
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.a_max <= 1.0):
            raise ConfigError(f"a_max must be in (0, 1], got {self.a_max}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.combined_radius <= 0:
            raise ConfigError("combined_radius must be > 0")
        if self.reward_mode not in ("dist", "pattern", "combined"):
            raise ConfigError(f"unknown reward mode '{self.reward_mode}'")


@dataclass(frozen=True)
class BenchSettings:
    episodes: int = 30
    steps: int = 25
    algorithms: tuple[str, ...] = ("random", "bo-rf", "bo-gp")
    box_fraction: float = 0.08
    box_mode: str = "volume"


@dataclass(frozen=True)
class AppConfig:
    system: LensSystem
    env: EnvSettings
    bench: BenchSettings
    path: str | None = None


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, path) -> object:
    try:
        raw = parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"{path}: missing [{section}] {key}") from exc
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}: bad value for [{section}] {key}: {raw!r}") from exc


def _load_bitmap(pattern_spec: str, base_dir: Path) -> np.ndarray:
    if pattern_spec.startswith("file:"):
        path = Path(pattern_spec[5:])
        if not path.is_absolute():
            path = base_dir / path
        return read_pgm8(path)
    return patterns.from_spec(pattern_spec).data


def load_config(path: str | Path | None = None) -> AppConfig:
    """Parse a scene/env/bench config; None loads the packaged default."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        text = resources.files("lensalign").joinpath("data/default_scene.ini").read_text()
        parser.read_string(text)
        display_path = "<builtin default_scene.ini>"
        base_dir = Path.cwd()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"{path}: config file not found")
        try:
            with open(path) as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        display_path = str(path)
        base_dir = path.parent

    p = display_path

    surf_sections = sorted(
        (s for s in parser.sections() if s.startswith("surface.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if len(surf_sections) % 2 != 0:
        raise ConfigError(f"{p}: expected an even number of [surface.N] sections (two per element)")
    surfaces = [
        LensSurface(
            radius=_get(parser, s, "radius_mm", float, p),
            thickness=_get(parser, s, "thickness_mm", float, p),
            index_after=_get(parser, s, "index_after", float, p),
            semi_aperture=_get(parser, s, "semi_aperture_mm", float, p),
        )
        for s in surf_sections
    ]
    elements = tuple(
        LensElement(surfaces=(surfaces[2 * i], surfaces[2 * i + 1])) for i in range(len(surfaces) // 2)
    )

    stop = Stop(
        z_mm=_get(parser, "stop", "z_mm", float, p),
        semi_diameter=_get(parser, "stop", "semi_diameter_mm", float, p),
    )
    sensor = SensorGeometry(
        width_mm=_get(parser, "sensor", "width_mm", float, p),
        height_mm=_get(parser, "sensor", "height_mm", float, p),
        pixels_x=_get(parser, "sensor", "pixels_x", int, p),
        pixels_y=_get(parser, "sensor", "pixels_y", int, p),
        z_mm=_get(parser, "sensor", "z_mm", float, p),
    )
    pattern_spec = _get(parser, "emitter", "pattern", str, p)
    try:
        bitmap = _load_bitmap(pattern_spec, base_dir)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{p}: emitter pattern '{pattern_spec}': {exc}") from exc
    emitter = EmitterGeometry(
        distance_mm=_get(parser, "emitter", "distance_mm", float, p),
        half_width_mm=_get(parser, "emitter", "half_width_mm", float, p),
        half_height_mm=_get(parser, "emitter", "half_height_mm", float, p),
        bitmap=bitmap,
    )

    pivot_raw = parser.get("stack", "pivot_z_mm", fallback="auto").strip()
    pivot_z = None if pivot_raw == "auto" else float(pivot_raw)

    try:
        system = LensSystem(
            elements=elements, stop=stop, sensor=sensor, emitter=emitter, pivot_z_mm=pivot_z
        )
    except ValueError as exc:
        raise ConfigError(f"{p}: {exc}") from exc

    lo = np.zeros(6)
    hi = np.zeros(6)
    units = ("mm", "mm", "mm", "deg", "deg", "deg")
    for i, (axis, unit) in enumerate(zip(AXIS_NAMES, units)):
        raw = _get(parser, "pose_range", f"{axis}_{unit}", str, p)
        parts = raw.split()
        if len(parts) != 2:
            raise ConfigError(f"{p}: [pose_range] {axis}_{unit} must be 'lo hi'")
        lo[i], hi[i] = float(parts[0]), float(parts[1])
        if lo[i] >= hi[i]:
            raise ConfigError(f"{p}: [pose_range] {axis}_{unit}: lo must be < hi")
        if abs(lo[i] + hi[i]) > 1e-9:
            raise ConfigError(
                f"{p}: [pose_range] {axis}_{unit} must be symmetric so 0.5 maps to the nominal pose"
            )

    active_names = _get(parser, "env", "active_dims", str, p).split()
    for name in active_names:
        if name not in AXIS_NAMES:
            raise ConfigError(f"{p}: unknown active dim '{name}'")
    active_mask = np.array([a in active_names for a in AXIS_NAMES])
    if not active_mask.any():
        raise ConfigError(f"{p}: at least one active dim required")

    thresholds = {}
    if parser.has_section("thresholds"):
        for key, value in parser.items("thresholds"):
            thresholds[float(key)] = float(value)

    try:
        env = EnvSettings(
            pose_lo=lo,
            pose_hi=hi,
            active_mask=active_mask,
            a_max=_get(parser, "env", "a_max", float, p),
            max_steps=_get(parser, "env", "max_steps", int, p),
            reward_mode=_get(parser, "env", "reward_mode", str, p).strip(),
            combined_radius=_get(parser, "env", "combined_radius", float, p),
            reference_samples=_get(parser, "env", "reference_samples", int, p),
            sigma_dist=_get(parser, "env", "sigma_dist", float, p),
            wl_translation_scale=_get(parser, "env", "wl_translation_scale", float, p),
            samples_per_pixel=_get(parser, "render", "samples_per_pixel", int, p),
            render_seed=_get(parser, "render", "seed", int, p),
            max_irradiance=_get(parser, "render", "max_irradiance", float, p),
            thresholds=thresholds,
        )
    except ValueError as exc:
        raise ConfigError(f"{p}: {exc}") from exc

    bench = BenchSettings(
        episodes=_get(parser, "bench", "episodes", int, p) if parser.has_section("bench") else 30,
        steps=_get(parser, "bench", "steps", int, p) if parser.has_section("bench") else 25,
        algorithms=tuple(parser.get("bench", "algorithms", fallback="random bo-rf bo-gp").split()),
        box_fraction=float(parser.get("bench", "box_fraction", fallback="0.08")),
        box_mode=parser.get("bench", "box_mode", fallback="volume").strip(),
    )

    return AppConfig(system=system, env=env, bench=bench, path=None if path is None else str(path))


def write_thresholds(config_path: str | Path, thresholds: dict) -> None:
    """Update (or append) the [thresholds] section of a config file in
    place, leaving every other line untouched."""
    path = Path(config_path)
    lines = path.read_text().splitlines(keepends=True)
    body = "".join(f"{label} = {value!r}\n" for label, value in sorted(thresholds.items()))
    out: list[str] = []
    in_section = False
    replaced = False
    for line in lines:
        stripped = line.strip()
        if stripped.startswith("["):
            if in_section:
                in_section = False
            if stripped == "[thresholds]":
                in_section = True
                replaced = True
                out.append("[thresholds]\n")
                out.append(body)
                continue
        if in_section and (stripped == "" or not stripped.startswith("[")):
            continue  # drop old threshold entries
        out.append(line)
    if not replaced:
        if out and not out[-1].endswith("\n"):
            out.append("\n")
        out.append("\n[thresholds]\n")
        out.append(body)
    path.write_text("".join(out))


def copy_default_config(dest: str | Path) -> Path:
    """Write the packaged default scene config to `dest` and return it."""
    dest = Path(dest)
    text = resources.files("lensalign").joinpath("data/default_scene.ini").read_text()
    dest.write_text(text)
    return dest
