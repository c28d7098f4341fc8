"""Shared fixtures: a fast small-sensor variant of the default scene for
unit tests, plus the full-size config for acceptance checks."""

from __future__ import annotations

from dataclasses import replace

import pytest

from lensalign.config import AppConfig, load_config
from lensalign.env import make_env_config


def shrink_app(app: AppConfig, pixels: int = 64, spp: int = 12, reference_samples: int = 4) -> AppConfig:
    sensor = replace(app.system.sensor, pixels_x=pixels, pixels_y=pixels)
    system = replace(app.system, sensor=sensor)
    env = replace(app.env, samples_per_pixel=spp, reference_samples=reference_samples)
    return AppConfig(system=system, env=env, bench=app.bench, path=app.path)


@pytest.fixture(scope="session")
def default_app() -> AppConfig:
    return load_config()


@pytest.fixture(scope="session")
def small_app(default_app) -> AppConfig:
    return shrink_app(default_app)


@pytest.fixture(scope="session")
def small_env_cfg(small_app):
    return make_env_config(small_app, noise_label=0.0, reference_seed=100)
