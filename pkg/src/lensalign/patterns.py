"""Emitter test patterns: Siemens star, chessboard, uniform field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Bitmap:
    """Grayscale pattern, row-major, values in [0, 1]."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("bitmap dimensions must be >= 1")
        if d.shape != (self.height, self.width):
            raise ValueError("data shape mismatch")
        if np.any(d < 0) or np.any(d > 1):
            raise ValueError("bitmap values must lie in [0, 1]")
        object.__setattr__(self, "data", d)


def siemens_star(size: int, sectors: int) -> Bitmap:
    """Binary radial star: `sectors` bright and `sectors` dark wedges. The
    wedge containing the +x axis is bright; the exact center pixel belongs
    to it (angle tie broken toward +x)."""
    if sectors < 2:
        raise ValueError("sectors must be >= 2")
    if size < 16:
        raise ValueError("size must be >= 16")
    c = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size]
    angle = np.mod(np.arctan2(ys - c, xs - c), 2.0 * np.pi)
    wedge = np.floor(angle / (np.pi / sectors)).astype(int)
    data = (wedge % 2 == 0).astype(np.float64)
    return Bitmap(size, size, data)


def chessboard(size: int, tiles_per_side: int) -> Bitmap:
    """Binary alternating tiles; the top-left tile is dark."""
    if tiles_per_side < 2:
        raise ValueError("tiles_per_side must be >= 2")
    if size < tiles_per_side:
        raise ValueError("size must be >= tiles_per_side")
    idx = np.arange(size) * tiles_per_side // size
    data = ((idx[:, None] + idx[None, :]) % 2).astype(np.float64)
    return Bitmap(size, size, data)


def uniform(size: int, value: float) -> Bitmap:
    """Constant field."""
    if not (0.0 <= value <= 1.0):
        raise ValueError("value must lie in [0, 1]")
    return Bitmap(size, size, np.full((size, size), float(value)))


_GENERATORS = {
    "siemens_star": lambda args: siemens_star(int(args[0]), int(args[1])),
    "chessboard": lambda args: chessboard(int(args[0]), int(args[1])),
    "uniform": lambda args: uniform(int(args[0]), float(args[1])),
}


def from_spec(spec: str) -> Bitmap:
    """Build a pattern from a generator spec like 'siemens_star:512:16'."""
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    if name not in _GENERATORS:
        raise ValueError(f"unknown pattern generator '{name}' (expected one of {sorted(_GENERATORS)})")
    try:
        return _GENERATORS[name](args)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad pattern spec '{spec}': {exc}") from exc
