"""Rigid-transform helpers for placing optical surfaces in world space.

Conventions: right-handed coordinates, optical axis along +z, angles in
degrees. The combined rotation for a 6-DoF pose is Rz @ Ry @ Rx (world-axis
rotations applied x first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def rot_x(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation matrix for world-axis rotations, x applied first."""
    return rot_z(rz) @ rot_y(ry) @ rot_x(rx)


@dataclass(frozen=True)
class RigidTransform:
    """p -> R @ (p - pivot) + pivot + translation."""

    rotation: np.ndarray
    translation: np.ndarray
    pivot: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3), np.zeros(3))

    @staticmethod
    def from_pose(
        dx: float, dy: float, dz: float, rx: float, ry: float, rz: float, pivot=(0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        return RigidTransform(
            rotation_xyz(rx, ry, rz),
            np.array([dx, dy, dz], dtype=float),
            np.asarray(pivot, dtype=float),
        )

    def apply_point(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self.rotation @ (p - self.pivot) + self.pivot + self.translation

    def apply_direction(self, d: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=float)

    def compose_after(self, inner: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying `inner` first, then self."""
        rot = self.rotation @ inner.rotation
        # Work out net offset so that pivot bookkeeping collapses into one
        # translation: p -> rot @ p + t_net with pivot at origin.
        t_inner = -inner.rotation @ inner.pivot + inner.pivot + inner.translation
        t_net = self.rotation @ t_inner - self.rotation @ self.pivot + self.pivot + self.translation
        return RigidTransform(rot, t_net, np.zeros(3))


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n
