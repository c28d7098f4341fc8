"""Lens-stack geometry: surface/element/system types, pose application,
world-space flattening for the tracer, and paraxial first-order properties.

Layout conventions (millimeters):
  * the emitter plane sits at z = -emitter_distance,
  * the nominal front surface vertex of the lens stack sits at z = 0 and
    subsequent surfaces follow at increasing z,
  * the sensor plane sits at z = sensor_z behind the rear vertex.

The lens stack (elements + aperture stop) is the movable rigid body; sensor
and emitter stay fixed in world space. A planar surface is encoded with
radius 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import RigidTransform

PLANAR = 0.0

# Column layout of the flattened per-surface array consumed by the trace
# kernels: kind (0 sphere, 1 plane, 2 stop), vertex xyz, axis xyz, radius,
# semi-aperture, n_in, n_out.
SURF_COLS = 12
KIND_SPHERE = 0.0
KIND_PLANE = 1.0
KIND_STOP = 2.0


@dataclass(frozen=True)
class LensSurface:
    """One spherical (or planar) refracting surface.

    radius: signed curvature radius in mm, 0 encodes a plane.
    thickness: axial distance to the next surface in mm.
    index_after: refractive index of the medium following the surface
        (in light direction, emitter -> sensor) at 589 nm.
    semi_aperture: clear half-diameter in mm.
    """

    radius: float
    thickness: float
    index_after: float
    semi_aperture: float

    def __post_init__(self):
        if self.thickness < 0:
            raise ValueError(f"thickness must be >= 0, got {self.thickness}")
        if self.semi_aperture <= 0:
            raise ValueError(f"semi_aperture must be > 0, got {self.semi_aperture}")
        if self.index_after < 1:
            raise ValueError(f"index_after must be >= 1, got {self.index_after}")


@dataclass(frozen=True)
class LensElement:
    """A single lens: two surfaces plus a rigid placement error.

    perturbation = (dx, dy, dz, rx, ry): translations in mm, rotations in
    degrees about the element center. All zeros means identity.
    """

    surfaces: tuple[LensSurface, LensSurface]
    perturbation: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def is_perturbed(self) -> bool:
        return any(v != 0.0 for v in self.perturbation)


@dataclass(frozen=True)
class Stop:
    """Aperture stop: plane at axial position z_mm with open semi-diameter."""

    z_mm: float
    semi_diameter: float


@dataclass(frozen=True)
class SensorGeometry:
    width_mm: float
    height_mm: float
    pixels_x: int
    pixels_y: int
    z_mm: float


@dataclass(frozen=True)
class EmitterGeometry:
    """Far rectangular emitter carrying the test pattern bitmap.

    The plane sits at z = -distance_mm; the pattern maps onto
    [-half_width, half_width] x [-half_height, half_height], black outside.
    """

    distance_mm: float
    half_width_mm: float
    half_height_mm: float
    bitmap: np.ndarray

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=np.float64)
        if bm.ndim != 2 or bm.size == 0:
            raise ValueError("emitter bitmap must be a non-empty 2-D array")
        object.__setattr__(self, "bitmap", bm)


@dataclass(frozen=True)
class LensSystem:
    """Ordered lens elements plus stop, sensor and emitter geometry.

    stack_pose: rigid transform of the whole stack (x, y, z in mm,
    Rx, Ry, Rz in degrees) about pivot_z_mm on the optical axis.
    """

    elements: tuple[LensElement, ...]
    stop: Stop
    sensor: SensorGeometry
    emitter: EmitterGeometry
    stack_pose: tuple[float, float, float, float, float, float] = (0.0,) * 6
    pivot_z_mm: float | None = None

    def __post_init__(self):
        zs = self.surface_z_nominal()
        if np.any(np.diff(zs) < 0):
            raise ValueError("element axial positions must be non-decreasing")
        if self.elements and not (zs[0] <= self.stop.z_mm <= zs[-1]):
            raise ValueError("stop must lie within the stack extent")

    def surface_list(self) -> list[LensSurface]:
        return [s for e in self.elements for s in e.surfaces]

    def surface_z_nominal(self) -> np.ndarray:
        """Nominal vertex z of every surface, front surface at z = 0."""
        zs = []
        z = 0.0
        for s in self.surface_list():
            zs.append(z)
            z += s.thickness
        return np.asarray(zs, dtype=float)

    def stack_extent(self) -> tuple[float, float]:
        zs = self.surface_z_nominal()
        if len(zs) == 0:
            return (0.0, 0.0)
        return (float(zs[0]), float(zs[-1]))

    def pivot(self) -> np.ndarray:
        if self.pivot_z_mm is not None:
            return np.array([0.0, 0.0, self.pivot_z_mm])
        lo, hi = self.stack_extent()
        return np.array([0.0, 0.0, 0.5 * (lo + hi)])

    def stack_transform(self) -> RigidTransform:
        x, y, z, rx, ry, rz = self.stack_pose
        return RigidTransform.from_pose(x, y, z, rx, ry, rz, pivot=self.pivot())

    def element_transform(self, index: int) -> RigidTransform:
        """World placement of element `index` (stack pose after the
        element's own perturbation about its center)."""
        elem = self.elements[index]
        zs = self.surface_z_nominal()
        z_front = zs[2 * index]
        z_back = zs[2 * index + 1]
        center = np.array([0.0, 0.0, 0.5 * (z_front + z_back)])
        dx, dy, dz, rx, ry = elem.perturbation
        t_elem = RigidTransform.from_pose(dx, dy, dz, rx, ry, 0.0, pivot=center)
        return self.stack_transform().compose_after(t_elem)

    def world_vertices(self) -> np.ndarray:
        """World positions of all surface vertices, ordered front to rear."""
        out = []
        zs = self.surface_z_nominal()
        for i in range(len(self.elements)):
            t = self.element_transform(i)
            for k in (2 * i, 2 * i + 1):
                out.append(t.apply_point(np.array([0.0, 0.0, zs[k]])))
        return np.asarray(out, dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class Ray:
    """Ray with unit direction; coordinates in mm."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length within 1e-12")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def apply_pose(system: LensSystem, pose_physical) -> LensSystem:
    """System with the whole stack rigidly moved by (x, y, z, Rx, Ry, Rz)
    about the configured pivot. Element perturbations compose after the
    stack transform."""
    pose = tuple(float(v) for v in np.asarray(pose_physical, dtype=float))
    if len(pose) != 6:
        raise ValueError("pose must be a 6-vector")
    return replace(system, stack_pose=pose)


def flatten_surfaces(system: LensSystem, backward: bool) -> np.ndarray:
    """Per-surface world geometry in traversal order for the trace kernels.

    backward=True orders surfaces rear -> front with refraction indices
    flipped (the path a sensor-born ray takes toward the emitter).
    """
    surfaces = system.surface_list()
    zs = system.surface_z_nominal()
    n_surf = len(surfaces)

    media = np.ones(n_surf + 1)  # media[k] = index before surface k (forward)
    for k in range(n_surf):
        media[k + 1] = surfaces[k].index_after

    rows = []
    for k, s in enumerate(surfaces):
        t = system.element_transform(k // 2)
        vertex = t.apply_point(np.array([0.0, 0.0, zs[k]]))
        axis = t.apply_direction(np.array([0.0, 0.0, 1.0]))
        kind = KIND_PLANE if s.radius == PLANAR else KIND_SPHERE
        rows.append((kind, vertex, axis, s.radius, s.semi_aperture, media[k], media[k + 1]))

    t_stack = system.stack_transform()
    stop_vertex = t_stack.apply_point(np.array([0.0, 0.0, system.stop.z_mm]))
    stop_axis = t_stack.apply_direction(np.array([0.0, 0.0, 1.0]))
    stop_row = (KIND_STOP, stop_vertex, stop_axis, 0.0, system.stop.semi_diameter, 1.0, 1.0)
    stop_pos = int(np.searchsorted(zs, system.stop.z_mm)) if n_surf else 0
    rows.insert(stop_pos, stop_row)

    if backward:
        rows = [(k, v, a, r, sa, n_out, n_in) for (k, v, a, r, sa, n_in, n_out) in rows][::-1]

    out = np.zeros((len(rows), SURF_COLS))
    for i, (kind, vertex, axis, radius, semi, n_in, n_out) in enumerate(rows):
        out[i, 0] = kind
        out[i, 1:4] = vertex
        out[i, 4:7] = axis
        out[i, 7] = radius
        out[i, 8] = semi
        out[i, 9] = n_in
        out[i, 10] = n_out
    return out


def rear_aperture_disk(system: LensSystem) -> tuple[np.ndarray, np.ndarray, float]:
    """(center, axis, radius) of the rear surface's clear aperture in world
    space; the backward sampler aims sensor rays at this disk. Falls back to
    the stop disk for an empty element list."""
    if system.elements:
        t = system.element_transform(len(system.elements) - 1)
        z_rear = system.surface_z_nominal()[-1]
        center = t.apply_point(np.array([0.0, 0.0, z_rear]))
        axis = t.apply_direction(np.array([0.0, 0.0, 1.0]))
        radius = system.elements[-1].surfaces[1].semi_aperture
    else:
        t = system.stack_transform()
        center = t.apply_point(np.array([0.0, 0.0, system.stop.z_mm]))
        axis = t.apply_direction(np.array([0.0, 0.0, 1.0]))
        radius = system.stop.semi_diameter
    return center, axis, radius


def paraxial_properties(system: LensSystem) -> dict:
    """EFL/BFL via paraxial refraction/transfer matrices over all surfaces.

    State vector (y, n*u); refraction power phi = (n2 - n1) / R (phi = 0 for
    planes). Returns inf EFL for an afocal stack.
    """
    surfaces = system.surface_list()
    m = np.eye(2)
    n_before = 1.0
    prev_thickness = 0.0
    for s in surfaces:
        if prev_thickness != 0.0:
            m = np.array([[1.0, prev_thickness / n_before], [0.0, 1.0]]) @ m
        n_after = s.index_after
        phi = 0.0 if s.radius == PLANAR else (n_after - n_before) / s.radius
        m = np.array([[1.0, 0.0], [-phi, 1.0]]) @ m
        n_before = n_after
        prev_thickness = s.thickness
    c = m[1, 0]
    if abs(c) < 1e-14:
        return {"efl": np.inf, "bfl": np.inf}
    n_img = n_before  # index after the last surface
    efl = -n_img / c
    bfl = -m[0, 0] * n_img / c  # parallel input ray crosses the axis bfl behind the rear vertex
    return {"efl": float(efl), "bfl": float(bfl)}
