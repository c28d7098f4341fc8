"""Backward Monte Carlo rendering of the sensor image.

Rays start on the sensor plane, are aimed at the rear clear aperture,
propagate surface-by-surface (rear to front) with Snell refraction and
aperture/stop clipping, and finally look up the emitter bitmap (bilinear,
black outside the extent). Each pixel averages samples_per_pixel samples
drawn from an independent counter-based RNG stream keyed by (seed, pixel
index), which makes the output bit-identical regardless of tile scheduling
or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .geometry import normalize
from .optics import (
    KIND_SPHERE,
    KIND_STOP,
    LensSystem,
    Ray,
    flatten_surfaces,
    rear_aperture_disk,
)

T_EPS = 1e-9  # minimum travel between surface hits, mm

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class RenderParams:
    """Sampling controls: samples per pixel and the master RNG seed."""

    samples_per_pixel: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SensorImage:
    """Nonnegative irradiance grid, row-major, scene-relative units."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (self.height, self.width):
            raise ValueError(f"data shape {d.shape} != (height, width) ({self.height}, {self.width})")
        if np.any(d < 0):
            raise ValueError("sensor image values must be >= 0")
        object.__setattr__(self, "data", d)


@njit(cache=True, inline="always")
def _sm_next(state):
    """splitmix64 step: returns (new_state, uniform in [0, 1))."""
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM_MUL1
    z = (z ^ (z >> np.uint64(27))) * _SM_MUL2
    z = z ^ (z >> np.uint64(31))
    return state, (z >> np.uint64(11)) * _U53


@njit(cache=True, inline="always")
def _pixel_stream(seed, pixel_index):
    state = np.uint64(seed) ^ ((np.uint64(pixel_index) + np.uint64(1)) * _SM_MUL2)
    state, _ = _sm_next(state)  # decorrelate nearby pixel indices
    return state


@njit(cache=True, fastmath=True, inline="always")
def _intersect_sphere_world(ox, oy, oz, dx, dy, dz, cx, cy, cz, ax, ay, az, vx, vy, vz, radius, semi):
    """Smallest t > T_EPS hitting the vertex-side spherical cap within the
    clear aperture (radial distance measured from the axis line through the
    vertex). Returns -1.0 on miss."""
    ocx = ox - cx
    ocy = oy - cy
    ocz = oz - cz
    b = 2.0 * (dx * ocx + dy * ocy + dz * ocz)
    c = ocx * ocx + ocy * ocy + ocz * ocz - radius * radius
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return -1.0
    sq = math.sqrt(disc)
    for k in range(2):
        t = (-b - sq) / 2.0 if k == 0 else (-b + sq) / 2.0
        if t <= T_EPS:
            continue
        px = ox + t * dx
        py = oy + t * dy
        pz = oz + t * dz
        axial_c = (px - cx) * ax + (py - cy) * ay + (pz - cz) * az
        if radius > 0.0 and axial_c >= 0.0:
            continue  # far hemisphere
        if radius < 0.0 and axial_c <= 0.0:
            continue
        wx = px - vx
        wy = py - vy
        wz = pz - vz
        waxial = wx * ax + wy * ay + wz * az
        r2 = wx * wx + wy * wy + wz * wz - waxial * waxial
        if r2 > semi * semi:
            return -1.0  # hits the surface outside the clear aperture
        return t
    return -1.0


@njit(cache=True, fastmath=True, inline="always")
def _intersect_plane_world(ox, oy, oz, dx, dy, dz, vx, vy, vz, ax, ay, az, semi):
    """t > T_EPS crossing a disk of radius `semi` in the plane (v, a);
    -1.0 when the ray misses the plane or crosses outside the disk, -2.0
    when it is parallel to the plane."""
    denom = dx * ax + dy * ay + dz * az
    if abs(denom) < 1e-14:
        return -2.0
    t = ((vx - ox) * ax + (vy - oy) * ay + (vz - oz) * az) / denom
    if t <= T_EPS:
        return -1.0
    px = ox + t * dx
    py = oy + t * dy
    pz = oz + t * dz
    wx = px - vx
    wy = py - vy
    wz = pz - vz
    waxial = wx * ax + wy * ay + wz * az
    r2 = wx * wx + wy * wy + wz * wz - waxial * waxial
    if r2 > semi * semi:
        return -1.0
    return t


@njit(cache=True, fastmath=True, inline="always")
def _refract_dir(dx, dy, dz, nx, ny, nz, n_ratio):
    """Snell refraction of unit direction d at unit normal n (any
    orientation). Returns (ok, dx', dy', dz'); ok = 0 on total internal
    reflection."""
    cos_i = -(dx * nx + dy * ny + dz * nz)
    if cos_i < 0.0:  # flip normal against the incident direction
        nx = -nx
        ny = -ny
        nz = -nz
        cos_i = -cos_i
    sin2_t = n_ratio * n_ratio * (1.0 - cos_i * cos_i)
    if sin2_t > 1.0:
        return 0, 0.0, 0.0, 0.0
    cos_t = math.sqrt(1.0 - sin2_t)
    coeff = n_ratio * cos_i - cos_t
    # unit in exact arithmetic for unit d and n; no renormalization needed
    return 1, n_ratio * dx + coeff * nx, n_ratio * dy + coeff * ny, n_ratio * dz + coeff * nz


@njit(cache=True, fastmath=True)
def _trace_seq(ox, oy, oz, dx, dy, dz, surf):
    """Propagate a ray through the flattened surface rows in order.

    Returns (ok, px, py, pz, dx, dy, dz): the ray state after the last
    surface, or ok = 0 if blocked / TIR / missed anywhere.
    """
    for i in range(surf.shape[0]):
        kind = surf[i, 0]
        vx = surf[i, 1]
        vy = surf[i, 2]
        vz = surf[i, 3]
        ax = surf[i, 4]
        ay = surf[i, 5]
        az = surf[i, 6]
        radius = surf[i, 7]
        semi = surf[i, 8]
        n_in = surf[i, 9]
        n_out = surf[i, 10]

        if kind == KIND_SPHERE:
            cx = vx + radius * ax
            cy = vy + radius * ay
            cz = vz + radius * az
            t = _intersect_sphere_world(ox, oy, oz, dx, dy, dz, cx, cy, cz, ax, ay, az, vx, vy, vz, radius, semi)
            if t < 0.0:
                return 0, ox, oy, oz, dx, dy, dz
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            inv_r = 1.0 / abs(radius)
            nx = (px - cx) * inv_r
            ny = (py - cy) * inv_r
            nz = (pz - cz) * inv_r
            ok, dx, dy, dz = _refract_dir(dx, dy, dz, nx, ny, nz, n_in / n_out)
            if ok == 0:
                return 0, px, py, pz, dx, dy, dz
            ox, oy, oz = px, py, pz
        else:
            t = _intersect_plane_world(ox, oy, oz, dx, dy, dz, vx, vy, vz, ax, ay, az, semi)
            if t < 0.0 and t > -1.5:
                return 0, ox, oy, oz, dx, dy, dz
            if t < 0.0:  # parallel to a stop plane: nothing to clip
                if kind == KIND_STOP:
                    continue
                return 0, ox, oy, oz, dx, dy, dz
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            if kind != KIND_STOP:
                ok, dx, dy, dz = _refract_dir(dx, dy, dz, ax, ay, az, n_in / n_out)
                if ok == 0:
                    return 0, px, py, pz, dx, dy, dz
            ox, oy, oz = px, py, pz
    return 1, ox, oy, oz, dx, dy, dz


@njit(cache=True, fastmath=True, inline="always")
def _bilinear(bitmap, x, y, half_w, half_h):
    """Bitmap value at emitter-plane point (x, y); black outside the extent."""
    if x < -half_w or x > half_w or y < -half_h or y > half_h:
        return 0.0
    h, w = bitmap.shape
    fx = (x + half_w) / (2.0 * half_w) * w - 0.5
    fy = (half_h - y) / (2.0 * half_h) * h - 0.5
    x0 = int(math.floor(fx))
    y0 = int(math.floor(fy))
    tx = fx - x0
    ty = fy - y0
    x1 = x0 + 1
    y1 = y0 + 1
    if x0 < 0:
        x0 = 0
    if y0 < 0:
        y0 = 0
    if x1 > w - 1:
        x1 = w - 1
    if y1 > h - 1:
        y1 = h - 1
    if x0 > w - 1:
        x0 = w - 1
    if y0 > h - 1:
        y0 = h - 1
    v00 = bitmap[y0, x0]
    v01 = bitmap[y0, x1]
    v10 = bitmap[y1, x0]
    v11 = bitmap[y1, x1]
    return (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v01 + (1.0 - tx) * ty * v10 + tx * ty * v11


@njit(cache=True, parallel=True, fastmath=True)
def _render_kernel(
    surf,
    px_x,
    px_y,
    sensor_w,
    sensor_h,
    sensor_z,
    disk_c,
    disk_e1,
    disk_e2,
    disk_r,
    emitter_z,
    em_hw,
    em_hh,
    bitmap,
    spp,
    seed,
):
    img = np.zeros((px_y, px_x))
    pitch_x = sensor_w / px_x
    pitch_y = sensor_h / px_y
    inv_spp = 1.0 / spp
    for iy in prange(px_y):
        for ix in range(px_x):
            state = _pixel_stream(seed, iy * px_x + ix)
            acc = 0.0
            for _ in range(spp):
                state, u1 = _sm_next(state)
                state, u2 = _sm_next(state)
                state, u3 = _sm_next(state)
                state, u4 = _sm_next(state)
                sx = -0.5 * sensor_w + (ix + u1) * pitch_x
                sy = 0.5 * sensor_h - (iy + u2) * pitch_y
                r = disk_r * math.sqrt(u3)
                phi = 2.0 * math.pi * u4
                rc = r * math.cos(phi)
                rs = r * math.sin(phi)
                qx = disk_c[0] + rc * disk_e1[0] + rs * disk_e2[0]
                qy = disk_c[1] + rc * disk_e1[1] + rs * disk_e2[1]
                qz = disk_c[2] + rc * disk_e1[2] + rs * disk_e2[2]
                dx = qx - sx
                dy = qy - sy
                dz = qz - sensor_z
                inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
                dx *= inv
                dy *= inv
                dz *= inv
                ok, px, py, pz, fdx, fdy, fdz = _trace_seq(sx, sy, sensor_z, dx, dy, dz, surf)
                if ok == 1 and fdz < -1e-14:
                    t = (emitter_z - pz) / fdz
                    if t > 0.0:
                        ex = px + t * fdx
                        ey = py + t * fdy
                        acc += _bilinear(bitmap, ex, ey, em_hw, em_hh)
            img[iy, ix] = acc * inv_spp
    return img


def _disk_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = normalize(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = normalize(np.cross(a, helper))
    e2 = np.cross(a, e1)
    return e1, e2


def render(system: LensSystem, params: RenderParams) -> SensorImage:
    """Monte Carlo estimate of the sensor image; a pure function of
    (system, params) including the seed."""
    sensor = system.sensor
    if sensor.pixels_x < 1 or sensor.pixels_y < 1:
        raise ValueError("sensor resolution must be at least 1x1")
    if system.emitter.bitmap.size == 0:
        raise ValueError("emitter bitmap is missing")

    surf = flatten_surfaces(system, backward=True)
    disk_c, disk_axis, disk_r = rear_aperture_disk(system)
    e1, e2 = _disk_basis(disk_axis)
    data = _render_kernel(
        surf,
        sensor.pixels_x,
        sensor.pixels_y,
        sensor.width_mm,
        sensor.height_mm,
        sensor.z_mm,
        np.ascontiguousarray(disk_c),
        np.ascontiguousarray(e1),
        np.ascontiguousarray(e2),
        disk_r,
        -system.emitter.distance_mm,
        system.emitter.half_width_mm,
        system.emitter.half_height_mm,
        system.emitter.bitmap,
        params.samples_per_pixel,
        np.uint64(params.seed),
    )
    return SensorImage(width=sensor.pixels_x, height=sensor.pixels_y, data=data)


def intersect_sphere(ray: Ray, vertex_z: float, radius: float, semi_aperture: float):
    """Hit distance of `ray` against an axis-aligned spherical cap (plane
    for radius 0) with vertex at (0, 0, vertex_z); None on miss."""
    ox, oy, oz = ray.origin
    dx, dy, dz = ray.direction
    if radius == 0.0:
        t = _intersect_plane_world(ox, oy, oz, dx, dy, dz, 0.0, 0.0, vertex_z, 0.0, 0.0, 1.0, semi_aperture)
        return float(t) if t > 0.0 else None
    cz = vertex_z + radius
    t = _intersect_sphere_world(
        ox, oy, oz, dx, dy, dz, 0.0, 0.0, cz, 0.0, 0.0, 1.0, 0.0, 0.0, vertex_z, radius, semi_aperture
    )
    return float(t) if t > 0.0 else None


def refract(direction, normal, n_ratio: float):
    """Snell-refracted unit direction, or None on total internal
    reflection. n_ratio = n_incident / n_transmitted."""
    d = np.asarray(direction, dtype=float)
    n = np.asarray(normal, dtype=float)
    if n_ratio <= 0:
        raise ValueError("n_ratio must be > 0")
    ok, tx, ty, tz = _refract_dir(d[0], d[1], d[2], n[0], n[1], n[2], float(n_ratio))
    if ok == 0:
        return None
    return np.array([tx, ty, tz])


def trace_backward(ray: Ray, system: LensSystem):
    """Emitter-plane hit (x, y) of a sensor-born ray traced rear-to-front
    through the stack; None when blocked, reflected, or missing."""
    surf = flatten_surfaces(system, backward=True)
    ok, px, py, pz, dx, dy, dz = _trace_seq(*ray.origin, *ray.direction, surf)
    if ok == 0 or dz >= -1e-14:
        return None
    t = (-system.emitter.distance_mm - pz) / dz
    if t <= 0.0:
        return None
    return np.array([px + t * dx, py + t * dy])


def trace_forward(ray: Ray, system: LensSystem):
    """Sensor-plane hit (x, y) of an emitter-born ray traced front-to-rear;
    None when blocked. Counterpart of trace_backward for reversibility
    checks."""
    surf = flatten_surfaces(system, backward=False)
    ok, px, py, pz, dx, dy, dz = _trace_seq(*ray.origin, *ray.direction, surf)
    if ok == 0 or dz <= 1e-14:
        return None
    t = (system.sensor.z_mm - pz) / dz
    if t <= 0.0:
        return None
    return np.array([px + t * dx, py + t * dy])
