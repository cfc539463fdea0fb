"""Analytic scenes with known geometry and band-limited colors, plus camera rigs.

Objects are solid (or optionally hollow) spheres and boxes whose density
ramps linearly from 0 to ``sigma_max`` across a band of width ``ramp``
centred on the surface. Colors live on the surface: each sample is colored
by its nearest surface point, with a two-tone checker partition and a
degree <= 2 SH expansion per tone for view dependence.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from . import _threads  # noqa: F401
from numba import njit, prange

from .core import DegenerateResultError, normalize, vec3
from .fields import DensityVolume, _ray_box
from .metric import pixel_rays
from .observation import CameraModel, ImageBuffer
from .sh import _sh_eval, n_coeffs

SHAPE_NONE = -1
SHAPE_SPHERE = 0
SHAPE_BOX = 1

# max |Y_j| over the sphere for j < 9; used to bound reconstructed colors
_SH_MAX_ABS = np.array([0.28209479177387814] + [0.4886025119029199] * 3
                       + [0.5462742152960396, 0.5462742152960396, 0.6307831305050401,
                          0.5462742152960396, 0.5462742152960396])

SCENE_KINDS = ("empty", "lambertian-sphere", "textured-sphere", "glossy-sphere", "textured-cube")


def constant_color_coeffs(color):
    """Degree-2 coefficient block that evaluates to ``color`` in every direction."""
    c = np.zeros((9, 3))
    c[0] = 2.0 * math.sqrt(math.pi) * np.asarray(color, dtype=np.float64)
    return c


@dataclass(frozen=True, eq=False)
class AnalyticScene:
    shape: int
    center: np.ndarray
    size: np.ndarray            # radius in size[0] for spheres, half extents for boxes
    rotation: np.ndarray        # world -> object rotation
    ramp: float
    sigma_max: float
    tone_coeffs: np.ndarray     # (2, 9, 3)
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    hollow: bool = False
    checker_cell: float = 0.0   # 0 disables the texture
    blobs: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))  # cx, cy, cz, std, peak
    blob_color: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))

    def __post_init__(self):
        coeffs = np.asarray(self.tone_coeffs, dtype=np.float64).reshape(2, 9, 3)
        object.__setattr__(self, "tone_coeffs", coeffs)
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "bbox_min", vec3(self.bbox_min))
        object.__setattr__(self, "bbox_max", vec3(self.bbox_max))
        object.__setattr__(self, "blobs", np.asarray(self.blobs, dtype=np.float64).reshape(-1, 5))
        object.__setattr__(self, "blob_color", vec3(self.blob_color))
        if self.ramp <= 0 or self.sigma_max < 0:
            raise ValueError("ramp must be > 0 and sigma_max >= 0")
        for tone in coeffs:
            base = tone[0] * _SH_MAX_ABS[0]
            spread = np.abs(tone[1:]).T @ _SH_MAX_ABS[1:]
            if np.any(base - spread < -1e-12) or np.any(base + spread > 1 + 1e-12):
                raise ValueError("tone coefficients can leave [0, 1]")

    def kernel_args(self):
        return (self.shape, self.center, self.size, self.rotation, float(self.ramp), float(self.sigma_max),
                bool(self.hollow), float(self.checker_cell), self.tone_coeffs, self.blobs, self.blob_color)

    def content_bounds(self):
        """Axis-aligned box containing all non-zero density."""
        if self.shape == SHAPE_NONE:
            lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        else:
            r = self.size[0] if self.shape == SHAPE_SPHERE else float(np.linalg.norm(self.size))
            pad = r + self.ramp
            lo, hi = self.center - pad, self.center + pad
        for b in self.blobs:
            lo = np.minimum(lo, b[:3] - 3 * b[3])
            hi = np.maximum(hi, b[:3] + 3 * b[3])
        return np.maximum(lo, self.bbox_min), np.minimum(hi, self.bbox_max)

    def density_fn(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.zeros(pts.shape[0])
        _density_batch(pts, *self.kernel_args(), out)
        return out

    def nearest_surface(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.zeros_like(pts)
        _surface_batch(pts, self.shape, self.center, self.size, self.rotation, out)
        return out

    def color_fn(self, points, dirs):
        """Color of the surface point nearest each point, seen from unit ``dirs``."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        d = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
        out = np.zeros_like(pts)
        _color_batch(pts, d, *self.kernel_args(), out)
        return out

    def tone(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.zeros(pts.shape[0], dtype=np.int64)
        for i, p in enumerate(pts):
            out[i] = _tone(p, self.center, self.rotation, self.checker_cell)
        return out

    def sample_surface(self, n, seed=0):
        """``n`` points uniformly distributed over the analytic surface."""
        rng = np.random.default_rng(seed)
        if self.shape == SHAPE_SPHERE:
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return self.center + self.size[0] * v
        if self.shape == SHAPE_BOX:
            a = self.size
            areas = np.array([a[1] * a[2], a[1] * a[2], a[0] * a[2], a[0] * a[2], a[0] * a[1], a[0] * a[1]])
            face = rng.choice(6, size=n, p=areas / areas.sum())
            q = rng.uniform(-1.0, 1.0, size=(n, 3)) * a
            axis = face // 2
            sign = np.where(face % 2 == 0, 1.0, -1.0)
            q[np.arange(n), axis] = sign * a[axis]
            return self.center + q @ self.rotation
        raise ValueError("scene has no surface")


@njit(cache=True, nogil=True)
def _to_local(p, center, rot, a):
    return rot[a, 0] * (p[0] - center[0]) + rot[a, 1] * (p[1] - center[1]) + rot[a, 2] * (p[2] - center[2])


@njit(cache=True, nogil=True)
def _signed_distance(p, shape, center, size, rot):
    if shape == SHAPE_SPHERE:
        dx = p[0] - center[0]
        dy = p[1] - center[1]
        dz = p[2] - center[2]
        return np.sqrt(dx * dx + dy * dy + dz * dz) - size[0]
    outside = 0.0
    inside = -np.inf
    for a in range(3):
        e = abs(_to_local(p, center, rot, a)) - size[a]
        if e > 0:
            outside += e * e
        inside = max(inside, e)
    return np.sqrt(outside) + min(inside, 0.0)


@njit(cache=True, nogil=True)
def _surface_point(p, shape, center, size, rot, out):
    if shape == SHAPE_SPHERE:
        dx = p[0] - center[0]
        dy = p[1] - center[1]
        dz = p[2] - center[2]
        n = np.sqrt(dx * dx + dy * dy + dz * dz)
        if n == 0.0:
            dx, dy, dz, n = 0.0, 0.0, 1.0, 1.0
        out[0] = center[0] + size[0] * dx / n
        out[1] = center[1] + size[0] * dy / n
        out[2] = center[2] + size[0] * dz / n
        return
    q0 = _to_local(p, center, rot, 0)
    q1 = _to_local(p, center, rot, 1)
    q2 = _to_local(p, center, rot, 2)
    if abs(q0) > size[0] or abs(q1) > size[1] or abs(q2) > size[2]:
        q0 = min(max(q0, -size[0]), size[0])
        q1 = min(max(q1, -size[1]), size[1])
        q2 = min(max(q2, -size[2]), size[2])
    else:
        g0 = size[0] - abs(q0)
        g1 = size[1] - abs(q1)
        g2 = size[2] - abs(q2)
        if g0 <= g1 and g0 <= g2:
            q0 = size[0] if q0 >= 0 else -size[0]
        elif g1 <= g2:
            q1 = size[1] if q1 >= 0 else -size[1]
        else:
            q2 = size[2] if q2 >= 0 else -size[2]
    for a in range(3):
        out[a] = center[a] + rot[0, a] * q0 + rot[1, a] * q1 + rot[2, a] * q2


@njit(cache=True, nogil=True)
def _tone(ps, center, rot, cell):
    if cell <= 0.0:
        return 0
    s = 0
    for a in range(3):
        s += int(np.floor(_to_local(ps, center, rot, a) / cell))
    return s % 2


@njit(cache=True, nogil=True)
def _surface_density(p, shape, center, size, rot, ramp, sigma_max, hollow):
    if shape < 0:
        return 0.0
    sd = _signed_distance(p, shape, center, size, rot)
    if hollow:
        return sigma_max * max(0.0, 1.0 - abs(sd) / ramp)
    return sigma_max * min(max(0.5 - sd / ramp, 0.0), 1.0)


@njit(cache=True, nogil=True)
def _blob_density(p, blobs):
    s = 0.0
    for b in range(blobs.shape[0]):
        dx = p[0] - blobs[b, 0]
        dy = p[1] - blobs[b, 1]
        dz = p[2] - blobs[b, 2]
        r2 = dx * dx + dy * dy + dz * dz
        std = blobs[b, 3]
        if r2 <= 9.0 * std * std:
            s += blobs[b, 4] * np.exp(-0.5 * r2 / (std * std))
    return s


@njit(cache=True, nogil=True)
def _point_color(p, d, shape, center, size, rot, checker, coeffs, basis, ps, out):
    _surface_point(p, shape, center, size, rot, ps)
    tone = _tone(ps, center, rot, checker)
    _sh_eval(2, d[0], d[1], d[2], basis)
    for c in range(3):
        acc = 0.0
        for j in range(9):
            acc += coeffs[tone, j, c] * basis[j]
        out[c] = acc


@njit(parallel=True, cache=True)
def _density_batch(pts, shape, center, size, rot, ramp, sigma_max, hollow, checker, coeffs, blobs,
                   blob_color, out):
    for i in prange(pts.shape[0]):
        out[i] = (_surface_density(pts[i], shape, center, size, rot, ramp, sigma_max, hollow)
                  + _blob_density(pts[i], blobs))


@njit(cache=True)
def _surface_batch(pts, shape, center, size, rot, out):
    for i in range(pts.shape[0]):
        _surface_point(pts[i], shape, center, size, rot, out[i])


@njit(cache=True)
def _color_batch(pts, dirs, shape, center, size, rot, ramp, sigma_max, hollow, checker, coeffs, blobs,
                 blob_color, out):
    basis = np.empty(9)
    ps = np.empty(3)
    for i in range(pts.shape[0]):
        if shape < 0:
            out[i] = blob_color
        else:
            _point_color(pts[i], dirs[i], shape, center, size, rot, checker, coeffs, basis, ps, out[i])


@njit(parallel=True, cache=True)
def _render_scene(o, dirs, t_lo, t_hi, step, shape, center, size, rot, ramp, sigma_max, hollow, checker,
                  coeffs, blobs, blob_color, out):
    for r in prange(dirs.shape[0]):
        d = dirs[r]
        back = -d
        t0, t1 = _ray_box(o[0], o[1], o[2], d[0], d[1], d[2], t_lo, t_hi)
        t0 = max(t0, 0.0)
        if t0 > t1:
            continue
        basis = np.empty(9)
        ps = np.empty(3)
        col = np.empty(3)
        p = np.empty(3)
        n = int(np.floor((t1 - t0) / step + 1e-9)) + 1
        tau = 0.0
        prev = t0
        for i in range(n):
            t = t0 + i * step
            for a in range(3):
                p[a] = o[a] + t * d[a]
            s_surf = _surface_density(p, shape, center, size, rot, ramp, sigma_max, hollow)
            s_blob = _blob_density(p, blobs)
            s = s_surf + s_blob
            delta = t - prev if i > 0 else 0.0
            prev = t
            if s > 0.0 and delta > 0.0:
                w = np.exp(-tau) * (1.0 - np.exp(-s * delta))
                if s_surf > 0.0:
                    _point_color(p, back, shape, center, size, rot, checker, coeffs, basis, ps, col)
                else:
                    col[:] = 0.0
                for c in range(3):
                    out[r, c] += w * (s_surf * col[c] + s_blob * blob_color[c]) / s
            tau += s * delta
            if tau > 750.0:
                break


def bake_volume(scene: AnalyticScene, resolution) -> DensityVolume:
    """Sample the analytic density at every vertex of a grid over the scene bbox."""
    res = (int(resolution),) * 3 if np.isscalar(resolution) else tuple(int(n) for n in resolution)
    if min(res) < 16:
        raise ValueError(f"resolution must be >= 16 per axis, got {res}")
    empty = DensityVolume(res, scene.bbox_min, scene.bbox_max, np.zeros(res[0] * res[1] * res[2], np.float32))
    return empty.with_data(scene.density_fn(empty.vertex_positions()).astype(np.float32))


def render_views(scene: AnalyticScene, cams: Sequence[CameraModel], step: float):
    """Volume-render the analytic scene into each camera; background is black."""
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    lo, hi = scene.content_bounds()
    images = []
    for cam in cams:
        dirs, _ = pixel_rays(cam)
        out = np.zeros((dirs.shape[0], 3))
        if np.all(lo <= hi):
            _render_scene(cam.origin, dirs, lo, hi, float(step), *scene.kernel_args(), out)
        images.append(ImageBuffer(cam.width, cam.height, out.reshape(cam.height, cam.width, 3)))
    return images


def attach_images(scene, cams, step):
    return [c.with_image(img) for c, img in zip(cams, render_views(scene, cams, step))]


@dataclass(frozen=True)
class Perturbation:
    """Wrong-geometry variant.

    ``magnitude`` is in voxels: ball radius for dilate/erode, shift length
    for translate (along ``direction``), blob standard deviation for floaters.
    """

    kind: str
    magnitude: float
    seed: int = 0
    count: int = 5
    direction: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("dilate", "erode", "translate", "floaters"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not self.magnitude > 0:
            raise ValueError("magnitude must be > 0")

    @property
    def name(self):
        if self.kind == "floaters":
            return f"floaters-{self.count}"
        return f"{self.kind}-{self.magnitude:g}"

    @classmethod
    def parse(cls, name, seed=0):
        """``dilate-2``, ``erode-2``, ``translate-2`` or ``floaters-5``."""
        kind, _, value = name.partition("-")
        if kind == "floaters":
            return cls("floaters", 1.5, seed=seed, count=int(value or 5))
        return cls(kind, float(value))


def _ball(radius):
    r = int(math.floor(radius))
    g = np.arange(-r, r + 1)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    return x * x + y * y + z * z <= radius * radius


def _floater_blobs(vol, p):
    grid = vol.to_array()
    std = p.magnitude
    reach = 3.0 * std
    clearance = ndimage.distance_transform_edt(grid == 0)
    border = np.zeros(grid.shape, dtype=bool)
    m = int(math.ceil(reach))
    border[m:-m, m:-m, m:-m] = True
    candidates = np.argwhere((clearance >= 3.0 + reach) & border)
    if candidates.shape[0] == 0:
        raise DegenerateResultError("no empty space far enough from the surface for floaters")
    rng = np.random.default_rng(p.seed)
    order = rng.permutation(candidates.shape[0])
    chosen = []
    for i in order:
        c = candidates[i]
        if all(np.sum((c - o) ** 2) >= (2 * reach) ** 2 for o in chosen):
            chosen.append(c)
            if len(chosen) == p.count:
                break
    return np.array(chosen, dtype=np.float64), std


def floater_positions(vol: DensityVolume, p: "Perturbation"):
    """World-space centers of the blobs that ``apply_perturbation`` would add."""
    centers, _ = _floater_blobs(vol, p)
    return vol.bbox_min + centers * vol.spacing


def apply_perturbation(vol: DensityVolume, p: Perturbation) -> DensityVolume:
    grid = vol.to_array().astype(np.float32)
    if p.kind == "dilate":
        out = ndimage.grey_dilation(grid, footprint=_ball(p.magnitude), mode="constant", cval=0.0)
    elif p.kind == "erode":
        # a ball wider than the grid reaches the zero border from every voxel
        if 2 * math.floor(p.magnitude) + 1 > min(grid.shape):
            raise DegenerateResultError(f"erosion by {p.magnitude} voxels removes the whole field")
        out = ndimage.grey_erosion(grid, footprint=_ball(p.magnitude), mode="constant", cval=0.0)
        if not np.any(out > 0):
            raise DegenerateResultError(f"erosion by {p.magnitude} voxels removes the whole field")
    elif p.kind == "translate":
        shift = np.rint(np.asarray(p.direction, dtype=np.float64) / np.linalg.norm(p.direction)
                        * p.magnitude).astype(int)
        out = ndimage.shift(grid, shift, order=0, mode="constant", cval=0.0)
    else:
        centers, std = _floater_blobs(vol, p)
        peak = float(grid.max()) if grid.max() > 0 else 1.0
        idx = np.indices(grid.shape).reshape(3, -1).T.astype(np.float64)
        add = np.zeros(idx.shape[0])
        for c in centers:
            r2 = np.sum((idx - c) ** 2, axis=1)
            near = r2 <= (3 * std) ** 2
            add[near] += peak * np.exp(-0.5 * r2[near] / std ** 2)
        out = grid + add.reshape(grid.shape).astype(np.float32)
    return DensityVolume.from_array(np.maximum(out, 0.0), vol.bbox_min, vol.bbox_max)


def look_at_pose(origin, target, up=(0.0, 0.0, 1.0)):
    """4x4 cam-to-world with +z toward ``target`` and image-down close to ``-up``."""
    origin = vec3(origin)
    forward = normalize(vec3(target) - origin)
    up = vec3(up)
    if abs(np.dot(forward, normalize(up))) > 1 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = normalize(np.cross(forward, up))
    down = np.cross(forward, right)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = down
    m[:3, 2] = forward
    m[:3, 3] = origin
    return m


def intrinsics_for(width, height, fov_deg):
    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
    return np.array([[f, 0.0, (width - 1) / 2], [0.0, f, (height - 1) / 2], [0.0, 0.0, 1.0]])


def camera_rig(kind, count, radius, look_at=(0.0, 0.0, 0.0), width=128, height=128, fov_deg=30.0,
               elevation_deg=0.0, min_elevation_deg=10.0, max_elevation_deg=80.0):
    """Cameras aimed at ``look_at``.

    ``sphere_ring``: evenly spaced azimuths at a fixed elevation.
    ``hemisphere``: golden-angle spiral with elevations spread uniformly in
    area between the min and max elevation.
    """
    if count < 2:
        raise ValueError("need at least 2 cameras")
    center = vec3(look_at)
    k = intrinsics_for(width, height, fov_deg)
    if kind == "sphere_ring":
        az = 2 * np.pi * np.arange(count) / count
        el = np.full(count, math.radians(elevation_deg))
    elif kind == "hemisphere":
        lo, hi = math.sin(math.radians(min_elevation_deg)), math.sin(math.radians(max_elevation_deg))
        el = np.arcsin(lo + (hi - lo) * (np.arange(count) + 0.5) / count)
        az = np.arange(count) * math.pi * (3.0 - math.sqrt(5.0))
    else:
        raise ValueError(f"unknown rig kind {kind!r}")
    cams = []
    for a, e in zip(az, el):
        o = center + radius * np.array([math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)])
        cams.append(CameraModel(width, height, k, look_at_pose(o, center)))
    return cams


def make_scene(kind, resolution=96, bbox=(-1.0, 1.0), sigma_voxels=50.0, hollow=False):
    """Named synthetic scenes; the density ramp is one voxel wide at ``resolution``."""
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene {kind!r}; choose from {SCENE_KINDS}")
    lo, hi = bbox
    h = (hi - lo) / (int(resolution) - 1)
    common = dict(ramp=h, sigma_max=sigma_voxels / h, bbox_min=(lo,) * 3, bbox_max=(hi,) * 3, hollow=hollow)
    # tone values are multiples of 1/255 so 8-bit images store them exactly
    warm = np.array([230, 180, 50]) / 255
    cool = np.array([40, 90, 200]) / 255
    two_tone = np.stack([constant_color_coeffs(warm), constant_color_coeffs(cool)])
    sphere = dict(shape=SHAPE_SPHERE, center=np.zeros(3), size=(0.6, 0.6, 0.6), rotation=np.eye(3))
    if kind == "empty":
        return AnalyticScene(shape=SHAPE_NONE, center=np.zeros(3), size=np.zeros(3), rotation=np.eye(3),
                             tone_coeffs=np.zeros((2, 9, 3)), **common)
    if kind == "lambertian-sphere":
        c = constant_color_coeffs(np.array([204, 102, 51]) / 255)
        return AnalyticScene(tone_coeffs=np.stack([c, c]), **sphere, **common)
    if kind == "textured-sphere":
        return AnalyticScene(tone_coeffs=two_tone, checker_cell=0.3, **sphere, **common)
    if kind == "glossy-sphere":
        mid_warm = np.array([180, 140, 80]) / 255
        mid_cool = np.array([80, 110, 170]) / 255
        tones = np.stack([constant_color_coeffs(mid_warm), constant_color_coeffs(mid_cool)])
        gloss = np.zeros((9, 3))
        gloss[1] = (0.10, 0.08, 0.06)
        gloss[2] = (0.12, 0.12, 0.12)
        gloss[3] = (-0.06, 0.05, 0.08)
        gloss[6] = (0.10, 0.10, 0.10)
        gloss[7] = (0.08, -0.05, 0.04)
        gloss[8] = (-0.05, 0.06, 0.05)
        return AnalyticScene(tone_coeffs=tones + gloss, checker_cell=0.3, **sphere, **common)
    rot = _rotation_zx(math.radians(25.0), math.radians(20.0))
    return AnalyticScene(shape=SHAPE_BOX, center=np.zeros(3), size=(0.42, 0.42, 0.42), rotation=rot,
                         tone_coeffs=two_tone, checker_cell=0.28, **common)


def _rotation_zx(az, tilt):
    cz, sz = math.cos(az), math.sin(az)
    cx, sx = math.cos(tilt), math.sin(tilt)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1.0]])
    rx = np.array([[1.0, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return rx @ rz


def with_blobs(scene, blobs, color=(0.5, 0.5, 0.5)):
    return replace(scene, blobs=np.asarray(blobs, dtype=np.float64).reshape(-1, 5), blob_color=vec3(color))
