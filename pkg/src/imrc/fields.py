"""Density volume sampling and transmittance along rays."""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import _threads  # noqa: F401  (sizes the numba pool)
from numba import njit

from .core import normalize, vec3

# exp(-x) is exactly 0.0 in float64 beyond this optical depth, so marching can stop.
_TAU_UNDERFLOW = 750.0


@dataclass(frozen=True, eq=False)
class DensityVolume:
    """Densities at grid vertices, stored flat in x-fastest order as float32.

    ``resolution`` counts vertices per axis, so there are ``N - 1`` cells
    along each axis.
    """

    resolution: Tuple[int, int, int]
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        if len(res) != 3 or min(res) < 2:
            raise ValueError(f"resolution needs >= 2 vertices per axis, got {self.resolution}")
        bmin = vec3(self.bbox_min)
        bmax = vec3(self.bbox_max)
        if not np.all(bmin < bmax):
            raise ValueError(f"bbox_min {bmin} must be < bbox_max {bmax}")
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32).reshape(-1))
        if data.size != res[0] * res[1] * res[2]:
            raise ValueError(f"data length {data.size} != {res[0]}*{res[1]}*{res[2]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("densities must be finite")
        if data.size and data.min() < 0:
            raise ValueError("densities must be >= 0")
        data.setflags(write=False)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "bbox_min", bmin)
        object.__setattr__(self, "bbox_max", bmax)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, grid, bbox_min, bbox_max):
        """Build from an array indexed ``grid[ix, iy, iz]``."""
        grid = np.asarray(grid)
        return cls(grid.shape, bbox_min, bbox_max, np.ravel(grid, order="F"))

    def to_array(self):
        """Densities as an array indexed ``[ix, iy, iz]`` (a view, read-only)."""
        return self.data.reshape(self.resolution, order="F")

    @property
    def spacing(self):
        return (self.bbox_max - self.bbox_min) / (np.asarray(self.resolution, dtype=np.float64) - 1.0)

    @property
    def n_vertices(self):
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def vertex_position(self, idx):
        return self.bbox_min + np.asarray(idx, dtype=np.float64) * self.spacing

    def vertex_positions(self):
        """World positions of all vertices in linear order, shape ``(N, 3)``."""
        nx, ny, nz = self.resolution
        axes = [self.bbox_min[i] + np.arange(n) * self.spacing[i] for i, n in enumerate((nx, ny, nz))]
        z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def kernel_args(self):
        return (self.data, np.asarray(self.resolution, dtype=np.int64), self.bbox_min,
                self.bbox_max, self.spacing)

    def with_data(self, data):
        return DensityVolume(self.resolution, self.bbox_min, self.bbox_max, data)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float


@dataclass(frozen=True)
class RaySample:
    t: float
    sigma: float
    delta: float
    transmittance_before: float
    alpha: float


@njit(cache=True, nogil=True)
def _trilinear(data, res, bmin, spacing, x, y, z):
    nx, ny, nz = res[0], res[1], res[2]
    fx = (x - bmin[0]) / spacing[0]
    fy = (y - bmin[1]) / spacing[1]
    fz = (z - bmin[2]) / spacing[2]
    eps = 1e-9
    if fx < -eps or fy < -eps or fz < -eps:
        return 0.0
    if fx > nx - 1 + eps or fy > ny - 1 + eps or fz > nz - 1 + eps:
        return 0.0
    # snap onto nodes so vertex positions resample to the stored values exactly
    rx, ry, rz = np.floor(fx + 0.5), np.floor(fy + 0.5), np.floor(fz + 0.5)
    if abs(fx - rx) < eps:
        fx = rx
    if abs(fy - ry) < eps:
        fy = ry
    if abs(fz - rz) < eps:
        fz = rz
    ix = min(max(int(np.floor(fx)), 0), nx - 2)
    iy = min(max(int(np.floor(fy)), 0), ny - 2)
    iz = min(max(int(np.floor(fz)), 0), nz - 2)
    tx = min(max(fx - ix, 0.0), 1.0)
    ty = min(max(fy - iy, 0.0), 1.0)
    tz = min(max(fz - iz, 0.0), 1.0)
    sxy = nx * ny
    b = ix + nx * iy + sxy * iz
    c000 = np.float64(data[b])
    c100 = np.float64(data[b + 1])
    c010 = np.float64(data[b + nx])
    c110 = np.float64(data[b + nx + 1])
    c001 = np.float64(data[b + sxy])
    c101 = np.float64(data[b + sxy + 1])
    c011 = np.float64(data[b + sxy + nx])
    c111 = np.float64(data[b + sxy + nx + 1])
    c00 = c000 + (c100 - c000) * tx
    c10 = c010 + (c110 - c010) * tx
    c01 = c001 + (c101 - c001) * tx
    c11 = c011 + (c111 - c011) * tx
    c0 = c00 + (c10 - c00) * ty
    c1 = c01 + (c11 - c01) * ty
    return c0 + (c1 - c0) * tz


@njit(cache=True, nogil=True)
def _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax):
    """Slab intersection; returns (t0, t1) with t0 > t1 when missed."""
    t0 = -np.inf
    t1 = np.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < bmin[a] or o[a] > bmax[a]:
                return 1.0, 0.0
        else:
            ta = (bmin[a] - o[a]) / d[a]
            tb = (bmax[a] - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    return t0, t1


@njit(cache=True, nogil=True)
def _transmittance(data, res, bmin, bmax, spacing, vx, vy, vz, ox, oy, oz, step):
    dx = ox - vx
    dy = oy - vy
    dz = oz - vz
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    if dist == 0.0:
        return 1.0
    dx /= dist
    dy /= dist
    dz /= dist
    t0, t1 = _ray_box(vx, vy, vz, dx, dy, dz, bmin, bmax)
    length = min(dist, t1)
    if length <= 0.0 or t0 > t1:
        return 1.0
    n_full = int(np.floor(length / step))
    tau = 0.0
    for i in range(n_full):
        s = (i + 0.5) * step
        tau += _trilinear(data, res, bmin, spacing, vx + s * dx, vy + s * dy, vz + s * dz) * step
        if tau > _TAU_UNDERFLOW:
            return 0.0
    rem = length - n_full * step
    if rem > 0.0:
        s = n_full * step + 0.5 * rem
        tau += _trilinear(data, res, bmin, spacing, vx + s * dx, vy + s * dy, vz + s * dz) * rem
    return np.exp(-tau)


@njit(cache=True, nogil=True)
def _n_samples(t_near, t_far, step):
    if t_near > t_far:
        return 0
    return int(np.floor((t_far - t_near) / step + 1e-9)) + 1


@njit(cache=True, nogil=True)
def _march(data, res, bmin, spacing, ox, oy, oz, dx, dy, dz, t_near, step, ts, sig, deltas, tb, alphas):
    """Fill per-sample arrays using left-sum transmittance with delta_1 = 0."""
    tau = 0.0
    prev = t_near
    for i in range(ts.shape[0]):
        t = t_near + i * step
        s = _trilinear(data, res, bmin, spacing, ox + t * dx, oy + t * dy, oz + t * dz)
        delta = t - prev if i > 0 else 0.0
        ts[i] = t
        sig[i] = s
        deltas[i] = delta
        tb[i] = np.exp(-tau)
        alphas[i] = 1.0 - np.exp(-s * delta)
        tau += s * delta
        prev = t


def _check_step(step):
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")


def sample_density(vol: DensityVolume, p) -> float:
    """Trilinear density at world point ``p``; 0 outside the bounding box."""
    data, res, bmin, _, spacing = vol.kernel_args()
    p = vec3(p)
    return float(_trilinear(data, res, bmin, spacing, p[0], p[1], p[2]))


def transmittance_to_camera(vol: DensityVolume, v, o_k, step: float) -> float:
    """Midpoint-rule transmittance from ``v`` toward the camera origin ``o_k``.

    Samples sit at ``step/2, 3*step/2, ...`` from ``v``; the path is cut at
    the bounding-box exit and the final partial interval uses its true length.
    """
    _check_step(step)
    v = vec3(v)
    o_k = vec3(o_k)
    data, res, bmin, bmax, spacing = vol.kernel_args()
    return float(_transmittance(data, res, bmin, bmax, spacing, v[0], v[1], v[2],
                                o_k[0], o_k[1], o_k[2], float(step)))


def march_arrays(vol: DensityVolume, ray: Ray, step: float):
    """Like :func:`march_ray` but returns a dict of numpy arrays."""
    _check_step(step)
    n = _n_samples(float(ray.t_near), float(ray.t_far), float(step))
    out = {k: np.zeros(n) for k in ("t", "sigma", "delta", "transmittance_before", "alpha")}
    if n:
        data, res, bmin, _, spacing = vol.kernel_args()
        o = vec3(ray.origin)
        d = normalize(ray.direction)
        _march(data, res, bmin, spacing, o[0], o[1], o[2], d[0], d[1], d[2], float(ray.t_near),
               float(step), out["t"], out["sigma"], out["delta"], out["transmittance_before"], out["alpha"])
    return out


def march_ray(vol: DensityVolume, ray: Ray, step: float) -> List[RaySample]:
    """Quadrature samples along ``ray``: ``t_near`` then every ``step`` up to ``t_far``."""
    a = march_arrays(vol, ray, step)
    return [RaySample(*vals) for vals in zip(a["t"].tolist(), a["sigma"].tolist(), a["delta"].tolist(),
                                               a["transmittance_before"].tolist(), a["alpha"].tolist())]


def ray_through_bbox(vol: DensityVolume, origin, direction):
    """Ray clipped to the volume's bounding box, or ``None`` if it misses."""
    o = vec3(origin)
    d = normalize(direction)
    t0, t1 = _ray_box(o[0], o[1], o[2], d[0], d[1], d[2], vol.bbox_min, vol.bbox_max)
    t0 = max(t0, 0.0)
    if t0 > t1:
        return None
    return Ray(o, d, t0, t1)
