"""Per-point observations: projected color, view direction, and confidence."""
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from . import _threads  # noqa: F401
from numba import njit

from .core import DegenerateDirectionError, EvalConfig, normalize, vec3
from .fields import DensityVolume, _transmittance


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major RGB image, ``pixels[row, col]`` with values in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(f"pixels shape {px.shape} != {(self.height, self.width, 3)}")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera looking along +z in camera space, u right and v down."""

    width: int
    height: int
    intrinsics: np.ndarray
    cam_to_world: np.ndarray
    image: Optional[ImageBuffer] = None

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3)
        m = np.asarray(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        if not (k[0, 0] > 0 and k[1, 1] > 0):
            raise ValueError("focal lengths must be positive")
        rot = m[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or np.linalg.det(rot) < 0:
            raise ValueError("cam_to_world rotation is not orthonormal")
        if self.image is not None and (self.image.width, self.image.height) != (self.width, self.height):
            raise ValueError("image size does not match camera size")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "cam_to_world", m)

    @property
    def origin(self):
        return self.cam_to_world[:3, 3].copy()

    @property
    def rotation(self):
        return self.cam_to_world[:3, :3].copy()

    def with_image(self, image):
        return CameraModel(self.width, self.height, self.intrinsics, self.cam_to_world, image)


@dataclass(frozen=True, eq=False)
class Observation:
    color: np.ndarray
    direction: np.ndarray
    confidence: float


class ObservationSet:
    """Observations of one point, in camera order."""

    def __init__(self, observations: List[Observation] = ()):
        self.observations = list(observations)
        self.sum_confidence = float(sum(o.confidence for o in self.observations))

    @classmethod
    def from_arrays(cls, colors, dirs, conf):
        return cls([Observation(np.array(c, dtype=np.float64), np.array(d, dtype=np.float64), float(t))
                    for c, d, t in zip(colors, dirs, conf)])

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def arrays(self):
        """``(colors (K,3), directions (K,3), confidences (K,))`` as contiguous float64."""
        k = len(self.observations)
        colors = np.zeros((k, 3))
        dirs = np.zeros((k, 3))
        conf = np.zeros(k)
        for i, o in enumerate(self.observations):
            colors[i] = o.color
            dirs[i] = o.direction
            conf[i] = o.confidence
        return colors, dirs, conf


class CameraPack(NamedTuple):
    """Flat arrays describing a camera list, consumed by the numba kernels."""

    rot: np.ndarray     # (K, 3, 3) cam-to-world rotation
    org: np.ndarray     # (K, 3)
    intr: np.ndarray    # (K, 4) fx, fy, cx, cy
    wh: np.ndarray      # (K, 2) width, height
    images: np.ndarray  # (K, Hmax, Wmax, 3)


def pack_cameras(cams) -> CameraPack:
    cams = list(cams)
    k = len(cams)
    rot = np.zeros((k, 3, 3))
    org = np.zeros((k, 3))
    intr = np.zeros((k, 4))
    wh = np.zeros((k, 2), dtype=np.int64)
    hmax = max((c.height for c in cams if c.image is not None), default=0)
    wmax = max((c.width for c in cams if c.image is not None), default=0)
    images = np.zeros((k, hmax, wmax, 3))
    for i, c in enumerate(cams):
        rot[i] = c.rotation
        org[i] = c.origin
        intr[i] = (c.intrinsics[0, 0], c.intrinsics[1, 1], c.intrinsics[0, 2], c.intrinsics[1, 2])
        wh[i] = (c.width, c.height)
        if c.image is not None:
            images[i, : c.height, : c.width] = c.image.pixels
    return CameraPack(rot, org, intr, wh, images)


@njit(cache=True, nogil=True)
def _project(rot, org, intr, wh, k, x, y, z):
    """Returns (ok, u, v) for camera ``k``."""
    px = x - org[k, 0]
    py = y - org[k, 1]
    pz = z - org[k, 2]
    # world -> camera is R^T (p - o)
    xc = rot[k, 0, 0] * px + rot[k, 1, 0] * py + rot[k, 2, 0] * pz
    yc = rot[k, 0, 1] * px + rot[k, 1, 1] * py + rot[k, 2, 1] * pz
    zc = rot[k, 0, 2] * px + rot[k, 1, 2] * py + rot[k, 2, 2] * pz
    if not zc > 0.0:
        return False, 0.0, 0.0
    u = intr[k, 0] * xc / zc + intr[k, 2]
    v = intr[k, 1] * yc / zc + intr[k, 3]
    if u < 0.0 or v < 0.0 or u > wh[k, 0] - 1 or v > wh[k, 1] - 1:
        return False, 0.0, 0.0
    return True, u, v


@njit(cache=True, nogil=True)
def _bilinear(images, wh, k, u, v, out):
    w = wh[k, 0]
    h = wh[k, 1]
    u0 = min(int(np.floor(u)), max(w - 2, 0))
    v0 = min(int(np.floor(v)), max(h - 2, 0))
    a = u - u0 if w > 1 else 0.0
    b = v - v0 if h > 1 else 0.0
    u1 = min(u0 + 1, w - 1)
    v1 = min(v0 + 1, h - 1)
    for c in range(3):
        top = images[k, v0, u0, c] * (1.0 - a) + images[k, v0, u1, c] * a
        bot = images[k, v1, u0, c] * (1.0 - a) + images[k, v1, u1, c] * a
        out[c] = top * (1.0 - b) + bot * b


@njit(cache=True, nogil=True)
def _gather_point(data, res, bmin, bmax, spacing, rot, org, intr, wh, images, step,
                  x, y, z, colors, dirs, conf):
    """Fill the first ``n`` rows of the output arrays, in camera order; returns ``n``."""
    n = 0
    for k in range(rot.shape[0]):
        ok, u, v = _project(rot, org, intr, wh, k, x, y, z)
        if not ok:
            continue
        dx = org[k, 0] - x
        dy = org[k, 1] - y
        dz = org[k, 2] - z
        norm = np.sqrt(dx * dx + dy * dy + dz * dz)
        if norm == 0.0:
            continue
        _bilinear(images, wh, k, u, v, colors[n])
        dirs[n, 0] = dx / norm
        dirs[n, 1] = dy / norm
        dirs[n, 2] = dz / norm
        conf[n] = _transmittance(data, res, bmin, bmax, spacing, x, y, z,
                                 org[k, 0], org[k, 1], org[k, 2], step)
        n += 1
    return n


def project(cam: CameraModel, v):
    """Continuous pixel coordinates ``(u, v)`` of world point ``v``, or ``None``."""
    p = pack_cameras([cam])
    v = vec3(v)
    ok, u, vv = _project(p.rot, p.org, p.intr, p.wh, 0, v[0], v[1], v[2])
    return (float(u), float(vv)) if ok else None


def view_direction(cam: CameraModel, v):
    """Unit direction from point ``v`` toward the camera origin."""
    try:
        return normalize(cam.origin - vec3(v))
    except DegenerateDirectionError:
        raise DegenerateDirectionError(f"point {v} coincides with the camera origin") from None


def sample_bilinear(img: ImageBuffer, u: float, v: float):
    if not (0.0 <= u <= img.width - 1 and 0.0 <= v <= img.height - 1):
        raise ValueError(f"({u}, {v}) outside image of size {img.width}x{img.height}")
    out = np.zeros(3)
    _bilinear(img.pixels[None], np.array([[img.width, img.height]], dtype=np.int64), 0, float(u), float(v), out)
    return out


def gather_observations(v, cams, vol: DensityVolume, cfg: EvalConfig = EvalConfig()) -> ObservationSet:
    """Observations of point ``v`` from every camera it projects into."""
    cams = list(cams)
    if not cams:
        raise ValueError("need at least one camera")
    if any(c.image is None for c in cams):
        raise ValueError("every camera needs an image")
    p = pack_cameras(cams)
    v = vec3(v)
    k = len(cams)
    colors, dirs, conf = np.zeros((k, 3)), np.zeros((k, 3)), np.zeros(k)
    data, res, bmin, bmax, spacing = vol.kernel_args()
    n = _gather_point(data, res, bmin, bmax, spacing, p.rot, p.org, p.intr, p.wh, p.images,
                      cfg.resolve_step(vol), v[0], v[1], v[2], colors, dirs, conf)
    return ObservationSet.from_arrays(colors[:n], dirs[:n], conf[:n])
