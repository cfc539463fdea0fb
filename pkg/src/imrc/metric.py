"""Mean residual color over the voxel vertices, its decibel form, and diagnostic renders."""
import json
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from . import _threads  # noqa: F401
from numba import njit, prange

from .core import DegenerateFieldError, EvalConfig, MAX_SH_DEGREE, linear_index
from .fields import DensityVolume, _ray_box, _trilinear
from .observation import CameraModel, _gather_point, pack_cameras
from .sh import _effective_degree, _estimate_step, _sh_matrix

STATUS_EVALUATED = 0
STATUS_LOW_ALPHA = 1
STATUS_NO_OBSERVATION = 2

REPORT_SCHEMA = 1
BACKGROUND_WEIGHT = 1e-4


@dataclass(frozen=True, eq=False)
class ResidualGrid:
    """Per-vertex numerator and denominator terms of the mean residual color."""

    resolution: Tuple[int, int, int]
    numerator: np.ndarray
    denominator: np.ndarray

    def ratio(self):
        """Per-vertex weighted mean squared residual; 0 where the weight is 0."""
        out = np.zeros_like(self.numerator)
        m = self.denominator > 0
        out[m] = self.numerator[m] / self.denominator[m]
        return out


@dataclass(frozen=True)
class MetricReport:
    mrc: float
    imrc_db: float
    sh_degree: int
    resolution: Tuple[int, int, int]
    voxels_evaluated: int
    voxels_skipped_low_alpha: int
    voxels_skipped_no_observation: int
    ray_step: float

    @property
    def imrc_infinite(self):
        return math.isinf(self.imrc_db)

    def to_json(self) -> str:
        """Deterministic JSON text: fixed field order, floats with 17 significant digits."""
        def num(x):
            return "null" if not math.isfinite(x) else format(x, ".17g")

        fields = [
            ("schema", str(REPORT_SCHEMA)),
            ("mrc", num(self.mrc)),
            ("imrc_db", num(self.imrc_db)),
            ("imrc_infinite", json.dumps(self.imrc_infinite)),
            ("sh_degree", str(int(self.sh_degree))),
            ("resolution", json.dumps([int(n) for n in self.resolution])),
            ("ray_step", num(self.ray_step)),
            ("voxels_evaluated", str(int(self.voxels_evaluated))),
            ("voxels_skipped_low_alpha", str(int(self.voxels_skipped_low_alpha))),
            ("voxels_skipped_no_observation", str(int(self.voxels_skipped_no_observation))),
        ]
        body = ",\n".join(f'  "{k}": {v}' for k, v in fields)
        return "{\n" + body + "\n}\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        imrc_db = math.inf if d.get("imrc_infinite") else float(d["imrc_db"])
        return cls(float(d["mrc"]), imrc_db, int(d["sh_degree"]), tuple(d["resolution"]),
                   int(d["voxels_evaluated"]), int(d["voxels_skipped_low_alpha"]),
                   int(d["voxels_skipped_no_observation"]), float(d["ray_step"]))


def imrc(mrc: float) -> float:
    """``-10 log10(mrc)``; ``inf`` for a zero residual."""
    if mrc < 0 or math.isnan(mrc):
        raise ValueError(f"mean residual color must be >= 0, got {mrc}")
    if mrc == 0:
        return math.inf
    return -10.0 * math.log10(mrc) + 0.0  # no negative zero at mrc == 1


def mrc_from_terms(numerator, denominator):
    """``sum(numerator) / sum(denominator)`` with exactly rounded sums in linear order."""
    den = math.fsum(np.asarray(denominator, dtype=np.float64).ravel())
    if not den > 0:
        raise DegenerateFieldError("total weight is zero; the density field is empty or unobserved")
    return math.fsum(np.asarray(numerator, dtype=np.float64).ravel()) / den


def vertex_alpha(vol: DensityVolume):
    """Per-vertex opacity ``1 - exp(-sigma * delta)`` with delta = mean half voxel edge."""
    delta = 0.5 * float(np.mean(vol.spacing))
    return -np.expm1(-vol.data.astype(np.float64) * delta)


@njit(parallel=True, cache=True)
def _vertex_terms(vertex_ids, alphas, data, res, bmin, bmax, spacing, rot, org, intr, wh, images,
                  step, max_degree, min_conf, num, den, status):
    """Fill ``num[i, L]`` for every degree ``L <= max_degree`` and ``den[i]``.

    One sequential fit up to ``max_degree`` serves all lower degrees, since
    the estimator visits coefficients in a fixed order.
    """
    n_cams = rot.shape[0]
    nx = res[0]
    ny = res[1]
    for i in prange(vertex_ids.shape[0]):
        lin = vertex_ids[i]
        ix = lin % nx
        iy = (lin // nx) % ny
        iz = lin // (nx * ny)
        x = bmin[0] + ix * spacing[0]
        y = bmin[1] + iy * spacing[1]
        z = bmin[2] + iz * spacing[2]
        colors = np.zeros((n_cams, 3))
        dirs = np.zeros((n_cams, 3))
        conf = np.zeros(n_cams)
        k = _gather_point(data, res, bmin, bmax, spacing, rot, org, intr, wh, images, step,
                          x, y, z, colors, dirs, conf)
        conf_k = conf[:k]
        wsum = 0.0
        for j in range(k):
            wsum += conf_k[j]
        eff = _effective_degree(conf_k, max_degree, min_conf)
        if not wsum > min_conf or eff < 0:
            status[i] = 2
            continue
        status[i] = 0
        basis = _sh_matrix(dirs[:k], eff)
        resid = colors[:k].copy()
        coeffs = np.zeros(((eff + 1) * (eff + 1), 3))
        a = alphas[i]
        msq = 0.0
        for l in range(max_degree + 1):
            if l <= eff:
                for jj in range(l * l, (l + 1) * (l + 1)):
                    _estimate_step(resid, basis, conf_k, wsum, jj, coeffs)
                msq = 0.0
                for j in range(k):
                    msq += conf_k[j] * (resid[j, 0] ** 2 + resid[j, 1] ** 2 + resid[j, 2] ** 2) / 3.0
            num[i, l] = a * msq
        den[i] = a * wsum


def _run_terms(vol, cams, cfg, max_degree, vertex_ids=None):
    cams = list(cams)
    if not cams:
        raise ValueError("need at least one camera")
    if any(c.image is None for c in cams):
        raise ValueError("every camera needs an image")
    alpha = vertex_alpha(vol)
    if vertex_ids is None:
        vertex_ids = np.flatnonzero(alpha > cfg.skip_alpha_eps)
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    p = pack_cameras(cams)
    data, res, bmin, bmax, spacing = vol.kernel_args()
    n = vertex_ids.shape[0]
    num = np.zeros((n, max_degree + 1))
    den = np.zeros(n)
    status = np.zeros(n, dtype=np.int8)
    _vertex_terms(vertex_ids, alpha[vertex_ids], data, res, bmin, bmax, spacing, p.rot, p.org, p.intr,
                  p.wh, p.images, cfg.resolve_step(vol), max_degree, cfg.min_confidence_eps,
                  num, den, status)
    return vertex_ids, alpha, num, den, status


def voxel_residual_terms(v_idx, vol: DensityVolume, cams: Sequence[CameraModel],
                         cfg: EvalConfig = EvalConfig()):
    """``(numerator, denominator)`` contributed by one vertex.

    Returns ``(0, 0)`` for a vertex below the opacity threshold and for a
    vertex that no camera sees with confidence.
    """
    lin = linear_index(v_idx, vol.resolution)
    if vertex_alpha(vol)[lin] <= cfg.skip_alpha_eps:
        return 0.0, 0.0
    _, _, num, den, status = _run_terms(vol, cams, cfg, cfg.sh_degree, [lin])
    if status[0] == STATUS_NO_OBSERVATION:
        return 0.0, 0.0
    return float(num[0, cfg.sh_degree]), float(den[0])


def compute_mrc_degrees(vol: DensityVolume, cams: Sequence[CameraModel], degrees: Sequence[int],
                        cfg: EvalConfig = EvalConfig()):
    """Reports and residual grids for several SH degrees from one observation pass."""
    degrees = [int(d) for d in degrees]
    if not degrees or min(degrees) < 0 or max(degrees) > MAX_SH_DEGREE:
        raise ValueError(f"degrees must lie in [0, {MAX_SH_DEGREE}], got {degrees}")
    ids, alpha, num, den, status = _run_terms(vol, cams, cfg, max(degrees))
    total = vol.n_vertices
    n_eval = int(np.count_nonzero(status == STATUS_EVALUATED))
    n_noobs = int(np.count_nonzero(status == STATUS_NO_OBSERVATION))
    n_low = total - ids.shape[0]
    den_grid = np.zeros(total)
    ok = status == STATUS_EVALUATED
    den_grid[ids[ok]] = den[ok]
    if not math.fsum(den_grid) > 0:
        raise DegenerateFieldError("total weight is zero; the density field is empty or unobserved")
    step = cfg.resolve_step(vol)
    out = []
    for d in degrees:
        num_grid = np.zeros(total)
        num_grid[ids[ok]] = num[ok, d]
        mrc = mrc_from_terms(num_grid, den_grid)
        report = MetricReport(mrc, imrc(mrc), d, vol.resolution, n_eval, n_low, n_noobs, step)
        out.append((report, ResidualGrid(vol.resolution, num_grid, den_grid.copy())))
    return out


def compute_mrc(vol: DensityVolume, cams: Sequence[CameraModel], cfg: EvalConfig = EvalConfig()):
    """Evaluate every vertex and reduce in linear-index order.

    Returns ``(MetricReport, ResidualGrid)``.
    """
    return compute_mrc_degrees(vol, cams, [cfg.sh_degree], cfg)[0]


def pixel_rays(cam: CameraModel):
    """Unit world directions through every pixel center, shape ``(H*W, 3)``, and
    the camera-space z component of each direction."""
    k = cam.intrinsics
    u, v = np.meshgrid(np.arange(cam.width, dtype=np.float64), np.arange(cam.height, dtype=np.float64))
    d_cam = np.stack([(u - k[0, 2]) / k[0, 0], (v - k[1, 2]) / k[1, 1], np.ones_like(u)], axis=-1)
    d_cam = d_cam.reshape(-1, 3)
    norm = np.linalg.norm(d_cam, axis=1)
    d_cam /= norm[:, None]
    d_world = d_cam @ cam.rotation.T
    return np.ascontiguousarray(d_world), d_cam[:, 2].copy()


@njit(parallel=True, cache=True)
def _render_volume(data, res, bmin, bmax, spacing, field, use_field, o, dirs, zfac, step, out, wsum):
    for p in prange(dirs.shape[0]):
        dx = dirs[p, 0]
        dy = dirs[p, 1]
        dz = dirs[p, 2]
        t0, t1 = _ray_box(o[0], o[1], o[2], dx, dy, dz, bmin, bmax)
        t0 = max(t0, 0.0)
        acc = 0.0
        ws = 0.0
        if t0 <= t1:
            n = int(np.floor((t1 - t0) / step + 1e-9)) + 1
            tau = 0.0
            prev = t0
            for i in range(n):
                t = t0 + i * step
                x = o[0] + t * dx
                y = o[1] + t * dy
                z = o[2] + t * dz
                s = _trilinear(data, res, bmin, spacing, x, y, z)
                delta = t - prev if i > 0 else 0.0
                w = np.exp(-tau) * (1.0 - np.exp(-s * delta))
                if use_field:
                    acc += w * _trilinear(field, res, bmin, spacing, x, y, z)
                else:
                    acc += w * t * zfac[p]
                ws += w
                tau += s * delta
                prev = t
                if tau > 750.0:
                    break
        out[p] = acc
        wsum[p] = ws


def _render(vol, cam, step, field):
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    dirs, zfac = pixel_rays(cam)
    out = np.zeros(dirs.shape[0])
    wsum = np.zeros(dirs.shape[0])
    data, res, bmin, bmax, spacing = vol.kernel_args()
    use_field = field is not None
    field = np.ascontiguousarray(field, dtype=np.float64) if use_field else np.zeros(1)
    _render_volume(data, res, bmin, bmax, spacing, field, use_field, cam.origin, dirs, zfac,
                   float(step), out, wsum)
    return out.reshape(cam.height, cam.width), wsum.reshape(cam.height, cam.width)


def render_depth(vol: DensityVolume, cam: CameraModel, step: float):
    """Expected camera-space depth per pixel; background pixels are NaN."""
    depth, wsum = _render(vol, cam, step, None)
    depth[wsum < BACKGROUND_WEIGHT] = np.nan
    return depth


def render_residual(grid: ResidualGrid, vol: DensityVolume, cam: CameraModel, step: float):
    """Ray-accumulated per-vertex residual ratio, non-negative."""
    if tuple(grid.resolution) != tuple(vol.resolution):
        raise ValueError("residual grid resolution does not match the volume")
    img, _ = _render(vol, cam, step, grid.ratio())
    return np.maximum(img, 0.0)
