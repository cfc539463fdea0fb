"""Chamfer-distance baseline: iso-surface extraction, surface sampling, and a
golden-section search over the density threshold."""
import math
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .core import NoSurfaceError, SearchError
from .fields import DensityVolume

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) world coordinates
    triangles: np.ndarray  # (T, 3) vertex indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __len__(self):
        return self.triangles.shape[0]

    def areas(self):
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 3))

    def __len__(self):
        return self.points.shape[0]


@dataclass
class CDSearchResult:
    best_threshold: float
    best_cd: float
    evaluations: List[Tuple[float, float]] = field(default_factory=list)
    bracket: Tuple[float, float] = (0.0, 0.0)

    def to_dict(self):
        return {"best_threshold": self.best_threshold, "best_cd": self.best_cd,
                "bracket": list(self.bracket), "bracket_width": self.bracket[1] - self.bracket[0],
                "evaluations": [list(e) for e in self.evaluations]}


def marching_cubes(vol: DensityVolume, threshold: float) -> TriangleMesh:
    """Iso-surface at ``density == threshold``; empty when the level is not crossed."""
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    grid = vol.to_array()
    empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    if not grid.min() < threshold < grid.max():
        return empty
    verts, faces, _, _ = measure.marching_cubes(grid.astype(np.float64), level=float(threshold),
                                                spacing=tuple(vol.spacing), allow_degenerate=False)
    mesh = TriangleMesh(verts + vol.bbox_min, faces)
    keep = mesh.areas() > 0
    return TriangleMesh(mesh.vertices, mesh.triangles[keep])


def sample_mesh_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> PointCloud:
    """``n`` points drawn area-proportionally, uniform within each triangle."""
    if len(mesh) == 0:
        raise ValueError("cannot sample an empty mesh")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    areas = mesh.areas()
    tri = rng.choice(len(mesh), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return PointCloud(pts)


def nearest_distances(query, ref):
    """Distance from each query point to its nearest reference point.

    The tree proposes a few candidates; distances are recomputed as
    ``|q - r|`` so they match a brute-force scan bit for bit.
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1, 3)
    k = min(4, ref.shape[0])
    _, idx = cKDTree(ref).query(query, k=k)
    idx = idx.reshape(query.shape[0], k)
    d = np.linalg.norm(query[:, None, :] - ref[idx], axis=2)
    return d.min(axis=1)


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Half the sum of the two mean nearest-neighbor distances."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    return 0.5 * (float(np.mean(nearest_distances(a.points, b.points)))
                  + float(np.mean(nearest_distances(b.points, a.points))))


def _golden(f, lo, hi, tol):
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    evals = []

    def g(x):
        y = f(x)
        if not math.isfinite(y):
            raise SearchError(f"objective is not finite at {x!r}", threshold=x)
        evals.append((x, y))
        return y

    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
    x, y = min(evals, key=lambda e: e[1])
    return x, y, evals, (a, b)


def golden_section_search(f: Callable[[float], float], lo: float, hi: float, tol: float):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` until the bracket is ``<= tol``.

    Returns ``(argmin, min)`` over all evaluated points.
    """
    x, y, _, _ = _golden(f, lo, hi, tol)
    return x, y


def best_cd(vol: DensityVolume, gt: PointCloud, n_samples: int = 100_000, lo=None, hi=None,
            tol: float = 1e-3, seed: int = 0) -> CDSearchResult:
    """Search the marching-cubes threshold that minimizes Chamfer distance to ``gt``."""
    if len(gt) == 0:
        raise ValueError("ground-truth cloud is empty")
    top = float(vol.data.max())
    if not top > 0:
        raise NoSurfaceError("density volume is empty")
    lo = 1e-3 * top if lo is None else float(lo)
    hi = (1 - 1e-3) * top if hi is None else float(hi)
    sentinel = 10.0 * float(np.linalg.norm(vol.bbox_max - vol.bbox_min))

    def cd_at(threshold):
        mesh = marching_cubes(vol, threshold)
        if len(mesh) == 0:
            return sentinel
        return chamfer_distance(sample_mesh_surface(mesh, n_samples, seed), gt)

    x, y, evals, bracket = _golden(cd_at, lo, hi, tol)
    if all(e[1] == sentinel for e in evals):
        raise NoSurfaceError(f"no threshold in [{lo}, {hi}] produced a surface")
    return CDSearchResult(x, y, evals, bracket)
