"""On-disk formats: volume header + raw float32 data, camera bundles with PNG
images, PLY meshes and point clouds, and residual-grid dumps."""
import json
import logging
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .chamfer import PointCloud, TriangleMesh
from .core import LoadError
from .fields import DensityVolume
from .metric import ResidualGrid
from .observation import CameraModel, ImageBuffer

log = logging.getLogger(__name__)

ROTATION_TOL = 1e-4


def save_volume(vol: DensityVolume, header_path, data_name=None):
    """Write ``header_path`` (JSON) and the raw little-endian float32 data beside it."""
    header_path = Path(header_path)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    data_name = data_name or header_path.stem + ".raw"
    vol.data.astype("<f4").tofile(header_path.parent / data_name)
    header = {"resolution": list(vol.resolution), "bbox_min": vol.bbox_min.tolist(),
              "bbox_max": vol.bbox_max.tolist(), "data": data_name,
              "order": "x-fastest", "endianness": "little"}
    header_path.write_text(json.dumps(header, indent=2) + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise LoadError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise LoadError(f"malformed JSON in {path}: {e}") from None


def load_volume_with_warnings(header_path):
    """Returns ``(volume, clamped_count)``."""
    header_path = Path(header_path)
    h = _read_json(header_path)
    missing = [k for k in ("resolution", "bbox_min", "bbox_max", "data") if k not in h]
    if missing:
        raise LoadError(f"volume header {header_path} lacks {', '.join(missing)}")
    if h.get("order", "x-fastest") != "x-fastest":
        raise LoadError(f"unsupported order {h['order']!r}")
    if h.get("endianness", "little") != "little":
        raise LoadError(f"unsupported endianness {h['endianness']!r}")
    res = tuple(int(n) for n in h["resolution"])
    raw = header_path.parent / h["data"]
    if not raw.is_file():
        raise LoadError(f"raw density file not found: {raw}")
    expected = 4 * res[0] * res[1] * res[2]
    actual = raw.stat().st_size
    if actual != expected:
        raise LoadError(f"length mismatch: {raw} has {actual} bytes, expected {expected}")
    data = np.fromfile(raw, dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise LoadError(f"non-finite density at index {int(np.flatnonzero(~np.isfinite(data))[0])}")
    neg = int(np.count_nonzero(data < 0))
    if neg:
        log.warning("clamped %d negative densities to 0 in %s", neg, raw)
        data = np.maximum(data, 0)
    try:
        return DensityVolume(res, h["bbox_min"], h["bbox_max"], data), neg
    except ValueError as e:
        raise LoadError(str(e)) from None


def load_volume(header_path) -> DensityVolume:
    return load_volume_with_warnings(header_path)[0]


def save_image(img: ImageBuffer, path):
    px = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(px, mode="RGB").save(path)


def load_image(path) -> ImageBuffer:
    try:
        with Image.open(path) as im:
            px = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise LoadError(f"image not found: {path}") from None
    except OSError as e:
        raise LoadError(f"cannot decode image {path}: {e}") from None
    return ImageBuffer(px.shape[1], px.shape[0], px)


def _orthonormalize(m, tol):
    """Snap a nearly orthonormal rotation block (within ``tol``) to the nearest rotation."""
    rot = m[:3, :3]
    if not np.allclose(rot.T @ rot, np.eye(3), atol=tol) or np.linalg.det(rot) < 0:
        raise LoadError("cam_to_world rotation is not orthonormal")
    if np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
        return m
    u, _, vt = np.linalg.svd(rot)
    m = m.copy()
    m[:3, :3] = u @ vt
    return m


def save_cameras(cams, bundle_path, image_dir="images"):
    """Write a bundle JSON and one PNG per camera that carries an image."""
    bundle_path = Path(bundle_path)
    bundle_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, cam in enumerate(cams):
        e = {"id": i, "width": cam.width, "height": cam.height,
             "intrinsics": cam.intrinsics.tolist(), "cam_to_world": cam.cam_to_world.tolist()}
        if cam.image is not None:
            rel = f"{image_dir}/{i:04d}.png"
            (bundle_path.parent / image_dir).mkdir(parents=True, exist_ok=True)
            save_image(cam.image, bundle_path.parent / rel)
            e["image"] = rel
        entries.append(e)
    bundle_path.write_text(json.dumps({"cameras": entries}, indent=2) + "\n")


def load_cameras(bundle_path, with_images=True):
    bundle_path = Path(bundle_path)
    doc = _read_json(bundle_path)
    entries = doc["cameras"] if isinstance(doc, dict) and "cameras" in doc else doc
    if not isinstance(entries, list):
        raise LoadError(f"{bundle_path}: expected a list of cameras")
    cams = []
    for i, e in enumerate(entries):
        name = e.get("id", i)
        try:
            w, h = int(e["width"]), int(e["height"])
            k = np.asarray(e["intrinsics"], dtype=np.float64).reshape(3, 3)
            m = np.asarray(e["cam_to_world"], dtype=np.float64).reshape(4, 4)
        except (KeyError, ValueError, TypeError) as err:
            raise LoadError(f"camera {name}: malformed entry ({err})") from None
        try:
            m = _orthonormalize(m, ROTATION_TOL)
        except LoadError:
            raise LoadError(f"camera {name}: cam_to_world rotation is not orthonormal") from None
        img = None
        if with_images:
            if "image" not in e:
                raise LoadError(f"camera {name}: no image path")
            img = load_image(bundle_path.parent / e["image"])
            if (img.width, img.height) != (w, h):
                raise LoadError(f"camera {name}: image is {img.width}x{img.height}, declared {w}x{h}")
        try:
            cams.append(CameraModel(w, h, k, m, img))
        except ValueError as err:
            raise LoadError(f"camera {name}: {err}") from None
    return cams


def save_ply(path, points, triangles=None, binary=True):
    """Vertices as float32 x,y,z; faces as uchar count + int32 indices."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3).astype("<f4")
    tris = None if triangles is None else np.asarray(triangles).reshape(-1, 3).astype("<i4")
    fmt = "binary_little_endian" if binary else "ascii"
    head = ["ply", f"format {fmt} 1.0", f"element vertex {len(pts)}",
            "property float x", "property float y", "property float z"]
    if tris is not None:
        head += [f"element face {len(tris)}", "property list uchar int vertex_indices"]
    head.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(head) + "\n").encode("ascii"))
        if binary:
            f.write(pts.tobytes())
            if tris is not None:
                rec = np.zeros(len(tris), dtype=[("n", "u1"), ("i", "<i4", (3,))])
                rec["n"] = 3
                rec["i"] = tris
                f.write(rec.tobytes())
        else:
            for p in pts:
                f.write(" ".join(repr(float(c)) for c in p).encode("ascii") + b"\n")
            if tris is not None:
                for t in tris:
                    f.write(f"3 {t[0]} {t[1]} {t[2]}\n".encode("ascii"))


_PLY_TYPES = {"char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1", "short": "<i2", "int16": "<i2",
              "ushort": "<u2", "uint16": "<u2", "int": "<i4", "int32": "<i4", "uint": "<u4",
              "uint32": "<u4", "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}


def _parse_ply_header(f, path):
    if f.readline().strip() != b"ply":
        raise LoadError(f"{path}: not a PLY file")
    fmt = None
    elements = []
    while True:
        line = f.readline()
        if not line:
            raise LoadError(f"{path}: unterminated PLY header")
        tok = line.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if tok[1] == "list":
                elements[-1][2].append((tok[4], "list", tok[2], tok[3]))
            else:
                elements[-1][2].append((tok[2], tok[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise LoadError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def load_ply(path):
    """Returns ``(points (N,3) float64, triangles (T,3) int64 or None)``."""
    try:
        f = open(path, "rb")
    except FileNotFoundError:
        raise LoadError(f"PLY file not found: {path}") from None
    with f:
        fmt, elements = _parse_ply_header(f, path)
        body = f.read()
    points = None
    tris = None
    if fmt == "ascii":
        lines = iter(body.decode("ascii").split("\n"))
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                vals = next(lines).split()
                rows.append(vals)
            if name == "vertex":
                names = [p[0] for p in props]
                arr = np.array([[float(v) for v in r[: len(names)]] for r in rows]).reshape(-1, len(names))
                points = np.stack([arr[:, names.index(c)] for c in "xyz"], axis=1).astype(np.float32)
            elif name == "face":
                tris = np.array([[int(v) for v in r[1:4]] for r in rows if int(r[0]) == 3],
                                dtype=np.int64).reshape(-1, 3)
    else:
        off = 0
        for name, count, props in elements:
            if any(p[1] == "list" for p in props):
                if len(props) != 1:
                    raise LoadError(f"{path}: mixed list/scalar properties are not supported")
                _, _, ct, it = props[0]
                cdt, idt = np.dtype(_PLY_TYPES[ct]), np.dtype(_PLY_TYPES[it])
                tri_dt = np.dtype([("n", cdt), ("i", idt, (3,))])
                if len(body) - off >= count * tri_dt.itemsize:
                    rec = np.frombuffer(body, tri_dt, count, off)
                    if np.all(rec["n"] == 3):
                        off += count * tri_dt.itemsize
                        if name == "face":
                            tris = rec["i"].astype(np.int64)
                        continue
                out = []
                for _ in range(count):
                    n = int(np.frombuffer(body, cdt, 1, off)[0])
                    off += cdt.itemsize
                    out.append(np.frombuffer(body, idt, n, off))
                    off += n * idt.itemsize
                if name == "face":
                    tris = np.array([r[:3] for r in out if len(r) == 3], dtype=np.int64).reshape(-1, 3)
            else:
                dt = np.dtype([(p[0], _PLY_TYPES[p[1]]) for p in props])
                rec = np.frombuffer(body, dt, count, off)
                off += count * dt.itemsize
                if name == "vertex":
                    points = np.stack([rec[c] for c in "xyz"], axis=1)
    if points is None:
        raise LoadError(f"{path}: no vertex element")
    return points.astype(np.float64), tris


def save_point_cloud(cloud: PointCloud, path, binary=True):
    save_ply(path, cloud.points, None, binary)


def load_point_cloud(path) -> PointCloud:
    return PointCloud(load_ply(path)[0])


def save_mesh(mesh: TriangleMesh, path, binary=True):
    save_ply(path, mesh.vertices, mesh.triangles, binary)


def load_mesh(path) -> TriangleMesh:
    pts, tris = load_ply(path)
    return TriangleMesh(pts, np.zeros((0, 3), dtype=np.int64) if tris is None else tris)


def save_residual_grid(grid: ResidualGrid, path):
    np.savez_compressed(path, resolution=np.array(grid.resolution), numerator=grid.numerator,
                        denominator=grid.denominator)


def load_residual_grid(path) -> ResidualGrid:
    with np.load(path) as z:
        return ResidualGrid(tuple(int(n) for n in z["resolution"]), z["numerator"], z["denominator"])


def write_text_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
