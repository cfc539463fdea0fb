"""Experiment drivers: SH-degree sweep, resolution sweep, and the
perturbation ordering suite. Results are lists of flat dict rows."""
import json
import time
from pathlib import Path

from .core import EvalConfig
from .metric import compute_mrc_degrees

DEFAULT_VARIANTS = ("dilate-2", "erode-2", "translate-2", "floaters-5")


def load_scene_dir(scene_dir):
    """``(gt_volume, cameras, {variant: volume}, gt_cloud or None)`` from a ``synth`` output dir."""
    from . import io

    d = Path(scene_dir)
    vol = io.load_volume(d / "volume.json")
    cams = io.load_cameras(d / "cameras.json")
    variants = {}
    vdir = d / "variants"
    if vdir.is_dir():
        for sub in sorted(vdir.iterdir()):
            if (sub / "volume.json").is_file():
                variants[sub.name] = io.load_volume(sub / "volume.json")
    gt = io.load_point_cloud(d / "gt.ply") if (d / "gt.ply").is_file() else None
    return vol, cams, variants, gt


def degree_table(volumes, cams, degrees, cfg=EvalConfig()):
    """IMRC for every named volume at every degree; one observation pass per volume."""
    rows = []
    for name, vol in volumes.items():
        for report, _ in compute_mrc_degrees(vol, cams, degrees, cfg):
            rows.append({"volume": name, "degree": report.sh_degree, "imrc_db": report.imrc_db,
                         "mrc": report.mrc})
    return rows


def sweep_sh_degree(scene_dir, degrees, cfg=EvalConfig(), include_variants=True):
    vol, cams, variants, _ = load_scene_dir(scene_dir)
    volumes = {"gt": vol}
    if include_variants:
        volumes.update(variants)
    return degree_table(volumes, cams, degrees, cfg)


def is_strictly_increasing(values):
    return all(b > a for a, b in zip(values, values[1:]))


def rankings_by_degree(rows):
    """``{degree: [volume names sorted by IMRC, best first]}``."""
    out = {}
    for d in sorted({r["degree"] for r in rows}):
        sel = [r for r in rows if r["degree"] == d]
        out[d] = [r["volume"] for r in sorted(sel, key=lambda r: -r["imrc_db"])]
    return out


def scene_volumes(kind, resolution, variants=DEFAULT_VARIANTS, seed=0):
    from . import synth

    scene = synth.make_scene(kind, resolution)
    vol = synth.bake_volume(scene, resolution)
    vols = {"gt": vol}
    for name in variants:
        vols[name] = synth.apply_perturbation(vol, synth.Perturbation.parse(name, seed=seed))
    return scene, vols


def scene_cameras(scene, count=24, rig="hemisphere", radius=3.0, size=128):
    from . import synth

    cams = synth.camera_rig(rig, count, radius, width=size, height=size)
    return synth.attach_images(scene, cams, scene.ramp / 2)


def sweep_resolution(kind, resolutions, cfg=EvalConfig(), variants=DEFAULT_VARIANTS, n_cameras=24,
                     rig="hemisphere", seed=0, timing=False):
    """Re-bake the scene at each resolution.

    ``timing`` adds wall-clock seconds of the metric alone; off by default so
    outputs stay byte-identical across runs.
    """
    rows = []
    for res in resolutions:
        scene, vols = scene_volumes(kind, res, variants, seed)
        cams = scene_cameras(scene, n_cameras, rig)
        for name, vol in vols.items():
            t = time.perf_counter()
            report, _ = compute_mrc_degrees(vol, cams, [cfg.sh_degree], cfg)[0]
            row = {"resolution": res, "volume": name, "imrc_db": report.imrc_db, "n_vertices": vol.n_vertices}
            if timing:
                row["seconds"] = time.perf_counter() - t
            rows.append(row)
    return rows


def compare(gt_db, variant_db):
    """``"pass"`` when the ground truth scores higher, ``"tie"`` when equal, else ``"fail"``."""
    if gt_db == variant_db:
        return "tie"
    return "pass" if gt_db > variant_db else "fail"


def ordering_rows(volumes, cams, cfg=EvalConfig(), gt_cloud=None, n_samples=100_000, seed=0):
    """Pairwise ground-truth-vs-variant comparisons; ``volumes`` must contain ``"gt"``."""
    from .metric import compute_mrc

    db = {name: compute_mrc(vol, cams, cfg)[0].imrc_db for name, vol in volumes.items()}
    cd = {}
    if gt_cloud is not None:
        from .chamfer import best_cd

        cd = {name: best_cd(vol, gt_cloud, n_samples, seed=seed).best_cd for name, vol in volumes.items()}
    rows = []
    for name in volumes:
        if name == "gt":
            continue
        row = {"variant": name, "imrc_gt": db["gt"], "imrc_variant": db[name],
               "drop_db": db["gt"] - db[name], "imrc": compare(db["gt"], db[name])}
        if cd:
            row.update(cd_gt=cd["gt"], cd_variant=cd[name], cd=compare(cd[name], cd["gt"]))
        rows.append(row)
    return rows


def ordering_suite(scene_dir, cfg=EvalConfig(), with_cd=False, n_samples=100_000, seed=0):
    vol, cams, variants, gt = load_scene_dir(scene_dir)
    if len(variants) < 3:
        raise ValueError(f"{scene_dir}: need at least 3 perturbed variants, found {len(variants)}")
    return ordering_rows({"gt": vol, **variants}, cams, cfg, gt if with_cd else None, n_samples, seed)


def to_markdown(rows):
    if not rows:
        return ""
    keys = list(rows[0])

    def cell(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    lines = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
    lines += ["| " + " | ".join(cell(r.get(k, "")) for k in keys) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def write_table(rows, out_dir, name):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(json.dumps(rows, indent=2) + "\n")
    (out / f"{name}.md").write_text(to_markdown(rows))
