"""Command-line entry point: ``imrc <command> [flags]``.

Failures print a single ``error: <kind>: <message>`` line on stderr; usage
errors exit with status 2, every other failure with status 1.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _threads
from .core import EvalConfig, ImrcError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error: usage: {self.prog}: {message}\n")
        sys.exit(2)


def _common_eval(p):
    p.add_argument("--sh-degree", type=int, default=2, help="SH degree L (default 2)")
    p.add_argument("--ray-step", type=float, default=None,
                   help="transmittance step in world units (default: half the smallest voxel edge)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: IMRC_THREADS)")


def build_parser():
    ap = _Parser(prog="imrc", description="Geometry quality of density volumes from calibrated images.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("imrc", help="mean residual color report for a volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--cameras", required=True)
    _common_eval(p)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--residual-grid", help="write per-vertex residual terms (.npz)")
    p.add_argument("--render-dir", help="write residual and depth renders for every camera")

    p = sub.add_parser("chamfer", help="best Chamfer distance over the density threshold")
    p.add_argument("--volume", required=True)
    p.add_argument("--gt", required=True, help="ground-truth point cloud (PLY)")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out")

    p = sub.add_parser("mc", help="marching-cubes mesh at a density threshold")
    p.add_argument("--volume", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ascii", action="store_true")

    p = sub.add_parser("render", help="depth or residual images")
    p.add_argument("--volume", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--mode", choices=("depth", "residual"), default="depth")
    p.add_argument("--residual-grid", help="precomputed grid for --mode residual")
    _common_eval(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="write a synthetic scene, its images, and perturbed variants")
    p.add_argument("--scene", required=True)
    p.add_argument("--resolution", type=int, default=96)
    p.add_argument("--cameras", type=int, default=24, help="camera count")
    p.add_argument("--rig", choices=("hemisphere", "sphere_ring"), default="hemisphere")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--variants", default="dilate-2,erode-2,translate-2,floaters-5",
                   help="comma-separated perturbations ('' for none)")
    p.add_argument("--samples", type=int, default=100_000, help="ground-truth surface points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="degree sweep, resolution sweep, or ordering suite")
    p.add_argument("--mode", choices=("degrees", "resolution", "ordering"), required=True)
    p.add_argument("--scene-dir", help="directory written by 'synth' (degrees, ordering)")
    p.add_argument("--scene", default="textured-sphere", help="scene kind (resolution)")
    p.add_argument("--degrees", default="0,1,2,3")
    p.add_argument("--resolutions", default="32,64,96")
    p.add_argument("--with-cd", action="store_true", help="also compare Chamfer distances")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _common_eval(p)
    p.add_argument("--out", required=True, help="output directory")
    return ap


def _config(args):
    return EvalConfig(sh_degree=args.sh_degree, ray_step=args.ray_step)


def _emit(text, out):
    from .io import write_text_atomic

    if out:
        write_text_atomic(out, text)
    else:
        sys.stdout.write(text)


def _save_gray(arr, path):
    from PIL import Image

    a = np.nan_to_num(np.asarray(arr, dtype=np.float64), nan=0.0)
    top = a.max()
    px = np.zeros(a.shape, np.uint8) if not top > 0 else np.rint(255 * a / top).astype(np.uint8)
    Image.fromarray(px, mode="L").save(path)
    np.save(Path(path).with_suffix(".npy"), arr)


def cmd_imrc(args):
    from . import io, metric

    cfg = _config(args)
    vol = io.load_volume(args.volume)
    cams = io.load_cameras(args.cameras)
    report, grid = metric.compute_mrc(vol, cams, cfg)
    _emit(report.to_json(), args.out)
    if args.residual_grid:
        io.save_residual_grid(grid, args.residual_grid)
    if args.render_dir:
        d = Path(args.render_dir)
        d.mkdir(parents=True, exist_ok=True)
        step = cfg.resolve_step(vol)
        for i, cam in enumerate(cams):
            _save_gray(metric.render_residual(grid, vol, cam, step), d / f"residual_{i:04d}.png")
            _save_gray(metric.render_depth(vol, cam, step), d / f"depth_{i:04d}.png")
    return 0


def cmd_chamfer(args):
    from . import chamfer, io

    vol = io.load_volume(args.volume)
    gt = io.load_point_cloud(args.gt)
    res = chamfer.best_cd(vol, gt, args.samples, args.lo, args.hi, args.tol, args.seed)
    _emit(json.dumps(res.to_dict(), indent=2) + "\n", args.out)
    return 0


def cmd_mc(args):
    from . import chamfer, io

    mesh = chamfer.marching_cubes(io.load_volume(args.volume), args.threshold)
    io.save_mesh(mesh, args.out, binary=not args.ascii)
    print(f"{len(mesh)} triangles -> {args.out}")
    return 0


def cmd_render(args):
    from . import io, metric

    cfg = _config(args)
    vol = io.load_volume(args.volume)
    cams = io.load_cameras(args.cameras, with_images=args.mode == "residual" and not args.residual_grid)
    step = cfg.resolve_step(vol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = None
    if args.mode == "residual":
        grid = (io.load_residual_grid(args.residual_grid) if args.residual_grid
                else metric.compute_mrc(vol, cams, cfg)[1])
    for i, cam in enumerate(cams):
        img = metric.render_depth(vol, cam, step) if grid is None else metric.render_residual(grid, vol, cam, step)
        _save_gray(img, out / f"{args.mode}_{i:04d}.png")
    return 0


def cmd_synth(args):
    from . import io, synth
    from .chamfer import PointCloud

    out = Path(args.out)
    scene = synth.make_scene(args.scene, args.resolution)
    vol = synth.bake_volume(scene, args.resolution)
    cams = synth.camera_rig(args.rig, args.cameras, args.radius, width=args.image_size, height=args.image_size)
    cams = synth.attach_images(scene, cams, scene.ramp / 2)
    io.save_volume(vol, out / "volume.json")
    io.save_cameras(cams, out / "cameras.json")
    if args.scene != "empty":
        io.save_point_cloud(PointCloud(scene.sample_surface(args.samples, args.seed)), out / "gt.ply")
    variants = [v for v in args.variants.split(",") if v]
    for name in variants:
        p = synth.Perturbation.parse(name, seed=args.seed)
        io.save_volume(synth.apply_perturbation(vol, p), out / "variants" / name / "volume.json")
    meta = {"scene": args.scene, "resolution": args.resolution, "cameras": args.cameras, "rig": args.rig,
            "radius": args.radius, "image_size": args.image_size, "seed": args.seed, "variants": variants}
    (out / "scene.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_bench(args):
    from . import bench

    cfg = _config(args)
    out = Path(args.out)
    if args.mode == "degrees":
        _need(args.scene_dir, "--scene-dir")
        rows = bench.sweep_sh_degree(args.scene_dir, [int(d) for d in args.degrees.split(",")], cfg)
    elif args.mode == "resolution":
        rows = bench.sweep_resolution(args.scene, [int(r) for r in args.resolutions.split(",")], cfg)
    else:
        _need(args.scene_dir, "--scene-dir")
        rows = bench.ordering_suite(args.scene_dir, cfg, with_cd=args.with_cd, n_samples=args.samples,
                                    seed=args.seed)
    bench.write_table(rows, out, args.mode)
    print(bench.to_markdown(rows), end="")
    return 0


def _need(value, flag):
    if not value:
        raise _UsageError(f"{flag} is required for this mode")


class _UsageError(Exception):
    pass


COMMANDS = {"imrc": cmd_imrc, "chamfer": cmd_chamfer, "mc": cmd_mc, "render": cmd_render,
            "synth": cmd_synth, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _threads.set_threads(args.threads if hasattr(args, "threads") else None)
        return COMMANDS[args.command](args)
    except _UsageError as e:
        sys.stderr.write(f"error: usage: {e}\n")
        return 2
    except (ImrcError, ValueError, OSError, KeyError) as e:
        msg = " ".join(str(e).split())
        sys.stderr.write(f"error: {type(e).__name__}: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
