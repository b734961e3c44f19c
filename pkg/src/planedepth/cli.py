"""Command-line entry point: ``planedepth <subcommand> ...``.

Exit codes: 0 success, 1 input/usage error, 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import completion, geometry, io, metrics, plane_seg, refine, synth
from .config import PipelineConfig
from .errors import ParameterError, PlaneDepthError
from .types import DepthMap, DistanceMap, UncertaintyMap


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config(args) -> PipelineConfig:
    return PipelineConfig.load(args.config) if args.config else PipelineConfig()


def _intrinsics(args, cfg: PipelineConfig):
    src = args.intrinsics or cfg.intrinsics
    if not src:
        raise ParameterError("--intrinsics is required (JSON path or preset: nyu, kitti)")
    return io.load_intrinsics(src)


def _scale(args, cfg):
    return args.depth_scale if args.depth_scale is not None else cfg.formats.depth_scale


def _read_depth(path, args, cfg) -> DepthMap:
    return io.read_map(path, DepthMap, depth_scale=_scale(args, cfg))


def _write(path, m, args, cfg):
    io.write_map(path, m, depth_scale=_scale(args, cfg), little_endian=cfg.formats.pfm_little_endian)


def _write_normal(path, N, cfg):
    io.write_normal(path, N, little_endian=cfg.formats.pfm_little_endian)


def _dump(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    if args.scene:
        spec = synth.PlanarSceneSpec.load(args.scene)
    else:
        if args.planes is None:
            raise ParameterError("give --scene or --planes")
        K = io.load_intrinsics(args.intrinsics) if args.intrinsics else synth.default_intrinsics()
        spec = synth.random_scene_spec(args.seed or 0, args.planes, K)
    if args.noise is not None or args.seed is not None:
        spec = synth.PlanarSceneSpec(spec.planes, spec.K,
                                     spec.noise_sigma if args.noise is None else args.noise,
                                     spec.seed if args.seed is None else args.seed)
    scene = synth.generate_planar_scene(spec, cfg.segmentation.min_area)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "png" if args.format == "png16" else "pfm"
    _write(out / f"depth.{ext}", scene.depth, args, cfg)
    _write_normal(out / "normal.pfm", scene.normal, cfg)
    _write(out / "distance.pfm", scene.distance, args, cfg)
    io.write_labels(out / "labels.png", scene.labels)
    io.save_intrinsics(out / "intrinsics.json", spec.K)
    spec.save(out / "scene.json")


def cmd_derive(args, cfg):
    K = _intrinsics(args, cfg)
    depth = _read_depth(args.depth, args, cfg)
    if args.sparse:
        N, dist = completion.sparse_nd_from_sparse_depth(
            depth, K, _pick(args.window, cfg.geometry.sparse_window))
    else:
        N = geometry.normals_from_depth(depth, K, _pick(args.window, cfg.geometry.window))
        dist = geometry.distance_from_depth_normal(depth, N, K)
    _write_normal(args.out_normal, N, cfg)
    _write(args.out_distance, dist, args, cfg)


def cmd_convert(args, cfg):
    K = _intrinsics(args, cfg)
    N = io.read_normal(args.normal)
    dist = io.read_map(args.distance, DistanceMap)
    _write(args.out, geometry.depth_from_normal_distance(N, dist, K), args, cfg)


def cmd_segment(args, cfg):
    sc = cfg.segmentation
    N = io.read_normal(args.normal)
    dist = io.read_map(args.distance, DistanceMap)
    seg = plane_seg.segment_planes(N, dist, _pick(args.k, sc.k), _pick(args.min_size, sc.min_size),
                                   _pick(args.min_area, sc.min_area))
    io.write_labels(args.out, seg)
    if args.out_mask:
        io.write_png16(args.out_mask, (seg.planar_mask * 65535).astype(np.uint16))
    print(json.dumps({"segments": seg.num_segments,
                      "planar_segments": int(np.sum(seg.segment_areas > seg.min_area))}))


def _pick(value, default):
    return default if value is None else value


def _spn_cfg(args, cfg) -> completion.SpnConfig:
    s = cfg.spn
    return completion.SpnConfig(alpha=_pick(args.alpha, s.alpha), sigma=_pick(args.sigma, s.sigma),
                                iterations=_pick(args.iterations, s.iterations),
                                offsets=tuple(tuple(o) for o in s.offsets))


def cmd_complete(args, cfg):
    K = _intrinsics(args, cfg)
    depth = _read_depth(args.depth, args, cfg)
    seed = _pick(args.seed, cfg.sampling.seed)
    if args.normal and args.distance:
        N = io.read_normal(args.normal)
        dist = io.read_map(args.distance, DistanceMap)
        n = _pick(args.samples, cfg.sampling.n)
        samples = completion.sample_sparse(depth, N, dist, n, seed)
    else:
        if args.samples is not None:
            picked = np.zeros(depth.shape[0] * depth.shape[1], bool)
            picked[completion.sample_locations(depth.valid, args.samples, seed)] = True
            depth = DepthMap(depth.values, picked.reshape(depth.shape))
        N, dist = completion.sparse_nd_from_sparse_depth(
            depth, K, _pick(args.window, cfg.geometry.sparse_window))
        samples = completion.SparseSamples(DepthMap(depth.values, N.valid), N, dist)
    sc = cfg.segmentation
    if args.labels:
        labels = io.read_labels(args.labels)
    else:
        dense_n, dense_d = completion.nearest_fill(samples)
        labels = plane_seg.segment_planes(dense_n, dense_d, _pick(args.k, sc.k), sc.min_size, sc.min_area)
    refine_cfg = _spn_cfg(args, cfg) if args.refine else None
    _write(args.out, completion.complete_depth(samples, labels, K, refine_cfg), args, cfg)


def cmd_refine(args, cfg):
    depth = _read_depth(args.depth, args, cfg)
    spn = _spn_cfg(args, cfg)
    labels = io.read_labels(args.labels).labels if args.labels else None
    aff = refine.AffinityField.uniform(depth.shape, spn.alpha, spn.offsets, labels)
    U = _read_uncertainty(args.uncertainty, depth) if args.uncertainty else None
    _write(args.out, refine.spn_refine(depth, aff, U, spn.iterations), args, cfg)


def cmd_fuse(args, cfg):
    D1 = _read_depth(args.depth1, args, cfg)
    D2 = _read_depth(args.depth2, args, cfg)
    U1 = _read_uncertainty(args.unc1, D1)
    U2 = _read_uncertainty(args.unc2, D2)
    D, U = refine.fuse_by_uncertainty(D1, D2, U1, U2)
    _write(args.out, D, args, cfg)
    if args.out_uncertainty:
        io.write_pfm(args.out_uncertainty, U.values, cfg.formats.pfm_little_endian)


def _read_uncertainty(path, like: DepthMap) -> UncertaintyMap:
    # zero is a legitimate uncertainty, so validity follows the depth map
    data = io.read_pfm(path)
    if data.ndim != 2 or data.shape != like.shape:
        raise ParameterError(f"{path}: uncertainty must be a single-channel map of shape {like.shape}")
    return UncertaintyMap.from_values(data.astype(np.float64), like.valid)


def cmd_eval(args, cfg):
    if len(args.pred) != len(args.gt):
        raise ParameterError("--pred and --gt need the same number of files")
    cap_min = args.cap_min
    cap_max = math.inf if args.cap_max is None else args.cap_max
    if args.kind == "normal":
        reports = [metrics.normal_metrics(io.read_normal(p), io.read_normal(g))
                   for p, g in zip(args.pred, args.gt)]
        _dump(json.dumps([r.to_dict() for r in reports] if len(reports) > 1 else reports[0].to_dict(),
                         indent=2) + "\n", args.out)
        return

    def load(pair):
        return _read_depth(pair[0], args, cfg), _read_depth(pair[1], args, cfg)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        pairs = list(pool.map(load, zip(args.pred, args.gt)))
    per_image = [metrics.depth_metrics(p, g, cap_min, cap_max) for p, g in pairs]
    summary = (per_image[0] if len(pairs) == 1
               else metrics.aggregate(pairs, cap_min, cap_max, args.aggregate))
    if args.format == "csv":
        names = [str(p) for p in args.pred]
        rows = per_image + ([summary] if len(pairs) > 1 else [])
        if len(pairs) > 1:
            names.append(f"mean:{args.aggregate}")
        _dump(metrics.reports_to_csv(rows, names), args.out)
    else:
        _dump(summary.to_json(indent=2) + "\n", args.out)


def cmd_ply(args, cfg):
    K = _intrinsics(args, cfg)
    depth = _read_depth(args.depth, args, cfg)
    N = io.read_normal(args.normal) if args.normal else None
    io.export_ply(geometry.backproject(depth, K, N), args.out)


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="planedepth", description="Plane-parametrized depth toolkit")
    p.add_argument("--config", help="pipeline config JSON")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--depth-scale", type=float, help="PNG16 raw units per meter (default 256)")
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic planar scene")
    sp.add_argument("--scene", help="scene spec JSON")
    sp.add_argument("--planes", type=int, help="random scene with this many planes")
    sp.add_argument("--intrinsics")
    sp.add_argument("--noise", type=float, help="depth noise sigma (m)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=["pfm", "png16"], default="pfm")
    sp.add_argument("--out-dir", required=True)

    sp = add("derive", cmd_derive, "normals and distances from depth")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--intrinsics")
    sp.add_argument("--window", type=int)
    sp.add_argument("--sparse", action="store_true", help="input is a sparse depth map")
    sp.add_argument("--out-normal", required=True)
    sp.add_argument("--out-distance", required=True)

    sp = add("convert", cmd_convert, "depth from normals and distances")
    sp.add_argument("--normal", required=True)
    sp.add_argument("--distance", required=True)
    sp.add_argument("--intrinsics")
    sp.add_argument("--out", required=True)

    sp = add("segment", cmd_segment, "plane segmentation label image")
    sp.add_argument("--normal", required=True)
    sp.add_argument("--distance", required=True)
    sp.add_argument("--k", type=float)
    sp.add_argument("--min-size", type=int)
    sp.add_argument("--min-area", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--out-mask")

    sp = add("complete", cmd_complete, "sparse-to-dense planar completion")
    sp.add_argument("--depth", required=True, help="sparse (or dense, with --samples) depth")
    sp.add_argument("--normal", help="dense normals to sample alongside depth")
    sp.add_argument("--distance", help="dense distances to sample alongside depth")
    sp.add_argument("--intrinsics")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--window", type=int)
    sp.add_argument("--labels", help="label PNG; default segments the samples")
    sp.add_argument("--k", type=float)
    sp.add_argument("--refine", action="store_true")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--out", required=True)

    sp = add("refine", cmd_refine, "spatial propagation on a depth map")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--uncertainty")
    sp.add_argument("--labels")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--out", required=True)

    sp = add("fuse", cmd_fuse, "uncertainty-weighted fusion of two depth maps")
    sp.add_argument("--depth1", required=True)
    sp.add_argument("--depth2", required=True)
    sp.add_argument("--unc1", required=True)
    sp.add_argument("--unc2", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--out-uncertainty")

    sp = add("eval", cmd_eval, "evaluation metrics")
    sp.add_argument("--pred", nargs="+", required=True)
    sp.add_argument("--gt", nargs="+", required=True)
    sp.add_argument("--kind", choices=["depth", "normal"], default="depth")
    sp.add_argument("--cap-min", type=float, default=0.0)
    sp.add_argument("--cap-max", type=float)
    sp.add_argument("--aggregate", choices=["per_image", "pooled"], default="per_image")
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out")

    sp = add("ply", cmd_ply, "export a point cloud")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--intrinsics")
    sp.add_argument("--normal")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        args.fn(args, cfg)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    except (PlaneDepthError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
