"""Command line entry point: decompose, recolor, filter, inspect, serve."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import layerops, pipeline, solver
from .palette import PaletteError, parse_palette
from .pixelcore import VolumeError, load_volume, save_volume


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerlab",
        description="Decompose images/video into additive color layers and recolor them.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dec = sub.add_parser("decompose", help="compute a layer decomposition")
    p_dec.add_argument("--input", "-i", required=True, help="image file, frame directory, or .npy volume")
    p_dec.add_argument("--out", "-o", required=True, help="output .lbld path")
    p_dec.add_argument("--num-layers", "-n", type=int, default=pipeline.DEFAULT_LAYERS)
    p_dec.add_argument("--superpixels", "-s", type=int, default=None,
                       help="superpixel count (default: 2000 stills, 4000 video)")
    p_dec.add_argument("--seed", type=int, default=0)
    p_dec.add_argument("--palette", help="palette JSON overriding automatic extraction")
    p_dec.add_argument("--constraints", help="constraints JSON with pixel strokes")
    p_dec.add_argument("--lambda-m", type=float, default=1.0)
    p_dec.add_argument("--lambda-r", type=float, default=0.5)
    p_dec.add_argument("--lambda-u", type=float, default=0.1)
    p_dec.add_argument("--lambda-e", type=float, default=0.1)
    p_dec.add_argument("--lambda-n", type=float, default=1.0)
    p_dec.add_argument("--suppression-iters", type=int, default=4)
    p_dec.add_argument("--tau", type=float, default=solver.DEFAULT_TAU)
    p_dec.add_argument("--no-auto-constraints", action="store_true")
    p_dec.add_argument("--report", help="also write the JSON report to this path")
    p_dec.add_argument("--debug-boundaries", help="write a superpixel boundary PNG")

    p_rec = sub.add_parser("recolor", help="compose layers with a palette")
    p_rec.add_argument("--layers", required=True, help=".lbld file")
    p_rec.add_argument("--palette", required=True, help="palette JSON")
    p_rec.add_argument("--out", "-o", required=True, help="output PNG (or directory for video)")

    p_fil = sub.add_parser("filter", help="filter one layer's weight plane")
    p_fil.add_argument("--layers", required=True)
    p_fil.add_argument("--layer", type=int, required=True)
    p_fil.add_argument("--kernel", required=True, choices=["gaussian", "emboss", "motion_blur"])
    p_fil.add_argument("--sigma", type=float, help="gaussian sigma")
    p_fil.add_argument("--length", type=int, help="motion blur length in pixels")
    p_fil.add_argument("--angle", type=float, default=0.0, help="motion blur angle (degrees)")
    p_fil.add_argument("--out", "-o", required=True, help="output .lbld path")
    p_fil.add_argument("--render", help="also compose and save a PNG preview")

    p_ins = sub.add_parser("inspect", help="print layer file metadata")
    p_ins.add_argument("--layers", required=True)

    p_srv = sub.add_parser("serve", help="run the HTTP service for the studio")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8765)
    return parser


def run_decompose(args, parser: argparse.ArgumentParser) -> int:
    if args.num_layers < 1:
        parser.error("num-layers must be >= 1")
    if args.superpixels is not None and args.superpixels < 1:
        parser.error("--superpixels must be >= 1")
    if not Path(args.input).exists():
        parser.error(f"--input path not found: {args.input}")

    t_start = time.perf_counter()
    try:
        volume = load_volume(args.input)
    except VolumeError as exc:
        print(f"error loading input: {exc}", file=sys.stderr)
        return 1
    load_ms = (time.perf_counter() - t_start) * 1000.0

    palette = None
    if args.palette:
        try:
            palette = parse_palette(args.palette)
        except PaletteError as exc:
            parser.error(f"--palette: {exc}")

    params = solver.SolverParams(
        lambda_m=args.lambda_m, lambda_r=args.lambda_r, lambda_u=args.lambda_u,
        lambda_e=args.lambda_e, lambda_n=args.lambda_n,
        suppression_iters=args.suppression_iters)
    config = pipeline.PipelineConfig(
        num_layers=args.num_layers, superpixels=args.superpixels, seed=args.seed,
        tau=args.tau, auto_constraints=not args.no_auto_constraints, params=params)

    strokes = None
    if args.constraints:
        try:
            with open(args.constraints, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            strokes = doc["strokes"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            parser.error(f"--constraints: cannot read strokes: {exc}")

    try:
        out = pipeline.decompose(volume, config, palette=palette,
                                 constraint_strokes=strokes)
    except (ValueError, solver.SolverError) as exc:
        print(f"decompose failed: {exc}", file=sys.stderr)
        return 1
    t_save = time.perf_counter()
    layerops.save_layers(out.layers, args.out)
    out.report["stages_ms"]["load"] = load_ms
    out.report["stages_ms"]["save"] = (time.perf_counter() - t_save) * 1000.0
    out.report["total_ms"] = (time.perf_counter() - t_start) * 1000.0

    if args.debug_boundaries:
        from .superpixel import boundary_overlay
        save_volume(boundary_overlay(out.segmentation, volume), args.debug_boundaries)

    text = json.dumps(out.report, indent=2)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


def run_recolor(args, parser: argparse.ArgumentParser) -> int:
    try:
        layers = layerops.load_layers(args.layers)
    except layerops.LayerFileError as exc:
        print(f"error reading {args.layers}: {exc}", file=sys.stderr)
        return 1
    try:
        palette = parse_palette(args.palette)
    except PaletteError as exc:
        parser.error(f"--palette: {exc}")
    if len(palette) != layers.num_layers:
        parser.error(f"--palette has {len(palette)} colors but the layer file "
                     f"has {layers.num_layers} layers")
    t0 = time.perf_counter()
    volume = layerops.compose(layers, palette)
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    save_volume(volume, args.out)
    print(f"composed {layers.frames} frame(s) in {elapsed_ms:.2f} ms "
          f"({elapsed_ms / layers.frames:.2f} ms/frame)")
    return 0


def run_filter(args, parser: argparse.ArgumentParser) -> int:
    try:
        layers = layerops.load_layers(args.layers)
    except layerops.LayerFileError as exc:
        print(f"error reading {args.layers}: {exc}", file=sys.stderr)
        return 1
    if not 0 <= args.layer < layers.num_layers:
        parser.error(f"--layer must be in [0, {layers.num_layers})")
    if args.kernel == "gaussian" and (args.sigma is None or args.sigma <= 0):
        parser.error("--sigma > 0 is required for the gaussian kernel")
    if args.kernel == "motion_blur" and (args.length is None or args.length < 1):
        parser.error("--length >= 1 is required for the motion_blur kernel")
    filtered = layerops.filter_layer(layers, args.layer, args.kernel,
                                     sigma=args.sigma, length=args.length,
                                     angle=args.angle)
    layerops.save_layers(filtered, args.out)
    if args.render:
        save_volume(layerops.compose(filtered, filtered.palette), args.render)
    return 0


def run_inspect(args, parser: argparse.ArgumentParser) -> int:
    try:
        layers = layerops.load_layers(args.layers)
    except layerops.LayerFileError as exc:
        print(f"error reading {args.layers}: {exc}", file=sys.stderr)
        return 1
    meta = {
        "width": layers.width,
        "height": layers.height,
        "frames": layers.frames,
        "num_layers": layers.num_layers,
        "palette": layers.palette.colors.tolist(),
        "weight_min": float(layers.weights.min()),
        "weight_max": float(layers.weights.max()),
    }
    print(json.dumps(meta, indent=2))
    return 0


def run_serve(args, parser: argparse.ArgumentParser) -> int:
    import uvicorn

    from .server import create_app

    try:
        uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"cannot serve on {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "decompose": run_decompose,
        "recolor": run_recolor,
        "filter": run_filter,
        "inspect": run_inspect,
        "serve": run_serve,
    }
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
