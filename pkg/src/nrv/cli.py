"""Command-line front end. One subcommand per library operation plus the
manifest runner; see README for a tour."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from nrv import __version__
from nrv.losses import (
    LossConfig,
    compose_tile_loss,
    cycle_loss,
    density_multiplier,
    extended_cycle_loss,
    hallucination_loss,
    tile_objective,
)
from nrv.morph import (
    compute_morph_field,
    intermediate_volume,
    load_morph_field,
    save_morph_field,
)
from nrv.phantom import (
    degenerate,
    load_degeneration_params,
    load_tube_specs,
    rasterize_tubes,
    widefield_blur,
)
from nrv.pipeline import PipelineError, demo_manifest, run_pipeline
from nrv.report import write_report
from nrv.tiling import read_tile_manifest, split_tiles, stitch, write_tile_manifest
from nrv.vesselness import (
    Domain,
    VesselnessParams,
    connected_components,
    jerman_response,
    suppress_background,
    threshold_response,
)
from nrv.views import extract_isosurface, fiber_density, mesh_to_obj, percentage_difference
from nrv.volume import (
    Direction,
    foreground_mask,
    load_volume,
    nonlinear_rescale,
    save_volume,
)

_DIRECTIONS = {"y2o": Direction.YOUNG_TO_OLD, "o2y": Direction.OLD_TO_YOUNG}


def _loss_config(path: str | None) -> LossConfig:
    if path is None:
        return LossConfig()
    return LossConfig(**json.loads(Path(path).read_text()))


def _domain(value: str | None) -> Domain | None:
    return Domain(value) if value else None


def _cmd_info(args) -> int:
    v = load_volume(args.volume)
    facts = {"dims": list(v.dims), "spacing_um": list(v.spacing),
             "dtype": v.dtype_tag, "kind": v.kind.value,
             "provenance": v.provenance.value,
             "min": float(v.data.min()), "max": float(v.data.max())}
    if args.json:
        print(json.dumps(facts, indent=2, sort_keys=True))
    else:
        for key, value in facts.items():
            print(f"{key}: {value}")
    return 0


def _cmd_phantom(args) -> int:
    specs = load_tube_specs(args.tubes)
    v = rasterize_tubes(specs, tuple(args.dims), tuple(args.spacing))
    save_volume(v, args.out)
    print(args.out)
    return 0


def _cmd_degenerate(args) -> int:
    v = load_volume(args.volume)
    specs = load_tube_specs(args.tubes)
    p = load_degeneration_params(args.params)
    save_volume(degenerate(v, specs, p), args.out)
    print(args.out)
    return 0


def _cmd_blur(args) -> int:
    v = load_volume(args.volume)
    save_volume(widefield_blur(v, args.sigma_xy, args.sigma_z), args.out)
    print(args.out)
    return 0


def _cmd_rescale(args) -> int:
    save_volume(nonlinear_rescale(load_volume(args.volume)), args.out)
    print(args.out)
    return 0


def _cmd_tile(args) -> int:
    v = load_volume(args.volume)
    tiles = split_tiles(v, args.d, args.delta)
    manifest = write_tile_manifest(tiles, args.out)
    print(manifest)
    return 0


def _cmd_stitch(args) -> int:
    tiles = read_tile_manifest(args.manifest)
    save_volume(stitch(tiles), args.out)
    print(args.out)
    return 0


def _cmd_loss(args) -> int:
    cfg = _loss_config(args.config)
    kind = args.kind
    need = {"cycle": 2, "xcycle": 2, "delta": 2, "hallucination": 4,
            "objective": 0}
    if len(args.volumes) != need[kind]:
        raise ValueError(f"{kind} takes {need[kind]} volume arguments, "
                         f"got {len(args.volumes)}")
    vols = [load_volume(p) for p in args.volumes]
    if kind == "cycle":
        value = cycle_loss(vols[0], vols[1], cfg)
    elif kind == "xcycle":
        value = extended_cycle_loss(vols[0], vols[1], cfg)
    elif kind == "delta":
        value = density_multiplier(vols[0], vols[1], cfg)
    elif kind == "hallucination":
        value = hallucination_loss(vols[0], vols[1], vols[2], vols[3], cfg)
    else:
        if args.terms is None:
            raise ValueError("objective needs --terms")
        doc = json.loads(Path(args.terms).read_text())
        corners = [compose_tile_loss(cfg=cfg, **t) for t in doc["corners"]]
        center = compose_tile_loss(cfg=cfg, **doc["center"])
        value = tile_objective(corners, center, cfg)
    print(value)
    return 0


def _cmd_vesselness(args) -> int:
    v = load_volume(args.volume)
    params = VesselnessParams(sigmas_um=tuple(args.sigmas), tau=args.tau)
    save_volume(jerman_response(v, params), args.out)
    print(args.out)
    return 0


def _cmd_suppress(args) -> int:
    v = load_volume(args.volume)
    out = suppress_background(v, tuple(args.sigmas), args.grad_percentile)
    save_volume(out, args.out)
    print(args.out)
    return 0


def _cmd_components(args) -> int:
    v = load_volume(args.volume)
    mask = threshold_response(v, args.threshold)
    comps = connected_components(mask, domain=_domain(args.domain),
                                 provenance=v.provenance)
    doc = {"count": len(comps), "components": [c.to_dict() for c in comps]}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(args.out)
    else:
        print(text)
    return 0


def _cmd_morph(args) -> int:
    young = load_volume(args.young)
    old = load_volume(args.old)
    if args.field:
        field = load_morph_field(args.field)
    else:
        field = compute_morph_field(young, old, args.threshold)
    if args.save_field:
        save_morph_field(field, args.save_field)
        print(args.save_field)
    if args.out:
        if args.sigma is None:
            raise ValueError("-o needs --sigma")
        frame = intermediate_volume(field, young, old, args.sigma,
                                    _DIRECTIONS[args.direction])
        save_volume(frame, args.out)
        print(args.out)
    elif not args.save_field:
        raise ValueError("nothing to do: pass -o and/or --save-field")
    return 0


def _cmd_morph_sequence(args) -> int:
    young = load_volume(args.young)
    old = load_volume(args.old)
    if args.field:
        field = load_morph_field(args.field)
    else:
        field = compute_morph_field(young, old, args.threshold)
    if args.steps < 2:
        raise ValueError("a sequence needs at least 2 steps")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    direction = _DIRECTIONS[args.direction]
    for i in range(args.steps):
        sigma = i / (args.steps - 1)
        frame = intermediate_volume(field, young, old, sigma, direction)
        save_volume(frame, out_dir / f"frame_{i:03d}.nrv")
    print(out_dir)
    return 0


def _cmd_mesh(args) -> int:
    v = load_volume(args.volume)
    mesh = extract_isosurface(v, args.iso, domain=_domain(args.domain))
    Path(args.out).write_text(mesh_to_obj(mesh))
    print(args.out)
    return 0


def _cmd_density(args) -> int:
    values = []
    for path in args.volumes:
        v = load_volume(path)
        value = fiber_density(foreground_mask(v, args.threshold))
        values.append(value)
        print(f"{path}: {value}")
    if len(values) == 2:
        print(f"percentage_difference: "
              f"{percentage_difference(values[0], values[1])}")
    return 0


def _cmd_serve(args) -> int:
    from nrv.service import serve

    serve(bind=args.bind, data_dir=args.data)
    return 0


def _cmd_run(args) -> int:
    result = run_pipeline(args.manifest)
    path = Path(args.manifest)
    print(path.with_name(path.stem + ".result.json"))
    print(f"{len(result['steps'])} steps ok")
    return 0


def _cmd_demo(args) -> int:
    dims = (args.dims, args.dims, args.dims)
    manifest = demo_manifest(args.out_dir, dims=dims)
    print(manifest)
    if not args.no_run:
        run_pipeline(manifest)
        print(manifest.with_name(manifest.stem + ".result.json"))
    return 0


def _cmd_report(args) -> int:
    young = load_volume(args.young)
    old = load_volume(args.old)
    paths = write_report(young, old, args.out, threshold=args.threshold)
    for path in paths.values():
        print(path)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrv")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="print a volume's header facts")
    p.add_argument("volume")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_info)

    p = sub.add_parser("phantom", help="rasterize tubes into a volume")
    p.add_argument("--tubes", required=True, help="tube spec JSON")
    p.add_argument("--dims", nargs=3, type=int, required=True,
                   metavar=("X", "Y", "Z"))
    p.add_argument("--spacing", nargs=3, type=float, default=[1.0, 1.0, 1.0],
                   metavar=("SX", "SY", "SZ"))
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_phantom)

    p = sub.add_parser("degenerate", help="apply fragmentation and thinning")
    p.add_argument("volume")
    p.add_argument("--tubes", required=True)
    p.add_argument("--params", required=True, help="degeneration JSON")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_degenerate)

    p = sub.add_parser("blur", help="anisotropic widefield blur")
    p.add_argument("volume")
    p.add_argument("--sigma-xy", type=float, required=True)
    p.add_argument("--sigma-z", type=float, required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_blur)

    p = sub.add_parser("rescale", help="percentile-anchored normalization")
    p.add_argument("volume")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_rescale)

    p = sub.add_parser("tile", help="split into overlapping tiles")
    p.add_argument("volume")
    p.add_argument("-d", type=int, required=True, help="core edge")
    p.add_argument("--delta", type=int, required=True, help="margin")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_tile)

    p = sub.add_parser("stitch", help="reassemble tiles from a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_stitch)

    p = sub.add_parser("loss", help="evaluate translation losses")
    p.add_argument("--kind", required=True,
                   choices=["cycle", "xcycle", "delta", "hallucination",
                            "objective"])
    p.add_argument("volumes", nargs="*")
    p.add_argument("--config", help="LossConfig overrides, JSON")
    p.add_argument("--terms", help="objective terms JSON")
    p.set_defaults(fn=_cmd_loss)

    p = sub.add_parser("vesselness", help="multi-scale tubular response")
    p.add_argument("volume")
    p.add_argument("--sigmas", nargs="+", type=float, required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_vesselness)

    p = sub.add_parser("suppress", help="remove out-of-focus background")
    p.add_argument("volume")
    p.add_argument("--sigmas", nargs="+", type=float, required=True)
    p.add_argument("--grad-percentile", type=float, default=90.0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_suppress)

    p = sub.add_parser("components", help="label connected foreground")
    p.add_argument("volume")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--domain", choices=[d.value for d in Domain])
    p.add_argument("-o", "--out")
    p.set_defaults(fn=_cmd_components)

    p = sub.add_parser("morph", help="voxel paths and one in-between frame")
    p.add_argument("--young", required=True)
    p.add_argument("--old", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--field", help="reuse a saved field")
    p.add_argument("--save-field", help="write the field for later reuse")
    p.add_argument("--sigma", type=float)
    p.add_argument("--direction", choices=sorted(_DIRECTIONS), default="y2o")
    p.add_argument("-o", "--out")
    p.set_defaults(fn=_cmd_morph)

    p = sub.add_parser("morph-sequence", help="evenly spaced frames")
    p.add_argument("--young", required=True)
    p.add_argument("--old", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--field")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--direction", choices=sorted(_DIRECTIONS), default="y2o")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_morph_sequence)

    p = sub.add_parser("mesh", help="isosurface to OBJ")
    p.add_argument("volume")
    p.add_argument("--iso", type=float, default=0.5)
    p.add_argument("--domain", choices=[d.value for d in Domain])
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(fn=_cmd_mesh)

    p = sub.add_parser("density", help="foreground fill percentage")
    p.add_argument("volumes", nargs="+")
    p.add_argument("--threshold", type=float, default=0.1)
    p.set_defaults(fn=_cmd_density)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--data", help="directory of .nrv files to preload")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("run", help="execute a pipeline manifest")
    p.add_argument("manifest")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("demo", help="write and run the demo pipeline")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dims", type=int, default=128)
    p.add_argument("--no-run", action="store_true")
    p.set_defaults(fn=_cmd_demo)

    p = sub.add_parser("report", help="CSV metrics plus figures")
    p.add_argument("--young", required=True)
    p.add_argument("--old", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
