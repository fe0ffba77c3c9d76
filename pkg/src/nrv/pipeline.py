"""Manifest-driven batch runner: phantom generation through morphing in one
reproducible JSON document.

Each step names an operation, its parameters, and its input/output files
(paths relative to the manifest). The runner executes steps in order,
records sha256 hashes of everything read and written, and saves the
augmented manifest next to the original so a re-run can be compared
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from nrv import __version__
from nrv.morph import (
    compute_morph_field,
    intermediate_volume,
    load_morph_field,
    save_morph_field,
)
from nrv.phantom import (
    ExternalFile,
    SyntheticOracle,
    degenerate,
    degeneration_params_from_obj,
    predict,
    rasterize_tubes,
    tube_specs_from_obj,
    widefield_blur,
)
from nrv.vesselness import (
    Domain,
    VesselnessParams,
    connected_components,
    jerman_response,
    suppress_background,
    threshold_response,
)
from nrv.views import extract_isosurface, fiber_density, mesh_to_obj
from nrv.volume import (
    Direction,
    Kind,
    Volume3D,
    foreground_mask,
    load_volume,
    nonlinear_rescale,
    save_volume,
)

__all__ = ["PipelineError", "run_pipeline", "demo_manifest"]


class PipelineError(Exception):
    """A step failed; carries the step name and a machine-readable code."""

    def __init__(self, step: str, code: str, message: str):
        super().__init__(f"step {step!r} failed ({code}): {message}")
        self.step = step
        self.code = code
        self.message = message


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_path(path: Path) -> str:
    """Hash a file, or a directory as the hash of its sorted file hashes."""
    if path.is_dir():
        parts = []
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            parts.append(f"{child.relative_to(path)}:{_sha256_file(child)}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()
    return _sha256_file(path)


def _direction(value: str) -> Direction:
    aliases = {"o2y": Direction.OLD_TO_YOUNG, "y2o": Direction.YOUNG_TO_OLD,
               "old_to_young": Direction.OLD_TO_YOUNG,
               "young_to_old": Direction.YOUNG_TO_OLD}
    if value.lower() not in aliases:
        raise ValueError(f"unknown direction {value!r}")
    return aliases[value.lower()]


def _rawify(v: Volume3D, peak: int = 65535) -> Volume3D:
    """Map a normalized volume onto the u16 acquisition range."""
    if v.kind != Kind.NORMALIZED:
        raise ValueError("rawify expects a normalized volume")
    data = np.rint(v.data.astype(np.float64) * peak)
    data = np.clip(data, 0, 65535).astype(np.uint16)
    return Volume3D(data, v.spacing, Kind.RAW, v.provenance)


def _vesselness_params(params: dict) -> VesselnessParams:
    return VesselnessParams(
        sigmas_um=tuple(params.get("sigmas_um", (1.0, 2.0, 3.0))),
        tau=float(params.get("tau", 0.5)),
        intensity_scales=tuple(params.get("intensity_scales", ())),
    )


def _op_phantom(inputs, outputs, params):
    specs = tube_specs_from_obj(params["tubes"])
    v = rasterize_tubes(specs, tuple(params["dims"]),
                        tuple(params.get("spacing_um", (1.0, 1.0, 1.0))))
    save_volume(v, outputs["volume"])


def _op_degenerate(inputs, outputs, params):
    young = load_volume(inputs["young"])
    specs = tube_specs_from_obj(params["tubes"])
    p = degeneration_params_from_obj(params)
    save_volume(degenerate(young, specs, p), outputs["old"])


def _op_predict(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    if "prediction" in inputs:
        backend = ExternalFile(str(inputs["prediction"]))
    else:
        oracle = params["oracle"]
        backend = SyntheticOracle(
            specs=tuple(tube_specs_from_obj(oracle["tubes"])),
            params=degeneration_params_from_obj(oracle))
    out = predict(v, _direction(params["direction"]), backend)
    save_volume(out, outputs["volume"])


def _op_blur(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    out = widefield_blur(v, float(params["sigma_xy_um"]),
                         float(params["sigma_z_um"]))
    save_volume(out, outputs["volume"])


def _op_rawify(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    save_volume(_rawify(v, int(params.get("peak", 65535))),
                outputs["volume"])


def _op_rescale(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    save_volume(nonlinear_rescale(v), outputs["volume"])


def _op_tile(inputs, outputs, params):
    from nrv.tiling import split_tiles, write_tile_manifest

    v = load_volume(inputs["volume"])
    tiles = split_tiles(v, int(params["d"]), int(params["delta"]))
    write_tile_manifest(tiles, Path(outputs["tiles"]).parent)


def _op_stitch(inputs, outputs, params):
    from nrv.tiling import read_tile_manifest, stitch

    tiles = read_tile_manifest(inputs["tiles"])
    save_volume(stitch(tiles), outputs["volume"])


def _op_vesselness(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    save_volume(jerman_response(v, _vesselness_params(params)),
                outputs["volume"])


def _op_suppress(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    out = suppress_background(v, tuple(params["sigmas_um"]),
                              float(params.get("grad_percentile", 90.0)))
    save_volume(out, outputs["volume"])


def _op_morph_field(inputs, outputs, params):
    young = load_volume(inputs["young"])
    old = load_volume(inputs["old"])
    field = compute_morph_field(young, old,
                                float(params.get("threshold", 0.1)))
    save_morph_field(field, outputs["field"])


def _load_field(inputs, params):
    young = load_volume(inputs["young"])
    old = load_volume(inputs["old"])
    if "field" in inputs:
        field = load_morph_field(inputs["field"])
    else:
        field = compute_morph_field(young, old,
                                    float(params.get("threshold", 0.1)))
    return young, old, field


def _op_morph_frame(inputs, outputs, params):
    young, old, field = _load_field(inputs, params)
    frame = intermediate_volume(field, young, old, float(params["sigma"]),
                                _direction(params["direction"]))
    save_volume(frame, outputs["volume"])


def _op_morph_sequence(inputs, outputs, params):
    young, old, field = _load_field(inputs, params)
    direction = _direction(params["direction"])
    steps = int(params["steps"])
    if steps < 2:
        raise ValueError("a sequence needs at least 2 steps")
    out_dir = Path(outputs["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(steps):
        sigma = i / (steps - 1)
        frame = intermediate_volume(field, young, old, sigma, direction)
        save_volume(frame, out_dir / f"frame_{i:03d}.nrv")


def _op_components(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    mask = threshold_response(v, float(params.get("threshold", 0.1)))
    domain = Domain(params["domain"]) if "domain" in params else None
    comps = connected_components(mask, domain=domain,
                                 provenance=v.provenance)
    doc = {"count": len(comps), "components": [c.to_dict() for c in comps]}
    Path(outputs["json"]).write_text(json.dumps(doc, indent=2,
                                                sort_keys=True) + "\n")


def _op_density(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    threshold = float(params.get("threshold", 0.1))
    value = fiber_density(foreground_mask(v, threshold))
    doc = {"volume": str(inputs["volume"].name), "threshold": threshold,
           "density_percent": value, "provenance": v.provenance.value}
    Path(outputs["json"]).write_text(json.dumps(doc, indent=2,
                                                sort_keys=True) + "\n")


def _op_mesh(inputs, outputs, params):
    v = load_volume(inputs["volume"])
    domain = Domain(params["domain"]) if "domain" in params else None
    mesh = extract_isosurface(v, float(params.get("iso", 0.5)),
                              domain=domain)
    Path(outputs["obj"]).write_text(mesh_to_obj(mesh))


def _op_report(inputs, outputs, params):
    from nrv.report import write_report

    young = load_volume(inputs["young"])
    old = load_volume(inputs["old"])
    write_report(young, old, Path(outputs["dir"]),
                 threshold=float(params.get("threshold", 0.1)))


_OPS = {
    "phantom": _op_phantom,
    "degenerate": _op_degenerate,
    "predict": _op_predict,
    "blur": _op_blur,
    "rawify": _op_rawify,
    "rescale": _op_rescale,
    "tile": _op_tile,
    "stitch": _op_stitch,
    "vesselness": _op_vesselness,
    "suppress": _op_suppress,
    "morph_field": _op_morph_field,
    "morph_frame": _op_morph_frame,
    "morph_sequence": _op_morph_sequence,
    "components": _op_components,
    "density": _op_density,
    "mesh": _op_mesh,
    "report": _op_report,
}


def run_pipeline(manifest_path: str | Path) -> dict:
    """Execute every step and return the augmented manifest.

    The augmented copy (with hashes and the tool version) is also written
    next to the input as <name>.result.json.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise PipelineError("<manifest>", "missing_input",
                            f"manifest {manifest_path} not found")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise PipelineError("<manifest>", "malformed_manifest", str(err))
    base = manifest_path.parent
    steps = doc.get("steps")
    if not isinstance(steps, list) or not steps:
        raise PipelineError("<manifest>", "malformed_manifest",
                            "manifest needs a non-empty steps list")

    augmented = {"version": doc.get("version", 1),
                 "tool_version": __version__, "steps": []}
    for i, step in enumerate(steps):
        op = step.get("op")
        name = step.get("name", f"{op or 'step'}#{i}")
        fn = _OPS.get(op)
        if fn is None:
            raise PipelineError(name, "unknown_op", f"no operation {op!r}")
        inputs = {k: base / v for k, v in step.get("inputs", {}).items()}
        outputs = {k: base / v for k, v in step.get("outputs", {}).items()}
        for key, path in inputs.items():
            if not path.exists():
                raise PipelineError(name, "missing_input",
                                    f"input {key!r} not found at {path}")
        for path in outputs.values():
            path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fn(inputs, outputs, step.get("params", {}))
        except PipelineError:
            raise
        except Exception as err:
            raise PipelineError(name, "step_failed", str(err))
        record = dict(step)
        record["input_hashes"] = {k: _hash_path(p)
                                  for k, p in sorted(inputs.items())}
        record["output_hashes"] = {k: _hash_path(p)
                                   for k, p in sorted(outputs.items())}
        augmented["steps"].append(record)

    result_path = base / (manifest_path.stem + ".result.json")
    result_path.write_text(json.dumps(augmented, indent=2, sort_keys=True)
                           + "\n")
    return augmented


_DEMO_TUBES = [
    {"centerline": [[6.0, 30.0, 52.0], [122.0, 38.0, 60.0]], "radius": 3.5},
    {"centerline": [[6.0, 64.0, 64.0], [122.0, 64.0, 72.0]], "radius": 3.0},
    {"centerline": [[6.0, 96.0, 76.0], [122.0, 90.0, 58.0]],
     "radius": [2.5, 4.0]},
]


def demo_manifest(out_dir: str | Path, dims=(128, 128, 128)) -> Path:
    """Write the demo manifest (phantom through morph and report) and
    return its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    degen = {"tubes": _DEMO_TUBES, "fragment_fraction": 0.5,
             "gap_length_um": 14.0, "thinning_factor": 0.6, "seed": 7}
    steps = [
        {"name": "young", "op": "phantom",
         "params": {"tubes": _DEMO_TUBES, "dims": list(dims),
                    "spacing_um": [1.0, 1.0, 1.0]},
         "outputs": {"volume": "young.nrv"}},
        {"name": "old", "op": "degenerate", "params": degen,
         "inputs": {"young": "young.nrv"}, "outputs": {"old": "old.nrv"}},
        {"name": "acquire", "op": "rawify",
         "inputs": {"volume": "young.nrv"},
         "outputs": {"volume": "young_raw.nrv"}},
        {"name": "normalize", "op": "rescale",
         "inputs": {"volume": "young_raw.nrv"},
         "outputs": {"volume": "young_norm.nrv"}},
        {"name": "tile", "op": "tile", "params": {"d": 64, "delta": 16},
         "inputs": {"volume": "young.nrv"},
         "outputs": {"tiles": "tiles/manifest.json"}},
        {"name": "stitch", "op": "stitch",
         "inputs": {"tiles": "tiles/manifest.json"},
         "outputs": {"volume": "young_stitched.nrv"}},
        {"name": "vesselness", "op": "vesselness",
         "params": {"sigmas_um": [2.0, 3.0], "tau": 0.5},
         "inputs": {"volume": "old.nrv"},
         "outputs": {"volume": "old_vesselness.nrv"}},
        {"name": "paths", "op": "morph_field", "params": {"threshold": 0.1},
         "inputs": {"young": "young.nrv", "old": "old.nrv"},
         "outputs": {"field": "field.npz"}},
        {"name": "frames", "op": "morph_sequence",
         "params": {"steps": 5, "direction": "y2o"},
         "inputs": {"young": "young.nrv", "old": "old.nrv",
                    "field": "field.npz"},
         "outputs": {"dir": "frames"}},
        {"name": "density-young", "op": "density",
         "params": {"threshold": 0.1},
         "inputs": {"volume": "young.nrv"},
         "outputs": {"json": "density_young.json"}},
        {"name": "density-old", "op": "density",
         "params": {"threshold": 0.1},
         "inputs": {"volume": "old.nrv"},
         "outputs": {"json": "density_old.json"}},
        {"name": "mesh-old", "op": "mesh",
         "params": {"iso": 0.5, "domain": "old"},
         "inputs": {"volume": "old.nrv"}, "outputs": {"obj": "old.obj"}},
        {"name": "report", "op": "report", "params": {"threshold": 0.1},
         "inputs": {"young": "young.nrv", "old": "old.nrv"},
         "outputs": {"dir": "report"}},
    ]
    manifest = {"version": 1, "steps": steps}
    path = out_dir / "demo_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
