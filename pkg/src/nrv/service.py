"""HTTP facade over the library: volumes, slices, vesselness, components,
meshes, morph frames, and density metrics.

Every handler delegates to the library functions with no extra math, so
responses stay bit-identical to direct calls. All JSON responses carry the
source volume's provenance so clients can show the predicted-data warning.
"""

from __future__ import annotations

import re
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import JSONResponse

from nrv.losses import LossConfig
from nrv.morph import MorphField, compute_morph_field, intermediate_volume
from nrv.render import AXES, slice_png
from nrv.vesselness import (
    Domain,
    VesselnessParams,
    connected_components,
    jerman_response,
    threshold_response,
)
from nrv.views import default_tf, extract_isosurface, fiber_density, mesh_to_obj
from nrv.volume import (
    Direction,
    Volume3D,
    foreground_mask,
    histogram,
    load_volume,
    volume_bytes,
    volume_from_bytes,
)

__all__ = ["Session", "create_app", "serve"]

_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

_DIRECTIONS = {
    "o2y": Direction.OLD_TO_YOUNG,
    "y2o": Direction.YOUNG_TO_OLD,
    "old_to_young": Direction.OLD_TO_YOUNG,
    "young_to_old": Direction.YOUNG_TO_OLD,
}


def _fail(status: int, code: str, message: str):
    raise HTTPException(status_code=status,
                        detail={"code": code, "message": message})


class Session:
    """Registry of loaded volumes plus the morph-field cache.

    Mutations take the lock; readers grab references under it and work on
    the immutable volumes outside, so a replace is an atomic swap.
    """

    def __init__(self):
        self.id = uuid.uuid4().hex[:12]
        self.volumes: dict[str, Volume3D] = {}
        self.morph_cache: dict[tuple[str, str, Direction], MorphField] = {}
        self.loss_config = LossConfig()
        self.vesselness_params = VesselnessParams(sigmas_um=(1.0, 2.0, 3.0))
        self.lock = threading.RLock()
        self.cache_hits = 0
        self.cache_misses = 0
        self.jobs: dict[str, dict] = {}

    def get(self, volume_id: str) -> Volume3D:
        with self.lock:
            vol = self.volumes.get(volume_id)
        if vol is None:
            _fail(404, "volume_not_found", f"no volume {volume_id!r}")
        return vol

    def put(self, volume_id: str, volume: Volume3D) -> None:
        if not _ID_PATTERN.match(volume_id):
            _fail(422, "invalid_volume_id",
                  "ids are alphanumeric with ._- separators")
        with self.lock:
            self.volumes[volume_id] = volume
            stale = [k for k in self.morph_cache
                     if volume_id in (k[0], k[1])]
            for k in stale:
                del self.morph_cache[k]

    def morph_field(self, young_id: str, old_id: str,
                    direction: Direction, threshold: float) -> MorphField:
        key = (young_id, old_id, direction)
        with self.lock:
            field = self.morph_cache.get(key)
            if field is not None and field.threshold == threshold:
                self.cache_hits += 1
                return field
            self.cache_misses += 1
        young = self.get(young_id)
        old = self.get(old_id)
        if young.dims != old.dims:
            _fail(422, "dims_mismatch",
                  f"{young_id} is {young.dims}, {old_id} is {old.dims}")
        field = compute_morph_field(young, old, threshold)
        with self.lock:
            self.morph_cache[key] = field
        return field


def _provenance(volume: Volume3D) -> str:
    return volume.provenance.value


def _volume_entry(volume_id: str, v: Volume3D) -> dict:
    return {
        "id": volume_id,
        "dims": list(v.dims),
        "spacing_um": list(v.spacing),
        "dtype": v.dtype_tag,
        "kind": v.kind.value,
        "provenance": _provenance(v),
    }


def _parse_direction(value: str) -> Direction:
    d = _DIRECTIONS.get(value.lower())
    if d is None:
        _fail(422, "invalid_direction",
              f"direction must be one of {sorted(_DIRECTIONS)}, got {value!r}")
    return d


def _parse_domain(value: str) -> Domain:
    try:
        return Domain(value)
    except ValueError:
        _fail(422, "invalid_domain",
              f"domain must be 'young' or 'old', got {value!r}")


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="nrv service")
    session = Session()
    app.state.session = session

    if data_dir is not None:
        data_dir = Path(data_dir)
        if not data_dir.is_dir():
            raise FileNotFoundError(f"data directory {data_dir} not readable")
        for path in sorted(data_dir.glob("*.nrv")):
            session.put(path.stem, load_volume(path))

    @app.exception_handler(HTTPException)
    async def _shape_errors(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code,
                            content={"error": detail})

    @app.get("/volumes")
    def list_volumes():
        with session.lock:
            items = sorted(session.volumes.items())
        return {"volumes": [_volume_entry(vid, v) for vid, v in items]}

    @app.post("/volumes")
    async def upload_volume(request: Request, id: str = Query(...)):
        if not _ID_PATTERN.match(id):
            _fail(422, "invalid_volume_id",
                  "ids are alphanumeric with ._- separators")
        body = await request.body()
        try:
            volume = volume_from_bytes(body)
        except ValueError as err:
            _fail(422, "malformed_volume", str(err))
        session.put(id, volume)
        return {"volume": _volume_entry(id, volume)}

    @app.get("/volumes/{volume_id}")
    def volume_info(volume_id: str):
        return {"volume": _volume_entry(volume_id, session.get(volume_id))}

    @app.get("/volumes/{volume_id}/slice")
    def volume_slice(volume_id: str, axis: str = "z", index: int = 0,
                     tf: str = "none", domain: str = "young",
                     gamma: float = 1.0):
        v = session.get(volume_id)
        if axis not in AXES:
            _fail(422, "invalid_axis", f"axis must be one of {sorted(AXES)}")
        if not 0 <= index < v.dims[AXES[axis]]:
            _fail(404, "index_out_of_range",
                  f"index {index} outside [0, {v.dims[AXES[axis]]})")
        if gamma <= 0:
            _fail(422, "invalid_gamma", "gamma must be positive")
        mapping = None
        if tf == "default":
            mapping = default_tf(_parse_domain(domain), histogram(v))
        elif tf != "none":
            _fail(422, "invalid_tf", "tf must be 'none' or 'default'")
        png = slice_png(v, axis, index, tf=mapping, gamma=gamma)
        return Response(content=png, media_type="image/png",
                        headers={"X-Provenance": _provenance(v)})

    @app.get("/volumes/{volume_id}/histogram")
    def volume_histogram(volume_id: str):
        v = session.get(volume_id)
        return {"histogram": histogram(v).to_dict(),
                "provenance": _provenance(v)}

    @app.post("/vesselness")
    def vesselness(body: dict):
        volume_id = body.get("volume_id")
        if not isinstance(volume_id, str):
            _fail(422, "missing_volume_id", "body needs a volume_id string")
        v = session.get(volume_id)
        try:
            params = VesselnessParams(
                sigmas_um=tuple(body.get(
                    "sigmas", session.vesselness_params.sigmas_um)),
                tau=float(body.get("tau", session.vesselness_params.tau)),
                intensity_scales=tuple(body.get("intensity_scales", ())),
            )
            response = jerman_response(v, params)
        except ValueError as err:
            _fail(422, "invalid_params", str(err))
        out_id = f"{volume_id}.vesselness"
        session.put(out_id, response)
        return {"volume_id": out_id,
                "params": {"sigmas": list(params.sigmas_um),
                           "tau": params.tau,
                           "intensity_scales": list(params.intensity_scales)},
                "provenance": _provenance(response)}

    @app.get("/components/{volume_id}")
    def components(volume_id: str, threshold: float = 0.1,
                   domain: str | None = None):
        v = session.get(volume_id)
        try:
            mask = threshold_response(v, threshold)
        except ValueError as err:
            _fail(422, "invalid_threshold", str(err))
        dom = _parse_domain(domain) if domain else None
        comps = connected_components(mask, domain=dom,
                                     provenance=v.provenance)
        return {"threshold": threshold,
                "count": len(comps),
                "components": [c.to_dict() for c in comps],
                "provenance": _provenance(v)}

    @app.get("/mesh/{volume_id}")
    def mesh(volume_id: str, iso: float = 0.5, domain: str = "young"):
        v = session.get(volume_id)
        try:
            m = extract_isosurface(v, iso, domain=_parse_domain(domain))
        except ValueError as err:
            _fail(422, "invalid_iso", str(err))
        return Response(content=mesh_to_obj(m), media_type="text/plain",
                        headers={"X-Provenance": _provenance(v)})

    @app.post("/morph/prepare")
    def morph_prepare(body: dict):
        young_id = body.get("young_id")
        old_id = body.get("old_id")
        if not isinstance(young_id, str) or not isinstance(old_id, str):
            _fail(422, "missing_volume_id",
                  "body needs young_id and old_id strings")
        direction = _parse_direction(str(body.get("dir", "o2y")))
        threshold = float(body.get("threshold", 0.1))
        session.get(young_id)
        session.get(old_id)
        job_id = uuid.uuid4().hex[:12]
        job = {"id": job_id, "status": "pending", "young_id": young_id,
               "old_id": old_id, "dir": direction.value, "error": None}
        with session.lock:
            session.jobs[job_id] = job

        def work():
            try:
                session.morph_field(young_id, old_id, direction, threshold)
                job["status"] = "done"
            except Exception as err:  # surfaced via the job status
                job["status"] = "error"
                job["error"] = str(err)

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id, "status": job["status"]}

    @app.get("/morph/jobs/{job_id}")
    def morph_job(job_id: str):
        with session.lock:
            job = session.jobs.get(job_id)
        if job is None:
            _fail(404, "job_not_found", f"no job {job_id!r}")
        return job

    @app.get("/morph/{young_id}/{old_id}")
    def morph_frame(young_id: str, old_id: str, sigma: float = 0.5,
                    dir: str = "o2y", threshold: float = 0.1,
                    format: str = "nrv", axis: str = "z", index: int = 0):
        direction = _parse_direction(dir)
        if not 0.0 <= sigma <= 1.0:
            _fail(422, "invalid_sigma", "sigma must lie in [0, 1]")
        young = session.get(young_id)
        old = session.get(old_id)
        field = session.morph_field(young_id, old_id, direction, threshold)
        frame = intermediate_volume(field, young, old, sigma, direction)
        if format == "nrv":
            return Response(content=volume_bytes(frame),
                            media_type="application/octet-stream",
                            headers={"X-Provenance": _provenance(frame)})
        if format == "png":
            if axis not in AXES:
                _fail(422, "invalid_axis",
                      f"axis must be one of {sorted(AXES)}")
            if not 0 <= index < frame.dims[AXES[axis]]:
                _fail(404, "index_out_of_range", f"index {index} out of range")
            return Response(content=slice_png(frame, axis, index),
                            media_type="image/png",
                            headers={"X-Provenance": _provenance(frame)})
        _fail(422, "invalid_format", "format must be 'nrv' or 'png'")

    @app.get("/metrics/density/{volume_id}")
    def density(volume_id: str, threshold: float = 0.1):
        v = session.get(volume_id)
        try:
            mask = foreground_mask(v, threshold)
        except ValueError as err:
            _fail(422, "invalid_threshold", str(err))
        return {"volume_id": volume_id,
                "threshold": threshold,
                "density_percent": fiber_density(mask),
                "provenance": _provenance(v)}

    @app.get("/stats")
    def stats():
        with session.lock:
            return {
                "session": session.id,
                "volumes": len(session.volumes),
                "morph_cache_entries": len(session.morph_cache),
                "morph_cache_hits": session.cache_hits,
                "morph_cache_misses": session.cache_misses,
                "jobs": {j["id"]: j["status"] for j in session.jobs.values()},
            }

    return app


def serve(bind: str = "127.0.0.1:8080",
          data_dir: str | Path | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(data_dir), host=host or "127.0.0.1",
                port=int(port or 8080), log_level="info")
