"""HTTP analysis-job service: datasets in, atlases and iso-surface meshes out.

The server scans a dataset directory (one subdirectory per dataset, each
holding cube headers and optionally a packed ``atlas.png`` + ``atlas.json``),
serves the catalog and atlas files, and runs iso-surface extraction jobs
from a FIFO queue.  Submission is non-blocking; clients poll the job until
it is ``done`` and then fetch the produced mesh from the asset store.

Jobs run on ``worker_width`` worker threads (default 1, which keeps
timings reproducible).  Extraction uses the in-process mesh backend or, if
configured, an external command template with ``{input_cube}``, ``{iso}``
and ``{output_mesh}`` placeholders; a crashing external command fails its
job but never the server.  Assets are content-addressed by the canonical
request, so a repeated request is answered from cache with a ``cached``
flag and the original timing.  Asset bytes never change once published.

Endpoints:
    GET  /datasets                    catalog summary
    GET  /datasets/{d}                dims, spacing, fields, atlases
    GET  /datasets/{d}/atlas          packed atlas PNG
    GET  /datasets/{d}/atlas-meta     atlas sidecar JSON
    POST /jobs                        submit an analysis request -> {"id": ...}
    GET  /jobs/{id}                   job snapshot
    GET  /assets/{name}               mesh bytes (OBJ / glTF / buffers)

All responses carry permissive CORS headers so a browser viewer can talk
to the service directly.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import queue
import shlex
import shutil
import subprocess
import sys
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import MeshFormatError, VoxkitError
from .field import ScalarField, load_cube, save_cube
from .mesh import compute_vertex_normals, marching_cubes, multilayer_surfaces
from .meshio import export_mesh, import_mesh

_CONTENT_TYPES = {
    ".png": "image/png", ".json": "application/json",
    ".obj": "text/plain; charset=utf-8", ".mtl": "text/plain; charset=utf-8",
    ".gltf": "model/gltf+json", ".bin": "application/octet-stream",
}


class SubmitError(VoxkitError):
    """Request rejected at submission; no job was created."""


@dataclass
class ServerConfig:
    dataset_dir: str
    host: str = "127.0.0.1"
    port: int = 0  # 0: pick a free port
    external_command: str | None = None
    external_timeout_s: float = 120.0
    worker_width: int = 1
    asset_dir: str | None = None
    preload: bool = False

    def __post_init__(self):
        if self.worker_width < 1:
            raise ValueError("worker_width must be >= 1")
        if self.external_timeout_s <= 0:
            raise ValueError("external_timeout_s must be positive")
        if self.external_command is not None:
            missing = [p for p in ("{input_cube}", "{iso}", "{output_mesh}")
                       if p not in self.external_command]
            if missing:
                raise ValueError(
                    f"external command template is missing placeholder(s): {missing}")
        if self.asset_dir is None:
            self.asset_dir = os.path.join(self.dataset_dir, "_assets")

    @classmethod
    def from_file(cls, path: str) -> "ServerConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        listen = doc.get("listen", "127.0.0.1:0")
        host, _, port = listen.rpartition(":")
        return cls(dataset_dir=doc["dataset_dir"], host=host or "127.0.0.1",
                   port=int(port), external_command=doc.get("external_command"),
                   external_timeout_s=float(doc.get("external_timeout_s", 120.0)),
                   worker_width=int(doc.get("worker_width", 1)),
                   asset_dir=doc.get("asset_dir"),
                   preload=bool(doc.get("preload", False)))


def _is_cube_header(path: str) -> bool:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return isinstance(doc, dict) and "dims" in doc and "data" in doc and "dtype" in doc
    except (OSError, json.JSONDecodeError):
        return False


class DatasetCatalog:
    """Immutable view of the dataset directory plus a field cache."""

    def __init__(self, dataset_dir: str):
        self.dataset_dir = dataset_dir
        self.datasets: dict[str, dict] = {}
        self._cache: dict[tuple[str, str], ScalarField] = {}
        self._lock = threading.Lock()
        self._scan()

    def _scan(self) -> None:
        if not os.path.isdir(self.dataset_dir):
            raise VoxkitError(f"dataset directory {self.dataset_dir!r} does not exist")
        for entry in sorted(os.listdir(self.dataset_dir)):
            path = os.path.join(self.dataset_dir, entry)
            if not os.path.isdir(path) or entry.startswith("_"):
                continue
            fields: dict[str, dict] = {}
            atlases = []
            for fn in sorted(os.listdir(path)):
                full = os.path.join(path, fn)
                if fn.endswith(".json") and _is_cube_header(full):
                    with open(full, "r", encoding="utf-8") as fh:
                        header = json.load(fh)
                    fields[str(header["name"])] = {
                        "path": full, "dims": header["dims"],
                        "spacing": header["spacing"], "origin": header["origin"],
                        "units": header.get("units", "")}
                elif fn.endswith(".png") and os.path.exists(full[:-4] + ".json"):
                    atlases.append(fn[:-4])
            if fields:
                self.datasets[entry] = {"name": entry, "path": path,
                                        "fields": fields, "atlases": atlases}

    def field_header(self, dataset: str, field: str) -> dict:
        ds = self.datasets.get(dataset)
        if ds is None:
            raise SubmitError(f"unknown dataset {dataset!r}")
        info = ds["fields"].get(field)
        if info is None:
            raise SubmitError(f"dataset {dataset!r} has no field {field!r} "
                              f"(available: {sorted(ds['fields'])})")
        return info

    def load_field(self, dataset: str, field: str) -> ScalarField:
        info = self.field_header(dataset, field)
        key = (dataset, field)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        loaded = load_cube(info["path"])
        with self._lock:
            return self._cache.setdefault(key, loaded)

    def preload(self) -> None:
        for name, ds in self.datasets.items():
            for field in ds["fields"]:
                self.load_field(name, field)


def parse_request(doc: dict) -> dict:
    """Validate and canonicalize an analysis request body."""
    if not isinstance(doc, dict):
        raise SubmitError("request body must be a JSON object")
    kind = doc.get("kind", "isosurface")
    if kind not in ("isosurface", "multilayer"):
        raise SubmitError(f"unknown kind {kind!r}")
    fmt = doc.get("format", "obj")
    if fmt not in ("obj", "gltf"):
        raise SubmitError(f"unknown output format {fmt!r}")
    backend = doc.get("backend", "internal")
    if backend not in ("internal", "external"):
        raise SubmitError(f"unknown backend {backend!r}")
    for key in ("dataset", "field"):
        if not isinstance(doc.get(key), str) or not doc[key]:
            raise SubmitError(f"request needs a string {key!r}")

    req = {"kind": kind, "dataset": doc["dataset"], "field": doc["field"],
           "format": fmt, "backend": backend}
    if kind == "isosurface":
        iso = doc.get("iso")
        if not _finite(iso):
            raise SubmitError("isosurface request needs a finite numeric 'iso'")
        req["iso"] = float(iso)
    else:
        layers = doc.get("layers")
        if layers is None:
            isos = doc.get("isos")
            if not isinstance(isos, list) or not isos:
                raise SubmitError("multilayer request needs 'isos' or 'layers'")
            n = len(isos)
            layers = [{"iso": v, "color": [1.0, 1.0, 1.0],
                       "opacity": (i + 1) / n} for i, v in enumerate(isos)]
        norm_layers = []
        for layer in layers:
            iso = layer.get("iso")
            if not _finite(iso):
                raise SubmitError("every layer needs a finite numeric 'iso'")
            color = layer.get("color", [1.0, 1.0, 1.0])
            opacity = float(layer.get("opacity", 1.0))
            if not 0.0 < opacity <= 1.0:
                raise SubmitError(f"layer opacity must be in (0, 1], got {opacity}")
            norm_layers.append({"iso": float(iso),
                                "color": [float(c) for c in color][:3],
                                "opacity": opacity})
        req["layers"] = norm_layers
    return req


def _finite(x) -> bool:
    return (isinstance(x, (int, float)) and not isinstance(x, bool)
            and math.isfinite(x))


@dataclass
class JobRecord:
    id: str
    request: dict
    status: str = "queued"  # queued -> running -> done | failed
    asset: str | None = None
    error: str | None = None
    timing_ms: float | None = None
    cached: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "request": self.request, "status": self.status,
                "asset": self.asset, "error": self.error,
                "timing_ms": self.timing_ms, "cached": self.cached}


class JobManager:
    def __init__(self, catalog: DatasetCatalog, config: ServerConfig):
        self.catalog = catalog
        self.config = config
        os.makedirs(config.asset_dir, exist_ok=True)
        self._jobs: dict[str, JobRecord] = {}
        self._queue: "queue.Queue[str]" = queue.Queue()
        self._lock = threading.Lock()
        self._counter = 0
        self._completed: dict[str, tuple[str, float]] = {}  # cache key -> (asset, ms)
        self._stop = threading.Event()
        self._workers = [threading.Thread(target=self._worker, daemon=True,
                                          name=f"job-worker-{i}")
                         for i in range(config.worker_width)]
        for w in self._workers:
            w.start()

    # -- public API ---------------------------------------------------

    def submit(self, doc: dict) -> str:
        req = parse_request(doc)
        self.catalog.field_header(req["dataset"], req["field"])
        if req["backend"] == "external":
            if self.config.external_command is None:
                raise SubmitError("no external backend command is configured")
            if req["kind"] != "isosurface":
                raise SubmitError("the external backend supports only kind=isosurface "
                                  "(its command template carries a single iso value)")
        with self._lock:
            self._counter += 1
            job_id = f"{self._counter:06d}-{uuid.uuid4().hex[:8]}"
            key = self._cache_key(req)
            hit = self._completed.get(key)
            if hit is not None:
                asset, ms = hit
                self._jobs[job_id] = JobRecord(id=job_id, request=req, status="done",
                                               asset=asset, timing_ms=ms, cached=True)
                return job_id
            self._jobs[job_id] = JobRecord(id=job_id, request=req)
        self._queue.put(job_id)
        return job_id

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return None if job is None else job.to_dict()

    def shutdown(self) -> None:
        self._stop.set()
        for _ in self._workers:
            self._queue.put("")  # wake blocked workers
        for w in self._workers:
            w.join(timeout=5)

    # -- worker side ----------------------------------------------------

    def _cache_key(self, req: dict) -> str:
        return hashlib.sha256(
            json.dumps(req, sort_keys=True).encode()).hexdigest()

    def _set(self, job_id: str, **changes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            for k, v in changes.items():
                setattr(job, k, v)

    def _worker(self) -> None:
        while not self._stop.is_set():
            job_id = self._queue.get()
            if not job_id:
                continue
            with self._lock:
                req = self._jobs[job_id].request
            self._set(job_id, status="running")
            start = time.monotonic()
            try:
                asset = self._run_backend(req)
                ms = (time.monotonic() - start) * 1000.0
                with self._lock:
                    job = self._jobs[job_id]
                    job.status, job.asset, job.timing_ms = "done", asset, ms
                    self._completed[self._cache_key(req)] = (asset, ms)
            except Exception as exc:  # never let a job take the server down
                ms = (time.monotonic() - start) * 1000.0
                self._set(job_id, status="failed", error=str(exc), timing_ms=ms)

    def _asset_name(self, req: dict) -> str:
        return self._cache_key(req)[:16] + "." + req["format"]

    def _publish(self, produced: str, asset_name: str) -> str:
        """Copy produced file plus sidecars into the asset store; never overwrite."""
        src_stem = os.path.splitext(produced)[0]
        dst_stem = os.path.join(self.config.asset_dir, os.path.splitext(asset_name)[0])
        for ext in (os.path.splitext(asset_name)[1], ".mtl", ".bin"):
            src, dst = src_stem + ext, dst_stem + ext
            if not os.path.exists(src) or os.path.exists(dst):
                continue
            tmp = dst + f".tmp-{uuid.uuid4().hex[:8]}"
            shutil.copyfile(src, tmp)
            os.replace(tmp, dst)
        return asset_name

    def _run_backend(self, req: dict) -> str:
        asset_name = self._asset_name(req)
        field = self.catalog.load_field(req["dataset"], req["field"])
        with tempfile.TemporaryDirectory(prefix="voxkit-job-") as tmp:
            # export under the final name so glTF buffer URIs and OBJ
            # mtllib references stay valid inside the asset store
            final = os.path.join(tmp, asset_name)
            if req["backend"] == "internal":
                if req["kind"] == "isosurface":
                    mesh = marching_cubes(field, req["iso"])
                    if not mesh.is_empty():
                        mesh = compute_vertex_normals(mesh, field)
                    export_mesh(mesh, final)
                else:
                    scene = multilayer_surfaces(
                        field, [(l["iso"], l["color"], l["opacity"])
                                for l in req["layers"]])
                    export_mesh(scene, final)
            else:
                raw = os.path.join(tmp, "output." + req["format"])
                self._run_external(field, req, raw, tmp)
                # validate, then re-export so sidecar references are rehomed
                export_mesh(import_mesh(raw), final)
            return self._publish(final, asset_name)

    def _run_external(self, field: ScalarField, req: dict, produced: str,
                      tmp: str) -> None:
        cube_path = os.path.join(tmp, "input.json")
        save_cube(field, cube_path)
        subs = {"{input_cube}": cube_path, "{iso}": repr(req["iso"]),
                "{output_mesh}": produced}
        argv = []
        for token in shlex.split(self.config.external_command):
            for k, v in subs.items():
                token = token.replace(k, v)
            argv.append(token)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=self.config.external_timeout_s)
        except subprocess.TimeoutExpired as exc:
            raise VoxkitError(
                f"external command timed out after {self.config.external_timeout_s}s: "
                f"{' '.join(argv)}") from exc
        except OSError as exc:
            raise VoxkitError(f"external command failed to start: {exc}") from exc
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "").strip()[-500:]
            raise VoxkitError(
                f"external command exited with status {proc.returncode}: {tail}")
        if not os.path.exists(produced):
            raise MeshFormatError(
                f"external command succeeded but wrote no mesh at {produced}")


class _Handler(BaseHTTPRequestHandler):
    server_version = "voxkit"

    # the ThreadingHTTPServer subclass below carries .catalog and .jobs
    def log_message(self, *args) -> None:
        pass

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, code: int, doc) -> None:
        self._send(code, json.dumps(doc).encode(), "application/json")

    def _send_file(self, path: str) -> None:
        if not os.path.isfile(path):
            self._send_json(404, {"error": "no such resource"})
            return
        ext = os.path.splitext(path)[1]
        with open(path, "rb") as fh:
            self._send(200, fh.read(), _CONTENT_TYPES.get(ext, "application/octet-stream"))

    def do_OPTIONS(self) -> None:
        self._send(204, b"", "text/plain")

    def do_GET(self) -> None:
        catalog: DatasetCatalog = self.server.catalog
        jobs: JobManager = self.server.jobs
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            if parts == ["datasets"]:
                self._send_json(200, [
                    {"name": ds["name"],
                     "dims": next(iter(ds["fields"].values()))["dims"],
                     "fields": sorted(ds["fields"])}
                    for ds in catalog.datasets.values()])
            elif len(parts) == 2 and parts[0] == "datasets":
                ds = catalog.datasets.get(parts[1])
                if ds is None:
                    self._send_json(404, {"error": f"unknown dataset {parts[1]!r}"})
                    return
                first = next(iter(ds["fields"].values()))
                self._send_json(200, {
                    "name": ds["name"], "dims": first["dims"],
                    "spacing": first["spacing"], "origin": first["origin"],
                    "fields": [{"name": n, "dims": f["dims"], "units": f["units"]}
                               for n, f in ds["fields"].items()],
                    "atlases": ds["atlases"]})
            elif len(parts) == 3 and parts[0] == "datasets" and parts[2] in ("atlas", "atlas-meta"):
                ds = catalog.datasets.get(parts[1])
                if ds is None:
                    self._send_json(404, {"error": f"unknown dataset {parts[1]!r}"})
                    return
                ext = ".png" if parts[2] == "atlas" else ".json"
                self._send_file(os.path.join(ds["path"], "atlas" + ext))
            elif len(parts) == 2 and parts[0] == "jobs":
                job = jobs.get(parts[1])
                if job is None:
                    self._send_json(404, {"error": f"unknown job {parts[1]!r}"})
                else:
                    self._send_json(200, job)
            elif len(parts) == 2 and parts[0] == "assets":
                name = os.path.basename(parts[1])  # no path escapes
                self._send_file(os.path.join(jobs.config.asset_dir, name))
            else:
                self._send_json(404, {"error": f"unknown path {self.path!r}"})
        except Exception as exc:
            self._send_json(500, {"error": str(exc)})

    def do_POST(self) -> None:
        jobs: JobManager = self.server.jobs
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts != ["jobs"]:
            self._send_json(404, {"error": f"unknown path {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_json(400, {"error": f"malformed request body: {exc}"})
            return
        try:
            job_id = jobs.submit(doc)
        except SubmitError as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except Exception as exc:
            self._send_json(500, {"error": str(exc)})
            return
        self._send_json(200, {"id": job_id})


class AnalysisServer:
    """Owns the HTTP server, the catalog and the job workers."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.catalog = DatasetCatalog(config.dataset_dir)
        if config.preload:
            self.catalog.preload()
        self.jobs = JobManager(self.catalog, config)
        self._httpd = ThreadingHTTPServer((config.host, config.port), _Handler)
        self._httpd.catalog = self.catalog
        self._httpd.jobs = self.jobs
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self) -> "AnalysisServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="voxkit-http", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        print(f"voxkit service listening on {self.url}", file=sys.stderr)
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self.jobs.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
