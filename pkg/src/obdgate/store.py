"""Local application store and alert database with an HTTP/JSON front.

Holds three kinds of records: versioned application packages, vehicle alert
records, and sighting reports posted by gateways.  State lives in memory and
optionally persists to flat JSON files under a data directory (one file per
app, one for alerts, sightings as an append-only JSON-lines log).

Endpoints: GET /apps, GET /apps/{id}?version=, GET /alerts?since=,
POST /sightings.  Admin publishing (POST /apps, POST /alerts,
POST /alerts/{plate}/deactivate) exists so scenarios and the CLI can seed
state over the same wire.  Mutations require the shared bearer token when
the store was created with one; reads are open.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse


class StoreError(ValueError):
    """Invalid store operation; `status` maps it onto an HTTP code."""

    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


def version_key(version: object) -> tuple:
    """Dotted strings and bare ints order naturally: 2 < "2.1" < 10."""
    if isinstance(version, int):
        return (version,)
    try:
        return tuple(int(part) for part in str(version).split("."))
    except ValueError:
        raise StoreError(f"unparseable version {version!r}") from None


@dataclass(frozen=True)
class PackageVersion:
    version: object
    payload: bytes
    digest: str  # sha256 of payload, pinned at publish time
    manifest: dict  # declared profile, privileged flag, resource needs


@dataclass
class PackageRecord:
    app_id: str
    versions: list[PackageVersion] = field(default_factory=list)

    @property
    def latest(self) -> PackageVersion:
        return self.versions[-1]

    def summary(self) -> dict:
        return {
            "app_id": self.app_id,
            "versions": [str(v.version) for v in self.versions],
            "latest": str(self.latest.version),
            "manifest": self.latest.manifest,
        }


@dataclass
class AlertRecord:
    make: str
    model: str
    color: str
    plate: str
    active: bool = True
    issued_at: float = 0.0
    updated_at: float = 0.0

    def to_dict(self) -> dict:
        return {
            "make": self.make,
            "model": self.model,
            "color": self.color,
            "plate": self.plate,
            "active": self.active,
            "issued_at": self.issued_at,
            "updated_at": self.updated_at,
        }


@dataclass(frozen=True)
class SightingReport:
    plate: str
    lat: float
    lon: float
    reported_at: float

    def to_dict(self) -> dict:
        return {
            "plate": self.plate,
            "lat": self.lat,
            "lon": self.lon,
            "reported_at": self.reported_at,
        }


class Store:
    """In-memory records with optional flat-file persistence."""

    def __init__(self, data_dir: str | Path | None = None):
        self.packages: dict[str, PackageRecord] = {}
        self.alerts: list[AlertRecord] = []
        self.sightings: list[SightingReport] = []
        self._lock = threading.Lock()
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self._load()

    # --- packages ---

    def publish(self, app_id: str, version, payload: bytes, manifest: dict) -> PackageVersion:
        if not app_id:
            raise StoreError("app id must be non-empty")
        if not isinstance(manifest, dict) or not manifest:
            raise StoreError("every version needs a manifest")
        with self._lock:
            record = self.packages.setdefault(app_id, PackageRecord(app_id))
            if record.versions and version_key(version) <= version_key(record.latest.version):
                raise StoreError(
                    f"version {version!r} does not increase on {record.latest.version!r}"
                )
            entry = PackageVersion(
                version=version,
                payload=bytes(payload),
                digest=hashlib.sha256(payload).hexdigest(),
                manifest=dict(manifest),
            )
            record.versions.append(entry)
            self._save_package(record)
            return entry

    def list_packages(self) -> list[dict]:
        return [r.summary() for r in sorted(self.packages.values(), key=lambda r: r.app_id)]

    def get_package(self, app_id: str, version: str | None = None) -> PackageVersion:
        record = self.packages.get(app_id)
        if record is None:
            raise StoreError(f"no app {app_id!r}", status=404)
        if version is None or version == "latest":
            entry = record.latest
        else:
            matches = [v for v in record.versions if str(v.version) == str(version)]
            if not matches:
                raise StoreError(f"no version {version!r} of {app_id!r}", status=404)
            entry = matches[0]
        # published bytes must never change behind their digest
        if hashlib.sha256(entry.payload).hexdigest() != entry.digest:
            raise StoreError(f"digest mismatch on {app_id!r} {entry.version!r}", status=500)
        return entry

    # --- alerts ---

    def add_alert(
        self, make: str, model: str, color: str, plate: str, issued_at: float = 0.0
    ) -> AlertRecord:
        if not plate:
            raise StoreError("plate must be non-empty")
        with self._lock:
            if any(a.active and a.plate == plate for a in self.alerts):
                raise StoreError(f"active alert for plate {plate!r} already exists")
            record = AlertRecord(make, model, color, plate, True, issued_at, issued_at)
            self.alerts.append(record)
            self._save_alerts()
            return record

    def deactivate_alert(self, plate: str, at: float = 0.0) -> AlertRecord:
        with self._lock:
            for record in self.alerts:
                if record.active and record.plate == plate:
                    record.active = False
                    record.updated_at = at
                    self._save_alerts()
                    return record
        raise StoreError(f"no active alert for plate {plate!r}", status=404)

    def get_alerts(self, since: float = 0.0) -> list[AlertRecord]:
        return [a for a in self.alerts if a.active and a.updated_at >= since]

    # --- sightings ---

    def post_sighting(self, plate: str, lat: float, lon: float, reported_at: float) -> SightingReport:
        if not any(a.active and a.plate == plate for a in self.alerts):
            raise StoreError(f"no active alert for plate {plate!r}", status=404)
        report = SightingReport(plate, float(lat), float(lon), float(reported_at))
        with self._lock:
            self.sightings.append(report)
            self._append_sighting(report)
        return report

    # --- persistence (flat JSON files) ---

    def _load(self) -> None:
        apps_dir = self.data_dir / "apps"
        if apps_dir.is_dir():
            for path in sorted(apps_dir.glob("*.json")):
                doc = json.loads(path.read_text(encoding="utf-8"))
                record = PackageRecord(doc["app_id"])
                for v in doc["versions"]:
                    record.versions.append(
                        PackageVersion(
                            version=v["version"],
                            payload=base64.b64decode(v["payload_b64"]),
                            digest=v["digest"],
                            manifest=v["manifest"],
                        )
                    )
                self.packages[record.app_id] = record
        alerts_path = self.data_dir / "alerts.json"
        if alerts_path.is_file():
            for doc in json.loads(alerts_path.read_text(encoding="utf-8")):
                self.alerts.append(AlertRecord(**doc))
        sightings_path = self.data_dir / "sightings.jsonl"
        if sightings_path.is_file():
            with sightings_path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self.sightings.append(SightingReport(**json.loads(line)))

    def _save_package(self, record: PackageRecord) -> None:
        if self.data_dir is None:
            return
        apps_dir = self.data_dir / "apps"
        apps_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "app_id": record.app_id,
            "versions": [
                {
                    "version": v.version,
                    "payload_b64": base64.b64encode(v.payload).decode("ascii"),
                    "digest": v.digest,
                    "manifest": v.manifest,
                }
                for v in record.versions
            ],
        }
        (apps_dir / f"{record.app_id}.json").write_text(json.dumps(doc, indent=1), encoding="utf-8")

    def _save_alerts(self) -> None:
        if self.data_dir is None:
            return
        self.data_dir.mkdir(parents=True, exist_ok=True)
        docs = [a.to_dict() for a in self.alerts]
        (self.data_dir / "alerts.json").write_text(json.dumps(docs, indent=1), encoding="utf-8")

    def _append_sighting(self, report: SightingReport) -> None:
        if self.data_dir is None:
            return
        self.data_dir.mkdir(parents=True, exist_ok=True)
        with (self.data_dir / "sightings.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(report.to_dict()) + "\n")


def create_app(store: Store, token: str | None = None):
    """FastAPI application over a Store; `token` gates mutations if set."""
    app = FastAPI(title="obdgate store", docs_url=None, redoc_url=None)

    def authorized(request: Request) -> bool:
        if token is None:
            return True
        return request.headers.get("authorization") == f"Bearer {token}"

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"ok": False, "error": message}, status_code=status)

    @app.get("/apps")
    def list_apps():
        return store.list_packages()

    @app.get("/apps/{app_id}")
    def get_app(app_id: str, version: str | None = None):
        try:
            entry = store.get_package(app_id, version)
        except StoreError as exc:
            return error(exc.status, str(exc))
        return {
            "app_id": app_id,
            "version": str(entry.version),
            "digest": entry.digest,
            "manifest": entry.manifest,
            "payload_b64": base64.b64encode(entry.payload).decode("ascii"),
        }

    @app.get("/alerts")
    def get_alerts(since: float = 0.0):
        return [a.to_dict() for a in store.get_alerts(since)]

    @app.post("/sightings")
    async def post_sighting(request: Request):
        if not authorized(request):
            return error(401, "bad or missing bearer token")
        try:
            body = await request.json()
        except Exception:
            return error(400, "body must be JSON")
        if not isinstance(body, dict):
            return error(400, "body must be a JSON object")
        missing = [k for k in ("plate", "lat", "lon", "reported_at") if k not in body]
        if missing:
            return error(400, f"missing fields: {', '.join(missing)}")
        try:
            report = store.post_sighting(
                str(body["plate"]), body["lat"], body["lon"], body["reported_at"]
            )
        except StoreError as exc:
            return error(exc.status, str(exc))
        except (TypeError, ValueError):
            return error(400, "lat/lon/reported_at must be numbers")
        return {"ok": True, "stored": report.to_dict(), "count": len(store.sightings)}

    @app.post("/apps")
    async def publish_app(request: Request):
        if not authorized(request):
            return error(401, "bad or missing bearer token")
        try:
            body = await request.json()
        except Exception:
            return error(400, "body must be JSON")
        try:
            payload = base64.b64decode(body["payload_b64"])
            entry = store.publish(body["app_id"], body["version"], payload, body["manifest"])
        except StoreError as exc:
            return error(exc.status, str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            return error(400, f"bad publish request: {exc}")
        return {"ok": True, "app_id": body["app_id"], "version": str(entry.version)}

    @app.post("/alerts")
    async def add_alert(request: Request):
        if not authorized(request):
            return error(401, "bad or missing bearer token")
        try:
            body = await request.json()
        except Exception:
            return error(400, "body must be JSON")
        try:
            record = store.add_alert(
                str(body["make"]),
                str(body["model"]),
                str(body["color"]),
                str(body["plate"]),
                float(body.get("issued_at", 0.0)),
            )
        except StoreError as exc:
            return error(exc.status, str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            return error(400, f"bad alert: {exc}")
        return {"ok": True, "alert": record.to_dict()}

    @app.post("/alerts/{plate}/deactivate")
    async def deactivate(plate: str, request: Request):
        if not authorized(request):
            return error(401, "bad or missing bearer token")
        try:
            record = store.deactivate_alert(plate)
        except StoreError as exc:
            return error(exc.status, str(exc))
        return {"ok": True, "alert": record.to_dict()}

    return app
