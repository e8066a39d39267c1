"""Trace-driven virtual vehicle.

A vehicle is replayed from a timestamped speed trace (optionally with GPS
coordinates) plus injected events (collision, check-engine, broadcast
alerts).  All signals use zero-order hold: the value at time ``t`` is the
last sample at or before ``t``.  Before the first sample the vehicle is
considered parked (speed 0); after the last sample the final value is held.

The vehicle services one request at a time.  When several requests are
pending, the bus grants the lowest PID first (lower PID = higher priority),
which is what makes a sustained flood of PID 0x00 starve every higher-PID
requester.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .obd import ObdError, ObdRequest, ObdResponse, PidCatalog, load_default_catalog

MOVING_SPEED_KMH = 1.0  # held speed must exceed this ...
MOVING_SUSTAIN_S = 2.0  # ... for this long before the vehicle counts as moving

DEFAULT_SERVICE_TIME_S = 0.010  # bus occupancy per serviced request


class TraceError(ValueError):
    """Malformed trace or event input."""


class UnsupportedPidError(ObdError):
    """Vehicle cannot answer this PID (not in catalog or profile)."""


class DrivingTrace:
    """Timestamped speed samples, optionally with GPS positions."""

    def __init__(
        self,
        t_s: np.ndarray,
        speed_kmh: np.ndarray,
        lat: np.ndarray | None = None,
        lon: np.ndarray | None = None,
    ):
        self.t = np.asarray(t_s, dtype=float)
        self.speed = np.asarray(speed_kmh, dtype=float)
        if self.t.ndim != 1 or self.t.shape != self.speed.shape or len(self.t) == 0:
            raise TraceError("trace needs matching, non-empty t/speed columns")
        if not np.all(np.isfinite(self.t)) or not np.all(np.isfinite(self.speed)):
            raise TraceError("trace contains non-finite values")
        if np.any(np.diff(self.t) <= 0):
            bad = int(np.argmax(np.diff(self.t) <= 0)) + 1
            raise TraceError(f"sample {bad}: timestamps must strictly increase")
        if np.any(self.speed < 0):
            raise TraceError("negative speed sample")
        if (lat is None) != (lon is None):
            raise TraceError("lat and lon must be given together")
        self.lat = None if lat is None else np.asarray(lat, dtype=float)
        self.lon = None if lon is None else np.asarray(lon, dtype=float)
        for arr in (self.lat, self.lon):
            if arr is not None and arr.shape != self.t.shape:
                raise TraceError("position columns must match the time column")
        # ZOH cumulative distance at each sample time, in km
        dt_h = np.diff(self.t) / 3600.0
        self._cum_km = np.concatenate(([0.0], np.cumsum(self.speed[:-1] * dt_h)))

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def has_position(self) -> bool:
        return self.lat is not None

    def _index_at(self, t: float) -> int:
        # last sample index i with t[i] <= t; -1 if before the trace
        return int(np.searchsorted(self.t, t, side="right")) - 1

    def held_speed(self, t: float) -> float:
        """Speed in km/h under zero-order hold; 0 before the trace starts."""
        i = self._index_at(t)
        return 0.0 if i < 0 else float(self.speed[min(i, len(self.speed) - 1)])

    def distance_km(self, t: float) -> float:
        """Distance covered by time ``t``: running integral of the held speed."""
        i = self._index_at(t)
        if i < 0:
            return 0.0
        i = min(i, len(self.t) - 1)
        return float(self._cum_km[i] + self.speed[i] * (t - self.t[i]) / 3600.0)

    def position(self, t: float) -> tuple[float, float] | None:
        if self.lat is None or self.lon is None:
            return None
        i = max(0, min(self._index_at(t), len(self.t) - 1))
        return float(self.lat[i]), float(self.lon[i])

    def sustained_above(self, t: float, threshold_kmh: float, window_s: float) -> bool:
        """True if the held speed exceeded ``threshold`` over all of [t-window, t]."""
        w0 = t - window_s
        if self.held_speed(w0) <= threshold_kmh:
            return False
        i0 = int(np.searchsorted(self.t, w0, side="right"))
        i1 = int(np.searchsorted(self.t, t, side="right"))
        return bool(np.all(self.speed[i0:i1] > threshold_kmh))


def load_trace(stream: io.TextIOBase) -> DrivingTrace:
    """Parse trace CSV with header ``t_s,speed_kmh`` and optional ``lat,lon``."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceError("empty trace file") from None
    header = [h.strip() for h in header]
    if header[:2] != ["t_s", "speed_kmh"]:
        raise TraceError("trace header must start with t_s,speed_kmh")
    with_pos = header[2:4] == ["lat", "lon"]
    if len(header) > 2 and not with_pos:
        raise TraceError(f"unrecognized trace columns: {header[2:]}")
    cols: list[list[float]] = [[] for _ in header]
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise TraceError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                cols[j].append(float(cell))
            except ValueError:
                raise TraceError(f"line {lineno}: bad number {cell!r}") from None
    try:
        return DrivingTrace(
            np.array(cols[0]),
            np.array(cols[1]),
            np.array(cols[2]) if with_pos else None,
            np.array(cols[3]) if with_pos else None,
        )
    except TraceError as exc:
        raise TraceError(f"trace body: {exc}") from None


def write_trace(stream: io.TextIOBase, trace: DrivingTrace) -> None:
    writer = csv.writer(stream)
    if trace.has_position:
        writer.writerow(["t_s", "speed_kmh", "lat", "lon"])
        for i in range(len(trace.t)):
            writer.writerow([trace.t[i], trace.speed[i], trace.lat[i], trace.lon[i]])
    else:
        writer.writerow(["t_s", "speed_kmh"])
        for i in range(len(trace.t)):
            writer.writerow([trace.t[i], trace.speed[i]])


class EventKind(str, Enum):
    COLLISION = "collision"
    CHECK_ENGINE_ON = "check_engine_on"
    CHECK_ENGINE_OFF = "check_engine_off"
    ALERT_ON = "alert_on"
    ALERT_OFF = "alert_off"


@dataclass(frozen=True)
class VehicleEvent:
    kind: EventKind
    at: float


def load_events(stream: io.TextIOBase) -> list[VehicleEvent]:
    """Parse the events JSON: a list of {"kind": ..., "at": seconds}."""
    doc = json.load(stream)
    if not isinstance(doc, list):
        raise TraceError("events file must hold a JSON list")
    events = []
    for i, entry in enumerate(doc):
        try:
            events.append(VehicleEvent(EventKind(entry["kind"]), float(entry["at"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"event {i}: {exc}") from None
    return events


# Signal values for PIDs that neither the trace nor the clock determines.
DEFAULT_CONSTANTS: dict[int, float] = {
    0x04: 35.0,     # engine load %
    0x05: 90.0,     # coolant degC
    0x06: 0.0,      # short fuel trim %
    0x07: 0.0,      # long fuel trim %
    0x0A: 300.0,    # fuel pressure kPa
    0x0B: 30.0,     # intake manifold kPa
    0x0C: 1800.0,   # rpm
    0x0E: 10.0,     # timing advance deg
    0x0F: 25.0,     # intake air degC
    0x10: 8.5,      # MAF g/s
    0x11: 18.0,     # throttle %
    0x21: 0.0,      # distance with MIL km
    0x22: 120.0,    # rail pressure rel kPa
    0x23: 4000.0,   # rail gauge kPa
    0x2C: 0.0,      # EGR %
    0x2E: 0.0,      # evap purge %
    0x2F: 62.0,     # tank level %
    0x30: 12.0,     # warmups
    0x31: 850.0,    # km since clear
    0x33: 101.0,    # barometric kPa
    0x42: 13.8,     # module voltage V
    0x43: 32.0,     # absolute load %
    0x46: 21.0,     # ambient degC
    0x4D: 0.0,      # minutes with MIL
    0x4E: 480.0,    # minutes since clear
    0x5C: 95.0,     # oil degC
    0x5E: 4.2,      # fuel rate L/h
    0x61: 20.0,     # demand torque %
}


@dataclass(frozen=True)
class VehicleProfile:
    """Static description of the simulated vehicle."""

    vin: str = "SIMVEH0000000TEST"
    base_odometer_km: float = 12345.6
    supported_pids: frozenset[int] | None = None  # None = whole catalog
    constants: dict[int, float] = field(default_factory=dict)
    # behavioral quirks, e.g. "deny_all_while_moving" (some vehicles refuse
    # diagnostics while driving); consumed by predefined policy derivation
    flags: tuple[str, ...] = ()

    def supports(self, pid: int, catalog: PidCatalog) -> bool:
        if pid not in catalog:
            return False
        return self.supported_pids is None or pid in self.supported_pids


class VirtualVehicle:
    """Replayable vehicle: signal source and single-server OBD responder."""

    def __init__(
        self,
        trace: DrivingTrace,
        profile: VehicleProfile | None = None,
        events: list[VehicleEvent] | None = None,
        catalog: PidCatalog | None = None,
        service_time_s: float = DEFAULT_SERVICE_TIME_S,
    ):
        if service_time_s <= 0:
            raise ValueError("service time must be positive")
        self.trace = trace
        self.profile = profile or VehicleProfile()
        self.catalog = catalog or load_default_catalog()
        self.service_time_s = service_time_s
        self.events: list[VehicleEvent] = []
        # frames that actually reached the vehicle: (mode, pid, t)
        self.request_log: list[tuple[int, int, float]] = []
        for ev in events or ():
            self.inject_event(ev)

    # --- events -------------------------------------------------------

    def inject_event(self, event: VehicleEvent) -> None:
        if not self.trace.t0 <= event.at <= self.trace.t_end:
            raise TraceError(
                f"event at {event.at} s outside trace span "
                f"[{self.trace.t0}, {self.trace.t_end}]"
            )
        self.events.append(event)
        self.events.sort(key=lambda e: e.at)

    def _window_active(self, t: float, on: EventKind, off: EventKind) -> bool:
        active = False
        for ev in self.events:
            if ev.at > t:
                break
            if ev.kind is on:
                active = True
            elif ev.kind is off:
                active = False
        return active

    # --- signals ------------------------------------------------------

    def held_speed(self, t: float) -> float:
        return self.trace.held_speed(t)

    def odometer_km(self, t: float) -> float:
        return self.profile.base_odometer_km + self.trace.distance_km(t)

    def position(self, t: float) -> tuple[float, float] | None:
        return self.trace.position(t)

    def moving(self, t: float) -> bool:
        """Debounced motion: held speed > 1 km/h sustained for 2 s."""
        return self.trace.sustained_above(t, MOVING_SPEED_KMH, MOVING_SUSTAIN_S)

    def health_fault(self, t: float) -> bool:
        return self._window_active(t, EventKind.CHECK_ENGINE_ON, EventKind.CHECK_ENGINE_OFF)

    def emergency(self, t: float) -> bool:
        # collisions latch until the end of the run
        return any(ev.kind is EventKind.COLLISION and ev.at <= t for ev in self.events)

    def alert_active(self, t: float) -> bool:
        return self._window_active(t, EventKind.ALERT_ON, EventKind.ALERT_OFF)

    # --- OBD service ----------------------------------------------------

    def signal_value(self, pid: int, t: float) -> float:
        if not self.profile.supports(pid, self.catalog):
            raise UnsupportedPidError(f"vehicle does not answer PID 0x{pid:02X}")
        if pid == 0x0D:
            return self.held_speed(t)
        if pid == 0xA6:
            return self.odometer_km(t)
        if pid == 0x1F:
            return min(max(0.0, t - self.trace.t0), 65535.0)
        if pid == 0x00:
            # probe: bitmask of supported PIDs in 0x01..0x20
            mask = 0
            for code in range(0x01, 0x21):
                if self.profile.supports(code, self.catalog):
                    mask |= 1 << (0x20 - code)
            return float(mask)
        if pid in self.profile.constants:
            return self.profile.constants[pid]
        if pid in DEFAULT_CONSTANTS:
            return DEFAULT_CONSTANTS[pid]
        raise UnsupportedPidError(f"no signal source for PID 0x{pid:02X}")

    def query(self, pid: int, t: float) -> ObdResponse:
        """Answer a read without logging (used by tests and introspection).

        The response value is the decode of the encoded payload, i.e. it is
        quantized exactly as a wire reply would be.
        """
        spec = self.catalog.lookup(pid)
        # the vehicle keeps answering with held signals if queried past the
        # trace end (the simulation may finish a service slightly late)
        t_eff = min(t, self.trace.t_end)
        raw = spec.encode(self.signal_value(pid, t_eff))
        return ObdResponse(
            pid=pid, raw=raw, value=spec.decode(raw), unit=spec.unit, answered_at=t
        )

    def serve(self, request: ObdRequest, t: float) -> ObdResponse:
        """Service one frame that reached the bus; logged as ground truth."""
        if not request.is_read:
            raise UnsupportedPidError(f"service mode 0x{request.mode:02X} not handled")
        self.request_log.append((request.mode, request.pid, t))
        return self.query(request.pid, t)


def bus_arbitrate(pending: list[ObdRequest]) -> ObdRequest:
    """Pick the next frame: lowest PID wins; FIFO (then seq) breaks ties."""
    if not pending:
        raise ValueError("no pending requests")
    return min(pending, key=lambda r: (r.pid, r.issued_at, r.seq))


def synth_trace(
    duration_s: float,
    rng: np.random.Generator,
    dt_s: float = 1.0,
    top_kmh: float = 60.0,
) -> DrivingTrace:
    """Random city-style trace: cruise segments split by short stops."""
    n = max(2, int(round(duration_s / dt_s)) + 1)
    t = np.arange(n) * dt_s
    speed = np.zeros(n)
    i = 0
    while i < n:
        seg = int(rng.integers(5, 30))
        if rng.random() < 0.25:
            i += seg  # dwell at rest
            continue
        target = float(rng.uniform(0.3, 1.0) * top_kmh)
        for j in range(i, min(n, i + seg)):
            ramp = min(1.0, (j - i + 1) / 5.0)
            speed[j] = target * ramp
        i += seg
    return DrivingTrace(t, np.minimum(speed, 254.0))
