"""The gateway core: one mediated port between principals and the vehicle.

Every request goes through the same pipeline: blocked-check, policy
evaluation against the current context snapshot, rate-limit admission, bus
arbitration, service, then an optional per-principal response transform.
Denied requests are logged to the probe stream and never reach the vehicle.

Time is simulated.  The core is a single event loop over a heap of
(time, rank, seq) events; ranks order same-instant events as
arrivals < limiter releases < service completions < bus grabs, so a
saturating flood admitted at the same instant a service completes wins the
bus before any later-released frame.  All state mutation happens on this
loop; `probe` and the counters read consistent snapshots between events.

Rate limiting is a strict-spacing release: request i leaves the limiter at
max(arrival_i, release_{i-1} + 1/rate), FIFO, bounded queue that drops the
newest on overflow.  The bus serves one frame at a time; among released
frames the lowest PID wins, ties broken by issue time then sequence number.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .obd import ObdRequest, ObdResponse, UnknownPidError, ValueRangeError, pid_hex
from .policy import (
    Decision,
    LocationRegistry,
    PolicyStore,
    Principal,
    PrincipalPolicyDoc,
    evaluate,
    predefined_policies,
    recognize_context,
)
from .privacy import PrivacyConfig, SpeedTransform
from .vehicle import VirtualVehicle, bus_arbitrate

OPERATOR_ID = "operator"
DEFAULT_QUEUE_DEPTH = 1024

# denial reasons surfaced in probe records and submit outcomes
DENY_BLOCKED = "blocked"
DENY_POLICY = "policy"
DENY_OVERFLOW = "queue-overflow"
DENY_APP_PAUSED = "app-paused"
DENY_UNSUPPORTED = "unsupported"

# event ranks; see module docstring for why the order matters
_ARRIVAL, _RELEASE, _COMPLETE, _BUS_TRY = 0, 1, 2, 3

TO_VEHICLE = "to_vehicle"
FROM_VEHICLE = "from_vehicle"
DENIED = "denied"


class GatewayError(ValueError):
    """Bad management call: unknown principal, bad state, no privilege."""


@dataclass(frozen=True)
class ProbeRecord:
    seq: int
    t: float
    principal_id: str
    direction: str  # to_vehicle | from_vehicle | denied
    frame: tuple[int, ...]
    pid: int
    reason: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "seq": self.seq,
            "t": self.t,
            "principal": self.principal_id,
            "direction": self.direction,
            "frame": list(self.frame),
            "pid": self.pid,
        }
        if self.reason is not None:
            doc["reason"] = self.reason
        return doc


@dataclass
class RateLimiterState:
    """Strict 1/rate spacing with a single-request burst allowance."""

    max_rate: float = math.inf
    last_release: float = -math.inf
    dropped: int = 0

    def next_release(self, arrival: float) -> float:
        spacing = 0.0 if math.isinf(self.max_rate) else 1.0 / self.max_rate
        release = max(arrival, self.last_release + spacing)
        self.last_release = release
        return release


@dataclass(frozen=True)
class Delivery:
    """What the principal actually receives (post transform)."""

    principal_id: str
    pid: int
    value: float
    unit: str
    answered_at: float
    transformed: bool
    frame: tuple[int, ...]


class SubmitTicket:
    """Tracks one submitted request through the pipeline."""

    __slots__ = (
        "request",
        "principal_id",
        "status",
        "reason",
        "released_at",
        "served_at",
        "completed_at",
        "response",
    )

    def __init__(self, principal_id: str, request: ObdRequest):
        self.principal_id = principal_id
        self.request = request
        self.status = "pending"  # pending | queued | denied | answered
        self.reason: str | None = None
        self.released_at: float | None = None
        self.served_at: float | None = None
        self.completed_at: float | None = None
        self.response: ObdResponse | None = None

    @property
    def latency_s(self) -> float | None:
        if self.completed_at is None:
            return None
        return self.completed_at - self.request.issued_at


# --- applications -------------------------------------------------------------

APP_INSTALLED = "installed"
APP_RUNNING = "running"
APP_PAUSED = "paused"
APP_HALTED = "halted"


@dataclass(frozen=True)
class AppPackage:
    app_id: str
    version: object  # int or dotted string, must be comparable across updates
    profile: str = "unknown"
    privileged: bool = False  # manifest flag granting port-management powers
    manifest: dict = field(default_factory=dict)


@dataclass
class AppHandle:
    app_id: str
    version: object
    state: str = APP_INSTALLED
    privileged: bool = False
    sandbox: dict = field(default_factory=dict)


def _version_key(version: object) -> tuple:
    if isinstance(version, int):
        return (version,)
    try:
        return tuple(int(part) for part in str(version).split("."))
    except ValueError:
        raise GatewayError(f"unparseable version {version!r}") from None


class _Entry:
    """A request in flight between admission and completion."""

    __slots__ = ("request", "session", "ticket", "cancelled", "bypass")

    def __init__(self, request, session, ticket, bypass=False):
        self.request = request
        self.session = session
        self.ticket = ticket
        self.cancelled = False
        self.bypass = bypass


@dataclass
class Session:
    principal: Principal
    limiter: RateLimiterState
    blocked: bool = False
    queue: deque = field(default_factory=deque)  # admitted _Entry, FIFO
    probe_subscribers: list = field(default_factory=list)
    handle: AppHandle | None = None
    transform_config: PrivacyConfig | None = None
    transforms: dict = field(default_factory=dict)  # resource -> SpeedTransform
    transform_resources: tuple = ("0x0D",)
    delivered: list = field(default_factory=list)
    stats: dict = field(
        default_factory=lambda: {
            "submitted": 0,
            "denied": 0,
            "forwarded": 0,
            "completed": 0,
            "dropped_overflow": 0,
        }
    )


class Gateway:
    """Single-vehicle, single-port mediation core on simulated time."""

    def __init__(
        self,
        vehicle: VirtualVehicle,
        policy_store: PolicyStore | None = None,
        registry: LocationRegistry | None = None,
        queue_depth: int = DEFAULT_QUEUE_DEPTH,
        overhead_s: float = 0.0,
    ):
        if queue_depth < 1:
            raise GatewayError("queue depth must be >= 1")
        if overhead_s < 0:
            raise GatewayError("overhead must be >= 0")
        self.vehicle = vehicle
        self.store = policy_store if policy_store is not None else PolicyStore()
        self.registry = registry
        self.queue_depth = queue_depth
        self.overhead_s = overhead_s
        self.sessions: dict[str, Session] = {}
        self.apps: dict[str, AppHandle] = {}
        self._probes: dict[str, list[ProbeRecord]] = {}
        self._probe_seq = 0
        self._heap: list = []
        self._event_seq = 0
        self._submit_seq = 0
        self._now = 0.0
        self._bus_busy = False
        self._bus_pending: list[_Entry] = []
        # the management plane itself acts as a privileged principal
        self.attach(Principal(OPERATOR_ID, kind="operator", profile="unrestricted", privileged=True))

    # --- clock and event loop ---

    @property
    def now(self) -> float:
        return self._now

    def _schedule(self, t: float, rank: int, action: str, payload) -> None:
        self._event_seq += 1
        heapq.heappush(self._heap, (t, rank, self._event_seq, action, payload))

    def run_until(self, t: float) -> None:
        """Process every event with timestamp <= t, then set the clock to t."""
        if t < self._now:
            raise GatewayError(f"cannot run backwards to {t} from {self._now}")
        self._run(horizon=t)

    def drain(self, flush_transforms: bool = True) -> float:
        """Run the simulation dry; optionally flush transform residue."""
        self._run(horizon=None)
        if flush_transforms:
            for principal_id in list(self.sessions):
                self.flush_transforms(principal_id)
        return self._now

    def _run(self, horizon: float | None) -> None:
        while self._heap:
            t, rank, seq, action, payload = self._heap[0]
            if horizon is not None and t > horizon:
                break
            heapq.heappop(self._heap)
            self._now = max(self._now, t)
            if action == "arrival":
                self._on_arrival(payload)
            elif action == "release":
                self._on_release(payload)
            elif action == "complete":
                self._on_complete(payload)
            elif action == "bus":
                self._bus_try()
        if horizon is not None:
            self._now = max(self._now, horizon)

    # --- probe plumbing ---

    def _record(self, principal_id, direction, frame, pid, reason=None) -> ProbeRecord:
        self._probe_seq += 1
        rec = ProbeRecord(self._probe_seq, self._now, principal_id, direction, tuple(frame), pid, reason)
        self._probes.setdefault(principal_id, []).append(rec)
        session = self.sessions.get(principal_id)
        if session is not None:
            for cb in session.probe_subscribers:
                cb(rec)
        return rec

    # --- attach / detach ---

    def attach(self, principal: Principal) -> Session:
        if principal.id in self.sessions:
            raise GatewayError(f"principal {principal.id!r} already attached")
        session = Session(principal=principal, limiter=RateLimiterState())
        self.sessions[principal.id] = session
        self._probes.setdefault(principal.id, [])
        for policy in predefined_policies(principal, self.vehicle.profile):
            try:
                self.store.add(policy)
            except Exception:
                # re-attach after detach: identical predefined rows already stored
                pass
        return session

    def detach(self, principal_id: str) -> None:
        session = self._session(principal_id)
        self._flush_queue(session, DENY_BLOCKED)
        del self.sessions[principal_id]

    def _session(self, principal_id: str) -> Session:
        try:
            return self.sessions[principal_id]
        except KeyError:
            raise GatewayError(f"unknown principal {principal_id!r}") from None

    def _require_privileged(self, caller_id: str) -> Session:
        session = self._session(caller_id)
        if not session.principal.privileged:
            raise GatewayError(f"principal {caller_id!r} lacks the privileged capability")
        return session

    # --- the request pipeline ---

    def submit(self, principal_id: str, request: ObdRequest) -> SubmitTicket:
        """Enter a request into the pipeline at max(now, issued_at).

        The returned ticket resolves to queued/denied once the arrival is
        processed (immediately when issued_at <= now) and to answered when
        its response comes back from the vehicle.
        """
        session = self._session(principal_id)
        if request.seq == 0:
            # unique submission index so arbitration ties stay deterministic
            self._submit_seq += 1
            request = replace(request, seq=self._submit_seq)
        ticket = SubmitTicket(principal_id, request)
        arrival = max(self._now, request.issued_at)
        self._schedule(arrival, _ARRIVAL, "arrival", (session, request, ticket))
        if arrival <= self._now:
            self._run(horizon=self._now)
        return ticket

    def _deny(self, session, request, ticket, reason) -> None:
        ticket.status = "denied"
        ticket.reason = reason
        session.stats["denied"] += 1
        self._record(session.principal.id, DENIED, request.to_frame(), request.pid, reason)

    def _on_arrival(self, payload) -> None:
        session, request, ticket = payload
        session.stats["submitted"] += 1
        handle = session.handle
        if handle is not None and handle.state != APP_RUNNING:
            self._deny(session, request, ticket, DENY_APP_PAUSED)
            return
        if session.blocked:
            self._deny(session, request, ticket, DENY_BLOCKED)
            return
        context = recognize_context(self.vehicle, self.registry, self._now)
        decision = evaluate(request.resource, context, self.store.policies_for(session.principal.id))
        if not decision.allowed:
            self._deny(session, request, ticket, DENY_POLICY)
            return
        if not request.is_read or not self.vehicle.profile.supports(request.pid, self.vehicle.catalog):
            self._deny(session, request, ticket, DENY_UNSUPPORTED)
            return
        if len(session.queue) >= self.queue_depth:
            session.limiter.dropped += 1
            session.stats["dropped_overflow"] += 1
            self._deny(session, request, ticket, DENY_OVERFLOW)
            return
        ticket.status = "queued"
        entry = _Entry(request, session, ticket)
        session.queue.append(entry)
        release = session.limiter.next_release(self._now)
        self._schedule(release, _RELEASE, "release", entry)

    def _on_release(self, entry: _Entry) -> None:
        if entry.cancelled:
            return
        if not entry.bypass:
            entry.session.queue.remove(entry)
        entry.ticket.released_at = self._now
        self._bus_pending.append(entry)
        self._schedule(self._now, _BUS_TRY, "bus", None)

    def _bus_try(self) -> None:
        self._bus_pending = [e for e in self._bus_pending if not e.cancelled]
        if self._bus_busy or not self._bus_pending:
            return
        winner = bus_arbitrate([e.request for e in self._bus_pending])
        entry = next(e for e in self._bus_pending if e.request is winner)
        self._bus_pending.remove(entry)
        self._bus_busy = True
        entry.ticket.served_at = self._now
        entry.session.stats["forwarded"] += 1
        self._record(entry.session.principal.id, TO_VEHICLE, entry.request.to_frame(), entry.request.pid)
        done = self._now + self.vehicle.service_time_s + self.overhead_s
        self._schedule(done, _COMPLETE, "complete", entry)

    def _on_complete(self, entry: _Entry) -> None:
        response = self.vehicle.serve(entry.request, self._now)
        self._bus_busy = False
        session = entry.session
        session.stats["completed"] += 1
        self._record(session.principal.id, FROM_VEHICLE, response.to_frame(), response.pid)
        entry.ticket.status = "answered"
        entry.ticket.completed_at = self._now
        entry.ticket.response = response
        self._deliver(session, response)
        self._schedule(self._now, _BUS_TRY, "bus", None)

    def _deliver(self, session: Session, response: ObdResponse) -> None:
        resource = pid_hex(response.pid)
        cfg = session.transform_config
        if cfg is None or resource not in session.transform_resources:
            session.delivered.append(
                Delivery(
                    session.principal.id,
                    response.pid,
                    response.value,
                    response.unit,
                    self._now,
                    False,
                    response.to_frame(),
                )
            )
            return
        transform = session.transforms.get(resource)
        if transform is None:
            transform = SpeedTransform(cfg)
            session.transforms[resource] = transform
        for value in transform.push(response.value):
            self._deliver_transformed(session, response.pid, value)

    def _deliver_transformed(self, session: Session, pid: int, value: float) -> None:
        spec = None
        try:
            spec = self.vehicle.catalog.lookup(pid)
        except UnknownPidError:
            pass
        frame: tuple[int, ...] = ()
        unit = ""
        if spec is not None:
            unit = spec.unit
            # noise can push a value outside the PID's representable range;
            # the wire frame clamps, the delivered value does not
            clamped = min(max(value, spec.min_value), spec.max_value)
            try:
                frame = (0x41, pid, *spec.encode(clamped))
            except ValueRangeError:
                frame = ()
        session.delivered.append(
            Delivery(session.principal.id, pid, value, unit, self._now, True, frame)
        )

    def flush_transforms(self, principal_id: str) -> list[Delivery]:
        """Release any values still buffered in the principal's transforms."""
        session = self._session(principal_id)
        out: list[Delivery] = []
        before = len(session.delivered)
        for resource, transform in session.transforms.items():
            pid = int(resource, 16)
            for value in transform.flush():
                self._deliver_transformed(session, pid, value)
        out.extend(session.delivered[before:])
        return out

    # --- port management (privileged) ---

    def _flush_queue(self, session: Session, reason: str) -> int:
        """Cancel queued and bus-pending work; each is logged as denied."""
        flushed = 0
        for entry in list(session.queue):
            entry.cancelled = True
            self._deny(session, entry.request, entry.ticket, reason)
            flushed += 1
        session.queue.clear()
        for entry in self._bus_pending:
            if entry.session is session and not entry.cancelled:
                entry.cancelled = True
                self._deny(session, entry.request, entry.ticket, reason)
                flushed += 1
        return flushed

    def block_port(self, principal_id: str, caller: str = OPERATOR_ID) -> Session:
        self._require_privileged(caller)
        session = self._session(principal_id)
        session.blocked = True
        self._flush_queue(session, DENY_BLOCKED)
        return session

    def unblock(self, principal_id: str, caller: str = OPERATOR_ID) -> Session:
        self._require_privileged(caller)
        session = self._session(principal_id)
        session.blocked = False
        return session

    def set_rate(self, principal_id: str, rate: float, caller: str = OPERATOR_ID) -> Session:
        self._require_privileged(caller)
        session = self._session(principal_id)
        if not rate > 0:
            raise GatewayError(f"rate must be positive, got {rate}")
        session.limiter.max_rate = rate
        return session

    def probe(self, principal_id: str, since: float = 0.0, caller: str = OPERATOR_ID) -> list[ProbeRecord]:
        self._require_privileged(caller)
        if principal_id not in self._probes and principal_id not in self.sessions:
            raise GatewayError(f"unknown principal {principal_id!r}")
        return [r for r in self._probes.get(principal_id, []) if r.t >= since]

    def send_raw(self, caller: str, request: ObdRequest) -> ObdResponse:
        """Inject a frame past policy and limiter; still logged and arbitrated."""
        session = self._require_privileged(caller)
        if session.handle is not None and session.handle.state != APP_RUNNING:
            raise GatewayError(f"app {caller!r} is not running")
        if not request.is_read or not self.vehicle.profile.supports(request.pid, self.vehicle.catalog):
            raise GatewayError(f"vehicle cannot service {request.resource}")
        if request.seq == 0:
            self._submit_seq += 1
            request = replace(request, seq=self._submit_seq)
        ticket = SubmitTicket(caller, request)
        ticket.status = "queued"
        entry = _Entry(request, session, ticket, bypass=True)
        self._schedule(max(self._now, request.issued_at), _RELEASE, "release", entry)
        while ticket.status != "answered" and self._heap:
            self._run_one()
        if ticket.response is None:
            raise GatewayError("raw request was never serviced")
        return ticket.response

    def _run_one(self) -> None:
        t, rank, seq, action, payload = heapq.heappop(self._heap)
        self._now = max(self._now, t)
        if action == "arrival":
            self._on_arrival(payload)
        elif action == "release":
            self._on_release(payload)
        elif action == "complete":
            self._on_complete(payload)
        elif action == "bus":
            self._bus_try()

    def set_response_transform(
        self,
        principal_id: str,
        config: PrivacyConfig | None,
        resources: Iterable[str] = ("0x0D",),
        caller: str = OPERATOR_ID,
    ) -> None:
        self._require_privileged(caller)
        session = self._session(principal_id)
        session.transform_config = config
        session.transform_resources = tuple(resources)
        session.transforms = {}

    # --- application lifecycle ---

    def install(self, package: AppPackage) -> AppHandle:
        existing = self.apps.get(package.app_id)
        if existing is not None and existing.state != APP_HALTED:
            raise GatewayError(f"app {package.app_id!r} already installed")
        handle = AppHandle(
            app_id=package.app_id,
            version=package.version,
            privileged=package.privileged,
            sandbox={"container": package.app_id, "manifest": dict(package.manifest)},
        )
        _version_key(package.version)  # fail fast on garbage versions
        self.apps[package.app_id] = handle
        if package.app_id not in self.sessions:
            self.attach(
                Principal(
                    package.app_id,
                    kind="application",
                    profile=package.profile,
                    privileged=package.privileged,
                )
            )
        self.sessions[package.app_id].handle = handle
        return handle

    def _app(self, app_id: str) -> AppHandle:
        try:
            return self.apps[app_id]
        except KeyError:
            raise GatewayError(f"unknown app {app_id!r}") from None

    def app_action(self, action: str, app_id: str) -> AppHandle | None:
        """start | pause | halt | remove, enforcing the state machine."""
        handle = self._app(app_id)
        state = handle.state
        if action == "start":
            if state not in (APP_INSTALLED, APP_PAUSED):
                raise GatewayError(f"cannot start app in state {state!r}")
            handle.state = APP_RUNNING
        elif action == "pause":
            if state != APP_RUNNING:
                raise GatewayError(f"cannot pause app in state {state!r}")
            handle.state = APP_PAUSED
        elif action == "halt":
            if state not in (APP_RUNNING, APP_PAUSED):
                raise GatewayError(f"cannot halt app in state {state!r}")
            handle.state = APP_HALTED
            if app_id in self.sessions:
                self.detach(app_id)
        elif action == "remove":
            if app_id in self.sessions:
                self.detach(app_id)
            del self.apps[app_id]
            return None
        else:
            raise GatewayError(f"unknown app action {action!r}")
        return handle

    def self_update(self, caller_app_id: str, target_app_id: str, new_version) -> AppHandle:
        """Apps may update themselves, nothing else; versions only go up."""
        if caller_app_id != target_app_id:
            raise GatewayError(f"app {caller_app_id!r} may not update {target_app_id!r}")
        handle = self._app(target_app_id)
        if _version_key(new_version) <= _version_key(handle.version):
            raise GatewayError(
                f"version regression: {handle.version!r} -> {new_version!r}"
            )
        handle.version = new_version
        handle.state = APP_INSTALLED  # restart required after an update
        return handle

    # --- management command API (consumed by the CLI) ---

    def manage(self, command: dict, caller: str = OPERATOR_ID) -> dict:
        """JSON command -> JSON response: {op, principal, args} -> {ok, ...}."""
        try:
            return {"ok": True, "data": self._dispatch(command, caller)}
        except (GatewayError, ValueError, KeyError) as exc:
            return {"ok": False, "error": str(exc)}

    def _dispatch(self, command: dict, caller: str):
        op = command.get("op")
        principal_id = command.get("principal")
        args = command.get("args") or {}
        if op == "status":
            return self._status()
        self._require_privileged(caller)
        if op == "attach":
            principal = Principal(
                principal_id,
                kind=str(args.get("kind", "dongle")),
                profile=str(args.get("profile", "unknown")),
                privileged=bool(args.get("privileged", False)),
            )
            session = self.attach(principal)
            if "rate" in args:
                session.limiter.max_rate = float(args["rate"])
            return {"principal": principal.id, "profile": principal.profile}
        if op == "block":
            self.block_port(principal_id, caller)
            return {"principal": principal_id, "blocked": True}
        if op == "unblock":
            self.unblock(principal_id, caller)
            return {"principal": principal_id, "blocked": False}
        if op == "set_rate":
            self.set_rate(principal_id, float(args["rate"]), caller)
            return {"principal": principal_id, "rate": float(args["rate"])}
        if op == "probe":
            records = self.probe(principal_id, float(args.get("since", 0.0)), caller)
            return [r.to_dict() for r in records]
        if op == "policy_add":
            policy_id = self.store.add_user(
                principal_id,
                resource=tuple(args["resource"]),
                effect=args.get("effect", "allow"),
                priority=int(args.get("priority", 50)),
                context=args.get("context"),
                policy_id=args.get("id"),
            )
            return {"policy_id": policy_id}
        if op == "policy_remove":
            self.store.remove(args["policy_id"])
            return {"policy_id": args["policy_id"], "removed": True}
        if op == "policy_list":
            policies = (
                self.store.policies_for(principal_id) if principal_id else self.store.all_policies()
            )
            return [
                {
                    "id": p.id,
                    "principal": p.principal_id,
                    "resource": list(p.resource),
                    "effect": p.effect.value,
                    "priority": p.priority,
                    "context": dict(p.context),
                    "origin": p.origin.value,
                }
                for p in policies
            ]
        if op == "send_raw":
            pid = args["pid"]
            pid = int(pid, 16) if isinstance(pid, str) else int(pid)
            request = ObdRequest(
                principal_id=caller, pid=pid, issued_at=self._now, mode=int(args.get("mode", 1))
            )
            response = self.send_raw(caller, request)
            return {
                "pid": pid_hex(response.pid),
                "value": response.value,
                "unit": response.unit,
                "answered_at": response.answered_at,
            }
        if op == "app":
            return self._dispatch_app(args)
        raise GatewayError(f"unknown op {op!r}")

    def _dispatch_app(self, args: dict):
        action = args.get("action")
        if action == "install":
            handle = self.install(
                AppPackage(
                    app_id=args["app_id"],
                    version=args.get("version", 1),
                    profile=args.get("profile", "unknown"),
                    privileged=bool(args.get("privileged", False)),
                )
            )
        elif action == "update":
            handle = self.self_update(args["caller_app"], args["app_id"], args["version"])
        elif action in ("start", "pause", "halt", "remove"):
            handle = self.app_action(action, args["app_id"])
            if handle is None:
                return {"app_id": args["app_id"], "state": "removed"}
        else:
            raise GatewayError(f"unknown app action {action!r}")
        return {"app_id": handle.app_id, "state": handle.state, "version": handle.version}

    def _status(self) -> dict:
        return {
            "now": self._now,
            "sessions": {
                pid: {
                    "kind": s.principal.kind,
                    "profile": s.principal.profile,
                    "blocked": s.blocked,
                    "rate": s.limiter.max_rate,
                    "queued": len(s.queue),
                    **s.stats,
                }
                for pid, s in self.sessions.items()
            },
            "apps": {aid: {"state": h.state, "version": h.version} for aid, h in self.apps.items()},
        }

    # --- probe export ---

    def export_probes(self, fh, principal_id: str | None = None) -> int:
        """Write probe records as JSON lines; returns the record count."""
        if principal_id is None:
            records = sorted(
                (r for recs in self._probes.values() for r in recs), key=lambda r: r.seq
            )
        else:
            records = self.probe(principal_id)
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
        return len(records)
