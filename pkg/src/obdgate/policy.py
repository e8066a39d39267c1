"""Context-aware access control for gateway principals.

Decisions are attribute-based: a policy matches a (principal, resource,
context) triple and carries an allow/deny effect plus a priority.  Among the
matching policies only the highest-priority band decides, and a single deny
in that band overrides any allow (default deny when nothing matches).  All
predicates are conjunctions; there is no negation, which keeps policy sets
order-independent and decisions reproducible.

Context is recognized from vehicle signals at the instant a request is
evaluated: operational state (idle/moving with debounce, health), situation
(emergency latch, broadcast alert) and location class from a registry of
named places.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # circular at runtime: vehicle does not need policy
    from .vehicle import VehicleProfile, VirtualVehicle

ANY_RESOURCE = "*"

VEHICLE_STATUSES = ("idle", "moving")
HEALTH_STATES = ("ok", "fault")
LOCATION_CLASSES = ("home", "office", "trusted_repair", "other")

# context predicate keys -> allowed values (None = boolean)
CONTEXT_FIELDS: dict[str, tuple[str, ...] | None] = {
    "vehicle_status": VEHICLE_STATUSES,
    "health": HEALTH_STATES,
    "emergency": None,
    "alert_active": None,
    "location_class": LOCATION_CLASSES,
}

DEFAULT_USER_PRIORITY = 50
QUIRK_PRIORITY = 100


class PolicyError(ValueError):
    """Invalid policy material or store operation."""


class Effect(str, Enum):
    ALLOW = "allow"
    DENY = "deny"


class Origin(str, Enum):
    PREDEFINED = "predefined"
    USER = "user"


@dataclass(frozen=True)
class ContextSnapshot:
    vehicle_status: str = "idle"
    health: str = "ok"
    emergency: bool = False
    alert_active: bool = False
    location_class: str = "other"

    def __post_init__(self) -> None:
        if self.vehicle_status not in VEHICLE_STATUSES:
            raise PolicyError(f"bad vehicle_status {self.vehicle_status!r}")
        if self.health not in HEALTH_STATES:
            raise PolicyError(f"bad health {self.health!r}")
        if self.location_class not in LOCATION_CLASSES:
            raise PolicyError(f"bad location_class {self.location_class!r}")

    def field_value(self, key: str):
        return getattr(self, key)


@dataclass(frozen=True)
class Principal:
    """An attached requester: physical dongle, installed app, or operator."""

    id: str
    kind: str = "dongle"  # dongle | application | operator
    profile: str = "unknown"  # baseline policy template name
    privileged: bool = False  # may use port-management commands

    def __post_init__(self) -> None:
        if not self.id:
            raise PolicyError("principal id must be non-empty")
        if self.kind not in ("dongle", "application", "operator"):
            raise PolicyError(f"bad principal kind {self.kind!r}")


@dataclass(frozen=True)
class Policy:
    """One access rule bound to a principal."""

    id: str
    principal_id: str
    resource: tuple[str, ...]
    effect: Effect
    priority: int
    context: dict[str, object] = field(default_factory=dict)
    origin: Origin = Origin.USER

    def __post_init__(self) -> None:
        if not self.id or not self.principal_id:
            raise PolicyError("policy needs id and principal_id")
        if not self.resource or any(not isinstance(r, str) or not r for r in self.resource):
            raise PolicyError(f"policy {self.id}: resource list must be non-empty strings")
        if not isinstance(self.priority, int):
            raise PolicyError(f"policy {self.id}: priority must be an int")
        for key, value in self.context.items():
            allowed = CONTEXT_FIELDS.get(key, ...)
            if allowed is ...:
                raise PolicyError(f"policy {self.id}: unknown context field {key!r}")
            if allowed is None:
                if not isinstance(value, bool):
                    raise PolicyError(f"policy {self.id}: {key} must be boolean")
            elif value not in allowed:
                raise PolicyError(f"policy {self.id}: {key} must be one of {allowed}")

    def matches(self, resource: str, context: ContextSnapshot) -> bool:
        if ANY_RESOURCE not in self.resource and resource not in self.resource:
            return False
        return all(context.field_value(k) == v for k, v in self.context.items())


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str  # "policy" | "default-deny"
    policy_id: str | None = None


def evaluate(resource: str, context: ContextSnapshot, policies: Sequence[Policy]) -> Decision:
    """Deny-overrides evaluation within the highest matching priority band."""
    matching = [p for p in policies if p.matches(resource, context)]
    if not matching:
        return Decision(False, "default-deny")
    top = max(p.priority for p in matching)
    band = sorted((p for p in matching if p.priority == top), key=lambda p: p.id)
    for p in band:
        if p.effect is Effect.DENY:
            return Decision(False, "policy", p.id)
    return Decision(True, "policy", band[0].id)


# --- predefined baselines ---------------------------------------------------

# profile name -> (allowed resources at priority 10; everything else denied)
_PROFILE_ALLOWS: dict[str, tuple[str, ...]] = {
    # pay-as-you-drive billing needs exactly speed and odometer
    "insurance": ("0x0D", "0xA6"),
    # telematics dashboards: driving signals, no writes
    "telematics": ("0x0D", "0x0C", "0x05", "0x2F", "0xA6"),
    # diagnostics: nothing by default, the owner adds fault-scoped grants
    "diagnostic": (),
    # trusted protection/monitoring apps
    "unrestricted": (ANY_RESOURCE,),
}


def predefined_policies(principal: Principal, vehicle_profile: "VehicleProfile | None" = None) -> list[Policy]:
    """Baseline policy set attached with a principal.

    Always ends in a catch-all deny at priority 0, so unknown profiles get
    default-deny behavior even before user policies exist.
    """
    out: list[Policy] = []
    allows = _PROFILE_ALLOWS.get(principal.profile, ())
    n = 0
    if allows:
        out.append(
            Policy(
                id=f"pre:{principal.id}:{n}",
                principal_id=principal.id,
                resource=tuple(allows),
                effect=Effect.ALLOW,
                priority=10,
                origin=Origin.PREDEFINED,
            )
        )
        n += 1
    out.append(
        Policy(
            id=f"pre:{principal.id}:{n}",
            principal_id=principal.id,
            resource=(ANY_RESOURCE,),
            effect=Effect.DENY,
            priority=0,
            origin=Origin.PREDEFINED,
        )
    )
    n += 1
    flags = getattr(vehicle_profile, "flags", ()) if vehicle_profile else ()
    if "deny_all_while_moving" in flags and principal.kind == "dongle":
        # vehicles that refuse port diagnostics while driving
        out.append(
            Policy(
                id=f"pre:{principal.id}:{n}",
                principal_id=principal.id,
                resource=(ANY_RESOURCE,),
                effect=Effect.DENY,
                priority=QUIRK_PRIORITY,
                context={"vehicle_status": "moving"},
                origin=Origin.PREDEFINED,
            )
        )
    return out


class PolicyStore:
    """Mutable policy set with provenance tracking.

    Predefined (baseline) policies are immutable through the management
    surface; user policies can be added and removed.  ``version`` bumps on
    every successful mutation so snapshots can be invalidated cheaply.
    """

    def __init__(self) -> None:
        self._policies: dict[str, Policy] = {}
        self.version = 0
        self._auto = 0

    def __len__(self) -> int:
        return len(self._policies)

    def add(self, policy: Policy) -> str:
        if policy.id in self._policies:
            raise PolicyError(f"duplicate policy id {policy.id}")
        self._policies[policy.id] = policy
        self.version += 1
        return policy.id

    def add_user(
        self,
        principal_id: str,
        resource: Iterable[str],
        effect: Effect | str,
        priority: int = DEFAULT_USER_PRIORITY,
        context: dict[str, object] | None = None,
        policy_id: str | None = None,
    ) -> str:
        if policy_id is None:
            self._auto += 1
            policy_id = f"usr:{principal_id}:{self._auto}"
        return self.add(
            Policy(
                id=policy_id,
                principal_id=principal_id,
                resource=tuple(resource),
                effect=Effect(effect),
                priority=priority,
                context=dict(context or {}),
                origin=Origin.USER,
            )
        )

    def remove(self, policy_id: str) -> None:
        policy = self._policies.get(policy_id)
        if policy is None:
            raise PolicyError(f"no policy {policy_id}")
        if policy.origin is Origin.PREDEFINED:
            raise PolicyError(f"policy {policy_id} is predefined and immutable")
        del self._policies[policy_id]
        self.version += 1

    def get(self, policy_id: str) -> Policy:
        try:
            return self._policies[policy_id]
        except KeyError:
            raise PolicyError(f"no policy {policy_id}") from None

    def policies_for(self, principal_id: str) -> list[Policy]:
        return sorted(
            (p for p in self._policies.values() if p.principal_id == principal_id),
            key=lambda p: p.id,
        )

    def all_policies(self) -> list[Policy]:
        return sorted(self._policies.values(), key=lambda p: p.id)


# --- location classing ------------------------------------------------------

EARTH_RADIUS_M = 6371000.0
DEFAULT_PLACE_RADIUS_M = 100.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


@dataclass(frozen=True)
class Place:
    name: str
    lat: float
    lon: float
    kind: str  # home | office | trusted_repair
    radius_m: float = DEFAULT_PLACE_RADIUS_M

    def __post_init__(self) -> None:
        if self.kind not in ("home", "office", "trusted_repair"):
            raise PolicyError(f"place {self.name}: bad kind {self.kind!r}")
        if self.radius_m <= 0:
            raise PolicyError(f"place {self.name}: radius must be positive")


class LocationRegistry:
    """Named geofences; classifies a GPS position into a location class."""

    def __init__(self, places: Iterable[Place] = ()):
        self.places = list(places)

    def classify(self, position: tuple[float, float] | None) -> str:
        if position is None:
            return "other"
        lat, lon = position
        best: tuple[float, str] | None = None
        for place in self.places:
            d = haversine_m(lat, lon, place.lat, place.lon)
            if d <= place.radius_m and (best is None or d < best[0]):
                best = (d, place.kind)
        return best[1] if best else "other"

    @classmethod
    def from_dict(cls, doc: dict) -> "LocationRegistry":
        places = []
        for name, spec in doc.items():
            try:
                places.append(
                    Place(
                        name=name,
                        lat=float(spec["lat"]),
                        lon=float(spec["lon"]),
                        kind=str(spec.get("kind", name)),
                        radius_m=float(spec.get("radius_m", DEFAULT_PLACE_RADIUS_M)),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise PolicyError(f"place {name!r}: {exc}") from None
        return cls(places)


def recognize_context(
    vehicle: "VirtualVehicle", registry: LocationRegistry | None, t: float
) -> ContextSnapshot:
    """Snapshot the vehicle's context at time ``t``."""
    registry = registry or LocationRegistry()
    return ContextSnapshot(
        vehicle_status="moving" if vehicle.moving(t) else "idle",
        health="fault" if vehicle.health_fault(t) else "ok",
        emergency=vehicle.emergency(t),
        alert_active=vehicle.alert_active(t),
        location_class=registry.classify(vehicle.position(t)),
    )


# --- policy file I/O --------------------------------------------------------
#
# One JSON document per principal:
#   [{"principal": "ins-1",
#     "policies": [{"id": ..., "resource": [...], "context": {...},
#                   "effect": "allow"|"deny", "priority": int}],
#     "response_transform": {...}}]


@dataclass
class PrincipalPolicyDoc:
    principal_id: str
    policies: list[Policy]
    response_transform: dict | None = None


def load_policy_documents(stream) -> list[PrincipalPolicyDoc]:
    doc = json.load(stream)
    if not isinstance(doc, list):
        raise PolicyError("policy file must hold a JSON list of per-principal documents")
    out = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or "principal" not in entry:
            raise PolicyError(f"document {i}: missing 'principal'")
        pid = str(entry["principal"])
        policies = []
        for j, p in enumerate(entry.get("policies", [])):
            try:
                policies.append(
                    Policy(
                        id=str(p.get("id", f"usr:{pid}:{j}")),
                        principal_id=pid,
                        resource=tuple(p["resource"]),
                        effect=Effect(p["effect"]),
                        priority=int(p.get("priority", DEFAULT_USER_PRIORITY)),
                        context=dict(p.get("context", {})),
                        origin=Origin.USER,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise PolicyError(f"document {i} policy {j}: {exc}") from None
        transform = entry.get("response_transform")
        if transform is not None and not isinstance(transform, dict):
            raise PolicyError(f"document {i}: response_transform must be an object")
        out.append(PrincipalPolicyDoc(pid, policies, transform))
    return out


def dump_policy_documents(docs: list[PrincipalPolicyDoc]) -> list[dict]:
    out = []
    for doc in docs:
        entry: dict = {
            "principal": doc.principal_id,
            "policies": [
                {
                    "id": p.id,
                    "resource": list(p.resource),
                    "context": dict(p.context),
                    "effect": p.effect.value,
                    "priority": p.priority,
                }
                for p in doc.policies
            ],
        }
        if doc.response_transform is not None:
            entry["response_transform"] = doc.response_transform
        out.append(entry)
    return out
