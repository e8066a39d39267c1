"""Gateway pipeline tests.

The scheduling behavior is checked against an independent oracle built from
first principles: strict-spacing release times computed in closed form, then
a sequential replay that always serves the lowest-PID released frame.
"""

import io
import json
import math

import numpy as np
import pytest

from obdgate.gateway import (
    APP_INSTALLED,
    APP_PAUSED,
    APP_RUNNING,
    AppPackage,
    DENY_APP_PAUSED,
    DENY_BLOCKED,
    DENY_OVERFLOW,
    DENY_POLICY,
    DENY_UNSUPPORTED,
    Gateway,
    GatewayError,
    OPERATOR_ID,
)
from obdgate.obd import ObdRequest
from obdgate.policy import Principal
from obdgate.privacy import PrivacyConfig
from obdgate.vehicle import DrivingTrace, VehicleProfile, VirtualVehicle

SERVICE = 0.010


def steady_trace(duration=120.0, speed=50.0):
    t = np.arange(0.0, duration + 1.0)
    return DrivingTrace(t, np.full(t.shape, speed))


def make_gateway(**kw):
    vehicle = VirtualVehicle(steady_trace(), **kw.pop("vehicle_kw", {}))
    return Gateway(vehicle, **kw)


def attach_dongle(gw, pid="d-1", profile="unrestricted", rate=math.inf, privileged=False):
    session = gw.attach(Principal(pid, kind="dongle", profile=profile, privileged=privileged))
    session.limiter.max_rate = rate
    return session


# --- attach ---


def test_attach_creates_baseline_policies():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    ids = {p.id for p in gw.store.policies_for("ins")}
    assert any("allow" in i for i in ids) or len(ids) >= 2
    resources = [r for p in gw.store.policies_for("ins") for r in p.resource]
    assert "0x0D" in resources and "0xA6" in resources


def test_attach_duplicate_id_rejected():
    gw = make_gateway()
    attach_dongle(gw, "d")
    with pytest.raises(GatewayError, match="already attached"):
        attach_dongle(gw, "d")


def test_unknown_profile_denied_everything():
    gw = make_gateway()
    attach_dongle(gw, "x", profile="unknown")
    ticket = gw.submit("x", ObdRequest("x", 0x0D, 0.0))
    assert ticket.status == "denied" and ticket.reason == DENY_POLICY


# --- the submit pipeline ---


def test_allowed_read_round_trips():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    ticket = gw.submit("ins", ObdRequest("ins", 0x0D, 0.0))
    assert ticket.status == "queued"
    gw.drain()
    assert ticket.status == "answered"
    assert ticket.response.value == pytest.approx(50.0)
    assert ticket.latency_s == pytest.approx(SERVICE)
    assert len(gw.sessions["ins"].delivered) == 1


def test_burst_releases_spaced_one_per_second():
    # ten requests in a burst at t=0 with a 1/s limit leave the limiter at
    # t=0,1,...,9
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance", rate=1.0)
    tickets = [gw.submit("ins", ObdRequest("ins", 0x0D, 0.0)) for _ in range(10)]
    gw.drain()
    releases = [t.released_at for t in tickets]
    assert releases == pytest.approx(list(range(10)))
    completions = [t.completed_at for t in tickets]
    assert completions == pytest.approx([k + SERVICE for k in range(10)])


def test_policy_denial_logged_never_served():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    ticket = gw.submit("ins", ObdRequest("ins", 0x0C, 0.0))  # rpm not allowed
    assert ticket.status == "denied" and ticket.reason == DENY_POLICY
    gw.drain()
    assert gw.vehicle.request_log == []
    records = gw.probe("ins")
    assert len(records) == 1 and records[0].direction == "denied"
    assert records[0].reason == DENY_POLICY


def test_blocked_session_denies_everything():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted")
    gw.block_port("d")
    ticket = gw.submit("d", ObdRequest("d", 0x0D, 0.0))
    assert ticket.status == "denied" and ticket.reason == DENY_BLOCKED


def test_unsupported_pid_and_write_denied():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted")
    t1 = gw.submit("d", ObdRequest("d", 0x7F, 0.0))  # not in the catalog
    assert t1.reason == DENY_UNSUPPORTED
    t2 = gw.submit("d", ObdRequest("d", 0x0D, 0.0, mode=0x2E))
    assert t2.reason == DENY_UNSUPPORTED
    assert gw.vehicle.request_log == []


def test_queue_overflow_drops_newest():
    gw = make_gateway(queue_depth=2)
    attach_dongle(gw, "d", profile="unrestricted", rate=0.001)
    tickets = [gw.submit("d", ObdRequest("d", 0x0D, 0.0)) for _ in range(4)]
    # first goes straight to the bus (burst 1), two sit queued, fourth drops
    assert [t.status for t in tickets] == ["queued", "queued", "queued", "denied"]
    assert tickets[3].reason == DENY_OVERFLOW
    assert gw.sessions["d"].limiter.dropped == 1


# --- port management ---


def test_block_flushes_queued_requests_as_denied():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted", rate=0.01)
    tickets = [gw.submit("d", ObdRequest("d", 0x0D, 0.0)) for _ in range(4)]
    gw.run_until(0.0)
    gw.block_port("d")
    # first was already released to the bus at t=0; the three queued flush
    denied = [t for t in tickets if t.status == "denied"]
    assert len(denied) == 3
    assert all(t.reason == DENY_BLOCKED for t in denied)
    records = [r for r in gw.probe("d") if r.direction == "denied"]
    assert len(records) == 3


def test_unblock_restores_policy_behavior():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    gw.block_port("ins")
    assert gw.submit("ins", ObdRequest("ins", 0x0D, 0.0)).reason == DENY_BLOCKED
    gw.unblock("ins")
    ticket = gw.submit("ins", ObdRequest("ins", 0x0D, gw.now))
    assert ticket.status == "queued"
    gw.drain()
    assert ticket.status == "answered"


def test_set_rate_validates_and_respaces():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted")
    with pytest.raises(GatewayError, match="rate"):
        gw.set_rate("d", 0.0)
    gw.set_rate("d", 2.0)
    tickets = [gw.submit("d", ObdRequest("d", 0x0D, 0.0)) for _ in range(4)]
    gw.drain()
    assert [t.released_at for t in tickets] == pytest.approx([0.0, 0.5, 1.0, 1.5])


def test_port_management_requires_privilege():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted")
    attach_dongle(gw, "pleb", profile="unknown", privileged=False)
    for call in (
        lambda: gw.block_port("d", caller="pleb"),
        lambda: gw.unblock("d", caller="pleb"),
        lambda: gw.set_rate("d", 1.0, caller="pleb"),
        lambda: gw.probe("d", caller="pleb"),
    ):
        with pytest.raises(GatewayError, match="privileged"):
            call()


def test_probe_filters_by_principal_and_time():
    gw = make_gateway()
    attach_dongle(gw, "a", profile="unrestricted")
    attach_dongle(gw, "b", profile="unrestricted")
    for k in range(3):
        gw.submit("a", ObdRequest("a", 0x0D, k * 1.0))
        gw.submit("b", ObdRequest("b", 0x0C, k * 1.0))
    gw.drain()
    a_records = gw.probe("a")
    assert a_records and all(r.principal_id == "a" for r in a_records)
    # 3 to_vehicle + 3 from_vehicle
    assert len(a_records) == 6
    late = gw.probe("a", since=2.0)
    assert all(r.t >= 2.0 for r in late)
    assert len(late) == 2
    with pytest.raises(GatewayError, match="unknown"):
        gw.probe("ghost")


def test_probe_subscribers_stream_records():
    gw = make_gateway()
    session = attach_dongle(gw, "d", profile="unrestricted")
    seen = []
    session.probe_subscribers.append(seen.append)
    gw.submit("d", ObdRequest("d", 0x0D, 0.0))
    gw.drain()
    assert [r.direction for r in seen] == ["to_vehicle", "from_vehicle"]


def test_counts_after_mixed_outcomes():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    for _ in range(5):
        gw.submit("ins", ObdRequest("ins", 0x0D, gw.now))
        gw.drain()
    for _ in range(2):
        gw.submit("ins", ObdRequest("ins", 0x0C, gw.now))
    records = gw.probe("ins")
    assert len(records) == 12  # 5 in + 5 out + 2 denied
    assert sum(r.direction == "denied" for r in records) == 2


# --- send_raw ---


def test_send_raw_bypasses_policy_still_logged():
    gw = make_gateway()
    gw.install(AppPackage("guard", 1, profile="insurance", privileged=True))
    gw.app_action("start", "guard")
    # insurance baseline denies rpm, but raw injection bypasses the caller's
    # own policy
    response = gw.send_raw("guard", ObdRequest("guard", 0x0C, 0.0))
    assert response.value == pytest.approx(1800.0, rel=0.01)
    directions = [r.direction for r in gw.probe("guard")]
    assert directions == ["to_vehicle", "from_vehicle"]
    assert len(gw.vehicle.request_log) == 1


def test_send_raw_requires_privilege_and_running():
    gw = make_gateway()
    gw.install(AppPackage("meek", 1, profile="unrestricted", privileged=False))
    gw.app_action("start", "meek")
    with pytest.raises(GatewayError, match="privileged"):
        gw.send_raw("meek", ObdRequest("meek", 0x0D, 0.0))
    gw.install(AppPackage("guard", 1, profile="insurance", privileged=True))
    with pytest.raises(GatewayError, match="not running"):
        gw.send_raw("guard", ObdRequest("guard", 0x0D, 0.0))


# --- app lifecycle ---


def test_app_state_machine_happy_path():
    gw = make_gateway()
    handle = gw.install(AppPackage("app", 1, profile="unrestricted"))
    assert handle.state == APP_INSTALLED
    assert gw.app_action("start", "app").state == APP_RUNNING
    assert gw.app_action("pause", "app").state == APP_PAUSED
    assert gw.app_action("start", "app").state == APP_RUNNING


def test_paused_app_submits_denied():
    gw = make_gateway()
    gw.install(AppPackage("app", 1, profile="unrestricted"))
    gw.app_action("start", "app")
    gw.app_action("pause", "app")
    ticket = gw.submit("app", ObdRequest("app", 0x0D, gw.now))
    assert ticket.status == "denied" and ticket.reason == DENY_APP_PAUSED


def test_installed_but_not_started_cannot_submit():
    gw = make_gateway()
    gw.install(AppPackage("app", 1, profile="unrestricted"))
    ticket = gw.submit("app", ObdRequest("app", 0x0D, gw.now))
    assert ticket.reason == DENY_APP_PAUSED


def test_halt_detaches_and_forbids_restart():
    gw = make_gateway()
    gw.install(AppPackage("app", 1, profile="unrestricted"))
    gw.app_action("start", "app")
    gw.app_action("halt", "app")
    assert "app" not in gw.sessions
    with pytest.raises(GatewayError, match="cannot start"):
        gw.app_action("start", "app")
    # reinstall brings it back
    gw.install(AppPackage("app", 2, profile="unrestricted"))
    assert gw.app_action("start", "app").state == APP_RUNNING


def test_duplicate_install_rejected():
    gw = make_gateway()
    gw.install(AppPackage("app", 1))
    with pytest.raises(GatewayError, match="already installed"):
        gw.install(AppPackage("app", 2))


def test_self_update_rules():
    gw = make_gateway()
    gw.install(AppPackage("a", "1.0.0"))
    gw.install(AppPackage("b", "1.0.0"))
    handle = gw.self_update("a", "a", "1.1.0")
    assert handle.version == "1.1.0"
    assert handle.state == APP_INSTALLED  # restart required
    with pytest.raises(GatewayError, match="may not update"):
        gw.self_update("a", "b", "9.9.9")
    with pytest.raises(GatewayError, match="regression"):
        gw.self_update("a", "a", "1.0.9")


def test_remove_detaches_session():
    gw = make_gateway()
    gw.install(AppPackage("app", 1))
    gw.app_action("remove", "app")
    assert "app" not in gw.apps and "app" not in gw.sessions


# --- invariants ---


def test_complete_mediation_counts_match():
    gw = make_gateway()
    attach_dongle(gw, "a", profile="unrestricted", rate=5.0)
    attach_dongle(gw, "b", profile="insurance", rate=3.0)
    rng = np.random.default_rng(5)
    for k in range(40):
        pid = int(rng.choice([0x0D, 0x0C, 0xA6]))
        who = "a" if rng.random() < 0.5 else "b"
        gw.submit(who, ObdRequest(who, pid, float(rng.uniform(0, 20))))
    gw.drain()
    to_vehicle = [
        r for recs in gw._probes.values() for r in recs if r.direction == "to_vehicle"
    ]
    assert len(to_vehicle) == len(gw.vehicle.request_log)
    from_vehicle = [
        r for recs in gw._probes.values() for r in recs if r.direction == "from_vehicle"
    ]
    assert len(from_vehicle) == len(to_vehicle)


def test_denied_frames_never_reach_vehicle():
    gw = make_gateway()
    attach_dongle(gw, "x", profile="unknown")
    for k in range(10):
        gw.submit("x", ObdRequest("x", 0x0D, float(k)))
    gw.drain()
    assert gw.vehicle.request_log == []


def test_rate_bound_holds_on_random_workload():
    rate = 2.0
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted", rate=rate)
    rng = np.random.default_rng(11)
    arrivals = np.sort(rng.uniform(0, 30, size=200))
    for a in arrivals:
        gw.submit("d", ObdRequest("d", 0x0D, float(a)))
    gw.drain()
    forwarded = sorted(r.t for r in gw.probe("d") if r.direction == "to_vehicle")
    for T in (0.5, 1.0, 3.0, 7.0):
        bound = math.ceil(rate * T) + 1
        for w0 in np.arange(0.0, 31.0, 0.25):
            n = sum(w0 <= t < w0 + T for t in forwarded)
            assert n <= bound, (T, w0, n, bound)


def test_isolation_blocking_one_leaves_other_unchanged():
    def run(block_a):
        gw = make_gateway()
        attach_dongle(gw, "a", profile="unrestricted", rate=1.0)
        attach_dongle(gw, "b", profile="insurance", rate=1.0)
        if block_a:
            gw.block_port("a")
        for k in range(5):
            gw.submit("b", ObdRequest("b", 0x0D, float(k)))
        gw.drain()
        return [(d.pid, d.value, d.answered_at) for d in gw.sessions["b"].delivered]

    assert run(block_a=False) == run(block_a=True)


# --- scheduling oracle ---


def strict_releases(arrivals, rate):
    spacing = 0.0 if math.isinf(rate) else 1.0 / rate
    out, last = [], -math.inf
    for a in arrivals:
        last = max(a, last + spacing)
        out.append(last)
    return out


def replay_schedule(jobs, service, horizon):
    """Sequential single-server replay; returns completion per job seq.

    jobs: list of dicts with pid, issued, release, seq.  None marks a job
    whose completion event falls past the horizon.
    """
    ordered = sorted(jobs, key=lambda j: j["release"])
    completions = {j["seq"]: None for j in jobs}
    pend, i, n, t = [], 0, len(ordered), 0.0
    while i < n or pend:
        if not pend:
            t = max(t, ordered[i]["release"])
        while i < n and ordered[i]["release"] <= t:
            pend.append(ordered[i])
            i += 1
        job = min(pend, key=lambda j: (j["pid"], j["issued"], j["seq"]))
        pend.remove(job)
        t = t + service
        if t > horizon:
            break
        completions[job["seq"]] = t
    return completions


def run_flood_case(attacker_rate, horizon=10.0):
    gw = make_gateway()
    attach_dongle(gw, "atk", profile="unrestricted", rate=attacker_rate)
    attach_dongle(gw, "leg", profile="insurance", rate=1.0)
    tickets = {}
    jobs = []
    # arrivals accumulate by repeated addition so they coincide bit-exactly
    # with the service completion chain (cumulative 10 ms steps)
    arrival = 0.0
    for k in range(int(horizon * 100)):
        req = ObdRequest("atk", 0x00, arrival)
        t = gw.submit("atk", req)
        tickets[t.request.seq] = t
        jobs.append({"pid": 0x00, "issued": arrival, "who": "atk", "seq": t.request.seq})
        arrival += 0.01
    for k in range(int(horizon)):
        req = ObdRequest("leg", 0x0D, float(k))
        t = gw.submit("leg", req)
        tickets[t.request.seq] = t
        jobs.append({"pid": 0x0D, "issued": float(k), "who": "leg", "seq": t.request.seq})
    gw.run_until(horizon)

    for who, rate in (("atk", attacker_rate), ("leg", 1.0)):
        mine = [j for j in jobs if j["who"] == who]
        rel = strict_releases([j["issued"] for j in mine], rate)
        for j, r in zip(mine, rel):
            j["release"] = r
    oracle = replay_schedule(jobs, SERVICE, horizon)
    return tickets, jobs, oracle


def test_flood_schedule_matches_oracle_unlimited():
    tickets, jobs, oracle = run_flood_case(math.inf)
    for j in jobs:
        got = tickets[j["seq"]].completed_at
        want = oracle[j["seq"]]
        if want is None:
            assert got is None, j
        else:
            assert got == pytest.approx(want, abs=1e-9), j


def test_flood_starves_legitimate_requester_without_limiter():
    tickets, jobs, oracle = run_flood_case(math.inf)
    legit = [tickets[j["seq"]] for j in jobs if j["who"] == "leg"]
    assert all(t.completed_at is None for t in legit)


def test_flood_schedule_matches_oracle_limited():
    tickets, jobs, oracle = run_flood_case(1.0)
    for j in jobs:
        got = tickets[j["seq"]].completed_at
        want = oracle[j["seq"]]
        if want is None:
            assert got is None, j
        else:
            assert got == pytest.approx(want, abs=1e-9), j


def test_limiter_bounds_legitimate_latency_under_flood():
    tickets, jobs, _ = run_flood_case(1.0)
    legit = [tickets[j["seq"]] for j in jobs if j["who"] == "leg"]
    lat = [t.latency_s for t in legit if t.completed_at is not None]
    assert lat, "limited flood must let legitimate traffic through"
    assert max(lat) <= 3 * SERVICE


# --- response transform hook ---


def test_shuffle_transform_preserves_multiset_and_delays():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance", rate=math.inf)
    gw.set_response_transform("ins", PrivacyConfig(alg="shuffle", W=4, seed=3))
    for k in range(8):
        gw.submit("ins", ObdRequest("ins", 0x0D, k * 1.0))
    gw.drain()
    delivered = gw.sessions["ins"].delivered
    assert len(delivered) == 8
    assert all(d.transformed for d in delivered)
    # steady 50 km/h trace: every sample identical, multiset trivially equal
    assert sorted(d.value for d in delivered) == pytest.approx([50.0] * 8)


def test_transform_flush_releases_residue():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    gw.set_response_transform("ins", PrivacyConfig(alg="shuffle", W=10, seed=3))
    for k in range(3):
        gw.submit("ins", ObdRequest("ins", 0x0D, float(k)))
    gw.run_until(5.0)
    assert gw.sessions["ins"].delivered == []
    out = gw.flush_transforms("ins")
    assert len(out) == 3


def test_identity_transform_keeps_order():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    gw.set_response_transform("ins", PrivacyConfig(alg="identity"))
    for k in range(5):
        gw.submit("ins", ObdRequest("ins", 0x0D, float(k)))
    gw.drain()
    values = [d.value for d in gw.sessions["ins"].delivered]
    assert values == pytest.approx([50.0] * 5)


def test_untransformed_pid_passes_straight_through():
    gw = make_gateway()
    attach_dongle(gw, "ins", profile="insurance")
    gw.set_response_transform("ins", PrivacyConfig(alg="shuffle", W=4, seed=1))
    gw.submit("ins", ObdRequest("ins", 0xA6, 0.0))
    gw.drain()
    d = gw.sessions["ins"].delivered
    assert len(d) == 1 and not d[0].transformed  # odometer is not shaped


# --- management command API ---


def test_manage_attach_submit_probe_cycle():
    gw = make_gateway()
    out = gw.manage(
        {"op": "attach", "principal": "ins", "args": {"profile": "insurance", "rate": 1.0}}
    )
    assert out["ok"] and out["data"]["profile"] == "insurance"
    gw.submit("ins", ObdRequest("ins", 0x0D, 0.0))
    gw.drain()
    probe = gw.manage({"op": "probe", "principal": "ins", "args": {}})
    assert probe["ok"] and len(probe["data"]) == 2


def test_manage_policy_roundtrip():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unknown")
    added = gw.manage(
        {
            "op": "policy_add",
            "principal": "d",
            "args": {"resource": ["0x0D"], "effect": "allow", "priority": 60},
        }
    )
    assert added["ok"]
    listed = gw.manage({"op": "policy_list", "principal": "d"})
    ids = [p["id"] for p in listed["data"]]
    assert added["data"]["policy_id"] in ids
    ticket = gw.submit("d", ObdRequest("d", 0x0D, gw.now))
    assert ticket.status == "queued"
    removed = gw.manage(
        {"op": "policy_remove", "principal": "d", "args": {"policy_id": added["data"]["policy_id"]}}
    )
    assert removed["ok"]
    gw.drain()
    assert gw.submit("d", ObdRequest("d", 0x0D, gw.now)).status == "denied"


def test_manage_rejects_unprivileged_caller():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="unrestricted")
    attach_dongle(gw, "pleb", profile="unknown")
    out = gw.manage({"op": "block", "principal": "d"}, caller="pleb")
    assert not out["ok"] and "privileged" in out["error"]


def test_manage_error_shape_on_unknown_op():
    gw = make_gateway()
    out = gw.manage({"op": "frobnicate"})
    assert out == {"ok": False, "error": "unknown op 'frobnicate'"}


def test_manage_app_and_send_raw():
    gw = make_gateway()
    out = gw.manage(
        {"op": "app", "args": {"action": "install", "app_id": "g", "privileged": True,
                               "profile": "insurance", "version": 1}}
    )
    assert out["ok"] and out["data"]["state"] == "installed"
    gw.manage({"op": "app", "args": {"action": "start", "app_id": "g"}})
    raw = gw.manage({"op": "send_raw", "args": {"pid": "0x0C"}}, caller="g")
    assert raw["ok"] and raw["data"]["value"] == pytest.approx(1800.0, rel=0.01)


def test_manage_status_snapshot():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="insurance", rate=1.0)
    gw.submit("d", ObdRequest("d", 0x0D, 0.0))
    gw.drain()
    status = gw.manage({"op": "status"})
    assert status["ok"]
    d = status["data"]["sessions"]["d"]
    assert d["completed"] == 1 and d["rate"] == 1.0


def test_probe_export_json_lines():
    gw = make_gateway()
    attach_dongle(gw, "d", profile="insurance")
    gw.submit("d", ObdRequest("d", 0x0D, 0.0))
    gw.submit("d", ObdRequest("d", 0x0C, 0.0))
    gw.drain()
    buf = io.StringIO()
    n = gw.export_probes(buf, "d")
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert n == len(lines) == 3
    assert {l["direction"] for l in lines} == {"to_vehicle", "from_vehicle", "denied"}


def test_gateway_overhead_adds_to_latency():
    gw = make_gateway(overhead_s=0.5)
    attach_dongle(gw, "d", profile="insurance")
    ticket = gw.submit("d", ObdRequest("d", 0x0D, 0.0))
    gw.drain()
    assert ticket.latency_s == pytest.approx(SERVICE + 0.5)


def test_operator_session_exists_and_is_privileged():
    gw = make_gateway()
    assert OPERATOR_ID in gw.sessions
    assert gw.sessions[OPERATOR_ID].principal.privileged
