"""Scenario runner: wires traces, principals, and models into one report.

A scenario is a JSON document with up to three workload sections plus a list
of expectations:

* ``gateway``   -- attach principals to a virtual vehicle behind the mediation
  core, replay request schedules, and measure latency / denial counts.
* ``attack``    -- the privacy evaluation harness: grid road networks, speed
  traces, transforms, and the destination-inference adversary.
* ``partition`` -- the pipeline placement cost model (detection-time ratio
  and cellular usage per placement).

``run_scenario`` produces a versioned report dict.  Everything in the report
except ``generated_at`` is deterministic for a fixed scenario and seed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .gateway import AppPackage, Gateway
from .obd import ObdRequest, pid_hex
from .partition import (
    FrameStream,
    Placement,
    ResourceModel,
    calibrate,
    simulate,
)
from .pathing import estimate_destination, path_length_m, predict_profile
from .policy import LocationRegistry, Principal, load_policy_documents
from .privacy import PrivacyConfig, compare_utility, transform_trace
from .roadnet import grid_network, random_path
from .vehicle import (
    DrivingTrace,
    VehicleProfile,
    VirtualVehicle,
    load_events,
    load_trace,
    synth_trace,
)

SCHEMA_VERSION = 1

# column order is part of the output contract
RESULT_COLUMNS = ("trace_id", "alg", "params", "seed", "error_ratio", "utility_degradation")


class ScenarioError(ValueError):
    """Malformed scenario document or unresolvable file reference."""


# --- expectations -----------------------------------------------------------

_OPS = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "==": lambda a, b: a == b,
}


@dataclass(frozen=True)
class Expectation:
    """One pass/fail check against a named report metric."""

    metric: str
    op: str
    value: float
    rel: float | None = None  # approx only: relative tolerance
    abs: float | None = None  # approx only: absolute tolerance

    def __post_init__(self) -> None:
        if self.op not in _OPS and self.op != "approx":
            raise ScenarioError(f"expectation {self.metric}: unknown op {self.op!r}")
        if self.op == "approx" and self.rel is None and self.abs is None:
            raise ScenarioError(f"expectation {self.metric}: approx needs rel or abs")

    @classmethod
    def from_dict(cls, doc: dict, where: str) -> "Expectation":
        if not isinstance(doc, dict):
            raise ScenarioError(f"{where}: expectation must be an object")
        try:
            return cls(
                metric=str(doc["metric"]),
                op=str(doc["op"]),
                value=float(doc["value"]),
                rel=None if doc.get("rel") is None else float(doc["rel"]),
                abs=None if doc.get("abs") is None else float(doc["abs"]),
            )
        except KeyError as exc:
            raise ScenarioError(f"{where}: expectation missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}: {exc}") from None

    def check(self, actual: float | None) -> bool:
        if actual is None:
            return False
        if self.op == "approx":
            tol = (self.abs or 0.0) + (self.rel or 0.0) * abs(self.value)
            return abs(actual - self.value) <= tol
        return _OPS[self.op](actual, self.value)

    def describe(self) -> str:
        if self.op == "approx":
            parts = []
            if self.rel is not None:
                parts.append(f"rel={self.rel:g}")
            if self.abs is not None:
                parts.append(f"abs={self.abs:g}")
            return f"{self.metric} ~= {self.value:g} ({', '.join(parts)})"
        return f"{self.metric} {self.op} {self.value:g}"


# --- loading ----------------------------------------------------------------

_SECTIONS = ("gateway", "attack", "partition")
# file-reference keys inside the gateway section, checked at load time
_GATEWAY_FILES = ("trace", "events", "policies")


def load_scenario(path: str | Path) -> dict:
    """Parse and validate a scenario file; errors carry file (and line) context."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario must be a JSON object")
    doc.setdefault("name", path.stem)
    validate_scenario(doc, base_dir=path.parent, where=str(path))
    return doc


def validate_scenario(doc: dict, base_dir: str | Path | None = None, where: str = "scenario") -> None:
    if not any(key in doc for key in _SECTIONS):
        raise ScenarioError(f"{where}: needs at least one of {', '.join(_SECTIONS)}")
    for key in _SECTIONS:
        if key in doc and not isinstance(doc[key], dict):
            raise ScenarioError(f"{where}: section {key!r} must be an object")
    gw = doc.get("gateway", {})
    if base_dir is not None:
        for key in _GATEWAY_FILES:
            ref = gw.get(key)
            if ref is not None and not (Path(base_dir) / ref).is_file():
                raise ScenarioError(f"{where}: gateway.{key} file not found: {ref}")
    for pr in gw.get("principals", []):
        if not isinstance(pr, dict) or "id" not in pr:
            raise ScenarioError(f"{where}: every gateway principal needs an 'id'")
    exps = doc.get("expectations", [])
    if not isinstance(exps, list):
        raise ScenarioError(f"{where}: expectations must be a list")
    for i, e in enumerate(exps):
        Expectation.from_dict(e, f"{where}: expectations[{i}]")


def _parse_pid(value) -> int:
    if isinstance(value, str):
        return int(value, 16) if value.lower().startswith("0x") else int(value)
    return int(value)


# --- gateway section --------------------------------------------------------


def _steady_trace(duration_s: float, speed_kmh: float = 50.0) -> DrivingTrace:
    t = np.arange(0.0, duration_s + 2.0, 1.0)
    return DrivingTrace(t, np.full(t.shape, speed_kmh))


def _request_schedule(principal_id: str, cfg: dict, duration_s: float) -> list[ObdRequest]:
    """Expand one principal's request generator into concrete requests.

    Arrivals step by repeated addition of the period so that schedules at
    rates like 100/s land on the same float grid the event loop produces.
    """
    pid = _parse_pid(cfg.get("pid", "0x0D"))
    mode = int(cfg.get("mode", 1))
    rate_hz = float(cfg.get("rate_hz", 1.0))
    if rate_hz <= 0:
        raise ScenarioError(f"principal {principal_id}: requests.rate_hz must be > 0")
    start = float(cfg.get("start_s", 0.0))
    stop = float(cfg.get("stop_s", duration_s))
    count = cfg.get("count")
    period = 1.0 / rate_hz
    out: list[ObdRequest] = []
    arrival = start
    while arrival < stop and (count is None or len(out) < int(count)):
        out.append(ObdRequest(principal_id, pid, issued_at=arrival, mode=mode))
        arrival += period
    return out


def _percentile(values: Sequence[float], q: float) -> float | None:
    if not values:
        return None
    return float(np.percentile(np.asarray(values, dtype=float), q))


def _run_gateway_section(section: dict, base_dir: Path, seed: int, metrics: dict, probe_summary: dict) -> None:
    duration = float(section.get("duration_s", 60.0))

    if section.get("trace"):
        with open(base_dir / section["trace"]) as fh:
            trace = load_trace(fh)
    elif section.get("synth_trace"):
        st = section["synth_trace"]
        trace = synth_trace(
            float(st.get("duration_s", duration + 2.0)),
            np.random.default_rng(int(st.get("seed", seed))),
            top_kmh=float(st.get("top_kmh", 60.0)),
        )
    else:
        trace = _steady_trace(duration, float(section.get("steady_kmh", 50.0)))

    events = ()
    if section.get("events"):
        with open(base_dir / section["events"]) as fh:
            events = load_events(fh)

    profile = VehicleProfile(flags=frozenset(section.get("vehicle_flags", ())))
    vehicle = VirtualVehicle(
        trace,
        profile=profile,
        events=events,
        service_time_s=float(section.get("service_time_s", 0.010)),
    )
    registry = LocationRegistry.from_dict(section["places"]) if section.get("places") else None
    gateway = Gateway(
        vehicle,
        registry=registry,
        queue_depth=int(section.get("queue_depth", 1024)),
        overhead_s=float(section.get("overhead_s", 0.0)),
    )

    doc_transforms: dict[str, dict] = {}
    if section.get("policies"):
        with open(base_dir / section["policies"]) as fh:
            for pdoc in load_policy_documents(fh):
                for policy in pdoc.policies:
                    gateway.store.add(policy)
                if pdoc.response_transform:
                    doc_transforms[pdoc.principal_id] = pdoc.response_transform

    principals = section.get("principals", [])
    schedules: list[tuple[str, list[ObdRequest]]] = []
    transformed_ids: list[tuple[str, str]] = []  # (principal, resource)
    for pr in principals:
        pid_id = str(pr["id"])
        kind = pr.get("kind", "dongle")
        profile_name = pr.get("profile", "unknown")
        if kind == "application":
            app = pr.get("app", {})
            gateway.install(
                AppPackage(
                    app_id=pid_id,
                    version=str(app.get("version", "1.0")),
                    profile=profile_name,
                    privileged=bool(app.get("privileged", False)),
                )
            )
            gateway.app_action("start", pid_id)
        else:
            gateway.attach(
                Principal(pid_id, kind=kind, profile=profile_name, privileged=bool(pr.get("privileged", False)))
            )
        if pr.get("rate") is not None:
            gateway.set_rate(pid_id, float(pr["rate"]))
        tcfg = pr.get("transform") or doc_transforms.get(pid_id)
        if tcfg:
            resources = tuple(tcfg.get("resources", ("0x0D",)))
            gateway.set_response_transform(pid_id, PrivacyConfig.from_dict(tcfg), resources=resources)
            transformed_ids.append((pid_id, resources[0]))
        if pr.get("requests"):
            schedules.append((pid_id, _request_schedule(pid_id, pr["requests"], duration)))

    # submit in arrival order so submission sequence matches wall-clock order
    flat = [(req.issued_at, i, pid_id, req) for i, (pid_id, reqs) in enumerate(schedules) for req in reqs]
    flat.sort(key=lambda item: (item[0], item[1]))
    tickets: dict[str, list] = {pid_id: [] for pid_id, _ in schedules}
    for _, _, pid_id, req in flat:
        tickets[pid_id].append(gateway.submit(pid_id, req))

    gateway.run_until(duration)
    for pid_id, _ in transformed_ids:
        gateway.flush_transforms(pid_id)

    for pr in principals:
        pid_id = str(pr["id"])
        session = gateway.sessions[pid_id]
        prefix = f"gateway.{pid_id}"
        for stat in ("submitted", "denied", "forwarded", "completed"):
            metrics[f"{prefix}.{stat}"] = (float(session.stats[stat]), "requests")

        # latency over admitted requests; unfinished ones are censored at the
        # horizon so starvation shows up instead of vanishing from the stats
        waits = []
        finished = []
        for ticket in tickets.get(pid_id, ()):
            if ticket.status == "denied":
                continue
            if ticket.completed_at is not None:
                waits.append(ticket.completed_at - ticket.request.issued_at)
                finished.append(ticket.latency_s)
            else:
                waits.append(duration - ticket.request.issued_at)
        if waits:
            metrics[f"{prefix}.p50_latency_s"] = (_percentile(waits, 50), "s")
            metrics[f"{prefix}.p95_latency_s"] = (_percentile(waits, 95), "s")
            metrics[f"{prefix}.max_latency_s"] = (max(waits), "s")
        if finished:
            metrics[f"{prefix}.p95_completed_latency_s"] = (_percentile(finished, 95), "s")

        records = gateway.probe(pid_id)
        denials: dict[str, int] = {}
        directions = {"to_vehicle": 0, "from_vehicle": 0, "denied": 0}
        for rec in records:
            directions[rec.direction] = directions.get(rec.direction, 0) + 1
            if rec.reason:
                denials[rec.reason] = denials.get(rec.reason, 0) + 1
        probe_summary[pid_id] = {"directions": directions, "denials": denials}

    for pid_id, resource in transformed_ids:
        session = gateway.sessions[pid_id]
        truth = [
            t.response.value
            for t in tickets.get(pid_id, ())
            if t.response is not None and pid_hex(t.response.pid) == resource
        ]
        seen = [d.value for d in session.delivered if d.transformed and pid_hex(d.pid) == resource]
        if truth and seen:
            report = compare_utility(truth, seen)
            if report.degradation is not None:
                metrics[f"gateway.{pid_id}.utility_degradation"] = (report.degradation, "fraction")


# --- attack section (privacy evaluation harness) ----------------------------

DEFAULT_ALGS = (
    {"alg": "identity"},
    {"alg": "shuffle", "W": 5},
    {"alg": "shuffle", "W": 10},
    {"alg": "shuffle", "W": 20},
    {"alg": "round_shuffle", "p": 5.0, "W": 10},
    {"alg": "noise", "R_uniform": 20.0},
)


def alg_label(cfg: dict) -> str:
    alg = cfg.get("alg", "identity")
    if alg == "shuffle":
        return f"shuffle_W{int(cfg.get('W', 1))}"
    if alg == "round_shuffle":
        return f"round_shuffle_p{cfg.get('p', 5.0):g}_W{int(cfg.get('W', 1))}"
    if alg == "noise":
        return f"noise_R{cfg.get('R_uniform', 0.0):g}"
    return alg


def alg_params(cfg: dict) -> str:
    alg = cfg.get("alg", "identity")
    if alg == "shuffle":
        return f"W={int(cfg.get('W', 1))}"
    if alg == "round_shuffle":
        return f"p={cfg.get('p', 5.0):g};W={int(cfg.get('W', 1))}"
    if alg == "noise":
        return f"R={cfg.get('R_uniform', 0.0):g}"
    return ""


def attack_experiment(cfg: dict) -> tuple[list[dict], dict[str, dict]]:
    """Run the transform-vs-adversary sweep.

    Returns (rows, summary): one row per (trace, transform, seed) with the
    adversary's error ratio and the consumer-utility degradation, plus
    per-transform means for the report.
    """
    n_traces = int(cfg.get("traces", 10))
    n_seeds = int(cfg.get("seeds", 10))
    grid = cfg.get("grid", {})
    rows_n = int(grid.get("rows", 5))
    cols_n = int(grid.get("cols", 5))
    origin = str(cfg.get("origin", "n0_0"))
    min_path_m = float(cfg.get("min_path_m", 1500.0))
    beam_width = cfg.get("beam_width", 32)
    if beam_width is not None:
        beam_width = int(beam_width)
    seed_base = int(cfg.get("trace_seed_base", 1000))
    algs = cfg.get("algs", list(DEFAULT_ALGS))

    rows: list[dict] = []
    for trace_id in range(n_traces):
        rng = np.random.default_rng(seed_base + trace_id)
        net = grid_network(rows_n, cols_n, rng)
        path = random_path(net, origin, rng, min_length_m=min_path_m)
        truth = predict_profile(net, path)
        travelled = path_length_m(net, path)
        destination = path[-1]
        for acfg in algs:
            label = alg_label(acfg)
            params = alg_params(acfg)
            for seed in range(n_seeds):
                config = PrivacyConfig.from_dict({**acfg, "seed": seed})
                released = transform_trace(truth, config)
                attack = estimate_destination(
                    released,
                    origin,
                    net,
                    beam_width=beam_width,
                    actual=destination,
                    actual_travelled_m=travelled,
                )
                report = compare_utility(truth, released)
                rows.append(
                    {
                        "trace_id": trace_id,
                        "alg": label,
                        "params": params,
                        "seed": seed,
                        "error_ratio": attack.error_ratio,
                        "utility_degradation": report.degradation,
                    }
                )

    summary: dict[str, dict] = {}
    for label in sorted({r["alg"] for r in rows}):
        sub = [r for r in rows if r["alg"] == label]
        errs = [r["error_ratio"] for r in sub if r["error_ratio"] is not None]
        degs = [r["utility_degradation"] for r in sub if r["utility_degradation"] is not None]
        summary[label] = {
            "mean_error_ratio": float(np.mean(errs)) if errs else None,
            "mean_utility_degradation": float(np.mean(degs)) if degs else None,
            "runs": len(sub),
        }
    return rows, summary


def write_results_csv(rows: list[dict], fh: io.TextIOBase) -> None:
    writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in RESULT_COLUMNS})


def _run_attack_section(section: dict, metrics: dict) -> list[dict]:
    rows, summary = attack_experiment(section)
    for label, stats in summary.items():
        if stats["mean_error_ratio"] is not None:
            metrics[f"attack.{label}.mean_error_ratio"] = (stats["mean_error_ratio"], "ratio")
        if stats["mean_utility_degradation"] is not None:
            metrics[f"attack.{label}.mean_utility_degradation"] = (
                stats["mean_utility_degradation"],
                "fraction",
            )
    return rows


# --- partition section ------------------------------------------------------


@dataclass(frozen=True)
class _Alert:
    plate: str
    color: str
    active: bool = True


def _run_partition_section(section: dict, seed: int, metrics: dict) -> None:
    cal = calibrate()
    base = cal.resources
    resources = ResourceModel(
        edge_mhz=float(section.get("cpu_mhz", 600.0)),
        cloud_speedup=float(section.get("cloud_speedup", base.cloud_speedup)),
        uplink_bps=float(section.get("uplink_bps", base.uplink_bps)),
        rtt_s=float(section.get("rtt_s", base.rtt_s)),
    )
    stochastic = bool(section.get("stochastic", False))
    stream = FrameStream(
        fps=int(section.get("fps", 1)),
        resolution=str(section.get("resolution", "720p")),
        duration_s=float(section.get("duration_s", 600.0)),
        plates_per_frame=int(section.get("plates_per_frame", 4)),
        color_match_rate=float(section.get("color_match_rate", 0.25)),
        t_appearance_s=float(section.get("t_appearance_s", 540.0)),
        stochastic=stochastic,
    )
    alerts = [
        _Alert(a.get("plate", stream.target_plate), a.get("color", stream.target_color), bool(a.get("active", True)))
        for a in section.get("alerts", [{"plate": stream.target_plate, "color": stream.target_color}])
    ]
    rng = np.random.default_rng(seed) if stochastic else None
    results = {}
    for name in section.get("placements", ("smartcore", "cloud", "hybrid")):
        result = simulate(cal.model, Placement(name), stream, resources, alert_db=alerts, rng=rng)
        results[name] = result
        prefix = f"partition.{name}"
        if result.dtr is not None:
            metrics[f"{prefix}.dtr"] = (result.dtr, "ratio")
        if result.t_detection_s is not None:
            metrics[f"{prefix}.t_detection_s"] = (result.t_detection_s, "s")
        metrics[f"{prefix}.cellular_mb"] = (result.cellular_bytes / 1e6, "MB")
    if "cloud" in results and "hybrid" in results and results["hybrid"].cellular_bytes > 0:
        ratio = results["cloud"].cellular_bytes / results["hybrid"].cellular_bytes
        metrics["partition.cloud_hybrid_cellular_ratio"] = (ratio, "ratio")
    metrics["partition.calibration_max_rel_error"] = (cal.max_rel_error, "fraction")


# --- report assembly --------------------------------------------------------


def run_scenario(
    scenario: str | Path | dict,
    seed: int | None = None,
    base_dir: str | Path | None = None,
    results_stream: io.TextIOBase | None = None,
) -> dict:
    """Execute a scenario and build the report.

    ``scenario`` may be a path (loaded with ``load_scenario``) or an already
    validated document.  ``seed`` overrides the document's seed.  When the
    attack section runs and ``results_stream`` is given, the per-run rows are
    written there as CSV.
    """
    if isinstance(scenario, (str, Path)):
        path = Path(scenario)
        doc = load_scenario(path)
        base_dir = path.parent
    else:
        doc = scenario
        validate_scenario(doc, base_dir=base_dir)
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    run_seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    metrics: dict[str, tuple[float, str]] = {}
    probe_summary: dict[str, dict] = {}
    result_rows: list[dict] = []

    if "gateway" in doc:
        _run_gateway_section(doc["gateway"], base, run_seed, metrics, probe_summary)
    if "attack" in doc:
        result_rows = _run_attack_section(doc["attack"], metrics)
        if results_stream is not None:
            write_results_csv(result_rows, results_stream)
    if "partition" in doc:
        _run_partition_section(doc["partition"], run_seed, metrics)

    checks = []
    all_passed = True
    for i, edoc in enumerate(doc.get("expectations", [])):
        exp = Expectation.from_dict(edoc, f"expectations[{i}]")
        entry = metrics.get(exp.metric)
        actual = entry[0] if entry is not None else None
        passed = exp.check(actual)
        all_passed = all_passed and passed
        row = {"metric": exp.metric, "op": exp.op, "value": exp.value, "actual": actual, "passed": passed}
        if exp.rel is not None:
            row["rel"] = exp.rel
        if exp.abs is not None:
            row["abs"] = exp.abs
        checks.append(row)

    config = {k: v for k, v in doc.items() if k != "expectations"}
    return {
        "schema_version": SCHEMA_VERSION,
        "name": doc.get("name", "scenario"),
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "seed": run_seed,
        "config": config,
        "metrics": [
            {"metric": name, "value": value, "unit": unit}
            for name, (value, unit) in sorted(metrics.items())
        ],
        "probe_summary": probe_summary,
        "expectations": checks,
        "passed": all_passed,
    }


def render_text(report: dict) -> str:
    """Human-readable report for terminal output."""
    lines = [
        f"scenario: {report['name']}",
        f"seed: {report['seed']}",
        "",
        "metrics:",
    ]
    for row in report["metrics"]:
        lines.append(f"  {row['metric']:<48} {row['value']:>14.6g}  {row['unit']}")
    if report["expectations"]:
        lines.append("")
        lines.append("expectations:")
        for check in report["expectations"]:
            mark = "ok " if check["passed"] else "FAIL"
            actual = "missing" if check["actual"] is None else f"{check['actual']:.6g}"
            lines.append(
                f"  [{mark}] {check['metric']} {check['op']} {check['value']:g}  (actual {actual})"
            )
    lines.append("")
    lines.append("passed" if report["passed"] else "FAILED")
    return "\n".join(lines)
