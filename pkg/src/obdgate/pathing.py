"""Destination inference from speed traces over a known road network.

The adversary model: given the origin of a trip, a road network, and the
speed stream a dongle observed (possibly privacy-transformed), rank
candidate paths by how well their physically predicted speed profile matches
the stream, and call the end of the best path the destination.  Stop events
(low-speed runs) anchor the match; the integrated trace distance bounds how
far the candidate paths extend.

The reported metric is ``error_ratio``: straight-line distance between the
estimated and actual destination, divided by the distance travelled.  Larger
means the transform hid more.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import profile_speeds, score_profile
from .roadnet import NetworkError, RoadNetwork

DEFAULT_ACCEL_MS2 = 2.0
DEFAULT_SAMPLE_HZ = 1.0
DEFAULT_BEAM_WIDTH = 32
LOW_SPEED_KMH = 2.0  # a sample below this is a stop-event sample

# score weights, in m/s: cost per mismatched low-speed run and per sample of
# length mismatch between trace and candidate profile
STOP_RUN_PENALTY = 2.0
LENGTH_PENALTY = 0.25

# the integrated trace distance carries zero-order-hold quantization error of
# a few meters either way; shrink the budget so a path exactly as long as the
# trip still qualifies as a candidate
BUDGET_SLACK_M = 5.0

KMH_TO_MS = 1.0 / 3.6


class PathingError(ValueError):
    """Bad attack input."""


def path_length_m(net: RoadNetwork, path: list[str]) -> float:
    return sum(net.edge_between(a, b).len_m for a, b in zip(path, path[1:]))


def _path_caps(net: RoadNetwork, path: list[str], final_stop: bool):
    """Per-edge arrays + node boundary speed ceilings for the profile kernel."""
    n = len(path) - 1
    lens = np.empty(n)
    lims = np.empty(n)
    for i, (a, b) in enumerate(zip(path, path[1:])):
        edge = net.edge_between(a, b)
        lens[i] = edge.len_m
        lims[i] = edge.limit_kmh * KMH_TO_MS
    caps = np.empty(n + 1)
    caps[0] = 0.0  # trips start at rest
    for i in range(1, n):
        caps[i] = 0.0 if net.nodes[path[i]].stop else min(lims[i - 1], lims[i])
    caps[n] = 0.0 if final_stop else lims[n - 1] if n else 0.0
    return lens, lims, caps


def predict_profile(
    net: RoadNetwork,
    path: list[str],
    accel: float = DEFAULT_ACCEL_MS2,
    sample_hz: float = DEFAULT_SAMPLE_HZ,
    final_stop: bool = True,
) -> np.ndarray:
    """Synthetic speed trace (km/h, 1 sample per 1/sample_hz s) along a path."""
    if len(path) < 2:
        return np.empty(0)
    lens, lims, caps = _path_caps(net, path, final_stop)
    return profile_speeds(lens, lims, caps, accel, 1.0 / sample_hz) / KMH_TO_MS


def trace_distance_m(speeds_kmh: np.ndarray, sample_dt: float = 1.0) -> float:
    """Distance implied by a speed stream under zero-order hold."""
    return float(np.sum(np.asarray(speeds_kmh, dtype=float)) * KMH_TO_MS * sample_dt)


def attack_error(net: RoadNetwork, estimated: str, actual: str, travelled_m: float) -> float:
    """Straight-line estimation error normalized by distance travelled."""
    if travelled_m <= 0:
        raise PathingError("travelled distance must be positive")
    return net.euclidean_m(estimated, actual) / travelled_m


@dataclass(frozen=True)
class AttackResult:
    estimated_destination: str
    actual_destination: str | None
    travelled_m: float
    error_ratio: float | None
    score: float
    path: tuple[str, ...]


@dataclass
class _Partial:
    path: tuple[str, ...]
    length_m: float

    @property
    def end(self) -> str:
        return self.path[-1]


def _candidate_paths(
    net: RoadNetwork,
    origin: str,
    budget_m: float,
    beam_width: int | None,
    trace_ms: np.ndarray,
    accel: float,
):
    """Grow simple paths from origin until they cover the distance budget.

    A path is a candidate once its length reaches the budget or it cannot be
    extended.  With ``beam_width=None`` nothing is pruned (exhaustive
    enumeration); otherwise each generation keeps the best ``beam_width``
    partials by prefix score.
    """
    frontier = [_Partial((origin,), 0.0)]
    candidates: list[_Partial] = []
    while frontier:
        grown: list[_Partial] = []
        for part in frontier:
            visited = set(part.path)
            extensions = [
                (nb, idx) for nb, idx in net.adjacency[part.end] if nb not in visited
            ]
            if not extensions:
                candidates.append(part)
                continue
            for nb, idx in extensions:
                nxt = _Partial(part.path + (nb,), part.length_m + net.edges[idx].len_m)
                if nxt.length_m >= budget_m:
                    candidates.append(nxt)
                else:
                    grown.append(nxt)
        if beam_width is not None and len(grown) > beam_width:
            grown.sort(key=lambda p: (_prefix_score(net, p, trace_ms, accel), p.path))
            grown = grown[:beam_width]
        frontier = grown
    return candidates


def _prefix_score(net: RoadNetwork, part: _Partial, trace_ms: np.ndarray, accel: float) -> float:
    prof = predict_profile(net, list(part.path), accel=accel, final_stop=False) * KMH_TO_MS
    if prof.size == 0:
        prof = np.zeros(1)
    # prefix comparison: no length penalty while the path is still growing
    L = min(len(trace_ms), len(prof))
    return score_profile(trace_ms[:L], prof[:L], LOW_SPEED_KMH * KMH_TO_MS,
                         STOP_RUN_PENALTY, 0.0)


def _final_score(net: RoadNetwork, part: _Partial, trace_ms: np.ndarray, accel: float) -> float:
    prof = predict_profile(net, list(part.path), accel=accel, final_stop=True) * KMH_TO_MS
    if prof.size == 0:
        prof = np.zeros(1)
    return score_profile(trace_ms, prof, LOW_SPEED_KMH * KMH_TO_MS,
                         STOP_RUN_PENALTY, LENGTH_PENALTY)


def _pick_best(
    net: RoadNetwork,
    candidates: list[_Partial],
    trace_ms: np.ndarray,
    accel: float,
    actual: str | None,
    travelled: float,
) -> AttackResult:
    scored = sorted(
        ((_final_score(net, p, trace_ms, accel), p) for p in candidates),
        key=lambda sp: (sp[0], sp[1].path),
    )
    score, best = scored[0]
    error = None
    if actual is not None and travelled > 0:
        error = attack_error(net, best.end, actual, travelled)
    return AttackResult(
        estimated_destination=best.end,
        actual_destination=actual,
        travelled_m=travelled,
        error_ratio=error,
        score=score,
        path=best.path,
    )


def estimate_destination(
    trace_kmh: np.ndarray,
    origin: str,
    net: RoadNetwork,
    beam_width: int | None = DEFAULT_BEAM_WIDTH,
    accel: float = DEFAULT_ACCEL_MS2,
    actual: str | None = None,
    actual_travelled_m: float | None = None,
) -> AttackResult:
    """Best-matching destination for a speed stream starting at ``origin``.

    ``beam_width=None`` disables pruning (exhaustive search).  When the true
    destination ``actual`` is supplied the result carries the normalized
    error; ``actual_travelled_m`` overrides the denominator (use the true
    path length when scoring transformed traces, so ratios stay comparable
    across transforms).
    """
    trace = np.asarray(trace_kmh, dtype=float)
    if trace.size == 0:
        raise PathingError("empty trace")
    if origin not in net.nodes:
        raise PathingError(f"unknown origin {origin!r}")
    budget = trace_distance_m(trace) - BUDGET_SLACK_M
    travelled = actual_travelled_m if actual_travelled_m is not None else max(budget, 0.0)
    trace_ms = trace * KMH_TO_MS
    if budget <= 0.0:  # never moved (given quantization slack)
        return AttackResult(
            estimated_destination=origin,
            actual_destination=actual,
            travelled_m=travelled,
            error_ratio=None if actual is None or travelled <= 0
            else attack_error(net, origin, actual, travelled),
            score=0.0,
            path=(origin,),
        )
    candidates = _candidate_paths(net, origin, budget, beam_width, trace_ms, accel)
    return _pick_best(net, candidates, trace_ms, accel, actual, travelled)


def brute_force_destination(
    trace_kmh: np.ndarray,
    origin: str,
    net: RoadNetwork,
    accel: float = DEFAULT_ACCEL_MS2,
    actual: str | None = None,
    actual_travelled_m: float | None = None,
) -> AttackResult:
    """Exhaustive-enumeration twin of :func:`estimate_destination`.

    Kept separate as the oracle: grows every simple path via DFS with no
    pruning and no shared machinery with the beam scheduler.
    """
    trace = np.asarray(trace_kmh, dtype=float)
    if trace.size == 0:
        raise PathingError("empty trace")
    budget = trace_distance_m(trace) - BUDGET_SLACK_M
    travelled = actual_travelled_m if actual_travelled_m is not None else max(budget, 0.0)
    trace_ms = trace * KMH_TO_MS
    if budget <= 0.0:
        return estimate_destination(trace, origin, net, None, accel, actual, actual_travelled_m)

    candidates: list[_Partial] = []

    def grow(path: tuple[str, ...], length: float) -> None:
        extensions = [
            (nb, idx) for nb, idx in net.adjacency[path[-1]] if nb not in path
        ]
        if not extensions:
            candidates.append(_Partial(path, length))
            return
        for nb, idx in extensions:
            new_len = length + net.edges[idx].len_m
            if new_len >= budget:
                candidates.append(_Partial(path + (nb,), new_len))
            else:
                grow(path + (nb,), new_len)

    grow((origin,), 0.0)
    return _pick_best(net, candidates, trace_ms, accel, actual, travelled)


def count_simple_paths(net: RoadNetwork, origin: str, budget_m: float, limit: int = 10_000) -> int:
    """Number of candidate paths brute force would enumerate (capped at limit)."""
    count = 0

    def grow(path: tuple[str, ...], length: float) -> int:
        nonlocal count
        if count > limit:
            return count
        extensions = [(nb, idx) for nb, idx in net.adjacency[path[-1]] if nb not in path]
        if not extensions:
            count += 1
            return count
        for nb, idx in extensions:
            new_len = length + net.edges[idx].len_m
            if new_len >= budget_m:
                count += 1
            else:
                grow(path + (nb,), new_len)
        return count

    return grow((origin,), 0.0)
