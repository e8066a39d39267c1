"""Planar road networks for the destination-inference experiments.

Nodes sit on a plane (meters); edges are bidirectional road segments with a
length and a speed limit.  A node can be flagged as a stop (intersection
with a sign/light), which forces any profile through it to touch 0.

File format (JSON):
    {"nodes": [{"id", "x", "y", "stop"}],
     "edges": [{"a", "b", "len_m", "limit_kmh"}]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class NetworkError(ValueError):
    """Malformed road network."""


@dataclass(frozen=True)
class RoadNode:
    id: str
    x: float
    y: float
    stop: bool = False


@dataclass(frozen=True)
class RoadEdge:
    a: str
    b: str
    len_m: float
    limit_kmh: float

    def __post_init__(self) -> None:
        if self.len_m <= 0:
            raise NetworkError(f"edge {self.a}-{self.b}: length must be > 0")
        if self.limit_kmh <= 0:
            raise NetworkError(f"edge {self.a}-{self.b}: speed limit must be > 0")

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


class RoadNetwork:
    def __init__(self, nodes: list[RoadNode], edges: list[RoadEdge]):
        self.nodes: dict[str, RoadNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise NetworkError(f"duplicate node {node.id}")
            self.nodes[node.id] = node
        self.edges = list(edges)
        self.adjacency: dict[str, list[tuple[str, int]]] = {nid: [] for nid in self.nodes}
        for idx, edge in enumerate(self.edges):
            for end in (edge.a, edge.b):
                if end not in self.nodes:
                    raise NetworkError(f"edge references unknown node {end}")
            self.adjacency[edge.a].append((edge.b, idx))
            self.adjacency[edge.b].append((edge.a, idx))
        for nid in self.adjacency:
            self.adjacency[nid].sort()  # deterministic expansion order
        self._check_connected()

    def _check_connected(self) -> None:
        if not self.nodes:
            raise NetworkError("network has no nodes")
        seen = set()
        stack = [next(iter(self.nodes))]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(nb for nb, _ in self.adjacency[nid])
        if seen != set(self.nodes):
            missing = sorted(set(self.nodes) - seen)
            raise NetworkError(f"network is disconnected; unreachable: {missing[:5]}")

    def edge_between(self, a: str, b: str) -> RoadEdge:
        for nb, idx in self.adjacency[a]:
            if nb == b:
                return self.edges[idx]
        raise NetworkError(f"no edge between {a} and {b}")

    def euclidean_m(self, a: str, b: str) -> float:
        na, nb = self.nodes[a], self.nodes[b]
        return math.hypot(na.x - nb.x, na.y - nb.y)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "x": n.x, "y": n.y, "stop": n.stop}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": [
                {"a": e.a, "b": e.b, "len_m": e.len_m, "limit_kmh": e.limit_kmh}
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RoadNetwork":
        if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
            raise NetworkError("network JSON needs 'nodes' and 'edges'")
        try:
            nodes = [
                RoadNode(str(n["id"]), float(n["x"]), float(n["y"]), bool(n.get("stop", False)))
                for n in doc["nodes"]
            ]
            edges = [
                RoadEdge(str(e["a"]), str(e["b"]), float(e["len_m"]), float(e["limit_kmh"]))
                for e in doc["edges"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"bad network JSON: {exc}") from None
        return cls(nodes, edges)

    @classmethod
    def load(cls, stream) -> "RoadNetwork":
        return cls.from_json(json.load(stream))

    def dump(self, stream) -> None:
        json.dump(self.to_json(), stream, indent=2)


def line_network(n_nodes: int, spacing_m: float = 300.0, limit_kmh: float = 50.0) -> RoadNetwork:
    """A single road with no branches; the trivially identifiable case."""
    nodes = [RoadNode(f"n{i}", i * spacing_m, 0.0, stop=False) for i in range(n_nodes)]
    edges = [RoadEdge(f"n{i}", f"n{i+1}", spacing_m, limit_kmh) for i in range(n_nodes - 1)]
    return RoadNetwork(nodes, edges)


def grid_network(
    rows: int,
    cols: int,
    rng: np.random.Generator,
    spacing_m: float = 250.0,
    limit_pool_kmh: tuple[float, ...] = (50.0, 60.0, 72.0),
    stop_prob: float = 0.3,
    length_jitter: float = 0.15,
) -> RoadNetwork:
    """Randomized city grid.

    Per-edge random speed limits and lengths (jittered around the grid
    spacing) plus random stop nodes make distinct paths produce distinct
    speed profiles almost surely, so recovery experiments are well-posed.
    """
    nodes = [
        RoadNode(
            f"n{r}_{c}",
            c * spacing_m,
            r * spacing_m,
            stop=bool(rng.random() < stop_prob),
        )
        for r in range(rows)
        for c in range(cols)
    ]
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append(_rand_edge(f"n{r}_{c}", f"n{r}_{c+1}", spacing_m, rng,
                                        limit_pool_kmh, length_jitter))
            if r + 1 < rows:
                edges.append(_rand_edge(f"n{r}_{c}", f"n{r+1}_{c}", spacing_m, rng,
                                        limit_pool_kmh, length_jitter))
    return RoadNetwork(nodes, edges)


def _rand_edge(a, b, spacing_m, rng, pool, jitter):
    length = spacing_m * float(rng.uniform(1 - jitter, 1 + jitter))
    limit = float(pool[int(rng.integers(len(pool)))])
    return RoadEdge(a, b, length, limit)


def random_path(
    net: RoadNetwork,
    origin: str,
    rng: np.random.Generator,
    min_length_m: float,
    max_edges: int = 50,
) -> list[str]:
    """Random simple path from origin, at least ``min_length_m`` long if possible."""
    if origin not in net.nodes:
        raise NetworkError(f"unknown origin {origin}")
    path = [origin]
    visited = {origin}
    length = 0.0
    while length < min_length_m and len(path) <= max_edges:
        options = [(nb, idx) for nb, idx in net.adjacency[path[-1]] if nb not in visited]
        if not options:
            break
        nb, idx = options[int(rng.integers(len(options)))]
        path.append(nb)
        visited.add(nb)
        length += net.edges[idx].len_m
    return path
