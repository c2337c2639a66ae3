"""Causal relation graphs: validation, JSON interchange, cycle detection and
node origin classification.

The interchange document is a JSON object::

    {"nodes": ["entity1", ...],
     "edges": [{"from": "cause", "to": "effect", "strength": 0.9, "type": "causal"}]}

Node kinds and origins are not part of the document; parsed nodes are
entities with ``origin == "unknown"``.
"""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Literal, Mapping

from .errors import (
    CyclicGraph,
    DanglingEndpoint,
    MalformedDocument,
    StrengthOutOfRange,
    UnknownEdgeType,
)

if TYPE_CHECKING:
    from .knowledge import KnowledgeGraph

NodeKind = Literal["entity", "event", "action"]
Origin = Literal["endogenous", "exogenous", "unknown"]
EdgeType = Literal["causal", "attribute", "factual"]

NODE_KINDS = ("entity", "event", "action")
ORIGINS = ("endogenous", "exogenous", "unknown")
EDGE_TYPES = ("causal", "attribute", "factual")

_WS = re.compile(r"\s+")


def normalize_label(text: str, synonyms: Mapping[str, str] | None = None) -> str:
    """Trim, case-fold and collapse internal whitespace.

    If ``synonyms`` is given, a normalized label found among its keys is
    replaced by the (normalized) canonical value.
    """
    label = _WS.sub(" ", text.strip()).casefold()
    if synonyms:
        canon = _normalized_synonyms(synonyms).get(label)
        if canon is not None:
            return canon
    return label


def _normalized_synonyms(synonyms: Mapping[str, str]) -> dict[str, str]:
    return {
        _WS.sub(" ", k.strip()).casefold(): _WS.sub(" ", v.strip()).casefold()
        for k, v in synonyms.items()
    }


@dataclass(frozen=True)
class CausalNode:
    label: str
    kind: NodeKind = "entity"
    origin: Origin = "unknown"

    def __post_init__(self):
        label = normalize_label(self.label)
        if not label:
            raise MalformedDocument("node label is empty after normalization")
        object.__setattr__(self, "label", label)
        if self.kind not in NODE_KINDS:
            raise MalformedDocument(f"unknown node kind {self.kind!r}")
        if self.origin not in ORIGINS:
            raise MalformedDocument(f"unknown node origin {self.origin!r}")


@dataclass(frozen=True)
class CausalEdge:
    source: str
    target: str
    strength: float = 1.0
    edge_type: EdgeType = "causal"

    def __post_init__(self):
        source, target = normalize_label(self.source), normalize_label(self.target)
        if not source or not target:
            raise MalformedDocument("edge endpoint is empty after normalization")
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        if self.edge_type not in EDGE_TYPES:
            raise UnknownEdgeType(f"edge type {self.edge_type!r} not in {EDGE_TYPES}")
        s = self.strength
        if isinstance(s, bool) or not isinstance(s, (int, float)):
            raise MalformedDocument(f"strength must be a number, got {s!r}")
        if math.isnan(s) or not 0.0 <= s <= 1.0:
            raise StrengthOutOfRange(f"strength {s!r} outside [0, 1]")


@dataclass(frozen=True)
class CausalGraph:
    """Immutable graph. Nodes are keyed by label; equality ignores node order."""

    nodes: Mapping[str, CausalNode] = field(default_factory=dict)
    edges: tuple[CausalEdge, ...] = ()

    @classmethod
    def build(
        cls,
        nodes: Iterable[CausalNode | str] = (),
        edges: Iterable[CausalEdge] = (),
        strict: bool = True,
    ) -> "CausalGraph":
        table: dict[str, CausalNode] = {}
        for n in nodes:
            node = n if isinstance(n, CausalNode) else CausalNode(n)
            if node.label in table:
                if strict:
                    raise MalformedDocument(f"duplicate node label {node.label!r}")
                continue
            table[node.label] = node
        edge_list = tuple(edges)
        for e in edge_list:
            for end in (e.source, e.target):
                if end not in table:
                    if strict:
                        raise DanglingEndpoint(f"edge endpoint {end!r} is not a declared node")
                    table[end] = CausalNode(end)
        return cls(nodes=table, edges=edge_list)

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes.items()), self.edges))

    @property
    def labels(self) -> list[str]:
        return list(self.nodes)

    def causal_edges(self) -> list[CausalEdge]:
        return [e for e in self.edges if e.edge_type == "causal"]

    def incident(self, label: str) -> list[CausalEdge]:
        return [e for e in self.edges if label in (e.source, e.target)]


def parse_graph(text: str | bytes, mode: Literal["strict", "lenient"] = "lenient") -> CausalGraph:
    """Parse an interchange document.

    In lenient mode edge endpoints missing from ``nodes`` are created as
    entities; duplicate node labels are merged.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    return graph_from_dict(doc, mode)


def graph_from_dict(doc: object, mode: Literal["strict", "lenient"] = "lenient") -> CausalGraph:
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be an object")
    nodes = doc.get("nodes", [])
    edges = doc.get("edges", [])
    if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
        raise MalformedDocument("'nodes' must be an array of strings")
    if not isinstance(edges, list):
        raise MalformedDocument("'edges' must be an array")
    parsed = []
    for i, e in enumerate(edges):
        if not isinstance(e, dict):
            raise MalformedDocument(f"edge {i} is not an object")
        missing = {"from", "to", "strength", "type"} - e.keys()
        if missing:
            raise MalformedDocument(f"edge {i} missing keys {sorted(missing)}")
        if not isinstance(e["from"], str) or not isinstance(e["to"], str):
            raise MalformedDocument(f"edge {i} endpoints must be strings")
        if not isinstance(e["type"], str):
            raise UnknownEdgeType(f"edge {i} type must be a string")
        parsed.append(CausalEdge(e["from"], e["to"], e["strength"], e["type"]))
    return CausalGraph.build(nodes, parsed, strict=(mode == "strict"))


def graph_to_dict(g: CausalGraph) -> dict:
    return {
        "nodes": sorted(g.nodes),
        "edges": [
            {"from": e.source, "to": e.target, "strength": e.strength, "type": e.edge_type}
            for e in g.edges
        ],
    }


def serialize_graph(g: CausalGraph) -> str:
    """Compact canonical JSON: nodes sorted by label, edges in insertion order."""
    return json.dumps(graph_to_dict(g), separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class CycleReport:
    is_dag: bool
    witness: tuple[str, ...] = ()


def _adjacency(labels: Iterable[str], edges: Iterable[CausalEdge]) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {label: [] for label in labels}
    for e in edges:
        adj.setdefault(e.source, []).append(e.target)
        adj.setdefault(e.target, [])
    for succ in adj.values():
        succ.sort()
    return adj


def find_cycle(adj: Mapping[str, list[str]]) -> list[str] | None:
    """Iterative three-colour DFS; returns one cycle as ``[a, ..., a]`` or None."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(adj, WHITE)
    for root in sorted(adj):
        if colour[root] != WHITE:
            continue
        path = [root]
        stack = [iter(adj[root])]
        colour[root] = GREY
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                colour[path.pop()] = BLACK
                stack.pop()
            elif colour[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            elif colour[nxt] == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                stack.append(iter(adj[nxt]))
    return None


def detect_cycles(g: CausalGraph) -> CycleReport:
    """Only ``causal`` edges take part; attribute/factual edges are exempt."""
    cycle = find_cycle(_adjacency(g.nodes, g.causal_edges()))
    if cycle is None:
        return CycleReport(True)
    return CycleReport(False, tuple(cycle))


def topological_order(g: CausalGraph) -> list[str]:
    """Kahn's algorithm over causal edges with ties broken by ascending label."""
    adj = _adjacency(g.nodes, g.causal_edges())
    indeg = dict.fromkeys(adj, 0)
    for succ in adj.values():
        for v in succ:
            indeg[v] += 1
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in adj[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != len(adj):
        report = detect_cycles(g)
        raise CyclicGraph(f"graph has a causal cycle: {' -> '.join(report.witness)}")
    return order


def classify_nodes(
    g: CausalGraph,
    fact_index: "KnowledgeGraph",
    synonyms: Mapping[str, str] | None = None,
) -> CausalGraph:
    """Mark each node endogenous if the fact index knows it, else exogenous.

    A node matches when its label, or its synonym-table canonical form, is an
    entity of ``fact_index``.
    """
    table = _normalized_synonyms(synonyms) if synonyms else {}
    known = fact_index.entities
    nodes = {}
    for label, node in g.nodes.items():
        hit = label in known or table.get(label) in known
        nodes[label] = replace(node, origin="endogenous" if hit else "exogenous")
    return CausalGraph(nodes=nodes, edges=g.edges)
