"""Evidence store for attribution queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .errors import MalformedDocument
from .graph import EDGE_TYPES, CausalGraph, graph_from_dict, normalize_label, parse_graph


@dataclass(frozen=True)
class KGEdge:
    source: str
    kind: str
    target: str
    relation: str | None = None


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    entities: frozenset[str]
    edges: tuple[KGEdge, ...] = ()
    _adj: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        adj: dict[str, dict[str, list[str]]] = {}
        for e in self.edges:
            if e.kind not in EDGE_TYPES:
                raise MalformedDocument(f"unknown relation kind {e.kind!r}")
            if e.source not in self.entities or e.target not in self.entities:
                raise MalformedDocument(f"edge {e.source!r}->{e.target!r} has an unknown endpoint")
            adj.setdefault(e.kind, {}).setdefault(e.source, []).append(e.target)
        object.__setattr__(self, "_adj", adj)

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[tuple[str, str, str] | tuple[str, str, str, str]],
        entities: Iterable[str] = (),
    ) -> "KnowledgeGraph":
        """Build from ``(source, kind, target[, relation])`` triples."""
        ents = {normalize_label(x) for x in entities}
        edges = []
        for t in triples:
            src, kind, dst = normalize_label(t[0]), t[1], normalize_label(t[2])
            rel = t[3] if len(t) > 3 else None
            ents.update((src, dst))
            edges.append(KGEdge(src, kind, dst, rel))
        return cls(frozenset(ents), tuple(edges))

    @classmethod
    def from_graph(cls, g: CausalGraph) -> "KnowledgeGraph":
        # strengths are ignored
        edges = tuple(KGEdge(e.source, e.edge_type, e.target) for e in g.edges)
        return cls(frozenset(g.nodes), edges)

    @classmethod
    def from_document(cls, text: str | bytes) -> "KnowledgeGraph":
        return cls.from_graph(parse_graph(text, "lenient"))

    @classmethod
    def from_dict(cls, doc: dict) -> "KnowledgeGraph":
        return cls.from_graph(graph_from_dict(doc, "lenient"))

    def __len__(self) -> int:
        return len(self.entities)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.entities == other.entities and self.edges == other.edges

    def __hash__(self):
        return hash((self.entities, self.edges))

    def successors(self, node: str, kind: str) -> list[str]:
        return self._adj.get(kind, {}).get(node, [])

    def has_path(self, source: str, target: str, kind: str, max_len: int) -> bool:
        """Directed path of 1..max_len edges, all of relation kind ``kind``."""
        if source not in self.entities or target not in self.entities or max_len < 1:
            return False
        seen = {source}
        frontier = deque([(source, 0)])
        while frontier:
            node, depth = frontier.popleft()
            for nxt in self.successors(node, kind):
                if nxt == target:
                    return True
                if depth + 1 < max_len and nxt not in seen:
                    seen.add(nxt)
                    frontier.append((nxt, depth + 1))
        return False

    def with_edges(self, extra: Iterable[KGEdge]) -> "KnowledgeGraph":
        extra = tuple(extra)
        ents = set(self.entities)
        for e in extra:
            ents.update((e.source, e.target))
        return KnowledgeGraph(frozenset(ents), self.edges + extra)
