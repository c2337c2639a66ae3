"""Rule-based atomic claim extraction.

Text is split into sentences on ``.!?`` (initials such as "J.K." and common
abbreviations do not end a sentence), sentences into clauses on ``;`` and on
", and/but/while/whereas". Each clause yields at most one
subject/relation/object triple, tried in this order:

1. a causal connective from the lexicon ("X causes Y", "Y because X"),
2. a copular/possessive verb ("X is Y", "X has Y"),
3. a subject followed by a verb-like token ("X wrote Y", "X starred in Y").

Lexicon files hold one connective per line. A leading ``<`` marks an
effect-first connective (the cause follows it, as in "Y because X"). Blank
lines and ``#`` comments are skipped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Literal

from .graph import CausalEdge, CausalGraph, CausalNode, normalize_label

RelationKind = Literal["causal", "attribute", "factual"]

DEFAULT_LEXICON_TEXT = """\
# forward connectives: <cause> CONNECTIVE <effect>
causes
cause
caused
causing
leads to
lead to
led to
leading to
results in
result in
resulted in
resulting in
gives rise to
give rise to
gave rise to
brings about
triggers
triggered
produces
produced
therefore
thus
hence
so that
# effect-first connectives: <effect> CONNECTIVE <cause>
<because of
<because
<due to
<owing to
<as a result of
<is caused by
<are caused by
<was caused by
<were caused by
<caused by
<results from
<resulted from
<result from
<stems from
<stemmed from
"""

COPULAS = ("has property", "is", "are", "was", "were", "has", "have", "had")

_ARTICLES = {"the", "a", "an"}
_TRAILING_AUX = {
    "can", "could", "may", "might", "will", "would", "should", "must", "often",
    "also", "directly", "usually", "typically", "generally", "does", "did", "do",
    "is", "are", "was", "were", "be", "been", "which", "that", "and",
}
_PREPOSITIONS = {"in", "on", "at", "for", "with", "by", "to", "from", "of", "into", "about", "as"}
_IRREGULAR_VERBS = {
    "wrote", "write", "writes", "won", "win", "wins", "made", "make", "makes", "built",
    "build", "builds", "led", "took", "gave", "met", "ran", "sold", "bought", "found",
    "became", "began", "held", "left", "lost", "beat", "chose", "drew", "drove", "fell",
    "flew", "got", "grew", "hit", "kept", "knew", "meant", "paid", "put", "rode", "rose",
    "said", "saw", "sent", "set", "shot", "sang", "sat", "spoke", "spent", "stood",
    "struck", "taught", "told", "thought", "threw", "wore", "won", "invented", "discovered",
    "directed", "founded", "owns", "runs", "reduces", "reduced", "increases", "increased",
}
_NOT_VERBS = {"this", "his", "its", "thus", "is", "was", "has", "as", "us", "yes", "news",
              "series", "species", "analysis", "basis", "bus", "gas", "plus", "less"}
_ABBREVIATIONS = {"mr", "mrs", "ms", "dr", "prof", "st", "vs", "etc", "e.g", "i.e", "fig", "no", "inc", "ltd", "co"}

_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")
_CLAUSE_SEP = re.compile(r";|,\s+(?:and|but|while|whereas)\s+", re.IGNORECASE)
_TOKEN = re.compile(r"\S+")
_EDGE_PUNCT = "\"'()[]{},;:.!?`"
_INITIALS = re.compile(r"(?:[A-Za-z]\.){2,}")


@dataclass(frozen=True)
class Connective:
    pattern: str
    effect_first: bool = False


@dataclass(frozen=True)
class Claim:
    subject: str
    relation: str
    object: str
    relation_kind: RelationKind
    source_span: tuple[int, int]

    def as_triple(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)


@dataclass(frozen=True)
class ClaimSet:
    claims: tuple[Claim, ...] = ()
    source_token_count: int = 0

    def __len__(self) -> int:
        return len(self.claims)

    def __iter__(self):
        return iter(self.claims)


def parse_lexicon(text: str) -> tuple[Connective, ...]:
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        effect_first = line.startswith("<")
        pattern = normalize_label(line.lstrip("<"))
        if pattern:
            out.append(Connective(pattern, effect_first))
    return tuple(out)


def load_lexicon(path: str | Path) -> tuple[Connective, ...]:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


DEFAULT_LEXICON = parse_lexicon(DEFAULT_LEXICON_TEXT)


@lru_cache(maxsize=32)
def _connective_regex(lexicon: tuple[Connective, ...]) -> re.Pattern:
    pats = sorted({c.pattern for c in lexicon}, key=len, reverse=True)
    body = "|".join(r"\s+".join(map(re.escape, p.split())) for p in pats)
    return re.compile(rf"(?<![\w-])(?:{body})(?![\w-])", re.IGNORECASE)


_COPULA_RE = re.compile(
    r"(?<![\w-])(?:" + "|".join(r"\s+".join(c.split()) for c in COPULAS) + r")(?![\w-])",
    re.IGNORECASE,
)


def _clean_phrase(text: str) -> str:
    words = [w if _INITIALS.fullmatch(w) else w.strip(_EDGE_PUNCT) for w in text.split()]
    words = [w for w in words if w]
    # a lone "A" is an entity, not an article
    while len(words) > 1 and words[0].lower() in _ARTICLES:
        words.pop(0)
    while len(words) > 1 and words[-1].lower() in _TRAILING_AUX:
        words.pop()
    while len(words) > 1 and words[0].lower() in {"and", "then", "so", "which", "that"}:
        words.pop(0)
    return normalize_label(" ".join(words))


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, terminators excluded."""
    spans = []
    start = 0
    for m in _SENTENCE_END.finditer(text):
        token = text[start:m.end()].split()[-1] if text[start:m.end()].split() else ""
        word = token.rstrip(".!?").lower()
        if m.group().startswith(".") and len(m.group()) == 1:
            if _INITIALS.fullmatch(token) or word in _ABBREVIATIONS:
                continue
        spans.append((start, m.start()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return [(a, b) for a, b in _trim_spans(text, spans) if b > a]


def _trim_spans(text: str, spans: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for a, b in spans:
        while a < b and text[a].isspace():
            a += 1
        while b > a and text[b - 1].isspace():
            b -= 1
        out.append((a, b))
    return out


def split_clauses(text: str, span: tuple[int, int]) -> list[tuple[int, int]]:
    a, b = span
    pieces = []
    pos = a
    for m in _CLAUSE_SEP.finditer(text, a, b):
        pieces.append((pos, m.start()))
        pos = m.end()
    pieces.append((pos, b))
    return [(x, y) for x, y in _trim_spans(text, pieces) if y > x]


def _is_verb_like(token: str) -> bool:
    t = token.lower().strip(_EDGE_PUNCT)
    if not t.isalpha() or t in _NOT_VERBS:
        return False
    if t in _IRREGULAR_VERBS:
        return True
    if len(t) > 3 and t.endswith("ed"):
        return True
    return len(t) > 3 and t.endswith("s") and not t.endswith(("ss", "us", "is", "ous"))


class ClaimExtractor:
    def __init__(self, lexicon: Iterable[Connective] = DEFAULT_LEXICON):
        self.lexicon = tuple(lexicon)
        self._effect_first = {c.pattern for c in self.lexicon if c.effect_first}
        self._regex = _connective_regex(self.lexicon)

    def segment(self, text: str) -> ClaimSet:
        claims = []
        for sent in split_sentences(text):
            for clause in split_clauses(text, sent):
                claim = self._clause_claim(text, clause)
                if claim is not None:
                    claims.append(claim)
        return ClaimSet(tuple(claims), len(text.split()))

    def classify(self, claim: Claim) -> RelationKind:
        return self.classify_relation_text(claim.relation)

    def classify_relation_text(self, relation: str) -> RelationKind:
        if self._regex.search(relation):
            return "causal"
        rel = normalize_label(relation)
        if rel in COPULAS or rel.startswith("has property"):
            return "attribute"
        return "factual"

    def _clause_claim(self, text: str, span: tuple[int, int]) -> Claim | None:
        a, b = span
        clause = text[a:b]
        for attempt in (self._causal, self._copular, self._verbal):
            parts = attempt(clause)
            if parts is None:
                continue
            subj, rel, obj = parts
            subj, obj = _clean_phrase(subj), _clean_phrase(obj)
            if subj and obj:
                return Claim(subj, rel, obj, self.classify_relation_text(rel), (a, b))
        return None

    def _causal(self, clause: str):
        m = self._regex.search(clause)
        if m is None:
            return None
        rel = m.group()
        left, right = clause[:m.start()], clause[m.end():]
        if normalize_label(rel) not in self._effect_first:
            return left, rel, right
        if left.strip(_EDGE_PUNCT + " "):
            return right, rel, left
        # "Because X, Y": cause precedes the first comma
        cause, sep, effect = right.partition(",")
        if not sep:
            return None
        return cause, rel, effect

    def _copular(self, clause: str):
        m = _COPULA_RE.search(clause)
        if m is None:
            return None
        return clause[:m.start()], m.group(), clause[m.end():]

    def _verbal(self, clause: str):
        toks = [(m.start(), m.end(), m.group()) for m in _TOKEN.finditer(clause)]
        i = 0
        while i < len(toks) and toks[i][2].lower() in _ARTICLES:
            i += 1
        if i >= len(toks):
            return None
        subj_start = i
        if toks[i][2][:1].isupper():
            while i < len(toks) and toks[i][2][:1].isupper():
                i += 1
            if i >= len(toks) or not _is_verb_like(toks[i][2]):
                return None
        else:
            i += 1
            while i < len(toks) and not _is_verb_like(toks[i][2]):
                i += 1
            if i >= len(toks):
                return None
        if i == subj_start:
            return None
        verb_i = i
        j = verb_i + 1
        while j < len(toks) and toks[j][2].lower() in _PREPOSITIONS:
            j += 1
        if j >= len(toks):
            return None
        subj = clause[toks[subj_start][0]:toks[verb_i - 1][1]]
        rel = clause[toks[verb_i][0]:toks[j - 1][1]]
        obj = clause[toks[j][0]:]
        return subj, rel, obj


_DEFAULT = ClaimExtractor()


def segment_claims(text: str, extractor: ClaimExtractor | None = None) -> ClaimSet:
    return (extractor or _DEFAULT).segment(text)


def classify_relation(claim: Claim, extractor: ClaimExtractor | None = None) -> RelationKind:
    """Causal connectives win over copulas, copulas over everything else."""
    return (extractor or _DEFAULT).classify(claim)


def extract_causal_relations(cs: ClaimSet) -> list[tuple[str, str]]:
    """Causal claims as ``(cause, effect)`` pairs, in order, duplicates kept."""
    return [(c.subject, c.object) for c in cs.claims if c.relation_kind == "causal"]


def build_graph(cs: ClaimSet, strength: float = 1.0) -> CausalGraph:
    """Graph over all claims; repeated (from, to, type) edges collapse to one."""
    nodes: dict[str, CausalNode] = {}
    edges: list[CausalEdge] = []
    seen = set()
    for c in cs.claims:
        for label in (c.subject, c.object):
            nodes.setdefault(label, CausalNode(label))
        key = (c.subject, c.object, c.relation_kind)
        if key not in seen:
            seen.add(key)
            edges.append(CausalEdge(c.subject, c.object, strength, c.relation_kind))
    return CausalGraph(nodes=nodes, edges=tuple(edges))


def extract_graph(text: str, extractor: ClaimExtractor | None = None) -> CausalGraph:
    return build_graph(segment_claims(text, extractor))


GRAPH_INSTRUCTION = (
    "Extract the entities, events and actions in the text below and the relations between them. "
    'Reply with JSON only: {"nodes": [labels], "edges": [{"from": label, "to": label, '
    '"strength": number in [0, 1], "type": "causal" | "attribute" | "factual"}]}.\n\nText:\n'
)


class BackendGraphExtractor:
    """Higher-recall alternative: one chat call that returns the graph document."""

    def __init__(self, backend, model_id: str, instruction: str = GRAPH_INSTRUCTION):
        self.backend = backend
        self.model_id = model_id
        self.instruction = instruction

    def extract_graph(self, text: str) -> CausalGraph:
        from .backends import ChatRequest
        from .graph import parse_graph

        reply = self.backend.chat(ChatRequest.user(self.model_id, self.instruction + text)).text
        # tolerate a fenced reply
        body = reply.strip()
        if body.startswith("```"):
            body = body.strip("`").partition("\n")[2]
        return parse_graph(body, "lenient")
