"""Prompt rendering for the direct, causal, chain-of-thought and RAG conditions."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Mapping, Sequence

from .errors import MissingField

PromptKind = Literal["direct", "causal", "cot", "rag"]
PROMPT_KINDS: tuple[str, ...] = ("direct", "causal", "cot", "rag")

RAG_TOP_K = 5
CHUNK_TOKENS = 512
CHUNK_OVERLAP = 64

_PLACEHOLDER = re.compile(r"\{(query|context|cip_output)\}")
_TERM = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class PromptSpec:
    kind: PromptKind
    query: str
    context: str = ""
    cip_output: str | None = None
    retrieved_chunks: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise MissingField(f"unknown prompt kind {self.kind!r}")
        if self.kind == "causal" and self.cip_output is None:
            raise MissingField("causal prompts need cip_output")
        if self.kind == "rag" and self.retrieved_chunks is None:
            raise MissingField("rag prompts need retrieved_chunks")
        if self.retrieved_chunks is not None:
            object.__setattr__(self, "retrieved_chunks", tuple(self.retrieved_chunks))


def default_templates() -> dict[str, str]:
    pkg = resources.files("causalprompt") / "templates"
    return {k: (pkg / f"{k}.txt").read_text(encoding="utf-8") for k in PROMPT_KINDS}


_DEFAULTS = default_templates()


def load_templates(directory: str | Path) -> dict[str, str]:
    """Read ``<kind>.txt`` overrides from ``directory``; missing kinds keep the default."""
    out = dict(_DEFAULTS)
    for kind in PROMPT_KINDS:
        path = Path(directory) / f"{kind}.txt"
        if path.exists():
            out[kind] = path.read_text(encoding="utf-8")
    return out


def render(spec: PromptSpec, templates: Mapping[str, str] | None = None) -> str:
    template = (templates or _DEFAULTS)[spec.kind]
    context = spec.context
    if spec.kind == "rag":
        context = "\n\n".join(spec.retrieved_chunks[:RAG_TOP_K])
    values = {"query": spec.query, "context": context, "cip_output": spec.cip_output or ""}
    # single pass so placeholders inside substituted text stay literal
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def chunk_text(text: str, size: int = CHUNK_TOKENS, overlap: int = CHUNK_OVERLAP) -> list[str]:
    if size <= 0 or not 0 <= overlap < size:
        raise ValueError("need size > 0 and 0 <= overlap < size")
    tokens = text.split()
    if not tokens:
        return []
    step = size - overlap
    chunks = []
    for start in range(0, len(tokens), step):
        chunks.append(" ".join(tokens[start:start + size]))
        if start + size >= len(tokens):
            break
    return chunks


def _tf(text: str) -> Counter:
    return Counter(t.casefold() for t in _TERM.findall(text))


def cosine(a: Counter, b: Counter) -> float:
    dot = sum(v * b[k] for k, v in a.items() if k in b)
    if dot == 0:
        return 0.0
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb)


def retrieve_chunks(
    context: str,
    query: str,
    k: int = RAG_TOP_K,
    size: int = CHUNK_TOKENS,
    overlap: int = CHUNK_OVERLAP,
) -> list[str]:
    """Top-k chunks by term-frequency cosine similarity; ties keep document order."""
    chunks = chunk_text(context, size, overlap)
    q = _tf(query)
    ranked = sorted(enumerate(chunks), key=lambda ic: (-cosine(q, _tf(ic[1])), ic[0]))
    return [c for _, c in ranked[:k]]


def build_prompt(
    kind: PromptKind,
    query: str,
    context: str,
    cip_output: str | None = None,
    chunks: Sequence[str] | None = None,
    templates: Mapping[str, str] | None = None,
) -> str:
    if kind == "rag" and chunks is None:
        chunks = retrieve_chunks(context, query)
    spec = PromptSpec(kind, query, context, cip_output, tuple(chunks) if chunks is not None else None)
    return render(spec, templates)
