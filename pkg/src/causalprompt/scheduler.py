"""Proactive retrieval: plan one query per exogenous node, dispatch them all
before generation, merge the evidence; plus the closed-form latency model."""

from __future__ import annotations

import heapq
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Sequence

from .backends import SearchBackend, SearchResult
from .errors import CausalPromptError, CyclicGraph, RetrievalFailed, ValidationError
from .graph import CausalGraph, serialize_graph, topological_order

Policy = Literal["best-effort", "fail-fast"]

_TOKEN = re.compile(r"[\w][\w\-./]*", re.UNICODE)
MISSING_EVIDENCE = "[no evidence retrieved]"
# allowed gap between real-clock retrieval wall time and the slowest query
SCHEDULING_OVERHEAD = 0.05


@dataclass(frozen=True)
class PlannedQuery:
    label: str
    text: str


@dataclass(frozen=True)
class RetrievalPlan:
    queries: tuple[PlannedQuery, ...] = ()
    concurrency_limit: int = 8

    def __len__(self) -> int:
        return len(self.queries)


def salient_terms(text: str) -> list[str]:
    """Tokens carrying a digit or at least two capitals (years, trial ids, acronyms)."""
    out = []
    for tok in _TOKEN.findall(text):
        tok = tok.strip(".-/")
        if tok and (any(ch.isdigit() for ch in tok) or sum(ch.isupper() for ch in tok) >= 2):
            out.append(tok)
    return out


def _terms(label: str) -> list[str]:
    return [t.strip(".-/") for t in _TOKEN.findall(label) if t.strip(".-/")]


def generate_query(label: str, g: CausalGraph, query: str) -> str:
    """Node terms, then the other endpoints of its incident edges (plus the
    edge type for non-causal edges), then salient query terms; deduplicated
    case-insensitively, space-joined."""
    terms = _terms(label)
    for e in g.incident(label):
        other = e.target if e.source == label else e.source
        if e.edge_type != "causal":
            terms.append(e.edge_type)
        terms.extend(_terms(other))
    terms.extend(salient_terms(query))
    seen, out = set(), []
    for t in terms:
        key = t.casefold()
        if key not in seen:
            seen.add(key)
            out.append(t)
    return " ".join(out)


def plan_retrieval(g: CausalGraph, query: str, concurrency_limit: int = 8) -> RetrievalPlan:
    """One query per exogenous node, ordered by topological position then label."""
    if any(n.origin == "unknown" for n in g.nodes.values()):
        raise ValidationError("classify_nodes must run before planning")
    try:
        position = {label: i for i, label in enumerate(topological_order(g))}
    except CyclicGraph:
        position = {}
    exo = [n.label for n in g.nodes.values() if n.origin == "exogenous"]
    exo.sort(key=lambda lab: (position.get(lab, 0), lab))
    return RetrievalPlan(tuple(PlannedQuery(lab, generate_query(lab, g, query)) for lab in exo), concurrency_limit)


@dataclass(frozen=True)
class QueryTiming:
    label: str
    dispatch: float
    complete: float
    ok: bool = True
    error: str | None = None


@dataclass
class ScheduleTrace:
    t_parse: float = 0.0
    t_causal: float = 0.0
    per_query: list[QueryTiming] = field(default_factory=list)
    t_gen_start: float = 0.0
    t_gen_end: float = 0.0
    idle: float = 0.0
    mode: str = "proactive"

    @property
    def causal_done(self) -> float:
        return self.t_parse + self.t_causal

    @property
    def retrieval_wall(self) -> float:
        if not self.per_query:
            return 0.0
        return max(q.complete for q in self.per_query) - min(q.dispatch for q in self.per_query)

    @property
    def residual_idle(self) -> float:
        """Wait between the end of causal analysis and generation start."""
        return max(0.0, self.t_gen_start - self.causal_done) if self.mode == "proactive" else self.idle

    @property
    def total(self) -> float:
        return self.t_gen_end

    def events(self) -> list[tuple[str, float]]:
        ev = [("parse_start", 0.0), ("parse_end", self.t_parse), ("causal_end", self.causal_done)]
        for q in self.per_query:
            ev.append((f"dispatch:{q.label}", q.dispatch))
            ev.append((f"{'complete' if q.ok else 'failed'}:{q.label}", q.complete))
        ev += [("gen_start", self.t_gen_start), ("gen_end", self.t_gen_end)]
        return sorted(ev, key=lambda x: x[1])

    def to_lines(self) -> str:
        return "".join(f"{name}\t{ts:.6f}\n" for name, ts in self.events())

    def validate(self) -> None:
        for q in self.per_query:
            if q.dispatch > q.complete:
                raise ValidationError(f"query {q.label} completes before dispatch")
            if self.mode == "proactive" and q.dispatch > self.t_gen_start:
                raise ValidationError(f"query {q.label} dispatched after generation start")
        if self.mode == "proactive" and self.t_gen_start < self.causal_done:
            raise ValidationError("generation started before causal analysis finished")


@dataclass(frozen=True)
class Evidence:
    """Results keyed by node label, in plan order."""

    items: tuple[tuple[str, SearchResult | None], ...] = ()

    def as_dict(self) -> dict[str, SearchResult | None]:
        return dict(self.items)

    @property
    def missing(self) -> list[str]:
        return [lab for lab, r in self.items if r is None or not r.ok]


def _simulate_dispatch(latencies: Sequence[float], limit: int, start: float) -> list[tuple[float, float]]:
    """Event-driven virtual-time run: up to ``limit`` outstanding requests,
    FIFO dispatch in plan order."""
    times: list[tuple[float, float]] = [(0.0, 0.0)] * len(latencies)
    running: list[float] = []
    now = start
    for i, lat in enumerate(latencies):
        if len(running) >= limit:
            now = max(now, heapq.heappop(running))
        times[i] = (now, now + lat)
        heapq.heappush(running, now + lat)
    return times


def execute_plan(
    plan: RetrievalPlan,
    client: SearchBackend,
    t_parse: float = 0.0,
    t_causal: float = 0.0,
    t_gen: float = 0.0,
    policy: Policy = "best-effort",
    virtual: bool | None = None,
) -> tuple[Evidence, ScheduleTrace]:
    """Dispatch every planned query, at most ``concurrency_limit`` at a time,
    once causal analysis is done; generation starts after the last result.

    Virtual clients report latency without sleeping; their timings are placed
    on a simulated clock. Real clients run on a thread pool and timings are
    wall-clock offsets from the dispatch start.
    """
    start = t_parse + t_causal
    if virtual is None:
        virtual = bool(getattr(client, "virtual", False))
    limit = max(1, plan.concurrency_limit)
    queries = plan.queries
    results: list[SearchResult | None] = [None] * len(queries)
    errors: list[str | None] = [None] * len(queries)

    def run(i: int) -> tuple[float, float]:
        t0 = time.monotonic()
        try:
            results[i] = client.search(queries[i].text)
        except CausalPromptError as exc:
            errors[i] = str(exc)
        return t0, time.monotonic()

    if virtual:
        for i in range(len(queries)):
            run(i)
        lats = [r.latency if r is not None else 0.0 for r in results]
        spans = _simulate_dispatch(lats, limit, start)
    else:
        origin = time.monotonic()
        with ThreadPoolExecutor(max_workers=limit) as pool:
            raw = list(pool.map(run, range(len(queries))))
        spans = [(start + a - origin, start + b - origin) for a, b in raw]

    timings = []
    for i, q in enumerate(queries):
        r = results[i]
        ok = r is not None and r.ok
        err = errors[i] or (r.error if r is not None and not r.ok else None)
        timings.append(QueryTiming(q.label, spans[i][0], spans[i][1], ok, err))
        if not ok and policy == "fail-fast":
            raise RetrievalFailed(f"query for {q.label!r} failed: {err}")
    evidence = Evidence(tuple((q.label, results[i]) for i, q in enumerate(queries)))
    gen_start = max((t.complete for t in timings), default=start)
    trace = ScheduleTrace(t_parse, t_causal, timings, gen_start, gen_start + t_gen, 0.0)
    trace.validate()
    return evidence, trace


def _sections(g: CausalGraph, evidence: Evidence) -> str:
    out = "\n\nCausal Structure:\n" + serialize_graph(g)
    if evidence.items:
        lines = []
        for label, res in evidence.items:
            if res is None or not res.ok or not res.snippets:
                lines.append(f"- {label}: {MISSING_EVIDENCE}")
            else:
                lines.extend(f"- {label}: {s}" for s in res.snippets)
        out += "\n\nExternal Evidence:\n" + "\n".join(lines)
    return out


def merge_context(context: str, g: CausalGraph, evidence: Evidence = Evidence()) -> str:
    """Context, then the serialized graph, then evidence in plan order.
    Re-merging an already merged context returns it unchanged."""
    suffix = _sections(g, evidence)
    if context.endswith(suffix):
        return context
    return context + suffix


# latency model ------------------------------------------------------------


@dataclass(frozen=True)
class LatencyParams:
    t_parse: float = 0.0
    t_gen: float = 0.0
    t_web: float | tuple[float, ...] = 0.0
    t_switch: float = 0.0
    t_causal: float = 0.0
    k: int = 0

    def __post_init__(self):
        if isinstance(self.t_web, (list, tuple)):
            object.__setattr__(self, "t_web", tuple(float(x) for x in self.t_web))
            webs = self.t_web
        else:
            webs = (self.t_web,)
        if min((self.t_parse, self.t_gen, self.t_switch, self.t_causal, *webs), default=0) < 0:
            raise ValidationError("latency parameters must be >= 0")
        if self.k < 0 or int(self.k) != self.k:
            raise ValidationError("k must be a non-negative integer")
        if isinstance(self.t_web, tuple) and len(self.t_web) != self.k:
            raise ValidationError("per-query t_web needs exactly k values")

    def web_latencies(self) -> tuple[float, ...]:
        if isinstance(self.t_web, tuple):
            return self.t_web
        return (float(self.t_web),) * self.k

    @classmethod
    def from_text(cls, text: str) -> "LatencyParams":
        """``key=value`` lines; ``t_web`` may be a comma-separated list."""
        vals: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in cls.__dataclass_fields__:
                raise ValidationError(f"line {lineno}: expected key=value with a known key")
            try:
                if key == "k":
                    vals[key] = int(value)
                elif key == "t_web" and "," in value:
                    vals[key] = tuple(float(x) for x in value.split(","))
                else:
                    vals[key] = float(value)
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
        return cls(**vals)

    @classmethod
    def from_file(cls, path: str | Path) -> "LatencyParams":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        web = ",".join(map(repr, self.t_web)) if isinstance(self.t_web, tuple) else repr(self.t_web)
        return (
            f"t_parse={self.t_parse!r}\nt_gen={self.t_gen!r}\nt_web={web}\n"
            f"t_switch={self.t_switch!r}\nt_causal={self.t_causal!r}\nk={self.k}\n"
        )


def predict_latency(params: LatencyParams, mode: Literal["sequential", "proactive"]) -> float:
    """sequential: parse + k * (gen + web + switch), summing per-round web times;
    proactive: parse + causal + max(web) + gen, with max over no queries = 0."""
    webs = params.web_latencies()
    if mode == "sequential":
        return params.t_parse + params.k * (params.t_gen + params.t_switch) + sum(webs)
    if mode == "proactive":
        return params.t_parse + params.t_causal + max(webs, default=0.0) + params.t_gen
    raise ValueError(f"unknown mode {mode!r}")


def speedup(params: LatencyParams) -> float:
    proactive = predict_latency(params, "proactive")
    if proactive <= 0:
        raise ZeroDivisionError("proactive latency is zero")
    return predict_latency(params, "sequential") / proactive


def reduction_pct(sequential: float, parallel: float) -> float:
    """Latency saved as a percentage of the sequential time."""
    if sequential <= 0:
        raise ZeroDivisionError("sequential latency is zero")
    return 100.0 * (sequential - parallel) / sequential


def simulate_pipeline(
    params: LatencyParams,
    mode: Literal["sequential", "proactive"],
    concurrency_limit: int | None = None,
) -> ScheduleTrace:
    """Virtual-clock run of one request.

    Sequential: parse, then ``k`` rounds of generate / block on retrieval /
    context switch. Proactive: parse, causal analysis, all queries dispatched
    at once (bounded by ``concurrency_limit``), then one uninterrupted
    generation.
    """
    webs = params.web_latencies()
    if mode == "sequential":
        now = params.t_parse
        timings, idle, gen_start = [], 0.0, now
        for i, lat in enumerate(webs):
            now += params.t_gen
            timings.append(QueryTiming(f"round{i + 1}", now, now + lat))
            now += lat + params.t_switch
            idle += lat + params.t_switch
        return ScheduleTrace(params.t_parse, 0.0, timings, gen_start, now, idle, mode="sequential")
    if mode != "proactive":
        raise ValueError(f"unknown mode {mode!r}")
    start = params.t_parse + params.t_causal
    limit = concurrency_limit or max(1, len(webs))
    spans = _simulate_dispatch(list(webs), limit, start)
    timings = [QueryTiming(f"q{i + 1}", a, b) for i, (a, b) in enumerate(spans)]
    gen_start = max((b for _, b in spans), default=start)
    trace = ScheduleTrace(params.t_parse, params.t_causal, timings, gen_start, gen_start + params.t_gen, 0.0)
    trace.validate()
    return trace


def calibrate(
    sequential: float,
    parallel: float,
    k: int = 3,
    t_causal: float = 0.5,
    gen_share: float = 0.5,
    spread: Sequence[float] = (1.0, 0.85, 0.7),
) -> LatencyParams:
    """Solve for parse/generation/web times that reproduce a measured
    (sequential, parallel) pair under the latency model.

    Per-query web times are ``w * spread`` (so the slowest is ``w``) and
    ``t_gen = gen_share * w``.
    """
    if len(spread) != k or max(spread) != 1.0 or k < 2:
        raise ValidationError("spread needs k >= 2 factors with maximum 1.0")
    denom = (k - 1) * gen_share + sum(spread) - 1.0
    w = (sequential - parallel + t_causal) / denom
    g = gen_share * w
    p = parallel - t_causal - w - g
    if w <= 0 or p < 0:
        raise ValidationError(f"cannot calibrate ({sequential}, {parallel}) with k={k}, t_causal={t_causal}")
    return LatencyParams(t_parse=p, t_gen=g, t_web=tuple(w * f for f in spread), t_causal=t_causal, k=k)


# measured (sequential, parallel) seconds per model, with the reported gain in percent
MEASURED_LATENCY: dict[str, tuple[float, float, float]] = {
    "DeepSeekV3": (18.71, 11.22, 39.8),
    "GPT-4o": (6.92, 3.83, 43.3),
    "Gemini2.0": (12.16, 5.44, 55.1),
    "Llama-8B": (13.20, 7.32, 41.3),
    "Qwen-7B": (8.38, 5.58, 31.5),
}
REPORTED_AVERAGE_GAIN = 43.7


@dataclass(frozen=True)
class LatencyRow:
    model: str
    sequential: float
    parallel: float
    speedup_ratio: float
    speedup_pct: float
    idle: float
    residual_idle: float
    reported_pct: float | None = None


def latency_row(model: str, params: LatencyParams, reported_pct: float | None = None) -> LatencyRow:
    seq = simulate_pipeline(params, "sequential")
    par = simulate_pipeline(params, "proactive")
    return LatencyRow(
        model,
        seq.total,
        par.total,
        seq.total / par.total,
        reduction_pct(seq.total, par.total),
        par.idle,
        par.residual_idle,
        reported_pct,
    )


def calibrated_rows(measured: Mapping[str, tuple[float, float, float]] = MEASURED_LATENCY) -> list[LatencyRow]:
    return [latency_row(m, calibrate(s, p), rep) for m, (s, p, rep) in measured.items()]
