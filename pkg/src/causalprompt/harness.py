"""Three-phase evaluation: generation, scoring, statistics, and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .backends import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_RATE_LIMIT,
    DEFAULT_TEMPERATURE,
    ChatBackend,
    ChatRequest,
    Clock,
    RateLimiter,
    RealClock,
)
from .claims import ClaimExtractor, extract_graph, segment_claims
from .errors import (
    DegenerateVariance,
    MalformedRecord,
    ScoreOutOfRange,
    UnpairedRecords,
    ValidationError,
)
from .graph import serialize_graph
from .knowledge import KnowledgeGraph
from .metrics import (
    MetricReport,
    StatsSummary,
    attributable_count,
    bonferroni_gate,
    cohens_d,
    paired_t_test,
    score_claims,
)
from .prompts import PROMPT_KINDS, build_prompt
from .scheduler import LatencyRow

log = logging.getLogger(__name__)

DOMAINS = ("medical", "legal", "financial", "general")
DOMAIN_TARGETS = {"medical": 0.35, "legal": 0.30, "financial": 0.20, "general": 0.15}
# token-count strata, half-open except the last
LENGTH_STRATA = (("4-8K", 4000, 8000), ("8-12K", 8000, 12000), ("12-16K", 12000, 16000))
LENGTH_TARGETS = {"4-8K": 0.40, "8-12K": 0.35, "12-16K": 0.25}
FILTER_THRESHOLD = 0.9
M_COMPARISONS = 7
ALPHA = 0.001


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    domain: str
    context: str
    query: str
    reference_kg: KnowledgeGraph
    context_length: int

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValidationError(f"unknown domain {self.domain!r}")
        if self.context_length <= 0:
            raise ValidationError("context_length must be positive")
        if len(self.reference_kg) == 0:
            raise ValidationError("reference_kg is empty")


@dataclass(frozen=True)
class DistributionReport:
    n: int
    domains: dict[str, float]
    lengths: dict[str, float]

    def drift(self) -> dict[str, float]:
        out = {f"domain:{k}": self.domains.get(k, 0.0) - v for k, v in DOMAIN_TARGETS.items()}
        out.update({f"length:{k}": self.lengths.get(k, 0.0) - v for k, v in LENGTH_TARGETS.items()})
        return out

    def lines(self) -> list[str]:
        rows = [f"{k}\t{self.domains.get(k, 0.0):.1%}\ttarget {v:.0%}" for k, v in DOMAIN_TARGETS.items()]
        rows += [f"{k}\t{self.lengths.get(k, 0.0):.1%}\ttarget {v:.0%}" for k, v in LENGTH_TARGETS.items()]
        if "other" in self.lengths:
            rows.append(f"other\t{self.lengths['other']:.1%}\ttarget 0%")
        return rows


def length_stratum(tokens: int) -> str:
    for name, lo, hi in LENGTH_STRATA:
        if lo <= tokens < hi or (hi == LENGTH_STRATA[-1][2] and tokens == hi):
            return name
    return "other"


def distribution_report(samples: Sequence[BenchmarkSample]) -> DistributionReport:
    n = len(samples)
    if n == 0:
        return DistributionReport(0, {}, {})
    domains: dict[str, float] = {}
    lengths: dict[str, float] = {}
    for s in samples:
        domains[s.domain] = domains.get(s.domain, 0) + 1 / n
        key = length_stratum(s.context_length)
        lengths[key] = lengths.get(key, 0) + 1 / n
    return DistributionReport(n, domains, lengths)


def _kg_from_record(doc) -> KnowledgeGraph:
    if isinstance(doc, dict):
        return KnowledgeGraph.from_dict(doc)
    if isinstance(doc, list):
        return KnowledgeGraph.from_triples(tuple(t) for t in doc)
    raise TypeError("reference_kg must be a graph object or a list of triples")


def sample_from_dict(rec: Mapping) -> BenchmarkSample:
    context = rec["context"]
    length = rec.get("context_length", len(context.split()))
    return BenchmarkSample(
        str(rec["id"]), rec["domain"], context, rec["query"], _kg_from_record(rec["reference_kg"]), int(length)
    )


def sample_to_dict(s: BenchmarkSample) -> dict:
    return {
        "id": s.id,
        "domain": s.domain,
        "context": s.context,
        "query": s.query,
        "reference_kg": [[e.source, e.kind, e.target] for e in s.reference_kg.edges],
        "context_length": s.context_length,
    }


def load_benchmark(path: str | Path) -> tuple[list[BenchmarkSample], DistributionReport]:
    samples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            samples.append(sample_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{path}: {exc!r}", line=lineno) from exc
    if not samples:
        log.warning("benchmark %s contains no samples", path)
    return samples, distribution_report(samples)


# generation ----------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    model_id: str
    prompt_kind: str = "causal"
    seed: int = 42
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    rate_limit: int = DEFAULT_RATE_LIMIT
    workers: int = 4

    def __post_init__(self):
        if self.prompt_kind not in PROMPT_KINDS:
            raise ValidationError(f"unknown prompt kind {self.prompt_kind!r}")


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    prompt_kind: str
    response: str
    report: MetricReport | None = None
    latency: float = 0.0
    run: int = 0
    model_id: str = ""
    error: str | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.sample_id, self.prompt_kind, self.run)

    def to_json(self) -> str:
        d = {
            "sample_id": self.sample_id,
            "prompt_kind": self.prompt_kind,
            "response": self.response,
            "report": self.report.to_dict() if self.report else None,
            "latency": self.latency,
            "run": self.run,
            "model_id": self.model_id,
            "error": self.error,
        }
        return json.dumps(d, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EvalRecord":
        d = json.loads(line)
        rep = MetricReport.from_dict(d["report"]) if d.get("report") else None
        return cls(
            d["sample_id"], d["prompt_kind"], d["response"], rep,
            d.get("latency", 0.0), d.get("run", 0), d.get("model_id", ""), d.get("error"),
        )


def load_records(path: str | Path) -> list[EvalRecord]:
    """Read persisted records; later lines replace earlier ones with the same key."""
    path = Path(path)
    if not path.exists():
        return []
    latest: dict[tuple, EvalRecord] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = EvalRecord.from_json(line)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedRecord(f"{path}: {exc!r}", line=lineno) from exc
        latest[rec.key] = rec
    return list(latest.values())


def default_graph_text(sample: BenchmarkSample) -> str:
    return serialize_graph(extract_graph(sample.context))


def sample_prompt(
    sample: BenchmarkSample,
    kind: str,
    graph_text: Callable[[BenchmarkSample], str] = default_graph_text,
    templates: Mapping[str, str] | None = None,
) -> str:
    cip_output = graph_text(sample) if kind == "causal" else None
    return build_prompt(kind, sample.query, sample.context, cip_output, templates=templates)


def run_generation(
    cfg: RunConfig,
    samples: Sequence[BenchmarkSample],
    backend: ChatBackend,
    kinds: Sequence[str] | None = None,
    out_path: str | Path | None = None,
    limiter: RateLimiter | None = None,
    clock: Clock | None = None,
    graph_text: Callable[[BenchmarkSample], str] = default_graph_text,
    run: int = 0,
) -> list[EvalRecord]:
    """Generate one response per (sample, kind). Successful records already
    in ``out_path`` are kept; the rest are generated and appended as they finish."""
    kinds = tuple(kinds or (cfg.prompt_kind,))
    clock = clock or RealClock()
    limiter = limiter or RateLimiter(cfg.rate_limit, 60.0, clock)
    existing = {r.key: r for r in load_records(out_path)} if out_path else {}
    todo = [
        (s, k) for s in samples for k in kinds
        if not (existing.get((s.id, k, run)) and existing[(s.id, k, run)].error is None)
    ]
    lock = threading.Lock()
    fh = open(out_path, "a", encoding="utf-8") if out_path else None

    def one(item) -> EvalRecord:
        sample, kind = item
        try:
            prompt = sample_prompt(sample, kind, graph_text)
            req = ChatRequest.user(
                cfg.model_id, prompt, temperature=cfg.temperature, max_tokens=cfg.max_tokens, seed=cfg.seed
            )
            limiter.acquire()
            t0 = clock.now()
            resp = backend.chat(req)
            rec = EvalRecord(sample.id, kind, resp.text, None, clock.now() - t0, run, cfg.model_id)
        except Exception as exc:  # best-effort: record and move on
            log.warning("generation failed for %s/%s: %s", sample.id, kind, exc)
            rec = EvalRecord(sample.id, kind, "", None, 0.0, run, cfg.model_id, f"{type(exc).__name__}: {exc}")
        if fh:
            with lock:
                fh.write(rec.to_json() + "\n")
                fh.flush()
        return rec

    try:
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
            fresh = list(pool.map(one, todo))
    finally:
        if fh:
            fh.close()
    for rec in fresh:
        existing[rec.key] = rec
    order = {(s.id, k): i for i, (s, k) in enumerate((s, k) for s in samples for k in kinds)}
    wanted = [r for r in existing.values() if (r.sample_id, r.prompt_kind) in order and r.run == run]
    return sorted(wanted, key=lambda r: order[(r.sample_id, r.prompt_kind)])


# scoring -------------------------------------------------------------------


def run_scoring(
    records: Sequence[EvalRecord],
    samples: Sequence[BenchmarkSample],
    extractor: ClaimExtractor | None = None,
    max_path_len: int = 2,
) -> list[EvalRecord]:
    by_id = {s.id: s for s in samples}
    out = []
    for rec in records:
        if rec.error is not None:
            out.append(rec)
            continue
        if rec.sample_id not in by_id:
            raise ValidationError(f"record for unknown sample {rec.sample_id!r}")
        cs = segment_claims(rec.response, extractor)
        out.append(replace(rec, report=score_claims(cs, by_id[rec.sample_id].reference_kg, max_path_len)))
    return out


# statistics ----------------------------------------------------------------

METRICS: dict[str, Callable[[MetricReport], float]] = {
    "ar": lambda r: r.ar,
    "ccs": lambda r: float(r.ccs),
    "ac": lambda r: float(r.attributable_count_raw),
    "eid": lambda r: r.eid_proxy,
}


def _pairs(causal: Sequence[EvalRecord], direct: Sequence[EvalRecord]) -> list[tuple[EvalRecord, EvalRecord]]:
    c = {r.sample_id: r for r in causal if r.report is not None}
    d = {r.sample_id: r for r in direct if r.report is not None}
    if set(c) != set(d):
        missing = sorted(set(c) ^ set(d))
        raise UnpairedRecords(f"samples without a partner: {missing[:5]}")
    if len(c) < 2:
        raise UnpairedRecords("need at least two paired samples")
    return [(c[k], d[k]) for k in sorted(c)]


def _summary(a: Sequence[float], b: Sequence[float], m: int, alpha: float) -> StatsSummary:
    diffs = [x - y for x, y in zip(a, b)]
    mean = math.fsum(diffs) / len(diffs)
    notes = []
    try:
        t, p = paired_t_test(diffs)
    except DegenerateVariance:
        if mean == 0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean), 0.0
        notes.append("zero-variance differences")
    try:
        d = cohens_d(a, b)
    except DegenerateVariance:
        d = 0.0 if mean == 0 else math.copysign(math.inf, mean)
        notes.append("zero pooled variance")
    return StatsSummary(mean, t, p, d, bonferroni_gate(p, m, alpha), m, len(diffs), tuple(notes))


def run_stats(
    causal: Sequence[EvalRecord],
    direct: Sequence[EvalRecord],
    m: int = M_COMPARISONS,
    alpha: float = ALPHA,
) -> dict[str, StatsSummary]:
    pairs = _pairs(causal, direct)
    out = {}
    for name, get in METRICS.items():
        a = [get(c.report) for c, _ in pairs]
        b = [get(d.report) for _, d in pairs]
        out[name] = _summary(a, b, m, alpha)
    return out


# dataset filter ------------------------------------------------------------


@dataclass(frozen=True)
class ScoredItem:
    item: object
    causal: float
    semantic: float
    structural: float | None = None


def filter_dataset(items: Iterable[ScoredItem], threshold: float = FILTER_THRESHOLD) -> list[ScoredItem]:
    """Keep items whose causal and semantic scores both exceed ``threshold``.
    The structural score is validated but does not gate."""
    kept = []
    for it in items:
        for name in ("causal", "semantic", "structural"):
            v = getattr(it, name)
            if v is None and name == "structural":
                continue
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ScoreOutOfRange(f"{name} score {v!r} outside [0, 1]")
        if it.causal > threshold and it.semantic > threshold:
            kept.append(it)
    return kept


# reports -------------------------------------------------------------------

COMPARISON_COLUMNS = (
    "Model", "Causal AC", "Direct AC", "Causal CCS", "Direct CCS",
    "Cohen's d (AR)", "Cohen's d (CCS)", "p-value", "ΔAC", "ΔCCS",
)
LATENCY_COLUMNS = ("Model", "Sequential", "Parallel", "Speedup", "Idle")


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    causal_ac: float
    direct_ac: float
    causal_ccs: float
    direct_ccs: float
    d_ar: float
    d_ccs: float
    p_value: float

    @property
    def delta_ac(self) -> float:
        return self.causal_ac - self.direct_ac

    @property
    def delta_ccs(self) -> float:
        return self.causal_ccs - self.direct_ccs

    def cells(self) -> list[str]:
        nums = (self.causal_ac, self.direct_ac, self.causal_ccs, self.direct_ccs,
                self.d_ar, self.d_ccs, self.p_value, self.delta_ac, self.delta_ccs)
        return [self.model, *(repr(float(x)) for x in nums)]


def _ac(records: Sequence[EvalRecord]) -> tuple[float, float]:
    reps = [r.report for r in records]
    mean_ar = math.fsum(r.ar for r in reps) / len(reps)
    n_avg = math.fsum(r.n_claims for r in reps) / len(reps)
    ccs = math.fsum(r.ccs for r in reps) / len(reps)
    return attributable_count(mean_ar, n_avg), ccs


def compare(model: str, causal: Sequence[EvalRecord], direct: Sequence[EvalRecord]) -> tuple[ComparisonRow, dict]:
    """Comparison row for one model. AC is mean AR times mean claims per response;
    the p-value column is the paired test on AR."""
    pairs = _pairs(causal, direct)
    summaries = run_stats([c for c, _ in pairs], [d for _, d in pairs])
    c_ac, c_ccs = _ac([c for c, _ in pairs])
    d_ac, d_ccs = _ac([d for _, d in pairs])
    row = ComparisonRow(
        model, c_ac, d_ac, c_ccs, d_ccs, summaries["ar"].cohens_d, summaries["ccs"].cohens_d, summaries["ar"].p_value
    )
    return row, summaries


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        w.writerows(rows)
    return path


def latency_cells(row: LatencyRow) -> list[str]:
    return [row.model, repr(row.sequential), repr(row.parallel), repr(row.speedup_pct), repr(row.idle)]


@dataclass
class ReportPaths:
    table: Path
    latency: Path
    records: Path | None = None
    figures: list[Path] = field(default_factory=list)


def emit_report(
    rows: Sequence[ComparisonRow],
    out_dir: str | Path,
    latency_rows: Sequence[LatencyRow] = (),
    records: Sequence[EvalRecord] = (),
    figures: bool = True,
) -> ReportPaths:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = ReportPaths(
        write_table(out / "comparison.csv", COMPARISON_COLUMNS, (r.cells() for r in rows)),
        write_table(out / "latency.csv", LATENCY_COLUMNS, (latency_cells(r) for r in latency_rows)),
    )
    if records:
        paths.records = out / "records.jsonl"
        paths.records.write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
    if figures:
        from . import plotting

        if rows:
            paths.figures.append(plotting.comparison_figure(rows, out / "comparison.png"))
        if latency_rows:
            paths.figures.append(plotting.latency_figure(latency_rows, out / "latency.png"))
    return paths


def read_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def read_comparison(path: str | Path) -> list[ComparisonRow]:
    rows = []
    for d in read_table(path):
        v = [float(d[c]) for c in COMPARISON_COLUMNS[1:8]]
        rows.append(ComparisonRow(d["Model"], *v))
    return rows
