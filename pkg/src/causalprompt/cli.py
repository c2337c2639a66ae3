"""Command-line entry point. Tables go to stdout tab-separated; ``--out``
also writes CSV files and PNG figures."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import plotting
from .backends import BackendConfig, HttpChatBackend, MockChatBackend, VirtualClock
from .claims import extract_graph
from .demo import DEMO_MODEL, make_benchmark, make_mock_backend
from .errors import CausalPromptError, ValidationError
from .graph import classify_nodes, parse_graph, serialize_graph
from .harness import (
    LATENCY_COLUMNS,
    COMPARISON_COLUMNS,
    RunConfig,
    compare,
    emit_report,
    latency_cells,
    load_benchmark,
    load_records,
    run_generation,
    run_scoring,
)
from .knowledge import KnowledgeGraph
from .prompts import PROMPT_KINDS
from .scheduler import (
    LatencyParams,
    calibrated_rows,
    latency_row,
    plan_retrieval,
    predict_latency,
    simulate_pipeline,
    speedup,
)
from .scm import run_suite

EXIT_OK = 0
EXIT_INVALID = 2


def _tsv(rows: Sequence[Sequence[object]], out=None) -> None:
    w = csv.writer(out or sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerows(rows)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _read_text(path: str | None) -> str:
    return sys.stdin.read() if path in (None, "-") else Path(path).read_text(encoding="utf-8")


def cmd_extract(args) -> int:
    g = extract_graph(_read_text(args.input))
    text = serialize_graph(g)
    print(text)
    if (out := _out_dir(args)) is not None:
        (out / "graph.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_score(args) -> int:
    samples, _ = load_benchmark(args.benchmark)
    records = run_scoring(load_records(args.responses), samples)
    rows = [("sample_id", "kind", "ar", "claims", "ccs", "eid", "flags")]
    for r in records:
        if r.report is None:
            rows.append((r.sample_id, r.prompt_kind, "", "", "", "", r.error or ""))
        else:
            m = r.report
            rows.append((r.sample_id, r.prompt_kind, m.ar, m.n_claims, m.ccs, m.eid_proxy, ",".join(m.flags)))
    _tsv(rows)
    if (out := _out_dir(args)) is not None:
        (out / "scored.jsonl").write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
    return EXIT_OK


def cmd_plan(args) -> int:
    g = parse_graph(_read_text(args.graph), "lenient")
    facts = KnowledgeGraph.from_document(Path(args.facts).read_text(encoding="utf-8")) if args.facts else KnowledgeGraph(frozenset())
    plan = plan_retrieval(classify_nodes(g, facts), args.query, args.concurrency)
    _tsv([("node", "query"), *((q.label, q.text) for q in plan.queries)])
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    if args.config:
        params = LatencyParams.from_file(args.config)
        seq, par = simulate_pipeline(params, "sequential"), simulate_pipeline(params, "proactive")
        _tsv([
            ("mode", "predicted", "simulated"),
            ("sequential", predict_latency(params, "sequential"), seq.total),
            ("proactive", predict_latency(params, "proactive"), par.total),
            ("speedup", speedup(params), seq.total / par.total),
        ])
        rows = [latency_row("custom", params)]
        traces = [seq, par]
    else:
        rows = calibrated_rows()
        traces = []
    _tsv([LATENCY_COLUMNS, *(latency_cells(r) for r in rows)])
    if out is not None:
        emit_report([], out, rows, figures=True)
        if traces:
            plotting.trace_figure(traces, out / "trace.png")
            (out / "trace.tsv").write_text(
                "\n".join(f"# {t.mode}\n{t.to_lines()}" for t in traces) + "\n", encoding="utf-8"
            )
    return EXIT_OK


def _backend(args, samples, model_id: str):
    if args.mock_script:
        return MockChatBackend.from_file(args.mock_script)
    if args.config:
        return HttpChatBackend(BackendConfig.from_file(args.config))
    return make_mock_backend(samples, model_id, args.seed, kinds=("direct", args.mode))


def cmd_bench(args) -> int:
    if args.mode == "direct":
        raise ValidationError("bench compares a mode against direct; pick causal, cot or rag")
    samples = load_benchmark(args.benchmark)[0] if args.benchmark else make_benchmark(args.n, args.seed)
    model_id = BackendConfig.from_file(args.config).model_id if args.config and not args.mock_script else args.model
    backend = _backend(args, samples, model_id)
    live = isinstance(backend, HttpChatBackend)
    cfg = RunConfig(model_id, args.mode, seed=args.seed)
    out = _out_dir(args)
    store = out / "generation.jsonl" if out else None
    records = run_generation(
        cfg, samples, backend, kinds=("direct", args.mode), out_path=store, clock=None if live else VirtualClock()
    )
    scored = run_scoring(records, samples)
    treat = [r for r in scored if r.prompt_kind == args.mode]
    base = [r for r in scored if r.prompt_kind == "direct"]
    row, summaries = compare(model_id, treat, base)
    _tsv([COMPARISON_COLUMNS, row.cells()])
    _tsv([("metric", "mean_diff", "t", "p", "d", "significant")] + [
        (k, s.mean_diff, s.t_stat, s.p_value, s.cohens_d, s.significant_after_bonferroni) for k, s in summaries.items()
    ])
    if out is not None:
        emit_report([row], out, calibrated_rows(), scored)
        (out / "stats.json").write_text(
            json.dumps({k: vars(s) for k, s in summaries.items()}, indent=1, default=list) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_scm(args) -> int:
    rows = run_suite(range(args.seed, args.seed + args.n))
    header = ("seed", "spurious", "nonexpansion", "strict", "margin", "invariance", "dpi", "rao_blackwell",
              "pinsker_x", "pinsker_r", "eid_x", "eid_r", "passed")
    table = [header] + [
        (r.seed, r.spurious, r.nonexpansion, r.strict, r.margin, r.invariance, r.dpi, r.rao_blackwell,
         r.pinsker_x, r.pinsker_r, r.eid_x, r.eid_r, r.passed)
        for r in rows
    ]
    _tsv(table)
    passed = sum(r.passed for r in rows)
    print(f"# passed {passed}/{len(rows)}", file=sys.stderr)
    targets = [Path(args.report)] if args.report else []
    if (out := _out_dir(args)) is not None:
        targets.append(out / "scm_suite.csv")
        plotting.margin_figure(rows, out / "scm_margins.png")
    for path in targets:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(table)
    return EXIT_OK if passed == len(rows) else 1


def cmd_report(args) -> int:
    records = load_records(args.records)
    if args.benchmark:
        records = run_scoring(records, load_benchmark(args.benchmark)[0])
    if any(r.report is None and r.error is None for r in records):
        raise ValidationError("records are unscored; pass --benchmark to score them")
    rows = []
    models = sorted({r.model_id for r in records})
    for model in models:
        mine = [r for r in records if r.model_id == model]
        base = [r for r in mine if r.prompt_kind == "direct"]
        treat = [r for r in mine if r.prompt_kind == args.mode]
        if base and treat:
            rows.append(compare(model or "unknown", treat, base)[0])
    _tsv([COMPARISON_COLUMNS, *(r.cells() for r in rows)])
    emit_report(rows, args.out or ".", calibrated_rows())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=PROMPT_KINDS, default="causal")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--config", help="backend config (JSON) or latency parameters (key=value)")
    common.add_argument("--mock-script", help="line-delimited scripted responses")
    common.add_argument("--out", help="directory for tables and figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="causalprompt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", parents=[common], help="context text -> causal graph JSON")
    s.add_argument("input", nargs="?", help="text file (default stdin)")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("score", parents=[common], help="score generated responses")
    s.add_argument("responses", help="line-delimited generation records")
    s.add_argument("--benchmark", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("plan", parents=[common], help="retrieval plan dry-run")
    s.add_argument("graph", help="causal graph JSON file")
    s.add_argument("--query", required=True)
    s.add_argument("--facts", help="graph JSON used as the fact index")
    s.add_argument("--concurrency", type=int, default=8)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", parents=[common], help="latency model and virtual-clock simulation")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bench", parents=[common], help="generation, scoring and statistics")
    s.add_argument("--benchmark", help="line-delimited samples (default: synthetic)")
    s.add_argument("--model", default=DEMO_MODEL)
    s.add_argument("--n", type=int, default=20, help="synthetic sample count")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("scm", parents=[common], help="theory checks on random finite SCMs")
    s.add_argument("--n", "--seeds", dest="n", type=int, default=100, help="number of seeded instances")
    s.add_argument("--report", help="write the pass/fail matrix to this CSV file")
    s.set_defaults(func=cmd_scm, seed=0)

    s = sub.add_parser("report", parents=[common], help="comparison and latency tables from records")
    s.add_argument("records")
    s.add_argument("--benchmark")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CausalPromptError, ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
