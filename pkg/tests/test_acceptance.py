"""Primary acceptance criteria, one test each. Every test records a
PASS/FAIL line (shown in the terminal summary) before asserting."""

import itertools
import math
import random
import statistics
import time
from contextlib import contextmanager

import numpy as np
from scipy import stats

from causalprompt.backends import RateLimiter, VirtualClock
from causalprompt.claims import Claim, ClaimSet, extract_graph
from causalprompt.cli import main
from causalprompt.errors import DanglingEndpoint
from causalprompt.demo import make_benchmark, make_mock_backend
from causalprompt.graph import EDGE_TYPES, CausalEdge, CausalGraph, detect_cycles, parse_graph, serialize_graph
from causalprompt.harness import COMPARISON_COLUMNS, RunConfig, compare, emit_report, read_table, run_generation, run_scoring
from causalprompt.knowledge import KnowledgeGraph
from causalprompt.metrics import attributable_rate, ccs_response, cohens_d, paired_t_test
from causalprompt.prompts import PromptSpec, render
from causalprompt.scheduler import MEASURED_LATENCY, REPORTED_AVERAGE_GAIN, calibrated_rows
from causalprompt.scm import random_constructive_scm, run_instance

from conftest import ACCEPTANCE_LINES, all_digraphs, reachability_has_cycle


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@contextmanager
def stopwatch():
    box = {}
    t0 = time.perf_counter()
    yield box
    box["s"] = time.perf_counter() - t0


def test_latency_model(tmp_path, capsys):
    cfg = tmp_path / "worked.txt"
    cfg.write_text("t_parse=9\nt_gen=1\nt_web=2\nt_switch=0\nt_causal=0.5\nk=3\n")
    with stopwatch() as sw:
        code = main(["simulate", "--config", str(cfg)])
    out = capsys.readouterr().out
    row = next(line for line in out.splitlines() if line.startswith("speedup"))
    predicted, simulated = (float(x) for x in row.split("\t")[1:])
    ok = code == 0 and abs(predicted - 1.44) <= 0.005 and abs(simulated - 1.44) <= 0.005 and sw["s"] < 1.0
    record("latency model", ok, f"speedup {predicted:.4f} (simulated {simulated:.4f}), {sw['s']:.3f}s")


def test_scheduler_simulation():
    with stopwatch() as sw:
        rows = calibrated_rows()
    worst = max(abs(r.speedup_pct - r.reported_pct) for r in rows)
    avg = statistics.fmean(r.speedup_pct for r in rows)
    matches = all(
        math.isclose(r.sequential, MEASURED_LATENCY[r.model][0], abs_tol=1e-9)
        and math.isclose(r.parallel, MEASURED_LATENCY[r.model][1], abs_tol=1e-9)
        for r in rows
    )
    gpt = next(r for r in rows if r.model == "GPT-4o")
    ok = len(rows) == 5 and matches and worst <= 5.0 and avg >= 40.0 and sw["s"] < 10.0
    record(
        "scheduler simulation", ok,
        f"max |gap| {worst:.2f}pp, average {avg:.2f}% (reported {REPORTED_AVERAGE_GAIN}%), "
        f"GPT-4o ratio {gpt.speedup_ratio:.3f}, {sw['s']:.3f}s",
    )


def test_ccs_oracle_equivalence():
    names = "abcd"
    checked = agree = 0
    with stopwatch() as sw:
        for n in range(1, 5):
            for edges in all_digraphs(n):
                expected = reachability_has_cycle(n, edges)
                claims = tuple(Claim(names[u], "causes", names[v], "causal", (0, 1)) for u, v in edges)
                g = CausalGraph.build(list(names[:n]), [CausalEdge(names[u], names[v], 1.0, "causal") for u, v in edges])
                got_ccs = ccs_response(ClaimSet(claims, 1))
                got_dag = detect_cycles(g).is_dag
                checked += 1
                agree += got_ccs == int(not expected) and got_dag == (not expected)
    ok = agree == checked and sw["s"] < 30.0
    record("CCS oracle equivalence", ok, f"{agree}/{checked} digraphs agree, {sw['s']:.2f}s")


def _path_oracle(edges, nodes, s, o, max_len):
    for length in range(1, max_len + 1):
        for mids in itertools.product(nodes, repeat=length - 1):
            seq = (s, *mids, o)
            if all((a, b) in edges for a, b in zip(seq, seq[1:])):
                return True
    return False


def test_ar_oracle_equivalence():
    rng = random.Random(20240)
    kinds = ("causal", "attribute", "factual")
    agree = 0
    with stopwatch() as sw:
        for _ in range(200):
            n = rng.randint(1, 8)
            ents = [f"e{i}" for i in range(n)]
            triples = [(a, rng.choice(kinds), b) for a in ents for b in ents if rng.random() < 0.25]
            kg = KnowledgeGraph.from_triples(triples, entities=ents)
            pool = ents + ["outsider"]
            claims = tuple(
                Claim(rng.choice(pool), "rel", rng.choice(pool), rng.choice(kinds), (0, 1))
                for _ in range(rng.randint(1, 8))
            )
            k = rng.randint(1, 3)
            expected = sum(
                _path_oracle({(a, b) for a, t, b in triples if t == c.relation_kind}, ents, c.subject, c.object, k)
                for c in claims
            )
            agree += attributable_rate(ClaimSet(claims, 10), kg, k) == (expected / len(claims), expected)
    ok = agree == 200 and sw["s"] < 30.0
    record("AR oracle equivalence", ok, f"{agree}/200 instances agree, {sw['s']:.2f}s")


def test_statistics_oracle():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 40))
        a = rng.normal(0.6, 0.3, n)
        b = rng.normal(0.4, 0.3, n)
        t, p = paired_t_test(a - b)
        ref = stats.ttest_rel(a, b)
        d_ref = (statistics.fmean(a) - statistics.fmean(b)) / math.sqrt(
            (statistics.variance(a) + statistics.variance(b)) / 2
        )
        worst = max(worst, abs(t - ref.statistic), abs(p - ref.pvalue), abs(cohens_d(a, b) - d_ref))
    d = cohens_d([2, 3, 4], [1, 1, 1])
    ok = worst <= 1e-9 and abs(d - 2.828) <= 1e-3
    record("statistics oracle", ok, f"max deviation {worst:.2e} over 100 vectors, d={d:.4f}")


def test_theory_suite():
    with stopwatch() as sw:
        rows = [run_instance(random_constructive_scm(seed)) for seed in range(100)]
    spurious = [r for r in rows if r.spurious]
    checks = {
        "nonexpansion": sum(r.nonexpansion for r in rows),
        "strict|spurious": sum(r.strict for r in spurious),
        "invariance": sum(r.invariance <= 1e-12 for r in rows),
        "dpi": sum(r.dpi for r in rows),
        "pinsker": sum(r.pinsker_x and r.pinsker_r for r in rows),
        "eid": sum(r.eid_r > r.eid_x for r in rows),
    }
    ok = (
        all(v == 100 for k, v in checks.items() if k != "strict|spurious")
        and checks["strict|spurious"] == len(spurious)
        and sw["s"] < 60.0
    )
    detail = ", ".join(f"{k} {v}/{len(spurious) if k == 'strict|spurious' else 100}" for k, v in checks.items())
    record("theory suite", ok, f"{detail}, min strict margin {min(r.margin for r in spurious):.4g}, {sw['s']:.2f}s")


def test_template_fidelity(fixtures):
    q, ctx = "What caused the flooding?", "Heavy rainfall causes flooding."
    direct = render(PromptSpec("direct", q, ctx)).encode("utf-8")
    causal = render(PromptSpec("causal", q, ctx, cip_output=serialize_graph(extract_graph(ctx)))).encode("utf-8")
    ok = direct == (fixtures / "direct_prompt.txt").read_bytes() and causal == (
        fixtures / "causal_prompt.txt"
    ).read_bytes()
    record("template fidelity", ok, f"direct {len(direct)} bytes, causal {len(causal)} bytes byte-identical")


def _random_graph(rng: random.Random) -> CausalGraph:
    words = ["rain", "flood", "crop loss", "prices", "unrest", "drought", "migration", "debt", "x-1", "glp-1 z"]
    names = rng.sample(words, rng.randint(0, len(words)))
    edges = []
    if names:
        for _ in range(rng.randint(0, 12)):
            strength = rng.choice([0.0, 1.0, rng.random(), round(rng.random(), 2)])
            edges.append(CausalEdge(rng.choice(names), rng.choice(names), strength, rng.choice(EDGE_TYPES)))
    return CausalGraph.build(names, edges)


def test_interchange_roundtrip(fixtures):
    rng = random.Random(7)
    same = sum(parse_graph(serialize_graph(g), "strict") == g for g in (_random_graph(rng) for _ in range(1000)))
    doc = (fixtures / "interchange_example.json").read_text()
    lenient = parse_graph(doc, "lenient")
    try:
        parse_graph(doc, "strict")
        strict_rejects = False
    except DanglingEndpoint:
        strict_rejects = True
    ok = same == 1000 and len(lenient.edges) == 1 and strict_rejects
    record("interchange round-trip", ok, f"{same}/1000 round-trips equal, example lenient ok, strict rejects")


def test_mock_bench(tmp_path):
    with stopwatch() as sw:
        samples = make_benchmark(20, seed=42)
        backend = make_mock_backend(samples)
        records = run_scoring(
            run_generation(RunConfig("mock-model"), samples, backend, ("direct", "causal"), clock=VirtualClock()),
            samples,
        )
        causal = [r for r in records if r.prompt_kind == "causal"]
        direct = [r for r in records if r.prompt_kind == "direct"]
        row, summaries = compare("mock-model", causal, direct)
        paths = emit_report([row], tmp_path, calibrated_rows(), records)
    ar_c = statistics.fmean(r.report.ar for r in causal)
    ar_d = statistics.fmean(r.report.ar for r in direct)
    cycles = sum(r.report.ccs == 0 for r in causal)
    columns = tuple(read_table(paths.table)[0])
    ok = (
        ar_c > ar_d
        and cycles == 0
        and row.delta_ccs > 0
        and summaries["ar"].significant_after_bonferroni
        and columns == COMPARISON_COLUMNS
        and sw["s"] < 30.0
    )
    record(
        "end-to-end mock bench", ok,
        f"AR {ar_c:.3f} vs {ar_d:.3f}, dCCS {row.delta_ccs:+.2f}, dAC {row.delta_ac:+.2f}, "
        f"p={summaries['ar'].p_value:.2e} (alpha/7 gate), {len(columns)} columns, {sw['s']:.2f}s",
    )


def test_rate_limiter():
    samples = make_benchmark(40, seed=3)
    backend = make_mock_backend(samples, kinds=("direct",))
    clock = VirtualClock()
    limiter = RateLimiter(20, 60.0, clock)
    recs = run_generation(
        RunConfig("mock-model", "direct", workers=8), samples, backend, limiter=limiter, clock=clock
    )
    times = sorted(limiter.dispatches)
    span = times[20] - times[0]
    ok = len(recs) == 40 and all(r.error is None for r in recs) and len(times) == 40 and span >= 60.0
    record("rate limiter", ok, f"dispatch #1 -> #21 span {span:.1f}s on the virtual clock")
