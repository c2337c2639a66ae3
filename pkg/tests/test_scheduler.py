import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalprompt.backends import MockSearchClient, SearchResult
from causalprompt.errors import RetrievalFailed, ValidationError
from causalprompt.graph import CausalEdge, CausalGraph, classify_nodes, serialize_graph
from causalprompt.knowledge import KnowledgeGraph
from causalprompt.scheduler import (
    MEASURED_LATENCY,
    MISSING_EVIDENCE,
    SCHEDULING_OVERHEAD,
    Evidence,
    LatencyParams,
    PlannedQuery,
    RetrievalPlan,
    calibrate,
    calibrated_rows,
    execute_plan,
    merge_context,
    plan_retrieval,
    predict_latency,
    reduction_pct,
    salient_terms,
    simulate_pipeline,
    speedup,
)

TRIAL_Q = (
    "The 2025 August trial XYZ-CV studied the effect of metformin vs GLP-1 agonist Z in reducing "
    "major adverse cardiovascular events (MACE). Based on all documents, how do their cardiovascular "
    "benefits compare?"
)
GLP = "glp-1 agonist z (trial xyz-cv)"
MET = "metformin (trial xyz-cv)"


def trial_graph(facts=("mace outcomes",)):
    g = CausalGraph.build(
        [GLP, MET, "mace outcomes"],
        [CausalEdge(GLP, "mace outcomes", 1.0, "causal"), CausalEdge(MET, "mace outcomes", 1.0, "causal")],
    )
    return classify_nodes(g, KnowledgeGraph.from_triples([], entities=facts))


def plan_of(labels, limit=8):
    return RetrievalPlan(tuple(PlannedQuery(lab, lab) for lab in labels), limit)


# planning --------------------------------------------------------------------


def test_trial_example_two_queries():
    plan = plan_retrieval(trial_graph(), TRIAL_Q)
    assert [q.label for q in plan.queries] == [GLP, MET]
    glp, met = (q.text.casefold().split() for q in plan.queries)
    for term in ("2025", "xyz-cv", "glp-1", "agonist", "mace", "outcomes"):
        assert term in glp
    assert "metformin" not in glp
    for term in ("2025", "xyz-cv", "metformin", "mace", "outcomes"):
        assert term in met


def test_salient_terms():
    assert salient_terms(TRIAL_Q) == ["2025", "XYZ-CV", "GLP-1", "MACE"]


def test_all_endogenous_gives_empty_plan():
    plan = plan_retrieval(trial_graph(facts=(GLP, MET, "mace outcomes")), TRIAL_Q)
    assert len(plan) == 0


def test_unclassified_graph_rejected():
    g = CausalGraph.build(["a", "b"], [CausalEdge("a", "b", 1.0, "causal")])
    with pytest.raises(ValidationError):
        plan_retrieval(g, "q")


def test_three_exogenous_in_topological_then_label_order():
    # hand order: z -> b -> a is forced by edges; m is independent (position 0 ties by label)
    g = CausalGraph.build(
        ["a", "b", "z", "m"],
        [CausalEdge("z", "b", 1.0, "causal"), CausalEdge("b", "a", 1.0, "causal")],
    )
    g = classify_nodes(g, KnowledgeGraph.from_triples([], entities=["m"]))
    plan = plan_retrieval(g, "q")
    # topological order with alphabetical ties: m, z, b, a -> exogenous z, b, a
    assert [q.label for q in plan.queries] == ["z", "b", "a"]


# execution -------------------------------------------------------------------


def test_parallel_wall_time_is_max():
    client = MockSearchClient(latencies={"a": 2.0, "b": 1.5, "c": 1.8})
    ev, trace = execute_plan(plan_of("abc", 3), client)
    assert trace.retrieval_wall == pytest.approx(2.0)
    assert sum(q.complete - q.dispatch for q in trace.per_query) == pytest.approx(5.3)
    assert [lab for lab, _ in ev.items] == ["a", "b", "c"]


def test_limit_one_degenerates_to_sum():
    client = MockSearchClient(latencies={"a": 2.0, "b": 1.5, "c": 1.8})
    _, trace = execute_plan(plan_of("abc", 1), client)
    assert trace.retrieval_wall == pytest.approx(5.3)


def test_single_query_wall():
    _, trace = execute_plan(plan_of("a"), MockSearchClient(latencies={"a": 0.7}))
    assert trace.retrieval_wall == pytest.approx(0.7)


def test_generation_waits_for_causal_and_retrieval():
    client = MockSearchClient(latencies={"a": 2.0, "b": 1.0})
    _, trace = execute_plan(plan_of("ab"), client, t_parse=1.0, t_causal=0.5, t_gen=3.0)
    assert all(q.dispatch == 1.5 for q in trace.per_query)
    assert trace.t_gen_start == 3.5 and trace.total == 6.5
    assert all(q.dispatch <= trace.t_gen_start for q in trace.per_query)


class SleepyClient:
    virtual = False

    def __init__(self, latencies):
        self.latencies = latencies

    def search(self, query):
        time.sleep(self.latencies[query])
        return SearchResult(query, (f"snippet {query}",), self.latencies[query])


def test_real_clock_within_overhead():
    lats = {"a": 0.2, "b": 0.15, "c": 0.18}
    _, trace = execute_plan(plan_of("abc", 3), SleepyClient(lats))
    assert trace.retrieval_wall == pytest.approx(0.2, abs=SCHEDULING_OVERHEAD)


def test_failure_policies():
    client = MockSearchClient(latencies={"a": 1.0}, failing=frozenset({"b"}))
    ev, trace = execute_plan(plan_of("ab"), client)
    assert ev.missing == ["b"]
    assert [q.ok for q in trace.per_query] == [True, False]
    assert trace.per_query[1].error
    with pytest.raises(RetrievalFailed):
        execute_plan(plan_of("ab"), client, policy="fail-fast")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=8))
def test_unbounded_wall_equals_max(lats):
    labels = [f"q{i}" for i in range(len(lats))]
    client = MockSearchClient(latencies=dict(zip(labels, lats)))
    _, trace = execute_plan(plan_of(labels, len(labels)), client)
    assert trace.retrieval_wall == max(lats)


# merging ---------------------------------------------------------------------


def simple_graph():
    return CausalGraph.build(["a", "b"], [CausalEdge("a", "b", 1.0, "causal")])


def test_merge_layout():
    g = simple_graph()
    assert merge_context("ctx", g) == "ctx\n\nCausal Structure:\n" + serialize_graph(g)
    ev = Evidence((("a", SearchResult("a", ("s1",), 1.0)), ("b", SearchResult("b", ("s2",), 1.0))))
    out = merge_context("ctx", g, ev)
    assert out.endswith("External Evidence:\n- a: s1\n- b: s2")
    assert merge_context(out, g, ev) == out
    assert merge_context("ctx", g, ev) == out


def test_missing_evidence_noted():
    ev = Evidence((("a", None),))
    assert f"- a: {MISSING_EVIDENCE}" in merge_context("ctx", simple_graph(), ev)


def test_merge_independent_of_completion_order():
    rng = random.Random(0)
    labels = list("abcd")
    outs = set()
    for _ in range(10):
        lats = {lab: rng.uniform(0.1, 5) for lab in labels}
        ev, _ = execute_plan(plan_of(labels), MockSearchClient(latencies=lats))
        # snippets depend only on the query text
        outs.add(merge_context("ctx", simple_graph(), ev))
    assert len(outs) == 1


# latency model ---------------------------------------------------------------

WORKED = LatencyParams(t_parse=9, t_gen=1, t_web=2, t_switch=0, t_causal=0.5, k=3)


def test_worked_example():
    assert predict_latency(WORKED, "sequential") == 18.0
    assert predict_latency(WORKED, "proactive") == 12.5
    assert speedup(WORKED) == pytest.approx(1.44, abs=0.005)


def test_degenerate_params():
    p = LatencyParams(t_parse=4, t_gen=1, t_web=2, t_causal=0.5, k=0)
    assert predict_latency(p, "sequential") == 4
    assert predict_latency(p, "proactive") == 5.5
    zero = LatencyParams()
    assert predict_latency(zero, "sequential") == predict_latency(zero, "proactive") == 0
    with pytest.raises(ZeroDivisionError):
        speedup(zero)
    assert speedup(LatencyParams(t_parse=3, k=0)) == 1.0


def test_params_validation_and_text(tmp_path):
    with pytest.raises(ValidationError):
        LatencyParams(t_gen=-1)
    with pytest.raises(ValidationError):
        LatencyParams(t_web=(1.0, 2.0), k=3)
    p = LatencyParams(t_parse=1.5, t_gen=1, t_web=(2.0, 1.0), t_switch=0.1, t_causal=0.5, k=2)
    assert LatencyParams.from_text(p.to_text()) == p
    f = tmp_path / "lat.txt"
    f.write_text(WORKED.to_text())
    assert LatencyParams.from_file(f) == WORKED
    with pytest.raises(ValidationError):
        LatencyParams.from_text("bogus=1")


def test_gpt4o_reported_ratio():
    s, p, reported = MEASURED_LATENCY["GPT-4o"]
    assert s / p == pytest.approx(1.807, abs=5e-4)
    assert reduction_pct(s, p) == pytest.approx(44.65, abs=0.01)
    assert reported == 43.3


grid = st.tuples(
    st.integers(1, 6), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 1)
)


@settings(max_examples=300, deadline=None)
@given(grid)
def test_break_even(args):
    k, parse, gen, web, switch, frac = args
    bound = (k - 1) * (gen + web) + k * switch
    p = LatencyParams(t_parse=parse, t_gen=gen, t_web=web, t_switch=switch, t_causal=frac * bound, k=k)
    assert predict_latency(p, "sequential") - predict_latency(p, "proactive") >= -1e-9


def test_simulation_matches_closed_form():
    for p in (WORKED, LatencyParams(t_parse=1, t_gen=0.5, t_web=(3.0, 1.0, 2.0), t_switch=0.2, t_causal=0.3, k=3)):
        assert simulate_pipeline(p, "sequential").total == pytest.approx(predict_latency(p, "sequential"))
        assert simulate_pipeline(p, "proactive").total == pytest.approx(predict_latency(p, "proactive"))


def test_simulated_traces_invariants():
    tr = simulate_pipeline(WORKED, "proactive", concurrency_limit=2)
    tr.validate()
    assert tr.retrieval_wall == 4.0  # two slots for three 2 s queries
    lines = tr.to_lines().splitlines()
    assert lines[0].startswith("parse_start\t") and lines[-1].startswith("gen_end\t")
    seq = simulate_pipeline(WORKED, "sequential")
    assert seq.idle == 6.0


def test_calibrated_rows_track_reported():
    rows = calibrated_rows()
    for row in rows:
        s, p, rep = MEASURED_LATENCY[row.model]
        assert row.sequential == pytest.approx(s, abs=1e-9)
        assert row.parallel == pytest.approx(p, abs=1e-9)
        assert abs(row.speedup_pct - rep) <= 5.0
    assert sum(r.speedup_pct for r in rows) / len(rows) >= 40.0


def test_calibrate_rejects_impossible():
    with pytest.raises(ValidationError):
        calibrate(1.0, 0.5)  # parse time would be negative
    with pytest.raises(ValidationError):
        calibrate(10, 5, k=1, spread=(1.0,))
