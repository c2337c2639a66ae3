import json

import pytest

from causalprompt.cli import main
from causalprompt.demo import write_demo
from causalprompt.harness import COMPARISON_COLUMNS, read_table


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_extract(tmp_path, capsys):
    src = tmp_path / "ctx.txt"
    src.write_text("Heavy rainfall causes flooding. Flooding leads to crop loss.")
    code, out, _ = run(capsys, "extract", str(src), "--out", str(tmp_path / "o"))
    assert code == 0
    doc = json.loads(out)
    assert {(e["from"], e["to"]) for e in doc["edges"]} == {("heavy rainfall", "flooding"), ("flooding", "crop loss")}
    assert (tmp_path / "o" / "graph.json").exists()


def test_simulate_worked_params(tmp_path, capsys):
    cfg = tmp_path / "lat.txt"
    cfg.write_text("t_parse=9\nt_gen=1\nt_web=2\nt_switch=0\nt_causal=0.5\nk=3\n")
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0
    lines = dict(line.split("\t", 1) for line in out.splitlines() if line.startswith(("sequential", "proactive", "speedup")))
    assert lines["sequential"] == "18.0\t18.0"
    assert lines["proactive"] == "12.5\t12.5"
    assert abs(float(lines["speedup"].split("\t")[0]) - 1.44) < 0.005
    assert (tmp_path / "o" / "trace.png").stat().st_size > 0


def test_simulate_calibrated_rows(capsys):
    code, out, _ = run(capsys, "simulate")
    assert code == 0
    assert "GPT-4o" in out and out.splitlines()[0].startswith("Model\tSequential")


def test_plan(tmp_path, capsys):
    graph = tmp_path / "g.json"
    graph.write_text(json.dumps({"nodes": ["metformin", "mace outcomes"], "edges": [
        {"from": "metformin", "to": "mace outcomes", "strength": 1.0, "type": "causal"}]}))
    facts = tmp_path / "f.json"
    facts.write_text(json.dumps({"nodes": ["mace outcomes"], "edges": []}))
    code, out, _ = run(capsys, "plan", str(graph), "--query", "Did the 2025 XYZ-CV trial help?", "--facts", str(facts))
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "node\tquery" and len(rows) == 2
    assert rows[1].startswith("metformin\tmetformin") and "2025" in rows[1]


def test_bench_score_report(tmp_path, capsys):
    bench, script = write_demo(tmp_path / "demo")
    out_dir = tmp_path / "bench"
    code, out, _ = run(capsys, "bench", "--benchmark", str(bench), "--mock-script", str(script),
                       "--out", str(out_dir))
    assert code == 0
    table = read_table(out_dir / "comparison.csv")
    assert tuple(table[0]) == COMPARISON_COLUMNS
    assert float(table[0]["ΔCCS"]) > 0 and float(table[0]["ΔAC"]) > 0
    stats = json.loads((out_dir / "stats.json").read_text())
    assert stats["ar"]["significant_after_bonferroni"] is True

    code, out, _ = run(capsys, "score", str(out_dir / "generation.jsonl"), "--benchmark", str(bench))
    assert code == 0 and out.splitlines()[0].startswith("sample_id\tkind\tar")
    assert len(out.splitlines()) == 41

    code, out, _ = run(capsys, "report", str(out_dir / "records.jsonl"), "--out", str(tmp_path / "rep"))
    assert code == 0
    assert read_table(tmp_path / "rep" / "comparison.csv") == table


def test_scm_suite(tmp_path, capsys):
    report = tmp_path / "scm.csv"
    code, out, err = run(capsys, "scm", "--seeds", "5", "--report", str(report))
    assert code == 0 and "passed 5/5" in err
    rows = read_table(report)
    assert len(rows) == 5 and all(r["passed"] == "True" for r in rows)


@pytest.mark.parametrize(
    "argv",
    [
        ["bench", "--mode", "direct"],
        ["simulate", "--config", "/nonexistent/params.txt"],
        ["plan", "/nonexistent.json", "--query", "q"],
    ],
)
def test_validation_failures_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_inputs_exit_2(tmp_path, capsys):
    bad_graph = tmp_path / "g.json"
    bad_graph.write_text('{"nodes": ["a"], "edges": [{"from": "a", "to": "b", "strength": 3, "type": "causal"}]}')
    assert main(["plan", str(bad_graph), "--query", "q"]) == 2
    bad_params = tmp_path / "p.txt"
    bad_params.write_text("t_gen=-1\n")
    assert main(["simulate", "--config", str(bad_params)]) == 2
    bad_bench = tmp_path / "b.jsonl"
    bad_bench.write_text('{"id": "x"}\n')
    assert main(["bench", "--benchmark", str(bad_bench)]) == 2


def test_unknown_mode_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bench", "--mode", "fewshot"])
    assert info.value.code == 2
