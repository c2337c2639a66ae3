"""Synthetic benchmark and scripted mock model for offline runs.

Each sample carries a causal chain in its context and the same chain as
its reference graph. The scripted model answers causal prompts with
chain-consistent claims and direct prompts with a mix of unsupported and
occasionally circular claims.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .backends import MockChatBackend
from .harness import BenchmarkSample, sample_prompt, sample_to_dict
from .knowledge import KnowledgeGraph

VOCAB = (
    "drought", "crop failure", "food prices", "civil unrest", "migration", "rainfall", "flooding",
    "soil erosion", "sediment load", "fish decline", "inflation", "interest rates", "housing demand",
    "construction", "employment", "smoking", "lung damage", "hypoxia", "fatigue", "absenteeism",
    "contract breach", "litigation", "legal costs", "insolvency", "layoffs", "vaccination",
    "infection rates", "hospital load", "wait times", "mortality",
)
DOMAIN_PLAN = ("medical",) * 7 + ("legal",) * 6 + ("financial",) * 4 + ("general",) * 3
FILLER = "The report also lists background figures that are not relevant to the question."
DEMO_MODEL = "mock-model"


def _chain(rng: random.Random, n: int = 4) -> list[str]:
    return rng.sample(VOCAB, n)


def make_benchmark(n: int = 20, seed: int = 42) -> list[BenchmarkSample]:
    rng = random.Random(seed)
    out = []
    for i in range(n):
        chain = _chain(rng)
        context = " ".join(
            [f"{a.capitalize()} causes {b}." for a, b in zip(chain, chain[1:])] + [FILLER] * rng.randint(1, 4)
        )
        kg = KnowledgeGraph.from_triples([(a, "causal", b) for a, b in zip(chain, chain[1:])])
        domain = DOMAIN_PLAN[i % len(DOMAIN_PLAN)]
        query = f"What are the downstream effects of {chain[0]}?"
        out.append(BenchmarkSample(f"s{i:03d}", domain, context, query, kg, len(context.split())))
    return out


def _responses(sample: BenchmarkSample, rng: random.Random) -> dict[str, str]:
    chain = [e.source for e in sample.reference_kg.edges] + [sample.reference_kg.edges[-1].target]
    stray = [w for w in VOCAB if w not in chain]
    a, b, c, d = chain[:4]
    causal = [f"{a.capitalize()} causes {b}.", f"{b.capitalize()} leads to {c}.", f"{a.capitalize()} causes {c}."]
    if rng.random() < 0.5:
        causal.append(f"{c.capitalize()} causes {d}.")
    if rng.random() < 0.3:
        causal.append(f"{d.capitalize()} causes {rng.choice(stray)}.")
    direct = [f"{a.capitalize()} causes {b}."]
    direct += [f"{x.capitalize()} causes {y}." for x, y in [rng.sample(stray, 2) for _ in range(rng.randint(1, 3))]]
    if rng.random() < 0.5:
        direct += [f"{c.capitalize()} causes {b}.", f"{b.capitalize()} causes {c}."]
    text = {"causal": " ".join(causal), "direct": " ".join(direct)}
    text["cot"] = text["direct"]
    text["rag"] = text["direct"]
    return text


def make_mock_backend(
    samples: list[BenchmarkSample], model_id: str = DEMO_MODEL, seed: int = 42, kinds=("direct", "causal")
) -> MockChatBackend:
    rng = random.Random(seed + 1)
    backend = MockChatBackend()
    for s in samples:
        texts = _responses(s, rng)
        for kind in kinds:
            backend.add(model_id, sample_prompt(s, kind), texts[kind])
    return backend


def write_demo(out_dir: str | Path, n: int = 20, seed: int = 42, model_id: str = DEMO_MODEL) -> tuple[Path, Path]:
    """Write ``benchmark.jsonl`` and ``mock_script.jsonl``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = make_benchmark(n, seed)
    bench = out / "benchmark.jsonl"
    bench.write_text("".join(json.dumps(sample_to_dict(s)) + "\n" for s in samples), encoding="utf-8")
    script = out / "mock_script.jsonl"
    make_mock_backend(samples, model_id, seed, kinds=("direct", "causal", "cot", "rag")).dump(script)
    return bench, script
