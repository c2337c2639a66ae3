import pytest

from causalprompt.errors import MissingField
from causalprompt.graph import serialize_graph
from causalprompt.claims import extract_graph
from causalprompt.prompts import (
    PromptSpec,
    build_prompt,
    chunk_text,
    load_templates,
    render,
    retrieve_chunks,
)

Q = "What caused the flooding?"
D = "Heavy rainfall causes flooding."


def test_direct_golden(fixtures):
    expected = (fixtures / "direct_prompt.txt").read_bytes()
    assert render(PromptSpec("direct", Q, D)).encode("utf-8") == expected


def test_causal_golden(fixtures):
    expected = (fixtures / "causal_prompt.txt").read_bytes()
    cip = serialize_graph(extract_graph(D))
    assert render(PromptSpec("causal", Q, D, cip_output=cip)).encode("utf-8") == expected


def test_direct_opening_and_sections():
    text = render(PromptSpec("direct", "Q", "D"))
    assert text.startswith("Based on the following document, please answer \nthe question concisely and accurately.")
    assert "\n\nQuestion: Q\n\nDocument:\nD\n\nAnswer:" in text
    assert text.endswith("Answer:")


def test_causal_section_placement():
    text = render(PromptSpec("causal", "Q", "D", cip_output="G"))
    assert "Causal Structure:\nG" in text
    assert text.index("Question:") < text.index("Causal Structure:") < text.index("Document:")


def test_empty_context():
    text = render(PromptSpec("direct", "Q", ""))
    assert "Document:\n\n\nAnswer:" in text


def test_cot_instruction():
    text = render(PromptSpec("cot", "Q", "D"))
    assert "Let's think step by step." in text
    assert text.index("Document:") < text.index("Let's think") < text.index("Answer:")


def test_rag_top5_chunks():
    chunks = [f"chunk{i}" for i in range(8)]
    text = render(PromptSpec("rag", "Q", "ignored", retrieved_chunks=chunks))
    assert "chunk0\n\nchunk1\n\nchunk2\n\nchunk3\n\nchunk4" in text
    assert "chunk5" not in text and "ignored" not in text


def test_missing_fields():
    with pytest.raises(MissingField):
        PromptSpec("causal", "Q", "D")
    with pytest.raises(MissingField):
        PromptSpec("rag", "Q", "D")
    with pytest.raises(MissingField):
        PromptSpec("fewshot", "Q", "D")


def test_placeholders_in_values_stay_literal():
    text = render(PromptSpec("causal", "{context}", "D", cip_output="{query}"))
    assert "Question: {context}" in text and "Causal Structure:\n{query}" in text


def test_render_pure():
    spec = PromptSpec("causal", "Q", "D", cip_output="G")
    assert render(spec) == render(spec)


def test_chunking():
    words = [f"w{i}" for i in range(1000)]
    chunks = chunk_text(" ".join(words))
    # windows start every 448 tokens: 0, 448, 896
    assert [c.split()[0] for c in chunks] == ["w0", "w448", "w896"]
    assert len(chunks[0].split()) == 512 and chunks[-1].split()[-1] == "w999"
    assert chunk_text("") == []
    with pytest.raises(ValueError):
        chunk_text("a b", 4, 4)


def test_retrieval_ranks_by_overlap():
    text = " ".join(["alpha"] * 10 + ["beta gamma"] * 5)
    top = retrieve_chunks(text, "gamma beta", k=1, size=5, overlap=0)
    assert "gamma" in top[0]
    # 20 words in windows of 5 leaves 4 chunks, fewer than k
    assert len(retrieve_chunks(text, "zzz", size=5, overlap=0)) == 4


def test_build_prompt_rag_and_overrides(tmp_path):
    text = build_prompt("rag", "alpha", "alpha beta")
    assert "alpha beta" in text
    (tmp_path / "direct.txt").write_text("Q={query} C={context}")
    templates = load_templates(tmp_path)
    assert build_prompt("direct", "x", "y", templates=templates) == "Q=x C=y"
    assert templates["causal"].startswith("Based on the following document and its causal \n")
