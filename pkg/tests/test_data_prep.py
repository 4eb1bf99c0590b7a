import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from proswitch.data_prep import (
    CELLS,
    BalancePlan,
    augment,
    augmented_id,
    balance_corpus,
    cell_key,
    classify_corpus,
    classify_question_type,
    emit_training_set,
    execute_plan,
    ingest,
    parse_type_label,
    select_test_split,
)
from proswitch.errors import (
    AugmentationError,
    ClassificationError,
    IngestError,
    InputError,
    UnsatisfiablePlanError,
)
from proswitch.records import QARecord, QuestionType, Style, load_records

PRO, NON = Style.PROFESSIONAL, Style.NON_PROFESSIONAL


def _tail(question):
    """Mock key that only matches the question being classified, not the demos."""
    return f"following question:\nQuestion: {question}"


def test_ingest_bioasq(write_json):
    path = write_json("bioasq.json", {"questions": [
        {"id": "b1", "body": "Is TNF a cytokine?", "type": "yesno", "ideal_answer": ["Yes, it is."],
         "snippets": [{"text": "TNF is a cytokine."}]},
        {"id": "b2", "body": "List kinases.", "type": "list", "ideal_answer": "PKA, PKC."},
        {"id": "b3", "type": "summary", "ideal_answer": ["x"]},
        {"id": "b4", "body": "Q", "type": "essay", "ideal_answer": ["x"]},
    ]})
    records = ingest(path, "bioasq")
    assert [r.id for r in records] == ["b1", "b2"]
    first = records[0]
    assert (first.qtype, first.style, first.source, first.snippet) == (
        QuestionType.YESNO, PRO, "bioasq", "TNF is a cytokine.")
    assert first.answer == "Yes, it is."
    assert len(records.errors) == 2
    assert "body" in records.errors[0]


def test_ingest_pubmedqa(write_json):
    path = write_json("pqa.json", {
        "123": {"QUESTION": "Does X cause Y?", "LONG_ANSWER": "It may.", "CONTEXTS": ["a.", "b."]},
        "456": {"QUESTION": "Broken"},
    })
    records = ingest(path, "pubmedqa")
    assert len(records) == 1
    rec = records[0]
    assert (rec.id, rec.qtype, rec.snippet, rec.source) == ("pubmedqa-123", None, "a. b.", "pubmedqa")


def test_ingest_jsonl(tmp_path):
    path = tmp_path / "rows.jsonl"
    rows = [
        {"id": "j1", "question": "Q1?", "answer": "A1", "style": "non-professional", "qtype": "factoid"},
        {"id": "j2", "question": "Q2?", "answer": "A2", "qtype": "bogus"},
        {"id": "j1", "question": "dup", "answer": "x"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    records = ingest(path, "jsonl")
    assert [r.id for r in records] == ["j1"]
    assert records[0].style is NON
    assert len(records.errors) == 2


def test_ingest_failures(tmp_path, write_json):
    with pytest.raises(IngestError):
        ingest(write_json("bad.json", {"questions": [{"id": "x"}]}), "bioasq")
    bad = tmp_path / "broken.json"
    bad.write_text("{nope")
    with pytest.raises(IngestError):
        ingest(bad, "bioasq")
    with pytest.raises(InputError):
        ingest(bad, "csv")


PROMPT_DEMOS = {
    "Which DNA sequences are more prone for the formation of R-loops?": QuestionType.LIST,
    "Are ultraconserved elements often transcribed?": QuestionType.YESNO,
    "What is clathrin?": QuestionType.SUMMARY,
    "Which signaling pathway does sonidegib inhibit?": QuestionType.FACTOID,
}


def test_classify_prompt_demo_questions(mock_gateway):
    labels = {QuestionType.LIST: "list", QuestionType.YESNO: "yesno",
              QuestionType.SUMMARY: "summary", QuestionType.FACTOID: "factoid"}
    gw = mock_gateway({_tail(q): labels[t] for q, t in PROMPT_DEMOS.items()})
    for i, (question, qtype) in enumerate(PROMPT_DEMOS.items()):
        rec = QARecord(f"q{i}", question, None, PRO)
        assert classify_question_type(rec, gw) is qtype


def test_classify_corpus_routes_failures_to_review(mock_gateway, tmp_path):
    gw = mock_gateway({_tail("Good?"): "Output: yesno", _tail("Bad?"): "I think it is a yes/no or list"})
    records = [QARecord("a", "Good?", None, PRO), QARecord("b", "Bad?", None, PRO),
               QARecord("c", "Typed?", None, PRO, QuestionType.LIST)]
    review_path = tmp_path / "review.jsonl"
    typed, review = classify_corpus(records, gw, review_path)
    assert [(r.id, r.qtype) for r in typed] == [("a", QuestionType.YESNO), ("c", QuestionType.LIST)]
    assert [r.id for r in review] == ["b"]
    assert [r.id for r in load_records(review_path)] == ["b"]


def test_classify_retries_then_fails():
    from proswitch.gateway import Gateway

    class Replies:
        def __init__(self, replies):
            self.replies = list(replies)

        def send(self, request):
            return self.replies.pop(0)

    gw = Gateway(Replies(["maybe", "factoid"]), sleep=lambda s: None)
    assert classify_question_type(QARecord("x", "Q?", None, PRO), gw) is QuestionType.FACTOID
    gw = Gateway(Replies(["a", "b", "c"]), sleep=lambda s: None)
    with pytest.raises(ClassificationError):
        classify_question_type(QARecord("x", "Q?", None, PRO), gw)
    with pytest.raises(InputError):
        classify_question_type(QARecord("x", "Q?", None, PRO, QuestionType.LIST), gw)


def test_parse_type_label_accepts_common_forms():
    assert parse_type_label("list") is QuestionType.LIST
    assert parse_type_label("  Output: Yes/No\n") is QuestionType.YESNO
    assert parse_type_label("**Summary**.") is QuestionType.SUMMARY
    assert parse_type_label("factoid question about genes") is None
    assert parse_type_label("") is None


def test_fuzzed_labels_stay_in_closed_set():
    rng = random.Random(1234)
    alphabet = "abcdefghijklmnopqrstuvwxyz /:.*\n\"'"
    seeds = ["list", "yesno", "summary", "factoid", "yes/no", "Output:", "LIST", " "]
    for _ in range(10_000):
        parts = [rng.choice(seeds) if rng.random() < 0.3 else
                 "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8))) for _ in range(rng.randint(0, 3))]
        label = parse_type_label("".join(parts))
        assert label is None or isinstance(label, QuestionType)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40))
def test_parse_type_label_total(text):
    label = parse_type_label(text)
    assert label is None or label in set(QuestionType)


def test_augment_roundtrip(mock_gateway):
    gw = mock_gateway({"Please give a non-professional answer": "  It is basically a cell clean-up crew.  "})
    rec = QARecord("r1", "What is autophagy?", "Autophagy is a lysosomal degradation pathway.", PRO,
                   QuestionType.SUMMARY, "bioasq", "snippet")
    out = augment(rec, "non_professional", gw)
    assert out.id == "r1__non_professional"
    assert (out.style, out.qtype, out.question, out.source, out.snippet) == (
        NON, QuestionType.SUMMARY, rec.question, "synthetic", "snippet")
    assert out.answer == "It is basically a cell clean-up crew."


def test_augment_empty_completion(mock_gateway):
    gw = mock_gateway({"": "   "})
    rec = QARecord("r1", "Q?", "A.", PRO, QuestionType.LIST)
    with pytest.raises(AugmentationError):
        augment(rec, NON, gw)


def test_augmented_id():
    assert augmented_id("x", PRO) == "x__professional"
    assert augmented_id("x", NON, 3) == "x__non_professional_3"


def _corpus(counts, answers=True):
    records = []
    for (style, qtype), n in counts.items():
        for i in range(n):
            records.append(QARecord(f"{style.value[:3]}-{qtype.value}-{i:05d}", f"{qtype.value} question {i}?",
                                    f"answer {i}" if answers else None, style, qtype))
    return records


def test_balance_plan_counts_and_determinism():
    counts = {(PRO, t): 7 for t in QuestionType}
    counts[(NON, QuestionType.LIST)] = 1
    records = _corpus(counts)
    plan = balance_corpus(records, 40, seed=3)
    assert plan.quota == 5
    per_cell = Counter()
    for key, ids in plan.kept.items():
        per_cell[key] += len(ids)
    for req in plan.requests:
        per_cell[cell_key(req.target_style, req.qtype)] += 1
    assert all(per_cell[cell_key(s, t)] == 5 for s, t in CELLS)
    again = balance_corpus(records, 40, seed=3)
    assert again.to_dict() == plan.to_dict()
    assert BalancePlan.from_dict(json.loads(json.dumps(plan.to_dict()))).to_dict() == plan.to_dict()
    assert balance_corpus(records, 40, seed=4).kept != plan.kept


def test_balance_prefers_questions_missing_from_target_style():
    records = _corpus({(s, t): 3 for s, t in CELLS})
    # drop non-professional list records 1 and 2: only question 0 has a twin
    records = [r for r in records if not (r.style is NON and r.qtype is QuestionType.LIST and not r.id.endswith("0"))]
    plan = balance_corpus(records, 24, seed=0)
    reqs = [r for r in plan.requests if (r.target_style, r.qtype) == (NON, QuestionType.LIST)]
    assert [r.source_id for r in reqs] == ["pro-list-00001", "pro-list-00002"]
    assert [r.new_id for r in reqs] == ["pro-list-00001__non_professional", "pro-list-00002__non_professional"]


def test_balance_errors():
    records = _corpus({(PRO, QuestionType.LIST): 2})
    with pytest.raises(InputError):
        balance_corpus(records, 30)
    with pytest.raises(UnsatisfiablePlanError):
        balance_corpus(records, 16)
    with pytest.raises(InputError):
        balance_corpus([QARecord("u", "Q?", "A", PRO)], 8)
    # professional cells cannot be filled from question-only records
    question_only = _corpus({(NON, t): 3 for t in QuestionType}, answers=False)
    with pytest.raises(UnsatisfiablePlanError):
        balance_corpus(question_only, 8)


def test_balance_24000_gives_3000_per_cell(mock_gateway):
    counts = {(PRO, t): n for t, n in zip(QuestionType, (4100, 2500, 1800, 3500))}
    counts.update({(NON, t): n for t, n in zip(QuestionType, (900, 0, 3100, 40))})
    records = _corpus(counts)
    plan = balance_corpus(records, 24_000, seed=0)
    gw = mock_gateway({"": "A generated answer."}, max_in_flight=8)
    balanced = execute_plan(records, plan, gw)
    cells = Counter((r.style, r.qtype) for r in balanced)
    assert len(balanced) == 24_000
    assert all(cells[c] == 3000 for c in CELLS)
    assert len({r.id for r in balanced}) == 24_000


def test_select_test_split_spreads_types():
    records = _corpus({(s, t): 10 for s, t in CELLS})
    train, test = select_test_split(records, 8, seed=1)
    test_questions = {r.question for r in test}
    assert len(test_questions) == 8
    assert Counter(r.qtype for r in test if r.style is PRO) == {t: 2 for t in QuestionType}
    assert not test_questions & {r.question for r in train}
    assert select_test_split(records, 8, seed=1) == (train, test)


def test_emit_training_set_is_deterministic(tmp_path):
    records = _corpus({(PRO, QuestionType.LIST): 2, (NON, QuestionType.YESNO): 2})
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert emit_training_set(records, "type_based", a) == 4
    emit_training_set(list(reversed(records)), "type_based", b)
    assert a.read_bytes() == b.read_bytes()
    rows = [json.loads(line) for line in a.read_text().splitlines()]
    assert [r["meta"]["source_id"] for r in rows] == sorted(r.id for r in records)
    row = next(r for r in rows if r["meta"]["qtype"] == "list")
    assert set(row) == {"instruction", "input", "output", "meta"}
    assert row["meta"]["level"] == "type_based"
    assert "a list of items" in row["instruction"]


def test_emit_requires_answers_and_snippets(tmp_path):
    with pytest.raises(InputError):
        emit_training_set(_corpus({(PRO, QuestionType.LIST): 1}, answers=False), "basic", tmp_path / "x")
    with pytest.raises(InputError):
        emit_training_set(_corpus({(PRO, QuestionType.LIST): 1}), "knowledge_enriched", tmp_path / "x")
    with pytest.raises(InputError):
        emit_training_set(_corpus({(PRO, QuestionType.LIST): 1}), "expert", tmp_path / "x")
