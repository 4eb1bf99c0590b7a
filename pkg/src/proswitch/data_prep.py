"""QA corpus ingestion, question-type classification, augmentation,
style/type balancing and Alpaca-style dataset emission.

Per-source field mappings are fixed, not inferred:

=========  ==================  =====================  ==============  ====================
source     question            answer                 type            snippet
=========  ==================  =====================  ==============  ====================
bioasq     ``body``            ``ideal_answer`` [0]   ``type``        ``snippets[0].text``
pubmedqa   ``QUESTION``        ``LONG_ANSWER``        (none)          ``CONTEXTS`` joined
jsonl      ``question``        ``answer``             ``qtype``       ``snippet``
=========  ==================  =====================  ==============  ====================

BioASQ input is ``{"questions": [...]}``; PubMedQA input is an object keyed
by PMID. Both academic sources are labeled professional. Generic JSON Lines
rows may also carry ``id``, ``style`` and ``source``.
"""

from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import (
    AugmentationError,
    ClassificationError,
    IngestError,
    InputError,
    UnsatisfiablePlanError,
)
from .gateway import Gateway, GatewayRequest
from .prompts import (
    LEVELS,
    TemplateSet,
    augmentation_prompt,
    build_instruction,
    classification_prompt,
)
from .records import QARecord, QuestionType, Style, parse_qtype, read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

SOURCE_FORMATS = ("bioasq", "pubmedqa", "jsonl")
CELLS = [(s, t) for s in Style for t in QuestionType]


class RecordList(list):
    """A list of records that also carries per-row ingest errors."""

    def __init__(self, records: Iterable[QARecord] = (), errors: Iterable[str] = ()) -> None:
        super().__init__(records)
        self.errors: list[str] = list(errors)


def _bioasq_rows(data: Any) -> Iterable[tuple[str, dict[str, Any]]]:
    if not isinstance(data, dict) or not isinstance(data.get("questions"), list):
        raise IngestError('BioASQ input must be an object with a "questions" list')
    for i, q in enumerate(data["questions"]):
        yield str(q.get("id", f"bioasq-{i}")) if isinstance(q, dict) else f"bioasq-{i}", q


def _bioasq_record(rid: str, q: dict[str, Any]) -> QARecord:
    answer = q["ideal_answer"]
    if isinstance(answer, list):
        answer = answer[0] if answer else ""
    qtype = parse_qtype(q["type"])
    if qtype is None:
        raise InputError(f"unknown BioASQ type {q['type']!r}")
    snippets = q.get("snippets") or []
    snippet = snippets[0].get("text") if snippets and isinstance(snippets[0], dict) else None
    return QARecord(rid, q["body"], answer, Style.PROFESSIONAL, qtype, "bioasq", snippet or None)


def _pubmedqa_record(rid: str, q: dict[str, Any]) -> QARecord:
    contexts = q.get("CONTEXTS") or []
    snippet = " ".join(contexts) if contexts else None
    return QARecord(f"pubmedqa-{rid}", q["QUESTION"], q["LONG_ANSWER"], Style.PROFESSIONAL,
                    None, "pubmedqa", snippet)


def ingest(path: str | Path, source_format: str) -> RecordList:
    """Read a source file into QA records.

    Bad rows are skipped and described in ``result.errors``; the call fails
    only when no row survives.
    """
    if source_format not in SOURCE_FORMATS:
        raise InputError(f"unknown source format {source_format!r}; expected one of {SOURCE_FORMATS}")
    path = Path(path)
    rows: list[tuple[str, Any]]
    if source_format == "jsonl":
        rows = [(str(d.get("id", f"row-{i}")), d) for i, d in enumerate(read_jsonl(path), 1)]
    else:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}: invalid JSON: {exc}") from exc
        if source_format == "bioasq":
            rows = list(_bioasq_rows(data))
        else:
            if not isinstance(data, dict):
                raise IngestError("PubMedQA input must be an object keyed by PMID")
            rows = list(data.items())

    result = RecordList()
    seen: set[str] = set()
    for rid, row in rows:
        try:
            if not isinstance(row, dict):
                raise InputError("row is not an object")
            if source_format == "bioasq":
                rec = _bioasq_record(rid, row)
            elif source_format == "pubmedqa":
                rec = _pubmedqa_record(rid, row)
            else:
                rec = QARecord.from_dict({**row, "id": rid})
            if rec.id in seen:
                raise InputError("duplicate id")
        except KeyError as exc:
            msg = f"{rid}: missing field {exc.args[0]!r}"
        except (InputError, TypeError, AttributeError) as exc:
            msg = f"{rid}: {exc}"
        else:
            seen.add(rec.id)
            result.append(rec)
            continue
        logger.error("skipping record %s", msg)
        result.errors.append(msg)

    if not result:
        raise IngestError(f"no usable records in {path} ({len(result.errors)} errors)")
    logger.info("ingested %d records from %s (%d skipped)", len(result), path, len(result.errors))
    return result


def parse_type_label(text: str) -> QuestionType | None:
    """Strictly parse a one-word type label; anything else is None."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        return None
    label = lines[0]
    if label.lower().startswith("output:"):
        label = label[len("output:"):]
    label = label.strip().strip("\"'`*.,;:!()[] ").lower()
    return parse_qtype(label)


def classify_question_type(
    record: QARecord,
    gateway: Gateway,
    model_name: str = "gpt-4",
    max_retries: int = 2,
) -> QuestionType:
    if record.qtype is not None:
        raise InputError(f"record {record.id} already has type {record.qtype.value}")
    request = GatewayRequest(classification_prompt(record.question), model_name=model_name)
    reply = ""
    for attempt in range(max_retries + 1):
        reply = gateway.complete(request, refresh=attempt > 0).text
        qtype = parse_type_label(reply)
        if qtype is not None:
            return qtype
        logger.warning("record %s: unusable type label %r", record.id, reply[:40])
    raise ClassificationError(f"record {record.id}: no valid type after {max_retries + 1} attempts (last {reply[:40]!r})")


def classify_corpus(
    records: Sequence[QARecord],
    gateway: Gateway,
    review_path: str | Path | None = None,
    model_name: str = "gpt-4",
) -> tuple[list[QARecord], list[QARecord]]:
    """Type every untyped record; returns (typed, needs_manual_review).

    Review records are also written to ``review_path`` as JSON Lines.
    """

    def work(rec: QARecord) -> QARecord | None:
        if rec.qtype is not None:
            return rec
        try:
            qtype = classify_question_type(rec, gateway, model_name)
        except ClassificationError as exc:
            logger.error("%s", exc)
            return None
        return QARecord(rec.id, rec.question, rec.answer, rec.style, qtype, rec.source, rec.snippet)

    with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
        results = list(pool.map(work, records))
    typed = [r for r in results if r is not None]
    review = [rec for rec, r in zip(records, results) if r is None]
    if review_path is not None:
        write_jsonl(review_path, (r.to_dict() for r in review))
    return typed, review


def augmented_id(record_id: str, style: Style, serial: int = 1) -> str:
    base = f"{record_id}__{style.value}"
    return base if serial == 1 else f"{base}_{serial}"


def augment(
    record: QARecord,
    target_style: Style | str,
    gateway: Gateway,
    few_shot: Sequence[tuple[str, str, Style | str]] = (),
    model_name: str = "gpt-4",
    new_id: str | None = None,
    templates: TemplateSet | None = None,
) -> QARecord:
    target = Style.parse(target_style)
    prompt = augmentation_prompt(record, target, few_shot, templates)
    text = gateway.complete(GatewayRequest(prompt, model_name=model_name)).text.strip()
    if not text:
        raise AugmentationError(f"record {record.id}: empty completion")
    return QARecord(
        new_id or augmented_id(record.id, target),
        record.question,
        text,
        target,
        record.qtype,
        "synthetic",
        record.snippet,
    )


@dataclass(frozen=True)
class AugmentationRequest:
    source_id: str
    target_style: Style
    qtype: QuestionType
    new_id: str

    def to_dict(self) -> dict[str, str]:
        return {"source_id": self.source_id, "target_style": self.target_style.value,
                "qtype": self.qtype.value, "new_id": self.new_id}


@dataclass
class BalancePlan:
    target_total: int
    quota: int
    seed: int
    kept: dict[str, list[str]] = field(default_factory=dict)
    available: dict[str, int] = field(default_factory=dict)
    requests: list[AugmentationRequest] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["requests"] = [r.to_dict() for r in self.requests]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BalancePlan":
        reqs = [AugmentationRequest(r["source_id"], Style.parse(r["target_style"]),
                                    QuestionType(r["qtype"]), r["new_id"]) for r in d["requests"]]
        return cls(d["target_total"], d["quota"], d["seed"], d["kept"], d["available"], reqs)


def cell_key(style: Style, qtype: QuestionType) -> str:
    return f"{style.value}/{qtype.value}"


def balance_corpus(records: Sequence[QARecord], target_total: int, seed: int = 0) -> BalancePlan:
    """Plan an even split of ``target_total`` over the 8 (style, type) cells.

    Surplus cells are down-sampled with a seeded shuffle. Deficit cells get
    augmentation requests drawn from the twin cell (same type, other style)
    first, preferring questions not yet present in the target style, then
    from the cell itself; sources are reused round-robin when short.
    """
    if target_total <= 0 or target_total % len(CELLS):
        raise InputError(f"target_total must be a positive multiple of {len(CELLS)}")
    quota = target_total // len(CELLS)
    untyped = [r.id for r in records if r.qtype is None]
    if untyped:
        raise InputError(f"{len(untyped)} records lack a question type (first: {untyped[0]}); classify first")

    cells: dict[tuple[Style, QuestionType], list[QARecord]] = defaultdict(list)
    for r in records:
        cells[(r.style, r.qtype)].append(r)  # type: ignore[index]
    for members in cells.values():
        members.sort(key=lambda r: r.id)
    taken_ids = {r.id for r in records}

    plan = BalancePlan(target_total, quota, seed)
    for style, qtype in CELLS:
        key = cell_key(style, qtype)
        members = cells[(style, qtype)]
        plan.available[key] = len(members)
        if len(members) >= quota:
            ids = [r.id for r in members]
            random.Random(f"{seed}:{key}").shuffle(ids)
            plan.kept[key] = sorted(ids[:quota])
            continue
        plan.kept[key] = [r.id for r in members]

        present = {r.question for r in members}
        twins = cells[(style.other, qtype)]
        pool = [r for r in twins if r.question not in present]
        pool += [r for r in twins if r.question in present]
        pool += members
        if style is Style.PROFESSIONAL:
            pool = [r for r in pool if r.answer]
        if not pool:
            raise UnsatisfiablePlanError(f"cell {key} has no records and nothing to augment from")

        uses: dict[str, int] = defaultdict(int)
        for i in range(quota - len(members)):
            src = pool[i % len(pool)]
            while True:
                uses[src.id] += 1
                new_id = augmented_id(src.id, style, uses[src.id])
                if new_id not in taken_ids:
                    break
            taken_ids.add(new_id)
            plan.requests.append(AugmentationRequest(src.id, style, qtype, new_id))
    return plan


def execute_plan(
    records: Sequence[QARecord],
    plan: BalancePlan,
    gateway: Gateway,
    model_name: str = "gpt-4",
    templates: TemplateSet | None = None,
) -> list[QARecord]:
    """Apply a plan: keep the selected records and run every augmentation."""
    by_id = {r.id: r for r in records}
    kept = [by_id[i] for ids in plan.kept.values() for i in ids]

    def work(req: AugmentationRequest) -> QARecord:
        try:
            src = by_id[req.source_id]
        except KeyError:
            raise InputError(f"plan references unknown record {req.source_id}") from None
        return augment(src, req.target_style, gateway, model_name=model_name,
                       new_id=req.new_id, templates=templates)

    with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
        generated = list(pool.map(work, plan.requests))
    return sorted(kept + generated, key=lambda r: r.id)


def select_test_split(records: Sequence[QARecord], test_size: int, seed: int = 0) -> tuple[list[QARecord], list[QARecord]]:
    """Pick ``test_size`` distinct questions spread evenly over question types.

    Returns (train, test); every record sharing a test question goes to test.
    """
    by_type: dict[str, list[str]] = defaultdict(list)
    for r in records:
        qkey = r.qtype.value if r.qtype else "untyped"
        if r.question not in by_type[qkey]:
            by_type[qkey].append(r.question)
    rng = random.Random(seed)
    for key in sorted(by_type):
        by_type[key].sort()
        rng.shuffle(by_type[key])
    chosen: list[str] = []
    keys = sorted(by_type)
    while len(chosen) < test_size and any(by_type[k] for k in keys):
        for k in keys:
            if by_type[k] and len(chosen) < test_size:
                chosen.append(by_type[k].pop())
    test_q = set(chosen)
    train = [r for r in records if r.question not in test_q]
    test = [r for r in records if r.question in test_q]
    return train, test


def instruction_rows(
    records: Sequence[QARecord], level: str, templates: TemplateSet | None = None
) -> list[dict[str, Any]]:
    if level not in LEVELS:
        raise InputError(f"unknown level {level!r}")
    rows = []
    for r in sorted(records, key=lambda r: r.id):
        if r.qtype is None:
            raise InputError(f"record {r.id} has no question type")
        if not r.answer:
            raise InputError(f"record {r.id} has no answer")
        instruction = build_instruction(
            r.style, level, r.qtype if level == "type_based" else None, r.snippet, templates
        )
        rows.append({
            "instruction": instruction,
            "input": r.question,
            "output": r.answer,
            "meta": {"level": level, "style": r.style.value, "qtype": r.qtype.value, "source_id": r.id},
        })
    return rows


def emit_training_set(
    records: Sequence[QARecord], level: str, path: str | Path, templates: TemplateSet | None = None
) -> int:
    """Write one instruction/input/output row per record, sorted by id."""
    rows = instruction_rows(records, level, templates)
    try:
        return write_jsonl(path, rows)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc
