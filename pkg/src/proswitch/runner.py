"""Evaluation orchestration and report rendering.

For every question, style and run, an answer is generated through the
gateway (or read from an answer file), scored for term hits and reasoning
steps, and optionally compared against reference answers. The per-answer
records are dumped as JSON Lines next to the report so every aggregate can be
recomputed offline.

Answer file rows: ``{"id", "style", "run" (default 1), "answer", "steps"?}``.
When ``steps`` is present the judge model is not called for that answer.
Reference file rows: ``{"id", "references": [...]}`` or ``{"id", "answer"}``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from statistics import fmean
from typing import Any, Mapping, Sequence

from .errors import InputError, MissingStyleError, UnparseableTraceError
from .gateway import Gateway, GatewayRequest
from .lexicon import TermLexicon, match_terms
from .prompts import LEVELS, TemplateSet, build_instruction, compose_prompt
from .quality_metrics import EmbeddingProvider, bert_score, bleu
from .records import QARecord, Style, read_jsonl, write_jsonl
from .style_metrics import (
    EvalConfig,
    EvalRecord,
    classify_professionalism,
    compute_gaps,
    decompose_reasoning,
    pro_f1,
    reasoning_density,
    text_length,
)

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "csv", "table-text")
CSV_COLUMNS = ["model", "dataset", "thg", "rsg", "pro_f1", "bleu", "bert_f",
               "rd_professional", "avg_len", "avg_rs", "runs", "excluded"]
# decimals in human-readable output
PRECISION = {"thg": 2, "rsg": 2, "pro_f1": 2, "bleu": 4, "bert_f": 4,
             "rd_professional": 3, "avg_len": 1, "avg_rs": 2}


@dataclass(frozen=True)
class RunSettings:
    """Everything about a run that is not an indicator threshold."""

    model_name: str = "model"
    dataset_name: str = "dataset"
    level: str = "basic"
    model_profile: str = "tuned"
    judge_model: str = "gpt-4"
    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = 512
    quality_styles: str = "professional"  # or "both"
    bleu_m: int = 4
    standard_bp: bool = False
    cache_generation: bool = False
    embedder: str = "hashed"

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise InputError(f"unknown level {self.level!r}")
        if self.quality_styles not in ("professional", "both"):
            raise InputError("quality_styles must be 'professional' or 'both'")


@dataclass
class EvalReport:
    model_name: str
    dataset_name: str
    thg: float
    rsg: float
    pro_f1: float
    bleu: float | None
    bert_f: float | None
    rd_professional: float
    avg_len: float
    avg_rs: float
    runs: int
    excluded: int
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("thg", "rsg", "pro_f1", "bleu", "bert_f", "rd_professional", "avg_len", "avg_rs"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise InputError(f"report field {name} is not finite: {value}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def load_answers(path: str | Path) -> dict[tuple[str, Style, int], dict[str, Any]]:
    answers: dict[tuple[str, Style, int], dict[str, Any]] = {}
    for row in read_jsonl(path):
        try:
            key = (str(row["id"]), Style.parse(row["style"]), int(row.get("run", 1)))
            text = row["answer"]
        except KeyError as exc:
            raise InputError(f"answer row missing {exc.args[0]!r}: {row}") from None
        if key in answers:
            raise InputError(f"duplicate answer for {key}")
        answers[key] = {"answer": text, "steps": row.get("steps")}
    return answers


def load_references(path: str | Path) -> dict[str, list[str]]:
    refs: dict[str, list[str]] = {}
    for row in read_jsonl(path):
        if "references" in row:
            items = row["references"]
        elif "answer" in row:
            items = [row["answer"]]
        else:
            raise InputError(f"reference row for {row.get('id')} has neither 'references' nor 'answer'")
        refs.setdefault(str(row["id"]), []).extend(items)
    return refs


def _pro_f1_by_run(records: Sequence[EvalRecord], config: EvalConfig) -> float:
    scores = []
    for run in sorted({r.run_index for r in records}):
        usable = [r for r in records if r.run_index == run and r.reasoning_steps is not None]
        if not usable:
            continue
        preds = [classify_professionalism(r.term_hits, r.reasoning_steps, config) for r in usable]
        scores.append(pro_f1(preds, [r.requested_style for r in usable]))
    if not scores:
        raise MissingStyleError("no records with usable reasoning steps")
    return fmean(scores)


def aggregate(
    records: Sequence[EvalRecord],
    config: EvalConfig,
    model_name: str,
    dataset_name: str,
    snapshot: dict[str, Any] | None = None,
) -> EvalReport:
    """Collapse per-answer records into report indicators.

    THG/RSG pool all runs; Pro F1 is averaged over runs; RD, Avg.Len and
    Avg.RS describe the professional answers with a usable reasoning trace;
    BLEU/BERT are means of the per-record scores where present.
    """
    thg, rsg = compute_gaps(records)
    f1 = _pro_f1_by_run(records, config)
    pro = [r for r in records
           if Style.parse(r.requested_style) is Style.PROFESSIONAL and r.reasoning_steps is not None]
    avg_len = fmean(r.text_length for r in pro)
    avg_rs = fmean(r.reasoning_steps for r in pro)  # type: ignore[misc]
    rd = reasoning_density(avg_len, avg_rs, ndigits=None) if avg_len > 0 else 0.0
    bleus = [r.extra["bleu"] for r in records if r.extra.get("bleu") is not None]
    berts = [r.extra["bert_f"] for r in records if r.extra.get("bert_f") is not None]
    return EvalReport(
        model_name=model_name,
        dataset_name=dataset_name,
        thg=thg,
        rsg=rsg,
        pro_f1=f1,
        bleu=fmean(bleus) if bleus else None,
        bert_f=fmean(berts) if berts else None,
        rd_professional=rd,
        avg_len=avg_len,
        avg_rs=avg_rs,
        runs=len({r.run_index for r in records}),
        excluded=sum(r.reasoning_steps is None for r in records),
        config=snapshot or {},
    )


def record_to_dict(r: EvalRecord) -> dict[str, Any]:
    return {
        "question_id": r.question_id,
        "requested_style": Style.parse(r.requested_style).value,
        "run_index": r.run_index,
        "term_hits": r.term_hits,
        "reasoning_steps": r.reasoning_steps,
        "text_length": r.text_length,
        "bleu": r.extra.get("bleu"),
        "bert_f": r.extra.get("bert_f"),
        "generated_text": r.generated_text,
    }


def record_from_dict(d: Mapping[str, Any]) -> EvalRecord:
    extra = {k: d[k] for k in ("bleu", "bert_f") if d.get(k) is not None}
    return EvalRecord(d["question_id"], Style.parse(d["requested_style"]), d.get("generated_text", ""),
                      d["term_hits"], d["reasoning_steps"], d["text_length"], d["run_index"], extra)


def load_record_dump(path: str | Path) -> list[EvalRecord]:
    return [record_from_dict(d) for d in read_jsonl(path)]


def run_evaluation(
    questions: Sequence[QARecord],
    lexicon: TermLexicon,
    config: EvalConfig = EvalConfig(),
    settings: RunSettings = RunSettings(),
    gateway: Gateway | None = None,
    answers: Mapping[tuple[str, Style, int], Mapping[str, Any]] | None = None,
    references: Mapping[str, Sequence[str]] | None = None,
    embedder: EmbeddingProvider | None = None,
    templates: TemplateSet | None = None,
) -> tuple[EvalReport, list[EvalRecord]]:
    """Generate (or look up) answers, score them, and aggregate a report."""
    if not questions:
        raise InputError("evaluation corpus is empty")
    if answers is None and gateway is None:
        raise InputError("need either a gateway or an answer file")
    ids = [q.id for q in questions]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate question ids in evaluation corpus")
    if references is not None:
        missing = [i for i in ids if not references.get(i)]
        if missing:
            raise InputError(f"{len(missing)} questions have no reference answer (first: {missing[0]})")
        if embedder is None:
            raise InputError("references given but no embedding provider for BERTScore")

    tasks = [(q, style, run) for q in questions for style in Style for run in range(1, config.runs + 1)]
    if answers is not None:
        for q, style, run in tasks:
            if (q.id, style, run) not in answers:
                raise MissingStyleError(f"no {style.value} answer for question {q.id} run {run}")

    quality_styles = set(Style) if settings.quality_styles == "both" else {Style.PROFESSIONAL}

    def score(task: tuple[QARecord, Style, int]) -> EvalRecord:
        q, style, run = task
        given = answers[(q.id, style, run)] if answers is not None else None
        if given is not None:
            text = given["answer"]
        else:
            assert gateway is not None
            guide = build_instruction(style, settings.level,
                                      q.qtype if settings.level == "type_based" else None,
                                      q.snippet, templates)
            prompt = compose_prompt(guide, q.question, settings.model_profile).rendered
            request = GatewayRequest(prompt, model_name=settings.model_name, temperature=settings.temperature,
                                     top_p=settings.top_p, max_tokens=settings.max_tokens)
            text = gateway.complete(request, use_cache=settings.cache_generation).text

        steps: int | None
        if given is not None and given.get("steps") is not None:
            steps = int(given["steps"])
        elif gateway is None:
            raise InputError(f"answer for {q.id}/{style.value}/run {run} has no steps and no judge gateway")
        else:
            try:
                steps = decompose_reasoning(text, q.question, gateway, model_name=settings.judge_model).step_count
            except UnparseableTraceError as exc:
                logger.warning("excluding %s/%s/run %d from RSG: %s", q.id, style.value, run, exc)
                steps = None

        extra: dict[str, float] = {}
        if references is not None and style in quality_styles:
            refs = list(references[q.id])
            extra["bleu"] = bleu(text, refs, settings.bleu_m, settings.standard_bp)
            extra["bert_f"] = max(bert_score(text, ref, embedder).bert_f for ref in refs)  # type: ignore[arg-type]
        return EvalRecord(q.id, style, text, match_terms(lexicon, text).hit_count, steps,
                          text_length(text, config.length_unit), run, extra)

    workers = gateway.max_in_flight if gateway is not None else 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(score, tasks))

    snapshot = {
        "eval": {**asdict(config), "positive_class": config.positive_class.value},
        "run": asdict(settings),
        "lexicon": {"domain_id": lexicon.domain_id, "terms": len(lexicon), "digest": lexicon.source_digest},
        "source": "answer-files" if answers is not None else "gateway",
        "references": references is not None,
        "questions": len(questions),
    }
    if references is None:
        snapshot["run"]["embedder"] = None
    report = aggregate(records, config, settings.model_name, settings.dataset_name, snapshot)
    return report, records


def write_outputs(report: EvalReport, records: Sequence[EvalRecord], out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    dump_path = out / "records.jsonl"
    report_path.write_text(report.to_json(), encoding="utf-8", newline="\n")
    write_jsonl(dump_path, (record_to_dict(r) for r in records))
    return report_path, dump_path


def write_scatter_csv(records: Sequence[EvalRecord], path: str | Path) -> None:
    """Term-hit vs reasoning-step points, one row per answer, for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["question_id", "style", "run", "term_hits", "reasoning_steps"])
        for r in records:
            writer.writerow([r.question_id, Style.parse(r.requested_style).value, r.run_index,
                             r.term_hits, "" if r.reasoning_steps is None else r.reasoning_steps])


def _fmt(name: str, value: Any) -> str:
    if value is None:
        return ""
    if name in PRECISION:
        return f"{value:.{PRECISION[name]}f}"
    return str(value)


def _csv_row(report: EvalReport) -> list[str]:
    d = report.to_dict()
    d["model"], d["dataset"] = report.model_name, report.dataset_name
    return [_fmt(c, d[c]) for c in CSV_COLUMNS]


def render_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table in THG, RSG, Pro F1, BLEU Score, BERT Score order."""
    header = ["Models", "THG", "RSG", "Pro F1", "BLEU Score", "BERT Score"]
    rows = [[r.model_name, _fmt("thg", r.thg), _fmt("rsg", r.rsg), _fmt("pro_f1", r.pro_f1),
             _fmt("bleu", r.bleu) or "-", _fmt("bert_f", r.bert_f) or "-"] for r in reports]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *rows]]
    return "\n".join(lines) + "\n"


def render_report(reports: EvalReport | Sequence[EvalReport], format: str,
                  path: str | Path | None = None) -> str:
    if isinstance(reports, EvalReport):
        reports = [reports]
    if format not in REPORT_FORMATS:
        raise InputError(f"unknown report format {format!r}; expected one of {REPORT_FORMATS}")
    if format == "json":
        text = reports[0].to_json() if len(reports) == 1 else \
            json.dumps([r.to_dict() for r in reports], indent=2, ensure_ascii=False) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow(_csv_row(r))
        text = buf.getvalue()
    else:
        text = render_table(reports)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def load_report(path: str | Path) -> list[EvalReport]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = data if isinstance(data, list) else [data]
    return [EvalReport.from_dict(d) for d in items]
