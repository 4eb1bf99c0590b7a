"""Shared record types: style labels, question types, QA records."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import InputError


class Style(str, Enum):
    PROFESSIONAL = "professional"
    NON_PROFESSIONAL = "non_professional"

    @property
    def display(self) -> str:
        return "professional" if self is Style.PROFESSIONAL else "non-professional"

    @property
    def other(self) -> "Style":
        return Style.NON_PROFESSIONAL if self is Style.PROFESSIONAL else Style.PROFESSIONAL

    @classmethod
    def parse(cls, value: "str | Style") -> "Style":
        if isinstance(value, Style):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"p": "professional", "pro": "professional", "np": "non_professional",
                   "nonpro": "non_professional", "nonprofessional": "non_professional"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown style label {value!r}") from None


class QuestionType(str, Enum):
    LIST = "list"
    SUMMARY = "summary"
    YESNO = "yesno"
    FACTOID = "factoid"

    @property
    def display(self) -> str:
        return "yes/no" if self is QuestionType.YESNO else self.value


_QTYPE_ALIASES = {
    "list": QuestionType.LIST,
    "summary": QuestionType.SUMMARY,
    "summarize": QuestionType.SUMMARY,
    "yesno": QuestionType.YESNO,
    "yes/no": QuestionType.YESNO,
    "yes-no": QuestionType.YESNO,
    "yes_no": QuestionType.YESNO,
    "factoid": QuestionType.FACTOID,
}


def parse_qtype(value: "str | QuestionType | None") -> QuestionType | None:
    """Map a label onto the closed type set; None for anything unrecognized."""
    if value is None or isinstance(value, QuestionType):
        return value
    return _QTYPE_ALIASES.get(str(value).strip().lower())


SOURCES = ("bioasq", "pubmedqa", "icliniq", "techqa", "synthetic")


@dataclass(frozen=True)
class QARecord:
    """One question/answer pair.

    ``answer`` is None only for question-only corpora (evaluation questions,
    or questions awaiting a generated non-professional answer).
    """

    id: str
    question: str
    answer: str | None
    style: Style
    qtype: QuestionType | None = None
    source: str = "synthetic"
    snippet: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise InputError("record id must be non-empty")
        if not self.question or not self.question.strip():
            raise InputError(f"record {self.id}: empty question")
        if self.answer is not None and not self.answer.strip():
            raise InputError(f"record {self.id}: empty answer")
        if self.source not in SOURCES:
            raise InputError(f"record {self.id}: unknown source {self.source!r}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["style"] = self.style.value
        d["qtype"] = self.qtype.value if self.qtype else None
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QARecord":
        qtype = d.get("qtype")
        parsed = parse_qtype(qtype)
        if qtype and parsed is None:
            raise InputError(f"record {d.get('id')}: unknown qtype {qtype!r}")
        return cls(
            id=str(d["id"]),
            question=d["question"],
            answer=d.get("answer"),
            style=Style.parse(d.get("style") or "professional"),
            qtype=parsed,
            source=d.get("source") or "synthetic",
            snippet=d.get("snippet"),
        )


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_records(path: str | Path) -> list[QARecord]:
    return [QARecord.from_dict(d) for d in read_jsonl(path)]


def save_records(path: str | Path, records: Iterable[QARecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))
