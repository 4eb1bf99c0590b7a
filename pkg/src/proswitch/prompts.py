"""Instruction texts, prompt composition and the fixed LLM task prompts.

Three instruction levels are supported: ``basic``, ``type_based`` (one text
per style and question type) and ``knowledge_enriched`` (professional texts
embed an article snippet). The texts live in ``templates.txt`` next to this
module; a user file in the same format overrides individual keys.

A generation prompt is ``guide + "\\n" + question + "\\n" + limit`` where the
limit is a model-profile-specific suffix.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import InputError
from .records import QARecord, QuestionType, Style, parse_qtype

LEVELS = ("basic", "type_based", "knowledge_enriched")
SEPARATOR = "\n"

LIMITS: dict[str, str] = {
    "chat_baseline": "Answer the question directly with a single paragraph.",
    "tuned": "And why?",
    "none": "",
}

CLASSIFICATION_PROMPT = """\
You are tasked to classify a question into four types, following these guidelines:
1. Output the type of the question based on its form of asking. Possible types are: yesno, list, factoid, summary.
2. Just output one type without any descriptive information.
3. Summary questions are usually more general, but factoid questions are more specific.
4. You can infer the type according to the display forms of possible answers.
Here are some examples:
Question: Which DNA sequences are more prone for the formation of R-loops?
Output: list
Question: Are ultraconserved elements often transcribed?
Output: yesno
Question: What is clathrin?
Output: summary
Question: Which signaling pathway does sonidegib inhibit?
Output: factoid
Please output the type of the following question:
Question: <question>
Output:"""

AUGMENTATION_PROMPT = """\
You are tasked to answer the question with <aim_style> language, following these guidelines:
1. You can refer to the provided examples to learn the differences between professional and non-professional answers.
2. You can refer to the original <style> answer and rephrase into a different <aim_style> answer.
3. For a <type> question, the <aim_style> answer usually <answer_style>.

Here are examples of professional and non-professional answers:

Question: What is gingipain?
Professional answer: Porphyromonas gingivalis is a keystone periodontal pathogen that has been associated with autoimmune disorders. The cell surface proteases Lys-gingipain (Kgp) and Arg-gingipains (RgpA and RgpB) are major virulence factors, and their proteolytic activity is enhanced by small peptides such as glycylglycine (GlyGly).

Question: Are reduced-nicotine cigarettes effective for smoking cessation?
Non-professional answer: Yes, reduced-nicotine cigarettes are effective for smoking cessation.

Please give a <aim_style> answer for the following question:
Question: <question>
Original <style> answer: <original_answer>
Output:"""

DECOMPOSITION_PROMPT = """\
You are an assistant to explain the reasoning path of the answer. Here are some requirements:
1. Explain the reasoning path of the answer step by step with the content in both question and answer.
2. Provide the total steps at the last line, with the format: Total steps: <number>.
Here is the question and the answer:
Question: <question>
Answer: <answer>"""

_SLOT = re.compile(r"<(question|answer|aim_style|style|type|answer_style|original_answer|article_snippet)>")


def fill(template: str, **values: str) -> str:
    """Substitute ``<slot>`` markers in one pass; unknown slots are left alone."""
    return _SLOT.sub(lambda m: values[m.group(1)] if m.group(1) in values else m.group(0), template)


def parse_template_file(text: str) -> dict[str, str]:
    sections: dict[str, str] = {}
    key: str | None = None
    body: list[str] = []
    header = re.compile(r"^\[([A-Za-z0-9_.]+)\]\s*$")

    def flush() -> None:
        if key is not None:
            sections[key] = "\n".join(body).strip("\n")

    for line in text.splitlines():
        if line.startswith("#"):
            continue
        m = header.match(line)
        if m:
            flush()
            key, body = m.group(1), []
        elif key is not None:
            body.append(line)
        elif line.strip():
            raise InputError(f"template text outside a section: {line!r}")
    flush()
    return sections


@dataclass(frozen=True)
class InstructionTemplate:
    level: str
    style: Style
    qtype: QuestionType | None
    text: str

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise InputError(f"unknown instruction level {self.level!r}")
        if (self.level == "type_based") != (self.qtype is not None):
            raise InputError("qtype must be set exactly for type_based templates")
        if (self.level == "knowledge_enriched" and self.style is Style.PROFESSIONAL
                and "<article_snippet>" not in self.text):
            raise InputError("professional knowledge template must contain <article_snippet>")


@dataclass(frozen=True)
class PromptBundle:
    guide: str
    question: str
    limit: str
    rendered: str


class TemplateSet:
    """Immutable collection of instruction and answer-style texts."""

    def __init__(self, sections: Mapping[str, str]) -> None:
        self._sections = dict(sections)
        self.instructions: dict[tuple[str, Style, QuestionType | None], InstructionTemplate] = {}
        self.answer_styles: dict[tuple[QuestionType, Style], str] = {}
        for style in Style:
            for level in ("basic", "knowledge_enriched"):
                self._add(level, style, None, f"{level}.{style.value}")
            for qtype in QuestionType:
                self._add("type_based", style, qtype, f"type_based.{style.value}.{qtype.value}")
                key = f"answer_style.{style.value}.{qtype.value}"
                if key not in self._sections:
                    raise InputError(f"template set missing {key}")
                self.answer_styles[(qtype, style)] = self._sections[key]

    def _add(self, level: str, style: Style, qtype: QuestionType | None, key: str) -> None:
        if key not in self._sections:
            raise InputError(f"template set missing {key}")
        self.instructions[(level, style, qtype)] = InstructionTemplate(level, style, qtype, self._sections[key])

    @classmethod
    def default(cls) -> "TemplateSet":
        return _DEFAULT

    @classmethod
    def load(cls, override: str | Path | None = None) -> "TemplateSet":
        if override is None:
            return _DEFAULT
        sections = dict(_DEFAULT._sections)
        sections.update(parse_template_file(Path(override).read_text(encoding="utf-8")))
        return cls(sections)


def _load_default() -> TemplateSet:
    text = resources.files("proswitch").joinpath("templates.txt").read_text(encoding="utf-8")
    return TemplateSet(parse_template_file(text))


_DEFAULT = _load_default()


def build_instruction(
    style: Style | str,
    level: str,
    qtype: QuestionType | str | None = None,
    snippet: str | None = None,
    templates: TemplateSet | None = None,
) -> str:
    templates = templates or _DEFAULT
    style = Style.parse(style)
    if level not in LEVELS:
        raise InputError(f"unknown instruction level {level!r}; expected one of {LEVELS}")
    if level == "type_based":
        parsed = parse_qtype(qtype)
        if parsed is None:
            raise InputError(f"type_based instruction needs a question type, got {qtype!r}")
        return templates.instructions[(level, style, parsed)].text
    text = templates.instructions[(level, style, None)].text
    if level == "knowledge_enriched" and style is Style.PROFESSIONAL:
        if not snippet or not snippet.strip():
            raise InputError("professional knowledge_enriched instruction needs an article snippet")
        clean = snippet.strip()
        if clean.endswith("."):
            clean = clean[:-1]
        text = fill(text, article_snippet=clean)
    return text


def compose_prompt(
    guide: str,
    question: str,
    model_profile: str = "tuned",
    limits: Mapping[str, str] | None = None,
) -> PromptBundle:
    limits = LIMITS if limits is None else {**LIMITS, **limits}
    if model_profile not in limits:
        raise InputError(f"unknown model profile {model_profile!r}")
    limit = limits[model_profile]
    parts = [guide, question] + ([limit] if limit else [])
    return PromptBundle(guide, question, limit, SEPARATOR.join(parts))


def augmentation_prompt(
    record: QARecord,
    target_style: Style | str,
    few_shot: Iterable[tuple[str, str, Style | str]] = (),
    templates: TemplateSet | None = None,
) -> str:
    """Fill the augmentation prompt for ``record`` rewritten into ``target_style``.

    ``few_shot`` items are (question, answer, style) triples appended after
    the two built-in demonstrations. Without an original answer the
    "Original ... answer" line is dropped, which is only allowed for a
    non-professional target (professional answers are always rephrased).
    """
    templates = templates or _DEFAULT
    target = Style.parse(target_style)
    if record.qtype is None:
        raise InputError(f"record {record.id}: augmentation needs a question type")
    if target is Style.PROFESSIONAL and not record.answer:
        raise InputError(f"record {record.id}: professional augmentation needs an original answer")

    template = AUGMENTATION_PROMPT
    if not record.answer:
        template = template.replace("Original <style> answer: <original_answer>\n", "")
    filled = fill(
        template,
        aim_style=target.display,
        style=record.style.display,
        type=record.qtype.display,
        answer_style=templates.answer_styles[(record.qtype, target)],
        question=record.question,
        original_answer=record.answer or "",
    )
    demos = "".join(
        f"Question: {q}\n{Style.parse(s).display.capitalize()} answer: {a}\n\n" for q, a, s in few_shot
    )
    if demos:
        marker = f"Please give a {target.display} answer for the following question:"
        head, sep, tail = filled.rpartition(marker)
        filled = head + demos + sep + tail
    return filled


def classification_prompt(question: str) -> str:
    return fill(CLASSIFICATION_PROMPT, question=question)


def decomposition_prompt(question: str, answer: str) -> str:
    return fill(DECOMPOSITION_PROMPT, question=question, answer=answer)
