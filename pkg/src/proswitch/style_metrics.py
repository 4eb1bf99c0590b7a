"""Professionalism-discrimination indicators.

Terminology hit gap (THG) and reasoning step gap (RSG) are absolute
differences of per-style means; Pro F1 scores a threshold classifier against
the requested style; reasoning density is steps per unit of answer length.
Also here: AS/SR aggregation of 1-5 human ratings and a grid search that fits
the two classifier thresholds to human labels.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Sequence

from .errors import DegenerateDataError, InputError, MissingStyleError, UnparseableTraceError
from .gateway import Gateway, GatewayRequest
from .prompts import decomposition_prompt
from .records import Style

logger = logging.getLogger(__name__)

COMBINERS = ("AND", "OR")
LENGTH_UNITS = ("characters", "whitespace_tokens")

_MARKER = re.compile(r"total steps\s*:\s*[*_]*\s*(\d+)", re.IGNORECASE)
_ENUMERATED = re.compile(r"^\s*\d+\.", re.MULTILINE)


@dataclass(frozen=True)
class EvalConfig:
    th_threshold: int = 1
    rs_threshold: int = 4
    combiner: str = "AND"
    runs: int = 3
    positive_class: Style = Style.PROFESSIONAL
    length_unit: str = "characters"

    def __post_init__(self) -> None:
        if self.th_threshold < 0 or self.rs_threshold < 0:
            raise InputError("thresholds must be >= 0")
        if self.runs < 1:
            raise InputError("runs must be >= 1")
        if self.combiner not in COMBINERS:
            raise InputError(f"combiner must be one of {COMBINERS}")
        if self.length_unit not in LENGTH_UNITS:
            raise InputError(f"length_unit must be one of {LENGTH_UNITS}")
        if self.positive_class is not Style.PROFESSIONAL:
            raise InputError("positive_class is fixed to professional")


@dataclass(frozen=True)
class ReasoningTrace:
    raw_decomposition: str
    step_count: int
    parse_mode: str  # "marker" | "fallback-enumeration"

    def render(self) -> str:
        """Text that parses back to the same step count, always via the marker."""
        if self.parse_mode == "marker":
            return self.raw_decomposition
        return f"{self.raw_decomposition.rstrip()}\nTotal steps: {self.step_count}"


@dataclass
class EvalRecord:
    question_id: str
    requested_style: Style
    generated_text: str
    term_hits: int
    reasoning_steps: int | None  # None: trace unparseable, excluded from RSG
    text_length: int
    run_index: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.term_hits < 0 or self.text_length < 0:
            raise InputError("term_hits and text_length must be >= 0")
        if self.reasoning_steps is not None and self.reasoning_steps < 0:
            raise InputError("reasoning_steps must be >= 0")


def text_length(text: str, unit: str = "characters") -> int:
    if unit == "characters":
        return len(text)
    if unit == "whitespace_tokens":
        return len(text.split())
    raise InputError(f"unknown length unit {unit!r}")


def parse_step_count(decomposition_text: str) -> ReasoningTrace:
    """Read the integer after the last "Total steps:" marker.

    Without a marker, count lines that start with ``<digits>.``.
    """
    if decomposition_text is None:
        raise InputError("decomposition text is None")
    markers = _MARKER.findall(decomposition_text)
    if markers:
        return ReasoningTrace(decomposition_text, int(markers[-1]), "marker")
    enumerated = _ENUMERATED.findall(decomposition_text)
    if enumerated:
        return ReasoningTrace(decomposition_text, len(enumerated), "fallback-enumeration")
    raise UnparseableTraceError("no 'Total steps:' marker and no enumerated steps")


def decompose_reasoning(
    answer: str,
    question: str,
    gateway: Gateway,
    model_name: str = "gpt-4",
    max_retries: int = 2,
    temperature: float = 0.0,
    use_cache: bool = True,
) -> ReasoningTrace:
    request = GatewayRequest(decomposition_prompt(question, answer), model_name=model_name,
                             temperature=temperature)
    last: UnparseableTraceError | None = None
    for attempt in range(max_retries + 1):
        response = gateway.complete(request, refresh=attempt > 0, use_cache=use_cache)
        try:
            return parse_step_count(response.text)
        except UnparseableTraceError as exc:
            last = exc
            logger.warning("unparseable reasoning trace (attempt %d): %r", attempt + 1, response.text[:80])
    raise UnparseableTraceError(f"reasoning trace unparseable after {max_retries + 1} attempts: {last}")


def _style_groups(records: Iterable[EvalRecord], attr: str) -> tuple[list[float], list[float]]:
    pro: list[float] = []
    nonpro: list[float] = []
    for r in records:
        value = getattr(r, attr)
        if value is None:
            continue
        (pro if Style.parse(r.requested_style) is Style.PROFESSIONAL else nonpro).append(value)
    return pro, nonpro


def _gap(records: Sequence[EvalRecord], attr: str) -> float:
    pro, nonpro = _style_groups(records, attr)
    if not pro or not nonpro:
        missing = "professional" if not pro else "non_professional"
        raise MissingStyleError(f"no {missing} records with a usable {attr}")
    return abs(fmean(pro) - fmean(nonpro))


def compute_gaps(records: Sequence[EvalRecord]) -> tuple[float, float]:
    """Return (THG, RSG) over style groups, pooling every run's records.

    Records whose reasoning trace was unparseable count toward THG only.
    """
    return _gap(records, "term_hits"), _gap(records, "reasoning_steps")


def classify_professionalism(term_hits: int, reasoning_steps: int, config: EvalConfig = EvalConfig()) -> Style:
    has_terms = term_hits >= config.th_threshold
    has_steps = reasoning_steps >= config.rs_threshold
    ok = (has_terms and has_steps) if config.combiner == "AND" else (has_terms or has_steps)
    return Style.PROFESSIONAL if ok else Style.NON_PROFESSIONAL


def pro_f1(predictions: Sequence[Style | str], gold: Sequence[Style | str]) -> float:
    if len(predictions) != len(gold):
        raise InputError(f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold labels")
    if not gold:
        raise InputError("pro_f1 needs at least one label")
    tp = fp = fn = 0
    for p, g in zip(predictions, gold):
        p_pos = Style.parse(p) is Style.PROFESSIONAL
        g_pos = Style.parse(g) is Style.PROFESSIONAL
        tp += p_pos and g_pos
        fp += p_pos and not g_pos
        fn += g_pos and not p_pos
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def reasoning_density(avg_length: float, avg_steps: float, ndigits: int | None = 3) -> float:
    if avg_length <= 0:
        raise InputError("average length must be > 0")
    rd = avg_steps / avg_length
    return round(rd, ndigits) if ndigits is not None else rd


def human_eval_stats(ratings: Sequence[int]) -> tuple[float, float]:
    """Average score and success rate (share of 4s and 5s) of 1-5 ratings."""
    if not ratings:
        raise InputError("no ratings")
    for r in ratings:
        if isinstance(r, bool) or int(r) != r or not 1 <= r <= 5:
            raise InputError(f"rating out of range 1..5: {r!r}")
    return fmean(ratings), sum(1 for r in ratings if r >= 4) / len(ratings)


def format_human_row(model: str, *columns: tuple[float, float]) -> str:
    """One "Model & AS & SR & ..." row, two decimals per cell."""
    cells = [f"{v:.2f}" for pair in columns for v in pair]
    return " | ".join([model, *cells])


def binary_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a random positive outscores a random negative; ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    if not pos or not neg:
        raise DegenerateDataError("AUC needs both classes")
    wins = 0.0
    neg_sorted = sorted(neg)
    for s in pos:
        lo = bisect.bisect_left(neg_sorted, s)
        hi = bisect.bisect_right(neg_sorted, s)
        wins += lo + 0.5 * (hi - lo)
    return wins / (len(pos) * len(neg))


@dataclass(frozen=True)
class ThresholdFit:
    th_threshold: int
    rs_threshold: int
    agreement: float
    auc: float


def fit_thresholds(
    labeled: Iterable[tuple[int, int, Style | str]],
    combiner: str = "AND",
) -> ThresholdFit:
    """Sweep integer threshold pairs over the observed ranges.

    Picks the pair with the highest agreement with the human labels; ties go
    to the lexicographically smallest (th, rs). Labels other than the two
    styles (e.g. "unsure") are dropped.
    """
    rows: list[tuple[int, int, bool]] = []
    for th, rs, label in labeled:
        if isinstance(label, str) and label.strip().lower() == "unsure":
            continue
        rows.append((int(th), int(rs), Style.parse(label) is Style.PROFESSIONAL))
    if not rows or all(y for *_, y in rows) or not any(y for *_, y in rows):
        raise DegenerateDataError("threshold fitting needs both professional and non-professional labels")

    th_values = [r[0] for r in rows]
    rs_values = [r[1] for r in rows]
    best: tuple[int, int, int] | None = None  # (correct, th, rs)
    for th in range(min(th_values), max(th_values) + 1):
        for rs in range(min(rs_values), max(rs_values) + 1):
            cfg = EvalConfig(th_threshold=th, rs_threshold=rs, combiner=combiner)
            correct = sum(
                (classify_professionalism(t, s, cfg) is Style.PROFESSIONAL) == y for t, s, y in rows
            )
            if best is None or correct > best[0]:
                best = (correct, th, rs)
    assert best is not None
    correct, th, rs = best
    cfg = EvalConfig(th_threshold=th, rs_threshold=rs, combiner=combiner)
    scores = [float(classify_professionalism(t, s, cfg) is Style.PROFESSIONAL) for t, s, _ in rows]
    auc = binary_auc(scores, [y for *_, y in rows])
    return ThresholdFit(th, rs, correct / len(rows), auc)
