"""Toolkit for building and evaluating professional / non-professional
style-switching QA models: term lexicons, instruction datasets, and the
THG / RSG / Pro F1 / BLEU / BERTScore evaluation suite."""

from .errors import (
    InputError,
    ProSwitchError,
    TransportError,
    UnsatisfiablePlanError,
)
from .lexicon import TermLexicon, TermMatchResult, build_lexicon, load_lexicon, match_terms
from .records import QARecord, QuestionType, Style
from .style_metrics import (
    EvalConfig,
    EvalRecord,
    classify_professionalism,
    compute_gaps,
    fit_thresholds,
    human_eval_stats,
    parse_step_count,
    pro_f1,
    reasoning_density,
)
from .quality_metrics import bert_score, bleu

__version__ = "0.1.0"
