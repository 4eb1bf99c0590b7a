"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 transport / model-output error,
4 unsatisfiable balance plan.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import data_prep
from .config import parse_config, split_config
from .errors import InputError, ProSwitchError
from .gateway import Gateway
from .lexicon import build_lexicon, load_lexicon, write_lexicon
from .prompts import LEVELS, LIMITS, TemplateSet
from .quality_metrics import EMBED_URL_ENV, HashedTrigramProvider, HttpEmbeddingProvider
from .records import Style, load_records, read_jsonl, save_records
from .runner import (
    REPORT_FORMATS,
    RunSettings,
    load_answers,
    load_references,
    load_report,
    render_report,
    run_evaluation,
    write_outputs,
    write_scatter_csv,
)
from .style_metrics import COMBINERS, EvalConfig, fit_thresholds, human_eval_stats

logger = logging.getLogger("proswitch")

DEFAULT_DATA_CACHE = ".proswitch_cache"


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    values = dict(args.settings_raw)
    for key in ("seed", "mock", "cache_dir", "concurrency"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    return values


def _gateway(args: argparse.Namespace, data_cache: bool) -> Gateway:
    s = args.settings
    cache_dir = s.get("cache_dir")
    if cache_dir is None and data_cache and not args.no_cache:
        cache_dir = DEFAULT_DATA_CACHE
    if args.no_cache:
        cache_dir = None
    return Gateway.from_settings(mock=s.get("mock"), cache_dir=cache_dir, concurrency=s.get("concurrency", 4))


def cmd_lexicon_build(args: argparse.Namespace) -> int:
    lexicon = build_lexicon(args.source, args.format, args.domain)
    write_lexicon(lexicon, args.output)
    print(f"{len(lexicon)} terms -> {args.output} (digest {lexicon.source_digest[:12]})")
    return 0


def cmd_data_ingest(args: argparse.Namespace) -> int:
    records = data_prep.ingest(args.input, args.source_format)
    save_records(args.output, records)
    if args.errors:
        Path(args.errors).write_text("".join(e + "\n" for e in records.errors), encoding="utf-8")
    print(f"{len(records)} records ingested, {len(records.errors)} skipped")
    return 0


def cmd_data_classify(args: argparse.Namespace) -> int:
    records = load_records(args.input)
    review = args.review or str(Path(args.output).with_suffix(".review.jsonl"))
    typed, flagged = data_prep.classify_corpus(records, _gateway(args, True), review, args.model)
    save_records(args.output, typed)
    print(f"{len(typed)} typed, {len(flagged)} sent to manual review ({review})")
    return 0


def cmd_data_augment(args: argparse.Namespace) -> int:
    records = load_records(args.input)
    gateway = _gateway(args, True)
    target = Style.parse(args.target_style)
    templates = TemplateSet.load(args.templates)
    out = [data_prep.augment(r, target, gateway, model_name=args.model, templates=templates)
           for r in records if r.style is not target]
    save_records(args.output, out)
    print(f"{len(out)} {target.value} records generated")
    return 0


def cmd_data_balance(args: argparse.Namespace) -> int:
    records = load_records(args.input)
    plan = data_prep.balance_corpus(records, args.target, seed=args.settings.get("seed", 0))
    Path(args.output).write_text(json.dumps(plan.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"quota {plan.quota} per cell, {len(plan.requests)} augmentation requests -> {args.output}")
    if args.execute:
        balanced = data_prep.execute_plan(records, plan, _gateway(args, True), args.model,
                                          TemplateSet.load(args.templates))
        save_records(args.execute, balanced)
        print(f"{len(balanced)} balanced records -> {args.execute}")
    return 0


def cmd_data_split(args: argparse.Namespace) -> int:
    records = load_records(args.input)
    train, test = data_prep.select_test_split(records, args.test_size, args.settings.get("seed", 0))
    save_records(args.train, train)
    save_records(args.test, test)
    print(f"{len(train)} train / {len(test)} test records")
    return 0


def cmd_data_emit(args: argparse.Namespace) -> int:
    records = load_records(args.input)
    n = data_prep.emit_training_set(records, args.level, args.output, TemplateSet.load(args.templates))
    print(f"{n} instruction rows -> {args.output}")
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    eval_kw, run_kw, _ = split_config(args.settings_raw)
    for key in ("runs", "th_threshold", "rs_threshold", "combiner", "length_unit"):
        if getattr(args, key, None) is not None:
            eval_kw[key] = getattr(args, key)
    for key in ("model_name", "dataset_name", "level", "model_profile", "judge_model", "quality_styles"):
        if getattr(args, key, None) is not None:
            run_kw[key] = getattr(args, key)
    config = EvalConfig(**eval_kw)

    questions = load_records(args.questions)
    lexicon = load_lexicon(args.lexicon)
    answers = load_answers(args.answers) if args.answers else None
    references = load_references(args.references) if args.references else None

    embedder = None
    if references is not None:
        kind = args.embedder or run_kw.get("embedder") or "hashed"
        run_kw["embedder"] = kind
        if kind == "http":
            embedder = HttpEmbeddingProvider()
        else:
            logger.warning("BERTScore uses the offline hashed-trigram embedder; set --embedder http "
                           "and %s for model embeddings", EMBED_URL_ENV)
            embedder = HashedTrigramProvider()
    settings = RunSettings(**run_kw)

    needs_gateway = answers is None or any(a.get("steps") is None for a in answers.values())
    gateway = _gateway(args, False) if needs_gateway else None
    report, records = run_evaluation(questions, lexicon, config, settings, gateway, answers, references,
                                     embedder, TemplateSet.load(args.templates))
    report_path, dump_path = write_outputs(report, records, args.out_dir)
    if args.scatter_csv:
        write_scatter_csv(records, args.scatter_csv)
    print(render_report(report, "table-text"), end="")
    print(f"report -> {report_path}; per-record dump -> {dump_path}")
    return 0


def cmd_eval_report(args: argparse.Namespace) -> int:
    reports = [r for path in args.reports for r in load_report(path)]
    text = render_report(reports, args.format, args.output)
    if not args.output:
        sys.stdout.write(text)
    return 0


def _read_labeled(path: str) -> list[tuple[int, int, str]]:
    p = Path(path)
    if p.suffix == ".jsonl":
        return [(int(d["term_hits"]), int(d["reasoning_steps"]), d["label"]) for d in read_jsonl(p)]
    with open(p, encoding="utf-8", newline="") as fh:
        return [(int(row["term_hits"]), int(row["reasoning_steps"]), row["label"]) for row in csv.DictReader(fh)]


def cmd_fit_thresholds(args: argparse.Namespace) -> int:
    try:
        rows = _read_labeled(args.input)
    except (KeyError, ValueError) as exc:
        raise InputError(f"{args.input}: expected term_hits, reasoning_steps, label columns ({exc})") from None
    fit = fit_thresholds(rows, args.combiner)
    print(json.dumps({"th_threshold": fit.th_threshold, "rs_threshold": fit.rs_threshold,
                      "agreement": round(fit.agreement, 4), "auc": round(fit.auc, 4)}))
    return 0


def cmd_human_stats(args: argparse.Namespace) -> int:
    text = Path(args.input).read_text(encoding="utf-8").strip()
    try:
        ratings = json.loads(text) if text.startswith("[") else [int(x) for x in text.split()]
    except ValueError as exc:
        raise InputError(f"{args.input}: ratings must be integers ({exc})") from None
    avg, sr = human_eval_stats(ratings)
    print(json.dumps({"model": args.model, "n": len(ratings), "AS": round(avg, 2), "SR": round(sr, 2)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proswitch", description="Professional/non-professional style "
                                     "data preparation and evaluation toolkit")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mock", help="JSON mock script (prompt substring -> response)")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--no-cache", action="store_true", help="disable the response cache")
    parser.add_argument("--concurrency", type=int, help="max in-flight model calls")
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    lex = groups.add_parser("lexicon").add_subparsers(dest="cmd", required=True)
    p = lex.add_parser("build", help="build a term lexicon cache file")
    p.add_argument("source")
    p.add_argument("--format", choices=("mesh-xml", "plain-list"), required=True)
    p.add_argument("--domain")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_lexicon_build)

    data = groups.add_parser("data").add_subparsers(dest="cmd", required=True)
    p = data.add_parser("ingest")
    p.add_argument("input")
    p.add_argument("--source-format", choices=data_prep.SOURCE_FORMATS, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--errors", help="write skipped-row messages here")
    p.set_defaults(func=cmd_data_ingest)

    p = data.add_parser("classify")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--review", help="manual-review JSONL (default: output path with a .review.jsonl suffix)")
    p.add_argument("--model", default="gpt-4")
    p.set_defaults(func=cmd_data_classify)

    p = data.add_parser("augment")
    p.add_argument("input")
    p.add_argument("--target-style", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model", default="gpt-4")
    p.add_argument("--templates")
    p.set_defaults(func=cmd_data_augment)

    p = data.add_parser("balance")
    p.add_argument("input")
    p.add_argument("--target", type=int, required=True, help="total records, multiple of 8")
    p.add_argument("-o", "--output", required=True, help="balance plan JSON")
    p.add_argument("--execute", metavar="OUT", help="run the plan and write balanced records")
    p.add_argument("--model", default="gpt-4")
    p.add_argument("--templates")
    p.set_defaults(func=cmd_data_balance)

    p = data.add_parser("split")
    p.add_argument("input")
    p.add_argument("--test-size", type=int, default=40)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_data_split)

    p = data.add_parser("emit")
    p.add_argument("input")
    p.add_argument("--level", choices=LEVELS, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--templates")
    p.set_defaults(func=cmd_data_emit)

    ev = groups.add_parser("eval").add_subparsers(dest="cmd", required=True)
    p = ev.add_parser("run")
    p.add_argument("--questions", required=True, help="question records (JSONL)")
    p.add_argument("--lexicon", required=True, help="lexicon cache file or plain term list")
    p.add_argument("--answers", help="pre-generated answers (JSONL); default: generate via gateway")
    p.add_argument("--references", help="reference answers (JSONL)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--judge-model", dest="judge_model")
    p.add_argument("--level", choices=LEVELS)
    p.add_argument("--profile", dest="model_profile", choices=sorted(LIMITS))
    p.add_argument("--runs", type=int)
    p.add_argument("--th-threshold", dest="th_threshold", type=int)
    p.add_argument("--rs-threshold", dest="rs_threshold", type=int)
    p.add_argument("--combiner", choices=COMBINERS)
    p.add_argument("--length-unit", dest="length_unit", choices=("characters", "whitespace_tokens"))
    p.add_argument("--quality-styles", dest="quality_styles", choices=("professional", "both"))
    p.add_argument("--embedder", choices=("hashed", "http"))
    p.add_argument("--templates")
    p.add_argument("--scatter-csv", help="also write term-hit/step points for plotting")
    p.set_defaults(func=cmd_eval_run)

    p = ev.add_parser("report")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=REPORT_FORMATS, default="table-text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval_report)

    p = groups.add_parser("fit-thresholds", help="fit TH/RS thresholds to human labels (CSV or JSONL)")
    p.add_argument("input")
    p.add_argument("--combiner", choices=COMBINERS, default="AND")
    p.set_defaults(func=cmd_fit_thresholds)

    p = groups.add_parser("human-stats", help="average score and success rate of 1-5 ratings")
    p.add_argument("input")
    p.add_argument("--model", default="model")
    p.set_defaults(func=cmd_human_stats)
    return parser


def _configure_logging(verbose: bool) -> None:
    # one handler on the package logger, rebound to the current stderr per call
    for old in [h for h in logger.handlers if getattr(h, "_proswitch_cli", False)]:
        logger.removeHandler(old)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._proswitch_cli = True  # type: ignore[attr-defined]
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        args.settings_raw = parse_config(args.config) if args.config else {}
        args.settings = _settings(args)
        return args.func(args)
    except ProSwitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
