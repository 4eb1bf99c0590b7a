"""``key = value`` config files.

Blank lines and ``#`` comments are ignored. Recognized keys are the fields
of :class:`~proswitch.style_metrics.EvalConfig` and
:class:`~proswitch.runner.RunSettings`, plus ``seed``, ``mock``,
``cache_dir`` and ``concurrency``. Command-line flags win over the file.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .errors import InputError
from .runner import RunSettings
from .style_metrics import EvalConfig

GLOBAL_KEYS = {"seed": int, "mock": str, "cache_dir": str, "concurrency": int}


def _coerce(raw: str, kind: Any) -> Any:
    if kind is bool or kind == "bool":
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise InputError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def _field_types(cls: type) -> dict[str, Any]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def parse_config(path: str | Path) -> dict[str, Any]:
    known = {**GLOBAL_KEYS, **_field_types(EvalConfig), **_field_types(RunSettings)}
    known.pop("positive_class", None)
    values: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise InputError(f"{path}:{lineno}: expected key = value")
        if key not in known:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(raw, known[key])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def split_config(values: dict[str, Any]) -> tuple[dict[str, Any], dict[str, Any], dict[str, Any]]:
    """Partition parsed values into (EvalConfig kwargs, RunSettings kwargs, globals)."""
    eval_keys = set(_field_types(EvalConfig))
    run_keys = set(_field_types(RunSettings))
    ev = {k: v for k, v in values.items() if k in eval_keys}
    run = {k: v for k, v in values.items() if k in run_keys}
    glob = {k: v for k, v in values.items() if k in GLOBAL_KEYS}
    return ev, run, glob
