"""Domain-term lexicons and phrase-level term matching.

A lexicon is built either from a MeSH-style XML file (the text of every
``QualifierName`` element) or from a plain UTF-8 list with one term per line.
Matching runs an Aho-Corasick automaton over the normalized answer text and
keeps word-boundary-aligned hits, resolving overlaps longest-first, then
leftmost.

Cache file format (``write_lexicon`` / ``load_lexicon``)::

    # proswitch-lexicon v1
    # domain: <domain_id>
    # digest: <sha256 hex of the original source bytes>
    <term>
    <term>
    ...

Terms are written sorted, one per line, UTF-8, LF line endings.
"""

from __future__ import annotations

import hashlib
import io
import logging
import unicodedata
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyLexiconError, InputError, LexiconParseError

logger = logging.getLogger(__name__)

CACHE_HEADER = "# proswitch-lexicon v1"
FORMATS = ("mesh-xml", "plain-list")


def normalize_text(text: str) -> str:
    """NFC-compose and lowercase. Applied to answers before matching."""
    return unicodedata.normalize("NFC", text).lower()


def normalize_term(term: str) -> str:
    return " ".join(normalize_text(term).split())


class TermAutomaton:
    """Character-level Aho-Corasick automaton over a fixed pattern set.

    The pattern set is frozen at construction; there is no ``add`` after build.
    """

    def __init__(self, patterns: Iterable[str]) -> None:
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        # pattern ending exactly at this node, if any
        self._term: list[str | None] = [None]
        # nearest node on the failure chain that ends a pattern
        self._dict_link: list[int] = [0]
        self._patterns: frozenset[str] = frozenset(patterns)
        for pattern in sorted(self._patterns):
            self._insert(pattern)
        self._link()

    @property
    def patterns(self) -> frozenset[str]:
        return self._patterns

    def _insert(self, pattern: str) -> None:
        if not pattern:
            raise ValueError("empty pattern")
        node = 0
        for ch in pattern:
            nxt = self._goto[node].get(ch)
            if nxt is None:
                nxt = len(self._goto)
                self._goto.append({})
                self._fail.append(0)
                self._term.append(None)
                self._dict_link.append(0)
                self._goto[node][ch] = nxt
            node = nxt
        self._term[node] = pattern

    def _link(self) -> None:
        queue: deque[int] = deque()
        for child in self._goto[0].values():
            queue.append(child)
        while queue:
            node = queue.popleft()
            for ch, child in self._goto[node].items():
                queue.append(child)
                f = self._fail[node]
                while f and ch not in self._goto[f]:
                    f = self._fail[f]
                target = self._goto[f].get(ch, 0)
                self._fail[child] = target if target != child else 0
                fc = self._fail[child]
                self._dict_link[child] = fc if self._term[fc] is not None else self._dict_link[fc]

    def iter_matches(self, text: str) -> Iterator[tuple[int, int, str]]:
        """Yield every (start, end, pattern) occurrence, overlaps included."""
        goto, fail, term, dict_link = self._goto, self._fail, self._term, self._dict_link
        node = 0
        for i, ch in enumerate(text):
            while node and ch not in goto[node]:
                node = fail[node]
            node = goto[node].get(ch, 0)
            out = node if term[node] is not None else dict_link[node]
            while out:
                pattern = term[out]
                end = i + 1
                yield end - len(pattern), end, pattern  # type: ignore[arg-type]
                out = dict_link[out]


@dataclass(frozen=True)
class TermLexicon:
    domain_id: str
    terms: frozenset[str]
    matcher: TermAutomaton = field(repr=False, compare=False)
    source_digest: str

    @classmethod
    def from_terms(
        cls, terms: Iterable[str], domain_id: str = "custom", source_digest: str | None = None
    ) -> "TermLexicon":
        normalized = frozenset(t for t in (normalize_term(x) for x in terms) if t)
        if not normalized:
            raise EmptyLexiconError(f"lexicon {domain_id!r} has no terms")
        if source_digest is None:
            joined = "\n".join(sorted(normalized)).encode("utf-8")
            source_digest = hashlib.sha256(joined).hexdigest()
        return cls(domain_id, normalized, TermAutomaton(normalized), source_digest)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: object) -> bool:
        return isinstance(term, str) and normalize_term(term) in self.terms


@dataclass(frozen=True)
class TermMatchResult:
    hits: tuple[tuple[str, int], ...]

    @property
    def hit_count(self) -> int:
        return len(self.hits)


def _extract_qualifier_names(data: bytes) -> list[str]:
    names: list[str] = []
    try:
        for _event, elem in ET.iterparse(io.BytesIO(data), events=("end",)):
            tag = elem.tag.rsplit("}", 1)[-1]
            if tag == "QualifierName":
                names.append("".join(elem.itertext()))
            elif tag == "DescriptorRecord":
                elem.clear()
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise LexiconParseError(f"malformed XML: {exc}", line=line) from exc
    return names


def build_lexicon(source_path: str | Path, format: str, domain_id: str | None = None) -> TermLexicon:
    """Build a lexicon from a MeSH-style XML file or a plain term list.

    Only ``QualifierName`` text is taken from XML; descriptor names are ignored.
    """
    path = Path(source_path)
    if format not in FORMATS:
        raise InputError(f"unknown lexicon format {format!r}; expected one of {FORMATS}")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    digest = hashlib.sha256(data).hexdigest()
    domain_id = domain_id or path.stem

    if format == "mesh-xml":
        raw_terms = _extract_qualifier_names(data)
    else:
        raw_terms = data.decode("utf-8-sig").splitlines()

    terms = [t for t in (normalize_term(x) for x in raw_terms) if t]
    if not terms:
        raise EmptyLexiconError(f"no terms extracted from {path}")
    lexicon = TermLexicon.from_terms(terms, domain_id=domain_id, source_digest=digest)
    logger.info("built lexicon %s: %d terms from %s", domain_id, len(lexicon), path)
    return lexicon


def write_lexicon(lexicon: TermLexicon, path: str | Path) -> None:
    lines = [CACHE_HEADER, f"# domain: {lexicon.domain_id}", f"# digest: {lexicon.source_digest}"]
    lines.extend(sorted(lexicon.terms))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_lexicon(path: str | Path) -> TermLexicon:
    """Load a cache file, or fall back to reading ``path`` as a plain list."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    lines = text.splitlines()
    if not lines or lines[0] != CACHE_HEADER:
        return build_lexicon(path, "plain-list")
    meta: dict[str, str] = {}
    terms: list[str] = []
    for line in lines[1:]:
        if line.startswith("# ") and ":" in line and not terms:
            key, _, value = line[2:].partition(":")
            meta[key.strip()] = value.strip()
        elif line:
            terms.append(line)
    return TermLexicon.from_terms(
        terms, domain_id=meta.get("domain", path.stem), source_digest=meta.get("digest")
    )


def _byte_offsets(text: str) -> list[int] | None:
    if text.isascii():
        return None
    offsets = [0]
    total = 0
    for ch in text:
        total += len(ch.encode("utf-8"))
        offsets.append(total)
    return offsets


def match_terms(lexicon: TermLexicon, text: str) -> TermMatchResult:
    """Count word-boundary-aligned, non-overlapping term occurrences.

    Matching is case-insensitive and exact after normalization; whitespace in
    ``text`` is not collapsed, so a multi-word term must appear with single
    spaces. Offsets are UTF-8 byte offsets into the normalized text.
    """
    if not lexicon.terms:
        raise EmptyLexiconError("cannot match against an empty lexicon")
    norm = normalize_text(text)
    if not norm:
        return TermMatchResult(())
    n = len(norm)

    candidates = []
    for start, end, term in lexicon.matcher.iter_matches(norm):
        if start > 0 and norm[start - 1].isalnum():
            continue
        if end < n and norm[end].isalnum():
            continue
        candidates.append((start, end, term))
    candidates.sort(key=lambda c: (c[0] - c[1], c[0]))

    taken = bytearray(n)
    chosen = []
    for start, end, term in candidates:
        if any(taken[start:end]):
            continue
        taken[start:end] = b"\x01" * (end - start)
        chosen.append((start, term))
    chosen.sort()

    offsets = _byte_offsets(norm)
    if offsets is None:
        hits = tuple((term, start) for start, term in chosen)
    else:
        hits = tuple((term, offsets[start]) for start, term in chosen)
    return TermMatchResult(hits)
