"""Corpus loading, Opinion-section isolation and overlapping token chunking."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Protocol

from legalkg.errors import CorpusEmptyError, InvalidConfigError

log = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 300
DEFAULT_OVERLAP = 50


@dataclass(frozen=True)
class CaseDocument:
    case_id: str
    raw_text: str
    opinion_text: str = ""
    source_path: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.case_id:
            raise ValueError("case_id must be non-empty")
        if not self.opinion_text:
            object.__setattr__(self, "opinion_text", self.raw_text)

    @property
    def word_count(self) -> int:
        return len(self.opinion_text.split())


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    token_span: tuple[int, int]
    text: str
    case_id: str = ""

    @property
    def start(self) -> int:
        return self.token_span[0]

    @property
    def end(self) -> int:
        return self.token_span[1]

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "chunk_id": self.chunk_id,
            "start": self.start,
            "end": self.end,
            "text": self.text,
        }


@dataclass
class LoadError:
    path: str
    message: str


# --------------------------------------------------------------------------
# corpus

def read_manifest(path: str | Path) -> dict[str, str]:
    """Parse ``filename = case_id`` lines (``#`` comments, blank lines ignored)."""
    mapping = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise InvalidConfigError(f"{path}:{lineno}: expected 'filename = case_id'")
            key, value = parts
        mapping[key.strip()] = value.strip()
    return mapping


def load_corpus(
    directory: str | Path,
    manifest: str | Path | None = None,
    errors: list[LoadError] | None = None,
    pattern: str = "*.txt",
) -> list[CaseDocument]:
    """Load one :class:`CaseDocument` per plain-text file, sorted by filename.

    Files that are empty or cannot be read or decoded are skipped and appended to
    ``errors`` (when given) instead of aborting the load.
    """
    directory = Path(directory)
    names = read_manifest(manifest) if manifest else {}
    paths = sorted(p for p in directory.glob(pattern) if p.is_file())
    if not paths:
        raise CorpusEmptyError(f"no {pattern} files in {directory}")

    docs: list[CaseDocument] = []
    seen: dict[str, Path] = {}
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipping %s: %s", path, exc)
            if errors is not None:
                errors.append(LoadError(str(path), str(exc)))
            continue
        if not text.strip():
            log.warning("skipping %s: empty file", path)
            if errors is not None:
                errors.append(LoadError(str(path), "empty file"))
            continue
        case_id = names.get(path.name, names.get(path.stem, path.stem))
        if case_id in seen:
            raise InvalidConfigError(f"duplicate case_id {case_id!r}: {seen[case_id]} and {path}")
        seen[case_id] = path
        docs.append(CaseDocument(case_id=case_id, raw_text=text, source_path=str(path)))
    if not docs:
        raise CorpusEmptyError(f"no readable files in {directory}")
    return docs


# --------------------------------------------------------------------------
# opinion section

@dataclass(frozen=True)
class SectionMarkers:
    start: tuple[str, ...] = ("Opinion", "Memorandum Opinion")
    end: tuple[str, ...] = (
        "Footnotes",
        "Dissent",
        "Concurrence",
        "Appendix",
        "Judgment",
        "Conclusion of Dissent",
    )

    def _pattern(self, headings: Iterable[str]) -> re.Pattern:
        alts = "|".join(re.escape(h) for h in headings)
        # standalone heading line, optional trailing colon or period
        return re.compile(rf"^[ \t]*(?:{alts})[ \t]*[:.]?[ \t]*\r?$", re.IGNORECASE | re.MULTILINE)

    @property
    def start_re(self) -> re.Pattern:
        return self._pattern(self.start)

    @property
    def end_re(self) -> re.Pattern:
        return self._pattern(self.end)


def extract_opinion(doc: CaseDocument, markers: SectionMarkers = SectionMarkers()) -> CaseDocument:
    """Return ``doc`` with ``opinion_text`` cut to the Opinion section.

    Without a start heading the whole text passes through and a warning is
    attached to the document.
    """
    text = doc.raw_text
    m = markers.start_re.search(text)
    if m is None:
        msg = "no Opinion heading found; using full text"
        log.warning("%s: %s", doc.case_id, msg)
        return replace(doc, opinion_text=text, warnings=doc.warnings + (msg,))
    body_start = m.end()
    end = markers.end_re.search(text, body_start)
    body_end = end.start() if end else len(text)
    body = text[body_start:body_end].strip()
    if not body:
        msg = "Opinion heading found but section is empty; using full text"
        log.warning("%s: %s", doc.case_id, msg)
        return replace(doc, opinion_text=text, warnings=doc.warnings + (msg,))
    return replace(doc, opinion_text=body)


# --------------------------------------------------------------------------
# chunking

class Tokenizer(Protocol):
    def spans(self, text: str) -> list[tuple[int, int]]:
        """Character ``(start, end)`` offsets of each token, in order."""


class WhitespaceTokenizer:
    """Tokens are maximal runs of non-whitespace characters."""

    _token = re.compile(r"\S+")

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self._token.finditer(text)]


def chunk_spans(n_tokens: int, chunk_size: int, overlap: int) -> list[tuple[int, int]]:
    if chunk_size < 1 or not 0 <= overlap < chunk_size:
        raise InvalidConfigError(
            f"need chunk_size >= 1 and 0 <= overlap < chunk_size, got {chunk_size=} {overlap=}"
        )
    stride = chunk_size - overlap
    spans = []
    start = 0
    while start < n_tokens:
        end = min(start + chunk_size, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return spans


def chunk_text(
    text: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
    case_id: str = "",
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    tok = tokenizer or WhitespaceTokenizer()
    offsets = tok.spans(text)
    chunks = []
    for i, (start, end) in enumerate(chunk_spans(len(offsets), chunk_size, overlap)):
        lo, hi = offsets[start][0], offsets[end - 1][1]
        chunks.append(Chunk(chunk_id=i, token_span=(start, end), text=text[lo:hi], case_id=case_id))
    return chunks


def dump_chunks(chunks: Iterable[Chunk], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_chunks(path: str | Path) -> list[Chunk]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            r = json.loads(line)
            out.append(Chunk(r["chunk_id"], (r["start"], r["end"]), r["text"], r["case_id"]))
    return out
