"""Prompt template files: ``### NAME`` section headers, fenced document slot."""

from __future__ import annotations

import re
from pathlib import Path

from legalkg.errors import TemplateInvalidError

PLACEHOLDER = "{{DOCUMENT}}"

# The document is fenced on insertion so responses and mocks can locate it.
INPUT_OPEN = "<<<INPUT>>>"
INPUT_CLOSE = "<<<END INPUT>>>"
OUTPUT_OPEN = "<<<RESOLVED>>>"
OUTPUT_CLOSE = "<<<END RESOLVED>>>"

_HEADER = re.compile(r"^###[ \t]+([A-Z][A-Z_ ]*?)[ \t]*$", re.MULTILINE)
EXAMPLE_SEP = re.compile(r"^-{4,}[ \t]*$", re.MULTILINE)


def parse_sections(text: str) -> dict[str, str]:
    """Split a template file into ``{SECTION_NAME: body}`` in file order."""
    sections: dict[str, str] = {}
    matches = list(_HEADER.finditer(text))
    if not matches:
        raise TemplateInvalidError("template has no '### SECTION' headers")
    for m, nxt in zip(matches, matches[1:] + [None]):
        name = m.group(1).strip().replace(" ", "_")
        if name in sections:
            raise TemplateInvalidError(f"duplicate section {name}")
        body = text[m.end(): nxt.start() if nxt else len(text)]
        sections[name] = body.strip("\n").rstrip()
    return sections


def read_sections(path: str | Path) -> dict[str, str]:
    return parse_sections(Path(path).read_text(encoding="utf-8"))


def parse_examples(body: str) -> list[tuple[str, str]]:
    """Examples are ``Input:`` / ``Output:`` blocks separated by ``----`` lines."""
    pairs = []
    for block in EXAMPLE_SEP.split(body):
        block = block.strip()
        if not block:
            continue
        m = re.match(r"(?s)Input:\s*\n(.*?)\n\s*Output:\s*\n(.*)", block)
        if not m:
            raise TemplateInvalidError(f"example block lacks Input:/Output: parts: {block[:60]!r}")
        pairs.append((m.group(1).strip(), m.group(2).strip()))
    return pairs


def format_examples(pairs: list[tuple[str, str]]) -> str:
    return "\n----\n".join(f"Input:\n{a}\nOutput:\n{b}" for a, b in pairs)


def fence_document(document: str) -> str:
    return f"{INPUT_OPEN}\n{document}\n{INPUT_CLOSE}"


def insert_document(prompt: str, document: str) -> str:
    n = prompt.count(PLACEHOLDER)
    if n != 1:
        raise TemplateInvalidError(f"expected exactly one {PLACEHOLDER} placeholder, found {n}")
    head, tail = prompt.split(PLACEHOLDER)
    return head + fence_document(document) + tail


def between(text: str, open_: str, close: str) -> str | None:
    """Text strictly between the first ``open_`` line and the next ``close``."""
    i = text.find(open_)
    if i < 0:
        return None
    start = i + len(open_)
    j = text.find(close, start)
    if j < 0:
        return None
    body = text[start:j]
    # exactly one newline each side is framing; anything else is content
    if body.startswith("\n"):
        body = body[1:]
    if body.endswith("\n"):
        body = body[:-1]
    return body


def extract_input(prompt: str) -> str | None:
    """The fenced document inside a rendered prompt (last fence wins).

    Few-shot examples never carry fences, so the last fence is the payload.
    """
    i = prompt.rfind(INPUT_OPEN)
    if i < 0:
        return None
    return between(prompt[i:], INPUT_OPEN, INPUT_CLOSE)
