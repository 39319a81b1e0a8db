"""Type-aware sequential coreference resolution.

The document goes through seven model passes, one per entity type in the
fixed order Person -> Location -> Routes -> Organization -> Means of
Transportation -> Means of Communication -> Smuggled Items. Each pass
rewrites the whole text so that mentions of one type converge on a single
canonical surface form, and its output is the input of the next pass.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from legalkg import templates
from legalkg.errors import InvalidConfigError, PassFailureError, TemplateInvalidError
from legalkg.gateway import DEFAULT_MODEL, CompletionRequest, Gateway
from legalkg.schema import ENTITY_TYPES, EntityType

log = logging.getLogger(__name__)

POLICIES = ("keep", "fail")
DEFAULT_CONTEXT_BUDGET = 6000  # whitespace tokens per coref request
SHRINK_WARN_RATIO = 0.5


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CorefPromptTemplate:
    entity_type: EntityType
    persona: str
    task_description: str
    context_block: str
    resolution_rules: tuple[str, ...]
    few_shot_examples: tuple[tuple[str, str], ...]
    output_instructions: str

    def validate(self) -> None:
        parts = {
            "persona": self.persona,
            "task_description": self.task_description,
            "context_block": self.context_block,
            "output_instructions": self.output_instructions,
        }
        empty = [k for k, v in parts.items() if not v.strip()]
        if not self.resolution_rules:
            empty.append("resolution_rules")
        if not self.few_shot_examples:
            empty.append("few_shot_examples")
        if empty:
            raise TemplateInvalidError(f"{self.entity_type.value} template: empty {', '.join(empty)}")
        n = self._skeleton().count(templates.PLACEHOLDER)
        if n != 1:
            raise TemplateInvalidError(
                f"{self.entity_type.value} template: expected one {templates.PLACEHOLDER}, found {n}"
            )

    def _skeleton(self) -> str:
        rules = "\n".join(f"- {r}" for r in self.resolution_rules)
        return "\n\n".join(
            [
                f"# PERSONA\n{self.persona}",
                f"# TASK\n{self.task_description}",
                f"# CONTEXT\n{self.context_block}",
                f"# RULES\n{rules}",
                f"# EXAMPLES\n{templates.format_examples(list(self.few_shot_examples))}",
                f"# OUTPUT\n{self.output_instructions}",
            ]
        )

    @classmethod
    def from_sections(cls, entity_type: EntityType, sections: Mapping[str, str]) -> "CorefPromptTemplate":
        required = ("PERSONA", "TASK", "CONTEXT", "RULES", "EXAMPLES", "OUTPUT")
        missing = [s for s in required if s not in sections]
        if missing:
            raise TemplateInvalidError(f"{entity_type.value} template missing sections {missing}")
        rules = tuple(
            re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
            for line in sections["RULES"].splitlines()
            if line.strip()
        )
        return cls(
            entity_type=entity_type,
            persona=sections["PERSONA"],
            task_description=sections["TASK"],
            context_block=sections["CONTEXT"],
            resolution_rules=rules,
            few_shot_examples=tuple(templates.parse_examples(sections["EXAMPLES"])),
            output_instructions=sections["OUTPUT"],
        )

    @classmethod
    def from_file(cls, path: str | Path, entity_type: EntityType | None = None) -> "CorefPromptTemplate":
        path = Path(path)
        etype = entity_type or EntityType.parse(path.stem)
        if etype is None:
            raise TemplateInvalidError(f"cannot infer entity type from {path.name}")
        return cls.from_sections(etype, templates.read_sections(path))


def render_prompt(template: CorefPromptTemplate, document: str) -> str:
    template.validate()
    return templates.insert_document(template._skeleton(), document)


def default_templates() -> dict[EntityType, CorefPromptTemplate]:
    root = resources.files("legalkg").joinpath("prompts", "coref")
    out = {}
    for t in ENTITY_TYPES:
        text = root.joinpath(f"{t.value}.txt").read_text("utf-8")
        out[t] = CorefPromptTemplate.from_sections(t, templates.parse_sections(text))
    return out


def load_templates(directory: str | Path) -> dict[EntityType, CorefPromptTemplate]:
    """Read ``<Type>.txt`` for each of the seven types from ``directory``."""
    directory = Path(directory)
    return {t: CorefPromptTemplate.from_file(directory / f"{t.value}.txt", t) for t in ENTITY_TYPES}


def parse_resolved(response: str) -> tuple[str, str | None]:
    """Take the span between output sentinels; fall back to the whole reply."""
    body = templates.between(response, templates.OUTPUT_OPEN, templates.OUTPUT_CLOSE)
    if body is not None:
        return body, None
    return response.strip(), "response lacks output sentinels; using full response"


def split_for_budget(text: str, budget: int) -> list[str]:
    """Greedily pack paragraphs into segments of at most ``budget`` tokens.

    A single paragraph longer than the budget becomes its own segment.
    """
    paragraphs = [p for p in re.split(r"\n[ \t]*\n", text) if p.strip()]
    segments: list[list[str]] = []
    size = 0
    for p in paragraphs:
        n = len(p.split())
        if segments and size + n <= budget:
            segments[-1].append(p)
            size += n
        else:
            segments.append([p])
            size = n
    return ["\n\n".join(s) for s in segments]


def _complete_once(text, entity_type, template, gateway, model_name, max_output) -> tuple[str, list[str]]:
    prompt = render_prompt(template, text)
    resp = gateway.complete(
        CompletionRequest(
            prompt=prompt,
            max_output=max_output,
            model_name=model_name,
            stage_tag=f"coref:{entity_type.value}",
            terminator=templates.OUTPUT_CLOSE,
        )
    )
    out, warn = parse_resolved(resp.text)
    return out, [warn] if warn else []


def resolve_type(
    text: str,
    entity_type: EntityType,
    template: CorefPromptTemplate,
    gateway: Gateway,
    policy: str = "keep",
    model_name: str = DEFAULT_MODEL,
    max_output: int = 8192,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    warnings: list[str] | None = None,
) -> str:
    """One coreference pass for ``entity_type``; returns the rewritten text.

    An empty model reply is a pass failure: with ``policy="keep"`` the input
    text is returned unchanged (and a warning recorded), with ``"fail"``
    :class:`PassFailureError` is raised.
    """
    if template.entity_type is not entity_type:
        raise InvalidConfigError(f"template is for {template.entity_type.value}, pass is {entity_type.value}")
    if policy not in POLICIES:
        raise InvalidConfigError(f"policy must be one of {POLICIES}")
    warns: list[str] = []

    if len(text.split()) > context_budget:
        segments = split_for_budget(text, context_budget)
        warns.append(f"{entity_type.value}: text exceeds {context_budget} tokens; resolved in {len(segments)} segments")
    else:
        segments = [text]

    outputs = []
    for seg in segments:
        out, w = _complete_once(seg, entity_type, template, gateway, model_name, max_output)
        warns.extend(f"{entity_type.value}: {x}" for x in w)
        if not out.strip():
            msg = f"{entity_type.value}: empty model output"
            if policy == "fail":
                raise PassFailureError(msg)
            warns.append(msg + "; keeping previous text")
            out = seg
        outputs.append(out)
    result = outputs[0] if len(outputs) == 1 else "\n\n".join(outputs)

    if len(result) < SHRINK_WARN_RATIO * len(text):
        warns.append(f"{entity_type.value}: output is under half the input length ({len(result)}/{len(text)} chars)")
    for w in warns:
        log.warning(w)
    if warnings is not None:
        warnings.extend(warns)
    return result


@dataclass(frozen=True)
class CorefPass:
    entity_type: EntityType
    input_digest: str
    output_digest: str
    output_path: str = ""


@dataclass
class CorefTrace:
    case_id: str
    passes: list[CorefPass] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def chain_ok(self) -> bool:
        return all(b.input_digest == a.output_digest for a, b in zip(self.passes, self.passes[1:]))

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "passes": [
                {
                    "entity_type": p.entity_type.value,
                    "input_digest": p.input_digest,
                    "output_digest": p.output_digest,
                    "output_path": p.output_path,
                }
                for p in self.passes
            ],
            "warnings": list(self.warnings),
        }


def pass_filename(case_id: str, k: int, entity_type: EntityType) -> str:
    return f"{case_id}.pass{k}.{entity_type.value}.txt"


def resolve_document(
    text: str,
    templates_by_type: Mapping[EntityType, CorefPromptTemplate],
    gateway: Gateway,
    case_id: str = "",
    out_dir: str | Path | None = None,
    **pass_options,
) -> tuple[str, CorefTrace]:
    """Run all seven passes in canonical order, threading each output forward.

    When ``out_dir`` is given every intermediate text is written there as
    ``<case_id>.pass<k>.<Type>.txt``.
    """
    missing = [t.value for t in ENTITY_TYPES if t not in templates_by_type]
    if missing:
        raise InvalidConfigError(f"missing coref templates for {missing}")
    trace = CorefTrace(case_id=case_id)
    current = text
    for k, etype in enumerate(ENTITY_TYPES, 1):
        before = text_digest(current)
        current = resolve_type(current, etype, templates_by_type[etype], gateway,
                               warnings=trace.warnings, **pass_options)
        path = ""
        if out_dir is not None:
            p = Path(out_dir) / pass_filename(case_id or "doc", k, etype)
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(current.encode("utf-8"))
            path = str(p)
        trace.passes.append(CorefPass(etype, before, text_digest(current), path))
    return current, trace
