"""Template-driven benchmark generation over a property graph.

A template file (YAML) declares a domain schema and a list of templates. Each
template carries a question text with ``{slot}`` placeholders, a selection
query whose result columns bind those slots to entities, and, for sp* and
nested sp* templates, an answer query parameterized by ``$slot`` that yields
the gold answer names.

Generation is deterministic under a seed: the requested total is spread
evenly over templates in file order, and each template draws rows from its
selection result with its own seeded generator.
"""

from __future__ import annotations

import json
import os
import random
import string
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence, Union

import yaml

from . import prompts
from .cypher import CypherSyntaxError, SchemaViolation, parse, validate
from .cypher.ast import CypherQuery, Param
from .evalkit import normalize
from .executor import EntityRef, ExecLimits, ExecutionError, execute
from .graph_store import GraphSchema, PropertyGraph
from .llm import LLMError, LLMGateway
from .taxonomy import SPX, Nested, QuestionPattern, parse_pattern

TEMPLATE_DIR = str(resources.files("kgplan") / "data" / "templates")
DOMAINS = ("academia", "literature", "ecommerce")
DEFAULT_PARAPHRASES = 4
MAX_HOPS = 5


class TemplateError(ValueError):
    def __init__(self, message: str, template_id: Optional[str] = None,
                 violations: Sequence[SchemaViolation] = ()):
        self.template_id = template_id
        self.violations = list(violations)
        where = f"template {template_id!r}: " if template_id else ""
        detail = "".join(f"\n  - {v.message}" for v in self.violations)
        super().__init__(where + message + detail)


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    pattern: QuestionPattern
    text: str
    selection_query: CypherQuery
    answer_query: Optional[CypherQuery] = None
    domain: str = ""

    @property
    def slots(self) -> tuple[str, ...]:
        return template_slots(self.text)


@dataclass(frozen=True)
class TemplateSet:
    domain: str
    schema: GraphSchema
    templates: tuple[QuestionTemplate, ...]

    def by_id(self) -> dict[str, QuestionTemplate]:
        return {t.id: t for t in self.templates}


def template_slots(text: str) -> tuple[str, ...]:
    names = [f for _, f, _, _ in string.Formatter().parse(text) if f is not None]
    if any(not n.isidentifier() for n in names):
        raise ValueError(f"slots must be named identifiers in {text!r}")
    return tuple(dict.fromkeys(names))


def needs_answers(pattern: QuestionPattern) -> bool:
    """Gold answers exist for sp* and for nested questions whose outer step is sp*."""
    if isinstance(pattern, Nested):
        return pattern.outer is SPX
    return pattern is SPX


def pattern_to_json(pattern: QuestionPattern):
    return pattern.to_json() if isinstance(pattern, Nested) else pattern.value


def _schema_from_doc(doc: Mapping, domain: str) -> GraphSchema:
    try:
        ents = doc["entities"]
        rels = doc["relations"]
    except (KeyError, TypeError):
        raise TemplateError(f"{domain}: schema needs 'entities' and 'relations'") from None
    entity_types = {label: {k: frozenset([v]) for k, v in (props or {}).items()} for label, props in ents.items()}
    triples = tuple(sorted(tuple(r) for r in rels))
    for s, _, d in triples:
        if s not in entity_types or d not in entity_types:
            raise TemplateError(f"{domain}: relation endpoint type not declared in ({s}, {d})")
    return GraphSchema(entity_types, triples, {})


def _params(query: CypherQuery) -> set[str]:
    out: set[str] = set()

    def walk(node) -> None:
        if isinstance(node, Param):
            out.add(node.name)
            return
        if isinstance(node, (list, tuple)):
            for x in node:
                walk(x)
        elif hasattr(node, "__dataclass_fields__"):
            for f in node.__dataclass_fields__:
                walk(getattr(node, f))

    walk(query)
    return out


def _max_hops(query: CypherQuery) -> int:
    return max((len(p.edges) for m in query.matches for p in m.patterns), default=0)


def _compile(text: str, schema: GraphSchema, tid: str, what: str) -> CypherQuery:
    try:
        query = parse(text)
    except CypherSyntaxError as exc:
        raise TemplateError(f"{what} does not parse: {exc}", tid) from None
    violations = validate(query, schema)
    if violations:
        raise TemplateError(f"{what} violates the schema", tid, violations)
    hops = _max_hops(query)
    if hops > MAX_HOPS:
        raise TemplateError(f"{what} walks {hops} hops; at most {MAX_HOPS} are allowed", tid)
    return query


def _return_columns(query: CypherQuery) -> list[str]:
    return [p.column for p in query.ret.projections]


def _template(raw: Mapping, schema: GraphSchema, domain: str) -> QuestionTemplate:
    tid = raw.get("id") if isinstance(raw, Mapping) else None
    if not tid:
        raise TemplateError(f"{domain}: every template needs an id")
    for key in ("pattern", "text", "selection_query"):
        if key not in raw:
            raise TemplateError(f"missing {key!r}", tid)
    try:
        pattern = parse_pattern(raw["pattern"])
    except (ValueError, KeyError) as exc:
        raise TemplateError(f"bad pattern: {exc}", tid) from None
    try:
        slots = template_slots(raw["text"])
    except ValueError as exc:
        raise TemplateError(str(exc), tid) from None
    if not slots:
        raise TemplateError("question text has no slots", tid)
    selection = _compile(raw["selection_query"], schema, tid, "selection query")
    missing = set(slots) - set(_return_columns(selection))
    if missing:
        raise TemplateError(f"slots {sorted(missing)} are not columns of the selection query", tid)
    answer = None
    if raw.get("answer_query"):
        if not needs_answers(pattern):
            raise TemplateError(f"answer query given for a {pattern_to_json(pattern)} template", tid)
        answer = _compile(raw["answer_query"], schema, tid, "answer query")
        unbound = _params(answer) - set(slots)
        if unbound:
            raise TemplateError(f"answer query uses unknown parameters {sorted(unbound)}", tid)
    elif needs_answers(pattern):
        raise TemplateError("sp* templates need an answer query", tid)
    return QuestionTemplate(tid, pattern, raw["text"], selection, answer, domain)


def load_template_set(source: Union[str, os.PathLike, Mapping]) -> TemplateSet:
    """Parse and validate a template document (a path, YAML text, or a parsed mapping)."""
    if isinstance(source, Mapping):
        doc = source
    else:
        text = str(source)
        if os.path.exists(text):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise TemplateError(f"template file is not valid YAML: {exc}") from None
    if not isinstance(doc, Mapping) or "templates" not in doc or "schema" not in doc:
        raise TemplateError("template document needs 'schema' and 'templates'")
    domain = str(doc.get("domain", ""))
    schema = _schema_from_doc(doc["schema"], domain)
    templates = tuple(_template(raw, schema, domain) for raw in doc["templates"] or [])
    ids = [t.id for t in templates]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise TemplateError(f"duplicate template ids {dup}")
    return TemplateSet(domain, schema, templates)


def load_templates(source) -> list[QuestionTemplate]:
    return list(load_template_set(source).templates)


def bundled_template_path(domain: str) -> str:
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    return os.path.join(TEMPLATE_DIR, f"{domain}.yaml")


def bundled_templates(domain: str) -> list[QuestionTemplate]:
    return load_templates(bundled_template_path(domain))


# -- questions --------------------------------------------------------------------


@dataclass
class BenchmarkQuestion:
    id: str
    template_id: str
    pattern: QuestionPattern
    question: str
    paraphrases: list[str] = field(default_factory=list)
    chosen: Optional[int] = None
    slots: dict[str, str] = field(default_factory=dict)
    gold_answers: Optional[list[str]] = None
    graph_id: str = ""
    paraphrase_failed: bool = False

    @property
    def text(self) -> str:
        """The question as posed: the chosen paraphrase, else the original."""
        if self.chosen is not None and 0 <= self.chosen < len(self.paraphrases):
            return self.paraphrases[self.chosen]
        return self.question

    @property
    def pattern_name(self) -> str:
        return self.pattern.value

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "template_id": self.template_id,
            "pattern": pattern_to_json(self.pattern),
            "question": self.question,
            "paraphrases": list(self.paraphrases),
            "chosen": self.chosen,
            "slots": dict(self.slots),
            "gold_answers": None if self.gold_answers is None else list(self.gold_answers),
            "graph_id": self.graph_id,
            "paraphrase_failed": self.paraphrase_failed,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False)

    @classmethod
    def from_json(cls, d: Mapping) -> "BenchmarkQuestion":
        return cls(d["id"], d["template_id"], parse_pattern(d["pattern"]), d["question"],
                   list(d.get("paraphrases") or []), d.get("chosen"), dict(d.get("slots") or {}),
                   None if d.get("gold_answers") is None else list(d["gold_answers"]),
                   d.get("graph_id", ""), bool(d.get("paraphrase_failed", False)))


def write_questions(path: str, questions: Iterable[BenchmarkQuestion]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(q.to_line() + "\n")


def read_questions(path: str) -> list[BenchmarkQuestion]:
    with open(path, encoding="utf-8") as fh:
        return [BenchmarkQuestion.from_json(json.loads(l)) for l in fh if l.strip()]


class EmptyGold(ValueError):
    pass


def annotate(graph: PropertyGraph, question: BenchmarkQuestion, template: QuestionTemplate,
             limits: ExecLimits = ExecLimits()) -> BenchmarkQuestion:
    """Attach gold answer names from the template's answer query; no-op without one."""
    if template.answer_query is None:
        return question
    try:
        result = execute(graph, template.answer_query, limits, params=dict(question.slots))
    except ExecutionError as exc:
        raise ExecutionError(f"answer query of {template.id!r} failed: {exc}") from exc
    names = set()
    for row in result.rows:
        value = row[-1]
        if isinstance(value, EntityRef):
            value = graph.entities[value.id].name
        if value is not None:
            key = normalize(str(value))
            if key:
                names.add(key)
    if not names:
        raise EmptyGold(f"answer query of {template.id!r} returned nothing for {question.slots}")
    question.gold_answers = sorted(names)
    return question


@dataclass(frozen=True)
class SkipEntry:
    template_id: str
    requested: int
    produced: int
    reason: str

    def to_json(self) -> dict:
        return {"template_id": self.template_id, "requested": self.requested, "produced": self.produced,
                "reason": self.reason}


@dataclass
class GenerationResult:
    questions: list[BenchmarkQuestion]
    skipped: list[SkipEntry]
    plan: dict[str, int]

    @property
    def complete(self) -> bool:
        return not self.skipped

    def __iter__(self):
        return iter(self.questions)

    def __len__(self) -> int:
        return len(self.questions)

    def to_jsonl(self) -> str:
        return "".join(q.to_line() + "\n" for q in self.questions)

    def report(self) -> str:
        return json.dumps({"plan": self.plan, "produced": len(self.questions),
                           "skipped": [s.to_json() for s in self.skipped]}, indent=2)


def allocation(templates: Sequence[QuestionTemplate], total: Optional[int] = None,
               per_template: Optional[int] = None) -> dict[str, int]:
    """Questions requested per template: ``per_template`` each, or ``total`` spread evenly in order."""
    if (total is None) == (per_template is None):
        raise ValueError("give exactly one of total and per_template")
    if per_template is not None:
        return {t.id: per_template for t in templates}
    n = len(templates)
    if n == 0:
        return {}
    base, extra = divmod(total, n)
    return {t.id: base + (1 if i < extra else 0) for i, t in enumerate(templates)}


def generate(graph: PropertyGraph, templates: Sequence[QuestionTemplate], total: Optional[int] = None,
             per_template: Optional[int] = None, seed: int = 0, graph_id: str = "",
             limits: ExecLimits = ExecLimits()) -> GenerationResult:
    plan = allocation(templates, total, per_template)
    questions: list[BenchmarkQuestion] = []
    skipped: list[SkipEntry] = []
    for tpl in templates:
        want = plan[tpl.id]
        if want == 0:
            continue
        result = execute(graph, tpl.selection_query, limits)
        cols = list(result.columns)
        idx = [cols.index(s) for s in tpl.slots]
        bindings = list(dict.fromkeys(tuple(row[i] for i in idx) for row in result.rows))
        rng = random.Random(f"{seed}:{tpl.id}")
        rng.shuffle(bindings)
        made = 0
        rejected = 0
        for binding in bindings:
            if made == want:
                break
            if not all(isinstance(v, EntityRef) for v in binding):
                raise TemplateError("selection query must return entities in slot columns", tpl.id)
            slots = {s: v.id for s, v in zip(tpl.slots, binding)}
            text = tpl.text.format(**{s: graph.entities[i].name for s, i in slots.items()})
            qid = f"{graph_id}/{tpl.id}-{made:03d}" if graph_id else f"{tpl.id}-{made:03d}"
            q = BenchmarkQuestion(qid, tpl.id, tpl.pattern, text,
                                  slots=slots, graph_id=graph_id)
            try:
                annotate(graph, q, tpl, limits)
            except EmptyGold:
                rejected += 1
                continue
            questions.append(q)
            made += 1
        if made < want:
            if not bindings:
                reason = "selection query matched nothing"
            else:
                reason = f"only {made} usable bindings ({rejected} rejected for empty gold answers)"
            skipped.append(SkipEntry(tpl.id, want, made, reason))
    return GenerationResult(questions, skipped, plan)


# -- paraphrasing -------------------------------------------------------------------


def _parse_paraphrases(text: str, n: int) -> Optional[list[str]]:
    data = prompts.extract_json(text)
    if not isinstance(data, list):
        return None
    out = [s.strip() for s in data if isinstance(s, str) and s.strip()]
    out = list(dict.fromkeys(out))
    if len(out) < n:
        return None
    return out[:n]


def paraphrase(question: BenchmarkQuestion, llm: LLMGateway, n: int = DEFAULT_PARAPHRASES,
               seed: int = 0) -> BenchmarkQuestion:
    """Store ``n`` distinct rewrites and a seeded choice; on failure keep the original and set the flag."""
    if n < 1:
        raise ValueError("n must be positive")
    system, user = prompts.paraphrase_prompt(question.question, n)
    try:
        reply = llm.complete(llm.request(user, system), "paraphrase").content
    except LLMError:
        reply = None
    variants = _parse_paraphrases(reply, n) if reply is not None else None
    if variants is None:
        question.paraphrases, question.chosen, question.paraphrase_failed = [], None, True
        return question
    question.paraphrases = variants
    question.chosen = random.Random(f"{seed}:{question.id}").randrange(n)
    question.paraphrase_failed = False
    return question
