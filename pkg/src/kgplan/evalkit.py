"""Answer scoring (F1, Hit), run aggregation, and pairwise judge requests.

Predicted entities are the gold-universe names found in the normalized
answer text by whole-token containment; names outside the universe are never
extracted. F1 is computed per question and then averaged. Hit is 1 when any
gold name appears in the answer.
"""

from __future__ import annotations

import json
import random
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from . import prompts
from .llm import ChatRequest, TokenUsage

CRITERIA = ("Comprehensiveness", "Diversity", "Empowerment", "Directness", "Overall Winner")

CRITERION_TEXT = {
    "Comprehensiveness": "Which answer covers more of the relevant facts and aspects the question touches on?",
    "Diversity": "Which answer offers a wider range of distinct perspectives, connections and supporting facts?",
    "Empowerment": "Which answer better equips the reader to understand the topic and reach their own conclusions?",
    "Directness": "Which answer addresses the question more specifically and with less unrelated material?",
    "Overall Winner": "Taking the four criteria above together, which answer is better overall?",
}

_NON_WORD = re.compile(r"[^\w\s]|_")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation to spaces, collapse whitespace."""
    text = unicodedata.normalize("NFKC", text).lower()
    return " ".join(_NON_WORD.sub(" ", text).split())


def extract_entities(answer: str, gold_universe: Iterable[str]) -> set[str]:
    padded = f" {normalize(answer)} "
    found = set()
    for name in gold_universe:
        key = normalize(name)
        if key and f" {key} " in padded:
            found.add(key)
    return found


def _norm_set(names: Iterable[str]) -> set[str]:
    return {n for n in (normalize(x) for x in names) if n}


def f1(predicted: Iterable[str], gold: Iterable[str]) -> float:
    p, g = _norm_set(predicted), _norm_set(gold)
    if not g:
        raise ValueError("gold set is empty")
    tp = len(p & g)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(p), tp / len(g)
    return 2 * precision * recall / (precision + recall)


def hit(predicted: Iterable[str], gold: Iterable[str]) -> int:
    p, g = _norm_set(predicted), _norm_set(gold)
    if not g:
        raise ValueError("gold set is empty")
    return int(bool(p & g))


# -- records ------------------------------------------------------------------------


@dataclass
class EvalRecord:
    question_id: str
    answer: str
    gold: Optional[list[str]] = None
    f1: Optional[float] = None
    hit: Optional[int] = None
    latency: float = 0.0
    usage: TokenUsage = TokenUsage()
    pattern: str = ""
    predicted: Optional[list[str]] = None
    failure: Optional[str] = None

    def __post_init__(self):
        if self.f1 is not None and not 0.0 <= self.f1 <= 1.0:
            raise ValueError("f1 must lie in [0, 1]")
        if (self.hit is None) != (self.gold is None):
            raise ValueError("hit is present exactly when gold is present")

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "pattern": self.pattern,
            "answer": self.answer,
            "gold": self.gold,
            "predicted": self.predicted,
            "f1": self.f1,
            "hit": self.hit,
            "latency": self.latency,
            "usage": self.usage.to_json(),
            "failure": self.failure,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "EvalRecord":
        return cls(d["question_id"], d["answer"], d.get("gold"), d.get("f1"), d.get("hit"),
                   d.get("latency", 0.0), TokenUsage.from_json(d.get("usage") or {}), d.get("pattern", ""),
                   d.get("predicted"), d.get("failure"))


def score(question_id: str, answer: str, gold: Optional[Iterable[str]], universe: Iterable[str] = (),
          latency: float = 0.0, usage: TokenUsage = TokenUsage(), pattern: str = "",
          failure: Optional[str] = None) -> EvalRecord:
    """Build a record; F1/Hit only when gold answers exist. The universe always includes the gold names."""
    if gold is None:
        return EvalRecord(question_id, answer, None, None, None, latency, usage, pattern, None, failure)
    gold_set = sorted(_norm_set(gold))
    predicted = extract_entities(answer, set(universe) | set(gold_set))
    return EvalRecord(question_id, answer, gold_set, f1(predicted, gold_set), hit(predicted, gold_set),
                      latency, usage, pattern, sorted(predicted), failure)


@dataclass
class Report:
    count: int = 0
    scored: int = 0
    mean_f1: Optional[float] = None
    mean_hit: Optional[float] = None
    mean_latency: Optional[float] = None
    mean_prompt_tokens: Optional[float] = None
    mean_completion_tokens: Optional[float] = None
    mean_total_tokens: Optional[float] = None
    total_usage: TokenUsage = TokenUsage()
    per_pattern: dict[str, "Report"] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.count == 0

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in ("count", "scored", "mean_f1", "mean_hit", "mean_latency",
                                             "mean_prompt_tokens", "mean_completion_tokens", "mean_total_tokens")}
        out["total_usage"] = self.total_usage.to_json()
        if self.per_pattern:
            out["per_pattern"] = {k: v.to_json() for k, v in self.per_pattern.items()}
        return out

    def table(self) -> str:
        rows = [("group", "n", "scored", "F1", "Hit", "latency s", "tokens")]

        def fmt(x, nd=4):
            return "-" if x is None else f"{x:.{nd}f}"

        for name, rep in [("all", self), *sorted(self.per_pattern.items())]:
            rows.append((name, str(rep.count), str(rep.scored), fmt(rep.mean_f1), fmt(rep.mean_hit),
                         fmt(rep.mean_latency, 3), fmt(rep.mean_total_tokens, 1)))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _summarize(records: Sequence[EvalRecord]) -> Report:
    if not records:
        return Report()
    scored = [r for r in records if r.gold is not None]
    n = len(records)
    total = TokenUsage()
    for r in records:
        total = total + r.usage
    return Report(
        count=n,
        scored=len(scored),
        mean_f1=sum(r.f1 for r in scored) / len(scored) if scored else None,
        mean_hit=sum(r.hit for r in scored) / len(scored) if scored else None,
        mean_latency=sum(r.latency for r in records) / n,
        mean_prompt_tokens=total.prompt_tokens / n,
        mean_completion_tokens=total.completion_tokens / n,
        mean_total_tokens=total.total_tokens / n,
        total_usage=total,
    )


def aggregate(records: Iterable[EvalRecord]) -> Report:
    records = list(records)
    report = _summarize(records)
    groups: dict[str, list[EvalRecord]] = {}
    for r in records:
        groups.setdefault(r.pattern, []).append(r)
    report.per_pattern = {k: _summarize(v) for k, v in sorted(groups.items())}
    return report


# -- judge ------------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeRequest:
    question: str
    # (anonymous label, answer text) in presentation order
    candidates: tuple[tuple[str, str], ...]
    # anonymous label -> caller's method name
    methods: Mapping[str, str]
    criteria: tuple[str, ...]
    request: ChatRequest


def build_judge_request(question: str, answers: Sequence[tuple[str, str]], seed: int = 0,
                        model: str = "") -> JudgeRequest:
    """``answers`` holds (method name, answer text); presentation order is shuffled under ``seed``."""
    if len(answers) < 2:
        raise ValueError("a judge request needs at least two answers")
    order = list(answers)
    random.Random(f"{seed}:{question}").shuffle(order)
    labels = [f"Answer {chr(ord('A') + i)}" for i in range(len(order))]
    candidates = tuple((lab, text) for lab, (_, text) in zip(labels, order))
    methods = {lab: name for lab, (name, _) in zip(labels, order)}
    system = "\n".join([
        prompts.task_header("judge"),
        "You compare answers to the same question. Judge each criterion separately.",
        *[f"- {c}: {CRITERION_TEXT[c]}" for c in CRITERIA],
        "Several answers may win the same criterion when they are equally good.",
        "Reply with JSON only, mapping every criterion to the list of winning answer labels, "
        'for example {"Comprehensiveness": ["Answer A"], ...}.',
    ])
    lines = [f"Question: {question}", ""]
    lines += [f"[{lab}]: {text}" for lab, text in candidates]
    kw = {"model": model} if model else {}
    return JudgeRequest(question, candidates, methods, CRITERIA, ChatRequest.of("\n".join(lines), system, **kw))


def parse_verdict(text: str, judge: JudgeRequest) -> dict[str, set[str]]:
    """Winning method names per criterion; unknown labels are ignored, missing criteria get no winner."""
    data = prompts.extract_json(text)
    out = {c: set() for c in judge.criteria}
    if not isinstance(data, dict):
        return out
    by_letter = {lab.split()[-1].upper(): lab for lab in judge.methods}
    for crit in judge.criteria:
        winners = data.get(crit, [])
        if isinstance(winners, str):
            winners = [winners]
        for w in winners if isinstance(winners, list) else []:
            w = str(w).strip()
            lab = w if w in judge.methods else by_letter.get(w.split()[-1].upper() if w else "")
            if lab is not None:
                out[crit].add(judge.methods[lab])
    return out


def win_rates(verdicts: Sequence[Mapping[str, set[str]]], methods: Sequence[str]) -> dict[str, dict[str, float]]:
    """Per method and criterion, the share of questions it won; shares may sum past 1 across methods."""
    n = len(verdicts)
    out = {m: {c: 0.0 for c in CRITERIA} for m in methods}
    if n == 0:
        return out
    for v in verdicts:
        for crit, winners in v.items():
            for m in winners:
                if m in out:
                    out[m][crit] += 1
    return {m: {c: cnt / n for c, cnt in row.items()} for m, row in out.items()}


def write_records(path: str, records: Iterable[EvalRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def read_records(path: str) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        return [EvalRecord.from_json(json.loads(l)) for l in fh if l.strip()]
