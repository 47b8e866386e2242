"""Run the question-answering pipeline over a benchmark file and score it."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import evalkit
from .benchgen import BenchmarkQuestion
from .graph_store import GraphSchema, PropertyGraph, normalize_name, schema_of
from .llm import LLMGateway, UsageLedger, UsageReport, usage_report
from .planner import PlannerConfig, QueryPlan, answer

DEFAULT_CONCURRENCY = 4


@dataclass
class BenchRun:
    records: list[evalkit.EvalRecord]
    plans: list[QueryPlan]
    report: evalkit.Report
    usage: UsageReport
    ledger: UsageLedger


def gold_universe(graph: PropertyGraph, gold: Sequence[str]) -> set[str]:
    """Names of every entity sharing a type with some gold answer."""
    types = set()
    for name in gold:
        for eid in graph.name_index.get(normalize_name(name), ()):
            types.add(graph.entities[eid].type)
    return {graph.entities[i].name for t in sorted(types) for i in graph.ids_of_type(t)}


def run_benchmark(questions: Sequence[BenchmarkQuestion], graph: PropertyGraph, llm: LLMGateway,
                  config: PlannerConfig = PlannerConfig(), concurrency: int = DEFAULT_CONCURRENCY,
                  schema: Optional[GraphSchema] = None) -> BenchRun:
    if concurrency < 1:
        raise ValueError("concurrency must be at least 1")
    schema = schema or schema_of(graph)
    run_ledger = UsageLedger()
    universes = {}

    def one(q: BenchmarkQuestion):
        session = run_ledger.session()
        text, plan = answer(q.text, graph, llm.with_ledger(session), config, schema)
        calls = usage_report(session)
        universe = ()
        if q.gold_answers is not None:
            key = tuple(q.gold_answers)
            if key not in universes:
                universes[key] = gold_universe(graph, q.gold_answers)
            universe = universes[key]
        rec = evalkit.score(q.id, text, q.gold_answers, universe, latency=round(calls.total.latency, 6),
                            usage=calls.total.usage, pattern=q.pattern_name, failure=plan.failure_kind)
        return rec, plan

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        results = list(pool.map(one, questions))
    records = [r for r, _ in results]
    plans = [p for _, p in results]
    return BenchRun(records, plans, evalkit.aggregate(records), usage_report(run_ledger), run_ledger)
