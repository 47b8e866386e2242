"""Command-line entry point: ``kgplan ingest | ask | bench gen | bench run | repl``.

Settings resolve as flags, then environment, then ``--config`` file, then
defaults. Exit codes are listed in :data:`EXIT_CODES`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import yaml

from . import planner as P
from .graph_store import (
    GraphLoadError, InverseHint, PropertyGraph, dump_edges, dump_nodes, load_graph, load_inverse_hint,
    materialize_inverses, schema_of,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_LOAD = 3
EXIT_CODES = {
    P.CLASSIFICATION: 10,
    P.DECOMPOSITION: 11,
    P.ENTITY_RESOLUTION: 12,
    P.GENERATION: 13,
    P.EXECUTION: 14,
    P.GATEWAY: 20,
}

SNAPSHOT_MAGIC = b"KGPLAN-SNAPSHOT"
SNAPSHOT_VERSION = 1


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        self.code = code
        super().__init__(message)


# -- configuration -------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    graph: Optional[str] = None
    cassette: Optional[str] = None
    mode: str = "live"
    backend: str = "http"
    model: Optional[str] = None
    base_url: Optional[str] = None
    api_key: Optional[str] = None
    k: int = 10
    hop_cap: int = 5
    max_retries: int = 3
    seed: int = 0
    budget: int = 16_000
    out: Optional[str] = None
    trace: Optional[str] = None
    concurrency: int = 4

    def planner_config(self) -> P.PlannerConfig:
        return P.PlannerConfig(k=self.k, hop_cap=self.hop_cap,
                               policy=P.CorrectionPolicy(max_retries=self.max_retries), budget=self.budget)


ENV_KEYS = {
    "base_url": "LLM_BASE_URL",
    "api_key": "LLM_API_KEY",
    "model": "LLM_MODEL",
    "mode": "KGPLAN_MODE",
    "cassette": "KGPLAN_CASSETTE",
    "graph": "KGPLAN_GRAPH",
}

_INT_FIELDS = {"k", "hop_cap", "max_retries", "seed", "budget", "concurrency"}


def _coerce(name: str, value):
    if name in _INT_FIELDS:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise CliError(f"{name} must be an integer, got {value!r}") from None
    return value


def resolve_config(flags: dict, env: Optional[dict] = None, config_path: Optional[str] = None) -> RunConfig:
    env = os.environ if env is None else env
    names = {f.name for f in fields(RunConfig)}
    values: dict = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise CliError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(data, dict):
            raise CliError(f"config {config_path} must be a mapping")
        unknown = set(data) - names
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for name, var in ENV_KEYS.items():
        if env.get(var):
            values[name] = env[var]
    for name, value in flags.items():
        if name in names and value is not None:
            values[name] = value
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    if cfg.mode not in ("live", "record", "replay"):
        raise CliError(f"--mode must be live, record or replay, not {cfg.mode!r}")
    if cfg.mode in ("record", "replay") and not cfg.cassette:
        raise CliError(f"{cfg.mode} mode needs --cassette")
    if cfg.backend not in ("http", "scripted"):
        raise CliError(f"--backend must be http or scripted, not {cfg.backend!r}")
    if cfg.k < 1 or cfg.hop_cap < 1 or cfg.max_retries < 0 or cfg.concurrency < 1 or cfg.budget < 1:
        raise CliError("k, hop-cap, budget and concurrency must be positive; max-retries non-negative")
    return cfg


# -- snapshots ---------------------------------------------------------------------


def write_snapshot(graph: PropertyGraph, path: str) -> None:
    payload = {
        "nodes": dump_nodes(graph),
        "edges": dump_edges(graph),
        "hint": graph.inverse_hint.records(),
    }
    body = zlib.compress(json.dumps(payload, ensure_ascii=False).encode("utf-8"))
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC + b" %d\n" % SNAPSHOT_VERSION)
        fh.write(body)


def read_snapshot(path: str) -> PropertyGraph:
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            body = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read snapshot {path}: {exc}", EXIT_LOAD) from None
    expected = SNAPSHOT_MAGIC + b" %d\n" % SNAPSHOT_VERSION
    if header != expected:
        raise CliError(f"{path} is not a current graph snapshot; run `kgplan ingest` again", EXIT_LOAD)
    try:
        payload = json.loads(zlib.decompress(body).decode("utf-8"))
    except (zlib.error, ValueError) as exc:
        raise CliError(f"snapshot {path} is corrupt: {exc}", EXIT_LOAD) from None
    graph = load_graph(payload["nodes"], payload["edges"], InverseHint.from_records(payload["hint"]))
    return materialize_inverses(graph)


def open_graph(source: Optional[str]) -> PropertyGraph:
    """A snapshot path, ``fixture:<name>``, or ``synthetic:<domain>[:n[:seed]]``."""
    if not source:
        raise CliError("no graph given (use --graph)")
    if source.startswith("fixture:"):
        from .demo import fixture_graph
        name = source.split(":", 1)[1]
        try:
            return fixture_graph(name)
        except (OSError, GraphLoadError) as exc:
            raise CliError(f"cannot load fixture {name!r}: {exc}", EXIT_LOAD) from None
    if source.startswith("synthetic:"):
        from .synth import GENERATORS
        parts = source.split(":")
        if len(parts) < 2 or parts[1] not in GENERATORS:
            raise CliError(f"synthetic graphs: {sorted(GENERATORS)}", EXIT_LOAD)
        n = int(parts[2]) if len(parts) > 2 else 1000
        seed = int(parts[3]) if len(parts) > 3 else 0
        return GENERATORS[parts[1]](n, seed)
    return read_snapshot(source)


# -- gateway -------------------------------------------------------------------------


def make_gateway(cfg: RunConfig):
    from .llm import DEFAULT_MODEL, Cassette, DenyNetworkBackend, HttpBackend, LLMError, LLMGateway, ScriptedBackend

    cassette = None
    if cfg.cassette:
        if os.path.exists(cfg.cassette):
            cassette = Cassette.load(cfg.cassette)
        elif cfg.mode == "replay":
            raise CliError(f"cassette {cfg.cassette} does not exist", EXIT_LOAD)
        else:
            cassette = Cassette(path=cfg.cassette)
    if cfg.mode == "replay":
        backend = DenyNetworkBackend()
    elif cfg.backend == "scripted":
        from .demo import ScriptedResponder, foldy_script, science_script
        backend = ScriptedBackend(ScriptedResponder(science_script().merge(foldy_script(True))))
    else:
        try:
            backend = HttpBackend(cfg.base_url, cfg.api_key)
        except LLMError as exc:
            raise CliError(str(exc)) from None
    return LLMGateway(backend, cfg.mode, cassette, model=cfg.model or DEFAULT_MODEL)


def _save_cassette(gw, cfg: RunConfig) -> None:
    if cfg.mode == "record" and gw.cassette is not None:
        gw.cassette.save(cfg.cassette)


# -- commands ---------------------------------------------------------------------


def cmd_ingest(args, cfg: RunConfig) -> int:
    try:
        hint = load_inverse_hint(args.hint) if args.hint else None
        base = load_graph(args.nodes, args.edges, hint)
    except (OSError, GraphLoadError) as exc:
        raise CliError(f"load failed: {exc}", EXIT_LOAD) from None
    except (KeyError, ValueError) as exc:
        raise CliError(f"load failed: {exc}", EXIT_LOAD) from None
    full = materialize_inverses(base)
    print(f"{len(base.entities)} entities, {len(base.relations)} relations ({len(full.relations)} after inverses)")
    print(schema_of(full).describe())
    out = args.snapshot or cfg.out
    if out:
        write_snapshot(full, out)
        print(f"snapshot written to {out}")
    return EXIT_OK


def _exit_for(plan: P.QueryPlan) -> int:
    kind = plan.failure_kind
    return EXIT_OK if kind is None else EXIT_CODES.get(kind, EXIT_CODES[P.EXECUTION])


def _summary_line(plan: P.QueryPlan) -> str:
    steps = " -> ".join(f"{s.pattern.value}:{s.status}" for s in plan.steps) or "no steps"
    fail = f" failure={plan.failure_kind}" if plan.failure_kind else ""
    return f"[plan] {steps}{fail}"


def cmd_ask(args, cfg: RunConfig) -> int:
    graph = open_graph(cfg.graph)
    gw = make_gateway(cfg)
    text, plan = P.answer(args.question, graph, gw, cfg.planner_config())
    _save_cassette(gw, cfg)
    print(text)
    trace_path = cfg.trace or cfg.out
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(plan.trace.to_jsonl())
    print(_summary_line(plan), file=sys.stderr)
    return _exit_for(plan)


def cmd_repl(args, cfg: RunConfig, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    graph = open_graph(cfg.graph)
    gw = make_gateway(cfg)
    pc = cfg.planner_config()
    interactive = stdin.isatty() if hasattr(stdin, "isatty") else False
    while True:
        if interactive:
            stdout.write("? ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        question = line.strip()
        if not question:
            continue
        try:
            text, plan = P.answer(question, graph, gw, pc)
        except Exception as exc:  # keep the loop alive whatever one question does
            stdout.write(f"error: {exc}\n")
            continue
        stdout.write(text + "\n" + _summary_line(plan) + "\n")
        stdout.flush()
    _save_cassette(gw, cfg)
    return EXIT_OK


def cmd_bench_gen(args, cfg: RunConfig) -> int:
    from .benchgen import DOMAINS, TemplateError, bundled_template_path, generate, load_templates, paraphrase

    if args.domain and args.domain not in DOMAINS:
        raise CliError(f"unknown domain {args.domain!r}; expected one of {', '.join(DOMAINS)}")
    graph = open_graph(cfg.graph)
    source = args.templates or (bundled_template_path(args.domain) if args.domain else None)
    if source is None:
        raise CliError("give --templates or --domain")
    try:
        templates = load_templates(source)
    except (TemplateError, OSError) as exc:
        raise CliError(str(exc), EXIT_LOAD) from None
    if (args.total is None) == (args.per_template is None):
        raise CliError("give exactly one of --total and --per-template")
    graph_id = args.graph_id or (args.domain or "")
    result = generate(graph, templates, total=args.total, per_template=args.per_template, seed=cfg.seed,
                      graph_id=graph_id)
    if args.paraphrase:
        gw = make_gateway(cfg)
        for q in result.questions:
            paraphrase(q, gw, seed=cfg.seed)
        _save_cassette(gw, cfg)
    if not cfg.out:
        raise CliError("bench gen needs --out")
    with open(cfg.out, "w", encoding="utf-8") as fh:
        fh.write(result.to_jsonl())
    with open(cfg.out + ".skips.json", "w", encoding="utf-8") as fh:
        fh.write(result.report() + "\n")
    print(f"{len(result)} questions written to {cfg.out}; {len(result.skipped)} templates short")
    return EXIT_OK


def cmd_bench_run(args, cfg: RunConfig) -> int:
    from .benchgen import read_questions
    from .evalkit import write_records
    from .runner import run_benchmark

    graph = open_graph(cfg.graph)
    try:
        questions = read_questions(args.bench)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read benchmark {args.bench}: {exc}", EXIT_LOAD) from None
    gw = make_gateway(cfg)
    run = run_benchmark(questions, graph, gw, cfg.planner_config(), cfg.concurrency)
    _save_cassette(gw, cfg)
    if not cfg.out:
        raise CliError("bench run needs --out")
    write_records(cfg.out, run.records)
    report = {"metrics": run.report.to_json(), "usage": run.usage.to_json()}
    with open(cfg.out + ".report.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(run.report.table())
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON file with default settings")
    p.add_argument("--graph", help="snapshot path, fixture:<name>, or synthetic:<domain>[:n[:seed]]")
    p.add_argument("--cassette", help="cassette file for record/replay")
    p.add_argument("--mode", choices=("live", "record", "replay"))
    p.add_argument("--backend", choices=("http", "scripted"))
    p.add_argument("--model")
    p.add_argument("--k", type=int)
    p.add_argument("--hop-cap", dest="hop_cap", type=int)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--out")
    p.add_argument("--trace")
    p.add_argument("--concurrency", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kgplan", description="Question answering over property graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load node/edge files, print a summary, write a snapshot")
    _common(p)
    p.add_argument("nodes")
    p.add_argument("edges")
    p.add_argument("--hint", help="inverse relation hint file")
    p.add_argument("--snapshot", help="snapshot output path (defaults to --out)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="answer one question")
    _common(p)
    p.add_argument("question")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("repl", help="answer questions read line by line")
    _common(p)
    p.set_defaults(func=cmd_repl)

    bench = sub.add_parser("bench", help="benchmark generation and evaluation")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    p = bsub.add_parser("gen", help="generate benchmark questions from templates")
    _common(p)
    p.add_argument("--templates", help="template YAML file")
    p.add_argument("--domain", help="use a bundled template file: academia, literature, ecommerce")
    p.add_argument("--total", type=int)
    p.add_argument("--per-template", dest="per_template", type=int)
    p.add_argument("--graph-id", dest="graph_id")
    p.add_argument("--paraphrase", action="store_true", help="add model paraphrases (uses the gateway)")
    p.set_defaults(func=cmd_bench_gen)
    p = bsub.add_parser("run", help="answer and score a benchmark file")
    _common(p)
    p.add_argument("bench", help="benchmark question file")
    p.set_defaults(func=cmd_bench_run)
    return ap


def main(argv: Optional[Sequence[str]] = None, env: Optional[dict] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = resolve_config(vars(args), env, args.config)
        return args.func(args, cfg)
    except CliError as exc:
        print(f"kgplan: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
