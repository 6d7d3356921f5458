"""Command-line surface: run queries, simulate disorder, canonicalize, compare.

Subcommands:

* ``run``      execute a compiled query over event logs at a consistency level
* ``disorder`` re-encode a stream with bounded disorder and retractions
* ``canon``    write the canonical history table to/at a reference time
* ``equiv``    exit 0 when two streams are logically equivalent, 3 otherwise
* ``parse``    dump a query's AST as JSON

Exit codes: 0 success, 1 query diagnostics, 2 I/O or format failure,
3 streams differ (``equiv`` only).
"""

from __future__ import annotations

import argparse
import json
import sys

from .disorder import disorder_stream
from .engine import ConsistencyLevel, Pipeline
from .jsonio import LineFormatError, dumps_events, read_events, write_table
from .patterns import plan_dumps
from .query import ast_to_obj, compile_query, leaf_streams, parse
from .temporal import (
    INF,
    HistoryTable,
    Time,
    canonical_at,
    canonical_to,
    logically_equivalent,
)

OK, DIAGNOSTICS, IO_FAILURE, DIFFER = 0, 1, 2, 3


def _parse_time_arg(text: str, name: str) -> Time:
    if text.lower() == "inf":
        return INF
    try:
        value = int(text)
    except ValueError:
        raise SystemExit(f"error: {name} must be an integer or 'inf'")
    if value < 0:
        raise SystemExit(f"error: {name} must be non-negative")
    return value


def load_config(path: str) -> dict[str, str]:
    """Key=value lines; ``#`` starts a comment; quotes around values optional."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            value = value.strip().strip("'\"")
            values[key.strip().replace("-", "_")] = value
    return values


def _apply_config(args: argparse.Namespace, parser_defaults: dict) -> None:
    if not getattr(args, "config", None):
        return
    values = load_config(args.config)
    for key, value in values.items():
        if key == "input":
            pairs = [v.strip() for v in value.split(",") if v.strip()]
            if not getattr(args, "input", None):
                args.input = pairs
            continue
        if not hasattr(args, key):
            continue
        # Flags given on the command line always win over the config file.
        if getattr(args, key) == parser_defaults.get(key):
            setattr(args, key, value)


def _read_stream(path: str):
    try:
        return read_events(path)
    except FileNotFoundError:
        print(f"error: {path}: no such file", file=sys.stderr)
        raise SystemExit(IO_FAILURE)
    except LineFormatError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        raise SystemExit(IO_FAILURE)


def _write_rows(rows, path: str | None) -> None:
    text = dumps_events(rows)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _level_from_args(args) -> ConsistencyLevel:
    level = ConsistencyLevel.named(args.level)
    memory = level.memory if args.memory is None else _parse_time_arg(args.memory, "--memory")
    block = level.blocking if args.block is None else _parse_time_arg(args.block, "--block")
    return ConsistencyLevel(memory, block)


def _compile_from_file(query_path: str, ticks_per_minute: int):
    try:
        with open(query_path, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: {query_path}: {exc.strerror}", file=sys.stderr)
        raise SystemExit(IO_FAILURE)
    parsed = parse(source)
    for d in parsed.diagnostics:
        print(f"{query_path}:{d.render()}", file=sys.stderr)
    if not parsed.ok:
        raise SystemExit(DIAGNOSTICS)
    compiled = compile_query(parsed.ast, ticks_per_minute)
    for d in compiled.diagnostics:
        print(f"{query_path}:{d.render()}", file=sys.stderr)
    if not compiled.ok:
        raise SystemExit(DIAGNOSTICS)
    return parsed.ast, compiled.plan


def _sync_sequence(feed):
    seen: dict[str, set] = {}
    out = []
    for stream, row in feed:
        marks = seen.setdefault(stream, set())
        out.append(row.o_s if row.k not in marks else row.o_e)
        marks.add(row.k)
    return out


def cmd_run(args) -> int:
    ticks_per_minute = {"minute": 1, "second": 60}[args.tick_unit]
    ast, plan = _compile_from_file(args.query, ticks_per_minute)
    inputs: dict[str, list] = {}
    for spec in args.input or []:
        if "=" not in spec:
            print(f"error: --input expects name=path, got {spec!r}", file=sys.stderr)
            return DIAGNOSTICS
        name, _, path = spec.partition("=")
        inputs[name] = _read_stream(path)
    wanted = leaf_streams(ast)
    for name in inputs:
        if name not in wanted:
            print(f"warning: input {name!r} is not read by the query", file=sys.stderr)

    pipeline = Pipeline(plan, _level_from_args(args))
    feed = sorted(
        ((name, row) for name, rows in inputs.items() for row in rows),
        key=lambda item: (item[1].c_s, item[0], item[1].sort_key))
    syncs = _sync_sequence(feed)
    every = args.guarantee_every
    last_threshold: dict[str, Time] = {}
    for i, (name, row) in enumerate(feed):
        if every and i and i % every == 0:
            for stream in sorted(inputs):
                remaining = [s for (n, _), s in zip(feed[i:], syncs[i:])
                             if n == stream and s != INF]
                threshold = min(remaining) - 1 if remaining else INF
                if threshold == INF or threshold < 0:
                    continue
                if threshold > last_threshold.get(stream, -1):
                    pipeline.guarantee(stream, threshold)
                    last_threshold[stream] = threshold
        pipeline.feed(name, row)
    pipeline.flush()

    _write_rows(pipeline.outputs, args.output)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(pipeline.metrics(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    return OK


def cmd_disorder(args) -> int:
    if args.seed is None:
        print("error: --seed is required for reproducible disorder", file=sys.stderr)
        return DIAGNOSTICS
    if args.skew < 0 or not 0.0 <= args.retract_prob <= 1.0:
        print("error: --skew must be >= 0 and --retract-prob within [0, 1]",
              file=sys.stderr)
        return DIAGNOSTICS
    rows = _read_stream(args.input)
    out = disorder_stream(rows, args.skew, args.retract_prob, args.seed)
    if not logically_equivalent(HistoryTable(rows), HistoryTable(out), INF, "to"):
        print("error: internal: re-encoding changed stream content", file=sys.stderr)
        return IO_FAILURE
    _write_rows(out, args.output)
    return OK


def cmd_canon(args) -> int:
    rows = _read_stream(args.input)
    t0 = _parse_time_arg(args.t0, "--t0")
    table = HistoryTable(rows)
    canon = canonical_to(table, t0) if args.mode == "to" else canonical_at(table, t0)
    if args.output:
        write_table(canon, args.output)
    else:
        _write_rows(canon.sorted_rows(), None)
    return OK


def cmd_equiv(args) -> int:
    a = HistoryTable(_read_stream(args.a))
    b = HistoryTable(_read_stream(args.b))
    t0 = _parse_time_arg(args.t0, "--t0")
    same = logically_equivalent(a, b, t0, args.mode)
    print("equivalent" if same else "different")
    return OK if same else DIFFER


def cmd_parse(args) -> int:
    try:
        with open(args.query, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: {args.query}: {exc.strerror}", file=sys.stderr)
        return IO_FAILURE
    result = parse(source)
    for d in result.diagnostics:
        print(f"{args.query}:{d.render()}", file=sys.stderr)
    if not result.ok:
        return DIAGNOSTICS
    print(json.dumps(ast_to_obj(result.ast), indent=2, sort_keys=True))
    if args.plan:
        compiled = compile_query(result.ast)
        if compiled.ok:
            print(plan_dumps(compiled.plan))
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cedr",
        description="Temporal event-stream engine: standing queries over "
                    "out-of-order streams with retractions.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a query over event logs")
    run.add_argument("--query", required=True, help="query file")
    run.add_argument("--input", action="append", metavar="NAME=PATH",
                     help="event log for one stream (repeatable)")
    run.add_argument("--level", default="middle",
                     choices=["strong", "middle", "weak"])
    run.add_argument("--memory", default=None, metavar="M",
                     help="memory limit in ticks, or 'inf'")
    run.add_argument("--block", default=None, metavar="B",
                     help="blocking limit in ticks, or 'inf'")
    run.add_argument("--tick-unit", default="minute", choices=["minute", "second"],
                     dest="tick_unit")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--output", default=None)
    run.add_argument("--metrics", default=None)
    run.add_argument("--guarantee-every", type=int, default=0,
                     dest="guarantee_every", metavar="N",
                     help="declare honest per-stream guarantees every N rows")
    run.add_argument("--config", default=None)
    run.set_defaults(func=cmd_run)

    dis = sub.add_parser("disorder", help="re-encode a stream with disorder")
    dis.add_argument("--input", required=True)
    dis.add_argument("--output", default=None)
    dis.add_argument("--seed", type=int, default=None)
    dis.add_argument("--skew", type=int, default=0)
    dis.add_argument("--retract-prob", type=float, default=0.0, dest="retract_prob")
    dis.add_argument("--config", default=None)
    dis.set_defaults(func=cmd_disorder)

    canon = sub.add_parser("canon", help="canonicalize a stream")
    canon.add_argument("--input", required=True)
    canon.add_argument("--t0", required=True)
    canon.add_argument("--mode", default="to", choices=["to", "at"])
    canon.add_argument("--output", default=None)
    canon.set_defaults(func=cmd_canon)

    eq = sub.add_parser("equiv", help="check logical equivalence of two streams")
    eq.add_argument("a")
    eq.add_argument("b")
    eq.add_argument("--t0", required=True)
    eq.add_argument("--mode", default="to", choices=["to", "at"])
    eq.set_defaults(func=cmd_equiv)

    pr = sub.add_parser("parse", help="dump a query AST")
    pr.add_argument("--query", required=True)
    pr.add_argument("--plan", action="store_true", help="also dump the compiled plan")
    pr.set_defaults(func=cmd_parse)

    return parser


_CONFIG_DEFAULTS = {
    "level": "middle", "memory": None, "block": None, "tick_unit": "minute",
    "seed": None, "output": None, "metrics": None, "guarantee_every": 0,
    "skew": 0, "retract_prob": 0.0, "t0": None, "mode": "to", "query": None,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args, _CONFIG_DEFAULTS)
        if hasattr(args, "seed") and isinstance(args.seed, str):
            args.seed = int(args.seed)
        if hasattr(args, "skew") and isinstance(args.skew, str):
            args.skew = int(args.skew)
        if hasattr(args, "retract_prob") and isinstance(args.retract_prob, str):
            args.retract_prob = float(args.retract_prob)
        if hasattr(args, "guarantee_every") and isinstance(args.guarantee_every, str):
            args.guarantee_every = int(args.guarantee_every)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else DIAGNOSTICS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_FAILURE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_FAILURE


if __name__ == "__main__":
    sys.exit(main())
