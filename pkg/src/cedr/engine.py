"""Incremental execution over out-of-order, retraction-bearing streams.

Each operator instance pairs an operational module (one pure operator from
the algebra) with a consistency monitor.  The monitor owns an alignment
buffer, the retained input state, and the log of emitted output, and runs
one reconciliation loop: interpret the retained rows canonically, apply
the pure operator, and diff the result against what was already emitted.
New results become insertion rows; results that shrank or vanished become
retraction rows under the same lineage key (a start change forces a full
removal plus re-insert under a fresh key).  Output is therefore always
convergent to the pure denotation of the surviving input, whatever the
arrival order.

The consistency level ``(M, B)`` shapes, never changes, that convergence:
``B`` bounds how long arrivals wait in the alignment buffer (infinite
blocking additionally withholds insertions until no future input can
contradict them), and ``M`` bounds how far behind the guarantee frontier
state is retained; older rows are forgotten and late arrivals beyond the
horizon are dropped and counted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from . import algebra, patterns
from .patterns import (
    CancelWhenOp,
    Leaf,
    NotOp,
    PatternEvent,
    ProjectOp,
    SequenceOp,
    SliceOp,
    UnlessOp,
    make_accept,
    make_blocks,
)
from .temporal import (
    INF,
    AnnotatedHistoryTable,
    AnnotatedRow,
    HistoryTable,
    Payload,
    SyncPointPair,
    TemporalError,
    Time,
    TritemporalEvent,
    UnitemporalEvent,
    is_sync_point,
)

NEG = float("-inf")

RT_ATTR = "@rt"
CBT_ATTR = "@cbt"
RESERVED_ATTRS = (RT_ATTR, CBT_ATTR)


class NonMonotoneGuarantee(TemporalError):
    """A guarantee threshold regressed."""


class NotASyncPoint(TemporalError):
    """A consistency-level switch was requested away from a sync point."""


@dataclass(frozen=True)
class ConsistencyLevel:
    """A point on the consistency spectrum: memory limit and blocking limit.

    Both are occurrence-time durations.  Blocking beyond the memory limit
    has no effect, so ``blocking`` is normalized down to ``memory``.
    """

    memory: Time
    blocking: Time

    def __post_init__(self):
        if self.blocking > self.memory:
            object.__setattr__(self, "blocking", self.memory)

    @classmethod
    def named(cls, name: str) -> "ConsistencyLevel":
        try:
            return _LEVELS[name.lower()]
        except KeyError:
            raise ValueError(f"unknown consistency level {name!r}") from None


STRONG = ConsistencyLevel(INF, INF)
MIDDLE = ConsistencyLevel(INF, 0)
WEAK = ConsistencyLevel(0, 0)
_LEVELS = {"strong": STRONG, "middle": MIDDLE, "weak": WEAK}


@dataclass(frozen=True)
class Guarantee:
    """No future row of ``stream`` will carry a sync value <= ``threshold``."""

    stream: str
    threshold: Time


# --- wire form of pattern events --------------------------------------------

def pattern_event_to_row(e: PatternEvent, k: str, c_s: Time) -> TritemporalEvent:
    items = list(e.payload.items())
    if e.cbt or e.rt != e.v_s:
        items.append((RT_ATTR, int(e.rt)))
        items.append((CBT_ATTR, json.dumps(list(e.cbt))))
    return TritemporalEvent(k, e.id, e.v_s, e.v_e, e.o_s, e.o_e, c_s, INF,
                            Payload(items))


def pattern_event_from_row(r: TritemporalEvent) -> PatternEvent:
    rt = r.payload.get(RT_ATTR, r.v_s)
    cbt = tuple(json.loads(r.payload.get(CBT_ATTR, "[]")))
    payload = Payload([(n, v) for n, v in r.payload.items()
                       if n not in RESERVED_ATTRS])
    return PatternEvent(r.id, r.v_s, r.v_e, r.o_s, r.o_e, rt, cbt, payload)


def merged_event_from_row(r: TritemporalEvent) -> UnitemporalEvent:
    # In the merged single-axis reading the occurrence interval is the
    # event lifetime; wire rows keep an open valid interval so that every
    # row of a lineage carries identical valid columns.
    return UnitemporalEvent(r.o_s, r.o_e, r.payload, id=r.id)


# --- operational modules -----------------------------------------------------

@dataclass(frozen=True)
class OpModule:
    """A pure operator plus the engine-facing facts about it.

    ``lag`` is how far an output anchor can trail the inputs that settle it
    (the operator scope for pattern operators); ``coalescing`` marks
    operators whose outputs merge across input events, which makes their
    output guarantees data-dependent; ``retire`` decides when a retained
    input row can no longer influence any state at or past the horizon.
    """

    name: str
    arity: int
    pattern_mode: bool
    evaluate: Callable[[tuple, dict], Iterable]
    lag: Time = 0
    coalescing: bool = False
    retire: Callable[[TritemporalEvent, Time, int], bool] | None = None


def _retire_dead(row: TritemporalEvent, horizon: Time, port: int) -> bool:
    return row.o_e != INF and row.o_e < horizon


def _retire_never(row: TritemporalEvent, horizon: Time, port: int) -> bool:
    return False


def _retire_pattern(w: Time, keep_ports: tuple[int, ...] = ()
                    ) -> Callable[[TritemporalEvent, Time, int], bool]:
    def retire(row: TritemporalEvent, horizon: Time, port: int) -> bool:
        if port in keep_ports:
            return False
        return row.o_e != INF and max(row.o_e, row.v_s + w) < horizon - w
    return retire


def build_module(kind: str, **params) -> OpModule:
    """Construct an operational module for one algebra or pattern operator."""

    def merged(fn, lag=0, coalescing=False, retire=_retire_dead, arity=1):
        return OpModule(kind, arity, False, fn, lag, coalescing, retire)

    if kind == "project":
        f = params["f"]
        return merged(lambda ports, store: algebra.project(ports[0], f))
    if kind == "select":
        f = params["f"]
        return merged(lambda ports, store: algebra.select(ports[0], f))
    if kind == "join":
        theta = params["theta"]
        return merged(lambda ports, store: algebra.join(ports[0], ports[1], theta),
                      arity=2)
    if kind == "union":
        return merged(lambda ports, store: algebra.union(ports[0], ports[1]),
                      coalescing=True, retire=_retire_never, arity=2)
    if kind == "difference":
        return merged(lambda ports, store: algebra.difference(ports[0], ports[1]),
                      coalescing=True, retire=_retire_never, arity=2)
    if kind == "groupby":
        key = tuple(params.get("key", ()))
        agg = params.get("agg", "count")
        target = params.get("target")
        out = params.get("out")
        return merged(
            lambda ports, store: algebra.groupby_aggregate(ports[0], key, agg, target, out),
            coalescing=True, retire=_retire_never)
    if kind == "alter_lifetime":
        fns = params["fns"]
        lag = params.get("lag", 0)
        return merged(lambda ports, store: algebra.alter_lifetime(ports[0], fns),
                      lag=lag, retire=_retire_never)
    if kind == "window":
        wl = params["wl"]
        return merged(lambda ports, store: algebra.window(ports[0], wl))
    if kind == "hopping_window":
        p = params["p"]
        return merged(lambda ports, store: algebra.hopping_window(ports[0], p),
                      lag=p,
                      retire=lambda row, horizon, port: row.o_e != INF
                      and row.o_e + p < horizon)
    if kind == "inserts":
        return merged(lambda ports, store: algebra.inserts(ports[0]),
                      retire=_retire_never)
    if kind == "deletes":
        return merged(lambda ports, store: algebra.deletes(ports[0]),
                      retire=_retire_never)

    def pattern(fn, arity, w, lag=None):
        return OpModule(kind, arity, True, fn, w if lag is None else lag,
                        False, _retire_pattern(w))

    w = params.get("w", 1)
    k = params.get("k", 2)
    accept = params.get("accept")
    blocks = params.get("blocks")
    if kind == "sequence":
        return pattern(lambda ports, store: patterns.sequence(ports, w, accept=accept),
                       k, w)
    if kind == "atleast":
        n = params["n"]
        return pattern(lambda ports, store: patterns.atleast(n, ports, w, accept=accept),
                       k, w)
    if kind == "atmost":
        n = params["n"]
        return pattern(lambda ports, store: patterns.atmost(n, ports, w, accept=accept),
                       k, w)
    if kind == "all":
        return pattern(lambda ports, store: patterns.all_of(ports, w, accept=accept),
                       k, w)
    if kind == "any":
        return pattern(lambda ports, store: patterns.any_of(ports, accept=accept),
                       k, 1)
    if kind == "unless":
        return pattern(
            lambda ports, store: patterns.unless(ports[0], ports[1], w,
                                                 accept=accept, blocks=blocks),
            2, w)
    if kind == "not":
        return pattern(
            lambda ports, store: patterns.not_seq(ports[-1], ports[:-1], w,
                                                  accept=accept, blocks=blocks),
            k + 1, w)
    if kind == "cancel_when":
        # Cancellation looks back to each event's root time, which is not
        # bounded by any scope: cancellers must never be forgotten.
        module = pattern(
            lambda ports, store: patterns.cancel_when(ports[0], ports[1],
                                                      accept=accept, blocks=blocks),
            2, w, lag=0)
        return OpModule(module.name, module.arity, True, module.evaluate,
                        0, False, _retire_pattern(w, keep_ports=(1,)))
    if kind == "filter":
        return pattern(
            lambda ports, store: frozenset(
                e for e in ports[0]
                if accept is None or accept(((0, e),))),
            1, 0, lag=0)
    raise ValueError(f"unknown operator kind {kind!r}")


# --- the operator instance ---------------------------------------------------

class _Port:
    __slots__ = ("threshold", "reduced", "seen")

    def __init__(self):
        self.threshold: Time = NEG
        self.reduced: dict[str, TritemporalEvent] = {}
        self.seen: set[str] = set()


class _Tracked:
    __slots__ = ("k", "event", "o_e")

    def __init__(self, k, event, o_e):
        self.k = k
        self.event = event
        self.o_e = o_e


class _Buffered:
    __slots__ = ("sync", "seq", "port", "row", "seen_at_arrival")

    def __init__(self, sync, seq, port, row, seen_at_arrival):
        self.sync = sync
        self.seq = seq
        self.port = port
        self.row = row
        self.seen_at_arrival = seen_at_arrival


class OperatorInstance:
    """One operator under a consistency monitor.

    Not safe for concurrent use: each instance belongs to one logical
    worker; pipelines may place distinct instances on distinct workers and
    connect them with order-preserving links.
    """

    def __init__(self, module: OpModule, level: ConsistencyLevel = MIDDLE,
                 name: str | None = None, store: dict | None = None,
                 clock: list | None = None):
        self.module = module
        self.level = level
        self.name = name or module.name
        self._store = {} if store is None else store
        self._ports = [_Port() for _ in range(module.arity)]
        self._buffer: list[_Buffered] = []
        self._tracked: dict[tuple, _Tracked] = {}
        self._incarnations: dict[str, int] = {}
        self._in_log: list[AnnotatedRow] = []
        self._out_log: list[AnnotatedRow] = []
        self._clock = clock if clock is not None else [0]
        self._seq = 0
        self._max_seen: Time = NEG
        self._dirty = False
        self._pending_switch_rows: list[TritemporalEvent] = []
        self.blocking_time: Time = 0
        self.max_state_rows = 0
        self.output_rows = 0
        self.retraction_rows = 0
        self.dropped_rows = 0

    # -- ingestion and guarantees

    def ingest(self, row: TritemporalEvent, port: int = 0) -> list[TritemporalEvent]:
        """Accept one arrival; returns whatever output it releases."""
        p = self._ports[port]
        row = self._restamp(row)
        sync = row.o_s if row.k not in p.seen else row.o_e
        p.seen.add(row.k)
        self._in_log.append(AnnotatedRow(sync, row))
        if self.module.pattern_mode:
            self._store[row.id] = pattern_event_from_row(row)
        horizon = self._horizon()
        if sync < horizon:
            self.dropped_rows += 1
            return []
        if sync > self._max_seen:
            self._max_seen = sync
        self._seq += 1
        self._buffer.append(_Buffered(sync, self._seq, port, row, self._max_seen))
        out = self._drain()
        self._sample_state()
        return out

    def declare_guarantee(self, threshold: Time, port: int = 0
                          ) -> tuple[list[TritemporalEvent], Guarantee | None]:
        """Raise one input's frontier; returns released rows and the output promise."""
        p = self._ports[port]
        if threshold < p.threshold:
            raise NonMonotoneGuarantee(
                f"threshold regressed from {p.threshold} to {threshold} on port {port}")
        p.threshold = threshold
        self._apply_horizon()
        out = self._drain(frontier_moved=True)
        self._sample_state()
        return out, self.output_guarantee()

    def flush(self) -> list[TritemporalEvent]:
        """End of stream: every input frontier jumps to infinity."""
        out = []
        for port in range(len(self._ports)):
            rows, _ = self.declare_guarantee(INF, port)
            out.extend(rows)
        return out

    def switch_level(self, new_level: ConsistencyLevel, at: SyncPointPair) -> None:
        """Change the consistency level at a sync point of both streams."""
        if not is_sync_point(self.input_table(), at):
            raise NotASyncPoint(f"({at.t_o}, {at.t_c}) is not a sync point of the input")
        if not is_sync_point(self.output_table(), at):
            raise NotASyncPoint(f"({at.t_o}, {at.t_c}) is not a sync point of the output")
        if new_level == self.level:
            return
        self.level = new_level
        self._apply_horizon()
        self._pending_switch_rows = self._drain(frontier_moved=True)

    def take_switch_rows(self) -> list[TritemporalEvent]:
        """Rows released by the most recent level switch."""
        rows = self._pending_switch_rows
        self._pending_switch_rows = []
        return rows

    def metrics(self) -> dict:
        return {
            "blocking_time": self.blocking_time,
            "max_state_rows": self.max_state_rows,
            "output_rows": self.output_rows,
            "retraction_rows": self.retraction_rows,
            "dropped_rows": self.dropped_rows,
        }

    def input_table(self) -> AnnotatedHistoryTable:
        return AnnotatedHistoryTable(self._in_log)

    def output_table(self) -> AnnotatedHistoryTable:
        return AnnotatedHistoryTable(self._out_log)

    def output_rows_list(self) -> list[TritemporalEvent]:
        return [r.event for r in self._out_log]

    def output_guarantee(self) -> Guarantee | None:
        frontier = self._guarantee_frontier()
        if frontier == NEG:
            return None
        threshold = frontier - self.module.lag
        if self.module.coalescing:
            # Any still-open output can shrink past the frontier and then be
            # re-extended by a later merge, forcing a removal at its start.
            at_risk = [t.event.v_s for t in self._tracked.values()
                       if t.o_e > frontier]
            if at_risk:
                threshold = min(threshold, min(at_risk) - 1)
        if threshold < 0:
            return None
        return Guarantee(self.name, threshold)

    # -- internals

    def _restamp(self, row: TritemporalEvent) -> TritemporalEvent:
        c_s = self._clock[0]
        self._clock[0] += 1
        return TritemporalEvent(row.k, row.id, row.v_s, row.v_e,
                                row.o_s, row.o_e, c_s, INF, row.payload)

    def _guarantee_frontier(self) -> Time:
        return min(p.threshold for p in self._ports)

    def _horizon(self) -> Time:
        if self.level.memory == INF:
            return NEG
        frontier = self._guarantee_frontier()
        if frontier == NEG:
            return NEG
        return frontier - self.level.memory

    def _release_frontier(self) -> Time:
        frontier = self._guarantee_frontier()
        if self.level.blocking == INF:
            return frontier
        if self._max_seen == NEG:
            return frontier
        return max(frontier, self._max_seen - self.level.blocking)

    def _apply_horizon(self) -> None:
        horizon = self._horizon()
        if horizon == NEG:
            return
        retire = self.module.retire or _retire_dead
        changed = False
        for port_i, p in enumerate(self._ports):
            stale = [k for k, row in p.reduced.items()
                     if retire(row, horizon, port_i)]
            for k in stale:
                del p.reduced[k]
                changed = True
        if changed:
            # Freeze silently: outputs that are no longer derivable from the
            # trimmed state keep their emitted rows but stop being repaired.
            ideal = self._ideal()
            for key in [k for k in self._tracked if k not in ideal]:
                del self._tracked[key]

    def _drain(self, frontier_moved: bool = False) -> list[TritemporalEvent]:
        release = self._release_frontier()
        ready = [b for b in self._buffer if b.sync <= release]
        if ready:
            self._buffer = [b for b in self._buffer if b.sync > release]
            ready.sort(key=lambda b: (b.sync, b.row.c_s, b.seq))
            for b in ready:
                # Waiting measured on the arrival clock: zero when a row is
                # applied within the same ingestion step that admitted it.
                self.blocking_time += max(0, self._clock[0] - b.row.c_s - 1)
                self._apply(b)
            self._dirty = True
        must = self._dirty or (frontier_moved and self.level.blocking == INF)
        if not must:
            return []
        self._dirty = False
        return self._reconcile()

    def _apply(self, b: _Buffered) -> None:
        p = self._ports[b.port]
        cur = p.reduced.get(b.row.k)
        if cur is None or _reduce_wins(b.row, cur):
            p.reduced[b.row.k] = b.row

    def _ideal(self) -> dict[tuple, object]:
        ports = []
        frm = pattern_event_from_row if self.module.pattern_mode else merged_event_from_row
        for p in self._ports:
            ports.append(tuple(frm(r) for r in p.reduced.values() if r.o_s < r.o_e))
        outputs = self.module.evaluate(tuple(ports), self._store)
        ideal: dict[tuple, object] = {}
        for e in outputs:
            ideal[self._stable_key(e)] = e
        return ideal

    def _stable_key(self, e) -> tuple:
        if self.module.pattern_mode:
            return ("p", e.id, e.v_s, e.v_e, e.o_s, e.rt, e.cbt, e.payload)
        return ("m", e.id, e.v_s, e.payload)

    def _fresh_k(self, key: tuple) -> str:
        digest = hashlib.md5(repr(key).encode()).hexdigest()[:10]
        n = self._incarnations.get(digest, 0) + 1
        self._incarnations[digest] = n
        return f"{self.name}:{digest}#{n}"

    def _out_event_oe(self, e) -> Time:
        return e.o_e if self.module.pattern_mode else e.v_e

    def _insert_row(self, k: str, e) -> TritemporalEvent:
        c_s = self._next_out_stamp()
        if self.module.pattern_mode:
            return pattern_event_to_row(e, k, c_s)
        return TritemporalEvent(k, e.id, e.v_s, INF, e.v_s, e.v_e, c_s, INF, e.payload)

    def _shrink_row(self, tracked: _Tracked, new_o_e: Time) -> TritemporalEvent:
        c_s = self._next_out_stamp()
        e = tracked.event
        if self.module.pattern_mode:
            base = pattern_event_to_row(e, tracked.k, c_s)
            return TritemporalEvent(tracked.k, base.id, base.v_s, base.v_e,
                                    base.o_s, new_o_e, c_s, INF, base.payload)
        return TritemporalEvent(tracked.k, e.id, e.v_s, INF,
                                e.v_s, new_o_e, c_s, INF, e.payload)

    def _next_out_stamp(self) -> Time:
        c_s = self._clock[0]
        self._clock[0] += 1
        return c_s

    def _reconcile(self) -> list[TritemporalEvent]:
        ideal = self._ideal()
        bound = None
        if self.level.blocking == INF:
            frontier = self._guarantee_frontier()
            bound = frontier - self.module.lag if frontier != NEG else NEG

        actions: list[tuple[Time, int, tuple, list]] = []
        for key, tracked in list(self._tracked.items()):
            now = ideal.get(key)
            new_o_e = self._out_event_oe(now) if now is not None else None
            if now is not None and new_o_e == tracked.o_e:
                continue
            anchor = tracked.event.o_s if self.module.pattern_mode else tracked.event.v_s
            if now is None:
                actions.append((anchor, 0, key, [("kill", key, None)]))
            elif new_o_e < tracked.o_e:
                actions.append((new_o_e, 0, key, [("shrink", key, now)]))
            else:
                actions.append((anchor, 0, key, [("kill", key, None),
                                                 ("insert", key, now)]))
        horizon = self._horizon()
        suppress_below = horizon - self.module.lag
        for key, e in ideal.items():
            if key not in self._tracked:
                anchor = e.o_s if self.module.pattern_mode else e.v_s
                if anchor < suppress_below:
                    # Forgotten past: results anchored behind the memory
                    # horizon are never (re)introduced.  The operator lag
                    # protects genuinely new results whose anchors trail
                    # the inputs that produced them.
                    continue
                if bound is None or anchor <= bound:
                    actions.append((anchor, 1, key, [("insert", key, e)]))

        actions.sort(key=lambda a: (a[0], a[1], repr(a[2])))
        emitted: list[TritemporalEvent] = []
        for _, _, _, steps in actions:
            for op, key, e in steps:
                if op == "insert":
                    k = self._fresh_k(key)
                    row = self._insert_row(k, e)
                    self._tracked[key] = _Tracked(k, e, self._out_event_oe(e))
                    self._log_out(row.o_s, row)
                elif op == "shrink":
                    tracked = self._tracked[key]
                    row = self._shrink_row(tracked, self._out_event_oe(e))
                    tracked.o_e = self._out_event_oe(e)
                    tracked.event = e
                    self.retraction_rows += 1
                    self._log_out(row.o_e, row)
                else:  # kill
                    tracked = self._tracked.pop(key)
                    row = self._shrink_row(tracked, tracked.event.o_s
                                           if self.module.pattern_mode
                                           else tracked.event.v_s)
                    self.retraction_rows += 1
                    self._log_out(row.o_e, row)
                emitted.append(row)
        return emitted

    def _log_out(self, sync: Time, row: TritemporalEvent) -> None:
        self.output_rows += 1
        self._out_log.append(AnnotatedRow(sync, row))
        if self.module.pattern_mode:
            self._store.setdefault(row.id, pattern_event_from_row(row))

    def _sample_state(self) -> None:
        held = sum(len(p.reduced) for p in self._ports) + len(self._buffer)
        if held > self.max_state_rows:
            self.max_state_rows = held


def _reduce_wins(row: TritemporalEvent, cur: TritemporalEvent) -> bool:
    if row.o_e != cur.o_e:
        return row.o_e < cur.o_e
    if row.c_s != cur.c_s:
        return row.c_s > cur.c_s
    return row.sort_key < cur.sort_key


def sync_points_of(a: AnnotatedHistoryTable) -> list[SyncPointPair]:
    """Every per-row pair that cleanly separates past from future."""
    pairs = sorted({(sync, event.c_s) for sync, event in a})
    out = []
    for t_o, t_c in pairs:
        p = SyncPointPair(t_o, t_c)
        if is_sync_point(a, p):
            out.append(p)
    return out


# --- pipelines ---------------------------------------------------------------

class _Node:
    __slots__ = ("instance", "parent", "parent_port", "plan")

    def __init__(self, instance, parent, parent_port, plan):
        self.instance = instance
        self.parent = parent
        self.parent_port = parent_port
        self.plan = plan


class Pipeline:
    """A compiled plan wired into a tree of operator instances.

    Rows fed to a named stream pass through every leaf reading it; each
    instance's output is the next one's input.  Slice and projection
    wrappers at the plan root are applied row-wise to emitted rows.  The
    whole pipeline shares one arrival clock and one lineage store, so
    predicate injection can resolve contributor references anywhere.
    """

    def __init__(self, plan, level: ConsistencyLevel = MIDDLE,
                 node_levels: Mapping[str, ConsistencyLevel] | None = None):
        self._store: dict = {}
        self._clock = [0]
        self._post: list = []
        while isinstance(plan, (SliceOp, ProjectOp)):
            self._post.append(plan)
            plan = plan.child
        self._post.reverse()
        self._nodes: list[_Node] = []
        self._leaves: dict[str, list[_Node]] = {}
        self._counter = 0
        node_levels = dict(node_levels or {})
        self._root = self._build(plan, None, 0, level, node_levels)
        self.outputs: list[TritemporalEvent] = []

    def _build(self, plan, parent, parent_port, level, node_levels) -> _Node:
        name = f"{type(plan).__name__.lower()}{self._counter}"
        self._counter += 1
        module = _module_for_plan(plan, self._store)
        instance = OperatorInstance(module, node_levels.get(name, level),
                                    name=name, store=self._store, clock=self._clock)
        node = _Node(instance, parent, parent_port, plan)
        self._nodes.append(node)
        if isinstance(plan, Leaf):
            self._leaves.setdefault(plan.stream, []).append(node)
        else:
            kids = list(patterns.plan_children(plan))
            for i, child in enumerate(kids):
                self._build(child, node, i, level, node_levels)
            if isinstance(plan, (UnlessOp, CancelWhenOp, NotOp)):
                self._build(plan.blocker, node, len(kids), level, node_levels)
        return node

    @property
    def streams(self) -> list[str]:
        return sorted(self._leaves)

    def feed(self, stream: str, row: TritemporalEvent) -> list[TritemporalEvent]:
        released = []
        for leaf in self._leaves.get(stream, []):
            released.extend(self._push(leaf, 0, row))
        self.outputs.extend(released)
        return released

    def guarantee(self, stream: str, threshold: Time) -> list[TritemporalEvent]:
        released = []
        for leaf in self._leaves.get(stream, []):
            released.extend(self._propagate_guarantee(leaf, 0, threshold))
        self.outputs.extend(released)
        return released

    def flush(self) -> list[TritemporalEvent]:
        released = []
        for node in self._nodes[::-1]:
            rows = node.instance.flush()
            released.extend(self._forward(node, rows))
        self.outputs.extend(released)
        return released

    def metrics(self) -> dict:
        per_node = {n.instance.name: n.instance.metrics() for n in self._nodes}
        totals = {key: sum(m[key] for m in per_node.values())
                  for key in ("blocking_time", "max_state_rows", "dropped_rows")}
        # Output and retraction counts describe the query's result stream,
        # not internal hand-offs, so they come from the root operator.
        root = self._root.instance
        totals["output_rows"] = root.output_rows
        totals["retraction_rows"] = root.retraction_rows
        return {"total": totals, "nodes": per_node}

    def root_instance(self) -> OperatorInstance:
        return self._root.instance

    def _push(self, node: _Node, port: int, row: TritemporalEvent) -> list[TritemporalEvent]:
        rows = node.instance.ingest(row, port)
        return self._forward(node, rows)

    def _forward(self, node: _Node, rows: list[TritemporalEvent]) -> list[TritemporalEvent]:
        if node.parent is None:
            return [out for r in rows if (out := self._postprocess(r)) is not None]
        released = []
        for r in rows:
            released.extend(self._push(node.parent, node.parent_port, r))
        return released

    def _propagate_guarantee(self, node: _Node, port: int,
                             threshold: Time) -> list[TritemporalEvent]:
        rows, out_g = node.instance.declare_guarantee(threshold, port)
        released = self._forward(node, rows)
        if node.parent is not None and out_g is not None:
            released.extend(self._propagate_guarantee(
                node.parent, node.parent_port, out_g.threshold))
        return released

    def _postprocess(self, row: TritemporalEvent) -> TritemporalEvent | None:
        for wrapper in self._post:
            if isinstance(wrapper, SliceOp):
                clipped = patterns.slice_table(HistoryTable([row]),
                                               wrapper.occ, wrapper.valid)
                rows = list(clipped)
                if not rows:
                    return None
                row = rows[0]
            else:
                keep = set(wrapper.attrs) | set(RESERVED_ATTRS)
                payload = Payload([(n, v) for n, v in row.payload.items() if n in keep])
                row = TritemporalEvent(row.k, row.id, row.v_s, row.v_e,
                                       row.o_s, row.o_e, row.c_s, row.c_e, payload)
        return row


def _module_for_plan(plan, store: dict) -> OpModule:
    accept = make_accept(plan, store)
    if isinstance(plan, Leaf):
        return build_module("filter", accept=accept)
    blocks = make_blocks(plan, store) if isinstance(plan, (UnlessOp, NotOp, CancelWhenOp)) else None
    if isinstance(plan, SequenceOp):
        return build_module("sequence", k=len(plan.children), w=plan.scope, accept=accept)
    if isinstance(plan, patterns.AtLeastOp):
        return build_module("atleast", n=plan.n, k=len(plan.children), w=plan.scope,
                            accept=accept)
    if isinstance(plan, patterns.AtMostOp):
        return build_module("atmost", n=plan.n, k=len(plan.children), w=plan.scope,
                            accept=accept)
    if isinstance(plan, patterns.AllOp):
        return build_module("all", k=len(plan.children), w=plan.scope, accept=accept)
    if isinstance(plan, patterns.AnyOp):
        return build_module("any", k=len(plan.children), accept=accept)
    if isinstance(plan, UnlessOp):
        return build_module("unless", w=plan.scope, accept=accept, blocks=blocks)
    if isinstance(plan, NotOp):
        return build_module("not", k=len(plan.children), w=plan.scope,
                            accept=accept, blocks=blocks)
    if isinstance(plan, CancelWhenOp):
        return build_module("cancel_when", accept=accept, blocks=blocks)
    raise TypeError(f"cannot build an operator for plan node {plan!r}")


def _level_from_obj(obj: dict) -> ConsistencyLevel:
    from .temporal import parse_time

    if "name" in obj:
        return ConsistencyLevel.named(obj["name"])
    return ConsistencyLevel(parse_time(obj["memory"], "memory"),
                            parse_time(obj["blocking"], "blocking"))


def _level_to_obj(level: ConsistencyLevel) -> dict:
    from .temporal import fmt_time

    return {"memory": fmt_time(level.memory), "blocking": fmt_time(level.blocking)}


def pipeline_to_obj(pipeline: Pipeline) -> dict:
    """The wiring format: a plan tree plus per-node consistency overrides."""
    root = pipeline._root.plan
    for wrapper in reversed(pipeline._post):
        root = (SliceOp(root, wrapper.occ, wrapper.valid)
                if isinstance(wrapper, SliceOp) else ProjectOp(root, wrapper.attrs))
    return {
        "plan": patterns.plan_to_obj(root),
        "node_levels": {n.instance.name: _level_to_obj(n.instance.level)
                        for n in pipeline._nodes},
    }


def pipeline_from_obj(obj: dict, default_level: ConsistencyLevel = MIDDLE) -> Pipeline:
    """Build a pipeline from the wiring format produced by the compiler side.

    ``obj["plan"]`` is the serialized plan tree; the optional
    ``obj["level"]`` names the default consistency level and
    ``obj["node_levels"]`` maps node names to per-node overrides.
    """
    plan = patterns.plan_from_obj(obj["plan"])
    level = _level_from_obj(obj["level"]) if "level" in obj else default_level
    overrides = {name: _level_from_obj(spec)
                 for name, spec in obj.get("node_levels", {}).items()}
    return Pipeline(plan, level, overrides)
