"""Tritemporal domain types and history-table canonicalization.

Every event row carries three half-open intervals over integer ticks:

* valid time ``[v_s, v_e)`` -- when the event holds, per its provider;
* occurrence time ``[o_s, o_e)`` -- when the assertion about the event was
  made and (if ever) withdrawn or superseded;
* arrival time ``[c_s, c_e)`` -- when the engine saw the row.

A history table is a finite set of such rows.  Rows that share a lineage
key ``k`` describe one assertion and its retractions: each later row
shrinks the occurrence end time, and shrinking it all the way to ``o_s``
removes the assertion entirely.  Canonicalization (reduce, then truncate
to a reference time ``t0``) collapses that bookkeeping into the surviving
state, which is what stream comparisons are defined on: two streams are
logically equivalent when their canonical tables agree after the arrival
columns are projected away.
"""

from __future__ import annotations

import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

INF = float("inf")

# Finite ticks are non-negative ints; INF is the only permitted float.
Time = int | float

Scalar = int | float | str | bool


class TemporalError(Exception):
    """Base class for errors raised by the temporal core."""


class InfiniteInterval(TemporalError):
    """An operation that requires a finite interval met an infinite one."""


class AmbiguousLineage(TemporalError):
    """Two rows of one lineage share the minimum arrival time."""


def is_time(value: object) -> bool:
    if value is INF or (isinstance(value, float) and value == INF):
        return True
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def check_time(value: Time, name: str = "timestamp") -> Time:
    if not is_time(value):
        raise ValueError(f"{name} must be a non-negative tick count or INF, got {value!r}")
    return value


def fmt_time(t: Time) -> int | str:
    """JSON form of a timestamp: plain int, or the text ``"inf"``."""
    return "inf" if t == INF else int(t)


def parse_time(value: object, name: str = "timestamp") -> Time:
    if value == "inf":
        return INF
    if isinstance(value, int) and not isinstance(value, bool):
        return check_time(value, name)
    raise ValueError(f"{name} must be an int or 'inf', got {value!r}")


def _scalar_key(v: Scalar) -> tuple:
    # bool before int: True is an int in Python but a distinct payload value.
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, int):
        return ("i", v)
    if isinstance(v, float):
        # Bitwise comparison: NaN equals NaN, 0.0 differs from -0.0.
        return ("f", struct.pack(">d", v))
    if isinstance(v, str):
        return ("s", v)
    raise TypeError(f"payload values must be int, float, str or bool, got {type(v).__name__}")


class Payload(Mapping):
    """An insertion-ordered, immutable attribute map.

    Equality is field-by-field and deterministic: floats compare bitwise,
    so coalescing and set difference never depend on float formatting.
    """

    __slots__ = ("_items", "_map", "_key", "_hash")

    def __init__(self, items: Mapping | Iterable[tuple[str, Scalar]] = ()):
        pairs = tuple(items.items()) if isinstance(items, Mapping) else tuple(items)
        seen: dict[str, Scalar] = {}
        for name, value in pairs:
            if not isinstance(name, str):
                raise TypeError(f"payload attribute names must be str, got {name!r}")
            if name in seen:
                raise ValueError(f"duplicate payload attribute {name!r}")
            _scalar_key(value)
            seen[name] = value
        object.__setattr__(self, "_items", pairs)
        object.__setattr__(self, "_map", seen)
        key = frozenset((n, _scalar_key(v)) for n, v in pairs)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __getitem__(self, name: str) -> Scalar:
        return self._map[name]

    def __iter__(self) -> Iterator[str]:
        return iter(n for n, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Payload):
            return self._key == other._key
        return NotImplemented

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}={v!r}" for n, v in self._items)
        return f"Payload({inner})"

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Payload is immutable")

    @property
    def canon(self) -> str:
        """Deterministic text form, usable as a sort key."""
        parts = []
        for name in sorted(self._map):
            tag, raw = _scalar_key(self._map[name])
            text = raw.hex() if isinstance(raw, bytes) else str(raw)
            parts.append(f"{name}={tag}:{text}")
        return ";".join(parts)


EMPTY_PAYLOAD = Payload()


def concat_payloads(parts: Iterable[Payload]) -> Payload:
    """Concatenate payloads left to right, suffixing colliding names.

    The second occurrence of a name becomes ``name#2``, the third ``name#3``
    and so on, so concatenation is deterministic and loses nothing.
    """
    out: list[tuple[str, Scalar]] = []
    counts: dict[str, int] = {}
    for p in parts:
        for name, value in p.items():
            n = counts.get(name, 0) + 1
            counts[name] = n
            out.append((name if n == 1 else f"{name}#{n}", value))
    return Payload(out)


@dataclass(frozen=True, slots=True)
class TritemporalEvent:
    """One row of a history table."""

    k: str
    id: str
    v_s: Time
    v_e: Time
    o_s: Time
    o_e: Time
    c_s: Time
    c_e: Time = INF
    payload: Payload = EMPTY_PAYLOAD

    def __post_init__(self):
        for name in ("v_s", "v_e", "o_s", "o_e", "c_s", "c_e"):
            check_time(getattr(self, name), name)
        if self.o_s > self.o_e:
            raise ValueError(f"occurrence interval reversed: [{self.o_s}, {self.o_e})")
        if self.c_s > self.c_e:
            raise ValueError(f"arrival interval reversed: [{self.c_s}, {self.c_e})")
        if self.o_s == self.o_e:
            # Full-removal rows may carry a degenerate valid interval.
            if self.v_s > self.v_e:
                raise ValueError(f"valid interval reversed: [{self.v_s}, {self.v_e})")
        elif self.v_s >= self.v_e:
            raise ValueError(f"valid interval empty: [{self.v_s}, {self.v_e})")

    @property
    def sort_key(self) -> tuple:
        return (self.k, self.o_s, self.o_e, self.c_s, self.c_e,
                self.id, self.v_s, self.v_e, self.payload.canon)

    def content(self, include_lineage: bool = True) -> tuple:
        """The row minus its arrival columns (and optionally its lineage key)."""
        head = (self.k,) if include_lineage else ()
        return head + (self.id, self.v_s, self.v_e, self.o_s, self.o_e, self.payload)


class HistoryTable:
    """A finite set of tritemporal rows."""

    __slots__ = ("rows",)

    def __init__(self, rows: Iterable[TritemporalEvent] = ()):
        object.__setattr__(self, "rows", frozenset(rows))

    def __iter__(self) -> Iterator[TritemporalEvent]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, row: object) -> bool:
        return row in self.rows

    def __eq__(self, other: object) -> bool:
        if isinstance(other, HistoryTable):
            return self.rows == other.rows
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.rows)

    def __repr__(self) -> str:
        return f"HistoryTable({len(self.rows)} rows)"

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("HistoryTable is immutable")

    def sorted_rows(self) -> list[TritemporalEvent]:
        return sorted(self.rows, key=lambda r: r.sort_key)


class AnnotatedRow(NamedTuple):
    sync: Time
    event: TritemporalEvent


class AnnotatedHistoryTable:
    """A history table whose rows carry their sync value."""

    __slots__ = ("rows",)

    def __init__(self, rows: Iterable[AnnotatedRow] = ()):
        object.__setattr__(self, "rows", frozenset(AnnotatedRow(*r) for r in rows))

    def __iter__(self) -> Iterator[AnnotatedRow]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, AnnotatedHistoryTable):
            return self.rows == other.rows
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.rows)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("AnnotatedHistoryTable is immutable")

    def sorted_rows(self) -> list[AnnotatedRow]:
        return sorted(self.rows, key=lambda r: (r.sync,) + r.event.sort_key)


@dataclass(frozen=True, slots=True)
class UnitemporalEvent:
    """A row of an ideal single-axis history table.

    The ``id`` is provenance only: it never participates in equality or
    hashing, because the run-time algebra is defined on (interval, payload)
    content and must not distinguish differently-labelled repackagings.
    """

    v_s: Time
    v_e: Time
    payload: Payload = EMPTY_PAYLOAD
    id: str = field(default="", compare=False)

    def __post_init__(self):
        check_time(self.v_s, "v_s")
        check_time(self.v_e, "v_e")
        if self.v_s >= self.v_e:
            raise ValueError(f"valid interval empty: [{self.v_s}, {self.v_e})")

    @property
    def sort_key(self) -> tuple:
        return (self.v_s, self.v_e, self.payload.canon)


@dataclass(frozen=True, slots=True)
class SyncPointPair:
    """A candidate synchronization point: occurrence time plus arrival time."""

    t_o: Time
    t_c: Time

    def __post_init__(self):
        check_time(self.t_o, "t_o")
        check_time(self.t_c, "t_c")


def meets(i1: tuple[Time, Time], i2: tuple[Time, Time]) -> bool:
    """True when the first half-open interval ends exactly where the second starts."""
    for s, e in (i1, i2):
        if s > e:
            raise ValueError(f"interval reversed: [{s}, {e})")
    return i1[1] == i2[0]


def coalesce_star(events: Iterable[UnitemporalEvent]) -> frozenset[UnitemporalEvent]:
    """Merge same-payload events whose intervals meet, to a fixpoint.

    On streams that keep same-payload intervals disjoint (the model's
    contract) the fixpoint is unique: no two output rows have equal payload
    and meeting intervals, and the union of intervals per payload is
    preserved.  Inputs that violate the contract still converge, merging
    the earliest meeting pair first so the result stays deterministic.
    """
    by_payload: dict[Payload, dict[tuple[Time, Time], str]] = {}
    for e in events:
        group = by_payload.setdefault(e.payload, {})
        group.setdefault((e.v_s, e.v_e), e.id)
    out: list[UnitemporalEvent] = []
    for payload, group in by_payload.items():
        changed = True
        while changed:
            changed = False
            for iv in sorted(group):
                partners = sorted(p for p in group if p[0] == iv[1])
                if partners:
                    left_id = group.pop(iv)
                    group.pop(partners[0])
                    merged = (iv[0], partners[0][1])
                    group.setdefault(merged, left_id)
                    changed = True
                    break
        out.extend(UnitemporalEvent(s, e, payload, id=eid)
                   for (s, e), eid in group.items())
    return frozenset(out)


def reduce(h: HistoryTable) -> HistoryTable:
    """Keep, per lineage key, only the row with the earliest occurrence end.

    Ties on ``o_e`` keep the latest arrival (largest ``c_s``): the most
    recent assertion wins.
    """
    best: dict[str, TritemporalEvent] = {}
    for row in h:
        cur = best.get(row.k)
        if cur is None or _reduce_wins(row, cur):
            best[row.k] = row
    return HistoryTable(best.values())


def _reduce_wins(row: TritemporalEvent, cur: TritemporalEvent) -> bool:
    if row.o_e != cur.o_e:
        return row.o_e < cur.o_e
    if row.c_s != cur.c_s:
        return row.c_s > cur.c_s
    return row.sort_key < cur.sort_key


def truncate(h: HistoryTable, t0: Time) -> HistoryTable:
    """Clamp occurrence ends to ``t0`` and drop rows that fall off.

    Rows starting after ``t0`` are removed, and so is any row whose
    occurrence interval is (or becomes) empty: ``o_e = o_s`` means the
    assertion was removed from the system entirely.  ``t0 = INF`` is
    allowed and performs no clamping, which is what comparisons "to
    infinity" need.
    """
    check_time(t0, "t0")
    out = []
    for row in h:
        if row.o_s > t0:
            continue
        o_e = min(row.o_e, t0)
        if o_e == row.o_s:
            continue
        if o_e != row.o_e:
            row = TritemporalEvent(row.k, row.id, row.v_s, row.v_e,
                                   row.o_s, o_e, row.c_s, row.c_e, row.payload)
        out.append(row)
    return HistoryTable(out)


def canonical_to(h: HistoryTable, t0: Time) -> HistoryTable:
    """The canonical history table to time ``t0``: reduce, then truncate."""
    return truncate(reduce(h), t0)


def canonical_at(h: HistoryTable, t0: Time) -> HistoryTable:
    """The canonical table at ``t0``: only assertions in effect at that instant.

    The intersection filter runs on the reduced (pre-truncation) table and
    keeps rows with ``o_s <= t0 <= o_e``; the survivors are then truncated.
    Filtering after truncation would make every table empty at its own
    truncation point, which contradicts the worked equivalence examples.
    """
    check_time(t0, "t0")
    if t0 == INF:
        raise ValueError("canonical_at requires a finite t0")
    reduced = reduce(h)
    kept = [row for row in reduced if row.o_s <= t0 <= row.o_e]
    return truncate(HistoryTable(kept), t0)


def shred(rows: Iterable[TritemporalEvent]) -> frozenset[TritemporalEvent]:
    """Split each row into unit-length occurrence fragments.

    A row covering ``[o_s, o_e)`` becomes ``o_e - o_s`` rows with
    consecutive unit intervals.  Fragments of a multi-unit row get suffixed
    lineage keys (``k#0``, ``k#1``, ...): each fragment is an independent
    assertion, and sharing ``k`` would make reduction collapse them.
    Unit-length rows pass through unchanged.
    """
    out: list[TritemporalEvent] = []
    for row in rows:
        if row.o_e == INF:
            raise InfiniteInterval(f"cannot shred infinite occurrence interval of {row.k!r}")
        width = row.o_e - row.o_s
        if width == 1:
            out.append(row)
            continue
        for i in range(width):
            out.append(TritemporalEvent(
                f"{row.k}#{i}", row.id, row.v_s, row.v_e,
                row.o_s + i, row.o_s + i + 1, row.c_s, row.c_e, row.payload))
    return frozenset(out)


def annotate_sync(h: HistoryTable) -> AnnotatedHistoryTable:
    """Pair each row with its sync value.

    Per lineage, the earliest arrival is the insertion (sync = ``o_s``);
    every other row is a retraction (sync = ``o_e``).
    """
    by_k: dict[str, list[TritemporalEvent]] = {}
    for row in h:
        by_k.setdefault(row.k, []).append(row)
    out = []
    for k, rows in by_k.items():
        min_cs = min(r.c_s for r in rows)
        firsts = [r for r in rows if r.c_s == min_cs]
        if len(firsts) > 1:
            raise AmbiguousLineage(f"lineage {k!r} has {len(firsts)} rows arriving at {min_cs}")
        insert = firsts[0]
        for row in rows:
            out.append(AnnotatedRow(row.o_s if row is insert else row.o_e, row))
    return AnnotatedHistoryTable(out)


def is_sync_point(a: AnnotatedHistoryTable, p: SyncPointPair) -> bool:
    """True when ``p`` cleanly separates past from future in both time domains."""
    for sync, event in a:
        if event.c_s <= p.t_c:
            if sync > p.t_o:
                return False
        elif sync <= p.t_o:
            return False
    return True


def projected(h: HistoryTable, include_lineage: bool = True) -> frozenset[tuple]:
    """Rows as tuples with arrival columns (and optionally lineage) removed."""
    return frozenset(row.content(include_lineage) for row in h)


def logically_equivalent(s1: HistoryTable, s2: HistoryTable, t0: Time,
                         mode: str = "to", *, include_lineage: bool = True) -> bool:
    """Compare canonical tables with arrival columns projected away.

    ``mode`` is ``"to"`` or ``"at"``.  ``t0 = INF`` is only meaningful with
    ``"to"`` and compares the fully reduced tables.  ``include_lineage=False``
    additionally projects the lineage key, which is what comparisons across
    independently re-encoded streams need (their keys are bookkeeping).
    """
    mode = mode.lower()
    if mode == "to":
        c1, c2 = canonical_to(s1, t0), canonical_to(s2, t0)
    elif mode == "at":
        c1, c2 = canonical_at(s1, t0), canonical_at(s2, t0)
    else:
        raise ValueError(f"mode must be 'to' or 'at', got {mode!r}")
    return projected(c1, include_lineage) == projected(c2, include_lineage)
