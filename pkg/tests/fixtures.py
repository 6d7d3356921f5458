"""Shared worked-example tables used across the test suite."""

from cedr.temporal import INF, HistoryTable, TritemporalEvent


def row(k, id, vs, ve, os, oe, cs, ce=INF, payload=None):
    from cedr.temporal import Payload
    return TritemporalEvent(k, id, vs, ve, os, oe, cs, ce,
                            Payload(payload or {}))


# A single event whose validity is first asserted optimistically, then
# modified twice; the second modification is issued as a correction that
# fully removes an earlier assertion and re-inserts it under a new lineage.
PROTOCOL_TABLE = HistoryTable([
    row("E0", "e0", 1, INF, 1, 5, 1, 4),
    row("E1", "e0", 1, 10, 5, INF, 2, 6),
    row("E0", "e0", 1, INF, 1, 3, 4, INF),
    row("E1", "e0", 1, 10, 5, 5, 5, INF),
    row("E2", "e0", 1, 10, 3, INF, 6, INF),
])

# Two encodings of the same state changes, arriving in different orders.
TABLE_A = HistoryTable([
    row("E0", "e0", 1, 10, 1, 5, 1, 3),
    row("E0", "e0", 1, 10, 1, 3, 3, INF),
])
TABLE_B = HistoryTable([
    row("E0", "e0", 1, 10, 1, INF, 1, 2),
    row("E0", "e0", 1, 10, 1, 5, 2, INF),
])

REDUCED_A = HistoryTable([row("E0", "e0", 1, 10, 1, 3, 3, INF)])
REDUCED_B = HistoryTable([row("E0", "e0", 1, 10, 1, 5, 2, INF)])

CANONICAL_A_AT3 = HistoryTable([row("E0", "e0", 1, 10, 1, 3, 3, INF)])
CANONICAL_B_AT3 = HistoryTable([row("E0", "e0", 1, 10, 1, 3, 2, INF)])

# An insert followed by a late retraction; the Sync column distinguishes them.
ANNOTATED_SOURCE = HistoryTable([
    row("E0", "e0", 1, 10, 1, 10, 0, 7),
    row("E0", "e0", 1, 10, 1, 5, 7, 10),
])
ANNOTATED_SYNCS = {(0, 1), (7, 5)}  # (c_s, expected sync) per row
