import random

import pytest

from cedr.engine import (
    MIDDLE,
    STRONG,
    WEAK,
    ConsistencyLevel,
    Guarantee,
    NonMonotoneGuarantee,
    NotASyncPoint,
    OperatorInstance,
    Pipeline,
    build_module,
    pattern_event_from_row,
    pattern_event_to_row,
    sync_points_of,
)
from cedr.patterns import AttrRef, Leaf, PatternEvent, Predicate, SequenceOp, UnlessOp, inject_predicates
from cedr.temporal import (
    INF,
    AnnotatedHistoryTable,
    AnnotatedRow,
    HistoryTable,
    Payload,
    SyncPointPair,
    TritemporalEvent,
    canonical_at,
    canonical_to,
    logically_equivalent,
    projected,
)

from engine_harness import (
    MERGED_PARAMS,
    PATTERN_PARAMS,
    arity_of,
    content_set,
    encode_stream,
    gen_pattern,
    honest_schedule,
    interleave,
    make_merged_workload,
    make_pattern_workload,
    module_under_test,
    oracle_rows,
    run_module,
)
from fixtures import row


class TestConsistencyLevel:
    def test_presets(self):
        assert STRONG == ConsistencyLevel(INF, INF)
        assert MIDDLE == ConsistencyLevel(INF, 0)
        assert WEAK == ConsistencyLevel(0, 0)

    def test_blocking_clamped_to_memory(self):
        assert ConsistencyLevel(5, 20).blocking == 5

    def test_named(self):
        assert ConsistencyLevel.named("Strong") == STRONG
        with pytest.raises(ValueError):
            ConsistencyLevel.named("best-effort")


class TestWireFormat:
    def test_pattern_round_trip(self):
        e = PatternEvent("5:a#b..", 3, 9, 3, INF, rt=1, cbt=("a", "b"),
                         payload=Payload({"Machine_Id": "m1"}))
        r = pattern_event_to_row(e, "K", 7)
        assert r.payload["@rt"] == 1
        assert pattern_event_from_row(r) == e

    def test_primitive_stays_clean(self):
        e = PatternEvent("a", 3, 9, 3, INF, rt=3, payload=Payload({"x": 1}))
        r = pattern_event_to_row(e, "K", 0)
        assert "@rt" not in r.payload
        assert pattern_event_from_row(r) == e


class TestStrongMatchesOrderedRun:
    @pytest.mark.parametrize("kind", ["select", "sequence"])
    def test_disorder_is_invisible(self, kind):
        for seed in range(10):
            rng = random.Random(f"strong-{kind}-{seed}")
            maker = make_pattern_workload if kind in PATTERN_PARAMS \
                else make_merged_workload
            ideal, arrivals = maker(rng, arity_of(kind), 8, skew=4,
                                    retract_prob=0.3)
            _, disordered_out = run_module(module_under_test(kind),
                                           arrivals, STRONG)
            ordered = sorted(arrivals, key=lambda a: (a[1].o_s, a[1].c_s))
            _, ordered_out = run_module(module_under_test(kind),
                                        ordered, STRONG)
            assert logically_equivalent(HistoryTable(disordered_out),
                                        HistoryTable(ordered_out), INF, "to")

    def test_every_strong_output_row_is_a_sync_point(self):
        # Distinct anchors keep the per-entry condition decidable; the last
        # entry of any equal-sync cluster must yield a sync point.
        from cedr.disorder import rows_from_pattern
        from cedr.patterns import PatternEvent

        from engine_harness import interleave

        events = [PatternEvent(f"a{i}", 7 * i + 1, 7 * i + 3, 7 * i + 1, INF,
                               rt=7 * i + 1) for i in range(6)]
        rows = rows_from_pattern(events, key_prefix="A")
        rng = random.Random("sp-a")
        rng.shuffle(rows)
        arrivals = [(0, r) for r in rows]
        schedule = honest_schedule(arrivals, every=2) + \
            [(len(arrivals), 1, INF)]
        inst, out = run_module(module_under_test("unless"), arrivals,
                               STRONG, schedule)
        assert out, "workload produced no output"
        table = inst.output_table()
        points = set(sync_points_of(table))
        last_of_cluster: dict = {}
        for sync, event in table:
            cur = last_of_cluster.get(sync)
            if cur is None or event.c_s > cur.c_s:
                last_of_cluster[sync] = event
        for sync, event in last_of_cluster.items():
            assert SyncPointPair(sync, event.c_s) in points, (sync, event.c_s)


class TestMiddleRetractionProtocol:
    def test_late_blocker_retracts_emitted_output(self):
        module = module_under_test("unless")  # scope 6
        inst = OperatorInstance(module, MIDDLE)
        anchor = pattern_event_to_row(
            PatternEvent("a1", 10, 30, 10, INF, rt=10), "A1", 0)
        blocker = pattern_event_to_row(
            PatternEvent("b1", 13, 30, 13, INF, rt=13), "B1", 1)
        first = inst.ingest(anchor, 0)
        assert len(first) == 1 and first[0].o_s == 10
        second = inst.ingest(blocker, 1)
        assert len(second) == 1
        retraction = second[0]
        assert retraction.k == first[0].k
        assert retraction.o_s == retraction.o_e == 10
        assert inst.metrics()["retraction_rows"] == 1
        assert content_set(inst.output_rows_list()) == frozenset()

    def test_shrink_keeps_lineage(self):
        module = module_under_test("select")
        inst = OperatorInstance(module, MIDDLE)
        optimistic = TritemporalEvent("K", "e", 5, INF, 5, INF, 0,
                                      payload=Payload({"g": 0, "x": 7}))
        shrink = TritemporalEvent("K", "e", 5, INF, 5, 9, 1,
                                  payload=Payload({"g": 0, "x": 7}))
        out1 = inst.ingest(optimistic, 0)
        out2 = inst.ingest(shrink, 0)
        assert len(out1) == 1 and out1[0].o_e == INF
        assert len(out2) == 1 and out2[0].o_e == 9
        assert out2[0].k == out1[0].k
        assert inst.metrics()["retraction_rows"] == 1


class TestWeakDropsBeyondHorizon:
    def test_late_row_dropped_and_counted(self):
        module = module_under_test("select")
        inst = OperatorInstance(module, WEAK)
        inst.declare_guarantee(10, 0)
        late = TritemporalEvent("K", "e", 5, INF, 5, 9, 0,
                                payload=Payload({"g": 0, "x": 5}))
        assert inst.ingest(late, 0) == []
        assert inst.metrics()["dropped_rows"] == 1

    def test_outputs_stay_at_correct_for_accepted_rows(self):
        # After a drop, the output still reconciles to the denotation of the
        # rows weak retained: at-correctness over the accepted stream.
        from cedr.disorder import rows_from_unitemporal
        from cedr.temporal import UnitemporalEvent

        events = [UnitemporalEvent(4 * i, 4 * i + 3, Payload({"g": 0, "x": 5}),
                                   id=f"e{i}") for i in range(5)]
        rows = rows_from_unitemporal(events)
        late, rest = rows[0], rows[1:]
        inst = OperatorInstance(module_under_test("select"), WEAK)
        out = []
        for r in rest:
            out.extend(inst.ingest(r, 0))
        inst.declare_guarantee(17, 0)
        assert inst.ingest(late, 0) == []          # sync 0 < frontier 17
        assert inst.metrics()["dropped_rows"] == 1
        out.extend(inst.flush())
        accepted = content_set(oracle_rows(module_under_test("select"),
                                           (events[1:],)))
        assert content_set(out) == accepted

    def test_middle_keeps_the_same_row(self):
        module = module_under_test("select")
        inst = OperatorInstance(module, MIDDLE)
        inst.declare_guarantee(10, 0)
        late = TritemporalEvent("K", "e", 5, INF, 5, 9, 0,
                                payload=Payload({"g": 0, "x": 5}))
        assert len(inst.ingest(late, 0)) == 1


class TestGuarantees:
    def test_identity_propagation_on_unary(self):
        inst = OperatorInstance(module_under_test("select"), STRONG)
        _, g = inst.declare_guarantee(10, 0)
        assert g == Guarantee("select", 10)

    def test_min_rule_on_binary(self):
        inst = OperatorInstance(module_under_test("join"), STRONG)
        _, g = inst.declare_guarantee(10, 0)
        assert g is None
        _, g = inst.declare_guarantee(7, 1)
        assert g.threshold == 7

    def test_pattern_scope_subtracted(self):
        inst = OperatorInstance(module_under_test("unless"), STRONG)  # w=6
        inst.declare_guarantee(20, 0)
        _, g = inst.declare_guarantee(20, 1)
        assert g.threshold == 14

    def test_regression_rejected(self):
        inst = OperatorInstance(module_under_test("select"), STRONG)
        inst.declare_guarantee(10, 0)
        with pytest.raises(NonMonotoneGuarantee):
            inst.declare_guarantee(8, 0)

    @pytest.mark.parametrize("kind", ["select", "window", "unless", "sequence",
                                      "union", "groupby"])
    @pytest.mark.parametrize("level", [STRONG, MIDDLE, WEAK])
    def test_soundness_no_row_behind_emitted_guarantee(self, kind, level):
        rng = random.Random(f"sound-{kind}-{level.blocking}")
        for trial in range(8):
            maker = make_pattern_workload if kind in PATTERN_PARAMS \
                else make_merged_workload
            _, arrivals = maker(rng, arity_of(kind), 8, skew=3, retract_prob=0.2)
            schedule = honest_schedule(arrivals, every=3)
            module = module_under_test(kind)
            inst = OperatorInstance(module, level)
            floor = -1
            si, sched = 0, sorted(schedule, key=lambda s: s[0])

            def check(rows):
                for r in rows:
                    sync = r.o_s if r.o_e > r.o_s or r.o_e == INF else r.o_e
                    for s, e in inst.output_table():
                        pass
            emitted_after = []
            for i, (port, r) in enumerate(arrivals):
                while si < len(sched) and sched[si][0] <= i:
                    rows, g = inst.declare_guarantee(sched[si][2], sched[si][1])
                    emitted_after.extend((floor, r2) for r2 in rows)
                    if g is not None:
                        floor = max(floor, g.threshold)
                    si += 1
                emitted_after.extend((floor, r2) for r2 in inst.ingest(r, port))
            while si < len(sched):
                rows, g = inst.declare_guarantee(sched[si][2], sched[si][1])
                emitted_after.extend((floor, r2) for r2 in rows)
                if g is not None:
                    floor = max(floor, g.threshold)
                si += 1
            emitted_after.extend((floor, r2) for r2 in inst.flush())
            annotated = {r.event: r.sync for r in inst.output_table()}
            for promised, out_row in emitted_after:
                assert annotated[out_row] > promised, (kind, trial, out_row)


class TestSyncPoints:
    def test_fully_ordered_every_row_yields(self):
        t = AnnotatedHistoryTable([
            AnnotatedRow(1, row("A", "a", 1, 9, 1, INF, 0)),
            AnnotatedRow(2, row("B", "b", 2, 9, 2, INF, 1)),
            AnnotatedRow(3, row("C", "c", 3, 9, 3, INF, 2)),
        ])
        points = sync_points_of(t)
        assert {(p.t_o, p.t_c) for p in points} == {(1, 0), (2, 1), (3, 2)}

    def test_out_of_order_row_yields_none(self):
        t = AnnotatedHistoryTable([
            AnnotatedRow(1, row("A", "a", 1, 9, 1, INF, 0)),
            AnnotatedRow(3, row("C", "c", 3, 9, 3, INF, 1)),
            AnnotatedRow(2, row("B", "b", 2, 9, 2, INF, 2)),
        ])
        points = {(p.t_o, p.t_c) for p in sync_points_of(t)}
        assert (3, 1) not in points
        assert (1, 0) in points

    def test_empty(self):
        assert sync_points_of(AnnotatedHistoryTable()) == []


class TestWellBehaved:
    """Re-encoded equivalent inputs give outputs equivalent to infinity."""

    KINDS = ("select", "join", "window", "union", "deletes",
             "sequence", "unless", "cancel_when")

    @pytest.mark.parametrize("kind", KINDS)
    def test_engine_matches_denotation(self, kind):
        rng = random.Random(f"wb-{kind}")
        maker = make_pattern_workload if kind in PATTERN_PARAMS \
            else make_merged_workload
        module = module_under_test(kind)
        for trial in range(12):
            ideal, arrivals = maker(rng, arity_of(kind), 8,
                                    skew=rng.randint(0, 6),
                                    retract_prob=rng.choice([0.0, 0.3, 1.0]))
            level = (STRONG, MIDDLE, WEAK)[trial % 3]
            _, out = run_module(module_under_test(kind), arrivals, level)
            want = content_set(oracle_rows(module, ideal))
            assert content_set(out) == want, (kind, trial, level)


class TestCrossLevelAgreement:
    def _canonical_at_sync_points(self, inst):
        table = inst.output_table()
        points = sync_points_of(table)
        state = {}
        for p in points:
            prefix = HistoryTable([r.event for r in table if r.event.c_s <= p.t_c])
            state[p.t_o] = projected(canonical_at(prefix, p.t_o), include_lineage=False) \
                if p.t_o != INF else None
        return {t: s for t, s in state.items() if s is not None}

    @pytest.mark.parametrize("kind", ["select", "window", "sequence", "unless"])
    def test_levels_agree_at_common_sync_points(self, kind):
        rng = random.Random(f"agree-{kind}")
        maker = make_pattern_workload if kind in PATTERN_PARAMS \
            else make_merged_workload
        for trial in range(8):
            _, arrivals = maker(rng, arity_of(kind), 8, skew=4, retract_prob=0.25)
            schedule = honest_schedule(arrivals, every=3)
            states = []
            for level in (STRONG, MIDDLE, WEAK):
                inst, _ = run_module(module_under_test(kind), arrivals,
                                     level, schedule)
                states.append(self._canonical_at_sync_points(inst))
            common = set(states[0]) & set(states[1]) & set(states[2])
            for t_o in common:
                assert states[0][t_o] == states[1][t_o] == states[2][t_o], (kind, trial, t_o)


class TestSwitchLevel:
    def _drive(self, arrivals, schedule, from_level, to_level):
        # Switch at the first arrival index (past the first third) where a
        # settled sync point exists in both the input and output streams.
        inst = OperatorInstance(module_under_test("select"), from_level)
        sched = sorted(schedule, key=lambda s: s[0])
        si = 0
        out = []
        switched = False
        floor = -1
        min_pos = len(arrivals) // 3
        for i, (port, r) in enumerate(arrivals):
            while si < len(sched) and sched[si][0] <= i:
                rows, _ = inst.declare_guarantee(sched[si][2], sched[si][1])
                floor = max(floor, sched[si][2])
                out.extend(rows)
                si += 1
            if i >= min_pos and not switched and floor >= 0:
                from cedr.temporal import is_sync_point
                usable = [p for p in sync_points_of(inst.output_table())
                          if p.t_o != INF and p.t_o <= floor
                          and is_sync_point(inst.input_table(), p)]
                if usable:
                    inst.switch_level(to_level, usable[-1])
                    out.extend(inst.take_switch_rows())
                    switched = True
            out.extend(inst.ingest(r, port))
        while si < len(sched):
            rows, _ = inst.declare_guarantee(sched[si][2], sched[si][1])
            out.extend(rows)
            si += 1
        out.extend(inst.flush())
        return inst, out, switched

    def test_switch_matches_from_scratch_run(self):
        rng = random.Random("switch")
        hits = 0
        for trial in range(20):
            _, arrivals = make_merged_workload(rng, 1, 8, skew=2, retract_prob=0.2)
            schedule = honest_schedule(arrivals, every=2)
            for a, b in ((STRONG, MIDDLE), (MIDDLE, STRONG), (MIDDLE, WEAK)):
                inst, out, switched = self._drive(arrivals, schedule, a, b)
                if not switched:
                    continue
                hits += 1
                pure, pure_out = run_module(module_under_test("select"),
                                            arrivals, b, schedule)
                assert content_set(out) == content_set(pure_out)
        assert hits > 0

    def test_switch_away_from_sync_point_rejected(self):
        inst = OperatorInstance(module_under_test("select"), MIDDLE)
        r1 = TritemporalEvent("K", "e", 5, INF, 5, INF, 0,
                              payload=Payload({"g": 0, "x": 5}))
        inst.ingest(r1, 0)
        with pytest.raises(NotASyncPoint):
            inst.switch_level(STRONG, SyncPointPair(0, 99))

    def test_switch_to_same_level_is_noop(self):
        inst = OperatorInstance(module_under_test("select"), MIDDLE)
        r1 = TritemporalEvent("K", "e", 5, INF, 5, INF, 0,
                              payload=Payload({"g": 0, "x": 5}))
        inst.ingest(r1, 0)
        inst.switch_level(MIDDLE, SyncPointPair(5, 1))
        assert inst.take_switch_rows() == []


class TestMetricsDirectional:
    def test_ordered_input_with_prompt_guarantees_never_blocks(self):
        # Distinct sync values: a tie forces the first of two equal-sync rows
        # to wait for its twin before any honest guarantee can cover it.
        from cedr.disorder import rows_from_unitemporal
        from cedr.temporal import UnitemporalEvent
        events = [UnitemporalEvent(3 * i, 3 * i + 2, Payload({"g": 0, "x": i}),
                                   id=f"e{i}") for i in range(6)]
        arrivals = [(0, r) for r in rows_from_unitemporal(events)]
        schedule = honest_schedule(arrivals, every=1)
        for level in (STRONG, MIDDLE, WEAK):
            inst, _ = run_module(module_under_test("select"), arrivals,
                                 level, schedule)
            m = inst.metrics()
            assert m["blocking_time"] == 0
            assert m["retraction_rows"] == 0
            assert m["dropped_rows"] == 0

    def test_disorder_blocks_strong_only(self):
        rng = random.Random("skewed")
        _, arrivals = make_merged_workload(rng, 1, 10, skew=20, retract_prob=0.4)
        schedule = honest_schedule(arrivals, every=2)
        metrics = {}
        for level, name in ((STRONG, "strong"), (MIDDLE, "middle"), (WEAK, "weak")):
            inst, _ = run_module(module_under_test("select"), arrivals,
                                 level, schedule)
            metrics[name] = inst.metrics()
        assert metrics["strong"]["blocking_time"] > 0
        assert metrics["middle"]["blocking_time"] == 0
        assert metrics["weak"]["blocking_time"] == 0
        assert metrics["middle"]["retraction_rows"] > 0
        assert metrics["weak"]["output_rows"] <= metrics["middle"]["output_rows"]
        assert metrics["weak"]["max_state_rows"] <= metrics["middle"]["max_state_rows"]


class TestPipeline:
    def _plan(self):
        return inject_predicates(
            UnlessOp(SequenceOp((Leaf("INSTALL", "x"), Leaf("SHUTDOWN", "y")), 720),
                     Leaf("RESTART", "z"), 5),
            [Predicate(AttrRef("x", "Machine_Id"), "=", AttrRef("y", "Machine_Id")),
             Predicate(AttrRef("x", "Machine_Id"), "=", AttrRef("z", "Machine_Id"))])

    def _feed(self, pipe, name, event):
        pipe.feed(name, pattern_event_to_row(event, f"{name}:{event.id}", 0))

    def test_composite_emitted_without_restart(self):
        pipe = Pipeline(self._plan(), MIDDLE)
        self._feed(pipe, "INSTALL", PatternEvent(
            "i1", 10, 1000, 10, INF, rt=10, payload=Payload({"Machine_Id": "m1"})))
        self._feed(pipe, "SHUTDOWN", PatternEvent(
            "s1", 100, 1000, 100, INF, rt=100, payload=Payload({"Machine_Id": "m1"})))
        pipe.flush()
        final = content_set(pipe.outputs)
        assert len(final) == 1

    def test_matching_restart_blocks(self):
        pipe = Pipeline(self._plan(), MIDDLE)
        self._feed(pipe, "INSTALL", PatternEvent(
            "i1", 10, 1000, 10, INF, rt=10, payload=Payload({"Machine_Id": "m1"})))
        self._feed(pipe, "SHUTDOWN", PatternEvent(
            "s1", 100, 1000, 100, INF, rt=100, payload=Payload({"Machine_Id": "m1"})))
        self._feed(pipe, "RESTART", PatternEvent(
            "r1", 103, 1000, 103, INF, rt=103, payload=Payload({"Machine_Id": "m1"})))
        pipe.flush()
        assert content_set(pipe.outputs) == frozenset()

    def test_unrelated_restart_does_not_block(self):
        pipe = Pipeline(self._plan(), MIDDLE)
        self._feed(pipe, "INSTALL", PatternEvent(
            "i1", 10, 1000, 10, INF, rt=10, payload=Payload({"Machine_Id": "m1"})))
        self._feed(pipe, "SHUTDOWN", PatternEvent(
            "s1", 100, 1000, 100, INF, rt=100, payload=Payload({"Machine_Id": "m1"})))
        self._feed(pipe, "RESTART", PatternEvent(
            "r1", 103, 1000, 103, INF, rt=103, payload=Payload({"Machine_Id": "m2"})))
        pipe.flush()
        assert len(content_set(pipe.outputs)) == 1

    def test_metrics_shape(self):
        pipe = Pipeline(self._plan(), MIDDLE)
        m = pipe.metrics()
        assert set(m) == {"total", "nodes"}
        assert set(m["total"]) == {"blocking_time", "max_state_rows",
                                   "output_rows", "retraction_rows", "dropped_rows"}

    def test_per_node_level_override(self):
        plan = self._plan()
        pipe = Pipeline(plan, MIDDLE, node_levels={"unlessop0": STRONG})
        assert pipe.root_instance().level == STRONG


class TestWiringFormat:
    def _pipe(self):
        return Pipeline(self._plan(), MIDDLE,
                        node_levels={"unlessop0": STRONG})

    _plan = TestPipeline._plan

    def test_round_trip_preserves_levels(self):
        import json

        from cedr.engine import pipeline_from_obj, pipeline_to_obj

        obj = pipeline_to_obj(self._pipe())
        json.dumps(obj)  # JSON-safe
        rebuilt = pipeline_from_obj(obj)
        assert rebuilt.root_instance().level == STRONG
        assert {n.instance.name: n.instance.level.blocking
                for n in rebuilt._nodes} == \
            {n.instance.name: n.instance.level.blocking
             for n in self._pipe()._nodes}

    def test_named_default_level(self):
        from cedr.engine import pipeline_from_obj, pipeline_to_obj

        obj = pipeline_to_obj(self._pipe())
        obj["level"] = {"name": "weak"}
        obj["node_levels"] = {}
        rebuilt = pipeline_from_obj(obj)
        assert rebuilt.root_instance().level == WEAK


class TestPipelineCrossLevel:
    """Full compiled plans agree across levels, including guarantee relay."""

    QUERY_PLAN_SOURCES = [
        ("EVENT q WHEN UNLESS(SEQUENCE(A x, B AS y, 12), C AS z, 4) "
         "WHERE {x.Machine_Id = y.Machine_Id} AND {x.Machine_Id = z.Machine_Id}"),
        "EVENT q WHEN CANCEL-WHEN(SEQUENCE(A x, B y, 10), C)",
        "EVENT q WHEN SEQUENCE(A, B, 8) OUTPUT Machine_Id",
        "EVENT q WHEN ANY(A, B) # [0, 40]",
        ("EVENT q WHEN NOT(C AS c, SEQUENCE(A x, B y, 10)) "
         "WHERE {x.Machine_Id = c.Machine_Id}"),
        "EVENT q WHEN ATLEAST(2, A, B, 9)",
        "EVENT q WHEN ATMOST(1, A, B, 6)",
        "EVENT q WHEN ALL(A, B, 9) @ [0, 30]",
        "EVENT q WHEN UNLESS(A, B, 7) @ [2, 50] # [0, 60]",
    ]

    def _drive(self, plan, streams_rows, level, every=3):
        # Interleave across streams only: each stream's internal order (and
        # with it per-lineage delivery order) is a model precondition.
        pipe = Pipeline(plan, level)
        rng = random.Random("weave")
        pending = {name: list(rows) for name, rows in streams_rows.items()}
        feed = []
        while any(pending.values()):
            name = rng.choice([n for n, rows in sorted(pending.items()) if rows])
            feed.append((name, pending[name].pop(0)))
        seen: dict[str, set] = {}
        syncs = []
        for name, row in feed:
            marks = seen.setdefault(name, set())
            syncs.append(row.o_s if row.k not in marks else row.o_e)
            marks.add(row.k)
        last: dict[str, float] = {}
        for i, (name, row) in enumerate(feed):
            if every and i and i % every == 0:
                for stream in sorted(streams_rows):
                    remaining = [s for (n, _), s in zip(feed[i:], syncs[i:])
                                 if n == stream and s != INF]
                    if not remaining:
                        continue
                    threshold = min(remaining) - 1
                    if threshold >= 0 and threshold > last.get(stream, -1):
                        pipe.guarantee(stream, threshold)
                        last[stream] = threshold
            pipe.feed(name, row)
        pipe.flush()
        return pipe

    def test_compiled_plans_agree_across_levels(self):
        from cedr.disorder import rows_from_pattern
        from cedr.patterns import evaluate_plan
        from cedr.query import compile_query, leaf_streams, parse

        from engine_harness import encode_stream, gen_pattern

        for src in self.QUERY_PLAN_SOURCES:
            parsed = parse(src)
            assert parsed.ok
            compiled = compile_query(parsed.ast)
            assert compiled.ok
            streams = leaf_streams(parsed.ast)
            for trial in range(6):
                rng = random.Random(f"pipe-{src[:24]}-{trial}")
                ideal = {name: gen_pattern(rng, f"{name}_", 5) for name in streams}
                rows = {
                    name: encode_stream(
                        rows_from_pattern(events, key_prefix=f"{name}k"),
                        rng, skew=rng.randint(0, 5),
                        retract_prob=rng.choice([0.0, 0.5]))
                    for name, events in ideal.items()
                }
                want = content_set(rows_from_pattern(
                    evaluate_plan(compiled.plan, ideal), key_prefix="o"))
                results = []
                for level in (STRONG, MIDDLE, WEAK):
                    pipe = self._drive(compiled.plan, rows, level)
                    got = content_set(pipe.outputs)
                    assert got == want, (src, trial, level)
                    results.append(got)
                assert results[0] == results[1] == results[2]


class TestSlicedRetractions:
    def test_occurrence_slice_keeps_removals_consistent(self):
        # An optimistic result whose assertion starts before the slice is
        # clipped into it; its later full removal must still land on the
        # same lineage so the sliced stream's canonical content stays true.
        from cedr.patterns import Leaf, SliceOp
        from cedr.patterns import PatternEvent
        from cedr.temporal import canonical_to

        plan = SliceOp(Leaf("A"), occ=(5, 50))
        pipe = Pipeline(plan, MIDDLE)
        insert = pattern_event_to_row(
            PatternEvent("a1", 2, 30, 2, INF, rt=2), "K1", 0)
        kill = TritemporalEvent("K1", "a1", 2, 30, 2, 2, 1)
        pipe.feed("A", insert)
        pipe.feed("A", kill)
        pipe.flush()
        slices = [(r.o_s, r.o_e) for r in pipe.outputs]
        assert (5, 50) in slices             # clipped optimistic assertion
        assert (5, 5) in slices              # clamped removal marker
        assert canonical_to(HistoryTable(pipe.outputs), INF) == HistoryTable()

    def test_valid_slice_clips_composites(self):
        from cedr.patterns import Leaf, SequenceOp, SliceOp
        from cedr.patterns import PatternEvent

        plan = SliceOp(SequenceOp((Leaf("A"), Leaf("B")), 20), valid=(0, 12))
        pipe = Pipeline(plan, MIDDLE)
        pipe.feed("A", pattern_event_to_row(
            PatternEvent("a1", 1, 40, 1, INF, rt=1), "KA", 0))
        pipe.feed("B", pattern_event_to_row(
            PatternEvent("b1", 4, 40, 4, INF, rt=4), "KB", 0))
        pipe.flush()
        assert [(r.v_s, r.v_e) for r in pipe.outputs] == [(4, 12)]
