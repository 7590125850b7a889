import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrmul.engine import (
    Accumulator,
    BroadcastError,
    BroadcastStore,
    JobError,
    JobSpec,
    KeyedRecord,
    broadcast,
    chain,
    current_worker,
    run_job,
    serialize_record,
)


def word_count_spec(workers, parallel=True):
    return JobSpec(
        mapper=lambda rec: [(rec, 1)],
        reducer=lambda key, values: [(key, sum(values))],
        shard_fn=lambda key: sum(key.encode()) % workers,
        workers=workers,
        name="wordcount",
        parallel=parallel,
    )


class TestRunJob:
    def test_word_count(self):
        out, metrics = run_job(word_count_spec(1), ["a", "b", "a"])
        assert out == [KeyedRecord("a", 2), KeyedRecord("b", 1)]
        assert metrics.records_per_worker == [3]

    def test_worker_count_invariance(self):
        results = {}
        for w in (1, 2, 4, 8):
            out, _ = run_job(word_count_spec(w), list("abracadabra"))
            results[w] = sorted(out)
        assert results[1] == results[2] == results[4] == results[8]

    def test_empty_mapper_output(self):
        spec = JobSpec(lambda rec: [], lambda k, v: [(k, v)], lambda k: 0, workers=2)
        out, metrics = run_job(spec, [1, 2, 3])
        assert out == []
        assert metrics.shuffle_bytes == 0

    def test_output_is_key_sorted(self):
        spec = JobSpec(lambda rec: [(rec, rec)], lambda k, v: [(k, v)],
                       lambda k: k % 3, workers=3)
        out, _ = run_job(spec, [5, 1, 4, 2, 3])
        assert [r.key for r in out] == [1, 2, 3, 4, 5]

    def test_shuffle_bytes_match_instrumented_serializer(self):
        records = ["x", "y", "x", "z"]
        spec = word_count_spec(2)
        _, metrics = run_job(spec, records)
        expected = sum(len(serialize_record(r, 1)) for r in records)
        assert metrics.shuffle_bytes == expected

    def test_records_per_worker_sums_to_total(self):
        spec = word_count_spec(4)
        _, metrics = run_job(spec, list("mississippi"))
        assert sum(metrics.records_per_worker) == len("mississippi")

    def test_reduce_runs_on_sharded_worker(self):
        # every key group must be reduced on the worker its shard names
        seen = {}

        def reducer(key, values):
            seen[key] = current_worker()
            return [(key, len(values))]

        spec = JobSpec(lambda rec: [(rec, 1)], reducer,
                       shard_fn=lambda key: key % 4, workers=4)
        run_job(spec, [0, 1, 2, 3, 4, 5, 6, 7])
        assert seen == {k: k % 4 for k in range(8)}

    def test_map_affinity_pins_input(self):
        placed = {}

        def mapper(rec):
            placed[rec] = current_worker()
            return [(rec, 1)]

        spec = JobSpec(mapper, lambda k, v: [(k, v)], lambda k: 0, workers=3,
                       map_affinity=lambda rec: rec % 3)
        run_job(spec, [0, 1, 2, 3, 4, 5])
        assert placed == {r: r % 3 for r in range(6)}

    def test_cross_worker_bytes_zero_when_aligned(self):
        # shard destination equals the mapping worker for every record
        spec = JobSpec(lambda rec: [(rec, 1)], lambda k, v: [(k, v)],
                       shard_fn=lambda key: key % 2, workers=2,
                       map_affinity=lambda rec: rec % 2)
        _, metrics = run_job(spec, [0, 1, 2, 3])
        assert metrics.cross_worker_bytes == 0

    def test_barrier_no_reducer_before_all_mappers(self):
        done = []
        lock = threading.Lock()

        def mapper(rec):
            with lock:
                done.append(rec)
            return [(rec % 2, rec)]

        observed = []

        def reducer(key, values):
            observed.append(len(done))
            return [(key, values)]

        spec = JobSpec(mapper, reducer, lambda k: k % 2, workers=2)
        run_job(spec, list(range(10)))
        assert observed and all(n == 10 for n in observed)

    def test_reducer_sees_deterministically_ordered_values(self):
        orders = []

        def reducer(key, values):
            orders.append(tuple(values))
            return []

        for w in (1, 2, 4):
            spec = JobSpec(lambda rec: [("k", rec)], reducer, lambda k: 0, workers=w)
            run_job(spec, [3, 1, 4, 1, 5, 9, 2, 6])
        assert orders[0] == orders[1] == orders[2]

    def test_mapper_failure_attaches_record(self):
        def mapper(rec):
            if rec == "boom":
                raise RuntimeError("bad record")
            return [(rec, 1)]

        spec = JobSpec(mapper, lambda k, v: [(k, v)], lambda k: 0, workers=1)
        with pytest.raises(JobError) as exc:
            run_job(spec, ["ok", "boom"])
        assert exc.value.key == "boom"

    def test_reducer_failure_attaches_key(self):
        def reducer(key, values):
            if key == "b":
                raise ValueError("cannot reduce b")
            return [(key, 1)]

        spec = JobSpec(lambda rec: [(rec, 1)], reducer, lambda k: 0, workers=2)
        with pytest.raises(JobError) as exc:
            run_job(spec, ["a", "b"])
        assert exc.value.key == "b"

    def test_shard_out_of_range_rejected(self):
        spec = JobSpec(lambda rec: [(rec, 1)], lambda k, v: [(k, v)],
                       shard_fn=lambda key: 7, workers=2)
        with pytest.raises(JobError):
            run_job(spec, [1])

    def test_scalar_ops_accumulator(self):
        ops = Accumulator()

        def mapper(rec):
            ops.add(rec)
            return [(0, rec)]

        spec = JobSpec(mapper, lambda k, v: [(k, sum(v))], lambda k: 0,
                       workers=2, ops=ops)
        _, metrics = run_job(spec, [1, 2, 3])
        assert metrics.scalar_ops == 6

    @settings(max_examples=30, deadline=None)
    @given(records=st.lists(st.integers(0, 20), max_size=40),
           workers=st.sampled_from([1, 2, 3, 4, 8]))
    def test_sequential_semantics_property(self, records, workers):
        spec = JobSpec(lambda rec: [(rec % 5, rec)],
                       lambda k, v: [(k, sum(v))],
                       lambda k: k % workers, workers=workers)
        out, _ = run_job(spec, records)
        expected = {}
        for r in records:
            expected[r % 5] = expected.get(r % 5, 0) + r
        assert dict(out) == expected
        assert [r.key for r in out] == sorted(expected)

    def test_parallel_flags_do_not_change_results(self):
        records = list("abracadabra")
        outs = []
        for parallel, reduce_parallel in [(True, None), (False, None),
                                          (True, False), (False, True)]:
            spec = JobSpec(lambda rec: [(rec, 1)],
                           lambda k, v: [(k, sum(v))],
                           lambda k: sum(k.encode()) % 3, workers=3,
                           parallel=parallel, reduce_parallel=reduce_parallel)
            out, metrics = run_job(spec, records)
            outs.append((out, metrics.records_per_worker))
        assert all(o == outs[0] for o in outs[1:])


class TestChain:
    def test_single_job_equals_run_job(self):
        spec = word_count_spec(2)
        direct, _ = run_job(spec, ["a", "b", "a"])
        chained, metrics = chain([spec], ["a", "b", "a"])
        assert chained == direct
        assert len(metrics) == 1

    def test_two_stage_pipeline(self):
        # stage 1 counts words, stage 2 buckets counts by parity
        s1 = word_count_spec(2)
        s2 = JobSpec(lambda rec: [(rec.value % 2, rec.key)],
                     lambda k, v: [(k, sorted(v))],
                     lambda k: k, workers=2)
        out, metrics = chain([s1, s2], ["a", "b", "a", "c"])
        assert dict(out) == {0: ["a"], 1: ["b", "c"]}
        assert len(metrics) == 2

    def test_empty_input(self):
        out, metrics = chain([word_count_spec(2), word_count_spec(2)], [])
        assert out == []
        assert all(m.shuffle_bytes == 0 for m in metrics)

    def test_chained_partition_summation_matches_product_oracle(self):
        # a hand-built two-job multiply pipeline: job 1 groups (row of A,
        # col of B) cell pairs, job 2 sums the per-cell products
        rng = np.random.default_rng(77)
        A = rng.random((5, 4)) * (rng.random((5, 4)) < 0.7)
        B = rng.random((4, 6)) * (rng.random((4, 6)) < 0.7)

        def pair_mapper(rec):
            which, i, j, v = rec
            if which == "A":
                return [(((i, jj), j), ("A", v)) for jj in range(B.shape[1])]
            return [(((ii, j), i), ("B", v)) for ii in range(A.shape[0])]

        def pair_reducer(key, values):
            tags = dict(values)
            if len(values) == 2 and len(tags) == 2:
                return [(key[0], tags["A"] * tags["B"])]
            return []

        def sum_reducer(key, values):
            return [(key, sum(sorted(values)))]

        records = [("A", i, j, A[i, j]) for i in range(5) for j in range(4) if A[i, j]]
        records += [("B", i, j, B[i, j]) for i in range(4) for j in range(6) if B[i, j]]
        jobs = [
            JobSpec(pair_mapper, pair_reducer, lambda k: hash(k) % 3, workers=3),
            JobSpec(lambda rec: [rec], sum_reducer, lambda k: k[0] % 3, workers=3),
        ]
        out, metrics = chain(jobs, records)
        C = np.zeros((5, 6))
        for (i, j), v in out:
            C[i, j] = v
        np.testing.assert_allclose(C, A @ B, atol=1e-12)
        assert len(metrics) == 2

    def test_requires_one_job(self):
        with pytest.raises(ValueError):
            chain([], [1])


class TestBroadcastStore:
    def test_payload_visible_to_all_workers(self):
        store = BroadcastStore()
        payload = np.arange(9).reshape(3, 3)
        broadcast(store, "C", payload)
        seen = []

        def mapper(rec):
            seen.append(store.get("C"))
            return [(rec, 1)]

        run_job(JobSpec(mapper, lambda k, v: [(k, v)], lambda k: 0, workers=4),
                list(range(4)))
        assert len(seen) == 4
        assert all(got is payload for got in seen)

    def test_rebroadcast_same_epoch_rejected(self):
        store = BroadcastStore()
        broadcast(store, "C", 1)
        with pytest.raises(BroadcastError):
            broadcast(store, "C", 2)

    def test_epochs_give_fresh_versions(self):
        store = BroadcastStore()
        versions = []
        for epoch in range(3):
            store.new_epoch()
            broadcast(store, "C", f"v{epoch}")
            def mapper(rec):
                return [(rec, store.get("C"))]
            out, _ = run_job(JobSpec(mapper, lambda k, v: [(k, v[0])], lambda k: 0, workers=2),
                             [0, 1])
            versions.append(out[0].value)
        assert versions == ["v0", "v1", "v2"]

    def test_clear_allows_rewrite(self):
        store = BroadcastStore()
        broadcast(store, "C", 1)
        store.clear("C")
        broadcast(store, "C", 2)
        assert store.get("C") == 2

    def test_missing_name(self):
        store = BroadcastStore()
        with pytest.raises(BroadcastError):
            store.get("missing")


class TestMetricsCsv:
    def test_csv_row_shape(self):
        _, metrics = run_job(word_count_spec(2), ["a", "b"])
        row = metrics.to_csv_row()
        parts = row.split(",")
        assert parts[0] == "wordcount"
        assert parts[-1] == "2"
        assert len(parts) == 7
