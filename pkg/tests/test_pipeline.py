"""Iteration orchestration, run persistence/resume, and study protocols."""

import dataclasses
import json

import numpy as np
import pytest

from fairgen import pipeline
from fairgen.bayesopt import BoConfig
from fairgen.coverage import CoverageConfig, coverage_score
from fairgen.errors import ConfigError, DataFormatError, DomainError, EvaluationError
from fairgen.mdn import MdnConfig
from fairgen.pipeline import (
    CompareResult,
    CurvePoint,
    IterationRecord,
    RunConfig,
    RunLedger,
    compare_samplers,
    config_from_snapshot,
    config_snapshot,
    evaluate_generative,
    load_curves_csv,
    load_ledger,
    run,
    run_iteration,
    sample_covered_properties,
    save_curves_csv,
    save_ledger,
)
from fairgen.problem import Dataset, get_problem, initialize_dataset, make_records

TINY_MDN = MdnConfig(
    hidden_layers=2, hidden_width=12, components=3, epochs=60, learning_rate=5e-3
)
TINY_BO = BoConfig(
    n_targets=3, bo_iterations=4, random_walks=2, init_batches=3, candidate_pool=40
)


def tiny_config(**overrides) -> RunConfig:
    base = dict(
        init_size=40,
        iterations=2,
        members=2,
        mdn=TINY_MDN,
        bo=TINY_BO,
        master_seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def tiny_run():
    """One iteration on a small grid-initialized dataset, shared read-only."""
    config = tiny_config()
    problem = get_problem(config.problem)
    dataset = initialize_dataset(
        problem, config.init_sampler, config.init_size, seed=config.master_seed
    )
    grown, record = run_iteration(dataset, config, iteration_seed=1, index=1)
    return config, dataset, grown, record


class TestRunConfig:
    def test_defaults_valid(self):
        cfg = RunConfig()
        assert cfg.iterations == 10
        assert cfg.members == 5
        assert cfg.samples_per_target_per_model == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"init_sampler": "sobol"},
            {"init_size": 0},
            {"iterations": 0},
            {"members": 0},
            {"samples_per_target_per_model": 0},
            {"master_seed": -1},
            {"iterations": 2.5},
        ],
    )
    def test_invalid_fields(self, kwargs):
        with pytest.raises(ConfigError):
            tiny_config(**kwargs)

    def test_snapshot_round_trip(self):
        cfg = tiny_config(master_seed=7)
        snap = config_snapshot(cfg)
        assert config_from_snapshot(snap) == cfg

    def test_snapshot_survives_json(self):
        cfg = tiny_config()
        snap = json.loads(json.dumps(config_snapshot(cfg)))
        assert config_from_snapshot(snap) == cfg

    @pytest.mark.parametrize(
        "mangle",
        [
            lambda s: s.pop("mdn"),
            lambda s: s["bo"].update(no_such_knob=1),
            lambda s: s.update(cov={"rho": 0.08}),
        ],
    )
    def test_malformed_snapshot(self, mangle):
        snap = config_snapshot(tiny_config())
        mangle(snap)
        with pytest.raises(DataFormatError):
            config_from_snapshot(snap)


class TestIterationRecord:
    def _record(self, **overrides):
        base = dict(
            index=1,
            sc_before=1.0,
            sc_after=1.5,
            targets=np.zeros((3, 2)),
            su=0.4,
            generated=45,
            infeasible=3,
            outliers=2,
            appended=40,
        )
        base.update(overrides)
        return IterationRecord(**base)

    def test_valid(self):
        rec = self._record()
        assert rec.appended == rec.generated - rec.infeasible - rec.outliers

    def test_accounting_identity_enforced(self):
        with pytest.raises(ConfigError):
            self._record(appended=41)

    def test_coverage_decrease_rejected(self):
        with pytest.raises(ConfigError):
            self._record(sc_after=0.9)

    def test_index_from_one(self):
        with pytest.raises(ConfigError):
            self._record(index=0)

    def test_negative_count_rejected(self):
        with pytest.raises(ConfigError):
            self._record(infeasible=-1, appended=46)

    def test_public_dict_excludes_timings(self):
        rec = self._record()
        rec.timings["train"] = 1.23
        assert "timings" not in rec.to_public_dict()
        assert set(rec.to_public_dict()) == {
            "iteration",
            "sc_before",
            "sc_after",
            "targets",
            "su",
            "generated",
            "infeasible",
            "outliers",
            "appended",
        }

    def test_ledger_contiguity(self):
        recs = [self._record(index=1), self._record(index=3)]
        with pytest.raises(ConfigError):
            RunLedger(records=recs, dataset_path=None, config={})


class TestRunIteration:
    def test_candidate_count_is_targets_times_samples_times_members(self, tiny_run):
        config, _, _, record = tiny_run
        expected = (
            config.bo.n_targets * config.samples_per_target_per_model * config.members
        )
        assert record.generated == expected

    def test_accounting_identity(self, tiny_run):
        _, _, _, record = tiny_run
        assert record.appended == record.generated - record.infeasible - record.outliers

    def test_coverage_monotone(self, tiny_run):
        _, _, _, record = tiny_run
        assert record.sc_after >= record.sc_before

    def test_input_dataset_untouched(self, tiny_run):
        config, dataset, grown, record = tiny_run
        assert len(grown.records) == len(dataset.records) + record.appended
        assert all(r.provenance != "fairgen-iter-1" for r in dataset.records)

    def test_new_records_tagged_with_iteration(self, tiny_run):
        _, dataset, grown, record = tiny_run
        new = grown.records[len(dataset.records) :]
        assert len(new) == record.appended
        assert all(r.provenance == "fairgen-iter-1" for r in new)
        assert all(r.feasible for r in new)

    def test_sc_before_matches_input_dataset(self, tiny_run):
        config, dataset, _, record = tiny_run
        sc = coverage_score(dataset.active_std_properties(), config.cov)
        assert record.sc_before == pytest.approx(sc, abs=1e-12)

    def test_targets_shape(self, tiny_run):
        config, _, _, record = tiny_run
        assert record.targets.shape == (config.bo.n_targets, 2)

    def test_deterministic(self, tiny_run):
        config, dataset, grown, record = tiny_run
        grown2, record2 = run_iteration(dataset, config, iteration_seed=1, index=1)
        assert record2.to_public_dict() == record.to_public_dict()
        np.testing.assert_array_equal(
            grown2.active_std_properties(), grown.active_std_properties()
        )

    def test_all_infeasible_generation(self, tiny_run, monkeypatch):
        config, dataset, _, _ = tiny_run

        def infeasible_shapes(model, x, count, seed, bounds):
            # x2 + x3 > 1.6 fails the synthetic feasibility rule
            return np.tile([0.5, 0.9, 0.9, 0.5], (count, 1))

        monkeypatch.setattr(pipeline.mdn, "sample_shapes", infeasible_shapes)
        grown, record = run_iteration(dataset, config, iteration_seed=1, index=1)
        expected = (
            config.bo.n_targets * config.samples_per_target_per_model * config.members
        )
        assert record.generated == expected
        assert record.infeasible == expected
        assert record.appended == 0
        assert grown is dataset
        assert record.sc_after == record.sc_before

    def test_on_trace_receives_search_trace(self, tiny_run):
        config, dataset, _, _ = tiny_run
        seen = []
        run_iteration(dataset, config, iteration_seed=1, index=1, on_trace=seen.append)
        assert len(seen) == 1
        expected = (
            config.bo.init_batches + config.bo.bo_iterations + config.bo.random_walks
        )
        assert len(seen[0]) == expected

    def test_empty_dataset_rejected(self, tiny_run):
        config, dataset, _, _ = tiny_run
        empty = Dataset(records=[], standardizer=dataset.standardizer, problem_id="synthetic")
        with pytest.raises(DomainError):
            run_iteration(empty, config, iteration_seed=1, index=1)


class TestLedgerPersistence:
    def _records(self):
        return [
            IterationRecord(
                index=i,
                sc_before=1.0 + i,
                sc_after=1.5 + i,
                targets=np.arange(6, dtype=float).reshape(3, 2) + i,
                su=0.1 * i,
                generated=45,
                infeasible=i,
                outliers=0,
                appended=45 - i,
            )
            for i in (1, 2, 3)
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        records = self._records()
        save_ledger(records, path)
        loaded = load_ledger(path)
        assert [r.to_public_dict() for r in loaded] == [
            r.to_public_dict() for r in records
        ]

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        save_ledger(self._records(), path)
        lines = path.read_text().splitlines()
        lines[1] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_ledger(path)

    def test_missing_field_reports_lineno(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        save_ledger(self._records(), path)
        lines = path.read_text().splitlines()
        obj = json.loads(lines[2])
        del obj["appended"]
        lines[2] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_ledger(path)

    def test_no_tmp_file_left_behind(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        save_ledger(self._records(), path)
        assert not list(tmp_path.glob("*.tmp"))


class TestRun:
    def test_artifacts_and_resume(self, tmp_path, monkeypatch):
        config = tiny_config()

        straight = run(config, tmp_path / "straight")
        assert len(straight.records) == config.iterations
        for name in ("config.json", "dataset.csv", "ledger.jsonl", "timings.jsonl"):
            assert (tmp_path / "straight" / name).exists()
        for i in range(1, config.iterations + 1):
            assert (tmp_path / "straight" / f"bo-trace-iter-{i}.csv").exists()

        # crash the second iteration, then re-invoke on the same directory
        real = pipeline.run_iteration
        calls = {"n": 0}

        def crashing(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("simulated interruption")
            return real(*args, **kwargs)

        monkeypatch.setattr(pipeline, "run_iteration", crashing)
        with pytest.raises(RuntimeError):
            run(config, tmp_path / "resumed")
        monkeypatch.setattr(pipeline, "run_iteration", real)
        resumed = run(config, tmp_path / "resumed")

        assert [r.to_public_dict() for r in resumed.records] == [
            r.to_public_dict() for r in straight.records
        ]
        for name in ("dataset.csv", "ledger.jsonl"):
            assert (tmp_path / "resumed" / name).read_bytes() == (
                tmp_path / "straight" / name
            ).read_bytes()

    def test_bitwise_deterministic(self, tmp_path):
        config = tiny_config(iterations=1)
        run(config, tmp_path / "a")
        run(config, tmp_path / "b")
        for name in ("dataset.csv", "ledger.jsonl", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_config_mismatch_refused(self, tmp_path):
        run(tiny_config(iterations=1), tmp_path)
        with pytest.raises(ConfigError, match="refusing to mix states"):
            run(tiny_config(iterations=1, master_seed=1), tmp_path)

    def test_completed_run_is_a_noop(self, tmp_path):
        config = tiny_config(iterations=1)
        first = run(config, tmp_path)
        stamp = (tmp_path / "dataset.csv").stat().st_mtime_ns
        again = run(config, tmp_path)
        assert (tmp_path / "dataset.csv").stat().st_mtime_ns == stamp
        assert [r.to_public_dict() for r in again.records] == [
            r.to_public_dict() for r in first.records
        ]

    def test_strictly_increasing_coverage_majority(self, tmp_path):
        ledger = run(tiny_config(), tmp_path)
        gains = [r.sc_after - r.sc_before for r in ledger.records]
        assert sum(g > 0 for g in gains) >= len(gains) - 1


@pytest.fixture(scope="module")
def result():
    return compare_samplers(tiny_config(), total_budget=200)


class TestCompareSamplers:
    def test_methods_present(self, result):
        assert {p.method for p in result.points} == {"fairgen", "grid", "lhs"}

    def test_matched_counts(self, result):
        counts = {
            m: [c for c, _ in result.curve(m)] for m in ("fairgen", "grid", "lhs")
        }
        assert counts["grid"] == counts["fairgen"]
        assert counts["lhs"] == counts["fairgen"]

    def test_curves_non_decreasing(self, result):
        for method in ("fairgen", "grid", "lhs"):
            scores = [s for _, s in result.curve(method)]
            assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))

    def test_fairgen_first_point_is_init_grid(self, result):
        config = tiny_config()
        dataset = initialize_dataset(
            get_problem(config.problem),
            config.init_sampler,
            config.init_size,
            seed=config.master_seed,
        )
        count, score = result.curve("fairgen")[0]
        assert count == dataset.active_std_properties().shape[0]
        assert score == pytest.approx(
            coverage_score(dataset.active_std_properties(), config.cov), abs=1e-12
        )

    def test_grid_matches_fairgen_at_init_count(self, result):
        # both start from the same complete grid, so the curves touch at init
        init_count, fairgen_init = result.curve("fairgen")[0]
        grid_init = dict(result.curve("grid"))[init_count]
        assert grid_init == pytest.approx(fairgen_init, abs=1e-9)

    def test_budget_below_init_rejected(self):
        with pytest.raises(DomainError):
            compare_samplers(tiny_config(), total_budget=10)

    def test_budget_stops_early(self):
        result = compare_samplers(tiny_config(), total_budget=80)
        counts = [c for c, _ in result.curve("fairgen")]
        # one checkpoint past the budget at most: growth stops once reached
        assert len(counts) >= 2
        assert counts[-2] < 80

    def test_curves_csv_round_trip(self, result, tmp_path):
        path = tmp_path / "curves.csv"
        save_curves_csv(result.points, path)
        loaded = load_curves_csv(path)
        assert [(p.sample_count, p.method) for p in loaded] == [
            (p.sample_count, p.method) for p in result.points
        ]
        for a, b in zip(loaded, result.points):
            assert a.score == b.score  # %.17g survives the round trip exactly

    def test_curves_csv_malformed(self, tmp_path):
        path = tmp_path / "curves.csv"
        path.write_text("wrong,header,here\n1,grid,0.5\n")
        with pytest.raises(DataFormatError, match="line 1"):
            load_curves_csv(path)
        path.write_text("sample_count,method,score\n1,grid\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_curves_csv(path)
        path.write_text("sample_count,method,score\nx,grid,0.5\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_curves_csv(path)


class TestSampleCoveredProperties:
    def test_samples_are_covered_and_inside_box(self):
        cov = CoverageConfig()
        pool = np.random.default_rng(0).uniform(-1, 3, size=(150, 2))
        rng = np.random.default_rng(1)
        pts = sample_covered_properties(pool, 40, rng, cov)
        assert pts.shape == (40, 2)
        from scipy.spatial import cKDTree

        counts = cKDTree(pool).query_ball_point(pts, r=cov.rho, return_length=True)
        assert np.all(counts >= cov.k)
        xmin, xmax, ymin, ymax = cov.box
        assert np.all((pts[:, 0] >= xmin) & (pts[:, 0] <= xmax))
        assert np.all((pts[:, 1] >= ymin) & (pts[:, 1] <= ymax))

    def test_tiny_covered_region_errors(self):
        cov = CoverageConfig()
        pool = np.zeros((1, 2))  # one disk: ~0.056% of the box, below the bar
        with pytest.raises(EvaluationError, match="acceptance"):
            sample_covered_properties(pool, 50, np.random.default_rng(0), cov)


@pytest.fixture(scope="module")
def two_datasets():
    problem = get_problem("synthetic")
    base = initialize_dataset(problem, "grid", 40, seed=0)
    rng = np.random.default_rng(3)
    extra_shapes = rng.uniform(0, 1, size=(40, 4))
    extra_shapes = extra_shapes[extra_shapes[:, 1] + extra_shapes[:, 2] <= 1.6]
    other = Dataset(
        records=make_records(extra_shapes, problem, base.standardizer, "extra"),
        standardizer=base.standardizer,
        problem_id=problem.name,
    )
    return base, other


class TestEvaluateGenerative:
    def test_rows_and_scatter(self, two_datasets):
        base, other = two_datasets
        ev = evaluate_generative(
            [("a", base), ("b", other)],
            n_test=6,
            shapes_per_test=2,
            seed=0,
            mdn_config=TINY_MDN,
        )
        assert [row.label for row in ev.rows] == ["a", "b"]
        assert ev.test_properties.shape == (6, 2)
        for row in ev.rows:
            assert row.n_pairs == 12
            assert np.isfinite(row.mae)
            assert ev.scatter[row.label].shape == (12, 2)
            assert row.mae == pytest.approx(float(ev.scatter[row.label].mean()))

    def test_deterministic(self, two_datasets):
        base, _ = two_datasets
        kwargs = dict(n_test=4, shapes_per_test=2, seed=5, mdn_config=TINY_MDN)
        ev1 = evaluate_generative([("a", base)], **kwargs)
        ev2 = evaluate_generative([("a", base)], **kwargs)
        assert ev1.rows[0].mae == ev2.rows[0].mae
        np.testing.assert_array_equal(ev1.test_properties, ev2.test_properties)

    def test_mismatched_standardizers_rejected(self, two_datasets):
        base, _ = two_datasets
        problem = get_problem("synthetic")
        other = initialize_dataset(problem, "lhs", 40, seed=1)
        with pytest.raises(DomainError, match="standardizer"):
            evaluate_generative([("a", base), ("b", other)], n_test=4, mdn_config=TINY_MDN)

    def test_degenerate_repeated_record(self, two_datasets):
        base, _ = two_datasets
        problem = get_problem("synthetic")
        shape = np.full((60, 4), 0.5)
        degenerate = Dataset(
            records=make_records(shape, problem, base.standardizer, "constant"),
            standardizer=base.standardizer,
            problem_id=problem.name,
        )
        ev = evaluate_generative(
            [("normal", base), ("constant", degenerate)],
            n_test=4,
            shapes_per_test=2,
            seed=0,
            mdn_config=TINY_MDN,
        )
        maes = {row.label: row.mae for row in ev.rows}
        assert np.isfinite(maes["constant"])

    def test_empty_input_rejected(self):
        with pytest.raises(DomainError):
            evaluate_generative([])


class TestFeasiblePools:
    def test_grid_pool_first_block_is_complete_coarse_grid(self):
        problem = get_problem("synthetic")
        rng = np.random.default_rng(0)
        pool = pipeline._feasible_grid_pool(problem, 300, start_levels=4, rng=rng)
        from fairgen.problem import grid_sample

        coarse = grid_sample(4, problem.shape_bounds)
        coarse = coarse[[problem.feasibility(x) for x in coarse]]
        got = {tuple(np.round(row, 12)) for row in pool[: coarse.shape[0]]}
        want = {tuple(np.round(row, 12)) for row in coarse}
        assert got == want
        assert pool.shape[0] >= 300

    def test_lhs_pool_feasible_and_large_enough(self):
        problem = get_problem("synthetic")
        pool = pipeline._feasible_lhs_pool(problem, 120, seed=42)
        assert pool.shape[0] >= 120
        assert all(problem.feasibility(x) for x in pool)

    def test_sample_seed_distinct_streams(self):
        seeds = {
            pipeline._sample_seed(9, t, m) for t in range(3) for m in range(5)
        }
        assert len(seeds) == 15
        assert pipeline._sample_seed(9, 1, 2) == pipeline._sample_seed(9, 1, 2)
