"""Benchmark harness: CSV schema, determinism, fairness, aggregation."""

import numpy as np
import pytest

from lensalign.bench import (
    BenchmarkConfig,
    emit_landscape,
    load_results,
    run_benchmark,
    strip_timing_columns,
    summarize,
    timing_summary,
    write_summary,
)
from lensalign.imgio import read_pgm16
from lensalign.search import ALGORITHMS


@pytest.fixture(scope="module")
def small_bench(small_app, tmp_path_factory):
    bcfg = BenchmarkConfig(
        app=small_app,
        algorithms=("random", "bo-rf"),
        noise_levels=(0.0, 0.25),
        episodes=3,
        steps=4,
        master_seed=99,
        out_dir=tmp_path_factory.mktemp("bench"),
    )
    return bcfg, run_benchmark(bcfg)


class TestRunBenchmark:
    def test_csv_row_count(self, small_bench):
        bcfg, result = small_bench
        rows = load_results(result.csv_path)
        expected = len(bcfg.algorithms) * len(bcfg.noise_levels) * bcfg.episodes * (bcfg.steps + 1)
        assert len(rows) == expected

    def test_best_column_non_increasing(self, small_bench):
        _, result = small_bench
        for rec in result.records:
            assert np.all(np.diff(rec.best_curve) <= 1e-15)

    def test_cross_algorithm_fairness(self, small_bench):
        # same episode index -> bit-equal variance bundle for every algorithm
        _, result = small_bench
        digests = {}
        for rec in result.records:
            digests.setdefault((rec.noise, rec.episode), set()).add(rec.bundle_digest)
        for key, values in digests.items():
            assert len(values) == 1, f"bundle mismatch across algorithms at {key}"

    def test_same_offsets_across_noise_levels(self, small_bench):
        # episode seeds do not depend on the noise level; levels share w_off
        _, result = small_bench
        by_noise = {}
        for rec in result.records:
            if rec.algorithm == "random":
                by_noise.setdefault(rec.noise, {})[rec.episode] = rec.score_curve[0]
        assert by_noise[0.0].keys() == by_noise[0.25].keys()

    def test_determinism_excluding_timing(self, small_app, tmp_path):
        def run(out):
            bcfg = BenchmarkConfig(
                app=small_app,
                algorithms=("random", "bo-rf"),
                noise_levels=(0.0,),
                episodes=2,
                steps=3,
                master_seed=5,
                out_dir=out,
            )
            return run_benchmark(bcfg).csv_path

        a = strip_timing_columns(run(tmp_path / "a"))
        b = strip_timing_columns(run(tmp_path / "b"))
        assert a == b

    def test_unregistered_algorithm_rejected(self, small_app, tmp_path):
        with pytest.raises(ValueError):
            BenchmarkConfig(
                app=small_app,
                algorithms=("gradient-descent",),
                noise_levels=(0.0,),
                episodes=1,
                steps=2,
                master_seed=0,
                out_dir=tmp_path,
            )

    def test_failed_episode_marked_and_run_continues(self, small_app, tmp_path):
        class Exploding:
            def __init__(self, box, seed):
                pass

            def ask(self):
                raise RuntimeError("boom")

            def tell(self, proposal, score):
                pass

        ALGORITHMS["exploding"] = lambda box, seed: Exploding(box, seed)
        try:
            bcfg = BenchmarkConfig(
                app=small_app,
                algorithms=("exploding", "random"),
                noise_levels=(0.0,),
                episodes=2,
                steps=3,
                master_seed=1,
                out_dir=tmp_path,
            )
            result = run_benchmark(bcfg)
        finally:
            del ALGORITHMS["exploding"]
        rows = load_results(result.csv_path)
        assert len(rows) == 2 * 2 * 4
        failed = [r for r in rows if r["failed"]]
        assert len(failed) == 2 * 4  # both exploding episodes, all rows
        ok = [r for r in rows if r["algorithm"] == "random"]
        assert all(not r["failed"] for r in ok)


class TestSummarize:
    def test_single_episode_median_is_value(self):
        rows = [
            {"algorithm": "a", "noise": 0.0, "step": s, "best_rmse": 0.5 - 0.1 * s, "failed": False}
            for s in range(3)
        ]
        agg = summarize(rows)
        assert [r["median"] for r in agg] == [0.5, 0.4, 0.3]

    def test_percentile_ordering(self, small_bench):
        _, result = small_bench
        rows = load_results(result.csv_path)
        for agg_row in summarize(rows):
            assert agg_row["p25"] <= agg_row["median"] <= agg_row["p75"]

    def test_hand_built_three_episode_fixture(self):
        best = {0: [0.9, 0.5, 0.7], 1: [0.4, 0.3, 0.6]}
        rows = [
            {"algorithm": "x", "noise": 0.5, "step": s, "best_rmse": v, "failed": False}
            for s, values in best.items()
            for v in values
        ]
        agg = {r["step"]: r for r in summarize(rows)}
        assert agg[0]["median"] == 0.7
        assert agg[1]["median"] == 0.4
        agg_mean = {r["step"]: r for r in summarize(rows, stat="mean")}
        assert agg_mean[0]["mean"] == pytest.approx(np.mean([0.9, 0.5, 0.7]))

    def test_round_trip_to_csv(self, small_bench, tmp_path):
        _, result = small_bench
        agg = summarize(load_results(result.csv_path))
        path = tmp_path / "summary.csv"
        write_summary(agg, path)
        header = path.read_text().splitlines()[0]
        assert header == "algorithm,noise,step,p25,median,p75,episodes"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])


class TestTiming:
    def test_first_step_excluded(self, small_bench):
        _, result = small_bench
        stats = timing_summary(result)
        assert stats, "timing stats should exist"
        for rec in result.records:
            if len(rec.step_ms) >= 2:
                assert np.all(rec.step_ms >= 0.0)


class TestEmitLandscape:
    def test_pair_files_and_codec_round_trip(self, small_app, tmp_path):
        files = emit_landscape(
            small_app, [(0, 1), (0, 2)], grid_n=5, out_dir=tmp_path, seed=3, samples_per_pixel=4
        )
        assert len(files) == 2
        for csv_file in files:
            matrix = np.loadtxt(csv_file, delimiter=",")
            assert matrix.shape == (5, 5)
            pgm, max_value = read_pgm16(csv_file.with_suffix(".pgm"))
            assert np.max(np.abs(pgm - matrix)) <= max_value / 65535.0
            assert csv_file.with_suffix(".png").exists()

    def test_default_dims_cover_all_active_pairs(self, small_app, tmp_path):
        files = emit_landscape(
            small_app, None, grid_n=5, out_dir=tmp_path, seed=3, samples_per_pixel=2
        )
        assert len(files) == 10  # C(5, 2) active-dim pairs
