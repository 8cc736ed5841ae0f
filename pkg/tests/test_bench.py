import json
import time

import numpy as np
import pytest

from pactkit import ReconConfig, bench_matmul, bench_recon, profile_breakdown
from pactkit.bench import MEASUREMENT_FLOOR_SECONDS, make_scene
from pactkit.kernels import matmul_serial


class TestBenchMatmul:
    def test_small_scenario(self):
        report = bench_matmul(64, 64, 64, workers=[1, 2], reps=3, seed=0)
        serial = report.entry("serial")
        assert serial.wall_seconds > 0 and serial.repetitions == 3
        for w in (1, 2):
            e = report.entry(f"tiled_parallel_w{w}")
            assert e.verification is True
            s = report.speedup("serial", f"tiled_parallel_w{w}")
            assert s > 0
        assert report.verification_ok()

    def test_degenerate_product_flagged(self):
        report = bench_matmul(1, 1, 1, workers=[1], reps=3, seed=0)
        assert report.entry("tiled_parallel_w1").verification is True
        flags = [s["below_measurement_floor"] for s in report.speedups]
        assert all(flags)  # 1x1x1 cannot be timed meaningfully

    def test_checksums_deterministic_across_runs(self):
        a = bench_matmul(48, 32, 16, workers=[1], reps=3, seed=7)
        b = bench_matmul(48, 32, 16, workers=[1], reps=3, seed=7)
        assert [e.checksum for e in a.entries] == [e.checksum for e in b.entries]

    def test_monotone_inner_scaling(self):
        # doubling the shared dimension must at least double serial time
        # (within 25% measurement noise); guards against elided work
        def timed(inner):
            rng = np.random.default_rng(0)
            A = rng.standard_normal((256, inner))
            B = rng.standard_normal((inner, 128))
            matmul_serial(A, B)  # warm
            best = float("inf")
            for _ in range(5):
                t0 = time.perf_counter()
                matmul_serial(A, B)
                best = min(best, time.perf_counter() - t0)
            return best

        assert timed(512) >= 2.0 * 0.75 * timed(256)

    def test_validation(self):
        with pytest.raises(ValueError):
            bench_matmul(0, 4, 4, workers=[1], reps=3)
        with pytest.raises(ValueError):
            bench_matmul(4, 4, 4, workers=[1], reps=2)

    def test_json_and_text_render(self):
        report = bench_matmul(16, 16, 16, workers=[1], reps=3, seed=1)
        blob = json.loads(report.to_json())
        assert blob["scenario"].startswith("matmul")
        assert blob["verification"] is True
        assert {"entries", "speedups", "environment"} <= set(blob)
        text = report.to_text()
        assert "speedup serial -> tiled_parallel_w1" in text


class TestBenchRecon:
    def test_entries_and_metrics(self):
        report = bench_recon(32, 16, 64, ReconConfig(iterations=5), reps=3, seed=0)
        for label in ("back_projection", "iterative_serial", "iterative_parallel"):
            assert report.entry(label).wall_seconds > 0
        assert report.entry("iterative_parallel").verification is True
        assert 0 < report.metrics["rmse_ir"] < 1
        assert 0 < report.metrics["rmse_bp"] < 1
        assert report.metrics["ir_over_bp_time_ratio"] > 1.0
        assert report.environment["matrix_shape"] == [16 * 64, 32 * 32]

    def test_checksum_stability(self):
        a = bench_recon(32, 8, 64, ReconConfig(iterations=3), reps=3, seed=2)
        b = bench_recon(32, 8, 64, ReconConfig(iterations=3), reps=3, seed=2)
        assert {e.label: e.checksum for e in a.entries} == {
            e.label: e.checksum for e in b.entries
        }

    def test_single_iteration_sanity_floor(self):
        # one data-only iteration costs a forward and an adjoint product,
        # so it must stay within a small multiple of the one-product BP time
        cfg = ReconConfig(alpha=0.0, beta=0.0, iterations=1, step=1e-2)
        report = bench_recon(32, 16, 64, cfg, reps=3, seed=0)
        t_ir = report.entry("iterative_serial").wall_seconds
        t_bp = report.entry("back_projection").wall_seconds
        assert t_ir <= 10 * t_bp


class TestProfileBreakdown:
    def test_shares_sum_to_hundred(self):
        report = profile_breakdown(32, 16, 64, ReconConfig(iterations=10), seed=0)
        total = sum(row["percent"] for row in report.breakdown.values())
        assert total == pytest.approx(100.0, abs=0.5)

    def test_gradient_products_dominate(self):
        report = profile_breakdown(32, 16, 64, ReconConfig(iterations=20), seed=0)
        shares = {cat: row["percent"] for cat, row in report.breakdown.items()}
        assert shares["gradient_products"] == max(shares.values())

    def test_disabled_terms_near_zero(self):
        report = profile_breakdown(32, 16, 64, ReconConfig(alpha=0.0, beta=0.0, iterations=10))
        assert report.breakdown["tv_gradient"]["percent"] < 1.0
        assert report.breakdown["prox"]["percent"] < 5.0


class TestScene:
    def test_scene_is_reusable_and_consistent(self):
        grid, ring, acoustic, phantom = make_scene(24, 12, 48, seed=4)
        assert grid.size == 24 * 24
        assert ring.count == 12
        assert acoustic.q_s == 48
        assert phantom.grid == grid
        # no truncation by construction: the window covers the farthest pixel
        far = np.hypot(*(np.abs(np.array(grid.pixel_center(0, 0)))))
        assert (ring.radius + far) / acoustic.c < acoustic.window

    def test_floor_constant_sane(self):
        assert 0 < MEASUREMENT_FLOOR_SECONDS < 0.01
