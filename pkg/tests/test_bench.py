"""
Tests for the fusion benchmark: parameter counts, timing plumbing, the result
schema and (marked `bench`) the scaling behaviour.
"""

import json

import numpy as np
import pytest
from threadpoolctl import threadpool_info

from bench import (
    BENCH_SCHEMA,
    BenchConfig,
    BenchResult,
    bench_fusion,
    build_profile,
    count_params,
    grid_shape,
    pinned_threads,
    run_benchmark,
    save_results,
    speed_ratios,
)
from errors import ConfigurationError
from model import FusionTag
from model.fusion import build_fusion


def _result(variant: str, length: int, median_ms: float) -> BenchResult:
    return BenchResult(
        variant=variant, length=length, channels=8, state_size=2, median_ms=median_ms, iqr_ms=0.1,
        repeats=20, warmup=3, calls_per_sample=1, params=10, peak_floats=100, largest_buffer=50,
    )


# =============================================================================
# Building blocks
# =============================================================================

class TestHelpers:

    @pytest.mark.parametrize("length, shape", [(1, (1, 1)), (16, (4, 4)), (12, (3, 4)), (7, (1, 7)), (4096, (64, 64))])
    def test_grid_shape(self, length, shape):
        assert grid_shape(length) == shape

    def test_count_params_accepts_names_and_tags(self):
        assert count_params("linattn_adaln", d=16, n=4) == count_params(FusionTag.LINATTN_ADALN, d=16, n=4)

    def test_build_profile(self):
        profile = build_profile(64)
        assert profile["float_width"] == 64
        assert profile["scan_kernel"] in ("numba-jit", "numpy")
        assert {"python", "numpy", "opt_level", "threads"} <= set(profile)
        assert profile["threads"] == pinned_threads() == 1

    def test_speed_ratios(self):
        results = [_result("ssm_adaln", 256, 2.0), _result("attn_adain", 256, 6.0),
                   _result("ssm_adaln", 1024, 4.0), _result("attn_adain", 1024, 20.0),
                   _result("ssm_adaln", 4096, 8.0)]
        assert speed_ratios(results) == {256: 3.0, 1024: 5.0}


# =============================================================================
# Timing runs
# =============================================================================

class TestBenchFusion:

    @pytest.mark.parametrize("variant", ["ssm_adaln", "attn_adain", "linattn_adaln"])
    @pytest.mark.parametrize("length", [1, 16])
    def test_smoke(self, variant, length):
        result = bench_fusion(variant, length, d=8, n=2)
        assert result.variant == variant and result.length == length
        assert result.median_ms > 0.0 and result.iqr_ms >= 0.0
        assert result.params == count_params(variant, d=8, n=2)
        assert result.peak_floats > 0 and 0 < result.largest_buffer <= result.peak_floats
        assert result.calls_per_sample >= 1

    @pytest.mark.parametrize("kwargs", [
        {"repeats": 19},
        {"warmup": 2},
        {"float_width": 16},
    ])
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ConfigurationError):
            bench_fusion("ssm_adaln", 16, d=8, n=2, **kwargs)

    def test_empty_sequence(self):
        with pytest.raises(ConfigurationError):
            bench_fusion("ssm_adaln", 0, d=8, n=2)

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            bench_fusion("rnn_adaln", 16, d=8, n=2)

    def test_timing_runs_with_native_pools_limited_to_one_thread(self, monkeypatch):
        widths = []

        def recording_build(*args, **kwargs):
            stack = build_fusion(*args, **kwargs)
            forward = stack.forward

            def pinned_forward(*inputs):
                widths.append(max([pool["num_threads"] for pool in threadpool_info()], default=1))
                return forward(*inputs)

            monkeypatch.setattr(stack, "forward", pinned_forward)
            return stack

        monkeypatch.setattr("bench.build_fusion", recording_build)
        result = bench_fusion("attn_adain", 16, d=8, n=2)
        assert widths and set(widths) == {1}
        assert result.threads == 1

    def test_attention_buffer_grows_quadratically(self):
        small = bench_fusion("attn_adain", 64, d=8, n=2)
        large = bench_fusion("attn_adain", 256, d=8, n=2)
        ssm_small = bench_fusion("ssm_adaln", 64, d=8, n=2)
        ssm_large = bench_fusion("ssm_adaln", 256, d=8, n=2)
        assert large.peak_floats / small.peak_floats > ssm_large.peak_floats / ssm_small.peak_floats


# =============================================================================
# Result file
# =============================================================================

class TestResults:

    def test_schema(self, tmp_path):
        config = BenchConfig(lengths=(16,), variants=("ssm_adaln", "attn_adain"), channels=8, state_size=2, embed_dim=8)
        results = run_benchmark(config, verbose=False)
        path = save_results(results, tmp_path / "bench.json", float_width=config.float_width)

        data = json.loads(path.read_text())
        assert data["schema"] == BENCH_SCHEMA
        assert {"python", "numpy", "scan_kernel", "opt_level", "float_width", "threads"} <= set(data["build"])
        assert [(r["variant"], r["length"]) for r in data["results"]] == [("ssm_adaln", 16), ("attn_adain", 16)]
        expected = {"variant", "length", "channels", "state_size", "median_ms", "iqr_ms", "repeats", "warmup",
                    "calls_per_sample", "params", "peak_floats", "largest_buffer", "threads", "notes"}
        assert all(set(r) == expected for r in data["results"])


# =============================================================================
# Scaling (timing-sensitive)
# =============================================================================

@pytest.mark.bench
class TestScaling:

    LENGTHS = (1024, 4096, 16384)

    @pytest.fixture(scope="class")
    def results(self):
        config = BenchConfig(lengths=self.LENGTHS, variants=("ssm_adaln", "attn_adain"))
        return run_benchmark(config, verbose=False)

    def test_attention_over_ssm_ratio(self, results):
        ratios = speed_ratios(results)
        assert all(ratios[length] >= 3.0 for length in self.LENGTHS if length >= 4096)
        ordered = [ratios[length] for length in self.LENGTHS]
        assert ordered == sorted(ordered)

    def test_ssm_time_is_near_linear(self, results):
        ssm = {r.length: r.median_ms for r in results if r.variant == "ssm_adaln"}
        slope = np.polyfit(np.log(list(ssm)), np.log(list(ssm.values())), 1)[0]
        assert slope < 1.3
