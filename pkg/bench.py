"""
Fusion-module benchmark: exact parameter counts and forward timings.

Every variant runs one fusion block at channel width d on a single feature
map of L = h·w tokens, forward only, without an autodiff graph. Timings are
the median and interquartile range of R repeats after W discarded warmup
runs, measured with every native BLAS/OpenMP pool limited to one thread and a
monotonic high-resolution clock.
"""

import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from errors import ConfigurationError
from model.fusion import FusionTag, build_fusion, parse_tag
from settings import Settings, console
from tensor import HAS_NUMBA, RngStream, Tensor, l2_normalize, no_grad, track_allocations


BENCH_SCHEMA = "clast-bench/1"
MIN_REPEATS = 20
MIN_WARMUP = 3


@dataclass
class BenchConfig:
    lengths: Sequence[int] = (256, 1024, 4096, 16384)
    variants: Sequence[str] = ("ssm_adaln", "attn_adain", "linattn_adaln")
    channels: int = 64
    state_size: int = 8
    embed_dim: int = 64
    repeats: int = MIN_REPEATS
    warmup: int = MIN_WARMUP
    float_width: int = 32
    seed: int = 0

    @classmethod
    def from_settings(cls, settings: Settings) -> "BenchConfig":
        return cls(
            lengths=settings.bench_lengths,
            variants=settings.bench_variants,
            channels=settings.channels,
            state_size=settings.state_size,
            embed_dim=settings.embed_dim,
            repeats=settings.bench_repeats,
            warmup=settings.bench_warmup,
            float_width=settings.bench_float_width,
            seed=settings.seed,
        )


@dataclass
class BenchResult:
    variant: str
    length: int
    channels: int
    state_size: int
    median_ms: float
    iqr_ms: float
    repeats: int
    warmup: int
    calls_per_sample: int
    params: int
    peak_floats: int            # floats allocated by one forward
    largest_buffer: int         # largest single allocation, in floats
    threads: int = 1            # widest native thread pool seen while timing
    notes: List[str] = field(default_factory=list)


def count_params(variant: Union[FusionTag, str], d: int = 64, n: int = 8, embed_dim: Optional[int] = None) -> int:
    """Exact trainable parameter count of one fusion block, by enumeration."""
    stack = build_fusion(variant, channels=d, state_size=n, embed_dim=embed_dim or d, depth=1)
    return stack.num_parameters()


def build_profile(float_width: int = 32) -> Dict[str, object]:
    """What produced the numbers: numerics stack, JIT availability and float width."""
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
        "scan_kernel": "numba-jit" if HAS_NUMBA else "numpy",
        "opt_level": "nopython-jit" if HAS_NUMBA else "interpreted",
        "float_width": float_width,
        "threads": pinned_threads(),
        "timer": "perf_counter",
        "timer_resolution_s": time.get_clock_info("perf_counter").resolution,
    }


def _widest_pool() -> int:
    return max([pool["num_threads"] for pool in threadpool_info()], default=1)


def pinned_threads() -> int:
    """Widest BLAS/OpenMP pool under a one-thread limit; 1 when no native pool is loaded."""
    with threadpool_limits(limits=1):
        return _widest_pool()


def grid_shape(length: int) -> Tuple[int, int]:
    """Most square h×w with h·w = length."""
    h = int(np.floor(np.sqrt(length)))
    while length % h:
        h -= 1
    return h, length // h


def _time_calls(fn, calls: int) -> float:
    start = time.perf_counter()
    for _ in range(calls):
        fn()
    return (time.perf_counter() - start) / calls


def bench_fusion(
    variant: Union[FusionTag, str],
    length: int,
    d: int = 64,
    repeats: int = MIN_REPEATS,
    n: int = 8,
    warmup: int = MIN_WARMUP,
    float_width: int = 32,
    embed_dim: Optional[int] = None,
    seed: int = 0,
) -> BenchResult:
    """
    Time one forward of a fusion block on L = `length` tokens.

    If the clock resolution exceeds 1% of a single call, calls are batched per
    timing sample (doubling until resolved) and a note is added.
    """
    tag = parse_tag(variant)
    if length < 1:
        raise ConfigurationError(f"sequence length must be >= 1, got {length}")
    if repeats < MIN_REPEATS or warmup < MIN_WARMUP:
        raise ConfigurationError(f"need at least {MIN_REPEATS} repeats and {MIN_WARMUP} warmup runs")
    dtype = {32: np.float32, 64: np.float64}.get(float_width)
    if dtype is None:
        raise ConfigurationError(f"float width must be 32 or 64, got {float_width}")

    embed_dim = embed_dim or d
    stack = build_fusion(tag, channels=d, state_size=n, embed_dim=embed_dim, depth=1, seed=seed)
    params = stack.num_parameters()
    stack.to_dtype(dtype)
    rng = RngStream(seed).split(length)
    h, w = grid_shape(length)
    x = Tensor(rng.split(0).normal((1, d, h, w), dtype=dtype))
    z = l2_normalize(Tensor(rng.split(1).normal((1, embed_dim), dtype=dtype)))

    def forward():
        return stack(x, z)

    notes = []
    with no_grad(), threadpool_limits(limits=1):
        threads = _widest_pool()
        for _ in range(warmup):
            forward()
        with track_allocations() as counter:
            forward()

        resolution = time.get_clock_info("perf_counter").resolution
        calls = 1
        while resolution > 0.01 * _time_calls(forward, calls) * calls and calls < 1 << 16:
            calls *= 2
        if calls > 1:
            notes.append(f"timer resolution {resolution:.1e}s is coarse; timing {calls} calls per sample")
        samples = np.array([_time_calls(forward, calls) for _ in range(repeats)]) * 1e3

    q1, median, q3 = np.percentile(samples, [25, 50, 75])
    return BenchResult(
        variant=tag.value,
        length=length,
        channels=d,
        state_size=n,
        median_ms=float(median),
        iqr_ms=float(q3 - q1),
        repeats=repeats,
        warmup=warmup,
        calls_per_sample=calls,
        params=params,
        peak_floats=counter.floats,
        largest_buffer=counter.largest,
        threads=threads,
        notes=notes,
    )


def run_benchmark(config: BenchConfig, verbose: bool = True) -> List[BenchResult]:
    """Benchmark every (variant, length) pair sequentially."""
    results = []
    if verbose:
        console.rule("Fusion benchmark")
    for variant in config.variants:
        for length in config.lengths:
            result = bench_fusion(
                variant, length, d=config.channels, repeats=config.repeats, n=config.state_size,
                warmup=config.warmup, float_width=config.float_width, embed_dim=config.embed_dim, seed=config.seed,
            )
            results.append(result)
            if verbose:
                console.print(
                    f"  {result.variant:<14} L={length:<6} {result.median_ms:10.3f} ms "
                    f"(IQR {result.iqr_ms:.3f})  params={result.params}"
                )
    return results


def speed_ratios(results: Sequence[BenchResult], slow: str = "attn_adain", fast: str = "ssm_adaln") -> Dict[int, float]:
    """median(slow) / median(fast) per sequence length."""
    by_key = {(r.variant, r.length): r.median_ms for r in results}
    return {
        length: by_key[(slow, length)] / by_key[(fast, length)]
        for (variant, length) in sorted(by_key)
        if variant == fast and (slow, length) in by_key
    }


def save_results(results: Sequence[BenchResult], path: Union[str, Path], float_width: int = 32) -> Path:
    """Write bench.json: schema tag, build profile and one object per result."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": BENCH_SCHEMA,
        "build": build_profile(float_width),
        "results": [asdict(r) for r in results],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    return path
