#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-Python fallbacks.

Times the stepped oracle (the hot loop: one state scan per 0.01 ms tick) and
the uplink packet walk on both backends, checks that results agree, and prints
a small table. Run after `pip install -e . --no-build-isolation`:

    python3 benchmarks/bench_backends.py
"""

import argparse
import time

import numpy as np

from edgeloop import _backend
from edgeloop.engine import _uplink_walk_py, loss_bit_generator, simulate
from edgeloop.model import (
    EncodingKind,
    EncodingMode,
    ScenarioConfig,
    validate_scenario,
)
from edgeloop.oracle import oracle_simulate


def bench_scenario(duration_ms: float) -> ScenarioConfig:
    return validate_scenario(
        ScenarioConfig(
            encoding=EncodingMode(kind=EncodingKind.SEMANTIC, ratio=100.0, encode_latency_ms=20.0),
            duration_ms=duration_ms,
            seed=42,
            emergency_times_ms=(duration_ms / 3, 2 * duration_ms / 3),
        )
    )


def time_fn(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_oracle(duration_ms, repeats):
    scenario = bench_scenario(duration_ms)
    t_py, m_py = time_fn(lambda: oracle_simulate(scenario, backend="python"), repeats)
    t_cy, m_cy = time_fn(lambda: oracle_simulate(scenario, backend="compiled"), repeats)
    assert m_py.frame_traces == m_cy.frame_traces, "backends disagree"
    return t_py, t_cy, m_py.frames_total


def bench_walk(repeats):
    payload = 3_000_000

    def run_py():
        rng = np.random.Generator(loss_bit_generator(1, 0))
        return _uplink_walk_py(payload, 1500, 40, 39.9e6, 0.02, 2, 0.0, 16.0, 32.0, 16.0, rng)

    def run_cy():
        return _backend._core.uplink_walk(
            payload, 1500, 40, 39.9e6, 0.02, 2, 0.0, 16.0, 32.0, 16.0, loss_bit_generator(1, 0)
        )

    t_py, r_py = time_fn(run_py, repeats)
    t_cy, r_cy = time_fn(run_cy, repeats)
    assert r_py == r_cy, "walk backends disagree"
    return t_py, t_cy


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--duration-ms", type=float, default=2000.0)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not _backend.HAVE_CORE:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")

    print(f"{'kernel':<28} {'python':>10} {'compiled':>10} {'speedup':>8}")
    t_py, t_cy, frames = bench_oracle(args.duration_ms, args.repeats)
    label = f"stepped oracle ({frames} frames)"
    print(f"{label:<28} {t_py * 1e3:>8.1f}ms {t_cy * 1e3:>8.1f}ms {t_py / t_cy:>7.1f}x")
    t_py, t_cy = bench_walk(args.repeats)
    print(f"{'uplink walk (2055 packets)':<28} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms {t_py / t_cy:>7.1f}x")

    scenario = bench_scenario(args.duration_ms)
    t_sim, _ = time_fn(lambda: simulate(scenario), args.repeats)
    print(f"\nevent engine on the same scenario: {t_sim * 1e3:.1f} ms "
          f"(backend: {_backend.backend_name()})")


if __name__ == "__main__":
    main()
