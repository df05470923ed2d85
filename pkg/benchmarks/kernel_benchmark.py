"""Benchmark the trajectory integrator: compiled kernel vs pure Python.

Runs each catalog scenario at its shipped known-unsafe parameters plus a
five-adversary intersection, timing `run_scene` under both backends and
reporting the per-call cost and speedup.  Results verify the two backends
produce bit-identical outputs before timing.

Usage:
    python3 benchmarks/kernel_benchmark.py [--repeats N] [--scenario ID]
"""

import argparse
import time

import numpy as np

from falsify.kinematics import kernel_functions, run_scene
from falsify.scenarios import (
    ScenarioConfig,
    build_scene,
    default_feature_space,
    known_unsafe_values,
    scenario_ids,
)


def bench_case(label, scene, repeats):
    backends = kernel_functions()
    if "numba" not in backends:
        raise SystemExit(
            "numba backend unavailable (FALSIFY_NUMBA disabled or numba missing); "
            "nothing to compare"
        )

    outputs = {}
    for name in ("numba", "python"):
        outputs[name] = run_scene(scene, backend=name)
    for a, b in zip(outputs["numba"], outputs["python"]):
        if isinstance(a, np.ndarray):
            assert np.array_equal(a, b), f"{label}: backends diverge"
        else:
            assert a == b, f"{label}: backends diverge"

    timings = {}
    for name in ("numba", "python"):
        run_scene(scene, backend=name)  # warm-up (JIT load / cache touch)
        start = time.perf_counter()
        for _ in range(repeats):
            run_scene(scene, backend=name)
        timings[name] = (time.perf_counter() - start) / repeats

    frames = outputs["numba"][0].shape[0]
    speedup = timings["python"] / timings["numba"]
    print(
        f"{label:<16} {frames:>6} {timings['numba'] * 1e3:>11.3f} "
        f"{timings['python'] * 1e3:>12.3f} {speedup:>8.1f}x"
    )
    return timings


def scene_for(scenario_id):
    adversaries = 5 if scenario_id == "intersection" else 1
    cfg = ScenarioConfig(scenario_id, adversaries=adversaries)
    if scenario_id == "intersection":
        space = default_feature_space(cfg)
        values = [(d.lo + d.hi) / 2 for d in space.dims]
    else:
        values = known_unsafe_values(cfg)
    return build_scene(cfg, values)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--scenario", help="run a single scenario id")
    args = parser.parse_args()

    ids = [args.scenario] if args.scenario else [*scenario_ids(), "intersection"]
    ids = list(dict.fromkeys(ids))
    if "intersection" in ids:
        ids.remove("intersection")
        ids.append("intersection")  # heaviest case last

    print(f"{'scenario':<16} {'frames':>6} {'numba (ms)':>11} {'python (ms)':>12} {'speedup':>9}")
    totals = {"numba": 0.0, "python": 0.0}
    for sid in ids:
        label = f"{sid} (m=5)" if sid == "intersection" else sid
        timing = bench_case(label, scene_for(sid), args.repeats)
        for key in totals:
            totals[key] += timing[key]
    print(
        f"{'total':<16} {'':>6} {totals['numba'] * 1e3:>11.3f} "
        f"{totals['python'] * 1e3:>12.3f} {totals['python'] / totals['numba']:>8.1f}x"
    )


if __name__ == "__main__":
    main()
