"""Compare the pure-Python and compiled kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat N]

Prints wall time per call for each backend and the speed-up.  The two
backends must return the same numbers; the script checks that as well.
"""

import argparse
import time

import numpy as np

from talbotdecoh import kernels
from talbotdecoh.beamline import BeamlineConfig, CollisionKickModel, _kernel_params
from talbotdecoh.core_model import GAS_TABLE, ThermalGasState
from talbotdecoh.talbot_lau import CALIBRATED_PHASE_PARAMETER, _correction_table


def best_time(func, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_coherence_sum(backend, repeat):
    f = 475.0 / 991.0
    clip, table = _correction_table(f, CALIBRATED_PHASE_PARAMETER, 1e-8)
    return best_time(lambda: kernels.coherence_sum(2, 0.913, f, clip, table, 1e-8, 10**8,
                                                   backend=backend), repeat)


def bench_trace(backend, repeat, n):
    gas = GAS_TABLE["CH4"]
    params = _kernel_params(BeamlineConfig(), ThermalGasState(gas, 300.0, 2.5e-4),
                            CollisionKickModel(gas, 300.0))
    return best_time(lambda: kernels.trace_batch(1, 0, n, params, backend=backend), repeat)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--trajectories", type=int, default=20_000)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the Python backend is available")

    rows = []
    results = {}
    for name in backends:
        t_sum, v_sum = bench_coherence_sum(name, args.repeat)
        t_tr, v_tr = bench_trace(name, args.repeat, args.trajectories)
        results[name] = (v_sum, v_tr)
        rows.append((name, t_sum, t_tr))

    print(f"{'backend':<10}{'coherence_sum [s]':>20}{'trace_batch [s]':>18}   ({args.trajectories} trajectories)")
    for name, t_sum, t_tr in rows:
        print(f"{name:<10}{t_sum:>20.4f}{t_tr:>18.4f}")
    if len(rows) == 2:
        (_, s_py, t_py), (_, s_c, t_c) = rows
        print(f"{'speed-up':<10}{s_py / s_c:>19.1f}x{t_py / t_c:>17.1f}x")
        (a_sum, a_tr), (b_sum, b_tr) = results["python"], results["compiled"]
        assert abs(a_sum[0] - b_sum[0]) < 1e-11
        for key in a_tr:
            assert np.array_equal(a_tr[key], b_tr[key]), key
        print("outputs agree")


if __name__ == "__main__":
    main()
