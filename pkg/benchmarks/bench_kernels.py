"""Timing comparison of the two simulation-kernel builds.

The kernel backend (numba ``@njit`` vs plain numpy) is fixed at import
time by the ``JOINTSTAB_BACKEND`` environment variable, so each backend
is measured in its own subprocess.  Two representative workloads:

* ``linear``   -- nominal full closed loop (impedance + torque +
                  velocity compensation), position-reference step,
                  plain state recursion;
* ``measured`` -- torque loop with the encoder quantizer and torque
                  ripple closed per step (the data-dependent path that
                  cannot be vectorized away).

Run ``python benchmarks/bench_kernels.py`` from the repository root or
anywhere the package is importable.  Use ``--steps``/``--repeats`` to
trade precision against runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _build_cases(steps: int):
    from jointstab.cli import parse_config
    from jointstab.controllers import assemble_closed_loop
    from jointstab.sim import SignalSpec, SimConfig, run_sim

    nominal = parse_config("")
    torque_only = parse_config("[impedance]\nclosed = false\n")
    Ts = nominal.loop.Ts
    duration = (steps - 1) * Ts

    lin_sys = assemble_closed_loop(nominal.params, nominal.loop)
    lin_cfg = SimConfig(duration=duration,
                        inputs={"theta_ref": SignalSpec.step(0.1)})

    meas_sys = assemble_closed_loop(
        torque_only.params, torque_only.loop,
        extra_outputs=("dtheta_L1_filt", "dtheta_m"),
        measurement_input=True)
    meas_cfg = SimConfig(duration=duration,
                         inputs={"Tl_ref": SignalSpec.step(1.0)},
                         quantize_encoder=True,
                         counts_per_rev=torque_only.loop.filt
                         .encoder_counts_per_rev,
                         ripple_amplitude=0.05)

    return {"linear": (lin_sys, lin_cfg, run_sim),
            "measured": (meas_sys, meas_cfg, run_sim)}


def _worker(steps: int, repeats: int) -> None:
    """Time both workloads under the backend this process imported."""
    from jointstab._kernels import backend_name

    cases = _build_cases(steps)
    record = {"backend": backend_name(), "steps": steps}
    for name, (sys_, cfg, run) in cases.items():
        t0 = time.perf_counter()
        run(sys_, cfg)  # first call pays any JIT compile cost
        record[f"{name}_first_s"] = time.perf_counter() - t0
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            run(sys_, cfg)
            best = min(best, time.perf_counter() - t0)
        record[f"{name}_best_s"] = best
    print(json.dumps(record))


def _run_backend(backend: str, steps: int, repeats: int) -> dict:
    env = dict(os.environ, JOINTSTAB_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--steps", str(steps), "--repeats", str(repeats)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000,
                        help="samples per run (default 200000 = 200 s "
                             "of closed-loop time at 1 kHz)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed repetitions; best is reported")
    parser.add_argument("--worker", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.worker:
        _worker(args.steps, args.repeats)
        return 0

    results = {}
    for backend in ("numba", "numpy"):
        try:
            results[backend] = _run_backend(backend, args.steps,
                                            args.repeats)
        except subprocess.CalledProcessError as exc:
            print(f"{backend}: failed\n{exc.stderr}", file=sys.stderr)

    if not results:
        return 1
    print(f"{args.steps} steps per run, best of {args.repeats}\n")
    print(f"{'case':<10} {'backend':<8} {'first call':>12} {'best':>12} "
          f"{'steps/s':>12}")
    for case in ("linear", "measured"):
        for backend, rec in results.items():
            best = rec[f"{case}_best_s"]
            print(f"{case:<10} {backend:<8} "
                  f"{rec[f'{case}_first_s']:>11.4f}s {best:>11.4f}s "
                  f"{args.steps / best:>12.3g}")
        if len(results) == 2:
            ratio = (results["numpy"][f"{case}_best_s"]
                     / results["numba"][f"{case}_best_s"])
            print(f"{'':<10} numba is {ratio:.1f}x faster\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
