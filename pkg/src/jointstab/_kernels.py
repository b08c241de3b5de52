"""Hot simulation loops, compiled with numba when available.

The state recursion is the only part of the package where Python-level
looping costs real time (traces run to hundreds of thousands of steps,
and the quantizer/ripple nonlinearities force a per-step data
dependency, so the loop cannot be vectorized away).  Both kernels exist
in two interchangeable builds:

* the numba ``@njit`` build (default when numba imports cleanly), and
* the plain-Python/numpy build.

Set the environment variable ``JOINTSTAB_BACKEND`` to ``numpy`` or
``numba`` to force one; the active choice is reported by
``backend_name()``.  Results are identical bit for bit -- the kernels
use the same scalar arithmetic either way -- so the flag only trades
compile latency against loop speed (see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["backend_name", "lin_sim", "closed_meas_sim"]


def _lin_sim(Ad, Bd, C, D, u, x0):
    """Plain LTI recursion: y[k] = C x[k] + D u[k]; x[k+1] = Ad x + Bd u."""
    n_steps = u.shape[0]
    n_out = C.shape[0]
    y = np.empty((n_steps, n_out))
    x = x0.copy()
    for k in range(n_steps):
        uk = u[k]
        y[k] = C @ x + D @ uk
        x = Ad @ x + Bd @ uk
    return y


def _closed_meas_sim(Ad, Bd, C, D, u, x0, i_meas, o_pos, q_step,
                     i_tfr, o_dthm, ripple_amp, Ts):
    """Recursion with the measurement/ripple channels closed per step.

    ``i_meas`` < 0 disables quantization; otherwise input column
    ``i_meas`` is set each step to the output row ``o_pos`` floored to
    the ``q_step`` grid.  ``i_tfr`` < 0 disables ripple; otherwise input
    column ``i_tfr`` carries ripple_amp * sin(2 * phase), with the phase
    accumulated from the output row ``o_dthm`` (so the ripple frequency
    is twice the motor-side rate).  The rows ``o_pos`` and ``o_dthm``
    must be pure state maps (zero feedthrough), which the caller checks.
    """
    n_steps = u.shape[0]
    n_out = C.shape[0]
    y = np.empty((n_steps, n_out))
    x = x0.copy()
    phase = 0.0
    for k in range(n_steps):
        uk = u[k]
        if i_meas >= 0:
            pos = C[o_pos] @ x
            uk[i_meas] = q_step * math.floor(pos / q_step)
        if i_tfr >= 0:
            uk[i_tfr] = ripple_amp * math.sin(2.0 * phase)
            phase += Ts * (C[o_dthm] @ x)
        y[k] = C @ x + D @ uk
        x = Ad @ x + Bd @ uk
    return y


def _pick_backend() -> str:
    choice = os.environ.get("JOINTSTAB_BACKEND", "").strip().lower()
    if choice in ("numpy", "numba"):
        return choice
    if choice:
        raise ValueError(
            f"JOINTSTAB_BACKEND must be 'numba' or 'numpy', not {choice!r}")
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "numpy"


_BACKEND = _pick_backend()

if _BACKEND == "numba":
    import numba

    lin_sim = numba.njit(cache=True)(_lin_sim)
    closed_meas_sim = numba.njit(cache=True)(_closed_meas_sim)
else:
    lin_sim = _lin_sim
    closed_meas_sim = _closed_meas_sim


def backend_name() -> str:
    """The loop implementation in use: 'numba' or 'numpy'."""
    return _BACKEND
