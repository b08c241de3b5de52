"""Discrete time-domain simulation of assembled loops.

Runs the exact sampled recursion of a discrete state-space system for
step, sinusoid and swept-sine experiments, with two optional
nonlinearities from the real drive electronics: encoder quantization
(the position measurement is floored to the encoder grid before the
velocity-averaging filter sees it) and harmonic-drive torque ripple
(a rotor-side disturbance at twice the motor angular rate, the
wave-generator signature).  Everything else is linear, so with both
effects off a trace is just C/D maps over the state recursion and obeys
superposition exactly.

The per-step loop lives in ``_kernels`` (numba-compiled when available;
``JOINTSTAB_BACKEND=numpy`` forces the plain build).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ._kernels import closed_meas_sim, lin_sim
from .errors import (ConfigError, DomainMismatchError,
                     InsufficientDurationError, NonConvergentError,
                     UnknownLabelError)
from .lti import StateSpace

__all__ = [
    "SignalSpec",
    "SimConfig",
    "SimTrace",
    "ChirpEstimate",
    "sample_signal",
    "run_sim",
    "step_metrics",
    "chirp_response",
    "trace_to_csv",
]

_SIGNAL_KINDS = ("zero", "step", "sine", "chirp")

# Channels the nonlinearities own when enabled.
QUANTIZER_INPUT = "theta_L1_meas"
QUANTIZER_SOURCE = "theta_L1"
RIPPLE_INPUT = "Tfr"
RIPPLE_RATE_SOURCE = "dtheta_m"


@dataclass(frozen=True)
class SignalSpec:
    """One exogenous input channel: zero, step, sinusoid or log chirp."""

    kind: str = "zero"
    amplitude: float = 0.0
    t_start: float = 0.0   # step onset
    freq_hz: float = 0.0   # sinusoid
    f0_hz: float = 0.0     # chirp start
    f1_hz: float = 0.0     # chirp end

    def __post_init__(self):
        if self.kind not in _SIGNAL_KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}")
        if self.kind == "step" and self.t_start < 0:
            raise ConfigError("step onset must be non-negative")
        if self.kind == "sine" and not self.freq_hz > 0:
            raise ConfigError("sinusoid frequency must be positive")
        if self.kind == "chirp" and not (0 < self.f0_hz < self.f1_hz):
            raise ConfigError("chirp requires 0 < f0_hz < f1_hz")

    @classmethod
    def zero(cls) -> "SignalSpec":
        return cls()

    @classmethod
    def step(cls, amplitude: float, t_start: float = 0.0) -> "SignalSpec":
        return cls(kind="step", amplitude=amplitude, t_start=t_start)

    @classmethod
    def sine(cls, amplitude: float, freq_hz: float) -> "SignalSpec":
        return cls(kind="sine", amplitude=amplitude, freq_hz=freq_hz)

    @classmethod
    def chirp(cls, amplitude: float, f0_hz: float,
              f1_hz: float) -> "SignalSpec":
        return cls(kind="chirp", amplitude=amplitude, f0_hz=f0_hz,
                   f1_hz=f1_hz)


@dataclass(frozen=True)
class SimConfig:
    """What to run: duration, input signals, and the two nonlinearities.

    ``Ts`` is an optional cross-check: when set it must equal the sample
    time of the system handed to run_sim.  ``ripple_amplitude`` of zero
    leaves the ripple path unused.
    """

    duration: float
    inputs: Mapping[str, SignalSpec] = field(default_factory=dict)
    quantize_encoder: bool = False
    counts_per_rev: int = 80000
    ripple_amplitude: float = 0.0
    Ts: float | None = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be strictly positive")
        if int(self.counts_per_rev) != self.counts_per_rev \
                or self.counts_per_rev < 1:
            raise ConfigError("counts_per_rev must be a positive integer")
        if self.ripple_amplitude < 0:
            raise ConfigError("ripple amplitude must be non-negative")
        if self.Ts is not None and not self.Ts > 0:
            raise ConfigError("Ts must be strictly positive")
        object.__setattr__(self, "inputs", dict(self.inputs))
        for name, spec in self.inputs.items():
            if not isinstance(spec, SignalSpec):
                raise ConfigError(f"input {name!r} is not a SignalSpec")


@dataclass(frozen=True)
class SimTrace:
    """Uniformly sampled run: time plus labeled channel vectors."""

    time: np.ndarray
    channels: dict
    Ts: float

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        object.__setattr__(self, "time", t)
        for name, v in self.channels.items():
            if np.asarray(v).shape != t.shape:
                raise ConfigError(f"channel {name!r} length differs from time")

    def __getitem__(self, label: str) -> np.ndarray:
        try:
            return self.channels[label]
        except KeyError:
            raise UnknownLabelError(f"no channel {label!r} in trace") from None

    @property
    def labels(self) -> tuple:
        return tuple(self.channels)


@dataclass(frozen=True)
class ChirpEstimate:
    """Empirical amplitude response from a swept-sine run."""

    omega_rad_s: np.ndarray
    amplitude_ratio: np.ndarray


def sample_signal(spec: SignalSpec, t: np.ndarray,
                  Ts: float | None = None) -> np.ndarray:
    """Sample one signal spec on a time grid.

    For chirps the grid's sample time bounds the reachable frequency:
    f1 above the Nyquist rate is rejected.  The sweep is logarithmic, so
    equal time spans cover equal frequency ratios and the instantaneous
    frequency is f0 * (f1/f0)**(t/T).
    """
    t = np.asarray(t, dtype=float)
    if spec.kind == "zero":
        return np.zeros_like(t)
    if spec.kind == "step":
        return spec.amplitude * (t >= spec.t_start - 1e-12).astype(float)
    if spec.kind == "sine":
        return spec.amplitude * np.sin(2.0 * math.pi * spec.freq_hz * t)
    # chirp
    if Ts is not None and spec.f1_hz > 0.5 / Ts * (1 + 1e-12):
        raise ConfigError(
            f"chirp end frequency {spec.f1_hz} Hz exceeds the Nyquist rate "
            f"{0.5 / Ts:.6g} Hz")
    T = float(t[-1]) if t.size and t[-1] > 0 else 1.0
    ratio = spec.f1_hz / spec.f0_hz
    log_r = math.log(ratio) / T
    phase = 2.0 * math.pi * spec.f0_hz * (np.exp(log_r * t) - 1.0) / log_r
    return spec.amplitude * np.sin(phase)


def _feedthrough_free(sys: StateSpace, row: int) -> bool:
    tol = 1e-12 * max(1.0, float(np.abs(sys.D).max()))
    return bool(np.all(np.abs(sys.D[row, :]) <= tol))


def run_sim(sys: StateSpace, cfg: SimConfig,
            x0: np.ndarray | None = None) -> SimTrace:
    """Exact sampled response of a discrete system to the configured run.

    The trace carries every system output plus every driven input (and
    the quantizer/ripple channels when those are enabled, holding the
    values actually injected).  Quantization floors the ``theta_L1``
    output to the encoder grid 2*pi/counts_per_rev and feeds it back
    through the ``theta_L1_meas`` input; ripple drives ``Tfr`` with
    amplitude * sin(2 * phase), the phase integrated from the motor
    rate output ``dtheta_m``.
    """
    if sys.dt is None:
        raise DomainMismatchError("simulation requires a discrete-time system")
    if cfg.Ts is not None and not math.isclose(cfg.Ts, sys.dt,
                                               rel_tol=1e-12, abs_tol=0.0):
        raise DomainMismatchError(
            f"config sample time {cfg.Ts} differs from system {sys.dt}")
    Ts = sys.dt
    n = int(round(cfg.duration / Ts)) + 1
    time = np.arange(n) * Ts

    in_labels = list(sys.input_labels)
    for name in cfg.inputs:
        if name not in in_labels:
            raise UnknownLabelError(f"system has no input {name!r}")

    i_meas = o_pos = i_tfr = o_dthm = -1
    q_step = 0.0
    if cfg.quantize_encoder:
        if QUANTIZER_INPUT in cfg.inputs:
            raise ConfigError(
                f"{QUANTIZER_INPUT!r} is driven by the quantizer; remove it "
                "from the input specs")
        try:
            i_meas = sys.input_index(QUANTIZER_INPUT)
            o_pos = sys.output_index(QUANTIZER_SOURCE)
        except UnknownLabelError:
            raise ConfigError(
                "encoder quantization needs a system with input "
                f"{QUANTIZER_INPUT!r} and output {QUANTIZER_SOURCE!r} "
                "(assemble the loop with measurement_input=True)") from None
        if not _feedthrough_free(sys, o_pos):
            raise ConfigError("quantizer source output has direct feedthrough")
        q_step = 2.0 * math.pi / cfg.counts_per_rev
    ripple_on = cfg.ripple_amplitude > 0.0
    if ripple_on:
        if RIPPLE_INPUT in cfg.inputs:
            raise ConfigError(
                f"{RIPPLE_INPUT!r} is driven by the ripple model; remove it "
                "from the input specs")
        try:
            i_tfr = sys.input_index(RIPPLE_INPUT)
            o_dthm = sys.output_index(RIPPLE_RATE_SOURCE)
        except UnknownLabelError:
            raise ConfigError(
                "torque ripple needs a system with input "
                f"{RIPPLE_INPUT!r} and output {RIPPLE_RATE_SOURCE!r}") from None
        if not _feedthrough_free(sys, o_dthm):
            raise ConfigError("ripple rate output has direct feedthrough")

    u = np.zeros((n, len(in_labels)))
    for name, spec in cfg.inputs.items():
        u[:, in_labels.index(name)] = sample_signal(spec, time, Ts)

    x = np.zeros(sys.n_states) if x0 is None \
        else np.asarray(x0, dtype=float).reshape(sys.n_states)
    A = np.ascontiguousarray(sys.A, dtype=float)
    B = np.ascontiguousarray(sys.B, dtype=float)
    C = np.ascontiguousarray(sys.C, dtype=float)
    D = np.ascontiguousarray(sys.D, dtype=float)
    if i_meas < 0 and not ripple_on:
        y = lin_sim(A, B, C, D, u, x)
    else:
        y = closed_meas_sim(A, B, C, D, u, x, i_meas, o_pos, q_step,
                            i_tfr, o_dthm, cfg.ripple_amplitude, Ts)

    channels = {lab: y[:, i] for i, lab in enumerate(sys.output_labels)}
    driven = [name for name, spec in cfg.inputs.items() if spec.kind != "zero"]
    if i_meas >= 0:
        driven.append(QUANTIZER_INPUT)
    if ripple_on:
        driven.append(RIPPLE_INPUT)
    for name in driven:
        if name not in channels:
            channels[name] = u[:, in_labels.index(name)].copy()
    return SimTrace(time=time, channels=channels, Ts=Ts)


def step_metrics(trace: SimTrace, channel: str, final_value: float) -> dict:
    """Rise time (10-90%), overshoot (%) and 2% settling time.

    Settling is the time of the first sample after the last excursion
    from the +/-2% band around ``final_value``; a trace still outside
    the band at its end never settled and raises NonConvergentError.
    """
    if final_value == 0.0:
        raise ConfigError("relative step metrics need a nonzero final value")
    y = trace[channel]
    t = trace.time
    rel = y / final_value
    viol = np.abs(rel - 1.0) > 0.02
    if viol[-1]:
        raise NonConvergentError(
            f"channel {channel!r} does not stay within 2% of {final_value}")
    bad = np.nonzero(viol)[0]
    settling = float(t[bad[-1] + 1]) if bad.size else 0.0
    above10 = np.nonzero(rel >= 0.1)[0]
    above90 = np.nonzero(rel >= 0.9)[0]
    if above10.size == 0 or above90.size == 0:
        raise NonConvergentError(
            f"channel {channel!r} never reaches 90% of {final_value}")
    rise = float(t[above90[0]] - t[above10[0]])
    overshoot = max(0.0, (float(np.max(rel)) - 1.0) * 100.0)
    return {"rise_time_10_90": rise, "overshoot_pct": overshoot,
            "settling_time_2pct": settling}


def chirp_response(sys: StateSpace, cfg: SimConfig,
                   output: str = "dtheta_L1",
                   n_estimates: int = 200) -> ChirpEstimate:
    """Empirical amplitude response from a logarithmic swept sine.

    Exactly one input spec must be a chirp.  The sweep must span at
    least a decade and last at least 50 periods of the start frequency
    (slow enough that the response tracks the instantaneous frequency).
    The estimate at each frequency is the ratio of output to input peak
    amplitude over a window of three instantaneous periods -- no
    analytic-signal machinery, just peak picking, which resolves the
    resonance/anti-resonance signature cleanly.
    """
    chirps = [(name, spec) for name, spec in cfg.inputs.items()
              if spec.kind == "chirp"]
    if len(chirps) != 1:
        raise ConfigError("chirp_response needs exactly one chirp input")
    name, spec = chirps[0]
    if spec.f1_hz / spec.f0_hz < 10.0:
        raise ConfigError("chirp must span at least one decade")
    min_duration = 50.0 / spec.f0_hz
    if cfg.duration < min_duration:
        raise InsufficientDurationError(
            f"chirp needs at least {min_duration:.6g} s "
            f"(50 periods of {spec.f0_hz} Hz); got {cfg.duration:.6g} s")

    trace = run_sim(sys, cfg)
    uv = trace[name]
    yv = trace[output]
    t = trace.time
    T = float(t[-1])
    log_r = math.log(spec.f1_hz / spec.f0_hz) / T

    freqs = np.logspace(math.log10(spec.f0_hz), math.log10(spec.f1_hz),
                        n_estimates)
    w_out, ratio = [], []
    for f in freqs:
        tc = math.log(f / spec.f0_hz) / log_r
        span = 3.0 / f
        lo = tc - 0.5 * span
        if lo < 0.0:        # keep a full window by sliding it right
            lo = 0.0
        hi = lo + span
        if hi > T:
            hi = T
            lo = max(0.0, hi - span)
        i0 = int(lo / trace.Ts)
        i1 = int(hi / trace.Ts) + 1
        peak_u = float(np.max(np.abs(uv[i0:i1])))
        if peak_u == 0.0:
            continue
        w_out.append(2.0 * math.pi * f)
        ratio.append(float(np.max(np.abs(yv[i0:i1]))) / peak_u)
    return ChirpEstimate(omega_rad_s=np.array(w_out),
                         amplitude_ratio=np.array(ratio))


def trace_to_csv(trace: SimTrace) -> str:
    """Deterministic CSV form: time column then every channel, 9
    significant digits, comma delimited, Unix newlines."""
    labels = list(trace.labels)
    lines = [",".join(["time"] + labels)]
    cols = [trace.time] + [trace[lab] for lab in labels]
    for row in zip(*cols):
        lines.append(",".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"
