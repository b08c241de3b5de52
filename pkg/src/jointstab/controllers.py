"""Controller blocks and sampled closed-loop assembly.

The stack around the joint drivetrain, innermost first: a positive
velocity-compensation path (cancels the back-EMF-induced load on the
motor), a discrete PI torque loop on the sensed transmission torque and
an outer impedance PD that renders a virtual spring-damper at the hub.
Link velocity is not measured directly; it is reconstructed by averaging
encoder first differences over Nav samples.

Assembly is done on labeled state-space blocks so every summing junction
in the signal flow appears exactly once, and the same blocks serve both
the closed-loop eigenvalue analysis and the open-loop margin sweeps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .lti import (Polynomial, RationalTF, StateSpace, c2d_zoh, connect,
                  minreal, series, ss_to_tf, static_gain)
from .plant import PlantParams, build_plant

__all__ = [
    "G_EARTH",
    "VCMode",
    "Loop",
    "BreakPoint",
    "TorquePIConfig",
    "VelCompConfig",
    "ImpedanceConfig",
    "AveragingFilterConfig",
    "LoopConfig",
    "nominal_loop",
    "pi_tf",
    "vc_gain",
    "vc_gain_value",
    "averaging_filter_tf",
    "averaging_filter_ss",
    "impedance_law",
    "inverse_dynamics_ff",
    "assemble_closed_loop",
    "assemble_loop_gain",
]

G_EARTH = 9.81  # m/s^2


class VCMode(enum.Enum):
    SIMPLIFIED = "simplified"
    FULL = "full"


class Loop(enum.Enum):
    VELOCITY_COMP = "velocity_comp"
    TORQUE = "torque"
    IMPEDANCE = "impedance"


class BreakPoint(enum.Enum):
    TORQUE_ERROR = "torque_error"
    IMPEDANCE_ERROR = "impedance_error"


@dataclass(frozen=True)
class TorquePIConfig:
    """Discrete PI torque controller; both gains scale with one knob.

    PI(z) = Pt + It*z*Ts/(z-1) with Pt = 0.382*beta and It = 18*beta,
    which pins the controller zero at a fixed location for a given Ts.
    """

    beta: float = 1.0
    Ts: float = 1e-3

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be strictly positive")
        if not self.Ts > 0:
            raise ConfigError("Ts must be strictly positive")

    @property
    def Pt(self) -> float:
        return 0.382 * self.beta

    @property
    def It(self) -> float:
        return 18.0 * self.beta


@dataclass(frozen=True)
class VelCompConfig:
    """Positive velocity-compensation path.

    ``alpha`` scales the compensation between none (0) and full
    cancellation of the modeled electrical/friction load (1).  The
    simplified mode is the constant gain obtained in the limit L=0,
    Jm=0; the full mode is improper and only meaningful for
    continuous-time analysis.  ``filtered`` selects whether the path
    reads the averaged velocity estimate (as the real controller does)
    or the exact link velocity (analysis-only variant).
    """

    alpha: float = 0.94
    mode: VCMode = VCMode.SIMPLIFIED
    filtered: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")


@dataclass(frozen=True)
class ImpedanceConfig:
    """Outer-loop virtual stiffness and damping rendered at the hub."""

    Pgain: float = 200.0   # Nm/rad
    Dgain: float = 10.0    # Nms/rad

    def __post_init__(self):
        if self.Pgain < 0 or self.Dgain < 0:
            raise ConfigError("impedance gains must be non-negative")


@dataclass(frozen=True)
class AveragingFilterConfig:
    """Velocity estimation by averaging Nav encoder first differences."""

    Nav: int = 4
    Ts: float = 1e-3
    encoder_counts_per_rev: int = 80000

    def __post_init__(self):
        if int(self.Nav) != self.Nav or self.Nav < 1:
            raise ConfigError("Nav must be a positive integer")
        if not self.Ts > 0:
            raise ConfigError("Ts must be strictly positive")
        if self.encoder_counts_per_rev < 1:
            raise ConfigError("encoder_counts_per_rev must be positive")


@dataclass(frozen=True)
class LoopConfig:
    """Which loops are closed, and with what controller settings."""

    pi: TorquePIConfig = field(default_factory=TorquePIConfig)
    vc: VelCompConfig = field(default_factory=VelCompConfig)
    imp: ImpedanceConfig = field(default_factory=ImpedanceConfig)
    filt: AveragingFilterConfig = field(default_factory=AveragingFilterConfig)
    closed: frozenset = frozenset({Loop.VELOCITY_COMP, Loop.TORQUE})
    computation_delay: bool = False

    def __post_init__(self):
        object.__setattr__(self, "closed", frozenset(self.closed))
        if Loop.IMPEDANCE in self.closed and Loop.TORQUE not in self.closed:
            raise ConfigError("impedance loop requires the torque loop closed")
        if self.pi.Ts != self.filt.Ts:
            raise ConfigError("controller and filter sample times differ")

    @property
    def Ts(self) -> float:
        return self.pi.Ts


def nominal_loop(beta: float = 1.0, alpha: float = 0.94, nav: int = 4,
                 ts: float = 1e-3, pgain: float = 200.0, dgain: float = 10.0,
                 closed=(Loop.VELOCITY_COMP, Loop.TORQUE, Loop.IMPEDANCE),
                 filtered_vc: bool = True,
                 computation_delay: bool = False) -> LoopConfig:
    """LoopConfig with the reference operating point as defaults."""
    return LoopConfig(
        pi=TorquePIConfig(beta=beta, Ts=ts),
        vc=VelCompConfig(alpha=alpha, filtered=filtered_vc),
        imp=ImpedanceConfig(Pgain=pgain, Dgain=dgain),
        filt=AveragingFilterConfig(Nav=nav, Ts=ts),
        closed=frozenset(closed),
        computation_delay=computation_delay)


def pi_tf(cfg: TorquePIConfig) -> RationalTF:
    """PI(z) = Pt + It*z*Ts/(z-1), backward-Euler integral term."""
    hi = cfg.Pt + cfg.It * cfg.Ts
    return RationalTF(Polynomial([hi, -cfg.Pt]), Polynomial([1.0, -1.0]),
                      cfg.Ts)


def _pi_ss(cfg: TorquePIConfig, input_label: str, output_label: str) -> StateSpace:
    return StateSpace([[1.0]], [[cfg.It * cfg.Ts]], [[1.0]],
                      [[cfg.Pt + cfg.It * cfg.Ts]], cfg.Ts,
                      (input_label,), (output_label,))


def vc_gain(params: PlantParams, cfg: VelCompConfig) -> RationalTF:
    """Velocity-compensation gain as a continuous-time rational function.

    Simplified: the constant alpha*N*(R*Bm + kt*kw)/kt.  Full: the exact
    (improper) compensator alpha*((N/kt)(Ls+R)(Jm s+Bm) + N*kw) that
    cancels the motor-side dynamics term for term.
    """
    p = params
    if cfg.mode is VCMode.SIMPLIFIED:
        k = cfg.alpha * p.N * (p.R * p.Bm + p.kt * p.kw) / p.kt
        return RationalTF(Polynomial([k]), Polynomial([1.0]), None)
    c2 = (p.N / p.kt) * p.L * p.Jm
    c1 = (p.N / p.kt) * (p.L * p.Bm + p.R * p.Jm)
    c0 = (p.N / p.kt) * p.R * p.Bm + p.N * p.kw
    return RationalTF(cfg.alpha * Polynomial([c2, c1, c0]),
                      Polynomial([1.0]), None)


def vc_gain_value(params: PlantParams, cfg: VelCompConfig) -> float:
    """Scalar gain of the simplified compensation (V per rad/s)."""
    if cfg.mode is not VCMode.SIMPLIFIED:
        raise ConfigError(
            "full velocity compensation is improper and cannot enter the "
            "sampled loop; use the simplified mode")
    return cfg.alpha * params.N * (params.R * params.Bm
                                   + params.kt * params.kw) / params.kt


def averaging_filter_tf(cfg: AveragingFilterConfig) -> RationalTF:
    """V(z)/Theta(z) = (1 - z^-Nav)/(Nav*Ts): the Nav first differences
    telescope to (theta[k] - theta[k-Nav])/(Nav*Ts)."""
    nav = int(cfg.Nav)
    g = 1.0 / (nav * cfg.Ts)
    num = np.zeros(nav + 1)
    num[0] = g
    num[-1] = -g
    den = np.zeros(nav + 1)
    den[0] = 1.0
    return RationalTF(Polynomial(num), Polynomial(den), cfg.Ts)


def averaging_filter_ss(cfg: AveragingFilterConfig,
                        input_label: str = "theta_L1_meas",
                        output_label: str = "dtheta_L1_filt") -> StateSpace:
    """Delay-line realization: states hold the last Nav position samples."""
    nav = int(cfg.Nav)
    g = 1.0 / (nav * cfg.Ts)
    A = np.zeros((nav, nav))
    if nav > 1:
        A[1:, :-1] = np.eye(nav - 1)
    B = np.zeros((nav, 1))
    B[0, 0] = 1.0
    C = np.zeros((1, nav))
    C[0, -1] = -g
    D = np.array([[g]])
    return StateSpace(A, B, C, D, cfg.Ts, (input_label,), (output_label,))


def impedance_law(cfg: ImpedanceConfig):
    """Static torque reference map: (position error, filtered velocity)
    -> Pgain*err - Dgain*vel.  Works elementwise on arrays."""
    def law(pos_error, vel_filtered):
        return cfg.Pgain * np.asarray(pos_error) \
            - cfg.Dgain * np.asarray(vel_filtered)
    return law


def inverse_dynamics_ff(params: PlantParams, m: float, l_com: float,
                        theta_L2: float, ddtheta_ref: float) -> float:
    """Feedforward torque: inertia times commanded acceleration plus the
    nonlinear gravity torque of a point mass at the leg COM."""
    if m < 0 or l_com < 0:
        raise ConfigError("mass and COM distance must be non-negative")
    return (params.JL1 + params.JL2) * ddtheta_ref \
        + m * G_EARTH * l_com * math.sin(theta_L2)


def _assembly_blocks(params: PlantParams, loop: LoopConfig,
                     measurement_input: bool):
    """Shared block/wiring construction for closed loops and loop gains.

    Returns (systems, wiring, external_inputs).  State order in the
    connected result: plant (7), averaging filter (Nav), PI integrator
    (1 if torque closed), computation delay (1 if enabled).
    """
    Ts = loop.Ts
    vc_closed = Loop.VELOCITY_COMP in loop.closed
    t_closed = Loop.TORQUE in loop.closed
    i_closed = Loop.IMPEDANCE in loop.closed

    plant_d = c2d_zoh(build_plant(params), Ts)
    filt = averaging_filter_ss(loop.filt, input_label="filt_pos_in")
    systems = [plant_d, filt]
    wiring = []

    # Position feedback source: the true link angle, or an externally
    # injected measurement (pass-through block so one external channel
    # can fan out to the filter and the impedance P-term).
    if measurement_input:
        systems.append(static_gain([[1.0]], ("theta_L1_meas",),
                                   ("theta_meas_sig",), Ts))
        pos_src = "theta_meas_sig"
        ext_meas = ["theta_L1_meas"]
    else:
        pos_src = "theta_L1"
        ext_meas = []
    wiring.append(("filt_pos_in", pos_src, 1.0))

    voltage_sources = []
    if vc_closed:
        kvc = vc_gain_value(params, loop.vc)
        systems.append(static_gain([[kvc]], ("vc_vel_in",), ("V_vc",), Ts))
        vel_src = "dtheta_L1_filt" if loop.vc.filtered else "dtheta_L1"
        wiring.append(("vc_vel_in", vel_src, 1.0))
        voltage_sources.append("V_vc")

    if t_closed:
        systems.append(_pi_ss(loop.pi, "torque_error", "V_pi"))
        wiring.append(("torque_error", "Tl", -1.0))
        voltage_sources.append("V_pi")
        if i_closed:
            imp = static_gain(
                [[loop.imp.Pgain, -loop.imp.Pgain, -loop.imp.Dgain]],
                ("theta_ref", "imp_pos_fb", "imp_vel_fb"), ("Tl_ref_sig",), Ts)
            systems.append(imp)
            wiring.append(("imp_pos_fb", pos_src, 1.0))
            wiring.append(("imp_vel_fb", "dtheta_L1_filt", 1.0))
            wiring.append(("torque_error", "Tl_ref_sig", 1.0))
            ref_ext = ["theta_ref"]
        else:
            # unity pass-through so the external input keeps its own name
            systems.append(static_gain([[1.0]], ("Tl_ref",), ("Tl_ref_sig",),
                                       Ts))
            wiring.append(("torque_error", "Tl_ref_sig", 1.0))
            ref_ext = ["Tl_ref"]
        # Applied-voltage path: sum the controller sources, optionally
        # delay one sample, and expose the result as output 'Vm' which
        # also drives the plant input of the same name.
        mon_inputs = tuple(f"vm_in_{s}" for s in voltage_sources)
        ones = np.ones((1, len(voltage_sources)))
        if loop.computation_delay:
            systems.append(static_gain(ones, mon_inputs, ("Vm_sum",), Ts))
            systems.append(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]], Ts,
                                      ("Vm_calc",), ("Vm",)))
            wiring.append(("Vm_calc", "Vm_sum", 1.0))
        else:
            systems.append(static_gain(ones, mon_inputs, ("Vm",), Ts))
        for s in voltage_sources:
            wiring.append((f"vm_in_{s}", s, 1.0))
        wiring.append(("Vm", "Vm", 1.0))
        ext = ref_ext + ext_meas
    else:
        # torque loop open: Vm stays external; VC (if closed) sums into it
        for s in voltage_sources:
            wiring.append(("Vm", s, 1.0))
        ext = ["Vm"] + ext_meas

    return systems, wiring, ext + ["Tdist", "Tfr"]


def assemble_closed_loop(params: PlantParams, loop: LoopConfig,
                         extra_outputs=(),
                         measurement_input: bool = False) -> StateSpace:
    """Sampled closed-loop system at the configured operating point.

    Exogenous inputs, in order: the outermost closed reference
    (``theta_ref`` if the impedance loop is closed, ``Tl_ref`` if only
    the torque loop is, ``Vm`` if none), then ``Tdist`` and ``Tfr``.
    Outputs are ``[Tl, theta_L1, dtheta_L1, theta_L2, dtheta_L2, Vm]``
    plus any ``extra_outputs`` when the torque loop is closed, and the
    full plant output set plus the filtered velocity otherwise.  The
    leg-side pair is always present so the driving-port admittance can
    be taken from any configuration.

    With ``measurement_input=True`` every position feedback path (the
    velocity filter and the impedance P-term) reads an extra external
    input ``theta_L1_meas`` instead of the true link angle, so the
    simulator can close that path through an encoder quantizer.
    """
    if Loop.VELOCITY_COMP in loop.closed:
        vc_gain_value(params, loop.vc)  # rejects the improper full mode
    if not loop.closed and not measurement_input:
        return c2d_zoh(build_plant(params), loop.Ts)

    systems, wiring, ext = _assembly_blocks(params, loop, measurement_input)
    if Loop.TORQUE in loop.closed:
        outputs = ["Tl", "theta_L1", "dtheta_L1", "theta_L2", "dtheta_L2",
                   "Vm"]
    else:
        outputs = list(build_plant(params).output_labels) + ["dtheta_L1_filt"]
    outputs += [o for o in extra_outputs if o not in outputs]
    return connect(systems, wiring, inputs=ext, outputs=outputs)


def assemble_loop_gain(params: PlantParams, loop: LoopConfig,
                       break_point: BreakPoint) -> RationalTF:
    """Open-loop transfer function at a summing junction, everything
    else closed.

    ``TORQUE_ERROR``: PI(z) times the voltage-to-torque path with the
    velocity compensation closed per ``loop.closed``.
    ``IMPEDANCE_ERROR``: the impedance PD riding on the torque-closed
    system, i.e. Pgain*theta_L1(z)/Tl_ref(z) + Dgain*v_filt(z)/Tl_ref(z).
    """
    if break_point is BreakPoint.TORQUE_ERROR:
        sub = replace(loop, closed=loop.closed & {Loop.VELOCITY_COMP})
        sys = assemble_closed_loop(params, sub)
        g = ss_to_tf(sys, output="Tl", input="Vm")
        return series(pi_tf(loop.pi), g)

    if Loop.TORQUE not in loop.closed:
        raise ConfigError("impedance loop gain requires the torque loop closed")
    sub = replace(loop, closed=loop.closed - {Loop.IMPEDANCE})
    systems, wiring, ext = _assembly_blocks(params, sub, False)
    pd = static_gain([[loop.imp.Pgain, loop.imp.Dgain]],
                     ("pd_pos_in", "pd_vel_in"), ("imp_loop_out",), loop.Ts)
    systems.append(pd)
    wiring.append(("pd_pos_in", "theta_L1", 1.0))
    wiring.append(("pd_vel_in", "dtheta_L1_filt", 1.0))
    sys = connect(systems, wiring, inputs=ext, outputs=["imp_loop_out"])
    return minreal(ss_to_tf(sys, output="imp_loop_out", input="Tl_ref"),
                   1e-9)
