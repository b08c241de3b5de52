"""Controller-block and loop-assembly tests."""

import math
from dataclasses import replace

import numpy as np
import pytest

from jointstab import (AveragingFilterConfig, ImpedanceConfig, Loop,
                       LoopConfig, PlantParams, TorquePIConfig, VCMode,
                       VelCompConfig, assemble_closed_loop, averaging_filter_ss,
                       averaging_filter_tf, build_plant, c2d_zoh,
                       impedance_law, inverse_dynamics_ff, nominal_loop,
                       pi_tf, ss_to_tf, vc_gain_value)
from jointstab.errors import ConfigError

TORQUE_ONLY = (Loop.VELOCITY_COMP, Loop.TORQUE)
FULL_STACK = (Loop.VELOCITY_COMP, Loop.TORQUE, Loop.IMPEDANCE)


# ------------------------------------------------------------------ PI block

def test_pi_gains_scale_with_beta():
    cfg = TorquePIConfig(beta=2.0, Ts=1e-3)
    assert abs(cfg.Pt - 0.764) < 1e-12
    assert abs(cfg.It - 36.0) < 1e-12


def test_pi_zero_location_fixed_by_gain_ratio():
    """PI(z) = Pt + It*Ts*z/(z-1) has its zero at Pt/(Pt + It*Ts),
    independent of beta: 0.382/(0.382 + 0.018) = 0.955."""
    for beta in (0.5, 1.0, 4.0):
        tf = pi_tf(TorquePIConfig(beta=beta, Ts=1e-3))
        zeros = tf.zeros()
        assert zeros.size == 1
        assert abs(zeros[0].real - 0.955) < 1e-12


def test_pi_backward_euler_step_accumulation():
    """Integral term accumulates It*Ts per step on a unit input,
    including the first sample (backward Euler)."""
    cfg = TorquePIConfig(beta=1.0, Ts=1e-3)
    tf = pi_tf(cfg)
    # simulate y[k] via the difference equation y[k] = y[k-1] + b0 u[k] + b1 u[k-1]
    b = tf.num.coeffs
    y_prev = 0.0
    u = 1.0
    outs = []
    u_prev = 0.0
    for _ in range(4):
        y = y_prev + b[0] * u + b[1] * u_prev
        outs.append(y)
        y_prev, u_prev = y, u
    expected = [cfg.Pt + cfg.It * cfg.Ts * (k + 1) for k in range(4)]
    assert np.allclose(outs, expected, atol=1e-12)


def test_pi_validation():
    with pytest.raises(ConfigError):
        TorquePIConfig(beta=0.0)
    with pytest.raises(ConfigError):
        TorquePIConfig(beta=1.0, Ts=0.0)


# ----------------------------------------------------------- averaging filter

def test_averaging_filter_recovers_constant_slope():
    """Feeding a ramp theta[k] = v*Ts*k returns exactly v after Nav
    samples, for any Nav."""
    for nav in (1, 4, 20):
        cfg = AveragingFilterConfig(Nav=nav, Ts=2e-3)
        sysf = averaging_filter_ss(cfg)
        v = 0.73
        theta = v * cfg.Ts * np.arange(nav + 5)
        x = np.zeros(sysf.n_states)
        outs = []
        for th in theta:
            y = sysf.C @ x + sysf.D @ np.array([th])
            outs.append(float(y[0]))
            x = sysf.A @ x + sysf.B @ np.array([th])
        assert abs(outs[-1] - v) < 1e-12


def test_averaging_filter_tf_matches_ss():
    cfg = AveragingFilterConfig(Nav=7, Ts=1e-3)
    tf = averaging_filter_tf(cfg)
    ss = averaging_filter_ss(cfg)
    w = np.logspace(0, math.log10(math.pi / cfg.Ts), 60)
    assert np.allclose(ss.response(w)[:, 0, 0], tf.response(w), rtol=1e-9,
                       atol=1e-12)


def test_averaging_filter_zero_at_dc():
    """A position differencer must reject constants: H(1) = 0."""
    tf = averaging_filter_tf(AveragingFilterConfig(Nav=10, Ts=1e-3))
    assert abs(float(tf.num(1.0))) < 1e-15


def test_averaging_filter_state_count_is_nav():
    for nav in (1, 3, 50):
        assert averaging_filter_ss(
            AveragingFilterConfig(Nav=nav, Ts=1e-3)).n_states == nav


def test_averaging_filter_validation():
    with pytest.raises(ConfigError):
        AveragingFilterConfig(Nav=0)
    with pytest.raises(ConfigError):
        AveragingFilterConfig(Nav=2.5)
    with pytest.raises(ConfigError):
        AveragingFilterConfig(Nav=4, Ts=-1.0)


# ------------------------------------------------------------- small pieces

def test_impedance_law_sign_convention():
    law = impedance_law(ImpedanceConfig(Pgain=100.0, Dgain=5.0))
    # positive position error commands positive torque; positive velocity
    # is damped (negative torque contribution)
    assert law(0.1, 0.0) == pytest.approx(10.0)
    assert law(0.0, 2.0) == pytest.approx(-10.0)
    assert np.allclose(law(np.array([0.1, 0.0]), np.array([0.0, 2.0])),
                       [10.0, -10.0])


def test_impedance_config_validation():
    with pytest.raises(ConfigError):
        ImpedanceConfig(Pgain=-1.0)
    with pytest.raises(ConfigError):
        ImpedanceConfig(Dgain=-0.1)


def test_inverse_dynamics_feedforward():
    params = PlantParams.extended()
    # pure acceleration term at theta = 0
    t1 = inverse_dynamics_ff(params, m=0.0, l_com=0.0, theta_L2=0.0,
                             ddtheta_ref=2.0)
    assert t1 == pytest.approx(2.0 * (params.JL1 + params.JL2))
    # pure gravity term at 90 degrees
    t2 = inverse_dynamics_ff(params, m=3.0, l_com=0.4, theta_L2=math.pi / 2,
                             ddtheta_ref=0.0)
    assert t2 == pytest.approx(3.0 * 9.81 * 0.4)
    with pytest.raises(ConfigError):
        inverse_dynamics_ff(params, m=-1.0, l_com=0.4, theta_L2=0.0,
                            ddtheta_ref=0.0)


def test_vc_gain_value_rejects_full_mode():
    with pytest.raises(ConfigError):
        vc_gain_value(PlantParams.extended(),
                      VelCompConfig(alpha=1.0, mode=VCMode.FULL))


# ------------------------------------------------------------ loop assembly

def test_loop_config_validation():
    with pytest.raises(ConfigError):
        LoopConfig(closed=frozenset({Loop.IMPEDANCE}))
    with pytest.raises(ConfigError):
        LoopConfig(pi=TorquePIConfig(Ts=1e-3),
                   filt=AveragingFilterConfig(Ts=2e-3))


def test_all_loops_open_is_discretized_plant():
    """With every loop open the assembly is exactly the ZOH-discretized
    plant (plus the passive filter states)."""
    params = PlantParams.extended()
    loop = nominal_loop(closed=())
    sys = assemble_closed_loop(params, loop)
    ref = c2d_zoh(build_plant(params), loop.Ts)
    w = np.logspace(-1, math.log10(math.pi / loop.Ts), 80)
    h_got = sys.response(w)
    h_ref = ref.response(w)
    for out in ("Tl", "dtheta_L1", "theta_L2", "dtheta_L2"):
        for inp in ("Vm", "Tdist", "Tfr"):
            a = h_got[:, sys.output_index(out), sys.input_index(inp)]
            b = h_ref[:, ref.output_index(out), ref.input_index(inp)]
            assert np.allclose(a, b, rtol=1e-9, atol=1e-12), (out, inp)


def test_torque_closed_loop_tracks_dc():
    """Integral action makes Tl_ref -> Tl exactly unity at DC."""
    params = PlantParams.extended()
    sys = assemble_closed_loop(params, nominal_loop(closed=TORQUE_ONLY))
    tf = ss_to_tf(sys, output="Tl", input="Tl_ref")
    dc = complex(tf.response(np.array([1e-6]))[0])
    assert abs(dc - 1.0) < 1e-6


def test_torque_closed_outputs_include_leg_pair():
    params = PlantParams.extended()
    sys = assemble_closed_loop(params, nominal_loop(closed=TORQUE_ONLY))
    for lab in ("Tl", "theta_L1", "dtheta_L1", "theta_L2", "dtheta_L2", "Vm"):
        assert lab in sys.output_labels
    assert "Tl_ref" in sys.input_labels
    assert "Tdist" in sys.input_labels


def test_impedance_closed_loop_io():
    params = PlantParams.extended()
    sys = assemble_closed_loop(params, nominal_loop(closed=FULL_STACK))
    assert "theta_ref" in sys.input_labels
    assert "Tl_ref" not in sys.input_labels
    # virtual spring: a position reference moves the leg toward it.
    # Statics: Tl = P*(ref - theta_L1), Tl = KL2*theta_L2, and the
    # structural spring twists by Tl/Kp, so
    # theta_L2/ref = P / (P + KL2 + P*KL2/Kp).
    tf = ss_to_tf(sys, output="theta_L2", input="theta_ref")
    dc = complex(tf.response(np.array([1e-6]))[0])
    P = 200.0
    expected = P / (P + params.KL2 + P * params.KL2 / params.Kp)
    assert abs(dc.real - expected) < 1e-4


def test_state_count_accounting():
    params = PlantParams.extended()
    nav = 6
    base = nominal_loop(nav=nav, closed=TORQUE_ONLY)
    sys = assemble_closed_loop(params, base)
    assert sys.n_states == 7 + nav + 1  # plant + filter + integrator
    delayed = replace(base, computation_delay=True)
    sys_d = assemble_closed_loop(params, delayed)
    assert sys_d.n_states == sys.n_states + 1


def test_computation_delay_shifts_response():
    """The optional one-sample computation delay multiplies the torque
    tracking path by z^-1 (checked at a probe frequency)."""
    params = PlantParams.extended()
    base = nominal_loop(closed=TORQUE_ONLY)
    sys0 = assemble_closed_loop(params, base)
    sys1 = assemble_closed_loop(params, replace(base,
                                                computation_delay=True))
    # at DC both track exactly; the delayed loop differs dynamically
    w = np.array([50.0])
    h0 = complex(ss_to_tf(sys0, output="Tl", input="Tl_ref").response(w)[0])
    h1 = complex(ss_to_tf(sys1, output="Tl", input="Tl_ref").response(w)[0])
    assert abs(h0 - h1) > 1e-4


def test_measurement_input_exposed_when_requested():
    params = PlantParams.extended()
    sys = assemble_closed_loop(params, nominal_loop(closed=TORQUE_ONLY),
                               measurement_input=True)
    assert "theta_L1_meas" in sys.input_labels
    # feeding the true position back reproduces the unsplit loop
    plain = assemble_closed_loop(params, nominal_loop(closed=TORQUE_ONLY))
    from jointstab import connect
    rewired = connect([sys], [("theta_L1_meas", "theta_L1", 1.0)],
                      inputs=["Tl_ref", "Tdist", "Tfr"],
                      outputs=["Tl", "theta_L1", "dtheta_L1"])
    w = np.logspace(-1, 3, 50)
    a = rewired.response(w)
    b = plain.response(w)
    for out in ("Tl", "dtheta_L1"):
        assert np.allclose(
            a[:, rewired.output_index(out), rewired.input_index("Tl_ref")],
            b[:, plain.output_index(out), plain.input_index("Tl_ref")],
            rtol=1e-8, atol=1e-12)


def test_extra_outputs_requestable():
    params = PlantParams.extended()
    sys = assemble_closed_loop(params, nominal_loop(closed=TORQUE_ONLY),
                               extra_outputs=("dtheta_L1_filt",))
    assert "dtheta_L1_filt" in sys.output_labels
