"""Stability and passivity toolkit for gearbox-driven electric joints.

Models a motor + harmonic-drive + flexible-leg drivetrain as a sampled
three-mass system under nested velocity-compensation, PI torque and
impedance control; maps which impedance gains keep the loop stable,
measures torque-loop margins and bandwidth, tests sampled passivity of
the port the leg presents to its environment, and simulates step/chirp
experiments with encoder quantization and drive ripple.

Layering: ``lti`` (transfer functions, state space, discretization,
margins) -> ``plant`` (drivetrain model) -> ``controllers`` (loop
blocks and closed-loop assembly) -> ``analysis`` (regions, passivity,
bandwidth) and ``sim`` (time-domain runs) -> ``cli`` (file-based runs).
"""

from .analysis import (BandwidthResult, CellClass, PassivityReport,
                       RegionGrid, coupled_environment_stability,
                       driving_port_admittance,
                       environment_instability_window, passivity_check,
                       region_comparisons, stability_region, tf_bandwidth,
                       torque_bandwidth)
from .controllers import (AveragingFilterConfig, BreakPoint, ImpedanceConfig,
                          Loop, LoopConfig, TorquePIConfig, VCMode,
                          VelCompConfig, assemble_closed_loop,
                          assemble_loop_gain, averaging_filter_ss,
                          averaging_filter_tf, impedance_law,
                          inverse_dynamics_ff, nominal_loop, pi_tf, vc_gain,
                          vc_gain_value)
from .errors import (AxisMismatchError, ConfigError, DomainMismatchError,
                     FrequencyAboveNyquistError, IllPosedLoopError,
                     ImproperSystemError, InsufficientDurationError,
                     InvalidParamsError, JointstabError, NonConvergentError,
                     ParseError, UnknownLabelError, ZeroPolynomialError)
from .lti import (MarginReport, Polynomial, RationalTF, StateSpace, c2d_zoh,
                  connect, eigenvalues, feedback, freq_response, is_stable,
                  margins, minreal, poly_roots, series, ss_to_tf, static_gain,
                  tf_to_ss)
from .plant import (PLANT_INPUTS, PLANT_OUTPUTS, PlantParams,
                    TorquePathPolys, build_plant, compensated_torque_tf,
                    torque_path_polynomials)
from .sim import (ChirpEstimate, SignalSpec, SimConfig, SimTrace,
                  chirp_response, run_sim, sample_signal, step_metrics,
                  trace_to_csv)

__version__ = "0.1.0"
