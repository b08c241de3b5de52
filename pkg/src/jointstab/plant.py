"""Continuous-time model of a gearbox-driven elastic robot joint.

The drivetrain is a three-mass chain: motor rotor (Jm) behind a gear
ratio N and an elastic transmission (Khd, Dhd), a hub inertia (JL1)
carrying the torque sensor, and the leg inertia (JL2) attached through
structural flexibility (Kp, Dp) and restrained by a linearized gravity
spring (KL2).  The electrical side is an R/L winding with torque
constant kt and back-EMF constant kw.

Two routes to the same physics are provided: a 7-state realization
(build_plant) and a direct rational construction of the voltage-to-torque
transfer function with velocity compensation folded in
(compensated_torque_tf), used to cross-validate each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParamsError
from .lti import Polynomial, RationalTF, StateSpace

__all__ = [
    "PlantParams",
    "PLANT_INPUTS",
    "PLANT_OUTPUTS",
    "build_plant",
    "TorquePathPolys",
    "torque_path_polynomials",
    "compensated_torque_tf",
]

# Fixed channel ordering; golden files depend on it.
PLANT_INPUTS = ("Vm", "Tdist", "Tfr")
PLANT_OUTPUTS = ("Tl", "theta_L1", "dtheta_L1", "theta_m", "dtheta_m",
                 "theta_L2", "dtheta_L2")

_POSITIVE = ("Jm", "Khd", "JL1", "JL2", "Kp", "L", "R", "kt", "kw", "N")
_NONNEGATIVE = ("Dhd", "Bm", "BL1", "BL2", "Dp", "KL2")


@dataclass(frozen=True)
class PlantParams:
    """Physical parameters of the joint drivetrain (SI units).

    Defaults are the identified values of the reference actuator with
    the leg extended; use :meth:`retracted` for the folded-leg inertia
    and gravity-spring values.
    """

    Jm: float = 5.72e-5      # rotor + gearbox inertia [kg m^2]
    Khd: float = 8077.0      # transmission stiffness [Nm/rad]
    Dhd: float = 16.56       # transmission damping [Nms/rad]
    Bm: float = 0.0015       # motor viscous friction [Nms/rad]
    JL1: float = 1e-4        # hub inertia at the sensor [kg m^2]
    BL1: float = 0.0         # hub viscous friction [Nms/rad]
    JL2: float = 0.439       # leg inertia [kg m^2]
    BL2: float = 0.756       # leg viscous friction [Nms/rad]
    KL2: float = 11.2        # linearized gravity stiffness [Nm/rad]
    Kp: float = 1923.0       # leg structural stiffness [Nm/rad]
    Dp: float = 7.56         # leg structural damping [Nms/rad]
    L: float = 2.02e-3       # winding inductance [H]
    R: float = 3.32          # winding resistance [ohm]
    kt: float = 0.19         # torque constant [Nm/A]
    kw: float = 0.19         # back-EMF constant [Vs/rad]
    N: float = 100.0         # gear reduction ratio [-]

    def __post_init__(self):
        for name in _POSITIVE:
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidParamsError(f"{name} must be strictly positive")
        for name in _NONNEGATIVE:
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidParamsError(f"{name} must be non-negative")

    @classmethod
    def extended(cls) -> "PlantParams":
        """Leg-extended preset (largest reflected inertia)."""
        return cls()

    @classmethod
    def retracted(cls) -> "PlantParams":
        """Leg-retracted preset."""
        return cls(JL2=0.129, KL2=7.17)

    def with_gravity_stiffness(self, KL2: float) -> "PlantParams":
        return replace(self, KL2=KL2)


def build_plant(params: PlantParams) -> StateSpace:
    """7-state continuous realization of the joint drivetrain.

    State order (fixed): [Im, theta_m, dtheta_m, theta_L1, dtheta_L1,
    theta_L2, dtheta_L2].  Inputs are motor voltage Vm, load-side
    disturbance torque Tdist (applied to JL2) and rotor friction torque
    Tfr (summed with the motor torque kt*Im).  The sensed torque output
    is Tl = Khd*(theta_m/N - theta_L1) + Dhd*(dtheta_m/N - dtheta_L1),
    built from states only (no input feedthrough, no differentiation).
    """
    p = params
    A = np.zeros((7, 7))
    B = np.zeros((7, 3))
    # winding: L dIm/dt = Vm - R Im - kw dtheta_m
    A[0, 0] = -p.R / p.L
    A[0, 2] = -p.kw / p.L
    B[0, 0] = 1.0 / p.L
    # rotor: Jm ddtheta_m = kt Im + Tfr - Bm dtheta_m
    #                       - (Khd (theta_m/N - theta_L1)
    #                          + Dhd (dtheta_m/N - dtheta_L1)) / N
    A[1, 2] = 1.0
    A[2, 0] = p.kt / p.Jm
    A[2, 1] = -p.Khd / (p.N ** 2 * p.Jm)
    A[2, 2] = -(p.Dhd / p.N ** 2 + p.Bm) / p.Jm
    A[2, 3] = p.Khd / (p.N * p.Jm)
    A[2, 4] = p.Dhd / (p.N * p.Jm)
    B[2, 2] = 1.0 / p.Jm
    # hub: JL1 ddtheta_L1 = Tl - BL1 dtheta_L1 - Kp(theta_L1 - theta_L2)
    #                       - Dp(dtheta_L1 - dtheta_L2)
    A[3, 4] = 1.0
    A[4, 1] = p.Khd / (p.N * p.JL1)
    A[4, 2] = p.Dhd / (p.N * p.JL1)
    A[4, 3] = -(p.Khd + p.Kp) / p.JL1
    A[4, 4] = -(p.Dhd + p.Dp + p.BL1) / p.JL1
    A[4, 5] = p.Kp / p.JL1
    A[4, 6] = p.Dp / p.JL1
    # leg: JL2 ddtheta_L2 = Kp(theta_L1 - theta_L2) + Dp(dtheta_L1 - dtheta_L2)
    #                       - KL2 theta_L2 - BL2 dtheta_L2 + Tdist
    A[5, 6] = 1.0
    A[6, 3] = p.Kp / p.JL2
    A[6, 4] = p.Dp / p.JL2
    A[6, 5] = -(p.Kp + p.KL2) / p.JL2
    A[6, 6] = -(p.Dp + p.BL2) / p.JL2
    B[6, 1] = 1.0 / p.JL2

    C = np.zeros((7, 7))
    C[0, 1] = p.Khd / p.N
    C[0, 2] = p.Dhd / p.N
    C[0, 3] = -p.Khd
    C[0, 4] = -p.Dhd
    C[1, 3] = 1.0
    C[2, 4] = 1.0
    C[3, 1] = 1.0
    C[4, 2] = 1.0
    C[5, 5] = 1.0
    C[6, 6] = 1.0
    D = np.zeros((7, 3))
    return StateSpace(A, B, C, D, None, PLANT_INPUTS, PLANT_OUTPUTS)


@dataclass(frozen=True)
class TorquePathPolys:
    """The four polynomials whose combination gives the torque transfer path.

    ``load`` collects the load-side dynamics; its roots are the
    transmission zeros of the voltage-to-torque function.  ``motor`` is
    the electrical/rotor polynomial, ``comp_target`` is what an ideal
    velocity compensation must reproduce, and ``coupling`` carries the
    load-to-motor reaction.
    """

    load: Polynomial
    motor: Polynomial
    comp_target: Polynomial
    coupling: Polynomial


def torque_path_polynomials(params: PlantParams) -> TorquePathPolys:
    """Coefficient-exact construction of the four torque-path polynomials."""
    p = params
    leg = Polynomial([p.JL2, p.BL2, p.KL2])         # JL2 s^2 + BL2 s + KL2
    hub = Polynomial([p.JL1, p.BL1, 0.0])           # JL1 s^2 + BL1 s
    flex = Polynomial([p.Dp, p.Kp])                 # Dp s + Kp
    winding = Polynomial([p.L, p.R])                # L s + R
    rotor = Polynomial([p.Jm, p.Bm, 0.0])           # Jm s^2 + Bm s
    gear = Polynomial([p.Dhd, p.Khd])               # Dhd s + Khd

    load = leg * hub + (leg + hub) * flex
    motor = winding * (rotor + gear * (1.0 / p.N ** 2)) \
        + Polynomial([p.kt * p.kw, 0.0])
    comp_target = (p.N / p.kt) * (winding * rotor) \
        + Polynomial([p.N * p.kw, 0.0])
    coupling = (p.kt / p.N) * (Polynomial([p.JL2, p.BL2 + p.Dp,
                                           p.Kp + p.KL2]) * gear)
    return TorquePathPolys(load, motor, comp_target, coupling)


def compensated_torque_tf(params: PlantParams, vc: RationalTF) -> RationalTF:
    """Voltage-to-torque transfer function with velocity compensation.

    ``vc`` is the compensation gain as a (possibly improper, possibly
    constant) continuous-time rational function; its output is summed
    into the motor voltage from the hub velocity.  With vc = 0 this is
    the uncompensated transfer function.
    """
    p = params
    poly = torque_path_polynomials(params)
    s = Polynomial([1.0, 0.0])
    nv, dv = vc.num, vc.den
    gear = Polynomial([p.Dhd, p.Khd])
    num = (p.kt * (gear * poly.load)) * dv
    residual = poly.comp_target * dv - nv * s
    den = p.N * (poly.load * poly.motor * dv + residual * poly.coupling)
    return RationalTF(num, den, None)
