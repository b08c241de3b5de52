"""Stability regions, margins, bandwidth and sampled passivity analysis.

The questions answered here, in the order a gain-tuning session asks
them: which impedance-gain pairs keep the sampled loop stable (and with
how much phase margin); how fast is the inner torque loop; and is the
port the leg presents to the world passive, i.e. safe to couple to any
passive environment without losing stability.

Passivity is judged on the driving-port admittance Y(z) from the load
disturbance torque to the leg output velocity -- the collocated pair at
the interface where the environment actually couples.  Sampling makes a
continuous phase bound too optimistic, so the phase is corrected by the
half-sample effective delay (w*Ts/2) before applying the +/-90 degree
test.  The port is kept in state-space form end to end: the verdicts
ride on phase margins of fractions of a millidegree near the Nyquist
rate, and a polynomial round trip perturbs the response near z = 1 by
enough (~0.1 degree) to flip them.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .controllers import BreakPoint, Loop, LoopConfig, assemble_closed_loop
from .errors import AxisMismatchError, ConfigError, ImproperSystemError
from .lti import (PRUNE_TOL_REL, STABILITY_TOL, RationalTF, StateSpace,
                  margins, minreal, ss_to_tf)
from .plant import PlantParams

__all__ = [
    "CellClass",
    "RegionGrid",
    "PassivityReport",
    "BandwidthResult",
    "stability_region",
    "region_comparisons",
    "driving_port_admittance",
    "passivity_check",
    "coupled_environment_stability",
    "environment_instability_window",
    "tf_bandwidth",
    "torque_bandwidth",
]

PM_THRESHOLD_DEG = 30.0


class CellClass(enum.IntEnum):
    """Classification of one impedance-gain cell (the CSV cell codes)."""

    STABLE = 0
    STABLE_LOW_PM = 1
    UNSTABLE = 2


@dataclass(frozen=True)
class RegionGrid:
    """Stability classification over a Pgain x Dgain grid.

    ``cells[i, j]`` classifies ``(p_axis[i], d_axis[j])``.  ``notes``
    records cells whose assembly failed (classified Unstable so the map
    stays total).
    """

    p_axis: np.ndarray
    d_axis: np.ndarray
    cells: np.ndarray
    sweep_meta: LoopConfig
    notes: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.p_axis, dtype=float)
        d = np.asarray(self.d_axis, dtype=float)
        c = np.asarray(self.cells)
        if c.shape != (p.size, d.size):
            raise ValueError("cells shape does not match axes")
        for name, arr in (("p_axis", p), ("d_axis", d), ("cells", c)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def count(self, cls: CellClass, quadrant=None) -> int:
        if quadrant is None:
            return int(np.sum(self.cells == cls))
        total = 0
        for i, pv in enumerate(self.p_axis):
            for j, dv in enumerate(self.d_axis):
                if quadrant(pv, dv) and self.cells[i, j] == cls:
                    total += 1
        return total


@dataclass(frozen=True)
class PassivityReport:
    """Outcome of the sampled positive-real test on a driving port."""

    poles_stable: bool
    max_abs_corrected_phase_deg: float
    first_violation_rad_s: float | None
    last_violation_rad_s: float | None
    passive: bool
    corrected: bool

    @property
    def verdict(self) -> str:
        """Three-way label: 'Unstable', 'Yes' (passive) or 'No'."""
        if not self.poles_stable:
            return "Unstable"
        return "Yes" if self.passive else "No"


@dataclass(frozen=True)
class BandwidthResult:
    """-3 dB closed-loop bandwidth; Nyquist-limited when no crossing
    exists below the Nyquist rate (the response never drops enough)."""

    omega_rad_s: float
    nyquist_limited: bool


def _torque_closed_base(params: PlantParams, loop: LoopConfig):
    """Torque+VC closed system with Tl_ref input, plus the rows needed to
    close the impedance law by a rank-one state feedback update."""
    base_cfg = replace(loop, closed=(loop.closed | {Loop.TORQUE})
                       - {Loop.IMPEDANCE})
    sys = assemble_closed_loop(params, base_cfg,
                               extra_outputs=("dtheta_L1_filt",))
    i_ref = sys.input_index("Tl_ref")
    o_pos = sys.output_index("theta_L1")
    o_vel = sys.output_index("dtheta_L1_filt")
    b = sys.B[:, i_ref]
    c_pos = sys.C[o_pos, :]
    c_vel = sys.C[o_vel, :]
    # The rank-one closure is valid only without feedthrough into the
    # fed-back outputs; true for this realization (both are state maps),
    # up to algebraic-loop solve residue in the connected D matrix.
    tol = 1e-12 * max(1.0, float(np.abs(sys.D).max()))
    if abs(sys.D[o_pos, i_ref]) > tol or abs(sys.D[o_vel, i_ref]) > tol:
        raise ConfigError("impedance feedback path has direct feedthrough")
    return sys, b, c_pos, c_vel


def _impedance_loop_tf(sys, Ts: float):
    """Numerators/denominator of the impedance-junction loop gain.

    The loop gain at gains (P, D) is (P*n_pos + D*n_vel)/den with all
    three polynomials taken from the shared torque-closed realization.
    """
    g_pos = ss_to_tf(sys, output="theta_L1", input="Tl_ref")
    g_vel = ss_to_tf(sys, output="dtheta_L1_filt", input="Tl_ref")
    # identical state matrix -> identical (monic) denominators
    den = g_pos.den
    return g_pos.num, g_vel.num, den, Ts


def _classify_cell(A0, b, c_pos, c_vel, p, d, loop_parts, stability_tol):
    n_pos, n_vel, den, Ts = loop_parts
    A_cl = A0 - np.outer(b, p * c_pos + d * c_vel)
    eig = np.linalg.eigvals(A_cl)
    if np.max(np.abs(eig)) >= 1.0 - stability_tol:
        return CellClass.UNSTABLE
    L = RationalTF(p * n_pos + d * n_vel, den, Ts)
    rep = margins(L)
    if rep.phase_margin_deg is not None \
            and rep.phase_margin_deg < PM_THRESHOLD_DEG:
        return CellClass.STABLE_LOW_PM
    return CellClass.STABLE


def stability_region(params: PlantParams, base: LoopConfig,
                     p_range=(1.0, 20000.0), d_range=(1.0, 50.0),
                     grid=(120, 60), stability_tol: float = STABILITY_TOL,
                     jobs: int = 1) -> RegionGrid:
    """Classify every cell of an impedance-gain grid.

    Pgain values are log-spaced over ``p_range``, Dgain values linear
    over ``d_range``.  A cell is Unstable when any closed-loop
    eigenvalue reaches the unit circle (within ``stability_tol``),
    StableLowPM when stable but the outer-loop phase margin is below 30
    degrees, and Stable otherwise.  Cells whose evaluation fails are
    marked Unstable and recorded in ``notes``; the sweep never aborts.
    """
    if not (p_range[0] > 0 and d_range[0] > 0):
        raise ConfigError("gain ranges must be positive")
    if p_range[1] < p_range[0] or d_range[1] < d_range[0]:
        raise ConfigError("gain ranges must be increasing")
    n_p, n_d = int(grid[0]), int(grid[1])
    p_axis = np.logspace(math.log10(p_range[0]), math.log10(p_range[1]), n_p)
    d_axis = np.linspace(d_range[0], d_range[1], n_d)

    sys, b, c_pos, c_vel = _torque_closed_base(params, base)
    loop_parts = _impedance_loop_tf(sys, base.Ts)
    A0 = sys.A
    cells = np.zeros((n_p, n_d), dtype=np.int8)
    notes = []

    def run_row(i: int):
        p = p_axis[i]
        for j, d in enumerate(d_axis):
            try:
                cells[i, j] = _classify_cell(A0, b, c_pos, c_vel, p, d,
                                             loop_parts, stability_tol)
            except Exception as exc:  # per-cell failures never abort
                cells[i, j] = CellClass.UNSTABLE
                notes.append((i, j, f"{type(exc).__name__}: {exc}"))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_row, range(n_p)))
    else:
        for i in range(n_p):
            run_row(i)
    return RegionGrid(p_axis, d_axis, cells, base, tuple(sorted(notes)))


def region_comparisons(grid_a: RegionGrid, grid_b: RegionGrid,
                       quadrant=None) -> int:
    """Signed change in Unstable cell count from grid_a to grid_b within
    a quadrant predicate on (Pgain, Dgain); None means the whole plane."""
    if not (np.array_equal(grid_a.p_axis, grid_b.p_axis)
            and np.array_equal(grid_a.d_axis, grid_b.d_axis)):
        raise AxisMismatchError("region grids have different gain axes")
    return grid_b.count(CellClass.UNSTABLE, quadrant) \
        - grid_a.count(CellClass.UNSTABLE, quadrant)


def driving_port_admittance(params: PlantParams,
                            loop: LoopConfig) -> StateSpace:
    """Driving-port admittance Y = dtheta_L2 / Tdist of the configured
    loop, as a single-input single-output state-space system.

    This is the port the environment sees: torque applied at the leg
    output, velocity of the same body.  The state-space form is returned
    (rather than a polynomial ratio) because the passivity verdicts are
    decided by sub-millidegree phase margins that do not survive a
    characteristic-polynomial round trip.
    """
    sys = assemble_closed_loop(params, loop)
    return sys.subsystem(outputs=["dtheta_L2"], inputs=["Tdist"])


def _respond_scalar(sys: RationalTF | StateSpace, w: float) -> complex:
    h = sys.response(np.array([w]))
    return complex(h[0, 0, 0]) if isinstance(sys, StateSpace) else complex(h[0])


def _phase_deg_continued(sys, w: float, anchor_deg: float,
                         invert: bool) -> float:
    """Principal phase at one frequency, continued to the branch nearest
    the anchor (the curve is sampled densely, so the nearest branch is
    the continuous one)."""
    h = _respond_scalar(sys, w)
    if invert:
        h = 1.0 / h
    phi = math.degrees(math.atan2(h.imag, h.real))
    k = round((anchor_deg - phi) / 360.0)
    return phi + 360.0 * k


def passivity_check(Y: RationalTF | StateSpace, invert: bool = False,
                    n_grid: int = 4000, w_min: float = 1e-2,
                    w_max_continuous: float = 1e5) -> PassivityReport:
    """Positive-real test of a driving port with sampling-delay correction.

    ``Y`` may be a transfer function or a single-input single-output
    state-space system; the latter is preferred for closed-loop ports
    (see driving_port_admittance).  The pole test examines the poles of
    ``Y`` -- for a state-space port that is the full spectrum of the
    state matrix, i.e. internal stability.  The phase test runs on Y
    directly, or on Z = 1/Y when ``invert`` is set; the two are
    equivalent (phase negation), so verdicts match either way.  For a
    discrete port the phase is corrected by the half-sample delay before
    the +/-90 degree band test: corrected = phase(Z) - w*Ts/2,
    equivalently phase(Y) + w*Ts/2.  Continuous-time systems are tested
    without correction.
    """
    if isinstance(Y, StateSpace):
        if Y.B.shape[1] != 1 or Y.C.shape[0] != 1:
            raise ConfigError("passivity check requires a single-input "
                              "single-output port")
        Ytest = Y
        poles = Y.eigenvalues()
    else:
        if not Y.is_proper:
            raise ImproperSystemError("passivity check requires a proper Y")
        Ytest = minreal(Y, PRUNE_TOL_REL)
        poles = Ytest.poles()

    if Y.dt is not None:
        poles_stable = (poles.size == 0
                        or np.max(np.abs(poles)) < 1.0 - STABILITY_TOL)
        w_hi = 0.999 * math.pi / Y.dt
        corrected = True
    else:
        poles_stable = poles.size == 0 or np.max(np.real(poles)) < 0.0
        w_hi = w_max_continuous
        corrected = False

    w = np.logspace(math.log10(w_min), math.log10(w_hi), n_grid)
    H = Ytest.response(w)
    if isinstance(Ytest, StateSpace):
        H = H[:, 0, 0]
    if invert:
        H = 1.0 / H
    phase = np.degrees(np.unwrap(np.angle(H)))
    if corrected:
        half_sample = np.degrees(w * Y.dt / 2.0)
        corr = phase - half_sample if invert else phase + half_sample
    else:
        corr = phase

    margin = 90.0 - np.abs(corr)
    max_abs = float(np.max(np.abs(corr)))

    def corrected_at(wi: float, anchor_deg: float):
        phi = _phase_deg_continued(Ytest, wi, anchor_deg, invert)
        if not corrected:
            return phi, phi
        half = math.degrees(wi * Y.dt / 2.0)
        return (phi - half if invert else phi + half), phi

    first_violation = None
    bad = np.nonzero(margin < 0.0)[0]
    if bad.size:
        i = int(bad[0])
        if i == 0:
            first_violation = float(w[0])
        else:
            # refine the band edge by bisection with branch-continued phase
            lo, hi = w[i - 1], w[i]
            anchor = phase[i - 1]
            for _ in range(60):
                mid = math.sqrt(lo * hi)
                c, phi = corrected_at(mid, anchor)
                if abs(c) > 90.0:
                    hi = mid
                else:
                    lo, anchor = mid, phi
                if hi / lo < 1 + 1e-12:
                    break
            first_violation = float(hi)
        j = int(bad[-1])
        if j == w.size - 1:
            last_violation = float(w[-1])
        else:
            lo, hi = w[j], w[j + 1]
            anchor = phase[j + 1]
            for _ in range(60):
                mid = math.sqrt(lo * hi)
                c, phi = corrected_at(mid, anchor)
                if abs(c) > 90.0:
                    lo = mid
                else:
                    hi, anchor = mid, phi
                if hi / lo < 1 + 1e-12:
                    break
            last_violation = float(lo)
    else:
        last_violation = None
    passive = bool(poles_stable and max_abs <= 90.0)
    return PassivityReport(poles_stable=bool(poles_stable),
                           max_abs_corrected_phase_deg=max_abs,
                           first_violation_rad_s=first_violation,
                           last_violation_rad_s=last_violation,
                           passive=passive, corrected=corrected)


def coupled_environment_stability(params: PlantParams, loop: LoopConfig,
                                  K_env: float) -> bool:
    """Stability of the closed loop when the leg is pressed against an
    environment spring of stiffness K_env acting at the same port as the
    gravity spring."""
    if K_env < 0:
        raise ConfigError("environment stiffness must be non-negative")
    coupled = params.with_gravity_stiffness(params.KL2 + K_env)
    sys = assemble_closed_loop(coupled, loop)
    eig = sys.eigenvalues()
    return bool(np.max(np.abs(eig)) < 1.0 - STABILITY_TOL)


def environment_instability_window(params: PlantParams, loop: LoopConfig,
                                   k_min: float = 1.0, k_max: float = 1e5,
                                   n_scan: int = 240):
    """Range of environment stiffness that destabilizes the coupled loop.

    Scans a log grid, then bisects the two boundaries.  Returns (lo, hi)
    in Nm/rad, or None when every scanned stiffness is stable.
    """
    ks = np.logspace(math.log10(k_min), math.log10(k_max), n_scan)
    stable = np.array([coupled_environment_stability(params, loop, k)
                       for k in ks])
    unstable_idx = np.nonzero(~stable)[0]
    if unstable_idx.size == 0:
        return None

    def edge(k_stable: float, k_unstable: float) -> float:
        lo, hi = k_stable, k_unstable
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if coupled_environment_stability(params, loop, mid):
                lo = mid
            else:
                hi = mid
            if hi / lo < 1 + 1e-9:
                break
        return math.sqrt(lo * hi)

    first, last = int(unstable_idx[0]), int(unstable_idx[-1])
    lo_edge = k_min if first == 0 else edge(ks[first - 1], ks[first])
    hi_edge = k_max if last == n_scan - 1 else edge(ks[last + 1], ks[last])
    return lo_edge, hi_edge


def tf_bandwidth(tf: RationalTF, n_grid: int = 2000,
                 w_min: float = 1e-2) -> BandwidthResult:
    """Smallest frequency where |tf| first falls below -3 dB (relative
    to unity reference), refined by bisection."""
    if tf.dt is None:
        raise ConfigError("bandwidth search expects a discrete-time function")
    thr = 10.0 ** (-3.0 / 20.0)
    w_ny = math.pi / tf.dt
    w = np.logspace(math.log10(w_min), math.log10(w_ny), n_grid)
    w[-1] = w_ny
    mag = np.abs(tf.response(w))
    below = np.nonzero(mag < thr)[0]
    if below.size == 0:
        return BandwidthResult(w_ny, nyquist_limited=True)
    i = int(below[0])
    if i == 0:
        return BandwidthResult(float(w[0]), nyquist_limited=False)
    lo, hi = w[i - 1], w[i]
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if abs(complex(tf.response(np.array([mid]))[0])) < thr:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-10:
            break
    return BandwidthResult(0.5 * (lo + hi), nyquist_limited=False)


def torque_bandwidth(params: PlantParams, loop: LoopConfig,
                     KL2_override: float | None = 0.0) -> BandwidthResult:
    """-3 dB tracking bandwidth of the closed torque loop.

    By convention the gravity spring is removed (KL2=0, free motion)
    unless ``KL2_override`` says otherwise; pass None to keep the
    preset's value.  The impedance loop is opened for this measurement.
    """
    if Loop.TORQUE not in loop.closed:
        raise ConfigError("torque bandwidth requires the torque loop closed")
    p = params if KL2_override is None \
        else params.with_gravity_stiffness(KL2_override)
    cfg = replace(loop, closed=loop.closed - {Loop.IMPEDANCE})
    sys = assemble_closed_loop(p, cfg)
    tf = minreal(ss_to_tf(sys, output="Tl", input="Tl_ref"), PRUNE_TOL_REL)
    return tf_bandwidth(tf)
