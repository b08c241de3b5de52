"""Linear time-invariant system representations and manipulation.

Polynomials, rational transfer functions and state-space models in
continuous or discrete time, plus the operations the rest of the package
is built on: exact ZOH discretization, eigenvalues, frequency response,
stability margins and label-based block interconnection.

All values are immutable after construction and every operation is a
pure function, so everything here is safe to share across threads.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    DomainMismatchError,
    FrequencyAboveNyquistError,
    IllPosedLoopError,
    ImproperSystemError,
    UnknownLabelError,
    ZeroPolynomialError,
)

__all__ = [
    "Polynomial",
    "RationalTF",
    "StateSpace",
    "MarginReport",
    "poly_roots",
    "eigenvalues",
    "c2d_zoh",
    "freq_response",
    "margins",
    "series",
    "feedback",
    "connect",
    "static_gain",
    "tf_to_ss",
    "ss_to_tf",
    "minreal",
    "is_stable",
    "STABILITY_TOL",
    "CANCEL_TOL_ABS",
    "PRUNE_TOL_REL",
]

# A discrete pole is counted stable iff |z| < 1 - STABILITY_TOL.
STABILITY_TOL = 1e-9
# Pole-zero pairs closer than this (absolute) are cancelled by rational
# arithmetic; keeps region sweeps free of spurious near-unit-circle pairs.
CANCEL_TOL_ABS = 1e-9
# Relative tolerance used to prune non-minimal pole-zero pairs (e.g. the
# rigid-body cancellation at z=1) before a stability verdict.
PRUNE_TOL_REL = 1e-7

_TRIM_REL = 1e-12


def _as_coeff_array(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise ValueError("coefficients must be one-dimensional")
    return c


def _trim_leading(c: np.ndarray, rel_tol: float = 0.0) -> np.ndarray:
    """Drop leading coefficients at or below ``rel_tol`` of the largest one.

    The default trims exact zeros only.  Physically constructed
    polynomials can carry genuine leading coefficients 15 decades below
    the largest one (inertia/inductance products against stiffness
    products), so relative trimming is reserved for results of
    cancellation-prone subtractions where sub-tolerance leading terms
    are rounding noise, not structure.
    """
    if c.size == 0:
        return np.zeros(1)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    keep = np.abs(c) > rel_tol * scale
    if not np.any(keep):
        return np.zeros(1)
    first = int(np.argmax(keep))
    return c[first:].copy()


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with coefficients in descending powers.

    The zero polynomial is representable (``coeffs == [0.0]``) and
    reported by :attr:`is_zero`; its degree is -1 by convention.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim_leading(_as_coeff_array(self.coeffs))
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        if self.is_zero:
            return -1
        return self.coeffs.size - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def trimmed(self, rel_tol: float = _TRIM_REL) -> "Polynomial":
        """Trim rounding-noise leading coefficients (relative threshold)."""
        return Polynomial(_trim_leading(self.coeffs, rel_tol))

    def __call__(self, x):
        return np.polyval(self.coeffs, x)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coeffs, other.coeffs
        n = max(a.size, b.size)
        out = np.zeros(n)
        out[n - a.size:] += a
        out[n - b.size:] += b
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (other * -1.0)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def shift(self, k: int) -> "Polynomial":
        """Multiply by x**k."""
        if self.is_zero:
            return self
        return Polynomial(np.concatenate([self.coeffs, np.zeros(k)]))

    @staticmethod
    def from_roots(roots, gain: float = 1.0) -> "Polynomial":
        c = np.atleast_1d(np.poly(np.asarray(roots))) if len(roots) else np.ones(1)
        return Polynomial(gain * np.real(c))


def poly_roots(p: Polynomial | np.ndarray) -> np.ndarray:
    """Roots of a polynomial via the balanced companion-matrix eigenproblem.

    Returns exactly ``degree`` complex roots, sorted by (real, imag) for
    determinism.  Raises :class:`ZeroPolynomialError` for the zero
    polynomial; a nonzero constant has no roots (empty array).
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(p)
    if p.is_zero:
        raise ZeroPolynomialError("roots of the zero polynomial are undefined")
    c = p.coeffs
    n = c.size - 1
    if n == 0:
        return np.empty(0, dtype=complex)
    monic = c[1:] / c[0]
    comp = np.zeros((n, n))
    comp[0, :] = -monic
    if n > 1:
        comp[1:, :-1] = np.eye(n - 1)
    # LAPACK geev balances internally, which is what keeps wide-dynamic-range
    # coefficient sets (gear ratios squared, stiffnesses ~1e4) accurate.
    return np.sort_complex(np.linalg.eigvals(comp))


def eigenvalues(M) -> np.ndarray:
    """Eigenvalues of a square matrix, sorted by (real, imag)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eigenvalues requires a square matrix")
    if M.shape[0] == 0:
        return np.empty(0, dtype=complex)
    return np.sort_complex(np.linalg.eigvals(M))


def _charpoly(A: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients (monic, descending)."""
    if A.shape[0] == 0:
        return np.ones(1)
    return np.real(np.poly(np.linalg.eigvals(A)))


def _check_same_domain(dt_a, dt_b, what: str):
    if dt_a is None and dt_b is None:
        return
    if dt_a is not None and dt_b is not None and dt_a == dt_b:
        return
    raise DomainMismatchError(
        f"{what}: incompatible time domains ({dt_a!r} vs {dt_b!r})")


@dataclass(frozen=True)
class RationalTF:
    """Single-input single-output rational transfer function.

    ``dt is None`` means continuous time; a positive ``dt`` is the sample
    time of a discrete-time function.  The denominator is normalized to a
    monic leading coefficient on construction so equal functions have
    equal coefficient arrays.
    """

    num: Polynomial
    den: Polynomial
    dt: float | None = None

    def __post_init__(self):
        num = self.num if isinstance(self.num, Polynomial) else Polynomial(self.num)
        den = self.den if isinstance(self.den, Polynomial) else Polynomial(self.den)
        if den.is_zero:
            raise ZeroPolynomialError("transfer function denominator is zero")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("sample time must be positive")
        lead = den.coeffs[0]
        object.__setattr__(self, "num", num * (1.0 / lead))
        object.__setattr__(self, "den", den * (1.0 / lead))

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    def poles(self) -> np.ndarray:
        return poly_roots(self.den)

    def zeros(self) -> np.ndarray:
        if self.num.is_zero:
            return np.empty(0, dtype=complex)
        return poly_roots(self.num)

    def __call__(self, x):
        return self.num(x) / self.den(x)

    def response(self, w) -> np.ndarray:
        """Frequency response on a grid of angular frequencies (rad/s)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.dt is None:
            x = 1j * w
        else:
            wny = math.pi / self.dt
            if np.any(w > wny * (1 + 1e-12)):
                raise FrequencyAboveNyquistError(
                    f"requested frequency exceeds Nyquist rate {wny:.6g} rad/s")
            x = np.exp(1j * w * self.dt)
        return self.num(x) / self.den(x)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return series(self, other)
        g = float(other)
        return RationalTF(self.num * g, self.den, self.dt)

    __rmul__ = __mul__

    def __add__(self, other: "RationalTF") -> "RationalTF":
        _check_same_domain(self.dt, other.dt, "add")
        if np.array_equal(self.den.coeffs, other.den.coeffs):
            return RationalTF(self.num + other.num, self.den, self.dt)
        num = self.num * other.den + other.num * self.den
        return _cancel(RationalTF(num, self.den * other.den, self.dt),
                       CANCEL_TOL_ABS, relative=False)


def series(a: RationalTF, b: RationalTF) -> RationalTF:
    """Cascade a then b; near-coincident pole-zero pairs are cancelled."""
    _check_same_domain(a.dt, b.dt, "series")
    raw = RationalTF(a.num * b.num, a.den * b.den, a.dt)
    return _cancel(raw, CANCEL_TOL_ABS, relative=False)


def feedback(fwd: RationalTF, back: RationalTF | float = 1.0,
             sign: int = -1) -> RationalTF:
    """Close a feedback loop: fwd / (1 - sign * fwd * back).

    ``sign=-1`` (the default) is negative feedback.
    """
    if not isinstance(back, RationalTF):
        back = RationalTF(Polynomial([float(back)]), Polynomial([1.0]), fwd.dt)
    _check_same_domain(fwd.dt, back.dt, "feedback")
    num = fwd.num * back.den
    den = fwd.den * back.den - float(sign) * (fwd.num * back.num)
    if den.is_zero:
        raise IllPosedLoopError("feedback loop is singular")
    return _cancel(RationalTF(num, den, fwd.dt), CANCEL_TOL_ABS, relative=False)


def _pair_and_cancel(zeros: np.ndarray, poles: np.ndarray, tol: float,
                     relative: bool):
    """Greedily cancel zero/pole pairs closer than the tolerance."""
    zs = list(np.sort_complex(zeros))
    ps = list(np.sort_complex(poles))
    kept_z = []
    for z in zs:
        if not ps:
            kept_z.append(z)
            continue
        d = np.abs(np.array(ps) - z)
        j = int(np.argmin(d))
        lim = tol * max(1.0, abs(ps[j])) if relative else tol
        if d[j] <= lim:
            ps.pop(j)
        else:
            kept_z.append(z)
    return np.array(kept_z, dtype=complex), np.array(ps, dtype=complex)


def _cancel(tf: RationalTF, tol: float, relative: bool) -> RationalTF:
    if tf.num.is_zero:
        return RationalTF(tf.num, Polynomial([1.0]), tf.dt)
    zeros = tf.zeros()
    poles = tf.poles()
    kz, kp = _pair_and_cancel(zeros, poles, tol, relative)
    if kz.size == zeros.size and kp.size == poles.size:
        return tf
    gain = tf.num.coeffs[0]  # den is monic
    return RationalTF(Polynomial.from_roots(kz, gain),
                      Polynomial.from_roots(kp), tf.dt)


def minreal(tf: RationalTF, tol: float = PRUNE_TOL_REL) -> RationalTF:
    """Cancel pole-zero pairs within ``tol`` relative distance.

    Used to prune non-minimal modes (such as a rigid-body pole hidden by
    a matching zero at z=1) before stability or passivity verdicts.
    """
    return _cancel(tf, tol, relative=True)


def _default_labels(prefix: str, k: int) -> tuple:
    return tuple(f"{prefix}{i}" for i in range(k))


@dataclass(frozen=True)
class StateSpace:
    """State-space model with labeled input and output channels."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = None
    input_labels: tuple = ()
    output_labels: tuple = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.ndim != 2:
            if n == 0:
                raise ValueError("B must be 2-D for a zero-state system")
            B = B.reshape(n, -1)
        if C.ndim != 2:
            if n == 0:
                raise ValueError("C must be 2-D for a zero-state system")
            C = C.reshape(-1, n)
        m = B.shape[1]
        p = C.shape[0]
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("B/C dimensions do not match the state count")
        if D.shape != (p, m):
            if D.size == p * m:
                D = D.reshape(p, m)
            else:
                raise ValueError("D dimensions do not match B and C")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("sample time must be positive")
        in_labels = tuple(self.input_labels) or _default_labels("u", m)
        out_labels = tuple(self.output_labels) or _default_labels("y", p)
        if len(in_labels) != m or len(set(in_labels)) != m:
            raise ValueError("input labels must be unique and match B columns")
        if len(out_labels) != p or len(set(out_labels)) != p:
            raise ValueError("output labels must be unique and match C rows")
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "input_labels", in_labels)
        object.__setattr__(self, "output_labels", out_labels)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    def input_index(self, label: str) -> int:
        try:
            return self.input_labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"unknown input label {label!r}") from None

    def output_index(self, label: str) -> int:
        try:
            return self.output_labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"unknown output label {label!r}") from None

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.A)

    def subsystem(self, outputs=None, inputs=None) -> "StateSpace":
        """Select output/input channels by label (state vector unchanged)."""
        out_idx = ([self.output_index(o) for o in outputs]
                   if outputs is not None else list(range(self.C.shape[0])))
        in_idx = ([self.input_index(i) for i in inputs]
                  if inputs is not None else list(range(self.B.shape[1])))
        return StateSpace(
            self.A, self.B[:, in_idx], self.C[out_idx, :],
            self.D[np.ix_(out_idx, in_idx)], self.dt,
            tuple(self.input_labels[i] for i in in_idx),
            tuple(self.output_labels[i] for i in out_idx))

    def response(self, w) -> np.ndarray:
        """Frequency response, shape (len(w), p, m)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.dt is None:
            x = 1j * w
        else:
            wny = math.pi / self.dt
            if np.any(w > wny * (1 + 1e-12)):
                raise FrequencyAboveNyquistError(
                    f"requested frequency exceeds Nyquist rate {wny:.6g} rad/s")
            x = np.exp(1j * w * self.dt)
        n = self.n_states
        if n == 0:
            return np.broadcast_to(self.D.astype(complex),
                                   (w.size,) + self.D.shape).copy()
        ident = np.eye(n)
        lhs = x[:, None, None] * ident[None, :, :] - self.A[None, :, :]
        X = np.linalg.solve(lhs, np.broadcast_to(self.B, (w.size,) + self.B.shape))
        return self.C[None, :, :] @ X + self.D[None, :, :]


@dataclass(frozen=True)
class MarginReport:
    """Stability margins of a loop transfer function.

    Undefined margins are explicit: ``gain_margin_db`` is ``+inf`` when
    the phase never crosses -180 degrees, and ``phase_margin_deg`` is
    ``None`` when the gain never crosses 0 dB (no crossover frequency).
    """

    gain_margin_db: float
    phase_margin_deg: float | None
    gain_crossover_hz: float | None
    phase_crossover_hz: float | None


def static_gain(D, input_labels, output_labels, dt=None) -> StateSpace:
    """Memoryless gain block (zero states) in the given time domain."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    p, m = D.shape
    return StateSpace(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)),
                      D, dt, tuple(input_labels), tuple(output_labels))


def c2d_zoh(sys: StateSpace, Ts: float) -> StateSpace:
    """Zero-order-hold discretization via the augmented matrix exponential.

    Ad = exp(A Ts), Bd = (integral of exp(A tau) dtau) B; C and D carry
    over unchanged, as do the channel labels.
    """
    if sys.is_discrete:
        raise DomainMismatchError("c2d_zoh requires a continuous-time system")
    if not Ts > 0:
        raise ValueError("sample time must be positive")
    n, m = sys.n_states, sys.B.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    E = expm(aug * Ts)
    return StateSpace(E[:n, :n], E[:n, n:], sys.C, sys.D, Ts,
                      sys.input_labels, sys.output_labels)


def freq_response(sys: RationalTF | StateSpace, w) -> np.ndarray:
    """Frequency response on an angular-frequency grid (rad/s)."""
    return sys.response(w)


def tf_to_ss(tf: RationalTF) -> StateSpace:
    """Controllable canonical realization of a proper SISO function."""
    if not tf.is_proper:
        raise ImproperSystemError("tf_to_ss requires a proper transfer function")
    den = tf.den.coeffs  # monic
    n = den.size - 1
    num = np.zeros(n + 1)
    num[n + 1 - tf.num.coeffs.size:] = tf.num.coeffs
    d = num[0]
    rem = num[1:] - d * den[1:]  # strictly-proper remainder coefficients
    if n == 0:
        return static_gain([[d]], ("u",), ("y",), tf.dt)
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    D = np.array([[d]])
    return StateSpace(A, B, C, D, tf.dt)


def ss_to_tf(sys: StateSpace, output=0, input=0) -> RationalTF:
    """Transfer function of one input/output pair of a state-space model.

    Uses the determinant identity det(xI - A + b c) = det(xI - A) *
    (1 + c (xI - A)^{-1} b), so numerator and denominator come from two
    characteristic polynomials and share the same state basis.
    """
    i = sys.input_index(input) if isinstance(input, str) else int(input)
    o = sys.output_index(output) if isinstance(output, str) else int(output)
    b = sys.B[:, i:i + 1]
    c = sys.C[o:o + 1, :]
    d = float(sys.D[o, i])
    den = _charpoly(sys.A)
    # Both characteristic polynomials are monic, so the difference loses
    # its leading 1 exactly; what remains above the true numerator degree
    # is subtraction noise and gets trimmed relative to the peak.
    num_strict = Polynomial(_charpoly(sys.A - b @ c) - den).trimmed(1e-12)
    num = num_strict + Polynomial(den) * d
    return RationalTF(num, Polynomial(den), sys.dt)


def is_stable(obj: RationalTF | StateSpace | np.ndarray,
              dt: float | None = "from_obj") -> bool:
    """Stability predicate.

    Discrete: every pole/eigenvalue satisfies |z| < 1 - 1e-9 (the
    boundary counts as unstable).  Continuous: every pole has Re < 0.
    Transfer functions are pruned of non-minimal pole-zero pairs first.
    """
    if isinstance(obj, RationalTF):
        poles = minreal(obj).poles()
        domain_dt = obj.dt
    elif isinstance(obj, StateSpace):
        poles = obj.eigenvalues()
        domain_dt = obj.dt
    else:
        poles = np.atleast_1d(np.asarray(obj, dtype=complex))
        domain_dt = None if dt == "from_obj" else dt
    if poles.size == 0:
        return True
    if domain_dt is not None:
        return bool(np.max(np.abs(poles)) < 1.0 - STABILITY_TOL)
    return bool(np.max(np.real(poles)) < 0.0)


def connect(systems, wiring, inputs=None, outputs=None) -> StateSpace:
    """Label-based interconnection of state-space blocks.

    ``wiring`` is a sequence of ``(input_label, output_label, gain)``
    triples: the named input receives ``gain`` times the named output,
    summed over all triples naming it.  Inputs listed in ``inputs`` stay
    external (an input may be both wired and external; contributions
    add).  When ``inputs`` is omitted, every unwired input is external in
    declaration order.  ``outputs`` selects and orders the exposed
    outputs (default: all, in declaration order).
    """
    if not systems:
        raise ValueError("connect requires at least one system")
    dt = systems[0].dt
    for s in systems[1:]:
        _check_same_domain(dt, s.dt, "connect")

    in_labels, out_labels = [], []
    for s in systems:
        in_labels.extend(s.input_labels)
        out_labels.extend(s.output_labels)
    if len(set(in_labels)) != len(in_labels):
        raise ValueError("duplicate input labels across subsystems")
    if len(set(out_labels)) != len(out_labels):
        raise ValueError("duplicate output labels across subsystems")
    in_pos = {lab: k for k, lab in enumerate(in_labels)}
    out_pos = {lab: k for k, lab in enumerate(out_labels)}

    ns = [s.n_states for s in systems]
    n = sum(ns)
    M = len(in_labels)
    P = len(out_labels)
    A = np.zeros((n, n))
    B = np.zeros((n, M))
    C = np.zeros((P, n))
    D = np.zeros((P, M))
    r = c = ro = ci = 0
    for s in systems:
        k, m, p = s.n_states, s.B.shape[1], s.C.shape[0]
        A[r:r + k, r:r + k] = s.A
        B[r:r + k, ci:ci + m] = s.B
        C[ro:ro + p, r:r + k] = s.C
        D[ro:ro + p, ci:ci + m] = s.D
        r += k
        ro += p
        ci += m

    F = np.zeros((M, P))
    wired = set()
    for u_lab, y_lab, gain in wiring:
        if u_lab not in in_pos:
            raise UnknownLabelError(f"unknown input label {u_lab!r}")
        if y_lab not in out_pos:
            raise UnknownLabelError(f"unknown output label {y_lab!r}")
        F[in_pos[u_lab], out_pos[y_lab]] += float(gain)
        wired.add(u_lab)

    if inputs is None:
        ext = [lab for lab in in_labels if lab not in wired]
    else:
        ext = list(inputs)
        for lab in ext:
            if lab not in in_pos:
                raise UnknownLabelError(f"unknown input label {lab!r}")
    K = len(ext)
    E = np.zeros((M, K))
    for k, lab in enumerate(ext):
        E[in_pos[lab], k] = 1.0

    S = np.eye(P) - D @ F
    if P and (not np.all(np.isfinite(S)) or
              np.linalg.cond(S) > 1e12):
        raise IllPosedLoopError("interconnection has a singular algebraic loop")
    Sinv_C = np.linalg.solve(S, C) if P else C
    Sinv_DE = np.linalg.solve(S, D @ E) if P else D @ E

    A_cl = A + B @ F @ Sinv_C
    B_cl = B @ E + B @ F @ Sinv_DE
    if outputs is None:
        sel = list(range(P))
    else:
        sel = []
        for lab in outputs:
            if lab not in out_pos:
                raise UnknownLabelError(f"unknown output label {lab!r}")
            sel.append(out_pos[lab])
    C_cl = Sinv_C[sel, :]
    D_cl = Sinv_DE[sel, :]
    return StateSpace(A_cl, B_cl, C_cl, D_cl, dt,
                      tuple(ext), tuple(out_labels[j] for j in sel))


def _bisect(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Root of a scalar function by bisection; endpoints must bracket."""
    flo = f(lo)
    if flo == 0.0:
        return lo
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo > 0) != (fm > 0):
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def _wrap180(deg: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    w = (deg + 180.0) % 360.0 - 180.0
    return 180.0 if w == -180.0 else w


def margins(loop_tf: RationalTF, n_grid: int = 2000,
            w_min: float = 1e-2) -> MarginReport:
    """Gain and phase margins of a discrete-time loop transfer function.

    Crossings are bracketed on a log grid from ``w_min`` to Nyquist and
    refined by bisection to 1e-10 rad/s; with several crossings the
    minimum margin is reported.  Margins that do not exist are returned
    as +inf (gain) or None (phase), never silently zero.
    """
    if loop_tf.dt is None:
        raise DomainMismatchError("margins requires a discrete-time loop")
    if not loop_tf.is_proper:
        raise ImproperSystemError("loop transfer function must be proper")
    Ts = loop_tf.dt
    w_ny = math.pi / Ts
    w = np.logspace(math.log10(w_min), math.log10(w_ny), n_grid)
    w[-1] = w_ny
    L = loop_tf.response(w)

    def eval_L(wi: float) -> complex:
        z = cmath.exp(1j * wi * Ts)
        return complex(loop_tf.num(z) / loop_tf.den(z))

    # Phase crossovers: zeros of Im(L) on the negative real axis.
    gm_db = math.inf
    gm_hz = None
    im = np.imag(L)
    re = np.real(L)
    crossings = []
    for i in range(len(w) - 1):
        if im[i] == 0.0 and re[i] < 0.0:
            crossings.append(w[i])
        elif im[i] * im[i + 1] < 0.0:
            wc = _bisect(lambda x: np.imag(eval_L(x)), w[i], w[i + 1])
            if eval_L(wc).real < 0.0:
                crossings.append(wc)
    if im[-1] == 0.0 and re[-1] < 0.0:
        crossings.append(w[-1])
    # At Nyquist z = -1 exactly, so L is exactly real there for real
    # coefficients; exp(1j*pi) rounds off that crossing, so test directly.
    den_ny = float(loop_tf.den(-1.0))
    l_ny = float(loop_tf.num(-1.0)) / den_ny if den_ny != 0.0 else None
    if l_ny is not None and math.isfinite(l_ny) and l_ny < 0.0:
        crossings.append(w_ny)
    for wc in crossings:
        mag = abs(eval_L(wc)) if (wc != w_ny or l_ny is None) else abs(l_ny)
        if mag == 0.0:
            continue
        g = -20.0 * math.log10(mag)
        if g < gm_db:
            gm_db = g
            gm_hz = wc / (2.0 * math.pi)

    # Gain crossovers: |L| = 1.
    pm_deg = None
    pm_hz = None
    mag = np.abs(L)
    gaps = mag - 1.0
    unity = []
    for i in range(len(w) - 1):
        if gaps[i] == 0.0:
            unity.append(w[i])
        elif gaps[i] * gaps[i + 1] < 0.0:
            unity.append(_bisect(lambda x: abs(eval_L(x)) - 1.0,
                                 w[i], w[i + 1]))
    if gaps[-1] == 0.0:
        unity.append(w[-1])
    for wc in unity:
        ang = math.degrees(cmath.phase(eval_L(wc)))
        pm = _wrap180(180.0 + ang)
        if pm_deg is None or pm < pm_deg:
            pm_deg = pm
            pm_hz = wc / (2.0 * math.pi)

    return MarginReport(gain_margin_db=gm_db, phase_margin_deg=pm_deg,
                        gain_crossover_hz=pm_hz, phase_crossover_hz=gm_hz)
