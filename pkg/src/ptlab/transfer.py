"""Transfer-matrix propagation and scattering amplitudes.

A constant band of value v and width L propagates the boundary state
(psi, psi') through the 2x2 matrix

    [[cos(qL),        sin(qL)/q],
     [-q sin(qL),     cos(qL)  ]],        q^2 = mu - v.

Only the even/odd entire combinations cos(qL) and L*sinc(qL) are ever formed
(never a standalone q = sqrt(mu - v)), so every entry is an entire,
single-valued function of the energy parameter mu and eigenvalue continuation
can cross q^2 = 0 freely.  A Taylor series takes over for small |q^2 L^2|.

For strongly evanescent bands the hyperbolic growth is factored out: entries
are stored scaled by exp(-log_scale).  The scale cancels in reflection and
transmission amplitudes and in secular-function zeros.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularSystemError
from .potential import PotentialSpec

#: below this |z| the Taylor series evaluates the entire kernels
_SERIES_CUT = 0.5
_SERIES_TERMS = 12

#: renormalization trigger for matrix composition
_RENORM_LIMIT = 1e100


@dataclass(frozen=True)
class BoundaryState:
    """Wavefunction value and derivative at a point."""

    psi: complex
    dpsi: complex


@dataclass(frozen=True)
class TransferMatrix:
    """Unimodular 2x2 propagator of (psi, psi') in scaled storage.

    The actual matrix is exp(log_scale) * [[m11, m12], [m21, m22]]; the scale
    is nonzero only after strongly evanescent propagation.
    """

    m11: complex
    m12: complex
    m21: complex
    m22: complex
    log_scale: float = 0.0

    @classmethod
    def identity(cls) -> "TransferMatrix":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        m11 = self.m11 * other.m11 + self.m12 * other.m21
        m12 = self.m11 * other.m12 + self.m12 * other.m22
        m21 = self.m21 * other.m11 + self.m22 * other.m21
        m22 = self.m21 * other.m12 + self.m22 * other.m22
        scale = self.log_scale + other.log_scale
        peak = max(abs(m11), abs(m12), abs(m21), abs(m22))
        if peak > _RENORM_LIMIT:
            m11, m12, m21, m22 = m11 / peak, m12 / peak, m21 / peak, m22 / peak
            scale += math.log(peak)
        return TransferMatrix(m11, m12, m21, m22, scale)

    def apply(self, state: BoundaryState) -> BoundaryState:
        """Propagate a boundary state; returns actual (unscaled) values."""
        s = cmath.exp(self.log_scale)
        return BoundaryState(
            s * (self.m11 * state.psi + self.m12 * state.dpsi),
            s * (self.m21 * state.psi + self.m22 * state.dpsi),
        )

    @property
    def det(self) -> complex:
        """Determinant of the actual matrix (1 up to roundoff at entry scale)."""
        return cmath.exp(2.0 * self.log_scale) * (self.m11 * self.m22 - self.m12 * self.m21)

    def as_array(self) -> np.ndarray:
        """Actual matrix as a numpy array; may overflow for extreme scales."""
        return cmath.exp(self.log_scale) * np.array(
            [[self.m11, self.m12], [self.m21, self.m22]], dtype=complex
        )


@dataclass(frozen=True)
class ScatteringAmplitudes:
    """Reflection/transmission amplitudes at wavenumber k, unit incident amplitude."""

    R: complex
    T: complex
    k: float

    @property
    def T2(self) -> float:
        return abs(self.T) ** 2

    @property
    def R2(self) -> float:
        return abs(self.R) ** 2


def _kernels(z: complex) -> tuple[complex, complex, complex, complex, float]:
    """Scaled entire kernels at z = q^2 L^2.

    Returns (c, g, gp, gpp, s) with actual values c(z) = cos(sqrt z),
    g(z) = sin(sqrt z)/sqrt z and their z-derivatives gp, gpp, all multiplied
    by exp(-s); s = |Im sqrt(z)| is zero on the series branch.
    """
    if abs(z) <= _SERIES_CUT:
        powers = [1.0 + 0.0j]
        for _ in range(_SERIES_TERMS - 1):
            powers.append(powers[-1] * z)
        c = g = gp = gpp = 0.0 + 0.0j
        for n in range(_SERIES_TERMS):
            sign = -1.0 if n % 2 else 1.0
            c += sign * powers[n] / math.factorial(2 * n)
            g += sign * powers[n] / math.factorial(2 * n + 1)
            if n >= 1:
                gp += sign * n * powers[n - 1] / math.factorial(2 * n + 1)
            if n >= 2:
                gpp += sign * n * (n - 1) * powers[n - 2] / math.factorial(2 * n + 1)
        return c, g, gp, gpp, 0.0
    w = cmath.sqrt(z)
    s = abs(w.imag)
    e_plus = cmath.exp(1j * w - s)
    e_minus = cmath.exp(-1j * w - s)
    c = 0.5 * (e_plus + e_minus)
    g = (e_plus - e_minus) / (2j * w)
    gp = (c - g) / (2.0 * z)
    cp = -0.5 * g
    gpp = ((cp - gp) * z - (c - g)) / (2.0 * z * z)
    return c, g, gp, gpp, s


def _kernels_grid(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (c, g, s) for an array of z = q^2 L^2 values."""
    z = np.asarray(z, dtype=complex)
    w = np.sqrt(z)
    s = np.abs(w.imag)
    e_plus = np.exp(1j * w - s)
    e_minus = np.exp(-1j * w - s)
    c = 0.5 * (e_plus + e_minus)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = (e_plus - e_minus) / (2j * w)
    small = np.abs(z) <= _SERIES_CUT
    if np.any(small):
        zs = z[small]
        cs = np.zeros_like(zs)
        gs = np.zeros_like(zs)
        zn = np.ones_like(zs)
        for n in range(_SERIES_TERMS):
            cs += zn / math.factorial(2 * n) * (-1) ** n
            gs += zn / math.factorial(2 * n + 1) * (-1) ** n
            zn = zn * zs
        c[small] = cs
        g[small] = gs
        s[small] = 0.0
    return c, g, s


class PropagatedMatrices:
    """Total transfer matrix together with its first two mu-derivatives.

    All three 2x2 arrays share one log_scale (actual values carry a common
    factor exp(log_scale)), which keeps Newton steps and implicit-function
    derivatives scale-free.  ``peak`` is the largest intermediate entry
    magnitude met while composing (in final-scale units): the roundoff floor
    of the entries, which can exceed their final magnitude when evanescent
    growth cancels through the product.
    """

    __slots__ = ("m", "dm", "d2m", "log_scale", "peak")

    def __init__(self, m, dm, d2m, log_scale, peak=1.0):
        self.m = m
        self.dm = dm
        self.d2m = d2m
        self.log_scale = log_scale
        self.peak = peak


def _segment_matrices(value: float, width: float, mu: complex) -> PropagatedMatrices:
    """One band's propagator and its mu-derivatives, in shared scaled storage."""
    L = width
    z = (mu - value) * L * L
    c, g, gp, gpp, s = _kernels(z)
    L2 = L * L
    m = np.array([[c, L * g], [-(z / L) * g, c]], dtype=complex)
    dm = np.array(
        [[-0.5 * g * L2, L * L2 * gp], [-L * (g + z * gp), -0.5 * g * L2]], dtype=complex
    )
    d2m = np.array(
        [[-0.5 * gp * L2 * L2, L * L2 * L2 * gpp],
         [-L * L2 * (2.0 * gp + z * gpp), -0.5 * gp * L2 * L2]],
        dtype=complex,
    )
    return PropagatedMatrices(m, dm, d2m, s)


def segment_propagator(value: float, width: float, mu: complex) -> TransferMatrix:
    """Transfer matrix of a single constant band.

    Entries are evaluated through entire functions of mu - value, smooth
    through q^2 = 0; zero width gives the identity.
    """
    if width < 0:
        raise ValueError(f"width must be nonnegative, got {width}")
    if width == 0:
        return TransferMatrix.identity()
    seg = _segment_matrices(value, width, mu)
    m = seg.m
    return TransferMatrix(m[0, 0], m[0, 1], m[1, 0], m[1, 1], seg.log_scale)


def total_transfer(p: PotentialSpec, mu: complex) -> TransferMatrix:
    """Ordered product of band propagators from -a to +a."""
    total = TransferMatrix.identity()
    for seg in p.segments:
        total = segment_propagator(seg.value, seg.width, mu) @ total
    return total


def propagate_with_derivatives(p: PotentialSpec, mu: complex) -> PropagatedMatrices:
    """Total transfer matrix and its first two mu-derivatives across [-a, a]."""
    m = np.eye(2, dtype=complex)
    dm = np.zeros((2, 2), dtype=complex)
    d2m = np.zeros((2, 2), dtype=complex)
    scale = 0.0
    peak = 1.0
    for seg in p.segments:
        part = _segment_matrices(seg.value, seg.width, mu)
        m_new = part.m @ m
        dm_new = part.dm @ m + part.m @ dm
        d2m_new = part.d2m @ m + 2.0 * (part.dm @ dm) + part.m @ d2m
        scale += part.log_scale
        top = np.max(np.abs(m_new))
        peak = max(peak, top)
        if top > _RENORM_LIMIT:
            m_new /= top
            dm_new /= top
            d2m_new /= top
            scale += math.log(top)
            peak /= top
        m, dm, d2m = m_new, dm_new, d2m_new
    return PropagatedMatrices(m, dm, d2m, scale, peak)


def transfer_entries_grid(p: PotentialSpec, mu: np.ndarray):
    """Vectorized transfer-matrix entries over an array of energies.

    Returns (m11, m12, m21, m22, log_scale, peak): scaled entries, the
    per-point scale exponent, and the per-point roundoff floor (largest
    intermediate entry magnitude met during composition).
    """
    mu = np.asarray(mu, dtype=complex)
    m11 = np.ones_like(mu)
    m12 = np.zeros_like(mu)
    m21 = np.zeros_like(mu)
    m22 = np.ones_like(mu)
    scale = np.zeros(mu.shape, dtype=float)
    peak = np.ones(mu.shape, dtype=float)
    for seg in p.segments:
        L = seg.width
        z = (mu - seg.value) * L * L
        c, g, s = _kernels_grid(z)
        a11, a12 = c, L * g
        a21, a22 = -(z / L) * g, c
        n11 = a11 * m11 + a12 * m21
        n12 = a11 * m12 + a12 * m22
        n21 = a21 * m11 + a22 * m21
        n22 = a21 * m12 + a22 * m22
        m11, m12, m21, m22 = n11, n12, n21, n22
        scale = scale + s
        top = np.maximum(np.maximum(np.abs(m11), np.abs(m12)),
                         np.maximum(np.abs(m21), np.abs(m22)))
        peak = np.maximum(peak, top)
    return m11, m12, m21, m22, scale, peak


def scattering_amplitudes(p: PotentialSpec, k: float) -> ScatteringAmplitudes:
    """Reflection and transmission amplitudes at wavenumber k > 0.

    Imposes continuity of (psi, psi') at +-a on the asymptotic waves
    exp(ikx) + R exp(-ikx) and T exp(ikx), then solves the resulting 2x2
    complex linear system; the incident amplitude is one.
    """
    if not (k > 0):
        raise ValueError(f"wavenumber must be positive, got {k}")
    a = p.half_width
    tm = total_transfer(p, k * k + 0j)
    m = np.array([[tm.m11, tm.m12], [tm.m21, tm.m22]], dtype=complex)
    u_in = np.array([cmath.exp(-1j * k * a), 1j * k * cmath.exp(-1j * k * a)])
    u_ref = np.array([cmath.exp(1j * k * a), -1j * k * cmath.exp(1j * k * a)])
    u_out = np.array([cmath.exp(1j * k * a), 1j * k * cmath.exp(1j * k * a)])
    # unknowns (R, T * exp(-log_scale)); the overflow-guard factor cancels in R
    sys = np.column_stack([m @ u_ref, -u_out])
    rhs = -(m @ u_in)
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:  # cannot occur for real v and real k
        raise SingularSystemError(f"matching system singular at k={k}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError(f"matching system ill-conditioned at k={k}")
    R = complex(sol[0])
    T = complex(sol[1] * cmath.exp(tm.log_scale))
    return ScatteringAmplitudes(R=R, T=T, k=float(k))


def scattering_grid(p: PotentialSpec, k: np.ndarray):
    """Vectorized (R, T) over an array of wavenumbers.

    Uses the closed-form solution of the matching system; the Wronskian
    det = 1 is used exactly, which keeps T accurate deep in tunneling ranges.
    """
    k = np.asarray(k, dtype=float)
    m11, m12, m21, m22, scale, _ = transfer_entries_grid(p, k * k)
    a = p.half_width
    phase = np.exp(-2j * k * a)
    num = m21 + k * k * m12 + 1j * k * (m22 - m11)
    den = m21 - k * k * m12 - 1j * k * (m22 + m11)
    R = -phase * num / den
    T = 2j * k * phase * np.exp(-scale) / (k * k * m12 - m21 + 1j * k * (m11 + m22))
    return R, T


def transmission_curve(p: PotentialSpec, k2_grid) -> list[tuple[float, float, float, float]]:
    """Tabulated (k^2, |T|^2, |R|^2, arg T) over a grid of energies k^2 > 0."""
    k2 = np.asarray(list(k2_grid), dtype=float)
    if k2.size and not np.all(k2 > 0):
        raise ValueError("all grid points must be positive energies")
    R, T = scattering_grid(p, np.sqrt(k2))
    return [
        (float(e), float(abs(t) ** 2), float(abs(r) ** 2), float(np.angle(t)))
        for e, r, t in zip(k2, R, T)
    ]
