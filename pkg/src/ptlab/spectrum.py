"""Non-self-adjoint Robin spectral problem for piecewise-constant potentials.

The boundary-value problem -psi'' + v psi = mu psi on [-a, a] with
psi'(+-a) = i*alpha*psi(+-a) (alpha real) is reduced to the secular function

    F(mu; alpha) = w2 - i*alpha*w1,     (w1, w2) = M(mu) (1, i*alpha)^T,

where M is the total transfer matrix.  F is entire in mu; its zeros are
exactly the eigenvalues.  Everything here (root counting by the argument
principle, Newton refinement with deflation, branch continuation in alpha,
double-root location for exceptional points) operates on F and its analytic
mu-derivatives propagated through the transfer product - no finite
differences enter the Newton steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    CapacityError,
    ContinuationStallError,
    ContourError,
    NoExceptionalPointError,
)
from .potential import PotentialSpec
from .transfer import propagate_with_derivatives, transfer_entries_grid

#: residual threshold for accepting a root, relative to the secular scale
ROOT_TOL = 1e-12
#: Newton iteration cap
NEWTON_MAXIT = 50
#: contour sampling (panels per box edge) for the argument principle
CONTOUR_PANELS = 512
#: two tracked roots closer than this flag an exceptional-point candidate
COLLISION_THRESHOLD = 1e-4


@dataclass(frozen=True)
class SecularValue:
    """Secular function and derivatives at one (mu, alpha) point.

    ``f``, ``f_mu``, ``f_mumu``, ``f_alpha``, ``f_mualpha``, ``f_alphaalpha``
    are stored scaled by exp(-log_scale) (one common overflow-guard factor).
    ``scale`` is the natural magnitude of the terms combined into f, used to
    normalize residuals.
    """

    f: complex
    f_mu: complex
    f_mumu: complex
    f_alpha: complex
    f_mualpha: complex
    f_alphaalpha: complex
    log_scale: float
    scale: float

    @property
    def residual(self) -> float:
        """|f| normalized by the cancellation scale."""
        return abs(self.f) / max(self.scale, 1e-300)


def secular_eval(p: PotentialSpec, alpha: float, mu: complex) -> SecularValue:
    """Secular function with analytic first and second mu-derivatives."""
    prop = propagate_with_derivatives(p, mu)
    ia = 1j * alpha
    m, dm, d2m = prop.m, prop.dm, prop.d2m
    w1 = m[0, 0] + ia * m[0, 1]
    w2 = m[1, 0] + ia * m[1, 1]
    f = w2 - ia * w1
    f_mu = (dm[1, 0] + ia * dm[1, 1]) - ia * (dm[0, 0] + ia * dm[0, 1])
    f_mumu = (d2m[1, 0] + ia * d2m[1, 1]) - ia * (d2m[0, 0] + ia * d2m[0, 1])
    # entries do not depend on alpha: d/dalpha acts on the boundary vectors only
    f_alpha = 1j * (m[1, 1] - m[0, 0]) + 2.0 * alpha * m[0, 1]
    f_mualpha = 1j * (dm[1, 1] - dm[0, 0]) + 2.0 * alpha * dm[0, 1]
    f_alphaalpha = 2.0 * m[0, 1]
    # roundoff floor of F: the largest magnitude fed through the composition
    # (the final |w2| would vanish at a root together with F, e.g. at alpha=0,
    # and the final entries can be tiny after evanescent cancellation)
    scale = (1.0 + abs(alpha)) ** 2 * prop.peak
    return SecularValue(f, f_mu, f_mumu, f_alpha, f_mualpha, f_alphaalpha,
                        prop.log_scale, scale)


def secular(p: PotentialSpec, alpha: float, mu: complex) -> complex:
    """Secular function F(mu; alpha); zeros are the Robin eigenvalues."""
    val = secular_eval(p, alpha, mu)
    return val.f * math.exp(val.log_scale)


def secular_grid(p: PotentialSpec, alpha: float, mu: np.ndarray):
    """Vectorized scaled secular values over an array of energies.

    Returns (f, scale_of_terms); the per-point overflow-guard exponent is
    dropped since it is real positive and affects neither signs nor phases.
    """
    m11, m12, m21, m22, _, peak = transfer_entries_grid(p, mu)
    ia = 1j * alpha
    w1 = m11 + ia * m12
    w2 = m21 + ia * m22
    f = w2 - ia * w1
    return f, (1.0 + abs(alpha)) ** 2 * peak


def square_well_eigenvalues(a: float, v0: float, alpha: float, n_max: int) -> list[complex]:
    """Closed-form Robin eigenvalues of the square well of depth v0.

    The spectrum is {alpha^2 - v0} together with {(n*pi/2a)^2 - v0} for
    n >= 1; serves as the analytic oracle in tests.
    """
    if not (a > 0):
        raise ValueError(f"half_width must be positive, got {a}")
    if n_max < 0:
        raise ValueError(f"n_max must be nonnegative, got {n_max}")
    out: list[complex] = [complex(alpha * alpha - v0)]
    for n in range(1, n_max + 1):
        out.append(complex((n * math.pi / (2.0 * a)) ** 2 - v0))
    return out


@dataclass(frozen=True)
class ComplexBox:
    """Axis-aligned rectangle in the complex mu plane."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_hi > self.re_lo and self.im_hi > self.im_lo):
            raise ValueError("box must have positive area")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    @property
    def diag(self) -> float:
        return math.hypot(self.re_hi - self.re_lo, self.im_hi - self.im_lo)

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (self.re_lo - margin <= z.real <= self.re_hi + margin
                and self.im_lo - margin <= z.imag <= self.im_hi + margin)


def _contour_points(box: ComplexBox, n_per_edge: int) -> np.ndarray:
    corners = [complex(box.re_lo, box.im_lo), complex(box.re_hi, box.im_lo),
               complex(box.re_hi, box.im_hi), complex(box.re_lo, box.im_hi)]
    pts = []
    for i in range(4):
        z0, z1 = corners[i], corners[(i + 1) % 4]
        t = np.arange(n_per_edge) / n_per_edge
        pts.append(z0 + t * (z1 - z0))
    return np.concatenate(pts)


def winding_number(p: PotentialSpec, alpha: float, box: ComplexBox,
                   n_per_edge: int = CONTOUR_PANELS) -> int:
    """Zero count of the secular function inside a box, by the argument principle.

    The boundary phase of F is accumulated with wrap-safe increments; the
    sampling is doubled until all increments are below pi/2 and the count
    agrees with the half-resolution estimate.  Raises ContourError when the
    contour cannot be resolved (e.g. it passes too close to a zero).
    """
    n = n_per_edge
    prev_count = None
    while n <= 16 * CONTOUR_PANELS:
        pts = _contour_points(box, n)
        f, scale = secular_grid(p, alpha, pts)
        if np.any(np.abs(f) <= 1e-13 * np.maximum(scale, 1e-300)):
            raise ContourError("secular function vanishes on the counting contour")
        ph = np.angle(f)
        dph = np.diff(np.concatenate([ph, ph[:1]]))
        dph = (dph + math.pi) % (2.0 * math.pi) - math.pi
        if np.max(np.abs(dph)) < 0.5 * math.pi:
            count = int(round(float(np.sum(dph)) / (2.0 * math.pi)))
            if prev_count == count:
                return count
            prev_count = count
        else:
            prev_count = None
        n *= 2
    raise ContourError("contour sampling did not stabilize (zero near the boundary?)")


def _newton_root(p: PotentialSpec, alpha: float, z0: complex,
                 deflate: Sequence[complex] = (), step_cap: float = math.inf,
                 multiplicity: int = 1):
    """Newton iteration on the secular function from z0.

    Accepted roots are suppressed through the logarithmic derivative
    (deflation), but the convergence residual is always measured on the
    undeflated function.  Returns (root, residual) or None.
    """
    z = complex(z0)
    for _ in range(NEWTON_MAXIT):
        val = secular_eval(p, alpha, z)
        if val.f == 0:
            return z, 0.0
        logderiv = val.f_mu / val.f
        for r in deflate:
            dz = z - r
            if dz != 0:
                logderiv -= 1.0 / dz
        if logderiv == 0 or not np.isfinite(abs(logderiv)):
            return None
        step = -multiplicity / logderiv
        if abs(step) > step_cap:
            step *= step_cap / abs(step)
        z = z + step
        if abs(step) <= 1e-15 * (1.0 + abs(z)):
            break
    val = secular_eval(p, alpha, z)
    res = val.residual
    if res <= ROOT_TOL:
        return z, res
    return None


def find_eigenvalues(p: PotentialSpec, alpha: float, box: ComplexBox,
                     max_count: int = 64) -> list[complex]:
    """All secular zeros inside a box, argument-principle complete.

    The box is subdivided until each cell holds at most one zero (counted by
    winding number), each zero is polished by deflated Newton, and the final
    multiset size is checked against the winding number of the original box.
    Roots are returned sorted by real part, then imaginary part, repeated
    with multiplicity.
    """
    if max_count < 1:
        raise ValueError("max_count must be at least 1")
    total = _winding_robust(p, alpha, box)
    if total > max_count:
        raise CapacityError(f"{total} zeros inside the box, caller allowed {max_count}")
    roots: list[complex] = []
    _subdivide(p, alpha, box, total, roots, depth=0)
    assert len(roots) == total, "argument principle count mismatch"
    return sorted(roots, key=lambda z: (z.real, z.imag))


def _winding_robust(p: PotentialSpec, alpha: float, box: ComplexBox) -> int:
    """Winding number with contour-perturbation retries."""
    grow = 1e-9 * max(box.diag, 1.0)
    for attempt in range(6):
        try:
            return winding_number(p, alpha, box)
        except ContourError:
            if attempt == 5:
                raise
            pad = grow * (3.0 ** attempt)
            box = ComplexBox(box.re_lo - pad, box.re_hi + pad,
                             box.im_lo - pad, box.im_hi + pad)
    raise AssertionError("unreachable")


def _subdivide(p: PotentialSpec, alpha: float, box: ComplexBox, count: int,
               roots: list[complex], depth: int) -> None:
    if count == 0:
        return
    min_size = 1e-8 * (1.0 + abs(box.center))
    if count == 1:
        got = _newton_root(p, alpha, box.center, deflate=roots, step_cap=box.diag)
        if got is not None and box.contains(got[0], margin=1e-7 * (1.0 + abs(got[0]))):
            roots.append(got[0])
            return
        # fall through to subdivision when Newton escapes the cell
    if box.diag < min_size:
        # unresolvable cluster: treat as one root of multiplicity `count`
        got = _newton_root(p, alpha, box.center, step_cap=box.diag * 10,
                           multiplicity=count)
        if got is None:
            val = secular_eval(p, alpha, box.center)
            if val.residual > 1e-6:
                raise ContourError(
                    f"winding reports {count} zeros in an unresolvable cell "
                    f"near {box.center} but the secular residual stays large"
                )
            got = (box.center, val.residual)
        roots.extend([got[0]] * count)
        return
    if depth > 120:
        raise ContourError("subdivision depth exceeded")
    for sub in _split(p, alpha, box):
        c = _winding_robust(p, alpha, sub)
        _subdivide(p, alpha, sub, c, roots, depth + 1)


def _split(p: PotentialSpec, alpha: float, box: ComplexBox):
    """Cut the box across its longer side, nudging the cut off any zero."""
    horizontal = (box.re_hi - box.re_lo) >= (box.im_hi - box.im_lo)
    for shift in (0.5, 0.5137, 0.4629, 0.5391):
        if horizontal:
            mid = box.re_lo + shift * (box.re_hi - box.re_lo)
            first = ComplexBox(box.re_lo, mid, box.im_lo, box.im_hi)
            second = ComplexBox(mid, box.re_hi, box.im_lo, box.im_hi)
        else:
            mid = box.im_lo + shift * (box.im_hi - box.im_lo)
            first = ComplexBox(box.re_lo, box.re_hi, box.im_lo, mid)
            second = ComplexBox(box.re_lo, box.re_hi, mid, box.im_hi)
        try:
            winding_number(p, alpha, first)
            winding_number(p, alpha, second)
            return first, second
        except ContourError:
            continue
    raise ContourError("could not place a subdivision cut away from zeros")


@dataclass
class BranchSample:
    alpha: float
    mu: complex
    residual: float
    step: float


@dataclass
class CollisionInfo:
    """Two roots approached within the collision threshold during continuation."""

    alpha: float
    mu: complex
    distance: float


@dataclass
class EigenBranch:
    """One labeled eigenvalue curve mu_n(alpha) with continuation metadata."""

    label: int
    samples: list[BranchSample] = field(default_factory=list)
    collision: CollisionInfo | None = None
    source: str = "direct"

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.samples])

    @property
    def mus(self) -> np.ndarray:
        return np.array([s.mu for s in self.samples], dtype=complex)

    def mu_at(self, alpha: float) -> complex:
        """Linear interpolation of the sampled curve (seed values for solvers)."""
        al = self.alphas
        mus = self.mus
        if alpha <= al[0]:
            return complex(mus[0])
        if alpha >= al[-1]:
            return complex(mus[-1])
        i = int(np.searchsorted(al, alpha)) - 1
        t = (alpha - al[i]) / (al[i + 1] - al[i])
        return complex((1.0 - t) * mus[i] + t * mus[i + 1])


def branch_derivative(p: PotentialSpec, alpha: float, mu: complex) -> complex:
    """d mu / d alpha on an eigenvalue branch, by the implicit function theorem."""
    val = secular_eval(p, alpha, mu)
    return -val.f_alpha / val.f_mu


def _nearest_root_distance(val: SecularValue) -> float:
    """Estimated distance to the closest other zero, 2|F'/F''|.

    Exact when exactly two zeros dominate locally; large values mean an
    isolated root.
    """
    if val.f_mumu == 0:
        return math.inf
    return 2.0 * abs(val.f_mu / val.f_mumu)


def continue_branch(p: PotentialSpec, seed: tuple[float, complex],
                    alpha_range: tuple[float, float], step: float,
                    label: int = 0) -> EigenBranch:
    """Predictor-corrector continuation of one eigenvalue branch over alpha.

    Linear extrapolation predicts, Newton corrects; the step halves on
    corrector failure (up to 10 times, then ContinuationStallError carrying
    the partial branch).  Continuation stops early when the tracked root
    approaches another zero within the collision threshold - the candidate
    exceptional point is recorded on the branch.
    """
    alpha0, mu0 = seed
    lo, hi = min(alpha_range), max(alpha_range)
    if not (lo <= alpha0 <= hi):
        raise ValueError("seed alpha outside the continuation range")
    if not (step > 0):
        raise ValueError("step must be positive")
    got = _newton_root(p, alpha0, mu0)
    if got is None or abs(got[0] - mu0) > 0.05 * (1.0 + abs(mu0)):
        raise ValueError("seed does not satisfy the secular equation")
    mu0 = got[0]

    branch = EigenBranch(label=label)
    down = _march(p, alpha0, mu0, lo, -step)
    up = _march(p, alpha0, mu0, hi, +step)
    # merge: descending part reversed (without duplicating the seed), then ascending
    branch.samples = list(reversed(down.samples[1:])) + up.samples
    branch.collision = up.collision or down.collision
    branch.label = label
    if up.stalled or down.stalled:
        raise ContinuationStallError("continuation stalled before the range end",
                                     branch=branch)
    return branch


@dataclass
class _March:
    samples: list[BranchSample]
    collision: CollisionInfo | None = None
    stalled: bool = False


def _march(p: PotentialSpec, alpha0: float, mu0: complex, alpha_end: float,
           step: float) -> _March:
    val0 = secular_eval(p, alpha0, mu0)
    out = _March(samples=[BranchSample(alpha0, mu0, val0.residual, 0.0)])
    if alpha0 == alpha_end or step == 0:
        return out
    direction = math.copysign(1.0, alpha_end - alpha0)
    h = abs(step) * direction
    alpha_prev, mu_prev = alpha0, mu0
    slope = None
    min_h = abs(step) / 2 ** 10
    while (alpha_end - alpha_prev) * direction > 1e-14 * max(1.0, abs(alpha_end)):
        h = direction * min(abs(h), abs(alpha_end - alpha_prev))
        alpha_new = alpha_prev + h
        mu_pred = mu_prev + (slope * h if slope is not None else 0.0)
        got = _newton_root(p, alpha_new, mu_pred, step_cap=10.0 * abs(h) + 1.0)
        if got is None:
            if abs(h) <= min_h:
                out.stalled = True
                return out
            h *= 0.5
            continue
        mu_new, res = got
        val = secular_eval(p, alpha_new, mu_new)
        dist = _nearest_root_distance(val)
        out.samples.append(BranchSample(alpha_new, mu_new, res, abs(h)))
        if dist < COLLISION_THRESHOLD:
            out.collision = CollisionInfo(alpha_new, mu_new, dist)
            return out
        slope = (mu_new - mu_prev) / h
        alpha_prev, mu_prev = alpha_new, mu_new
        h = direction * abs(step)
    return out


def label_branches_at_zero(p: PotentialSpec, alpha_max: float, step: float,
                           box: ComplexBox, max_count: int = 64) -> list[EigenBranch]:
    """Find eigenvalues at alpha = 0, label by ascending real part, continue to alpha_max.

    Branch labels are assigned at the reference alpha = 0 and preserved by
    continuation; branches that hit a collision carry it as metadata.
    """
    mus = find_eigenvalues(p, 0.0, box, max_count=max_count)
    branches = []
    for n, mu in enumerate(mus):
        try:
            br = continue_branch(p, (0.0, mu), (0.0, alpha_max), step, label=n)
        except ContinuationStallError as exc:
            br = exc.branch
        branches.append(br)
    return branches


@dataclass(frozen=True)
class ExceptionalPoint:
    """A real double root of the sweep secular function.

    ``theta`` is the potential-family parameter, ``mu`` the coalescence
    energy; residuals are |F| and |dF/dmu| at the solution (actual values,
    overflow-guard factor included).
    """

    theta: float
    mu: complex
    branch_labels: tuple[int, int] | None
    residual_f: float
    residual_df: float


def _sweep_value(family: Callable[[float], PotentialSpec], coupling,
                 mu: float, theta: float):
    """Sweep function u(mu, theta) = F(mu; alpha(mu); p(theta)) and du/dmu.

    ``coupling`` is either a fixed real alpha or the string "dispersion" for
    alpha = sqrt(mu) (the perfect-transmission constraint).
    """
    p = family(theta)
    if coupling == "dispersion":
        if mu <= 0:
            raise ValueError("dispersion coupling requires mu > 0")
        alpha = math.sqrt(mu)
        dalpha = 0.5 / alpha
    else:
        alpha = float(coupling)
        dalpha = 0.0
    val = secular_eval(p, alpha, mu)
    u = val.f
    du = val.f_mu + val.f_alpha * dalpha
    if dalpha:
        d2u = (val.f_mumu + 2.0 * val.f_mualpha * dalpha
               + val.f_alphaalpha * dalpha * dalpha
               + val.f_alpha * (-0.25 * mu ** -1.5))
    else:
        d2u = val.f_mumu
    return u, du, d2u, val


def locate_exceptional_point(family: Callable[[float], PotentialSpec],
                             coupling, bracket: tuple[float, float],
                             mu_guess: float, mu_window: float | None = None,
                             branch_labels: tuple[int, int] | None = None
                             ) -> ExceptionalPoint:
    """Locate a real double root of the sweep secular function.

    Solves u(mu, theta) = 0 and du/dmu = 0 by two-dimensional Newton in
    (mu, theta); the starting point comes from bisecting the bracket on the
    local real-root count (two roots on one side of the event, none on the
    other).  Even potentials make u real on the real mu axis, which is what
    the Newton iteration relies on.
    """
    th_lo, th_hi = bracket
    if mu_window is None:
        mu_window = max(0.15 * abs(mu_guess), 10.0)
    window = (mu_guess - mu_window, mu_guess + mu_window)

    def roots_in_window(theta: float) -> list[float]:
        return _real_roots_window(family(theta), coupling, window)

    n_lo, n_hi = len(roots_in_window(th_lo)), len(roots_in_window(th_hi))
    if (n_lo >= 2) == (n_hi >= 2):
        raise ValueError(
            f"no real-root parity change across the bracket "
            f"(counts {n_lo} and {n_hi} in the mu window {window})"
        )
    # bisect to a theta where the pair is nearly degenerate
    lo, hi = (th_lo, th_hi) if n_lo >= 2 else (th_hi, th_lo)
    pair = roots_in_window(lo)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        r = roots_in_window(mid)
        if len(r) >= 2:
            lo, pair = mid, r
        else:
            hi = mid
        if abs(hi - lo) < 1e-6 * max(1.0, abs(th_lo), abs(th_hi)):
            break
    pair = sorted(pair, key=lambda m: abs(m - mu_guess))[:2]
    mu = 0.5 * (pair[0] + pair[1]) if len(pair) >= 2 else pair[0]
    theta = lo

    trace = []
    dtheta_fd = 1e-6 * max(1.0, abs(th_hi - th_lo))
    converged = False
    for _ in range(NEWTON_MAXIT):
        u, du, d2u, val = _sweep_value(family, coupling, mu, theta)
        ur, dur = u.real, du.real
        up, dup, _, _ = _sweep_value(family, coupling, mu, theta + dtheta_fd)
        um, dum, _, _ = _sweep_value(family, coupling, mu, theta - dtheta_fd)
        u_th = (up.real - um.real) / (2.0 * dtheta_fd)
        du_th = (dup.real - dum.real) / (2.0 * dtheta_fd)
        jac = np.array([[dur, u_th], [d2u.real, du_th]])
        rhs = -np.array([ur, dur])
        try:
            delta = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError as exc:
            raise NoExceptionalPointError("singular Jacobian in the double-root Newton",
                                          trace=trace) from exc
        mu += float(delta[0])
        theta += float(delta[1])
        trace.append((mu, theta, abs(ur), abs(dur)))
        if not (np.isfinite(mu) and np.isfinite(theta)):
            raise NoExceptionalPointError("double-root Newton diverged", trace=trace)
        if abs(delta[0]) <= 1e-13 * (1.0 + abs(mu)) and \
           abs(delta[1]) <= 1e-13 * (1.0 + abs(theta)):
            converged = True
            break
    if not converged:
        raise NoExceptionalPointError("double-root Newton did not converge", trace=trace)
    u, du, _, val = _sweep_value(family, coupling, mu, theta)
    guard = math.exp(val.log_scale)
    return ExceptionalPoint(theta=theta, mu=complex(mu),
                            branch_labels=branch_labels,
                            residual_f=abs(u) * guard,
                            residual_df=abs(du) * guard)


def _real_roots_window(p: PotentialSpec, coupling, window: tuple[float, float],
                       n_grid: int = 2000) -> list[float]:
    """Real roots of the sweep function on a mu window (sign-change bracketing)."""
    lo = max(window[0], 1e-9) if coupling == "dispersion" else window[0]
    mu = np.linspace(lo, window[1], n_grid)
    if coupling == "dispersion":
        alpha = np.sqrt(mu)
        m11, m12, m21, m22, _, _ = transfer_entries_grid(p, mu.astype(complex))
        vals = np.real(m21 + mu * m12)
    else:
        f, _ = secular_grid(p, float(coupling), mu.astype(complex))
        vals = f.real
    roots = []
    sign = np.sign(vals)
    for i in np.where(sign[:-1] * sign[1:] < 0)[0]:
        a, b = mu[i], mu[i + 1]
        fa = vals[i]
        for _ in range(60):
            m = 0.5 * (a + b)
            if coupling == "dispersion":
                fm = _dispersion_value(p, m)
            else:
                fm = secular(p, float(coupling), m).real
            if fa * fm <= 0:
                b = m
            else:
                a, fa = m, fm
        roots.append(0.5 * (a + b))
    return roots


def _dispersion_value(p: PotentialSpec, mu: float) -> float:
    """Secular value on the dispersion parabola (alpha = sqrt(mu)), real part."""
    val = secular_eval(p, math.sqrt(mu), mu)
    return val.f.real
