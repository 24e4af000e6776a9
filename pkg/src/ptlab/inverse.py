"""Inverse spectral reconstruction from perfect-transmission measurements.

Shifting the potential by a constant v0 shifts the dispersion parabola, so
the measured v0-dependence kappa(v0) of one perfect-transmission energy
samples the underlying eigenvalue curve: the branch is recovered as

    mu(alpha) = alpha^2 - kappa^{-1}(alpha^2).

kappa is represented by its samples plus monotone piecewise-cubic
interpolation; invertibility requires kappa'(v0) != 0, which the theory
guarantees away from level crossings and tangencies via
kappa' = 2*alpha / (2*alpha - mu'(alpha)).  Only real eigenvalues are
reachable this way: a complex pair announces itself as a lost PTE and the
measurement curve truncates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import SeedError, TangencyError
from .potential import PotentialSpec, add_constant
from .pte import dispersion_eval, find_ptes, _verified_record, MATCH_GATE_RATE
from .spectrum import (
    COLLISION_THRESHOLD,
    BranchSample,
    EigenBranch,
    _nearest_root_distance,
    _newton_root,
    branch_derivative,
    secular_eval,
)

#: relative tolerance on 2*alpha - mu'(alpha) before declaring a tangency
TANGENCY_TOL = 1e-8


@dataclass(frozen=True)
class KappaSample:
    """One simulated measurement: the selected PTE of the potential shifted by v0."""

    v0: float
    kappa: float
    k_star: float
    residual_reflection: float


@dataclass
class MeasurementCurve:
    """Sampled kappa(v0) for one tracked perfect-transmission energy.

    ``min_slope`` is the smallest finite-difference slope observed;
    ``monotone`` is the invertibility certificate.  A curve that lost its PTE
    mid-sweep (merge event crossed) is truncated and carries the location.
    """

    branch: int | None
    samples: list[KappaSample] = field(default_factory=list)
    min_slope: float = math.inf
    monotone: bool = True
    truncated_at: float | None = None
    truncation_reason: str | None = None

    @property
    def v0s(self) -> np.ndarray:
        return np.array([s.v0 for s in self.samples])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([s.kappa for s in self.samples])


@dataclass(frozen=True)
class BranchSelector:
    """Rule choosing which PTE a measurement follows.

    ``seed_window`` is an energy window that must contain exactly one PTE of
    the shifted potential at the first grid point; afterwards the nearest
    energy within the continuation gate is followed.
    """

    seed_window: tuple[float, float]
    label: int | None = None


def simulate_kappa(p: PotentialSpec, selector: BranchSelector,
                   v0_grid: Sequence[float]) -> MeasurementCurve:
    """Simulate PTE measurements of p + v0 over a strictly increasing v0 grid.

    Each sample is an independently verified perfect-transmission root of
    the shifted potential; continuity across the grid uses nearest-energy
    matching seeded by the selector window.  When the tracked PTE disappears
    (two energies merged and went complex) the curve is returned truncated
    at that v0 with the reason attached.
    """
    v0s = [float(v) for v in v0_grid]
    if len(v0s) < 2:
        raise ValueError("v0_grid needs at least two points")
    if not all(b > a for a, b in zip(v0s, v0s[1:])):
        raise ValueError("v0_grid must be strictly increasing")

    curve = MeasurementCurve(branch=selector.label)
    lo, hi = selector.seed_window
    if not (hi > lo):
        raise SeedError(f"empty seed window {selector.seed_window}")
    first = add_constant(p, v0s[0])
    scan = find_ptes(first, (math.sqrt(max(lo, 1e-12)), math.sqrt(hi)))
    if scan.all_pass:
        raise SeedError("shifted potential is reflectionless at the first grid "
                        "point; kappa is undefined there")
    if len(scan.records) != 1:
        raise SeedError(
            f"seed window {selector.seed_window} holds {len(scan.records)} "
            f"perfect-transmission energies, need exactly one"
        )
    rec = scan.records[0]
    curve.samples.append(KappaSample(v0s[0], rec.mu_star, rec.k_star,
                                     rec.residual_reflection))

    kappa_prev = rec.mu_star
    slope = 1.0  # exact for the square well; good first guess in general
    for i in range(1, len(v0s)):
        dv = v0s[i] - v0s[i - 1]
        predicted = kappa_prev + slope * dv
        gate = MATCH_GATE_RATE * dv + 1e-9
        shifted = add_constant(p, v0s[i])
        rec = _locate_near(shifted, predicted, gate)
        if rec is None:
            curve.truncated_at = v0s[i]
            curve.truncation_reason = (
                f"tracked perfect-transmission energy lost between "
                f"v0={v0s[i - 1]} and v0={v0s[i]} (merge event crossed)"
            )
            break
        curve.samples.append(KappaSample(v0s[i], rec.mu_star, rec.k_star,
                                         rec.residual_reflection))
        slope = (rec.mu_star - kappa_prev) / dv
        curve.min_slope = min(curve.min_slope, slope)
        kappa_prev = rec.mu_star
    curve.monotone = curve.min_slope > 0.0 and len(curve.samples) >= 2
    return curve


def _locate_near(p: PotentialSpec, mu_guess: float, gate: float):
    """The PTE of p nearest to mu_guess within the gate, or None."""
    k_guess = math.sqrt(max(mu_guess, 1e-12))
    k = k_guess
    for _ in range(50):
        h, dh, _, scale, _ = dispersion_eval(p, k)
        if dh == 0:
            break
        step = -h / dh
        k += step
        if not np.isfinite(k) or k <= 0:
            break
        if abs(step) <= 1e-15 * (1.0 + abs(k)):
            if abs(k * k - mu_guess) <= gate and abs(h) <= 1e-10 * scale:
                return _verified_record(p, k, branch=None)
            break
    # Newton drifted or lost the root: fall back to a bracket scan of the gate window
    lo = math.sqrt(max(mu_guess - gate, 1e-12))
    hi = math.sqrt(mu_guess + gate)
    if hi <= lo:
        return None
    scan = find_ptes(p, (lo, hi), scan_step=min(0.005, (hi - lo) / 8))
    best = None
    for rec in scan.records:
        if abs(rec.mu_star - mu_guess) <= gate:
            if best is None or abs(rec.mu_star - mu_guess) < abs(best.mu_star - mu_guess):
                best = rec
    return best


@dataclass
class ReconstructionResult:
    """A reconstructed eigenvalue branch plus the grid points that fell outside."""

    branch: EigenBranch
    skipped: list[tuple[float, str]] = field(default_factory=list)


def reconstruct_branch(curve: MeasurementCurve, alpha_grid: Sequence[float]
                       ) -> ReconstructionResult:
    """Recover mu(alpha) = alpha^2 - kappa^{-1}(alpha^2) from a measured curve.

    The monotonicity certificate is required (kappa must be invertible);
    inversion solves kappa(v0) = alpha^2 on the monotone piecewise-cubic
    interpolant of the samples.  Grid points with alpha^2 outside the sampled
    kappa range are skipped and reported.
    """
    if not curve.monotone:
        raise ValueError(
            "measurement curve is not certified monotone; kappa must be "
            "invertible (kappa'(v0) != 0) for the reconstruction"
        )
    v0s, kappas = curve.v0s, curve.kappas
    interp = PchipInterpolator(v0s, kappas, extrapolate=False)
    k_min, k_max = float(kappas[0]), float(kappas[-1])

    result = ReconstructionResult(
        branch=EigenBranch(label=curve.branch if curve.branch is not None else 0,
                           source="reconstructed"))
    for alpha in alpha_grid:
        alpha = float(alpha)
        target = alpha * alpha
        if not (k_min <= target <= k_max):
            result.skipped.append(
                (alpha, f"alpha^2 = {target:g} outside the sampled kappa range "
                        f"[{k_min:g}, {k_max:g}]"))
            continue
        roots = interp.solve(target, extrapolate=False)
        if len(roots) == 0:
            result.skipped.append((alpha, f"no v0 with kappa(v0) = {target:g}"))
            continue
        v0 = float(roots[0])
        result.branch.samples.append(
            BranchSample(alpha=alpha, mu=complex(target - v0), residual=math.nan,
                         step=math.nan))
    return result


@dataclass(frozen=True)
class DerivativeCheck:
    """Both sides of the measured-slope identity and their gap."""

    lhs: float
    rhs: float
    gap: float
    alpha: float
    kappa: float


def kappa_derivative_check(p: PotentialSpec, branch: EigenBranch, v0: float,
                           fd_step: float = 1e-3) -> DerivativeCheck:
    """Check kappa'(v0) = 2*alpha/(2*alpha - mu'(alpha)) at one shift value.

    The left side is the central-difference slope of the simulated
    measurement; the right side evaluates the branch derivative through the
    implicit-function theorem at the matching alpha, i.e. alpha^2 =
    kappa(v0).  A vanishing denominator means the level runs locally
    parallel to the dispersion parabola (reflectionless or no-intersection
    setting) and raises TangencyError.
    """
    alpha, mu = _branch_parabola_intersection(p, branch, v0)
    kappa0 = alpha * alpha
    if _nearest_root_distance(secular_eval(p, alpha, mu)) < COLLISION_THRESHOLD:
        raise ValueError(
            f"another energy level crosses at alpha = {alpha:.6g}; the branch "
            f"derivative is not defined there (analyticity of mu(alpha) fails "
            f"at crossings)"
        )
    dmu = branch_derivative(p, alpha, mu)
    denom = 2.0 * alpha - dmu.real
    if abs(denom) <= TANGENCY_TOL * (1.0 + 2.0 * abs(alpha)):
        raise TangencyError(
            f"2*alpha - mu'(alpha) = {denom:.3e} at alpha = {alpha:.6g}: the "
            f"level is locally tangent to the dispersion parabola"
        )
    rhs = 2.0 * alpha / denom

    gate = max(1.0, 10.0 * fd_step * max(1.0, abs(rhs)))
    selector = BranchSelector(seed_window=(kappa0 - gate, kappa0 + gate),
                              label=branch.label)
    grid = [v0 - fd_step, v0, v0 + fd_step]
    curve = simulate_kappa(p, selector, grid)
    if len(curve.samples) != 3:
        raise TangencyError(
            f"tracked PTE lost within the difference stencil at v0 = {v0}")
    lhs = (curve.samples[2].kappa - curve.samples[0].kappa) / (2.0 * fd_step)
    return DerivativeCheck(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs),
                           alpha=alpha, kappa=curve.samples[1].kappa)


def _branch_parabola_intersection(p: PotentialSpec, branch: EigenBranch,
                                  v0: float) -> tuple[float, complex]:
    """Solve mu(alpha) + v0 = alpha^2 along a sampled branch.

    Returns the intersection (alpha, mu(alpha)) of the branch with the
    dispersion parabola shifted by v0; this is where the measured PTE of
    p + v0 lives on the unshifted spectrum.
    """
    alphas = branch.alphas
    mus = branch.mus
    real = np.abs(mus.imag) <= 1e-8 * (1.0 + np.abs(mus))
    g = mus.real + v0 - alphas ** 2
    ok = np.where(real[:-1] & real[1:] & (np.sign(g[:-1]) * np.sign(g[1:]) < 0))[0]
    if len(ok) == 0:
        raise ValueError(
            f"branch {branch.label} does not intersect the parabola shifted by "
            f"v0 = {v0} within its real sampled range")
    i = int(ok[0])
    a_lo, a_hi = float(alphas[i]), float(alphas[i + 1])
    mu_lo, mu_hi = complex(mus[i]), complex(mus[i + 1])
    g_lo = mu_lo.real + v0 - a_lo ** 2
    for _ in range(80):
        a_mid = 0.5 * (a_lo + a_hi)
        t = (a_mid - a_lo) / (a_hi - a_lo) if a_hi != a_lo else 0.5
        got = _newton_root(p, a_mid, (1 - t) * mu_lo + t * mu_hi)
        if got is None:
            raise ValueError(f"lost the branch while refining near alpha = {a_mid}")
        mu_mid = got[0]
        g_mid = mu_mid.real + v0 - a_mid ** 2
        if g_lo * g_mid <= 0:
            a_hi, mu_hi = a_mid, mu_mid
        else:
            a_lo, mu_lo, g_lo = a_mid, mu_mid, g_mid
        if abs(a_hi - a_lo) <= 1e-14 * (1.0 + abs(a_mid)):
            break
    return 0.5 * (a_lo + a_hi), mu_mid
