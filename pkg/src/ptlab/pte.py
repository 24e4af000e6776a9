"""Perfect-transmission energies (PTEs) and their tracking along deformations.

A PTE is an energy k^2 > 0 with vanishing reflection.  Matching the
perfect-transmission scattering solution at the support boundary makes k^2 an
eigenvalue of the Robin problem with alpha = k, so PTEs are exactly the real
roots of the dispersion-restricted secular function

    h(k) = F(k^2; alpha = k),

which is real-valued for even potentials.  The direct scan of h is the
primary route; intersecting continued eigenvalue branches with the parabola
mu = alpha^2 gives the redundant second route, and every accepted root is
cross-verified against the scattering amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import BranchResolutionError, RootVerificationError
from .potential import PotentialSpec
from .spectrum import EigenBranch, secular_eval, _newton_root
from .transfer import scattering_amplitudes, transfer_entries_grid

#: default scan resolution in k
DEFAULT_SCAN_STEP = 0.01
#: |R| threshold for the independent scattering verification
VERIFY_TOL = 1e-8
#: relative |h| threshold below which the whole scan counts as all-pass
ALL_PASS_TOL = 1e-10
#: matching gate for tracking, energy units per unit theta step
MATCH_GATE_RATE = 5.0


@dataclass(frozen=True)
class PTERecord:
    """One verified perfect-transmission energy."""

    k_star: float
    mu_star: float
    branch: int | None
    residual_secular: float
    residual_reflection: float
    multiplicity: int = 1


@dataclass
class PTEScanResult:
    """Roots of the dispersion-restricted secular function on a k window.

    ``all_pass`` marks the degenerate reflectionless case (h identically
    zero, e.g. the free potential), where every positive energy transmits
    perfectly and no discrete root list exists.
    """

    records: list[PTERecord]
    all_pass: bool = False

    def __iter__(self) -> Iterator[PTERecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def dispersion_eval(p: PotentialSpec, k: float):
    """h(k), h'(k), h''(k) and the residual scale at wavenumber k.

    Values are real parts (exact for even potentials); the scale is the
    magnitude of the terms that cancel at a root.
    """
    mu = k * k
    val = secular_eval(p, k, mu)
    h = val.f
    dh = 2.0 * k * val.f_mu + val.f_alpha
    d2h = (2.0 * val.f_mu + 4.0 * mu * val.f_mumu
           + 4.0 * k * val.f_mualpha + val.f_alphaalpha)
    return h.real, dh.real, d2h.real, val.scale, val.log_scale


def dispersion_grid(p: PotentialSpec, k: np.ndarray):
    """Vectorized (h, scale) on a k grid; signs are exact despite scaling."""
    k = np.asarray(k, dtype=float)
    mu = (k * k).astype(complex)
    m11, m12, m21, m22, _, peak = transfer_entries_grid(p, mu)
    f = m21 + k * k * m12 + 1j * k * (m22 - m11)
    scale = (1.0 + k) ** 2 * peak
    return f.real, np.maximum(scale, 1e-300)


def _verified_record(p: PotentialSpec, k: float, branch: int | None,
                     multiplicity: int = 1) -> PTERecord:
    h, _, _, _, log_scale = dispersion_eval(p, k)
    amp = scattering_amplitudes(p, k)
    r_abs = abs(amp.R)
    if r_abs > VERIFY_TOL:
        raise RootVerificationError(
            f"claimed perfect-transmission root k={k} has |R|={r_abs:.3e}; "
            f"the secular scan and the scattering solver disagree"
        )
    return PTERecord(k_star=float(k), mu_star=float(k * k), branch=branch,
                     residual_secular=abs(h) * math.exp(log_scale),
                     residual_reflection=r_abs, multiplicity=multiplicity)


def _refine_bracket(p: PotentialSpec, a: float, b: float, ha: float, hb: float) -> float:
    """Safeguarded Newton for a simple root of h inside [a, b]."""
    k = 0.5 * (a + b)
    for _ in range(80):
        h, dh, _, scale, _ = dispersion_eval(p, k)
        if h == 0.0:
            return k
        if ha * h < 0:
            b, hb = k, h
        else:
            a, ha = k, h
        k_new = k - h / dh if dh != 0 else 0.5 * (a + b)
        if not (a < k_new < b):
            k_new = 0.5 * (a + b)
        if abs(k_new - k) <= 1e-15 * (1.0 + abs(k)):
            return k_new
        k = k_new
    return k


def find_ptes(p: PotentialSpec, k_range: tuple[float, float],
              scan_step: float = DEFAULT_SCAN_STEP) -> PTEScanResult:
    """Perfect-transmission energies on a k window by direct root scan.

    Sign changes of h on the grid bracket simple roots; local minima of |h|
    that dip below sqrt of the root tolerance are probed for tangential
    (double) roots via Newton on h'.  The degenerate all-pass case is
    detected and reported instead of a root list.  Every root is verified
    against the scattering amplitudes; a failure there raises
    RootVerificationError since it can only indicate a solver bug.
    """
    k_lo, k_hi = k_range
    if not (0.0 < k_lo < k_hi):
        raise ValueError(f"k_range must satisfy 0 < k_lo < k_hi, got {k_range}")
    if not (scan_step > 0.0):
        raise ValueError(f"scan_step must be positive, got {scan_step}")

    n = max(2, int(math.ceil((k_hi - k_lo) / scan_step)) + 1)
    ks = np.linspace(k_lo, k_hi, n)
    h, scale = dispersion_grid(p, ks)

    if np.all(np.abs(h) <= ALL_PASS_TOL * scale):
        return PTEScanResult(records=[], all_pass=True)

    records: list[PTERecord] = []
    sign = np.sign(h)
    crossing = np.where(sign[:-1] * sign[1:] < 0)[0]
    for i in crossing:
        k_root = _refine_bracket(p, float(ks[i]), float(ks[i + 1]),
                                 float(h[i]), float(h[i + 1]))
        records.append(_verified_record(p, k_root, branch=None))

    # tangential (double) roots: |h| minima well below the surrounding scale
    probe_tol = math.sqrt(1e-12)
    habs = np.abs(h) / scale
    for i in range(1, n - 1):
        if habs[i] < habs[i - 1] and habs[i] <= habs[i + 1] and habs[i] < probe_tol:
            if sign[i - 1] * sign[i + 1] < 0:
                continue  # already caught by a bracket
            k_crit = _refine_critical(p, float(ks[i - 1]), float(ks[i + 1]), float(ks[i]))
            if k_crit is None:
                continue
            hc, _, _, sc, _ = dispersion_eval(p, k_crit)
            if abs(hc) <= 1e-10 * sc:
                if all(abs(k_crit - r.k_star) > 1e-6 * (1.0 + k_crit) for r in records):
                    records.append(_verified_record(p, k_crit, branch=None,
                                                    multiplicity=2))

    records.sort(key=lambda r: r.mu_star)
    return PTEScanResult(records=records)


def _refine_critical(p: PotentialSpec, a: float, b: float, k0: float) -> float | None:
    """Newton on h'(k) = 0 within [a, b] (candidate tangency)."""
    k = k0
    for _ in range(60):
        _, dh, d2h, _, _ = dispersion_eval(p, k)
        if d2h == 0:
            return None
        step = -dh / d2h
        k_new = k + step
        if not (a <= k_new <= b):
            return None
        if abs(step) <= 1e-15 * (1.0 + abs(k)):
            return k_new
        k = k_new
    return None


def ptes_from_branches(p: PotentialSpec, branches: Sequence[EigenBranch],
                       im_tol: float = 1e-8) -> PTEScanResult:
    """PTEs as intersections of eigenvalue branches with the parabola mu = alpha^2.

    Redundant second route to find_ptes: for each branch the sign changes of
    g(alpha) = Re mu(alpha) - alpha^2 over the real-valued samples are
    bracketed and refined against the live secular function.  Complex
    stretches of a branch are skipped (no perfect transmission there).  A
    branch lying identically on the parabola flags the all-pass case.  Raises
    BranchResolutionError when the sampling is too coarse to trust brackets.
    """
    records: list[PTERecord] = []
    all_pass = False
    for br in branches:
        samples = [s for s in br.samples
                   if abs(s.mu.imag) <= im_tol * (1.0 + abs(s.mu))]
        if len(samples) < 2:
            continue
        alphas = np.array([s.alpha for s in samples])
        mus = np.array([s.mu.real for s in samples])
        g = mus - alphas ** 2
        gscale = 1.0 + np.abs(mus)
        if np.all(np.abs(g) <= 1e-9 * gscale):
            all_pass = True
            continue
        _check_bracket_resolution(alphas, g, br.label)
        for i in np.where(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
            k_root = _refine_on_branch(p, samples[i], samples[i + 1])
            if k_root is not None and k_root > 0:
                records.append(_verified_record(p, k_root, branch=br.label))
    records.sort(key=lambda r: r.mu_star)
    return PTEScanResult(records=records, all_pass=all_pass)


def _check_bracket_resolution(alphas: np.ndarray, g: np.ndarray, label: int) -> None:
    """Reject sampling that may hide a root pair inside one step.

    A parabola through three consecutive samples whose interior vertex
    overshoots zero with both endpoints on the same side indicates an
    unbracketed double crossing.
    """
    for i in range(1, len(g) - 1):
        if np.sign(g[i - 1]) == np.sign(g[i + 1]) and np.sign(g[i - 1]) != 0:
            x0, x1, x2 = alphas[i - 1:i + 2]
            y0, y1, y2 = g[i - 1:i + 2]
            d10 = (y1 - y0) / (x1 - x0)
            d21 = (y2 - y1) / (x2 - x1)
            curv = (d21 - d10) / (x2 - x0)
            if curv == 0:
                continue
            x_v = 0.5 * (x0 + x1 - d10 / curv)
            if x0 < x_v < x2:
                y_v = y0 + d10 * (x_v - x0) + curv * (x_v - x0) * (x_v - x1)
                if np.sign(y_v) != np.sign(y0) and np.sign(y_v) != 0 \
                        and min(abs(y0), abs(y2)) > 10.0 * abs(y_v):
                    raise BranchResolutionError(
                        f"branch {label}: samples near alpha={x_v:.6g} may hide a "
                        f"root pair; resample with a finer alpha step"
                    )


def _refine_on_branch(p: PotentialSpec, s_lo, s_hi) -> float | None:
    """Bisection on g(alpha) = mu(alpha) - alpha^2 against the live secular function."""
    a_lo, mu_lo = s_lo.alpha, s_lo.mu
    a_hi, mu_hi = s_hi.alpha, s_hi.mu
    g_lo = mu_lo.real - a_lo ** 2
    for _ in range(80):
        a_mid = 0.5 * (a_lo + a_hi)
        t = (a_mid - a_lo) / (a_hi - a_lo) if a_hi != a_lo else 0.5
        got = _newton_root(p, a_mid, (1 - t) * mu_lo + t * mu_hi)
        if got is None:
            return None
        mu_mid = got[0]
        g_mid = mu_mid.real - a_mid ** 2
        if g_lo * g_mid <= 0:
            a_hi, mu_hi = a_mid, mu_mid
        else:
            a_lo, mu_lo, g_lo = a_mid, mu_mid, g_mid
        if abs(a_hi - a_lo) <= 1e-14 * (1.0 + abs(a_mid)):
            break
    return 0.5 * (a_lo + a_hi)


@dataclass(frozen=True)
class PTEEvent:
    """A change in the PTE multiset along a parameter sweep.

    ``count_change`` is the net effect on the multiset size (-2 for a merged
    pair's disappearance, +2 for a pair birth, +-1 for boundary crossings or
    lone changes, 0 for the merge marker itself); ``step`` is the index of
    the grid transition the event was detected on.
    """

    theta: float
    mu_star: float
    kind: str  # merge | disappear | appear | exit
    count_change: int = 0
    step: int = -1


@dataclass
class PTETrack:
    """PTE sets along a potential deformation, with merge/loss events."""

    parameter: str
    thetas: list[float]
    records: list[list[PTERecord]]
    events: list[PTEEvent] = field(default_factory=list)
    boundary_exits: list[PTEEvent] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def track_ptes(family: Callable[[float], PotentialSpec], theta_grid: Sequence[float],
               k_range: tuple[float, float], scan_step: float = DEFAULT_SCAN_STEP,
               parameter: str = "theta") -> PTETrack:
    """Track the PTE multiset of family(theta) across a monotone theta grid.

    Records at adjacent grid points are matched by nearest mu* within a gate
    proportional to the step; a vanished close pair is refined by bisection
    in theta and reported as merge-then-disappear events, a created pair as
    an appear event, and single records leaving through the k window edges
    as boundary exits.
    """
    thetas = [float(t) for t in theta_grid]
    if len(thetas) == 0:
        raise ValueError("theta_grid is empty")
    diffs = np.diff(thetas)
    if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("theta_grid must be strictly monotone")

    per_theta = [find_ptes(family(t), k_range, scan_step) for t in thetas]
    track = PTETrack(parameter=parameter, thetas=thetas,
                     records=[list(res.records) for res in per_theta])

    for i in range(len(thetas) - 1):
        _match_step(family, track, i, k_range, scan_step)
    return track


def _match_step(family, track: PTETrack, i: int, k_range, scan_step) -> None:
    th0, th1 = track.thetas[i], track.thetas[i + 1]
    prev = track.records[i]
    nxt = track.records[i + 1]
    gate = MATCH_GATE_RATE * abs(th1 - th0) + 1e-9

    # greedy nearest assignment inside the gate
    cand = sorted(
        ((abs(prev[a].mu_star - nxt[b].mu_star), a, b)
         for a in range(len(prev)) for b in range(len(nxt))),
        key=lambda t: t[0],
    )
    used_a, used_b = set(), set()
    ambiguous = False
    for d, a, b in cand:
        if d > gate:
            break
        if a in used_a or b in used_b:
            if (a in used_a) != (b in used_b):
                ambiguous = True  # an unmatched record lost its nearest partner
            continue
        used_a.add(a)
        used_b.add(b)
    if ambiguous:
        track.warnings.append(
            f"gating ambiguity between theta={th0} and theta={th1}; "
            f"nearest-match order applied"
        )
    gone = [prev[a] for a in range(len(prev)) if a not in used_a]
    born = [nxt[b] for b in range(len(nxt)) if b not in used_b]

    k_lo, k_hi = k_range
    merge_gate = 30.0 * abs(th1 - th0) + 5.0

    def near_edge(rec: PTERecord) -> bool:
        margin = max(2.0 * scan_step, gate / (2.0 * rec.k_star))
        return rec.k_star - k_lo <= margin or k_hi - rec.k_star <= margin

    gone.sort(key=lambda r: r.mu_star)
    while len(gone) >= 2 and gone[1].mu_star - gone[0].mu_star <= merge_gate:
        r1, r2 = gone.pop(0), gone.pop(0)
        theta_ev, mu_ev = _refine_merge(family, th0, th1, r1, r2, scan_step)
        track.events.append(PTEEvent(theta_ev, mu_ev, "merge", 0, i))
        track.events.append(PTEEvent(theta_ev, mu_ev, "disappear", -2, i))
    for r in gone:
        if near_edge(r):
            track.boundary_exits.append(PTEEvent(th1, r.mu_star, "exit", -1, i))
        else:
            track.events.append(PTEEvent(th1, r.mu_star, "disappear", -1, i))

    born.sort(key=lambda r: r.mu_star)
    while len(born) >= 2 and born[1].mu_star - born[0].mu_star <= merge_gate:
        r1, r2 = born.pop(0), born.pop(0)
        track.events.append(
            PTEEvent(th1, 0.5 * (r1.mu_star + r2.mu_star), "appear", 2, i))
    for r in born:
        if near_edge(r):
            track.boundary_exits.append(PTEEvent(th1, r.mu_star, "exit", 1, i))
        else:
            track.events.append(PTEEvent(th1, r.mu_star, "appear", 1, i))


def _refine_merge(family, th0: float, th1: float, r1: PTERecord, r2: PTERecord,
                  scan_step: float) -> tuple[float, float]:
    """Bisect theta between the last two-root sample and the first without."""
    margin = 3.0 * abs(r2.mu_star - r1.mu_star) + 10.0
    k_lo = math.sqrt(max(r1.mu_star - margin, 1e-6))
    k_hi = math.sqrt(r2.mu_star + margin)
    lo, hi = th0, th1
    pair = (r1.mu_star, r2.mu_star)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        res = find_ptes(family(mid), (k_lo, k_hi), scan_step)
        if len(res.records) >= 2:
            lo = mid
            pair = (res.records[0].mu_star, res.records[-1].mu_star)
        else:
            hi = mid
        if abs(hi - lo) <= 1e-3 * (abs(th1 - th0) + 1e-12):
            break
    return 0.5 * (lo + hi), 0.5 * (pair[0] + pair[1])
