"""Compactly supported piecewise-constant potentials on [-a, a].

Energies and lengths are in natural units with m = 1/2 and hbar = 1, so the
stationary equation reads -psi'' + v(x) psi = mu psi and no physical constants
appear anywhere else in the library.

Two constructors cover the families used throughout: a square well of signed
depth, and even multi-step potentials built from band widths ``eps`` and
integrated band strengths ``beta`` (band height = beta/eps, bands stacked
outward from the origin and mirrored through it).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import GeometryError

#: tolerance used when validating that segments abut exactly
_GEOM_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """One constant band of the potential between x_lo and x_hi."""

    x_lo: float
    x_hi: float
    value: float

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo


@dataclass(frozen=True)
class PotentialSpec:
    """A validated piecewise-constant potential supported in [-a, a].

    ``segments`` partition [-a, a] exactly (first starts at -a, last ends at
    +a, consecutive segments abut); v is identically zero outside.  ``even``
    records whether v(-x) = v(x); constructors produce mirrored data exactly,
    so evenness is checked by exact equality.

    Instances are immutable and safe to share between threads.
    """

    half_width: float
    segments: tuple[Segment, ...]
    even: bool

    def __post_init__(self):
        a = self.half_width
        if not (a > 0.0):
            raise GeometryError(f"half_width must be positive, got {a}")
        if not self.segments:
            raise GeometryError("potential needs at least one segment")
        if abs(self.segments[0].x_lo + a) > _GEOM_TOL * max(1.0, a):
            raise GeometryError("first segment must start at -a")
        if abs(self.segments[-1].x_hi - a) > _GEOM_TOL * max(1.0, a):
            raise GeometryError("last segment must end at +a")
        for i, seg in enumerate(self.segments):
            if not seg.width > 0.0:
                raise GeometryError(f"segment {i} has nonpositive width {seg.width}")
            if i and abs(seg.x_lo - self.segments[i - 1].x_hi) > _GEOM_TOL * max(1.0, a):
                raise GeometryError(
                    f"segments {i - 1} and {i} do not abut "
                    f"({self.segments[i - 1].x_hi} vs {seg.x_lo})"
                )
        if self.even != _is_even(self.segments):
            raise GeometryError("even flag does not match the segment data")

    def value_at(self, x: float) -> float:
        """Potential value at x; zero outside [-a, a].

        Interior band boundaries resolve to the segment on their left, and the
        right endpoint +a to the last segment.  The convention never affects
        integrals or transfer matrices.
        """
        if x < -self.half_width or x > self.half_width:
            return 0.0
        for seg in self.segments:
            if x <= seg.x_hi:
                return seg.value
        return self.segments[-1].value

    @property
    def min_value(self) -> float:
        return min(seg.value for seg in self.segments)

    @property
    def max_value(self) -> float:
        return max(seg.value for seg in self.segments)


def _is_even(segments: Sequence[Segment]) -> bool:
    """Exact mirror-symmetry check of the segment data."""
    n = len(segments)
    for i in range(n):
        j = n - 1 - i
        a, b = segments[i], segments[j]
        if a.x_lo != -b.x_hi or a.x_hi != -b.x_lo or a.value != b.value:
            return False
    return True


@dataclass(frozen=True)
class StepFamilySpec:
    """Band parametrization of an even multi-step potential.

    ``eps[j]`` is the width of the j-th band of |x| counted outward from the
    origin and ``beta[j]`` its integrated strength per half-axis, so the band
    height is beta[j]/eps[j].  Widths must sum to at most ``half_width``; any
    remainder next to the endpoints is filled with zero potential.
    """

    half_width: float
    eps: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        if len(self.eps) != len(self.beta):
            raise GeometryError(
                f"eps and beta must have equal length ({len(self.eps)} vs {len(self.beta)})"
            )
        if not self.eps:
            raise GeometryError("need at least one band")


def make_square_well(a: float, depth: float) -> PotentialSpec:
    """Square well: a single segment of value -depth on [-a, a].

    ``depth`` is signed: positive depth gives an attractive well, negative a
    barrier.  (Both sign conventions appear in the literature for this model;
    the value stored is always -depth.)
    """
    if not (a > 0.0):
        raise GeometryError(f"half_width must be positive, got {a}")
    return PotentialSpec(a, (Segment(-a, a, -depth),), even=True)


def make_steps(spec: StepFamilySpec) -> PotentialSpec:
    """Even multi-step potential from band widths and strengths.

    Bands are stacked outward from the origin: the j-th band occupies
    x_{j-1} <= |x| <= x_j with x_j the cumulative widths, and carries the
    height beta[j]/eps[j].  A nonzero remainder a - sum(eps) is filled with an
    explicit zero band at the endpoints.  Adjacent equal-value bands are
    merged, so the innermost band always comes out as one segment through the
    origin.
    """
    a = spec.half_width
    if not (a > 0.0):
        raise GeometryError(f"half_width must be positive, got {a}")
    for j, eps in enumerate(spec.eps):
        if eps == 0.0:
            raise GeometryError(f"band {j} has zero width (height beta/eps undefined)")
        if eps < 0.0:
            raise GeometryError(f"band {j} has negative width {eps}")
    total = sum(spec.eps)
    if total > a * (1.0 + 1e-12):
        raise GeometryError(f"band widths sum to {total}, exceeding half_width {a}")

    # right-half bands (lo, hi, value), outward from the origin
    right: list[tuple[float, float, float]] = []
    x = 0.0
    for eps, beta in zip(spec.eps, spec.beta):
        right.append((x, x + eps, beta / eps))
        x += eps
    if x < a:
        gap = a - x
        if gap > _GEOM_TOL * max(1.0, a):
            right.append((x, a, 0.0))
        else:
            # widths sum to a up to roundoff: stretch the last band to +a
            lo, _, val = right[-1]
            right[-1] = (lo, a, val)

    segments = [Segment(-hi, -lo, val) for lo, hi, val in reversed(right)]
    segments += [Segment(lo, hi, val) for lo, hi, val in right]
    return PotentialSpec(a, _merge_equal(segments), even=True)


def add_constant(p: PotentialSpec, v0: float) -> PotentialSpec:
    """Shift every segment value by +v0 (outside [-a, a] the potential stays 0)."""
    shifted = tuple(Segment(s.x_lo, s.x_hi, s.value + v0) for s in p.segments)
    return PotentialSpec(p.half_width, shifted, even=_is_even(shifted))


def value_at(p: PotentialSpec, x: float) -> float:
    """Module-level alias for :meth:`PotentialSpec.value_at`."""
    return p.value_at(x)


def _merge_equal(segments: list[Segment]) -> tuple[Segment, ...]:
    merged: list[Segment] = []
    for seg in segments:
        if merged and merged[-1].value == seg.value:
            merged[-1] = Segment(merged[-1].x_lo, seg.x_hi, seg.value)
        else:
            merged.append(seg)
    return tuple(merged)
