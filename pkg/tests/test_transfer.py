import cmath
import math

import numpy as np
import pytest

from ptlab.potential import PotentialSpec, Segment, StepFamilySpec, make_square_well, make_steps
from ptlab.transfer import (
    ScatteringAmplitudes,
    TransferMatrix,
    scattering_amplitudes,
    scattering_grid,
    segment_propagator,
    total_transfer,
    transmission_curve,
)


def random_step_potential(rng, max_height=30.0, max_a=1.2):
    n = int(rng.integers(1, 5))
    a = float(rng.uniform(0.3, max_a))
    widths = rng.uniform(0.1, 1.0, n)
    widths *= a / widths.sum() * float(rng.uniform(0.6, 1.0))
    betas = rng.uniform(-max_height, max_height, n) * widths
    return make_steps(StepFamilySpec(a, tuple(widths), tuple(betas)))


class TestSegmentPropagator:
    def test_zero_width_identity(self):
        m = segment_propagator(3.0, 0.0, 2.0 + 1.0j)
        assert (m.m11, m.m12, m.m21, m.m22) == (1.0, 0.0, 0.0, 1.0)

    def test_free_segment_closed_form(self):
        k, L = 1.3, 0.7
        m = segment_propagator(0.0, L, k * k)
        assert m.m11 == pytest.approx(math.cos(k * L), rel=1e-14)
        assert m.m12 == pytest.approx(math.sin(k * L) / k, rel=1e-14)
        assert m.m21 == pytest.approx(-k * math.sin(k * L), rel=1e-14)
        assert m.m22 == pytest.approx(math.cos(k * L), rel=1e-14)

    def test_q_zero_limit(self):
        m = segment_propagator(0.0, 1.0, 0.0)
        assert m.m11 == pytest.approx(1.0)
        assert m.m12 == pytest.approx(1.0)
        assert m.m21 == pytest.approx(0.0, abs=1e-15)
        assert m.m22 == pytest.approx(1.0)

    def test_negative_width(self):
        with pytest.raises(ValueError):
            segment_propagator(0.0, -0.1, 1.0)

    def test_entire_through_band_edge(self):
        # entries are smooth as mu crosses the segment value (q^2 = 0)
        L, v = 0.8, 5.0
        mus = v + np.linspace(-1e-3, 1e-3, 201)
        vals = np.array([segment_propagator(v, L, complex(m)).m12 for m in mus])
        dd = np.abs(np.diff(vals, 2))
        assert np.max(dd) < 1e-9  # second differences stay at discretization level

    def test_series_matches_closed_form_at_cutoff(self):
        # both evaluation branches agree where they meet (|z| = 0.5); the
        # tolerance covers the O(|dz|) continuity term of the probe itself
        L = 1.0
        for phase in np.linspace(0, 2 * math.pi, 17):
            z = 0.5 * cmath.exp(1j * phase)
            lo = segment_propagator(0.0, L, z * (1 - 1e-9)).as_array()
            hi = segment_propagator(0.0, L, z * (1 + 1e-9)).as_array()
            assert np.max(np.abs(lo - hi)) < 5e-9


class TestTotalTransfer:
    def test_free_potential_single_propagator(self):
        p = make_square_well(1.0, 0.0)
        mu = 2.3 + 0.4j
        total = total_transfer(p, mu)
        single = segment_propagator(0.0, 2.0, mu)
        assert total.m11 == pytest.approx(single.m11, rel=1e-14)
        assert total.m12 == pytest.approx(single.m12, rel=1e-14)

    def test_square_well_shifted_energy(self, square_well):
        mu = 1.7 - 0.2j
        total = total_transfer(square_well, mu)
        single = segment_propagator(0.0, 4.0, mu + 1.0)
        assert total.m21 == pytest.approx(single.m21, rel=1e-13)

    def test_unimodular_oscillatory(self, fig2_steps):
        # above every band the propagation is oscillatory and the absolute
        # Wronskian check is numerically meaningful at 1e-12
        rng = np.random.default_rng(23)
        for _ in range(50):
            mu = complex(rng.uniform(1.0, 1000.0), rng.uniform(-2.0, 2.0))
            assert abs(total_transfer(fig2_steps, mu).det - 1.0) < 1e-12

    def test_unimodular_any_regime(self, fig2_steps):
        # deep below the bands the check's condition number grows like
        # exp(2 * log_scale); the tolerance must scale with it
        rng = np.random.default_rng(29)
        for _ in range(50):
            mu = complex(rng.uniform(-460.0, 600.0), rng.uniform(-5.0, 5.0))
            tm = total_transfer(fig2_steps, mu)
            tol = 1e-12 + 1e-13 * math.exp(2.0 * tm.log_scale)
            assert abs(tm.det - 1.0) < tol

    def test_composition_split(self, fig2_steps):
        # product over [-a, c] then [c, a] equals the full interval product
        mu = 37.0 + 3.0j
        c = 0.1  # interior point inside the central band
        left = TransferMatrix.identity()
        right = TransferMatrix.identity()
        for seg in fig2_steps.segments:
            if seg.x_hi <= c:
                left = segment_propagator(seg.value, seg.width, mu) @ left
            elif seg.x_lo >= c:
                right = segment_propagator(seg.value, seg.width, mu) @ right
            else:
                left = segment_propagator(seg.value, c - seg.x_lo, mu) @ left
                right = segment_propagator(seg.value, seg.x_hi - c, mu) @ right
        split = right @ left
        total = total_transfer(fig2_steps, mu)
        for attr in ("m11", "m12", "m21", "m22"):
            assert getattr(split, attr) == pytest.approx(getattr(total, attr),
                                                         rel=1e-12, abs=1e-12)

    def test_deep_evanescent_scaled(self):
        # a tall barrier: entries stay finite in scaled storage and the
        # Wronskian holds relative to the hyperbolic growth
        p = make_square_well(1.0, -1e4)
        tm = total_transfer(p, 1.0)
        assert np.isfinite(abs(tm.m11))
        assert tm.log_scale > 50.0
        det_stored = tm.m11 * tm.m22 - tm.m12 * tm.m21
        assert abs(det_stored - math.exp(-2.0 * tm.log_scale)) < 1e-13


class TestScattering:
    def test_free_potential(self):
        p = make_square_well(1.0, 0.0)
        amp = scattering_amplitudes(p, 2.0)
        assert abs(amp.R) < 1e-14
        assert amp.T == pytest.approx(1.0, abs=1e-14)

    def test_square_well_pte(self, square_well):
        # perfect transmission at k^2 = (n pi / 2a)^2 - v0 (here n = 2, 3)
        for n in (2, 3):
            k = math.sqrt((n * math.pi / 4.0) ** 2 - 1.0)
            amp = scattering_amplitudes(square_well, k)
            assert abs(amp.R) < 1e-12
            assert amp.T2 == pytest.approx(1.0, abs=1e-12)

    def test_invalid_wavenumber(self, square_well):
        with pytest.raises(ValueError):
            scattering_amplitudes(square_well, 0.0)
        with pytest.raises(ValueError):
            scattering_amplitudes(square_well, -1.0)

    def test_unitarity_random(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            p = random_step_potential(rng)
            k = float(rng.uniform(0.05, 50.0))
            amp = scattering_amplitudes(p, k)
            assert abs(amp.R2 + amp.T2 - 1.0) < 1e-10

    def test_grid_matches_scalar(self, fig2_steps):
        ks = np.array([0.7, 3.0, 9.5, 21.0])
        R, T = scattering_grid(fig2_steps, ks)
        for i, k in enumerate(ks):
            amp = scattering_amplitudes(fig2_steps, float(k))
            assert R[i] == pytest.approx(amp.R, rel=1e-11, abs=1e-13)
            assert T[i] == pytest.approx(amp.T, rel=1e-11, abs=1e-13)

    def test_reciprocity_mirror(self):
        # |T| is direction-independent: mirroring the potential preserves it
        rng = np.random.default_rng(5)
        p = make_steps(StepFamilySpec(1.0, (0.3, 0.5), (-2.0, 1.5)))
        mirrored = PotentialSpec(
            p.half_width,
            tuple(Segment(-s.x_hi, -s.x_lo, s.value) for s in reversed(p.segments)),
            p.even,
        )
        for k in rng.uniform(0.5, 10.0, 10):
            t_fwd = scattering_amplitudes(p, float(k)).T2
            t_bwd = scattering_amplitudes(mirrored, float(k)).T2
            assert t_fwd == pytest.approx(t_bwd, rel=1e-11)


class TestTransmissionCurve:
    def test_free_identically_one(self):
        p = make_square_well(1.0, 0.0)
        rows = transmission_curve(p, np.linspace(0.5, 20.0, 40))
        assert all(row[1] == pytest.approx(1.0, abs=1e-13) for row in rows)

    def test_grid_order_preserved(self, square_well):
        grid = [9.0, 1.0, 4.0]
        rows = transmission_curve(square_well, grid)
        assert [row[0] for row in rows] == grid

    def test_rejects_nonpositive_energy(self, square_well):
        with pytest.raises(ValueError):
            transmission_curve(square_well, [1.0, -2.0])

    def test_unitarity_columns(self, fig2_steps):
        rows = transmission_curve(fig2_steps, np.linspace(1.0, 400.0, 100))
        for _, t2, r2, _ in rows:
            assert t2 + r2 == pytest.approx(1.0, abs=1e-10)
