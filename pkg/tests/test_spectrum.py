import math

import numpy as np
import pytest

from ptlab.errors import CapacityError, ContinuationStallError, NoExceptionalPointError
from ptlab.potential import StepFamilySpec, make_square_well, make_steps
from ptlab.spectrum import (
    ComplexBox,
    branch_derivative,
    continue_branch,
    find_eigenvalues,
    label_branches_at_zero,
    locate_exceptional_point,
    secular,
    secular_eval,
    square_well_eigenvalues,
    winding_number,
)
from conftest import fig3_family


def free_secular_closed_form(a, alpha, mu):
    q = complex(mu) ** 0.5
    if abs(q) < 1e-12:
        return (alpha ** 2 - mu) * 2 * a
    return (alpha ** 2 - q * q) * np.sin(2 * a * q) / q


class TestSecular:
    def test_free_potential_closed_form(self):
        p = make_square_well(1.5, 0.0)
        rng = np.random.default_rng(2)
        for _ in range(30):
            mu = complex(rng.uniform(-30, 30), rng.uniform(-10, 10))
            alpha = float(rng.uniform(-4, 4))
            want = free_secular_closed_form(1.5, alpha, mu)
            assert secular(p, alpha, mu) == pytest.approx(want, rel=1e-11, abs=1e-11)

    def test_free_zeros(self):
        p = make_square_well(1.5, 0.0)
        alpha = 0.8
        assert abs(secular(p, alpha, alpha ** 2)) < 1e-13
        assert abs(secular(p, alpha, (math.pi / 3.0) ** 2)) < 1e-13

    def test_square_well_zeros(self, square_well):
        # closed-form eigenvalues alpha^2 - v0 and (n pi / 2a)^2 - v0
        assert abs(secular(square_well, 0.5, -0.75)) < 1e-13
        assert abs(secular(square_well, 0.5, math.pi ** 2 / 16.0 - 1.0)) < 1e-13

    def test_derivative_consistency(self, fig2_steps):
        # analytic F_mu against a central difference of F
        rng = np.random.default_rng(4)
        for _ in range(10):
            mu = complex(rng.uniform(-100, 300), rng.uniform(-3, 3))
            alpha = float(rng.uniform(0, 10))
            h = 1e-6 * (1 + abs(mu))
            fd = (secular(fig2_steps, alpha, mu + h) -
                  secular(fig2_steps, alpha, mu - h)) / (2 * h)
            val = secular_eval(fig2_steps, alpha, mu)
            analytic = val.f_mu * math.exp(val.log_scale)
            assert analytic == pytest.approx(fd, rel=1e-7)

    def test_alpha_derivative_consistency(self, fig2_steps):
        rng = np.random.default_rng(6)
        for _ in range(10):
            mu = complex(rng.uniform(-100, 300), rng.uniform(-3, 3))
            alpha = float(rng.uniform(0.1, 10))
            h = 1e-6
            fd = (secular(fig2_steps, alpha + h, mu) -
                  secular(fig2_steps, alpha - h, mu)) / (2 * h)
            val = secular_eval(fig2_steps, alpha, mu)
            analytic = val.f_alpha * math.exp(val.log_scale)
            assert analytic == pytest.approx(fd, rel=1e-6)


class TestSquareWellOracle:
    def test_reference_values(self):
        got = square_well_eigenvalues(2.0, 1.0, 0.5, 2)
        want = [-0.75, math.pi ** 2 / 16.0 - 1.0, math.pi ** 2 / 4.0 - 1.0]
        assert np.allclose(got, want, rtol=0, atol=1e-15)

    def test_neumann_limit(self):
        got = square_well_eigenvalues(2.0, 0.0, 0.0, 1)
        assert np.allclose(got, [0.0, math.pi ** 2 / 16.0])

    def test_single_entry(self):
        assert square_well_eigenvalues(1.3, 2.5, 1.1, 0) == [1.1 ** 2 - 2.5]

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            square_well_eigenvalues(0.0, 1.0, 0.5, 3)
        with pytest.raises(ValueError):
            square_well_eigenvalues(1.0, 1.0, 0.5, -1)


class TestFindEigenvalues:
    def test_square_well_vs_oracle(self, square_well):
        roots = find_eigenvalues(square_well, 0.5, ComplexBox(-2.0, 6.0, -1.0, 1.0))
        oracle = [m.real for m in square_well_eigenvalues(2.0, 1.0, 0.5, 6)
                  if -2.0 < m.real < 6.0]
        assert len(roots) == len(oracle)
        for got, want in zip(roots, sorted(oracle)):
            assert abs(got - want) < 1e-10 * max(1.0, abs(want))

    def test_neumann_free(self):
        # alpha = 0 on the free potential: mu = 0 plus Neumann values
        p = make_square_well(1.0, 0.0)
        roots = find_eigenvalues(p, 0.0, ComplexBox(-1.0, 4.0, -0.5, 0.5))
        want = [0.0, (math.pi / 2.0) ** 2]
        assert len(roots) == 2
        assert np.allclose(np.array(roots).real, want, atol=1e-10)
        assert np.allclose(np.array(roots).imag, 0.0, atol=1e-10)

    def test_capacity_error(self, square_well):
        with pytest.raises(CapacityError):
            find_eigenvalues(square_well, 0.5, ComplexBox(-2.0, 6.0, -1.0, 1.0),
                             max_count=2)

    def test_complex_pair_present(self, fig2_steps):
        # mid-range alpha: a conjugate pair away from the real axis exists
        roots = find_eigenvalues(fig2_steps, 5.0,
                                 ComplexBox(-460.0, 200.0, -60.0, 60.0),
                                 max_count=40)
        off_axis = [z for z in roots if abs(z.imag) > 1e-3]
        assert off_axis
        for z in off_axis:
            partner = min(off_axis, key=lambda w: abs(w - z.conjugate()))
            assert abs(partner - z.conjugate()) < 1e-8

    def test_t_symmetry(self, fig2_steps):
        # spectrum at -alpha is the conjugate of the spectrum at +alpha
        box = ComplexBox(-460.0, 150.0, -40.0, 40.0)
        plus = find_eigenvalues(fig2_steps, 4.0, box, max_count=40)
        minus = find_eigenvalues(fig2_steps, -4.0, box, max_count=40)
        assert len(plus) == len(minus)
        pool = [z.conjugate() for z in minus]
        for a in plus:
            nearest = min(pool, key=lambda w: abs(w - a))
            assert abs(nearest - a) < 1e-8
            pool.remove(nearest)

    def test_winding_matches_root_count(self, fig2_steps):
        rng = np.random.default_rng(17)
        for _ in range(5):
            lo = rng.uniform(-460, 300)
            box = ComplexBox(lo, lo + rng.uniform(50, 200),
                             -rng.uniform(5, 30), rng.uniform(5, 30))
            count = winding_number(fig2_steps, 3.0, box)
            roots = find_eigenvalues(fig2_steps, 3.0, box, max_count=60)
            assert len(roots) == count


class TestContinuation:
    def test_square_well_moving_branch(self, square_well):
        br = continue_branch(square_well, (0.0, -1.0), (0.0, 3.0), 0.05, label=0)
        assert br.collision is None
        for s in br.samples:
            assert abs(s.mu - (s.alpha ** 2 - 1.0)) < 1e-10

    def test_square_well_constant_branch(self, square_well):
        mu1 = math.pi ** 2 / 16.0 - 1.0
        br = continue_branch(square_well, (0.0, mu1), (0.0, 3.0), 0.05, label=1)
        for s in br.samples:
            assert abs(s.mu - mu1) < 1e-10

    def test_residuals_recorded(self, fig2_steps):
        br = continue_branch(fig2_steps, (0.0, -409.9920515), (0.0, 5.0), 0.1)
        assert len(br.samples) == 51
        assert all(s.residual < 1e-12 for s in br.samples)
        assert all(b.alpha > a.alpha for a, b in zip(br.samples, br.samples[1:]))

    def test_two_sided_range(self, square_well):
        br = continue_branch(square_well, (1.0, 0.0), (0.0, 2.0), 0.1, label=0)
        alphas = br.alphas
        assert alphas[0] == pytest.approx(0.0)
        assert alphas[-1] == pytest.approx(2.0)
        assert np.all(np.diff(alphas) > 0)

    def test_bad_seed_rejected(self, square_well):
        with pytest.raises(ValueError):
            continue_branch(square_well, (0.0, 17.29), (0.0, 1.0), 0.05)

    def test_labeling_at_zero(self, square_well):
        branches = label_branches_at_zero(square_well, 2.0, 0.1,
                                          ComplexBox(-2.0, 6.0, -1.0, 1.0))
        assert [b.label for b in branches] == list(range(len(branches)))
        mus0 = [b.samples[0].mu.real for b in branches]
        assert mus0 == sorted(mus0)

    def test_derivative_on_branch(self, square_well):
        # implicit-function derivative: mu'(alpha) = 2 alpha on the moving branch
        for alpha in (0.3, 1.0, 2.2):
            d = branch_derivative(square_well, alpha, alpha ** 2 - 1.0)
            assert d == pytest.approx(2.0 * alpha, rel=1e-10)

    def test_analyticity_probe(self, fig2_steps):
        # divided differences of a continued branch approach the implicit
        # derivative away from collisions
        br = continue_branch(fig2_steps, (0.0, 107.7976434), (0.0, 4.0), 0.02, label=9)
        al = br.alphas
        mus = br.mus
        mid = len(al) // 2
        fd = (mus[mid + 1] - mus[mid - 1]) / (al[mid + 1] - al[mid - 1])
        d = branch_derivative(fig2_steps, float(al[mid]), complex(mus[mid]))
        assert abs(fd - d) < 5e-3 * (1.0 + abs(d))


class TestExceptionalPoints:
    def test_square_well_family_has_no_ep(self):
        # depth sweep at fixed generic alpha: branches shift in parallel and
        # never form a double root
        def family(theta):
            return make_square_well(2.0, theta)

        with pytest.raises((ValueError, NoExceptionalPointError)):
            locate_exceptional_point(family, 0.6, (0.5, 1.5), mu_guess=-0.3,
                                     mu_window=0.5)

    def test_fig3_first_event(self):
        ep = locate_exceptional_point(fig3_family, "dispersion",
                                      (-135.0, -150.0), 190.0)
        assert ep.theta == pytest.approx(-142.9016, abs=0.01)
        assert ep.mu.real == pytest.approx(186.41, abs=0.1)
        assert ep.residual_f < 1e-10
        assert ep.residual_df < 1e-8

    def test_sqrt_unfolding(self):
        ep = locate_exceptional_point(fig3_family, "dispersion",
                                      (-130.0, -150.0), 450.0)
        from ptlab.spectrum import _real_roots_window
        seps = {}
        for delta in (1e-2, 1e-4):
            window = (ep.mu.real - 20.0, ep.mu.real + 20.0)
            for side in (+1.0, -1.0):
                roots = _real_roots_window(fig3_family(ep.theta + side * delta),
                                           "dispersion", window, 4000)
                if len(roots) >= 2:
                    seps[delta] = roots[-1] - roots[0]
                    break
        ratio = seps[1e-2] / seps[1e-4]
        assert ratio == pytest.approx(10.0, rel=0.05)
