import math

import numpy as np
import pytest

import levydrawdown as ld
from levydrawdown import identities as ident
from levydrawdown.errors import DrawdownDegenerateError, UnsupportedRegimeError

from conftest import rel_err


def make_query(model, xi, x, b, **kw):
    return ident.ExitQuery(model, xi, x, b, **kw)


class TestClassicalReduction:
    """Constant boundaries make the general quadrature collapse onto the
    two-barrier formulas; both routes must agree."""

    PARAMS = [(0.5, 2.0, 1.0, -0.8), (0.2, 1.5, 0.5, -1.5), (1.0, 1.8, 2.0, 0.1)]

    @pytest.mark.parametrize("x,b,q,c", PARAMS)
    def test_up_exit(self, all_models, x, b, q, c):
        xi = ld.DrawdownFunction.constant(c)
        for m in all_models.values():
            got = ident.up_exit_before_drawdown(make_query(m, xi, x, b), q).value
            assert rel_err(got, ident.classical_up_exit(m, q, x, c, b)) < 1e-8

    @pytest.mark.parametrize("x,b,q,c", PARAMS)
    def test_drawdown_transform(self, all_models, x, b, q, c):
        xi = ld.DrawdownFunction.constant(c)
        for m in all_models.values():
            query = make_query(m, xi, x, b)
            got = ident.drawdown_triple_transform(query, q).value
            want = ident.classical_down_exit_transform(m, q, 0.0, x, c, b)
            assert rel_err(got, want) < 1e-8
            got_v = ident.drawdown_triple_transform(query, q + 0.5, 0.6).value
            want_v = ident.classical_down_exit_transform(m, q + 0.5, 0.6, x, c, b)
            assert rel_err(got_v, want_v) < 1e-8

    @pytest.mark.parametrize("x,b,q,c", PARAMS)
    def test_creeping(self, all_models, x, b, q, c):
        xi = ld.DrawdownFunction.constant(c)
        for m in all_models.values():
            if m.sigma == 0.0:
                continue
            got = ident.creeping_transform(make_query(m, xi, x, b), q).value
            assert rel_err(got, ident.classical_creeping(m, q, x, c, b)) < 1e-8

    @pytest.mark.parametrize("x,b,q,c", PARAMS)
    def test_potential_density(self, all_models, x, b, q, c):
        xi = ld.DrawdownFunction.constant(c)
        ys = np.linspace(c + 0.05, b - 0.05, 9)
        for m in all_models.values():
            vals, _ = ident.potential_density_grid(make_query(m, xi, x, b), q, ys)
            want = ident.classical_killed_potential_density(m, q, x, c, b, ys)
            for got_i, want_i in zip(vals, want):
                assert rel_err(got_i, want_i, floor=1e-9) < 1e-7

    @pytest.mark.parametrize("x,b,q,c", PARAMS)
    def test_hitting(self, all_models, x, b, q, c):
        a = x - 0.05
        if a <= c:
            pytest.skip("level between barriers required")
        xi = ld.DrawdownFunction.constant(a)
        for m in all_models.values():
            got = ident.hitting_transform(make_query(m, xi, x, b), q, c).value
            assert rel_err(got, ident.classical_hitting(m, q, x, a, c, b)) < 1e-8


class TestTrivialValues:
    def test_start_at_upper_level(self, bm):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(bm, xi, 1.0, 1.0)
        assert ident.up_exit_before_drawdown(query, 1.0).value == 1.0
        assert ident.drawdown_triple_transform(query, 1.0).value == 0.0
        assert ident.creeping_transform(query, 1.0).value == 0.0
        assert ident.hitting_transform(query, 1.0, -2.0).value == 0.0

    def test_classical_up_exit_at_b(self, all_models):
        for m in all_models.values():
            assert ident.classical_up_exit(m, 1.0, 2.0, -1.0, 2.0) == pytest.approx(1.0)

    def test_classical_down_exit_from_barrier(self, bm, mix):
        # starting on the lower barrier with sigma > 0: immediate passage
        for m in (bm, mix):
            got = ident.classical_down_exit_transform(m, 1.0, 0.0, -1.0, -1.0, 2.0)
            assert got == pytest.approx(1.0, rel=1e-12)

    def test_potential_density_outside_support(self, bm):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(bm, xi, 0.0, 2.0)
        vals, _ = ident.potential_density_grid(query, 1.0, [-1.5, 2.5])
        assert np.all(vals == 0.0)


class TestLinearClosedForms:
    SLOPES = [-0.5, 0.3, 0.7]

    @pytest.mark.parametrize("slope", SLOPES)
    def test_up_exit(self, all_models, slope):
        d, b, q = 1.0, 2.0, 1.0
        xi = ld.DrawdownFunction.linear(slope, d)
        for m in all_models.values():
            got = ident.up_exit_before_drawdown(make_query(m, xi, 0.0, b), q).value
            assert rel_err(got, ident.linear_up_exit(m, slope, d, b, q)) < 1e-7

    @pytest.mark.parametrize("slope", SLOPES)
    def test_drawdown_transform(self, all_models, slope):
        d, b, u, v = 1.0, 2.0, 1.0, 0.4
        xi = ld.DrawdownFunction.linear(slope, d)
        for m in all_models.values():
            got = ident.drawdown_triple_transform(make_query(m, xi, 0.0, b), u, v).value
            want = ident.linear_drawdown_transform(m, slope, d, b, u, v)
            assert rel_err(got, want) < 1e-7

    @pytest.mark.parametrize("slope", SLOPES)
    def test_creeping(self, bm, mix, slope):
        d, b, q = 1.0, 2.0, 1.0
        xi = ld.DrawdownFunction.linear(slope, d)
        for m in (bm, mix):
            got = ident.creeping_transform(make_query(m, xi, 0.0, b), q).value
            assert rel_err(got, ident.linear_creeping(m, slope, d, b, q)) < 1e-7

    @pytest.mark.parametrize("slope", SLOPES)
    def test_potential_density(self, all_models, slope):
        d, b, q = 1.0, 2.0, 1.0
        xi = ld.DrawdownFunction.linear(slope, d)
        lo = slope * b - d if slope < 0 else -d
        ys = np.linspace(lo + 0.07, b - 0.07, 7)
        for m in all_models.values():
            query = make_query(m, xi, 0.0, b)
            vals, _ = ident.potential_density_grid(query, q, ys)
            for y, got in zip(ys, vals):
                want = ident.linear_potential_density(m, slope, d, b, q, float(y))
                assert rel_err(got, want, floor=1e-9) < 1e-7

    def test_zero_slope_reduces_to_classical(self, bm):
        d, b, q = 1.0, 2.0, 1.0
        got = ident.linear_up_exit(bm, 0.0, d, b, q)
        assert rel_err(got, ident.classical_up_exit(bm, q, 0.0, -d, b)) < 1e-12
        got_y = ident.linear_potential_density(bm, 0.0, d, b, q, 0.4)
        want_y = ident.classical_killed_potential_density(bm, q, 0.0, -d, b, 0.4)
        assert rel_err(got_y, want_y) < 1e-12


class TestReflectedClosedForms:
    def test_all_against_quadrature(self, all_models):
        d, b, q, u, v, r = 1.0, 1.5, 1.0, 1.0, 0.2, -0.1
        xi = ld.DrawdownFunction.linear(1.0, d)
        for m in all_models.values():
            query = make_query(m, xi, 0.0, b)
            assert rel_err(ident.up_exit_before_drawdown(query, q).value,
                           ident.reflected_up_exit(m, d, b, q)) < 1e-7
            assert rel_err(ident.drawdown_triple_transform(query, u, v, r).value,
                           ident.reflected_drawdown_transform(m, d, b, u, v, r)) < 1e-7
            if m.sigma > 0.0:
                assert rel_err(ident.creeping_transform(query, q).value,
                               ident.reflected_creeping(m, d, b, q)) < 1e-7
            for y in (-0.5, 0.4, 1.2):
                got = ident.potential_density(query, q, y).value
                want = ident.reflected_potential_density(m, d, b, q, y)
                assert rel_err(got, want, floor=1e-9) < 1e-7

    def test_no_upper_level_is_certain(self, bm):
        # b -> 0: up-exit from the start level is immediate
        assert ident.reflected_up_exit(bm, 1.0, 0.0, 1.0) == pytest.approx(1.0)

    def test_rate_degenerate_branch(self, bm):
        # r equal to the killing rate of the maximum: the closed form's
        # 0/0 factor must resolve to b
        d, b, q = 1.0, 1.5, 1.0
        rate = ident.reflected_max_rate(bm, d, q)
        got = ident.reflected_drawdown_transform(bm, d, b, q, 0.0, rate)
        xi = ld.DrawdownFunction.linear(1.0, d)
        want = ident.drawdown_triple_transform(make_query(bm, xi, 0.0, b),
                                               q, 0.0, rate).value
        assert rel_err(got, want) < 1e-7

    def test_limit_matches_large_b(self, all_models):
        # r = -v, b -> infinity limit vs the finite-b form at a huge b
        d, u, v = 1.0, 1.0, 0.3
        for m in all_models.values():
            rate = ident.reflected_max_rate(m, d, u)
            big_b = 200.0 / rate
            finite = ident.reflected_drawdown_transform(m, d, big_b, u, v, -v)
            limit = ident.reflected_drawdown_limit(m, d, u, v)
            assert rel_err(finite, limit) < 1e-8

    def test_depth_law_total_probability(self, all_models):
        from scipy import integrate
        d, q = 1.0, 1.0
        for m in all_models.values():
            dens, _ = integrate.quad(
                lambda z: ident.reflected_depth_density(m, d, q, z), 0.0, d,
                epsabs=1e-12, limit=200)
            atom = ident.reflected_zero_atom(m, d, q)
            if m.sigma > 0.0:
                assert atom == 0.0
            total = dens + atom + ident.reflected_pass_probability(m, d, q)
            assert abs(total - 1.0) < 1e-6


class TestMassBalance:
    CONFIGS = [
        (ld.DrawdownFunction.constant(-0.8), 0.5, 2.0),
        (ld.DrawdownFunction.linear(0.5, 1.0), 0.0, 2.0),
        (ld.DrawdownFunction.linear(1.0, 1.0), 0.0, 1.5),
    ]

    @pytest.mark.parametrize("q", [0.5, 2.0])
    def test_both_sides_agree(self, all_models, q):
        for m in all_models.values():
            for xi, x, b in self.CONFIGS:
                bal = ident.potential_mass_check(make_query(m, xi, x, b), q)
                assert bal.gap < 1e-6
                assert bal.gap <= 10 * (bal.mass_error + bal.transform_error) + 1e-9

    def test_bin_masses_sum_to_total(self, bm):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)
        query = make_query(bm, xi, 0.0, 2.0)
        edges = np.linspace(-1.0, 2.0, 13)
        masses, _ = ident.potential_bin_masses(query, 1.0, edges)
        bal = ident.potential_mass_check(query, 1.0)
        assert rel_err(float(masses.sum()), bal.mass_side) < 1e-7


class TestShapeProperties:
    def test_up_exit_bounds_and_monotonicity(self, mix):
        xi = ld.DrawdownFunction.linear(0.3, 1.0)
        vals_q = [ident.up_exit_before_drawdown(make_query(mix, xi, 0.0, 1.5), q).value
                  for q in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(0.0 < v <= 1.0 for v in vals_q)
        assert all(a >= b for a, b in zip(vals_q, vals_q[1:]))
        vals_b = [ident.up_exit_before_drawdown(make_query(mix, xi, 0.0, b), 1.0).value
                  for b in (0.5, 1.0, 2.0, 3.0)]
        assert all(a >= b for a, b in zip(vals_b, vals_b[1:]))
        xi_c = ld.DrawdownFunction.constant(-1.0)
        vals_x = [ident.up_exit_before_drawdown(make_query(mix, xi_c, x, 2.0), 1.0).value
                  for x in (0.0, 0.5, 1.0, 1.5)]
        assert all(a <= b for a, b in zip(vals_x, vals_x[1:]))

    def test_drawdown_transform_bounds(self, all_models):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)
        for m in all_models.values():
            query = make_query(m, xi, 0.0, 1.5)
            val = ident.drawdown_triple_transform(query, 1.0).value
            assert 0.0 <= val <= 1.0
            if m.sigma > 0.0:
                creep = ident.creeping_transform(query, 1.0).value
                assert creep <= val + 1e-12

    def test_partition_to_one_at_zero_killing(self, bm):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)
        query = make_query(bm, xi, 0.0, 1.5)
        up = ident.up_exit_before_drawdown(query, 0.0).value
        dd = ident.drawdown_triple_transform(query, 0.0).value
        assert abs(up + dd - 1.0) < 1e-9

    def test_slope_to_one_continuity(self, bm):
        # linear values at slope 1 +- eps bracket the reflected value
        d, b, q = 1.0, 1.5, 1.0
        eps = 1e-4
        lo = ident.linear_up_exit(bm, 1.0 - eps, d, b, q)
        hi = ident.linear_up_exit(bm, 1.0 + eps, d, b, q)
        mid = ident.reflected_up_exit(bm, d, b, q)
        assert min(lo, hi) - 1e-3 <= mid <= max(lo, hi) + 1e-3
        assert abs(lo - mid) < 1e-3 and abs(hi - mid) < 1e-3

    def test_error_estimates_cover_truth(self, all_models):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)
        for m in all_models.values():
            res = ident.up_exit_before_drawdown(make_query(m, xi, 0.0, 2.0), 1.0)
            want = ident.linear_up_exit(m, 0.5, 1.0, 2.0, 1.0)
            assert abs(res.value - want) <= max(100 * res.abs_error_estimate, 1e-11)

    def test_breakdown_cells(self, bm):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)
        query = make_query(bm, xi, 0.0, 2.0, collect_cells=True)
        res = ident.up_exit_before_drawdown(query, 1.0)
        assert res.breakdown is not None
        total_h = sum(dh for _, _, dh in res.breakdown)
        assert math.exp(-total_h) == pytest.approx(res.value, rel=1e-12)
        assert res.breakdown[0][0] == 0.0 and res.breakdown[-1][1] == 2.0


class TestMarkovRenewal:
    """Splitting at an intermediate maximum level s: the up-exit transform
    factorizes and the drawdown transform satisfies a renewal identity.  This
    checks the general-boundary machinery (breakpoints included) without any
    closed form."""

    XIS = [
        ld.DrawdownFunction.piecewise_linear(
            [(0.0, -1.0), (0.8, -0.4), (2.0, -1.6)]),
        ld.DrawdownFunction.general(
            lambda t: 0.3 * np.sin(2.0 * t) - 1.0, breakpoints=()),
    ]

    @pytest.mark.parametrize("xi", XIS)
    def test_up_exit_factorizes(self, mix, xi):
        x, s, b, q = 0.0, 0.8, 2.0, 1.0
        whole = ident.up_exit_before_drawdown(make_query(mix, xi, x, b), q).value
        first = ident.up_exit_before_drawdown(make_query(mix, xi, x, s), q).value
        second = ident.up_exit_before_drawdown(make_query(mix, xi, s, b), q).value
        assert rel_err(whole, first * second) < 1e-9

    @pytest.mark.parametrize("xi", XIS)
    def test_drawdown_renewal(self, mix, xi):
        x, s, b = 0.0, 0.8, 2.0
        u, v, r = 1.0, 0.4, -0.2
        whole = ident.drawdown_triple_transform(
            make_query(mix, xi, x, b), u, v, r).value
        head = ident.drawdown_triple_transform(
            make_query(mix, xi, x, s), u, v, r).value
        reach = ident.up_exit_before_drawdown(make_query(mix, xi, x, s), u).value
        tail = ident.drawdown_triple_transform(
            make_query(mix, xi, s, b), u, v, r).value
        assert rel_err(whole, head + reach * tail) < 1e-9

    def test_hitting_renewal(self, bm):
        xi = self.XIS[0]
        x, s, b, q, c = 0.0, 0.8, 2.0, 1.0, -3.0
        whole = ident.hitting_transform(make_query(bm, xi, x, b), q, c).value
        head = ident.hitting_transform(make_query(bm, xi, x, s), q, c).value
        reach = ident.up_exit_before_drawdown(make_query(bm, xi, x, s), q).value
        tail = ident.hitting_transform(make_query(bm, xi, s, b), q, c).value
        assert rel_err(whole, head + reach * tail) < 1e-9


class TestGuards:
    def test_degenerate_boundary_raises(self, bm):
        xi = ld.DrawdownFunction.linear(2.0, 1.0)  # pinches at t = 1
        with pytest.raises(DrawdownDegenerateError):
            make_query(bm, xi, 0.0, 1.5)

    def test_negative_p_rejected(self, bm):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(bm, xi, 0.0, 1.0)
        psi2 = float(bm.psi(2.0))
        with pytest.raises(ValueError):
            ident.drawdown_triple_transform(query, 0.5 * psi2, 2.0)

    def test_creeping_without_gaussian_part(self, cpp):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(cpp, xi, 0.0, 1.0)
        with pytest.raises(UnsupportedRegimeError):
            ident.creeping_transform(query, 1.0)
        res = ident.creeping_transform(query, 1.0, zero_sigma_ok=True)
        assert res.value == 0.0

    def test_hitting_barrier_must_stay_below(self, bm):
        xi = ld.DrawdownFunction.linear(0.5, 1.0)  # min on [0, 2] is -1
        query = make_query(bm, xi, 0.0, 2.0)
        with pytest.raises(ValueError):
            ident.hitting_transform(query, 1.0, -0.5)

    def test_potential_needs_positive_q(self, bm):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(bm, xi, 0.0, 1.0)
        with pytest.raises(ValueError):
            ident.potential_density(query, 0.0, 0.5)

    def test_negative_rates_rejected(self, bm):
        xi = ld.DrawdownFunction.constant(-1.0)
        query = make_query(bm, xi, 0.0, 1.0)
        with pytest.raises(ValueError):
            ident.up_exit_before_drawdown(query, -1.0)
        with pytest.raises(ValueError):
            ident.drawdown_triple_transform(query, -1.0)


class TestExcursionFunctionals:
    def test_kill_rate_symmetric_brownian(self, bm_sym):
        # W(x) = x at q = 0: the rate is 1/h
        from levydrawdown.scale import scale_function
        sf = scale_function(bm_sym, 0.0)
        for h in (0.5, 1.0, 3.0):
            assert ident.excursion_kill_rate(sf, h) == pytest.approx(1.0 / h, rel=1e-10)

    def test_entry_functional_at_zero_killing(self, mix):
        from levydrawdown.scale import scale_function
        sf = scale_function(mix, 0.0)
        for h in (0.5, 2.0):
            want = sf.w_prime(h) / sf.w(h)  # Z == 1, q W == 0
            assert ident.excursion_drawdown_entry(sf, h) == pytest.approx(want, rel=1e-12)

    def test_kill_rate_is_up_exit_integrand(self, bm):
        # the up-exit exponent under a constant boundary integrates this rate
        from levydrawdown.scale import scale_function
        q, c, x, b = 1.0, -0.8, 0.3, 1.7
        sf = scale_function(bm, q)
        from levydrawdown.quadrature import gauss_kronrod
        val, _ = gauss_kronrod(
            lambda t: sf.w_prime(t - c) / sf.w(t - c), x, b)
        assert math.exp(-val) == pytest.approx(
            ident.classical_up_exit(bm, q, x, c, b), rel=1e-9)

    def test_hitting_rate_against_level_derivative(self, bm):
        # independent oracle: differentiate the classical hitting transform in
        # the upper level and divide by the up-exit factor
        q, c, a = 1.0, -2.0, -0.3
        b, h = 1.4, 1e-5
        from levydrawdown.scale import scale_function
        sf = scale_function(bm, q)
        def hit_from_zero(bb):
            return ident.classical_hitting(bm, q, 0.0, a, c, bb)
        d1 = (hit_from_zero(b + h) - hit_from_zero(b - h)) / (2 * h)
        d2 = (hit_from_zero(b + h / 2) - hit_from_zero(b - h / 2)) / h
        deriv = (4 * d2 - d1) / 3
        up = ident.classical_up_exit(bm, q, 0.0, a, b)
        got = ident.excursion_hitting_rate(sf, b - a, b - c)
        assert rel_err(got, deriv / up) < 1e-6

    def test_occupation_density_integrates_to_entry_gap(self, bm):
        # integrating the occupation density over depth recovers
        # W'(h)/W(h) * (Z(h) - 1)/q ... cross-checked via the resolvent form
        from levydrawdown.scale import scale_function
        from scipy import integrate
        q, h = 1.0, 1.3
        sf = scale_function(bm, q)
        val, _ = integrate.quad(
            lambda z: ident.excursion_occupation_density(sf, h, z), 0.0, h,
            epsabs=1e-12)
        want = sf.w(h) - sf.w0 - sf.w_prime(h) / sf.w(h) * (sf.z(h) - 1.0) / q
        assert abs(val - want) < 1e-9

    def test_bundle(self, bm, cpp):
        out = ident.excursion_functionals(bm, 1.0, 0.8, h_kill=1.5, depth=0.4)
        assert {"kill_rate", "drawdown_entry", "creeping_rate",
                "hitting_rate", "occupation_density"} <= set(out)
        out_bv = ident.excursion_functionals(cpp, 1.0, 0.8)
        assert "creeping_rate" not in out_bv
