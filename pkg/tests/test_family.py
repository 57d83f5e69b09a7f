import math

import pytest
from gmpy2 import mpq

from gw_border import series as S
from gw_border.errors import DomainError, InvalidInputError, NotInKStarError, ResidueClassError
from gw_border.family import (
    FamilyKind,
    OffspringFamily,
    apex,
    builtin_family,
    check_residue,
    coeff_H_of_g,
    compose_psi,
    extinction_prob,
    height_iterate,
    is_defective,
    lagrange_coefficient,
    load_custom_family,
    mean_fn,
    otter_asymptotic,
    polynomial_family,
    progeny_pgf,
    psi_value,
    resolve_family,
    solve_g,
    tilted_pgf,
    variance_fn,
)
from gw_border.settings import get_settings

MOTZKIN = [1, 1, 2, 4, 9, 21, 51, 127, 323, 835, 2188]


def catalan(m):
    return math.comb(2 * m, m) // (m + 1)


class TestConstruction:
    def test_builtins(self, plane, cayley, binary):
        assert plane.kind is FamilyKind.GEOMETRIC
        assert cayley.kind is FamilyKind.EXPONENTIAL
        assert binary.degree == 2
        assert binary.support_gcd == 2
        assert cayley.coeff(3) == mpq(1, 6)
        assert binary.describe() == "1 + w^2"

    def test_unknown_builtin(self):
        with pytest.raises(InvalidInputError):
            builtin_family("ternary")

    @pytest.mark.parametrize("coeffs", [[0, 1], [1, -1, 1], [3], []])
    def test_class_k_is_enforced(self, coeffs):
        with pytest.raises(InvalidInputError):
            polynomial_family(coeffs)

    def test_trailing_zeros_are_dropped(self):
        fam = polynomial_family([1, 1, 0, 0])
        assert fam.degree == 1

    def test_custom_file(self, psi_file):
        fam = load_custom_family(psi_file({"coeffs": ["1", "1", "1"], "egf": True}))
        assert fam.name == "custom:my_psi"
        assert fam.poly == (1, 1, mpq(1, 2))

    def test_custom_file_name_override(self, psi_file):
        fam = load_custom_family(psi_file({"coeffs": [1, 0, 0, 1], "name": "ternary"}))
        assert fam.name == "ternary"
        assert fam.support_gcd == 3

    def test_custom_file_errors(self, psi_file, tmp_path):
        with pytest.raises(InvalidInputError):
            load_custom_family(str(tmp_path / "missing.json"))
        broken = tmp_path / "broken.json"
        broken.write_text("{not json", encoding="utf-8")
        with pytest.raises(InvalidInputError):
            load_custom_family(str(broken))
        with pytest.raises(InvalidInputError):
            load_custom_family(psi_file({"coeffs": []}))

    def test_resolve_needs_exactly_one_source(self, psi_file):
        with pytest.raises(InvalidInputError):
            resolve_family()
        with pytest.raises(InvalidInputError):
            resolve_family("plane", psi_file({"coeffs": [1, 1]}))
        assert resolve_family("plane").name == "plane"


class TestPsiValue:
    def test_geometric(self, plane):
        x = 0.3
        assert psi_value(plane, x) == pytest.approx(1 / (1 - x), rel=1e-14)
        assert psi_value(plane, x, 1) == pytest.approx(1 / (1 - x) ** 2, rel=1e-14)
        assert psi_value(plane, x, 2) == pytest.approx(2 / (1 - x) ** 3, rel=1e-14)
        assert psi_value(plane, x, 0, frozenset({0})) == pytest.approx(x / (1 - x), rel=1e-14)

    def test_exponential(self, cayley):
        assert psi_value(cayley, 1.5) == pytest.approx(math.exp(1.5), rel=1e-14)
        assert psi_value(cayley, 1e-3, 0, frozenset({0})) == pytest.approx(math.expm1(1e-3), rel=1e-14)

    def test_polynomial(self, motzkin):
        assert psi_value(motzkin, 2.0) == 7.0
        assert psi_value(motzkin, 2.0, 1) == 5.0
        assert psi_value(motzkin, 2.0, 2) == 2.0
        assert psi_value(motzkin, 2.0, 0, frozenset({0, 1})) == 4.0

    def test_outside_disc(self, plane):
        with pytest.raises(DomainError):
            psi_value(plane, 1.0)
        with pytest.raises(DomainError):
            psi_value(plane, -0.1)


class TestApex:
    @pytest.mark.parametrize(
        "name,tau,rho,q",
        [("plane", 0.5, 0.25, 1), ("binary", 1.0, 0.5, 2), ("cayley", 1.0, math.exp(-1), 1), ("motzkin", 1.0, 1 / 3, 1)],
    )
    def test_builtin_apex(self, name, tau, rho, q):
        k = apex(builtin_family(name))
        assert k.tau == pytest.approx(tau, rel=1e-14)
        assert k.rho == pytest.approx(rho, rel=1e-14)
        assert k.q == q
        assert k.in_k_star

    def test_variance_at_apex(self, plane, cayley, binary):
        assert variance_fn(plane, 0.5) == pytest.approx(2.0, rel=1e-12)
        assert variance_fn(cayley, 1.0) == pytest.approx(1.0, rel=1e-12)
        assert apex(binary).sigma_tau == pytest.approx(1.0, rel=1e-12)

    def test_mean_at_apex_is_one(self, plane, cayley):
        assert mean_fn(plane, 0.5) == pytest.approx(1.0, rel=1e-14)
        assert mean_fn(cayley, 1.0) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize(
        "coeffs,tau",
        [([1, 1, 1], 1.0), (["1", "2", "1"], 1.0), ([1, 0, 0, 1], 2 ** (-1 / 3))],
    )
    def test_bisection(self, coeffs, tau):
        fam = polynomial_family(coeffs)
        assert fam.apex_hint is None
        assert apex(fam).tau == pytest.approx(tau, rel=1e-12)
        assert apex(fam).tau_exact is None

    def test_geometric_bisection_stays_inside_disc(self):
        fam = OffspringFamily(name="geometric_no_hint", kind=FamilyKind.GEOMETRIC)
        assert apex(fam).tau == pytest.approx(0.5, rel=1e-12)

    def test_bracket_margin_comes_from_settings(self, monkeypatch):
        settings = get_settings()
        narrow = settings.model_copy(update={"family": settings.family.model_copy(update={"apex_radius_margin": 0.6})})
        monkeypatch.setattr("gw_border.family.get_settings", lambda: narrow)
        with pytest.raises(NotInKStarError):
            apex(OffspringFamily(name="geometric_narrow_bracket", kind=FamilyKind.GEOMETRIC))

    def test_unary_is_not_in_k_star(self, unary):
        with pytest.raises(NotInKStarError, match="not in K"):
            apex(unary)

    def test_defective_beyond_apex(self, cayley):
        assert not is_defective(cayley, 1.0)
        assert is_defective(cayley, 2.0)


class TestTreeFunction:
    def test_plane_catalan(self, plane):
        g = solve_g(plane, 15)
        assert g.coeff(0) == 0
        assert [g.coeff(n) for n in range(1, 16)] == [catalan(n - 1) for n in range(1, 16)]

    def test_cayley(self, cayley):
        g = solve_g(cayley, 12)
        for n in range(1, 13):
            assert g.coeff(n) == mpq(n ** (n - 1), math.factorial(n))

    def test_binary_odd_sizes(self, binary):
        g = solve_g(binary, 21)
        for n in range(1, 22):
            expected = catalan((n - 1) // 2) if n % 2 else 0
            assert g.coeff(n) == expected

    def test_motzkin(self, motzkin):
        g = solve_g(motzkin, 11)
        assert [g.coeff(n) for n in range(1, 12)] == MOTZKIN

    @pytest.mark.parametrize("name,trunc", [("plane", 12), ("cayley", 10), ("motzkin", 12), ("binary", 13)])
    def test_methods_agree(self, name, trunc):
        fam = builtin_family(name)
        newton = solve_g(fam, trunc)
        assert solve_g(fam, trunc, "lagrange") == newton
        assert solve_g(fam, trunc, "fixed_point") == newton

    def test_unknown_method(self, plane):
        with pytest.raises(InvalidInputError):
            solve_g(plane, 5, "bogus")

    def test_lagrange_coefficient(self, plane, cayley):
        assert lagrange_coefficient(plane, 5) == 14
        assert lagrange_coefficient(cayley, 4) == mpq(64, 24)

    def test_coefficients_of_functions_of_g(self, plane):
        g = solve_g(plane, 10)
        for n in range(1, 11):
            assert coeff_H_of_g(plane, S.monomial(1, 10), n) == g.coeff(n)
        # g = z + g^2 for plane trees
        for n in range(2, 11):
            assert coeff_H_of_g(plane, S.monomial(2, 10), n) == g.coeff(n)

    def test_compose_psi_of_g_shifts_g(self, plane):
        g = solve_g(plane, 8)
        assert S.shift(compose_psi(plane, g), 1) == g

    def test_compose_psi_needs_exact_vanishing_inner(self, plane):
        with pytest.raises(InvalidInputError):
            compose_psi(plane, S.float_series([0.0, 1.0]))
        with pytest.raises(DomainError):
            compose_psi(plane, S.exact_series([1, 1]))

    def test_height_iterate(self, plane):
        # trees of height ≤ 1: a root with any number of leaf children
        assert height_iterate(plane, 1, 5).coeffs == (0, 1, 1, 1, 1, 1)
        assert height_iterate(plane, 0, 3).coeffs == (0, 1, 0, 0)


class TestResidue:
    def test_binary_even_sizes(self, binary):
        check_residue(binary, 5)
        with pytest.raises(ResidueClassError, match="Q=2"):
            check_residue(binary, 4)


class TestAsymptotics:
    @pytest.mark.parametrize("name,n", [("plane", 101), ("binary", 201), ("cayley", 50)])
    def test_otter_ratio(self, name, n):
        fam = builtin_family(name)
        exact = float(solve_g(fam, n).coeff(n))
        assert 0.98 <= otter_asymptotic(fam, n) / exact <= 1.02


class TestTiltedLaws:
    def test_tilted_pgf(self, plane, cayley, binary):
        p = tilted_pgf(plane, 0.5, 6)
        assert list(p.coeffs) == pytest.approx([0.5 ** (j + 1) for j in range(7)], rel=1e-14)
        c = tilted_pgf(cayley, 1.0, 5)
        assert list(c.coeffs) == pytest.approx([math.exp(-1) / math.factorial(j) for j in range(6)], rel=1e-14)
        assert tilted_pgf(binary, 1.0).coeffs == (0.5, 0.0, 0.5)

    def test_progeny_pgf(self, plane, cayley):
        p = progeny_pgf(plane, 0.5, 6)
        assert p.coeff(1) == pytest.approx(0.5, rel=1e-14)
        assert p.coeff(4) == pytest.approx(5 / 128, rel=1e-14)
        c = progeny_pgf(cayley, 1.0, 3)
        assert c.coeff(1) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_extinction(self, cayley, plane):
        assert extinction_prob(plane, 0.3) == 1.0
        q = extinction_prob(cayley, 2.0)
        assert 0.0 < q < 1.0
        assert q == pytest.approx(math.exp(2.0 * (q - 1.0)), abs=1e-12)


K_STAR = ["plane", "binary", "cayley", "motzkin"]


def _tilt_grid(fam, lo, hi, points=25):
    hi = min(hi, fam.radius * 0.98)
    return [lo + (hi - lo) * i / (points - 1) for i in range(points)]


class TestShapeOfTheFamily:
    @pytest.mark.parametrize("name", K_STAR + ["unary"])
    def test_mean_is_strictly_increasing(self, name):
        fam = builtin_family(name)
        means = [mean_fn(fam, t) for t in _tilt_grid(fam, 0.01, 5.0)]
        assert all(a < b for a, b in zip(means, means[1:]))

    @pytest.mark.parametrize("name", K_STAR)
    def test_ratio_peaks_at_the_apex(self, name):
        fam = builtin_family(name)
        tau = apex(fam).tau
        below = [tau * f for f in (0.2, 0.4, 0.6, 0.8, 0.95, 1.0)]
        above = [t for t in (tau * f for f in (1.0, 1.05, 1.2, 1.5, 1.8)) if t < fam.radius]
        rise = [t / psi_value(fam, t) for t in below]
        fall = [t / psi_value(fam, t) for t in above]
        assert all(a < b for a, b in zip(rise, rise[1:]))
        assert all(a > b for a, b in zip(fall, fall[1:]))
        assert len(fall) >= 3
        assert rise[-1] == pytest.approx(apex(fam).rho, rel=1e-14)

    @pytest.mark.parametrize("name", K_STAR)
    def test_tree_function_inverts_the_ratio(self, name):
        fam = builtin_family(name)
        g = solve_g(fam, 200)
        tau = apex(fam).tau
        for t in (0.2 * tau, 0.4 * tau, 0.6 * tau):
            assert S.evaluate(g, t / psi_value(fam, t)) == pytest.approx(t, abs=1e-8)

    @pytest.mark.parametrize("name", K_STAR)
    def test_progeny_law_is_not_more_than_one(self, name):
        fam = builtin_family(name)
        tau = apex(fam).tau
        for t in (0.2 * tau, 0.4 * tau, 0.7 * tau, tau):
            total = sum(progeny_pgf(fam, t, 120).coeffs)
            assert total <= 1.0 + 1e-12
        assert sum(progeny_pgf(fam, 0.4 * tau, 120).coeffs) == pytest.approx(1.0, abs=1e-9)
