import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from phasefit import entropy as E
from phasefit.quadrature import gauss_legendre


def spec(gamma, radii, kind=E.ClassKind.POLY_SUB, **kw):
    return E.SmoothnessClassSpec(gamma, tuple(radii), kind, **kw)


def profile_spec(gamma, tag="constant", c=1.0, kind=E.ClassKind.POLY_SUB):
    return spec(gamma, E.make_radii(E.RadiusProfile(tag, c), gamma), kind)


# -- types and radii --------------------------------------------------------

def test_make_radii_profiles():
    assert list(E.make_radii(E.RadiusProfile.constant(1), 2)) == [1, 1, 1, 1]
    assert list(E.make_radii(E.RadiusProfile.factorial(1), 3)) == [1, 1, 2, 6, 24]
    assert list(E.make_radii(E.RadiusProfile.factorial_minus_one(2), 2)) == [2, 2, 2, 4]


def test_make_radii_rejects_bad_explicit_values():
    with pytest.raises(ValueError):
        E.make_radii(E.RadiusProfile.explicit([1, -1]), 0)
    with pytest.raises(ValueError):
        E.make_radii(E.RadiusProfile.explicit([1, 1, 1]), 0)


def test_class_spec_validation():
    with pytest.raises(ValueError):
        spec(1, [1, 1])
    with pytest.raises(ValueError):
        spec(0, [1, 0])
    with pytest.raises(ValueError):
        spec(0, [1, 1], E.ClassKind.ELLIPSOID)
    assert spec(0, [1, 1], E.ClassKind.ELLIPSOID, eigen_decay=1.0).domain == (0.0, 1.0)
    assert spec(0, [1, 1]).domain == (-1.0, 1.0)


# -- bound formulas ---------------------------------------------------------

def test_poly_cover_upper_examples():
    rep = E.poly_cover_upper_report(spec(0, [1, 1]), 1.0)
    assert rep.upper_log == pytest.approx(math.log(4)) and rep.branch == "B1bar"
    rep = E.poly_cover_upper_report(spec(0, [1, 1]), 8.0)
    assert rep.upper_log == pytest.approx(-math.log(8)) and rep.branch == "B2bar"
    expected = 2 * math.log(120) + math.log(60)
    assert E.poly_cover_upper(spec(2, [1, 1, 1, 1]), 0.1) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(13.66, abs=0.01)


def test_b1_examples():
    assert E.poly_pack_lower_B1(spec(0, [1, 1]), 0.5) == pytest.approx(math.log(2))
    assert E.poly_pack_lower_B1(spec(1, [1, 1, 1]), 1.0) == pytest.approx(-2 * math.log(9))


def test_b1_decreases_without_bound():
    s = spec(2, [1, 1, 1, 1])
    vals = [E.poly_pack_lower_B1(s, d) for d in np.geomspace(1, 1e12, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < -50


def test_b2_feasibility_examples():
    res = E.poly_pack_B2_feasible(spec(0, [1, 1]), 0.01)
    assert (res.k_tilde, res.spread, res.m0, res.feasible) == (0, 1.0, 68, True)
    assert res.log_lower == pytest.approx(math.log(2))
    assert E.poly_pack_B2_feasible(spec(0, [1, 1]), 1.0).feasible is False
    assert E.poly_pack_B2_feasible(profile_spec(5, "factorial"), 1e-6).feasible


def test_k_tilde_breaks_ties_low():
    # R_k / k! = 1 for every k under the factorial profile
    assert E.k_tilde(profile_spec(4, "factorial")) == 0
    assert E.k_tilde(spec(2, [1, 1, 6, 1])) == 2


def test_holder_sub_examples():
    hs = E.ClassKind.HOLDER_SUB
    assert E.holder_sub_entropy(spec(0, [1, 1], hs), 0.01).upper_log == pytest.approx(100)
    assert E.holder_sub_entropy(spec(1, [1, 1, 2], hs), 0.125).upper_log == pytest.approx(4)
    rep = E.holder_sub_entropy(spec(0, [0.25, 1], hs), 0.25)
    assert rep.lower_log == pytest.approx(1) and rep.branch == "R0<1"
    with pytest.raises(ValueError):
        E.holder_sub_entropy(spec(0, [1, 1], hs), 1.0)


def test_ellipsoid_examples():
    el = dict(kind=E.ClassKind.ELLIPSOID, eigen_decay=1.0)
    rep = E.ellipsoid_entropy(spec(0, [1, 1], **el), 0.01)
    assert rep.lower_log == pytest.approx(100) and rep.upper_log == pytest.approx(100)
    assert rep.branch == "R>=gamma+1"
    rep = E.ellipsoid_entropy(spec(1, [1, 1, 0.5], **el), 1 / 16)
    assert rep.upper_log == pytest.approx(4)
    assert rep.lower_log == pytest.approx(math.sqrt(8))


@pytest.mark.parametrize("gamma,r", [(0, 1.0), (1, 0.5), (3, 2.0)])
def test_ellipsoid_bounds_halve_when_delta_scales(gamma, r):
    s = spec(gamma, [1.0] * (gamma + 1) + [r], E.ClassKind.ELLIPSOID, eigen_decay=1.0)
    a = E.ellipsoid_entropy(s, 0.001)
    b = E.ellipsoid_entropy(s, 0.001 * 2 ** (gamma + 1))
    assert b.lower_log == pytest.approx(a.lower_log / 2)
    assert b.upper_log == pytest.approx(a.upper_log / 2)


def test_full_holder_example_and_lower_is_max():
    s = spec(0, [1, 1], E.ClassKind.HOLDER_FULL)
    rep = E.full_holder_entropy(s, 0.01)
    assert rep.upper_log == pytest.approx(math.log(400) + 100)
    parts = [
        E.poly_pack_lower_B1(s, 0.01),
        E.poly_pack_B2_feasible(s, 0.01).log_lower,
        E.holder_sub_entropy(s, 0.01).lower_log,
    ]
    assert rep.lower_log == max(parts)


def test_full_holder_upper_dominates_lower_on_sweep():
    for gamma in range(5):
        s = profile_spec(gamma, kind=E.ClassKind.HOLDER_FULL)
        for i in range(2, 11):
            rep = E.full_holder_entropy(s, 2.0**-i)
            assert rep.upper_log >= rep.lower_log, (gamma, i)


def test_class_entropy_dispatch():
    s = profile_spec(1)
    rep = E.class_entropy(s, 0.01)
    assert rep.upper_log == E.poly_cover_upper(s, 0.01)
    assert rep.lower_log == max(E.poly_pack_lower_B1(s, 0.01), E.poly_pack_B2_feasible(s, 0.01).log_lower)
    with pytest.raises(ValueError):
        E.class_entropy(profile_spec(1, kind=E.ClassKind.SOBOLEV), 0.1)


@pytest.mark.parametrize("gamma", [0, 2, 4])
@pytest.mark.parametrize("tag", ["constant", "factorial", "factorial_minus_one"])
def test_bounds_non_increasing_in_delta(gamma, tag):
    deltas = np.geomspace(0.9, 1e-4, 25)
    kinds = [E.ClassKind.HOLDER_FULL, E.ClassKind.HOLDER_SUB, E.ClassKind.POLY_SUB]
    for kind in kinds:
        s = profile_spec(gamma, tag, kind=kind)
        reps = [E.class_entropy(s, d) for d in deltas]
        for field in ("upper_log", "lower_log"):
            vals = [getattr(r, field) for r in reps]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:])), (kind, field)
    s = profile_spec(gamma, tag)
    vals = [E.poly_pack_lower_B1(s, d) for d in deltas]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_reports_echo_constants():
    rep = E.full_holder_entropy(profile_spec(1, kind=E.ClassKind.HOLDER_FULL), 0.1)
    assert rep.constants == E.CONSTANTS
    assert rep.constants["C_prime_B2"] == pytest.approx(math.log(2))


# -- multivariate -----------------------------------------------------------

def test_dstar_examples():
    assert all(E.dstar(1, k) == 1 for k in range(20))
    assert E.dstar(3, 2) == 6
    total = sum(E.dstar(2, k) for k in range(9))
    assert total == 45 and total >= 2**3


def test_dstar_pascal_identity():
    for d in range(2, 7):
        for k in range(1, 13):
            assert E.dstar(d, k) == E.dstar(d - 1, k) + E.dstar(d, k - 1)


@pytest.mark.parametrize("d", [2, 3])
def test_dstar_sum_bound_for_large_gamma(d):
    for gamma in range(2 * d * d, 2 * d * d + 6):
        assert sum(E.dstar(d, k) for k in range(gamma + 1)) >= d ** (d + 1)


def test_dstar_overflow_names_pair():
    with pytest.raises(OverflowError, match="d=200, k=200"):
        E.dstar(200, 200)


def test_multivariate_collapses_to_univariate():
    hs = profile_spec(2, "factorial", kind=E.ClassKind.HOLDER_SUB)
    for delta in (0.5, 0.01):
        assert E.multivariate_entropy(hs, 1, delta, "holder_sub_d").upper_log == pytest.approx(
            E.holder_sub_entropy(hs, delta).upper_log
        )
        ps = profile_spec(2)
        assert E.multivariate_entropy(ps, 1, delta, "poly_sub_d").upper_log == pytest.approx(
            E.poly_cover_upper(ps, delta)
        )


def test_multivariate_examples():
    rep = E.multivariate_entropy(spec(0, [1, 1], E.ClassKind.HOLDER_SUB), 2, 0.01, "holder_sub_d")
    assert rep.upper_log == pytest.approx(4e4)
    rep = E.multivariate_entropy(profile_spec(2), 3, 0.1, "poly_sub_d")
    assert rep.lower_log is None
    vals = [E.multivariate_entropy(profile_spec(2), 2, d, "poly_sub_d").upper_log
            for d in np.geomspace(0.9, 1e-4, 20)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# -- Legendre ---------------------------------------------------------------

def test_legendre_examples():
    np.testing.assert_allclose(E.legendre_coeffs([0, 1]), [0, 1], atol=1e-15)
    np.testing.assert_allclose(E.legendre_coeffs([0, 0, 2]), [1 / 3, 0, 2 / 3], atol=1e-15)
    assert not np.any(E.legendre_coeffs(np.zeros(6)))


def test_pochhammer():
    assert E.pochhammer(0.5, 0) == 1
    assert E.pochhammer(0.5, 3) == pytest.approx(0.5 * 1.5 * 2.5)
    assert E.pochhammer(1, 5) == math.factorial(5)


def _monomial_coeffs(taylor):
    return np.array([t / math.factorial(k) for k, t in enumerate(taylor)])


def _projection(taylor):
    # theta_k = (2k+1)/2 * int_{-1}^{1} f P_k by exact-order Gauss-Legendre
    g = len(taylor) - 1
    x, w = gauss_legendre(g + 2)
    fx = np.polynomial.polynomial.polyval(x, _monomial_coeffs(taylor))
    return np.array([(2 * k + 1) / 2 * np.dot(w, fx * npleg.legval(x, np.eye(g + 1)[k])) for k in range(g + 1)])


taylor_vectors = st.integers(0, 8).flatmap(
    lambda g: st.lists(st.floats(-5, 5, allow_nan=False), min_size=g + 1, max_size=g + 1)
)


@settings(max_examples=60, deadline=None)
@given(taylor_vectors)
def test_legendre_matches_projection_and_reconstructs(taylor):
    theta = E.legendre_coeffs(taylor)
    np.testing.assert_allclose(theta, _projection(taylor), atol=1e-8)
    grid = np.linspace(-1, 1, 100)
    direct = np.polynomial.polynomial.polyval(grid, _monomial_coeffs(taylor))
    assert np.max(np.abs(npleg.legval(grid, theta) - direct)) <= 1e-10


def test_legendre_distance_examples():
    assert E.legendre_l2_distance([1, 2], [1, 2]) == 0
    assert E.legendre_l2_distance([1], [0]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        E.legendre_l2_distance([1, 2], [1])


def test_legendre_distance_matches_quadrature():
    rng = np.random.default_rng(3)
    x, w = gauss_legendre(8)
    for _ in range(50):
        g = int(rng.integers(0, 6))
        a, b = rng.normal(size=(2, g + 1))
        d = E.legendre_l2_distance(E.legendre_coeffs(a), E.legendre_coeffs(b))
        diff = np.polynomial.polynomial.polyval(x, _monomial_coeffs(a) - _monomial_coeffs(b))
        assert d == pytest.approx(math.sqrt(np.dot(w, diff**2)), abs=1e-10)


# -- constructive sets ------------------------------------------------------

def test_packing_constants_example():
    ps = E.build_packing_set(spec(0, [1, 1]), 0.01)
    assert ps.m0 == 68 == len(ps)
    c = np.sort(ps.members[:, 0])
    assert c[0] == -1 and c[-1] == 1
    # constants: L2[-1,1] distance is sqrt(2) |dc|
    assert ps.min_separation == pytest.approx(math.sqrt(2) * np.min(np.diff(c)))
    assert ps.min_separation > 0.01


@pytest.mark.parametrize("gamma", [1, 2, 3])
@pytest.mark.parametrize("tag", ["constant", "factorial", "factorial_minus_one"])
@pytest.mark.parametrize("b", [1.0, 4.0])
def test_packing_members_in_box_and_separated(gamma, tag, b):
    s = profile_spec(gamma, tag)
    delta = 1e-3
    ps = E.build_packing_set(s, delta, b=b)
    assert ps.m0 == E.poly_pack_B2_feasible(s, delta).m0 >= 2 ** (gamma + 1)
    assert np.all(np.abs(ps.members) <= s.coefficient_bounds * (1 + 1e-12))
    # independent pairwise check in the Legendre basis
    taylor = ps.members * np.array([math.factorial(k) for k in range(gamma + 1)])
    thetas = [E.legendre_coeffs(t) for t in taylor]
    sep = min(E.legendre_l2_distance(p, q) for p, q in itertools.combinations(thetas, 2))
    assert sep > delta
    assert sep == pytest.approx(ps.min_separation, rel=1e-8)


def test_packing_refuses_infeasible_delta():
    with pytest.raises(ValueError, match="infeasible"):
        E.build_packing_set(spec(0, [1, 1]), 1.0)
    with pytest.raises(ValueError):
        E.build_packing_set(spec(0, [1, 1]), 0.01, b=0.5)


def test_cover_small_example():
    s = spec(0, [1, 1])
    cover = E.build_product_cover(s, 0.5)
    assert len(cover) >= 3
    assert E.cover_check(s, 0.5, rng=1) <= 0.5


def test_cover_size_is_product_of_axes():
    s = profile_spec(1)
    axes = E.product_cover_axes(s, 0.1)
    cover = E.build_product_cover(s, 0.1)
    assert len(cover) == len(axes[0]) * len(axes[1])
    assert E.cover_log_size(s, 0.1) == pytest.approx(math.log(len(cover)))


@pytest.mark.parametrize("gamma", [0, 1, 2, 3])
@pytest.mark.parametrize("delta", [0.5, 0.1])
def test_cover_log_size_and_randomised_check(gamma, delta):
    s = profile_spec(gamma)
    assert E.cover_log_size(s, delta) <= E.poly_cover_B1bar(s, delta) + (gamma + 1) * math.log(2)
    assert E.cover_check(s, delta, n_samples=1000, rng=gamma) <= delta


def test_cover_brute_force_nearest_point():
    s = profile_spec(1)
    cover = E.build_product_cover(s, 0.2)
    rng = np.random.default_rng(5)
    thetas = rng.uniform(-s.coefficient_bounds, s.coefficient_bounds, size=(300, 2))
    gaps = np.abs(thetas[:, None, :] - cover[None, :, :]).sum(axis=2).min(axis=1)
    assert gaps.max() <= 0.2
    # the l1 gap bounds the sup distance between the polynomials on [-1, 1]
    grid = np.linspace(-1, 1, 201)
    nearest = cover[np.abs(thetas[:, None, :] - cover[None, :, :]).sum(axis=2).argmin(axis=1)]
    sup = np.abs(np.polynomial.polynomial.polyval(grid, (thetas - nearest).T)).max()
    assert sup <= 0.2 + 1e-12


def test_cover_refuses_oversized_product():
    with pytest.raises(ValueError, match="cap"):
        E.build_product_cover(profile_spec(6), 1e-3)
