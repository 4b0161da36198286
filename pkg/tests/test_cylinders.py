import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import abelian_setup, sample_star_neighbourhood
from czflow.cylinders import (
    Admissibility,
    AdmissibilityParams,
    Ball,
    Cylinder,
    U_interval,
    anchor_range,
    contains,
    contains_array,
    contains_flow,
    cylinder_in_ball_check,
    cylinder_measure,
    cylinder_record,
    enlargement_star,
    envelope,
    intersects,
    is_admissible,
    mc_cylinder_measure,
    parents,
    product_factorization,
    psi_ball_radius,
    random_admissible,
    sample_cylinder,
    sons,
    star_constants,
    strip_down,
    strip_up,
    translate_left_base,
    translate_left_exp,
    translate_right,
)
from czflow.group import (
    GroupPoint,
    dist_G_array,
    exp_tZ,
    from_flow_array,
    group_mul,
)

PARAMS = AdmissibilityParams()


def cyl(system, x, k, r, a):
    return Cylinder(r, system.cube_at(x, k), a)


# membership and algebra -----------------------------------------------------

def test_membership_examples(ab2):
    Z, _, system = ab2
    P = cyl(system, [0.3, 0.6], 0, 4.0, 2.0)
    center = np.asarray(P.cube.center)
    x = group_mul(GroupPoint(center, 1.0), exp_tZ(Z, math.log(P.a)), Z.spec)
    assert contains(P, x, Z)
    lo, hi = U_interval(P)
    assert not contains_flow(P, center, hi)
    assert not contains_flow(P, center, lo)
    assert contains_flow(P, center, 0.5 * (lo + hi))
    assert not contains_flow(P, center + 1.0, math.log(P.a))


def test_right_translation(ab1, rng):
    Z, _, system = ab1
    P = cyl(system, [0.2], 1, 3.0, 0.7)
    assert translate_right(P, 0.0) == P
    n, t = sample_cylinder(P, Z, rng, 500)
    gn, ga = from_flow_array(Z, n, t)
    for s in (-1.0, 0.4):
        Q = translate_right(P, s)
        # right multiplication by exp(sZ) shifts the flow time
        shifted = np.array([group_mul(GroupPoint(v, a), exp_tZ(Z, s), Z.spec) for v, a in zip(gn[:50], ga[:50])])
        assert all(contains(Q, x, Z) for x in shifted)
        assert np.all(contains_flow(Q, n, t + s))


@pytest.mark.parametrize("s", [0.0, -0.8, 1.1])
def test_left_translations(ab1, rng, s):
    Z, _, system = ab1
    P = cyl(system, [0.2], 1, 3.0, 0.7)
    n, t = sample_cylinder(P, Z, rng, 300)
    gn, ga = from_flow_array(Z, n, t)
    Q = translate_left_exp(P, s, Z)
    g = exp_tZ(Z, s)
    moved = [group_mul(g, GroupPoint(v, a), Z.spec) for v, a in zip(gn, ga)]
    assert all(contains(Q, x, Z) for x in moved)
    m = np.array([2.5])
    R = translate_left_base(P, m, Z)
    moved = [group_mul(GroupPoint(m, 1.0), GroupPoint(v, a), Z.spec) for v, a in zip(gn, ga)]
    assert all(contains(R, x, Z) for x in moved)
    if s == 0.0:
        probe_n = rng.uniform(-1, 2, size=(2000, 1))
        probe_t = rng.uniform(-3, 3, size=2000)
        assert np.array_equal(contains_flow(Q, probe_n, probe_t, Z.spec), contains_flow(P, probe_n, probe_t))


def test_intersects_examples(ab1):
    Z, _, system = ab1
    P = cyl(system, [0.2], 1, 3.0, 1.0)
    assert intersects(P, P)
    r1, r2 = 3.0, 2.0
    same = Cylinder(r2, P.base, P.a * r1 * r2)
    assert not intersects(P, same)
    assert intersects(P, Cylinder(r2, P.base, P.a * r1 * r2 * (1 - 1e-9)))
    sib = [Q for Q in system.children_cubes(system.parent_cube(P.base)) if Q != P.base][0]
    assert not intersects(P, Cylinder(P.r, sib, P.a))
    assert intersects(P, Cylinder(P.r, system.parent_cube(P.base), P.a))


def test_measure_examples(ab2):
    Z, mu, system = ab2
    Q = system.cube_at([0.5, 0.5], 0)
    assert cylinder_measure(Cylinder(math.e, Q, 1.0)) == pytest.approx(2.0, rel=1e-15)
    assert cylinder_measure(Cylinder(1.0 + 1e-12, Q, 1.0)) < 1e-11
    ball = Cylinder(math.e, Ball((0.0, 0.0), 1.0), 3.0)
    assert cylinder_measure(ball, mu) == pytest.approx(2.0 * math.pi, rel=1e-12)


@pytest.mark.parametrize("setup", ["ab1", "ab2", "ab1_power"])
def test_measure_formula_against_monte_carlo(setup, request):
    Z, mu, system = request.getfixturevalue(setup)
    P = cyl(system, np.full(Z.spec.m, 0.7), -1, 2.5, 1.6)
    exact = cylinder_measure(P)
    assert mc_cylinder_measure(P, mu, samples=200_000, seed=4) == pytest.approx(exact, rel=5e-3)


# admissibility -------------------------------------------------------------------

def test_admissibility_examples(ab1):
    _, _, system = ab1
    Q = system.cube_at([0.0], -10)
    assert is_admissible(Cylinder(4.0, Q, 1.0), PARAMS) is Admissibility.LARGE
    assert is_admissible(Cylinder(4.0, Q, 1e6), PARAMS) is Admissibility.NOT
    a = 2.0 ** 10 / math.e ** 2
    assert is_admissible(Cylinder(math.e, Q, a), PARAMS) is Admissibility.SMALL
    assert is_admissible(Cylinder(math.e, Q, a * (1 + 1e-9)), PARAMS) is Admissibility.NOT


@given(k=st.integers(-30, 30), lr=st.floats(0.01, 8.0), u=st.floats(0.0, 1.0))
def test_anchor_range_is_exact(k, lr, u):
    system = abelian_setup(1)[2]
    Q = system.cube_at([0.1], k)
    r = math.exp(lr)
    lo, hi = anchor_range(k, r, PARAMS)
    assert lo <= hi
    inside = Cylinder(r, Q, math.exp(lo + u * (hi - lo)))
    assert is_admissible(inside, PARAMS).ok
    assert (is_admissible(inside, PARAMS) is Admissibility.LARGE) == (lr > 1.0)
    for la in (lo - 1e-6 * max(1, abs(lo)), hi + 1e-6 * max(1, abs(hi))):
        assert is_admissible(Cylinder(r, Q, math.exp(la)), PARAMS) is Admissibility.NOT


def test_params_validation():
    with pytest.raises(ValueError):
        AdmissibilityParams(gamma=4.0)
    with pytest.raises(ValueError):
        AdmissibilityParams(lam=10.0)
    with pytest.raises(ValueError):
        Cylinder(1.0, None, 1.0)
    assert AdmissibilityParams(lam=2.0 * math.e ** 3 * 1.0001).lam > 0


# sons, parents, envelopes -----------------------------------------------------

def test_vertical_sons_example(ab1):
    _, _, system = ab1
    P = cyl(system, [0.0], -20, 16.0, 1000.0)
    assert is_admissible(P, PARAMS) is Admissibility.LARGE
    s = sons(P, PARAMS)
    assert s == [Cylinder(4.0, P.base, 250.0), Cylinder(4.0, P.base, 4000.0)]
    for son in s:
        assert cylinder_measure(son) == pytest.approx(cylinder_measure(P) / 2, rel=1e-14)


def test_cube_sons_when_halves_fail(ab2):
    _, _, system = ab2
    Q = system.cube_at([0.1, 0.1], 0)
    lo, _ = anchor_range(0, 1.5, PARAMS)
    P = Cylinder(1.5, Q, math.exp(lo))
    assert is_admissible(P, PARAMS) is Admissibility.SMALL
    s = sons(P, PARAMS)
    assert len(s) == 4 and all(S.r == P.r and S.a == P.a for S in s)
    assert math.fsum(cylinder_measure(S) for S in s) == pytest.approx(cylinder_measure(P), rel=1e-14)


@pytest.mark.parametrize("setup", ["ab1", "ab2", "ab1_power"])
def test_sons_partition_the_cylinder(setup, request, rng):
    Z, _, system = request.getfixturevalue(setup)
    for _ in range(30):
        P = random_admissible(system, PARAMS, rng)
        kids = sons(P, PARAMS)
        n, t = sample_cylinder(P, Z, rng, 2000)
        hits = sum(contains_flow(S, n, t, Z.spec).astype(int) for S in kids)
        # boundaries of the half-open cubes and open intervals are null sets
        assert np.mean(hits == 1) > 0.999
        assert math.fsum(cylinder_measure(S) for S in kids) == pytest.approx(cylinder_measure(P), rel=1e-12)
        for S in kids:
            assert is_admissible(S, PARAMS).ok


def test_sons_reject_non_admissible(ab1):
    _, _, system = ab1
    with pytest.raises(ValueError):
        sons(cyl(system, [0.0], -10, 4.0, 1e6), PARAMS)


def test_parents_and_strips(ab2, rng):
    Z, _, system = ab2
    P = random_admissible(system, PARAMS, rng, kind="large")
    par = parents(P, PARAMS)
    mu_P = cylinder_measure(P)
    assert cylinder_measure(par.down) / mu_P == pytest.approx(3.0, rel=1e-12)
    assert cylinder_measure(par.up) / mu_P == pytest.approx(2.0, rel=1e-12)
    assert par.lr.base == system.parent_cube(P.base) and par.lr.r == P.r and par.lr.a == P.a
    assert strip_down(P) == Cylinder(P.r ** 2, P.base, P.a / P.r ** 3)
    assert strip_up(P) == Cylinder(P.r, P.base, P.a * P.r ** 2)
    for big, strip in ((par.down, strip_down(P)), (par.up, strip_up(P))):
        n, t = sample_cylinder(big, Z, rng, 5000)
        inP = contains_flow(P, n, t)
        inS = contains_flow(strip, n, t)
        assert not np.any(inP & inS)
        assert np.mean(inP | inS) > 0.999
    with pytest.raises(ValueError):
        lo, _ = anchor_range(0, 1.5, PARAMS)
        parents(Cylinder(1.5, system.cube_at([0.0, 0.0], 0), math.exp(lo)), PARAMS)


def test_envelope(ab1, rng):
    Z, _, system = ab1
    P = cyl(system, [0.3], 2, 5.0, 0.01)
    assert envelope(P, 1.0).r == pytest.approx(P.r, rel=1e-15)
    assert cylinder_measure(envelope(P, 3.0)) == pytest.approx(3.0 * cylinder_measure(P), rel=1e-12)
    n, t = sample_cylinder(P, Z, rng, 1000)
    assert np.all(contains_flow(envelope(P, 1.7), n, t))
    with pytest.raises(ValueError):
        envelope(P, 0.5)


# geometric lemmas ---------------------------------------------------------------

@pytest.mark.parametrize("setup", ["ab1", "ab2"])
def test_star_enlargement_covers_neighbourhood(setup, request, rng):
    Z, mu, system = request.getfixturevalue(setup)
    for kind in ("large", "small"):
        for _ in range(10):
            P = random_admissible(system, PARAMS, rng, kind=kind)
            star = enlargement_star(P, Z)
            nx, tx, ny, ty = sample_star_neighbourhood(P, Z, rng, 4000)
            d = dist_G_array(Z.spec, nx, np.exp(tx), ny, np.exp(ty))
            assert np.all(d < P.log_r * (1 + 1e-12))
            assert np.all(contains_flow(star.cover, nx, tx, Z.spec))
            assert star.C_star == pytest.approx(system.C1 + math.sqrt(2))
            ratio = cylinder_measure(star.cover, mu) / cylinder_measure(P)
            assert ratio <= star.C4 * (1 + 1e-12)


def test_star_constants_uniform(ab2):
    _, mu, system = ab2
    C_star, D, C4 = star_constants(system, mu, 4.0)
    assert D == pytest.approx((C_star / system.c) ** 2, rel=1e-12) and C4 == 2 * D


@pytest.mark.parametrize("setup", ["ab1", "ab2"])
def test_cylinders_sit_in_balls(setup, request, rng):
    Z, _, system = request.getfixturevalue(setup)
    worst = 0.0
    for _ in range(200):
        P = random_admissible(system, PARAMS, rng)
        ok, ratio = cylinder_in_ball_check(P, Z, C3=1e6, samples=200, seed=int(rng.integers(1 << 30)))
        assert ok
        worst = max(worst, ratio)
        if is_admissible(P, PARAMS) is Admissibility.SMALL:
            # explicit cosh bound for small cylinders
            lr = P.log_r
            bound = math.cosh(lr) + system.C1 ** 2 * math.e ** 4 * PARAMS.lam ** 2 * lr ** 2 * P.r / 2
            assert math.cosh(ratio * lr) <= bound
    assert math.isfinite(worst)


def test_product_containment(ab1, rng):
    Z, _, system = ab1
    for _ in range(20):
        P1 = random_admissible(system, PARAMS, rng)
        P2 = Cylinder(math.exp(rng.uniform(0.1, 2)), Ball((0.0,), rng.uniform(0.1, 3.0)), math.exp(rng.uniform(-2, 2)))
        lo, hi = system.bounds(P1.cube)
        R = psi_ball_radius(P1, P2.base.radius)
        rhs = Cylinder(P1.r * P2.r, Ball(((lo[0] + hi[0]) / 2,), (hi[0] - lo[0]) / 2 + R), P1.a * P2.a)
        n, t = sample_cylinder(rhs, Z, rng, 1000)
        # keep points of E1 + B(0, R): the ball base above is its convex hull in one dimension
        (n1, t1), (n2, t2) = product_factorization(P1, P2, Z, n, t)
        assert np.all(contains_flow(P1, n1, t1))
        assert np.all(contains_flow(P2, n2, t2, Z.spec))
        g1n, g1a = from_flow_array(Z, n1, t1)
        g2n, g2a = from_flow_array(Z, n2, t2)
        xn, xa = from_flow_array(Z, n, t)
        for i in range(0, 1000, 97):
            prod = group_mul(GroupPoint(g1n[i], g1a[i]), GroupPoint(g2n[i], g2a[i]), Z.spec)
            assert np.allclose(prod.n, xn[i], atol=1e-9) and math.isclose(prod.a, xa[i], rel_tol=1e-12)


def test_random_admissible_kinds(ab2, rng):
    _, _, system = ab2
    for kind, expected in (("large", Admissibility.LARGE), ("small", Admissibility.SMALL)):
        for _ in range(100):
            assert is_admissible(random_admissible(system, PARAMS, rng, kind=kind), PARAMS) is expected


def test_record(ab1):
    _, _, system = ab1
    P = cyl(system, [0.0], -10, 4.0, 1.0)
    rec = cylinder_record(P, PARAMS)
    assert rec["admissible"] == "large" and rec["base"]["generation"] == -10
    assert json.loads(json.dumps(rec)) == rec
    assert cylinder_record(cyl(system, [0.0], -10, 4.0, 1e6), PARAMS)["admissible"] is None


def test_heisenberg_cylinders(heis, rng):
    Z, _, system = heis
    Q = system.cube_at([0.5, 0.0, 0.2], system.k_min)
    lo, hi = anchor_range(Q.generation, 3.0, PARAMS)
    P = Cylinder(3.0, Q, math.exp(0.5 * (lo + hi)))
    assert is_admissible(P, PARAMS) is Admissibility.LARGE
    n, t = sample_cylinder(P, Z, rng, 500)
    assert np.all(contains_flow(P, n, t))
    gn, ga = from_flow_array(Z, n, t)
    assert np.all(contains_array(P, Z, gn, ga))
    star = enlargement_star(P, Z)
    nx, tx, _, _ = sample_star_neighbourhood(P, Z, rng, 2000)
    assert np.all(contains_flow(star.cover, nx, tx, Z.spec))
