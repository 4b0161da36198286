import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import abelian_setup, make_family
from czflow.cylinders import AdmissibilityParams, Cylinder, sample_cylinder
from czflow.maximal import (
    HLCatalog,
    SimpleFunction,
    alpha_grid,
    cz_decompose,
    dyadic_maximal_flow,
    greedy_cover,
    hl_maximal_flow,
    random_simple_function,
    verify_cover,
    weak11_campaign,
)

AB1 = abelian_setup(1, [0.7])
AB2 = abelian_setup(2, [0.3, -1.0])


def fresh(setup=AB1, up=2, down=3):
    return make_family(setup, AdmissibilityParams(), up=up, down=down)


def indicator(F, node, c=1.0):
    return SimpleFunction(F, [(c, node)])


def test_C2_value(params):
    assert params.C2 == pytest.approx(oracles.C2_DEFAULT, rel=1e-12)
    assert params.C2 == pytest.approx(3.0 * params.lam * math.e ** 3, rel=1e-15)


@given(seed=st.integers(0, 2 ** 31), terms=st.integers(1, 6))
@settings(max_examples=25)
def test_norm1_two_ways(seed, terms):
    F = fresh(AB2, up=1, down=2)
    f = random_simple_function(F, np.random.default_rng(seed), terms)
    assert f.norm1() == pytest.approx(f.norm1_refined(), rel=1e-11, abs=1e-300)


def test_terms_merge_and_cancel():
    F = fresh()
    P = F.chain_node(0)
    f = SimpleFunction(F, [(1.0, P), (2.0, P), (-3.0, P)])
    assert f.is_zero and f.norm1() == 0.0
    with pytest.raises(TypeError):
        SimpleFunction(F, [(1.0, P.cyl)])


def test_integrals_and_values(rng):
    F = fresh(AB2)
    f = random_simple_function(F, rng, 8)
    root = F.root
    assert f.integral(root) == pytest.approx(math.fsum(c * F.measure(nd) for c, nd in f.terms), rel=1e-12, abs=1e-9)
    # mean of pointwise values over a region matches the exact average
    n, t = sample_cylinder(root.cyl, F.Z, rng, 200_000)
    vals = f.value_flow(n, t)
    assert np.mean(np.abs(vals)) == pytest.approx(f.average(root), rel=0.05, abs=1e-3 * f.sup_abs())
    for nd, v, m in f.atoms():
        assert m >= -1e-9 * F.measure(nd)
    assert f.integral_cylinder(root.cyl) == pytest.approx(f.integral(root, absolute=True), rel=1e-12)


def test_dyadic_maximal_of_indicator(rng):
    F = fresh()
    P0 = F.chain_node(0)
    f = indicator(F, P0)
    n, t = sample_cylinder(P0.cyl, F.Z, rng, 300)
    assert np.allclose(dyadic_maximal_flow(F, f, n, t), 1.0)


def test_dyadic_maximal_off_a_child(rng):
    F = fresh()
    P0 = F.chain_node(0)
    S, other = F.children(P0)[:2]
    f = indicator(F, S)
    n, t = sample_cylinder(other.cyl, F.Z, rng, 300)
    expected = F.measure(S) / F.measure(P0)
    assert np.allclose(dyadic_maximal_flow(F, f, n, t), expected, rtol=1e-12)


def test_dyadic_maximal_of_zero(rng):
    F = fresh()
    f = SimpleFunction(F, [])
    n, t = sample_cylinder(F.root.cyl, F.Z, rng, 10)
    assert np.all(dyadic_maximal_flow(F, f, n, t) == 0.0)


def test_cz_no_stops_when_alpha_is_large():
    F = fresh()
    f = indicator(F, F.chain_node(0))
    rep = cz_decompose(F, f, 1.0)
    assert rep.stopping == [] and rep.ok
    assert rep.g.norm1() == pytest.approx(f.norm1(), rel=1e-15)


def test_cz_stops_at_the_support():
    F = fresh()
    P0 = F.chain_node(0)
    f = indicator(F, P0)
    rep = cz_decompose(F, f, 0.5)
    assert [nd.uid for nd in rep.stopping] == [P0.uid]
    assert rep.ok, rep.certificates
    assert rep.bounds["sup_g"] == pytest.approx(1.0)


def test_cz_zero_function():
    F = fresh()
    rep = cz_decompose(F, SimpleFunction(F, []), 0.3)
    assert rep.stopping == [] and rep.bad == [] and rep.ok


def test_cz_rejects_bad_input():
    F, G = fresh(), fresh()
    f = indicator(F, F.root)
    with pytest.raises(ValueError):
        cz_decompose(F, f, 0.0)
    with pytest.raises(ValueError):
        cz_decompose(G, f, 1.0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_cz_good_plus_bad_is_f(seed):
    rng = np.random.default_rng(seed)
    F = fresh(AB2)
    f = random_simple_function(F, rng, 6)
    alpha = 2.0 * f.norm1() / F.measure(F.chain_node(0))
    rep = cz_decompose(F, f, alpha)
    assert rep.ok, rep.certificates
    n, t = sample_cylinder(F.root.cyl, F.Z, rng, 20_000)
    total = rep.g.value_flow(n, t) + sum(b.value_flow(n, t) for b in rep.bad)
    assert np.allclose(total, f.value_flow(n, t), atol=1e-9)
    # stopping cylinders are pairwise disjoint in the tree
    for i, P in enumerate(rep.stopping):
        for Q in rep.stopping[i + 1:]:
            assert not F.is_ancestor(P, Q) and not F.is_ancestor(Q, P)


def test_cz_extends_the_chain_when_needed():
    F = fresh(up=0, down=2)
    P0 = F.chain_node(0)
    f = indicator(F, P0, 1.0)
    rep = cz_decompose(F, f, 0.2)
    assert F.up >= 1 and rep.ok
    assert f.average(F.root) <= 0.2


def test_hl_dominates_dyadic(rng):
    F = fresh(down=2)
    f = random_simple_function(F, rng, 5, signed=False)
    cat = HLCatalog.around_family(F, pad=1, per_decade=8, with_family=True)
    n, t = f.sample_support(rng, 400)
    hl = hl_maximal_flow(cat, f, n, t)
    dy = dyadic_maximal_flow(F, f, n, t)
    assert np.all(hl >= dy * (1 - 1e-12))
    assert np.all(hl <= f.sup_abs() * (1 + 1e-12))


def test_catalog_needs_content(params):
    with pytest.raises(ValueError):
        HLCatalog(AB1[2], params, [], explicit=())


def test_greedy_cover_examples():
    system = AB1[2]
    Q = system.cube_at([0.1], 0)
    big = Cylinder(math.e, Q, 1.0)
    child = Cylinder(math.e, system.children_cubes(Q)[0], 1.0)
    far = Cylinder(math.e, system.cube_at([5.1], 0), 1.0)
    assert greedy_cover([child, big, far]) == [1, 2]
    assert greedy_cover([]) == []
    # equal generation: ids decide
    assert greedy_cover([big, big], ids=[7, 3]) == [1]


def test_verify_cover_on_family_nodes(params, rng):
    F = fresh(AB2, up=1, down=2)
    cyls = [nd.cyl for nd in F.walk(1)]
    chosen = greedy_cover(cyls)
    rep = verify_cover(cyls, chosen, params, F.Z, rng, samples=50)
    assert rep["ok"], rep
    assert len(chosen) == 1


def test_alpha_grid_range(rng):
    F = fresh()
    f = random_simple_function(F, rng, 4)
    W = F.measure(F.root)
    grid = alpha_grid(f, W)
    assert grid[0] == pytest.approx(f.norm1() / W)
    assert grid[-1] <= 2 * f.sup_abs() and np.all(np.diff(grid) > 0)


def test_small_weak11_run(params):
    rng = np.random.default_rng(4)
    F = fresh(down=2)
    fs = [random_simple_function(F, rng, 3) for _ in range(2)]
    cat = HLCatalog.around_family(F, pad=1, per_decade=4)
    rows = weak11_campaign(cat, fs, [alpha_grid(f, F.measure(F.root), 8.0) for f in fs], params, samples=2000)
    assert rows and all(r["margin"] >= 0 for r in rows)
    assert {r["function_id"] for r in rows} == {0, 1}
