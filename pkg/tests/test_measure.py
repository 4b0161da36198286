import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from czflow.group import GroupPoint, GroupSpec, VerticalField, base_inv, base_mul, exp_tZ, group_mul, norm_N
from czflow.measure import (
    KORANYI_BALL_CONSTANT,
    FlowMeasure,
    base_density,
    density_array,
    density_at,
    estimate_doubling,
    haar_ball_volume,
    mu_N_of_ball,
    mu_N_of_box,
)

H1 = GroupSpec.heisenberg()


def test_uniform_density_is_one():
    mu = FlowMeasure(VerticalField(H1, [1.0, 0.0]))
    assert density_at(mu, GroupPoint([3.0, -1.0, 2.0], 0.1)) == 1.0


@pytest.mark.parametrize("s", [-0.5, 1.0, 2.5])
def test_power_density_at_unit_height(s):
    Z = VerticalField(GroupSpec.abelian(2), [0.4, 1.0])
    mu = FlowMeasure(Z, "power", s)
    n = np.array([1.5, -0.5])
    assert density_at(mu, GroupPoint(n, 1.0)) == pytest.approx((1 + n @ n) ** (s / 2), rel=1e-14)


@given(s=st.floats(-3, 3), la=st.floats(-3, 3), q=st.floats(-4, 4))
def test_density_invariant_along_the_flow(s, la, q):
    Z = VerticalField(GroupSpec.abelian(1), [1.3])
    mu = FlowMeasure(Z, "power", 1.5)
    x = GroupPoint([q], math.exp(la))
    y = group_mul(x, exp_tZ(Z, s), Z.spec)
    assert density_at(mu, y) == pytest.approx(density_at(mu, x), rel=1e-9)


def test_ball_volume_examples():
    R1 = GroupSpec.abelian(1)
    assert haar_ball_volume(R1, 1.0) == pytest.approx(2.0, rel=1e-15)
    assert KORANYI_BALL_CONSTANT == pytest.approx(oracles.KORANYI_UNIT_BALL, rel=1e-15)
    for spec, M in ((R1, 1), (GroupSpec.abelian(3), 3), (H1, 4)):
        assert haar_ball_volume(spec, 2.0) / haar_ball_volume(spec, 1.0) == pytest.approx(2.0 ** M, rel=1e-14)
    assert haar_ball_volume(H1, 1e-8) < 1e-30


def test_koranyi_volume_by_sampling_and_translation(rng):
    # hit-or-miss in a box holding the translated ball; translation invariance of Haar measure
    c = np.array([1.0, -2.0, 0.5])
    N = 400_000
    for center in (np.zeros(3), c):
        lo = center - np.array([3.0, 3.0, 3.0])
        pts = rng.uniform(lo, lo + 6.0, size=(N, 3))
        inside = norm_N(H1, base_mul(H1, base_inv(H1, center), pts)) <= 1.0
        vol = 216.0 * inside.mean()
        assert vol == pytest.approx(oracles.KORANYI_UNIT_BALL, rel=0.02)


def test_power_weight_quadrature():
    Z1 = VerticalField(GroupSpec.abelian(1), [0.0])
    Z2 = VerticalField(GroupSpec.abelian(2), [0.0, 0.0])
    assert mu_N_of_box(FlowMeasure(Z1, "power", 1.0), [0.0], [1.0]) == pytest.approx(
        oracles.POWER_S1_UNIT_INTERVAL, rel=1e-10)
    assert mu_N_of_ball(FlowMeasure(Z2, "power", 1.0), [0.0, 0.0], 1.0) == pytest.approx(
        oracles.POWER_S1_UNIT_DISC, rel=1e-6)


def test_off_center_power_ball_matches_box_sum(rng):
    # a ball is a limit of fine boxes; compare with a midpoint-rule estimate
    Z = VerticalField(GroupSpec.abelian(2), [0.0, 0.0])
    mu = FlowMeasure(Z, "power", 2.0)
    c, R = np.array([1.0, 0.5]), 0.8
    h = 2 * R / 800
    g = np.arange(800) * h + h / 2 - R
    X, Y = np.meshgrid(g + c[0], g + c[1])
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    mask = np.sum((pts - c) ** 2, axis=1) <= R * R
    est = h * h * base_density(mu, pts[mask]).sum()
    assert mu_N_of_ball(mu, c, R) == pytest.approx(est, rel=2e-3)


@pytest.mark.parametrize("spec, C, expected", [
    (GroupSpec.abelian(1), 2.0, 2.0),
    (GroupSpec.abelian(2), 2.0, 4.0),
    (H1, 2.0, 16.0),
    (H1, 1.0, 1.0),
])
def test_doubling_constant_examples(spec, C, expected):
    mu = FlowMeasure(VerticalField(spec))
    assert estimate_doubling(mu, C, 5.0).D == pytest.approx(expected, rel=1e-12)


def test_doubling_constant_power_weight():
    mu = FlowMeasure(VerticalField(GroupSpec.abelian(1), [0.0]), "power", 2.0)
    d2 = estimate_doubling(mu, 2.0, 10.0, samples=100, seed=3).D
    d4 = estimate_doubling(mu, 4.0, 10.0, samples=100, seed=3).D
    assert 2.0 <= d2 <= d4
    # weighted balls far from the origin behave like Euclidean ones; near 0 the weight adds mass
    assert d2 <= 2.0 * 2.0 ** 2


def test_density_array_broadcasts():
    Z = VerticalField(GroupSpec.abelian(2), [1.0, 1.0])
    mu = FlowMeasure(Z, "power", 1.0)
    a = np.array([1.0, 2.0, 3.0, 4.0])
    # the flow line through the identity is (n(t), e^t), where the density is psi(0) = 1
    n = (a - 1.0)[:, None] * np.array([1.0, 1.0])
    assert np.allclose(density_array(mu, n, a), 1.0)


@pytest.mark.parametrize("preset, kind, s", [("haar", "uniform", 0.0), ("power:s=1.5", "power", 1.5), ("power:-0.5", "power", -0.5)])
def test_presets(preset, kind, s):
    mu = FlowMeasure.from_preset(VerticalField(GroupSpec.abelian(1), [0.0]), preset)
    assert mu.kind == kind and mu.s == s


def test_invalid_measures():
    with pytest.raises(ValueError):
        FlowMeasure(VerticalField(H1), "power", 1.0)
    with pytest.raises(ValueError):
        FlowMeasure(VerticalField(GroupSpec.abelian(2)), "power", -2.0)
    with pytest.raises(ValueError):
        FlowMeasure.from_preset(VerticalField(H1), "lebesgue?")
    with pytest.raises(ValueError):
        mu_N_of_ball(FlowMeasure(VerticalField(H1)), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        estimate_doubling(FlowMeasure(VerticalField(H1)), 0.5, 1.0)
