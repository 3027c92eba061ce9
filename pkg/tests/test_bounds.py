import math

import numpy as np
import pytest

from ergobound import RateProfile, WeightMatrix, alpha_profile, envelopes, ergodicity_diagnosis, reduce
from ergobound import to_total_variation
from ergobound.rates import QuadratureError

from cases import TWO_PI, example2, example3, example3_weights, random_case


def test_example2_envelope_at_one():
    env = envelopes(alpha_profile(reduce(example2(S=10)), WeightMatrix.ones("cumulative-upper", 10)))
    assert env.U(1.0) == pytest.approx(math.exp(-5.0), rel=1e-10)
    assert env.L(1.0) == pytest.approx(math.exp(-5.0), rel=1e-10)


def test_constant_rate_envelopes():
    env = envelopes(RateProfile("0.7"))
    for t in (0.0, 0.5, 3.0):
        assert env.U(t) == pytest.approx(math.exp(-0.7 * t), rel=1e-12)
        assert env.L(t) == env.U(t)
    assert env.U(0.0) == env.L(0.0) == 1.0


def test_negative_stretch_grows_U():
    env = envelopes(RateProfile("piecewise[(0,1),(1,-2),(2,1)]"))
    g = env.grid([0.0, 1.0, 1.5, 2.0])
    assert g["U"][2] > g["U"][1] and g["U"][3] > g["U"][2]
    assert g["U"][3] == pytest.approx(math.exp(1.0), rel=1e-12)


def test_lower_envelope_below_upper():
    rng = np.random.default_rng(41)
    for _ in range(10):
        m, D = random_case(rng)
        g = envelopes(alpha_profile(reduce(m), D)).grid(np.linspace(0, 2, 21))
        assert np.all(g["L"] <= g["U"] * (1 + 1e-12))
        assert np.all(g["U"] > 0) and np.all(g["L"] > 0)
        assert np.all(g["beta_star"] <= g["beta_lower"])


def test_grid_matches_evaluators():
    m = example3(S=5)
    env = envelopes(alpha_profile(reduce(m), example3_weights(5)))
    ts = np.linspace(0, 1.7, 8)
    g = env.grid(ts)
    for k, t in enumerate(ts):
        assert g["U"][k] == pytest.approx(env.U(t), rel=1e-9)
        assert g["L"][k] == pytest.approx(env.L(t), rel=1e-9)
    with pytest.raises(ValueError):
        env.grid([1.0, 0.5])


def test_semigroup():
    rng = np.random.default_rng(42)
    tol = 1e-10
    for _ in range(10):
        m, D = random_case(rng)
        env = envelopes(alpha_profile(reduce(m), D), tol)
        t1, t2 = sorted(rng.uniform(0, 2, 2))
        lhs = math.log(env.U(t2)) - math.log(env.U(t1))
        assert abs(lhs + env.integral_star(t1, t2)) <= 10 * tol * 3


@pytest.mark.parametrize("which", ["example2", "example3"])
def test_sharp_cases_have_equal_envelopes(which):
    if which == "example2":
        ap = alpha_profile(reduce(example2(S=8)), WeightMatrix.ones("cumulative-upper", 8))
    else:
        ap = alpha_profile(reduce(example3(S=8)), example3_weights(8))
    g = envelopes(ap, 1e-10).grid(np.linspace(0, 2, 20))
    np.testing.assert_allclose(g["U"], g["L"], rtol=1e-9)


def test_envelope_matches_known_integral():
    env = envelopes(alpha_profile(reduce(example3(S=8)), example3_weights(8)))
    for t in (0.3, 1.0, 1.9):
        exact = t + 0.5 * math.sin(2 * math.pi * t) / (2 * math.pi)
        assert env.U(t) == pytest.approx(math.exp(-exact), rel=1e-9)


def test_envelopes_reject_bad_tol():
    with pytest.raises(ValueError):
        envelopes(RateProfile("1"), 0.0)


def test_quadrature_failure_propagates():
    env = envelopes(RateProfile("1/(t - 0.5)"))
    with pytest.raises(QuadratureError):
        env.U(1.0)


# -- ergodicity diagnosis ------------------------------------------------------


def test_diagnosis_positive():
    ap = alpha_profile(reduce(example2(S=5)), WeightMatrix.ones("cumulative-upper", 5))
    rep = ergodicity_diagnosis(ap, 10.0)
    assert rep.average == pytest.approx(5.0, rel=1e-9)
    assert rep.verdict == "weakly-ergodic-evidence"
    assert "cannot be decided" in str(rep)


def test_diagnosis_zero_rate():
    rep = ergodicity_diagnosis(RateProfile("0"), 5.0)
    assert rep.integral == 0.0 and rep.verdict == "negative-evidence"


def test_diagnosis_horizon_dependent():
    rep = ergodicity_diagnosis(RateProfile("piecewise[(0,1),(10,0)]"), 20.0)
    assert rep.average == pytest.approx(0.5, abs=1e-12)
    assert rep.verdict == "horizon-dependent"


def test_diagnosis_needs_positive_horizon():
    with pytest.raises(ValueError):
        ergodicity_diagnosis(RateProfile("1"), 0.0)


# -- total variation ------------------------------------------------------------


def test_total_variation():
    assert to_total_variation(0.3, WeightMatrix.ones("diagonal", 3)) == pytest.approx(0.6)
    assert to_total_variation(0.3, WeightMatrix.ones("cumulative-upper", 3)) == pytest.approx(1.2)
    assert to_total_variation(0.0, WeightMatrix.ones("diagonal", 2)) == 0.0
    with pytest.raises(ValueError):
        to_total_variation(-1.0, WeightMatrix.ones("diagonal", 2))


def test_total_variation_bounds_full_distance():
    rng = np.random.default_rng(43)
    for shape in ("diagonal", "cumulative-upper"):
        D = WeightMatrix(shape, tuple(np.exp(rng.uniform(-1, 1, 5))))
        for _ in range(100):
            pa, pb = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
            dz = pa[1:] - pb[1:]
            assert np.abs(pa - pb).sum() <= to_total_variation(np.abs(D.matrix() @ dz).sum(), D) * (1 + 1e-12)
