import json

import numpy as np
import pytest

from ergobound import ModelError, ModelKind, build_absorbing, build_bdpc, build_general, build_szk, eval_A, validate
from ergobound.models import ConfigError, birth_death_q, is_homogeneous, load_model, model_from_config, model_to_config

import oracles
from cases import TWO_PI, example1, example3, random_case


def test_two_state():
    m = build_bdpc(1, ["1"], ["2"], ["0"])
    np.testing.assert_array_equal(eval_A(m, 0.3), [[-1, 2], [1, -2]])


def test_bdpc_s2_catastrophe_entries():
    m = build_bdpc(2, ["1", "1"], ["2", "2"], ["0.5", "0.5"])
    A = eval_A(m, 0.0)
    assert A[0, 1] == 2.5 and A[0, 2] == 0.5
    assert np.abs(A.sum(axis=0)).max() < 1e-14
    np.testing.assert_allclose(A, oracles.bdpc_matrix([1, 1], [2, 2], [0.5, 0.5]), atol=1e-15)


def test_example1_family_accepted():
    m = example1(S=3, lam="2.5", mu="1.5")
    assert validate(m).ok
    assert np.abs(eval_A(m, 1.0).sum(axis=0)).max() < 1e-14
    A = eval_A(m, 0.0)
    np.testing.assert_allclose(A, oracles.bdpc_matrix([2.5] * 3, [1.5, 3.0, 4.5], [2.5, 2.5, 0.0]), atol=1e-15)


def test_example1_birth_entry():
    m = build_bdpc(2, [f"2 + sin({TWO_PI}*t)"] * 2, ["3", "6"], [f"2 + sin({TWO_PI}*t)", "0"])
    assert eval_A(m, 0.25)[1, 0] == pytest.approx(3.0, abs=1e-15)


def test_szk_s2():
    m = build_szk(2, ["2", "1"], ["2", "1"])
    np.testing.assert_array_equal(eval_A(m, 0.0), [[-3, 2, 1], [2, -4, 2], [1, 2, -3]])


def test_szk_monotonicity_rejected():
    with pytest.raises(ModelError) as err:
        build_szk(2, ["1", "2"], ["1", "1"])
    v = err.value.violations[0]
    assert v.kind == "monotonicity" and v.k == 1 and v.t == 0.0


def test_szk_example2_accepted():
    S = 6
    m = build_szk(S, [f"(2 + sin({TWO_PI}*t))/{k}" for k in range(1, S + 1)], [f"3/{k}" for k in range(1, S + 1)])
    assert validate(m).ok


def test_absorbing_example3_small():
    m = example3(S=3, phi="1")
    B = eval_A(m, 0.0)[1:, 1:]
    np.testing.assert_array_equal(B, [[-5, 6, 0], [2, -8, 2], [0, 2, -2]])
    assert not eval_A(m, 0.0)[:, 0].any()


def test_absorbing_single_state():
    m = build_absorbing(1, {(1, 0): "4"})
    np.testing.assert_array_equal(eval_A(m, 0.0), [[0, 4], [0, -4]])


def test_absorbing_rejects_exit_from_zero():
    with pytest.raises(ModelError, match="absorbing"):
        build_absorbing(2, {(0, 1): "1", (1, 0): "1"})


def test_sparse_errors():
    with pytest.raises(ModelError):
        build_general(2, {(1, 1): "1"})
    with pytest.raises(ModelError):
        build_general(2, {(1, 3): "1"})
    with pytest.raises(ModelError):
        build_bdpc(2, ["1"], ["1", "1"], ["0", "0"])


def test_negative_rate_reported():
    rep = validate(build_bdpc(1, [f"sin({TWO_PI}*t)"], ["1"], ["0"], check=False), horizon=1.0, samples=5)
    assert not rep.ok
    v = rep.violations[0]
    assert v.kind == "negativity" and v.t == pytest.approx(0.75)
    with pytest.raises(ModelError):
        build_bdpc(1, [f"sin({TWO_PI}*t)"], ["1"], ["0"])


def test_eval_A_refuses_negative_offdiagonal():
    m = build_general(1, {(0, 1): "t - 1", (1, 0): "1"}, check=False)
    with pytest.raises(ModelError):
        eval_A(m, 0.0)
    with pytest.raises(ValueError):
        eval_A(m, -1.0)


def test_validation_flags():
    rep = validate(example3(S=3))
    assert rep.flags["absorbing_row_zero"] and rep.flags["columns_sum_zero"] and rep.flags["nonnegative"]
    assert "no violations" in str(rep)


def test_is_homogeneous():
    assert is_homogeneous(example1(S=2, lam="1"))
    assert not is_homogeneous(example1(S=2))
    assert not is_homogeneous(build_general(1, {(0, 1): "piecewise[(0,1),(3,2)]", (1, 0): "1"}))


# -- properties ------------------------------------------------------------


@pytest.mark.parametrize("kind", ["bdpc", "szk", "absorbing", "general"])
def test_column_sums_vanish(kind):
    rng = np.random.default_rng(11)
    for _ in range(5):
        m, _ = random_case(rng, kind)
        for t in rng.uniform(0, 10, 50):
            A = eval_A(m, t)
            assert np.abs(A.sum(axis=0)).max() < 1e-14 * max(1.0, np.abs(A).max())


def test_bdpc_matches_entrywise_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        m, _ = random_case(rng, "bdpc")
        for t in rng.uniform(0, 5, 5):
            v = m.rate_values(t)
            S = m.S
            np.testing.assert_allclose(eval_A(m, t), oracles.bdpc_matrix(v[:S], v[S:2 * S], v[2 * S:]),
                                       rtol=0, atol=1e-13)


def test_bdpc_without_catastrophes_is_birth_death():
    rng = np.random.default_rng(4)
    S = 6
    lam = [f"{c:.4g}*(1 + 0.5*sin({w:.3g}*t))" for c, w in zip(rng.uniform(0.5, 2, S), rng.uniform(1, 5, S))]
    mu = [f"{c:.4g}" for c in rng.uniform(0.5, 2, S)]
    m = build_bdpc(S, lam, mu, ["0"] * S)
    q = birth_death_q({k: lam[k] for k in range(S)}, {k: mu[k - 1] for k in range(1, S + 1)})
    g = build_general(S, q)
    for t in rng.uniform(0, 5, 20):
        A = eval_A(m, t)
        np.testing.assert_array_equal(A, eval_A(g, t))
        assert not np.triu(A, 2).any() and not np.tril(A, -2).any()


def test_szk_single_batch_is_birth_death():
    rng = np.random.default_rng(5)
    S = 5
    lam, mu = f"1 + 0.5*cos({TWO_PI}*t)", "piecewise[(0,2),(0.5,1)]"
    m = build_szk(S, [lam] + ["0"] * (S - 1), [mu] + ["0"] * (S - 1))
    b = build_bdpc(S, [lam] * S, [mu] * S, ["0"] * S)
    for t in rng.uniform(0, 3, 20):
        np.testing.assert_array_equal(eval_A(m, t), eval_A(b, t))


# -- config files ------------------------------------------------------------


def test_config_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    for kind in ("bdpc", "szk", "absorbing", "general"):
        m, _ = random_case(rng, kind, S=4)
        cfg = model_to_config(m)
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(cfg))
        back = load_model(path)
        assert back.kind is ModelKind(kind)
        for t in (0.0, 0.3, 1.7):
            np.testing.assert_array_equal(back.A(t), m.A(t))


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "bdpc",\n "S": 2,\n "lambda": ["1", "1"] "mu": []}')
    with pytest.raises(ConfigError, match="line 3"):
        load_model(bad)
    with pytest.raises(ConfigError):
        model_from_config({"kind": "nope", "S": 1})
    with pytest.raises(ConfigError):
        model_from_config({"kind": "szk", "S": 1, "lambda": ["1"]})
