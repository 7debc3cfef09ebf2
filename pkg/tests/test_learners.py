import math

import numpy as np
import pytest

from homeleak.learners import (
    ForestMode,
    ForestParams,
    HmmModel,
    ModelError,
    forest_fit,
    forest_importances,
    forest_predict,
    hmm_fit_supervised,
    hmm_forward,
    hmm_viterbi,
    hmm_viterbi_scored,
    knn_fit,
    knn_predict,
    knn_predict_one,
    load_model,
    save_model,
)

import oracles


def gaussian_toy(seed, n=40):
    rng = np.random.default_rng(seed)
    y = ["A"] * (n // 2) + ["B"] * (n - n // 2)
    X = np.vstack([rng.normal(0, 1, (n // 2, 2)), rng.normal(1.5, 1, (n - n // 2, 2))])
    return X, y


def knn_loo(X, y, k):
    out = []
    for q in range(len(y)):
        keep = [i for i in range(len(y)) if i != q]
        m = knn_fit(X[keep], [y[i] for i in keep], k)
        out.append(knn_predict_one(m, X[q]))
    return out


def random_hmm(rng, S, bits):
    pi = rng.dirichlet(np.ones(S))
    A = rng.dirichlet(np.ones(S), size=S)
    E = rng.uniform(0.05, 0.95, size=(S, bits))
    return HmmModel(tuple(f"s{i}" for i in range(S)), pi, A, E, 0.0)


def emission_table(model, obs):
    return [[math.prod(e if o else 1 - e for e, o in zip(model.emission[s], row)) for row in obs]
            for s in range(len(model.states))]


# --------------------------------------------------------------------------
# kNN

def test_knn_separated_clusters():
    X = [[0, 0]] * 3 + [[10, 10]] * 3
    m = knn_fit(X, ["A"] * 3 + ["B"] * 3, k=3)
    assert knn_predict_one(m, [1, 1]) == "A"


def test_knn_k1_returns_training_label():
    X, y = gaussian_toy(0)
    m = knn_fit(X, y, k=1)
    assert knn_predict(m, X) == y


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_leave_one_out_matches_oracle(k):
    X, y = gaussian_toy(3)
    assert knn_loo(X, y, k) == oracles.o_knn_loo(X, y, k)


def test_knn_tie_break_prefers_closer_label():
    m = knn_fit([[0.0], [3.0], [10.0], [11.0]], ["far", "near", "x", "y"], k=2)
    assert knn_predict_one(m, [2.0]) == "near"


def test_knn_constant_feature_ignored():
    m = knn_fit([[0, 5], [1, 5], [10, 5]], ["a", "a", "b"], k=1)
    assert m.scale[1] == 0
    assert knn_predict_one(m, [9, 100]) == "b"


def test_knn_argument_checks():
    with pytest.raises(ValueError):
        knn_fit([[0.0]], ["a"], k=2)
    with pytest.raises(ValueError):
        knn_fit([[0.0], [1.0]], ["a"], k=1)
    m = knn_fit([[0.0, 1.0]], ["a"], k=1)
    with pytest.raises(ValueError):
        knn_predict(m, [[0.0]])


# --------------------------------------------------------------------------
# forests

def test_forest_separable_training_accuracy():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (120, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int).tolist()
    m = forest_fit(X, y, ForestParams(n_trees=100), seed=1)
    assert forest_predict(m, X) == y


def test_forest_importance_concentrates_on_signal():
    imp = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 1, (150, 4))
        y = (X[:, 0] > 0.5).astype(int).tolist()
        imp.append(forest_importances(forest_fit(X, y, ForestParams(n_trees=30), seed)))
    assert np.mean(imp, axis=0)[0] > 0.9


@pytest.mark.parametrize("mode", list(ForestMode))
def test_forest_deterministic_and_job_independent(mode):
    X, y = gaussian_toy(5, 60)
    p = ForestParams(n_trees=12, mode=mode)
    a, b, c = forest_fit(X, y, p, 7), forest_fit(X, y, p, 7), forest_fit(X, y, p, 7, jobs=3)
    assert a.to_json() == b.to_json() == c.to_json()
    assert forest_fit(X, y, p, 8).to_json() != a.to_json()


def test_forest_params_validation():
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        ForestParams(min_samples_leaf=0)
    assert ForestParams().features_per_split(88) == 9


def test_forest_respects_depth_limit():
    X, y = gaussian_toy(2, 80)
    m = forest_fit(X, y, ForestParams(n_trees=5, max_depth=1), 0)
    assert all(sum(f >= 0 for f in t.feature) <= 1 for t in m.trees)


# --------------------------------------------------------------------------
# HMM

def test_bigram_counts_without_smoothing():
    m = hmm_fit_supervised([([[0], [0], [1]], ["Idle", "Idle", "A1"])], ["Idle", "A1"], alpha=0.0)
    assert m.A[0].tolist() == [0.5, 0.5]


def test_unobserved_state_row_is_uniform():
    states = [f"s{i}" for i in range(7)]
    m = hmm_fit_supervised([([[0], [1]], ["s0", "s1"])], states, alpha=1.0)
    assert np.allclose(m.A[6], 1 / 7)


def test_emission_smoothing_closed_form():
    m = hmm_fit_supervised([([[1]] * 100, ["A3"] * 100)], ["Idle", "A3"], alpha=0.01)
    assert m.emission[1, 0] == pytest.approx((100 + 0.01) / (100 + 0.02))


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        hmm_fit_supervised([([[0]], ["nope"])], ["Idle"])


def test_deterministic_emissions_decode():
    m = HmmModel(("a", "b"), np.array([0.5, 0.5]), np.full((2, 2), 0.5), np.array([[0.0], [1.0]]), 0.0)
    assert hmm_viterbi(m, [[1]] * 5) == ["b"] * 5


def test_uniform_model_likelihood_closed_form():
    S, T = 3, 6
    m = HmmModel(tuple("abc"), np.full(S, 1 / S), np.full((S, S), 1 / S), np.full((S, 2), 0.3), 0.0)
    obs = [[1, 0]] * T
    assert hmm_forward(m, obs) == pytest.approx(T * (math.log(0.3) + math.log(0.7)))


@pytest.mark.parametrize("seed", range(10))
def test_viterbi_and_forward_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_hmm(rng, 3, 2)
    obs = rng.integers(0, 2, size=(4, 2)).tolist()
    path, lp, ll = oracles.o_hmm(m.pi, m.A, emission_table(m, obs), obs)
    got, score = hmm_viterbi_scored(m, obs)
    assert got == [m.states[i] for i in path]
    assert score == pytest.approx(lp, abs=1e-9)
    assert hmm_forward(m, obs) == pytest.approx(ll, abs=1e-9)


def test_width_mismatch():
    m = random_hmm(np.random.default_rng(0), 2, 3)
    with pytest.raises(ValueError):
        hmm_viterbi(m, [[0, 1]])


# --------------------------------------------------------------------------
# persistence

def test_models_round_trip(tmp_path):
    X, y = gaussian_toy(1)
    models = [knn_fit(X, y, 3), forest_fit(X, y, ForestParams(n_trees=3), 0),
              hmm_fit_supervised([([[0], [1]], ["a", "b"])], ["a", "b"])]
    for i, m in enumerate(models):
        back = load_model(save_model(m, tmp_path / f"m{i}.json"))
        assert back.to_json() == m.to_json()
    assert knn_predict(load_model(tmp_path / "m0.json"), X) == knn_predict(models[0], X)


def test_load_model_errors(tmp_path):
    with pytest.raises(ModelError):
        load_model(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ModelError):
        load_model(tmp_path / "bad.json")
    (tmp_path / "other.json").write_text('{"format": "x"}')
    with pytest.raises(ModelError):
        load_model(tmp_path / "other.json")
