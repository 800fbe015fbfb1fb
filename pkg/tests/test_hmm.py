import math

import numpy as np
import pytest

from streamrec.errors import DataError
from streamrec.hmm import (
    HmmParams,
    TrainConfig,
    baum_welch,
    forward_log_likelihood,
    params_from_dict,
    params_to_dict,
    predict_next_obs,
    viterbi,
)

from oracles import (
    enum_best_path_logprob,
    enum_log_likelihood,
    path_logprob,
    random_hmm_params,
    sample_hmm_sequence,
)


def uniform_params(n_states, n_obs):
    return HmmParams(
        n_states,
        n_obs,
        np.full(n_states, 1.0 / n_states),
        np.full((n_states, n_states), 1.0 / n_states),
        np.full((n_states, n_obs), 1.0 / n_obs),
    )


class TestBaumWelch:
    def test_one_state_closed_form(self):
        fit = baum_welch([[0, 0, 1]], n_states=1, n_obs=2)
        p = fit.params
        assert np.allclose(p.A, [[1.0]])
        assert np.allclose(p.pi, [1.0])
        assert np.allclose(p.B, [[2 / 3, 1 / 3]], atol=1e-6)

    def test_constant_sequence_concentrates_emissions(self):
        for n in (1, 2, 3):
            fit = baum_welch([[2, 2, 2, 2]], n_states=n, n_obs=3, config=TrainConfig(seed=7))
            assert np.all(fit.params.B[:, 2] > 0.999)

    def test_learned_beats_uniform_on_sampled_data(self):
        rng = np.random.default_rng(42)
        truth = HmmParams(
            2,
            3,
            np.array([0.6, 0.4]),
            np.array([[0.85, 0.15], [0.2, 0.8]]),
            np.array([[0.7, 0.2, 0.1], [0.05, 0.15, 0.8]]),
        )
        obs = sample_hmm_sequence(rng, truth, 2000)
        fit = baum_welch([obs], 2, 3, config=TrainConfig(seed=1, max_iterations=30))
        ll_learned = forward_log_likelihood(fit.params, obs)
        ll_uniform = forward_log_likelihood(uniform_params(2, 3), obs)
        assert ll_learned >= ll_uniform

    def test_monotone_history_and_stochastic_rows(self):
        rng = np.random.default_rng(3)
        for seed in range(12):
            truth = random_hmm_params(rng, 3, 4)
            seqs = [sample_hmm_sequence(rng, truth, 60) for _ in range(3)]
            cfg = TrainConfig(seed=seed, max_iterations=40)
            fit = baum_welch(seqs, 3, 4, config=cfg)
            diffs = np.diff(fit.history)
            assert np.all(diffs >= -1e-9), f"seed {seed}: EM decreased by {diffs.min()}"
            p = fit.params
            p.validate()
            assert np.all(p.A >= cfg.floor) and np.all(p.B >= cfg.floor)
            assert np.all(p.pi >= cfg.floor)

    def test_multisequence_pools_counts(self):
        fit = baum_welch([[0, 0], [1, 1]], n_states=1, n_obs=2)
        assert np.allclose(fit.params.B, [[0.5, 0.5]], atol=1e-9)

    def test_errors(self):
        with pytest.raises(DataError):
            baum_welch([], 2, 2)
        with pytest.raises(DataError):
            baum_welch([[]], 2, 2)
        with pytest.raises(DataError):
            baum_welch([[0, 5]], 2, 3)

    def test_deterministic_given_seed(self):
        seqs = [[0, 1, 2, 1, 0, 2, 2]]
        a = baum_welch(seqs, 2, 3, config=TrainConfig(seed=11))
        b = baum_welch(seqs, 2, 3, config=TrainConfig(seed=11))
        assert np.array_equal(a.params.A, b.params.A)
        assert np.array_equal(a.params.B, b.params.B)
        assert a.history == b.history


class TestForward:
    def test_single_state_single_path(self):
        p = HmmParams(1, 2, np.array([1.0]), np.array([[1.0]]), np.array([[0.3, 0.7]]))
        assert forward_log_likelihood(p, [0, 1]) == pytest.approx(math.log(0.3 * 0.7), abs=1e-12)

    def test_empty_sequence_is_zero(self):
        p = uniform_params(3, 2)
        assert forward_log_likelihood(p, []) == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(9)
        p = random_hmm_params(rng, 3, 4)
        obs = [int(x) for x in rng.integers(0, 4, size=6)]
        assert forward_log_likelihood(p, obs) == pytest.approx(
            enum_log_likelihood(p, obs), abs=1e-9
        )

    def test_permutation_symmetry(self):
        rng = np.random.default_rng(17)
        p = random_hmm_params(rng, 4, 3)
        perm = np.array([2, 0, 3, 1])
        q = HmmParams(4, 3, p.pi[perm], p.A[np.ix_(perm, perm)], p.B[perm])
        obs = [int(x) for x in rng.integers(0, 3, size=12)]
        assert forward_log_likelihood(p, obs) == pytest.approx(
            forward_log_likelihood(q, obs), abs=1e-9
        )


class TestViterbi:
    def test_single_state_path(self):
        p = HmmParams(1, 2, np.array([1.0]), np.array([[1.0]]), np.array([[0.5, 0.5]]))
        path, _ = viterbi(p, [0, 1, 0, 1])
        assert path == [0, 0, 0, 0]

    def test_deterministic_emissions_force_path(self):
        # B is a permutation: state 0 emits symbol 1, state 1 emits symbol 0.
        p = HmmParams(
            2,
            2,
            np.array([0.5, 0.5]),
            np.array([[0.5, 0.5], [0.5, 0.5]]),
            np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        path, _ = viterbi(p, [1, 0, 0, 1])
        assert path == [0, 1, 1, 0]

    def test_matches_enumeration(self):
        rng = np.random.default_rng(23)
        p = random_hmm_params(rng, 4, 3)
        obs = [int(x) for x in rng.integers(0, 3, size=8)]
        path, logp = viterbi(p, obs)
        assert logp == pytest.approx(enum_best_path_logprob(p, obs), abs=1e-9)
        assert path_logprob(p, obs, path) == pytest.approx(logp, abs=1e-9)

    def test_empty_sequence_raises(self):
        with pytest.raises(DataError):
            viterbi(uniform_params(2, 2), [])


class TestPredictNextObs:
    def test_single_state_returns_emission_row(self):
        p = HmmParams(1, 3, np.array([1.0]), np.array([[1.0]]), np.array([[0.2, 0.5, 0.3]]))
        assert np.allclose(predict_next_obs(p, [1, 2, 0]), [0.2, 0.5, 0.3])

    def test_identity_transitions_return_decoded_state_row(self):
        p = HmmParams(
            2,
            2,
            np.array([0.5, 0.5]),
            np.eye(2),
            np.array([[0.9, 0.1], [0.1, 0.9]]),
        )
        # Observing symbol 1 repeatedly decodes to state 1.
        assert np.allclose(predict_next_obs(p, [1, 1, 1]), p.B[1])

    def test_hand_traced_two_state(self):
        p = HmmParams(
            2,
            2,
            np.array([0.7, 0.3]),
            np.array([[0.6, 0.4], [0.1, 0.9]]),
            np.array([[0.8, 0.2], [0.3, 0.7]]),
        )
        obs = [0, 0, 1, 1]
        path, _ = viterbi(p, obs)
        expected = p.A[path[-1]] @ p.B
        got = predict_next_obs(p, obs)
        assert np.allclose(got, expected, atol=1e-12)
        assert got.sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_sequence_uses_prior(self):
        p = HmmParams(
            2,
            2,
            np.array([0.25, 0.75]),
            np.eye(2),
            np.array([[1.0, 0.0], [0.0, 1.0]]),
        )
        assert np.allclose(predict_next_obs(p, []), [0.25, 0.75])


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        p = random_hmm_params(rng, 3, 5)
        q = params_from_dict(params_to_dict(p))
        assert np.max(np.abs(q.pi - p.pi)) <= 1e-12
        assert np.max(np.abs(q.A - p.A)) <= 1e-12
        assert np.max(np.abs(q.B - p.B)) <= 1e-12

    def test_json_round_trip(self):
        import json

        rng = np.random.default_rng(6)
        p = random_hmm_params(rng, 2, 4)
        q = params_from_dict(json.loads(json.dumps(params_to_dict(p))))
        assert np.array_equal(q.A, p.A)  # repr round-trip is exact
