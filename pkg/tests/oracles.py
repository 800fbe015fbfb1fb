"""Independent brute-force reference implementations used across the suite.

Everything here is written for clarity over speed and deliberately avoids
the library's own code paths, so tests compare two unrelated computations.
"""

import itertools
import math


def enum_log_likelihood(params, obs):
    """Sequence likelihood by summing every hidden state path explicitly."""
    n = params.n_states
    total = 0.0
    for path in itertools.product(range(n), repeat=len(obs)):
        p = params.pi[path[0]] * params.B[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= params.A[path[t - 1], path[t]] * params.B[path[t], obs[t]]
        total += p
    return math.log(total) if total > 0 else float("-inf")


def enum_best_path_logprob(params, obs):
    """Max joint path probability by exhaustive enumeration (log scale)."""
    n = params.n_states
    best = 0.0
    for path in itertools.product(range(n), repeat=len(obs)):
        p = params.pi[path[0]] * params.B[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= params.A[path[t - 1], path[t]] * params.B[path[t], obs[t]]
        best = max(best, p)
    return math.log(best) if best > 0 else float("-inf")


def path_logprob(params, obs, path):
    """Joint log-probability of one specific hidden state path."""
    p = params.pi[path[0]] * params.B[path[0], obs[0]]
    for t in range(1, len(obs)):
        p *= params.A[path[t - 1], path[t]] * params.B[path[t], obs[t]]
    return math.log(p) if p > 0 else float("-inf")


def random_hmm_params(rng, n_states, n_obs):
    """Random dense stochastic parameters, built without library helpers."""
    from streamrec.hmm import HmmParams

    def rows(k, m):
        x = rng.random((k, m)) + 0.05
        return x / x.sum(axis=1, keepdims=True)

    return HmmParams(
        n_states, n_obs, rows(1, n_states)[0], rows(n_states, n_states), rows(n_states, n_obs)
    )


def sample_hmm_sequence(rng, params, length):
    """Draw an observation sequence from the given HMM."""
    states = list(range(params.n_states))
    obs_syms = list(range(params.n_obs))
    s = rng.choice(states, p=params.pi)
    out = []
    for _ in range(length):
        out.append(int(rng.choice(obs_syms, p=params.B[s])))
        s = rng.choice(states, p=params.A[s])
    return out
