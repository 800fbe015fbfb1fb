"""Discrete HMMs: fit, decode, predict.

Samples a sequence from a known two-state chain, refits it with Baum-Welch,
and shows that the learned model out-scores a uniform one, that Viterbi
recovers a sensible state path, and that next-symbol prediction follows the
decoded state.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from streamrec.hmm import (
    HmmParams,
    TrainConfig,
    baum_welch,
    forward_log_likelihood,
    predict_next_obs,
    viterbi,
)

rng = np.random.default_rng(0)

truth = HmmParams(
    n_states=2,
    n_obs=3,
    pi=np.array([0.7, 0.3]),
    A=np.array([[0.9, 0.1], [0.15, 0.85]]),
    B=np.array([[0.75, 0.2, 0.05], [0.05, 0.25, 0.7]]),
)

# sample 400 observations from the true chain
states, obs = [], []
s = rng.choice(2, p=truth.pi)
for _ in range(400):
    obs.append(int(rng.choice(3, p=truth.B[s])))
    states.append(int(s))
    s = rng.choice(2, p=truth.A[s])

print("fitting a 2-state model on", len(obs), "observations...")
fit = baum_welch([obs], n_states=2, n_obs=3, config=TrainConfig(seed=1))
print(f"  converged after {len(fit.history)} iterations")
print(f"  log-likelihood improved {fit.history[0]:.1f} -> {fit.history[-1]:.1f}")

uniform = HmmParams(2, 3, np.full(2, 0.5), np.full((2, 2), 0.5), np.full((2, 3), 1 / 3))
print(f"  learned model  : {forward_log_likelihood(fit.params, obs):.1f}")
print(f"  uniform model  : {forward_log_likelihood(uniform, obs):.1f}")

path, logp = viterbi(fit.params, obs)
# hidden-state labels are arbitrary, so compare against the better of the
# two relabelings
agree = np.mean(np.array(path) == np.array(states))
agree = max(agree, 1 - agree)
print(f"  Viterbi path agrees with the generating states {agree:.0%} of the time")

dist = predict_next_obs(fit.params, obs)
print("  next-symbol distribution after the full history:", np.round(dist, 3))
print("  learned emissions:")
print(np.round(fit.params.B, 3))
