"""Discrete-observation hidden Markov models.

Provides parameter estimation (Baum-Welch with per-step scaling), decoding
(Viterbi), exact sequence log-likelihood, and one-step-ahead observation
prediction. Both interest-model layers reuse this machinery; the consumer
layer additionally passes per-step state masks to pin an observed state
component during training and decoding.

All probability computations use per-step normalization constants, so
sequences up to ~1e6 steps do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "HmmParams",
    "TrainConfig",
    "FitResult",
    "baum_welch",
    "forward_log_likelihood",
    "viterbi",
    "predict_next_obs",
    "params_to_dict",
    "params_from_dict",
]


@dataclass(frozen=True)
class HmmParams:
    """Parameters of a discrete HMM.

    pi: initial state distribution, shape (n_states,)
    A:  row-stochastic transition matrix, shape (n_states, n_states)
    B:  row-stochastic emission matrix, shape (n_states, n_obs)
    """

    n_states: int
    n_obs: int
    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def validate(self, atol: float = 1e-9) -> None:
        if self.n_states < 1 or self.n_obs < 1:
            raise ConfigError("n_states and n_obs must be >= 1")
        if self.pi.shape != (self.n_states,):
            raise DataError("pi has wrong shape")
        if self.A.shape != (self.n_states, self.n_states):
            raise DataError("A has wrong shape")
        if self.B.shape != (self.n_states, self.n_obs):
            raise DataError("B has wrong shape")
        if np.any(self.pi < 0) or np.any(self.A < 0) or np.any(self.B < 0):
            raise DataError("negative probability entry")
        if abs(self.pi.sum() - 1.0) > atol:
            raise DataError("pi does not sum to 1")
        if np.max(np.abs(self.A.sum(axis=1) - 1.0)) > atol:
            raise DataError("A row sums differ from 1")
        if np.max(np.abs(self.B.sum(axis=1) - 1.0)) > atol:
            raise DataError("B row sums differ from 1")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for Baum-Welch training.

    EM from a single random start regularly lands in the symmetric saddle on
    structured data, so training runs `restarts` seeded initializations and
    keeps the one with the best final likelihood.
    """

    max_iterations: int = 100
    tolerance: float = 1e-6
    seed: int = 0
    floor: float = 1e-10
    restarts: int = 3

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be > 0")
        if self.floor <= 0:
            raise ConfigError("floor must be > 0")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


class FitResult(NamedTuple):
    params: HmmParams
    log_likelihood: float
    history: list  # per-iteration training log-likelihood


def _as_obs_array(sequence) -> np.ndarray:
    arr = np.asarray(sequence, dtype=np.int64)
    if arr.ndim != 1:
        raise DataError("observation sequence must be one-dimensional")
    return arr


def _check_symbols(arr: np.ndarray, n_obs: int) -> None:
    if arr.size and (arr.min() < 0 or arr.max() >= n_obs):
        raise DataError(f"observation symbol out of range [0, {n_obs})")


def _random_params(n_states: int, n_obs: int, rng: np.random.Generator) -> HmmParams:
    pi = rng.dirichlet(np.ones(n_states))
    A = rng.dirichlet(np.ones(n_states), size=n_states)
    B = rng.dirichlet(np.ones(n_obs), size=n_states)
    return HmmParams(n_states, n_obs, pi, A, B)


def _floor_and_renormalize(row: np.ndarray, floor: float) -> np.ndarray:
    # Final clip keeps every entry >= floor exactly; it perturbs the row sum
    # by O(floor^2), far inside the 1e-9 stochasticity tolerance.
    lifted = np.maximum(row, floor)
    out = lifted / lifted.sum()
    return np.maximum(out, floor)


def _obs_prob(params: HmmParams, symbol: int, mask: Optional[np.ndarray]) -> np.ndarray:
    col = params.B[:, symbol]
    if mask is not None:
        col = col * mask
    return col


def _scaled_forward(params, obs, masks=None):
    """Scaled forward pass.

    Returns (alpha_hat, scales) where alpha_hat[t] sums to 1 and
    log-likelihood = sum(log(scales)). scales[t] == 0 marks an impossible
    prefix; callers decide whether that is an error or -inf.
    """
    T = obs.size
    N = params.n_states
    alpha = np.zeros((T, N))
    scales = np.zeros(T)
    a = params.pi * _obs_prob(params, obs[0], masks[0] if masks is not None else None)
    s = a.sum()
    scales[0] = s
    alpha[0] = a / s if s > 0 else a
    for t in range(1, T):
        a = (alpha[t - 1] @ params.A) * _obs_prob(
            params, obs[t], masks[t] if masks is not None else None
        )
        s = a.sum()
        scales[t] = s
        if s == 0:
            alpha[t:] = 0.0
            return alpha, scales
        alpha[t] = a / s
    return alpha, scales


def _scaled_backward(params, obs, scales, masks=None):
    T = obs.size
    N = params.n_states
    beta = np.zeros((T, N))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        nxt = _obs_prob(params, obs[t + 1], masks[t + 1] if masks is not None else None)
        beta[t] = (params.A @ (nxt * beta[t + 1])) / scales[t + 1]
    return beta


def forward_log_likelihood(params: HmmParams, sequence) -> float:
    """log p(sequence | params), summed over all hidden state paths.

    An empty sequence yields 0.0 by convention; an impossible sequence
    yields -inf.
    """
    obs = _as_obs_array(sequence)
    if obs.size == 0:
        return 0.0
    _check_symbols(obs, params.n_obs)
    _, scales = _scaled_forward(params, obs)
    if np.any(scales == 0):
        return float("-inf")
    return float(np.sum(np.log(scales)))


def viterbi(params: HmmParams, sequence, state_masks=None):
    """Most probable hidden state path and its joint log-probability.

    Works in log-space. Ties resolve to the lowest state index. When
    state_masks is given (sequence of boolean/float vectors, one per step),
    states with a zero mask entry are excluded at that step.
    """
    obs = _as_obs_array(sequence)
    if obs.size == 0:
        raise DataError("viterbi requires a non-empty sequence")
    _check_symbols(obs, params.n_obs)
    T = obs.size
    N = params.n_states
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
        log_A = np.log(params.A)
        log_B = np.log(params.B)
        if state_masks is not None:
            log_masks = [np.log(np.asarray(m, dtype=float)) for m in state_masks]
        else:
            log_masks = None

    delta = log_pi + log_B[:, obs[0]]
    if log_masks is not None:
        delta = delta + log_masks[0]
    back = np.zeros((T, N), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + log_A
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(N)] + log_B[:, obs[t]]
        if log_masks is not None:
            delta = delta + log_masks[t]
    last = int(np.argmax(delta))
    logp = float(delta[last])
    path = np.zeros(T, dtype=np.int64)
    path[T - 1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path.tolist(), logp


def predict_next_obs(params: HmmParams, sequence, state_masks=None) -> np.ndarray:
    """Distribution of the next observation after `sequence`.

    Decodes the final hidden state with Viterbi, then propagates one step:
    p(m) = sum_j A[s_T, j] * B[j, m]. An empty sequence yields the prior
    prediction sum_i pi[i] * B[i, m].
    """
    obs = _as_obs_array(sequence)
    if obs.size == 0:
        return np.asarray(params.pi @ params.B)
    path, _ = viterbi(params, obs, state_masks=state_masks)
    return np.asarray(params.A[path[-1]] @ params.B)


def baum_welch(
    sequences: Sequence,
    n_states: int,
    n_obs: int,
    config: Optional[TrainConfig] = None,
    state_masks: Optional[Sequence] = None,
) -> FitResult:
    """Estimate HMM parameters from observation sequences.

    Multi-sequence training sums expected counts across sequences. Stops when
    the absolute log-likelihood improvement drops below config.tolerance or
    after config.max_iterations. Parameters are initialized from seeded
    symmetric Dirichlet draws; after each M-step every row is floored at
    config.floor and renormalized so no probability is ever exactly zero.

    state_masks, when given, carries one mask list per sequence; each mask is
    a length-n_states 0/1 vector restricting which states may take emission
    responsibility at that step.

    Returns a FitResult whose history holds the per-iteration training
    log-likelihood (non-decreasing up to 1e-9).
    """
    if config is None:
        config = TrainConfig()
    if n_states < 1 or n_obs < 1:
        raise ConfigError("n_states and n_obs must be >= 1")
    obs_list = [_as_obs_array(s) for s in sequences]
    obs_list = [o for o in obs_list if o.size > 0]
    if not obs_list:
        raise DataError("baum_welch requires at least one non-empty sequence")
    for o in obs_list:
        _check_symbols(o, n_obs)
    mask_list = None
    if state_masks is not None:
        mask_list = [
            np.asarray(m, dtype=float) for m in state_masks if len(m) > 0
        ]
        if len(mask_list) != len(obs_list):
            raise DataError("state_masks must align with sequences")
        for o, m in zip(obs_list, mask_list):
            if m.shape != (o.size, n_states):
                raise DataError("state mask has wrong shape")

    best: Optional[FitResult] = None
    for restart in range(config.restarts):
        fit = _fit_once(obs_list, mask_list, n_states, n_obs, config, restart)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    return best


def _fit_once(obs_list, mask_list, n_states, n_obs, config, restart) -> FitResult:
    rng = np.random.default_rng([config.seed, restart])
    params = _random_params(n_states, n_obs, rng)
    history: list[float] = []
    prev_ll = None

    for iteration in range(config.max_iterations):
        pi_num = np.zeros(n_states)
        trans_num = np.zeros((n_states, n_states))
        emit_num = np.zeros((n_states, n_obs))
        total_ll = 0.0

        for si, obs in enumerate(obs_list):
            masks = mask_list[si] if mask_list is not None else None
            alpha, scales = _scaled_forward(params, obs, masks)
            if np.any(scales == 0):
                raise DataError(
                    "training sequence has zero probability under current model"
                )
            total_ll += float(np.sum(np.log(scales)))
            beta = _scaled_backward(params, obs, scales, masks)
            gamma = alpha * beta
            gamma /= gamma.sum(axis=1, keepdims=True)
            pi_num += gamma[0]
            T = obs.size
            if T > 1:
                nxt = params.B[:, obs[1:]].T  # (T-1, N) emission prob at t+1
                if masks is not None:
                    nxt = nxt * masks[1:]
                w = (nxt * beta[1:]) / scales[1:, None]
                trans_num += np.einsum("ti,ij,tj->ij", alpha[:-1], params.A, w)
            np.add.at(emit_num.T, obs, gamma)

        history.append(total_ll)
        if prev_ll is not None and abs(total_ll - prev_ll) < config.tolerance:
            break
        prev_ll = total_ll
        if iteration == config.max_iterations - 1:
            break  # returned params must be the ones history[-1] measured

        pi = _floor_and_renormalize(pi_num / pi_num.sum(), config.floor)
        A = params.A.copy()
        B = params.B.copy()
        a_den = trans_num.sum(axis=1)
        b_den = emit_num.sum(axis=1)
        for i in range(n_states):
            if a_den[i] > 0:
                A[i] = trans_num[i] / a_den[i]
            if b_den[i] > 0:
                B[i] = emit_num[i] / b_den[i]
            A[i] = _floor_and_renormalize(A[i], config.floor)
            B[i] = _floor_and_renormalize(B[i], config.floor)
        params = HmmParams(n_states, n_obs, pi, A, B)

    return FitResult(params, history[-1], history)


def params_to_dict(params: HmmParams) -> dict:
    """JSON-serializable form; round-trips within 1e-12 per entry (exactly,
    since floats survive repr round-trips)."""
    return {
        "n_states": params.n_states,
        "n_obs": params.n_obs,
        "pi": params.pi.tolist(),
        "A": params.A.tolist(),
        "B": params.B.tolist(),
    }


def params_from_dict(doc: dict) -> HmmParams:
    params = HmmParams(
        int(doc["n_states"]),
        int(doc["n_obs"]),
        np.asarray(doc["pi"], dtype=float),
        np.asarray(doc["A"], dtype=float),
        np.asarray(doc["B"], dtype=float),
    )
    params.validate()
    return params
