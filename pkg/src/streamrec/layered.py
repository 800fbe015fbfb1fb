"""Two-layer interest models.

Each producer gets its own HMM over the category sequence of the items it
creates; the hidden state decoded at an item's creation position is attached
to every browse of that item. A consumer's model then runs over composite
states (consumer state x producer state): the producer component is observed
through the attachment, so training masks emission responsibility to the
matching composite slice at every step, and prediction marginalizes over
successor composite states.

When every producer has a single hidden state the composite space collapses
and the consumer model is exactly a plain HMM of the category sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import SocialItem, UserProfile
from .errors import DataError
from .hmm import (
    HmmParams,
    TrainConfig,
    baum_welch,
    params_from_dict,
    params_to_dict,
    predict_next_obs,
    viterbi,
)

__all__ = [
    "ProducerModel",
    "CompositeStateSpace",
    "ConsumerModel",
    "ModelBundle",
    "DUMMY_PRODUCER_STATE",
    "train_producer_models",
    "annotate_consumer_history",
    "train_consumer_model",
    "predict_category_prob",
    "top_k_categories",
    "select_state_count",
    "train_models",
]

logger = logging.getLogger(__name__)

DUMMY_PRODUCER_STATE = 0  # reserved state for items without a trained producer

PROB_FLOOR = 1e-10


@dataclass
class ProducerModel:
    """Creation-pattern model of a single producer."""

    producer: int
    params: HmmParams
    decoded_states: list  # Viterbi state per created item, in creation order
    item_states: dict  # item_id -> decoded state at its creation position

    @property
    def n_states(self) -> int:
        return self.params.n_states

    def to_dict(self) -> dict:
        return {
            "producer": self.producer,
            "params": params_to_dict(self.params),
            "decoded_states": list(self.decoded_states),
            "item_states": dict(self.item_states),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProducerModel":
        return cls(
            producer=int(doc["producer"]),
            params=params_from_dict(doc["params"]),
            decoded_states=[int(x) for x in doc["decoded_states"]],
            item_states={k: int(v) for k, v in doc["item_states"].items()},
        )


@dataclass(frozen=True)
class CompositeStateSpace:
    """Bijection between (consumer state i, producer state k) and a flat
    index i * n_producer_states + k."""

    n_consumer_states: int
    n_producer_states: int

    @property
    def size(self) -> int:
        return self.n_consumer_states * self.n_producer_states

    def index(self, consumer_state: int, producer_state: int) -> int:
        return consumer_state * self.n_producer_states + producer_state

    def unindex(self, flat: int):
        return divmod(flat, self.n_producer_states)

    def masks_for(self, producer_states: Sequence[int]) -> np.ndarray:
        """Per-step 0/1 mask over composite states pinning the producer
        component to the attached (clamped) state."""
        T = len(producer_states)
        mask = np.zeros((T, self.size))
        for t, z in enumerate(producer_states):
            z = min(int(z), self.n_producer_states - 1)
            mask[t, z :: self.n_producer_states] = 1.0
        return mask


@dataclass
class ConsumerModel:
    """Composite-state category model for one consumer."""

    consumer: int
    space: CompositeStateSpace
    params: HmmParams
    annotated_history: list = field(default_factory=list)  # [(category, z)]

    def to_dict(self) -> dict:
        return {
            "consumer": self.consumer,
            "n_consumer_states": self.space.n_consumer_states,
            "n_producer_states": self.space.n_producer_states,
            "params": params_to_dict(self.params),
            "annotated_history": [[int(c), int(z)] for c, z in self.annotated_history],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConsumerModel":
        return cls(
            consumer=int(doc["consumer"]),
            space=CompositeStateSpace(
                int(doc["n_consumer_states"]), int(doc["n_producer_states"])
            ),
            params=params_from_dict(doc["params"]),
            annotated_history=[(int(c), int(z)) for c, z in doc["annotated_history"]],
        )


def train_producer_models(
    items_by_producer: dict,
    n_states=None,
    config: Optional[TrainConfig] = None,
    n_categories: Optional[int] = None,
    select_candidates=range(1, 5),
) -> dict:
    """Fit one creation-pattern HMM per producer and decode its history.

    items_by_producer maps producer id -> created items in temporal order.
    n_states may be an int (applied to all), a mapping producer -> int, or
    None to pick per producer by held-out next-category accuracy. Producers
    with an empty creation history are skipped with a warning.
    """
    if config is None:
        config = TrainConfig()
    models: dict[int, ProducerModel] = {}
    for producer in sorted(items_by_producer):
        items = items_by_producer[producer]
        if not items:
            logger.warning("producer %s has no created items; skipped", producer)
            continue
        cats = [it.category for it in items]
        n_obs = n_categories if n_categories is not None else max(cats) + 1
        if isinstance(n_states, dict):
            n = n_states.get(producer, 1)
        elif n_states is None:
            n = select_state_count(cats, select_candidates, config, n_obs)
        else:
            n = int(n_states)
        fit = baum_welch([cats], n, n_obs, config=config)
        path, _ = viterbi(fit.params, cats)
        models[producer] = ProducerModel(
            producer=producer,
            params=fit.params,
            decoded_states=path,
            item_states={it.item_id: path[i] for i, it in enumerate(items)},
        )
    return models


def group_items_by_producer(items: Sequence[SocialItem]) -> dict:
    grouped: dict[int, list] = {}
    for it in sorted(items, key=lambda it: (it.timestamp, it.item_id)):
        grouped.setdefault(it.producer, []).append(it)
    return grouped


def _annotate_item(item: SocialItem, producer_models: dict) -> int:
    pm = producer_models.get(item.producer)
    if pm is None:
        return DUMMY_PRODUCER_STATE
    z = pm.item_states.get(item.item_id)
    if z is None:
        # Item created after the producer was decoded; degrade, never fail.
        return DUMMY_PRODUCER_STATE
    return int(z)


def annotate_consumer_history(profile: UserProfile, producer_models: dict) -> list:
    """(category, producer-state) pairs for the full browsing history."""
    return [
        (it.category, _annotate_item(it, producer_models)) for it in profile.history()
    ]


def _fallback_model(consumer, annotated, n_categories, floor=PROB_FLOOR) -> ConsumerModel:
    freq = np.zeros(n_categories)
    for c, _ in annotated:
        freq[c] += 1.0
    if freq.sum() == 0:
        freq[:] = 1.0
    b = np.maximum(freq / freq.sum(), floor)
    b = b / b.sum()
    params = HmmParams(1, n_categories, np.array([1.0]), np.array([[1.0]]), b[None, :])
    return ConsumerModel(
        consumer=consumer,
        space=CompositeStateSpace(1, 1),
        params=params,
        annotated_history=list(annotated),
    )


def train_consumer_model(
    annotated_history: Sequence,
    n_consumer_states: int,
    n_categories: int,
    n_producer_states: int = 1,
    config: Optional[TrainConfig] = None,
    consumer: int = -1,
) -> ConsumerModel:
    """Fit the composite-state model for one consumer.

    Histories shorter than two steps fall back to a one-state model of the
    empirical category frequencies. n_producer_states is the largest hidden
    state count among producers appearing in this history (1 when all items
    come from single-state or unmodeled producers); when it is 1 the masks
    are all-ones and this is exactly plain Baum-Welch.
    """
    if config is None:
        config = TrainConfig()
    annotated = [(int(c), int(z)) for c, z in annotated_history]
    if len(annotated) < 2:
        return _fallback_model(consumer, annotated, n_categories)
    space = CompositeStateSpace(n_consumer_states, max(1, n_producer_states))
    obs = [c for c, _ in annotated]
    if space.n_producer_states == 1:
        fit = baum_welch([obs], space.size, n_categories, config=config)
    else:
        masks = space.masks_for([z for _, z in annotated])
        fit = baum_welch([obs], space.size, n_categories, config=config, state_masks=[masks])
    return ConsumerModel(
        consumer=consumer, space=space, params=fit.params, annotated_history=annotated
    )


def predict_category_prob(
    model: Optional[ConsumerModel],
    recent: Sequence,
    n_categories: Optional[int] = None,
    floor: float = PROB_FLOOR,
) -> np.ndarray:
    """Distribution over categories for the next browse.

    `recent` is a (category, producer-state) sequence; an empty sequence
    yields the model's prior prediction. An absent model yields the uniform
    distribution. Every category keeps at least `floor` mass.
    """
    if model is None:
        if n_categories is None:
            raise DataError("n_categories required when no model is given")
        return np.full(n_categories, 1.0 / n_categories)
    recent = list(recent)
    if not recent:
        p = np.asarray(model.params.pi @ model.params.B)
    else:
        obs = [c for c, _ in recent]
        if model.space.n_producer_states > 1:
            masks = model.space.masks_for([z for _, z in recent])
            p = predict_next_obs(model.params, obs, state_masks=masks)
        else:
            p = predict_next_obs(model.params, obs)
    p = np.maximum(p, floor)
    return p / p.sum()


def top_k_categories(model, recent, k: int, n_categories=None):
    """Categories ranked by predicted probability, ties to the lower id."""
    if k < 1:
        raise DataError("k must be >= 1")
    p = predict_category_prob(model, recent, n_categories=n_categories)
    order = sorted(range(len(p)), key=lambda c: (-p[c], c))
    return [(c, float(p[c])) for c in order[:k]]


def select_state_count(
    history: Sequence[int],
    candidates=range(1, 9),
    config: Optional[TrainConfig] = None,
    n_categories: Optional[int] = None,
) -> int:
    """Pick a hidden state count by held-out next-category accuracy.

    Trains on the first 80% of the category sequence and scores rolling
    one-step-ahead top-1 predictions on the final 20%. Ties go to the
    smaller count; histories shorter than 5 return 1.
    """
    history = [int(c) for c in history]
    if len(history) < 5:
        return 1
    if config is None:
        config = TrainConfig()
    n_obs = n_categories if n_categories is not None else max(history) + 1
    split = max(1, int(len(history) * 0.8))
    train, n = history[:split], len(history)
    best_n, best_acc = None, -1.0
    for cand in candidates:
        fit = baum_welch([train], cand, n_obs, config=config)
        correct = 0
        for t in range(split, n):
            dist = predict_next_obs(fit.params, history[:t])
            if int(np.argmax(dist)) == history[t]:
                correct += 1
        acc = correct / (n - split)
        if acc > best_acc:
            best_n, best_acc = cand, acc
    return int(best_n)


@dataclass
class ModelBundle:
    """All trained models for a dataset, plus the item-state attachments."""

    n_categories: int
    producer_models: dict = field(default_factory=dict)
    consumer_models: dict = field(default_factory=dict)

    def annotate_item(self, item: SocialItem) -> int:
        return _annotate_item(item, self.producer_models)

    def annotate_items(self, items: Sequence[SocialItem]) -> list:
        return [(it.category, self.annotate_item(it)) for it in items]

    def model_for(self, consumer: int) -> Optional[ConsumerModel]:
        return self.consumer_models.get(consumer)

    def category_probs(self, profile: UserProfile):
        """(long-term, short-term) category distributions for a profile.

        The long-term distribution conditions on the long-term list, the
        short-term one on the current window; both fall back to the model
        prior when their sequence is empty.
        """
        model = self.consumer_models.get(profile.consumer)
        pl = predict_category_prob(
            model, self.annotate_items(profile.long_term.events), self.n_categories
        )
        ps = predict_category_prob(
            model, self.annotate_items(profile.short_term.items), self.n_categories
        )
        return pl, ps

    def to_dict(self) -> dict:
        return {
            "n_categories": self.n_categories,
            "producer_models": {
                str(p): m.to_dict() for p, m in sorted(self.producer_models.items())
            },
            "consumer_models": {
                str(c): m.to_dict() for c, m in sorted(self.consumer_models.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelBundle":
        return cls(
            n_categories=int(doc["n_categories"]),
            producer_models={
                int(k): ProducerModel.from_dict(v)
                for k, v in doc["producer_models"].items()
            },
            consumer_models={
                int(k): ConsumerModel.from_dict(v)
                for k, v in doc["consumer_models"].items()
            },
        )


def train_models(
    items,
    profiles: dict,
    n_categories: int,
    config: Optional[TrainConfig] = None,
    producer_states=None,
    consumer_states=None,
    producer_select=range(1, 5),
    consumer_select=range(1, 9),
) -> ModelBundle:
    """End-to-end training: producer layer, attachments, consumer layer.

    producer_states / consumer_states of None select counts per user by
    held-out accuracy; integers override globally (faster). Trained models
    are also written onto each profile's `model` field.
    """
    if config is None:
        config = TrainConfig()
    grouped = group_items_by_producer(items)
    producer_models = train_producer_models(
        grouped,
        n_states=producer_states,
        config=config,
        n_categories=n_categories,
        select_candidates=producer_select,
    )
    bundle = ModelBundle(n_categories=n_categories, producer_models=producer_models)
    for consumer in sorted(profiles):
        profile = profiles[consumer]
        annotated = annotate_consumer_history(profile, producer_models)
        n_prod = 1
        for it in profile.history():
            pm = producer_models.get(it.producer)
            n_prod = max(n_prod, pm.n_states if pm is not None else 1)
        if consumer_states is None:
            n_b = select_state_count(
                [c for c, _ in annotated], consumer_select, config, n_categories
            )
        else:
            n_b = int(consumer_states)
        model = train_consumer_model(
            annotated, n_b, n_categories, n_prod, config=config, consumer=consumer
        )
        bundle.consumer_models[consumer] = model
        profile.model = model
    return bundle
