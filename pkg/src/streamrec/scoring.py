"""Item-user relevance scoring.

The long-term score combines the model's category probability with
Dirichlet-smoothed maximum-likelihood estimates of the user's producer and
entity affinities; the short-term score uses the category probability
conditioned on the recent window alone (counts over a handful of items are
too noisy to smooth meaningfully). Both combine through a single mixing
weight. Every probability is floored before the log so scores stay finite.

Expanded entity occurrences aggregate per distinct entity as
(occurrence count) x (max weight among occurrences); the pruned index
encodes queries the same way, which keeps direct scoring and index scoring
bit-for-bit identical on the same inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .data import SocialItem, UserProfile
from .errors import ConfigError, DataError

__all__ = [
    "ScoringConfig",
    "BackgroundModel",
    "CategoryProbs",
    "aggregate_expansion",
    "smoothed_producer_prob",
    "smoothed_entity_prob",
    "floored_log",
    "long_term_score",
    "short_term_score",
    "combined_score",
    "RelevanceScorer",
    "brute_force_top_k",
]

PROB_FLOOR = 1e-10


@dataclass(frozen=True)
class ScoringConfig:
    """Ranking knobs. lambda_s weighs the short-term score (0.4 suits fast
    feeds, 0.3 slower catalogs); mu are the Dirichlet smoothing strengths."""

    lambda_s: float = 0.4
    mu_producer: float = 50.0
    mu_entity: float = 100.0
    floor: float = PROB_FLOOR

    def __post_init__(self):
        # Endpoints of lambda_s are tolerated here so sweeps and endpoint
        # identities stay testable; the CLI validates the open interval.
        if not 0.0 <= self.lambda_s <= 1.0:
            raise ConfigError("lambda_s must lie in [0, 1]")
        if self.mu_producer < 0 or self.mu_entity < 0:
            raise ConfigError("smoothing strengths must be >= 0")
        if self.floor <= 0:
            raise ConfigError("floor must be > 0")


class BackgroundModel:
    """Corpus-wide producer and entity distributions (smoothing reference)."""

    def __init__(self, producer_probs: Optional[dict] = None, entity_probs: Optional[dict] = None):
        self.producer_probs = dict(producer_probs or {})
        self.entity_probs = dict(entity_probs or {})

    @classmethod
    def from_interactions(cls, interactions) -> "BackgroundModel":
        prod: Dict[int, float] = {}
        ent: Dict[int, float] = {}
        n_prod = 0
        n_ent = 0
        for inter in interactions:
            prod[inter.item.producer] = prod.get(inter.item.producer, 0.0) + 1.0
            n_prod += 1
            for e in inter.item.entities:
                ent[e] = ent.get(e, 0.0) + 1.0
                n_ent += 1
        if n_prod:
            prod = {p: c / n_prod for p, c in prod.items()}
        if n_ent:
            ent = {e: c / n_ent for e, c in ent.items()}
        return cls(prod, ent)

    def producer_prob(self, producer: int) -> float:
        return self.producer_probs.get(producer, 0.0)

    def entity_prob(self, entity: int) -> float:
        return self.entity_probs.get(entity, 0.0)

    def to_dict(self) -> dict:
        return {
            "producer_probs": {str(k): v for k, v in self.producer_probs.items()},
            "entity_probs": {str(k): v for k, v in self.entity_probs.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BackgroundModel":
        return cls(
            {int(k): float(v) for k, v in doc["producer_probs"].items()},
            {int(k): float(v) for k, v in doc["entity_probs"].items()},
        )


@dataclass
class CategoryProbs:
    """Per-user category distributions: one conditioned on the long-term
    list, one on the short-term window (what the trained model outputs)."""

    long: np.ndarray
    short: np.ndarray


def aggregate_expansion(expanded: Sequence) -> list:
    """Collapse (entity, weight) occurrences to (entity, count, max weight),
    sorted by entity id.

    The max rule matches the query encoding of the index, so both scoring
    routes agree exactly even when an entity occurs with mixed weights.
    """
    counts: Dict[int, int] = {}
    maxw: Dict[int, float] = {}
    for e, w in expanded:
        counts[e] = counts.get(e, 0) + 1
        if w > maxw.get(e, 0.0):
            maxw[e] = w
    return [(e, counts[e], maxw[e]) for e in sorted(counts)]


def smoothed_producer_prob(profile: UserProfile, producer: int, bg: BackgroundModel, mu_p: float) -> float:
    """(count + mu * background) / (|U^p| + mu)."""
    if mu_p < 0:
        raise ConfigError("mu_p must be >= 0")
    n = profile.long_term.total_producer_interactions
    if n == 0 and mu_p == 0:
        raise DataError("MLE undefined: empty long-term list and mu_p = 0")
    cnt = profile.long_term.producer_counts.get(producer, 0)
    return (cnt + mu_p * bg.producer_prob(producer)) / (n + mu_p)


def smoothed_entity_prob(profile: UserProfile, entity: int, bg: BackgroundModel, mu_e: float) -> float:
    """(count + mu * background) / (|E| + mu)."""
    if mu_e < 0:
        raise ConfigError("mu_e must be >= 0")
    n = profile.long_term.total_entity_occurrences
    if n == 0 and mu_e == 0:
        raise DataError("MLE undefined: empty entity history and mu_e = 0")
    cnt = profile.long_term.entity_counts.get(entity, 0)
    return (cnt + mu_e * bg.entity_prob(entity)) / (n + mu_e)


def floored_log(x: float, floor: float) -> float:
    """log(x) with x clamped up to the floor first; keeps scores finite."""
    return math.log(x if x > floor else floor)


def _producer_mass(profile, producer, bg, mu) -> float:
    # Zero-evidence user under zero smoothing: the strict MLE op raises, but
    # ranking treats the undefined mass as zero (the floor absorbs it), so a
    # freshly arrived user never poisons a whole query.
    if profile.long_term.total_producer_interactions == 0 and mu == 0:
        return 0.0
    return smoothed_producer_prob(profile, producer, bg, mu)


def _entity_mass(profile, entity, bg, mu) -> float:
    if profile.long_term.total_entity_occurrences == 0 and mu == 0:
        return 0.0
    return smoothed_entity_prob(profile, entity, bg, mu)


def long_term_score(
    item: SocialItem,
    expanded: Sequence,
    profile: UserProfile,
    probs: CategoryProbs,
    bg: BackgroundModel,
    config: ScoringConfig,
) -> float:
    """log p(c|u) + log p(producer|u) + log sum of weighted entity probs."""
    score = floored_log(float(probs.long[item.category]), config.floor)
    score += floored_log(
        _producer_mass(profile, item.producer, bg, config.mu_producer), config.floor
    )
    total = 0.0
    for e, count, w in aggregate_expansion(expanded):
        total += count * w * _entity_mass(profile, e, bg, config.mu_entity)
    score += floored_log(total, config.floor)
    return score


def short_term_score(
    item: SocialItem, profile: UserProfile, probs: CategoryProbs, floor: float = PROB_FLOOR
) -> float:
    """log of the window-conditioned category probability, nothing else."""
    return floored_log(float(probs.short[item.category]), floor)


def combined_score(
    item: SocialItem,
    expanded: Sequence,
    profile: UserProfile,
    probs: CategoryProbs,
    bg: BackgroundModel,
    config: ScoringConfig,
) -> float:
    """(1 - lambda_s) * long-term + lambda_s * short-term."""
    r_long = long_term_score(item, expanded, profile, probs, bg, config)
    r_short = short_term_score(item, profile, probs, config.floor)
    return (1.0 - config.lambda_s) * r_long + config.lambda_s * r_short


class RelevanceScorer:
    """Scores every consumer against stream items.

    Category distributions are computed once per profile (they depend on the
    profile and model, not the item) and cached; per item the remaining work
    is count lookups. This is the sequential reference the index must match
    exactly and outrun.
    """

    def __init__(
        self,
        profiles: dict,
        cat_probs: dict,
        bg: BackgroundModel,
        config: Optional[ScoringConfig] = None,
    ):
        self.profiles = profiles
        self.cat_probs = cat_probs
        self.bg = bg
        self.config = config or ScoringConfig()

    @classmethod
    def from_models(cls, profiles: dict, bundle, bg: BackgroundModel, config=None):
        probs = {}
        for consumer, profile in profiles.items():
            pl, ps = bundle.category_probs(profile)
            probs[consumer] = CategoryProbs(pl, ps)
        return cls(profiles, probs, bg, config)

    def score(self, item: SocialItem, consumer: int, expanded=None, lambda_s=None) -> float:
        profile = self.profiles[consumer]
        probs = self.cat_probs[consumer]
        cfg = self.config
        if lambda_s is not None and lambda_s != cfg.lambda_s:
            cfg = ScoringConfig(lambda_s, cfg.mu_producer, cfg.mu_entity, cfg.floor)
        if expanded is None:
            expanded = [(e, 1.0) for e in item.entities]
        return combined_score(item, expanded, profile, probs, self.bg, cfg)

    def top_k(self, item: SocialItem, k: int, expanded=None, consumers=None, lambda_s=None):
        """Ranked (consumer, score) list; ties break on the lower consumer id."""
        if k < 1:
            raise ConfigError("k must be >= 1")
        if expanded is None:
            expanded = [(e, 1.0) for e in item.entities]
        pool = sorted(consumers) if consumers is not None else sorted(self.profiles)
        scored = [(c, self.score(item, c, expanded, lambda_s)) for c in pool]
        scored.sort(key=lambda cs: (-cs[1], cs[0]))
        return scored[:k]


def brute_force_top_k(
    item: SocialItem,
    profiles: dict,
    k: int,
    config: ScoringConfig,
    cat_probs: dict,
    bg: BackgroundModel,
    expanded=None,
) -> list:
    """Score every consumer and sort; the oracle all index answers must equal."""
    scorer = RelevanceScorer(profiles, cat_probs, bg, config)
    return scorer.top_k(item, k, expanded=expanded)
