"""Seeded synthetic interaction-log generator.

The generative story plants the structures the models and the matcher are
built to exploit:

* every producer runs a persistent multi-state hidden chain whose state
  skews the category of each created item — the state is only weakly
  visible in any one category, so a consumer's own observation sequence
  identifies it imperfectly while the producer's full sequence decodes it
  well (state-gated category prediction);
* entities live in per-category topic groups, paired into related topics;
  an item carries a small random subset of its group and sometimes one
  entity of the partner group, so relatedness is learnable from corpus
  co-occurrence (planted expansion structure).

Two browsing modes:

* default: each consumer follows one producer and keeps a random
  subsequence of its feed — the clean setting for comparing category
  predictors;
* topic-gated: each consumer follows a couple of producers and keeps items
  by topic (their primary group often, its partner group sometimes,
  anything else rarely) — the setting where entity matching and expansion
  decide who actually interacts with an arriving item.

Everything is drawn from one seeded generator; the same config always
emits byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = ["SynthConfig", "generate_synthetic"]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_producers: int = 12
    n_consumers: int = 200
    n_categories: int = 4
    n_entities: int = 120
    items_per_producer: int = 140
    interactions_per_consumer: int = 60
    producer_states: int = 2
    state_persistence: float = 0.85
    in_state_mass: float = 0.75  # category mass kept inside a state's home set
    topic_group_size: int = 5
    entities_per_item_max: int = 3
    browse_keep_prob: float = 0.55
    subscription_zipf: float = 1.1
    browse_delay_max: int = 40
    # topic-gated browsing (planted co-occurrence evaluation):
    topic_gated: bool = False
    producers_per_consumer: int = 2
    primary_keep: float = 0.65
    partner_keep: float = 0.3
    offtopic_keep: float = 0.02
    cross_entity_prob: float = 0.4

    def __post_init__(self):
        if self.n_categories < 2:
            raise ConfigError("need at least 2 categories")
        if self.producer_states < 1:
            raise ConfigError("producer_states must be >= 1")
        if not 0 < self.browse_keep_prob <= 1:
            raise ConfigError("browse_keep_prob must be in (0, 1]")
        if self.topic_group_size < 2:
            raise ConfigError("topic groups need >= 2 entities")
        if self.producers_per_consumer < 1:
            raise ConfigError("producers_per_consumer must be >= 1")


def _state_category_dists(cfg: SynthConfig) -> np.ndarray:
    """Per-state category distributions with overlapping supports.

    State s owns a contiguous home set of categories; in_state_mass lands
    there (skewed toward the first home category), the rest spreads over the
    other categories, so a single category only hints at the state.
    """
    C = cfg.n_categories
    S = cfg.producer_states
    home = max(1, C // S)
    dists = np.zeros((S, C))
    for s in range(S):
        start = (s * home) % C
        homeset = [(start + j) % C for j in range(home)]
        weights = np.array([2.0 ** (-j) for j in range(home)])
        weights = weights / weights.sum() * cfg.in_state_mass
        for j, c in enumerate(homeset):
            dists[s, c] += weights[j]
        others = [c for c in range(C) if c not in homeset]
        if others:
            dists[s, others] += (1.0 - cfg.in_state_mass) / len(others)
        else:
            dists[s, homeset] += (1.0 - cfg.in_state_mass) / len(homeset)
    return dists


def _topic_groups(cfg: SynthConfig):
    """Partition entity ids into fixed-size groups. Group g's home category
    is g mod C; groups of the same category pair up (0-1, 2-3, ...) as
    related topics."""
    groups = []
    size = cfg.topic_group_size
    for start in range(0, cfg.n_entities - size + 1, size):
        groups.append(list(range(start, start + size)))
    by_category: dict[int, list] = {c: [] for c in range(cfg.n_categories)}
    group_category = {}
    for gi, group in enumerate(groups):
        by_category[gi % cfg.n_categories].append(gi)
    for c in range(cfg.n_categories):
        if not by_category[c]:
            by_category[c].append(c % len(groups))
    for c, gids in by_category.items():
        for gi in gids:
            group_category[gi] = c
    return groups, by_category


def _partner_group(gid: int, category_groups: list) -> int:
    """Partner pairing inside one category's group list: (0,1), (2,3), ..."""
    pos = category_groups.index(gid)
    partner_pos = pos ^ 1
    if partner_pos >= len(category_groups):
        partner_pos = pos
    return category_groups[partner_pos]


def generate_synthetic(cfg: SynthConfig, out_dir) -> dict:
    """Write items.jsonl and interactions.jsonl under out_dir.

    Returns {"items": path, "interactions": path, "n_items": int,
    "n_interactions": int}. Deterministic per config.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    state_dists = _state_category_dists(cfg)
    groups, groups_by_cat = _topic_groups(cfg)

    # Per (producer, category): a preferred topic group, so a producer's feed
    # is topically coherent without being single-topic.
    pref_group = {
        (p, c): int(rng.integers(len(groups_by_cat[c])))
        for p in range(cfg.n_producers)
        for c in range(cfg.n_categories)
    }

    items = []
    item_group = []  # group id per item, drives topic-gated browsing
    feed: dict[int, list] = {p: [] for p in range(cfg.n_producers)}
    ts = 0
    states = {p: int(rng.integers(cfg.producer_states)) for p in range(cfg.n_producers)}
    for _ in range(cfg.items_per_producer):
        for p in range(cfg.n_producers):
            s = states[p]
            if rng.random() >= cfg.state_persistence:
                s = int(rng.integers(cfg.producer_states))
            states[p] = s
            category = int(rng.choice(cfg.n_categories, p=state_dists[s]))
            cat_gids = groups_by_cat[category]
            if rng.random() < 0.8:
                gid = cat_gids[pref_group[(p, category)] % len(cat_gids)]
            else:
                gid = cat_gids[int(rng.integers(len(cat_gids)))]
            group = groups[gid]
            n_ents = int(rng.integers(1, cfg.entities_per_item_max + 1))
            ents = [int(e) for e in rng.choice(group, size=min(n_ents, len(group)), replace=False)]
            if cfg.topic_gated and rng.random() < cfg.cross_entity_prob:
                partner = groups[_partner_group(gid, cat_gids)]
                ents.append(int(partner[int(rng.integers(len(partner)))]))
            item = {
                "item": f"v{len(items)}",
                "category": f"cat{category}",
                "producer": f"p{p}",
                "entities": [f"e{e}" for e in ents],
                "ts": ts,
            }
            items.append(item)
            item_group.append(gid)
            feed[p].append((len(items) - 1, item))
            ts += 1

    # Zipf-ish subscription popularity over producers.
    ranks = np.arange(1, cfg.n_producers + 1, dtype=float)
    sub_probs = ranks ** (-cfg.subscription_zipf)
    sub_probs /= sub_probs.sum()
    all_gids = sorted(gid for gids in groups_by_cat.values() for gid in gids)

    interactions = []
    for consumer in range(cfg.n_consumers):
        if cfg.topic_gated:
            n_subs = min(cfg.producers_per_consumer, cfg.n_producers)
            producers = [
                int(x) for x in rng.choice(cfg.n_producers, size=n_subs, replace=False, p=sub_probs)
            ]
            primary = all_gids[int(rng.integers(len(all_gids)))]
            cat_gids = groups_by_cat[primary % cfg.n_categories]
            partner = _partner_group(primary, cat_gids)
            merged = sorted(
                (idx for p in producers for idx, _ in feed[p]),
            )
            kept = []
            for idx in merged:
                gid = item_group[idx]
                if gid == primary:
                    keep = cfg.primary_keep
                elif gid == partner:
                    keep = cfg.partner_keep
                else:
                    keep = cfg.offtopic_keep
                if rng.random() < keep:
                    kept.append(items[idx])
                if len(kept) >= cfg.interactions_per_consumer:
                    break
        else:
            producer = int(rng.choice(cfg.n_producers, p=sub_probs))
            kept = []
            for _, it in feed[producer]:
                if rng.random() < cfg.browse_keep_prob:
                    kept.append(it)
                if len(kept) >= cfg.interactions_per_consumer:
                    break
        for it in kept:
            delay = int(rng.integers(1, cfg.browse_delay_max))
            interactions.append(
                {
                    "ts": it["ts"] + delay,
                    "consumer": f"u{consumer}",
                    "item": it["item"],
                    "category": it["category"],
                    "producer": it["producer"],
                    "entities": it["entities"],
                }
            )
    interactions.sort(key=lambda r: (r["ts"], r["consumer"], r["item"]))

    items_path = out_dir / "items.jsonl"
    inter_path = out_dir / "interactions.jsonl"
    with open(items_path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(json.dumps(it, sort_keys=True) + "\n")
    with open(inter_path, "w", encoding="utf-8") as fh:
        for row in interactions:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return {
        "items": str(items_path),
        "interactions": str(inter_path),
        "n_items": len(items),
        "n_interactions": len(interactions),
    }
