"""Proximity co-occurrence statistics and entity expansion.

Two entities that appear near each other inside item descriptions of the
same category are treated as related; each ordered pair within a distance
window contributes 1/distance to a symmetric score. An entity's expansion
weight toward a partner is that pair's score normalized by the entity's
strongest partner score, then capped below 1 so an expansion never outranks
an exact occurrence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError

__all__ = [
    "ExpansionConfig",
    "CooccurrenceStats",
    "build_cooccurrence",
    "expand_entities",
]

DEFAULT_WINDOW = 5
DEFAULT_PER_ENTITY = 1
DEFAULT_CAP = 0.95


@dataclass(frozen=True)
class ExpansionConfig:
    window: int = DEFAULT_WINDOW
    per_entity: int = DEFAULT_PER_ENTITY
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("expansion window must be >= 1")
        if self.per_entity < 0:
            raise ConfigError("expansions per entity must be >= 0")
        if not 0 < self.cap <= 1:
            raise ConfigError("expansion cap must be in (0, 1]")


class CooccurrenceStats:
    """Per-category symmetric proximity scores between entity pairs."""

    def __init__(self, cap: float = DEFAULT_CAP):
        self.cap = cap
        # category -> entity -> partner -> accumulated score
        self._scores: dict[int, dict[int, dict[int, float]]] = {}
        self._explicit_weights: dict[int, dict[int, list]] | None = None

    @classmethod
    def from_weights(cls, weights_by_category: dict, cap: float = DEFAULT_CAP):
        """Build stats with directly given partner weights.

        weights_by_category: {category: {entity: [(partner, weight), ...]}}.
        Useful for tests and for loading externally computed tables.
        """
        stats = cls(cap=cap)
        stats._explicit_weights = {
            cat: {e: sorted(ps, key=lambda pw: (-pw[1], pw[0])) for e, ps in by_e.items()}
            for cat, by_e in weights_by_category.items()
        }
        return stats

    def add_item(self, category: int, entities: Sequence[int], window: int) -> None:
        if self._explicit_weights is not None:
            raise ConfigError("stats built from explicit weights are frozen")
        by_entity = self._scores.setdefault(category, {})
        n = len(entities)
        for i in range(n):
            for j in range(i + 1, min(n, i + window + 1)):
                a, b = entities[i], entities[j]
                if a == b:
                    continue
                contrib = 1.0 / (j - i)
                by_entity.setdefault(a, {})
                by_entity.setdefault(b, {})
                by_entity[a][b] = by_entity[a].get(b, 0.0) + contrib
                by_entity[b][a] = by_entity[b].get(a, 0.0) + contrib

    def score(self, category: int, a: int, b: int) -> float:
        return self._scores.get(category, {}).get(a, {}).get(b, 0.0)

    def partners(self, category: int, entity: int) -> list:
        """(partner, weight) pairs sorted by weight descending, id ascending.

        Weights are max-normalized per source entity and capped, so the
        strongest partner carries exactly the cap.
        """
        if self._explicit_weights is not None:
            return list(self._explicit_weights.get(category, {}).get(entity, []))
        raw = self._scores.get(category, {}).get(entity)
        if not raw:
            return []
        top = max(raw.values())
        out = [(p, min(self.cap, s / top)) for p, s in raw.items()]
        out.sort(key=lambda pw: (-pw[1], pw[0]))
        return out

    def categories(self) -> list:
        if self._explicit_weights is not None:
            return sorted(self._explicit_weights)
        return sorted(self._scores)

    def to_dict(self) -> dict:
        if self._explicit_weights is not None:
            return {
                "cap": self.cap,
                "weights": {
                    str(c): {str(e): ps for e, ps in by_e.items()}
                    for c, by_e in self._explicit_weights.items()
                },
            }
        return {
            "cap": self.cap,
            "scores": {
                str(c): {str(a): dict_of(b) for a, b in by_e.items()}
                for c, by_e in self._scores.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CooccurrenceStats":
        if "weights" in doc:
            return cls.from_weights(
                {
                    int(c): {int(e): [(int(p), float(w)) for p, w in ps] for e, ps in by_e.items()}
                    for c, by_e in doc["weights"].items()
                },
                cap=float(doc.get("cap", DEFAULT_CAP)),
            )
        stats = cls(cap=float(doc.get("cap", DEFAULT_CAP)))
        stats._scores = {
            int(c): {int(a): {int(b): float(s) for b, s in bs.items()} for a, bs in by_e.items()}
            for c, by_e in doc["scores"].items()
        }
        return stats


def dict_of(d):
    return {str(k): v for k, v in d.items()}


def build_cooccurrence(items: Iterable, window: int = DEFAULT_WINDOW, cap: float = DEFAULT_CAP) -> CooccurrenceStats:
    """Accumulate proximity scores over a corpus of items.

    Commutative accumulation: item order does not matter, and adding items
    can only add or raise pair scores.
    """
    if window < 1:
        raise ConfigError("window must be >= 1")
    stats = CooccurrenceStats(cap=cap)
    for item in items:
        stats.add_item(item.category, item.entities, window)
    return stats


def expand_entities(
    entities: Sequence[int],
    category: int,
    stats: CooccurrenceStats,
    m: int = DEFAULT_PER_ENTITY,
) -> list:
    """Expand an ordered entity multiset into (entity, weight) occurrences.

    Every original occurrence keeps weight 1 and is followed by its up-to-m
    strongest partners with their weights; repeated originals are kept as
    repeated occurrences. Output length is at most len(entities) * (1 + m).
    """
    if m < 0:
        raise ConfigError("expansions per entity must be >= 0")
    out = []
    for e in entities:
        out.append((e, 1.0))
        if m == 0:
            continue
        for partner, w in stats.partners(category, e)[:m]:
            out.append((partner, w))
    return out
