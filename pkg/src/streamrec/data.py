"""Core data model: interned identifiers, social items, interactions, and
user profiles made of a long-term interest list plus a fixed-size short-term
window with flush-on-overflow semantics.

Input logs are JSONL (one interaction per line) or CSV with the same columns;
entities in CSV are pipe-separated. Identifiers are interned to dense ints
per run; producer and consumer names share one user id space so a single
account can act in both roles.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import ConfigError, DataError

__all__ = [
    "Vocab",
    "Vocabularies",
    "SocialItem",
    "Interaction",
    "LongTermList",
    "ShortTermWindow",
    "UserProfile",
    "ingest_log",
    "build_profiles",
    "classify_user_modes",
]

DEFAULT_WINDOW_CAPACITY = 5

JSONL_FIELDS = ("ts", "consumer", "item", "category", "producer", "entities")


class Vocab:
    """Bijective string <-> dense int interning table."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, i: int) -> str:
        return self._names[i]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def to_dict(self) -> dict:
        return dict(self._ids)

    @classmethod
    def from_dict(cls, doc: dict) -> "Vocab":
        v = cls()
        for name, i in sorted(doc.items(), key=lambda kv: kv[1]):
            if v.intern(name) != i:
                raise DataError("vocabulary ids are not dense from 0")
        return v


@dataclass
class Vocabularies:
    categories: Vocab = field(default_factory=Vocab)
    users: Vocab = field(default_factory=Vocab)  # producers and consumers
    entities: Vocab = field(default_factory=Vocab)

    def to_dict(self) -> dict:
        return {
            "categories": self.categories.to_dict(),
            "users": self.users.to_dict(),
            "entities": self.entities.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Vocabularies":
        return cls(
            categories=Vocab.from_dict(doc["categories"]),
            users=Vocab.from_dict(doc["users"]),
            entities=Vocab.from_dict(doc["entities"]),
        )


@dataclass(frozen=True)
class SocialItem:
    """An item on the stream: category, producer, ordered entity multiset."""

    item_id: str
    category: int
    producer: int
    entities: tuple  # entity ids, order preserved, duplicates allowed
    timestamp: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise DataError(f"item {self.item_id}: negative timestamp")


@dataclass(frozen=True)
class Interaction:
    consumer: int
    item: SocialItem
    timestamp: int


@dataclass
class LongTermList:
    """All of a consumer's interactions older than the short-term window.

    Stores the raw event sequence and keeps derived counts consistent with
    it at all times (they are recomputable from the sequence).
    """

    events: list = field(default_factory=list)  # list[SocialItem]
    producer_counts: Counter = field(default_factory=Counter)
    entity_counts: Counter = field(default_factory=Counter)
    category_counts: Counter = field(default_factory=Counter)
    total_producer_interactions: int = 0  # |U^p|
    total_entity_occurrences: int = 0  # |E|

    def append(self, item: SocialItem) -> None:
        self.events.append(item)
        self.producer_counts[item.producer] += 1
        self.category_counts[item.category] += 1
        self.total_producer_interactions += 1
        for e in item.entities:
            self.entity_counts[e] += 1
        self.total_entity_occurrences += len(item.entities)

    def pairs(self) -> list:
        """Temporal (category, producer) pair sequence."""
        return [(it.category, it.producer) for it in self.events]

    def recompute_counts(self) -> "LongTermList":
        """Fresh derived counts from the raw sequence (for consistency checks)."""
        fresh = LongTermList()
        for it in self.events:
            fresh.append(it)
        return fresh

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class ShortTermWindow:
    """FIFO of the most recent interactions, at most `capacity` long.

    When full and a new item arrives, the whole window content is flushed
    into the long-term list and the new item starts a fresh window.
    """

    capacity: int = DEFAULT_WINDOW_CAPACITY
    items: list = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError("window capacity must be >= 1")

    def push(self, item: SocialItem, long_term: LongTermList) -> None:
        if len(self.items) >= self.capacity:
            for it in self.items:
                long_term.append(it)
            self.items = []
        self.items.append(item)

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class UserProfile:
    """A consumer's long-term list plus short-term window (the profile pair),
    and the consumer's trained interest model once available."""

    consumer: int
    long_term: LongTermList = field(default_factory=LongTermList)
    short_term: ShortTermWindow = field(default_factory=ShortTermWindow)
    model: Optional[object] = None  # ConsumerModel, set after training

    def apply_interaction(self, interaction: Interaction) -> None:
        self.short_term.push(interaction.item, self.long_term)

    def history(self) -> list:
        """Full event sequence: long-term followed by the current window."""
        return list(self.long_term.events) + list(self.short_term.items)

    def interaction_count(self) -> int:
        return len(self.long_term) + len(self.short_term)


def _parse_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            yield lineno, row


def _parse_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in JSONL_FIELDS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            ents = row.get("entities") or ""
            row = dict(row)
            row["entities"] = [e for e in ents.split("|") if e]
            yield lineno, row


def _row_to_records(path, lineno, row, vocabs, items_by_id):
    for key in JSONL_FIELDS:
        if key not in row or row[key] is None:
            raise DataError(f"{path}:{lineno}: missing field '{key}'")
    try:
        ts = int(row["ts"])
    except (TypeError, ValueError):
        raise DataError(f"{path}:{lineno}: 'ts' is not an integer")
    if ts < 0:
        raise DataError(f"{path}:{lineno}: negative timestamp")
    if not isinstance(row["entities"], list):
        raise DataError(f"{path}:{lineno}: 'entities' is not a list")

    consumer = vocabs.users.intern(str(row["consumer"]))
    item_id = str(row["item"])
    item = items_by_id.get(item_id)
    if item is None:
        item = SocialItem(
            item_id=item_id,
            category=vocabs.categories.intern(str(row["category"])),
            producer=vocabs.users.intern(str(row["producer"])),
            entities=tuple(vocabs.entities.intern(str(e)) for e in row["entities"]),
            timestamp=ts,
        )
        items_by_id[item_id] = item
    elif ts < item.timestamp:
        # An item's creation time is the earliest time anyone saw it.
        item = SocialItem(item.item_id, item.category, item.producer, item.entities, ts)
        items_by_id[item_id] = item
    return Interaction(consumer=consumer, item=item, timestamp=ts)


def ingest_log(path, format: str = "jsonl"):
    """Read an interaction log into interned items, interactions, vocabularies.

    Interactions come back globally sorted by timestamp; equal timestamps
    keep input order (stable sort), which fixes all downstream replays.
    Distinct items are deduplicated by item id.
    """
    if format == "jsonl":
        rows = _parse_jsonl(path)
    elif format == "csv":
        rows = _parse_csv(path)
    else:
        raise ConfigError(f"unknown log format: {format!r}")

    vocabs = Vocabularies()
    items_by_id: dict[str, SocialItem] = {}
    interactions: list[Interaction] = []
    for lineno, row in rows:
        interactions.append(_row_to_records(path, lineno, row, vocabs, items_by_id))

    interactions.sort(key=lambda x: x.timestamp)  # sort() is stable
    # Refresh item references in case a later row lowered an item timestamp.
    interactions = [
        Interaction(x.consumer, items_by_id[x.item.item_id], x.timestamp)
        for x in interactions
    ]
    items = sorted(items_by_id.values(), key=lambda it: (it.timestamp, it.item_id))
    return items, interactions, vocabs


def build_profiles(
    interactions: Iterable[Interaction],
    window_capacity: int = DEFAULT_WINDOW_CAPACITY,
) -> dict:
    """Replay sorted interactions into per-consumer profiles.

    Pure function of the ordered interaction list: identical inputs yield
    identical profiles. Every interaction lands in exactly one of the
    long-term list or the window.
    """
    if window_capacity < 1:
        raise ConfigError("window_capacity must be >= 1")
    profiles: dict[int, UserProfile] = {}
    for inter in interactions:
        prof = profiles.get(inter.consumer)
        if prof is None:
            prof = UserProfile(
                consumer=inter.consumer,
                short_term=ShortTermWindow(capacity=window_capacity),
            )
            profiles[inter.consumer] = prof
        prof.apply_interaction(inter)
    return profiles


def classify_user_modes(interactions, items):
    """Split user ids into producers (authored >= 1 item) and consumers
    (browsed >= 1 item). Pure producers are data sources only and never
    receive recommendations."""
    producers = {it.producer for it in items}
    consumers = {x.consumer for x in interactions}
    return producers, consumers
