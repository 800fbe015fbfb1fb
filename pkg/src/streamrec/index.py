"""Pruned top-k user index.

Structure: a chained hash table over (category, entity) pairs routes an
incoming item to extended signature trees, one tree per category of each
user block. Blocks come from one-pass cosine clustering of long-term
category interests, which keeps per-tree vocabularies (and signatures)
small. Leaf entries hold one user's frozen scoring statistics; internal
entries hold component-wise maxima over their children plus the minimum
history lengths below them, which bound the Dirichlet-smoothing background
mass of any descendant.

Scoring discipline: a leaf entry evaluates to exactly the user's combined
relevance score (bit-for-bit equal to the sequential scorer: same entity
aggregation, same iteration order, same float expressions), and an internal
entry evaluates to a value >= every descendant's, term by term through
monotone float operations. Best-first search with that bound therefore
returns exactly the brute-force top-k over every user reachable through the
located trees.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import Interaction, SocialItem, UserProfile, build_profiles
from .errors import ConfigError
from .scoring import (
    BackgroundModel,
    CategoryProbs,
    ScoringConfig,
    aggregate_expansion,
    floored_log,
)

__all__ = [
    "IndexParams",
    "shift_add_xor_hash",
    "Slots",
    "UserBlock",
    "build_blocks",
    "LeafEntry",
    "InnerEntry",
    "TreeNode",
    "Tree",
    "PseudoQuery",
    "gen_pseudo_query",
    "entry_upper_bound",
    "SignatureTreeIndex",
    "build_index",
    "knn_query",
    "apply_updates",
    "rebuild_index",
    "verify_index",
]

logger = logging.getLogger(__name__)

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class IndexParams:
    """Structural knobs: hash constants, tree fanout, clustering threshold,
    and the reserve fraction vocabularies keep for unseen entities."""

    table_size: int = 1 << 17
    hash_seed: int = 31
    shift_left: int = 5
    shift_right: int = 2
    fanout: int = 16
    block_threshold: float = 0.6
    reserve_fraction: float = 0.2

    def __post_init__(self):
        if self.table_size < 1:
            raise ConfigError("table_size must be >= 1")
        if self.fanout < 2:
            raise ConfigError("fanout must be >= 2")
        if not 0 < self.block_threshold <= 1:
            raise ConfigError("block threshold must be in (0, 1]")
        if not 0 <= self.reserve_fraction < 1:
            raise ConfigError("reserve fraction must be in [0, 1)")


def shift_add_xor_hash(
    phrase: str,
    seed: int = 31,
    shift_left: int = 5,
    shift_right: int = 2,
    table_size: int = 1 << 17,
) -> int:
    """Shift-add-xor string hash, reduced modulo the table size.

    h starts at the seed; each character folds in via
    h ^= (h << L) + (h >> R) + char over 64-bit wraparound arithmetic.
    An empty phrase hashes to seed mod table_size.
    """
    if table_size < 1:
        raise ConfigError("table_size must be >= 1")
    h = seed & _MASK64
    for ch in phrase:
        h = (h ^ (((h << shift_left) & _MASK64) + (h >> shift_right) + ord(ch))) & _MASK64
    return h % table_size


class Slots:
    """Ordered id vocabulary with reserved tail capacity.

    New ids fill reserved slots until the reserve runs out; the next add then
    re-provisions capacity with a fresh reserve (the signature-vector rebuild
    the tree layer piggybacks on — entry vectors are virtual here, so only
    the accounting changes).
    """

    def __init__(self, reserve_fraction: float = 0.2):
        self.ids: List[int] = []
        self._slot: Dict[int, int] = {}
        self.reserve_fraction = reserve_fraction
        self.capacity = 0

    @classmethod
    def from_ids(cls, ids, reserve_fraction: float = 0.2) -> "Slots":
        s = cls(reserve_fraction)
        for i in ids:
            if i not in s._slot:
                s._slot[i] = len(s.ids)
                s.ids.append(i)
        s.capacity = s._provisioned(len(s.ids))
        return s

    def _provisioned(self, occupied: int) -> int:
        if occupied == 0:
            return 0
        return occupied + max(1, math.ceil(occupied * self.reserve_fraction))

    @property
    def occupied(self) -> int:
        return len(self.ids)

    @property
    def reserve_remaining(self) -> int:
        return self.capacity - len(self.ids)

    def slot_of(self, i: int) -> Optional[int]:
        return self._slot.get(i)

    def __contains__(self, i: int) -> bool:
        return i in self._slot

    def add(self, i: int) -> bool:
        """Add an id; returns True when the capacity had to be re-provisioned
        (reserve exhausted), False otherwise."""
        if i in self._slot:
            return False
        rebuilt = len(self.ids) >= self.capacity
        self._slot[i] = len(self.ids)
        self.ids.append(i)
        if rebuilt:
            self.capacity = self._provisioned(len(self.ids))
        return rebuilt


@dataclass
class UserBlock:
    """A cluster of consumers with similar long-term category interests."""

    block_id: int
    centroid: np.ndarray  # running mean of members' L1-normalized category vectors
    member_count: int = 0
    members: List[int] = field(default_factory=list)
    categories: set = field(default_factory=set)
    producer_vocab: Slots = field(default_factory=Slots)
    entity_vocab: Slots = field(default_factory=Slots)
    trees: Dict[int, "Tree"] = field(default_factory=dict)

    def absorb_vector(self, vec: np.ndarray) -> None:
        self.centroid = (self.centroid * self.member_count + vec) / (self.member_count + 1)
        self.member_count += 1

    def absorb_history(self, history) -> None:
        for it in history:
            self.categories.add(it.category)
            self.producer_vocab.add(it.producer)
            for e in it.entities:
                self.entity_vocab.add(e)


def interest_vector(profile: UserProfile, n_categories: int) -> np.ndarray:
    """L1-normalized category frequencies from the long-term list, falling
    back to the window while the long-term list is still empty."""
    vec = np.zeros(n_categories)
    events = profile.long_term.events or profile.short_term.items
    for it in events:
        vec[it.category] += 1.0
    total = vec.sum()
    return vec / total if total > 0 else vec


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.dot(a, a)) ** 0.5
    nb = float(np.dot(b, b)) ** 0.5
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def build_blocks(
    profiles: dict,
    threshold: float = 0.6,
    n_categories: Optional[int] = None,
    reserve_fraction: float = 0.2,
) -> List[UserBlock]:
    """One-pass clustering of consumers by long-term categorical interest.

    Consumers are visited in ascending id order; each joins the most similar
    existing block when the cosine to its centroid reaches the threshold
    (ties to the earlier block), otherwise opens a new block. Centroids are
    running means. Block vocabularies accumulate the union of member
    histories. Consumers with no interactions are skipped.
    """
    if not 0 < threshold <= 1:
        raise ConfigError("threshold must be in (0, 1]")
    if n_categories is None:
        n_categories = 1
        for p in profiles.values():
            for it in p.history():
                n_categories = max(n_categories, it.category + 1)
    blocks: List[UserBlock] = []
    for consumer in sorted(profiles):
        profile = profiles[consumer]
        history = profile.history()
        if not history:
            logger.warning("consumer %s has an empty history; not blocked", consumer)
            continue
        vec = interest_vector(profile, n_categories)
        best, best_sim = None, -1.0
        for blk in blocks:
            sim = _cosine(vec, blk.centroid)
            if sim > best_sim:
                best, best_sim = blk, sim
        if best is None or best_sim < threshold:
            best = UserBlock(
                block_id=len(blocks),
                centroid=np.zeros(n_categories),
                producer_vocab=Slots(reserve_fraction),
                entity_vocab=Slots(reserve_fraction),
            )
            blocks.append(best)
        best.absorb_vector(vec)
        best.members.append(consumer)
        best.absorb_history(history)
    for blk in blocks:
        blk.producer_vocab.capacity = blk.producer_vocab._provisioned(blk.producer_vocab.occupied)
        blk.entity_vocab.capacity = blk.entity_vocab._provisioned(blk.entity_vocab.occupied)
    return blocks


@dataclass
class LeafEntry:
    """A user's frozen scoring statistics inside one category tree."""

    consumer: int
    pl: float  # long-term category probability at the tree's category
    ps: float  # short-term category probability at the tree's category
    n_up: int  # |U^p|: long-term producer interaction total
    n_e: int  # |E|: long-term entity occurrence total
    producer_counts: dict
    entity_counts: dict
    profile: UserProfile

    is_leaf_entry = True

    def entity_value(self, e: int, bg: BackgroundModel, mu: float) -> float:
        den = self.n_e + mu
        if den == 0:
            return 0.0  # zero-evidence MLE: ranking floors it downstream
        return (self.entity_counts.get(e, 0) + mu * bg.entity_prob(e)) / den

    def producer_value(self, p: int, bg: BackgroundModel, mu: float) -> float:
        den = self.n_up + mu
        if den == 0:
            return 0.0  # zero-evidence MLE: ranking floors it downstream
        return (self.producer_counts.get(p, 0) + mu * bg.producer_prob(p)) / den

    def count_keys(self):
        return self.entity_counts.keys(), self.producer_counts.keys()

    def min_lengths(self):
        return self.n_up, self.n_e


@dataclass
class InnerEntry:
    """Component-wise maximum signature over one child node."""

    child: "TreeNode"
    pl: float = 0.0
    ps: float = 0.0
    min_n_up: int = 0
    min_n_e: int = 0
    ent_max: dict = field(default_factory=dict)
    prod_max: dict = field(default_factory=dict)
    container: Optional["TreeNode"] = None  # node whose entry list holds self

    is_leaf_entry = False

    def entity_value(self, e: int, bg: BackgroundModel, mu: float) -> float:
        v = self.ent_max.get(e)
        if v is not None:
            return v
        den = self.min_n_e + mu
        if den == 0:
            return 0.0  # mu == 0: every background mass below is zero too
        return mu * bg.entity_prob(e) / den

    def producer_value(self, p: int, bg: BackgroundModel, mu: float) -> float:
        v = self.prod_max.get(p)
        if v is not None:
            return v
        den = self.min_n_up + mu
        if den == 0:
            return 0.0  # mu == 0: every background mass below is zero too
        return mu * bg.producer_prob(p) / den

    def count_keys(self):
        return self.ent_max.keys(), self.prod_max.keys()

    def min_lengths(self):
        return self.min_n_up, self.min_n_e

    def signature_from_children(self, bg: BackgroundModel, mu_e: float, mu_p: float):
        """Exact component-wise maxima over the child node's entries."""
        entries = self.child.entries
        pl = max(e.pl for e in entries)
        ps = max(e.ps for e in entries)
        min_n_up = min(e.min_lengths()[0] for e in entries)
        min_n_e = min(e.min_lengths()[1] for e in entries)
        ent_keys: set = set()
        prod_keys: set = set()
        for e in entries:
            ek, pk = e.count_keys()
            ent_keys.update(ek)
            prod_keys.update(pk)
        ent_max = {k: max(e.entity_value(k, bg, mu_e) for e in entries) for k in sorted(ent_keys)}
        prod_max = {k: max(e.producer_value(k, bg, mu_p) for e in entries) for k in sorted(prod_keys)}
        return pl, ps, min_n_up, min_n_e, ent_max, prod_max

    def recompute(self, bg: BackgroundModel, mu_e: float, mu_p: float) -> None:
        (
            self.pl,
            self.ps,
            self.min_n_up,
            self.min_n_e,
            self.ent_max,
            self.prod_max,
        ) = self.signature_from_children(bg, mu_e, mu_p)


class TreeNode:
    __slots__ = ("leaf", "entries", "parent_entry")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list = []
        self.parent_entry: Optional[InnerEntry] = None


class Tree:
    """Extended signature tree for one (block, category) pair."""

    def __init__(self, block: UserBlock, category: int, fanout: int):
        self.block = block
        self.category = category
        self.fanout = fanout
        self.root = TreeNode(leaf=True)
        self.leaf_map: Dict[int, Tuple[TreeNode, LeafEntry]] = {}

    def find_leaf_entry(self, consumer: int):
        return self.leaf_map.get(consumer)

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.leaf:
                for entry in node.entries:
                    stack.append(entry.child)

    def iter_leaf_entries(self):
        for node in self.iter_nodes():
            if node.leaf:
                yield from node.entries


@dataclass
class PseudoQuery:
    """An item encoded against one block's vocabularies: one-hot producer,
    entity occurrence counts, and per-entity max expansion weights."""

    block_id: int
    category: int
    f_producer: np.ndarray
    f_entity: np.ndarray
    w_entity: np.ndarray
    # Query-side aggregation shared by every entry evaluation:
    agg: list = field(default_factory=list)  # [(entity, count, max weight)]
    producer: int = -1


def gen_pseudo_query(item: SocialItem, expanded: Sequence, block: UserBlock) -> PseudoQuery:
    """Encode an item against a block: the producer becomes a one-hot vector
    over the block's producer vocabulary (all zeros if absent), expanded
    entities become occurrence counts plus a max-weight vector over the
    block's entity vocabulary (zero where absent)."""
    agg = aggregate_expansion(expanded)
    f_producer = np.zeros(block.producer_vocab.occupied, dtype=np.int64)
    slot = block.producer_vocab.slot_of(item.producer)
    if slot is not None:
        f_producer[slot] = 1
    f_entity = np.zeros(block.entity_vocab.occupied, dtype=np.int64)
    w_entity = np.zeros(block.entity_vocab.occupied, dtype=float)
    for e, count, w in agg:
        s = block.entity_vocab.slot_of(e)
        if s is not None:
            f_entity[s] = count
            w_entity[s] = w
    return PseudoQuery(
        block_id=block.block_id,
        category=item.category,
        f_producer=f_producer,
        f_entity=f_entity,
        w_entity=w_entity,
        agg=agg,
        producer=item.producer,
    )


def entry_upper_bound(
    query: PseudoQuery,
    entry,
    bg: BackgroundModel,
    config: ScoringConfig,
) -> float:
    """Relevance of a pseudo-query against an entry signature.

    For a leaf entry this is exactly that user's combined score for the
    item; for an internal entry it dominates every descendant's score
    because each factor is a component-wise maximum (or a background bound
    through the minimum history length) and everything downstream of the
    factors is monotone.
    """
    score = floored_log(entry.pl, config.floor)
    score += floored_log(
        entry.producer_value(query.producer, bg, config.mu_producer), config.floor
    )
    total = 0.0
    for e, count, w in query.agg:
        total += count * w * entry.entity_value(e, bg, config.mu_entity)
    score += floored_log(total, config.floor)
    return (1.0 - config.lambda_s) * score + config.lambda_s * floored_log(
        entry.ps, config.floor
    )


class _ProbsSource:
    """Uniform access to per-profile category distributions, whether they
    come from a trained model bundle or a precomputed mapping."""

    def __init__(self, models, n_categories: int):
        self.models = models
        self.n_categories = n_categories

    def probs_for(self, profile: UserProfile) -> CategoryProbs:
        if self.models is None:
            u = np.full(self.n_categories, 1.0 / self.n_categories)
            return CategoryProbs(u, u.copy())
        if hasattr(self.models, "category_probs"):
            pl, ps = self.models.category_probs(profile)
            return CategoryProbs(pl, ps)
        probs = self.models.get(profile.consumer)
        if probs is None:
            u = np.full(self.n_categories, 1.0 / self.n_categories)
            return CategoryProbs(u, u.copy())
        return probs


@dataclass
class Triad:
    """Chained hash table element: the full hash key, the phrase it stands
    for, and one tree link per block covering the pair."""

    key: int
    phrase: str
    links: Dict[int, Tree] = field(default_factory=dict)


class SignatureTreeIndex:
    """The complete index: hash table, blocks, and their category trees."""

    def __init__(
        self,
        params: IndexParams,
        scoring: ScoringConfig,
        bg: BackgroundModel,
        probs_source: _ProbsSource,
        n_categories: int,
        window_capacity: int = 5,
    ):
        self.params = params
        self.scoring = scoring
        self.bg = bg
        self.probs_source = probs_source
        self.n_categories = n_categories
        self.window_capacity = window_capacity
        self.blocks: List[UserBlock] = []
        self.buckets: Dict[int, List[Triad]] = {}
        self.trees_by_category: Dict[int, List[Tree]] = {}
        self.block_of: Dict[int, int] = {}  # consumer -> block id
        self.excluded: List[int] = []  # consumers with empty histories

    # -- hash table ----------------------------------------------------------

    def _phrase(self, category: int, entity: int) -> str:
        return f"{category}#{entity}"

    def _full_hash(self, phrase: str) -> int:
        h = self.params.hash_seed & _MASK64
        for ch in phrase:
            h = (
                h
                ^ (
                    ((h << self.params.shift_left) & _MASK64)
                    + (h >> self.params.shift_right)
                    + ord(ch)
                )
            ) & _MASK64
        return h

    def hash_insert(self, category: int, entity: int, tree: Tree) -> None:
        phrase = self._phrase(category, entity)
        key = self._full_hash(phrase)
        bucket = self.buckets.setdefault(key % self.params.table_size, [])
        for triad in bucket:
            if triad.phrase == phrase:
                triad.links[tree.block.block_id] = tree
                return
        bucket.append(Triad(key=key, phrase=phrase, links={tree.block.block_id: tree}))

    def hash_lookup(self, category: int, entity: int) -> Optional[Triad]:
        phrase = self._phrase(category, entity)
        bucket = self.buckets.get(self._full_hash(phrase) % self.params.table_size)
        if not bucket:
            return None
        for triad in bucket:
            if triad.phrase == phrase:
                return triad
        return None

    # -- routing -------------------------------------------------------------

    def locate_trees(self, item: SocialItem) -> List[Tree]:
        """Trees covering any (category, entity) pair of the item; when no
        pair is indexed, fall back to every tree of the item's category so
        novel-entity items still reach category-compatible users."""
        found: Dict[int, Tree] = {}
        seen = set()
        for e in item.entities:
            if e in seen:
                continue
            seen.add(e)
            triad = self.hash_lookup(item.category, e)
            if triad is None:
                continue
            for block_id, tree in triad.links.items():
                found[block_id] = tree
        if not found:
            return list(self.trees_by_category.get(item.category, []))
        return [found[b] for b in sorted(found)]

    def reachable_consumers(self, item: SocialItem) -> List[int]:
        out: set = set()
        for tree in self.locate_trees(item):
            out.update(tree.block.members)
        return sorted(out)

    # -- construction ----------------------------------------------------------

    def make_lentry(self, profile: UserProfile, category: int) -> LeafEntry:
        probs = self.probs_source.probs_for(profile)
        return LeafEntry(
            consumer=profile.consumer,
            pl=float(probs.long[category]),
            ps=float(probs.short[category]),
            n_up=profile.long_term.total_producer_interactions,
            n_e=profile.long_term.total_entity_occurrences,
            producer_counts=dict(profile.long_term.producer_counts),
            entity_counts=dict(profile.long_term.entity_counts),
            profile=profile,
        )

    def _new_ientry(self, node: TreeNode, container: Optional[TreeNode]) -> InnerEntry:
        entry = InnerEntry(child=node, container=container)
        entry.recompute(self.bg, self.scoring.mu_entity, self.scoring.mu_producer)
        node.parent_entry = entry
        return entry

    def build_tree(self, block: UserBlock, category: int, profiles_of) -> Tree:
        """Bulk-load a category tree: leaves sorted by long-term category
        probability (strong candidates cluster left, tightening bounds early)
        and packed bottom-up at the configured fanout."""
        tree = Tree(block, category, self.params.fanout)
        lentries = [self.make_lentry(profiles_of(c), category) for c in block.members]
        lentries.sort(key=lambda le: (-le.pl, le.consumer))
        f = self.params.fanout
        level: List[TreeNode] = []
        for i in range(0, len(lentries), f):
            node = TreeNode(leaf=True)
            node.entries = lentries[i : i + f]
            level.append(node)
            for le in node.entries:
                tree.leaf_map[le.consumer] = (node, le)
        if not level:
            return tree
        while len(level) > 1:
            parents: List[TreeNode] = []
            for i in range(0, len(level), f):
                parent = TreeNode(leaf=False)
                parent.entries = [self._new_ientry(child, parent) for child in level[i : i + f]]
                parents.append(parent)
            level = parents
        tree.root = level[0]
        return tree

    def register_tree(self, tree: Tree) -> None:
        self.trees_by_category.setdefault(tree.category, []).append(tree)
        tree.block.trees[tree.category] = tree

    # -- maintenance -----------------------------------------------------------

    def refresh_ancestors(self, node: TreeNode) -> None:
        entry = node.parent_entry
        while entry is not None:
            entry.recompute(self.bg, self.scoring.mu_entity, self.scoring.mu_producer)
            entry = entry.container.parent_entry if entry.container is not None else None

    def _enlargement(self, ientry: InnerEntry, lentry: LeafEntry) -> float:
        grow = max(0.0, lentry.pl - ientry.pl) + max(0.0, lentry.ps - ientry.ps)
        mu_e = self.scoring.mu_entity
        mu_p = self.scoring.mu_producer
        for k in lentry.entity_counts:
            grow += max(
                0.0,
                lentry.entity_value(k, self.bg, mu_e) - ientry.entity_value(k, self.bg, mu_e),
            )
        for k in lentry.producer_counts:
            grow += max(
                0.0,
                lentry.producer_value(k, self.bg, mu_p) - ientry.producer_value(k, self.bg, mu_p),
            )
        return grow

    def insert_lentry(self, tree: Tree, lentry: LeafEntry) -> None:
        """Descend by least signature enlargement (ties to the first child),
        insert at a leaf, split on overflow, refresh ancestors."""
        node = tree.root
        while not node.leaf:
            best, best_grow = None, None
            for entry in node.entries:
                grow = self._enlargement(entry, lentry)
                if best_grow is None or grow < best_grow:
                    best, best_grow = entry, grow
            node = best.child
        node.entries.append(lentry)
        tree.leaf_map[lentry.consumer] = (node, lentry)
        self.refresh_ancestors(node)
        self._split_if_needed(tree, node)

    def _split_if_needed(self, tree: Tree, node: TreeNode) -> None:
        f = self.params.fanout
        if len(node.entries) <= f:
            return
        group_a, group_b = self._partition_entries(node.entries)
        sibling = TreeNode(leaf=node.leaf)
        node.entries = group_a
        sibling.entries = group_b
        if node.leaf:
            for le in node.entries:
                tree.leaf_map[le.consumer] = (node, le)
            for le in sibling.entries:
                tree.leaf_map[le.consumer] = (sibling, le)
        else:
            for entry in sibling.entries:
                entry.container = sibling
                entry.child.parent_entry = entry
            for entry in node.entries:
                entry.container = node
        parent_entry = node.parent_entry
        if parent_entry is None:
            new_root = TreeNode(leaf=False)
            new_root.entries = [
                self._new_ientry(node, new_root),
                self._new_ientry(sibling, new_root),
            ]
            tree.root = new_root
            return
        parent_node = parent_entry.container
        parent_entry.recompute(self.bg, self.scoring.mu_entity, self.scoring.mu_producer)
        parent_node.entries.append(self._new_ientry(sibling, parent_node))
        self.refresh_ancestors(parent_node)
        self._split_if_needed(tree, parent_node)

    def _partition_entries(self, entries: list):
        """Two-way split: seed with the most separated pair, assign the rest
        to the closer seed with a balance cap. Deterministic in entry order."""

        def sep(a, b) -> float:
            d = abs(a.pl - b.pl) + abs(a.ps - b.ps)
            mu_e = self.scoring.mu_entity
            mu_p = self.scoring.mu_producer
            for k in sorted(set(a.count_keys()[0]) | set(b.count_keys()[0])):
                d += abs(a.entity_value(k, self.bg, mu_e) - b.entity_value(k, self.bg, mu_e))
            for k in sorted(set(a.count_keys()[1]) | set(b.count_keys()[1])):
                d += abs(a.producer_value(k, self.bg, mu_p) - b.producer_value(k, self.bg, mu_p))
            return d

        n = len(entries)
        seed_a, seed_b, best = 0, 1, -1.0
        for i in range(n):
            for j in range(i + 1, n):
                d = sep(entries[i], entries[j])
                if d > best:
                    seed_a, seed_b, best = i, j, d
        group_a = [entries[seed_a]]
        group_b = [entries[seed_b]]
        cap = n - n // 2
        for idx in range(n):
            if idx in (seed_a, seed_b):
                continue
            entry = entries[idx]
            if len(group_a) >= cap:
                group_b.append(entry)
            elif len(group_b) >= cap:
                group_a.append(entry)
            elif sep(entries[seed_a], entry) <= sep(entries[seed_b], entry):
                group_a.append(entry)
            else:
                group_b.append(entry)
        return group_a, group_b


def build_index(
    profiles: dict,
    blocks: List[UserBlock],
    models,
    bg: BackgroundModel,
    config: Optional[ScoringConfig] = None,
    params: Optional[IndexParams] = None,
    window_capacity: int = 5,
    n_categories: Optional[int] = None,
) -> SignatureTreeIndex:
    """Assemble the index: per-(block, category) trees bulk-loaded bottom-up,
    exact max signatures, and the pair hash table.

    `models` may be a trained model bundle, a {consumer: CategoryProbs}
    mapping, or None (uniform category probabilities). The scoring config and
    background model are frozen into the stored statistics; queries may vary
    the mixing weight but not the smoothing.
    """
    config = config or ScoringConfig()
    params = params or IndexParams()
    if n_categories is None:
        n_categories = getattr(models, "n_categories", None)
        if n_categories is None:
            n_categories = 1
            for p in profiles.values():
                for it in p.history():
                    n_categories = max(n_categories, it.category + 1)
    source = _ProbsSource(models, n_categories)
    index = SignatureTreeIndex(params, config, bg, source, n_categories, window_capacity)
    index.blocks = blocks
    for blk in blocks:
        for consumer in blk.members:
            index.block_of[consumer] = blk.block_id
    for consumer in sorted(profiles):
        if consumer not in index.block_of and not profiles[consumer].history():
            index.excluded.append(consumer)
            logger.warning("consumer %s has an empty history; excluded from index", consumer)
    for blk in blocks:
        for category in sorted(blk.categories):
            index.register_tree(index.build_tree(blk, category, lambda c: profiles[c]))
    for blk in blocks:
        for consumer in blk.members:
            for it in profiles[consumer].history():
                tree = blk.trees.get(it.category)
                if tree is None:
                    continue
                for e in it.entities:
                    index.hash_insert(it.category, e, tree)
    return index


def knn_query(
    index: SignatureTreeIndex,
    item: SocialItem,
    k: int,
    config: Optional[ScoringConfig] = None,
    expanded: Optional[Sequence] = None,
) -> list:
    """Exact top-k consumers for an item via bound-pruned best-first search.

    Returns (consumer, score) pairs sorted by score descending, ties to the
    lower consumer id; equal to the brute-force ranking over every consumer
    reachable through the located trees. Entries whose bound falls strictly
    below the current k-th best score are pruned; entries at exactly the
    k-th score are still explored so ties resolve identically to the oracle.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    cfg = _resolve_query_config(index, config)
    if expanded is None:
        expanded = [(e, 1.0) for e in item.entities]
    trees = index.locate_trees(item)
    if not trees:
        return []

    counter = 0
    frontier: list = []  # max-heap via negated bound
    for tree in trees:
        q = gen_pseudo_query(item, expanded, tree.block)
        for entry in tree.root.entries:
            bound = entry_upper_bound(q, entry, index.bg, cfg)
            heapq.heappush(frontier, (-bound, counter, entry, q))
            counter += 1

    result_heap: list = []  # (score, -consumer): root is the entry to beat
    best_by_consumer: Dict[int, float] = {}

    while frontier:
        neg_bound, _, entry, q = heapq.heappop(frontier)
        bound = -neg_bound
        if len(result_heap) == k and bound < result_heap[0][0]:
            break  # max-first order: nothing left can make the cut
        if entry.is_leaf_entry:
            consumer, score = entry.consumer, bound
            prev = best_by_consumer.get(consumer)
            if prev is not None:
                # A consumer lives in one block, but guard anyway: keep max.
                if score > prev:
                    result_heap.remove((prev, -consumer))
                    heapq.heapify(result_heap)
                    heapq.heappush(result_heap, (score, -consumer))
                    best_by_consumer[consumer] = score
                continue
            if len(result_heap) < k:
                best_by_consumer[consumer] = score
                heapq.heappush(result_heap, (score, -consumer))
            elif (score, -consumer) > result_heap[0]:
                evicted = heapq.heappushpop(result_heap, (score, -consumer))
                del best_by_consumer[-evicted[1]]
                best_by_consumer[consumer] = score
        else:
            lb = result_heap[0][0] if len(result_heap) == k else float("-inf")
            for child_entry in entry.child.entries:
                b = entry_upper_bound(q, child_entry, index.bg, cfg)
                if len(result_heap) == k and b < lb:
                    continue
                heapq.heappush(frontier, (-b, counter, child_entry, q))
                counter += 1

    out = [(int(-neg_c), score) for score, neg_c in result_heap]
    out.sort(key=lambda cs: (-cs[1], cs[0]))
    return out


def _resolve_query_config(index: SignatureTreeIndex, config: Optional[ScoringConfig]) -> ScoringConfig:
    if config is None:
        return index.scoring
    baked = index.scoring
    if (
        config.mu_producer != baked.mu_producer
        or config.mu_entity != baked.mu_entity
        or config.floor != baked.floor
    ):
        raise ConfigError(
            "index statistics were frozen with different smoothing settings; "
            "rebuild the index or query with matching mu/floor"
        )
    return config


def apply_updates(
    index: SignatureTreeIndex,
    profiles: dict,
    new_interactions: Sequence[Interaction],
) -> SignatureTreeIndex:
    """Fold a batch of new interactions into profiles and the index.

    Per affected consumer: replay the interactions through the window-flush
    semantics, register any new (category, entity) pairs in the hash table
    (consuming vocabulary reserve slots, re-provisioning on exhaustion),
    refresh the consumer's leaf signatures and every ancestor up to the
    root, and insert brand-new consumers into a block by the one-pass
    clustering rule. Maintenance is total: an empty batch is a no-op.
    """
    by_consumer: Dict[int, List[Interaction]] = {}
    for inter in sorted(new_interactions, key=lambda x: x.timestamp):
        by_consumer.setdefault(inter.consumer, []).append(inter)

    for consumer in sorted(by_consumer):
        profile = profiles.get(consumer)
        if profile is None:
            profile = build_profiles(by_consumer[consumer], index.window_capacity)[consumer]
            profiles[consumer] = profile
        else:
            for inter in by_consumer[consumer]:
                profile.apply_interaction(inter)

        block_id = index.block_of.get(consumer)
        if block_id is None:
            _insert_new_consumer(index, profiles, profile)
        else:
            _refresh_member(index, profiles, profile, index.blocks[block_id])
    return index


def _refresh_member(
    index: SignatureTreeIndex, profiles: dict, profile: UserProfile, block: UserBlock
) -> None:
    consumer = profile.consumer
    history = profile.history()
    block.absorb_history(history)
    for category in sorted(set(block.categories) - set(block.trees.keys())):
        index.register_tree(index.build_tree(block, category, lambda c: profiles[c]))
    for it in history:
        tree = block.trees.get(it.category)
        if tree is None:
            continue
        for e in it.entities:
            index.hash_insert(it.category, e, tree)
    probs = index.probs_source.probs_for(profile)
    for category, tree in sorted(block.trees.items()):
        found = tree.find_leaf_entry(consumer)
        if found is None:
            index.insert_lentry(tree, index.make_lentry(profile, category))
            continue
        node, lentry = found
        lentry.pl = float(probs.long[category])
        lentry.ps = float(probs.short[category])
        lentry.n_up = profile.long_term.total_producer_interactions
        lentry.n_e = profile.long_term.total_entity_occurrences
        lentry.producer_counts = dict(profile.long_term.producer_counts)
        lentry.entity_counts = dict(profile.long_term.entity_counts)
        index.refresh_ancestors(node)


def _insert_new_consumer(index: SignatureTreeIndex, profiles: dict, profile: UserProfile) -> None:
    history = profile.history()
    if not history:
        index.excluded.append(profile.consumer)
        return
    vec = interest_vector(profile, index.n_categories)
    best, best_sim = None, -1.0
    for blk in index.blocks:
        sim = _cosine(vec, blk.centroid)
        if sim > best_sim:
            best, best_sim = blk, sim
    if best is None or best_sim < index.params.block_threshold:
        best = UserBlock(
            block_id=len(index.blocks),
            centroid=np.zeros(index.n_categories),
            producer_vocab=Slots(index.params.reserve_fraction),
            entity_vocab=Slots(index.params.reserve_fraction),
        )
        index.blocks.append(best)
    best.absorb_vector(vec)
    best.members.append(profile.consumer)
    index.block_of[profile.consumer] = best.block_id
    best.absorb_history(history)
    for category in sorted(set(best.categories) - set(best.trees.keys())):
        # A category new to the block: every member gets a leaf in its tree.
        index.register_tree(index.build_tree(best, category, lambda c: profiles[c]))
    for category, tree in sorted(best.trees.items()):
        if tree.find_leaf_entry(profile.consumer) is None:
            index.insert_lentry(tree, index.make_lentry(profile, category))
    for it in history:
        tree = best.trees.get(it.category)
        if tree is not None:
            for e in it.entities:
                index.hash_insert(it.category, e, tree)


def rebuild_index(index: SignatureTreeIndex, profiles: dict) -> SignatureTreeIndex:
    """From-scratch rebuild on the current profiles, keeping each consumer's
    block membership (one-pass clustering is order- and history-dependent,
    so re-clustering could legitimately move users; what a rebuild isolates
    is the tree, signature, vocabulary, and hash-table maintenance)."""
    fresh_blocks: List[UserBlock] = []
    for blk in index.blocks:
        nb = UserBlock(
            block_id=blk.block_id,
            centroid=blk.centroid.copy(),
            member_count=blk.member_count,
            members=list(blk.members),
            producer_vocab=Slots(index.params.reserve_fraction),
            entity_vocab=Slots(index.params.reserve_fraction),
        )
        for consumer in nb.members:
            nb.absorb_history(profiles[consumer].history())
        nb.producer_vocab.capacity = nb.producer_vocab._provisioned(nb.producer_vocab.occupied)
        nb.entity_vocab.capacity = nb.entity_vocab._provisioned(nb.entity_vocab.occupied)
        fresh_blocks.append(nb)
    return build_index(
        profiles,
        fresh_blocks,
        index.probs_source.models,
        index.bg,
        index.scoring,
        index.params,
        index.window_capacity,
        index.n_categories,
    )


def verify_index(index: SignatureTreeIndex) -> List[str]:
    """Replay structural invariants; returns a list of violations (empty
    when the index is sound). Does not modify the index."""
    problems: List[str] = []
    f = index.params.fanout
    mu_e, mu_p = index.scoring.mu_entity, index.scoring.mu_producer
    for category, trees in sorted(index.trees_by_category.items()):
        for tree in trees:
            tag = f"tree(block={tree.block.block_id}, category={category})"
            for node in tree.iter_nodes():
                if node is tree.root:
                    if len(node.entries) > f:
                        problems.append(f"{tag}: root overflow {len(node.entries)}")
                elif not 1 <= len(node.entries) <= f:
                    problems.append(
                        f"{tag}: node occupancy {len(node.entries)} outside [1, {f}]"
                    )
                if not node.leaf:
                    for entry in node.entries:
                        fresh = entry.signature_from_children(index.bg, mu_e, mu_p)
                        current = (
                            entry.pl,
                            entry.ps,
                            entry.min_n_up,
                            entry.min_n_e,
                            entry.ent_max,
                            entry.prod_max,
                        )
                        if current != fresh:
                            problems.append(f"{tag}: stale internal signature")
                        if entry.child.parent_entry is not entry:
                            problems.append(f"{tag}: broken child backpointer")
            members = set(tree.block.members)
            leaf_consumers = {le.consumer for le in tree.iter_leaf_entries()}
            if leaf_consumers != members:
                problems.append(f"{tag}: leaf entries do not cover block members")
            for consumer, (node, le) in tree.leaf_map.items():
                if le not in node.entries:
                    problems.append(f"{tag}: leaf map stale for consumer {consumer}")
    for blk in index.blocks:
        for consumer in blk.members:
            prof = _profile_of_safe(blk, consumer)
            if prof is None:
                problems.append(f"block {blk.block_id}: member {consumer} has no leaf entry")
                continue
            for it in prof.history():
                tree = blk.trees.get(it.category)
                if tree is None:
                    problems.append(
                        f"block {blk.block_id}: missing tree for category {it.category}"
                    )
                    continue
                for e in it.entities:
                    triad = index.hash_lookup(it.category, e)
                    if triad is None or blk.block_id not in triad.links:
                        problems.append(
                            f"hash chain incomplete for pair ({it.category}, {e})"
                            f" in block {blk.block_id}"
                        )
    return problems


def _profile_of_safe(blk: UserBlock, consumer: int) -> Optional[UserProfile]:
    for tree in blk.trees.values():
        found = tree.find_leaf_entry(consumer)
        if found is not None:
            return found[1].profile
    return None
