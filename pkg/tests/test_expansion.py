import pytest

from streamrec.data import SocialItem
from streamrec.errors import ConfigError
from streamrec.expansion import (
    CooccurrenceStats,
    build_cooccurrence,
    expand_entities,
)


def item(category, entities, iid="v", ts=0):
    return SocialItem(iid, category, 0, tuple(entities), ts)


class TestBuildCooccurrence:
    def test_never_cooccurring_pairs_absent(self):
        stats = build_cooccurrence([item(0, [1, 2]), item(0, [3, 4])], window=3)
        assert stats.score(0, 1, 3) == 0.0
        expanded = expand_entities([1], 0, stats, m=2)
        assert all(e != 3 for e, _ in expanded)

    def test_single_pair_scores_one_and_caps(self):
        stats = build_cooccurrence([item(0, [1, 2])], window=3)
        assert stats.score(0, 1, 2) == 1.0
        partners = stats.partners(0, 1)
        assert partners == [(2, 0.95)]

    def test_window_bound_excludes_distant_pairs(self):
        stats = build_cooccurrence([item(0, [1, 9, 2])], window=1)
        assert stats.score(0, 1, 2) == 0.0
        assert stats.score(0, 1, 9) == 1.0

    def test_reciprocal_distance_kernel(self):
        stats = build_cooccurrence([item(0, [1, 9, 2])], window=5)
        assert stats.score(0, 1, 2) == pytest.approx(0.5)

    def test_scores_symmetric(self):
        stats = build_cooccurrence(
            [item(0, [1, 2, 3]), item(0, [2, 1]), item(0, [3, 1, 1, 2])], window=4
        )
        for a in (1, 2, 3):
            for b in (1, 2, 3):
                assert stats.score(0, a, b) == pytest.approx(stats.score(0, b, a))

    def test_self_pairs_ignored(self):
        stats = build_cooccurrence([item(0, [1, 2, 1])], window=5)
        assert stats.score(0, 1, 1) == 0.0

    def test_per_category_separation(self):
        stats = build_cooccurrence([item(0, [1, 2]), item(1, [1, 3])], window=3)
        assert stats.score(0, 1, 2) > 0
        assert stats.score(1, 1, 2) == 0.0

    def test_monotone_corpus_growth(self):
        corpus = [item(0, [1, 2]), item(0, [1, 3, 2])]
        small = build_cooccurrence(corpus[:1], window=5)
        big = build_cooccurrence(corpus, window=5)
        assert big.score(0, 1, 2) >= small.score(0, 1, 2)
        assert big.score(0, 1, 3) > 0

    def test_accumulation_sums_across_items(self):
        stats = build_cooccurrence([item(0, [1, 2]), item(0, [1, 2])], window=5)
        assert stats.score(0, 1, 2) == pytest.approx(2.0)

    def test_bad_window(self):
        with pytest.raises(ConfigError):
            build_cooccurrence([], window=0)


class TestExpandEntities:
    def test_reference_expansion(self):
        # Entities: 0=Beckham, 1=worldcup, 2=Messi, 3=FIFA; category 0=sports.
        stats = CooccurrenceStats.from_weights({0: {0: [(2, 0.7)], 1: [(3, 0.9)]}})
        expanded = expand_entities([0, 1, 1], 0, stats, m=1)
        assert expanded == [(0, 1.0), (2, 0.7), (1, 1.0), (3, 0.9), (1, 1.0), (3, 0.9)]

    def test_m_zero_is_identity_with_unit_weights(self):
        stats = CooccurrenceStats.from_weights({0: {0: [(2, 0.7)]}})
        assert expand_entities([0, 1], 0, stats, m=0) == [(0, 1.0), (1, 1.0)]

    def test_entity_without_partners_contributes_only_itself(self):
        stats = CooccurrenceStats()
        assert expand_entities([5], 0, stats, m=3) == [(5, 1.0)]

    def test_output_length_bound(self):
        stats = build_cooccurrence(
            [item(0, [1, 2, 3, 4]), item(0, [2, 3, 1])], window=5
        )
        for m in (0, 1, 2, 3):
            expanded = expand_entities([1, 2, 3], 0, stats, m=m)
            assert len(expanded) <= 3 * (1 + m)

    def test_partner_order_weight_then_id(self):
        stats = CooccurrenceStats.from_weights({0: {0: [(5, 0.5), (2, 0.9), (7, 0.9)]}})
        assert stats.partners(0, 0) == [(2, 0.9), (7, 0.9), (5, 0.5)]
        assert expand_entities([0], 0, stats, m=2) == [(0, 1.0), (2, 0.9), (7, 0.9)]

    def test_round_trip(self):
        import json

        stats = build_cooccurrence([item(0, [1, 2, 3])], window=5)
        back = CooccurrenceStats.from_dict(json.loads(json.dumps(stats.to_dict())))
        assert back.partners(0, 1) == stats.partners(0, 1)
        explicit = CooccurrenceStats.from_weights({0: {1: [(2, 0.4)]}})
        back2 = CooccurrenceStats.from_dict(json.loads(json.dumps(explicit.to_dict())))
        assert back2.partners(0, 1) == [(2, 0.4)]
