import numpy as np
import pytest

from streamrec.layered import train_models
from streamrec.data import Interaction, SocialItem, Vocabularies, build_profiles
from streamrec.errors import DataError, IntegrityError
from streamrec.hmm import TrainConfig
from streamrec.index import build_blocks, build_index, knn_query
from streamrec.persist import (
    load_dataset_bundle,
    load_index,
    load_model_bundle,
    save_dataset_bundle,
    save_index,
    save_model_bundle,
)
from streamrec.scoring import BackgroundModel


def small_world():
    vocabs = Vocabularies()
    interactions = []
    for t in range(24):
        consumer = vocabs.users.intern(f"u{t % 3}")
        item = SocialItem(
            f"v{t % 9}",
            vocabs.categories.intern(f"c{t % 2}"),
            vocabs.users.intern(f"p{t % 2}"),
            (vocabs.entities.intern(f"e{t % 4}"),),
            t,
        )
        interactions.append(Interaction(consumer, item, t))
    items = []
    seen = set()
    for x in interactions:
        if x.item.item_id not in seen:
            seen.add(x.item.item_id)
            items.append(x.item)
    return items, interactions, vocabs


class TestDatasetBundle:
    def test_round_trip(self, tmp_path):
        items, interactions, vocabs = small_world()
        manifest = save_dataset_bundle(tmp_path, items, interactions, vocabs, 5)
        items2, interactions2, vocabs2, manifest2 = load_dataset_bundle(tmp_path)
        assert manifest2["n_interactions"] == manifest["n_interactions"] == len(interactions)
        assert len(items2) == len(items)
        assert vocabs2.to_dict() == vocabs.to_dict()
        assert [x.timestamp for x in interactions2] == [x.timestamp for x in interactions]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset_bundle(tmp_path)


class TestModelBundle:
    def test_round_trip(self, tmp_path):
        items, interactions, vocabs = small_world()
        profiles = build_profiles(interactions, 5)
        bundle = train_models(
            items, profiles, 2, TrainConfig(seed=0, max_iterations=8),
            producer_states=1, consumer_states=2,
        )
        path = tmp_path / "models.json"
        save_model_bundle(path, bundle)
        back = load_model_bundle(path)
        assert set(back.consumer_models) == set(bundle.consumer_models)
        for c in bundle.consumer_models:
            a, b = bundle.consumer_models[c].params, back.consumer_models[c].params
            assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)


class TestIndexSnapshot:
    def build(self):
        items, interactions, vocabs = small_world()
        profiles = build_profiles(interactions, 5)
        bg = BackgroundModel.from_interactions(interactions)
        blocks = build_blocks(profiles, 0.5, 2)
        return (
            build_index(profiles, blocks, None, bg, n_categories=2),
            items,
        )

    def test_round_trip_preserves_results(self, tmp_path):
        index, items = self.build()
        want = knn_query(index, items[0], 3)
        path = tmp_path / "index.bin"
        save_index(path, index)
        back = load_index(path, verify=True)
        assert knn_query(back, items[0], 3) == want

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataError):
            load_index(path)

    def test_rejects_truncated(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"CP")
        with pytest.raises(DataError):
            load_index(path)

    def test_header_payload_disagreement(self, tmp_path):
        index, _ = self.build()
        path = tmp_path / "index.bin"
        save_index(path, index)
        raw = bytearray(path.read_bytes())
        raw[8:16] = (99999).to_bytes(8, "big")  # corrupt stored table_size
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            load_index(path)
