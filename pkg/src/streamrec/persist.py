"""On-disk formats: dataset bundles, model bundles, co-occurrence stats, and
versioned binary index snapshots.

A dataset bundle is a directory of JSONL/JSON files keyed by the original
string names, so re-ingesting it reproduces the in-memory structures
exactly. The index snapshot is a fixed binary header (magic, version, and
the structural parameters) followed by a pickled payload; the header lets a
reader reject foreign or stale files before unpickling.
"""

from __future__ import annotations

import json
import pickle
import struct
from pathlib import Path

from .layered import ModelBundle
from .data import Vocabularies
from .errors import DataError, IntegrityError
from .expansion import CooccurrenceStats
from .index import SignatureTreeIndex, verify_index

__all__ = [
    "save_dataset_bundle",
    "load_dataset_bundle",
    "save_model_bundle",
    "load_model_bundle",
    "save_stats",
    "load_stats",
    "save_index",
    "load_index",
]

INDEX_MAGIC = b"STIX"
INDEX_VERSION = 1
_HEADER = struct.Struct(">4sIQIdI")  # magic, version, table_size, fanout, tau, n_blocks


def save_dataset_bundle(out_dir, items, interactions, vocabs: Vocabularies, window_capacity: int) -> dict:
    """Write a normalized dataset: interactions.jsonl (string names, sorted
    by time), items.jsonl, vocab.json, and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cats, users, ents = vocabs.categories, vocabs.users, vocabs.entities
    with open(out / "interactions.jsonl", "w", encoding="utf-8") as fh:
        for inter in interactions:
            it = inter.item
            fh.write(
                json.dumps(
                    {
                        "ts": inter.timestamp,
                        "consumer": users.name_of(inter.consumer),
                        "item": it.item_id,
                        "category": cats.name_of(it.category),
                        "producer": users.name_of(it.producer),
                        "entities": [ents.name_of(e) for e in it.entities],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(out / "items.jsonl", "w", encoding="utf-8") as fh:
        for it in items:
            fh.write(
                json.dumps(
                    {
                        "item": it.item_id,
                        "ts": it.timestamp,
                        "category": cats.name_of(it.category),
                        "producer": users.name_of(it.producer),
                        "entities": [ents.name_of(e) for e in it.entities],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(out / "vocab.json", "w", encoding="utf-8") as fh:
        json.dump(vocabs.to_dict(), fh, sort_keys=True, indent=0)
    manifest = {
        "schema_version": 1,
        "n_items": len(items),
        "n_interactions": len(interactions),
        "window_capacity": window_capacity,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=0)
    return manifest


def load_dataset_bundle(bundle_dir):
    """Re-ingest a bundle; returns (items, interactions, vocabs, manifest).

    Profiles are reconstructed by replaying interactions, which is exact by
    the replay-determinism of profile building.
    """
    from .data import ingest_log

    bundle = Path(bundle_dir)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{bundle}: not a dataset bundle (missing manifest.json)")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    items, interactions, vocabs = ingest_log(bundle / "interactions.jsonl", "jsonl")
    return items, interactions, vocabs, manifest


def save_model_bundle(path, bundle: ModelBundle) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle.to_dict(), fh, sort_keys=True)


def load_model_bundle(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        return ModelBundle.from_dict(json.load(fh))


def save_stats(path, stats: CooccurrenceStats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, sort_keys=True)


def load_stats(path) -> CooccurrenceStats:
    with open(path, "r", encoding="utf-8") as fh:
        return CooccurrenceStats.from_dict(json.load(fh))


def save_index(path, index: SignatureTreeIndex) -> None:
    header = _HEADER.pack(
        INDEX_MAGIC,
        INDEX_VERSION,
        index.params.table_size,
        index.params.fanout,
        index.params.block_threshold,
        len(index.blocks),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        pickle.dump(index, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_index(path, verify: bool = False) -> SignatureTreeIndex:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise DataError(f"{path}: truncated index snapshot")
        magic, version, table_size, fanout, tau, n_blocks = _HEADER.unpack(raw)
        if magic != INDEX_MAGIC:
            raise DataError(f"{path}: not an index snapshot")
        if version != INDEX_VERSION:
            raise DataError(f"{path}: unsupported snapshot version {version}")
        index = pickle.load(fh)
    if (
        index.params.table_size != table_size
        or index.params.fanout != fanout
        or index.params.block_threshold != tau
        or len(index.blocks) != n_blocks
    ):
        raise IntegrityError(f"{path}: header disagrees with payload")
    if verify:
        problems = verify_index(index)
        if problems:
            raise IntegrityError(
                f"{path}: index invariants violated: " + "; ".join(problems[:5])
            )
    return index
