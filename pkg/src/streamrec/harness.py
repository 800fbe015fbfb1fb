"""Stream-simulation harness: partitioning, precision measurement, model
accuracy comparison, parameter sweeps, and latency benchmarking.

The interaction stream splits into six contiguous time slices; the first two
only ever train. Each later slice is replayed as an item stream against
models and an index built from everything before it, with profile updates
folded in along the way. Precision at k counts a recommendation as a hit
when the recommended user really interacts with that item inside the test
slice.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .layered import (
    annotate_consumer_history,
    select_state_count,
    train_consumer_model,
    train_models,
)
from .data import Interaction, SocialItem, Vocabularies, build_profiles, ingest_log
from .errors import ConfigError
from .expansion import ExpansionConfig, build_cooccurrence, expand_entities
from .hmm import TrainConfig, baum_welch, predict_next_obs
from .index import IndexParams, apply_updates, build_index, build_blocks, knn_query
from .scoring import BackgroundModel, RelevanceScorer, ScoringConfig

__all__ = [
    "Dataset",
    "PartitionPlan",
    "SimConfig",
    "partition_stream",
    "run_stream_simulation",
    "prediction_accuracy",
    "sweep",
    "bench_latency",
]

N_PARTITIONS = 6
TRAIN_PARTITIONS = 2


@dataclass
class Dataset:
    items: list
    interactions: list
    vocabs: Vocabularies

    @classmethod
    def from_log(cls, path, format: str = "jsonl") -> "Dataset":
        items, interactions, vocabs = ingest_log(path, format)
        return cls(items, interactions, vocabs)

    @property
    def n_categories(self) -> int:
        return max(1, len(self.vocabs.categories))


@dataclass
class PartitionPlan:
    """Six contiguous timestamp-ordered slices; slices 0-1 are the seed
    training data, each later slice is tested with everything before it as
    training."""

    slices: list

    def training_for(self, test_idx: int) -> list:
        out = []
        for i in range(test_idx):
            out.extend(self.slices[i])
        return out

    @property
    def test_indices(self) -> range:
        return range(TRAIN_PARTITIONS, len(self.slices))


def partition_stream(
    interactions: Sequence[Interaction], n_partitions: int = N_PARTITIONS
) -> PartitionPlan:
    """Evenly split the sorted stream into contiguous slices (six by
    default); any remainder goes to the last slice."""
    if n_partitions < TRAIN_PARTITIONS + 1:
        raise ConfigError("need at least one test partition after the training ones")
    n = len(interactions)
    base = n // n_partitions
    slices = []
    start = 0
    for i in range(n_partitions):
        end = start + base if i < n_partitions - 1 else n
        slices.append(list(interactions[start:end]))
        start = end
    return PartitionPlan(slices)


@dataclass
class SimConfig:
    window_capacity: int = 5
    k_values: tuple = (5, 10, 20, 30)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    expansion: ExpansionConfig = field(default_factory=ExpansionConfig)
    index_params: IndexParams = field(default_factory=IndexParams)
    producer_states: Optional[int] = 2  # None selects per producer (slower)
    consumer_states: Optional[int] = 2  # None selects per consumer (slower)
    expansion_enabled: bool = True
    update_batch_size: int = 200
    oracle: bool = False  # rank with the sequential scorer instead of the index
    lambda_values: Optional[tuple] = None  # extra mixing weights to evaluate
    n_partitions: int = N_PARTITIONS


def _first_partition_of_items(plan: PartitionPlan) -> Dict[str, int]:
    first: Dict[str, int] = {}
    for idx, part in enumerate(plan.slices):
        for inter in part:
            if inter.item.item_id not in first:
                first[inter.item.item_id] = idx
    return first


def _items_of(interactions) -> list:
    seen = set()
    out = []
    for inter in interactions:
        if inter.item.item_id not in seen:
            seen.add(inter.item.item_id)
            out.append(inter.item)
    return out


def run_stream_simulation(dataset: Dataset, config: Optional[SimConfig] = None) -> dict:
    """Rolling train/test over the partition plan; returns the evaluation
    report as a JSON-ready dict (no wall-clock content, so identical runs
    produce identical bytes)."""
    config = config or SimConfig()
    plan = partition_stream(dataset.interactions, config.n_partitions)
    n_categories = dataset.n_categories
    lambdas = [config.scoring.lambda_s]
    if config.lambda_values:
        lambdas = sorted(set(lambdas) | set(config.lambda_values))
    k_values = sorted(config.k_values)
    kmax = max(k_values)
    first_partition = _first_partition_of_items(plan)

    partition_reports = []
    pooled_hits = {(lam, k): 0 for lam in lambdas for k in k_values}
    pooled_items = 0

    for test_idx in plan.test_indices:
        training = plan.training_for(test_idx)
        test_slice = plan.slices[test_idx]
        if not training or not test_slice:
            continue
        profiles = build_profiles(training, config.window_capacity)
        bg = BackgroundModel.from_interactions(training)
        train_items = _items_of(training)
        stats = None
        if config.expansion_enabled:
            stats = build_cooccurrence(train_items, config.expansion.window, config.expansion.cap)
        bundle = train_models(
            train_items,
            profiles,
            n_categories,
            config=config.training,
            producer_states=config.producer_states,
            consumer_states=config.consumer_states,
        )
        blocks = build_blocks(
            profiles,
            config.index_params.block_threshold,
            n_categories,
            config.index_params.reserve_fraction,
        )
        index = build_index(
            profiles,
            blocks,
            bundle,
            bg,
            config.scoring,
            config.index_params,
            config.window_capacity,
            n_categories,
        )
        scorer = None
        if config.oracle:
            scorer = RelevanceScorer.from_models(profiles, bundle, bg, config.scoring)

        # Who interacts with each test item inside this slice (ground truth).
        interactors: Dict[str, set] = {}
        for inter in test_slice:
            interactors.setdefault(inter.item.item_id, set()).add(inter.consumer)

        hits = {(lam, k): 0 for lam in lambdas for k in k_values}
        n_new_items = 0
        pending: list = []
        for inter in test_slice:
            item = inter.item
            if first_partition[item.item_id] == test_idx and item.item_id in interactors:
                # first arrival of a genuinely new item: recommend before
                # anyone's interaction with it is folded in
                n_new_items += 1
                truth = interactors.pop(item.item_id)
                if stats is not None:
                    expanded = expand_entities(
                        item.entities, item.category, stats, config.expansion.per_entity
                    )
                else:
                    expanded = [(e, 1.0) for e in item.entities]
                for lam in lambdas:
                    qcfg = ScoringConfig(
                        lam,
                        config.scoring.mu_producer,
                        config.scoring.mu_entity,
                        config.scoring.floor,
                    )
                    if config.oracle:
                        reachable = index.reachable_consumers(item)
                        ranked = scorer.top_k(
                            item, kmax, expanded=expanded, consumers=reachable, lambda_s=lam
                        )
                    else:
                        ranked = knn_query(index, item, kmax, config=qcfg, expanded=expanded)
                    ids = [c for c, _ in ranked]
                    for k in k_values:
                        hits[(lam, k)] += len(set(ids[:k]) & truth)
            pending.append(inter)
            if len(pending) >= config.update_batch_size:
                apply_updates(index, profiles, pending)
                pending = []
                if config.oracle:
                    scorer = RelevanceScorer.from_models(profiles, bundle, bg, config.scoring)
        if pending:
            apply_updates(index, profiles, pending)

        report = {
            "partition": test_idx + 1,  # 1-based, matching the six-way split
            "n_items": n_new_items,
            "precision": {},
        }
        for lam in lambdas:
            for k in k_values:
                h = hits[(lam, k)]
                pooled_hits[(lam, k)] += h
                denom = n_new_items * k
                report["precision"][f"lambda={lam:.1f},k={k}"] = {
                    "hits": h,
                    "p_at_k": (h / denom) if denom else 0.0,
                }
        partition_reports.append(report)
        pooled_items += n_new_items

    pooled = {"n_items": pooled_items, "precision": {}}
    for lam in lambdas:
        for k in k_values:
            h = pooled_hits[(lam, k)]
            denom = pooled_items * k
            pooled["precision"][f"lambda={lam:.1f},k={k}"] = {
                "hits": h,
                "p_at_k": (h / denom) if denom else 0.0,
            }
    return {
        "schema_version": 1,
        "k_values": list(k_values),
        "lambda_values": [float(x) for x in lambdas],
        "oracle": bool(config.oracle),
        "partitions": partition_reports,
        "pooled": pooled,
    }


def _rolling_accuracy(params, history, split, state_masks=None) -> float:
    correct = 0
    for t in range(split, len(history)):
        masks = state_masks[:t] if state_masks is not None else None
        dist = predict_next_obs(params, history[:t], state_masks=masks)
        if int(np.argmax(dist)) == history[t]:
            correct += 1
    return correct / (len(history) - split)


def prediction_accuracy(
    model_kind: str,
    profiles: dict,
    items: list,
    n_categories: int,
    config: Optional[TrainConfig] = None,
    state_count: Optional[int] = None,
    candidates=range(1, 9),
    producer_states: Optional[int] = 2,
) -> dict:
    """Per-user next-category accuracy on an 80/20 temporal split.

    model_kind is 'hmm' (plain chain over categories) or 'layered' (composite
    states with producer attachments). Users group by their selected hidden
    state count (or all under `state_count` when given); the report carries
    per-group and overall means.
    """
    if model_kind not in ("hmm", "layered"):
        raise ConfigError("model_kind must be 'hmm' or 'layered'")
    config = config or TrainConfig()
    from .layered import group_items_by_producer, train_producer_models

    producer_models = {}
    if model_kind == "layered":
        producer_models = train_producer_models(
            group_items_by_producer(items),
            n_states=producer_states,
            config=config,
            n_categories=n_categories,
        )
    groups: Dict[int, list] = {}
    for consumer in sorted(profiles):
        profile = profiles[consumer]
        history = [it.category for it in profile.history()]
        if len(history) < 5:
            continue
        n = state_count or select_state_count(history, candidates, config, n_categories)
        split = max(1, int(len(history) * 0.8))
        if model_kind == "hmm":
            fit = baum_welch([history[:split]], n, n_categories, config=config)
            acc = _rolling_accuracy(fit.params, history, split)
        else:
            annotated = annotate_consumer_history(profile, producer_models)
            n_prod = 1
            for it in profile.history():
                pm = producer_models.get(it.producer)
                n_prod = max(n_prod, pm.n_states if pm is not None else 1)
            model = train_consumer_model(
                annotated[:split], n, n_categories, n_prod, config=config, consumer=consumer
            )
            masks = model.space.masks_for([z for _, z in annotated])
            acc = _rolling_accuracy(model.params, history, split, state_masks=masks)
        groups.setdefault(n, []).append(acc)

    report = {"model": model_kind, "groups": {}, "n_users": 0}
    total, count = 0.0, 0
    for n in sorted(groups):
        accs = groups[n]
        report["groups"][str(n)] = {
            "n_users": len(accs),
            "mean_accuracy": float(np.mean(accs)),
        }
        total += sum(accs)
        count += len(accs)
    report["n_users"] = count
    report["mean_accuracy"] = (total / count) if count else 0.0
    return report


def sweep(parameter: str, dataset: Dataset, config: Optional[SimConfig] = None) -> dict:
    """Grid evaluation: 'window' varies the short-term capacity 1..10
    (reporting each point's best mixing weight), 'lambda' varies the mixing
    weight 0.1..1.0 at the configured window."""
    config = config or SimConfig()
    lambdas = tuple(round(0.1 * i, 1) for i in range(1, 11))
    if parameter == "lambda":
        cfg = _replace_sim(config, lambda_values=lambdas)
        report = run_stream_simulation(dataset, cfg)
        points = []
        for lam in lambdas:
            key = f"lambda={lam:.1f},k={max(config.k_values)}"
            points.append(
                {"lambda": lam, "p_at_k": report["pooled"]["precision"][key]["p_at_k"]}
            )
        return {"parameter": "lambda", "k": max(config.k_values), "points": points}
    if parameter == "window":
        points = []
        for w in range(1, 11):
            cfg = _replace_sim(config, window_capacity=w, lambda_values=lambdas)
            report = run_stream_simulation(dataset, cfg)
            k = max(config.k_values)
            best = None
            for lam in lambdas:
                p = report["pooled"]["precision"][f"lambda={lam:.1f},k={k}"]["p_at_k"]
                if best is None or p > best[1]:
                    best = (lam, p)
            points.append({"window": w, "best_lambda": best[0], "p_at_k": best[1]})
        return {"parameter": "window", "k": max(config.k_values), "points": points}
    raise ConfigError("parameter must be 'window' or 'lambda'")


def _replace_sim(config: SimConfig, **kw) -> SimConfig:
    from dataclasses import replace

    return replace(config, **kw)


def bench_latency(index, scorer: RelevanceScorer, items: Sequence[SocialItem], k: int,
                  expanded_of: Optional[Callable] = None) -> dict:
    """Per-item wall-clock comparison of the pruned index against the
    sequential scorer on the same stream; verifies both return identical
    rankings while timing them."""
    if expanded_of is None:
        expanded_of = lambda item: [(e, 1.0) for e in item.entities]
    index_times, brute_times = [], []
    mismatches = 0
    for item in items:
        expanded = expanded_of(item)
        t0 = time.perf_counter()
        got = knn_query(index, item, k, expanded=expanded)
        t1 = time.perf_counter()
        reachable = index.reachable_consumers(item)
        t2 = time.perf_counter()
        want = scorer.top_k(item, k, expanded=expanded, consumers=reachable)
        t3 = time.perf_counter()
        index_times.append(t1 - t0)
        brute_times.append(t3 - t2)
        if got != want:
            mismatches += 1

    def dist(xs):
        arr = np.asarray(xs)
        return {
            "mean_s": float(arr.mean()),
            "median_s": float(np.median(arr)),
            "p99_s": float(np.percentile(arr, 99)),
        }

    mean_idx = float(np.mean(index_times))
    mean_brute = float(np.mean(brute_times))
    return {
        "n_items": len(items),
        "k": k,
        "index": dist(index_times),
        "brute_force": dist(brute_times),
        "speedup": (mean_brute / mean_idx) if mean_idx > 0 else float("inf"),
        "result_mismatches": mismatches,
    }
