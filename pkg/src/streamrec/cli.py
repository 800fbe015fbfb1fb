"""Command-line entry point.

Subcommands cover the full pipeline: ingest, train, expand, index
{build,query,update,verify}, simulate, sweep, bench, and synth. Settings
resolve as flags > config file (TOML, --config or $SSREC_CONFIG) > defaults,
and every source of randomness flows from one --seed so identical
invocations produce identical artifacts.

Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 integrity
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .layered import train_models
from .data import build_profiles, ingest_log
from .errors import ConfigError, DataError, IntegrityError
from .expansion import ExpansionConfig, build_cooccurrence, expand_entities
from .harness import Dataset, SimConfig, bench_latency, run_stream_simulation, sweep
from .hmm import TrainConfig
from .index import (
    IndexParams,
    apply_updates,
    build_blocks,
    build_index,
    gen_pseudo_query,
    knn_query,
    verify_index,
)
from .persist import (
    load_dataset_bundle,
    load_index,
    load_model_bundle,
    load_stats,
    save_dataset_bundle,
    save_index,
    save_model_bundle,
    save_stats,
)
from .scoring import BackgroundModel, RelevanceScorer, ScoringConfig
from .synth import SynthConfig, generate_synthetic

__all__ = ["main"]


def _load_config_file(path):
    if path is None:
        path = os.environ.get("SSREC_CONFIG")
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        import tomllib  # python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(p, "rb") as fh:
        return tomllib.load(fh)


class _Settings:
    """flags > config file > defaults."""

    def __init__(self, file_doc: dict):
        self.doc = file_doc

    def get(self, flag_value, section: str, key: str, default):
        if flag_value is not None:
            return flag_value
        sec = self.doc.get(section, {})
        if key in sec:
            return sec[key]
        return default


def _scoring_config(args, st: _Settings) -> ScoringConfig:
    lam = float(st.get(args.lambda_s, "scoring", "lambda_s", 0.4))
    if not 0.0 < lam < 1.0:
        raise ConfigError("--lambda-s must lie strictly between 0 and 1")
    return ScoringConfig(
        lambda_s=lam,
        mu_producer=float(st.get(args.mu_producer, "scoring", "mu_producer", 50.0)),
        mu_entity=float(st.get(args.mu_entity, "scoring", "mu_entity", 100.0)),
    )


def _train_config(args, st: _Settings) -> TrainConfig:
    return TrainConfig(
        max_iterations=int(st.get(args.max_iterations, "training", "max_iterations", 100)),
        tolerance=float(st.get(args.tolerance, "training", "tolerance", 1e-6)),
        seed=int(st.get(args.seed, "training", "seed", 0)),
        restarts=int(st.get(args.restarts, "training", "restarts", 3)),
    )


def _expansion_config(args, st: _Settings) -> ExpansionConfig:
    return ExpansionConfig(
        window=int(st.get(args.expansion_window, "expansion", "window", 5)),
        per_entity=int(st.get(args.expansion_per_entity, "expansion", "per_entity", 1)),
        cap=float(st.get(args.expansion_cap, "expansion", "cap", 0.95)),
    )


def _index_params(args, st: _Settings) -> IndexParams:
    return IndexParams(
        table_size=int(st.get(args.table_size, "index", "table_size", 1 << 17)),
        hash_seed=int(st.get(getattr(args, "hash_seed", None), "index", "hash_seed", 31)),
        fanout=int(st.get(args.fanout, "index", "fanout", 16)),
        block_threshold=float(st.get(args.tau, "index", "tau", 0.6)),
    )


def _emit(args, payload: dict, human: str = "") -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif human:
        print(human)


def _states_arg(value):
    if value is None or value == "auto":
        return None
    return int(value)


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_ingest(args, st) -> int:
    window = int(st.get(args.window, "profiles", "window", 5))
    items, interactions, vocabs = ingest_log(args.input, args.format)
    build_profiles(interactions, window)  # validates replayability early
    manifest = save_dataset_bundle(args.out, items, interactions, vocabs, window)
    _emit(
        args,
        {"command": "ingest", **manifest, "out": str(args.out)},
        f"ingested {manifest['n_interactions']} interactions over "
        f"{manifest['n_items']} items -> {args.out}",
    )
    return 0


def cmd_train(args, st) -> int:
    items, interactions, vocabs, manifest = load_dataset_bundle(args.bundle)
    profiles = build_profiles(interactions, manifest["window_capacity"])
    tcfg = _train_config(args, st)
    bundle = train_models(
        items,
        profiles,
        n_categories=max(1, len(vocabs.categories)),
        config=tcfg,
        producer_states=_states_arg(args.producer_states),
        consumer_states=_states_arg(args.consumer_states),
    )
    save_model_bundle(args.out, bundle)
    _emit(
        args,
        {
            "command": "train",
            "producers": len(bundle.producer_models),
            "consumers": len(bundle.consumer_models),
            "out": str(args.out),
        },
        f"trained {len(bundle.producer_models)} producer and "
        f"{len(bundle.consumer_models)} consumer models -> {args.out}",
    )
    return 0


def cmd_expand(args, st) -> int:
    items, _, _, _ = load_dataset_bundle(args.bundle)
    ecfg = _expansion_config(args, st)
    stats = build_cooccurrence(items, ecfg.window, ecfg.cap)
    save_stats(args.out, stats)
    _emit(
        args,
        {"command": "expand", "categories": len(stats.categories()), "out": str(args.out)},
        f"co-occurrence statistics over {len(stats.categories())} categories -> {args.out}",
    )
    return 0


def cmd_index_build(args, st) -> int:
    items, interactions, vocabs, manifest = load_dataset_bundle(args.bundle)
    profiles = build_profiles(interactions, manifest["window_capacity"])
    models = load_model_bundle(args.models) if args.models else None
    scfg = _scoring_config(args, st)
    params = _index_params(args, st)
    bg = BackgroundModel.from_interactions(interactions)
    blocks = build_blocks(
        profiles, params.block_threshold, max(1, len(vocabs.categories)), params.reserve_fraction
    )
    index = build_index(
        profiles,
        blocks,
        models,
        bg,
        scfg,
        params,
        manifest["window_capacity"],
        max(1, len(vocabs.categories)),
    )
    index.vocab_doc = vocabs.to_dict()  # queries arrive with string names
    save_index(args.out, index)
    _emit(
        args,
        {
            "command": "index build",
            "blocks": len(index.blocks),
            "consumers": len(index.block_of),
            "out": str(args.out),
        },
        f"indexed {len(index.block_of)} consumers into {len(index.blocks)} blocks -> {args.out}",
    )
    return 0


def _item_from_json(doc: dict, vocab_doc: dict):
    from .data import SocialItem

    for key in ("item", "category", "producer"):
        if key not in doc:
            raise DataError(f"item JSON missing field '{key}'")
    cats = vocab_doc["categories"]
    users = vocab_doc["users"]
    ents = vocab_doc["entities"]
    fresh_cat = len(cats)
    fresh_user = len(users)
    next_ent = len(ents)
    entities = []
    for name in doc.get("entities", []):
        if name in ents:
            entities.append(ents[name])
        else:
            entities.append(next_ent)  # unseen name: fresh id, matches nothing
            next_ent += 1
    return SocialItem(
        item_id=str(doc["item"]),
        category=cats.get(str(doc["category"]), fresh_cat),
        producer=users.get(str(doc["producer"]), fresh_user),
        entities=tuple(entities),
        timestamp=int(doc.get("ts", 0)),
    )


def cmd_index_query(args, st) -> int:
    index = load_index(args.index)
    vocab_doc = getattr(index, "vocab_doc", None)
    if vocab_doc is None:
        raise DataError("index snapshot carries no vocabulary; rebuild it")
    with open(args.item, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    item = _item_from_json(doc, vocab_doc)
    expanded = None
    if args.expansion:
        stats = load_stats(args.expansion)
        ecfg = _expansion_config(args, st)
        expanded = expand_entities(item.entities, item.category, stats, ecfg.per_entity)
    if args.debug:
        shown = expanded if expanded is not None else [(e, 1.0) for e in item.entities]
        for tree in index.locate_trees(item):
            q = gen_pseudo_query(item, shown, tree.block)
            print(
                json.dumps(
                    {
                        "pseudo_query": {
                            "block": q.block_id,
                            "category": q.category,
                            "f_producer": q.f_producer.tolist(),
                            "f_entity": q.f_entity.tolist(),
                            "w_entity": q.w_entity.tolist(),
                        }
                    },
                    sort_keys=True,
                ),
                file=sys.stderr,
            )
    ranked = knn_query(index, item, args.k, expanded=expanded)
    users_by_id = {i: name for name, i in vocab_doc["users"].items()}
    results = [
        {"consumer": users_by_id.get(c, str(c)), "score": s} for c, s in ranked
    ]
    _emit(
        args,
        {"command": "index query", "k": args.k, "results": results},
        "\n".join(f"{r['consumer']}\t{r['score']:.6f}" for r in results) or "(no results)",
    )
    return 0


def cmd_index_update(args, st) -> int:
    index = load_index(args.index)
    vocab_doc = getattr(index, "vocab_doc", None)
    if vocab_doc is None:
        raise DataError("index snapshot carries no vocabulary; rebuild it")
    from .data import Interaction, Vocabularies

    vocabs = Vocabularies.from_dict(vocab_doc)
    profiles = {}
    for blk in index.blocks:
        for tree in blk.trees.values():
            for _, (node, le) in tree.leaf_map.items():
                profiles[le.consumer] = le.profile
            break
    batch = []
    with open(args.batch, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{args.batch}:{lineno}: invalid JSON ({exc.msg})") from exc
            from .data import SocialItem

            item = SocialItem(
                item_id=str(row["item"]),
                category=vocabs.categories.intern(str(row["category"])),
                producer=vocabs.users.intern(str(row["producer"])),
                entities=tuple(vocabs.entities.intern(str(e)) for e in row.get("entities", [])),
                timestamp=int(row["ts"]),
            )
            batch.append(Interaction(vocabs.users.intern(str(row["consumer"])), item, item.timestamp))
    apply_updates(index, profiles, batch)
    index.vocab_doc = vocabs.to_dict()
    out = args.out or args.index
    save_index(out, index)
    _emit(
        args,
        {"command": "index update", "updated_interactions": len(batch), "out": str(out)},
        f"{len(batch)} interactions folded in"
        if batch
        else "0 profiles updated",
    )
    return 0


def cmd_index_verify(args, st) -> int:
    index = load_index(args.index)
    problems = verify_index(index)
    if problems:
        _emit(args, {"command": "index verify", "ok": False, "problems": problems},
              "\n".join(problems))
        raise IntegrityError(f"{len(problems)} invariant violation(s)")
    _emit(args, {"command": "index verify", "ok": True}, "index invariants hold")
    return 0


def _sim_config(args, st) -> SimConfig:
    k_values = tuple(args.k) if args.k else tuple(
        st.get(None, "simulate", "k", [5, 10, 20, 30])
    )
    return SimConfig(
        window_capacity=int(st.get(args.window, "profiles", "window", 5)),
        k_values=tuple(int(k) for k in k_values),
        scoring=_scoring_config(args, st),
        training=_train_config(args, st),
        expansion=_expansion_config(args, st),
        index_params=_index_params(args, st),
        producer_states=_states_arg(args.producer_states),
        consumer_states=_states_arg(args.consumer_states),
        expansion_enabled=not args.no_expansion,
        update_batch_size=int(st.get(args.update_batch, "simulate", "update_batch", 200)),
        oracle=bool(args.oracle),
        n_partitions=int(st.get(args.partitions, "simulate", "partitions", 6)),
    )


def cmd_simulate(args, st) -> int:
    dataset = Dataset.from_log(args.input, args.format)
    report = run_stream_simulation(dataset, _sim_config(args, st))
    payload = json.dumps(report, sort_keys=True)
    if args.report:
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
    _emit(
        args,
        report,
        "\n".join(
            f"partition {p['partition']}: "
            + ", ".join(f"{k}={v['p_at_k']:.4f}" for k, v in sorted(p["precision"].items()))
            for p in report["partitions"]
        )
        + "\npooled: "
        + ", ".join(
            f"{k}={v['p_at_k']:.4f}" for k, v in sorted(report["pooled"]["precision"].items())
        ),
    )
    return 0


def cmd_sweep(args, st) -> int:
    dataset = Dataset.from_log(args.input, args.format)
    report = sweep(args.parameter, dataset, _sim_config(args, st))
    if args.report:
        Path(args.report).write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    if args.csv:
        lines = []
        if report["parameter"] == "lambda":
            lines.append("lambda,p_at_k")
            lines.extend(f"{p['lambda']},{p['p_at_k']}" for p in report["points"])
        else:
            lines.append("window,best_lambda,p_at_k")
            lines.extend(
                f"{p['window']},{p['best_lambda']},{p['p_at_k']}" for p in report["points"]
            )
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(args, report, json.dumps(report["points"], indent=2))
    return 0


def cmd_bench(args, st) -> int:
    import tempfile

    seed = int(args.seed or 0)
    rng = np.random.default_rng(seed)
    n_users = int(args.users)
    n_producers = max(8, n_users // 2000)
    synth_cfg = SynthConfig(
        seed=seed,
        n_consumers=n_users,
        n_producers=n_producers,
        n_categories=12,
        n_entities=1500,
        items_per_producer=max(60, min(400, 120_000 // n_producers)),
        interactions_per_consumer=14,
    )
    with tempfile.TemporaryDirectory() as tmp:
        out = generate_synthetic(synth_cfg, tmp)
        dataset = Dataset.from_log(out["interactions"])
    profiles = build_profiles(dataset.interactions, 5)
    bg = BackgroundModel.from_interactions(dataset.interactions)
    scfg = _scoring_config(args, st)
    params = _index_params(args, st)
    n_categories = dataset.n_categories
    # Empirical per-user category distributions stand in for trained models;
    # both ranking routes share them, so the comparison stays apples-to-apples
    # while the bound structure sees realistic heterogeneity.
    from .scoring import CategoryProbs

    probs = {}
    for c, prof in profiles.items():
        vec = np.full(n_categories, 1e-3)
        for it in prof.history():
            vec[it.category] += 1.0
        vec /= vec.sum()
        probs[c] = CategoryProbs(vec, vec.copy())
    blocks = build_blocks(profiles, params.block_threshold, n_categories)
    index = build_index(profiles, blocks, probs, bg, scfg, params, 5, n_categories)
    scorer = RelevanceScorer(profiles, probs, bg, scfg)
    pool = [it for it in dataset.items if it.entities]
    picked = [pool[int(i)] for i in rng.integers(0, len(pool), size=int(args.items))]
    report = bench_latency(index, scorer, picked, int(args.k))
    report["n_users"] = len(profiles)
    report["blocks"] = len(index.blocks)
    if args.report:
        Path(args.report).write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    _emit(
        args,
        report,
        f"{len(profiles)} users, {report['n_items']} items, k={report['k']}: "
        f"index {report['index']['mean_s'] * 1e3:.3f} ms/item vs brute "
        f"{report['brute_force']['mean_s'] * 1e3:.3f} ms/item "
        f"(speedup {report['speedup']:.1f}x, mismatches {report['result_mismatches']})",
    )
    return 0


def cmd_synth(args, st) -> int:
    cfg = SynthConfig(
        seed=int(args.seed or 0),
        n_producers=args.producers,
        n_consumers=args.consumers,
        n_categories=args.categories,
        n_entities=args.entities,
        items_per_producer=args.items_per_producer,
        interactions_per_consumer=args.interactions,
        topic_gated=bool(args.topic_gated),
    )
    out = generate_synthetic(cfg, args.out)
    _emit(
        args,
        {"command": "synth", **out},
        f"{out['n_items']} items, {out['n_interactions']} interactions -> {args.out}",
    )
    return 0


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _add_common_scoring(p):
    p.add_argument("--lambda-s", dest="lambda_s", type=float, default=None)
    p.add_argument("--mu-producer", dest="mu_producer", type=float, default=None)
    p.add_argument("--mu-entity", dest="mu_entity", type=float, default=None)


def _add_common_index(p):
    p.add_argument("--tau", type=float, default=None, help="block clustering threshold")
    p.add_argument("--fanout", type=int, default=None)
    p.add_argument("--table-size", dest="table_size", type=int, default=None)


def _add_common_training(p):
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument(
        "--producer-states", dest="producer_states", default="2",
        help="hidden states per producer, or 'auto' to select per producer",
    )
    p.add_argument(
        "--consumer-states", dest="consumer_states", default="2",
        help="consumer hidden states, or 'auto' to select per consumer (slow)",
    )


def _add_common_expansion(p):
    p.add_argument("--expansion-window", dest="expansion_window", type=int, default=None)
    p.add_argument("--expansion-per-entity", dest="expansion_per_entity", type=int, default=None)
    p.add_argument("--expansion-cap", dest="expansion_cap", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamrec", description=__doc__)
    parser.add_argument("--config", default=None, help="TOML config file (or $SSREC_CONFIG)")
    parser.add_argument("--json", action="store_true", help="machine-readable stdout")
    parser.add_argument("--seed", type=int, default=None, help="master random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a log into a dataset bundle")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit producer and consumer models")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_common_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("expand", help="build co-occurrence statistics")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_common_expansion(p)
    p.set_defaults(func=cmd_expand)

    pi = sub.add_parser("index", help="index operations")
    isub = pi.add_subparsers(dest="index_command", required=True)

    p = isub.add_parser("build")
    p.add_argument("--bundle", required=True)
    p.add_argument("--models", default=None)
    p.add_argument("--out", required=True)
    _add_common_scoring(p)
    _add_common_index(p)
    p.set_defaults(func=cmd_index_build)

    p = isub.add_parser("query")
    p.add_argument("--index", required=True)
    p.add_argument("--item", required=True, help="item JSON file")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--expansion", default=None, help="co-occurrence stats file")
    p.add_argument("--debug", action="store_true", help="print pseudo-queries to stderr")
    _add_common_expansion(p)
    p.set_defaults(func=cmd_index_query)

    p = isub.add_parser("update")
    p.add_argument("--index", required=True)
    p.add_argument("--batch", required=True, help="JSONL of new interactions")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_index_update)

    p = isub.add_parser("verify")
    p.add_argument("--index", required=True)
    p.set_defaults(func=cmd_index_verify)

    p = sub.add_parser("simulate", help="rolling stream simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--k", type=int, nargs="+", default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--oracle", action="store_true", help="rank sequentially instead of via the index")
    p.add_argument("--no-expansion", dest="no_expansion", action="store_true")
    p.add_argument("--update-batch", dest="update_batch", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument("--report", default=None)
    _add_common_scoring(p)
    _add_common_index(p)
    _add_common_training(p)
    _add_common_expansion(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="parameter sweep over the simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--parameter", choices=("window", "lambda"), required=True)
    p.add_argument("--k", type=int, nargs="+", default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--no-expansion", dest="no_expansion", action="store_true")
    p.add_argument("--update-batch", dest="update_batch", type=int, default=None)
    p.add_argument("--partitions", type=int, default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--csv", default=None, help="write the sweep series as CSV")
    _add_common_scoring(p)
    _add_common_index(p)
    _add_common_training(p)
    _add_common_expansion(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="index vs sequential latency on synthetic users")
    p.add_argument("--users", type=int, default=50_000)
    p.add_argument("--items", type=int, default=30)
    p.add_argument("-k", type=int, default=30)
    p.add_argument("--report", default=None)
    _add_common_scoring(p)
    _add_common_index(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--producers", type=int, default=12)
    p.add_argument("--consumers", type=int, default=200)
    p.add_argument("--categories", type=int, default=4)
    p.add_argument("--entities", type=int, default=120)
    p.add_argument("--items-per-producer", dest="items_per_producer", type=int, default=140)
    p.add_argument("--interactions", type=int, default=60)
    p.add_argument("--topic-gated", dest="topic_gated", action="store_true")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _Settings(_load_config_file(args.config))
        return args.func(args, settings)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
