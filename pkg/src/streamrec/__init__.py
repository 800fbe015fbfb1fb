"""Streaming social-item recommendation.

Long- and short-term categorical interests per user are modeled with a
two-layer hidden Markov model (producer creation patterns feeding composite
consumer states); items rank against users through a smoothed probabilistic
score over producers and proximity-expanded entities; and top-k "who gets
this item" queries run through a pruned signature-tree index whose answers
are provably identical to the sequential scorer over the reachable users.
"""

from .layered import (
    CompositeStateSpace,
    ConsumerModel,
    ModelBundle,
    ProducerModel,
    annotate_consumer_history,
    predict_category_prob,
    select_state_count,
    top_k_categories,
    train_consumer_model,
    train_models,
    train_producer_models,
)
from .data import (
    Interaction,
    SocialItem,
    UserProfile,
    Vocabularies,
    build_profiles,
    classify_user_modes,
    ingest_log,
)
from .errors import ConfigError, DataError, IntegrityError
from .expansion import (
    CooccurrenceStats,
    ExpansionConfig,
    build_cooccurrence,
    expand_entities,
)
from .harness import (
    Dataset,
    SimConfig,
    bench_latency,
    partition_stream,
    prediction_accuracy,
    run_stream_simulation,
    sweep,
)
from .hmm import (
    HmmParams,
    TrainConfig,
    baum_welch,
    forward_log_likelihood,
    predict_next_obs,
    viterbi,
)
from .index import (
    SignatureTreeIndex,
    IndexParams,
    apply_updates,
    build_blocks,
    build_index,
    entry_upper_bound,
    gen_pseudo_query,
    knn_query,
    rebuild_index,
    shift_add_xor_hash,
    verify_index,
)
from .scoring import (
    BackgroundModel,
    CategoryProbs,
    RelevanceScorer,
    ScoringConfig,
    brute_force_top_k,
    combined_score,
    long_term_score,
    short_term_score,
    smoothed_entity_prob,
    smoothed_producer_prob,
)
from .synth import SynthConfig, generate_synthetic

__version__ = "0.1.0"
