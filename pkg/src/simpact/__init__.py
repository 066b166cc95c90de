"""simpact: privacy-preserving social-media event pipeline.

Turns raw event streams into persona-clustered, thread-structured,
pseudonymized datasets and scores generated behavior against them.
"""

__version__ = "0.1.0"

from .events import (  # noqa: F401
    ActionKind,
    KeywordSet,
    RawEvent,
    keyword_filter,
    language_filter,
    load_keywords,
    parse_event,
    prune_low_activity,
    serialize_event,
)
from .privacy import (  # noqa: F401
    Redaction,
    SecretKey,
    anonymize_mentions,
    delete_user,
    derive_pseudonym,
    obfuscate_timestamps,
    pseudonymize_thread,
    redact_pii,
)
from .clustering import (  # noqa: F401
    ClusterModel,
    GranularitySuite,
    assign_min_size,
    fit_constrained_kmeans,
    fit_granularities,
    kmeanspp_init,
    silhouette,
)
from .threads import (  # noqa: F401
    Thread,
    ThreadElement,
    build_thread,
    label_thread,
    link_action,
    parse_thread,
    serialize_thread,
)
from .embedding import (  # noqa: F401
    FallbackProvider,
    embed_texts,
    user_embedding,
)
from .evalmetrics import (  # noqa: F401
    GenerationRecord,
    action_f1,
    aggregate,
    avg_cosine,
    jaccard_top_tfidf,
    js_divergence,
    max_cosine,
)
from .analysis import (  # noqa: F401
    ClusterStats,
    TfidfModel,
    cluster_stats,
    medoid_posts,
    tfidf_top_terms,
)
