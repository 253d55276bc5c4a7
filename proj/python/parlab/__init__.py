"""Python bindings for the paradigm lab core.

Exposes the byte tokenizer, the cosine masking schedule, sampler
primitives (nucleus filtering, temperature annealing, unmask quotas,
repetition penalty), and the generation-diversity metrics.
"""

try:
    from ._parlab import *  # noqa: F401,F403  (installed package layout)
    from ._parlab import __doc__ as _core_doc  # noqa: F401
except ImportError:  # in-tree builds put _parlab on sys.path directly
    from _parlab import *  # noqa: F401,F403

__all__ = [
    "tokenize",
    "detokenize",
    "VOCAB_SIZE",
    "EOS",
    "PAD",
    "MASK",
    "gamma_schedule",
    "apply_mask",
    "nucleus_filter",
    "anneal_temperature",
    "unmask_quota",
    "apply_repetition_penalty",
    "count_params",
    "distinct_n",
    "self_bleu",
    "vocab_used",
    "unique_openings",
    "config_hash",
    "fnv1a",
]
