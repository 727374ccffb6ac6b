"""Run-on sentence detection and correction toolkit."""

from .data import (
    AnnotatedSentence,
    AlignmentError,
    DataError,
    DatasetSpec,
    FractionTooHigh,
    GapLabel,
    InsufficientCorpus,
    LabeledSequence,
    MalformedTree,
    MissingTerminalPunctuation,
    ParseNode,
    Token,
    parse_tree,
    read_corpus,
    read_labeled,
    write_corpus,
    write_labeled,
)
from .corpus import (
    build_dataset,
    downsample_runons,
    fuse,
    is_candidate_pair,
    label_negative,
)
from .ngram import (
    NgramModel,
    kgram_comparison_flags,
    mean_perplexity,
    perplexity_decrease_flag,
    train_lm,
)
from .features import GapContext, extract_features, highest_uncommon_ancestors
from .crf import CrfConfig, CrfModel, train_crf
from .seq2seq import S2SConfig, S2SModel, fuse_output, train_s2s
from .evaluate import (
    EvalReport,
    bootstrap_significance,
    f05,
    random_baseline,
    score,
)

__version__ = "0.1.0"
