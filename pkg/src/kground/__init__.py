"""kground: homogenize knowledge sources into triples, attach them to dialogue
turns through a retrieve/rank/rerank cascade, emit seq2seq training corpora,
and score generated responses."""

from .adapters import (
    PassageDoc,
    TableRow,
    TripleExtractor,
    VerbLexiconExtractor,
    extract_document_triples,
    filter_profanity,
    load_dialogues,
    load_keyword_file,
    load_keyword_source,
    load_tabular,
    load_triple_dump,
    load_wordlist,
)
from .cascade import (
    CascadeConfig,
    CascadeResult,
    ScoredTriple,
    TfidfIndex,
    build_tfidf,
    retrieve_candidates,
    retrieve_passages,
    run_cascade,
    semantic_rank,
    statistical_rank,
)
from .core import (
    Dialogue,
    DialogueTurn,
    FormatError,
    KnowledgeStore,
    KnowledgeTriple,
    ProviderError,
    canonical_text,
    entity_key,
    normalize_field,
    tokenize_length,
    tokenize_metric,
)
from .corpus import (
    MixSpec,
    TrainingExample,
    build_corpus,
    build_example,
    coverage_stats,
    emit_corpus,
    load_corpus,
    mix_knowledge,
    sample_few_shot,
)
from .metrics import (
    EvalRecord,
    MetricReport,
    bleu4,
    corpus_bleu_stats,
    distinct_n,
    evaluate,
    evaluate_file,
    kf1,
    rec_recall,
    rouge_l,
    unigram_f1,
)
from .providers import (
    EmbeddingCache,
    ProtocolError,
    SimilarityProvider,
    lexical_provider,
    remote_provider,
    vector_file_provider,
)

__version__ = "0.1.0"
