"""Topic-guided masked pre-training and teacher-student semi-supervised
text classification, with coherence-driven topic-word selection.
"""

from .classifier import AdamWState, MlpParams, adamw_step, backward, ce_smoothed, forward
from .coherence import CoherenceConfig, c_umass, c_v, list_coherence
from .corpus import (
    Corpus,
    Document,
    SplitSet,
    Vocabulary,
    ingest_jsonl,
    preprocess,
    split,
    virtual_windows,
)
from .encoder import Embeddings, embed_document, pretrain_mlm
from .lda import LdaModel, fit_lda, topic_top_words
from .masking import MASK_ID, MaskedExample, MaskingPolicy, mask_corpus, mask_document
from .mpl import (
    Classifier,
    TrainerConfig,
    augment,
    evaluate,
    finetune_student,
    hard_label,
    sharpen,
    train,
    train_supervised,
)
from .wordlist import (
    TopicWordList,
    build_relevance_list,
    build_tfidf_list,
    coherence_sweep,
    relevance,
    select_k_elbow,
)

__version__ = "0.1.0"
