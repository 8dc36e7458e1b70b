"""Self-training adaptation toolkit for CTC text recognition.

Decoding (greedy, prefix search with LM fusion), confidence measures,
confidence-ranked data selection, CER evaluation, masking augmentation, and a
synthetic optical model for desk-scale end-to-end runs.
"""

from .alphabet import Alphabet, AlphabetError, read_alphabet, write_alphabet
from .frames import (
    FrameMatrix,
    FrameError,
    FrameFormatError,
    FrameInvariantError,
    FrameShapeError,
    NonFiniteFrameError,
    frame_matrix_from_probs,
    read_frame_matrix,
    write_frame_matrix,
)
from .manifest import (
    CorpusManifest,
    LineRecord,
    ManifestError,
    Origin,
    read_manifest,
    write_manifest,
)
from .ctc import (
    Alignment,
    InfeasibleTranscriptError,
    ctc_forward_log_prob,
    greedy_decode,
    viterbi_align,
)
from .lm import (
    BOL,
    EOL,
    CharLM,
    LMError,
    NGramLM,
    UniformLM,
    load_lm,
    perplexity,
    save_lm,
    train_stage,
    tune_stage_weights,
)
from .decoder import DecodeParams, Hypothesis, prefix_search_decode, total_score
from .confidence import (
    ConfidenceMeasure,
    conf_char_probs_mean,
    conf_ctc_loss,
    conf_inliers_rate,
    conf_posterior,
    conf_probs_mean,
    conf_worst_best,
    fit_inliers_gaussian,
)
from .evaluation import (
    ConfidenceCurve,
    auc,
    cer,
    confidence_curve,
    corpus_cer,
    estimate_portion_cers,
    knn_cer_estimate,
    levenshtein,
    select_top,
)
from .augment import (
    LineImage,
    MaskingParams,
    draw_mask_regions,
    mask_line,
    masking_setting,
    read_pgm,
    write_pgm,
)
from .simulate import MarkovTextSource, SimParams, generate_texts, simulate_corpus, simulate_line
from .pipeline import (
    PipelineConfig,
    load_pipeline_config,
    report_auc_table,
    run_iteration,
    score_corpus,
    tune_decode,
)

__version__ = "0.1.0"
