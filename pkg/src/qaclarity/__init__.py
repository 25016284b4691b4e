"""Long-input two-task response classification: overlapping chunking, a
pluggable chunk encoder, max-pool aggregation, joint training of two heads,
stratified k-fold ensembling, and a full evaluation suite."""

__version__ = "0.1.0"

from .chunking import Chunk, ChunkingConfig, ChunkSet, chunk, expected_chunk_count
from .dataset import (
    ClarityLabel,
    DatasetSummary,
    EvasionLabel,
    Instance,
    load_dataset,
    save_dataset,
    summarize,
)
from .encoder import ChunkEncoder, ToyEncoder, ToyEncoderParams, extract_position0
from .ensemble import Ensemble, EnsemblePrediction, ensemble_predict
from .evaluation import (
    EvalReport,
    combined_f1,
    confusion,
    evaluate_predictions,
    fleiss_kappa,
    macro_f1,
    resolve_any_annotator,
)
from .model import (
    DropoutConfig,
    HeadParams,
    LossConfig,
    LossKind,
    PoolingStrategy,
    inverse_frequency_weights,
    loss,
    pool,
    probabilities,
)
from .tokenization import (
    HashTokenizer,
    TokenizerSpec,
    TokenSequence,
    WordTableTokenizer,
    format_input,
    tokenize,
)
from .training import (
    FoldPlan,
    TrainConfig,
    adamw_step,
    clip_gradients,
    lr_at,
    run_cv,
    stratified_folds,
    train_fold,
)
