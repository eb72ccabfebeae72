"""Zero-shot classification over a learned semantic embedding space.

Pipeline: load or synthesize (visual, textual) feature tables and class
vectors, split classes into seen/unseen, train a mapping network whose
frozen output layer holds the seen class vectors, then classify unseen
samples by nearest-neighbor search of the predicted semantic vector
against class vectors.
"""

from .data import (
    AssembledDataset,
    Manifest,
    SplitSpec,
    assemble_dataset,
    generate_synthetic,
    make_split,
)
from .evaluator import (
    EvalConfig,
    EvalReport,
    evaluate,
    render_report,
    seen_class_eval,
    top_k_hit,
)
from .network import (
    ForwardTrace,
    LayerSpec,
    Model,
    ModelConfig,
    forward,
    init_model,
    load_model,
    predict_semantic,
    reduce_visual,
    save_model,
)
from .semantic import RankedLabels, SemanticIndex, build_index, query_k_nearest, scan_k_nearest
from .trainer import (
    TrainConfig,
    TrainHistory,
    backward,
    cross_entropy_loss,
    gradient_check,
    sgd_step,
    train,
)
from .zslf import ClassVectorSet, FeatureTable, load_feature_file, write_feature_file

__version__ = "0.1.0"
