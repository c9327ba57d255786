"""CLIP-guided open-set domain adaptation over precomputed embeddings.

The pipeline: a frozen zero-shot classifier over per-class prototype
embeddings partitions unlabeled target data into pseudo-known and
pseudo-unknown pools by prediction entropy; a small trainable classifier is
then optimized with supervised source cross-entropy, an entropy-separation
loss, soft-target distillation of the zero-shot probabilities, and entropy
maximization on the pseudo-unknowns. Supports joint training as well as a
source-free two-stage regime (pretrain, then adapt without source data).
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from ._kernels import available_backends
from .data import (
    BatchSampler,
    Domain,
    EmbeddingDataset,
    EmbeddingRecord,
    PrototypeBank,
    SynthConfig,
    generate_synthetic,
    load_embeddings,
    load_prototypes,
    next_batch,
    write_embeddings,
    write_prototypes,
)
from .errors import OdaError
from .evaluation import (
    EvalReport,
    auroc,
    evaluate,
    evaluate_zero_shot,
    h_score,
    write_report,
)
from .losses import (
    LossBreakdown,
    LossToggles,
    Mode,
    loss_clip_known,
    loss_clip_unknown,
    loss_entropy_separation,
    loss_source_ce,
    loss_total,
)
from .model import OdaClassifier, ParamGrads, SgdMomentum, sgd_step
from .trainer import HyperParams, TrainRun, run_ablation, train
from .zero_shot import (
    UNKNOWN,
    TargetPartition,
    ZeroShotPrediction,
    default_delta,
    partition_target,
    zero_shot_predict,
)

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "available_backends",
    "BatchSampler",
    "Domain",
    "EmbeddingDataset",
    "EmbeddingRecord",
    "PrototypeBank",
    "SynthConfig",
    "generate_synthetic",
    "load_embeddings",
    "load_prototypes",
    "next_batch",
    "write_embeddings",
    "write_prototypes",
    "OdaError",
    "EvalReport",
    "auroc",
    "evaluate",
    "evaluate_zero_shot",
    "h_score",
    "write_report",
    "LossBreakdown",
    "LossToggles",
    "Mode",
    "loss_clip_known",
    "loss_clip_unknown",
    "loss_entropy_separation",
    "loss_source_ce",
    "loss_total",
    "OdaClassifier",
    "ParamGrads",
    "SgdMomentum",
    "sgd_step",
    "HyperParams",
    "TrainRun",
    "run_ablation",
    "train",
    "UNKNOWN",
    "TargetPartition",
    "ZeroShotPrediction",
    "default_delta",
    "partition_target",
    "zero_shot_predict",
]
