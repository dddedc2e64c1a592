"""wastenet: change-driven classification of the last item deposited in a bin.

A segmenter marks waste pixels, a shared square crop centers the food in
both images of a before/after pair, and a three-path convolutional
classifier compares the pair's feature pyramids through delta layers to
name the newly deposited class. Everything runs on a small numpy-backed
tensor core with reverse-mode differentiation; a synthetic deposit
generator provides reproducible data.
"""

from . import core, harness, preprocess, scenegen, segmentation
from . import classifier
from .classifier import (
    ClassifierTrainResult,
    DeltaNetConfig,
    DeltaNetModel,
    PairSample,
    VggBlockConfig,
    build_deltanet,
    classify,
    delta_layer,
    deltanet_forward,
    evaluate_pairs,
    train_classifier,
)
from .core import (
    GradCheckReport,
    Optimizer,
    OptimizerConfig,
    ParamCounts,
    ParamSet,
    Tensor,
    grad_check,
    optimizer_step,
    param_count,
)
from .preprocess import (
    PreprocessedPair,
    SquareBBox,
    crop,
    min_square_bbox,
    preprocess_pair,
    resize_bilinear,
    resize_nearest,
)
from .scenegen import ClassStyle, DepositEvent, Episode, class_styles, gen_dataset, gen_episode
from .segmentation import (
    MaskSample,
    UNetConfig,
    UNetModel,
    UNetTrainResult,
    augment,
    binarize,
    build_unet,
    dihedral,
    pixel_accuracy,
    train_unet,
    unet_forward,
    unet_logits,
)

__version__ = "0.1.0"
