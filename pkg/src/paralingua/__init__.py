"""Utterance-level paralinguistic features, calibrated linear SVMs and late fusion."""

from .boaw import Codebook, encode_boaw, encode_boaw_paired, learn_codebook
from .classify import (
    EnsembleModel,
    LinearModel,
    PosteriorMatrix,
    predict_ensemble,
    predict_posteriors,
    train_downsampled_ensemble,
    train_linear_svm,
)
from .crossval import FoldPlan, make_speaker_folds, run_cv, run_dev
from .dataset import (
    FeatureTable,
    FrameMatrix,
    Manifest,
    StandardizerModel,
    UtteranceRecord,
    apply_standardizer,
    compute_deltas,
    fit_standardizer,
    load_feature_table,
    load_frame_matrix,
    load_manifest,
)
from .evaluation import ConfusionMatrix, FusionWeights, fuse_posteriors, grid_search_weights, uar
from .fisher import DiagonalGmm, FisherVector, encode_fisher, fit_gmm, gmm_loglik, responsibilities
from .temporal import (
    AlignmentSegment,
    TemporalFeatureVector,
    UtteranceAlignment,
    compute_temporal_features,
    parse_alignment,
)

__version__ = "0.1.0"
