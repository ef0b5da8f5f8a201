"""magprint: fingerprinting simulated phone magnetometers from their
responses to square-wave stimulation.

Pipeline: stimulus -> simulated capture -> response segmentation ->
18 statistical features -> pairwise RBF-SVM identification / verification.
"""

__version__ = "0.1.0"

from .errors import MagprintError
from .features import FeatureConfig, FeatureMatrix, build_feature_matrix, feature_vector
from .ingest import SessionManifest, Trace, load_manifest, magnitude, parse_trace
from .learn import (
    DEFAULT_HYPER,
    SvmHyperParams,
    brute_force_select,
    grid_search,
    knn_classify,
    sfs_select,
    train_binary_svm,
    train_bundle,
    train_oao,
)
from .evaluation import (
    ConfusionCounts,
    accuracy,
    cross_validate,
    eer,
    kfold_split,
    roc_curve,
    verify_pair,
)
from .preprocess import VtConfig, rms_normalize, segment_responses, variance_trajectory
from .simulator import DeviceSignature, add_awgn, default_park_spec, make_park, simulate_session
from .stimulus import WaveformSpec, build_waveform, pulse_onsets, waveform_preset

__all__ = [
    "MagprintError",
    "FeatureConfig",
    "FeatureMatrix",
    "build_feature_matrix",
    "feature_vector",
    "SessionManifest",
    "Trace",
    "load_manifest",
    "magnitude",
    "parse_trace",
    "DEFAULT_HYPER",
    "SvmHyperParams",
    "brute_force_select",
    "grid_search",
    "knn_classify",
    "sfs_select",
    "train_binary_svm",
    "train_bundle",
    "train_oao",
    "ConfusionCounts",
    "accuracy",
    "cross_validate",
    "eer",
    "kfold_split",
    "roc_curve",
    "verify_pair",
    "VtConfig",
    "rms_normalize",
    "segment_responses",
    "variance_trajectory",
    "DeviceSignature",
    "add_awgn",
    "default_park_spec",
    "make_park",
    "simulate_session",
    "WaveformSpec",
    "build_waveform",
    "pulse_onsets",
    "waveform_preset",
    "__version__",
]
