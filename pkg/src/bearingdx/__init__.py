"""Bearing fault diagnosis with supervised networks and deep Q-learning."""

from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    RewardCurve,
    build_report,
    confusion_from_predictions,
    metrics_from_confusion,
)
from .features import (
    FeatureVector,
    Normalizer,
    StatisticalFeatureExtractor,
    WindowingSpec,
    build_feature_dataset,
    extract_features,
    make_windows,
)
from .nn import HyperParams, Mlp, init_mlp
from .rl import DQNClassifier, ReplayBuffer, RewardMatrix
from .signal import FaultClass, LabeledSignal, SplitSpec, generate_synthetic_dataset, split_train_test
from .supervised import ANNClassifier, expected_reward_loss

__version__ = "0.1.0"
