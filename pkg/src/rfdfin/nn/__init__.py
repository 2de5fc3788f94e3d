from .layers import (AdaptiveMaxPool2d, BatchNorm1d, BatchNorm2d, Conv2d,
                     Dropout, Flatten, Linear, MaxPool2d, Parameter, ReLU,
                     Sequential, softmax_cross_entropy, xavier_uniform)
from .models import (CONV_CHANNELS, FEATURE_DIM, FUSION_HIDDEN, POOL_GRID,
                     RIDGE_HIDDEN, TwoStreamNet, build_artifact_net,
                     build_fusion_head, build_ridge_net, forward_fused,
                     param_count)
from .checkpoint import load_tensors, pack_meta, save_tensors, unpack_meta
from .train import (AdamW, EpochRecord, FeatureDataset, TrainConfig,
                    TrainResult, cosine_lr, evaluate_accuracy, train)

__all__ = [
    "AdaptiveMaxPool2d", "BatchNorm1d", "BatchNorm2d", "Conv2d", "Dropout",
    "Flatten", "Linear", "MaxPool2d", "Parameter", "ReLU", "Sequential",
    "softmax_cross_entropy", "xavier_uniform",
    "CONV_CHANNELS", "FEATURE_DIM", "FUSION_HIDDEN", "POOL_GRID",
    "RIDGE_HIDDEN", "TwoStreamNet", "build_artifact_net", "build_fusion_head",
    "build_ridge_net", "forward_fused", "param_count",
    "load_tensors", "pack_meta", "save_tensors", "unpack_meta",
    "AdamW", "EpochRecord", "FeatureDataset", "TrainConfig", "TrainResult",
    "cosine_lr", "evaluate_accuracy", "train",
]
