"""The two detector streams and their fusion head.

Ridge stream: batch norm over the 128-dim raw ridge feature, then a
two-layer MLP (each layer followed by batch norm, ReLU, dropout).
Artifact stream: two conv blocks on the log-magnitude spectrum, adaptive
max pool to 8x8, one fully-connected layer. Fusion: element-wise sum of
the two 128-dim features into a small MLP with two logits (real=0,
fake=1).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimMismatch, TooSmall
from .layers import (AdaptiveMaxPool2d, BatchNorm1d, BatchNorm2d, Conv2d,
                     Dropout, Flatten, Linear, MaxPool2d, Parameter, ReLU,
                     Sequential)

FEATURE_DIM = 128
# Hidden width of the ridge MLP. 128 keeps the full model within the
# parameter budget; the layer kinds are what matter, not the width.
RIDGE_HIDDEN = 128
CONV_CHANNELS = (8, 16)
FUSION_HIDDEN = 64
POOL_GRID = 8


def build_ridge_net(rng: np.random.Generator, dropout: float = 0.3) -> Sequential:
    return Sequential(
        BatchNorm1d(FEATURE_DIM, name="ridge.bn_in"),
        Linear(FEATURE_DIM, RIDGE_HIDDEN, rng, name="ridge.fc1"),
        BatchNorm1d(RIDGE_HIDDEN, name="ridge.bn1"),
        ReLU(),
        Dropout(dropout, rng),
        Linear(RIDGE_HIDDEN, FEATURE_DIM, rng, name="ridge.fc2"),
        BatchNorm1d(FEATURE_DIM, name="ridge.bn2"),
        ReLU(),
        Dropout(dropout, rng),
    )


def build_artifact_net(rng: np.random.Generator) -> Sequential:
    c1, c2 = CONV_CHANNELS
    return Sequential(
        Conv2d(1, c1, rng, name="artifact.conv1"),
        BatchNorm2d(c1, name="artifact.bn1"),
        ReLU(),
        MaxPool2d(2),
        Conv2d(c1, c2, rng, name="artifact.conv2"),
        BatchNorm2d(c2, name="artifact.bn2"),
        ReLU(),
        MaxPool2d(2),
        AdaptiveMaxPool2d(POOL_GRID, POOL_GRID),
        Flatten(),
        Linear(c2 * POOL_GRID * POOL_GRID, FEATURE_DIM, rng, name="artifact.fc"),
    )


def build_fusion_head(rng: np.random.Generator) -> Sequential:
    return Sequential(
        Linear(FEATURE_DIM, FUSION_HIDDEN, rng, name="fusion.fc1"),
        ReLU(),
        Linear(FUSION_HIDDEN, 2, rng, name="fusion.fc2"),
    )


class TwoStreamNet:
    """Fused detector, or a single-stream ablation when kind says so.

    kind: 'fused' (both streams, sum fusion), 'ridge_only' or
    'artifact_only' (one stream plus its own 2-logit classifier layer).
    """

    def __init__(self, rng: np.random.Generator, kind: str = "fused",
                 dropout: float = 0.3):
        if kind not in ("fused", "ridge_only", "artifact_only"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.ridge_net = build_ridge_net(rng, dropout) if kind != "artifact_only" else None
        self.artifact_net = build_artifact_net(rng) if kind != "ridge_only" else None
        if kind == "fused":
            self.head = build_fusion_head(rng)
        else:
            self.head = Sequential(Linear(FEATURE_DIM, 2, rng, name="head.fc"))

    # -- plumbing ----------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        params = []
        for net in (self.ridge_net, self.artifact_net, self.head):
            if net is not None:
                params.extend(net.parameters())
        return params

    def buffers(self):
        bufs = []
        for net in (self.ridge_net, self.artifact_net, self.head):
            if net is not None:
                bufs.extend(net.buffers())
        return bufs

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {p.name: p.value for p in self.parameters()}
        for name, buf in self.buffers():
            state[name] = buf
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name}")
            if state[p.name].shape != p.value.shape:
                raise DimMismatch(
                    f"{p.name}: checkpoint {state[p.name].shape} != model {p.value.shape}")
            p.value[...] = state[p.name]
        for name, buf in self.buffers():
            if name not in state:
                raise KeyError(f"missing buffer {name}")
            buf[...] = state[name]

    # -- forward / backward -------------------------------------------------

    def forward_ridge(self, f_raw: np.ndarray, train: bool) -> np.ndarray:
        if f_raw.ndim != 2 or f_raw.shape[1] != FEATURE_DIM:
            raise DimMismatch(f"raw ridge feature must be (batch, {FEATURE_DIM})")
        return self.ridge_net.forward(f_raw, train)

    def forward_artifact(self, f_freq: np.ndarray, train: bool) -> np.ndarray:
        if f_freq.ndim != 4 or f_freq.shape[1] != 1:
            raise DimMismatch("spectrum input must be (batch, 1, h, w)")
        if f_freq.shape[2] < 8 or f_freq.shape[3] < 8:
            raise TooSmall("artifact stream needs at least an 8x8 spectrum")
        return self.artifact_net.forward(f_freq, train)

    def forward(self, ridge_x: np.ndarray | None, spec_x: np.ndarray | None,
                train: bool) -> np.ndarray:
        if self.kind == "ridge_only":
            return self.head.forward(self.forward_ridge(ridge_x, train), train)
        if self.kind == "artifact_only":
            return self.head.forward(self.forward_artifact(spec_x, train), train)
        f_ridge = self.forward_ridge(ridge_x, train)
        f_artifact = self.forward_artifact(spec_x, train)
        return self.head.forward(f_ridge + f_artifact, train)

    def backward(self, dlogits: np.ndarray):
        dfeat = self.head.backward(dlogits)
        if self.kind == "ridge_only":
            self.ridge_net.backward(dfeat)
        elif self.kind == "artifact_only":
            self.artifact_net.backward(dfeat)
        else:
            # sum fusion: the head's input gradient flows to both streams
            self.ridge_net.backward(dfeat)
            self.artifact_net.backward(dfeat)


def forward_fused(head: Sequential, f_ridge: np.ndarray,
                  f_artifact: np.ndarray) -> np.ndarray:
    """Element-wise sum of the stream features, then the fusion MLP."""
    if f_ridge.shape != f_artifact.shape:
        raise DimMismatch(f"feature shapes differ: {f_ridge.shape} vs {f_artifact.shape}")
    return head.forward(f_ridge + f_artifact, train=False)


def param_count(model) -> int:
    """Trainable scalars; batch-norm running stats are buffers, not counted."""
    return sum(p.value.size for p in model.parameters())
