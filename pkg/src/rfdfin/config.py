"""Run configuration: one serializable record of every tunable."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

ENV_SEED = "RFDFIN_SEED"


@dataclass
class RunConfig:
    seed: int = 0
    width: int = 256
    height: int = 256
    # ridge preprocessing
    threshold: int = 100
    median_radius: int = 1
    block_size: int = 16
    ridge_freq: float = 0.1
    gabor_sigma: float = 4.0
    segment_len: int = 128
    smooth_sigma: float = 2.0
    # spectra
    epsilon: float = 1e-18
    # mean-pool factor applied to the log-magnitude plane before the CNN;
    # the radial artifact pattern is smooth, and full resolution is far too
    # slow for CPU-only training
    spec_pool: int = 4
    # model / training
    model_kind: str = "fused"
    dropout: float = 0.3
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32
    t_max: int = 50
    patience: int = 5
    flip_prob: float = 0.5
    # anti-forensic
    radius_bins: int = 32
    # splits
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        if not (0 <= self.seed < 2 ** 32):
            raise ValueError("seed must fit in u32")
        if self.model_kind not in ("fused", "ridge_only", "artifact_only"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def load_config(path) -> RunConfig:
    with open(path) as f:
        raw = json.load(f)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


def resolve_seed(flag_seed: int | None, file_raw: dict | None) -> int | None:
    """Flag wins, then the config file, then the RFDFIN_SEED environment
    variable; None means fall through to the dataclass default."""
    if flag_seed is not None:
        return flag_seed
    if file_raw is not None and "seed" in file_raw:
        return int(file_raw["seed"])
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    return None
