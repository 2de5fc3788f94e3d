"""Feature extraction wiring: image files to cached model inputs.

Each sample yields the log-magnitude spectrum of the original image plus
the raw ridge feature of both the original and the horizontally flipped
image (the per-stream training augmentation). Results are cached in the
tensor container keyed by file content hash, so re-runs skip finished
work.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from .config import RunConfig
from .data import FAKE, Sample, confusion_report
from .enhance import PreprocessParams, ridge_preprocess
from .errors import NoRidges, PipelineError
from .imgproc import center_crop_or_pad, flip_horizontal, read_image
from .nn.checkpoint import load_tensors, save_tensors
from .nn.train import FeatureDataset
from .ridge import raw_ridge_feature, segment_curves, trace_all_ridges
from .spectrum import flip_logmag_horizontal, image_logmag


@dataclass
class SampleFeatures:
    path: str
    content_hash: str
    spec: np.ndarray | None       # (h, w) float32 pooled log-magnitude
    spec_flip: np.ndarray | None  # same for the horizontally flipped image
    ridge: np.ndarray | None      # (128,) float32, None when no ridges
    ridge_flip: np.ndarray | None
    error: str | None = None


def content_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def _preprocess_params(config: RunConfig) -> PreprocessParams:
    return PreprocessParams(
        threshold=config.threshold, median_radius=config.median_radius,
        block_size=config.block_size, ridge_freq=config.ridge_freq,
        gabor_sigma=config.gabor_sigma)


def ridge_feature_of(img: np.ndarray, config: RunConfig) -> np.ndarray | None:
    """Raw ridge feature of one image; None when the skeleton has no
    full-length segment."""
    skel = ridge_preprocess(img, _preprocess_params(config))
    curves = trace_all_ridges(skel)
    segments = segment_curves(curves, config.segment_len)
    if not segments:
        return None
    return raw_ridge_feature(img, segments, config.smooth_sigma).astype(np.float32)


def pool_spectrum(logmag: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping mean pool of the log-magnitude plane."""
    if factor <= 1:
        return logmag
    h, w = logmag.shape
    th, tw = (h // factor) * factor, (w // factor) * factor
    v = logmag[:th, :tw].reshape(h // factor, factor, w // factor, factor)
    return v.mean(axis=(1, 3), dtype=np.float64).astype(logmag.dtype)


def load_normalized(path, config: RunConfig) -> np.ndarray:
    img = read_image(path)
    if img.shape != (config.height, config.width):
        img = center_crop_or_pad(img, config.width, config.height)
    return img


def extract_sample(path, config: RunConfig, which: str = "both") -> SampleFeatures:
    img = load_normalized(path, config)
    h = content_hash(path)
    spec = spec_flip = None
    ridge = ridge_flip = None
    error = None
    if which in ("both", "spectrum"):
        full = image_logmag(img, "fft_logmag", config.epsilon)
        spec = pool_spectrum(full.values, config.spec_pool).astype(np.float32)
        flipped = flip_logmag_horizontal(full)
        spec_flip = pool_spectrum(flipped.values, config.spec_pool).astype(np.float32)
    if which in ("both", "ridge"):
        ridge = ridge_feature_of(img, config)
        ridge_flip = ridge_feature_of(flip_horizontal(img), config)
        if ridge is None or ridge_flip is None:
            ridge = ridge_flip = None
            error = "NoRidges"
    return SampleFeatures(path=path, content_hash=h, spec=spec, spec_flip=spec_flip,
                          ridge=ridge, ridge_flip=ridge_flip, error=error)


def _extract_worker(args):
    path, config_dict, which = args
    config = RunConfig(**config_dict)
    try:
        return extract_sample(path, config, which)
    except PipelineError as exc:
        return SampleFeatures(path=path, content_hash=content_hash(path),
                              spec=None, spec_flip=None, ridge=None,
                              ridge_flip=None,
                              error=f"{type(exc).__name__}: {exc}")


def extract_corpus(samples: list[Sample], config: RunConfig, which: str = "both",
                   cache_path=None, jobs: int = 1) -> dict[str, SampleFeatures]:
    """Features per sample path, reusing any cache at cache_path."""
    cached: dict[str, np.ndarray] = {}
    if cache_path and os.path.isfile(cache_path):
        cached = load_tensors(cache_path)

    results: dict[str, SampleFeatures] = {}
    todo = []
    for s in samples:
        h = content_hash(s.path)
        feats = _from_cache(cached, s.path, h, which)
        if feats is not None:
            results[s.path] = feats
        else:
            todo.append(s.path)

    if todo:
        args = [(p, config.to_dict(), which) for p in todo]
        if jobs > 1:
            with Pool(processes=jobs) as pool:
                fresh = pool.map(_extract_worker, args)
        else:
            fresh = [_extract_worker(a) for a in args]
        for feats in fresh:
            results[feats.path] = feats

    if cache_path:
        _write_cache(cache_path, cached, results.values())
    return results


def _from_cache(cached, path, h, which) -> SampleFeatures | None:
    spec = spec_flip = None
    if which in ("both", "spectrum"):
        spec = cached.get(f"spec/{h}")
        spec_flip = cached.get(f"specflip/{h}")
        if spec is None or spec_flip is None:
            return None
    ridge = flip = None
    error = None
    if which in ("both", "ridge"):
        if f"noridge/{h}" in cached:
            error = "NoRidges"
        else:
            ridge = cached.get(f"ridge/{h}")
            flip = cached.get(f"ridgeflip/{h}")
            if ridge is None or flip is None:
                return None
    return SampleFeatures(path=path, content_hash=h, spec=spec, spec_flip=spec_flip,
                          ridge=ridge, ridge_flip=flip, error=error)


def _write_cache(cache_path, cached, feats_iter) -> None:
    tensors = dict(cached)
    for feats in feats_iter:
        h = feats.content_hash
        if feats.spec is not None:
            tensors[f"spec/{h}"] = feats.spec
            tensors[f"specflip/{h}"] = feats.spec_flip
        if feats.ridge is not None:
            tensors[f"ridge/{h}"] = feats.ridge
            tensors[f"ridgeflip/{h}"] = feats.ridge_flip
        elif feats.error == "NoRidges":
            tensors[f"noridge/{h}"] = np.zeros(1, dtype=np.float32)
    save_tensors(cache_path, tensors)


def build_dataset(samples: list[Sample], features: dict[str, SampleFeatures],
                  need_ridge: bool = True):
    """FeatureDataset over the samples with complete features.

    Returns (dataset, used_samples, skipped_samples); no-ridge samples are
    skipped when the model needs the ridge stream.
    """
    used, skipped = [], []
    ridge, ridge_flip, spec, spec_flip, labels = [], [], [], [], []
    dim = None
    for s in samples:
        f = features[s.path]
        if need_ridge and f.ridge is None:
            skipped.append(s)
            continue
        used.append(s)
        labels.append(s.label)
        spec.append(f.spec)
        spec_flip.append(f.spec_flip)
        if f.ridge is not None:
            dim = len(f.ridge)
            ridge.append(f.ridge)
            ridge_flip.append(f.ridge_flip)
        else:
            ridge.append(None)
            ridge_flip.append(None)
    if not used:
        raise PipelineError("no usable samples after feature extraction")
    dim = dim or 128
    zero = np.zeros(dim, dtype=np.float32)
    ridge = [zero if r is None else r for r in ridge]
    ridge_flip = [zero if r is None else r for r in ridge_flip]
    ds = FeatureDataset(np.stack(ridge), np.stack(ridge_flip),
                        np.stack(spec), np.stack(spec_flip), np.array(labels))
    return ds, used, skipped


def evaluate_model(model, samples: list[Sample],
                   features: dict[str, SampleFeatures], n_params: int,
                   batch_size: int = 64):
    """Per-sample argmax predictions; no-ridge samples predict fake and are
    flagged (only when the model actually needs the ridge stream)."""
    need_ridge = model.kind != "artifact_only"
    labels = [s.label for s in samples]
    predictions: list[int | None] = [None] * len(samples)
    flagged = []
    usable = []
    for i, s in enumerate(samples):
        f = features[s.path]
        if need_ridge and f.ridge is None:
            flagged.append(s.path)
        else:
            usable.append(i)
    for start in range(0, len(usable), batch_size):
        chunk = usable[start:start + batch_size]
        feats = [features[samples[i].path] for i in chunk]
        ridge_x = np.stack([f.ridge for f in feats]) if need_ridge else None
        spec_x = (np.stack([f.spec for f in feats])[:, None]
                  if model.kind != "ridge_only" else None)
        logits = model.forward(ridge_x, spec_x, train=False)
        for i, pred in zip(chunk, logits.argmax(axis=1)):
            predictions[i] = int(pred)
    return confusion_report(predictions, labels, param_count=n_params,
                            no_ridges_paths=flagged)
