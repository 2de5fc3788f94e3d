"""Command-line surface: synth, extract, train, eval, perturb, analyze.

Exit codes: 0 success, 1 usage/IO error, 2 strict extraction failure,
3 training divergence, 4 corrupt artifact.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import data as data_mod
from .antiforensic import (fit_power_dictionary, fit_sdn, load_corrections,
                           radial_power_profile, save_corrections, apply_pdc,
                           apply_sdn, sdn_plus_plus)
from .config import ENV_SEED, RunConfig, config_from_dict, resolve_seed
from .errors import CorruptCheckpoint, EmptyCorpus, PipelineError, TrainingDiverged
from .imgproc import read_image, write_image
from .nn.checkpoint import load_tensors, pack_meta, save_tensors, unpack_meta
from .nn.models import TwoStreamNet, param_count
from .nn.train import TrainConfig, train
from .pipeline import (build_dataset, evaluate_model, extract_corpus,
                       load_normalized)
from .spectrum import (export_heatmap, high_frequency_mean, mean_spectrum,
                       spectrum_diff)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STRICT = 2
EXIT_DIVERGED = 3
EXIT_CORRUPT = 4

MODEL_KINDS = {"fused": 0, "ridge_only": 1, "artifact_only": 2}
KIND_BY_CODE = {v: k for k, v in MODEL_KINDS.items()}


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (fallback: ${ENV_SEED}, then 0)")


def _build_config(args, overrides: dict | None = None) -> RunConfig:
    raw = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            raw = json.load(f)
    seed = resolve_seed(getattr(args, "seed", None), raw if raw else None)
    if seed is not None:
        raw["seed"] = seed
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return config_from_dict(raw)


def _load_samples(args) -> list[data_mod.Sample]:
    manifest = getattr(args, "manifest", None)
    return data_mod.load_corpus(getattr(args, "data", None), manifest=manifest)


def _corpus_images(directory, config: RunConfig):
    samples = data_mod.load_corpus(directory) if os.path.isdir(
        os.path.join(directory, "real")) or os.path.isdir(os.path.join(directory, "fake")) \
        else None
    if samples is None:
        paths = [os.path.join(directory, n) for n in sorted(os.listdir(directory))
                 if n.lower().endswith((".pgm", ".png", ".jpg", ".jpeg"))]
    else:
        paths = [s.path for s in samples]
    if not paths:
        raise EmptyCorpus(f"no images under {directory}")
    return paths


def _image_stream(paths, config: RunConfig):
    for p in paths:
        yield load_normalized(p, config)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = _build_config(args)
    samples = data_mod.write_synth_corpus(
        args.out, n_identities=args.identities, per_identity=args.per_identity,
        seed=config.seed, w=config.width, h=config.height)
    config.save(os.path.join(args.out, "config.json"))
    print(f"wrote {len(samples)} images under {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def cmd_extract(args) -> int:
    config = _build_config(args)
    samples = _load_samples(args)
    features = extract_corpus(samples, config, which=args.which,
                              cache_path=args.out, jobs=args.jobs)
    failures = [f for f in features.values() if f.error]
    sidecar = f"{args.out}.failures.log"
    if failures:
        with open(sidecar, "w") as f:
            for feats in sorted(failures, key=lambda x: x.path):
                f.write(f"{feats.path}\t{feats.error}\n")
    print(f"extracted {len(features) - len(failures)} ok, "
          f"{len(failures)} failed -> {args.out}")
    if failures:
        print(f"failure details in {sidecar}")
        if args.strict:
            return EXIT_STRICT
    if args.dump_stages:
        _dump_stages(samples[0].path, config, args.dump_stages)
    return EXIT_OK


def _dump_stages(path, config: RunConfig, out_dir) -> None:
    from .enhance import PreprocessParams, ridge_preprocess_stages

    os.makedirs(out_dir, exist_ok=True)
    img = load_normalized(path, config)
    params = PreprocessParams(
        threshold=config.threshold, median_radius=config.median_radius,
        block_size=config.block_size, ridge_freq=config.ridge_freq,
        gabor_sigma=config.gabor_sigma)
    for i, (name, stage) in enumerate(ridge_preprocess_stages(img, params).items()):
        write_image(os.path.join(out_dir, f"{i}_{name}.pgm"), stage)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    config = _build_config(args, overrides={"model_kind": args.model_kind})
    os.makedirs(args.out, exist_ok=True)
    samples = _load_samples(args)
    split = data_mod.split_by_identity(
        samples, (config.train_frac, config.val_frac, config.test_frac), config.seed)

    split_samples = {}
    for name in ("train", "val", "test"):
        split_samples[name] = data_mod.samples_in_split(samples, split, name)
        _write_manifest(os.path.join(args.out, f"{name}.csv"), split_samples[name])

    cache = os.path.join(args.out, "features.rfdf")
    need = "both" if config.model_kind != "artifact_only" else "spectrum"
    all_feats = extract_corpus(samples, config, which=need,
                               cache_path=cache, jobs=args.jobs)

    need_ridge = config.model_kind != "artifact_only"
    train_ds, _, skipped = build_dataset(split_samples["train"], all_feats, need_ridge)
    val_ds, _, _ = build_dataset(split_samples["val"], all_feats, need_ridge)
    if skipped:
        print(f"warning: {len(skipped)} training samples had no ridges; skipped")

    rng = np.random.default_rng(config.seed)
    model = TwoStreamNet(rng, kind=config.model_kind, dropout=config.dropout)
    n_params = param_count(model)
    print(f"model parameters: {n_params}")

    tc = TrainConfig(lr=config.lr, weight_decay=config.weight_decay,
                     batch_size=config.batch_size, t_max=config.t_max,
                     patience=config.patience, flip_prob=config.flip_prob,
                     seed=config.seed)
    result = train(model, train_ds, val_ds, tc)

    ckpt_path = os.path.join(args.out, "checkpoint.rfdf")
    tensors = dict(model.state_dict())
    tensors.update(pack_meta({
        "epoch": result.best_epoch, "seed": config.seed,
        "model_kind": MODEL_KINDS[config.model_kind],
        "config_crc": _config_crc(config),
    }))
    save_tensors(ckpt_path, tensors)

    _write_history(os.path.join(args.out, "history.csv"), result)
    with open(os.path.join(args.out, "history.json"), "w") as f:
        json.dump({
            "best_epoch": result.best_epoch,
            "best_val_acc": result.best_val_acc,
            "param_count": n_params,
            "epochs": [dataclasses.asdict(r) for r in result.history],
        }, f, indent=2)
    config.save(os.path.join(args.out, "config.json"))
    _write_run_manifest(args.out)
    print(f"best val acc {result.best_val_acc:.4f} at epoch {result.best_epoch}")
    return EXIT_OK


def _config_crc(config: RunConfig) -> int:
    import zlib

    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return zlib.crc32(blob) & 0xFFFFFFFF


def _write_manifest(path, samples) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "label", "identity"])
        for s in samples:
            writer.writerow([s.path, data_mod.LABEL_NAMES[s.label], s.identity])


def _write_history(path, result) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "lr", "train_loss", "val_acc"])
        for r in result.history:
            writer.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.val_acc)])


def _write_run_manifest(out_dir) -> None:
    names = sorted(n for n in os.listdir(out_dir) if n != "run_manifest.json")
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump({"artifacts": names}, f, indent=2)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def load_model(checkpoint_path):
    tensors = load_tensors(checkpoint_path)
    meta = unpack_meta(tensors)
    kind = KIND_BY_CODE.get(meta.get("model_kind", 0), "fused")
    model = TwoStreamNet(np.random.default_rng(0), kind=kind)
    state = {k: v for k, v in tensors.items() if not k.startswith("meta.")}
    model.load_state_dict(state)
    return model, meta


def cmd_eval(args) -> int:
    config = _build_config(args)
    model, _ = load_model(args.checkpoint)
    samples = _load_samples(args)
    need = "both" if model.kind != "artifact_only" else "spectrum"
    features = extract_corpus(samples, config, which=need,
                              cache_path=args.cache, jobs=args.jobs)
    report = evaluate_model(model, samples, features, param_count(model))
    print(report.to_table())
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.to_json())
            f.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------

def cmd_perturb(args) -> int:
    config = _build_config(args)
    fake_paths = _corpus_images(args.fake_dir, config)
    fit_real_dir = args.fit_real_dir or args.real_dir
    fit_fake_dir = args.fit_fake_dir or args.fake_dir

    corr = dictionary = None
    if args.corrections and os.path.isfile(args.corrections) and not args.refit:
        corr, dictionary = load_corrections(args.corrections)
    if args.method in ("sdn", "sdnpp") and corr is None:
        real_paths = _corpus_images(fit_real_dir, config)
        fit_fakes = _corpus_images(fit_fake_dir, config)
        corr = fit_sdn(_image_stream(real_paths, config),
                       _image_stream(fit_fakes, config))
    if args.method in ("pdc", "sdnpp") and dictionary is None:
        real_paths = _corpus_images(fit_real_dir, config)
        dictionary = fit_power_dictionary(_image_stream(real_paths, config),
                                          config.radius_bins)
    if args.corrections:
        save_corrections(args.corrections, corr, dictionary)

    os.makedirs(args.out_dir, exist_ok=True)
    fake_root = os.path.abspath(args.fake_dir)
    for path in fake_paths:
        img = load_normalized(path, config)
        if args.method == "sdn":
            out = apply_sdn(img, corr)
        elif args.method == "pdc":
            out = apply_pdc(img, dictionary)
        else:
            out = sdn_plus_plus(img, corr, dictionary)
        rel = os.path.relpath(os.path.abspath(path), fake_root)
        dest = os.path.join(args.out_dir, rel)
        os.makedirs(os.path.dirname(dest), exist_ok=True)
        write_image(dest, out)
    print(f"perturbed {len(fake_paths)} images with {args.method} -> {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    config = _build_config(args)
    real_paths = _corpus_images(args.real_dir, config)
    fake_paths = _corpus_images(args.fake_dir, config)
    os.makedirs(args.out_dir, exist_ok=True)

    stats = {}
    for kind, tag in (("fft_logmag", "fft"), ("dct_logmag", "dct")):
        real_mean = mean_spectrum(_image_stream(real_paths, config), kind, config.epsilon)
        fake_mean = mean_spectrum(_image_stream(fake_paths, config), kind, config.epsilon)
        diff, dstats = spectrum_diff(real_mean, fake_mean)
        center = tag == "fft"  # DCT planes already have DC at the corner
        export_heatmap(real_mean, os.path.join(args.out_dir, f"{tag}_real.png"), center)
        export_heatmap(fake_mean, os.path.join(args.out_dir, f"{tag}_fake.png"), center)
        export_heatmap(diff, os.path.join(args.out_dir, f"{tag}_diff.png"), center)
        save_tensors(os.path.join(args.out_dir, f"{tag}_diff.rfdf"),
                     {"diff": diff.values})
        stats[tag] = dstats
        if tag == "fft":
            stats["hf_logmag_gap"] = (high_frequency_mean(real_mean)
                                      - high_frequency_mean(fake_mean))
    with open(os.path.join(args.out_dir, "stats.json"), "w") as f:
        json.dump(stats, f, indent=2)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfdfin",
        description="Two-stream fingerprint forgery detector and its "
                    "spectrum-correction stress tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=20)
    p.add_argument("--per-identity", type=int, default=10)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("extract", help="extract features into a cache file")
    _add_config_args(p)
    p.add_argument("--data", help="corpus root (real/fake layout)")
    p.add_argument("--manifest", help="CSV manifest path,label,identity")
    p.add_argument("--out", required=True, help="cache file (.rfdf)")
    p.add_argument("--which", choices=("ridge", "spectrum", "both"), default="both")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--dump-stages", help="dump intermediate images here")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train", help="train a detector")
    _add_config_args(p)
    p.add_argument("--data", help="corpus root")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--model-kind", choices=tuple(MODEL_KINDS), default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--cache", help="feature cache to reuse")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("perturb", help="apply spectrum corrections to fakes")
    _add_config_args(p)
    p.add_argument("--method", choices=("sdn", "pdc", "sdnpp"), required=True)
    p.add_argument("--real-dir", required=True)
    p.add_argument("--fake-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fit-real-dir", help="fit corrections here instead of --real-dir")
    p.add_argument("--fit-fake-dir", help="fit corrections here instead of --fake-dir")
    p.add_argument("--corrections", help="load/save fitted corrections (.rfdf)")
    p.add_argument("--refit", action="store_true")
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("analyze", help="averaged spectra, diff maps, stats")
    _add_config_args(p)
    p.add_argument("--real-dir", required=True)
    p.add_argument("--fake-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CorruptCheckpoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PipelineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:  # console-script hook
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
