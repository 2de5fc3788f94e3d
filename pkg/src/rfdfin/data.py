"""Corpus management, identity-disjoint splits, synthetic fingerprints,
and evaluation metrics.

The synthetic generator substitutes for licensed fingerprint datasets: a
whorl-like oriented ridge pattern with pores, where the real-like class
carries smooth grayscale modulation along ridges and the fake-like class
has its high-frequency spectrum attenuated (the generation-artifact
analogue).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpus
from .imgproc import as_gray, to_u8

REAL, FAKE = 0, 1
LABEL_NAMES = {REAL: "real", FAKE: "fake"}


@dataclass(frozen=True)
class Sample:
    path: str
    label: int        # 0 = real, 1 = fake
    identity: str


@dataclass
class SplitSpec:
    """Identity lists per split and class; identity sets are disjoint."""

    train: dict[int, list[str]]
    val: dict[int, list[str]]
    test: dict[int, list[str]]

    def split_of(self, sample: Sample) -> str | None:
        for name, ids in (("train", self.train), ("val", self.val), ("test", self.test)):
            if sample.identity in ids.get(sample.label, []):
                return name
        return None


@dataclass
class EvalReport:
    accuracy: float
    recall: float | None     # fake = positive class; None when no fakes
    tp: int
    fp: int
    tn: int
    fn: int
    total: int
    param_count: int
    no_ridges_count: int = 0
    no_ridges_paths: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "accuracy": self.accuracy,
            "recall": self.recall,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "total": self.total,
            "param_count": self.param_count,
            "no_ridges_count": self.no_ridges_count,
            "no_ridges_paths": self.no_ridges_paths,
        }, indent=2)

    def to_table(self) -> str:
        recall = f"{self.recall:.4f}" if self.recall is not None else "n/a"
        lines = [
            f"samples        {self.total}",
            f"accuracy       {self.accuracy:.4f}",
            f"recall (fake)  {recall}",
            f"confusion      TP={self.tp} FP={self.fp} TN={self.tn} FN={self.fn}",
            f"parameters     {self.param_count}",
            f"no-ridge flags {self.no_ridges_count}",
        ]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

_IMAGE_EXTS = (".pgm", ".png", ".jpg", ".jpeg")


def load_corpus(root_dir, manifest=None) -> list[Sample]:
    """Samples from `<root>/{real,fake}/<identity>/<image>` or a manifest CSV.

    The manifest (columns path,label,identity) wins over directory layout;
    relative manifest paths resolve against the manifest's directory.
    Ordering is lexicographic by path.
    """
    samples: list[Sample] = []
    seen: set[str] = set()

    if manifest is not None:
        base = os.path.dirname(os.path.abspath(manifest))
        with open(manifest, newline="") as f:
            reader = csv.DictReader(f)
            required = {"path", "label", "identity"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"manifest must have columns {sorted(required)}")
            for row in reader:
                path = row["path"]
                if not os.path.isabs(path):
                    path = os.path.join(base, path)
                path = os.path.normpath(path)
                label = _parse_label(row["label"])
                if path in seen:
                    raise ValueError(f"duplicate path in manifest: {path}")
                if not os.path.isfile(path):
                    raise FileNotFoundError(f"manifest entry not readable: {path}")
                seen.add(path)
                samples.append(Sample(path=path, label=label, identity=row["identity"]))
    else:
        root = os.path.abspath(root_dir)
        if not os.path.isdir(root):
            raise FileNotFoundError(f"corpus root not found: {root}")
        for label_dir in sorted(os.listdir(root)):
            full = os.path.join(root, label_dir)
            if not os.path.isdir(full):
                continue
            label = _parse_label(label_dir)
            for identity in sorted(os.listdir(full)):
                ident_dir = os.path.join(full, identity)
                if not os.path.isdir(ident_dir):
                    continue
                for name in sorted(os.listdir(ident_dir)):
                    if not name.lower().endswith(_IMAGE_EXTS):
                        continue
                    path = os.path.join(ident_dir, name)
                    if path in seen:
                        raise ValueError(f"duplicate path: {path}")
                    seen.add(path)
                    samples.append(Sample(path=path, label=label, identity=identity))

    if not samples:
        raise EmptyCorpus(f"no samples under {manifest or root_dir}")
    samples.sort(key=lambda s: s.path)
    return samples


def _parse_label(text: str) -> int:
    t = text.strip().lower()
    if t in ("real", "0"):
        return REAL
    if t in ("fake", "1"):
        return FAKE
    raise ValueError(f"unknown label {text!r} (expected real/fake or 0/1)")


def split_by_identity(samples: list[Sample], fractions=(0.6, 0.2, 0.2),
                      seed: int = 0) -> SplitSpec:
    """Shuffle identities (not images) per class and partition by fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if len(fractions) != 3:
        raise ValueError("expected (train, val, test) fractions")

    spec = SplitSpec(train={}, val={}, test={})
    rng = np.random.default_rng(seed)
    for label in sorted({s.label for s in samples}):
        identities = sorted({s.identity for s in samples if s.label == label})
        n = len(identities)
        n_splits = sum(1 for f in fractions if f > 0)
        if n < n_splits:
            raise ValueError(
                f"class {LABEL_NAMES[label]} has {n} identities for {n_splits} splits")
        order = rng.permutation(n)
        shuffled = [identities[i] for i in order]
        # epsilon guards the floor against values like 24.999999999999996
        b1 = int(np.floor(fractions[0] * n + 1e-9))
        b2 = int(np.floor((fractions[0] + fractions[1]) * n + 1e-9))
        spec.train[label] = shuffled[:b1]
        spec.val[label] = shuffled[b1:b2]
        spec.test[label] = shuffled[b2:]
    return spec


def samples_in_split(samples: list[Sample], spec: SplitSpec, split: str) -> list[Sample]:
    ids = getattr(spec, split)
    return [s for s in samples if s.identity in ids.get(s.label, [])]


# ---------------------------------------------------------------------------
# Synthetic fingerprint generation
# ---------------------------------------------------------------------------

RIDGE_PERIOD_RANGE = (8.5, 9.5)
MODULATION_DEPTH = 0.38            # real-like along-ridge grayscale swing
# Long modulation wavelengths keep the perspiration cue strong along the
# ridge path while its spectral sidebands stay buried inside the ridge
# frequency ring, out of reach of averaged-spectrum corrections.
MODULATION_WAVELENGTHS = (70.0, 95.0)
HF_CUTOFF = 0.17                   # normalized frequency where fake energy falls
HF_FLOOR = 0.12                    # residual fake energy beyond the cutoff


def _identity_params(identity_rng: np.random.Generator, w: int, h: int) -> dict:
    return {
        "cx": identity_rng.uniform(0.25 * w, 0.75 * w),
        "cy": identity_rng.uniform(0.25 * h, 0.75 * h),
        "period": identity_rng.uniform(*RIDGE_PERIOD_RANGE),
        "aspect": identity_rng.uniform(0.85, 1.18),
        "tilt": identity_rng.uniform(0.0, np.pi),
        "warp_amp": identity_rng.uniform(0.8, 1.8),
        "warp_kx": identity_rng.uniform(0.5, 1.5),
        "warp_ky": identity_rng.uniform(0.5, 1.5),
        "warp_phase": identity_rng.uniform(0.0, 2.0 * np.pi),
        "phase": identity_rng.uniform(0.0, 2.0 * np.pi),
    }


def synth_fingerprint(seed: int, cls: str, w: int = 256, h: int = 256,
                      identity_seed: int | None = None) -> np.ndarray:
    """One synthetic fingerprint image, bit-reproducible from the seeds.

    cls is 'real' or 'fake'. identity_seed fixes the ridge geometry so
    several impressions can share one virtual finger; it defaults to the
    image seed.
    """
    if w < 64 or h < 64:
        raise ValueError("generator needs at least 64x64")
    if cls not in ("real", "fake"):
        raise ValueError(f"class must be 'real' or 'fake', got {cls!r}")
    ident = _identity_params(
        np.random.default_rng(seed if identity_seed is None else identity_seed), w, h)
    rng = np.random.default_rng(seed)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # impressions of one identity differ by a small sensor shift
    dx = rng.uniform(-3.0, 3.0)
    dy = rng.uniform(-3.0, 3.0)
    x = xs - ident["cx"] + dx
    y = ys - ident["cy"] + dy

    ct, st = np.cos(ident["tilt"]), np.sin(ident["tilt"])
    xr = (x * ct + y * st) * ident["aspect"]
    yr = (-x * st + y * ct) / ident["aspect"]
    r = np.sqrt(xr * xr + yr * yr)
    warp = ident["warp_amp"] * np.sin(
        2.0 * np.pi * (ident["warp_kx"] * xs / w + ident["warp_ky"] * ys / h)
        + ident["warp_phase"])
    ridge_wave = np.cos(2.0 * np.pi * (r + warp) / ident["period"] + ident["phase"])
    profile = np.tanh(2.5 * ridge_wave)  # sharpened ridges put energy in harmonics

    if cls == "real":
        mtheta = rng.uniform(0.0, np.pi)
        mlambda = rng.uniform(*MODULATION_WAVELENGTHS)
        mphase = rng.uniform(0.0, 2.0 * np.pi)
        modulation = 1.0 + MODULATION_DEPTH * np.sin(
            2.0 * np.pi * (np.cos(mtheta) * xs + np.sin(mtheta) * ys) / mlambda
            + mphase)
    else:
        modulation = 1.0  # generated impressions lack perspiration variation

    intensity = 140.0 + 72.0 * profile * modulation

    # pores: small bright dots on ridge cores, both classes
    core = profile < -0.7
    core_r, core_c = np.nonzero(core)
    n_pores = min(len(core_r), max(8, int(0.0015 * w * h)))
    if len(core_r) and n_pores:
        pick = rng.choice(len(core_r), size=n_pores, replace=False)
        for rr, cc in zip(core_r[pick], core_c[pick]):
            r0, r1 = max(0, rr - 1), min(h, rr + 2)
            c0, c1 = max(0, cc - 1), min(w, cc + 2)
            intensity[r0:r1, c0:c1] = 225.0

    intensity += rng.normal(0.0, 4.0, size=intensity.shape)

    if cls == "fake":
        intensity = _attenuate_high_frequencies(intensity)
    return to_u8(intensity)


def _attenuate_high_frequencies(img_f: np.ndarray) -> np.ndarray:
    """Soft radial low-pass emulating the missing high-frequency energy."""
    from .spectrum import radial_distance_grid

    h, w = img_f.shape
    rho = radial_distance_grid(h, w)
    gain = HF_FLOOR + (1.0 - HF_FLOOR) / (1.0 + np.exp((rho - HF_CUTOFF) / 0.02))
    spec = np.fft.fft2(img_f)
    return np.real(np.fft.ifft2(spec * gain))


def write_synth_corpus(out_dir, n_identities: int, per_identity: int,
                       seed: int, w: int = 256, h: int = 256) -> list[Sample]:
    """Materialize a real/fake corpus on disk, one directory per identity."""
    from .imgproc import write_image

    samples = []
    for label, cls in ((REAL, "real"), (FAKE, "fake")):
        for ident_idx in range(n_identities):
            identity = f"id{ident_idx:04d}"
            ident_dir = os.path.join(out_dir, cls, identity)
            os.makedirs(ident_dir, exist_ok=True)
            identity_seed = _derive_seed(seed, label, ident_idx, 0xFFFF)
            for imp in range(per_identity):
                img_seed = _derive_seed(seed, label, ident_idx, imp)
                img = synth_fingerprint(img_seed, cls, w, h, identity_seed=identity_seed)
                path = os.path.join(ident_dir, f"imp{imp:02d}.png")
                write_image(path, img)
                samples.append(Sample(path=path, label=label, identity=identity))
    samples.sort(key=lambda s: s.path)
    return samples


def _derive_seed(base: int, label: int, ident: int, imp: int) -> int:
    mix = np.random.SeedSequence([base, label, ident, imp])
    return int(mix.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def confusion_report(predictions: list[int | None], labels: list[int],
                     param_count: int = 0,
                     no_ridges_paths: list[str] | None = None) -> EvalReport:
    """Build the report; None predictions mean no-ridges and count as fake."""
    if not labels:
        raise ValueError("empty sample list")
    tp = fp = tn = fn = 0
    for pred, label in zip(predictions, labels):
        p = FAKE if pred is None else pred
        if label == FAKE:
            tp += p == FAKE
            fn += p == REAL
        else:
            tn += p == REAL
            fp += p == FAKE
    total = len(labels)
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    paths = no_ridges_paths or []
    return EvalReport(
        accuracy=(tp + tn) / total, recall=recall,
        tp=tp, fp=fp, tn=tn, fn=fn, total=total,
        param_count=param_count,
        no_ridges_count=len(paths), no_ridges_paths=paths)
