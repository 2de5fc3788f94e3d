"""2D frequency transforms, log-magnitude spectra, and corpus averages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DimMismatch, EmptyCorpus
from .imgproc import as_gray, to_u8

DEFAULT_EPSILON = 1e-18


@dataclass
class Spectrum2D:
    """Frequency plane of an image.

    kind is one of 'fft_complex' (complex128 values), 'fft_logmag' or
    'dct_logmag' (float64 values). Shape is (height, width) in bins.
    """

    values: np.ndarray
    kind: str

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def fft2(img: np.ndarray) -> Spectrum2D:
    """Unnormalized 2D DFT of a float image."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a 2D image, got shape {a.shape}")
    return Spectrum2D(values=np.fft.fft2(a), kind="fft_complex")


def log_magnitude(spec: Spectrum2D, epsilon: float = DEFAULT_EPSILON) -> Spectrum2D:
    """Natural log of (|bin| + epsilon)."""
    if spec.kind != "fft_complex":
        raise DimMismatch(f"log_magnitude expects fft_complex, got {spec.kind}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return Spectrum2D(values=np.log(np.abs(spec.values) + epsilon), kind="fft_logmag")


def dct2_log(img: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> Spectrum2D:
    """Orthonormal type-II 2D DCT followed by log(|.| + epsilon)."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {a.shape}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    coeffs = sfft.dctn(a, type=2, norm="ortho")
    return Spectrum2D(values=np.log(np.abs(coeffs) + epsilon), kind="dct_logmag")


def image_logmag(img: np.ndarray, kind: str = "fft_logmag",
                 epsilon: float = DEFAULT_EPSILON) -> Spectrum2D:
    """Log-magnitude spectrum of a gray image under the requested transform."""
    f = as_gray(img).astype(np.float64)
    if kind == "fft_logmag":
        return log_magnitude(fft2(f), epsilon)
    if kind == "dct_logmag":
        return dct2_log(f, epsilon)
    raise ValueError(f"unknown spectrum kind {kind!r}")


def flip_logmag_horizontal(spec: Spectrum2D) -> Spectrum2D:
    """Log-magnitude of the horizontally flipped image, by index remap.

    For real images, |F_flip(u, v)| = |F(u, (W - v) mod W)|, so the flipped
    spectrum never needs recomputing.
    """
    if spec.kind != "fft_logmag":
        raise DimMismatch("flip remap applies to fft_logmag spectra")
    v = spec.values
    remapped = np.empty_like(v)
    remapped[:, 0] = v[:, 0]
    remapped[:, 1:] = v[:, :0:-1]
    return Spectrum2D(values=remapped, kind="fft_logmag")


def mean_spectrum(images, kind: str = "fft_logmag",
                  epsilon: float = DEFAULT_EPSILON) -> Spectrum2D:
    """Element-wise mean of per-image log-magnitude spectra over a stream."""
    acc = None
    count = 0
    for img in images:
        spec = image_logmag(img, kind, epsilon)
        if acc is None:
            acc = spec.values.copy()
        else:
            if spec.values.shape != acc.shape:
                raise DimMismatch(
                    f"image spectrum {spec.values.shape} != accumulator {acc.shape}")
            acc += spec.values
        count += 1
    if count == 0:
        raise EmptyCorpus("mean_spectrum over an empty stream")
    return Spectrum2D(values=acc / count, kind=kind)


def spectrum_diff(a: Spectrum2D, b: Spectrum2D):
    """Element-wise a - b plus summary stats {l2, max_abs, mean}."""
    if a.kind != b.kind:
        raise DimMismatch(f"kind mismatch: {a.kind} vs {b.kind}")
    if a.values.shape != b.values.shape:
        raise DimMismatch(f"shape mismatch: {a.values.shape} vs {b.values.shape}")
    d = a.values - b.values
    stats = {
        "l2": float(np.sqrt(np.sum(d * d))),
        "max_abs": float(np.max(np.abs(d))) if d.size else 0.0,
        "mean": float(np.mean(d)),
    }
    return Spectrum2D(values=d, kind=a.kind), stats


def radial_distance_grid(h: int, w: int) -> np.ndarray:
    """Per-bin distance from DC after centering, in normalized frequency.

    Axis frequencies run in [-0.5, 0.5); the Nyquist rate is 0.5.
    """
    fu = np.fft.fftfreq(h)
    fv = np.fft.fftfreq(w)
    return np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)


def high_frequency_mean(spec: Spectrum2D, radius_frac: float = 0.25) -> float:
    """Mean log-magnitude over bins with radius > radius_frac * Nyquist."""
    rho = radial_distance_grid(spec.height, spec.width)
    mask = rho > radius_frac * 0.5
    return float(spec.values[mask].mean())


def export_heatmap(spec: Spectrum2D, path, center_dc: bool = True) -> tuple[float, float]:
    """Write a min-max normalized 8-bit heatmap plus a '<path>.minmax.txt' sidecar.

    DC-centering (fftshift) is for human viewing only; returns (min, max).
    """
    from .imgproc import write_image

    v = np.real(spec.values)
    if center_dc:
        v = np.fft.fftshift(v)
    lo = float(v.min())
    hi = float(v.max())
    scale = (v - lo) / (hi - lo) * 255.0 if hi > lo else np.zeros_like(v)
    write_image(path, to_u8(scale))
    with open(f"{path}.minmax.txt", "w") as f:
        f.write(f"{lo!r} {hi!r}\n")
    return lo, hi
