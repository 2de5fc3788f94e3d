"""Spectrum-correction attacks for stress-testing the detector.

SDN shifts each frequency bin's log-magnitude by the averaged
real-minus-fake gap; PDC then matches the image's radial power profile to
the nearest entry of a dictionary built from real images. Both preserve
phase, and the corrected spectrum keeps Hermitian symmetry so the inverse
transform is real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyCorpus, EmptyDictionary
from .imgproc import as_gray, to_u8
from .spectrum import Spectrum2D, mean_spectrum, radial_distance_grid

RATIO_CLAMP = 10.0


@dataclass
class SdnCorrection:
    """Log-magnitude delta: mean real spectrum minus mean fake spectrum."""

    delta: np.ndarray  # (h, w) float64


@dataclass
class SpectrumDictionary:
    """One radial power profile per real image."""

    entries: np.ndarray  # (k, radius_bins) float64, all >= 0
    radius_bins: int


def fit_sdn(real_images, fake_images) -> SdnCorrection:
    """Average log-magnitude gap between two corpora of equal-size images."""
    real_mean = mean_spectrum(real_images, "fft_logmag")
    fake_mean = mean_spectrum(fake_images, "fft_logmag")
    if real_mean.values.shape != fake_mean.values.shape:
        raise DimMismatch("real and fake corpora have different dimensions")
    return SdnCorrection(delta=real_mean.values - fake_mean.values)


def _hermitian_mirror(values: np.ndarray) -> np.ndarray:
    """values[(-u) mod H, (-v) mod W] for every bin."""
    return np.roll(np.roll(values[::-1, ::-1], 1, axis=0), 1, axis=1)


def _reconstruct(spec: np.ndarray) -> np.ndarray:
    """Inverse FFT, discard residual imaginary part, clamp and round to u8."""
    back = np.fft.ifft2(spec)
    return to_u8(np.real(back))


def apply_sdn(img: np.ndarray, corr: SdnCorrection) -> np.ndarray:
    """Scale each bin's magnitude by exp(delta), preserving phase.

    The scale field is symmetrized so the corrected spectrum stays
    Hermitian and the inverse transform is real.
    """
    img = as_gray(img)
    if corr.delta.shape != img.shape:
        raise DimMismatch(
            f"correction {corr.delta.shape} does not match image {img.shape}")
    spec = np.fft.fft2(img.astype(np.float64))
    delta = 0.5 * (corr.delta + _hermitian_mirror(corr.delta))
    return _reconstruct(spec * np.exp(delta))


def radial_power_profile(img: np.ndarray, radius_bins: int) -> np.ndarray:
    """Azimuthal mean of |FFT|^2 over centered-distance bins."""
    img = as_gray(img)
    spec = np.fft.fft2(img.astype(np.float64))
    return _profile_of_spectrum(np.abs(spec) ** 2, radius_bins)


def _radius_bin_index(h: int, w: int, radius_bins: int) -> np.ndarray:
    rho = radial_distance_grid(h, w)
    rmax = rho.max()
    idx = np.floor(rho / rmax * radius_bins).astype(np.int64) if rmax > 0 else \
        np.zeros_like(rho, dtype=np.int64)
    return np.minimum(idx, radius_bins - 1)


def _profile_of_spectrum(power: np.ndarray, radius_bins: int) -> np.ndarray:
    idx = _radius_bin_index(power.shape[0], power.shape[1], radius_bins)
    sums = np.bincount(idx.ravel(), weights=power.ravel(), minlength=radius_bins)
    counts = np.bincount(idx.ravel(), minlength=radius_bins)
    profile = np.zeros(radius_bins, dtype=np.float64)
    nz = counts > 0
    profile[nz] = sums[nz] / counts[nz]
    return profile


def fit_power_dictionary(real_images, radius_bins: int = 32) -> SpectrumDictionary:
    """One radial |FFT|^2 profile per real image."""
    if radius_bins < 4:
        raise ValueError("radius_bins must be >= 4")
    entries = []
    for img in real_images:
        entries.append(radial_power_profile(img, radius_bins))
    if not entries:
        raise EmptyCorpus("power dictionary needs at least one real image")
    return SpectrumDictionary(entries=np.stack(entries), radius_bins=radius_bins)


def apply_pdc(img: np.ndarray, dictionary: SpectrumDictionary) -> np.ndarray:
    """Rescale each bin toward the nearest dictionary profile.

    Scale per radius bin is sqrt(target/current) clamped to
    [1/RATIO_CLAMP, RATIO_CLAMP]; phase is untouched because the scale is
    real and non-negative.
    """
    img = as_gray(img)
    if dictionary.entries.shape[0] == 0:
        raise EmptyDictionary("dictionary has no profiles")
    bins = dictionary.radius_bins
    spec = np.fft.fft2(img.astype(np.float64))
    power = np.abs(spec) ** 2
    profile = _profile_of_spectrum(power, bins)

    dists = np.sum((dictionary.entries - profile) ** 2, axis=1)
    target = dictionary.entries[int(np.argmin(dists))]

    tiny = np.finfo(np.float64).tiny
    ratio = np.sqrt(target / np.maximum(profile, tiny))
    ratio = np.clip(ratio, 1.0 / RATIO_CLAMP, RATIO_CLAMP)

    idx = _radius_bin_index(img.shape[0], img.shape[1], bins)
    return _reconstruct(spec * ratio[idx])


def sdn_plus_plus(img: np.ndarray, corr: SdnCorrection,
                  dictionary: SpectrumDictionary) -> np.ndarray:
    """Spectrum-difference normalization followed by power-profile correction."""
    return apply_pdc(apply_sdn(img, corr), dictionary)


def save_corrections(path, corr: SdnCorrection | None,
                     dictionary: SpectrumDictionary | None) -> None:
    from .nn.checkpoint import save_tensors

    tensors = {}
    if corr is not None:
        tensors["sdn.delta"] = corr.delta
    if dictionary is not None:
        tensors["pdc.profiles"] = dictionary.entries
    save_tensors(path, tensors)


def load_corrections(path):
    from .nn.checkpoint import load_tensors

    tensors = load_tensors(path)
    corr = None
    dictionary = None
    if "sdn.delta" in tensors:
        corr = SdnCorrection(delta=tensors["sdn.delta"].astype(np.float64))
    if "pdc.profiles" in tensors:
        entries = tensors["pdc.profiles"].astype(np.float64)
        dictionary = SpectrumDictionary(entries=entries, radius_bins=entries.shape[1])
    return corr, dictionary
