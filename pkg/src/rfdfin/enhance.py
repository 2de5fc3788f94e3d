"""Fingerprint enhancement and skeleton preparation.

Pipeline pieces: block orientation estimation, orientation-aware Gabor
filtering, pore filling, thinning to single-pixel width, and removal of
Y-junctions so every remaining skeleton component is a simple path or
cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .errors import NotBinary
from .imgproc import as_gray, median_filter, threshold_binarize, to_u8

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


# Ring positions clockwise from north; consecutive entries are 8-adjacent.
_RING = np.array(
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)],
    dtype=np.int64,
)
_RING_DR = np.ascontiguousarray(_RING[:, 0])
_RING_DC = np.ascontiguousarray(_RING[:, 1])
# 8x8 adjacency between ring cells (Chebyshev distance 1 between offsets)
_RING_ADJ = np.zeros((8, 8), dtype=np.bool_)
for _i in range(8):
    for _j in range(8):
        if _i != _j and max(abs(_RING_DR[_i] - _RING_DR[_j]),
                            abs(_RING_DC[_i] - _RING_DC[_j])) <= 1:
            _RING_ADJ[_i, _j] = True
del _i, _j


@dataclass
class OrientationField:
    """Per-block dominant ridge direction (radians in [0, pi)) and coherence."""

    block_size: int
    angles: np.ndarray     # (bh, bw) float64
    coherence: np.ndarray  # (bh, bw) float64 in [0, 1]


def _check_binary(img: np.ndarray) -> np.ndarray:
    img = as_gray(img)
    vals = np.unique(img)
    if not np.all(np.isin(vals, (0, 255))):
        raise NotBinary(f"image contains values other than 0/255: {vals[:8]}")
    return img


def estimate_orientation(img: np.ndarray, block_size: int = 16) -> OrientationField:
    """Dominant ridge direction per block via the doubled-angle gradient method.

    Gradients point across ridges, so the ridge direction is the averaged
    gradient direction rotated by pi/2. Uniform blocks get angle 0 and
    coherence 0.
    """
    img = as_gray(img)
    if block_size < 4:
        raise ValueError("block_size must be >= 4")
    f = img.astype(np.float64)
    gy, gx = np.gradient(f)

    gxx = gx * gx
    gyy = gy * gy
    gxy = gx * gy

    h, w = f.shape
    bh = (h + block_size - 1) // block_size
    bw = (w + block_size - 1) // block_size
    angles = np.zeros((bh, bw), dtype=np.float64)
    coher = np.zeros((bh, bw), dtype=np.float64)

    for bi in range(bh):
        for bj in range(bw):
            sl = (slice(bi * block_size, (bi + 1) * block_size),
                  slice(bj * block_size, (bj + 1) * block_size))
            sxx = gxx[sl].sum()
            syy = gyy[sl].sum()
            sxy = gxy[sl].sum()
            total = sxx + syy
            if total < 1e-12:
                continue
            grad_angle = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
            ridge = (grad_angle + np.pi / 2.0) % np.pi
            angles[bi, bj] = ridge
            coher[bi, bj] = np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy) / total
    return OrientationField(block_size=block_size, angles=angles, coherence=coher)


def gabor_kernel(angle: float, freq: float, sigma: float = 4.0) -> np.ndarray:
    """Even-symmetric zero-mean Gabor tuned along the ridge direction `angle`.

    The cosine varies across the ridges (along the gradient normal);
    half-width is 2*sigma. The mean is subtracted so constants map to 0.
    """
    half = int(round(2.0 * sigma))
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    normal = angle - np.pi / 2.0
    across = xs * np.cos(normal) + ys * np.sin(normal)
    along = -xs * np.sin(normal) + ys * np.cos(normal)
    env = np.exp(-(across ** 2 + along ** 2) / (2.0 * sigma * sigma))
    kern = env * np.cos(2.0 * np.pi * freq * across)
    return kern - kern.mean()


@lru_cache(maxsize=8)
def _gabor_bank_fft(h: int, w: int, ridge_freq: float, sigma: float,
                    n_orientations: int):
    """Precomputed kernel rFFTs for one image shape; keyed so repeated
    extraction over a uniform corpus pays the kernel transforms once."""
    half = int(round(2.0 * sigma))
    kh = kw = 2 * half + 1
    fh = sfft.next_fast_len(h + kh - 1)
    fw = sfft.next_fast_len(w + kw - 1)
    bank = []
    for i in range(n_orientations):
        kern = gabor_kernel(i * np.pi / n_orientations, ridge_freq, sigma)
        bank.append(np.fft.rfft2(kern, s=(fh, fw)))
    crop = ((kh - 1) // 2, (kw - 1) // 2)
    return (fh, fw), crop, np.stack(bank)


def gabor_enhance(img: np.ndarray, field: OrientationField,
                  ridge_freq: float = 0.1, sigma: float = 4.0,
                  n_orientations: int = 16) -> np.ndarray:
    """Filter each pixel with the Gabor bank entry nearest its block's angle.

    Responses are computed for a fixed bank of quantized orientations via
    FFT convolution, then selected per block; the result is min-max
    renormalized to [0, 255].
    """
    img = as_gray(img)
    if not (0.0 < ridge_freq < 0.5):
        raise ValueError("ridge_freq must be in (0, 0.5)")
    f = img.astype(np.float64)
    f = f - f.mean()

    h, w = f.shape
    (fh, fw), (cr, cc), bank = _gabor_bank_fft(h, w, ridge_freq, sigma, n_orientations)
    f_img = np.fft.rfft2(f, s=(fh, fw))
    responses = [
        np.fft.irfft2(f_img * bank[i], s=(fh, fw))[cr:cr + h, cc:cc + w]
        for i in range(n_orientations)
    ]
    bank_angles = np.arange(n_orientations) * (np.pi / n_orientations)

    # nearest bank index per block, circular distance on [0, pi)
    diffs = np.abs(field.angles[..., None] - bank_angles[None, None, :])
    diffs = np.minimum(diffs, np.pi - diffs)
    block_idx = np.argmin(diffs, axis=-1)

    h, w = f.shape
    bs = field.block_size
    rows = np.minimum(np.arange(h) // bs, field.angles.shape[0] - 1)
    cols = np.minimum(np.arange(w) // bs, field.angles.shape[1] - 1)
    pix_idx = block_idx[np.ix_(rows, cols)]

    stacked = np.stack(responses, axis=0)
    out = np.take_along_axis(stacked, pix_idx[None, :, :], axis=0)[0]

    lo, hi = out.min(), out.max()
    if hi - lo < 1e-9:
        return img.copy()
    return to_u8((out - lo) / (hi - lo) * 255.0)


def fill_pores(binary: np.ndarray) -> np.ndarray:
    """Blacken white pixels with >15 black pixels among their 24 5x5 neighbors.

    Single synchronous pass: decisions use the input image. Edge pixels
    count only their available neighbors; the 15 threshold is not rescaled.
    """
    binary = _check_binary(binary)
    black = (binary == 0).astype(np.int32)
    kern = np.ones((5, 5), dtype=np.int32)
    kern[2, 2] = 0
    counts = ndimage.convolve(black, kern, mode="constant", cval=0)
    out = binary.copy()
    out[(binary == 255) & (counts > 15)] = 0
    return out


# ---------------------------------------------------------------------------
# Thinning: sequential simple-point deletion with directional sub-passes.
# A border pixel is deleted only if it is topologically simple (its black
# ring neighbors form one 8-connected group and it has a white 4-neighbor)
# and not a curve endpoint, so component count and holes are preserved by
# construction.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _ring_flags(black, r, c):
    h, w = black.shape
    flags = np.zeros(8, dtype=np.bool_)
    for i in range(8):
        rr = r + _RING_DR[i]
        cc = c + _RING_DC[i]
        if 0 <= rr < h and 0 <= cc < w and black[rr, cc]:
            flags[i] = True
    return flags


@njit(cache=True)
def _ring_component_count(flags):
    # 8-connected components among black ring cells, via min-label
    # propagation over the fixed 8x8 ring adjacency.
    labels = np.full(8, -1, dtype=np.int64)
    any_black = False
    for i in range(8):
        if flags[i]:
            labels[i] = i
            any_black = True
    if not any_black:
        return 0
    changed = True
    while changed:
        changed = False
        for j in range(8):
            if not flags[j]:
                continue
            for k in range(8):
                if flags[k] and _RING_ADJ[j, k] and labels[k] < labels[j]:
                    labels[j] = labels[k]
                    changed = True
    count = 0
    for i in range(8):
        if flags[i] and labels[i] == i:
            count += 1
    return count


@njit(cache=True)
def _has_white_4_neighbor(black, r, c):
    h, w = black.shape
    if r == 0 or not black[r - 1, c]:
        return True
    if r == h - 1 or not black[r + 1, c]:
        return True
    if c == 0 or not black[r, c - 1]:
        return True
    if c == w - 1 or not black[r, c + 1]:
        return True
    return False


@njit(cache=True)
def _thin_subpass(black, cand_r, cand_c):
    deleted = 0
    for i in range(cand_r.shape[0]):
        r = cand_r[i]
        c = cand_c[i]
        if not black[r, c]:
            continue
        flags = _ring_flags(black, r, c)
        n = 0
        for k in range(8):
            if flags[k]:
                n += 1
        if n < 2:
            continue  # endpoints and isolated pixels survive
        if not _has_white_4_neighbor(black, r, c):
            continue
        if _ring_component_count(flags) != 1:
            continue
        black[r, c] = False
        deleted += 1
    return deleted


def _thin_fixpoint(black: np.ndarray) -> None:
    h, w = black.shape
    padded_false = np.zeros((h, w), dtype=bool)
    while True:
        removed = 0
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            # snapshot of pixels whose (dr,dc) 4-neighbor is white
            shifted = padded_false.copy()
            if dr == -1:
                shifted[1:, :] = black[:-1, :]
            elif dr == 1:
                shifted[:-1, :] = black[1:, :]
            elif dc == -1:
                shifted[:, 1:] = black[:, :-1]
            else:
                shifted[:, :-1] = black[:, 1:]
            cand = black & ~shifted
            rr, cc = np.nonzero(cand)
            if rr.size:
                removed += _thin_subpass(black, rr.astype(np.int64), cc.astype(np.int64))
        if removed == 0:
            break


def _find_2x2_blocks(black: np.ndarray):
    hit = black[:-1, :-1] & black[1:, :-1] & black[:-1, 1:] & black[1:, 1:]
    return np.argwhere(hit)


def _component_count(black: np.ndarray) -> int:
    _, n = ndimage.label(black, structure=np.ones((3, 3), dtype=np.int8))
    return n


def _resolve_2x2_round(black: np.ndarray) -> bool:
    """Delete one pixel of each surviving 2x2 block when the global black
    component count survives the deletion (local simplicity alone cannot
    decide for blocks whose arms reconnect elsewhere)."""
    blocks = _find_2x2_blocks(black)
    if blocks.size == 0:
        return False
    baseline = _component_count(black)
    deleted = False
    for r, c in blocks:
        members = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
        if not all(black[m] for m in members):
            continue  # an earlier deletion already broke this block
        for m in members:
            black[m] = False
            if _component_count(black) == baseline:
                deleted = True
                break
            black[m] = True
    return deleted


def thin(binary: np.ndarray) -> np.ndarray:
    """Iteratively thin a binary image to curves of single-pixel width."""
    binary = _check_binary(binary)
    black = binary == 0

    _thin_fixpoint(black)
    while _resolve_2x2_round(black):
        _thin_fixpoint(black)

    out = np.where(black, 0, 255).astype(np.uint8)
    return out


def neighbor_group_count(binary_black: np.ndarray, r: int, c: int) -> int:
    """Number of black runs around (r, c) in the clockwise ring order.

    This is the "potential directions" count: a straight-line interior
    pixel has 2, endpoints 1, branch points >= 3.
    """
    h, w = binary_black.shape
    flags = []
    for dr, dc in _RING:
        rr, cc = r + dr, c + dc
        flags.append(bool(0 <= rr < h and 0 <= cc < w and binary_black[rr, cc]))
    runs = 0
    for i in range(8):
        if flags[i] and not flags[i - 1]:
            runs += 1
    if runs == 0 and flags[0]:
        runs = 1  # full ring
    return runs


def _branch_mask(black: np.ndarray) -> np.ndarray:
    """Vectorized run count >= 3 over the whole image (zero-padded ring)."""
    h, w = black.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = black
    ring = np.stack([padded[1 + dr:h + 1 + dr, 1 + dc:w + 1 + dc] for dr, dc in _RING])
    prev = np.roll(ring, 1, axis=0)
    runs = np.sum(ring & ~prev, axis=0)
    full = np.all(ring, axis=0)
    runs = np.where(full, 1, runs)
    return black & (runs >= 3)


def remove_y_junctions(skel: np.ndarray) -> np.ndarray:
    """Delete branch pixels (>= 3 neighbor groups) until none remain.

    Each pass is synchronous: the branch test uses the image at pass start.
    """
    skel = _check_binary(skel)
    black = skel == 0
    while True:
        branches = _branch_mask(black)
        if not branches.any():
            break
        black = black & ~branches
    return np.where(black, 0, 255).astype(np.uint8)


@dataclass
class PreprocessParams:
    threshold: int = 100
    median_radius: int = 1
    block_size: int = 16
    ridge_freq: float = 0.1
    gabor_sigma: float = 4.0


def ridge_preprocess(img: np.ndarray, params: PreprocessParams | None = None) -> np.ndarray:
    """Full skeleton pipeline: median, Gabor, median, binarize, pore fill,
    thin, Y-junction removal. The second median pass reuses the first radius."""
    if params is None:
        params = PreprocessParams()
    img = as_gray(img)
    step = median_filter(img, params.median_radius)
    field = estimate_orientation(step, params.block_size)
    step = gabor_enhance(step, field, params.ridge_freq, params.gabor_sigma)
    step = median_filter(step, params.median_radius)
    step = threshold_binarize(step, params.threshold)
    step = fill_pores(step)
    step = thin(step)
    return remove_y_junctions(step)


def ridge_preprocess_stages(img: np.ndarray, params: PreprocessParams | None = None) -> dict:
    """Like ridge_preprocess but returning every intermediate, for --dump-stages."""
    if params is None:
        params = PreprocessParams()
    img = as_gray(img)
    stages = {"input": img}
    stages["median1"] = median_filter(img, params.median_radius)
    field = estimate_orientation(stages["median1"], params.block_size)
    stages["gabor"] = gabor_enhance(stages["median1"], field, params.ridge_freq, params.gabor_sigma)
    stages["median2"] = median_filter(stages["gabor"], params.median_radius)
    stages["binary"] = threshold_binarize(stages["median2"], params.threshold)
    stages["pores_filled"] = fill_pores(stages["binary"])
    stages["thinned"] = thin(stages["pores_filled"])
    stages["skeleton"] = remove_y_junctions(stages["thinned"])
    return stages
