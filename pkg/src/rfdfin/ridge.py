"""Ridge tracing, segmentation, and the 1D-spectrum raw ridge feature.

Curves are (n, 2) int arrays of (row, col) coordinates with consecutive
points 8-adjacent. Tracing consumes a private working copy of the
skeleton, so across all traced curves every black pixel appears exactly
once.
"""

from __future__ import annotations

import numpy as np

from .errors import BranchPoint, NoRidges, OutOfBounds
from .enhance import _branch_mask, _check_binary
from .imgproc import as_gray, gaussian_smooth_1d

# neighbor scan order matches argwhere on the 3x3 patch (row-major)
_SCAN = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _remaining_neighbors(black: np.ndarray, r: int, c: int) -> list[tuple[int, int]]:
    h, w = black.shape
    out = []
    for dr, dc in _SCAN:
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and black[rr, cc]:
            out.append((rr, cc))
    return out


def _walk(black: np.ndarray, r: int, c: int) -> list[tuple[int, int]]:
    """Append-and-erase walk from (r, c) until the path runs out.

    If more than one remaining neighbor appears mid-walk (a staircase
    ambiguity), the first in scan order is followed; the others stay black
    and seed their own curves later, keeping the partition exact.
    """
    path = []
    while True:
        path.append((r, c))
        black[r, c] = False
        nbrs = _remaining_neighbors(black, r, c)
        if not nbrs:
            return path
        r, c = nbrs[0]


def trace_all_ridges(skel: np.ndarray) -> list[np.ndarray]:
    """Split a junction-free skeleton into ordered ridge curves.

    Seeds are taken in row-major order. A seed with two remaining
    neighbors is traced in both directions and stitched as
    reversed(first) + seed + second; erase-on-visit terminates cycles.
    """
    skel = _check_binary(skel)
    black = skel == 0
    if _branch_mask(black).any():
        raise BranchPoint("skeleton contains a branch point; remove Y-junctions first")

    curves = []
    seeds_r, seeds_c = np.nonzero(black)
    for r0, c0 in zip(seeds_r.tolist(), seeds_c.tolist()):
        if not black[r0, c0]:
            continue
        black[r0, c0] = False
        nbrs = _remaining_neighbors(black, r0, c0)
        if len(nbrs) == 1:
            points = [(r0, c0)] + _walk(black, *nbrs[0])
        elif len(nbrs) == 2:
            first = _walk(black, *nbrs[0])
            # the far end of a cycle may already be consumed by the first walk
            second = _walk(black, *nbrs[1]) if black[nbrs[1]] else []
            points = first[::-1] + [(r0, c0)] + second
        else:
            points = [(r0, c0)]
        curves.append(np.array(points, dtype=np.int32))
    return curves


def segment_curves(curves: list[np.ndarray], n: int = 128) -> list[np.ndarray]:
    """Cut each curve into consecutive non-overlapping windows of n points.

    The trailing remainder is discarded; curves shorter than n contribute
    nothing.
    """
    if n < 2:
        raise ValueError("segment length must be >= 2")
    segments = []
    for curve in curves:
        full = len(curve) // n
        for i in range(full):
            segments.append(curve[i * n:(i + 1) * n])
    return segments


def sample_signal(original: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """Grayscale values of the original image along the segment, as float64."""
    original = as_gray(original)
    h, w = original.shape
    rows = seg[:, 0]
    cols = seg[:, 1]
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= h or cols.max() >= w:
        raise OutOfBounds("segment coordinate outside the image")
    return original[rows, cols].astype(np.float64)


def raw_ridge_feature(original: np.ndarray, segments: list[np.ndarray],
                      sigma: float = 2.0) -> np.ndarray:
    """Mean over segments of the DFT magnitude of the smoothed 1D signals.

    sigma <= 0 skips smoothing (useful for exact spectral checks). The
    result has the segment length; all entries are >= 0.
    """
    if not segments:
        raise NoRidges("no ridge segments; cannot form the raw ridge feature")
    n = len(segments[0])
    acc = np.zeros(n, dtype=np.float64)
    for seg in segments:
        sig = sample_signal(original, seg)
        if sigma > 0:
            sig = gaussian_smooth_1d(sig, sigma)
        acc += np.abs(np.fft.fft(sig))
    return acc / len(segments)
