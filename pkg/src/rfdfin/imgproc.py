"""Core grayscale raster type and elementary filters.

A gray image is a 2D uint8 array, shape (height, width), where 0 is
black (ridge) and 255 is white (background). Float intermediates are 2D
float64 arrays of the same layout.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import EmptySignal


def as_gray(img) -> np.ndarray:
    """Validate and return an image as a 2D uint8 array."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected 2D gray image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if a.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {a.dtype}")
    return a


def to_float(img: np.ndarray) -> np.ndarray:
    return as_gray(img).astype(np.float64)


def to_u8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255], round half away from zero is not needed; np.rint suffices."""
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def median_filter(img: np.ndarray, radius: int = 1) -> np.ndarray:
    """Median filter with a (2*radius+1)^2 window and edge replication."""
    img = as_gray(img)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    size = 2 * radius + 1
    return ndimage.median_filter(img, size=size, mode="nearest")


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Gaussian taps truncated at +-3*sigma, renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    half = int(np.floor(3.0 * sigma))
    k = np.arange(-half, half + 1, dtype=np.float64)
    kern = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def gaussian_smooth_1d(signal, sigma: float) -> np.ndarray:
    """Smooth a 1D signal with a truncated Gaussian; edges replicate."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1D signal")
    if x.size == 0:
        raise EmptySignal("cannot smooth an empty signal")
    kern = gaussian_kernel_1d(sigma)
    half = kern.size // 2
    if half == 0:
        return x.copy()
    padded = np.pad(x, half, mode="edge")
    return np.convolve(padded, kern, mode="valid")


def threshold_binarize(img: np.ndarray, threshold: int = 100) -> np.ndarray:
    """Pixels strictly below the threshold become 0 (ridge), the rest 255."""
    img = as_gray(img)
    out = np.where(img < threshold, 0, 255).astype(np.uint8)
    return out


def center_crop_or_pad(img: np.ndarray, out_w: int, out_h: int, fill: int = 255) -> np.ndarray:
    """Center-copy the overlap; pad uncovered regions with `fill`.

    Crop offsets are floor((in-out)/2); pad offsets floor((out-in)/2).
    """
    img = as_gray(img)
    if out_w < 1 or out_h < 1:
        raise ValueError("output dims must be >= 1")
    in_h, in_w = img.shape
    out = np.full((out_h, out_w), np.uint8(fill), dtype=np.uint8)

    copy_h = min(in_h, out_h)
    copy_w = min(in_w, out_w)
    src_r = (in_h - copy_h) // 2
    src_c = (in_w - copy_w) // 2
    dst_r = (out_h - copy_h) // 2
    dst_c = (out_w - copy_w) // 2
    out[dst_r:dst_r + copy_h, dst_c:dst_c + copy_w] = \
        img[src_r:src_r + copy_h, src_c:src_c + copy_w]
    return out


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return as_gray(img)[:, ::-1].copy()


# ---------------------------------------------------------------------------
# Image I/O: 8-bit grayscale PGM (P5) plus PNG/JPEG via Pillow.
# ---------------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval <= 255."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a P5 PGM")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raster.reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    img = as_gray(img)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Integer ITU-R 601 luma: (299*R + 587*G + 114*B) // 1000."""
    r = rgb[..., 0].astype(np.uint32)
    g = rgb[..., 1].astype(np.uint32)
    b = rgb[..., 2].astype(np.uint32)
    return ((299 * r + 587 * g + 114 * b) // 1000).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read PGM/PNG/JPEG as 8-bit gray; color inputs converted by integer luma."""
    p = str(path)
    if p.lower().endswith(".pgm"):
        return read_pgm(p)
    from PIL import Image

    with Image.open(p) as im:
        if im.mode in ("L",):
            return np.asarray(im, dtype=np.uint8).copy()
        if im.mode in ("I;16", "I"):
            a = np.asarray(im)
            return (a >> 8).astype(np.uint8) if a.max() > 255 else a.astype(np.uint8)
        rgb = np.asarray(im.convert("RGB"))
        return rgb_to_luma(rgb)


def write_image(path, img: np.ndarray) -> None:
    p = str(path)
    if p.lower().endswith(".pgm"):
        write_pgm(p, img)
        return
    from PIL import Image

    Image.fromarray(as_gray(img), mode="L").save(p)
