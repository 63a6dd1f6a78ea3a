"""
Tier-1 visual metrics.

Perceptual-hash similarity, mean local SSIM and pixel change ratio between
two screenshots. All functions are pure and safe to call from many threads.
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

import imagehash
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError

HASH_SIZE = 8

SSIM_WINDOW = 8
DYNAMIC_RANGE = 255.0
SSIM_C1 = (0.01 * DYNAMIC_RANGE) ** 2
SSIM_C2 = (0.03 * DYNAMIC_RANGE) ** 2

# A pixel counts as changed when any channel moves by more than this.
PIXEL_DELTA = 8


@dataclass(frozen=True)
class VisualMetrics:
    """The three Tier-1 similarity measures for one image pair."""
    phash_similarity: float
    ssim: float
    pixel_change_ratio: float

    def as_dict(self) -> dict:
        return {
            "phash_similarity": self.phash_similarity,
            "ssim": self.ssim,
            "pixel_change_ratio": self.pixel_change_ratio,
        }


@lru_cache(maxsize=512)
def _load_image(path: str, digest: str) -> Image.Image:
    # digest is part of the key so a rewritten file is decoded again
    try:
        with Image.open(path) as img:
            img.load()
            return img.convert("RGB")
    except (OSError, UnidentifiedImageError) as e:
        raise ImageDecodeError(f"Cannot decode image {path}: {e}") from e


def load_image(path: Path, digest: str = "") -> Image.Image:
    """Decode a PNG to RGB, memoized per (path, digest)."""
    return _load_image(str(path), digest)


@lru_cache(maxsize=1024)
def _cached_phash(path: str, digest: str) -> imagehash.ImageHash:
    return imagehash.phash(_load_image(path, digest), hash_size=HASH_SIZE)


def phash_for(path: Path, digest: str) -> imagehash.ImageHash:
    """Perceptual hash of an image on disk, memoized per digest."""
    return _cached_phash(str(path), digest)


def _check_area(img: Image.Image) -> None:
    if img.width == 0 or img.height == 0:
        raise ImageDecodeError("Image has zero area")


def _match_size(b: Image.Image, a: Image.Image) -> Image.Image:
    """Resize ``b`` to ``a``'s dimensions (bilinear) when they differ."""
    if b.size == a.size:
        return b
    return b.resize(a.size, Image.BILINEAR)


def hash_similarity(ha: imagehash.ImageHash, hb: imagehash.ImageHash) -> float:
    """1 minus the normalized Hamming distance between two hashes."""
    return 1.0 - (ha - hb) / float(ha.hash.size)


def compute_phash_similarity(a: Image.Image, b: Image.Image) -> float:
    """
    Perceptual-hash similarity of two images.

    Uses the 64-bit DCT hash; the hash is size-invariant so no resize happens.

    Returns:
        Value in [0, 1], 1.0 when the hashes are identical
    """
    _check_area(a)
    _check_area(b)
    return hash_similarity(imagehash.phash(a, hash_size=HASH_SIZE),
                           imagehash.phash(b, hash_size=HASH_SIZE))


def _grayscale(img: Image.Image) -> np.ndarray:
    return np.asarray(img.convert("L"), dtype=np.float64)


def _box_mean(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Mean over every kh x kw window (valid positions only), via an integral image."""
    c = np.pad(x, ((1, 0), (1, 0))).cumsum(axis=0).cumsum(axis=1)
    s = c[kh:, kw:] - c[:-kh, kw:] - c[kh:, :-kw] + c[:-kh, :-kw]
    return s / float(kh * kw)


def _ssim_gray(ga: np.ndarray, gb: np.ndarray) -> float:
    h, w = ga.shape
    kh, kw = min(SSIM_WINDOW, h), min(SSIM_WINDOW, w)

    mu_a = _box_mean(ga, kh, kw)
    mu_b = _box_mean(gb, kh, kw)

    # second moments on centred data; covariance is shift-invariant
    ca = ga - ga.mean()
    cb = gb - gb.mean()
    ma = _box_mean(ca, kh, kw)
    mb = _box_mean(cb, kh, kw)
    var_a = _box_mean(ca * ca, kh, kw) - ma * ma
    var_b = _box_mean(cb * cb, kh, kw) - mb * mb
    cov = _box_mean(ca * cb, kh, kw) - ma * mb

    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.clip(np.mean(num / den), -1.0, 1.0))


def compute_ssim(a: Image.Image, b: Image.Image) -> float:
    """
    Mean structural similarity over sliding 8x8 windows of the grayscale images.

    ``b`` is resized to ``a``'s dimensions first. Images smaller than the
    window use a window clipped to the image.

    Returns:
        Value in [-1, 1], exactly 1.0 for identical images
    """
    _check_area(a)
    _check_area(b)
    return _ssim_gray(_grayscale(a), _grayscale(_match_size(b, a)))


def _changed_mask(a: Image.Image, b: Image.Image) -> np.ndarray:
    ra = np.asarray(a.convert("RGB"), dtype=np.int16)
    rb = np.asarray(_match_size(b, a).convert("RGB"), dtype=np.int16)
    return np.abs(ra - rb).max(axis=2) > PIXEL_DELTA


def compute_pixel_change_ratio(a: Image.Image, b: Image.Image) -> float:
    """
    Fraction of pixels whose largest per-channel difference exceeds 8 of 255.

    Returns:
        Value in [0, 1]
    """
    _check_area(a)
    _check_area(b)
    return float(np.mean(_changed_mask(a, b)))


def compute_visual_metrics(a: Image.Image, b: Image.Image,
                           hashes: Optional[Tuple[imagehash.ImageHash, imagehash.ImageHash]] = None
                           ) -> VisualMetrics:
    """Compute all three Tier-1 metrics, reusing precomputed hashes when given."""
    _check_area(a)
    _check_area(b)
    if hashes is None:
        phash_sim = compute_phash_similarity(a, b)
    else:
        phash_sim = hash_similarity(*hashes)
    b_sized = _match_size(b, a)
    return VisualMetrics(
        phash_similarity=phash_sim,
        ssim=_ssim_gray(_grayscale(a), _grayscale(b_sized)),
        pixel_change_ratio=float(np.mean(_changed_mask(a, b_sized))),
    )
