"""Screenshot processing: blank-band slimming, segmentation, resize policies.

Blank regions are detected from per-row mean Sobel gradient magnitude; bands
of consecutive low-gradient rows are removed iteratively until a fixpoint.
All transformations are pure: they decode, operate on arrays, and re-encode
PNG, never touching the input asset.
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image
from scipy.ndimage import convolve

from .errors import SearchPipeError
from .model import ImageAsset, ImageKind, ResizeMode

_SOBEL_X = np.array([[-1, 0, 1],
                     [-2, 0, 2],
                     [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T

GradientProfile = np.ndarray  # shape (height,), values in [0, 255]


class DecodeError(SearchPipeError):
    """The image payload could not be decoded."""


def _decode_gray(asset: ImageAsset) -> np.ndarray:
    try:
        with asset.open() as im:
            return np.asarray(im.convert("L"), dtype=np.float64)
    except Exception as exc:  # Pillow raises various types on bad payloads
        raise DecodeError(f"cannot decode image {asset.id!r}: {exc}") from exc


def _decode_rgb(asset: ImageAsset) -> np.ndarray:
    try:
        with asset.open() as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise DecodeError(f"cannot decode image {asset.id!r}: {exc}") from exc


def _encode_png(pixels: np.ndarray, kind: ImageKind) -> ImageAsset:
    im = Image.fromarray(pixels.astype(np.uint8))
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return ImageAsset.from_bytes(buf.getvalue(), kind)


def _row_profile(gray: np.ndarray) -> np.ndarray:
    gx = convolve(gray, _SOBEL_X, mode="reflect")
    gy = convolve(gray, _SOBEL_Y, mode="reflect")
    magnitude = np.minimum(np.hypot(gx, gy), 255.0)
    return magnitude.mean(axis=1)


def gradient_magnitude(image: ImageAsset) -> GradientProfile:
    """Per-row mean of the 3x3 Sobel gradient magnitude (grayscale input)."""
    return _row_profile(_decode_gray(image))


def _blank_bands(profile: np.ndarray, threshold: float,
                 min_band: int) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of sub-threshold rows at least min_band tall."""
    bands = []
    start = None
    for i, value in enumerate(profile):
        if value < threshold:
            if start is None:
                start = i
        elif start is not None:
            if i - start >= min_band:
                bands.append((start, i))
            start = None
    if start is not None and len(profile) - start >= min_band:
        bands.append((start, len(profile)))
    return bands


def slim_rows(image: ImageAsset, threshold: float,
              min_band: int) -> tuple[ImageAsset, np.ndarray]:
    """Slim an image and also report which original rows survived.

    Blank bands (every row's mean gradient below ``threshold``, at least
    ``min_band`` rows tall) are dropped and the profile recomputed, repeating
    until no removable band remains. A fully blank image keeps its first
    ``min_band`` rows so downstream consumers always get a nonempty image.
    """
    rgb = _decode_rgb(image)
    gray = _decode_gray(image)
    kept = np.arange(rgb.shape[0])

    while True:
        profile = _row_profile(gray)
        bands = _blank_bands(profile, threshold, min_band)
        if not bands:
            break
        remove = np.zeros(len(profile), dtype=bool)
        for start, stop in bands:
            remove[start:stop] = True
        if remove.all():
            stub = min(min_band, rgb.shape[0])
            rgb, kept = rgb[:stub], kept[:stub]
            break
        rgb, gray, kept = rgb[~remove], gray[~remove], kept[~remove]

    return _encode_png(rgb, image.kind), kept


def slim_screenshot(image: ImageAsset, threshold: float = 5.0,
                    min_band: int = 16) -> ImageAsset:
    """Remove blank row bands; see ``slim_rows`` for the exact semantics."""
    slimmed, _ = slim_rows(image, threshold, min_band)
    return slimmed


def segment_fullpage(image: ImageAsset, segment_height: int,
                     max_segments: int) -> list[ImageAsset]:
    """Slice top-down into segments of ``segment_height``; drop the excess.

    The last kept segment may be shorter; content below
    ``segment_height * max_segments`` is discarded.
    """
    rgb = _decode_rgb(image)
    height = rgb.shape[0]
    count = min(math.ceil(height / segment_height), max_segments)
    segments = []
    for i in range(count):
        top = i * segment_height
        segments.append(_encode_png(rgb[top:top + segment_height],
                                    ImageKind.FULLPAGE_SEGMENT))
    return segments


def resize_for_model(image: ImageAsset, mode: ResizeMode,
                     model_max_edge: int) -> ImageAsset:
    """low_res: scale so the longest edge equals the model's maximum
    (upscaling included); any_res: pass through untouched."""
    if mode is ResizeMode.ANY_RES:
        return image
    longest = max(image.width, image.height)
    if longest == model_max_edge:
        return image
    scale = model_max_edge / longest
    new_w = max(1, round(image.width * scale))
    new_h = max(1, round(image.height * scale))
    with image.open() as im:
        resized = im.convert("RGB").resize((new_w, new_h), Image.LANCZOS)
    buf = io.BytesIO()
    resized.save(buf, format="PNG")
    return ImageAsset.from_bytes(buf.getvalue(), image.kind)
