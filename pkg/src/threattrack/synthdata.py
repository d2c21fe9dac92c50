"""Post-processing for engine-rendered frames: sensor effects, mask recoloring, boxes.

Two pixel representations are used. Photographic operations work on float RGB
arrays of shape (H, W, 3) with channel values in [0, 1], clamped after every
stage; these decode from and re-encode to 8-bit PNG with round-half-away-from-
zero quantization so an untouched image survives the round trip bit-exactly.
Mask operations (recoloring, box extraction) work on exact uint8 colors and
never resample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d, map_coordinates

from .geometry import BBox


class MaskClass(str, Enum):
    SHOOTER = "Shooter"
    GUN = "Gun"
    CIVILIAN = "Civilian"
    BACKGROUND = "Background"


DETECTION_CLASSES = (MaskClass.SHOOTER, MaskClass.GUN)

Color = tuple[int, int, int]


@dataclass(frozen=True)
class ColorMapEntry:
    color: Color
    mask_class: MaskClass
    object_id: int


class ColorMap:
    """Injective mapping from exact mask colors to object identity and class."""

    def __init__(self, entries: list[ColorMapEntry]):
        self.entries = list(entries)
        seen_colors: set[Color] = set()
        seen_ids: set[int] = set()
        for e in self.entries:
            if e.color in seen_colors:
                raise ValueError(f"duplicate color in map: {e.color}")
            if e.object_id in seen_ids:
                raise ValueError(f"duplicate object id in map: {e.object_id}")
            seen_colors.add(e.color)
            seen_ids.add(e.object_id)

    def by_color(self) -> dict[Color, ColorMapEntry]:
        return {e.color: e for e in self.entries}

    def background_color(self) -> Color | None:
        for e in self.entries:
            if e.mask_class == MaskClass.BACKGROUND:
                return e.color
        return None


@dataclass
class AugmentProfile:
    """Sampling ranges for the sensor-effect parameters."""

    apply_prob: float = 0.5
    noise_sigma_max: float = 0.05
    blur_sigma_max: float = 3.0
    ca_scale_min: float = 0.998
    ca_scale_max: float = 1.002
    ca_shift_max: float = 2.0  # px, applied oppositely to R and B
    exposure_stops_max: float = 1.0  # symmetric: stops in [-max, +max]
    color_shift_max: float = 0.05  # per channel, symmetric


@dataclass
class SensorEffectParams:
    apply_ca: bool = False
    ca_scale: float = 1.0
    ca_shift: float = 0.0
    apply_blur: bool = False
    blur_sigma: float = 0.0
    apply_exposure: bool = False
    exposure_stops: float = 0.0
    apply_noise: bool = False
    noise_sigma: float = 0.0
    noise_seed: int = 0
    apply_color_shift: bool = False
    color_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def disabled(cls) -> "SensorEffectParams":
        return cls()


def sample_effect_params(
    rng: np.random.Generator, profile: AugmentProfile | None = None
) -> SensorEffectParams:
    """Draw one effect configuration: each effect fires independently with
    probability `apply_prob`, strengths uniform over the profile ranges."""
    prof = profile or AugmentProfile()
    params = SensorEffectParams(noise_seed=int(rng.integers(0, 2**31 - 1)))
    if rng.random() < prof.apply_prob:
        params = replace(
            params,
            apply_ca=True,
            ca_scale=float(rng.uniform(prof.ca_scale_min, prof.ca_scale_max)),
            ca_shift=float(rng.uniform(-prof.ca_shift_max, prof.ca_shift_max)),
        )
    if rng.random() < prof.apply_prob:
        params = replace(params, apply_blur=True, blur_sigma=float(rng.uniform(0.0, prof.blur_sigma_max)))
    if rng.random() < prof.apply_prob:
        params = replace(
            params,
            apply_exposure=True,
            exposure_stops=float(rng.uniform(-prof.exposure_stops_max, prof.exposure_stops_max)),
        )
    if rng.random() < prof.apply_prob:
        params = replace(params, apply_noise=True, noise_sigma=float(rng.uniform(0.0, prof.noise_sigma_max)))
    if rng.random() < prof.apply_prob:
        shift = tuple(float(v) for v in rng.uniform(-prof.color_shift_max, prof.color_shift_max, 3))
        params = replace(params, apply_color_shift=True, color_shift=shift)
    return params


def _resample_channel(channel: np.ndarray, scale: float, shift: float) -> np.ndarray:
    """Bilinear resample of one channel scaled about the image center and shifted."""
    h, w = channel.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    src_y = cy + (ys - cy - shift) / scale
    src_x = cx + (xs - cx - shift) / scale
    return map_coordinates(channel, [src_y, src_x], order=1, mode="nearest")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    ks = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-(ks**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def apply_sensor_effects(img: np.ndarray, params: SensorEffectParams) -> np.ndarray:
    """Chromatic aberration -> blur -> exposure -> noise -> color shift, in that order.

    Disabled effects are identities; values are clamped to [0, 1] after every
    stage. Dimensions never change.
    """
    out = np.asarray(img, dtype=float).copy()
    if out.ndim != 3 or out.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {out.shape}")

    if params.apply_ca:
        # Red pushed outward, blue pulled the opposite way.
        out[:, :, 0] = _resample_channel(out[:, :, 0], params.ca_scale, params.ca_shift)
        out[:, :, 2] = _resample_channel(out[:, :, 2], 1.0 / params.ca_scale, -params.ca_shift)
        out = np.clip(out, 0.0, 1.0)

    if params.apply_blur and params.blur_sigma > 0.0:
        kernel = _gaussian_kernel(params.blur_sigma)
        out = convolve1d(out, kernel, axis=0, mode="nearest")
        out = convolve1d(out, kernel, axis=1, mode="nearest")
        out = np.clip(out, 0.0, 1.0)

    if params.apply_exposure:
        out = np.clip(out * 2.0**params.exposure_stops, 0.0, 1.0)

    if params.apply_noise and params.noise_sigma > 0.0:
        rng = np.random.default_rng(params.noise_seed)
        out = np.clip(out + rng.normal(0.0, params.noise_sigma, out.shape), 0.0, 1.0)

    if params.apply_color_shift:
        out = np.clip(out + np.asarray(params.color_shift)[None, None, :], 0.0, 1.0)

    return out


def quantize(img: np.ndarray) -> np.ndarray:
    """Float [0,1] image to uint8, rounding half away from zero."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """PNG to float RGB in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=float) / 255.0


def save_image(path, img: np.ndarray) -> None:
    Image.fromarray(quantize(img), mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """PNG to exact uint8 RGB; no value scaling."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def distinct_colors(mask: np.ndarray) -> list[tuple[Color, int]]:
    """(color, pixel count) pairs, sorted by color for deterministic iteration."""
    flat = mask.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    return [
        ((int(c[0]), int(c[1]), int(c[2])), int(n)) for c, n in zip(colors, counts)
    ]


def recolor_mask(
    mask: np.ndarray,
    rng: np.random.Generator,
    color_map: ColorMap,
    keep_background: bool = True,
    min_pixels: int = 8,
) -> tuple[np.ndarray, ColorMap, list[Color]]:
    """Replace every distinct mask color with a fresh random one.

    Replacement colors are drawn uniformly over 24-bit RGB and re-drawn on
    collision so the recoloring stays injective. The background color (from
    the map) is preserved unless `keep_background` is False. Returns the
    recolored mask, the color map rewritten in terms of the new colors, and a
    warning list of colors occurring fewer than `min_pixels` times, which
    usually means the input was anti-aliased.
    """
    mask = np.asarray(mask, dtype=np.uint8)
    present = distinct_colors(mask)
    warnings = [color for color, count in present if count < min_pixels]
    background = color_map.background_color()

    assignment: dict[Color, Color] = {}
    used: set[Color] = set()
    if background is not None and keep_background:
        assignment[background] = background
        used.add(background)
    for color, _ in present:
        if color in assignment:
            continue
        while True:
            candidate = tuple(int(v) for v in rng.integers(0, 256, 3))
            if candidate not in used:
                break
        assignment[color] = candidate
        used.add(candidate)

    out = mask.copy()
    for old, new in assignment.items():
        hit = np.all(mask == np.asarray(old, dtype=np.uint8), axis=-1)
        out[hit] = np.asarray(new, dtype=np.uint8)

    translated = []
    for entry in color_map.entries:
        new_color = assignment.get(entry.color, entry.color)
        translated.append(ColorMapEntry(new_color, entry.mask_class, entry.object_id))
    return out, ColorMap(translated), warnings


def extract_boxes(
    mask: np.ndarray,
    color_map: ColorMap,
    min_side: float = 1.0,
    classes: tuple[MaskClass, ...] = DETECTION_CLASSES,
) -> list[tuple[MaskClass, BBox]]:
    """Tight boxes over exactly-matching pixels for each mapped target color.

    One box per color: disconnected same-color regions merge, which is correct
    because the renderer assigns one color per object. Boxes whose short side
    is under `min_side` are dropped; colors absent from the image yield
    nothing. Box extents are inclusive pixel counts (a single pixel is 1x1).
    """
    mask = np.asarray(mask, dtype=np.uint8)
    boxes: list[tuple[MaskClass, BBox]] = []
    for entry in sorted(color_map.entries, key=lambda e: e.object_id):
        if entry.mask_class not in classes:
            continue
        hit = np.all(mask == np.asarray(entry.color, dtype=np.uint8), axis=-1)
        rows = np.any(hit, axis=1)
        if not rows.any():
            continue
        cols = np.any(hit, axis=0)
        r0, r1 = int(np.argmax(rows)), int(len(rows) - 1 - np.argmax(rows[::-1]))
        c0, c1 = int(np.argmax(cols)), int(len(cols) - 1 - np.argmax(cols[::-1]))
        box = BBox(float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))
        if min(box.w, box.h) < min_side:
            continue
        boxes.append((entry.mask_class, box))
    return boxes


def rng_for_image(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, image index) so parallel order is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
