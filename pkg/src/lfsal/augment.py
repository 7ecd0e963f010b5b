"""Training-time augmentation of micro-lens arrays with synchronized masks.

Geometric transforms act pixel-wise on the whole array, which is the same
as transforming the spatial and angular grids of the underlying light
field together, so every variant of an array is still a valid micro-lens
array. Crops snap to the A-grid so micro-lens blocks are never split.
Photometric adjustments and additive noise touch only the pixels, never
the mask.

The default recipe expands each sample 48-fold: every rotation crossed
with {identity, brightness x1.5, brightness x0.6, chroma&contrast x1.7},
flips and two random crops each crossed with {identity, brightness x1.5},
and the whole set doubled with additive Gaussian noise. Variants are pure
functions of (seed, sample index, variant index), so any subset can be
materialized in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigurationError, DataError
from .lightfield import MicroLensArray
from .tensor import RngStream, Stream

ROTATIONS = (0, 90, 180, 270)
FLIPS = ("horizontal", "vertical")


@dataclass(frozen=True)
class Sample:
    """A micro-lens array plus its binary mask at central-view resolution."""

    array: MicroLensArray
    mask: np.ndarray

    def __post_init__(self):
        a = self.array.angular_res
        expect = (self.array.height // a, self.array.width // a)
        if self.mask.shape != expect:
            raise DataError(f"mask {self.mask.shape} does not match spatial grid {expect}")
        if not np.isin(self.mask, (0, 1)).all():
            raise DataError("mask values must be 0 or 1")


@dataclass(frozen=True)
class AugmentationSpec:
    rotations: tuple = ROTATIONS
    flips: tuple = FLIPS
    crop_size: tuple | None = None          # (w, h) in array pixels, multiples of A
    crop_count: int = 2
    brightness_factors: tuple = (1.5, 0.6)
    chroma_contrast_factor: float | None = 1.7
    noise_variance: float = 0.01            # on [0,1] intensities
    expected_count: int = 48

    @classmethod
    def default_for(cls, width: int, height: int, a: int) -> "AugmentationSpec":
        """Default spec with crop sizes scaled to the array geometry.

        The crop fractions reproduce the 3519x2907 crops of the reference
        4860x3375 geometry and stay A-aligned everywhere else.
        """
        cw = max(round(0.724 * (width // a)), 1) * a
        ch = max(round(0.861 * (height // a)), 1) * a
        return cls(crop_size=(cw, ch))

    def validate(self, a: int) -> None:
        for k in self.rotations:
            if k not in ROTATIONS:
                raise ConfigurationError(f"unsupported rotation {k}")
        for f in self.flips:
            if f not in FLIPS:
                raise ConfigurationError(f"unsupported flip {f!r}")
        if self.crop_count and self.crop_size is None:
            raise ConfigurationError("crop_count > 0 requires crop_size")
        if self.crop_size is not None:
            cw, ch = self.crop_size
            if cw % a or ch % a:
                raise AlignmentError(f"crop size {self.crop_size} not a multiple of A={a}")
        if self.noise_variance < 0:
            raise ConfigurationError("noise variance must be >= 0")


# ------------------------------------------------------------- transforms

def rotate_sample(s: Sample, k_degrees: int) -> Sample:
    """Rotate array and mask by a multiple of 90 degrees (CCW)."""
    if k_degrees % 90 or k_degrees % 360 not in (0, 90, 180, 270):
        raise ConfigurationError(f"rotation must be a multiple of 90, got {k_degrees}")
    k = (k_degrees // 90) % 4
    arr = MicroLensArray(np.ascontiguousarray(np.rot90(s.array.pixels, k)), s.array.angular_res)
    return Sample(arr, np.ascontiguousarray(np.rot90(s.mask, k)))


def flip_sample(s: Sample, axis: str) -> Sample:
    """Mirror array and mask horizontally or vertically."""
    if axis == "horizontal":
        pix, mask = s.array.pixels[:, ::-1], s.mask[:, ::-1]
    elif axis == "vertical":
        pix, mask = s.array.pixels[::-1], s.mask[::-1]
    else:
        raise ConfigurationError(f"unknown flip axis {axis!r}")
    arr = MicroLensArray(np.ascontiguousarray(pix), s.array.angular_res)
    return Sample(arr, np.ascontiguousarray(mask))


def crop_sample(s: Sample, origin: tuple[int, int], size: tuple[int, int]) -> Sample:
    """A-grid aligned crop; origin (x0, y0) and size (w, h) in array pixels."""
    a = s.array.angular_res
    x0, y0 = origin
    w, h = size
    for name, value in (("x0", x0), ("y0", y0), ("width", w), ("height", h)):
        if value % a:
            raise AlignmentError(f"crop {name}={value} not a multiple of A={a}")
    if x0 < 0 or y0 < 0 or x0 + w > s.array.width or y0 + h > s.array.height:
        raise DataError(f"crop {origin}+{size} outside {s.array.width}x{s.array.height}")
    pix = s.array.pixels[y0:y0 + h, x0:x0 + w]
    mask = s.mask[y0 // a:(y0 + h) // a, x0 // a:(x0 + w) // a]
    return Sample(MicroLensArray(np.ascontiguousarray(pix), a), np.ascontiguousarray(mask))


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    h = np.where(maxc == r, (g - b) / safe,
                 np.where(maxc == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe))
    h = np.where(delta == 0, 0.0, (h / 6.0) % 1.0)
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    r = np.select([i == n for n in range(6)], [c[0] for c in choices])
    g = np.select([i == n for n in range(6)], [c[1] for c in choices])
    b = np.select([i == n for n in range(6)], [c[2] for c in choices])
    return np.stack([r, g, b], axis=-1)


def photometric(s: Sample, brightness: float = 1.0, chroma: float = 1.0,
                contrast: float = 1.0) -> Sample:
    """Brightness, chroma (HSV saturation), and contrast scaling; mask untouched.

    Applied in that order; each stage clamps back to [0, 1]. Contrast scales
    around the per-channel image mean.
    """
    if brightness <= 0 or chroma <= 0 or contrast <= 0:
        raise ConfigurationError("photometric factors must be positive")
    pix = np.asarray(s.array.pixels)
    if brightness != 1.0:
        pix = np.clip(pix * brightness, 0.0, 1.0)
    if chroma != 1.0:
        if pix.shape[-1] != 3:
            raise DataError("chroma adjustment needs 3-channel RGB data")
        hsv = _rgb_to_hsv(pix)
        hsv[..., 1] = np.clip(hsv[..., 1] * chroma, 0.0, 1.0)
        pix = np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)
    if contrast != 1.0:
        mean = pix.mean(axis=(0, 1), keepdims=True)
        pix = np.clip((pix - mean) * contrast + mean, 0.0, 1.0)
    pix = np.ascontiguousarray(pix, dtype=s.array.pixels.dtype)
    return Sample(MicroLensArray(pix, s.array.angular_res), s.mask)


def add_noise(s: Sample, variance: float, gen: np.random.Generator) -> Sample:
    """Additive zero-mean Gaussian noise on [0,1] intensities, clamped; mask untouched."""
    if variance < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {variance}")
    if variance == 0:
        return s
    noise = gen.standard_normal(s.array.pixels.shape) * np.sqrt(variance)
    pix = np.clip(s.array.pixels + noise, 0.0, 1.0).astype(s.array.pixels.dtype)
    return Sample(MicroLensArray(np.ascontiguousarray(pix), s.array.angular_res), s.mask)


# ------------------------------------------------------------ enumeration

@dataclass(frozen=True)
class VariantRecipe:
    """Pure description of one augmentation variant."""

    geometric: tuple | None      # ("rot", k) | ("flip", axis) | ("crop", slot)
    photo: tuple | None          # ("bright", f) | ("cc", f)
    noisy: bool


def variant_recipes(spec: AugmentationSpec) -> list[VariantRecipe]:
    """Deterministic variant list; length must equal spec.expected_count."""
    rot_photos = [None] + [("bright", f) for f in spec.brightness_factors]
    if spec.chroma_contrast_factor is not None:
        rot_photos.append(("cc", spec.chroma_contrast_factor))
    aux_photos = [None]
    if spec.brightness_factors:
        aux_photos.append(("bright", spec.brightness_factors[0]))

    base: list[VariantRecipe] = []
    for k in spec.rotations:
        for photo in rot_photos:
            base.append(VariantRecipe(("rot", k), photo, False))
    for axis in spec.flips:
        for photo in aux_photos:
            base.append(VariantRecipe(("flip", axis), photo, False))
    for slot in range(spec.crop_count):
        for photo in aux_photos:
            base.append(VariantRecipe(("crop", slot), photo, False))

    recipes = list(base)
    if spec.noise_variance > 0:
        recipes += [VariantRecipe(r.geometric, r.photo, True) for r in base]
    if len(recipes) != spec.expected_count:
        raise ConfigurationError(
            f"spec enumerates {len(recipes)} variants, expected_count says {spec.expected_count}")
    return recipes


def _crop_origin(s: Sample, spec: AugmentationSpec, seed: int,
                 sample_index: int, slot: int) -> tuple[int, int]:
    """Random A-aligned crop origin, keyed by (seed, sample, slot)."""
    a = s.array.angular_res
    cw, ch = spec.crop_size
    gen = RngStream(seed, Stream.CROP).generator(sample_index, slot)
    max_x = (s.array.width - cw) // a
    max_y = (s.array.height - ch) // a
    return int(gen.integers(0, max_x + 1)) * a, int(gen.integers(0, max_y + 1)) * a


def apply_recipe(s: Sample, recipe: VariantRecipe, spec: AugmentationSpec,
                 seed: int, sample_index: int, variant_index: int) -> Sample:
    out = s
    if recipe.geometric is not None:
        op, arg = recipe.geometric
        if op == "rot":
            out = rotate_sample(out, arg)
        elif op == "flip":
            out = flip_sample(out, arg)
        elif op == "crop":
            origin = _crop_origin(s, spec, seed, sample_index, arg)
            out = crop_sample(out, origin, spec.crop_size)
    if recipe.photo is not None:
        op, f = recipe.photo
        if op == "bright":
            out = photometric(out, brightness=f)
        else:
            out = photometric(out, chroma=f, contrast=f)
    if recipe.noisy:
        gen = RngStream(seed, Stream.NOISE).generator(sample_index, variant_index)
        out = add_noise(out, spec.noise_variance, gen)
    return out


def enumerate_variants(s: Sample, spec: AugmentationSpec, seed: int,
                       sample_index: int = 0) -> list[Sample]:
    """All variants of one sample, in the fixed recipe order."""
    spec.validate(s.array.angular_res)
    recipes = variant_recipes(spec)
    return [apply_recipe(s, r, spec, seed, sample_index, i) for i, r in enumerate(recipes)]


class AugmentedDataset:
    """Virtual dataset of size n_samples * n_variants, computed on the fly.

    loader(i) must return the i-th base Sample; results are cached because
    the training loop revisits samples constantly.
    """

    def __init__(self, loader, n_samples: int, spec: AugmentationSpec, seed: int):
        self._loader = loader
        self._n = n_samples
        self._spec = spec
        self._seed = seed
        self._recipes = variant_recipes(spec)
        self._cache: dict[int, Sample] = {}

    def __len__(self) -> int:
        return self._n * len(self._recipes)

    def base_sample(self, sample_index: int) -> Sample:
        if sample_index not in self._cache:
            self._cache[sample_index] = self._loader(sample_index)
        return self._cache[sample_index]

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < len(self):
            raise IndexError(index)
        sample_index, variant_index = divmod(index, len(self._recipes))
        base = self.base_sample(sample_index)
        self._spec.validate(base.array.angular_res)
        return apply_recipe(base, self._recipes[variant_index], self._spec,
                            self._seed, sample_index, variant_index)
