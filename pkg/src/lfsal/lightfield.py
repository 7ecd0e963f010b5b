"""4D light-field data model and micro-lens array geometry.

A light field is a 5-D grid of radiance samples indexed (v, u, y, x, c):
(v, u) is the viewpoint on the angular grid, (y, x) the spatial location,
c the color channel. Fixing (u, v) yields a sub-aperture image; fixing
(x, y) yields a micro-lens image. Tiling every micro-lens image into one
big raster gives the micro-lens array the network consumes:

    array[y*A + v, x*A + u, c] == field[v, u, y, x, c]

with A the angular resolution. Intensities are [0, 1] reals for captured
data; synthetic index fields used in tests may carry arbitrary values, so
the range is an ingestion contract (see image_io), not a constructor check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigurationError, DataError


@dataclass(frozen=True)
class LightField4D:
    """5-D view grid (N_v, N_u, N_y, N_x, C) with a square angular grid."""

    views: np.ndarray

    def __post_init__(self):
        if self.views.ndim != 5:
            raise DataError(f"light field needs 5 axes (v,u,y,x,c), got {self.views.ndim}")
        if self.n_v != self.n_u:
            raise ConfigurationError(f"angular grid must be square, got {self.n_v}x{self.n_u}")

    @property
    def n_v(self) -> int:
        return self.views.shape[0]

    @property
    def n_u(self) -> int:
        return self.views.shape[1]

    @property
    def n_y(self) -> int:
        return self.views.shape[2]

    @property
    def n_x(self) -> int:
        return self.views.shape[3]

    @property
    def channels(self) -> int:
        return self.views.shape[4]

    @property
    def angular_res(self) -> int:
        return self.n_u

    def central_viewpoint(self) -> tuple[int, int]:
        """(u0, v0) = (floor(N_u/2), floor(N_v/2))."""
        return self.n_u // 2, self.n_v // 2


@dataclass(frozen=True)
class MicroLensArray:
    """Tiling of all micro-lens images: (N_y*A, N_x*A, C) pixels."""

    pixels: np.ndarray
    angular_res: int

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise DataError(f"array needs (H, W, C) pixels, got {self.pixels.ndim} axes")
        a = self.angular_res
        if a < 1:
            raise ConfigurationError(f"angular_res must be >= 1, got {a}")
        h, w, _ = self.pixels.shape
        if h % a:
            raise DataError(f"array height {h} not divisible by angular_res {a}")
        if w % a:
            raise DataError(f"array width {w} not divisible by angular_res {a}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def n_y(self) -> int:
        return self.height // self.angular_res

    @property
    def n_x(self) -> int:
        return self.width // self.angular_res

    def as_tensor(self) -> np.ndarray:
        """(C, H, W) view for the numerical core."""
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1))

    def central_view(self) -> np.ndarray:
        """Central sub-aperture image (N_y, N_x, C), picked at array stride A."""
        a = self.angular_res
        u0 = v0 = a // 2
        return np.ascontiguousarray(self.pixels[v0::a, u0::a])


@dataclass(frozen=True)
class SubApertureImage:
    image: np.ndarray               # (N_y, N_x, C)
    viewpoint: tuple[int, int]      # (u, v)


@dataclass(frozen=True)
class MicroLensImage:
    image: np.ndarray               # (N_v, N_u, C)
    location: tuple[int, int]       # (x, y)


# ------------------------------------------------------------ conversions

def assemble_microlens_array(lf: LightField4D) -> MicroLensArray:
    """Tile all micro-lens images: out[y*A+v, x*A+u, c] = lf[v, u, y, x, c]."""
    a = lf.angular_res
    tiled = lf.views.transpose(2, 0, 3, 1, 4).reshape(lf.n_y * a, lf.n_x * a, lf.channels)
    return MicroLensArray(np.ascontiguousarray(tiled), a)


def disassemble_microlens_array(arr: MicroLensArray | np.ndarray, a: int | None = None) -> LightField4D:
    """Exact inverse of assemble_microlens_array."""
    if isinstance(arr, MicroLensArray):
        pixels, a = arr.pixels, arr.angular_res
    else:
        pixels = arr
        if a is None:
            raise ConfigurationError("angular resolution required for a raw pixel array")
        h, w = pixels.shape[:2]
        if h % a:
            raise DataError(f"height {h} not divisible by angular resolution {a}")
        if w % a:
            raise DataError(f"width {w} not divisible by angular resolution {a}")
    h, w, c = pixels.shape
    views = pixels.reshape(h // a, a, w // a, a, c).transpose(1, 3, 0, 2, 4)
    return LightField4D(np.ascontiguousarray(views))


def extract_subaperture(lf: LightField4D, u: int, v: int) -> SubApertureImage:
    """Image seen from viewpoint (u, v)."""
    if not (0 <= u < lf.n_u and 0 <= v < lf.n_v):
        raise BoundsError(f"viewpoint ({u}, {v}) outside {lf.n_u}x{lf.n_v} grid")
    return SubApertureImage(lf.views[v, u].copy(), (u, v))


def extract_microlens(lf: LightField4D, x: int, y: int) -> MicroLensImage:
    """All viewpoints of spatial location (x, y)."""
    if not (0 <= x < lf.n_x and 0 <= y < lf.n_y):
        raise BoundsError(f"location ({x}, {y}) outside {lf.n_x}x{lf.n_y} grid")
    return MicroLensImage(lf.views[:, :, y, x, :].copy(), (x, y))


def sample_viewpoints(lf: LightField4D, a_target: int) -> LightField4D:
    """Keep the centered a_target x a_target angular block.

    The offset is floor((N_u - a_target)/2) on both axes (so 14x14 -> 9x9
    keeps indices 2..10). When parities match, the central view is
    preserved exactly.
    """
    if a_target < 1:
        raise ConfigurationError(f"target angular resolution must be >= 1, got {a_target}")
    if a_target > lf.n_u:
        raise ConfigurationError(f"cannot sample {a_target}x{a_target} from {lf.n_u}x{lf.n_u}")
    o = (lf.n_u - a_target) // 2
    return LightField4D(lf.views[o:o + a_target, o:o + a_target].copy())


def pad_angular(lf: LightField4D, a_target: int, fill: SubApertureImage | np.ndarray) -> LightField4D:
    """Grow the angular grid to a_target, centering the original views.

    Added border views are all equal to `fill` (the all-focus image when a
    dataset provides one, otherwise the central view).
    """
    if a_target < lf.n_u:
        raise ConfigurationError(f"cannot pad {lf.n_u}x{lf.n_u} down to {a_target}x{a_target}")
    img = fill.image if isinstance(fill, SubApertureImage) else np.asarray(fill)
    if img.shape != (lf.n_y, lf.n_x, lf.channels):
        raise DataError(
            f"fill image {img.shape} does not match views ({lf.n_y}, {lf.n_x}, {lf.channels})")
    views = np.broadcast_to(
        img, (a_target, a_target, lf.n_y, lf.n_x, lf.channels)).copy()
    o = (a_target - lf.n_u) // 2
    views[o:o + lf.n_v, o:o + lf.n_u] = lf.views
    return LightField4D(views)


# ----------------------------------------------- whole-field geometric ops

def rotate_lightfield(lf: LightField4D, k_quarter_turns: int) -> LightField4D:
    """Rotate spatial and angular grids together by k*90 degrees CCW.

    Equivalent to rotating the assembled micro-lens array pixel-wise.
    """
    k = k_quarter_turns % 4
    views = np.rot90(lf.views, k, axes=(2, 3))
    views = np.rot90(views, k, axes=(0, 1))
    return LightField4D(np.ascontiguousarray(views))


def flip_lightfield(lf: LightField4D, axis: str) -> LightField4D:
    """Flip spatial and angular grids together; axis is 'horizontal' or 'vertical'."""
    if axis == "horizontal":
        views = np.flip(np.flip(lf.views, axis=3), axis=1)
    elif axis == "vertical":
        views = np.flip(np.flip(lf.views, axis=2), axis=0)
    else:
        raise ConfigurationError(f"unknown flip axis {axis!r}")
    return LightField4D(np.ascontiguousarray(views))
