"""Deterministic synthetic light fields for tests, experiments, and demos.

Three generators:

  * indexed_lightfield: values encode their own (u, v, x, y) index, which
    makes geometric identities checkable by eye and by exact equality.
  * textured_scene: a visibly textured foreground rectangle over a
    different background, plus integer per-view parallax; learnable from
    appearance alone.
  * parallax_scene: foreground and background sample the *same* texture,
    so the central view shows no boundary at all; only the inter-view
    parallax of the foreground region carries signal.

Run `python -m lfsal.synthetic OUTDIR` to materialize a small on-disk toy
dataset (per-sample view grids plus masks) for the CLI pipeline.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .lightfield import LightField4D
from .tensor import get_default_dtype


def indexed_lightfield(a: int = 2, n_y: int = 2, n_x: int = 2, channels: int = 1) -> LightField4D:
    """lf[v, u, y, x, c] = 1000*u + 100*v + 10*x + y, identical channels."""
    u = np.arange(a)[None, :, None, None]
    v = np.arange(a)[:, None, None, None]
    y = np.arange(n_y)[None, None, :, None]
    x = np.arange(n_x)[None, None, None, :]
    vals = (1000 * u + 100 * v + 10 * x + y).astype(np.float64)
    views = np.repeat(vals[..., None], channels, axis=4)
    return LightField4D(views)


def _smooth_texture(gen: np.random.Generator, h: int, w: int, channels: int,
                    smooth: float = 1.0) -> np.ndarray:
    """Random texture in [0.15, 0.85] with mild spatial correlation."""
    tex = gen.random((h, w, channels))
    if smooth > 0:
        tex = ndimage.gaussian_filter(tex, sigma=(smooth, smooth, 0), mode="wrap")
    lo, hi = tex.min(), tex.max()
    tex = (tex - lo) / max(hi - lo, 1e-9)
    return (0.15 + 0.7 * tex).astype(get_default_dtype())


def _random_rect_mask(gen: np.random.Generator, n_y: int, n_x: int,
                      min_frac: float = 0.45, max_frac: float = 0.7) -> np.ndarray:
    """Random rectangle with side fractions in [min_frac, max_frac].

    The default keeps objects large relative to the network's output
    stride, so the upsampled score grid can actually represent them.
    """
    rh = max(int(round(gen.uniform(min_frac, max_frac) * n_y)), 2)
    rw = max(int(round(gen.uniform(min_frac, max_frac) * n_x)), 2)
    y0 = int(gen.integers(0, n_y - rh + 1))
    x0 = int(gen.integers(0, n_x - rw + 1))
    mask = np.zeros((n_y, n_x), dtype=np.int64)
    mask[y0:y0 + rh, x0:x0 + rw] = 1
    return mask


def textured_scene(gen: np.random.Generator, a: int, n_y: int, n_x: int,
                   channels: int = 3, disparity: int = 1):
    """(LightField4D, mask): textured rectangle with parallax over a contrasting background."""
    m = disparity * (a // 2) if disparity else 0
    bg = _smooth_texture(gen, n_y, n_x, channels, smooth=2.0)
    fg_full = _smooth_texture(gen, n_y + 2 * m, n_x + 2 * m, channels, smooth=0.5)
    mask = _random_rect_mask(gen, n_y, n_x)
    c0 = a // 2
    views = np.empty((a, a, n_y, n_x, channels), dtype=get_default_dtype())
    m3 = mask[..., None].astype(bool)
    for v in range(a):
        for u in range(a):
            sy, sx = disparity * (v - c0), disparity * (u - c0)
            fg = fg_full[m + sy:m + sy + n_y, m + sx:m + sx + n_x]
            views[v, u] = np.where(m3, fg, bg)
    return LightField4D(views), mask


def parallax_scene(gen: np.random.Generator, a: int, n_y: int, n_x: int,
                   channels: int = 3, disparity: int = 1,
                   mask: np.ndarray | None = None, texture: np.ndarray | None = None):
    """(LightField4D, mask) where the foreground is invisible in the central view.

    Both regions sample one shared texture; the foreground samples it with
    a per-view shift of `disparity` pixels per view step, the background
    with none. At the central view both shifts vanish, so every central
    view rendered from the same texture is pixel-identical regardless of
    the mask.
    """
    m = disparity * ((a - 1) // 2 + 1)
    if texture is None:
        texture = _smooth_texture(gen, n_y + 2 * m, n_x + 2 * m, channels, smooth=0.5)
    if mask is None:
        mask = _random_rect_mask(gen, n_y, n_x)
    base = texture[m:m + n_y, m:m + n_x]
    c0 = a // 2
    views = np.empty((a, a, n_y, n_x, channels), dtype=get_default_dtype())
    m3 = mask[..., None].astype(bool)
    for v in range(a):
        for u in range(a):
            sy, sx = disparity * (v - c0), disparity * (u - c0)
            fg = texture[m + sy:m + sy + n_y, m + sx:m + sx + n_x]
            views[v, u] = np.where(m3, fg, base)
    return LightField4D(views), mask


def quadrant_masks(n_y: int, n_x: int) -> list[np.ndarray]:
    """Four disjoint quadrant-filling rectangles; used by the parallax study.

    Each mask covers one full quadrant, so objects stay large relative to
    the network's output stride while the four masks remain disjoint.
    """
    masks = []
    hy, hx = n_y // 2, n_x // 2
    for oy in (0, hy):
        for ox in (0, hx):
            mask = np.zeros((n_y, n_x), dtype=np.int64)
            mask[oy:oy + hy, ox:ox + hx] = 1
            masks.append(mask)
    return masks


# ----------------------------------------------------------- toy dataset

def write_toy_dataset(out_dir, n_samples: int = 3, a: int = 3, n_y: int = 24,
                      n_x: int = 32, seed: int = 7, grid: int | None = None) -> None:
    """Write per-sample view grids (view_{v}_{u}.png) and masks for the CLI.

    `grid` is the on-disk angular resolution (defaults to a); the convert
    command can then sample it down to the network's angular resolution.
    """
    from pathlib import Path

    from .image_io import save_image, save_mask

    grid = grid or a
    out = Path(out_dir)
    gen = np.random.default_rng(seed)
    for i in range(n_samples):
        lf, mask = textured_scene(gen, grid, n_y, n_x, disparity=1)
        sample_dir = out / f"sample{i:02d}"
        sample_dir.mkdir(parents=True, exist_ok=True)
        for v in range(grid):
            for u in range(grid):
                save_image(sample_dir / f"view_{v}_{u}.png", lf.views[v, u])
        save_mask(sample_dir / "mask.png", mask)


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="generate the toy light-field dataset")
    parser.add_argument("out_dir")
    parser.add_argument("--samples", type=int, default=3)
    parser.add_argument("--angular", type=int, default=3)
    parser.add_argument("--height", type=int, default=24)
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    write_toy_dataset(args.out_dir, args.samples, args.angular,
                      args.height, args.width, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
