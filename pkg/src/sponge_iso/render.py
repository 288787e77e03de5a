"""SVG and PNG pictures of planar sponges and of 2D slices of 3D sponges."""
from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .lattice import as_fraction
from .sponge import GeometryError, SpongeLevel, obstacle_registry

FOREGROUND = "#000000"
BACKGROUND = "#ffffff"
_SQRT3_2 = math.sqrt(3) / 2


def slice_mask(S: SpongeLevel, axis: int, offset) -> np.ndarray:
    """Occupancy of the cross-section ``{x_axis = offset}`` on the level lattice.

    On a lattice plane both neighbouring layers touch the slice, so the mask
    is their union.
    """
    if S.geometry == "triangle":
        raise GeometryError("slices are taken of cube lattices")
    if not 0 <= axis < S.d:
        raise GeometryError(f"axis {axis} out of range")
    c = as_fraction(offset)
    if not 0 <= c <= 1:
        raise ValueError("slice offset must lie in [0, 1]")
    occ = S.bitmap()
    t = c * S.side
    layers = {min(math.floor(t), S.side - 1)}
    if t.denominator == 1 and 0 < t:
        layers.add(int(t) - 1)
    return np.logical_or.reduce([np.take(occ, j, axis=axis) for j in sorted(layers)])


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def _svg(size: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _tri_point(p, size: int, margin: float) -> tuple[float, float]:
    a, b = p
    x = float(a) + float(b) / 2
    y = float(b) * _SQRT3_2
    usable = size - 2 * margin
    return margin + x * usable, size - margin - (1 - _SQRT3_2) * usable / 2 - y * usable


def render_svg(S: SpongeLevel, size: int = 512, slice_axis: int | None = None, slice_offset=None) -> str:
    if S.geometry == "triangle":
        margin = size * 0.02
        root = ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
        body = [f'<rect width="{size}" height="{size}" fill="{BACKGROUND}"/>']
        for verts, color in [(root, FOREGROUND)] + [(R.vertices, BACKGROUND) for R in obstacle_registry(S)]:
            pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (_tri_point(v, size, margin) for v in verts))
            body.append(f'<polygon points="{pts}" fill="{color}"/>')
        return _svg(size, body)
    if S.d == 2 and slice_axis is None:
        body = [f'<rect width="{size}" height="{size}" fill="{FOREGROUND}"/>']
        for R in obstacle_registry(S):
            (x0, y0), (x1, y1) = R.region.lo, R.region.hi
            body.append(f'<rect x="{_fmt(float(x0) * size)}" y="{_fmt(float(1 - y1) * size)}" '
                        f'width="{_fmt(float(x1 - x0) * size)}" height="{_fmt(float(y1 - y0) * size)}" '
                        f'fill="{BACKGROUND}"/>')
        return _svg(size, body)
    if S.d == 3 and slice_axis is not None:
        mask = slice_mask(S, slice_axis, slice_offset if slice_offset is not None else Fraction(1, 2))
        return _svg(size, _mask_rects(mask, size))
    raise GeometryError("rendering needs d = 2, or d = 3 with a slice axis and offset")


def _mask_rects(mask: np.ndarray, size: int) -> list[str]:
    """Row runs of a 2D mask (first index = x, second = y) as SVG rects."""
    m = mask.shape[0]
    cell = size / m
    body = [f'<rect width="{size}" height="{size}" fill="{BACKGROUND}"/>']
    for y in range(mask.shape[1]):
        col = mask[:, y]
        x = 0
        while x < m:
            if col[x]:
                start = x
                while x < m and col[x]:
                    x += 1
                body.append(f'<rect x="{_fmt(start * cell)}" y="{_fmt((m - 1 - y) * cell)}" '
                            f'width="{_fmt((x - start) * cell)}" height="{_fmt(cell)}" fill="{FOREGROUND}"/>')
            else:
                x += 1
    return body


def render_png(S: SpongeLevel, size: int = 512, slice_axis: int | None = None, slice_offset=None) -> Image.Image:
    if S.geometry == "triangle":
        img = Image.new("L", (size, size), 255)
        draw = ImageDraw.Draw(img)
        margin = size * 0.02
        root = ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
        draw.polygon([_tri_point(v, size, margin) for v in root], fill=0)
        for R in obstacle_registry(S):
            draw.polygon([_tri_point(v, size, margin) for v in R.vertices], fill=255)
        return img
    if S.d == 2 and slice_axis is None:
        mask = S.bitmap()
    elif S.d == 3 and slice_axis is not None:
        mask = slice_mask(S, slice_axis, slice_offset if slice_offset is not None else Fraction(1, 2))
    else:
        raise GeometryError("rendering needs d = 2, or d = 3 with a slice axis and offset")
    # first index is x, second is y; image rows run top to bottom
    raster = np.where(mask.T[::-1], 0, 255).astype(np.uint8)
    img = Image.fromarray(raster, mode="L")
    return img.resize((size, size), Image.NEAREST)


def save_render(S: SpongeLevel, path, size: int = 512, slice_axis: int | None = None, slice_offset=None) -> Path:
    path = Path(path)
    if path.suffix == ".svg":
        path.write_text(render_svg(S, size, slice_axis, slice_offset))
    elif path.suffix == ".png":
        render_png(S, size, slice_axis, slice_offset).save(path, format="PNG")
    else:
        raise ValueError("render path must end in .svg or .png")
    return path
