import io
from fractions import Fraction as F

import numpy as np
import pytest
from PIL import Image

from sponge_iso.io import (ChecksumError, SpongeFileError, VersionError, digit_order, dumps_sponge, lattice_order,
                           load_sponge, loads_sponge, rle_decode, rle_encode, save_sponge)
from sponge_iso.measure import slice_measure
from sponge_iso.render import render_png, render_svg, save_render, slice_mask
from sponge_iso.sponge import GeometryError, build_sponge

CASES = [([3, 5], "cube", 2), ([3, 3, 5], "cube", 3), ([5, 7], "triangle", 2), ([4], "full", 2), ([3, 7], "cube", 2)]


@pytest.mark.parametrize("n,geom,d", CASES)
def test_round_trip(tmp_path, n, geom, d):
    S = build_sponge(n, geometry=geom, d=d)
    T = load_sponge(save_sponge(S, tmp_path / "s.txt"))
    assert (T.n, T.k, T.d, T.geometry) == (S.n, S.k, S.d, S.geometry)
    assert np.array_equal(T.bitmap(), S.bitmap())


def test_digit_order_inverts():
    S = build_sponge([3, 5], d=2)
    bits = np.random.default_rng(0).random(S.shape) < 0.5
    assert np.array_equal(lattice_order(S, digit_order(S, bits)), bits)


def test_rle_round_trip():
    rng = np.random.default_rng(1)
    for size in (1, 7, 300, 5000):
        bits = rng.random(size) < 0.9
        assert np.array_equal(rle_decode(rle_encode(bits), size), bits)
    long_run = np.ones(100000, dtype=bool)
    assert np.array_equal(rle_decode(rle_encode(long_run), 100000), long_run)


def test_header_line():
    text = dumps_sponge(build_sponge([3, 5], d=2))
    assert text.splitlines()[0] == "SPONGE v1 d=2 k=2 geom=cube n=3,5"
    assert dumps_sponge(build_sponge([5, 7], geometry="triangle", d=2)).startswith("SPONGE v1 d=2 k=2 geom=tri ")


def test_truncated_file_fails_checksum():
    text = dumps_sponge(build_sponge([3, 5, 7], d=2))
    with pytest.raises(ChecksumError):
        loads_sponge(text[: len(text) // 2])
    lines = text.splitlines()
    with pytest.raises(ChecksumError):
        loads_sponge("\n".join(lines[:1] + lines[2:]))


def test_corrupted_body_fails_checksum():
    text = dumps_sponge(build_sponge([3, 5], d=2))
    lines = text.splitlines()
    body = lines[1]
    flipped = ("B" if body[0] != "B" else "C") + body[1:]
    with pytest.raises(ChecksumError):
        loads_sponge("\n".join([lines[0], flipped, *lines[2:]]))


def test_unknown_version():
    text = dumps_sponge(build_sponge([3], d=2)).replace("SPONGE v1", "SPONGE v9", 1)
    with pytest.raises(VersionError, match="v9"):
        loads_sponge(text)
    with pytest.raises(SpongeFileError):
        loads_sponge("hello\n")


@pytest.mark.parametrize("axis", [0, 1, 2])
@pytest.mark.parametrize("offset", [F(1, 2), F(1, 3), F(2, 9), F(1, 7), F(0), F(1)])
def test_slice_raster_matches_slice_measure(axis, offset):
    S = build_sponge([3, 3], d=3)
    mask = slice_mask(S, axis, offset)
    assert F(int(mask.sum()), S.side ** 2) == slice_measure(S, axis, offset)


def test_ring_svg():
    svg = render_svg(build_sponge([3], d=2), size=90)
    assert svg.count("<rect") == 2
    assert 'x="30" y="30" width="30" height="30" fill="#ffffff"' in svg


def test_ring_png():
    img = render_png(build_sponge([3], d=2), size=90)
    px = np.asarray(img)
    assert (px == 0).sum() == 8 * 30 * 30
    assert px[45, 45] == 255


def test_triangle_svg_draws_every_obstacle():
    S = build_sponge([5, 7, 11], geometry="triangle", d=2)
    from sponge_iso.sponge import obstacle_registry
    svg = render_svg(S, size=256)
    assert svg.count("<polygon") == 1 + len(obstacle_registry(S))


def test_slice_render_and_errors(tmp_path):
    S = build_sponge([3], d=3)
    svg = render_svg(S, 90, slice_axis=2, slice_offset=F(1, 2))
    assert svg.count('fill="#000000"') > 0
    with pytest.raises(GeometryError):
        render_svg(S)
    p = save_render(S, tmp_path / "x.png", 90, slice_axis=2, slice_offset=F(1, 2))
    img = Image.open(p)
    assert img.size == (90, 90)
    with pytest.raises(ValueError):
        save_render(S, tmp_path / "x.gif", slice_axis=2)
