"""Text file format for built sponges.

::

    SPONGE v1 d=2 k=2 geom=cube n=3,5
    <base64 of the run-length encoded occupancy, 76 characters per line>
    CHECKSUM <16 hex digits>

Cells are listed in digit order: level-1 digits vary slowest, and inside a
level the per-axis digits are row-major. The run-length body is the first
bit followed by LEB128 run lengths. The checksum is an 8-byte BLAKE2b digest
of the header line and the raw body.
"""
from __future__ import annotations

import base64
import hashlib
from pathlib import Path

import numpy as np

from .lattice import ResolutionSeq
from .sponge import SpongeLevel

VERSION = "v1"
_GEOM_TOKENS = {"cube": "cube", "triangle": "tri", "full": "full"}
_GEOM_NAMES = {v: k for k, v in _GEOM_TOKENS.items()}


class SpongeFileError(ValueError):
    pass


class VersionError(SpongeFileError):
    pass


class ChecksumError(SpongeFileError):
    pass


def digit_order(S: SpongeLevel, bitmap: np.ndarray) -> np.ndarray:
    """Flatten a lattice bitmap into digit order."""
    if S.geometry == "triangle":
        return bitmap.ravel()
    n, d, k = S.n[: S.k], S.d, S.k
    if k == 0:
        return bitmap.ravel()
    split = bitmap.reshape(tuple(n) * d)
    order = [a * k + j for j in range(k) for a in range(d)]
    return split.transpose(order).ravel()


def lattice_order(S: SpongeLevel, flat: np.ndarray) -> np.ndarray:
    """Inverse of digit_order."""
    if S.geometry == "triangle" or S.k == 0:
        return flat.reshape(S.shape)
    n, d, k = S.n[: S.k], S.d, S.k
    order = [a * k + j for j in range(k) for a in range(d)]
    shaped = flat.reshape(tuple(n[j] for j in range(k) for _ in range(d)))
    return shaped.transpose(np.argsort(order)).reshape(S.shape)


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def rle_encode(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=bool).ravel()
    if bits.size == 0:
        return b""
    change = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    bounds = np.concatenate(([0], change, [bits.size]))
    runs = np.diff(bounds)
    return bytes([int(bits[0])]) + b"".join(_varint(int(r)) for r in runs)


def rle_decode(data: bytes, size: int) -> np.ndarray:
    if size == 0:
        return np.zeros(0, dtype=bool)
    if not data:
        raise SpongeFileError("empty occupancy body")
    value = bool(data[0])
    out = np.empty(size, dtype=bool)
    pos, i, shift, run = 0, 1, 0, 0
    while i < len(data):
        byte = data[i]
        run |= (byte & 0x7F) << shift
        shift += 7
        i += 1
        if not byte & 0x80:
            if pos + run > size:
                raise SpongeFileError("occupancy body longer than the lattice")
            out[pos:pos + run] = value
            pos += run
            value = not value
            run, shift = 0, 0
    if pos != size:
        raise SpongeFileError("occupancy body shorter than the lattice")
    return out


def _header(S: SpongeLevel) -> str:
    n = ",".join(str(v) for v in S.n)
    return f"SPONGE {VERSION} d={S.d} k={S.k} geom={_GEOM_TOKENS[S.geometry]} n={n}"


def _checksum(header: str, body: bytes) -> str:
    return hashlib.blake2b(header.encode() + b"\n" + body, digest_size=8).hexdigest()


def dumps_sponge(S: SpongeLevel) -> str:
    header = _header(S)
    body = rle_encode(digit_order(S, S.bitmap()))
    text = base64.b64encode(body).decode()
    lines = [text[i:i + 76] for i in range(0, len(text), 76)] or [""]
    return "\n".join([header, *lines, f"CHECKSUM {_checksum(header, body)}"]) + "\n"


def save_sponge(S: SpongeLevel, path) -> Path:
    path = Path(path)
    path.write_text(dumps_sponge(S))
    return path


def _parse_header(line: str) -> tuple[int, int, str, list[int]]:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "SPONGE":
        raise SpongeFileError("not a sponge file")
    if parts[1] != VERSION:
        raise VersionError(f"unsupported sponge file version {parts[1]!r} (reader understands {VERSION})")
    fields = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    try:
        d, k, geom = int(fields["d"]), int(fields["k"]), fields["geom"]
        n = [int(v) for v in fields["n"].split(",") if v]
    except (KeyError, ValueError) as exc:
        raise SpongeFileError(f"malformed header: {line!r}") from exc
    if geom not in _GEOM_NAMES:
        raise SpongeFileError(f"unknown geometry token {geom!r}")
    return d, k, _GEOM_NAMES[geom], n


def loads_sponge(text: str) -> SpongeLevel:
    lines = text.splitlines()
    if not lines:
        raise SpongeFileError("empty file")
    d, k, geom, n = _parse_header(lines[0])
    if len(lines) < 2 or not lines[-1].startswith("CHECKSUM "):
        raise ChecksumError("checksum line missing (truncated file?)")
    try:
        body = base64.b64decode("".join(lines[1:-1]), validate=True)
    except ValueError as exc:
        raise ChecksumError("occupancy body is not valid base64 (truncated file?)") from exc
    if _checksum(lines[0], body) != lines[-1].split()[1]:
        raise ChecksumError("checksum mismatch")
    S = SpongeLevel(ResolutionSeq(d, tuple(n)), k, geom)
    flat = rle_decode(body, S.num_cells)
    if not np.array_equal(lattice_order(S, flat), S.bitmap()):
        raise SpongeFileError("stored occupancy disagrees with the construction in the header")
    return S


def load_sponge(path) -> SpongeLevel:
    return loads_sponge(Path(path).read_text())
