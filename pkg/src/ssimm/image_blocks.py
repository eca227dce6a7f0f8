"""Grayscale images, non-overlapping block partitions and pixel-domain MSE."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale image with intensities in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64).reshape(-1)
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("image dimensions must be positive")
        if px.size != self.width * self.height:
            raise InvalidParameterError(
                f"pixel count {px.size} != {self.width}x{self.height}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise InvalidParameterError("intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def d(self):
        return self.pixels.size

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidParameterError("expected a 2-D array")
        h, w = arr.shape
        return cls(w, h, arr.reshape(-1))

    def as_array(self):
        return self.pixels.reshape(self.height, self.width)


@dataclass(frozen=True)
class BlockPartition:
    q: int
    b: int
    pad_len: int
    d: int


@dataclass(frozen=True)
class CenteredBlockSet:
    blocks: np.ndarray  # (b, q), zero-mean rows; padding entries are 0
    means: np.ndarray  # (b,)
    partition: BlockPartition


def partition(image, q):
    """Split ``d`` raster-ordered pixels into ``ceil(d / q)`` blocks of length ``q``."""
    d = image.d if isinstance(image, GrayImage) else int(image)
    q = int(q)
    if q < 1 or q > d:
        raise InvalidParameterError(f"block length q={q} must satisfy 1 <= q <= d={d}")
    b = -(-d // q)
    return BlockPartition(q=q, b=b, pad_len=b * q - d, d=d)


def raw_blocks(image, part):
    """(b, q) matrix of raw blocks; the tail of the last block is zero padding."""
    if image.d != part.d:
        raise InvalidParameterError("partition does not match image length")
    out = np.zeros(part.b * part.q)
    out[: part.d] = image.pixels
    return out.reshape(part.b, part.q)


def center_blocks(image, part):
    """Remove each block's mean, computed over its valid (unpadded) pixels only.

    Padding stays exactly zero after centering, so the last block of a padded
    partition has a zero mean over its valid prefix rather than over ``q``
    entries.
    """
    blocks = raw_blocks(image, part)
    valid = np.full(part.b, part.q)
    valid[-1] = part.q - part.pad_len
    means = blocks.sum(axis=1) / valid
    centered = blocks - means[:, None]
    if part.pad_len:
        centered[-1, part.q - part.pad_len :] = 0.0
    return CenteredBlockSet(blocks=centered, means=means, partition=part)


def reassemble(blockset):
    """Inverse of :func:`center_blocks`; returns the flat pixel vector."""
    part = blockset.partition
    full = blockset.blocks + blockset.means[:, None]
    return full.reshape(-1)[: part.d]


def mse(a, b, scale="byte255"):
    """Mean squared error between two images, on the unit or 0-255 scale."""
    pa = a.pixels if isinstance(a, GrayImage) else np.asarray(a, dtype=np.float64)
    pb = b.pixels if isinstance(b, GrayImage) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise InvalidParameterError(f"dimension mismatch: {pa.shape} vs {pb.shape}")
    if scale == "byte255":
        factor = 255.0
    elif scale == "unit":
        factor = 1.0
    else:
        raise InvalidParameterError(f"unknown scale {scale!r}")
    diff = factor * (pa - pb)
    return float(np.mean(diff * diff))


# -- PGM I/O -----------------------------------------------------------------


def _pgm_tokens(data):
    """Yield (token, end_offset) for the ASCII header, skipping comments."""
    pos = 0
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos : pos + 1].isspace():
                pos += 1
            yield data[start:pos], pos


def read_pgm(path):
    """Read an 8-bit binary (P5) PGM file; intensities are divided by 255."""
    data = Path(path).read_bytes()
    toks = _pgm_tokens(data)
    try:
        magic, _ = next(toks)
        width, _ = next(toks)
        height, _ = next(toks)
        maxval, end = next(toks)
    except StopIteration:
        raise ValueError(f"{path}: truncated PGM header") from None
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    raster = data[end + 1 : end + 1 + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: raster too short")
    px = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return GrayImage(width, height, px)


def to_bytes(image):
    return np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(image).tobytes())


def quantize(image):
    """Round to the 8-bit grid, i.e. what a PGM round trip returns."""
    return GrayImage(image.width, image.height, to_bytes(image).astype(np.float64) / 255.0)
