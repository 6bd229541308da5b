"""
Image container, PGM / raw float32 file I/O and basic statistics.

Pixels are always held as a flat, read-only float64 array in row-major order
(pixel at row r, column c is ``pixels[r * width + c]``), whatever depth the
file on disk had.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from sar_despeckler.exceptions import DimensionMismatchError, ImageFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# P5 header: magic, width, height, maxval; '#' comments may appear between tokens
_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


class ImageFormat(str, Enum):
    PGM8 = "pgm8"
    PGM16 = "pgm16"
    RAW_F32LE = "raw32"

    @property
    def maxval(self) -> Optional[int]:
        return {ImageFormat.PGM8: 255, ImageFormat.PGM16: 65535}.get(self)

    @classmethod
    def from_path(cls, path: PathLike) -> "ImageFormat":
        """Guess the format from a file extension (.pgm -> PGM8, .raw/.f32 -> RAW_F32LE).

        For reading, a PGM guessed this way is decoded by its header maxval.
        """
        suffix = Path(path).suffix.lower()
        if suffix in (".raw", ".f32", ".bin"):
            return cls.RAW_F32LE
        if suffix in (".pgm", ".pnm"):
            return cls.PGM8
        raise ImageFormatError(f"Cannot infer image format from extension {suffix!r}; pass a format")


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DimensionMismatchError(f"Image dimensions must be positive, got {self.width}x{self.height}")
        pixels = np.array(self.pixels, dtype=np.float64).ravel()
        if pixels.size != self.width * self.height:
            raise DimensionMismatchError(
                f"Expected {self.width * self.height} pixels for {self.width}x{self.height}, got {pixels.size}"
            )
        if not np.all(np.isfinite(pixels)):
            raise ImageFormatError("Image contains non-finite pixel values")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Image":
        """Build an image from a 2D (height, width) array."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise DimensionMismatchError(f"Expected a 2D array, got shape {array.shape}")
        height, width = array.shape
        return cls(width=width, height=height, pixels=array.ravel())

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)

    def pixel(self, row: int, col: int) -> float:
        return float(self.pixels[row * self.width + col])

    def transpose(self) -> "Image":
        return Image.from_array(self.as_array().T)

    def with_pixels(self, pixels: np.ndarray) -> "Image":
        """Same dimensions, new pixel values."""
        return Image(width=self.width, height=self.height, pixels=pixels)


def require_same_shape(*images: Image) -> None:
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"Image dimensions differ: {sorted(shapes)}")


def _read_pgm(data: bytes, path: Path) -> Tuple[Image, int]:
    tokens = []
    pos = 0
    for _ in range(4):
        match = _PGM_TOKEN.match(data, pos)
        if not match:
            raise ImageFormatError(f"Truncated PGM header in {path}")
        tokens.append(match.group(1))
        pos = match.end()

    if tokens[0] != b"P5":
        raise ImageFormatError(f"Unsupported magic {tokens[0]!r} in {path} (only binary P5 is read)")
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"Malformed PGM header in {path}")
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"Malformed PGM header in {path}: {width}x{height}, maxval {maxval}")

    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise ImageFormatError(f"PGM raster in {path} has {len(raster)} bytes, expected {expected}")

    values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    return Image(width=width, height=height, pixels=values), maxval


def load_image(
    path: PathLike,
    format: Optional[ImageFormat] = None,
    dims: Optional[Tuple[int, int]] = None,
) -> Image:
    """
    Load an image from disk.

    Args:
        path: File to read
        format: PGM8, PGM16 or RAW_F32LE; inferred from the extension (PGM depth from the header) when None
        dims: (width, height), required for RAW_F32LE

    Returns:
        Image with pixel values as stored (PGM maxval honored, no rescaling)
    """
    path = Path(path)
    fmt = ImageFormat(format) if format is not None else ImageFormat.from_path(path)
    if not path.is_file():
        raise ImageFormatError(f"Image file not found: {path}")
    data = path.read_bytes()

    if fmt is ImageFormat.RAW_F32LE:
        if dims is None:
            raise ImageFormatError(f"RAW_F32LE carries no dimensions; width and height are required for {path}")
        width, height = dims
        if width < 1 or height < 1:
            raise ImageFormatError(f"Invalid dimensions {width}x{height} for {path}")
        expected = 4 * width * height
        if len(data) != expected:
            raise ImageFormatError(
                f"Size mismatch for {path}: {len(data)} bytes, expected {expected} for {width}x{height}"
            )
        values = np.frombuffer(data, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise ImageFormatError(f"Non-finite values in raw input {path}")
        return Image(width=width, height=height, pixels=values)

    image, maxval = _read_pgm(data, path)
    if dims is not None and tuple(dims) != (image.width, image.height):
        raise ImageFormatError(f"{path} is {image.width}x{image.height}, expected {dims[0]}x{dims[1]}")
    if format is None:
        # extension only says "PGM"; the header maxval decides the depth
        logger.debug("%s decoded as %s (maxval %d)", path, "pgm16" if maxval > 255 else "pgm8", maxval)
    elif (maxval > 255) != (fmt is ImageFormat.PGM16):
        logger.warning("%s has maxval %d but was opened as %s; decoding by header maxval", path, maxval, fmt.value)
    return image


def save_image(img: Image, path: PathLike, format: Optional[ImageFormat] = None) -> None:
    """
    Write an image to disk.

    PGM output is rounded to nearest and clamped to [0, maxval]; RAW_F32LE is
    headerless little-endian float32, row-major.
    """
    path = Path(path)
    fmt = ImageFormat(format) if format is not None else ImageFormat.from_path(path)

    if fmt is ImageFormat.RAW_F32LE:
        limit = np.finfo(np.float32).max
        if np.any(np.abs(img.pixels) > limit):
            raise ImageFormatError(
                f"Cannot write {path} as raw32: pixel magnitude {np.abs(img.pixels).max():.6g} exceeds float32 range"
            )
        payload = img.pixels.astype("<f4").tobytes()
    else:
        maxval = fmt.maxval
        clamped = np.clip(np.rint(img.pixels), 0, maxval)
        dtype = np.uint8 if fmt is ImageFormat.PGM8 else ">u2"
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        payload = header + clamped.astype(dtype).tobytes()

    try:
        path.write_bytes(payload)
    except OSError as e:
        raise ImageFormatError(f"Cannot write {path}: {e}") from e


def image_stats(img: Image) -> Dict[str, float]:
    """Min, max, mean and population standard deviation of the pixels."""
    p = img.pixels
    return {
        "min": float(p.min()),
        "max": float(p.max()),
        "mean": float(p.mean()),
        "std": float(p.std()),
    }
