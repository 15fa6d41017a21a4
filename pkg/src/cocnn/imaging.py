"""Transaction-to-grey-image encoding.

Bytecode becomes a 32x32 image (the flattened instruction stream, cut or
zero-padded to 1024 bytes, row-major). The wei value becomes one 32-pixel row
holding its big-endian bytes. The combined image stacks the value row under
the bytecode image, giving 33x32.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError, ShapeMismatch
from .evmdecode import InstructionSeq, decode_bytecode, instruction_bytes
from .txcore import MAX_VALUE, Transaction

IMAGE_SIDE = 32
BYTECODE_PIXELS = IMAGE_SIDE * IMAGE_SIDE


class ImageMode(enum.Enum):
    BytecodeOnly = (32, 32)
    Combined = (33, 32)
    ValueRow = (1, 32)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value


@dataclass(frozen=True, eq=False)
class GreyImage:
    pixels: np.ndarray
    mode: ImageMode

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != self.mode.shape:
            raise ShapeMismatch(f"{self.mode.name} image must be {self.mode.shape}, got {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise DataError("pixel intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GreyImage):
            return NotImplemented
        return self.mode is other.mode and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.mode, self.pixels.tobytes()))


def _bytes_to_grid(stream: bytes) -> np.ndarray:
    buf = np.zeros(BYTECODE_PIXELS, dtype=np.uint8)
    head = stream[:BYTECODE_PIXELS]
    buf[:len(head)] = np.frombuffer(head, dtype=np.uint8)
    return buf.reshape(IMAGE_SIDE, IMAGE_SIDE)


def encode_bytecode_image(seq: InstructionSeq) -> GreyImage:
    return GreyImage(_bytes_to_grid(instruction_bytes(seq)), ImageMode.BytecodeOnly)


def _value_row(value: int) -> np.ndarray:
    if not 0 <= value < MAX_VALUE:
        raise ValueError("value must be an unsigned 256-bit integer")
    return np.frombuffer(int(value).to_bytes(32, "big"), dtype=np.uint8).reshape(1, 32)


def encode_value_image(value: int) -> GreyImage:
    return GreyImage(_value_row(value), ImageMode.ValueRow)


def combine_images(img1: GreyImage, img2: GreyImage) -> GreyImage:
    if img1.mode is not ImageMode.BytecodeOnly or img2.mode is not ImageMode.ValueRow:
        raise ShapeMismatch(
            f"expected (BytecodeOnly, ValueRow), got ({img1.mode.name}, {img2.mode.name})"
        )
    return GreyImage(np.vstack([img1.pixels, img2.pixels]), ImageMode.Combined)


def preprocess_transaction(tx: Transaction, with_value: bool = True) -> GreyImage:
    img1 = encode_bytecode_image(decode_bytecode(tx.bytecode))
    if not with_value:
        return img1
    return combine_images(img1, encode_value_image(tx.value))


def image_shape(with_value: bool) -> tuple[int, int]:
    return (ImageMode.Combined if with_value else ImageMode.BytecodeOnly).shape


def encode_transactions(txs, with_value: bool = True) -> np.ndarray:
    """Encode many transactions into a ``(n, rows, cols)`` uint8 stack."""
    txs = list(txs)
    rows, cols = image_shape(with_value)
    out = np.zeros((len(txs), rows, cols), dtype=np.uint8)
    for i, tx in enumerate(txs):
        out[i, :IMAGE_SIDE] = _bytes_to_grid(instruction_bytes(decode_bytecode(tx.bytecode)))
        if with_value:
            out[i, IMAGE_SIDE:] = _value_row(tx.value)
    return out


def export_pgm(img, path) -> None:
    """Write a binary PGM. ``img`` is a GreyImage or any 2-D array of 0..255."""
    px = img.pixels if isinstance(img, GreyImage) else np.asarray(img)
    if px.ndim != 2 or px.size == 0:
        raise ShapeMismatch(f"PGM export needs a non-empty 2-D image, got shape {px.shape}")
    if px.dtype != np.uint8:
        if px.min() < 0 or px.max() > 255:
            raise DataError("pixel intensities must lie in [0, 255]")
        px = px.astype(np.uint8)
    rows, cols = px.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(px).tobytes())


def import_pgm(path) -> np.ndarray:
    """Read a binary PGM with maxval 255 as a ``(rows, cols)`` uint8 array."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PGM header")
        fields.append(data[start:pos])
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5" or maxval != 255:
        raise DataError("only binary PGM (P5) with maxval 255 is supported")
    payload = data[pos + 1:]
    if len(payload) != width * height:
        raise DataError(f"PGM payload has {len(payload)} bytes, expected {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


class TransactionImageEncoder(TransformerMixin, BaseEstimator):
    """Stateless transformer from transactions to grey-image stacks.

    ``with_value=False`` drops the value row (bytecode-only 32x32 images).
    """

    def __init__(self, with_value=True):
        self.with_value = with_value

    def fit(self, X, y=None):
        self.image_shape_ = image_shape(self.with_value)
        return self

    def transform(self, X):
        return encode_transactions(X, with_value=self.with_value)

    def __sklearn_is_fitted__(self):
        return True
