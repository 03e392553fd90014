"""Feature assembly and the binary tensor interchange format (MFT1).

An MFT1 file is the handshake between this solver and any external feature
extractor: magic ``MFT1``, then width, height, channel count as little-endian
uint32, then ``C * height * width`` little-endian float32 values,
channel-major with each channel row-major.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    TensorMagicError,
    TensorTruncatedError,
    TensorValueError,
)

MAGIC = b"MFT1"
_HEADER = struct.Struct("<4sIII")

# Deep channel widths produced by the reference 19-layer extraction network
# at each pyramid resolution.
VGG_LEVEL_CHANNELS = {512: 64, 256: 128, 128: 256, 64: 512, 32: 512}


@dataclass
class FeatureMap:
    """Channel stack (3 + C, h, w); the first three channels are eta-scaled RGB."""

    channels: np.ndarray
    eta: float = 1.0

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[0] < 3:
            raise DimensionMismatchError(
                f"feature map needs (3 + C, h, w) channels, got {self.channels.shape}"
            )
        if not np.all(np.isfinite(self.channels)):
            raise TensorValueError("feature map contains non-finite values")

    @property
    def deep_count(self) -> int:
        return self.channels.shape[0] - 3

    def image(self) -> np.ndarray:
        """The unscaled RGB component."""
        return self.channels[:3] / self.eta


def assemble_feature(image: np.ndarray, deep: np.ndarray | None = None, eta: float = 1.0) -> FeatureMap:
    """Stack eta-scaled RGB with optional deep channels.

    Plain color mode passes no tensor and keeps eta = 1 so the mismatch
    compares raw intensities.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionMismatchError(f"expected (3, h, w) image, got {image.shape}")
    parts = [eta * image]
    if deep is not None:
        deep = np.asarray(deep, dtype=np.float64)
        if deep.shape[1:] != image.shape[1:]:
            raise DimensionMismatchError(
                f"deep tensor grid {deep.shape[1:]} does not match image grid {image.shape[1:]}"
            )
        parts.append(deep)
    return FeatureMap(channels=np.concatenate(parts, axis=0), eta=eta)


def save_tensor(path, tensor: np.ndarray) -> None:
    """Write a (C, h, w) float32 tensor; bit-exact round-trip with load_tensor."""
    tensor = np.ascontiguousarray(tensor, dtype=np.float32)
    if tensor.ndim != 3:
        raise DimensionMismatchError(f"expected (C, h, w) tensor, got {tensor.shape}")
    if not np.all(np.isfinite(tensor)):
        raise TensorValueError("refusing to write non-finite tensor values")
    c, h, w = tensor.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w, h, c))
        fh.write(tensor.astype("<f4", copy=False).tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    """Read and strictly validate an MFT1 file; returns float32 (C, h, w)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TensorTruncatedError(f"{path}: {len(blob)} bytes is shorter than the header")
    magic, w, h, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise TensorMagicError(f"{path}: bad magic {magic!r}")
    if w < 1 or h < 1:
        raise TensorValueError(f"{path}: invalid dims {w}x{h}")
    expected = _HEADER.size + 4 * w * h * c
    if len(blob) != expected:
        raise TensorTruncatedError(
            f"{path}: expected {expected} bytes for {w}x{h}x{c}, found {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    tensor = flat.reshape(c, h, w).copy()
    if not np.all(np.isfinite(tensor)):
        raise TensorValueError(f"{path}: tensor contains non-finite values")
    return tensor


def pyramid_filename(width: int, height: int, channels: int) -> str:
    return f"level_{width}x{height}_C{channels}.mft"


def load_pyramid_dir(directory, dims_list, channels_list=None) -> list[np.ndarray]:
    """Load one tensor per schedule level from a directory of MFT1 files.

    When channel counts are not pinned ahead of time, any single matching
    ``level_<w>x<h>_C*.mft`` file per level is accepted.
    """
    tensors = []
    for idx, dims in enumerate(dims_list):
        if channels_list is not None:
            name = pyramid_filename(dims.width, dims.height, channels_list[idx])
            candidates = [name] if os.path.exists(os.path.join(directory, name)) else []
        else:
            prefix = f"level_{dims.width}x{dims.height}_C"
            candidates = sorted(
                n for n in os.listdir(directory) if n.startswith(prefix) and n.endswith(".mft")
            )
        if len(candidates) != 1:
            raise TensorValueError(
                f"{directory}: need exactly one tensor for level {dims.width}x{dims.height}, "
                f"found {candidates or 'none'}"
            )
        tensor = load_tensor(os.path.join(directory, candidates[0]))
        if tensor.shape[1:] != (dims.height, dims.width):
            raise DimensionMismatchError(
                f"{candidates[0]}: payload grid {tensor.shape[1:]} does not match its name"
            )
        tensors.append(tensor)
    return tensors
