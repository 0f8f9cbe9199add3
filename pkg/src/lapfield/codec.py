"""Laplacian-field image container (``.lapc``).

An image is stored as its Laplacian field, optionally sparsified with a
dead zone ``|L| <= T`` and quantized to multiples of ``q``. Decoding solves
the Dirichlet Poisson problem with any solver.

Wire format, little-endian::

    offset  size  field
    0       4     magic b"LAPC"
    4       1     version (1)
    5       1     stencil index (0..3 for k0..k3)
    6       1     storage mode (0 dense, 1 sparse)
    7       1     reserved, 0 (entropy coding)
    8       4     height   (uint32)
    12      4     width    (uint32)
    16      4     channels (uint32)
    20      8     threshold T (float64)
    28      8     quantization step q (float64)
    36      ...   payload

Dense payload: ``channels * height * width`` float32 values, channel-planar,
row-major. Sparse payload, per channel: a uint32 count ``n``, then ``n``
strictly increasing uint32 flat indices, then ``n`` nonzero float32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .field import STENCIL_IDS, as_planar, laplacian, stencil
from .solvers import SolverConfig, SolverReport, solve
from .wcnn import forward

__all__ = [
    "MAGIC",
    "VERSION",
    "CodecError",
    "BadMagicError",
    "TruncatedError",
    "VersionError",
    "CorruptPayloadError",
    "EncodedLaplacian",
    "encode",
    "decode",
    "serialize",
    "deserialize",
    "sparsity_ratio",
]

MAGIC = b"LAPC"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBIIIdd")
_MODES = ("dense", "sparse")


class CodecError(ValueError):
    """Base class for malformed containers."""


class BadMagicError(CodecError):
    pass


class TruncatedError(CodecError):
    pass


class VersionError(CodecError):
    pass


class CorruptPayloadError(CodecError):
    pass


@dataclass(eq=False)
class EncodedLaplacian:
    """A (possibly thresholded/quantized) Laplacian field plus its header.

    ``field`` is float32 ``(C, H, W)``; ``mode`` only affects how it is
    serialized.
    """

    field: np.ndarray
    stencil: str = "k0"
    threshold: float = 0.0
    quant: float = 0.0
    mode: str = "sparse"

    def __post_init__(self):
        self.field = np.asarray(self.field, dtype=np.float32)
        if self.field.ndim != 3:
            raise ValueError("field must be (C, H, W)")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be 'dense' or 'sparse', got {self.mode!r}")
        stencil(self.stencil)
        if not (self.threshold >= 0 and self.quant >= 0):
            raise ValueError("threshold and quant must be >= 0")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.field.shape

    def nonzeros(self) -> int:
        return int(np.count_nonzero(self.field))

    def same_as(self, other: EncodedLaplacian) -> bool:
        """Bit-level equality of header and payload."""
        return (
            self.stencil == other.stencil
            and self.mode == other.mode
            and struct.pack("<dd", self.threshold, self.quant) == struct.pack("<dd", other.threshold, other.quant)
            and self.field.shape == other.field.shape
            and np.array_equal(self.field.view(np.uint32), other.field.view(np.uint32))
        )


def encode(image, st="k0", threshold: float = 0.0, quant: float = 0.0, mode: str = "sparse") -> EncodedLaplacian:
    """Laplacian field of ``image`` with dead-zone ``|L| <= threshold`` zeroed and optional rounding to ``quant``."""
    if not (threshold >= 0 and quant >= 0):
        raise ValueError("threshold and quant must be >= 0")
    L = laplacian(as_planar(image), st)
    L[np.abs(L) <= threshold] = 0.0
    if quant > 0:
        L = np.round(L / quant) * quant
    L = L.astype(np.float32) + np.float32(0.0)  # drop negative zeros
    return EncodedLaplacian(L, stencil(st).id, float(threshold), float(quant), mode)


def decode(encoded: EncodedLaplacian, config: SolverConfig | None = None, kernels=None,
           clamp: bool = True, return_report: bool = False):
    """Reconstruct the image from an encoded field.

    ``config.solver`` picks a classical solver, or ``"wcnn"`` to run the
    network with ``kernels``. With ``clamp`` the result is clipped to
    [0, 255]. Returns ``(C, H, W)`` float64, plus the solver report when
    ``return_report`` is set.
    """
    config = config or SolverConfig("dst")
    L = encoded.field.astype(np.float64)
    if config.solver == "wcnn":
        if kernels is None:
            raise ValueError("the wcnn solver needs kernels")
        u = forward(kernels, L)
        report = SolverReport("wcnn", 0, [float("nan")], 0.0, True)
    else:
        u, report = solve(L, config, encoded.stencil)
    if clamp:
        u = np.clip(u, 0.0, 255.0)
    return (u, report) if return_report else u


def serialize(enc: EncodedLaplacian) -> bytes:
    c, h, w = enc.field.shape
    header = _HEADER.pack(
        MAGIC, VERSION, STENCIL_IDS.index(enc.stencil), _MODES.index(enc.mode), 0,
        h, w, c, enc.threshold, enc.quant,
    )
    parts = [header]
    if enc.mode == "dense":
        parts.append(enc.field.astype("<f4").tobytes())
    else:
        for plane in enc.field.reshape(c, h * w):
            idx = np.flatnonzero(plane)
            parts.append(struct.pack("<I", idx.size))
            parts.append(idx.astype("<u4").tobytes())
            parts.append(plane[idx].astype("<f4").tobytes())
    return b"".join(parts)


def _take(buf: memoryview, pos: int, n: int) -> tuple[memoryview, int]:
    if pos + n > len(buf):
        raise TruncatedError(f"container truncated: need {pos + n} bytes, have {len(buf)}")
    return buf[pos : pos + n], pos + n


def deserialize(data: bytes) -> EncodedLaplacian:
    """Parse a container; raises a :class:`CodecError` subclass on any defect."""
    buf = memoryview(bytes(data))
    if len(buf) < 4 or bytes(buf[:4]) != MAGIC:
        raise BadMagicError("bad magic: not a LAPC container")
    raw, pos = _take(buf, 0, _HEADER.size)
    _, version, st, mode, _reserved, h, w, c, threshold, quant = _HEADER.unpack(raw)
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    if st >= len(STENCIL_IDS) or mode >= len(_MODES):
        raise CorruptPayloadError("bad stencil or mode byte")
    if not (threshold >= 0 and quant >= 0):
        raise CorruptPayloadError("negative threshold or quantization step")
    n = h * w
    if mode == 0:
        raw, pos = _take(buf, pos, 4 * c * n)
        field = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(c, h, w)
    else:
        field = np.zeros((c, n), dtype=np.float32)
        for ch in range(c):
            raw, pos = _take(buf, pos, 4)
            (count,) = struct.unpack("<I", raw)
            if count > n:
                raise CorruptPayloadError(f"channel {ch}: {count} entries exceed {n} pixels")
            raw, pos = _take(buf, pos, 4 * count)
            idx = np.frombuffer(raw, dtype="<u4").astype(np.int64)
            raw, pos = _take(buf, pos, 4 * count)
            vals = np.frombuffer(raw, dtype="<f4")
            if count and (idx[-1] >= n or np.any(np.diff(idx) <= 0)):
                raise CorruptPayloadError(f"channel {ch}: index out of range or not increasing")
            if np.any(vals == 0):
                raise CorruptPayloadError(f"channel {ch}: explicit zero stored in sparse payload")
            field[ch, idx] = vals
        field = field.reshape(c, h, w)
    if pos != len(buf):
        raise CorruptPayloadError(f"{len(buf) - pos} trailing bytes after payload")
    if not np.all(np.isfinite(field)):
        raise CorruptPayloadError("non-finite values in payload")
    return EncodedLaplacian(field, STENCIL_IDS[st], threshold, quant, _MODES[mode])


def sparsity_ratio(enc: EncodedLaplacian) -> float:
    """Fraction of stored values that are nonzero."""
    return enc.nonzeros() / enc.field.size if enc.field.size else 0.0
