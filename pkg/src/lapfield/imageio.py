"""PNG read/write for 8- and 16-bit grayscale and RGB images.

Loaded images are float64 ``(C, H, W)`` arrays on the [0, 255] scale;
16-bit samples are divided by 257 so that full scale maps to 255.
"""

from __future__ import annotations

import io
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np
import png

__all__ = [
    "ImageError",
    "read_png",
    "write_png",
    "list_images",
    "bundled_image_dir",
    "bundled_images",
    "atomic_write",
]


class ImageError(ValueError):
    """An image file is missing, unreadable or has an unsupported layout."""


def read_png(path) -> np.ndarray:
    path = Path(path)
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
    except (OSError, png.Error) as exc:
        raise ImageError(f"cannot read {path}: {exc}") from exc
    planes = info["planes"]
    if info.get("alpha"):
        raise ImageError(f"{path}: alpha channels are not supported")
    if planes not in (1, 3):
        raise ImageError(f"{path}: expected 1 or 3 channels, got {planes}")
    data = data.reshape(height, width, planes).transpose(2, 0, 1)
    scale = 255.0 / (2 ** info["bitdepth"] - 1)
    return np.ascontiguousarray(data * scale)


def atomic_write(path, data: bytes | str) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def encode_png(image, bitdepth: int = 8) -> bytes:
    """Clamp, round and encode a ``(C, H, W)`` or ``(H, W)`` [0, 255] image as PNG bytes."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[0] not in (1, 3):
        raise ImageError(f"cannot write image of shape {a.shape}")
    if bitdepth not in (8, 16):
        raise ImageError("bitdepth must be 8 or 16")
    maxval = 2**bitdepth - 1
    q = np.rint(np.clip(a, 0.0, 255.0) * (maxval / 255.0)).astype(np.uint8 if bitdepth == 8 else np.uint16)
    c, h, w = q.shape
    buf = io.BytesIO()
    png.Writer(w, h, greyscale=(c == 1), bitdepth=bitdepth).write(buf, q.transpose(1, 2, 0).reshape(h, w * c))
    return buf.getvalue()


def write_png(path, image, bitdepth: int = 8) -> None:
    atomic_write(path, encode_png(image, bitdepth))


def list_images(directory) -> list[Path]:
    """Sorted PNG files in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise ImageError(f"not a directory: {d}")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() == ".png" and p.is_file())
    if not paths:
        raise ImageError(f"no PNG images in {d}")
    return paths


def bundled_image_dir() -> Path:
    """Directory holding the ten bundled 256x256 RGB natural crops."""
    return Path(str(resources.files("lapfield") / "data" / "natural"))


def bundled_images() -> list[np.ndarray]:
    return [read_png(p) for p in list_images(bundled_image_dir())]
