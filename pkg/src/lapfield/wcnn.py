"""Shared-kernel wavelet network: a linear multiscale Poisson solver.

The network has three kernels per channel, reused at every scale:

* ``H`` (k x k) filters a Laplacian level before it is subsampled by 2,
* ``G`` (3 x 3) maps a Laplacian level to its contribution to the image,
* ``K`` (k x k) filters the zero-stuffed upsampled coarse reconstruction.

With ``L_1`` the input field::

    L_{i+1} = downsample(H * L_i)
    U_n     = G * L_n
    U_i     = K * upsample(U_{i+1}) + G * L_i

``*`` is per-channel correlation with zero padding. There are no biases or
activations, so the output is linear in ``L``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numba
import numpy as np

from .imageio import atomic_write

__all__ = [
    "KernelSet",
    "CheckpointError",
    "param_count",
    "default_levels",
    "correlate",
    "kernel_grad",
    "downsample",
    "upsample",
    "level_shapes",
    "build_pyramid",
    "forward",
    "init_kernels",
    "reference_kernels",
    "kernels_to_json",
    "kernels_from_json",
    "save_kernels",
    "load_kernels",
    "default_checkpoint_path",
    "default_kernels",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_FORMAT = "lapfield-wcnn"
CHECKPOINT_VERSION = 1

# learned 5x5 / 3x3 / 5x5 kernels of the reference BSDS500 model
REFERENCE_H = [
    [0.020, 0.072, 0.106, 0.077, 0.019],
    [0.072, 0.245, 0.348, 0.249, 0.072],
    [0.107, 0.348, 0.495, 0.350, 0.108],
    [0.077, 0.249, 0.350, 0.254, 0.076],
    [0.019, 0.072, 0.107, 0.077, 0.016],
]
REFERENCE_G = [
    [0.029, 0.087, 0.028],
    [0.087, 0.311, 0.087],
    [0.028, 0.087, 0.028],
]
REFERENCE_K = [
    [-0.023, 0.091, 0.188, 0.083, -0.020],
    [0.090, 0.262, 0.331, 0.252, 0.094],
    [0.187, 0.331, 0.340, 0.327, 0.189],
    [0.082, 0.252, 0.328, 0.246, 0.087],
    [-0.020, 0.094, 0.190, 0.088, -0.016],
]


class CheckpointError(ValueError):
    """Malformed or incompatible kernel checkpoint."""


@dataclass
class KernelSet:
    """Per-channel kernels ``H`` (C, k, k), ``G`` (C, 3, 3) and ``K`` (C, k, k)."""

    H: np.ndarray
    G: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        self.H = np.array(self.H, dtype=np.float64)
        self.G = np.array(self.G, dtype=np.float64)
        self.K = np.array(self.K, dtype=np.float64)
        c, k = self.H.shape[0], self.H.shape[-1]
        if self.H.ndim != 3 or self.H.shape != (c, k, k) or self.K.shape != (c, k, k):
            raise ValueError(f"H and K must both be (C, k, k), got {self.H.shape} and {self.K.shape}")
        if k < 3 or k % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {k}")
        if self.G.shape != (c, 3, 3):
            raise ValueError(f"G must be ({c}, 3, 3), got {self.G.shape}")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("kernel coefficients must be finite")

    @property
    def channels(self) -> int:
        return self.H.shape[0]

    @property
    def size(self) -> int:
        return self.H.shape[-1]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.H, self.G, self.K

    def copy(self) -> KernelSet:
        return KernelSet(self.H.copy(), self.G.copy(), self.K.copy())

    def flat(self) -> np.ndarray:
        """All trainable scalars as one vector (H, then G, then K)."""
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec, channels: int, k: int) -> KernelSet:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != param_count(channels, k):
            raise ValueError("vector length does not match the kernel shapes")
        nh = channels * k * k
        ng = channels * 9
        return cls(
            vec[:nh].reshape(channels, k, k),
            vec[nh : nh + ng].reshape(channels, 3, 3),
            vec[nh + ng :].reshape(channels, k, k),
        )


def param_count(channels: int, k: int) -> int:
    """Trainable scalars in a network with ``channels`` channels and k x k ``H``/``K``."""
    if k < 3 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {k}")
    return channels * (2 * k * k + 9)


def default_levels(dims) -> int:
    """Pyramid depth that keeps the coarsest side at 8 pixels or more."""
    return max(1, int(math.floor(math.log2(min(dims)))) - 2)


# -- building blocks ---------------------------------------------------------


@numba.njit(cache=True)
def _correlate4(x, w):
    n, nc, h, wd = x.shape
    k = w.shape[-1]
    r = k // 2
    out = np.zeros(x.shape)
    xrow = np.zeros(wd + 2 * r)
    for b in range(n):
        for c in range(nc):
            for i in range(h):
                orow = out[b, c, i]
                for dy in range(k):
                    ii = i + dy - r
                    if ii < 0 or ii >= h:
                        continue
                    xrow[r : r + wd] = x[b, c, ii]
                    for dx in range(k):
                        wt = w[c, dy, dx]
                        for j in range(wd):
                            orow[j] += wt * xrow[j + dx]
    return out


def correlate(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' correlation of ``x`` (..., C, H, W) with per-channel ``w`` (C, k, k).

    Each output pixel accumulates ``w[dy, dx] * x[i + dy - r, j + dx - r]``
    starting from 0 in row-major tap order; taps that fall outside the grid
    are skipped, which is bit-identical to adding ``w * 0``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    shape = x.shape
    out = _correlate4(x.reshape((-1,) + shape[-3:]), np.ascontiguousarray(w, dtype=np.float64))
    return out.reshape(shape)


@numba.njit(cache=True)
def _kernel_grad4(x, g, k):
    n, nc, h, wd = x.shape
    r = k // 2
    out = np.zeros((nc, k, k))
    xrow = np.zeros(wd + 2 * r)
    acc = np.zeros((k, k, wd))
    for c in range(nc):
        acc[:] = 0.0
        for b in range(n):
            for i in range(h):
                grow = g[b, c, i]
                for dy in range(k):
                    ii = i + dy - r
                    if ii < 0 or ii >= h:
                        continue
                    xrow[r : r + wd] = x[b, c, ii]
                    for dx in range(k):
                        a = acc[dy, dx]
                        for j in range(wd):
                            a[j] += grow[j] * xrow[j + dx]
        for dy in range(k):
            for dx in range(k):
                s = 0.0
                for j in range(wd):
                    s += acc[dy, dx, j]
                out[c, dy, dx] = s
    return out


def kernel_grad(x: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    """Gradient of ``sum(g * correlate(x, w))`` with respect to a (C, k, k) kernel ``w``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    shape = (-1,) + x.shape[-3:]
    return _kernel_grad4(x.reshape(shape), g.reshape(shape), k)


def downsample(x: np.ndarray) -> np.ndarray:
    """Keep even rows and columns; each side becomes ``ceil(n / 2)``."""
    return x[..., ::2, ::2]


def upsample(x: np.ndarray, shape) -> np.ndarray:
    """Zero-insertion: ``x[i, j]`` lands at ``(2i, 2j)`` of an array with trailing dims ``shape``."""
    h, w = shape[-2:]
    if (h + 1) // 2 != x.shape[-2] or (w + 1) // 2 != x.shape[-1]:
        raise ValueError(f"cannot upsample {x.shape[-2:]} to {(h, w)}")
    out = np.zeros(x.shape[:-2] + (h, w))
    out[..., ::2, ::2] = x
    return out


def level_shapes(dims, n_levels: int) -> list[tuple[int, int]]:
    """Grid size at each pyramid level; raises if the coarsest side falls below 3."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    h, w = dims
    shapes = [(h, w)]
    for _ in range(n_levels - 1):
        h, w = (h + 1) // 2, (w + 1) // 2
        shapes.append((h, w))
    if min(shapes[-1]) < 3:
        raise ValueError(f"{n_levels} levels shrink a {dims[0]}x{dims[1]} input below 3 pixels per side")
    return shapes


def _check(kernels: KernelSet, L) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim < 3:
        L = L.reshape((1,) * (3 - L.ndim) + L.shape)
    if L.shape[-3] != kernels.channels:
        raise ValueError(f"input has {L.shape[-3]} channels but kernels have {kernels.channels}")
    if not np.all(np.isfinite(L)):
        raise ValueError("input contains non-finite values")
    return L


def build_pyramid(L, kernels: KernelSet, n_levels: int) -> list[np.ndarray]:
    """Analysis stream: ``[L_1, ..., L_n]`` with ``L_{i+1} = downsample(H * L_i)``."""
    squeeze = np.ndim(L) == 2
    L = _check(kernels, L)
    level_shapes(L.shape[-2:], n_levels)
    levels = [L]
    for _ in range(n_levels - 1):
        levels.append(downsample(correlate(levels[-1], kernels.H)))
    return [lv[0] for lv in levels] if squeeze else levels


def _forward_trace(kernels: KernelSet, L: np.ndarray, n_levels: int):
    """Forward pass keeping the intermediates needed for backpropagation."""
    levels = build_pyramid(L, kernels, n_levels)
    n = len(levels)
    U = [None] * n
    V = [None] * n
    U[n - 1] = correlate(levels[n - 1], kernels.G)
    for i in range(n - 2, -1, -1):
        V[i] = upsample(U[i + 1], levels[i].shape)
        U[i] = correlate(V[i], kernels.K) + correlate(levels[i], kernels.G)
    return levels, V, U


def forward(kernels: KernelSet, L, n_levels: int | None = None) -> np.ndarray:
    """Reconstruct the image from Laplacian field ``L``.

    ``L`` may be (H, W) for single-channel kernels, (C, H, W) or a batch
    (B, C, H, W). ``n_levels`` defaults to :func:`default_levels`.
    """
    ndim = np.ndim(L)
    L = _check(kernels, L)
    if n_levels is None:
        n_levels = default_levels(L.shape[-2:])
    U = _forward_trace(kernels, L, n_levels)[2][0]
    return U.reshape(U.shape[-2:]) if ndim == 2 else U


# -- kernel sets -------------------------------------------------------------


def _binomial(k: int) -> np.ndarray:
    row = np.array([math.comb(k - 1, i) for i in range(k)], dtype=np.float64)
    b = np.outer(row, row)
    return b / b.sum()


def init_kernels(channels: int = 3, k: int = 5) -> KernelSet:
    """Smooth positive starting point: binomial ``H`` (sum 1), ``K`` (sum 4), ``G`` = 0.1 x 3x3 binomial."""
    param_count(channels, k)
    H = np.broadcast_to(_binomial(k), (channels, k, k))
    K = np.broadcast_to(4.0 * _binomial(k), (channels, k, k))
    G = np.broadcast_to(0.1 * _binomial(3), (channels, 3, 3))
    return KernelSet(H, G, K)


def reference_kernels(channels: int = 1) -> KernelSet:
    """The learned k=5 reference kernels, replicated over ``channels``."""
    def rep(a):
        return np.broadcast_to(np.array(a, dtype=np.float64), (channels, len(a), len(a)))

    return KernelSet(rep(REFERENCE_H), rep(REFERENCE_G), rep(REFERENCE_K))


def kernels_to_json(kernels: KernelSet) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "channels": kernels.channels,
        "kernel_size": kernels.size,
        "H": kernels.H.tolist(),
        "G": kernels.G.tolist(),
        "K": kernels.K.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def kernels_from_json(text: str) -> KernelSet:
    """Parse a checkpoint.

    ``H``, ``G`` and ``K`` may be given per channel (C, k, k) or once as a
    single k x k matrix shared by all ``channels`` (default 1).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a lapfield-wcnn checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    channels = int(doc.get("channels", 1))
    try:
        arrays = []
        for name in "HGK":
            a = np.array(doc[name], dtype=np.float64)
            if a.ndim == 2:
                a = np.broadcast_to(a, (channels,) + a.shape)
            arrays.append(a)
        kernels = KernelSet(*arrays)
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"bad kernel data: {exc}") from exc
    if kernels.channels != channels:
        raise CheckpointError(f"header says {channels} channels, kernels have {kernels.channels}")
    if "kernel_size" in doc and int(doc["kernel_size"]) != kernels.size:
        raise CheckpointError("header kernel_size does not match H/K")
    return kernels


def save_kernels(path, kernels: KernelSet) -> None:
    atomic_write(path, kernels_to_json(kernels))


def default_checkpoint_path() -> Path:
    """The bundled 3-channel k=5 checkpoint trained on the bundled images."""
    return Path(str(resources.files("lapfield") / "data" / "default_k5.json"))


def default_kernels() -> KernelSet:
    return load_kernels(default_checkpoint_path())


def load_kernels(path) -> KernelSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return kernels_from_json(text)
