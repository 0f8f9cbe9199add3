"""Training the shared-kernel network: loss, backpropagation, Adam and data.

Gradients are derived by hand from the forward recurrence in
:mod:`lapfield.wcnn`. Since ``H``, ``G`` and ``K`` are reused at every
level, their gradients are sums over levels.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .field import laplacian
from .imageio import ImageError, atomic_write, list_images, read_png
from .wcnn import (
    KernelSet,
    _check,
    _forward_trace,
    correlate,
    kernel_grad,
    default_levels,
    init_kernels,
    save_kernels,
    upsample,
)

__all__ = [
    "TrainConfig",
    "TrainRecord",
    "PatchSet",
    "AdamState",
    "TrainingDiverged",
    "mse_loss",
    "backward",
    "adam_step",
    "dihedral",
    "sample_patches",
    "split_images",
    "desk_datasets",
    "train_loop",
    "evaluate",
    "evaluate_images",
    "write_record_csv",
]

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Loss became non-finite; ``kernels`` holds the last finite state."""

    def __init__(self, message, kernels, epoch):
        super().__init__(message)
        self.kernels = kernels
        self.epoch = epoch


# -- loss and gradients ------------------------------------------------------


def mse_loss(U, GT) -> float:
    """``sum((U - GT)^2) / (2 H W)``, averaged over every leading (sample, channel) axis."""
    U = np.asarray(U, dtype=np.float64)
    GT = np.asarray(GT, dtype=np.float64)
    if U.shape != GT.shape:
        raise ValueError(f"shape mismatch: {U.shape} vs {GT.shape}")
    return float(0.5 * np.mean((U - GT) ** 2))


def _flip(w: np.ndarray) -> np.ndarray:
    return w[:, ::-1, ::-1]


def backward(kernels: KernelSet, L, GT, n_levels: int | None = None):
    """Loss and its exact gradient with respect to every kernel coefficient.

    ``L`` and ``GT`` are (C, H, W) or a batch (B, C, H, W); the loss is
    :func:`mse_loss` of the reconstruction. Returns ``(loss, grads)`` where
    ``grads`` is a :class:`KernelSet` of the same shape as ``kernels``.
    """
    L = _check(kernels, L)
    GT = np.asarray(GT, dtype=np.float64).reshape(L.shape)
    if n_levels is None:
        n_levels = default_levels(L.shape[-2:])
    levels, V, U = _forward_trace(kernels, L, n_levels)
    n = len(levels)
    diff = U[0] - GT
    loss = float(0.5 * np.mean(diff**2))

    k = kernels.size
    gH = np.zeros_like(kernels.H)
    gG = np.zeros_like(kernels.G)
    gK = np.zeros_like(kernels.K)
    gL = [None] * n

    # synthesis stream, fine to coarse
    gU = diff / diff.size
    for i in range(n - 1):
        gK += kernel_grad(V[i], gU, k)
        gG += kernel_grad(levels[i], gU, 3)
        if i > 0:
            gL[i] = correlate(gU, _flip(kernels.G))
        gU = correlate(gU, _flip(kernels.K))[..., ::2, ::2]
    gG += kernel_grad(levels[n - 1], gU, 3)
    if n > 1:
        gL[n - 1] = correlate(gU, _flip(kernels.G))

    # analysis stream, coarse to fine
    for i in range(n - 1, 0, -1):
        gA = upsample(gL[i], levels[i - 1].shape)
        gH += kernel_grad(levels[i - 1], gA, k)
        if i > 1:
            gL[i - 1] = gL[i - 1] + correlate(gA, _flip(kernels.H))

    if not (np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in (gH, gG, gK))):
        raise FloatingPointError("non-finite loss or gradient")
    return loss, KernelSet(gH, gG, gK)


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, kernels: KernelSet, **kw) -> AdamState:
        return cls([np.zeros_like(a) for a in kernels.arrays()], [np.zeros_like(a) for a in kernels.arrays()], **kw)


def adam_step(kernels: KernelSet, grads: KernelSet, state: AdamState, lr: float) -> KernelSet:
    """One Adam update. Returns new kernels; ``state`` is advanced in place."""
    if grads.H.shape != kernels.H.shape or grads.K.shape != kernels.K.shape:
        raise ValueError("gradient shapes do not match the kernels")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    new = []
    for p, g, m, v in zip(kernels.arrays(), grads.arrays(), state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        new.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
    if not all(np.all(np.isfinite(a)) for a in new):
        raise FloatingPointError("Adam step produced non-finite parameters")
    return KernelSet(*new)


# -- data --------------------------------------------------------------------


def dihedral(x: np.ndarray, t: int) -> np.ndarray:
    """Element ``t`` (0..7) of the dihedral group acting on the last two axes."""
    if not 0 <= t < 8:
        raise ValueError("dihedral index must be in 0..7")
    y = np.rot90(x, t % 4, axes=(-2, -1))
    if t >= 4:
        y = y[..., ::-1]
    return np.ascontiguousarray(y)


@dataclass
class PatchSet:
    """Training pairs: ``GT`` patches (N, C, P, P), their k0 fields ``L`` and source image ids."""

    L: np.ndarray
    GT: np.ndarray
    source: np.ndarray

    def __len__(self) -> int:
        return len(self.GT)

    def subset(self, idx) -> PatchSet:
        return PatchSet(self.L[idx], self.GT[idx], self.source[idx])


def _load_dir(images) -> list[tuple[Path, np.ndarray]]:
    if isinstance(images, (str, Path)):
        paths = list_images(images)
    else:
        paths = [Path(p) for p in images]
        if not paths:
            raise ImageError("no images given")
    return [(p, read_png(p)) for p in paths]


def split_images(image_dir, heldout_fraction: float = 0.2, seed: int = 0) -> tuple[list[Path], list[Path]]:
    """Split the images of a directory into train and held-out lists (by image, not patch)."""
    paths = list_images(image_dir)
    if len(paths) < 2:
        raise ImageError("need at least two images to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(paths))
    n_held = min(len(paths) - 1, max(1, round(heldout_fraction * len(paths))))
    held = sorted(paths[i] for i in order[:n_held])
    train = sorted(paths[i] for i in order[n_held:])
    return train, held


def sample_patches(images, patch_size: int, count: int, augment: bool = True, seed: int = 0) -> PatchSet:
    """Sample ``count`` random square patches and pair each with its Laplacian field.

    ``images`` is a directory or a list of PNG paths. Top-left corners are
    uniform over every position of a uniformly chosen image; with
    ``augment`` each patch also gets a random one of the 8 rotations/flips.
    ``L`` is the zero-padded k0 Laplacian of the (augmented) patch.
    """
    if count < 0 or patch_size < 3:
        raise ValueError("count must be >= 0 and patch_size >= 3")
    loaded = _load_dir(images)
    usable = []
    for path, img in loaded:
        if min(img.shape[-2:]) < patch_size:
            log.warning("skipping %s: smaller than %d pixels", path.name, patch_size)
        else:
            usable.append(img)
    if not usable:
        raise ImageError(f"no image is at least {patch_size}x{patch_size}")
    channels = {img.shape[0] for img in usable}
    if len(channels) != 1:
        raise ImageError("images have mixed channel counts")
    c = channels.pop()
    rng = np.random.default_rng(seed)
    GT = np.empty((count, c, patch_size, patch_size))
    source = np.empty(count, dtype=np.int64)
    for n in range(count):
        s = int(rng.integers(len(usable)))
        img = usable[s]
        top = int(rng.integers(img.shape[1] - patch_size + 1))
        left = int(rng.integers(img.shape[2] - patch_size + 1))
        patch = img[:, top : top + patch_size, left : left + patch_size]
        if augment:
            patch = dihedral(patch, int(rng.integers(8)))
        GT[n] = patch
        source[n] = s
    L = laplacian(GT.reshape(-1, patch_size, patch_size)).reshape(GT.shape) if count else np.empty_like(GT)
    return PatchSet(L, GT, source)


def desk_datasets(image_dir, patch_size: int = 64, n_train: int = 200, n_heldout: int = 64,
                  heldout_fraction: float = 0.2, augment: bool = True, seed: int = 0) -> tuple[PatchSet, PatchSet]:
    """Train and held-out patch sets drawn from disjoint images of ``image_dir``.

    The image split uses ``seed``, the training patches ``seed + 1`` and the
    held-out patches ``seed + 2``.
    """
    train_paths, held_paths = split_images(image_dir, heldout_fraction, seed)
    train = sample_patches(train_paths, patch_size, n_train, augment, seed + 1)
    held = sample_patches(held_paths, patch_size, n_heldout, augment, seed + 2)
    return train, held


# -- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-5
    epochs: int = 2000
    kernel_size: int = 5
    n_levels: int | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_path: str | Path | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainRecord:
    train_loss: list[float] = field(default_factory=list)
    heldout_loss: list[float] = field(default_factory=list)
    initial_heldout_loss: float = float("nan")
    seconds: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "heldout_loss"])
        w.writerow([0, "", repr(self.initial_heldout_loss)])
        for e, (a, b) in enumerate(zip(self.train_loss, self.heldout_loss), start=1):
            w.writerow([e, repr(a), repr(b)])
        return buf.getvalue()


def _dataset_loss(kernels, data: PatchSet, n_levels, chunk=64) -> float:
    if len(data) == 0:
        return float("nan")
    total = 0.0
    for s in range(0, len(data), chunk):
        L, GT = data.L[s : s + chunk], data.GT[s : s + chunk]
        U = _forward_trace(kernels, L, n_levels)[2][0]
        total += float(np.sum((U - GT) ** 2))
    return 0.5 * total / data.GT.size


def train_loop(config: TrainConfig, train_set: PatchSet, heldout_set: PatchSet | None = None,
               kernels: KernelSet | None = None) -> tuple[KernelSet, TrainRecord]:
    """Mini-batch Adam on :func:`mse_loss`.

    Starts from ``kernels`` or :func:`lapfield.wcnn.init_kernels`. Each epoch
    visits the training set in a seeded random order; the record keeps the
    mean pre-update batch loss and the held-out loss after the epoch.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    t0 = time.perf_counter()
    c, p = train_set.GT.shape[1], train_set.GT.shape[-1]
    kernels = kernels.copy() if kernels is not None else init_kernels(c, config.kernel_size)
    n_levels = config.n_levels or default_levels((p, p))
    heldout = heldout_set if heldout_set is not None and len(heldout_set) else None
    state = AdamState.zeros_like(kernels, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    record = TrainRecord()
    if heldout is not None:
        record.initial_heldout_loss = _dataset_loss(kernels, heldout, n_levels)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        weighted = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = np.sort(order[s : s + config.batch_size])
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = backward(kernels, train_set.L[idx], train_set.GT[idx], n_levels)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", kernels, epoch) from exc
            weighted += loss * len(idx)
            try:
                kernels = adam_step(kernels, grads, state, config.learning_rate)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", kernels, epoch) from exc
        record.train_loss.append(weighted / len(train_set))
        record.heldout_loss.append(_dataset_loss(kernels, heldout, n_levels) if heldout is not None else float("nan"))
        log.info("epoch %d train %.6g heldout %.6g", epoch, record.train_loss[-1], record.heldout_loss[-1])
        if config.checkpoint_path and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_kernels(config.checkpoint_path, kernels)

    record.seconds = time.perf_counter() - t0
    return kernels, record


# -- evaluation --------------------------------------------------------------


def evaluate_images(images: Sequence[np.ndarray], reconstructors: dict[str, Callable[[np.ndarray], np.ndarray]]):
    """Per-image loss of each reconstructor mapping a (C, H, W) Laplacian field to an image.

    Returns ``{name: [loss per image]}``.
    """
    out = {name: [] for name in reconstructors}
    for img in images:
        L = laplacian(img)
        for name, fn in reconstructors.items():
            out[name].append(mse_loss(fn(L), img))
    return out


def evaluate(image_dir, reconstructors: dict[str, Callable[[np.ndarray], np.ndarray]]) -> tuple[list[str], dict]:
    """:func:`evaluate_images` over every PNG in ``image_dir``; returns ``(names, losses)``."""
    loaded = _load_dir(image_dir)
    losses = evaluate_images([img for _, img in loaded], reconstructors)
    return [p.name for p, _ in loaded], losses


def write_record_csv(path, record: TrainRecord) -> None:
    atomic_write(path, record.to_csv())
