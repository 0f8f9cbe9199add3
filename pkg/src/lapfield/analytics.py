"""Field statistics, kernel spectra and the solver benchmark harness."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .codec import decode, encode
from .field import as_planar, gradient_x, laplacian
from .imageio import atomic_write, encode_png, list_images, read_png
from .solvers import SOLVERS, SolverConfig
from .wcnn import KernelSet

__all__ = [
    "Histogram",
    "field_histogram",
    "DatasetDistribution",
    "dataset_distribution",
    "laplace_fit",
    "central_fraction",
    "kernel_spectrum",
    "spectra_csv",
    "heatmap_bytes",
    "heatmap_png",
    "natural_image",
    "BenchResult",
    "benchmark_solvers",
    "bench_csv",
    "DEFAULT_BINS",
    "DEFAULT_RANGE",
    "FIELD_KINDS",
]

DEFAULT_BINS = 257
DEFAULT_RANGE = (-64.0, 64.0)
FIELD_KINDS = ("laplacian", "gradient", "intensity")


@dataclass
class Histogram:
    """Per-channel histogram over uniform bins.

    ``counts`` has shape ``(C, bins)``; the pooled view sums channels.
    """

    edges: np.ndarray
    counts: np.ndarray

    @property
    def bins(self) -> int:
        return self.edges.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def pooled(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def pmf(self, pooled: bool = False) -> np.ndarray:
        """Fraction of samples per bin (rows sum to 1)."""
        c = self.pooled if pooled else self.counts
        return c / c.sum(axis=-1, keepdims=True)

    def density(self, pooled: bool = False) -> np.ndarray:
        """Probability density: :meth:`pmf` divided by the bin width."""
        return self.pmf(pooled) / np.diff(self.edges)

    def cdf(self, pooled: bool = False) -> np.ndarray:
        c = self.pooled if pooled else self.counts
        out = np.cumsum(c, axis=-1) / c.sum(axis=-1, keepdims=True)
        out[..., -1] = 1.0
        return out


def _bin_index(x: np.ndarray, bins: int, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((x - lo) * (bins / (hi - lo))).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def field_histogram(field, bins: int = DEFAULT_BINS, range=DEFAULT_RANGE) -> Histogram:
    """Histogram every channel of a ``(C, H, W)`` or ``(H, W)`` field.

    Values outside ``range`` land in the first or last bin.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo, hi = float(range[0]), float(range[1])
    if not hi > lo:
        raise ValueError("range must be increasing")
    f = np.asarray(field, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty field")
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    f = f.reshape(1, -1) if f.ndim < 3 else f.reshape(f.shape[0], -1)
    counts = np.stack([np.bincount(_bin_index(ch, bins, lo, hi), minlength=bins) for ch in f])
    return Histogram(np.linspace(lo, hi, bins + 1), counts)


def _field_of(img: np.ndarray, kind: str) -> np.ndarray:
    if kind == "laplacian":
        return laplacian(img, "k0")
    if kind == "gradient":
        return gradient_x(img)
    if kind == "intensity":
        return img - img.mean()
    raise ValueError(f"unknown field kind {kind!r}; choose from {FIELD_KINDS}")


@dataclass
class DatasetDistribution:
    names: list[str]
    histograms: list[Histogram]
    kind: str = "laplacian"

    @property
    def edges(self) -> np.ndarray:
        return self.histograms[0].edges

    @property
    def per_image(self) -> np.ndarray:
        """``(n_images, bins)`` pooled-channel densities."""
        return np.stack([h.density(pooled=True) for h in self.histograms])

    @property
    def mean_density(self) -> np.ndarray:
        return self.per_image.mean(axis=0)

    def to_csv(self) -> str:
        """One row per bin: center, mean density, its log10, then each image's density."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["bin_center", "mean_density", "log10_mean_density", *self.names])
        centers = self.histograms[0].centers
        per = self.per_image
        mean = self.mean_density
        with np.errstate(divide="ignore"):
            logm = np.log10(mean)
        for b in np.arange(centers.size):
            wr.writerow([repr(float(centers[b])), repr(float(mean[b])), repr(float(logm[b])),
                         *(repr(float(v)) for v in per[:, b])])
        return buf.getvalue()


def dataset_distribution(image_dir, bins: int = DEFAULT_BINS, range=DEFAULT_RANGE,
                         kind: str = "laplacian") -> DatasetDistribution:
    """Histogram the ``kind`` field (laplacian, gradient or intensity) of every image in a directory."""
    if kind not in FIELD_KINDS:
        raise ValueError(f"unknown field kind {kind!r}; choose from {FIELD_KINDS}")
    paths = list_images(image_dir)
    hists = [field_histogram(_field_of(read_png(p), kind), bins, range) for p in paths]
    return DatasetDistribution([p.name for p in paths], hists, kind)


def laplace_fit(field) -> tuple[float, float, float]:
    """Maximum-likelihood Laplace fit: ``(median, mean |x - median|, mean |x - mean|)``."""
    x = np.asarray(field, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty field")
    mu = float(np.median(x))
    return mu, float(np.mean(np.abs(x - mu))), float(np.mean(np.abs(x - x.mean())))


def central_fraction(field, fraction: float = 0.1) -> float:
    """Share of values with ``|x| <= fraction * max|x|``.

    The display range is taken as ``[-max|x|, max|x|]``, so this is the mass
    in its central ``fraction``. An all-zero field counts as fully central.
    """
    x = np.abs(np.asarray(field, dtype=np.float64)).ravel()
    if x.size == 0:
        raise ValueError("empty field")
    m = x.max()
    if m == 0:
        return 1.0
    return float(np.mean(x <= fraction * m))


def kernel_spectrum(kernel, fft_size: int = 64) -> np.ndarray:
    """DC-centred 2D DFT magnitude of ``kernel`` zero-padded to ``fft_size``."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise ValueError("kernel must be 2D")
    if fft_size < max(k.shape):
        raise ValueError(f"fft_size {fft_size} is smaller than the kernel {k.shape}")
    return np.fft.fftshift(np.abs(np.fft.fft2(k, s=(fft_size, fft_size))))


def spectra_csv(kernels: KernelSet, fft_size: int = 64) -> str:
    """Long-format spectra of every kernel and channel: kernel, channel, fy, fx, magnitude."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["kernel", "channel", "fy", "fx", "magnitude"])
    freqs = np.fft.fftshift(np.fft.fftfreq(fft_size))
    for name, arr in zip("HGK", kernels.arrays()):
        for c in np.arange(arr.shape[0]):
            s = kernel_spectrum(arr[c], fft_size)
            for i in np.arange(fft_size):
                for j in np.arange(fft_size):
                    wr.writerow([name, int(c), repr(float(freqs[i])), repr(float(freqs[j])), repr(float(s[i, j]))])
    return buf.getvalue()


def heatmap_bytes(array) -> bytes:
    """A 2D array as 8-bit grayscale PNG bytes, min to black and max to white."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("heatmap needs a 2D array")
    lo, hi = a.min(), a.max()
    scaled = np.zeros_like(a) if hi == lo else (a - lo) * (255.0 / (hi - lo))
    return encode_png(scaled, 8)


def heatmap_png(path, array) -> None:
    atomic_write(path, heatmap_bytes(array))


# -- benchmark -----------------------------------------------------------------


def natural_image(size: int, channels: int = 3, seed: int = 0) -> np.ndarray:
    """Random image with a 1/f amplitude spectrum, scaled to [0, 255]."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    out = np.empty((channels, size, size))
    for c in np.arange(channels):
        coef = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f
        coef[0, 0] = 0.0
        x = np.fft.irfft2(coef, s=(size, size))
        out[c] = (x - x.min()) * (255.0 / (x.max() - x.min()))
    return out


@dataclass
class BenchResult:
    solver: str
    resolution: int
    reps: int
    median_seconds: float
    mse: float
    times: list[float] = dc_field(default_factory=list)

    def __post_init__(self):
        if self.reps < 3:
            raise ValueError("reps must be >= 3")


def benchmark_solvers(resolutions, solvers, reps: int = 5, seed: int = 0, kernels: KernelSet | None = None,
                      images: dict[int, np.ndarray] | None = None,
                      config: SolverConfig | None = None) -> list[BenchResult]:
    """Time lossless decoding per solver and resolution.

    Each resolution gets a :func:`natural_image` (or ``images[resolution]``),
    encoded at T=0. One untimed warm-up precedes ``reps`` timed decodes; the
    median wall time and the reconstruction MSE are recorded. Rows come back
    sorted by solver, then resolution.
    """
    if reps < 3:
        raise ValueError("reps must be >= 3")
    solvers = list(solvers)
    for s in solvers:
        if s != "wcnn" and s not in SOLVERS:
            raise ValueError(f"unknown solver {s!r}")
    if "wcnn" in solvers and kernels is None:
        raise ValueError("the wcnn solver needs a checkpoint")
    channels = kernels.channels if kernels is not None else 3
    base = config or SolverConfig()
    results = []
    for name in sorted(solvers):
        cfg = replace(base, solver=name)
        for res in sorted(resolutions):
            img = images[res] if images and res in images else natural_image(res, channels, seed + res)
            img = as_planar(img)
            enc = encode(img, "k0", 0.0, 0.0)
            u = decode(enc, cfg, kernels, clamp=False)
            times = []
            for _ in np.arange(reps):
                t0 = time.perf_counter()
                u = decode(enc, cfg, kernels, clamp=False)
                times.append(time.perf_counter() - t0)
            mse = float(np.mean((u - img) ** 2))
            results.append(BenchResult(name, int(res), reps, float(np.median(times)), mse, times))
    return results


def bench_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["solver", "resolution", "median_seconds", "mse"])
    for r in results:
        wr.writerow([r.solver, r.resolution, repr(r.median_seconds), repr(r.mse)])
    return buf.getvalue()
