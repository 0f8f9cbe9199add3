import numpy as np
import pytest

from oracles import histogram_counts

from lapfield.analytics import (
    BenchResult,
    bench_csv,
    benchmark_solvers,
    central_fraction,
    dataset_distribution,
    field_histogram,
    heatmap_png,
    kernel_spectrum,
    laplace_fit,
    natural_image,
    spectra_csv,
)
from lapfield.field import laplacian
from lapfield.imageio import bundled_image_dir, read_png, write_png
from lapfield.wcnn import REFERENCE_H, init_kernels, reference_kernels


def test_constant_field_single_bin():
    h = field_histogram(np.full((2, 5, 5), 3.3), bins=9, range=(-9, 9))
    assert np.count_nonzero(h.counts[0]) == 1
    cdf = h.cdf()[0]
    assert set(np.unique(cdf)) == {0.0, 1.0}
    assert np.all(np.diff(cdf) >= 0)


def test_mirrored_field_mirrored_histogram(rng):
    f = rng.standard_normal((1, 20, 20)) * 10
    a = field_histogram(f, 257)
    b = field_histogram(-f, 257)
    # exact bin boundaries can land on either side after negation
    inner = np.abs(np.abs(f) / 0.5 - np.round(np.abs(f) / 0.5)) > 1e-9
    assert inner.all()
    assert np.array_equal(a.counts[0], b.counts[0][::-1])


def test_counts_match_loop_oracle(rng):
    f = rng.uniform(-100, 100, (8, 8))
    h = field_histogram(f, bins=13, range=(-50, 60))
    assert h.counts[0].tolist() == histogram_counts(f, 13, -50, 60)


def test_conservation_and_cdf(natural_images):
    h = field_histogram(laplacian(natural_images[0]))
    assert h.counts.sum(axis=1).tolist() == [256 * 256] * 3
    assert np.all(h.cdf()[:, -1] == 1.0)
    assert np.all(np.diff(h.cdf(), axis=1) >= 0)
    assert h.pmf(pooled=True).sum() == pytest.approx(1.0)
    assert (h.density(pooled=True) * np.diff(h.edges)).sum() == pytest.approx(1.0)
    assert h.bins == 257 and 0.0 in h.centers


def test_histogram_errors():
    with pytest.raises(ValueError):
        field_histogram(np.zeros(0))
    with pytest.raises(ValueError):
        field_histogram(np.zeros(4), bins=1)
    with pytest.raises(ValueError):
        field_histogram(np.zeros(4), range=(1, 1))


def test_dataset_distribution_single_and_duplicate(tmp_path, natural_images):
    write_png(tmp_path / "a.png", natural_images[0])
    one = dataset_distribution(tmp_path)
    assert np.array_equal(one.mean_density, one.per_image[0])
    write_png(tmp_path / "b.png", natural_images[0])
    two = dataset_distribution(tmp_path)
    assert np.allclose(two.mean_density, one.mean_density, rtol=1e-15, atol=0)


def test_dataset_distribution_order_invariant(tmp_path, natural_images):
    write_png(tmp_path / "a.png", natural_images[1])
    write_png(tmp_path / "b.png", natural_images[2])
    d1 = dataset_distribution(tmp_path)
    (tmp_path / "a.png").rename(tmp_path / "c.png")
    d2 = dataset_distribution(tmp_path)
    assert np.allclose(d1.mean_density, d2.mean_density, rtol=1e-15, atol=0)


def test_dataset_distribution_csv_and_errors(tmp_path):
    d = dataset_distribution(bundled_image_dir(), bins=33, range=(-16, 16), kind="gradient")
    lines = d.to_csv().splitlines()
    assert lines[0].startswith("bin_center,mean_density,log10_mean_density,00_astronaut.png")
    assert len(lines) == 34
    with pytest.raises(Exception):
        dataset_distribution(tmp_path)
    with pytest.raises(ValueError):
        dataset_distribution(bundled_image_dir(), kind="phase")


def test_laplacian_sparser_than_intensity(natural_paths):
    assert len(natural_paths) >= 10
    for p in natural_paths:
        img = read_png(p)
        assert central_fraction(laplacian(img)) > central_fraction(img - img.mean())


def test_laplace_fit():
    assert laplace_fit(np.zeros(10))[:2] == (0.0, 0.0)
    mu, b, _ = laplace_fit(np.array([-3.0, 3.0] * 50))
    assert mu == 0.0 and b == 3.0
    x = np.random.default_rng(7).laplace(0.0, 2.0, 100_000)
    assert 1.9 <= laplace_fit(x)[1] <= 2.1


def test_central_fraction():
    assert central_fraction(np.zeros(5)) == 1.0
    assert central_fraction(np.array([-10.0, 0.5, 1.0, 2.0])) == 0.5


def test_kernel_spectrum():
    d = np.zeros((5, 5))
    d[2, 2] = 1
    assert np.allclose(kernel_spectrum(d, 16), 1.0)
    assert np.all(kernel_spectrum(np.zeros((3, 3)), 8) == 0)
    with pytest.raises(ValueError):
        kernel_spectrum(np.ones((5, 5)), 4)


def test_reference_h_is_low_pass():
    s = kernel_spectrum(np.array(REFERENCE_H), 64)
    dc = s[32, 32]
    edge = np.concatenate([s[0, :], s[:, 0]])
    assert dc > edge.max()


def test_symmetric_kernel_spectrum_symmetric(rng):
    k = rng.standard_normal((5, 5))
    k = k + k[::-1, ::-1]
    s = kernel_spectrum(k, 32)
    # DC sits at (16, 16); frequency f maps to 32 - f about it
    assert np.allclose(s[1:, 1:], s[1:, 1:][::-1, ::-1])


def test_spectra_csv_and_heatmap(tmp_path):
    text = spectra_csv(reference_kernels(1), 8)
    lines = text.splitlines()
    assert lines[0] == "kernel,channel,fy,fx,magnitude" and len(lines) == 1 + 3 * 64
    heatmap_png(tmp_path / "h.png", kernel_spectrum(np.array(REFERENCE_H), 16))
    img = read_png(tmp_path / "h.png")
    assert img.shape == (1, 16, 16) and img.max() == 255 and img.min() == 0


def test_natural_image():
    a = natural_image(64, 3, seed=1)
    assert a.shape == (3, 64, 64) and a.min() == 0 and a.max() == pytest.approx(255)
    assert np.array_equal(a, natural_image(64, 3, seed=1))


def test_benchmark_rows_sorted():
    rows = benchmark_solvers([32, 16], ["multigrid", "dst"], reps=3, seed=0)
    assert [(r.solver, r.resolution) for r in rows] == [("dst", 16), ("dst", 32), ("multigrid", 16), ("multigrid", 32)]
    assert all(r.median_seconds > 0 and r.reps == 3 and r.mse < 1e-6 for r in rows)
    assert bench_csv(rows).splitlines()[0] == "solver,resolution,median_seconds,mse"
    assert len(benchmark_solvers([16], ["dst"], reps=3)) == 1


def test_benchmark_wcnn_and_errors():
    rows = benchmark_solvers([16], ["wcnn"], reps=3, kernels=init_kernels(3, 5))
    assert rows[0].solver == "wcnn"
    with pytest.raises(ValueError):
        benchmark_solvers([16], ["wcnn"], reps=3)
    with pytest.raises(ValueError):
        benchmark_solvers([16], ["fft"], reps=3)
    with pytest.raises(ValueError):
        benchmark_solvers([16], ["dst"], reps=2)
    with pytest.raises(ValueError):
        BenchResult("dst", 16, 1, 0.1, 0.0)
