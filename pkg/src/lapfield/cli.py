"""``lapfield`` command line: encode, decode, train, eval, stats, spectrum, bench.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
input), 3 numerical failure (divergence or a solver that did not converge).
Every output file is written atomically, and only after all work succeeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .analytics import (
    DEFAULT_BINS,
    DEFAULT_RANGE,
    FIELD_KINDS,
    bench_csv,
    benchmark_solvers,
    central_fraction,
    dataset_distribution,
    heatmap_bytes,
    kernel_spectrum,
    laplace_fit,
    spectra_csv,
)
from .codec import MAGIC, VERSION, CodecError, decode, deserialize, encode, serialize
from .field import STENCIL_IDS, laplacian
from .imageio import ImageError, atomic_write, bundled_image_dir, encode_png, list_images, read_png
from .solvers import SOLVERS, SolverConfig, SolverError, solve_dst
from .train import TrainConfig, TrainingDiverged, desk_datasets, evaluate, train_loop
from .wcnn import (
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
    CheckpointError,
    KernelSet,
    default_kernels,
    forward,
    kernels_to_json,
    load_kernels,
    reference_kernels,
)

__all__ = ["main", "run", "build_parser", "DATA_ENV"]

DATA_ENV = "LAPFIELD_DATA"
DECODE_SOLVERS = SOLVERS + ("wcnn",)
log = logging.getLogger("lapfield")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(defaults: bool) -> argparse.ArgumentParser:
    # Shared flags accepted both before and after the subcommand. Subparsers
    # suppress defaults so they do not overwrite a value given up front.
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="numba worker threads (default 1)")
    p.add_argument("-v", "--verbose", action="count", default=d(0), help="more logging")
    return p


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-6, help="relative residual target")
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--omega", type=float, default=None, help="SOR relaxation factor")
    p.add_argument("--mg-levels", type=int, default=None)
    p.add_argument("--mg-smooth", type=int, default=2)


def _data_default() -> str | None:
    return os.environ.get(DATA_ENV)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(
        prog="lapfield",
        description="Images as Laplacian fields: encode, reconstruct, train and analyse.",
        parents=[_common(True)],
    )
    top.add_argument("--version", action="store_true", help="print version and format compatibility")
    sub = top.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    common = _common(False)

    p = sub.add_parser("encode", parents=[common], help="image -> .lapc container")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stencil", choices=STENCIL_IDS, default="k0")
    p.add_argument("--threshold", type=float, default=0.0, help="dead zone: |L| <= T becomes 0")
    p.add_argument("--quant", type=float, default=0.0, help="quantization step, 0 for none")
    p.add_argument("--mode", choices=("sparse", "dense"), default="sparse")

    p = sub.add_parser("decode", parents=[common], help=".lapc container -> image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--solver", choices=DECODE_SOLVERS, default="dst")
    p.add_argument("--checkpoint", help="kernel checkpoint for --solver wcnn ('default' for the bundled one)")
    p.add_argument("--reference", help="ground-truth PNG; prints the reconstruction MSE")
    p.add_argument("--error-map", help="write |U - reference| (channel mean) as a grayscale PNG")
    p.add_argument("--bitdepth", type=int, choices=(8, 16), default=8)
    _solver_flags(p)

    p = sub.add_parser("train", parents=[common], help="fit the network on image patches")
    p.add_argument("--data", default=_data_default(), help=f"image directory (default ${DATA_ENV} or bundled)")
    p.add_argument("--patch-size", type=int, default=64)
    p.add_argument("--patches", type=int, default=200)
    p.add_argument("--heldout-patches", type=int, default=64)
    p.add_argument("--heldout-fraction", type=float, default=0.2)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--kernel-size", type=int, default=5)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--record", help="CSV of per-epoch losses")

    p = sub.add_parser("eval", parents=[common], help="reconstruction loss over a directory")
    p.add_argument("--data", default=_data_default())
    p.add_argument("--checkpoint", help="kernels to evaluate ('default' for the bundled one)")
    p.add_argument("--baseline-checkpoint", help="second kernel set, reported as its own column")
    p.add_argument("--dst-baseline", action="store_true", help="add the exact DST solver as a column")
    p.add_argument("--out", help="CSV with one row per image and a final mean row")

    p = sub.add_parser("stats", parents=[common], help="field histograms over a directory")
    p.add_argument("--data", default=_data_default())
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--range", type=float, nargs=2, default=list(DEFAULT_RANGE), metavar=("LO", "HI"))
    p.add_argument("--field", choices=FIELD_KINDS, default="laplacian")

    p = sub.add_parser("spectrum", parents=[common], help="magnitude spectra of H, G, K")
    p.add_argument("--checkpoint", required=True, help="checkpoint path, 'default' or 'reference'")
    p.add_argument("--out", required=True)
    p.add_argument("--fft-size", type=int, default=64)
    p.add_argument("--heatmap-dir", help="also write one grayscale PNG per kernel and channel")

    p = sub.add_parser("bench", parents=[common], help="time decoding per solver and size")
    p.add_argument("--solvers", default="dst,multigrid")
    p.add_argument("--sizes", default="256,512,1024")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--checkpoint", help="kernels for the wcnn solver ('default' for the bundled one)")
    p.add_argument("--out", required=True)
    _solver_flags(p)
    return top


def _kernels(name: str) -> KernelSet:
    if name == "default":
        return default_kernels()
    if name == "reference":
        return reference_kernels(3)
    return load_kernels(name)


def _csv_list(text: str, conv, name: str) -> list:
    try:
        items = [conv(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name}: cannot parse {text!r}")
    if not items:
        raise UsageError(f"--{name} is empty")
    return items


def _solver_config(args, solver: str) -> SolverConfig:
    try:
        return SolverConfig(solver, args.tol, args.max_iter, args.omega, args.mg_levels, args.mg_smooth)
    except ValueError as exc:
        raise UsageError(str(exc))


def _data_dir(args) -> Path:
    return Path(args.data) if args.data else bundled_image_dir()


def _validate(args) -> None:
    """Flag combinations that must hold before any work starts."""
    cmd = args.command
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if cmd == "decode":
        if args.solver == "wcnn" and not args.checkpoint:
            raise UsageError("decode --solver wcnn requires --checkpoint")
        if args.error_map and not args.reference:
            raise UsageError("--error-map requires --reference")
    if cmd == "encode" and not (args.threshold >= 0 and args.quant >= 0):
        raise UsageError("--threshold and --quant must be >= 0")
    if cmd == "eval" and not (args.checkpoint or args.baseline_checkpoint or args.dst_baseline):
        raise UsageError("eval needs --checkpoint, --baseline-checkpoint or --dst-baseline")
    if cmd == "train":
        if args.patch_size < 3 or args.patches < 1 or args.batch < 1 or args.epochs < 0 or args.kernel_size < 1:
            raise UsageError("train: sizes and counts must be positive")
        if args.kernel_size % 2 == 0:
            raise UsageError("--kernel-size must be odd")
        if not 0 < args.heldout_fraction < 1:
            raise UsageError("--heldout-fraction must lie in (0, 1)")
    if cmd == "stats" and (args.bins < 2 or not args.range[1] > args.range[0]):
        raise UsageError("stats needs --bins >= 2 and an increasing --range")
    if cmd == "spectrum" and args.fft_size < 1:
        raise UsageError("--fft-size must be positive")
    if cmd == "bench":
        args.solver_list = _csv_list(args.solvers, str, "solvers")
        args.size_list = _csv_list(args.sizes, int, "sizes")
        bad = [s for s in args.solver_list if s not in DECODE_SOLVERS]
        if bad:
            raise UsageError(f"unknown solver(s): {', '.join(bad)}")
        if "wcnn" in args.solver_list and not args.checkpoint:
            raise UsageError("bench with the wcnn solver requires --checkpoint")
        if args.reps < 3:
            raise UsageError("--reps must be >= 3")
        if min(args.size_list) < 3:
            raise UsageError("--sizes must be >= 3")


# -- subcommands ---------------------------------------------------------------


def cmd_encode(args) -> None:
    img = read_png(args.input)
    enc = encode(img, args.stencil, args.threshold, args.quant, args.mode)
    data = serialize(enc)
    atomic_write(args.out, data)
    log.info("%s: %d/%d nonzero, %d bytes", args.out, enc.nonzeros(), enc.field.size, len(data))


def cmd_decode(args) -> None:
    try:
        enc = deserialize(Path(args.input).read_bytes())
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc}")
    kernels = _kernels(args.checkpoint) if args.solver == "wcnn" else None
    config = _solver_config(args, args.solver)
    ref = read_png(args.reference) if args.reference else None
    if ref is not None and ref.shape != enc.shape:
        raise DataError(f"reference has shape {ref.shape}, container holds {enc.shape}")
    u, report = decode(enc, config, kernels, clamp=False, return_report=True)
    if not np.all(np.isfinite(u)):
        raise NumericalError("reconstruction contains non-finite values")
    if not report.converged:
        raise NumericalError(
            f"{report.solver} did not converge: residual {report.final_residual:.3g} after {report.iterations} iterations"
        )
    png_bytes = encode_png(u, args.bitdepth)
    err_bytes = None
    if ref is not None:
        err = np.abs(u - ref)
        print(f"mse {float(np.mean((u - ref) ** 2)):.6g}")
        print(f"max_abs_error {float(err.max()):.6g}")
        if args.error_map:
            err_bytes = heatmap_bytes(err.mean(axis=0))
    atomic_write(args.out, png_bytes)
    if err_bytes is not None:
        atomic_write(args.error_map, err_bytes)
    log.info("%s: %s, %d iterations", args.out, report.solver, report.iterations)


def cmd_train(args) -> None:
    train, held = desk_datasets(
        _data_dir(args), args.patch_size, args.patches, args.heldout_patches,
        args.heldout_fraction, not args.no_augment, args.seed,
    )
    config = TrainConfig(
        batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs, kernel_size=args.kernel_size,
        n_levels=args.levels, seed=args.seed + 3,
        checkpoint_path=args.out if args.checkpoint_every else None, checkpoint_every=args.checkpoint_every,
    )
    kernels, record = train_loop(config, train, held)
    atomic_write(args.out, kernels_to_json(kernels))
    if args.record:
        atomic_write(args.record, record.to_csv())
    final = record.heldout_loss[-1] if record.heldout_loss else record.initial_heldout_loss
    print(f"heldout_loss {record.initial_heldout_loss:.6g} -> {final:.6g}")


def cmd_eval(args) -> None:
    recon = {}
    if args.checkpoint:
        k = _kernels(args.checkpoint)
        recon["wcnn"] = lambda L, k=k: forward(k, L)
    if args.baseline_checkpoint:
        k = _kernels(args.baseline_checkpoint)
        recon["baseline"] = lambda L, k=k: forward(k, L)
    if args.dst_baseline:
        recon["dst"] = solve_dst
    names, losses = evaluate(_data_dir(args), recon)
    cols = list(recon)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["image", *cols])
    for i, name in enumerate(names):
        wr.writerow([name, *(repr(losses[c][i]) for c in cols)])
    means = {c: float(np.mean(losses[c])) for c in cols}
    wr.writerow(["mean", *(repr(means[c]) for c in cols)])
    if not all(np.isfinite(v) for v in means.values()):
        raise NumericalError("non-finite loss")
    sys.stdout.write(buf.getvalue())
    if args.out:
        atomic_write(args.out, buf.getvalue())


def cmd_stats(args) -> None:
    dist = dataset_distribution(_data_dir(args), args.bins, tuple(args.range), args.field)
    atomic_write(args.out, dist.to_csv())
    if args.verbose:
        for p in list_images(_data_dir(args)):
            img = read_png(p)
            L = laplacian(img)
            mu, b, _ = laplace_fit(L)
            log.info("%s: laplace fit mu=%.3g b=%.3g, central 10%%: laplacian %.3f intensity %.3f",
                     p.name, mu, b, central_fraction(L), central_fraction(img - img.mean()))
    print(f"{len(dist.names)} images, {dist.edges.size - 1} bins -> {args.out}")


def cmd_spectrum(args) -> None:
    kernels = _kernels(args.checkpoint)
    text = spectra_csv(kernels, args.fft_size)
    maps = []
    if args.heatmap_dir:
        for name, arr in zip("HGK", kernels.arrays()):
            for c in range(arr.shape[0]):
                data = heatmap_bytes(kernel_spectrum(arr[c], args.fft_size))
                maps.append((Path(args.heatmap_dir) / f"{name}_c{c}.png", data))
    atomic_write(args.out, text)
    if maps:
        Path(args.heatmap_dir).mkdir(parents=True, exist_ok=True)
        for path, data in maps:
            atomic_write(path, data)


def cmd_bench(args) -> None:
    kernels = _kernels(args.checkpoint) if "wcnn" in args.solver_list else None
    base = _solver_config(args, "dst")
    results = benchmark_solvers(args.size_list, args.solver_list, args.reps, args.seed, kernels, config=base)
    text = bench_csv(results)
    atomic_write(args.out, text)
    sys.stdout.write(text)


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "train": cmd_train,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "spectrum": cmd_spectrum,
    "bench": cmd_bench,
}


def version_text() -> str:
    return (
        f"lapfield {__version__}\n"
        f"container: {MAGIC.decode()} version {VERSION}\n"
        f"checkpoint: {CHECKPOINT_FORMAT} version {CHECKPOINT_VERSION}\n"
    )


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv:
            raise UsageError(parser.format_usage().rstrip() + "\nlapfield: error: a command is required")
        args = parser.parse_args(argv)
        if args.version:
            sys.stdout.write(version_text())
            return 0
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip() + "\nlapfield: error: a command is required")
        _validate(args)
    except UsageError as exc:
        msg = str(exc)
        print(msg if "error:" in msg else f"lapfield: error: {msg}", file=sys.stderr)
        return 1

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    if args.threads > 1:
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))

    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lapfield: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, TrainingDiverged, SolverError, FloatingPointError) as exc:
        print(f"lapfield: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, CodecError, ImageError, CheckpointError, OSError, ValueError) as exc:
        print(f"lapfield: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
