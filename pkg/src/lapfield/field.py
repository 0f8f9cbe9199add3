"""Discrete Laplacian stencils and the zero-padded forward transform.

Images and fields are float64 arrays in channel-planar layout ``(C, H, W)``.
A bare ``(H, W)`` array is accepted everywhere and treated as one channel;
results keep the dimensionality of the input.

Pixels outside the grid are taken as 0. That is the discrete form of the
Dirichlet condition ``u = 0`` on the boundary, and it is what makes
``laplacian`` exactly invertible by the Poisson solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "STENCIL_IDS",
    "Stencil",
    "stencil",
    "as_planar",
    "laplacian",
    "apply_laplacian",
    "gradient_x",
]

STENCIL_IDS = ("k0", "k1", "k2", "k3")

_COEFFS = {
    "k0": [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]],
    "k1": [[0.5, 0.5, 0.5], [0.5, -4.0, 0.5], [0.5, 0.5, 0.5]],
    "k2": [[-0.25, 1.25, -0.25], [1.25, -4.0, 1.25], [-0.25, 1.25, -0.25]],
    "k3": [[1 / 3, 2 / 3, 1 / 3], [2 / 3, -4.0, 2 / 3], [1 / 3, 2 / 3, 1 / 3]],
}


@dataclass(frozen=True, eq=False)
class Stencil:
    """A 3x3 discrete Laplacian stencil."""

    id: str
    coeffs: np.ndarray

    @property
    def center(self) -> float:
        return float(self.coeffs[1, 1])

    @property
    def taps(self) -> list[tuple[int, int, float]]:
        """Nonzero off-center taps as ``(dy, dx, weight)`` in row-major order."""
        return [
            (dy - 1, dx - 1, float(self.coeffs[dy, dx]))
            for dy in range(3)
            for dx in range(3)
            if (dy, dx) != (1, 1) and self.coeffs[dy, dx] != 0.0
        ]

    @property
    def index(self) -> int:
        return STENCIL_IDS.index(self.id)

    def __repr__(self) -> str:
        return f"Stencil({self.id!r})"


def stencil(id: str | Stencil = "k0") -> Stencil:
    """Return one of the four standard stencils ``k0`` .. ``k3``.

    ``k0`` is the 5-point stencil and the default throughout the package.
    Passing a :class:`Stencil` returns it unchanged.
    """
    if isinstance(id, Stencil):
        return id
    if id not in _COEFFS:
        raise ValueError(f"unknown stencil {id!r}; expected one of {STENCIL_IDS}")
    coeffs = np.array(_COEFFS[id], dtype=np.float64)
    coeffs.setflags(write=False)
    return Stencil(id, coeffs)


def as_planar(arr, name: str = "image", min_side: int = 3) -> np.ndarray:
    """Validate ``arr`` and return it as a float64 ``(C, H, W)`` array."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError(f"{name} must be (H, W) or (C, H, W), got shape {a.shape}")
    if a.shape[1] < min_side or a.shape[2] < min_side:
        raise ValueError(f"{name} must be at least {min_side}x{min_side}, got {a.shape[1]}x{a.shape[2]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def apply_laplacian(u: np.ndarray, st: str | Stencil = "k0") -> np.ndarray:
    """Matrix-free zero-padded stencil correlation over the last two axes.

    No validation; solvers call this in their inner loops to form residuals.
    Leading axes are processed independently.
    """
    st = stencil(st)
    u = np.asarray(u, dtype=np.float64)
    h, w = u.shape[-2:]
    up = np.zeros(u.shape[:-2] + (h + 2, w + 2))
    up[..., 1:-1, 1:-1] = u
    out = st.center * u
    for dy, dx, wgt in st.taps:
        out += wgt * up[..., 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def laplacian(image, st: str | Stencil = "k0") -> np.ndarray:
    """Laplacian field of ``image`` under zero (Dirichlet) padding.

    >>> laplacian(np.full((3, 3), 5.0))
    array([[-10.,  -5., -10.],
           [ -5.,   0.,  -5.],
           [-10.,  -5., -10.]])
    """
    squeeze = np.ndim(image) == 2
    u = as_planar(image)
    out = apply_laplacian(u, st)
    return out[0] if squeeze else out


def gradient_x(image) -> np.ndarray:
    """Forward difference along columns with a zero exterior: ``u[i, j+1] - u[i, j]``."""
    squeeze = np.ndim(image) == 2
    u = as_planar(image)
    g = -u.copy()
    g[..., :, :-1] += u[..., :, 1:]
    return g[0] if squeeze else g
