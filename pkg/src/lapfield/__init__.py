"""Images as sparse Laplacian fields, and Poisson solvers to get them back."""

__version__ = "0.1.0"
