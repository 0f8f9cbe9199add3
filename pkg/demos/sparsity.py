"""
How sparse is the Laplacian of a photograph?
============================================

Histogram the 5-point Laplacian of every bundled image and compare its
concentration around zero with that of the raw (mean-centred) intensities.
"""

import numpy as np

from lapfield.analytics import central_fraction, dataset_distribution, laplace_fit
from lapfield.field import laplacian
from lapfield.imageio import bundled_image_dir, list_images, read_png

# one row per image: how much mass sits in the central 10% of each field's range
for path in list_images(bundled_image_dir()):
    img = read_png(path)
    L = laplacian(img)
    med, b, _ = laplace_fit(L)
    print(f"{path.stem:14s} laplacian {central_fraction(L):.3f}  "
          f"intensity {central_fraction(img - img.mean()):.3f}  laplace scale {b:.2f}")

# pooled density over the whole set, the curve one would plot on a log axis
dist = dataset_distribution(bundled_image_dir())
centers = dist.histograms[0].centers
density = dist.mean_density
for v in (-32, -8, -2, 0, 2, 8, 32):
    i = int(np.argmin(np.abs(centers - v)))
    print(f"density at {v:+4d}: {density[i]:.2e}")
