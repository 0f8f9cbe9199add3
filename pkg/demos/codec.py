"""
Lossy coding by thresholding the Laplacian
==========================================

Zero out small Laplacian values, quantize the rest, store the container and
see what the reconstruction costs in bytes and in error.
"""

import numpy as np

from lapfield.codec import decode, deserialize, encode, serialize, sparsity_ratio
from lapfield.imageio import bundled_image_dir, list_images, read_png

img = read_png(list_images(bundled_image_dir())[0])
raw = img.size

for threshold, quant in ((0, 0), (1, 0), (4, 1), (8, 2), (16, 4)):
    for mode in ("dense", "sparse"):
        enc = encode(img, "k0", threshold, quant, mode)
        blob = serialize(enc)
        u = decode(deserialize(blob))
        mse = np.mean((u - img) ** 2)
        print(f"T={threshold:2d} q={quant} {mode:6s} nonzero {sparsity_ratio(enc):.3f}  "
              f"{len(blob) / raw:5.2f} bytes/sample  PSNR {10 * np.log10(255**2 / max(mse, 1e-12)):6.2f} dB")
