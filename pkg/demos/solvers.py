"""
Six ways back from a Laplacian
==============================

Encode one bundled image losslessly, then reconstruct it with every solver
and report accuracy, iterations and wall time.
"""

import time

from lapfield.codec import decode, encode
from lapfield.imageio import bundled_image_dir, list_images, read_png
from lapfield.solvers import SOLVERS, SolverConfig

img = read_png(list_images(bundled_image_dir())[0])[:, :64, :64]
enc = encode(img)

for name in SOLVERS:
    t0 = time.perf_counter()
    u, report = decode(enc, SolverConfig(name, tol=1e-8), clamp=False, return_report=True)
    dt = time.perf_counter() - t0
    print(f"{name:13s} max error {abs(u - img).max():.2e}  iterations {report.iterations:6d}  {dt * 1e3:8.1f} ms")

# the direct DST solver handles full-size images in a fraction of a second
full = read_png(list_images(bundled_image_dir())[0])
t0 = time.perf_counter()
u = decode(encode(full), SolverConfig("dst"), clamp=False)
print(f"dst on {full.shape[1]}x{full.shape[2]}: max error {abs(u - full).max():.2e} "
      f"in {time.perf_counter() - t0:.3f} s")
