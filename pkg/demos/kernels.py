"""
Looking inside the pyramid network
==================================

Load the shipped 5x5 checkpoint and the reference kernels, count
parameters and inspect the frequency response of each kernel.
"""

import numpy as np

from lapfield.analytics import kernel_spectrum
from lapfield.wcnn import default_kernels, param_count, reference_kernels

trained = default_kernels()
print("parameters:", trained.n_params, "expected", param_count(3, 5))

for label, ks in (("trained", trained), ("reference", reference_kernels())):
    for name, arr in zip("HGK", ks.arrays()):
        s = kernel_spectrum(arr[0], 64)
        edge = max(s[0].max(), s[:, 0].max())
        print(f"{label:9s} {name}: sum {arr[0].sum():+.3f}  DC {s[32, 32]:.3f}  Nyquist edge max {edge:.3f}")

# horizontal cut through each H response, DC first
for label, ks in (("trained", trained), ("reference", reference_kernels())):
    s = kernel_spectrum(ks.H[0], 64)
    print(f"{label:9s} H profile:", np.round(s[32, 32:], 2)[::4])
