"""Write the frozen regression data under tests/data.

    python tools/freeze_regression.py

* ``reference_kernels.json``: the reference 5x5/3x3/5x5 kernels, verbatim.
* ``regression_input_64.npy``: a seeded random 64x64 single-channel field.
* ``regression_output_64.npy``: the straight-line oracle's network output
  on that field with those kernels.

Only rerun this when the oracle itself is meant to change.
"""

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import network_forward  # noqa: E402

from lapfield.wcnn import (  # noqa: E402
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
    REFERENCE_G,
    REFERENCE_H,
    REFERENCE_K,
    default_levels,
)

DATA = ROOT / "tests" / "data"


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "channels": 1,
        "kernel_size": 5,
        "H": REFERENCE_H,
        "G": REFERENCE_G,
        "K": REFERENCE_K,
    }
    (DATA / "reference_kernels.json").write_text(json.dumps(doc, indent=1) + "\n")
    L = np.random.default_rng(20240611).standard_normal((64, 64)) * 10.0
    U = network_forward(REFERENCE_H, REFERENCE_G, REFERENCE_K, L, default_levels(L.shape))
    np.save(DATA / "regression_input_64.npy", L)
    np.save(DATA / "regression_output_64.npy", U)
    print("levels", default_levels(L.shape), "output range", U.min(), U.max())


if __name__ == "__main__":
    main()
