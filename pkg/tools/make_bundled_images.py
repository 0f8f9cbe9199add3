"""Regenerate the bundled 256x256 natural test crops from scikit-image sample data.

Run once from the repository root:

    python tools/make_bundled_images.py

Each source photo is area-resized so that its short side is 256 pixels and
then centre-cropped. Grayscale sources are replicated to three channels so
every bundled image is 8-bit RGB.
"""

from pathlib import Path

import numpy as np
import png
import skimage.data
from skimage.transform import resize

SOURCES = [
    ("astronaut", lambda: skimage.data.astronaut()),
    ("chelsea", lambda: skimage.data.chelsea()),
    ("coffee", lambda: skimage.data.coffee()),
    ("rocket", lambda: skimage.data.rocket()),
    ("coins", lambda: skimage.data.coins()),
    ("retina", lambda: skimage.data.retina()),
    ("ihc", lambda: skimage.data.immunohistochemistry()),
    ("motorcycle", lambda: skimage.data.stereo_motorcycle()[0]),
    ("camera", lambda: skimage.data.camera()),
    ("gravel", lambda: skimage.data.gravel()),
]

OUT = Path(__file__).resolve().parents[1] / "src" / "lapfield" / "data" / "natural"


def crop256(img):
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    h, w = img.shape[:2]
    s = 256 / min(h, w)
    nh, nw = max(256, round(h * s)), max(256, round(w * s))
    img = resize(img, (nh, nw), anti_aliasing=True, preserve_range=True)
    top, left = (nh - 256) // 2, (nw - 256) // 2
    img = img[top:top + 256, left:left + 256]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for i, (name, load) in enumerate(SOURCES):
        img = crop256(load())
        path = OUT / f"{i:02d}_{name}.png"
        with open(path, "wb") as fh:
            png.Writer(256, 256, greyscale=False, bitdepth=8).write(fh, img.reshape(256, -1))
        print(path.name, img.shape)


if __name__ == "__main__":
    main()
