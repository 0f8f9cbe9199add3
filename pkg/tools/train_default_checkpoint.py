"""Train the bundled default checkpoint (3 channels, 5x5 kernels, 177 parameters).

    python tools/train_default_checkpoint.py

Patches come from the bundled natural crops; the run is fully seeded.
"""

import logging

from lapfield.imageio import bundled_image_dir
from lapfield.train import TrainConfig, desk_datasets, train_loop
from lapfield.wcnn import default_checkpoint_path, save_kernels

SEED = 0


def main():
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    train, held = desk_datasets(bundled_image_dir(), patch_size=64, n_train=400, n_heldout=64, seed=SEED)
    config = TrainConfig(batch_size=32, learning_rate=1e-3, epochs=300, kernel_size=5, seed=SEED + 3)
    kernels, record = train_loop(config, train, held)
    print(f"held-out loss {record.initial_heldout_loss:.4g} -> {record.heldout_loss[-1]:.4g}"
          f" in {record.seconds:.0f} s")
    save_kernels(default_checkpoint_path(), kernels)
    print("wrote", default_checkpoint_path())


if __name__ == "__main__":
    main()
