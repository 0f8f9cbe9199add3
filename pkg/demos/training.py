"""
Training the network on desk-sized data
=======================================

A short run on patches from the bundled images. The held-out loss should
fall steadily; longer runs are in tools/train_default_checkpoint.py.
"""

from lapfield.imageio import bundled_image_dir
from lapfield.train import TrainConfig, desk_datasets, train_loop

train, heldout = desk_datasets(bundled_image_dir(), patch_size=64, n_train=64, n_heldout=32, seed=0)
cfg = TrainConfig(batch_size=16, learning_rate=1e-3, epochs=15, kernel_size=5, seed=3)
kernels, record = train_loop(cfg, train, heldout)

print(f"initial held-out loss {record.initial_heldout_loss:.1f}")
for epoch, (tr, ho) in enumerate(zip(record.train_loss, record.heldout_loss), start=1):
    print(f"epoch {epoch:3d}  train {tr:10.1f}  held-out {ho:10.1f}")
print(f"{record.seconds:.1f} s, final/initial {record.heldout_loss[-1] / record.initial_heldout_loss:.3f}")
