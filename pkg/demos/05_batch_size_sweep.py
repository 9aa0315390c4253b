"""Batch-size sweep under a fixed epoch budget: accuracy climbs to an
interior optimum, then degrades."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from curato import dataset as dm, nnet, pipeline as pl


def circle_centers(count, radius):
    ang = 2 * np.pi * np.arange(count) / count
    return tuple((float(radius * np.cos(a)), float(radius * np.sin(a))) for a in ang)


spec = dm.SyntheticSpec(class_count=10, points_per_class=150, dim=2,
                        centers=circle_centers(10, 5.5), cov_scale=1.1,
                        contamination=0.05, seed=5)
ds, _ = dm.make_synthetic(spec)
width = 48
arch = (nnet.dense(2, width), nnet.batchnorm(), nnet.relu(),
        nnet.dense(width, width // 2), nnet.batchnorm(), nnet.relu(),
        nnet.dense(width // 2, 10), nnet.softmax_xent_head())

sizes = [8, 16, 32, 64, 128, 256, 512]
lrs = [0.02, 0.05, 0.2]
rows = pl.batch_sweep(arch, (2,), 10, ds, sizes, lrs, epochs=15, seeds=[0, 1, 2])
pl.write_sweep_csv(rows, "/tmp/demo_sweep.csv")

fig, ax = plt.subplots(figsize=(6, 4))
for lr in lrs:
    means = [np.mean([r.test_accuracy for r in rows
                      if r.learning_rate == lr and r.batch_size == b]) for b in sizes]
    ax.plot(sizes, means, marker="o", label=f"lr={lr}")
    best = sizes[int(np.argmax(means))]
    print(f"lr={lr}: best batch size {best}  "
          f"accuracies {' '.join(f'{m:.3f}' for m in means)}")
ax.set_xscale("log", base=2)
ax.set_xlabel("batch size")
ax.set_ylabel("test accuracy (3-seed mean)")
ax.legend()
fig.savefig("/tmp/demo_sweep.png", dpi=120)
print("wrote /tmp/demo_sweep.csv and /tmp/demo_sweep.png")
print("interior optimum per lr:", pl.sweep_argmax_interior(rows))
