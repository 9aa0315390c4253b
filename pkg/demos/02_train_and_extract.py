"""Train a small batch-norm network and pull penultimate-layer features."""

import numpy as np

from curato import dataset as dm, nnet

spec = dm.SyntheticSpec(class_count=4, points_per_class=150, dim=2,
                        cov_scale=0.8, seed=1)
ds, _ = dm.make_synthetic(spec)

model = nnet.Model(
    layers=(nnet.dense(2, 32), nnet.batchnorm(), nnet.relu(),
            nnet.dense(32, 16), nnet.relu(),
            nnet.dense(16, 4), nnet.softmax_xent_head()),
    input_shape=(2,), class_count=4)

cfg = nnet.TrainConfig(learning_rate=0.05, momentum=0.9, epochs=15,
                       batch_size=32, seed=0)
params, history = nnet.train(model, ds, cfg)
for h in history[::3]:
    print(f"epoch {h.epoch:2d}: loss {h.loss:.4f} accuracy {h.accuracy:.3f}")

# Features are the activations entering the dense classifier, eval mode.
features = nnet.extract_features(model, params, ds)
print("feature matrix:", features.shape, "(width =", model.penultimate_width, ")")

# Checkpoints round-trip bit-exactly.
nnet.save_checkpoint(params, model, "/tmp/demo.nnp")
loaded = nnet.load_checkpoint(model, "/tmp/demo.nnp")
same = all(np.array_equal(a[k], b[k])
           for a, b in zip(loaded.tensors, params.tensors) for k in a)
print("checkpoint round-trip bit-exact:", same)

# Simulated data-parallel step: K shards, shard-local BN, averaged grads.
x = ds.values[:64].astype(np.float64)
y = ds.labels[:64].astype(np.int64)
velocity = nnet.zero_velocity(params)
for workers in (1, 4):
    stepped, _ = nnet.data_parallel_step(model, params, x, y, workers, cfg, velocity)
    w = stepped.tensors[0]["W"]
    print(f"K={workers}: first weight after one step {w[0, 0]:+.6f}")
