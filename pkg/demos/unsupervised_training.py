"""
Training the neural beamformer without labels
=============================================

The network only ever sees channels. Its loss is the negative sum-rate of
its own (power-normalized) output, so no reference beamformer is computed
during training. A short run at toy scale shows the loss dropping and how
far a small model sits from the classical receivers.
"""

import numpy as np

from nnbf.channel import SystemDims, generate_dataset, tdl_a
from nnbf.network import forward_beamformer
from nnbf.training import TrainConfig, evaluate_sum_rate, train

dims = SystemDims.from_rb(2, 4, resource_blocks=1, batch=8)
cfg = TrainConfig(dims=dims, epochs=15, lr=1e-3, hidden_width=128,
                  train_batches=20, val_batches=5, snr_grid_db=(10.0,), seed=1)

profile = tdl_a()
train_set = generate_dataset(dims, profile, cfg.train_batches, seed=1, stream=0)
val_set = generate_dataset(dims, profile, cfg.val_batches, seed=1, stream=1)
test_set = generate_dataset(dims, profile, 5, seed=1, stream=2)

net, history = train(cfg, train_set, val_set,
                     callback=lambda r: print(f"epoch {r.epoch:2d}  train {r.train_loss:.4f}"
                                              f"  val {r.val_loss:.4f}  lr {r.lr:g}"))

# every output satisfies the receive-power constraint tr(W^H W) = M
w = forward_beamformer(net, test_set[0])
print("\ntrace per subcarrier:", np.round(w.trace_power()[0, :4], 12), "...")

for method in (net, "zfbf", "mmse"):
    row = evaluate_sum_rate(method, test_set, (10.0,))[0]
    print(f"{row.method:5s} at 10 dB: {row.mean_sum_rate:.3f} bit/s/Hz")
