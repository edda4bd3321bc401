"""Unsupervised training of NNBF and sum-rate sweeps against the baselines.

Training never sees a reference beamformer: each step draws an SNR per batch
item, runs the network on the channels alone and minimizes the negative
sum-rate of its own output.
"""

from dataclasses import dataclass, field
import csv
import io
import logging
import math
import time

import numpy as np

from .autodiff import AdamW, no_grad
from .beamform import batch_sum_rate, mmse_masked, sinr_per_ue, sum_rate, uniform_rate_weights, zfbf_masked
from .channel import SystemDims, batch_rng, generate_dataset, get_profile, noise_variance
from .network import NnbfNetwork, build_network, forward_beamformer, nnbf_loss

log = logging.getLogger(__name__)

IMPROVEMENT_THRESHOLD = 1e-8
TRAIN_SNR_STREAM = 7
VAL_SNR_STREAM = 8
FRESH_DATA_STREAM = 1000


def snr_grid(snr_min=-15.0, snr_max=35.0, step=5.0):
    """Inclusive SNR grid in dB."""
    count = int(math.floor((snr_max - snr_min) / step + 1e-9)) + 1
    return tuple(float(snr_min + i * step) for i in range(count))


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    An epoch improves when its validation loss is below the best so far by
    more than ``threshold``. The stagnation counter resets after a reduction.
    """

    def __init__(self, lr, patience=3, factor=0.5, threshold=IMPROVEMENT_THRESHOLD):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.threshold = threshold
        self.best = math.inf
        self.stagnant = 0

    def step(self, val_loss):
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.stagnant = 0
        else:
            self.stagnant += 1
        if self.stagnant >= self.patience:
            self.lr *= self.factor
            self.stagnant = 0
        return self.lr


def lr_schedule_step(current_lr, val_history, patience=3, factor=0.5):
    """Learning rate to use after the last epoch in ``val_history``.

    Replays the plateau rule over the whole history; ``current_lr`` is scaled
    only if a reduction fires on the final epoch.
    """
    sched = PlateauScheduler(1.0, patience, factor)
    fired = False
    for v in val_history:
        before = sched.lr
        sched.step(v)
        fired = sched.lr != before
    return current_lr * factor if fired else current_lr


@dataclass
class TrainConfig:
    dims: SystemDims
    snr_grid_db: tuple = field(default_factory=snr_grid)
    epochs: int = 50
    lr: float = 1e-4
    scheduler_patience: int = 3
    scheduler_factor: float = 0.5
    rate_weights: np.ndarray = None
    train_batches: int = 100
    val_batches: int = 25
    seed: int = 0
    weight_decay: float = 0.01
    hidden_width: int = 1024
    snr_input: bool = False
    fresh_data: bool = False
    profile: str = "tdl-a"

    def __post_init__(self):
        if self.rate_weights is None:
            self.rate_weights = uniform_rate_weights(self.dims.n_ues)
        self.rate_weights = np.asarray(self.rate_weights, dtype=np.float64)
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.train_batches < 1 or self.val_batches < 1:
            raise ValueError("train_batches and val_batches must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.scheduler_patience < 1:
            raise ValueError("scheduler_patience must be >= 1")
        if abs(self.rate_weights.sum() - 1.0) > 1e-9:
            raise ValueError("rate weights must sum to 1")
        if not self.snr_grid_db:
            raise ValueError("empty SNR grid")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def train_loss(self):
        return [r.train_loss for r in self.records]

    @property
    def val_loss(self):
        return [r.val_loss for r in self.records]

    @property
    def lr(self):
        return [r.lr for r in self.records]

    def to_csv(self, include_time=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
        for r in self.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr),
                             f"{r.seconds:.3f}" if include_time else ""])
        return buf.getvalue()


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, batch, param_norms):
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms
        worst = sorted(param_norms.items(), key=lambda kv: -kv[1])[:3]
        summary = ", ".join(f"{k}={v:.3g}" for k, v in worst)
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}; "
                         f"largest parameter norms: {summary}")


def _check_dims(dataset, dims, what):
    for b in dataset:
        if b.dims.shape[1:] != dims.shape[1:]:
            raise ValueError(f"{what} batch dims {b.dims} do not match {dims}")


def _draw_snr(rng, grid, size):
    return np.asarray(grid)[rng.integers(len(grid), size=size)]


def validation_loss(net, val_data, cfg, snrs=None):
    """Mean eval-mode loss over ``val_data`` with per-item SNRs from a fixed stream."""
    was_training = net.training
    net.eval()
    rng = batch_rng(cfg.seed, VAL_SNR_STREAM, 0)
    total = 0.0
    with no_grad():
        for batch in val_data:
            snr = _draw_snr(rng, cfg.snr_grid_db, batch.data.shape[0]) if snrs is None else snrs
            w = net(batch, snr)
            total += nnbf_loss(w, batch, noise_variance(snr), cfg.rate_weights).item()
    net.train(was_training)
    return total / len(val_data)


def train(cfg, train_data, val_data, net=None, callback=None):
    """Train NNBF on ``train_data``; returns ``(net, history)``.

    With ``cfg.fresh_data`` the training set is regenerated every epoch from
    ``cfg.profile`` (``train_data`` is then only used for epoch 0).
    """
    _check_dims(train_data, cfg.dims, "training")
    _check_dims(val_data, cfg.dims, "validation")
    if net is None:
        net = build_network(cfg.dims, cfg.hidden_width, seed=cfg.seed,
                            snr_input=cfg.snr_input)
    opt = AdamW(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(cfg.lr, cfg.scheduler_patience, cfg.scheduler_factor)
    snr_rng = batch_rng(cfg.seed, TRAIN_SNR_STREAM, 0)
    profile = get_profile(cfg.profile) if cfg.fresh_data else None
    history = TrainHistory()

    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if cfg.fresh_data and epoch > 0:
            train_data = generate_dataset(cfg.dims, profile, cfg.train_batches, cfg.seed,
                                          stream=FRESH_DATA_STREAM + epoch)
        net.train()
        order = snr_rng.permutation(len(train_data))
        losses = []
        for i in order:
            batch = train_data[i]
            snr = _draw_snr(snr_rng, cfg.snr_grid_db, batch.data.shape[0])
            opt.zero_grad()
            loss = nnbf_loss(net(batch, snr), batch, noise_variance(snr), cfg.rate_weights)
            value = loss.item()
            if not math.isfinite(value):
                norms = {name: float(np.linalg.norm(p.data))
                         for name, p in net.named_parameters()}
                raise TrainingDivergedError(epoch, int(i), norms)
            loss.backward()
            opt.step()
            losses.append(value)
        val = validation_loss(net, val_data, cfg)
        lr_used = opt.lr
        opt.lr = sched.step(val)
        record = EpochRecord(epoch + 1, float(np.mean(losses)), val, lr_used,
                             time.perf_counter() - start)
        history.records.append(record)
        log.info("epoch %d train %.5f val %.5f lr %.3g (%.1fs)", record.epoch,
                 record.train_loss, record.val_loss, record.lr, record.seconds)
        if callback is not None:
            callback(record)
    net.eval()
    return net, history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    snr_db: float
    method: str
    mean_sum_rate: float
    n_samples: int
    n_skipped: int


SWEEP_HEADER = ["snr_db", "method", "mean_sum_rate_bps_hz", "n_samples", "n_skipped"]


def _baseline_rates(method, h, sigma2, alpha):
    if method == "zfbf":
        w, ok = zfbf_masked(h)
    elif method == "mmse":
        w, ok = mmse_masked(h, sigma2)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    # singular instances get a placeholder filter so the SINR stays defined;
    # the caller drops them through ``ok``
    w = np.where(ok[..., None, None], w, 1.0)
    with np.errstate(all="ignore"):
        rates = sum_rate(sinr_per_ue(w, h, sigma2), alpha)
    return rates, ok


def evaluate_sum_rate(method, dataset, snr_grid_db, alpha=None):
    """Mean sum-rate of one method at every SNR of the grid.

    ``method`` is ``"zfbf"``, ``"mmse"`` or an ``NnbfNetwork``. Baselines are
    solved per subcarrier; channel instances whose Gram matrix is singular
    are skipped and counted. Returns a list of ``SweepRow``.
    """
    is_net = isinstance(method, NnbfNetwork)
    name = "nnbf" if is_net else method
    totals = {s: [0.0, 0, 0] for s in snr_grid_db}
    weights = None
    for batch in dataset:
        h = batch.matrices()                                # (B, K, M, N)
        if alpha is None:
            alpha = uniform_rate_weights(h.shape[-1])
        if is_net and not method.snr_input:
            weights = forward_beamformer(method, batch)
        for snr in snr_grid_db:
            sigma2 = float(noise_variance(snr))
            if is_net:
                w = forward_beamformer(method, batch, snr) if method.snr_input else weights
                rates = batch_sum_rate(w, batch, sigma2, alpha)
                ok = np.ones(rates.shape, dtype=bool)
            else:
                rates, ok = _baseline_rates(method, h, sigma2, alpha)
            acc = totals[snr]
            acc[0] += float(rates[ok].sum())
            acc[1] += int(ok.sum())
            acc[2] += int((~ok).sum())
    rows = []
    for snr in snr_grid_db:
        total, count, skipped = totals[snr]
        mean = total / count if count else float("nan")
        rows.append(SweepRow(float(snr), name, mean, count, skipped))
    return rows


def sweep(net, dataset, snr_grid_db, alpha=None, methods=("nnbf", "zfbf", "mmse")):
    """Rows for every requested method, grouped by method then SNR."""
    rows = []
    for m in methods:
        if m == "nnbf":
            if net is None:
                continue
            rows.extend(evaluate_sum_rate(net, dataset, snr_grid_db, alpha))
        else:
            rows.extend(evaluate_sum_rate(m, dataset, snr_grid_db, alpha))
    return rows


def sweep_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in rows:
        writer.writerow([f"{r.snr_db:g}", r.method, repr(r.mean_sum_rate),
                         r.n_samples, r.n_skipped])
    return buf.getvalue()
