import numpy as np
import pytest

import nnbf.beamform
import nnbf.linalg
import nnbf.training as training
from nnbf.channel import ChannelBatch, SystemDims, generate_dataset, tdl_a, toy_profile
from nnbf.training import (
    PlateauScheduler,
    SWEEP_HEADER,
    TrainConfig,
    TrainingDivergedError,
    evaluate_sum_rate,
    lr_schedule_step,
    snr_grid,
    sweep,
    sweep_to_csv,
    train,
)

DIMS = SystemDims(2, 4, 12, 4)


def tiny(epochs=2, **kw):
    kw.setdefault("hidden_width", 16)
    kw.setdefault("train_batches", 3)
    kw.setdefault("val_batches", 2)
    cfg = TrainConfig(dims=DIMS, epochs=epochs, **kw)
    tr = generate_dataset(DIMS, toy_profile(), cfg.train_batches, seed=cfg.seed, stream=0)
    va = generate_dataset(DIMS, toy_profile(), cfg.val_batches, seed=cfg.seed, stream=1)
    return cfg, tr, va


def test_snr_grid_default():
    assert snr_grid() == tuple(float(s) for s in range(-15, 40, 5))
    assert len(snr_grid()) == 11
    assert snr_grid(0, 0, 1) == (0.0,)


def test_schedule_halves_after_three_stagnant_epochs():
    assert lr_schedule_step(1e-4, [5.0, 5.0, 5.0, 5.0]) == pytest.approx(5e-5)
    assert lr_schedule_step(1e-4, [5.0, 5.0, 5.0]) == 1e-4


def test_schedule_keeps_lr_while_improving():
    assert lr_schedule_step(1e-4, [5.0, 4.0, 3.0, 2.0]) == 1e-4


def test_schedule_counter_resets_on_improvement():
    assert lr_schedule_step(1e-4, [5.0, 5.0, 5.0, 4.0, 4.0, 4.0]) == 1e-4
    assert lr_schedule_step(1e-4, [5.0, 5.0, 5.0, 4.0, 4.0, 4.0, 4.0]) == pytest.approx(5e-5)


def test_plateau_scheduler_single_halving_then_reset():
    sched = PlateauScheduler(1e-4)
    lrs = [sched.step(v) for v in [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]]
    assert lrs == [1e-4, 1e-4, 1e-4, 5e-5, 5e-5, 5e-5]
    assert sched.step(1.0) == pytest.approx(2.5e-5)


def test_tiny_improvement_counts_as_stagnant():
    sched = PlateauScheduler(1.0, patience=1)
    sched.step(1.0)
    assert sched.step(1.0 - 1e-9) == 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dims=DIMS, lr=0)
    with pytest.raises(ValueError):
        TrainConfig(dims=DIMS, epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(dims=DIMS, rate_weights=[0.3, 0.3])
    with pytest.raises(ValueError):
        TrainConfig(dims=DIMS, snr_grid_db=())


def test_one_epoch_smoke():
    cfg, tr, va = tiny(epochs=1)
    net, hist = train(cfg, tr, va)
    assert len(hist) == 1
    rec = hist.records[0]
    assert np.isfinite(rec.train_loss) and np.isfinite(rec.val_loss)
    assert rec.lr == cfg.lr
    assert not net.training


def test_history_csv_layout():
    cfg, tr, va = tiny(epochs=3)
    _, hist = train(cfg, tr, va)
    lines = hist.to_csv().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,lr,seconds"
    assert len(lines) == 4
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "3"]


def test_reduced_scale_training_makes_progress():
    dims = SystemDims(2, 4, 12, 8)
    cfg = TrainConfig(dims=dims, epochs=12, lr=1e-3, hidden_width=64, train_batches=10,
                      val_batches=4, snr_grid_db=(10.0,), seed=3)
    tr = generate_dataset(dims, tdl_a(), 10, seed=3, stream=0)
    va = generate_dataset(dims, tdl_a(), 4, seed=3, stream=1)
    _, hist = train(cfg, tr, va)
    assert np.mean(hist.train_loss[-3:]) < np.mean(hist.train_loss[:3])
    assert min(hist.val_loss) < hist.val_loss[0]


def test_training_is_reproducible():
    cfg, tr, va = tiny(epochs=2, seed=5)
    a, ha = train(cfg, tr, va)
    b, hb = train(cfg, tr, va)
    sa, sb = a.state_dict(), b.state_dict()
    assert list(sa) == list(sb)
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
    assert ha.to_csv(include_time=False) == hb.to_csv(include_time=False)


def test_training_never_calls_baselines(monkeypatch):
    def forbidden(*a, **k):
        raise AssertionError("training used a reference beamformer")

    for mod in (nnbf.beamform, training):
        for name in ("zfbf", "mmse", "zfbf_masked", "mmse_masked"):
            if hasattr(mod, name):
                monkeypatch.setattr(mod, name, forbidden)
    for name in ("lu_inverse", "lu_inverse_masked", "left_pinv", "regularized_left_pinv_masked"):
        monkeypatch.setattr(nnbf.linalg, name, forbidden)
    cfg, tr, va = tiny(epochs=1)
    train(cfg, tr, va)


def test_nan_channel_aborts_training():
    cfg, tr, va = tiny(epochs=1)
    bad = tr[0].data.copy()
    bad[0, 0, 0, 0] = np.nan
    tr = [ChannelBatch(DIMS, bad)] + list(tr[1:])
    with pytest.raises(TrainingDivergedError) as info:
        train(cfg, tr, va)
    err = info.value
    assert err.epoch == 0 and err.batch == 0
    assert "fc1.weight" in err.param_norms
    assert "non-finite" in str(err)


def test_dims_mismatch_rejected():
    cfg, tr, va = tiny(epochs=1)
    other = generate_dataset(SystemDims(2, 3, 12, 4), toy_profile(), 1, seed=0)
    with pytest.raises(ValueError):
        train(cfg, other, va)


def test_fresh_data_and_snr_input_paths():
    cfg, tr, va = tiny(epochs=2, fresh_data=True, snr_input=True, profile="toy")
    net, hist = train(cfg, tr, va)
    assert len(hist) == 2
    rows = evaluate_sum_rate(net, va, (0.0, 20.0))
    assert [r.snr_db for r in rows] == [0.0, 20.0]
    assert rows[0].mean_sum_rate != rows[1].mean_sum_rate
    fixed, hist_fixed = train(tiny(epochs=2, snr_input=True)[0], tr, va)
    assert hist.train_loss[1] != hist_fixed.train_loss[1]


def test_fresh_data_default_off():
    assert not TrainConfig(dims=DIMS).fresh_data
    assert TrainConfig(dims=DIMS).epochs == 50


def test_scheduler_drives_optimizer(monkeypatch):
    monkeypatch.setattr(training, "validation_loss", lambda *a, **k: 1.0)
    cfg, tr, va = tiny(epochs=6)
    _, hist = train(cfg, tr, va)
    # epoch 1 sets the best value, epochs 2-4 stagnate, epoch 5 runs at half rate
    assert hist.lr == [1e-4] * 4 + [5e-5] * 2


@pytest.fixture(scope="module")
def sweep_rows():
    dims = SystemDims(4, 8, 12, 8)
    data = generate_dataset(dims, tdl_a(), 3, seed=11, stream=2)
    cfg = TrainConfig(dims=dims, epochs=1, hidden_width=16, train_batches=1, val_batches=1)
    net, _ = train(cfg, data[:1], data[1:2])
    return sweep(net, data, snr_grid())


def test_sweep_layout(sweep_rows):
    by_method = {}
    for r in sweep_rows:
        by_method.setdefault(r.method, []).append(r)
    assert set(by_method) == {"nnbf", "zfbf", "mmse"}
    for rows in by_method.values():
        assert len(rows) == 11
        assert [r.snr_db for r in rows] == list(snr_grid())
        assert all(r.n_samples == 3 * 8 * 12 and r.n_skipped == 0 for r in rows)
    text = sweep_to_csv(sweep_rows).splitlines()
    assert text[0] == ",".join(SWEEP_HEADER)
    assert len(text) == 34


def test_sweep_mmse_dominates_and_converges(sweep_rows):
    zf = {r.snr_db: r.mean_sum_rate for r in sweep_rows if r.method == "zfbf"}
    mm = {r.snr_db: r.mean_sum_rate for r in sweep_rows if r.method == "mmse"}
    for s in zf:
        assert mm[s] >= zf[s] - 1e-9
    assert abs(mm[35.0] - zf[35.0]) / zf[35.0] < 0.01


def test_sweep_counts_singular_channels():
    dims = SystemDims(2, 2, 12, 2)
    h = np.ones(dims.shape, dtype=complex)          # rank one everywhere
    rows = evaluate_sum_rate("zfbf", [ChannelBatch(dims, h)], (10.0,))
    assert rows[0].n_skipped == 24 and rows[0].n_samples == 0
    mm = evaluate_sum_rate("mmse", [ChannelBatch(dims, h)], (10.0,))
    assert mm[0].n_skipped == 0
