import csv
import hashlib
import subprocess
import sys

import numpy as np
import pytest

import nnbf.training
from nnbf import cli
from nnbf.autodiff import load_checkpoint
from nnbf.channel import ChannelBatch, SystemDims, load_dataset, save_dataset

SMALL = ["--rb", "1", "--ues", "2", "--rx", "4"]
SIZES = ["--train-batches", "3", "--val-batches", "2"]


def run(*args):
    return cli.main([str(a) for a in args])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def datadir(tmp_path):
    assert run("gen-data", "--out", tmp_path, *SMALL, *SIZES, "--test-batches", 2) == 0
    return tmp_path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_help_lists_flags_and_defaults(capsys):
    for command in ("gen-data", "train", "eval", "bench"):
        with pytest.raises(SystemExit) as info:
            run(command, "--help")
        assert info.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--config", "--seed", "--out", "--ues", "--rx", "--rb", "--snr-min",
                     "--snr-max", "--snr-step", "--epochs", "--lr"):
            assert flag in text
    run_help = subprocess.run([sys.executable, "-m", "nnbf", "gen-data", "--help"],
                              capture_output=True, text=True)
    assert run_help.returncode == 0
    flat = " ".join(run_help.stdout.split())
    for default in ("default: 4", "default: 3e-08", "default: 10.0", "default: 30000.0",
                    "default: 0.0005", "default: 'QPSK'", "default: 'tdl-a'"):
        assert default in flat


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("train", "--epochs", "notanint")
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 1
    assert run("train", "--out", tmp_path / "missing") == 1
    assert "gen-data" in capsys.readouterr().err
    assert run("gen-data", "--out", tmp_path, "--profile", "nope") == 1
    assert run("gen-data", "--out", tmp_path, "--ues", "0") == 1
    assert run("eval", "--out", tmp_path, "--preset", "nope") == 1


def test_gen_data_default_batch_counts(tmp_path, capsys):
    assert run("gen-data", "--out", tmp_path, "--test-batches", 1) == 0
    train = load_dataset(tmp_path / "train.nnbf")
    val = load_dataset(tmp_path / "val.nnbf")
    assert len(train) == 100 and len(val) == 25
    assert train[0].dims == SystemDims(4, 8, 48, 8)
    out = capsys.readouterr().out
    assert "seed=0" in out and "bytes" in out


def test_gen_data_rb1_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("gen-data", "--out", d, *SMALL, *SIZES, "--seed", 9) == 0
    assert load_dataset(a / "train.nnbf")[0].dims.k_subcarriers == 12
    for name in ("train.nnbf", "val.nnbf", "test.nnbf"):
        assert sha(a / name) == sha(b / name)
    run("gen-data", "--out", b, *SMALL, *SIZES, "--seed", 10)
    assert sha(a / "train.nnbf") != sha(b / "train.nnbf")


def test_gen_data_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("gen-data", "--out", blocker / "sub", *SMALL, *SIZES) == 2


def test_train_smoke_writes_artifacts(datadir):
    assert run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 2,
               "--hidden-width", 16) == 0
    rows = read_csv(datadir / "history.csv")
    assert list(rows[0]) == ["epoch", "train_loss", "val_loss", "lr", "seconds"]
    assert len(rows) == 2
    arch, state, _ = load_checkpoint(datadir / "model.nnbw")
    assert arch == (2, 4, 12, 16, 0)
    assert "fc1.weight" in state


def test_train_lr_halves_after_stagnation(datadir, monkeypatch):
    monkeypatch.setattr(nnbf.training, "validation_loss", lambda *a, **k: 3.0)
    assert run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 5,
               "--hidden-width", 8) == 0
    lrs = [float(r["lr"]) for r in read_csv(datadir / "history.csv")]
    assert lrs == [1e-4] * 4 + [5e-5]


def test_train_nan_abort_exits_2(datadir, capsys):
    data = load_dataset(datadir / "train.nnbf")
    bad = data[0].data.copy()
    bad[...] = np.nan
    save_dataset([ChannelBatch(data[0].dims, bad)] + data[1:], datadir / "train.nnbf")
    assert run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 1,
               "--hidden-width", 8) == 2
    assert "non-finite" in capsys.readouterr().err
    assert not (datadir / "model.nnbw").exists()


def test_train_is_reproducible(datadir, tmp_path):
    hist = []
    ckpt = []
    for tag in ("x", "y"):
        out = tmp_path / tag
        assert run("train", "--out", out, *SMALL, *SIZES, "--epochs", 2, "--hidden-width", 16,
                   "--train-data", datadir / "train.nnbf", "--val-data", datadir / "val.nnbf") == 0
        ckpt.append(sha(out / "model.nnbw"))
        hist.append([{k: v for k, v in r.items() if k != "seconds"}
                     for r in read_csv(out / "history.csv")])
    assert ckpt[0] == ckpt[1]
    assert hist[0] == hist[1]


def test_config_file_and_flag_precedence(datadir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# tiny run\nout = {datadir}\nues = 2\nrx = 4\nrb = 1\n"
                   "epochs = 3   # overridden below\nhidden_width = 8\n"
                   "train-batches = 3\nval-batches = 2\n")
    assert run("train", "--config", cfg, "--epochs", 1) == 0
    assert len(read_csv(datadir / "history.csv")) == 1
    assert run("train", "--config", cfg) == 0
    assert len(read_csv(datadir / "history.csv")) == 3
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run("train", "--config", bad) == 1
    assert run("train", "--config", tmp_path / "absent.cfg") == 1


def test_eval_writes_33_rows(datadir):
    run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 1, "--hidden-width", 8)
    assert run("eval", "--out", datadir, *SMALL) == 0
    rows = read_csv(datadir / "sweep.csv")
    assert len(rows) == 33
    assert [r["method"] for r in rows[::11]] == ["nnbf", "zfbf", "mmse"]
    assert list(rows[0]) == ["snr_db", "method", "mean_sum_rate_bps_hz", "n_samples",
                             "n_skipped"]


def test_eval_dims_mismatch_exits_nonzero(datadir):
    run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 1, "--hidden-width", 8)
    assert run("eval", "--out", datadir, "--rb", 1, "--ues", 2, "--rx", 3) == 1
    assert run("eval", "--out", datadir, *SMALL, "--checkpoint", datadir / "nope.nnbw") == 1


def test_eval_singularity_storm_exits_2(datadir):
    run("train", "--out", datadir, *SMALL, *SIZES, "--epochs", 1, "--hidden-width", 8)
    dims = SystemDims(2, 4, 12, 8)
    save_dataset([ChannelBatch(dims, np.ones(dims.shape, dtype=complex))],
                 datadir / "test.nnbf")
    assert run("eval", "--out", datadir, *SMALL) == 2


def test_per_snr_mode(datadir):
    grid = ["--snr-min", 0, "--snr-max", 10, "--snr-step", 10]
    assert run("train", "--out", datadir, *SMALL, *SIZES, *grid, "--epochs", 1,
               "--hidden-width", 8, "--train-mode", "per-snr") == 0
    assert (datadir / "model_snr0.nnbw").exists() and (datadir / "model_snr10.nnbw").exists()
    assert run("eval", "--out", datadir, *SMALL, *grid, "--train-mode", "per-snr") == 0
    rows = read_csv(datadir / "sweep.csv")
    assert [(r["method"], r["snr_db"]) for r in rows[:2]] == [("nnbf", "0"), ("nnbf", "10")]
    assert len(rows) == 6


def test_presets(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.PRESETS, "tiny", ((2, 2), (2, 4)))
    args = ["--out", tmp_path, "--rb", 1, "--preset", "tiny"]
    assert run("gen-data", *args, *SIZES, "--test-batches", 1) == 0
    assert run("train", *args, *SIZES, "--epochs", 1, "--hidden-width", 8) == 0
    assert run("eval", *args) == 0
    for sub in ("n2_m2", "n2_m4"):
        assert len(read_csv(tmp_path / sub / "sweep.csv")) == 33
    assert cli.PRESETS["ratio-1-1"] == ((4, 4), (8, 8), (12, 12))
    assert cli.PRESETS["ratio-1-4"] == ((8, 32), (16, 64))


def test_bench_csv(tmp_path, capsys):
    assert run("bench", "--out", tmp_path, "--rb", 1, "--bench-ues", "2,4",
               "--repetitions", 10, "--bench-hidden-width", 4) == 0
    rows = read_csv(tmp_path / "bench.csv")
    assert len(rows) == 6
    assert {r["method"] for r in rows} == {"zfbf", "mmse", "nnbf"}
    assert all(r["m_rx"] == "64" and int(r["repetitions"]) >= 10 for r in rows)
    assert all(float(r["mean_ms"]) > 0 for r in rows)
    assert "report only" in capsys.readouterr().out
    assert run("bench", "--out", tmp_path, "--repetitions", 5) == 1
    assert run("bench", "--out", tmp_path, "--bench-ues", "a,b") == 1


def test_atomic_write_leaves_no_partial(tmp_path, monkeypatch):
    import nnbf.channel as channel

    target = tmp_path / "f.bin"
    target.write_bytes(b"old")

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(channel.os, "replace", boom)
    with pytest.raises(OSError):
        channel.atomic_write_bytes(target, b"new")
    assert target.read_bytes() == b"old"
    assert [p.name for p in tmp_path.iterdir()] == ["f.bin"]
