"""Command-line entry point: ``nnbf gen-data | train | eval | bench``.

Every option can also be given in a ``--config`` file of ``key = value`` lines
(``#`` starts a comment; keys are the long option names, with ``-`` or ``_``).
Precedence is built-in default < config file < command-line flag.
"""

import argparse
import contextlib
import csv
import gc
import io
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import channel
from .autodiff import AdamWState, load_checkpoint, save_checkpoint
from .beamform import mmse_masked, zfbf_masked
from .channel import (
    ConfigurationError,
    DatasetFormatError,
    SystemDims,
    atomic_write_bytes,
    generate_dataset,
    get_profile,
    load_dataset,
    save_dataset,
)
from .network import build_network, forward_beamformer
from .training import (
    TrainConfig,
    TrainingDivergedError,
    evaluate_sum_rate,
    snr_grid,
    sweep,
    sweep_to_csv,
    train,
)

log = logging.getLogger("nnbf")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

TRAIN_STREAM, VAL_STREAM, TEST_STREAM = 0, 1, 2

PRESETS = {
    "n4-sweep": ((4, 4), (4, 8), (4, 16), (4, 32)),
    "ratio-1-1": ((4, 4), (8, 8), (12, 12)),
    "ratio-1-4": ((8, 32), (16, 64)),
}

# option name -> (type, default, help); defaults are the reference system setup
OPTIONS = {
    "seed": (int, 0, "master random seed"),
    "out": (str, "runs/default", "output directory"),
    "name": (str, "nnbf", "experiment name (recorded in summaries)"),
    "ues": (int, 4, "number of single-antenna UEs N"),
    "rx": (int, 8, "number of receive antennas M"),
    "rb": (int, 4, "resource blocks; K = 12 * rb subcarriers"),
    "batch": (int, 8, "channel realizations per batch B"),
    "train-batches": (int, 100, "training batches per epoch"),
    "val-batches": (int, 25, "validation batches"),
    "test-batches": (int, 25, "held-out evaluation batches"),
    "profile": (str, "tdl-a", "delay profile: tdl-a or toy"),
    "delay-spread": (float, channel.DELAY_SPREAD_S, "delay spread in seconds"),
    "subcarrier-spacing": (float, channel.SUBCARRIER_SPACING_HZ, "subcarrier spacing in Hz"),
    "doppler": (float, channel.MAX_DOPPLER_HZ, "max Doppler in Hz (metadata; channels are static)"),
    "tti": (float, channel.TTI_S, "TTI in seconds (metadata)"),
    "modulation": (str, channel.MODULATION, "modulation (metadata; rates are analytic)"),
    "snr-min": (float, -15.0, "lowest SNR in dB"),
    "snr-max": (float, 35.0, "highest SNR in dB"),
    "snr-step": (float, 5.0, "SNR grid step in dB"),
    "epochs": (int, 50, "training epochs"),
    "lr": (float, 1e-4, "initial AdamW learning rate"),
    "weight-decay": (float, 0.01, "AdamW decoupled weight decay"),
    "patience": (int, 3, "epochs without validation improvement before halving lr"),
    "factor": (float, 0.5, "learning-rate reduction factor"),
    "hidden-width": (int, 1024, "width of the hidden FC layer"),
    "fresh-data": ("bool", False, "regenerate training channels every epoch"),
    "snr-input": ("bool", False, "feed the SNR to the network as an extra feature"),
    "train-mode": (str, "joint", "joint (one model over the SNR grid) or per-snr"),
    "preset": (str, "", "antenna configurations: n4-sweep, ratio-1-1, ratio-1-4"),
    "train-data": (str, "", "training dataset (default OUT/train.nnbf)"),
    "val-data": (str, "", "validation dataset (default OUT/val.nnbf)"),
    "test-data": (str, "", "evaluation dataset (default OUT/test.nnbf)"),
    "checkpoint": (str, "", "model checkpoint (default OUT/model.nnbw)"),
    "bench-rx": (int, 64, "receive antennas for the timing benchmark"),
    "bench-ues": (str, "4,8,16,32,48", "comma-separated UE counts for the benchmark"),
    "bench-hidden-width": (int, 32, "hidden FC width of the benchmarked network"),
    "repetitions": (int, 20, "timed repetitions per method (>= 10)"),
}

COMMON = ("config", "seed", "out", "ues", "rx", "rb", "snr-min", "snr-max", "snr-step",
          "epochs", "lr")
COMMAND_OPTIONS = {
    "gen-data": ("name", "batch", "train-batches", "val-batches", "test-batches", "profile",
                 "delay-spread", "subcarrier-spacing", "doppler", "tti", "modulation", "preset"),
    "train": ("name", "batch", "train-batches", "val-batches", "profile", "delay-spread",
              "subcarrier-spacing", "weight-decay", "patience", "factor", "hidden-width",
              "fresh-data", "snr-input", "train-mode", "preset", "train-data", "val-data"),
    "eval": ("name", "train-mode", "preset", "test-data", "checkpoint"),
    "bench": ("batch", "bench-rx", "bench-ues", "bench-hidden-width", "repetitions"),
}


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dest(key):
    return key.replace("-", "_")


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _add_option(parser, key):
    if key == "config":
        parser.add_argument("--config", metavar="PATH", help="key = value configuration file")
        return
    kind, default, help_text = OPTIONS[key]
    text = f"{help_text} (default: {default!r})"
    if kind == "bool":
        parser.add_argument(f"--{key}", dest=_dest(key), action="store_const", const=True,
                            default=None, help=text)
        parser.add_argument(f"--no-{key}", dest=_dest(key), action="store_const",
                            const=False, help=argparse.SUPPRESS)
    else:
        parser.add_argument(f"--{key}", dest=_dest(key), type=kind, default=None, help=text)


def build_parser():
    parser = _Parser(prog="nnbf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "generate train/validation/test channel datasets",
        "train": "train NNBF without labels on a generated dataset",
        "eval": "sum-rate sweep of NNBF, ZFBF and MMSE over the SNR grid",
        "bench": "time beamformer computation versus the number of UEs",
    }
    for name, extra in COMMAND_OPTIONS.items():
        sub = subs.add_parser(name, help=helps[name], description=helps[name])
        for key in COMMON + extra:
            _add_option(sub, key)
    return parser


def read_config_file(path):
    """Parse ``key = value`` lines into a dict of option values."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in OPTIONS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            kind = OPTIONS[key][0]
            try:
                values[key] = _parse_bool(value) if kind == "bool" else kind(value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


@dataclass
class ExperimentConfig:
    """Resolved settings for one command invocation."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def grid(self):
        if self["snr-step"] <= 0 or self["snr-max"] < self["snr-min"]:
            raise UsageError("SNR grid needs snr-step > 0 and snr-max >= snr-min")
        return snr_grid(self["snr-min"], self["snr-max"], self["snr-step"])

    def dims(self, n=None, m=None):
        try:
            return SystemDims.from_rb(n or self["ues"], m or self["rx"], self["rb"],
                                      self.values.get("batch", 8))
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from None

    def profile(self):
        try:
            return get_profile(self["profile"], delay_spread_s=self["delay-spread"],
                               subcarrier_spacing_hz=self["subcarrier-spacing"])
        except ConfigurationError as exc:
            raise UsageError(str(exc)) from None

    def configs(self):
        """``(dims, directory)`` for every antenna configuration of this run."""
        preset = self.values.get("preset", "")
        if not preset:
            return [(self.dims(), self["out"])]
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        return [(self.dims(n, m), os.path.join(self["out"], f"n{n}_m{m}"))
                for n, m in PRESETS[preset]]


def resolve_config(args):
    values = {key: OPTIONS[key][1] for key in COMMON + COMMAND_OPTIONS[args.command]
              if key != "config"}
    if args.config:
        try:
            from_file = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        values.update({k: v for k, v in from_file.items() if k in values})
    for key in values:
        given = getattr(args, _dest(key), None)
        if given is not None:
            values[key] = given
    return ExperimentConfig(values)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _path(cfg, key, directory, default_name):
    given = cfg.values.get(key, "")
    if given and len(cfg.configs()) == 1:
        return given
    return os.path.join(directory, default_name)


def _write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def cmd_gen_data(cfg, out=None):
    out = out or sys.stdout
    profile = cfg.profile()
    for dims, directory in cfg.configs():
        os.makedirs(directory, exist_ok=True)
        total = 0
        for label, count, stream in (("train", cfg["train-batches"], TRAIN_STREAM),
                                     ("val", cfg["val-batches"], VAL_STREAM),
                                     ("test", cfg["test-batches"], TEST_STREAM)):
            if count < 1:
                raise UsageError(f"{label}-batches must be >= 1")
            data = generate_dataset(dims, profile, count, cfg["seed"], stream)
            path = os.path.join(directory, f"{label}.nnbf")
            save_dataset(data, path)
            size = os.path.getsize(path)
            total += size
            print(f"{path}: {count} batches of (B={dims.batch}, N={dims.n_ues}, "
                  f"M={dims.m_rx}, K={dims.k_subcarriers}), {size} bytes", file=out)
        print(f"profile={profile.name} delay_spread={profile.delay_spread_s:g}s "
              f"spacing={profile.subcarrier_spacing_hz:g}Hz doppler={cfg['doppler']:g}Hz "
              f"tti={cfg['tti']:g}s modulation={cfg['modulation']} seed={cfg['seed']} "
              f"total_bytes={total}", file=out)
    return EXIT_OK


def _load(path, what):
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"{what} dataset not found: {path} (run gen-data first)") from None
    except DatasetFormatError as exc:
        raise UsageError(f"{what} dataset {path}: {exc}") from None


def _train_config(cfg, dims, grid):
    try:
        return TrainConfig(
            dims=dims, snr_grid_db=grid, epochs=cfg["epochs"], lr=cfg["lr"],
            scheduler_patience=cfg["patience"], scheduler_factor=cfg["factor"],
            train_batches=cfg["train-batches"], val_batches=cfg["val-batches"],
            seed=cfg["seed"], weight_decay=cfg["weight-decay"],
            hidden_width=cfg["hidden-width"], snr_input=cfg["snr-input"],
            fresh_data=cfg["fresh-data"], profile=cfg["profile"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _model_points(cfg):
    """``(file suffix, SNR grid)`` per model: one joint model or one per SNR point."""
    mode = cfg["train-mode"]
    if mode == "joint":
        return [("", cfg.grid)]
    if mode == "per-snr":
        return [(f"_snr{s:g}", (s,)) for s in cfg.grid]
    raise UsageError(f"train-mode must be 'joint' or 'per-snr', got {mode!r}")


def cmd_train(cfg, out=None):
    out = out or sys.stdout
    for dims, directory in cfg.configs():
        train_data = _load(_path(cfg, "train-data", directory, "train.nnbf"), "training")
        val_data = _load(_path(cfg, "val-data", directory, "val.nnbf"), "validation")
        data_dims = train_data[0].dims
        if data_dims.shape[1:] != dims.shape[1:]:
            raise UsageError(f"dataset dims {data_dims} do not match configured {dims}")
        dims = data_dims
        os.makedirs(directory, exist_ok=True)
        for suffix, grid in _model_points(cfg):
            tcfg = _train_config(cfg, dims, grid)
            try:
                net, history = train(tcfg, train_data[:tcfg.train_batches],
                                     val_data[:tcfg.val_batches])
            except TrainingDivergedError as exc:
                raise RuntimeFailure(str(exc)) from None
            ckpt = os.path.join(directory, f"model{suffix}.nnbw")
            hist = os.path.join(directory, f"history{suffix}.csv")
            save_checkpoint(ckpt, net.arch, net.state_dict())
            _write_text(hist, history.to_csv())
            last = history.records[-1]
            print(f"{ckpt}: {len(history)} epochs, final train {last.train_loss:.4f} "
                  f"val {last.val_loss:.4f} lr {last.lr:g}", file=out)
    return EXIT_OK


def load_network(path):
    """Rebuild an ``NnbfNetwork`` from a checkpoint file (eval mode)."""
    try:
        arch, state, _ = load_checkpoint(path)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {path}") from None
    except ValueError as exc:
        raise UsageError(f"checkpoint {path}: {exc}") from None
    if len(arch) != 5:
        raise UsageError(f"checkpoint {path}: unexpected architecture record {arch}")
    n, m, k, hidden, snr_input = arch
    net = build_network(SystemDims(n, m, k, 1), hidden, snr_input=bool(snr_input))
    net.load_state_dict(state)
    return net.eval()


def cmd_eval(cfg, out=None):
    out = out or sys.stdout
    for dims, directory in cfg.configs():
        data = _load(_path(cfg, "test-data", directory, "test.nnbf"), "evaluation")
        if data[0].dims.shape[1:] != dims.shape[1:]:
            raise UsageError(f"dataset dims {data[0].dims} do not match configured {dims}")
        rows = []
        for suffix, grid in _model_points(cfg):
            default_ckpt = f"model{suffix}.nnbw"
            ckpt = (cfg["checkpoint"] if cfg["checkpoint"] and not suffix
                    and len(cfg.configs()) == 1 else os.path.join(directory, default_ckpt))
            net = load_network(ckpt)
            if net.dims.shape[1:] != dims.shape[1:]:
                raise UsageError(f"checkpoint dims {net.dims} do not match data {dims}")
            rows.extend(evaluate_sum_rate(net, data, grid))
        rows.extend(sweep(None, data, cfg.grid, methods=("zfbf", "mmse")))
        for r in rows:
            if r.method != "nnbf" and r.n_skipped > r.n_samples:
                raise RuntimeFailure(
                    f"{r.method} at {r.snr_db:g} dB: {r.n_skipped} singular channels "
                    f"vs {r.n_samples} usable")
        path = os.path.join(directory, "sweep.csv")
        _write_text(path, sweep_to_csv(rows))
        print(f"{path}: {len(rows)} rows (N={dims.n_ues}, M={dims.m_rx})", file=out)
        for r in rows:
            print(f"  {r.method:5s} {r.snr_db:6.1f} dB  {r.mean_sum_rate:8.4f} bit/s/Hz",
                  file=out)
    return EXIT_OK


@dataclass
class TimingRecord:
    method: str
    n_ues: int
    m_rx: int
    k_subcarriers: int
    mean_ms: float
    std_ms: float
    repetitions: int


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def _calls_per_sample(fn, min_sample_s):
    start = time.perf_counter()
    fn()
    single = time.perf_counter() - start
    return max(1, int(np.ceil(min_sample_s / max(single, 1e-9))))


def run_benchmark(ues, m_rx, k, batch=8, repetitions=20, hidden_width=32, seed=0,
                  sigma2=0.1, warmup=2, min_sample_s=0.05):
    """Time ZFBF, MMSE and an eval-mode NNBF forward pass per batch of channels.

    Like ``timeit``, each sample repeats a method until it spans at least
    ``min_sample_s`` and records the per-call time. Methods are interleaved
    within each repetition so drifts in machine load hit them equally, and the
    garbage collector is paused while timing. Returns a list of ``TimingRecord``.
    """
    if repetitions < 10:
        raise UsageError("repetitions must be >= 10")
    records = []
    profile = get_profile("tdl-a")
    with _single_thread():
        for n in ues:
            dims = SystemDims(n, m_rx, k, batch)
            h = generate_dataset(dims, profile, 1, seed, stream=TEST_STREAM)[0]
            mats = h.matrices()
            net = build_network(dims, hidden_width, seed=seed).eval()
            methods = {
                "zfbf": lambda: zfbf_masked(mats),
                "mmse": lambda: mmse_masked(mats, sigma2),
                "nnbf": lambda: forward_beamformer(net, h),
            }
            calls = {name: _calls_per_sample(fn, min_sample_s) for name, fn in methods.items()}
            times = {name: [] for name in methods}
            gc_was_enabled = gc.isenabled()
            gc.disable()
            try:
                for rep in range(warmup + repetitions):
                    for name, fn in methods.items():
                        start = time.perf_counter()
                        for _ in range(calls[name]):
                            fn()
                        elapsed = (time.perf_counter() - start) * 1e3 / calls[name]
                        if rep >= warmup:
                            times[name].append(elapsed)
            finally:
                if gc_was_enabled:
                    gc.enable()
            for name, samples in times.items():
                records.append(TimingRecord(name, n, m_rx, k, float(np.mean(samples)),
                                            float(np.std(samples)), repetitions))
            del net
    return records


def timing_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "n_ues", "m_rx", "k_subcarriers", "mean_ms", "std_ms",
                     "repetitions"])
    for r in records:
        writer.writerow([r.method, r.n_ues, r.m_rx, r.k_subcarriers, f"{r.mean_ms:.6f}",
                         f"{r.std_ms:.6f}", r.repetitions])
    return buf.getvalue()


def scaling_report(records, low=4, high=32):
    """``t(N=high) / t(N=low)`` per method, when both sizes were timed."""
    by = {(r.method, r.n_ues): r.mean_ms for r in records}
    return {m: by[(m, high)] / by[(m, low)] for m in ("zfbf", "mmse", "nnbf")
            if (m, high) in by and (m, low) in by}


def cmd_bench(cfg, out=None):
    out = out or sys.stdout
    try:
        ues = [int(x) for x in str(cfg["bench-ues"]).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --bench-ues {cfg['bench-ues']!r}") from None
    if not ues:
        raise UsageError("empty UE list")
    k = channel.SUBCARRIERS_PER_RB * cfg["rb"]
    if k < 1 or cfg["bench-rx"] < 1 or min(ues) < 1:
        raise UsageError("bench dimensions must be positive")
    records = run_benchmark(ues, cfg["bench-rx"], k, cfg["batch"], cfg["repetitions"],
                            cfg["bench-hidden-width"], cfg["seed"])
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], "bench.csv")
    _write_text(path, timing_csv(records))
    print(f"{path}: {len(records)} rows", file=out)
    for r in records:
        print(f"  {r.method:5s} N={r.n_ues:3d} M={r.m_rx} K={r.k_subcarriers} "
              f"{r.mean_ms:9.3f} +- {r.std_ms:.3f} ms", file=out)
    ratios = scaling_report(records, min(ues), 32 if 32 in ues else max(ues))
    if ratios:
        text = ", ".join(f"{m} {v:.2f}x" for m, v in ratios.items())
        print(f"scaling t(N=max)/t(N=min) (report only, machine dependent): {text}", file=out)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"nnbf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"nnbf {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"nnbf {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
