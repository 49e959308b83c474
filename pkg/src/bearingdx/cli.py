"""Command-line experiment runner: ``generate``, ``train``, ``evaluate``, ``report``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import RewardCurve, build_report, load_report
from .exceptions import BearingDxError, ConfigError, InvalidParamError, MissingReportError, ShapeMismatchError
from .features import Normalizer, WindowingSpec, build_feature_dataset, features_to_arrays, windows_dataset
from .nn import HyperParams, load_checkpoint, save_checkpoint
from .rl import DEFAULT_BUFFER_CAPACITY, DEFAULT_TIMESTEPS, dqn_train_epoch, dqn_train_timestep, resolve_reward_matrix
from .signal import (
    DEFAULT_SAMPLE_RATE_HZ,
    SplitSpec,
    generate_synthetic_dataset,
    load_dataset,
    read_manifest,
    split_train_test,
    write_manifest,
    write_signal_f32,
)
from .supervised import TrainConfig, evaluate_model, train_ann

log = logging.getLogger("bearingdx")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

WINDOW_MODELS = (1, 2, 3, 4)
ANN_MODELS = (1, 2, 5, 6)
RL_MODELS = (3, 4, 7, 8)
SHAPED_LOSS_MODELS = (2, 6)
TIMESTEP_MODELS = (4, 8)

# artifact names inside a run directory
CHECKPOINT = "model.ckpt"
REPORT = "report.json"
CONFUSION = "confusion.csv"
REWARD_CURVE = "reward_curve.csv"
LOSS_LOG = "loss_log.csv"
NORMALIZER = "normalizer.csv"
RESOLVED_CONFIG = "config.txt"
TIMING = "timing.json"

# key -> (parser, default). ``None`` defaults are filled in per model.
_HP = HyperParams()
CONFIG_KEYS = {
    "model_id": (int, None),
    "feature_mode": (str, None),
    "data": (str, "synthetic"),
    "n_per_class": (int, 200),
    "signal_len": (int, 10_000),
    "data_seed": (int, 7),
    "noise_sigma": (float, 0.1),
    "impulse_amp": (str, "0,0.5,2.0"),
    "sample_rate_hz": (float, float(DEFAULT_SAMPLE_RATE_HZ)),
    "train_fraction": (float, 0.8),
    "window_len": (int, 1000),
    "overlap": (float, 0.5),
    "segment_len": (int, 10_000),
    "epochs": (int, _HP.epochs),
    "timesteps": (int, DEFAULT_TIMESTEPS),
    "batch_size": (int, _HP.batch_size),
    "learning_rate": (float, _HP.learning_rate),
    "gamma": (float, _HP.gamma),
    "epsilon_start": (float, _HP.epsilon_start),
    "epsilon_decay": (float, _HP.epsilon_decay),
    "epsilon_min": (float, _HP.epsilon_min),
    "buffer_capacity": (int, DEFAULT_BUFFER_CAPACITY),
    "target_sync_interval": (int, 0),
    "reward_matrix": (str, None),
    "seed": (int, 0),
    "out_dir": (str, None),
}
# keys that describe where output goes, not what is computed
_NOT_DIGESTED = ("out_dir",)


# --------------------------------------------------------------------------
# configuration

def parse_config_text(text: str, source="<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    kind = CONFIG_KEYS[key][0]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {kind.__name__}") from None


def resolve_config(cli: dict, file_values: dict | None = None) -> dict:
    """Merge layers with precedence CLI flag > config file > default."""
    merged = {}
    for key, (_, default) in CONFIG_KEYS.items():
        if cli.get(key) is not None:
            merged[key] = _coerce(key, cli[key])
        elif file_values and key in file_values:
            merged[key] = _coerce(key, file_values[key])
        else:
            merged[key] = default
    model = merged["model_id"]
    if model is None:
        raise ConfigError("model_id is required (1-8)")
    if model not in range(1, 9):
        raise ConfigError(f"model_id must be in the range 1-8, got {model}")
    mode = "windows" if model in WINDOW_MODELS else "stats"
    if merged["feature_mode"] is None:
        merged["feature_mode"] = mode
    elif merged["feature_mode"] != mode:
        raise ConfigError(f"model {model} uses feature_mode={mode}, not {merged['feature_mode']}")
    if merged["reward_matrix"] is None:
        merged["reward_matrix"] = "table6" if model == 8 else "default"
    if model in (1, 5):
        merged["reward_matrix"] = "none"
    _validate(merged)
    return merged


def _validate(cfg: dict):
    positive = ("n_per_class", "signal_len", "window_len", "segment_len", "timesteps", "batch_size",
                "buffer_capacity")
    for key in positive:
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    if cfg["epochs"] < 0 or cfg["target_sync_interval"] < 0 or cfg["seed"] < 0:
        raise ConfigError("epochs, target_sync_interval and seed must be >= 0")
    if not 0.0 < cfg["train_fraction"] < 1.0:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    if cfg["batch_size"] > cfg["buffer_capacity"]:
        raise ConfigError("batch_size cannot exceed buffer_capacity")
    try:
        _hyperparams(cfg)
        WindowingSpec(cfg["window_len"], cfg["overlap"])
        _impulse_amp(cfg)
    except InvalidParamError as exc:
        raise ConfigError(str(exc)) from None


def config_text(cfg: dict) -> str:
    return "".join(f"{key} = {cfg[key]}\n" for key in CONFIG_KEYS if cfg[key] is not None)


def digest_view(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in _NOT_DIGESTED}


def _hyperparams(cfg) -> HyperParams:
    return HyperParams(
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        gamma=cfg["gamma"],
        epsilon_start=cfg["epsilon_start"],
        epsilon_decay=cfg["epsilon_decay"],
        epsilon_min=cfg["epsilon_min"],
        epochs=cfg["epochs"],
    )


def _impulse_amp(cfg):
    try:
        amps = tuple(float(v) for v in str(cfg["impulse_amp"]).split(","))
    except ValueError:
        raise ConfigError(f"impulse_amp must be three comma-separated numbers, got {cfg['impulse_amp']!r}") from None
    if len(amps) != 3:
        raise ConfigError("impulse_amp needs exactly three values (healthy, developing, faulty)")
    return amps


# --------------------------------------------------------------------------
# data preparation

@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    normalizer: Normalizer | None


def load_recordings(cfg):
    if cfg["data"] == "synthetic":
        return generate_synthetic_dataset(
            cfg["n_per_class"], cfg["signal_len"], seed=cfg["data_seed"], noise_sigma=cfg["noise_sigma"],
            impulse_amp=_impulse_amp(cfg), sample_rate_hz=cfg["sample_rate_hz"],
        )
    return load_dataset(read_manifest(cfg["data"]), sample_rate_hz=cfg["sample_rate_hz"])


def split_recordings(cfg, recordings):
    """Split whole recordings so no window or segment leaks across sets."""
    labels = [int(r.label) for r in recordings]
    return split_train_test(recordings, SplitSpec(cfg["train_fraction"], seed=cfg["seed"]), labels=labels)


def featurize(cfg, recordings):
    if not recordings:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    if cfg["feature_mode"] == "windows":
        return windows_dataset(recordings, WindowingSpec(cfg["window_len"], cfg["overlap"]))
    return features_to_arrays(build_feature_dataset(recordings, cfg["segment_len"]))


def prepare_data(cfg, normalizer: Normalizer | None = None) -> PreparedData:
    train, test = split_recordings(cfg, load_recordings(cfg))
    X_train, y_train = featurize(cfg, train)
    X_test, y_test = featurize(cfg, test)
    if normalizer is None:
        if X_train.shape[0] == 0:
            raise InvalidParamError("training split produced no examples")
        normalizer = Normalizer().fit(X_train)
    X_train = normalizer.transform(X_train) if X_train.shape[0] else X_train
    X_test = normalizer.transform(X_test) if X_test.shape[0] else X_test
    return PreparedData(X_train, y_train, X_test, y_test, normalizer)


# --------------------------------------------------------------------------
# training dispatch

@dataclass
class TrainOutcome:
    net: object
    loss_log: list | None = None
    reward_curve: RewardCurve | None = None


def train_model(cfg, X, y) -> TrainOutcome:
    model = cfg["model_id"]
    hp = _hyperparams(cfg)
    seed = cfg["seed"]
    if model in ANN_MODELS:
        if model in SHAPED_LOSS_MODELS:
            tc = TrainConfig(hp, "expected_reward", resolve_reward_matrix(cfg["reward_matrix"]))
        else:
            tc = TrainConfig(hp)
        result = train_ann(X, y, tc, seed=seed)
        return TrainOutcome(result.net, loss_log=result.loss_log)
    matrix = resolve_reward_matrix(cfg["reward_matrix"])
    opts = dict(buffer_capacity=cfg["buffer_capacity"], target_sync_interval=cfg["target_sync_interval"] or None)
    if model in TIMESTEP_MODELS:
        result = dqn_train_timestep(X, y, hp, matrix, cfg["timesteps"], seed=seed, **opts)
    else:
        result = dqn_train_epoch(X, y, hp, matrix, seed=seed, **opts)
    return TrainOutcome(result.net, reward_curve=RewardCurve.from_log(result.reward_log))


def _loss_csv(loss_log) -> str:
    return "epoch,mean_loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(loss_log, 1))


def run_training(cfg: dict):
    """Full pipeline for one model.

    Returns ``(run_dir, report, train_seconds)``.
    """
    out = Path(cfg["out_dir"] or f"runs/model{cfg['model_id']}_seed{cfg['seed']}")
    data = prepare_data(cfg)
    if data.X_test.shape[0] == 0:
        raise InvalidParamError("test split produced no examples")
    if data.X_train.shape[0] < cfg["batch_size"]:
        raise InvalidParamError(f"{data.X_train.shape[0]} training examples is fewer than batch_size")
    log.info("model %d: %d train / %d test examples, %d features",
             cfg["model_id"], data.X_train.shape[0], data.X_test.shape[0], data.X_train.shape[1])
    start = time.perf_counter()
    outcome = train_model(cfg, data.X_train, data.y_train)
    elapsed = time.perf_counter() - start

    preds = evaluate_model(outcome.net, data.X_test)
    report, text = build_report(cfg["model_id"], cfg["seed"], digest_view(cfg), preds, data.y_test,
                                outcome.reward_curve)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / CHECKPOINT, outcome.net)
    (out / REPORT).write_text(text)
    (out / CONFUSION).write_text(report.confusion.to_csv())
    (out / NORMALIZER).write_text(data.normalizer.to_text())
    (out / RESOLVED_CONFIG).write_text(config_text(cfg))
    (out / TIMING).write_text(json.dumps({"train_seconds": round(elapsed, 3)}) + "\n")
    if outcome.reward_curve is not None:
        (out / REWARD_CURVE).write_text(outcome.reward_curve.to_csv())
    if outcome.loss_log is not None:
        (out / LOSS_LOG).write_text(_loss_csv(outcome.loss_log))
    return out, report, elapsed


def evaluate_run(run_dir, data: str | None = None, feature_mode: str | None = None, split="test"):
    """Re-score a stored checkpoint using only the run directory's contents.

    ``data`` and ``feature_mode`` override the stored configuration.
    Returns ``(report, json_text)``.
    """
    run_dir = Path(run_dir)
    stored = stored_config(run_dir)
    cfg = dict(stored)
    if data is not None:
        cfg["data"] = data
    if feature_mode is not None:
        cfg["feature_mode"] = feature_mode
    net = load_checkpoint(run_dir / CHECKPOINT)
    normalizer = Normalizer.from_text((run_dir / NORMALIZER).read_text())
    recordings = load_recordings(cfg)
    if split == "test":
        _, recordings = split_recordings(cfg, recordings)
    X, y = featurize(cfg, recordings)
    if X.shape[0] == 0:
        raise InvalidParamError("evaluation set is empty")
    if X.shape[1] != net.num_features:
        raise ShapeMismatchError(
            f"checkpoint expects {net.num_features} features but {cfg['feature_mode']} data has {X.shape[1]}"
        )
    preds = evaluate_model(net, normalizer.transform(X))
    curve = None
    if (run_dir / REWARD_CURVE).exists():
        curve = _read_reward_curve(run_dir / REWARD_CURVE)
    return build_report(cfg["model_id"], cfg["seed"], digest_view(stored), preds, y, curve)


def stored_config(run_dir) -> dict:
    path = Path(run_dir) / RESOLVED_CONFIG
    return resolve_config({}, parse_config_text(path.read_text(), str(path)))


def _read_reward_curve(path) -> RewardCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return RewardCurve(tuple((int(r["episode"]), float(r["cumulative_reward"]), float(r["epsilon"])) for r in rows))


# --------------------------------------------------------------------------
# comparison table

TABLE_COLUMNS = ("Model", "Accuracy (%)", "Precision", "Recall", "F-1 Score", "Training time")


def comparison_rows(run_dirs) -> list[tuple]:
    entries = []
    for d in map(Path, run_dirs):
        if not (d / REPORT).is_file():
            raise MissingReportError(d)
        rep = load_report(d / REPORT)
        seconds = None
        if (d / TIMING).is_file():
            seconds = json.loads((d / TIMING).read_text()).get("train_seconds")
        entries.append((rep, seconds))
    entries.sort(key=lambda e: (e[0]["model_id"], e[0]["seed"]))
    counts = {}
    for rep, _ in entries:
        counts[rep["model_id"]] = counts.get(rep["model_id"], 0) + 1
    rows = []
    for rep, seconds in entries:
        label = str(rep["model_id"])
        if counts[rep["model_id"]] > 1:
            label += f" (seed {rep['seed']})"
        macro = rep["macro"]
        rows.append((
            label,
            f"{100 * rep['accuracy']:.2f}",
            f"{macro['precision']:.4f}",
            f"{macro['recall']:.4f}",
            f"{macro['f1']:.4f}",
            "n/a" if seconds is None else f"{seconds:.1f} s",
        ))
    return rows


def format_table(rows) -> str:
    widths = [max(len(str(r[i])) for r in (TABLE_COLUMNS, *rows)) for i in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in (TABLE_COLUMNS, *rows)]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def table_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    """argparse variant that raises instead of exiting, so ``main`` owns exit codes."""

    def error(self, message):
        raise ConfigError(message)


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bearingdx", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic dataset and manifest")
    _global_flags(gen, suppress=True)
    gen.add_argument("--n-per-class", type=int, default=200)
    gen.add_argument("--len", type=int, dest="signal_len", default=10_000)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--impulse-amp", default="0,0.5,2.0", help="healthy,developing,faulty amplitudes")
    gen.add_argument("--sample-rate", type=float, default=float(DEFAULT_SAMPLE_RATE_HZ))

    train = sub.add_parser("train", help="train and evaluate one of models 1-8")
    _global_flags(train, suppress=True)
    train.add_argument("--model", type=int, dest="model_id")
    train.add_argument("--data", help="manifest.csv path, or 'synthetic'")
    for flag in ("feature-mode", "reward-matrix", "window-len", "overlap", "segment-len", "epochs", "timesteps",
                 "batch-size", "learning-rate", "epsilon-min", "buffer-capacity", "target-sync-interval"):
        train.add_argument(f"--{flag}", dest=flag.replace("-", "_"))

    ev = sub.add_parser("evaluate", help="re-score a run directory's checkpoint")
    _global_flags(ev, suppress=True)
    ev.add_argument("run_dir")
    ev.add_argument("--data", help="evaluate on this manifest instead of the stored data source")
    ev.add_argument("--feature-mode", choices=("windows", "stats"))
    ev.add_argument("--split", choices=("test", "all"), default="test")

    rep = sub.add_parser("report", help="compare finished runs")
    _global_flags(rep, suppress=True)
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--csv", help="also write the table as CSV here")
    return parser


def cmd_generate(args) -> int:
    if args.out is None:
        raise ConfigError("generate needs --out")
    amps = _impulse_amp({"impulse_amp": args.impulse_amp})
    try:
        data = generate_synthetic_dataset(
            args.n_per_class, args.signal_len, seed=args.seed or 0, noise_sigma=args.noise,
            impulse_amp=amps, sample_rate_hz=args.sample_rate,
        )
    except InvalidParamError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sig in data:
        name = f"{sig.source_id}.f32"
        write_signal_f32(out / name, sig.samples)
        entries.append((name, sig.label))
    write_manifest(out / "manifest.csv", entries)
    if not args.quiet:
        print(f"wrote {len(entries)} recordings to {out}")
    return EXIT_OK


def _train_overrides(args) -> dict:
    keys = ("model_id", "data", "feature_mode", "reward_matrix", "window_len", "overlap", "segment_len", "epochs",
            "timesteps", "batch_size", "learning_rate", "epsilon_min", "buffer_capacity", "target_sync_interval",
            "seed")
    cli = {k: getattr(args, k, None) for k in keys}
    cli["out_dir"] = args.out
    return cli


def cmd_train(args) -> int:
    file_values = None
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        file_values = parse_config_text(path.read_text(), str(path))
    cfg = resolve_config(_train_overrides(args), file_values)
    out, report, elapsed = run_training(cfg)
    if not args.quiet:
        print(f"model {cfg['model_id']}: accuracy {100 * report.accuracy:.2f}%, "
              f"macro F1 {report.macro_f1:.4f}, {elapsed:.1f} s -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, text = evaluate_run(args.run_dir, data=args.data, feature_mode=args.feature_mode, split=args.split)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / REPORT).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = comparison_rows(args.run_dirs)
    if not args.quiet:
        sys.stdout.write(format_table(rows))
    targets = [Path(args.csv)] if args.csv else []
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        targets.append(Path(args.out) / "comparison.csv")
    for path in targets:
        path.write_text(table_csv(rows))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"bearingdx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(message)s",
                        force=True)
    try:
        return COMMANDS[args.command](args)
    except InvalidParamError as exc:
        print(f"bearingdx {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BearingDxError, OSError) as exc:
        print(f"bearingdx {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
