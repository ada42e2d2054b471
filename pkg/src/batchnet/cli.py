"""Command-line entry point: ``batchnet <subcommand> [flags]``.

Exit codes: 0 clean finish, 1 usage/configuration/data errors, 2 numerical
failure (divergence, failed gradient check).
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .backprop import run_gradient_checks
from .data import (
    Dataset,
    Normalizer,
    apply_normalizer,
    fit_normalizer,
    generate_synthetic,
    load_csv,
    save_csv,
    split_dataset,
)
from .errors import BatchNetError, DimensionError, DivergenceError
from .evaluation import (
    DEFAULT_HIDDEN,
    DEFAULT_THRESHOLD,
    classify,
    compare_algorithms,
    evaluate,
    format_table,
    write_table_csv,
)
from .network import init_network, load_model_bundle, save_model, simulate
from .optimizers import Algorithm, TrainConfig, config_from_flat, emit_curve, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
GRADCHECK_TOLERANCE = 1e-6
COMPARE_ALGORITHMS = ("gd", "gda", "rprop", "bfgs", "lm")

_TRAIN_DEFAULTS = TrainConfig()
# flag dest -> (built-in default, TrainConfig field or None)
SHARED_DEFAULTS = {
    "seed": (1, "seed"),
    "algorithm": (_TRAIN_DEFAULTS.algorithm.value, "algorithm"),
    "lr": (_TRAIN_DEFAULTS.learning_rate, "learning_rate"),
    "goal": (_TRAIN_DEFAULTS.goal, "goal"),
    "max_epochs": (_TRAIN_DEFAULTS.max_epochs, "max_epochs"),
    "min_grad": (_TRAIN_DEFAULTS.min_gradient, "min_gradient"),
    "max_time": (_TRAIN_DEFAULTS.max_time, "max_time"),
    "momentum": (_TRAIN_DEFAULTS.momentum, "momentum"),
    "patience": (_TRAIN_DEFAULTS.validation_patience, "validation_patience"),
    "threshold": (DEFAULT_THRESHOLD, None),
    "raw": (False, None),
    "data": (None, None),
    "out": (None, None),
    "model": (None, None),
    "hidden": (",".join(map(str, DEFAULT_HIDDEN)), None),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shared_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int, help="random seed (default 1)")
    p.add_argument("--data", help="input CSV")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], help="training algorithm (default lm)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.07)")
    p.add_argument("--goal", type=float, help="mse goal (default 1e-3)")
    p.add_argument("--max-epochs", type=int, help="epoch limit (default 10000)")
    p.add_argument("--min-grad", type=float, help="gradient-norm floor (default 1e-6)")
    p.add_argument("--max-time", type=float, help="training time limit in seconds (default none)")
    p.add_argument("--momentum", type=float, help="momentum coefficient for gdx (default 0.9)")
    p.add_argument("--threshold", type=float, help="classification cut-off (default 0.5)")
    p.add_argument("--raw", action="store_const", const=True, help="skip min-max normalization")
    p.add_argument("--patience", type=int, help="validation patience, 0 disables (default 6)")
    p.add_argument("--hidden", help="hidden layer sizes, comma separated (default 8,8)")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = _Parser(prog="batchnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"batchnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[shared], help="write a synthetic cohort CSV")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--positive-fraction", type=float, default=0.78)

    sub.add_parser("split", parents=[shared], help="write train/validation/test CSVs")

    t = sub.add_parser("train", parents=[shared], help="train a network")
    t.add_argument("--no-split", action="store_true", help="train on the whole --data file")
    t.add_argument("--validation", help="validation CSV used with --no-split")
    t.add_argument("--curve", help="curve CSV path (default <out>/curve.csv)")

    sub.add_parser("predict", parents=[shared], help="print network outputs per row")
    sub.add_parser("evaluate", parents=[shared], help="confusion counts on labeled data")

    gc = sub.add_parser("gradcheck", parents=[shared], help="backprop vs finite differences")
    gc.add_argument("--trials", type=int, default=100)

    c = sub.add_parser("compare", parents=[shared], help="train every algorithm on one split")
    c.add_argument("--algorithms", default=",".join(COMPARE_ALGORITHMS))
    c.add_argument("--timing", action="store_true", help="write wall time into the table files")
    return parser


def _coerce(key, text):
    if key in ("raw",):
        lowered = text.strip().lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no"):
            raise UsageError(f"config key '{key}' expects a boolean, got {text!r}")
        return lowered in ("1", "true", "yes")
    default = SHARED_DEFAULTS[key][0] if key in SHARED_DEFAULTS else None
    try:
        if key in ("seed", "max_epochs", "patience"):
            return int(text)
        if isinstance(default, float) or key in ("max_time", "lr", "goal", "min_grad", "momentum", "threshold"):
            return float(text)
    except ValueError:
        raise UsageError(f"config key '{key}' has invalid value {text!r}") from None
    return text.strip()


def read_config_file(path) -> tuple:
    """Parse ``key=value`` lines. Returns (shared flag values, extra TrainConfig values)."""
    shared, extra = {}, {}
    flat_keys = set(TrainConfig().as_flat_dict())
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key in SHARED_DEFAULTS:
            shared[key] = _coerce(key, value)
        elif key in flat_keys:
            extra[key] = value
        else:
            raise UsageError(f"{path}:{lineno}: unknown key '{key}'")
    return shared, extra


def resolve(args) -> dict:
    """Merge built-in defaults, the config file and flags (flags win)."""
    settings = {k: v[0] for k, v in SHARED_DEFAULTS.items()}
    extra = {}
    if args.config:
        from_file, extra = read_config_file(args.config)
        settings.update(from_file)
    for key in SHARED_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    flat = TrainConfig().as_flat_dict()
    for key, text in extra.items():
        kind = type(flat[key]) if flat[key] is not None else float
        try:
            flat[key] = kind(text)
        except ValueError:
            raise UsageError(f"config key '{key}' has invalid value {text!r}") from None
    for key, (_, field_name) in SHARED_DEFAULTS.items():
        if field_name:
            flat[field_name] = settings[key]
    settings["train_config"] = config_from_flat(flat)
    return settings


def _print_config(command, settings, extra=None):
    items = {k: v for k, v in settings.items()
             if k != "train_config" and not (k in SHARED_DEFAULTS and SHARED_DEFAULTS[k][1])}
    items.update(settings["train_config"].as_flat_dict())
    if extra:
        items.update(extra)
    print(f"# batchnet {command}", file=sys.stderr)
    for key in sorted(items):
        print(f"#   {key}={items[key]}", file=sys.stderr)


def _require(settings, key, flag):
    if not settings.get(key):
        raise UsageError(f"{flag} is required")
    return settings[key]


def _existing(path, flag):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _hidden(settings):
    try:
        sizes = tuple(int(s) for s in str(settings["hidden"]).split(",") if s.strip())
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated integers, got {settings['hidden']!r}") from None
    return sizes


def cmd_generate(args, settings):
    out = _require(settings, "out", "--out")
    d = generate_synthetic(settings["seed"], args.n, args.positive_fraction)
    save_csv(d, out)
    print(f"wrote {len(d)} records ({d.n_positive} positive) to {out}")


def cmd_split(args, settings):
    data = load_csv(_existing(_require(settings, "data", "--data"), "--data"))
    out = Path(_require(settings, "out", "--out"))
    out.mkdir(parents=True, exist_ok=True)
    split = split_dataset(data, settings["seed"])
    for name in ("train", "validation", "test"):
        part = getattr(split, name)
        save_csv(part, out / f"{name}.csv")
        print(f"{name}: {len(part)} records, {part.n_positive} positive")


def cmd_train(args, settings):
    config = settings["train_config"]
    data = load_csv(_existing(_require(settings, "data", "--data"), "--data"))
    if args.no_split:
        train_part = data
        val_part = load_csv(_existing(args.validation, "--validation")) if args.validation else None
        test_part = None
    else:
        split = split_dataset(data, settings["seed"])
        train_part, val_part, test_part = split.train, split.validation, split.test
    scaler = None if settings["raw"] else fit_normalizer(train_part)

    def prep(d):
        return d if d is None or scaler is None else apply_normalizer(scaler, d)

    train_part, val_part, test_part = prep(train_part), prep(val_part), prep(test_part)
    out = Path(settings["out"] or ".")
    if settings["model"]:
        model_path = Path(settings["model"])
    else:
        out.mkdir(parents=True, exist_ok=True)
        model_path = out / "model.json"
    curve_path = Path(args.curve) if args.curve else model_path.with_name("curve.csv")

    net = init_network(4, _hidden(settings), 1, seed=settings["seed"])
    val_xy = (val_part.features, val_part.targets()) if val_part is not None and len(val_part) else None
    net, history, reason = train(net, (train_part.features, train_part.targets()), val_xy, config)
    save_model(net, model_path, scaler.to_dict() if scaler else None)
    emit_curve(history, curve_path)
    last = history[-1]
    print(f"algorithm={config.algorithm.value} epochs={last.epoch} stop={reason.value} mse={last.mse!r}")
    if test_part is not None and len(test_part):
        report = evaluate(net, test_part, settings["threshold"], config.algorithm.value)
        prec = "n/a" if report.precision is None else f"{report.precision:.4f}"
        print(f"test: precision={prec} accuracy={report.accuracy:.4f} fp={report.false_positives}")
    print(f"model={model_path} curve={curve_path}")


def _load_for_inference(settings):
    path = _existing(_require(settings, "model", "--model"), "--model")
    net, norm = load_model_bundle(path)
    return net, (Normalizer.from_dict(norm) if norm is not None else None)


def _check_features(net, data: Dataset, source):
    if net.input_dim != data.features.shape[1]:
        raise DimensionError(f"{source}: model expects {net.input_dim} features, file has {data.features.shape[1]}")


def _read_features(path, net):
    """Load an unlabeled CSV, checking the column count against the model first."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header:
        cols = [c for c in header.split(",") if c.strip() and c.strip() != "label"]
        if len(cols) != net.input_dim:
            raise DimensionError(f"{path}: model expects {net.input_dim} features, file has {len(cols)}")
    return load_csv(path, require_label=False)


def cmd_predict(args, settings):
    net, scaler = _load_for_inference(settings)
    path = _existing(_require(settings, "data", "--data"), "--data")
    data = _read_features(path, net)
    x = scaler.transform(data.features) if scaler is not None else data.features
    outputs = simulate(net, x)[:, 0] if len(data) else np.empty(0)
    decisions = classify(outputs, settings["threshold"])
    for i, (y, c) in enumerate(zip(outputs, decisions)):
        print(f"{i},{float(y)!r},{int(c)}")


def cmd_evaluate(args, settings):
    net, scaler = _load_for_inference(settings)
    data = load_csv(_existing(_require(settings, "data", "--data"), "--data"))
    _check_features(net, data, settings["data"])
    if scaler is not None:
        data = apply_normalizer(scaler, data)
    report = evaluate(net, data, settings["threshold"])
    cm = report.confusion
    prec = "n/a" if report.precision is None else f"{report.precision:.4f}"
    acc = "n/a" if report.accuracy is None else f"{report.accuracy:.4f}"
    print(f"records={cm.total} tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}")
    print(f"precision={prec} accuracy={acc} threshold={report.threshold}")


def cmd_gradcheck(args, settings):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    errors = run_gradient_checks(settings["seed"], args.trials)
    worst = max(errors)
    ok = worst < GRADCHECK_TOLERANCE
    print(f"trials={len(errors)} max_relative_error={worst:.3e} tolerance={GRADCHECK_TOLERANCE:g} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_compare(args, settings):
    data = load_csv(_existing(_require(settings, "data", "--data"), "--data"))
    out = Path(settings["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    base = settings["train_config"]
    names = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    try:
        configs = [replace(base, algorithm=Algorithm(name)) for name in names]
    except ValueError as exc:
        raise UsageError(f"--algorithms: {exc}") from None
    rows = compare_algorithms(data, configs, settings["seed"], settings["threshold"],
                              _hidden(settings), normalize=not settings["raw"])
    write_table_csv(rows, out / "comparison.csv", timing=args.timing)
    (out / "comparison.txt").write_text(format_table(rows, timing=args.timing), encoding="utf-8")
    sys.stdout.write(format_table(rows, timing=True))
    for row in rows:
        if row.error:
            print(f"{row.algorithm}: {row.error}", file=sys.stderr)


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve(args)
        extra = {k: v for k, v in vars(args).items() if k not in SHARED_DEFAULTS and k not in ("config", "command")}
        _print_config(args.command, settings, extra)
        code = COMMANDS[args.command](args, settings)
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, BatchNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
