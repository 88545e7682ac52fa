"""Command-line surface: gen-data, selftrain, run, advise.

`run` reads an INI-style config file (flat key=value under section headers,
documented in the README); every file key is mirrored by a flag and flags
win. Results land in an output directory as results.csv (header
`method,mode,seed,cycle,labeled,accuracy,wall_time_s`) plus a results.jsonl
sidecar carrying the resolved-config fingerprint of each run.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .advisor import (
    ThresholdPoint,
    advise_budget,
    average_curves,
    find_crossover,
    fit_threshold_line,
)
from .data import BlobSpec, BudgetSchedule, generate_blobs, load_dataset, save_dataset
from .linear import ProbeTrainConfig
from .orchestrator import (
    MODES,
    ExperimentConfig,
    emit_curve,
    run_experiment,
)
from .acquisition import METHODS
from .siamese import (
    AugmentConfig,
    NetConfig,
    SiamTrainConfig,
    save_net,
    train_simsiam,
)
from .advisor import LearningCurve

CSV_HEADER = "method,mode,seed,cycle,labeled,accuracy,wall_time_s"
SEED_ENV = "POOLFORGE_SEED"


class CliError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def _str_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip() != ""]


# ------------------------------------------------------------------ gen-data

def _cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    train, test = generate_blobs(
        num_classes=args.classes, per_class=args.per_class, dim=args.dim,
        noise_dim=args.noise_dim, sigma=args.sigma, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / "train.pfv"
    test_path = out / "test.pfv"
    save_dataset(train, train_path)
    save_dataset(test, test_path)
    print(train_path)
    print(test_path)
    return 0


# ----------------------------------------------------------------- selftrain

def _cmd_selftrain(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    dataset = load_dataset(args.train, split="train")
    net_cfg = NetConfig(
        encoder_hidden=tuple(_int_list(args.encoder_hidden)),
        embed_dim=args.embed_dim,
        predictor_hidden=tuple(_int_list(args.predictor_hidden)))
    aug_cfg = AugmentConfig(
        noise_sigma=args.noise_sigma,
        scale_range=(args.scale_lo, args.scale_hi),
        drop_prob=args.drop_prob)
    train_cfg = SiamTrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, base_lr=args.lr,
        momentum=args.momentum, weight_decay=args.weight_decay, seed=seed)
    net = train_simsiam(dataset, net_cfg, aug_cfg, train_cfg)
    save_net(net.encoder, args.out)
    print(f"final_loss={net.epoch_losses[-1]!r}")
    print(args.out)
    return 0


# ----------------------------------------------------------------------- run

_CONFIG_SCHEMA = {
    "experiment": {"mode", "methods", "seeds", "out", "jobs", "timing",
                   "net", "balanced"},
    "data": {"train", "test", "classes", "per_class", "dim", "noise_dim",
             "sigma", "gen_seed"},
    "schedule": {"initial", "per_cycle", "cycles"},
    "probe": {"epochs", "batch_size", "base_lr", "momentum", "weight_decay",
              "lr_schedule"},
    "siam": {"epochs", "batch_size", "base_lr", "momentum", "weight_decay"},
    "augment": {"noise_sigma", "scale_lo", "scale_hi", "drop_prob"},
    "net": {"encoder_hidden", "embed_dim", "predictor_hidden"},
    "svm": {"reg_c"},
}


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise CliError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        if section not in _CONFIG_SCHEMA:
            raise CliError(f"unknown config section: [{section}]")
        for key, value in parser.items(section):
            if key not in _CONFIG_SCHEMA[section]:
                raise CliError(f"unknown config key: [{section}] {key}")
            values[(section, key)] = value
    return values


def _pick(args_value, file_values, section, key, cast, default):
    """Flag > config file > default."""
    if args_value is not None:
        return args_value
    raw = file_values.get((section, key))
    if raw is not None:
        try:
            return cast(raw)
        except ValueError as exc:
            raise CliError(f"bad value for [{section}] {key}: {raw!r} ({exc})")
    return default


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    lowered = str(raw).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _resolve_run(args):
    """Merge flags over the config file into the sweep + shared config."""
    file_values = _read_config_file(args.config) if args.config else {}
    pick = lambda *a: _pick(*a)  # noqa: E731 - local alias for brevity

    methods = pick(args.methods, file_values, "experiment", "methods",
                   _str_list, None)
    if not methods:
        raise CliError("no acquisition methods given (use --methods or [experiment] methods)")
    for method in methods:
        if method not in METHODS:
            raise CliError(f"unsupported method: {method}")
    seeds = pick(args.seeds, file_values, "experiment", "seeds", _int_list, None)
    if not seeds:
        seeds = [_default_seed()]
    mode = pick(args.mode, file_values, "experiment", "mode", str, "self_train")
    if mode not in MODES:
        raise CliError(f"unsupported mode: {mode}")
    out = pick(args.out, file_values, "experiment", "out", str, None)
    if out is None:
        raise CliError("no output directory given (use --out or [experiment] out)")
    jobs = pick(args.jobs, file_values, "experiment", "jobs", int, 1)
    if jobs < 1:
        raise CliError("--jobs must be at least 1")
    timing = pick(args.timing, file_values, "experiment", "timing", str, "zero")
    if timing not in ("zero", "real"):
        raise CliError("timing must be 'zero' or 'real'")
    pretrained = pick(args.net, file_values, "experiment", "net", str, None)
    balanced = pick(args.balanced, file_values, "experiment", "balanced",
                    _parse_bool, True)

    train_path = pick(args.train, file_values, "data", "train", str, None)
    test_path = pick(args.test, file_values, "data", "test", str, None)
    classes = pick(args.classes, file_values, "data", "classes", int, None)
    generator = None
    if classes is not None:
        generator = BlobSpec(
            num_classes=classes,
            per_class=pick(args.per_class, file_values, "data", "per_class", int, 100),
            dim=pick(args.dim, file_values, "data", "dim", int, 16),
            noise_dim=pick(args.noise_dim, file_values, "data", "noise_dim", int, 0),
            sigma=pick(args.sigma, file_values, "data", "sigma", float, 0.3),
            seed=pick(args.gen_seed, file_values, "data", "gen_seed", int, 0))
    if generator is not None and (train_path or test_path):
        raise CliError("give either dataset paths or generator parameters, not both")
    if generator is None and not (train_path and test_path):
        raise CliError("no dataset: set [data] train/test paths or generator parameters")

    schedule = BudgetSchedule(
        initial=pick(args.initial, file_values, "schedule", "initial", int, 10),
        per_cycle=pick(args.per_cycle, file_values, "schedule", "per_cycle", int,
                       pick(args.initial, file_values, "schedule", "initial", int, 10)),
        cycles=pick(args.cycles, file_values, "schedule", "cycles", int, 5))

    probe = ProbeTrainConfig(
        epochs=pick(args.probe_epochs, file_values, "probe", "epochs", int, 100),
        batch_size=pick(args.probe_batch_size, file_values, "probe", "batch_size", int, None),
        base_lr=pick(args.probe_lr, file_values, "probe", "base_lr", float, 0.1),
        momentum=pick(args.probe_momentum, file_values, "probe", "momentum", float, 0.9),
        weight_decay=pick(args.probe_weight_decay, file_values, "probe",
                          "weight_decay", float, 0.0),
        lr_schedule=pick(args.probe_schedule, file_values, "probe", "lr_schedule",
                         str, "cosine"))
    siam = SiamTrainConfig(
        epochs=pick(args.siam_epochs, file_values, "siam", "epochs", int, 400),
        batch_size=pick(args.siam_batch_size, file_values, "siam", "batch_size", int, 64),
        base_lr=pick(args.siam_lr, file_values, "siam", "base_lr", float, 0.1),
        momentum=pick(args.siam_momentum, file_values, "siam", "momentum", float, 0.9),
        weight_decay=pick(args.siam_weight_decay, file_values, "siam",
                          "weight_decay", float, 1e-4))
    augment = AugmentConfig(
        noise_sigma=pick(args.aug_noise_sigma, file_values, "augment",
                         "noise_sigma", float, 0.4),
        scale_range=(pick(args.aug_scale_lo, file_values, "augment", "scale_lo", float, 0.8),
                     pick(args.aug_scale_hi, file_values, "augment", "scale_hi", float, 1.2)),
        drop_prob=pick(args.aug_drop_prob, file_values, "augment", "drop_prob", float, 0.1))
    net = NetConfig(
        encoder_hidden=tuple(pick(args.encoder_hidden, file_values, "net",
                                  "encoder_hidden", _int_list, [64])),
        embed_dim=pick(args.embed_dim, file_values, "net", "embed_dim", int, 32),
        predictor_hidden=tuple(pick(args.predictor_hidden, file_values, "net",
                                    "predictor_hidden", _int_list, [16])))
    svm_reg_c = pick(args.svm_reg_c, file_values, "svm", "reg_c", float, 5.0)

    shared = dict(
        schedule=schedule, mode=mode, train_path=train_path, test_path=test_path,
        generator=generator, pretrained_net=pretrained, balanced=balanced,
        probe=probe, siam=siam, augment=augment, net=net, svm_reg_c=svm_reg_c,
        record_timing=(timing == "real"))
    return methods, seeds, Path(out), jobs, shared


def _run_one(config: ExperimentConfig):
    return run_experiment(config)


def _format_float(value: float) -> str:
    return repr(float(value))


def _cmd_run(args) -> int:
    methods, seeds, out, jobs, shared = _resolve_run(args)
    configs = [ExperimentConfig(method=method, seed=seed, **shared)
               for method in methods for seed in seeds]
    results = {}
    failures = []
    if jobs == 1:
        for config in configs:
            try:
                results[(config.method, config.seed)] = _run_one(config)
            except Exception as exc:
                failures.append((config.method, config.seed, str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_one, c): c for c in configs}
            for future, config in futures.items():
                try:
                    results[(config.method, config.seed)] = future.result()
                except Exception as exc:
                    failures.append((config.method, config.seed, str(exc)))

    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    sidecar_path = out / "results.jsonl"
    with open(csv_path, "w") as csv_fh, open(sidecar_path, "w") as side_fh:
        csv_fh.write(CSV_HEADER + "\n")
        for config in configs:  # deterministic (method, seed) order
            key = (config.method, config.seed)
            if key not in results:
                continue
            result = results[key]
            for record in result.records:
                csv_fh.write(",".join([
                    record.method, record.mode, str(config.seed),
                    str(record.cycle), str(record.labeled_count),
                    _format_float(record.test_accuracy),
                    _format_float(record.wall_time)]) + "\n")
            meta = {
                "method": config.method, "mode": config.mode,
                "seed": config.seed, "fingerprint": result.fingerprint,
                "num_classes": _num_classes_of(config),
                "initial": config.schedule.initial,
                "per_cycle": config.schedule.per_cycle,
                "cycles": config.schedule.cycles,
            }
            side_fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for method, seed, message in failures:
            side_fh.write(json.dumps(
                {"method": method, "seed": seed, "error": message},
                sort_keys=True) + "\n")
    for method, seed, message in failures:
        print(f"run failed: method={method} seed={seed}: {message}", file=sys.stderr)
    print(csv_path)
    return 1 if failures else 0


def _num_classes_of(config: ExperimentConfig) -> int:
    if config.generator is not None:
        return config.generator.num_classes
    return load_dataset(config.train_path).num_classes


# -------------------------------------------------------------------- advise

def _parse_results_csv(path):
    """CSV -> {(method, mode): averaged LearningCurve} plus raw curves."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise CliError(f"{path}: unexpected CSV header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            method, mode, seed, cycle, labeled, accuracy, wall = line.split(",")
            rows.append((method, mode, int(seed), int(cycle), int(labeled),
                         float(accuracy)))
    by_run = {}
    for method, mode, seed, cycle, labeled, accuracy in rows:
        by_run.setdefault((method, mode, seed), []).append((cycle, labeled, accuracy))
    curves = {}
    for (method, mode, seed), points in by_run.items():
        points.sort()
        curves.setdefault((method, mode), []).append(LearningCurve(
            budgets=[p[1] for p in points], accuracies=[p[2] for p in points],
            method=method, mode=mode))
    return {key: average_curves(cs) for key, cs in curves.items()}


def _sidecar_num_classes(results_path) -> int | None:
    sidecar = Path(results_path).with_suffix(".jsonl")
    if not sidecar.exists():
        return None
    with open(sidecar) as fh:
        for line in fh:
            meta = json.loads(line)
            if "num_classes" in meta:
                return int(meta["num_classes"])
    return None


def _parse_points(text) -> list[ThresholdPoint]:
    points = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            classes, spc = token.split(":")
            points.append(ThresholdPoint(int(classes), float(spc)))
        except ValueError:
            raise CliError(f"bad threshold point {token!r}; expected C:samples_per_class")
    return points


def _cmd_advise(args) -> int:
    points = _parse_points(args.points) if args.points else []
    fitted_from = []
    for results_path in args.results or []:
        curves = _parse_results_csv(results_path)
        randoms = {mode: curve for (method, mode), curve in curves.items()
                   if method == "random"}
        if not randoms:
            raise CliError(f"{results_path}: missing random baseline")
        num_classes = args.results_classes or _sidecar_num_classes(results_path)
        if num_classes is None:
            raise CliError(
                f"{results_path}: class count unknown (no sidecar; pass --results-classes)")
        for (method, mode), curve in sorted(curves.items()):
            if method == "random":
                continue
            crossover = find_crossover(curve, randoms[mode])
            if crossover is None:
                print(f"crossover {method} ({mode}): none (never overtakes random)")
            else:
                spc = crossover / num_classes
                print(f"crossover {method} ({mode}): budget={crossover} "
                      f"samples_per_class={spc:.6f}")
                if method == args.method:
                    points.append(ThresholdPoint(num_classes, spc))
                    fitted_from.append(results_path)
    if len(points) >= 2:
        fit = fit_threshold_line(points)
        print(f"fit: slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
              f"r={fit.pearson_r:.6f}")
        if args.classes is not None:
            spc, total = advise_budget(fit, args.classes)
            lo = min(p.num_classes for p in points)
            hi = max(p.num_classes for p in points)
            flag = " (extrapolated)" if not (lo <= args.classes <= hi) else ""
            print(f"advice for C={args.classes}: samples_per_class={spc:.6f} "
                  f"total_budget={total}{flag}")
    elif args.classes is not None:
        raise CliError("advising a budget needs at least two threshold points "
                       "(from results files and/or --points)")
    return 0


# ------------------------------------------------------------------- parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolforge",
        description="Budget-cycled active learning on feature pools")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="synthesize a Gaussian-cluster dataset")
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--per-class", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--noise-dim", type=int, default=0)
    gen.add_argument("--sigma", type=float, default=0.3)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_data)

    st = sub.add_parser("selftrain", help="pretrain the siamese encoder")
    st.add_argument("--train", required=True)
    st.add_argument("--out", required=True)
    st.add_argument("--epochs", type=int, default=400)
    st.add_argument("--batch-size", type=int, default=64)
    st.add_argument("--lr", type=float, default=0.1)
    st.add_argument("--momentum", type=float, default=0.9)
    st.add_argument("--weight-decay", type=float, default=1e-4)
    st.add_argument("--seed", type=int, default=None)
    st.add_argument("--noise-sigma", type=float, default=0.4)
    st.add_argument("--scale-lo", type=float, default=0.8)
    st.add_argument("--scale-hi", type=float, default=1.2)
    st.add_argument("--drop-prob", type=float, default=0.1)
    st.add_argument("--encoder-hidden", default="64")
    st.add_argument("--embed-dim", type=int, default=32)
    st.add_argument("--predictor-hidden", default="16")
    st.set_defaults(func=_cmd_selftrain)

    run = sub.add_parser("run", help="execute an acquisition/seed sweep")
    run.add_argument("--config", default=None, help="INI config file")
    run.add_argument("--methods", type=_str_list, default=None)
    run.add_argument("--seeds", type=_int_list, default=None)
    run.add_argument("--mode", default=None, choices=MODES)
    run.add_argument("--out", default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.add_argument("--timing", default=None, choices=("zero", "real"))
    run.add_argument("--net", default=None, help="pretrained encoder file")
    run.add_argument("--balanced", type=_parse_bool, default=None)
    run.add_argument("--train", default=None)
    run.add_argument("--test", default=None)
    run.add_argument("--classes", type=int, default=None)
    run.add_argument("--per-class", type=int, default=None)
    run.add_argument("--dim", type=int, default=None)
    run.add_argument("--noise-dim", type=int, default=None)
    run.add_argument("--sigma", type=float, default=None)
    run.add_argument("--gen-seed", type=int, default=None)
    run.add_argument("--initial", type=int, default=None)
    run.add_argument("--per-cycle", type=int, default=None)
    run.add_argument("--cycles", type=int, default=None)
    run.add_argument("--probe-epochs", type=int, default=None)
    run.add_argument("--probe-batch-size", type=int, default=None)
    run.add_argument("--probe-lr", type=float, default=None)
    run.add_argument("--probe-momentum", type=float, default=None)
    run.add_argument("--probe-weight-decay", type=float, default=None)
    run.add_argument("--probe-schedule", default=None, choices=("cosine", "constant"))
    run.add_argument("--siam-epochs", type=int, default=None)
    run.add_argument("--siam-batch-size", type=int, default=None)
    run.add_argument("--siam-lr", type=float, default=None)
    run.add_argument("--siam-momentum", type=float, default=None)
    run.add_argument("--siam-weight-decay", type=float, default=None)
    run.add_argument("--aug-noise-sigma", type=float, default=None)
    run.add_argument("--aug-scale-lo", type=float, default=None)
    run.add_argument("--aug-scale-hi", type=float, default=None)
    run.add_argument("--aug-drop-prob", type=float, default=None)
    run.add_argument("--encoder-hidden", type=_int_list, default=None)
    run.add_argument("--embed-dim", type=int, default=None)
    run.add_argument("--predictor-hidden", type=_int_list, default=None)
    run.add_argument("--svm-reg-c", type=float, default=None)
    run.set_defaults(func=_cmd_run)

    adv = sub.add_parser("advise", help="crossover budgets and advice")
    adv.add_argument("--results", action="append", default=None,
                     help="results.csv from `run` (repeatable)")
    adv.add_argument("--results-classes", type=int, default=None,
                     help="class count override when a sidecar is missing")
    adv.add_argument("--method", default="entropy",
                     help="AL method whose crossovers feed the fit")
    adv.add_argument("--points", default=None,
                     help="explicit C:samples_per_class pairs, comma separated")
    adv.add_argument("--classes", type=int, default=None,
                     help="class count to advise a budget for")
    adv.set_defaults(func=_cmd_advise)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
