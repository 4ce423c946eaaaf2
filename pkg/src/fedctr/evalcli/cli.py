"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, build_config, load_config_file, normalize_key, parse_value

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# flag -> RunConfig field, shared by every subcommand
_COMMON_FLAGS = {
    "--seed": "seed",
    "--platforms": "platforms",
    "--lambda-ldp": "lambda_ldp",
    "--lambda-dp": "lambda_dp",
    "--predictor": "predictor",
    "--aggregator": "aggregator",
    "--epochs": "epochs",
    "--batch-size": "batch_size",
    "--lr": "lr",
    "--optimizer": "optimizer",
    "--train-fraction": "train_fraction",
    "--behavior-fraction": "behavior_fraction",
    "--repeats": "repeats",
    "--out": "out",
    "--data": "data",
    "--users": "users",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    for flag, name in _COMMON_FLAGS.items():
        p.add_argument(flag, dest=name, default=None, metavar=name.upper())
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="set any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedctr", description="Federated native-ad CTR prediction: experiments and tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    _common(p)

    p = sub.add_parser("train", help="train, evaluate on the test window, write one report per repeat")
    _common(p)
    p.add_argument("--checkpoint", help="save the trained parties' parameters here (single run, repeats ignored)")

    p = sub.add_parser("evaluate", help="evaluate saved parameters (or an untrained model) and write a report; single run")
    _common(p)
    p.add_argument("--checkpoint", help="load the parties' parameters from here")

    p = sub.add_parser("attack", help="train, then run the behavior-inference attack")
    _common(p)
    p.add_argument("--instances", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--component", action="append", default=None)

    p = sub.add_parser("ablate", help="run an ablation sweep; writes reports, a CSV table and a figure")
    p.add_argument("which", choices=["platforms", "noise", "variants", "behavior-fraction", "train-fraction"])
    _common(p)
    p.add_argument("--counts", default=None, help="platform counts, e.g. 1,2")
    p.add_argument("--order", default=None, help="platform order, e.g. 2,1")
    p.add_argument("--ldp-scales", default="0,0.01,0.1,1.0")
    p.add_argument("--dp-scales", default="0,0.005,0.05,0.5")
    p.add_argument("--fractions", default=None)
    p.add_argument("--predictors", default=None)
    p.add_argument("--aggregators", default=None)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--no-figure", action="store_true")
    return parser


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"bad number list {text!r}") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"bad integer list {text!r}") from e


def config_from_args(args) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        k = normalize_key(k)
        overrides[k] = parse_value(k, v)
    for name in _COMMON_FLAGS.values():
        raw = getattr(args, name, None)
        if raw is not None:
            overrides[name] = parse_value(name, raw)
    return build_config(file_values, overrides)


def _print_metrics(report) -> None:
    for k, v in report.metrics.items():
        print(f"{k}\t{v:.6f}")


def _print_summary(reports, prefix: str = "") -> None:
    from .report import summarize

    keys = [k for k in reports[0].metrics if k.startswith(prefix)]
    for k in keys:
        mean, std = summarize([r.metrics[k] for r in reports if k in r.metrics])
        print(f"{k}\t{mean:.6f}\t+-{std:.6f}")


def cmd_gen_data(cfg: RunConfig, args) -> int:
    from ..dataio import generate_synthetic, save_dataset

    ds = generate_synthetic(cfg.synthetic_spec())
    path = save_dataset(ds, cfg.out)
    for k, v in ds.counts().items():
        print(f"{k}\t{v}")
    print(f"written\t{path}")
    return EXIT_OK


def _write_reports(reports, out) -> None:
    for rep in reports:
        print(f"report\t{rep.write(out)}")


def cmd_train(cfg: RunConfig, args) -> int:
    from .ablation import run_repeats
    from .experiment import build_federation, evaluate_federation, prepare

    if args.checkpoint:
        cfg = cfg.replace(repeats=1)
        splits = prepare(cfg)
        fed = build_federation(cfg, splits.dataset)
        report = evaluate_federation(cfg, fed, splits, "train", train=True)
        fed.save_checkpoint(args.checkpoint)
        _print_metrics(report)
        print(f"report\t{report.write(cfg.out)}")
        return EXIT_OK
    reports = run_repeats(cfg, "train")
    _print_summary(reports)
    _write_reports(reports, cfg.out)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    from .experiment import build_federation, evaluate_federation, prepare

    cfg = cfg.replace(repeats=1)
    splits = prepare(cfg)
    fed = build_federation(cfg, splits.dataset)
    if args.checkpoint:
        fed.load_checkpoint(args.checkpoint)
    report = evaluate_federation(cfg, fed, splits, "evaluate", train=False)
    path = report.write(cfg.out)
    _print_metrics(report)
    print(f"report\t{path}")
    return EXIT_OK


def cmd_attack(cfg: RunConfig, args) -> int:
    from .ablation import run_repeats

    n = args.instances or cfg.attack_instances or 1000
    reports = run_repeats(cfg.replace(attack_instances=n), "attack")
    _print_summary(reports, "attack.")
    _write_reports(reports, cfg.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import COMPONENTS, TOLERANCE, run_suite

    names = args.component or list(COMPONENTS)
    unknown = [n for n in names if n not in COMPONENTS]
    if unknown:
        raise ConfigError(f"unknown components {unknown}; choose from {sorted(COMPONENTS)}")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    worst = run_suite(range(args.seeds), names)
    ok = True
    for name, err in worst.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{name}\t{err:.3e}\t{'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_ablate(cfg: RunConfig, args) -> int:
    from . import ablation as ab

    w = args.which
    if w == "platforms":
        order = _ints(args.order) if args.order else None
        k = len(order) if order else (len(cfg.platforms) if cfg.platforms else cfg.n_platforms)
        counts = _ints(args.counts) if args.counts else list(range(1, k + 1))
        res = ab.run_ablation_platforms(cfg, counts, order)
    elif w == "noise":
        res = ab.run_ablation_noise(cfg, _floats(args.ldp_scales), _floats(args.dp_scales), args.instances)
    elif w == "variants":
        from ..models import AGGREGATORS, PREDICTORS

        preds = args.predictors.split(",") if args.predictors else list(PREDICTORS)
        aggs = args.aggregators.split(",") if args.aggregators else list(AGGREGATORS)
        bad = [v for v in preds if v not in PREDICTORS] + [v for v in aggs if v not in AGGREGATORS]
        if bad:
            raise ConfigError(f"unknown variants {bad}")
        res = ab.run_ablation_variants(cfg, preds, aggs)
    else:
        default = "0.2,0.4,0.6,0.8,1.0" if w == "behavior-fraction" else "0.25,0.5,1.0"
        fractions = _floats(args.fractions or default)
        if any(not 0 < f <= 1 for f in fractions):
            raise ConfigError("fractions must be in (0, 1]")
        runner = ab.run_ablation_behavior_fraction if w == "behavior-fraction" else ab.run_ablation_train_fraction
        res = runner(cfg, fractions)
    paths = res.write(cfg.out, figure=not args.no_figure)
    cols = res.columns
    print(",".join(cols))
    for r in res.rows:
        print(",".join(str(ab._cell(r.get(c))) for c in cols))
    print(f"table\t{paths['table']}")
    if "figure" in paths:
        print(f"figure\t{paths['figure']}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_CONFIG
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        cfg = config_from_args(args)
        if args.command == "attack" and args.instances is not None and args.instances < 1:
            raise ConfigError("--instances must be positive")
        handler = {
            "gen-data": cmd_gen_data,
            "train": cmd_train,
            "evaluate": cmd_evaluate,
            "attack": cmd_attack,
            "ablate": cmd_ablate,
        }[args.command]
        return handler(cfg, args)
    except ConfigError as e:
        print(f"fedctr: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - the CLI reports any failure as a runtime error
        print(f"fedctr: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
