"""Command-line entry point: ``lapprune {train,prune,eval,experiment,verify,bench}``.

Experiment settings come from defaults, then an optional flat ``key=value``
config file (``--config``), then command-line flags. Keys are the
ExperimentSpec field names; flags use dashes (``--retrain-steps``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .data import DataError
from .experiment import (
    ExperimentSpec,
    benchmark_scoring,
    build_network,
    emit_report,
    iterative_pipeline,
    load_data,
    report_csv,
    run_pipeline,
)
from .masks import prune
from .nn import serialize
from .nn.network import architecture, glorot_init
from .nn.train import evaluate, train
from .verify import run_verification

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
SPEC_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
_TUPLE_FIELDS = ("criteria", "taus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_taus(text: str) -> tuple:
    """``"4..10"`` (inclusive range) or ``"0,2,4"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(t) for t in text.split(".."))
        if hi < lo:
            raise UsageError(f"empty tau range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def coerce(name: str, text: str):
    if name not in SPEC_FIELDS:
        raise UsageError(f"unknown setting {name!r}")
    try:
        if name == "taus":
            return parse_taus(text)
        if name == "criteria":
            return tuple(t.strip() for t in text.split(",") if t.strip())
        default = SPEC_FIELDS[name].default
        if text.lower() in ("none", "") and name in ("n_train", "n_test", "data_dir", "output"):
            return None
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int) or name in ("n_train", "n_test"):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise UsageError(f"bad value for {name}: {text!r}") from None


def read_config(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = coerce(key, value)
    return out


def build_spec(args) -> ExperimentSpec:
    values = {}
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file {args.config} not found")
        values.update(read_config(args.config))
    for name in SPEC_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = coerce(name, flag)
    try:
        return ExperimentSpec(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _add_spec_flags(p):
    p.add_argument("--config", help="flat key=value settings file")
    for name in SPEC_FIELDS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, metavar=name.upper(),
                       help=f"(default {SPEC_FIELDS[name].default!r})")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lapprune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a dense network and save it")
    _add_spec_flags(p)
    p.add_argument("--out", required=True, help="LAPNET01 output file")

    p = sub.add_parser("prune", help="prune a saved network with the first criterion and tau")
    _add_spec_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="report train and test error of a saved network")
    _add_spec_flags(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("experiment", help="train/prune/retrain over criteria, taus and trials")
    _add_spec_flags(p)
    p.add_argument("--cycles", type=int, default=0,
                   help="iterative prune/retrain cycles (0 = one-shot over all taus)")
    p.add_argument("--format", choices=("csv", "json"))

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="time score computation per criterion")
    _add_spec_flags(p)
    p.add_argument("--repeats", type=int, default=5)
    return parser


def _load_model(path):
    try:
        return serialize.load(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such model file") from None
    except serialize.FormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_train(args):
    spec = build_spec(args)
    tr, te = load_data(spec)
    net = build_network(spec, tr.input_shape, tr.class_count, spec.base_seed)
    net = train(net, tr, spec.train_config(spec.base_seed))
    serialize.save(net, args.out)
    print(f"train_error={evaluate(net, tr):.6g} test_error={evaluate(net, te):.6g}")
    return EXIT_OK


def cmd_prune(args):
    spec = build_spec(args)
    net = _load_model(args.model)
    crit = spec.criteria[0]
    data = None
    if crit in ("LAP_act", "OBD", "OBD_LAP"):
        data = load_data(spec)[0].take(spec.stats_samples)
    pruned, _ = prune(net, spec.prune_config(crit, spec.taus[0], spec.base_seed), data=data)
    serialize.save(pruned, args.out)
    print(f"criterion={crit} tau={spec.taus[0]} surviving_fraction={pruned.surviving_fraction():.6g}")
    return EXIT_OK


def cmd_eval(args):
    spec = build_spec(args)
    net = _load_model(args.model)
    tr, te = load_data(spec)
    print(f"surviving_fraction={net.surviving_fraction():.6g} "
          f"train_error={evaluate(net, tr):.6g} test_error={evaluate(net, te):.6g}")
    return EXIT_OK


def cmd_experiment(args):
    spec = build_spec(args)
    log = lambda msg: print(msg, file=sys.stderr)  # noqa: E731
    if args.cycles:
        result = iterative_pipeline(spec, args.cycles, log=log)
    else:
        result = run_pipeline(spec, log=log)
    if spec.output:
        try:
            emit_report(result, spec.output, args.format)
        except OSError as exc:
            raise UsageError(f"cannot write report: {exc}") from None
    else:
        sys.stdout.write(report_csv(result))
    return EXIT_OK


def cmd_verify(args):
    results = run_verification(seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_bench(args):
    spec = build_spec(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    net = glorot_init(architecture(spec.architecture, batchnorm=spec.batchnorm), seed=spec.base_seed)
    times = benchmark_scoring(net, spec.criteria, repeats=args.repeats)
    base = times.get("MP")
    for crit, t in times.items():
        ratio = f" ({t / base:.2f}x MP)" if base else ""
        print(f"{crit}: {t * 1e3:.3f} ms{ratio}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "prune": cmd_prune, "eval": cmd_eval,
            "experiment": cmd_experiment, "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lapprune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"lapprune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
