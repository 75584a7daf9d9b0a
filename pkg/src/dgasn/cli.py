"""Command line: train, eval, gradcheck, ablate, synth.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import autodiff as ad
from .diagnostics import MAX_NODES, gradcheck
from .encoder import encode
from .graph import DatasetError, SynthParams, load_graph, save_graph, synth_pair
from .heads import EDGE_OPERATORS
from .metrics import UndefinedMetricError, evaluate_target, export_attention_histograms
from .model import ContainerError, load_params, save_params
from .presets import STANDARD_PAIR, preset
from .trainer import ABLATIONS, TrainConfig, ablation_config, predict_target, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("dgasn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag -> TrainConfig field
_OVERRIDES = {
    "epochs": "epochs", "seed": "seed", "operator": "edge_operator", "eta": "eta", "xi": "xi",
    "gamma": "gamma", "weight_decay": "weight_decay", "layers": "layers", "heads": "heads",
    "dim": "dim", "mu0": "mu0", "lambda_max": "lambda_max",
}


def _add_config_flags(p):
    p.add_argument("--preset", help="task preset such as C->A (explicit flags win)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--operator", choices=EDGE_OPERATORS)
    p.add_argument("--eta", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--mu0", type=float, help="initial learning rate")
    p.add_argument("--lambda-max", type=float, help="final adversarial weight")


def build_config(args) -> TrainConfig:
    values = {}
    if args.preset:
        try:
            values.update(preset(args.preset))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    for flag, name in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"missing required flag(s): {', '.join(missing)}")


def _load_pair(args):
    source, src_stats = load_graph(args.source)
    target, tgt_stats = load_graph(args.target)
    log.info("source %s", src_stats.as_dict())
    log.info("target %s", tgt_stats.as_dict())
    return source, target


def write_metrics(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, repr(float(v)) if v is not None else ""])


def _attention_networks(params, graphs, slope):
    leaves = {k: ad.constant(v) for k, v in params.arrays.items()}
    out = []
    for name, g in graphs:
        if g.edge_labels is None:
            continue
        _, trace = encode(g, leaves, params.layers, params.heads, slope)
        out.append((name, trace.numpy(), g.edge_labels))
    return out


def cmd_train(args):
    _require(args, "source", "target")
    config = build_config(args)
    source, target = _load_pair(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = args.trace or out / "trace.jsonl"
    params, history = train(source, target, config, trace_path=trace)
    save_params(params, out / "params.bin")
    last = history[-1]
    write_metrics(out / "metrics.csv", [("auc", last.auc), ("ap", last.ap), ("l_total", last.losses.l_total)])
    export_attention_histograms(
        _attention_networks(params, [("source", source), ("target", target)], config.slope),
        out / "attention_hist.csv",
    )
    (out / "config.json").write_text(json.dumps(asdict(config), sort_keys=True, indent=1) + "\n")
    print(f"auc={last.auc} ap={last.ap}")
    return EXIT_OK


def cmd_eval(args):
    _require(args, "params", "target")
    params = load_params(args.params)
    if args.operator and args.operator != params.edge_operator:
        raise ContainerError(f"container was trained with operator {params.edge_operator!r}, not {args.operator!r}")
    target, _ = load_graph(args.target)
    if target.attr_dim != params.attr_dim:
        raise ContainerError(f"container expects {params.attr_dim} attributes, target has {target.attr_dim}")
    if target.edge_labels is None:
        raise DatasetError("evaluation needs target labels")
    auc_value, ap_value = evaluate_target(predict_target(params, target), target.edge_labels)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_metrics(Path(args.out) / "metrics.csv", [("auc", auc_value), ("ap", ap_value)])
    print(f"auc={auc_value!r} ap={ap_value!r}")
    return EXIT_OK


def cmd_gradcheck(args):
    if not 3 <= args.nodes <= MAX_NODES:
        raise UsageError(f"--nodes must lie in [3, {MAX_NODES}]")
    report = gradcheck(seed=args.seed or 0, nodes=args.nodes, lam=args.lam)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_ablate(args):
    _require(args, "source", "target")
    config = build_config(args)
    source, target = _load_pair(args)
    variants = args.variant or list(ABLATIONS)
    rows = []
    for v in variants:
        _, history = train(source, target, ablation_config(config, v))
        rows.append((v, history[-1].auc, history[-1].ap))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["variant", "auc", "ap"])
    w.writerows(rows)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(["variant", "auc", "ap"])
            cw.writerows(rows)
    return EXIT_OK


def cmd_synth(args):
    _require(args, "out")
    overrides = {f.name: getattr(args, f.name) for f in fields(SynthParams)
                 if getattr(args, f.name, None) is not None}
    try:
        params = SynthParams(**{**asdict(STANDARD_PAIR), **overrides})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pair = synth_pair(args.seed or 0, params)
    for name, g in zip(("source", "target"), pair):
        d = Path(args.out) / name
        save_graph(g, d)
        _, stats = load_graph(d)
        print(json.dumps({"network": name, **stats.as_dict()}, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="dgasn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train on a labeled source and unlabeled target")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--out", default="run")
    p.add_argument("--trace", help="JSON lines epoch log (default OUT/trace.jsonl)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a target with saved parameters")
    p.add_argument("--params")
    p.add_argument("--target")
    p.add_argument("--operator", choices=EDGE_OPERATORS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny synthetic pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=12)
    p.add_argument("--lam", type=float, default=0.1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train each loss ablation and tabulate AUC/AP")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--out")
    p.add_argument("--variant", action="append", choices=list(ABLATIONS))
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic source/target pair")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    for f in fields(SynthParams):
        kind = int if f.name in ("nodes", "classes", "attr_dim") else float
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dgasn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ad.NumericError as exc:
        print(f"dgasn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ContainerError, UndefinedMetricError, FileNotFoundError, ValueError) as exc:
        print(f"dgasn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"dgasn: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
