"""Command-line entry point: ``dynet <command> ...``.

Exit codes: 0 on success, 1 for usage errors and unreadable input files,
2 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bench import (BenchmarkConfig, ct_smoke_benchmark, default_lambda, reconstruct,
                    run_benchmark, structure_metrics)
from .netgen import GenConfig, GenerationError, generate_case, simulate_arx
from .network import ArxNetworkModel, BooleanNetwork
from .regression import read_experiment_csv, write_experiment_csv

log = logging.getLogger("dynet")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file; flags override it")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    g.add_argument("--log-level", default=argparse.SUPPRESS,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return g


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("NaN is not allowed")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="dynet", description="Dynamic network reconstruction from "
                     "multi-experiment time series.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="random ARX network case with simulated data")
    g.add_argument("--p", type=int, default=argparse.SUPPRESS)
    g.add_argument("--density", type=_float, default=argparse.SUPPRESS)
    g.add_argument("--order", type=int, default=argparse.SUPPRESS)
    g.add_argument("--snr", dest="snr_db", type=_float, default=argparse.SUPPRESS,
                   help="SNR in dB ('inf' for noise-free)")
    g.add_argument("--L", type=int, default=argparse.SUPPRESS, help="number of experiments")
    g.add_argument("--n-samples", type=int, default=argparse.SUPPRESS)

    s = sub.add_parser("simulate", parents=[common], help="simulate an ARX model JSON to CSV")
    s.add_argument("model", help="ARX model JSON")
    s.add_argument("--input", help="CSV with columns u1..um (a leading t column is allowed)")
    s.add_argument("--n-samples", type=int, default=500, help="length when no input file is given")
    s.add_argument("--snr", dest="snr_db", type=_float, default=math.inf)
    s.add_argument("--name", default="simulated.csv", help="output file name")

    r = sub.add_parser("reconstruct", parents=[common], help="infer the network from CSV experiments")
    r.add_argument("csv", nargs="+", help="one CSV per experiment")
    r.add_argument("--method", choices=["girl1", "gsbl", "gsmc"], default=argparse.SUPPRESS)
    r.add_argument("--lam", type=_float, default=argparse.SUPPRESS, help="GIRL1 penalty")
    r.add_argument("--order", type=int, default=argparse.SUPPRESS)

    b = sub.add_parser("benchmark", parents=[common], help="Monte Carlo benchmark")
    b.add_argument("--trials", type=int, default=argparse.SUPPRESS)
    b.add_argument("--methods", default=argparse.SUPPRESS, help="comma-separated subset of girl1,gsbl,gsmc")
    b.add_argument("--ct-smoke", action="store_true", help="also run the continuous-time smoke case")

    m = sub.add_parser("metrics", parents=[common], help="compare two network JSON files")
    m.add_argument("truth")
    m.add_argument("estimate")
    m.add_argument("--include-inputs", action="store_true")
    return parser


def _load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{path}: no such file")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by flags given on the command line."""
    conf = {}
    if getattr(args, "config", None):
        conf = _load_json(args.config)
        if not isinstance(conf, dict):
            raise UsageError(f"{args.config}: top level must be an object")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    conf.update(flags)
    return conf


def _out_dir(conf: dict) -> Path:
    out = Path(conf.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not serializable: {type(v).__name__}")


def _pick(conf: dict, keys) -> dict:
    return {k: conf[k] for k in keys if k in conf}


def cmd_generate(conf: dict) -> int:
    keys = ["p", "density", "order", "snr_db", "L", "n_samples", "perturbation", "max_feedback",
            "pole_radius"]
    kw = _pick(conf, keys)
    if "snr_db" in kw:
        kw["snr_db"] = float(kw["snr_db"])
    try:
        cfg = GenConfig(seed=int(conf.get("seed", 0)), **kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    case = generate_case(cfg)
    out = _out_dir(conf)
    files = []
    for l, (model, data) in enumerate(zip(case.models, case.data), start=1):
        _write_json(out / f"model{l}.json", model.to_dict())
        write_experiment_csv(out / f"exp{l}.csv", data)
        files.append({"model": f"model{l}.json", "data": f"exp{l}.csv"})
    _write_json(out / "truth.json", case.truth.to_dict())
    manifest = {"schema": "dynet/v1", "type": "case", "seed": case.seed,
                "config": {k: (v if not (isinstance(v, float) and math.isinf(v)) else "inf")
                           for k, v in vars(cfg).items()},
                "truth": "truth.json", "experiments": files, "attempts": case.attempts,
                "snr_realized": [[x if math.isfinite(x) else "inf" for x in s] for s in case.snr_realized]}
    _write_json(out / "case.json", manifest)
    print(f"wrote case with {case.truth.n_arcs} arcs and {case.L} experiments to {out}")
    return EXIT_OK


def _read_input_csv(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{path}: no such file")
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    cols = [c for c, h in enumerate(header) if h.startswith("u")]
    if not cols or any(h not in ("t",) and not h.startswith("u") for h in header):
        raise UsageError(f"{path}:1: header must be [t,]u1..um")
    vals = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise UsageError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals.append([float(row[c]) for c in cols])
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return np.array(vals)


def cmd_simulate(conf: dict) -> int:
    doc = _load_json(conf["model"])
    try:
        model = ArxNetworkModel.from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{conf['model']}: invalid model: {exc}") from None
    rng = np.random.default_rng(int(conf.get("seed", 0)))
    if conf.get("input"):
        u = _read_input_csv(conf["input"])
        if u.shape[1] != model.m:
            raise UsageError(f"{conf['input']}: model has {model.m} inputs, file has {u.shape[1]}")
    else:
        u = rng.standard_normal((int(conf.get("n_samples", 500)), model.m))
    data = simulate_arx(model, u, float(conf.get("snr_db", math.inf)), rng)
    out = _out_dir(conf) / conf.get("name", "simulated.csv")
    write_experiment_csv(out, data)
    print(f"wrote {data.n_samples} samples to {out}")
    return EXIT_OK


def cmd_reconstruct(conf: dict) -> int:
    paths = conf["csv"]
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"{p}: no such file")
    try:
        datasets = [read_experiment_csv(p) for p in paths]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if len({(d.p, d.m) for d in datasets}) != 1:
        raise UsageError("experiments differ in their numbers of outputs or inputs")
    method = conf.get("method", "girl1")
    options = dict(conf.get(method, {}) or {})
    if method == "girl1":
        options["lam"] = float(conf.get("lam", options.get("lam", default_lambda(10.0))))
    order = int(conf.get("order", 2))
    rec = reconstruct(datasets, method, options, order, int(conf.get("seed", 0)))
    out = _out_dir(conf)
    _write_json(out / "network.json", rec.network.to_dict())
    _write_json(out / "result.json", {
        "schema": "dynet/v1", "type": "reconstruction", "method": method, "order": order,
        "consistent": rec.consistent, "network": rec.network.to_dict(),
        "per_experiment": [n.to_dict() for n in rec.per_experiment],
        "outputs": {str(i + 1): r.to_dict() for i, r in rec.results.items()}})
    print(f"{method}: {rec.network.n_arcs} arcs; wrote network.json and result.json to {out}")
    return EXIT_OK


def cmd_benchmark(conf: dict) -> int:
    bench_keys = {f for f in BenchmarkConfig.__dataclass_fields__}
    unknown = set(conf) - bench_keys - {"out", "log_level", "ct_smoke"}
    if unknown:
        raise UsageError(f"unknown benchmark settings: {', '.join(sorted(unknown))}")
    kw = {k: v for k, v in conf.items() if k in bench_keys}
    if isinstance(kw.get("methods"), str):
        kw["methods"] = [m.strip() for m in kw["methods"].split(",") if m.strip()]
    try:
        cfg = BenchmarkConfig.from_dict(kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid benchmark config: {exc}") from None
    report = run_benchmark(cfg)
    out = _out_dir(conf)
    (out / "report.json").write_text(report.to_json(indent=2) + "\n")
    (out / "trials.csv").write_text(report.rows_csv())
    print(report.summary())
    if conf.get("ct_smoke"):
        smoke = ct_smoke_benchmark(seed=cfg.seed)
        _write_json(out / "ct_smoke.json", smoke)
        print(f"continuous-time smoke: Prec={smoke['metrics']['prec']:.3f} "
              f"TPR={smoke['metrics']['tpr']:.3f}")
    if not report.complete:
        log.warning("some trials failed; see trials.csv")
    return EXIT_OK


def _network(path: str) -> BooleanNetwork:
    doc = _load_json(path)
    try:
        return BooleanNetwork.from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{path}: invalid network: {exc}") from None


def cmd_metrics(conf: dict) -> int:
    truth, est = _network(conf["truth"]), _network(conf["estimate"])
    try:
        m = structure_metrics(est, truth, bool(conf.get("include_inputs", False)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    flag = " (no arcs predicted)" if m.degenerate_prec else ""
    print(f"Prec={m.prec} TPR={m.tpr}{flag}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "benchmark": cmd_benchmark, "metrics": cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_USAGE
        conf = _settings(args)
        logging.basicConfig(level=getattr(logging, str(conf.get("log_level", "WARNING")).upper(),
                                          logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](conf)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GenerationError, np.linalg.LinAlgError, FloatingPointError, RuntimeError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
