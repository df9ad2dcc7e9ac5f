"""Command-line entry point: ``relmix <command> [--config PATH] [--out DIR] ...``.

Exit status is 0 on success, 1 when the worked example misses its reference
values, and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ..estimators import ConfigError
from ..graphcore import GraphError, load_graph
from ..metrics import misclassification, nqe
from ..noisegen import (GenerationError, MeasurementSet, MismatchNoise, MixtureNoise,
                        generate_er_graph, generate_state, sample_measurements,
                        sample_mismatch, trial_streams)
from . import experiments as ex
from .config import (ESTIMATORS, ConfigSource, HarnessConfigError, config_hash,
                     load_config)

EXIT_OK, EXIT_ACCEPTANCE, EXIT_CONFIG = 0, 1, 2
TRACE_COLUMNS = ("iter", "objective", "step_norm", "alpha_hat", "beta_hat", "epsilon",
                 "kappa", "nqe")

NUM, INT, NULL = ["number"], ["int"], ["null"]
INSTANCE_SCHEMA = {"n_nodes": INT, "p_edge": NUM, "p": NUM, "alpha": NUM, "beta_ratio": NUM,
                   "model": ["string"], "delta": NUM, "state_low": NUM, "state_high": NUM}
RUN_SCHEMA = {"estimator": ["string"], "seed": INT, "graph": ["object"], "state": ["object"],
              "noise": ["object"], "measurements": ["string"], "params": ["object"]}
SWEEP_SCHEMA = {"swept": ["string"], "grid": ["numbers"], "fixed": ["object"], "trials": INT,
                "estimators": ["strings"], "seed": INT, "alpha0": NUM + ["string"],
                "options": ["object"]}
ROBUSTNESS_SCHEMA = {"mode": ["string"], "factors": ["numbers"], "fixed": ["object"],
                     "trials": INT, "seed": INT, "options": ["object"]}
LAE_VS_EM_SCHEMA = {"p_edges": ["numbers"], "n_nodes": INT, "trials": INT, "iterations": INT,
                    "p_outlier": NUM, "p_alg": NUM, "alpha": NUM, "beta_ratio": NUM,
                    "delta": NUM, "lae_step0": NUM + NULL, "lae_decay": NUM,
                    "dist_tau": NUM + NULL, "nqe_target": NUM, "seed": INT}


# ----------------------------------------------------------------- output io

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns, rows, header: dict | None = None) -> None:
    """CSV with optional ``# key=value`` header lines (read with ``comment='#'``)."""
    buf = io.StringIO()
    for key, value in (header or {}).items():
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _outdir(args, default: str) -> Path:
    out = Path(args.out or Path("runs") / default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _source(args) -> ConfigSource:
    if args.config is None:
        return ConfigSource({})
    return load_config(args.config)


def _located(src: ConfigSource, exc: HarnessConfigError) -> HarnessConfigError:
    if str(exc).startswith(src.name):
        return exc
    return src.error(exc.key, str(exc))


# ------------------------------------------------------------------ commands

def cmd_example1(args) -> int:
    report = ex.example1_report()
    for name, e in report["estimates"].items():
        vec = " ".join(f"{v:+.4f}" for v in e["x_hat"])
        print(f"{name:<11s} x = [{vec}]  NQE ratio = {e['nqe_ratio']:.4e}")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status}  {c['check']}: {c['value']:.3e} (limit {c['limit']:.1e})")
    if args.out:
        write_json(_outdir(args, "example1") / "example1.json", report)
    return EXIT_OK if report["passed"] else EXIT_ACCEPTANCE


def _run_measurements(src: ConfigSource, cfg: dict, seed: int) -> MeasurementSet:
    if "measurements" in cfg:
        try:
            return MeasurementSet.from_dict(json.loads(Path(cfg["measurements"]).read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise src.error("measurements", f"cannot load measurements: {exc}")
    streams = trial_streams(seed, 0)
    graph = src.check(cfg.get("graph", {"generator": "er"}),
                      {"file": ["string"], "generator": ["string"], "n_nodes": INT,
                       "p_edge": NUM}, "graph")
    try:
        if "file" in graph:
            g = load_graph(graph["file"])
        elif graph.get("generator", "er") == "er":
            g = generate_er_graph(graph.get("n_nodes", 50), graph.get("p_edge", 0.3),
                                  streams["graph"])
        else:
            raise src.error("generator", f"unknown graph generator {graph['generator']!r}; "
                                         "valid: 'er'")
    except (OSError, GraphError, GenerationError, ValueError) as exc:
        if isinstance(exc, HarnessConfigError):
            raise
        raise src.error("graph", f"invalid graph source: {exc}")
    state = src.check(cfg.get("state", {}), {"low": NUM, "high": NUM}, "state")
    x = generate_state(g.n_nodes, streams["state"], state.get("low", 0.0), state.get("high", 1.0))
    noise = src.check(cfg.get("noise", {}), {"model": ["string"], "alpha": NUM, "beta": NUM,
                                             "p": NUM, "delta": NUM}, "noise")
    model = noise.get("model", "mixture")
    try:
        if model == "mixture":
            nm = MixtureNoise(noise.get("alpha", 0.05), noise.get("beta", 0.25), noise.get("p", 0.1))
            return sample_measurements(g, x, nm, streams["measurements"])
        if model == "mismatch":
            nm = MismatchNoise(noise.get("alpha", 0.05), noise.get("p", 0.1), noise.get("delta", 2.0))
            return sample_mismatch(g, x, nm, streams["measurements"])
    except (ValueError, GenerationError) as exc:
        raise src.error("noise", f"invalid noise model: {exc}")
    raise src.error("model", f"unknown noise model {model!r}; valid: 'mixture', 'mismatch'")


def cmd_run(args) -> int:
    if args.config is None:
        raise HarnessConfigError("run requires --config PATH")
    src = _source(args)
    cfg = src.check(src.data, RUN_SCHEMA)
    name = cfg.get("estimator")
    if name not in ESTIMATORS:
        raise src.error("estimator", f"unknown estimator {name!r}; valid names: "
                                     f"{', '.join(ESTIMATORS)}")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    ms = _run_measurements(src, cfg, seed)
    params = dict(cfg.get("params", {}))
    truth = ms.noise
    p = params.pop("p", truth.get("p", 0.1))
    alpha = params.pop("alpha", truth.get("alpha", 0.05))
    beta = params.pop("beta", truth.get("beta", 5 * alpha))
    try:
        res = ex.run_estimator(name, ms, p=p, alpha=alpha, beta=beta, options=params,
                               x_true=ms.x_true)
    except TypeError as exc:
        raise src.error("params", f"invalid params for {name}: {exc}")
    except ConfigError as exc:
        raise src.error("params", str(exc))
    resolved = {**cfg, "seed": seed}
    header = {"root_seed": seed, "config_hash": config_hash(resolved)}
    out = _outdir(args, "run")
    write_csv(out / "trace.csv", TRACE_COLUMNS, res.trace, header)
    result = res.to_dict()
    result.update({"estimator": name, "nqe": nqe(res.x_hat, ms.x_true),
                   "misclassification": (None if res.pi is None
                                         else misclassification(res.pi, ms.z_true)),
                   **header, "config": resolved})
    write_json(out / "result.json", result)
    print(f"{name}: NQE = {result['nqe']:.4f}% after {res.iterations} iterations "
          f"(converged={res.converged}) -> {out}")
    return EXIT_OK


def _instance(src: ConfigSource, section: dict) -> ex.InstanceSpec:
    src.check(section, INSTANCE_SCHEMA, "fixed")
    return ex.InstanceSpec(**section)


def _sweep_spec(args, src: ConfigSource) -> ex.SweepSpec:
    cfg = dict(src.check(src.data, SWEEP_SCHEMA))
    cfg["fixed"] = _instance(src, cfg.get("fixed", {}))
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "alpha0" in cfg and isinstance(cfg["alpha0"], str) and cfg["alpha0"] != "random":
        raise src.error("alpha0", "alpha0 must be a number or \"random\"")
    return ex.sweep_spec_from_dict(cfg).validate()


def _emit_report(out: Path, name: str, report: ex.SweepReport) -> None:
    header = {"root_seed": report.metadata["root_seed"],
              "config_hash": report.metadata["config_hash"]}
    write_csv(out / f"{name}.csv", ex.SWEEP_COLUMNS, report.rows, header)
    write_json(out / "summary.json", {"summary": report.summary, "metadata": report.metadata})


def cmd_sweep(args) -> int:
    src = _source(args)
    spec = _sweep_spec(args, src)
    report = ex.run_sweep(spec, threads=args.threads)
    out = _outdir(args, "sweep")
    _emit_report(out, "sweep", report)
    for v in spec.grid:
        means = "  ".join(f"{n}={report.summary[repr(float(v))][n]['mean']:.4f}"
                          for n in spec.estimators)
        print(f"{spec.swept}={v:g}: mean NQE  {means}")
    return EXIT_OK


def cmd_robustness(args) -> int:
    src = _source(args)
    cfg = dict(src.check(src.data, ROBUSTNESS_SCHEMA))
    cfg["fixed"] = _instance(src, cfg.get("fixed", {}))
    if args.mode is not None:
        cfg["mode"] = args.mode
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "factors" in cfg:
        cfg["factors"] = tuple(cfg["factors"])
    spec = ex.RobustnessSpec(**cfg).validate()
    report = ex.run_robustness(spec, threads=args.threads)
    out = _outdir(args, "robustness")
    _emit_report(out, "robustness", report)
    for c in spec.resolved_factors():
        s = report.summary[repr(float(c))]["dist_ls_em"]
        print(f"{spec.mode} factor={c:g}: median {s['median']:.4f}  "
              f"q25 {s['q25']:.4f}  q75 {s['q75']:.4f}  outliers {len(s['outliers'])}")
    return EXIT_OK


def cmd_lae_vs_em(args) -> int:
    src = _source(args)
    cfg = dict(src.check(src.data, LAE_VS_EM_SCHEMA))
    if args.p_edge:
        cfg["p_edges"] = args.p_edge
    if "p_edges" in cfg:
        cfg["p_edges"] = tuple(cfg["p_edges"])
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = ex.LaeVsEmSpec(**cfg).validate()
    result = ex.run_lae_vs_em(spec, threads=args.threads)
    rows = []
    for key, curves in result["curves"].items():
        for name, curve in curves.items():
            rows.extend({"p_edge": float(key), "estimator": name, "iter": t, "mean_nqe": v}
                        for t, v in enumerate(curve))
    out = _outdir(args, "lae_vs_em")
    meta = result["metadata"]
    write_csv(out / "curves.csv", ("p_edge", "estimator", "iter", "mean_nqe"), rows,
              {"root_seed": meta["root_seed"], "config_hash": meta["config_hash"]})
    write_json(out / "summary.json", {"summary": result["summary"], "metadata": meta})
    for key, s in result["summary"].items():
        parts = "  ".join(f"{n}: hit={v['iterations_to_target']} final={v['final_nqe']:.4f}"
                          for n, v in s.items())
        print(f"p_edge={float(key):g}  {parts}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", help="output directory (default runs/<command>)")
    common.add_argument("--seed", type=int, metavar="U64", help="root seed (overrides config)")
    common.add_argument("--trials", type=int, metavar="N", help="trials per grid point")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes for independent trials")

    parser = argparse.ArgumentParser(
        prog="relmix", description="Estimation from relative measurements with mixture noise.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("example1", parents=[common], help="worked five-node example")
    sub.add_parser("run", parents=[common], help="single estimator run from a config")
    sub.add_parser("sweep", parents=[common], help="mean NQE over a parameter grid")
    rob = sub.add_parser("robustness", parents=[common], help="mis-specified scales")
    rob.add_argument("--mode", choices=tuple(ex.ROBUSTNESS_DEFAULTS))
    lve = sub.add_parser("lae-vs-em", parents=[common], help="convergence speed comparison")
    lve.add_argument("--p-edge", type=float, nargs="+", metavar="P")
    return parser


COMMANDS = {"example1": cmd_example1, "run": cmd_run, "sweep": cmd_sweep,
            "robustness": cmd_robustness, "lae-vs-em": cmd_lae_vs_em}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1 or (args.trials is not None and args.trials < 1):
        print("relmix: error: --threads and --trials must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("relmix: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except HarnessConfigError as exc:
        if args.config and exc.key and not str(exc).startswith(str(args.config)):
            exc = _located(load_config(args.config), exc)
        print(f"relmix: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"relmix: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
