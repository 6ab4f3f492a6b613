"""Command-line front end.

Subcommands::

    simulate-dthp      chain trajectory CSV (t, lambda, xi, L, jump)
    simulate-exact     event CSV (theta, mark), optional sampled-state CSV
    check-generator    sup-norm convergence of (T^N f - f)/h - A f
    check-convergence  marginal KS / Wasserstein experiment
    reproduce-fig4     reference exponential model: chain trajectory with N = 100000, T = 5

Config files are JSON objects holding the model fields (``kernel``,
``alpha``, ``beta``, ``lambda_inf``, ``x0``, ``marks``) plus run keys
(``T``, ``N``, ``seed``, ``t``, ``N_list``, ``paths``, ``functions``,
``oracle``).  ``--param key=value`` overrides any key; dotted keys reach
nested objects (``marks.rate=2``, ``oracle.beta=6``) and values are parsed as
JSON when possible.

Exit codes: 0 success, 2 invalid config, 3 I/O failure, 4 verification
failure.  Each command prints one JSON summary line on stdout.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time

import numpy as np

from . import analysis, core, dthp, exact, operators

log = logging.getLogger("hawkes_dt")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_VERIFY = 0, 2, 3, 4

FIG4_T = 5.0
FIG4_N = 100_000

_RUN_DEFAULTS = {
    "T": 1.0,
    "N": 1000,
    "seed": 0,
    "t": 1.0,
    "N_list": [100, 1000, 10000],
    "paths": 10000,
    "functions": None,
    "oracle": {},
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# config


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Return a copy of ``doc`` with ``key=value`` overrides applied (dotted keys nest)."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise CliError(EXIT_CONFIG, f"--param expects KEY=VALUE, got {item!r}")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise CliError(EXIT_CONFIG, f"cannot set {key}: {p} is not an object")
        node[parts[-1]] = _parse_value(text)
    return doc


class RunConfig:
    """Validated parameters plus run options."""

    def __init__(self, doc: dict, seed: int | None = None):
        model = {k: doc[k] for k in doc if k in core._PARAM_FIELDS}
        run = {k: doc[k] for k in doc if k not in core._PARAM_FIELDS}
        unknown = set(run) - set(_RUN_DEFAULTS)
        if unknown:
            raise CliError(EXIT_CONFIG, f"unknown config keys {sorted(unknown)}")
        try:
            self.params = core.params_from_dict(model)
            opts = {**_RUN_DEFAULTS, **run}
            self.T = float(opts["T"])
            self.N = int(opts["N"])
            self.grid = core.GridSpec(self.T, self.N)
            self.t = float(opts["t"])
            self.N_list = sorted(int(n) for n in opts["N_list"])
            self.paths = int(opts["paths"])
            self.functions = opts["functions"]
            oracle = opts["oracle"] or {}
            if not isinstance(oracle, dict):
                raise CliError(EXIT_CONFIG, "oracle must be an object of parameter overrides")
            self.oracle = core.params_from_dict({**model, **oracle}) if oracle else None
            self.seed = int(opts["seed"] if seed is None else seed)
        except (ValueError, TypeError, KeyError) as exc:
            if isinstance(exc, CliError):
                raise
            raise CliError(EXIT_CONFIG, f"invalid config: {exc}") from exc
        if not 0 <= self.seed < 1 << 64:
            raise CliError(EXIT_CONFIG, f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.N_list or self.N_list[0] < 1:
            raise CliError(EXIT_CONFIG, "N_list must hold positive integers")
        if self.paths < analysis.MIN_SAMPLES:
            raise CliError(EXIT_CONFIG, f"paths must be >= {analysis.MIN_SAMPLES}")

    @property
    def digest(self) -> str:
        return self.params.digest()

    def header(self, **extra) -> dict:
        return {"seed": self.seed, "digest": self.digest, **extra}


def load_config(path: str | None, overrides, seed: int | None, base: dict | None = None) -> RunConfig:
    doc = dict(base or {})
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise CliError(EXIT_CONFIG, "config must be a JSON object")
        doc.update(loaded)
    doc = apply_overrides(doc, overrides)
    return RunConfig(doc, seed)


# --------------------------------------------------------------------------
# output helpers


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _emit(summary: dict) -> None:
    print(json.dumps(summary, separators=(",", ":")), flush=True)


def _check_out_dir(path: str | None) -> None:
    # Fail before any work when the destination directory is missing.
    if path:
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise CliError(EXIT_IO, f"output directory {parent} does not exist")


# --------------------------------------------------------------------------
# commands


def cmd_simulate_dthp(cfg: RunConfig, out: str, extra_meta: dict | None = None) -> int:
    _check_out_dir(out)
    path = dthp.simulate_chain(cfg.params, cfg.grid, cfg.seed, streaming=False)
    meta = cfg.header(T=cfg.T, N=cfg.N, **(extra_meta or {}))
    _write_text(out, dthp.trajectory_csv(path, meta))
    loss = dthp.reconstruct_loss(path)
    _emit({
        "command": "simulate-dthp", **meta, "out": out,
        "events": path.n_jumps,
        "final_lambda": float(path.l_values[-1]),
        "final_L": float(loss.cumulative[-1]),
    })
    return EXIT_OK


def cmd_simulate_exact(cfg: RunConfig, out: str, states: str | None = None) -> int:
    _check_out_dir(out)
    _check_out_dir(states)
    rec = exact.simulate_exact(cfg.params, cfg.T, cfg.seed)
    sampler = "thinning" if cfg.params.is_erlang else "exact-exponential"
    meta = cfg.header(T=cfg.T, sampler=sampler)
    _write_text(out, exact.events_csv(rec, meta))
    lam_T, xi_T, loss_T = exact.state_at(rec, cfg.params, cfg.T)
    if states:
        t = cfg.grid.times()
        lam, xi, loss = exact.state_at(rec, cfg.params, t)
        lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items()), "t,lambda,xi,L"]
        lines += [",".join(format(float(v), ".17g") for v in row) for row in zip(t, lam, xi, loss)]
        _write_text(states, "\n".join(lines) + "\n")
    _emit({
        "command": "simulate-exact", **meta, "out": out,
        "events": rec.count, "final_lambda": lam_T, "final_xi": xi_T, "final_L": loss_T,
    })
    return EXIT_OK


def _select_functions(cfg: RunConfig):
    family = operators.test_family(cfg.params)
    if cfg.functions is None:
        return family
    names = {f.name: f for f in family}
    missing = [n for n in cfg.functions if n not in names]
    if missing:
        raise CliError(EXIT_CONFIG, f"unknown test functions {missing}; available {sorted(names)}")
    return [names[n] for n in cfg.functions]


def _norms_decrease(rows) -> bool:
    e = np.array([r.sup_norm_error for r in rows])
    if np.all(e == 0.0):
        return True  # f with A f = 0 and T^N f = f, e.g. the zero function
    return bool(np.all(np.diff(e) < 0))


def cmd_check_generator(cfg: RunConfig, out: str | None) -> int:
    _check_out_dir(out)
    funcs = _select_functions(cfg)
    results = []
    for f in funcs:
        t0 = time.perf_counter()
        rows = operators.convergence_table(f, cfg.params, cfg.N_list, cfg.T)
        ok = _norms_decrease(rows)
        slope = None
        if all(r.sup_norm_error > 0 for r in rows) and len({r.N for r in rows}) > 1:
            slope = operators.loglog_slope(rows)
        log.info("%s: %s (%.1fs)", f.name, [r.sup_norm_error for r in rows], time.perf_counter() - t0)
        results.append({"function": f.name, "decreasing": ok, "slope": slope, "rows": [r.as_row() for r in rows]})
    passed = all(r["decreasing"] for r in results)
    report = {**cfg.header(kernel=cfg.params.kernel.variant, T=cfg.T), "passed": passed, "functions": results}
    if out:
        _write_text(out, json.dumps(report, indent=2) + "\n")
    _emit({
        "command": "check-generator", **cfg.header(), "passed": passed,
        "failed": [r["function"] for r in results if not r["decreasing"]],
    })
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_check_convergence(cfg: RunConfig, out: str | None, jobs: int = 1) -> int:
    _check_out_dir(out)
    if cfg.N_list[0] < 10:
        raise CliError(EXIT_CONFIG, "every N in N_list must be >= 10")
    reports = analysis.marginal_convergence_experiment(
        cfg.params, cfg.t, cfg.N_list, cfg.paths, cfg.seed, jobs=jobs, oracle_params=cfg.oracle
    )
    verdicts = {r.coordinate: r.passes() for r in reports}
    passed = all(verdicts.values())
    doc = {
        **cfg.header(),
        "oracle": cfg.oracle.to_dict() if cfg.oracle else None,
        "passed": passed,
        "reports": [r.to_dict() for r in reports],
    }
    if out:
        _write_text(out, json.dumps(doc, indent=2) + "\n")
    last = {r.coordinate: {"ks_pvalue": r.rows[-1].ks_pvalue, "wasserstein1": r.rows[-1].wasserstein1} for r in reports}
    _emit({"command": "check-convergence", **cfg.header(), "passed": passed, "verdicts": verdicts, "largest_N": last})
    return EXIT_OK if passed else EXIT_VERIFY


# --------------------------------------------------------------------------
# entry point


def _fig4_base() -> dict:
    return {**core.fig4_params().to_dict(), "T": FIG4_T, "N": FIG4_N}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkes-dt", description="Discrete-time Hawkes chain tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=out_required, help="output file")
        p.add_argument("--seed", type=int, default=None, help="64-bit unsigned seed (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for multi-path runs")
        p.add_argument("--param", action="append", default=[], metavar="K=V", help="override a config key")
        return p

    common(sub.add_parser("simulate-dthp", help="chain trajectory CSV"), out_required=True)
    p = common(sub.add_parser("simulate-exact", help="exact event CSV"), out_required=True)
    p.add_argument("--states", help="also write the exact state sampled on the config grid")
    common(sub.add_parser("check-generator", help="generator convergence report"))
    common(sub.add_parser("check-convergence", help="marginal convergence report"))
    common(sub.add_parser("reproduce-fig4", help="reference exponential trajectory (T=5, N=100000)"), out_required=True)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("HAWKES_DT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise CliError(EXIT_CONFIG, "--jobs must be >= 1")
        base = _fig4_base() if args.command == "reproduce-fig4" else None
        cfg = load_config(args.config, args.param, args.seed, base)
        if args.command == "simulate-dthp":
            return cmd_simulate_dthp(cfg, args.out)
        if args.command == "reproduce-fig4":
            return cmd_simulate_dthp(cfg, args.out, {"scenario": "fig4", "horizon_note": "T=5_chosen_default"})
        if args.command == "simulate-exact":
            return cmd_simulate_exact(cfg, args.out, args.states)
        if args.command == "check-generator":
            return cmd_check_generator(cfg, args.out)
        return cmd_check_convergence(cfg, args.out, args.jobs)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except core.ParameterError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
