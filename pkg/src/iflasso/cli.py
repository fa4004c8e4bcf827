"""Command-line entry point: ``iflasso {fit,simulate,portfolio,bench}``.

Exit codes: 0 success, 2 malformed input, 3 a fit did not converge (artifacts
are still written), 4 fewer than 90% of Monte Carlo replications succeeded.

Config files are JSON (``.json``) or INI (anything else).  Keys may sit at the
top level, where they apply to the subcommand's own section, or inside the
sections ``ifl``, ``genlasso``, ``simulate`` and ``portfolio``.  Command-line
flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .bench import GenLassoConfig, fit_genlasso_panel
from .core import PanelFormatError, read_panel_csv, write_panel_csv
from .ifl import IflConfig, IflFit, fit_ifl
from .portfolio import estimate_holdings, paper_shape_table, read_price_csv, synth_price_table, write_price_csv
from .simulate import ESTIMATORS, ScenarioSpec, generate_instance, paper_grid, run_monte_carlo, score

log = logging.getLogger("iflasso")

EXIT_OK, EXIT_MALFORMED, EXIT_NONCONVERGED, EXIT_FAILED_REPS = 0, 2, 3, 4
SECTIONS = ("ifl", "genlasso", "simulate", "portfolio")


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text.strip()


def load_config(path: str | Path | None, primary: str) -> dict[str, dict]:
    """Read a JSON or INI config into ``{section: {key: value}}``."""
    out: dict[str, dict] = {s: {} for s in SECTIONS}
    if path is None:
        return out
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
    else:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string("[__top__]\n" + text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        raw = {}
        for sec in cp.sections():
            items = {k: _parse_scalar(v) for k, v in cp.items(sec)}
            if sec == "__top__":
                raw.update(items)
            else:
                raw[sec] = items
    for key, value in raw.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            out[key].update(value)
        elif isinstance(value, dict):
            raise ConfigError(f"unknown section {key!r}")
        else:
            out[primary][key] = value
    return out


def _apply(dc, values: dict, section: str):
    """Override dataclass fields from ``values``, coercing to each field's default type."""
    known = {f.name: f for f in fields(dc)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            continue
        default = getattr(dc, key)
        try:
            if isinstance(default, bool):
                if isinstance(value, str):
                    value = value.lower() in ("1", "true", "yes", "on")
                kwargs[key] = bool(value)
            elif isinstance(default, int):
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except (TypeError, ValueError):
            raise ConfigError(f"[{section}] {key}: cannot interpret {value!r}") from None
    try:
        return replace(dc, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _unknown_keys(values: dict, *dcs, extra=()) -> list[str]:
    known = set(extra)
    for dc in dcs:
        known |= {f.name for f in fields(dc)}
    return sorted(set(values) - known)


def _estimator_configs(cfg: dict[str, dict]) -> tuple[IflConfig, GenLassoConfig]:
    for sec, dc in (("ifl", IflConfig()), ("genlasso", GenLassoConfig())):
        bad = _unknown_keys(cfg[sec], dc)
        if bad:
            raise ConfigError(f"[{sec}] unknown keys: {', '.join(bad)}")
    return _apply(IflConfig(), cfg["ifl"], "ifl"), _apply(GenLassoConfig(), cfg["genlasso"], "genlasso")


def _fit(panel, estimator: str, ifl_cfg: IflConfig, gl_cfg: GenLassoConfig) -> IflFit:
    if estimator == "ifl":
        return fit_ifl(panel, ifl_cfg)
    return fit_genlasso_panel(panel, gl_cfg)


def _write_fit(fit: IflFit, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    fit.write_json(out / "fit.json")
    fit.write_beta_csv(out / "beta_hat.csv")


def cmd_fit(args) -> int:
    cfg = load_config(args.config, "ifl" if args.estimator == "ifl" else "genlasso")
    ifl_cfg, gl_cfg = _estimator_configs(cfg)
    panel = read_panel_csv(args.panel)
    fit = _fit(panel, args.estimator, ifl_cfg, gl_cfg)
    out = Path(args.out)
    _write_fit(fit, out)
    log.info("%s fit: T=%d p=%d breaks=%d -> %s", args.estimator, panel.T, panel.p, fit.breaks.n_breaks, out)
    if not fit.diagnostics.get("converged", True):
        log.warning("fit did not converge; artifacts are flagged in fit.json")
        return EXIT_NONCONVERGED
    return EXIT_OK


def _int_list(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    if isinstance(value, str):
        return [int(v) for v in value.replace(",", " ").split()]
    return [int(value)]


def _scenarios(sim: dict, seed: int) -> list[ScenarioSpec]:
    base = _apply(ScenarioSpec(p=1, q=0), {k: v for k, v in sim.items() if k not in ("p", "q", "n_per_regime")}, "simulate")
    base = replace(base, base_seed=seed)
    common = {f.name: getattr(base, f.name) for f in fields(base) if f.name not in ("p", "q", "n_per_regime")}
    if not any(k in sim for k in ("p", "q", "n_per_regime")):
        return paper_grid(**common)
    ps = _int_list(sim.get("p", [20, 30, 40]))
    qs = _int_list(sim.get("q", [2, 5, 10]))
    ns = _int_list(sim.get("n_per_regime", [30, 50]))
    try:
        return [ScenarioSpec(p=p, q=q, n_per_regime=n, **common) for n in ns for q in qs for p in ps]
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, "simulate")
    ifl_cfg, gl_cfg = _estimator_configs(cfg)
    sim = dict(cfg["simulate"])
    bad = _unknown_keys(sim, ScenarioSpec(p=1, q=0), extra=("n_reps", "estimators"))
    if bad:
        raise ConfigError(f"[simulate] unknown keys: {', '.join(bad)}")
    for key in ("p", "q", "n_per_regime"):
        if getattr(args, key) is not None:
            sim[key] = getattr(args, key)
    if args.reps is not None:
        sim["n_reps"] = args.reps
    estimators = sim.get("estimators", list(ESTIMATORS))
    if args.estimators:
        estimators = args.estimators.split(",")
    if isinstance(estimators, str):
        estimators = estimators.split(",")
    estimators = [e.strip() for e in estimators]
    if not estimators or any(e not in ESTIMATORS for e in estimators):
        raise ConfigError(f"estimators must be drawn from {', '.join(ESTIMATORS)}")
    specs = _scenarios(sim, args.seed)
    n_reps = int(sim.get("n_reps", 100))
    t0 = time.perf_counter()
    report = run_monte_carlo(specs, n_reps, estimators, ifl_cfg, gl_cfg, n_jobs=args.threads)
    report.write(args.out)
    log.info(
        "%d scenarios x %d replications in %.1fs, %d failed -> %s",
        len(specs), n_reps, time.perf_counter() - t0, report.n_failed, args.out,
    )
    return EXIT_OK if report.success_rate >= 0.9 else EXIT_FAILED_REPS


def _weights(text: str) -> list[list[float]]:
    try:
        return [[float(v) for v in part.split(",")] for part in text.split(";")]
    except ValueError:
        raise ConfigError(f"cannot parse weights {text!r}; use e.g. '0.25,0.25,0.5;0.75,0,0.25'") from None


def cmd_portfolio(args) -> int:
    cfg = load_config(args.config, "portfolio")
    ifl_cfg, _ = _estimator_configs(cfg)
    pf = cfg["portfolio"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.prices:
        table = read_price_csv(args.prices)
    else:
        n = int(args.n_per_regime or pf.get("n_per_regime", 758))
        opts = {
            "drift": float(pf.get("drift", 2e-4) if args.drift is None else args.drift),
            "vol": float(pf.get("vol", 0.02) if args.vol is None else args.vol),
            "obs_noise": float(pf.get("obs_noise", 0.0) if args.obs_noise is None else args.obs_noise),
        }
        if args.paper_shape or pf.get("paper_shape", False):
            table = paper_shape_table(n, seed=args.seed, **opts)
        else:
            weights = args.weights or pf.get("weights")
            breaks = args.break_times or pf.get("break_times")
            if weights is None or breaks is None:
                raise ConfigError("--synth needs --paper-shape or both --weights and --break-times")
            weights = _weights(weights) if isinstance(weights, str) else weights
            breaks = _int_list(breaks)
            K = int(args.K or pf.get("K", 20))
            try:
                table = synth_price_table(K, n * len(weights), weights, breaks, seed=args.seed, **opts)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        write_price_csv(table, out / "prices.csv")
    est = estimate_holdings(table, ifl_cfg)
    est.fit.write_json(out / "fit.json")
    est.write_holdings_csv(out / "holdings.csv")
    est.write_breaks_csv(out / "breaks.csv")
    log.info("rebalancing dates: %s", ", ".join(est.rebalancing_dates) or "none")
    if not est.fit.diagnostics.get("converged", True):
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_bench(args) -> int:
    """Fit both estimators on one panel and record wall time and, for synthetic panels, accuracy."""
    cfg = load_config(args.config, "ifl")
    ifl_cfg, gl_cfg = _estimator_configs(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instance = None
    if args.panel:
        panel = read_panel_csv(args.panel)
    else:
        spec = ScenarioSpec(p=args.p or 20, q=2 if args.q is None else args.q, n_per_regime=args.n_per_regime or 50, base_seed=args.seed)
        instance = generate_instance(spec, 0)
        panel = instance.panel
        write_panel_csv(panel, out / "panel.csv")
    summary = {"T": panel.T, "p": panel.p, "estimators": {}}
    status = EXIT_OK
    for name in ("ifl", "genlasso"):
        t0 = time.perf_counter()
        fit = _fit(panel, name, ifl_cfg, gl_cfg)
        elapsed = time.perf_counter() - t0
        _write_fit(fit, out / name)
        entry = {"wall_time": elapsed, "converged": bool(fit.diagnostics.get("converged", True)), "n_breaks": fit.breaks.n_breaks}
        if instance is not None:
            m = score(fit.B_hat, instance)
            entry.update(bias=m["bias"], mse=m["mse"])
        summary["estimators"][name] = entry
        if not entry["converged"]:
            status = EXIT_NONCONVERGED
    g = summary["estimators"]["genlasso"]["wall_time"]
    summary["runtime_ratio_ifl_over_genlasso"] = summary["estimators"]["ifl"]["wall_time"] / g if g > 0 else None
    (out / "bench.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("ifl/genlasso wall-time ratio %.3f", summary["runtime_ratio_ifl_over_genlasso"] or float("nan"))
    return status


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed (default 0)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for replications (default 1)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default ./out)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON or INI config file")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="iflasso", parents=[common], description="Time-varying sparse regression with structural breaks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit an estimator to a panel CSV")
    p.add_argument("panel", help="CSV with header t,y,x1,...,xp")
    p.add_argument("--estimator", choices=("ifl", "genlasso"), default="ifl")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="run the Monte Carlo grid")
    p.add_argument("--reps", type=int, help="replications per scenario (default 100)")
    p.add_argument("--estimators", help="comma-separated subset of ifl,genlasso,oracle")
    p.add_argument("--p", type=int, nargs="+")
    p.add_argument("--q", type=int, nargs="+")
    p.add_argument("--n-per-regime", dest="n_per_regime", type=int, nargs="+")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("portfolio", parents=[common], help="estimate fund share holdings")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--prices", help="CSV with header date,fund,asset_1,...,asset_K")
    src.add_argument("--synth", action="store_true", help="generate a synthetic fund")
    p.add_argument("--paper-shape", action="store_true", help="20 assets, 3 held, one rebalancing")
    p.add_argument("--n-per-regime", dest="n_per_regime", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--weights", help="regime weight vectors, e.g. '0.25,0.25,0.5;0.75,0,0.25'")
    p.add_argument("--break-times", dest="break_times", type=int, nargs="+")
    p.add_argument("--drift", type=float)
    p.add_argument("--vol", type=float)
    p.add_argument("--obs-noise", dest="obs_noise", type=float)
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("bench", parents=[common], help="time IFL against the generalized lasso")
    p.add_argument("--panel", help="panel CSV; default is one simulated instance")
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--n-per-regime", dest="n_per_regime", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": "out", "config": None, "verbose": False}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_MALFORMED
    try:
        return args.func(args)
    except (PanelFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
