"""Command-line entry point.

    spinbath simulate --config run.ini [--seed N] [--out DIR] [--method ode|eigenmode|both]
    spinbath analytic --config run.ini
    spinbath markov   --rate 0.01 --beta 5 --t-final 500
    spinbath modes    --config run.ini
    spinbath compare  a.csv b.csv [--overlay-column exponential] [--interpolate]
    spinbath preset   fig2|fig3 [--n-spins N]

Exit status: 0 success, 1 configuration error, 2 numerical guarantee breached.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .analytic import AnalyticParams, ValidityWarning, chi, lorentzian_ensemble_mean
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .exact import diagonalize_model
from .io import read_overlay_csv, read_trajectory_csv, write_table
from .model import build_instance, markov_rates
from .analytic import markov_qubit_population
from .report import compare_report
from .runner import EXIT_CONFIG, EXIT_NUMERICS, EXIT_OK, analytic_overlays, run_experiment

PRESETS = ("fig2", "fig3")


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("spinbath").joinpath("presets", f"{name}.ini").read_text()
    return parse_config(text, source=f"preset:{name}")


def _interval_arg(text):
    a, _, b = text.partition(":")
    return (float(a), float(b))


def _run_options(p, with_config=True):
    if with_config:
        p.add_argument("--config", required=True, help="experiment config file (INI)")
    p.add_argument("--seed", type=int, help="override the bath RNG seed")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--method", choices=("ode", "eigenmode", "both"))
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", dest="deterministic", action="store_true", default=None,
                      help="fixed summation order, bit-reproducible (default)")
    mode.add_argument("--fast", dest="deterministic", action="store_false",
                      help="BLAS reductions; results reproducible to ~1e-5 only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinbath", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an experiment from a config file")
    _run_options(p)

    p = sub.add_parser("preset", help="run a shipped experiment preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--n-spins", type=int, help="override the bath size")
    p.add_argument("--t-final", type=float, help="override the run length")
    _run_options(p, with_config=False)

    p = sub.add_parser("analytic", help="write analytic curves for a config without simulating")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--n-omega", type=int, default=1001, help="frequency grid size for the Lorentzian")

    p = sub.add_parser("markov", help="Markovian rates and qubit population")
    p.add_argument("--config", help="take the rate from [model] and beta from [analysis]")
    p.add_argument("--rate", type=float, help="zero-temperature rate Gamma_0 (units of Omega)")
    p.add_argument("--beta", type=float, help="inverse temperature in units of 1/(hbar Omega); default inf")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--rho0", type=float, default=1.0, help="initial excited population")
    p.add_argument("--out")

    p = sub.add_parser("modes", help="dump eigenfrequencies and qubit weights")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("compare", help="compare two trajectory CSVs, or one against an overlay column")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--overlay-column", help="read B as overlay.csv and use this column as the qubit population")
    p.add_argument("--interpolate", action="store_true", help="resample B onto A's time grid")
    p.add_argument("--fit-window", type=_interval_arg, help="start:end for rate fits")
    p.add_argument("--out", help="write summary JSON here")
    return parser


def _apply_overrides(cfg, args, **extra):
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        method=getattr(args, "method", None),
        deterministic=getattr(args, "deterministic", None),
        out_dir=getattr(args, "out", None),
        **extra,
    )


def _simulate(cfg) -> int:
    res = run_experiment(cfg)
    for msg in res.messages:
        print(msg, file=sys.stderr if res.exit_code else sys.stdout)
    for method, r in res.residuals.items():
        print(f"{method}: " + ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    for method, f in res.fits.items():
        print(f"{method}: fitted rate {f['rate']:.6g} (R^2 {f['r_squared']:.6f})")
    print(f"wrote {len(res.files)} files to {res.out_dir}")
    return res.exit_code


def _analytic(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out_dir)
    params = AnalyticParams.from_spec(cfg.spec)
    times = np.linspace(0.0, cfg.t_final, max(2, int(round(cfg.t_final / cfg.snapshot_step)) + 1))
    names = cfg.overlays or ("zeno", "linear", "exponential")
    cols = analytic_overlays(times, params, names, cfg.beta)
    keys = list(cols)
    chis = chi(times, params.freq_width)
    write_table(out / "analytic.csv", ["t", "chi"] + keys, ([t, chis[i], *(cols[k][i] for k in keys)] for i, t in enumerate(times)))
    if params.gamma_zero > 0:
        om = np.linspace(params.Omega - params.freq_width / 2, params.Omega + params.freq_width / 2, args.n_omega)
        write_table(out / "lorentzian_mean.csv", ["omega", "ensemble_mean"], zip(om, lorentzian_ensemble_mean(om, params)))
    print(f"Gamma_0 = {params.gamma_zero:.6g}, Lambda_0^2 = {params.lambda_zero_sq:.6g}, nu_0 = {params.nu_zero:.6g}")
    print(f"wrote analytic curves to {out}")
    return EXIT_OK


def _markov(args) -> int:
    rate, beta, t_final = args.rate, args.beta, args.t_final
    if args.config:
        cfg = load_config(args.config)
        rate = AnalyticParams.from_spec(cfg.spec).gamma_zero if rate is None else rate
        beta = cfg.beta if beta is None else beta
        t_final = cfg.t_final if t_final is None else t_final
    if rate is None:
        raise ConfigError("give --rate or --config")
    beta = math.inf if beta is None else beta
    m = markov_rates(rate, beta)
    if t_final is None:
        t_final = 5.0 / m.total_rate if m.total_rate > 0 else 1.0
    t = np.linspace(0.0, t_final, args.points)
    ee = markov_qubit_population(t, m, args.rho0)
    ratio = m.gamma_down / m.gamma_up if m.gamma_up > 0 else math.inf
    print(f"gamma_down = {m.gamma_down:.12g}\ngamma_up = {m.gamma_up:.12g}\ndown/up = {ratio:.12g}")
    if args.out:
        p = write_table(Path(args.out) / "markov.csv", ["t", "rho_ee", "rho_gg"], zip(t, ee, 1 - ee))
        print(f"wrote {p}")
    return EXIT_OK


def _modes(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed)
    inst = build_instance(cfg.spec)
    dec = diagonalize_model(inst)
    weight = np.abs(dec.unitary[:, 0]) ** 2
    out = Path(args.out or cfg.out_dir)
    p = write_table(out / "modes.csv", ["mode", "frequency", "qubit_weight"], zip(range(dec.n_sites), dec.frequencies, weight))
    trace_gap = abs(dec.frequencies.sum() - inst.site_frequencies.sum())
    print(f"{dec.n_sites} modes, trace check {trace_gap:.3e}, qubit IPR {np.sum(weight**2):.6g}")
    print(f"wrote {p}")
    return EXIT_OK


def _compare(args) -> int:
    a = read_trajectory_csv(args.a)
    b = read_overlay_csv(args.b, args.overlay_column) if args.overlay_column else read_trajectory_csv(args.b)
    rep = compare_report(a, b, interpolate=args.interpolate, fit_window=args.fit_window)
    print(rep.table())
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        (path / "compare.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("ignore", ValidityWarning)
    try:
        if args.command == "simulate":
            return _simulate(_apply_overrides(load_config(args.config), args))
        if args.command == "preset":
            cfg = load_preset(args.name)
            return _simulate(_apply_overrides(cfg, args, n_spins=args.n_spins, t_final=args.t_final))
        if args.command == "analytic":
            return _analytic(args)
        if args.command == "markov":
            return _markov(args)
        if args.command == "modes":
            return _modes(args)
        if args.command == "compare":
            return _compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
