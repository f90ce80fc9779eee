"""Run one configured experiment end to end and write its files."""

from __future__ import annotations

import configparser
import io
import platform
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy

from . import __version__
from .analytic import (
    AnalyticParams,
    ValidityWarning,
    chi,
    exponential_population,
    linear_population,
    lorentzian_asymptote,
    lorentzian_ensemble_mean,
    markov_qubit_population,
    zeno_population,
)
from .config import ExperimentConfig, dump_config
from .exact import NormDriftError, StepPolicy, diagonalize_model, eigenmode_propagate, integrate, uniform_schedule
from .io import fmt, write_table, write_trajectory_csv
from .model import build_instance, golden_rule_rate, markov_rates
from .observables import check_conservation, fit_exponential, window_average
from .report import compare_report, lorentzian_comparison

__all__ = ["RunResult", "run_experiment", "analytic_overlays", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICS"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS = 0, 1, 2

# numerical guarantees checked on every run
NORM_TOL = {"ode": 1e-6, "eigenmode": 1e-10}
ENERGY_TOL = 1e-6


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    files: List[Path] = field(default_factory=list)
    residuals: Dict[str, dict] = field(default_factory=dict)
    fits: Dict[str, dict] = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    instance: object = None
    messages: List[str] = field(default_factory=list)


def analytic_overlays(times, params: AnalyticParams, names, beta=np.inf):
    """Columns of qubit-population predictions on `times`, keyed by overlay name."""
    cols = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        if "zeno" in names:
            cols["zeno"] = zeno_population(times, params)
        if "linear" in names:
            cols["linear"] = linear_population(times, params)
        if "exponential" in names:
            cols["exponential"] = exponential_population(times, params)
        if "markov" in names:
            cols["markov"] = markov_qubit_population(times, markov_rates(params.gamma_zero, beta, params.Omega))
    return cols


def _manifest_text(cfg, sections):
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(dump_config(cfg))
    for name, body in sections.items():
        cp[name] = {k: v if isinstance(v, str) else fmt(v) for k, v in body.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult(EXIT_OK, out)

    instance = build_instance(cfg.spec)
    res.instance = instance
    params = AnalyticParams.from_spec(cfg.spec) if cfg.spec.freq_width > 0 else None
    # the Lorentzian is a delta function without coupling
    lorentz_ok = params is not None and params.gamma_zero > 0
    schedule = uniform_schedule(cfg.t_final, cfg.snapshot_step)
    record = "qubit" if cfg.record == "qubit" else None
    site_freq = instance.site_frequencies

    methods = ("ode", "eigenmode") if cfg.method == "both" else (cfg.method,)
    for method in methods:
        try:
            if method == "ode":
                traj = integrate(
                    instance, cfg.t_final, StepPolicy(dt=cfg.dt), schedule,
                    record=record, deterministic=cfg.deterministic,
                )
            else:
                traj = eigenmode_propagate(instance, diagonalize_model(instance), schedule, record=record)
        except NormDriftError as exc:
            res.exit_code = EXIT_NUMERICS
            res.messages.append(f"{method}: {exc}")
            res.residuals[method] = {"status": "aborted"}
            continue
        res.trajectories[method] = traj
        r = check_conservation(traj, instance)
        breach = r.norm > NORM_TOL[method] or r.hamiltonian > ENERGY_TOL
        res.residuals[method] = {
            "norm": r.norm,
            "energy_hamiltonian": r.hamiltonian,
            "energy_bare_sum": r.energy,
            "status": "breach" if breach else "ok",
        }
        if breach:
            res.exit_code = EXIT_NUMERICS
            res.messages.append(f"{method}: conservation breach (norm {r.norm:.3e}, energy {r.hamiltonian:.3e})")
        res.files.append(
            write_trajectory_csv(out / f"trajectory_{method}.csv", traj, site_freq, cfg.trajectory_layout, cfg.export_every)
        )
        if cfg.windows:
            avg = window_average(traj, cfg.windows)
            rows = (
                (a, b, int(i), site_freq[i], avg[w, c])
                for w, (a, b) in enumerate(cfg.windows)
                for c, i in enumerate(traj.indices)
            )
            res.files.append(
                write_table(out / f"windows_{method}.csv", ["t_start", "t_end", "index", "omega", "population"], rows)
            )
        if cfg.fit_window:
            f = fit_exponential(traj, cfg.fit_window)
            res.fits[method] = {"rate": f.rate, "r_squared": f.r_squared, "n_points": f.n_points}
        if cfg.profile_window and traj.complete and lorentz_ok:
            prof = lorentzian_comparison(traj, instance, cfg.profile_window, cfg.n_bins, params)
            res.files.append(
                write_table(
                    out / f"profile_{method}.csv",
                    ["omega_center", "count", "measured", "lorentzian", "rel_err", "core"],
                    (
                        (c, int(n), m, r, abs(m - r) / r, "1" if k else "0")
                        for c, n, m, r, k in zip(prof.centers, prof.counts, prof.measured, prof.reference, prof.core)
                    ),
                )
            )

    if params is not None and cfg.overlays:
        cols = analytic_overlays(schedule, params, cfg.overlays, cfg.beta)
        if cols:
            names = list(cols)
            chis = chi(schedule, params.freq_width)
            rows = ([t, chis[i], *(cols[n][i] for n in names)] for i, t in enumerate(schedule))
            res.files.append(write_table(out / "overlay.csv", ["t", "chi"] + names, rows))
        if "lorentzian" in cfg.overlays and lorentz_ok:
            res.files.append(
                write_table(
                    out / "lorentzian.csv",
                    ["index", "omega", "gamma", "asymptote", "ensemble_mean"],
                    (
                        (j + 1, w, g, lorentzian_asymptote(w, g, params), lorentzian_ensemble_mean(w, params))
                        for j, (w, g) in enumerate(zip(instance.omegas, instance.gammas))
                    ),
                )
            )

    if cfg.method == "both" and len(res.trajectories) == 2:
        rep = compare_report(res.trajectories["ode"], res.trajectories["eigenmode"], fit_window=cfg.fit_window)
        res.files.append(write_table(out / "differential.csv", ["quantity", "value"], rep.to_dict().items()))
        res.messages.append("ode vs eigenmode\n" + rep.table())

    manifest = {
        "manifest": {
            "package_version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
            "seed": cfg.spec.seed,
            "realized_rate": golden_rule_rate(instance) if cfg.spec.freq_width > 0 else float("nan"),
            "exit_code": res.exit_code,
            "flagged": "yes" if res.exit_code else "no",
            "files": ", ".join(p.name for p in res.files),
        }
    }
    for method, r in res.residuals.items():
        manifest[f"manifest.residuals.{method}"] = r
    for method, f in res.fits.items():
        manifest[f"manifest.fit.{method}"] = f
    path = out / "manifest.ini"
    path.write_text(_manifest_text(replace(cfg, out_dir=str(out)), manifest))
    res.files.append(path)
    return res
