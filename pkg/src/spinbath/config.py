"""Experiment configuration files.

INI syntax with four sections; unknown sections or keys are rejected.

    [model]     n_spins, freq_width, target_rate | mean_sq_coupling,
                coupling_mode, kappa_mode, placement, seed
    [run]       method, t_final, snapshot_step, dt, deterministic, record
    [analysis]  windows, overlays, fit_window, profile_window, n_bins, beta
    [output]    dir, trajectory_layout, export_every

Intervals are written `start:end`, lists comma separated. A `[manifest]`
section (and any `[manifest.*]`) is accepted and ignored, so run
manifests load as configs.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

from .exact import MAX_DENSE_MODES
from .model import SpinBathSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "dump_config"]

METHODS = ("ode", "eigenmode", "both")
OVERLAYS = ("zeno", "linear", "exponential", "lorentzian", "markov")
LAYOUTS = ("auto", "wide", "long")
RECORDS = ("all", "qubit")

SCHEMA = {
    "model": {
        "n_spins", "freq_width", "target_rate", "mean_sq_coupling",
        "coupling_mode", "kappa_mode", "placement", "seed",
    },
    "run": {"method", "t_final", "snapshot_step", "dt", "deterministic", "record"},
    "analysis": {"windows", "overlays", "fit_window", "profile_window", "n_bins", "beta"},
    "output": {"dir", "trajectory_layout", "export_every"},
}
IGNORED_SECTIONS = {"manifest"}


class ConfigError(ValueError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(field)
        if line:
            where.append(f"line {line}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SpinBathSpec
    method: str = "ode"
    t_final: float = 100.0
    snapshot_step: float = 1.0
    dt: float = 0.02
    deterministic: bool = True
    record: str = "all"
    windows: Tuple[Tuple[float, float], ...] = ()
    overlays: Tuple[str, ...] = ()
    fit_window: Optional[Tuple[float, float]] = None
    profile_window: Optional[Tuple[float, float]] = None
    n_bins: int = 50
    beta: float = math.inf
    out_dir: str = "out"
    trajectory_layout: str = "auto"
    export_every: int = 1
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        checks = [
            (self.method in METHODS, "run.method", f"must be one of {METHODS}"),
            (self.t_final > 0, "run.t_final", "must be positive"),
            (self.snapshot_step > 0, "run.snapshot_step", "must be positive"),
            (self.dt > 0, "run.dt", "must be positive"),
            (self.record in RECORDS, "run.record", f"must be one of {RECORDS}"),
            (self.n_bins >= 1, "analysis.n_bins", "must be >= 1"),
            (self.trajectory_layout in LAYOUTS, "output.trajectory_layout", f"must be one of {LAYOUTS}"),
            (self.export_every >= 1, "output.export_every", "must be >= 1"),
            (not self.beta < 0, "analysis.beta", "must be >= 0"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(msg, name)
        for o in self.overlays:
            if o not in OVERLAYS:
                raise ConfigError(f"unknown overlay {o!r}; choose from {OVERLAYS}", "analysis.overlays")
        if self.method in ("eigenmode", "both") and self.spec.n_spins > MAX_DENSE_MODES:
            raise ConfigError(
                f"eigenmode method needs n_spins <= {MAX_DENSE_MODES}, got {self.spec.n_spins}", "run.method"
            )

    def with_overrides(self, **kw) -> "ExperimentConfig":
        spec_kw = {k: kw.pop(k) for k in list(kw) if k in ("seed", "n_spins") and kw[k] is not None}
        kw = {k: v for k, v in kw.items() if v is not None}
        spec = replace(self.spec, **spec_kw) if spec_kw else self.spec
        try:
            return replace(self, spec=spec, **kw)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def _key_lines(text: str):
    """(section, key) -> 1-based line number, for diagnostics."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None and not raw[:1].isspace():
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def _interval(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"expected start:end, got {text!r}")
    a, b = float(parts[0]), float(parts[1])
    if not a < b:
        raise ValueError(f"interval {text!r} needs start < end")
    return (a, b)


def _list(text: str):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _bool(text: str):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float(text: str):
    return float(text)


def _int(text: str):
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


_MODEL_CONVERT = {
    "n_spins": _int, "freq_width": _float, "target_rate": _float, "mean_sq_coupling": _float,
    "coupling_mode": str, "kappa_mode": str, "placement": str, "seed": _int,
}
_RUN_CONVERT = {
    "method": str, "t_final": _float, "snapshot_step": _float, "dt": _float,
    "deterministic": _bool, "record": str,
}
_ANALYSIS_CONVERT = {
    "windows": lambda s: tuple(_interval(p) for p in _list(s)),
    "overlays": _list,
    "fit_window": _interval,
    "profile_window": _interval,
    "n_bins": _int,
    "beta": _float,
}
_OUTPUT_CONVERT = {"dir": str, "trajectory_layout": str, "export_every": _int}


def parse_config(text: str, source: Optional[str] = None) -> ExperimentConfig:
    lines = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno) from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from exc

    for section in cp.sections():
        if section in IGNORED_SECTIONS or section.startswith("manifest."):
            continue
        if section not in SCHEMA:
            raise ConfigError("unknown section", f"[{section}]", lines.get((section, None)))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", f"{section}.{key}", lines.get((section, key)))
    if "model" not in cp:
        raise ConfigError("missing [model] section")

    def convert(section, table):
        out = {}
        if section not in cp:
            return out
        for key, raw in cp[section].items():
            try:
                out[key] = table[key](raw.strip())
            except ValueError as exc:
                raise ConfigError(str(exc), f"{section}.{key}", lines.get((section, key))) from exc
        return out

    model = convert("model", _MODEL_CONVERT)
    for req in ("n_spins", "freq_width"):
        if req not in model:
            raise ConfigError("required key missing", f"model.{req}", lines.get(("model", None)))
    try:
        spec = SpinBathSpec(**model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "[model]", lines.get(("model", None))) from exc

    kw = convert("run", _RUN_CONVERT)
    kw.update(convert("analysis", _ANALYSIS_CONVERT))
    out = convert("output", _OUTPUT_CONVERT)
    if "dir" in out:
        kw["out_dir"] = out.pop("dir")
    kw.update(out)
    try:
        return ExperimentConfig(spec=spec, source=source, **kw)
    except ConfigError as exc:
        if exc.line is None and exc.field and "." in exc.field:
            sec, key = exc.field.split(".", 1)
            raise ConfigError(str(exc).split(": ", 1)[-1], exc.field, lines.get((sec, key))) from None
        raise


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, source=str(path))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_interval(iv):
    return f"{_fmt(float(iv[0]))}:{_fmt(float(iv[1]))}"


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize back to INI text; `parse_config(dump_config(c))` reproduces `c`."""
    s = cfg.spec
    model = {
        "n_spins": s.n_spins,
        "freq_width": float(s.freq_width),
        "coupling_mode": s.coupling_mode,
        "kappa_mode": s.kappa_mode,
        "placement": s.placement,
        "seed": s.seed,
    }
    if s.target_rate is not None:
        model["target_rate"] = float(s.target_rate)
    else:
        model["mean_sq_coupling"] = float(s.mean_sq_coupling)
    run = {
        "method": cfg.method,
        "t_final": float(cfg.t_final),
        "snapshot_step": float(cfg.snapshot_step),
        "dt": float(cfg.dt),
        "deterministic": cfg.deterministic,
        "record": cfg.record,
    }
    analysis = {"n_bins": cfg.n_bins, "beta": float(cfg.beta)}
    if cfg.windows:
        analysis["windows"] = ", ".join(_fmt_interval(w) for w in cfg.windows)
    if cfg.overlays:
        analysis["overlays"] = ", ".join(cfg.overlays)
    if cfg.fit_window:
        analysis["fit_window"] = _fmt_interval(cfg.fit_window)
    if cfg.profile_window:
        analysis["profile_window"] = _fmt_interval(cfg.profile_window)
    output = {"dir": cfg.out_dir, "trajectory_layout": cfg.trajectory_layout, "export_every": cfg.export_every}

    chunks = []
    for name, body in (("model", model), ("run", run), ("analysis", analysis), ("output", output)):
        chunks.append(f"[{name}]")
        chunks.extend(f"{k} = {_fmt(v)}" for k, v in body.items())
        chunks.append("")
    return "\n".join(chunks)
