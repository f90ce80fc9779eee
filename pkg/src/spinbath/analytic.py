"""Closed-form and lowest-order results for the qubit and the bath spins.

Everything here is a pure function of its arguments (hbar = 1). Formulas
evaluated outside their regime of validity emit `ValidityWarning` rather
than failing, because crossing regimes is often the point of a plot.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy.special import sici

from .model import MarkovParams, SpinBathInstance, SpinBathSpec, golden_rule_rate

__all__ = [
    "AnalyticParams",
    "ValidityWarning",
    "chi",
    "chi_quadrature",
    "zeno_population",
    "linear_population",
    "exponential_population",
    "self_energy",
    "spin_population_transient",
    "lorentzian_asymptote",
    "lorentzian_ensemble_mean",
    "markov_qubit_population",
]


class ValidityWarning(UserWarning):
    """A formula was evaluated outside the regime it was derived for."""


@dataclass(frozen=True)
class AnalyticParams:
    """Continuum-limit parameters of a uniform bath.

    lambda_zero_sq = N <gamma^2>, and the golden-rule rate is
    gamma_zero = 2 pi nu_zero <gamma^2> with nu_zero = N / freq_width.
    """

    gamma_zero: float
    n_spins: int
    freq_width: float
    Omega: float = 1.0
    lambda_zero_sq: float = float("nan")

    def __post_init__(self):
        if self.gamma_zero < 0:
            raise ValueError("gamma_zero must be >= 0")
        if self.n_spins < 1 or not self.freq_width > 0:
            raise ValueError("need n_spins >= 1 and freq_width > 0")
        expected = self.gamma_zero * self.freq_width / (2 * math.pi)
        if math.isnan(self.lambda_zero_sq):
            object.__setattr__(self, "lambda_zero_sq", expected)
        elif not math.isclose(self.lambda_zero_sq, expected, rel_tol=1e-9, abs_tol=1e-300):
            raise ValueError("lambda_zero_sq inconsistent with gamma_zero, n_spins and freq_width")

    @property
    def nu_zero(self) -> float:
        return self.n_spins / self.freq_width

    @property
    def mean_sq_coupling(self) -> float:
        return self.lambda_zero_sq / self.n_spins

    @classmethod
    def from_instance(cls, instance: SpinBathInstance) -> "AnalyticParams":
        """Parameters of the realized couplings (rate from `golden_rule_rate`)."""
        return cls(
            gamma_zero=golden_rule_rate(instance),
            n_spins=instance.n_spins,
            freq_width=instance.width,
            Omega=instance.Omega,
        )

    @classmethod
    def from_spec(cls, spec: SpinBathSpec) -> "AnalyticParams":
        """Parameters of the target distribution rather than one draw."""
        rate = 2 * math.pi * spec.nu_zero * spec.resolved_mean_sq_coupling()
        return cls(gamma_zero=rate, n_spins=spec.n_spins, freq_width=spec.freq_width, Omega=spec.qubit_frequency)


def _warn_if(cond, msg):
    if np.any(cond):
        warnings.warn(msg, ValidityWarning, stacklevel=3)


def chi(t, freq_width):
    """Integral of (1 - cos w)/w^2 over |w| <= freq_width * t / 2.

    Closed form 2 [Si(a) - (1 - cos a)/a] with a = freq_width * t / 2;
    tends to pi for large a and to a for small a.
    """
    a = 0.5 * freq_width * np.asarray(t, dtype=float)
    if np.any(a < 0):
        raise ValueError("chi needs t >= 0 and freq_width >= 0")
    si, _ = sici(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        tail = np.where(a > 0, 2.0 * np.sin(0.5 * a) ** 2 / np.where(a > 0, a, 1.0), 0.0)
    out = 2.0 * (si - tail)
    return out if out.ndim else float(out)


def chi_quadrature(t, freq_width):
    """Adaptive quadrature of the same integral, one period of cos at a time."""

    def integrand(w):
        # (1 - cos w)/w^2 written so that w -> 0 is exact
        return 0.5 * np.sinc(w / (2 * math.pi)) ** 2

    def one(tt):
        a = 0.5 * freq_width * tt
        if a < 0:
            raise ValueError("chi needs t >= 0")
        edges = np.append(np.arange(0.0, a, 2 * math.pi), a)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = _integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=100)
            total += val
        return 2.0 * total

    t = np.asarray(t, dtype=float)
    out = np.vectorize(one, otypes=[float])(t)
    return out if out.ndim else float(out)


def zeno_population(t, params: AnalyticParams):
    """Short-time quadratic decay 1 - Lambda_0^2 t^2 (valid for Lambda_0 t <= 1)."""
    t = np.asarray(t, dtype=float)
    _warn_if(math.sqrt(params.lambda_zero_sq) * t > 1, "zeno_population used beyond Lambda_0 t = 1")
    out = 1.0 - params.lambda_zero_sq * t**2
    return out if out.ndim else float(out)


def linear_population(t, params: AnalyticParams):
    """First-order decay 1 - Gamma_0 t."""
    t = np.asarray(t, dtype=float)
    out = 1.0 - params.gamma_zero * t
    return out if out.ndim else float(out)


def exponential_population(t, params: AnalyticParams, warn: bool = True):
    """exp(-Gamma_0 t); derived for freq_width * t >> 1."""
    t = np.asarray(t, dtype=float)
    if warn:
        _warn_if((t > 0) & (params.freq_width * t < 1), "exponential_population used at freq_width * t < 1")
    out = np.exp(-params.gamma_zero * t)
    return out if out.ndim else float(out)


def self_energy(omega, source, mode: str = "discrete", eps: float | None = None):
    """Self-energy of the excited-qubit state at frequency `omega`.

    discrete: sum_i gamma_i^2 / (omega + i eps - omega_i) over an instance,
    with eps defaulting to ten mean level spacings (10 * freq_width / N).
    continuum: (2/pi) Gamma_0 (omega - Omega)/freq_width - i Gamma_0 / 2, from
    AnalyticParams (or an instance, via its realized rate). Its real part
    holds only for |omega - Omega| << freq_width.
    """
    omega = np.asarray(omega, dtype=float)
    if mode == "continuum":
        params = AnalyticParams.from_instance(source) if isinstance(source, SpinBathInstance) else source
        _warn_if(np.abs(omega - params.Omega) > 0.1 * params.freq_width,
                 "continuum self-energy real part used far from the qubit frequency")
        out = (2 / math.pi) * params.gamma_zero * (omega - params.Omega) / params.freq_width - 0.5j * params.gamma_zero
        return out + 0j * omega if omega.ndim else complex(out)
    if mode != "discrete":
        raise ValueError(f"mode must be 'discrete' or 'continuum', got {mode!r}")
    if not isinstance(source, SpinBathInstance):
        raise TypeError("discrete self-energy needs a SpinBathInstance")
    if eps is None:
        eps = 10.0 * source.width / source.n_spins
    g2 = np.asarray(source.gammas) ** 2
    denom = omega[..., None] + 1j * eps - np.asarray(source.omegas)
    if eps == 0 and np.any(denom == 0):
        raise ZeroDivisionError("omega sits on a bath frequency with eps = 0")
    out = np.sum(g2 / denom, axis=-1)
    return out if out.ndim else complex(out)


def spin_population_transient(omega_j, gamma_j, t, params: AnalyticParams):
    """Lowest-order |C_j(t)|^2 for a spin fed by an exponentially decaying qubit."""
    det = params.Omega - np.asarray(omega_j, dtype=float)
    t = np.asarray(t, dtype=float)
    g = params.gamma_zero
    num = 1.0 - 2.0 * np.exp(-0.5 * g * t) * np.cos(det * t) + np.exp(-g * t)
    out = np.asarray(gamma_j, dtype=float) ** 2 * num / (0.25 * g**2 + det**2)
    return out if out.ndim else float(out)


def lorentzian_asymptote(omega_j, gamma_j, params: AnalyticParams):
    """t -> infinity limit of `spin_population_transient`: 4 gamma_j^2 / (Gamma_0^2 + 4 (Omega - omega_j)^2)."""
    x = np.asarray(omega_j, dtype=float) / params.Omega
    r = params.gamma_zero / params.Omega
    out = 4.0 * np.asarray(gamma_j, dtype=float) ** 2 / params.Omega**2 / (r**2 + 4.0 * (1.0 - x) ** 2)
    return out if out.ndim else float(out)


def lorentzian_ensemble_mean(omega_j, params: AnalyticParams):
    """Average of `lorentzian_asymptote` over the coupling distribution.

    Equals (2 dw / (pi N Omega)) r / (r^2 + 4 (1 - omega/Omega)^2) with
    r = Gamma_0 / Omega; at dw = 2 Omega the prefactor is 4 / (pi N).
    """
    if params.gamma_zero == 0:
        raise ValueError("Gamma_0 = 0 collapses the distribution to a delta function")
    x = np.asarray(omega_j, dtype=float) / params.Omega
    r = params.gamma_zero / params.Omega
    pref = 2.0 * params.freq_width / (math.pi * params.n_spins * params.Omega)
    out = pref * r / (r**2 + 4.0 * (1.0 - x) ** 2)
    return out if out.ndim else float(out)


def markov_qubit_population(t, markov: MarkovParams, initial_excited_population: float = 1.0):
    """Excited-state population under the two-rate master equation.

    rho_ee(t) = rho_inf + (rho_ee(0) - rho_inf) exp(-(G_up + G_down) t),
    rho_inf = G_up / (G_up + G_down). With both rates zero the initial
    value is returned unchanged.
    """
    p0 = float(initial_excited_population)
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("initial population must lie in [0, 1]")
    t = np.asarray(t, dtype=float)
    tot = markov.total_rate
    if tot == 0:
        out = np.full_like(t, p0)
    else:
        inf = markov.gamma_up / tot
        out = inf + (p0 - inf) * np.exp(-tot * t)
    return out if out.ndim else float(out)
