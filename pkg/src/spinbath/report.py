"""Side-by-side comparison of trajectories and of binned spin profiles."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .analytic import AnalyticParams, lorentzian_ensemble_mean
from .exact import Trajectory
from .model import SpinBathInstance
from .observables import fit_exponential, frequency_bin, window_average

__all__ = ["ComparisonReport", "compare_report", "ProfileComparison", "lorentzian_comparison"]


@dataclass(frozen=True)
class ComparisonReport:
    max_abs_diff: float
    mean_abs_diff: float
    n_times: int
    n_sites: int
    rate_a: Optional[float] = None
    rate_b: Optional[float] = None
    rate_diff: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [(k, v) for k, v in self.to_dict().items()]
        width = max(len(k) for k, _ in rows)
        lines = []
        for k, v in rows:
            if isinstance(v, float):
                v = f"{v:.6e}"
            elif v is None:
                v = "-"
            lines.append(f"{k:<{width}}  {v}")
        return "\n".join(lines)


def compare_report(
    a: Trajectory,
    b: Trajectory,
    *,
    interpolate: bool = False,
    fit_window: Optional[Sequence[float]] = None,
) -> ComparisonReport:
    """Population differences over the sites both trajectories recorded.

    With `interpolate=False` the time grids must match exactly. With
    `interpolate=True`, `b` is linearly interpolated onto the times of `a`
    that fall inside b's time span.
    """
    common, ia, ib = np.intersect1d(a.indices, b.indices, return_indices=True)
    if common.size == 0:
        raise ValueError("trajectories share no recorded site")
    lo, hi = max(a.times[0], b.times[0]), min(a.times[-1], b.times[-1])
    if lo > hi:
        raise ValueError("trajectories have disjoint time supports")
    if interpolate:
        m = (a.times >= lo) & (a.times <= hi)
        ta = a.times[m]
        pa = a.populations[m][:, ia]
        pb = np.column_stack([np.interp(ta, b.times, b.populations[:, j]) for j in ib])
    else:
        if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
            raise ValueError("time grids differ; pass interpolate=True to resample")
        ta = a.times
        pa, pb = a.populations[:, ia], b.populations[:, ib]
    d = np.abs(pa - pb)
    rate_a = rate_b = rate_diff = None
    if fit_window is not None and 0 in common:
        rate_a = fit_exponential(a, fit_window).rate
        rate_b = fit_exponential(b, fit_window).rate
        rate_diff = rate_a - rate_b
    return ComparisonReport(
        max_abs_diff=float(d.max()),
        mean_abs_diff=float(d.mean()),
        n_times=int(ta.size),
        n_sites=int(common.size),
        rate_a=rate_a,
        rate_b=rate_b,
        rate_diff=rate_diff,
    )


@dataclass(frozen=True)
class ProfileComparison:
    """Binned long-time spin populations against the ensemble-mean Lorentzian.

    `reference` is the ensemble-mean formula averaged over the spins that
    fall into each bin, i.e. binned exactly like the data.
    """

    centers: np.ndarray
    counts: np.ndarray
    measured: np.ndarray
    reference: np.ndarray
    core: np.ndarray  # bins whose center lies within core_halfwidth of Omega
    peak_value: float

    @property
    def rel_err(self) -> np.ndarray:
        return np.abs(self.measured - self.reference) / self.reference

    @property
    def ratio(self) -> np.ndarray:
        return self.measured / self.reference

    def rows(self):
        for c, n, m, r, k in zip(self.centers, self.counts, self.measured, self.reference, self.core):
            yield {"omega_center": c, "count": int(n), "measured": m, "reference": r, "core": bool(k)}


def lorentzian_comparison(
    trajectory: Trajectory,
    instance: SpinBathInstance,
    window,
    n_bins: int = 50,
    params: Optional[AnalyticParams] = None,
    core_halfwidth: Optional[float] = None,
) -> ProfileComparison:
    """Average spin populations over one time window, bin them, set them against the Lorentzian.

    `params` defaults to the realized golden-rule parameters of `instance`;
    `core_halfwidth` defaults to 5 Gamma_0.
    """
    if not trajectory.complete:
        raise ValueError("profile comparison needs every spin recorded")
    params = params or AnalyticParams.from_instance(instance)
    mean = window_average(trajectory, [window])[0][1:]
    om = np.asarray(instance.omegas)
    limits = (instance.Omega - instance.width / 2, instance.Omega + instance.width / 2)
    data = frequency_bin(mean, om, n_bins, limits=limits)
    ref = frequency_bin(lorentzian_ensemble_mean(om, params), om, n_bins, limits=limits)
    half = 5 * params.gamma_zero if core_halfwidth is None else core_halfwidth
    keep = data.counts > 0
    core = np.abs(data.centers - instance.Omega) <= half
    return ProfileComparison(
        centers=data.centers[keep],
        counts=data.counts[keep],
        measured=data.means[keep],
        reference=ref.means[keep],
        core=core[keep],
        peak_value=float(lorentzian_ensemble_mean(instance.Omega, params)),
    )

