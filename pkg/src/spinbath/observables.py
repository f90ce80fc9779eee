"""Post-processing of trajectories: conservation, time windows, binning, rate fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exact import Trajectory
from .model import SpinBathInstance

__all__ = [
    "WindowSpec",
    "FIG3_WINDOWS",
    "LONG_TIME_WINDOW",
    "window_average",
    "ConservationResiduals",
    "check_conservation",
    "BinnedProfile",
    "frequency_bin",
    "ExponentialFit",
    "fit_exponential",
]


@dataclass(frozen=True)
class WindowSpec:
    """Time windows t_start < t <= t_end, in units of 1/Omega. Overlaps are allowed."""

    intervals: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"window ({a:g}, {b:g}] must have t_start < t_end")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)


# the four short windows of the population snapshots
FIG3_WINDOWS = WindowSpec(((0.0, 100.0), (200.0, 300.0), (400.0, 500.0), (9900.0, 10000.0)))
LONG_TIME_WINDOW = WindowSpec(((9500.0, 10000.0),))


def window_average(trajectory: Trajectory, windows) -> np.ndarray:
    """Mean population per window, shape (n_windows, n_recorded_sites)."""
    if not isinstance(windows, WindowSpec):
        windows = WindowSpec(tuple(windows))
    out = np.empty((len(windows), trajectory.populations.shape[1]))
    for i, (a, b) in enumerate(windows):
        m = (trajectory.times > a) & (trajectory.times <= b)
        if not m.any():
            raise ValueError(f"window ({a:g}, {b:g}] contains no snapshot")
        out[i] = trajectory.populations[m].mean(axis=0)
    return out


class ConservationResiduals(NamedTuple):
    """Largest deviations over all snapshots.

    norm: sum_j |C_j|^2 - 1.
    energy: bare sum rule sum_j |C_j|^2 omega_j + |C_0|^2 Omega - Omega.
    hamiltonian: <H> - Omega with the coupling terms included.
    """

    norm: float
    energy: float
    hamiltonian: float


def check_conservation(trajectory: Trajectory, instance: SpinBathInstance) -> ConservationResiduals:
    omega = instance.Omega
    if trajectory.complete:
        if trajectory.n_sites != instance.n_spins + 1:
            raise ValueError("trajectory and instance sizes differ")
        norms = trajectory.populations.sum(axis=1)
        bare = trajectory.populations @ instance.site_frequencies
    else:
        if trajectory.bare_energies is None:
            raise ValueError("partial trajectory carries no energy diagnostics")
        norms, bare = trajectory.norms, trajectory.bare_energies
    ham = trajectory.energies if trajectory.energies is not None else bare

    def worst(x):
        return float(np.max(np.abs(x))) if np.size(x) else 0.0

    return ConservationResiduals(worst(norms - 1.0), worst(bare - omega), worst(ham - omega))


class BinnedProfile(NamedTuple):
    centers: np.ndarray
    means: np.ndarray  # NaN marks an empty bin
    counts: np.ndarray
    edges: np.ndarray


def frequency_bin(
    mean_populations,
    omegas,
    n_bins: int,
    limits: Optional[Tuple[float, float]] = None,
    centers: str = "linear",
) -> BinnedProfile:
    """Average per-spin values in equal-width frequency bins.

    `limits` defaults to the realized frequency range; the upper edge
    belongs to the last bin. `centers="geometric"` reports sqrt(lo * hi)
    as the bin position, which suits log-scale frequency axes.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    pops = np.asarray(mean_populations, dtype=float)
    om = np.asarray(omegas, dtype=float)
    if pops.shape != om.shape:
        raise ValueError("one population per frequency required")
    lo, hi = (om.min(), om.max()) if limits is None else limits
    if hi == lo:
        hi = lo + 1.0
    if om.min() < lo or om.max() > hi:
        raise ValueError("frequencies fall outside the binning limits")
    edges = np.linspace(lo, hi, n_bins + 1)
    which = np.clip(np.searchsorted(edges, om, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=pops, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.where(counts > 0, counts, 1), np.nan)
    if centers == "geometric":
        mid = np.sqrt(np.clip(edges[:-1], 0, None) * edges[1:])
    elif centers == "linear":
        mid = 0.5 * (edges[:-1] + edges[1:])
    else:
        raise ValueError(f"centers must be 'linear' or 'geometric', got {centers!r}")
    return BinnedProfile(mid, means, counts, edges)


class ExponentialFit(NamedTuple):
    rate: float
    r_squared: float
    prefactor: float
    n_points: int

    def looks_exponential(self, threshold: float = 0.999) -> bool:
        return self.r_squared >= threshold


def fit_exponential(trajectory: Trajectory, fit_window: Sequence[float], site: int = 0) -> ExponentialFit:
    """Ordinary least squares of log|C_site|^2 against t on t0 <= t <= t1.

    Returns the decay rate (minus the slope) and R^2 of the log-linear fit.
    """
    t0, t1 = fit_window
    m = (trajectory.times >= t0) & (trajectory.times <= t1)
    if m.sum() < 2:
        raise ValueError(f"fit window [{t0:g}, {t1:g}] holds fewer than two snapshots")
    t = trajectory.times[m]
    p = trajectory.column(site)[m]
    if np.any(p <= 0):
        raise ValueError(f"population is not positive everywhere in [{t0:g}, {t1:g}]; shrink the fit window")
    y = np.log(p)
    slope, icpt = np.polyfit(t, y, 1)
    resid = y - (slope * t + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(rate=float(-slope), r_squared=r2, prefactor=float(np.exp(icpt)), n_points=int(m.sum()))
