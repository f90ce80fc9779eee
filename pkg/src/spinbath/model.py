"""Bath realizations, golden-rule and Markovian rates, and the two-spin check.

Units: hbar = 1 and the qubit frequency is the unit of frequency, so all
frequencies are in units of Omega and times in units of 1/Omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

__all__ = [
    "SpinBathSpec",
    "SpinBathInstance",
    "MarkovParams",
    "build_instance",
    "golden_rule_rate",
    "mean_sq_coupling_stderr",
    "fermi_dirac",
    "markov_rates",
    "two_spin_ground_state",
    "MAX_DENSE_KAPPA",
]

COUPLING_MODES = ("uniform", "constant")
KAPPA_MODES = ("none", "same")
PLACEMENTS = ("uniform", "grid")

# dense N x N inter-spin matrix above this size is refused
MAX_DENSE_KAPPA = 5000


@dataclass(frozen=True)
class SpinBathSpec:
    """Statistical description of a bath; `build_instance` turns it into numbers.

    Exactly one of `target_rate` (the golden-rule rate Gamma_0) and
    `mean_sq_coupling` (<gamma^2>) must be given.
    """

    n_spins: int
    freq_width: float
    target_rate: Optional[float] = None
    mean_sq_coupling: Optional[float] = None
    coupling_mode: str = "uniform"
    kappa_mode: str = "none"
    placement: str = "uniform"
    seed: int = 0
    qubit_frequency: float = 1.0

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValueError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        if not self.freq_width >= 0:
            raise ValueError(f"freq_width must be >= 0, got {self.freq_width!r}")
        if (self.target_rate is None) == (self.mean_sq_coupling is None):
            raise ValueError("give exactly one of target_rate and mean_sq_coupling")
        if self.target_rate is not None and not self.target_rate >= 0:
            raise ValueError(f"target_rate must be >= 0, got {self.target_rate!r}")
        if self.mean_sq_coupling is not None and not self.mean_sq_coupling >= 0:
            raise ValueError(f"mean_sq_coupling must be >= 0, got {self.mean_sq_coupling!r}")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValueError(f"coupling_mode must be one of {COUPLING_MODES}, got {self.coupling_mode!r}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ValueError(f"kappa_mode must be one of {KAPPA_MODES}, got {self.kappa_mode!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if not self.qubit_frequency > 0:
            raise ValueError("qubit_frequency must be positive")

    @property
    def nu_zero(self) -> float:
        """Density of spin frequencies, N / freq_width."""
        return self.n_spins / self.freq_width

    def resolved_mean_sq_coupling(self) -> float:
        """<gamma^2>, inverting Gamma_0 = 2 pi nu_0 <gamma^2> when a rate is given."""
        if self.mean_sq_coupling is not None:
            return float(self.mean_sq_coupling)
        return self.target_rate * self.freq_width / (2 * math.pi * self.n_spins)


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpinBathInstance:
    """One concrete bath: spin frequencies, qubit couplings, optional inter-spin couplings.

    `freq_width` is the nominal window width used to build the instance.
    When None, rate formulas fall back to the realized frequency spread.
    Arrays are made read-only so instances can be shared freely.
    """

    omegas: np.ndarray
    gammas: np.ndarray
    kappas: Optional[np.ndarray] = None
    Omega: float = 1.0
    freq_width: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float).ravel()
        gammas = np.asarray(self.gammas, dtype=float).ravel()
        if omegas.shape != gammas.shape:
            raise ValueError("omegas and gammas must have the same length")
        if omegas.size < 1:
            raise ValueError("an instance needs at least one spin")
        object.__setattr__(self, "omegas", _readonly(omegas))
        object.__setattr__(self, "gammas", _readonly(gammas))
        if self.kappas is not None:
            k = np.asarray(self.kappas, dtype=float)
            n = omegas.size
            if k.shape != (n, n):
                raise ValueError(f"kappas must be {n}x{n}, got {k.shape}")
            if not np.array_equal(k, k.T):
                raise ValueError("kappas must be symmetric")
            if np.any(np.diag(k) != 0):
                raise ValueError("kappas must have a zero diagonal")
            object.__setattr__(self, "kappas", _readonly(k))

    @property
    def n_spins(self) -> int:
        return self.omegas.size

    @property
    def width(self) -> float:
        """Frequency window width: nominal if known, else the realized spread."""
        if self.freq_width is not None:
            return float(self.freq_width)
        return float(np.ptp(self.omegas))

    @property
    def site_frequencies(self) -> np.ndarray:
        """Bare frequencies of all N+1 sites, qubit first."""
        return np.concatenate(([self.Omega], self.omegas))

    def hamiltonian_matrix(self) -> np.ndarray:
        """Dense (N+1)x(N+1) single-excitation Hamiltonian, qubit in row/column 0."""
        n = self.n_spins
        m = np.zeros((n + 1, n + 1))
        if self.kappas is not None:
            m[1:, 1:] = self.kappas
        m[0, 1:] = self.gammas
        m[1:, 0] = self.gammas
        m[np.diag_indices(n + 1)] = self.site_frequencies
        return m


def build_instance(spec: SpinBathSpec) -> SpinBathInstance:
    """Draw a bath realization. Deterministic in `spec` (seed included).

    Draw order on a PCG64 stream: frequencies, couplings, then the upper
    triangle of the inter-spin matrix, row by row.
    """
    n = spec.n_spins
    Omega = spec.qubit_frequency
    width = spec.freq_width
    if width == 0 and n > 1:
        raise ValueError("freq_width = 0 with more than one spin puts every spin on resonance (degenerate)")
    if spec.kappa_mode == "same" and n > MAX_DENSE_KAPPA:
        raise ValueError(f"dense kappa matrix refused for N = {n} > {MAX_DENSE_KAPPA}")

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    lo = Omega - width / 2
    if spec.placement == "grid":
        omegas = lo + (np.arange(n) + 0.5) * (width / n)
    else:
        omegas = rng.uniform(lo, Omega + width / 2, n) if width > 0 else np.full(n, Omega)

    msq = spec.resolved_mean_sq_coupling()
    gmax = math.sqrt(3 * msq)

    def couplings(size):
        if spec.coupling_mode == "constant":
            return np.full(size, math.sqrt(msq))
        return rng.uniform(0.0, gmax, size)

    gammas = couplings(n)
    kappas = None
    if spec.kappa_mode == "same":
        iu = np.triu_indices(n, k=1)
        kappas = np.zeros((n, n))
        kappas[iu] = couplings(iu[0].size)
        kappas = kappas + kappas.T

    return SpinBathInstance(
        omegas=omegas,
        gammas=gammas,
        kappas=kappas,
        Omega=Omega,
        freq_width=width,
        seed=spec.seed,
    )


def golden_rule_rate(instance: SpinBathInstance) -> float:
    """Gamma_0 = 2 pi (N / dw) <gamma^2> for the realized couplings."""
    msq = float(np.mean(instance.gammas**2))
    if msq == 0:
        return 0.0
    width = instance.width
    if width <= 0:
        raise ValueError("golden-rule rate needs a nonzero frequency window")
    return 2 * math.pi * instance.n_spins / width * msq


def mean_sq_coupling_stderr(spec: SpinBathSpec) -> float:
    """Standard error of the sample mean of gamma^2 for the coupling law of `spec`."""
    if spec.coupling_mode == "constant":
        return 0.0
    # gamma ~ U[0, a]: Var(gamma^2) = a^4/5 - a^4/9
    a2 = 3 * spec.resolved_mean_sq_coupling()
    return math.sqrt(4 * a2**2 / 45 / spec.n_spins)


def fermi_dirac(energy, beta):
    """Occupation 1/(1 + exp(beta * energy)); beta may be inf."""
    x = np.multiply(beta, energy)
    return expit(-x)


@dataclass(frozen=True)
class MarkovParams:
    """Markovian transition rates at inverse temperature `beta`."""

    beta: float
    gamma_down: float
    gamma_up: float
    gamma_zero: float

    @property
    def total_rate(self) -> float:
        return self.gamma_down + self.gamma_up

    @property
    def stationary_excited(self) -> float:
        tot = self.total_rate
        return self.gamma_up / tot if tot > 0 else float("nan")


def markov_rates(gamma_zero: float, beta: float, qubit_frequency: float = 1.0) -> MarkovParams:
    if gamma_zero < 0:
        raise ValueError("gamma_zero must be >= 0")
    x = beta * qubit_frequency
    # expit keeps both occupations accurate in the far tails
    f = float(expit(-x))
    one_minus_f = float(expit(x))
    return MarkovParams(
        beta=float(beta),
        gamma_down=gamma_zero * one_minus_f,
        gamma_up=gamma_zero * f,
        gamma_zero=float(gamma_zero),
    )


def two_spin_ground_state(omega1: float, omega2: float, g: float, mode: str = "rwa"):
    """Lowest eigenpair of the 4x4 two-spin Hamiltonian.

    Basis order is |00>, |10>, |01>, |11>. In "rwa" mode the coupling only
    swaps |10> and |01>; in "full" mode it also connects |00> and |11>.
    The matrix splits into parity blocks {|00>,|11>} and {|10>,|01>}, which
    are solved separately so that decoupled states come out exactly.

    Returns (ground_energy, ground_vector, matrix).
    """
    mode = mode.lower()
    if mode not in ("rwa", "full"):
        raise ValueError(f"mode must be 'rwa' or 'full', got {mode!r}")
    s = omega1 + omega2
    h = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, omega1, g, 0.0],
            [0.0, g, omega2, 0.0],
            [0.0, 0.0, 0.0, s],
        ]
    )
    if mode == "full":
        h[0, 3] = h[3, 0] = g

    best = None
    for idx in ((0, 3), (1, 2)):
        block = h[np.ix_(idx, idx)]
        if block[0, 1] == 0:
            vals, vecs = np.diag(block).copy(), np.eye(2)
        else:
            vals, vecs = np.linalg.eigh(block)
        k = int(np.argmin(vals))
        if best is None or vals[k] < best[0]:
            v = np.zeros(4)
            v[list(idx)] = vecs[:, k]
            best = (float(vals[k]), v)
    energy, vec = best
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return energy, vec, h
