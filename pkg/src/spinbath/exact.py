"""Numerically exact single-excitation dynamics.

Two independent routes:

* `integrate` -- fixed-step RK4 on the interaction-picture amplitude
  equations. Without inter-spin couplings the qubit talks to every spin and
  the spins only to the qubit, so a step costs O(N).
* `diagonalize_model` + `eigenmode_propagate` -- one dense Hermitian
  eigensolve of the (N+1)x(N+1) single-excitation Hamiltonian, then each
  snapshot is a rotation of the normal modes.

Index 0 is always the qubit, 1..N the spins. All runs start from the
qubit excited and every spin in its ground state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .model import SpinBathInstance

__all__ = [
    "SingleExcitationState",
    "EigenmodeDecomposition",
    "Trajectory",
    "StepPolicy",
    "NormDriftError",
    "MAX_DENSE_MODES",
    "initial_state",
    "rhs",
    "integrate",
    "uniform_schedule",
    "diagonalize_model",
    "eigenmode_propagate",
    "to_interaction_picture",
    "to_schroedinger_picture",
]

INTERACTION = "interaction"
SCHROEDINGER = "schroedinger"

# N above this refuses a dense eigensolve
MAX_DENSE_MODES = 10_000

# phase rotors are re-seeded from exact exponentials this often (steps)
_PHASE_REANCHOR = 64


class NormDriftError(RuntimeError):
    """The integrator lost more norm than the step policy allows."""


@dataclass(frozen=True)
class SingleExcitationState:
    amplitudes: np.ndarray
    t: float = 0.0
    picture: str = INTERACTION

    def __post_init__(self):
        if self.picture not in (INTERACTION, SCHROEDINGER):
            raise ValueError(f"unknown picture {self.picture!r}")
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.populations))


def initial_state(instance: SpinBathInstance) -> SingleExcitationState:
    amps = np.zeros(instance.n_spins + 1, dtype=complex)
    amps[0] = 1.0
    return SingleExcitationState(amps, 0.0, INTERACTION)


def _frame_phases(instance, t):
    """exp(i * f_j * t) for every site, qubit first."""
    return np.exp(1j * instance.site_frequencies * t)


def to_interaction_picture(state: SingleExcitationState, instance: SpinBathInstance) -> SingleExcitationState:
    if state.picture == INTERACTION:
        return state
    return SingleExcitationState(state.amplitudes * _frame_phases(instance, state.t), state.t, INTERACTION)


def to_schroedinger_picture(state: SingleExcitationState, instance: SpinBathInstance) -> SingleExcitationState:
    if state.picture == SCHROEDINGER:
        return state
    return SingleExcitationState(state.amplitudes * np.conj(_frame_phases(instance, state.t)), state.t, SCHROEDINGER)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Populations |C_j(t)|^2 on a time grid.

    `indices` says which sites the population columns belong to (0 is the
    qubit). `norms`, `bare_energies` and `energies` are evaluated on the
    full state at every snapshot, so they stay available when only some
    sites are recorded. `energies` is the expectation of the full
    Hamiltonian; `bare_energies` drops the coupling terms.
    """

    times: np.ndarray
    populations: np.ndarray
    indices: np.ndarray
    norms: np.ndarray
    bare_energies: Optional[np.ndarray] = None
    energies: Optional[np.ndarray] = None
    amplitudes: Optional[np.ndarray] = None
    picture: str = INTERACTION
    method: str = ""
    seed: Optional[int] = None
    step: Optional[float] = None
    n_sites: Optional[int] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        pops = np.atleast_2d(np.asarray(self.populations, dtype=float))
        if pops.shape[0] != times.size:
            raise ValueError("one population row per time required")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "norms", np.asarray(self.norms, dtype=float))
        if self.n_sites is None:
            object.__setattr__(self, "n_sites", int(self.indices.max()) + 1 if self.indices.size else 0)

    @property
    def complete(self) -> bool:
        return self.indices.size == self.n_sites and np.array_equal(self.indices, np.arange(self.n_sites))

    def column(self, site: int) -> np.ndarray:
        hit = np.flatnonzero(self.indices == site)
        if hit.size == 0:
            raise KeyError(f"site {site} was not recorded")
        return self.populations[:, hit[0]]

    @property
    def qubit(self) -> np.ndarray:
        return self.column(0)

    def state(self, k: int) -> SingleExcitationState:
        if self.amplitudes is None:
            raise ValueError("amplitudes were not stored for this trajectory")
        return SingleExcitationState(self.amplitudes[k], float(self.times[k]), self.picture)

    def slice_time(self, t_start: float, t_end: float) -> "Trajectory":
        """Snapshots with t_start < t <= t_end."""
        m = (self.times > t_start) & (self.times <= t_end)
        return self._take(m)

    def _take(self, m) -> "Trajectory":
        def sel(a):
            return None if a is None else a[m]

        return replace(
            self,
            times=self.times[m],
            populations=self.populations[m],
            norms=self.norms[m],
            bare_energies=sel(self.bare_energies),
            energies=sel(self.energies),
            amplitudes=sel(self.amplitudes),
        )

    def concatenate(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.indices, other.indices):
            raise ValueError("cannot join trajectories recording different sites")
        if self.times.size and other.times.size and other.times[0] <= self.times[-1]:
            raise ValueError("second trajectory must start after the first ends")

        def cat(a, b):
            if a is None or b is None:
                return None
            return np.concatenate([a, b])

        return replace(
            self,
            times=np.concatenate([self.times, other.times]),
            populations=np.vstack([self.populations, other.populations]),
            norms=np.concatenate([self.norms, other.norms]),
            bare_energies=cat(self.bare_energies, other.bare_energies),
            energies=cat(self.energies, other.energies),
            amplitudes=cat(self.amplitudes, other.amplitudes),
        )


@dataclass(frozen=True)
class StepPolicy:
    """Fixed RK4 step with an automatic halving fallback.

    A run whose norm drifts by more than `norm_tol` is restarted with half
    the step, at most `max_halvings` times; after that it aborts.
    """

    dt: float = 0.02
    norm_tol: float = 1e-6
    max_halvings: int = 3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")


def uniform_schedule(t_final: float, spacing: float) -> np.ndarray:
    """Snapshot times 0, spacing, ..., t_final (t_final always included)."""
    if not t_final > 0 or not spacing > 0:
        raise ValueError("t_final and spacing must be positive")
    n = max(1, int(round(t_final / spacing)))
    return np.linspace(0.0, t_final, n + 1)


class _Couplings:
    """Interaction-picture derivative with phases supplied by the caller.

    With p_j = exp(i (Omega - omega_j) t):
        dC_0/dt = -i sum_j gamma_j p_j C_j
        dC_j/dt = -i [gamma_j conj(p_j) C_0 + conj(p_j) sum_k kappa_jk p_k C_k]
    The second form of the inter-spin term is exp(i(omega_j - omega_k)t)
    factored into two diagonal phases around one matrix-vector product.
    """

    def __init__(self, instance: SpinBathInstance, deterministic: bool = True):
        self.detuning = instance.Omega - instance.omegas
        self.gammas = np.asarray(instance.gammas)
        self.kappas = instance.kappas
        self.deterministic = deterministic

    def phases(self, t):
        return np.exp(1j * self.detuning * t)

    def __call__(self, c, p, gp):
        out = np.empty_like(c)
        cs = c[1:]
        if self.deterministic:
            # numpy's pairwise summation has a fixed order
            out[0] = -1j * np.sum(gp * cs)
        else:
            out[0] = -1j * np.dot(gp, cs)
        out[1:] = np.conj(gp) * (-1j * c[0])
        if self.kappas is not None:
            out[1:] -= 1j * (np.conj(p) * (self.kappas @ (p * cs)))
        return out


def rhs(instance: SpinBathInstance, state, t: Optional[float] = None) -> np.ndarray:
    """dC/dt of an interaction-picture state (hbar = 1)."""
    if isinstance(state, SingleExcitationState):
        if state.picture != INTERACTION:
            raise ValueError("rhs expects an interaction-picture state")
        c = state.amplitudes
        t = state.t if t is None else t
    else:
        c = np.asarray(state, dtype=complex)
        if t is None:
            raise ValueError("time is required when passing a bare amplitude vector")
    if c.shape != (instance.n_spins + 1,):
        raise ValueError(f"state has length {c.shape}, instance needs {instance.n_spins + 1}")
    f = _Couplings(instance)
    p = f.phases(t)
    return f(c, p, f.gammas * p)


def _interaction_energy(instance, c, p):
    """<V> for an interaction-picture state, p = exp(i (Omega - omega) t)."""
    cs = c[1:]
    v = 2.0 * np.real(np.conj(c[0]) * np.sum(instance.gammas * p * cs))
    if instance.kappas is not None:
        y = p * cs
        v += float(np.real(np.vdot(y, instance.kappas @ y)))
    return float(v)


def _resolve_record(instance, record):
    n = instance.n_spins + 1
    if record is None or (isinstance(record, str) and record == "all"):
        return np.arange(n)
    if isinstance(record, str) and record == "qubit":
        return np.array([0])
    idx = np.unique(np.asarray(record, dtype=int))
    if idx.size == 0 or idx[0] < 0 or idx[-1] >= n:
        raise ValueError("record indices out of range")
    return idx


def _check_schedule(schedule, t_final):
    times = np.asarray(schedule, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("snapshot schedule must be a non-empty 1-D sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    if times[0] < 0 or times[-1] > t_final * (1 + 1e-12):
        raise ValueError("snapshot times must lie in [0, t_final]")
    return times


def integrate(
    instance: SpinBathInstance,
    t_final: float,
    step_policy: Optional[StepPolicy] = None,
    snapshot_schedule: Optional[Sequence[float]] = None,
    *,
    record=None,
    store_amplitudes: bool = False,
    deterministic: bool = True,
) -> Trajectory:
    """RK4 solution of the interaction-picture amplitude equations.

    Between consecutive snapshots the interval is cut into the fewest equal
    sub-steps no longer than `step_policy.dt`, so every snapshot is hit
    exactly. If the norm drifts past `step_policy.norm_tol` the whole run
    is repeated with half the step; after `max_halvings` retries a
    `NormDriftError` is raised.

    `record` selects stored population columns: None/"all", "qubit", or
    site indices. `deterministic=False` lets the qubit reduction use BLAS,
    whose summation order is not fixed (agreement to ~1e-5 then).
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    policy = step_policy or StepPolicy()
    times = _check_schedule(
        uniform_schedule(t_final, 1.0) if snapshot_schedule is None else snapshot_schedule, t_final
    )
    idx = _resolve_record(instance, record)

    dt = policy.dt
    for attempt in range(policy.max_halvings + 1):
        try:
            return _run_rk4(instance, times, dt, policy.norm_tol, idx, store_amplitudes, deterministic)
        except NormDriftError as exc:
            last = exc
            dt = dt / 2
    raise NormDriftError(
        f"{last}; gave up after {policy.max_halvings} halvings (final dt = {2 * dt:g}); "
        "use a smaller initial step"
    )


def _run_rk4(instance, times, dt, norm_tol, idx, store_amplitudes, deterministic):
    f = _Couplings(instance, deterministic=deterministic)
    gam = f.gammas
    c = initial_state(instance).amplitudes.copy()
    t = 0.0

    k = times.size
    pops = np.empty((k, idx.size))
    norms = np.empty(k)
    bare = np.empty(k)
    total = np.empty(k)
    amps = np.empty((k, c.size), dtype=complex) if store_amplitudes else None
    site_freq = instance.site_frequencies

    for i, target in enumerate(times):
        span = target - t
        if span > 0:
            n = max(1, math.ceil(span / dt - 1e-9))
            h = span / n
            rotor = np.exp(1j * f.detuning * (h / 2))
            t0 = t
            p = f.phases(t0)
            for s in range(n):
                if s and s % _PHASE_REANCHOR == 0:
                    p = f.phases(t0 + s * h)
                ph = p * rotor
                p1 = ph * rotor
                gp0, gph, gp1 = gam * p, gam * ph, gam * p1
                k1 = f(c, p, gp0)
                k2 = f(c + (0.5 * h) * k1, ph, gph)
                k3 = f(c + (0.5 * h) * k2, ph, gph)
                k4 = f(c + h * k3, p1, gp1)
                c = c + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
                p = p1
            t = float(target)
        full = np.abs(c) ** 2
        norms[i] = np.sum(full)
        drift = abs(norms[i] - 1.0)
        if drift > norm_tol:
            raise NormDriftError(f"norm drift {drift:.3e} at t = {t:g} with dt = {dt:g} exceeds {norm_tol:g}")
        pops[i] = full[idx]
        bare[i] = full @ site_freq
        total[i] = bare[i] + _interaction_energy(instance, c, f.phases(t))
        if amps is not None:
            amps[i] = c

    return Trajectory(
        times=times,
        populations=pops,
        indices=idx,
        norms=norms,
        bare_energies=bare,
        energies=total,
        amplitudes=amps,
        picture=INTERACTION,
        method="ode",
        seed=instance.seed,
        step=dt,
        n_sites=instance.n_spins + 1,
    )


@dataclass(frozen=True, eq=False)
class EigenmodeDecomposition:
    """Normal modes of the single-excitation Hamiltonian.

    `unitary` maps site amplitudes to mode amplitudes, so that
    unitary @ H @ unitary^dagger = diag(frequencies).
    """

    frequencies: np.ndarray
    unitary: np.ndarray
    n_sites: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_sites", self.frequencies.size)

    def diagonalized(self, matrix: np.ndarray) -> np.ndarray:
        u = self.unitary
        return u @ matrix @ np.conj(u).T


def diagonalize_model(instance: SpinBathInstance) -> EigenmodeDecomposition:
    n = instance.n_spins
    if n > MAX_DENSE_MODES:
        raise MemoryError(f"dense eigensolve refused for N = {n} > {MAX_DENSE_MODES}")
    vals, vecs = np.linalg.eigh(instance.hamiltonian_matrix())
    return EigenmodeDecomposition(frequencies=vals, unitary=np.ascontiguousarray(vecs.T))


def eigenmode_propagate(
    instance: SpinBathInstance,
    decomposition: Optional[EigenmodeDecomposition],
    times: Sequence[float],
    *,
    record=None,
    store_amplitudes: bool = False,
    chunk: int = 256,
) -> Trajectory:
    """C(t) = U^dagger exp(-i f t) U C(0) in the Schroedinger picture.

    Snapshots are processed in blocks of `chunk` so each block is a pair of
    real matrix products. Stored amplitudes stay in the Schroedinger picture.
    """
    if decomposition is None:
        decomposition = diagonalize_model(instance)
    n1 = instance.n_spins + 1
    if decomposition.n_sites != n1:
        raise ValueError("decomposition does not belong to this instance")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    idx = _resolve_record(instance, record)

    u = decomposition.unitary
    f = decomposition.frequencies
    real_u = not np.iscomplexobj(u)
    ut = np.conj(u).T
    w = u[:, 0]  # mode amplitudes of the initial state
    site_freq = instance.site_frequencies
    gam = np.asarray(instance.gammas)
    kap = instance.kappas

    k = times.size
    pops = np.empty((k, idx.size))
    norms = np.empty(k)
    bare = np.empty(k)
    total = np.empty(k)
    amps = np.empty((k, n1), dtype=complex) if store_amplitudes else None

    for start in range(0, k, chunk):
        sl = slice(start, min(start + chunk, k))
        a = np.exp(-1j * np.outer(f, times[sl])) * w[:, None]
        if real_u:
            re = ut @ np.ascontiguousarray(a.real)
            im = ut @ np.ascontiguousarray(a.imag)
        else:
            c = ut @ a
            re, im = c.real, c.imag
        full = re * re + im * im  # (n1, block)
        norms[sl] = full.sum(axis=0)
        bare[sl] = site_freq @ full
        # <V> = 2 Re(conj(c0) gamma.c) + c^dagger K c, done on real parts
        v = 2.0 * (re[0] * (gam @ re[1:]) + im[0] * (gam @ im[1:]))
        if kap is not None:
            v += np.einsum("ij,ij->j", re[1:], kap @ re[1:]) + np.einsum("ij,ij->j", im[1:], kap @ im[1:])
        total[sl] = bare[sl] + v
        pops[sl] = full[idx].T
        if amps is not None:
            amps[sl] = (re + 1j * im).T

    return Trajectory(
        times=times,
        populations=pops,
        indices=idx,
        norms=norms,
        bare_energies=bare,
        energies=total,
        amplitudes=amps,
        picture=SCHROEDINGER,
        method="eigenmode",
        seed=instance.seed,
        step=None,
        n_sites=n1,
    )
