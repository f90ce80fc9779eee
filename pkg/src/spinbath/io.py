"""Plot-ready CSV files. Frequencies are in units of Omega, times in 1/Omega.

Trajectory layouts:
    wide  t, pop_qubit, pop_spin_0001, ...
    long  t, index, omega, population      (index 0 is the qubit)
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exact import Trajectory

__all__ = ["fmt", "write_table", "write_trajectory_csv", "read_trajectory_csv", "read_overlay_csv", "WIDE_LIMIT"]

# "auto" switches to the long layout above this many spins
WIDE_LIMIT = 100


def fmt(x) -> str:
    """Shortest round-trip text for a number; stable across runs."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _spin_label(j, width):
    return f"pop_spin_{j:0{width}d}"


def write_trajectory_csv(path, trajectory: Trajectory, site_frequencies, layout: str = "auto", every: int = 1) -> Path:
    """Write every `every`-th snapshot (the last one is always kept)."""
    keep = np.arange(0, trajectory.times.size, every)
    if keep[-1] != trajectory.times.size - 1:
        keep = np.append(keep, trajectory.times.size - 1)
    n_spins = trajectory.n_sites - 1
    if layout == "auto":
        layout = "long" if n_spins > WIDE_LIMIT else "wide"
    idx = trajectory.indices
    freqs = np.asarray(site_frequencies)

    if layout == "wide":
        width = max(4, len(str(n_spins)))
        header = ["t"] + ["pop_qubit" if i == 0 else _spin_label(i, width) for i in idx]
        rows = ([trajectory.times[k], *trajectory.populations[k]] for k in keep)
        return write_table(path, header, rows)
    if layout != "long":
        raise ValueError(f"unknown layout {layout!r}")

    def rows():
        for k in keep:
            t = trajectory.times[k]
            for i, p in zip(idx, trajectory.populations[k]):
                yield (t, int(i), freqs[i], p)

    return write_table(path, ["t", "index", "omega", "population"], rows())


def read_trajectory_csv(path) -> Trajectory:
    """Load either trajectory layout back into a `Trajectory` (populations only)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [row for row in reader if row]
    if header[:4] == ["t", "index", "omega", "population"]:
        data = np.array(body, dtype=float)
        times, inv = np.unique(data[:, 0], return_inverse=True)
        sites = np.unique(data[:, 1].astype(int))
        col = np.searchsorted(sites, data[:, 1].astype(int))
        pops = np.full((times.size, sites.size), np.nan)
        pops[inv, col] = data[:, 3]
        indices = sites
    elif header and header[0] == "t" and all(h == "pop_qubit" or h.startswith("pop_spin_") for h in header[1:]):
        data = np.array(body, dtype=float).reshape(len(body), len(header))
        times, pops = data[:, 0], data[:, 1:]
        indices = np.array([0 if h == "pop_qubit" else int(h.rsplit("_", 1)[1]) for h in header[1:]])
    else:
        raise ValueError(f"{path}: not a trajectory CSV (header {header[:4]})")
    return Trajectory(
        times=times,
        populations=pops,
        indices=indices,
        norms=np.full(times.size, np.nan),
        method=f"csv:{path.name}",
    )


def read_overlay_csv(path, column: str) -> Trajectory:
    """Turn one analytic column of an overlay CSV into a qubit-only trajectory."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "t" not in reader.fieldnames or column not in reader.fieldnames:
            raise ValueError(f"{path}: needs columns 't' and {column!r}")
        rows = [(float(r["t"]), float(r[column])) for r in reader]
    data = np.array(rows)
    return Trajectory(
        times=data[:, 0],
        populations=data[:, 1:2],
        indices=[0],
        norms=np.full(len(rows), np.nan),
        method=f"overlay:{column}",
    )
