"""Energy and momentum bookkeeping, CSV output and drift statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .errors import StatisticsError
from .potentials import ContactParams, PairSet, family_energy
from .state import State, kinetic_energy, total_momentum

MIN_DRIFT_SAMPLES = 100


@dataclass
class Snapshot:
    t: float
    E_kin: float
    E_mat: float
    E_pen: float
    E_total: float
    p: np.ndarray
    min_gap: float


def penalty_energy(state: State, pairset: PairSet, contact: ContactParams,
                   distances: Optional[np.ndarray] = None) -> float:
    """Energy of the whole layer family over all pairs.

    Each pair's restitution factor is taken from its current normal
    velocity, as in the force evaluation.
    """
    if distances is None:
        distances = pairset.distances(state.q)
    total = 0.0
    for row in np.flatnonzero(distances < 2.0 * contact.eta):
        pair = pairset.pairs[row]
        s = contact.e if pair.separating(state) else 1.0
        total += family_energy(float(distances[row]), contact.eta, contact.k, s)
    return total


def snapshot(state: State, potentials: Sequence, t: float,
             pairset: Optional[PairSet] = None,
             contact: Optional[ContactParams] = None) -> Snapshot:
    e_kin = kinetic_energy(state)
    e_mat = float(sum(pot.energy(state) for pot in potentials))
    e_pen = 0.0
    min_gap = math.inf
    if pairset is not None and len(pairset):
        d = pairset.distances(state.q)
        min_gap = float(d.min())
        if contact is not None:
            e_pen = penalty_energy(state, pairset, contact, d)
    return Snapshot(t=float(t), E_kin=e_kin, E_mat=e_mat, E_pen=e_pen,
                    E_total=e_kin + e_mat + e_pen, p=total_momentum(state), min_gap=min_gap)


def drift_slope(series: Iterable) -> float:
    """Least-squares slope of total energy against time.

    ``series`` holds ``(t, E_total)`` pairs or :class:`Snapshot` objects.
    """
    rows = [(s.t, s.E_total) if isinstance(s, Snapshot) else tuple(s) for s in series]
    if len(rows) < MIN_DRIFT_SAMPLES:
        raise StatisticsError(
            f"drift slope needs at least {MIN_DRIFT_SAMPLES} samples, got {len(rows)}")
    t, e = np.array(rows, dtype=float).T
    tc = t - t.mean()
    return float(np.dot(tc, e - e.mean()) / np.dot(tc, tc))


def csv_header(dim: int) -> str:
    momentum = ["px", "py", "pz"][:dim]
    return ",".join(["t", "E_kin", "E_mat", "E_pen", "E_total", *momentum, "min_gap"])


def _fmt(x: float) -> str:
    return "%.17g" % x


def csv_row(snap: Snapshot) -> str:
    values = [snap.t, snap.E_kin, snap.E_mat, snap.E_pen, snap.E_total, *snap.p, snap.min_gap]
    return ",".join(_fmt(float(v)) for v in values)


class CsvWriter:
    """Streams snapshots to a text file in the diagnostics CSV layout."""

    def __init__(self, out: TextIO, dim: int):
        self.out = out
        out.write(csv_header(dim) + "\n")

    def __call__(self, snap: Snapshot):
        self.out.write(csv_row(snap) + "\n")


def read_csv(path) -> dict:
    """Load a diagnostics CSV into a dict of column arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}
