"""Separating-slab certificates.

A slab of half-thickness ``h`` with unit normal ``w`` through ``p`` certifies
that the guarded layer (thickness ``h``) of a pair is inactive as long as the
ball ``a`` stays on the ``+w`` side beyond ``h`` and body ``b`` on the ``-w``
side beyond ``-h``. Under constant velocities the time one of the bodies
reaches its face is a linear crossing, which :func:`schedule` returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateGeometryError
from ._kernels import reschedule_rows
from .potentials import ContactPair, PairSet
from .state import Body, State


@dataclass
class SeparatingSlab:
    w: np.ndarray
    p: np.ndarray
    half_thickness: float
    pair: ContactPair
    t_c: float = math.inf
    # +1 when the caller's first body sits on the +w side
    side_of_A: int = 1


def _slab_for_pair(pair: ContactPair, q, half: float) -> Optional[tuple]:
    try:
        d, n = pair.separation(q)
    except DegenerateGeometryError:
        return None
    if d < 2.0 * half:
        return None
    if pair.plane:
        return n, q[pair.ib] + half * n
    # midplane of the surface gap: equal clearance on both faces
    return n, q[pair.ib] + (pair.b.radius + 0.5 * d) * n


def find_certificate(A: Body, B: Body, state: State, half_thickness: float,
                     pair: Optional[ContactPair] = None) -> Optional[SeparatingSlab]:
    """Build a slab separating ``A`` and ``B``, or ``None`` if none fits.

    The expiry is left at infinity; see :func:`schedule`.
    """
    if pair is None:
        pair = ContactPair(A, B)
    found = _slab_for_pair(pair, state.q, half_thickness)
    if found is None:
        return None
    w, p = found
    return SeparatingSlab(w=np.array(w, dtype=float), p=np.array(p, dtype=float),
                          half_thickness=float(half_thickness), pair=pair,
                          side_of_A=-1 if pair.swapped else 1)


def _crossing(clearance, rate):
    # time until a face is reached when the clearance shrinks at -rate
    if rate >= 0.0:
        return math.inf
    return max(clearance, 0.0) / -rate


def schedule(slab: SeparatingSlab, state: State, cap: float = math.inf,
             now: Optional[float] = None) -> float:
    """Earliest time either body touches its slab face under linear motion.

    ``now`` is the time the current positions belong to; it defaults to the
    state's clock. Receding pairs get ``cap``.
    """
    if now is None:
        now = state.t
    pair = slab.pair
    w, p, half = slab.w, slab.p, slab.half_thickness
    xa, va = state.q[pair.ia], state.qdot[pair.ia]
    ta = _crossing(float(np.dot(xa - p, w)) - half - pair.a.radius,
                   float(np.dot(va, w)))
    if pair.plane:
        tb = math.inf
    else:
        xb, vb = state.q[pair.ib], state.qdot[pair.ib]
        tb = _crossing(-float(np.dot(xb - p, w)) - half - pair.b.radius,
                       -float(np.dot(vb, w)))
    return min(now + min(ta, tb), cap)


class CertificateTable:
    """Slabs for every contact pair stored column-wise.

    Row ``i`` holds at most one slab for ``pairs[i]``. ``expiry`` is
    infinite for rows without a slab, so the earliest live certificate is an
    ``argmin`` away; ``seq`` carries the creation counter used to break ties.
    """

    def __init__(self, pairset: PairSet):
        self.pairset = pairset
        self.pairs = pairset.pairs
        count = len(self.pairs)
        dim = pairset.normal.shape[1]
        self.ia, self.ib = pairset.ia, pairset.ib
        self.ra, self.rb, self.plane = pairset.ra, pairset.rb, pairset.plane
        self.w = np.zeros((count, dim))
        self.p = np.zeros((count, dim))
        self.half = np.zeros(count)
        # face offsets along w: a is clear while q_a.w > off_a, b while q_b.w < off_b
        self.off_a = np.zeros(count)
        self.off_b = np.zeros(count)
        self.expiry = np.full(count, math.inf)
        self.seq = np.zeros(count, dtype=np.int64)
        self.live = np.zeros(count, dtype=bool)
        self.guard = np.zeros(count, dtype=np.int64)
        # cached earliest row; -1 means it must be recomputed
        self._min = -1

    def __len__(self):
        return int(np.count_nonzero(self.live))

    def install(self, row: int, slab: SeparatingSlab, guard: int, t_c: float, seq: int):
        self.w[row] = slab.w
        self.p[row] = slab.p
        self.half[row] = slab.half_thickness
        pw = float(np.dot(slab.p, slab.w))
        self.off_a[row] = pw + slab.half_thickness + self.ra[row]
        self.off_b[row] = pw - slab.half_thickness - self.rb[row]
        self.guard[row] = guard
        self.expiry[row] = t_c
        self.seq[row] = seq
        self.live[row] = True
        if row == self._min:
            self._min = -1
        self._offer(row)

    def remove(self, row: int):
        self.live[row] = False
        self.expiry[row] = math.inf
        if row == self._min:
            self._min = -1

    def slab(self, row: int) -> SeparatingSlab:
        pr = self.pairs[row]
        return SeparatingSlab(self.w[row].copy(), self.p[row].copy(), float(self.half[row]),
                              pr, float(self.expiry[row]), -1 if pr.swapped else 1)

    def schedule_rows(self, rows, q, qdot, now: float, cap: float) -> np.ndarray:
        """Vectorized :func:`schedule` over the given rows."""
        w = self.w[rows]
        ia, ib = self.ia[rows], self.ib[rows]
        clear_a = (q[ia] * w).sum(1) - self.off_a[rows]
        rate_a = (qdot[ia] * w).sum(1)
        clear_b = self.off_b[rows] - (q[ib] * w).sum(1)
        rate_b = (qdot[ib] * w).sum(1)
        rate_b[self.plane[rows]] = 0.0
        np.maximum(clear_a, 0.0, out=clear_a)
        np.maximum(clear_b, 0.0, out=clear_b)
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = np.where(rate_a < 0, clear_a / -rate_a, math.inf)
            tb = np.where(rate_b > 0, clear_b / rate_b, math.inf)
        return np.minimum(now + np.minimum(ta, tb), cap)

    def reschedule(self, rows, q, qdot, now: float, cap: float, next_seq: int) -> int:
        """Recompute expiries of the live rows among ``rows``; returns the new seq counter."""
        next_seq, self._min = reschedule_rows(
            rows, self.live, self.ia, self.ib, self.plane, self.w, self.off_a, self.off_b,
            q, qdot, float(now), float(cap), self.expiry, self.seq, next_seq, self._min)
        return next_seq

    def _key(self, row):
        return (self.expiry[row], self.seq[row])

    def _offer(self, row: int):
        if self._min >= 0 and self._key(row) < self._key(self._min):
            self._min = row

    def earliest(self):
        """Row of the least ``(expiry, seq)`` among live certificates, or ``None``."""
        if len(self.expiry) == 0:
            return None
        if self._min < 0:
            row = int(np.argmin(self.expiry))
            t = self.expiry[row]
            if t == math.inf:
                return None
            ties = np.flatnonzero(self.expiry == t)
            if len(ties) > 1:
                row = int(ties[np.argmin(self.seq[ties])])
            self._min = row
        if self.expiry[self._min] == math.inf:
            return None
        return self._min
