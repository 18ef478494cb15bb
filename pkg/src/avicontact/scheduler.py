"""Event-driven asynchronous integration with certificate-guarded penalty layers.

Every potential fires at exact integer multiples of its own step. Between
events all bodies drift linearly; a force event kicks the velocities of its
stencil. Penalty layers live on the queue only while they may exert force:
a separating slab certificate guards the first inactive layer of every
pair, and its expiry activates that layer.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import diagnostics
from .certificates import CertificateTable, find_certificate, schedule
from ._kernels import penalty_event
from .errors import (ClockRegressionError, ConfigurationError, DegenerateGeometryError,
                     NumericError, SimulationError)
from .potentials import (ContactPair, ContactParams, PairSet, PenaltyLayer, Potential,
                         friction_impulse)
from .state import State, drift, kick

log = logging.getLogger(__name__)

FORCE, CERTIFICATE, SNAPSHOT = 0, 1, 2
KIND_NAMES = {FORCE: "force", CERTIFICATE: "certificate", SNAPSHOT: "snapshot"}

# candidate event times closer than this (relative) to "now" count as "now"
_TIME_EPS = 1e-12


@dataclass(eq=False)
class Event:
    kind: int
    t: float
    seq: int
    potential: Optional[Potential] = None
    step: int = 0
    origin: float = 0.0
    row: int = -1
    guard: int = 0

    @property
    def key(self):
        return (self.t, self.kind, self.seq)

    @property
    def h(self):
        return None if self.potential is None else self.potential.h

    def __repr__(self):
        what = KIND_NAMES[self.kind]
        if self.kind == FORCE:
            what += f" {self.potential.kind}#{self.potential.id}"
            if isinstance(self.potential, PenaltyLayer):
                what += f" l={self.potential.l}"
        elif self.kind == CERTIFICATE:
            what += f" row={self.row} guard={self.guard}"
        return f"<Event {what} t={self.t!r} seq={self.seq}>"


def next_aligned_step(t_now: float, h: float, clock_origin: float = 0.0) -> int:
    """Smallest integer ``n`` with ``clock_origin + n*h`` strictly after ``t_now``."""
    if not (h > 0):
        raise ConfigurationError("time step must be positive")
    eps = _TIME_EPS * max(1.0, abs(t_now))
    n = math.floor((t_now - clock_origin) / h) + 1
    while clock_origin + (n - 1) * h > t_now + eps:
        n -= 1
    while clock_origin + n * h <= t_now + eps:
        n += 1
    return n


def next_aligned_time(t_now: float, h: float, clock_origin: float = 0.0) -> float:
    return clock_origin + next_aligned_step(t_now, h, clock_origin) * h


def broken_clock_next_time(t_activation: float, h: float, broken_clocks: bool = False) -> float:
    """First firing time of a layer when clock alignment is deliberately ignored.

    Only exists to reproduce the energy growth caused by restarting a
    potential's clock at its activation instant.
    """
    if not broken_clocks:
        raise ConfigurationError("broken-clock scheduling requires the broken_clocks flag")
    return t_activation


class EventQueue:
    """Priority queue over force, certificate and snapshot events.

    Force and snapshot events sit in a binary heap. Certificates live in a
    :class:`CertificateTable` so their expiries can be rescheduled in bulk;
    ``pop`` merges both sources under the total order ``(t, kind, seq)``.
    """

    def __init__(self, table: Optional[CertificateTable] = None):
        self._heap = []
        self._counter = itertools.count()
        self.table = table

    def __len__(self):
        return len(self._heap) + (len(self.table) if self.table is not None else 0)

    def next_seq(self) -> int:
        return next(self._counter)

    def reserve(self, count: int) -> int:
        """Reserve ``count`` consecutive sequence numbers and return the first."""
        first = next(self._counter)
        if count > 1:
            self._counter = itertools.count(first + count)
        return first

    def push(self, event: Event) -> Event:
        heapq.heappush(self._heap, (event.t, event.kind, event.seq, event))
        return event

    def push_force(self, potential: Potential, step: int, origin: float = 0.0) -> Event:
        t = origin + step * potential.h
        return self.push(Event(FORCE, t, self.next_seq(), potential, step, origin))

    def set_certificate(self, row: int, slab, guard: int, t_c: float):
        self.table.install(row, slab, guard, t_c, self.next_seq())

    def _certificate_event(self, row: int) -> Event:
        tab = self.table
        return Event(CERTIFICATE, float(tab.expiry[row]), int(tab.seq[row]),
                     row=row, guard=int(tab.guard[row]))

    def _head(self):
        row = self.table.earliest() if self.table is not None else None
        if not self._heap:
            return None if row is None else ("cert", row)
        if row is None:
            return ("heap", None)
        top = self._heap[0]
        cert_key = (self.table.expiry[row], CERTIFICATE, self.table.seq[row])
        if cert_key < top[:3]:
            return ("cert", row)
        return ("heap", None)

    def peek(self) -> Optional[Event]:
        head = self._head()
        if head is None:
            return None
        if head[0] == "cert":
            return self._certificate_event(head[1])
        return self._heap[0][3]

    def pop(self) -> Optional[Event]:
        head = self._head()
        if head is None:
            return None
        if head[0] == "cert":
            ev = self._certificate_event(head[1])
            self.table.remove(head[1])
            return ev
        return heapq.heappop(self._heap)[3]

    def events(self) -> List[Event]:
        """Snapshot of every queued event in pop order."""
        out = [entry[3] for entry in self._heap]
        if self.table is not None:
            out.extend(self._certificate_event(int(r)) for r in np.flatnonzero(self.table.live))
        return sorted(out, key=lambda ev: ev.key)


class Simulation:
    """One run of the asynchronous contact integrator.

    ``potentials`` are the material forces (gravity, springs); contact is
    handled for every entry of ``pairs`` with the shared ``contact``
    parameters. Snapshots are taken at every multiple of ``logdt`` from
    ``t = 0`` up to ``duration``.
    """

    def __init__(self, state: State, potentials: Sequence[Potential] = (),
                 pairs: Sequence[ContactPair] = (), contact: Optional[ContactParams] = None,
                 duration: float = 1.0, logdt: float = 0.1, broken_clocks: bool = False,
                 on_snapshot: Optional[Callable] = None):
        if not (duration > 0):
            raise ConfigurationError("duration must be positive")
        if not (logdt > 0):
            raise ConfigurationError("logdt must be positive")
        if pairs and contact is None:
            raise ConfigurationError("contact pairs need contact parameters")
        self.state = state
        self.materials = list(potentials)
        for i, pot in enumerate(self.materials):
            pot.id = i
        self._pids = itertools.count(len(self.materials))
        self.contact = contact
        self.pairset = PairSet(pairs, len(state.bodies), state.dim)
        self.table = CertificateTable(self.pairset)
        self.queue = EventQueue(self.table)
        self.layers = [dict() for _ in self.pairset.pairs]
        self.duration = float(duration)
        self.logdt = float(logdt)
        self.broken_clocks = broken_clocks
        self.on_snapshot = on_snapshot
        self.snapshots: List[diagnostics.Snapshot] = []
        self.counts = Counter()
        self.h1 = None
        self.too_near = 0.0
        if len(self.pairset):
            m_free = state.mass[state.free]
            m_min = float(m_free.min()) if len(m_free) else 1.0
            self.h1 = contact.base_step(m_min)
            # broken-clock runs activate layers at the exact crossing instant
            self.too_near = 0.0 if broken_clocks else 4.0 * self.h1
        self._rows_cache = {}
        self._normal = np.zeros(state.dim)
        self._free = state.free
        self._n_snapshots = int(math.floor(self.duration / self.logdt + 1e-9))
        self._started = False
        self.finished = False

    # -- setup -------------------------------------------------------------

    def start(self):
        if self._started:
            return
        self._started = True
        st = self.state
        self._push_snapshot(0)
        for pot in self.materials:
            self.queue.push_force(pot, next_aligned_step(st.t, pot.h))
        for row in range(len(self.pairset)):
            self._guard(row, 1, st.t)

    # -- main loop ---------------------------------------------------------

    def run(self) -> List[diagnostics.Snapshot]:
        while self.step() is not None:
            pass
        return self.snapshots

    def step(self) -> Optional[Event]:
        """Process the next event; returns it, or ``None`` once the run is over."""
        if not self._started:
            self.start()
        if self.finished:
            return None
        queue, st = self.queue, self.state
        while True:
            ev = queue.peek()
            if ev is None:
                if self._snapshots_done:
                    self._finish()
                    return None
                raise SimulationError("event queue ran empty before the end of the run")
            if ev.t > self.duration:
                self._finish()
                return None
            queue.pop()
            if ev.kind == CERTIFICATE and ev.t >= self.duration:
                # expiring at the horizon: nothing left to guard
                continue
            break
        if ev.t < st.t:
            raise ClockRegressionError(f"{ev!r} popped at T_g={st.t!r}")
        drift(st, ev.t)
        if ev.kind == FORCE:
            self.handle_force_event(ev)
        elif ev.kind == CERTIFICATE:
            self.handle_certificate_event(ev)
        else:
            self._handle_snapshot(ev)
        st.t = ev.t
        return ev

    def _finish(self):
        drift(self.state, self.duration)
        self.state.t = self.duration
        self.finished = True

    # -- force events ------------------------------------------------------

    def handle_force_event(self, ev: Event):
        pot = ev.potential
        self.counts["force"] += 1
        if isinstance(pot, PenaltyLayer):
            self._handle_penalty(ev, pot)
            return
        st = self.state
        kick(st, pot.stencil, pot.gradient(st), pot.h)
        self._reschedule(self._material_rows(pot), ev.t)
        self._repush(ev)

    def _handle_penalty(self, ev: Event, layer: PenaltyLayer):
        st = self.state
        pair = layer.pair
        row = self.pairset.index[pair.key]
        n = self._normal
        g, vn, dv_dg = penalty_event(st.q, st.qdot, st.inv_mass, pair.ia, pair.ib,
                                     pair.radius_sum, pair.plane, self.pairset.normal[row],
                                     2.0 * layer.thickness, layer.stiffness, layer.e,
                                     layer.h, n)
        if math.isnan(g):
            raise DegenerateGeometryError(
                f"coincident centers for bodies {pair.a.id} and {pair.b.id}")
        if g < 0:
            if not math.isfinite(dv_dg):
                raise NumericError(f"non-finite penalty force on bodies {pair.bodies}")
            if layer.mu > 0:
                self._friction(layer, n.copy(), -layer.h * dv_dg)
            self.counts["penalty_kick"] += 1
            self._reschedule(self._pair_rows(row), ev.t)
            self._repush(ev)
            return
        layers = self.layers[row]
        # only the deepest layer retires, so active layers stay 1..n
        if vn > 0 and layer.l == max(layers):
            slab = find_certificate(pair.a, pair.b, st, layer.thickness, pair=pair)
            if slab is not None:
                t_c = schedule(slab, st, self.duration, now=ev.t)
                if t_c > ev.t:
                    self.queue.set_certificate(row, slab, layer.l, t_c)
                    del layers[layer.l]
                    self.counts["retired"] += 1
                    return
        self._repush(ev)

    def _friction(self, layer: PenaltyLayer, n, normal_impulse: float):
        st = self.state
        pair = layer.pair
        v_rel = st.qdot[pair.ia] - st.qdot[pair.ib]
        v_t = v_rel - np.dot(v_rel, n) * n
        w_sum = st.inv_mass[pair.ia] + st.inv_mass[pair.ib]
        impulse = friction_impulse(normal_impulse, v_t, layer.mu, w_sum)
        kick(st, [pair.ia, pair.ib], np.array([-impulse, impulse]), 1.0)

    def _repush(self, ev: Event):
        self.queue.push_force(ev.potential, ev.step + 1, ev.origin)

    # -- certificates ------------------------------------------------------

    def handle_certificate_event(self, ev: Event):
        self.counts["certificate"] += 1
        row = ev.row
        guard = len(self.layers[row]) + 1
        if self._refresh(row, guard, ev.t):
            return
        self._activate(row, guard, ev.t)
        self._guard(row, guard + 1, ev.t)

    def add_certificate(self, row: int, guard: int, now: float, min_lead: float = 0.0) -> bool:
        """Look for a slab guarding layer ``guard`` of pair ``row`` and queue it.

        A slab whose expiry comes less than ``min_lead`` after ``now`` (and
        before the end of the run) is refused.
        """
        pair = self.pairset.pairs[row]
        eta = self.contact.eta
        slab = find_certificate(pair.a, pair.b, self.state, eta / guard, pair=pair)
        if slab is None:
            return False
        t_c = schedule(slab, self.state, self.duration, now=now)
        if not (t_c > now):
            return False
        if t_c < self.duration and t_c - now < min_lead:
            return False
        self.queue.set_certificate(row, slab, guard, t_c)
        return True

    def _refresh(self, row, guard, now):
        return self.add_certificate(row, guard, now, self.too_near)

    def _guard(self, row: int, layer: int, now: float):
        # activate layers until a slab for the next one exists
        if now >= self.duration:
            return
        while not self.add_certificate(row, layer, now):
            self._activate(row, layer, now)
            layer += 1

    def _activate(self, row: int, l: int, now: float):
        c = self.contact
        pair = self.pairset.pairs[row]
        layer = PenaltyLayer(pair, l, c.eta, c.k, self.h1, c.e, c.mu, pid=next(self._pids))
        if self.broken_clocks:
            broken_clock_next_time(now, layer.h, True)
            self.queue.push_force(layer, 0, now)
        else:
            self.queue.push_force(layer, next_aligned_step(now, layer.h))
        self.layers[row][l] = layer
        self.counts["activated"] += 1

    def _reschedule(self, rows, now):
        if len(rows) == 0:
            return
        st = self.state
        first = self.queue.reserve(len(rows))
        self.table.reschedule(rows, st.q, st.qdot, now, self.duration, first)

    def reschedule_on_velocity_change(self, bodies, now: Optional[float] = None):
        """Recompute certificate expiries for pairs involving ``bodies``."""
        bodies = [b for b in bodies if self._free[b]]
        if not bodies:
            return
        rows = np.unique(self.pairset.rows_touching(bodies))
        self._reschedule(rows, self.state.t if now is None else now)

    def _material_rows(self, pot):
        rows = self._rows_cache.get(pot.id)
        if rows is None:
            bodies = [b for b in pot.stencil.tolist() if self._free[b]]
            rows = (np.unique(self.pairset.rows_touching(bodies)) if bodies
                    else np.zeros(0, dtype=np.intp))
            self._rows_cache[pot.id] = rows
        return rows

    def _pair_rows(self, row):
        key = ("pair", row)
        rows = self._rows_cache.get(key)
        if rows is None:
            pair = self.pairset.pairs[row]
            bodies = [b for b in (pair.ia, pair.ib) if self._free[b]]
            rows = np.unique(self.pairset.rows_touching(bodies))
            self._rows_cache[key] = rows
        return rows

    # -- diagnostics -------------------------------------------------------

    def _snapshot_time(self, n):
        t = n * self.logdt
        if n == self._n_snapshots or abs(t - self.duration) <= 1e-9 * self.duration:
            return min(t, self.duration)
        return t

    @property
    def _snapshots_done(self):
        return len(self.snapshots) > self._n_snapshots

    def _push_snapshot(self, n):
        if n > self._n_snapshots:
            return
        self.queue.push(Event(SNAPSHOT, self._snapshot_time(n), self.queue.next_seq(), step=n))

    def _handle_snapshot(self, ev: Event):
        snap = diagnostics.snapshot(self.state, self.materials, ev.t, self.pairset, self.contact)
        self.snapshots.append(snap)
        if self.on_snapshot is not None:
            self.on_snapshot(snap)
        self._push_snapshot(ev.step + 1)

    def active_layers(self, row: int):
        return sorted(self.layers[row])


def run(sim: Simulation) -> List[diagnostics.Snapshot]:
    return sim.run()
