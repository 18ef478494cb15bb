"""Bodies, configuration state and the drift/kick primitives."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ClockRegressionError, ConfigurationError, NumericError

FIXED = math.inf


class BodyKind(str, enum.Enum):
    PARTICLE = "particle"
    DISC = "disc"
    HALFPLANE = "halfplane"


@dataclass
class Body:
    """A contact primitive.

    Particles and discs (spheres in 3D) are balls of ``radius`` about their
    position. A halfplane is the region behind ``normal`` through its
    position; halfplanes are always fixed.
    """

    id: int
    kind: BodyKind
    radius: float = 0.0
    mass: float = 1.0
    normal: Optional[np.ndarray] = None
    index: int = field(default=-1, compare=False)

    def __post_init__(self):
        self.kind = BodyKind(self.kind)
        if self.radius < 0:
            raise ConfigurationError(f"body {self.id}: radius must be >= 0")
        if self.kind is BodyKind.PARTICLE and self.radius != 0:
            raise ConfigurationError(f"body {self.id}: particles have radius 0")
        if self.kind is BodyKind.HALFPLANE:
            if self.normal is None:
                raise ConfigurationError(f"halfplane {self.id} needs a normal")
            n = np.asarray(self.normal, dtype=float)
            length = np.linalg.norm(n)
            if length == 0 or not np.isfinite(length):
                raise ConfigurationError(f"halfplane {self.id}: bad normal")
            self.normal = n / length
            if self.mass != FIXED:
                raise ConfigurationError(f"halfplane {self.id} must be fixed")
        if not (self.mass > 0):
            raise ConfigurationError(f"body {self.id}: mass must be positive or fixed")

    @property
    def fixed(self) -> bool:
        return self.mass == FIXED

    @property
    def is_halfplane(self) -> bool:
        return self.kind is BodyKind.HALFPLANE


class State:
    """Positions, velocities and lumped masses of all bodies plus the clock.

    ``q`` and ``qdot`` have shape ``(N, dim)``. Fixed bodies carry an
    inverse mass of zero, so kicks never move them.
    """

    def __init__(self, bodies: Sequence[Body], q, qdot=None, t=0.0):
        self.bodies = list(bodies)
        self.q = np.array(q, dtype=float)
        if self.q.ndim != 2 or self.q.shape[0] != len(self.bodies):
            raise ConfigurationError("q must have shape (n_bodies, dim)")
        self.dim = self.q.shape[1]
        if self.dim not in (2, 3):
            raise ConfigurationError("dimension must be 2 or 3")
        if qdot is None:
            qdot = np.zeros_like(self.q)
        self.qdot = np.array(qdot, dtype=float)
        if self.qdot.shape != self.q.shape:
            raise ConfigurationError("qdot must match q in shape")
        self.mass = np.array([b.mass for b in self.bodies], dtype=float)
        self.inv_mass = np.where(np.isinf(self.mass), 0.0, 1.0 / self.mass)
        self.free = self.inv_mass > 0
        for i, b in enumerate(self.bodies):
            b.index = i
            if b.is_halfplane and len(b.normal) != self.dim:
                raise ConfigurationError(f"halfplane {b.id}: normal has wrong dimension")
        if np.any(self.qdot[~self.free] != 0):
            raise ConfigurationError("fixed bodies must be stationary")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise NumericError("initial state is not finite")
        self.t = float(t)

    def copy(self) -> "State":
        other = object.__new__(State)
        other.__dict__.update(self.__dict__)
        other.q = self.q.copy()
        other.qdot = self.qdot.copy()
        return other


def drift(state: State, t_target: float) -> State:
    """Advance positions along the current velocities up to ``t_target``.

    The clock itself is left alone; the scheduler sets it after the event
    has been handled.
    """
    dt = t_target - state.t
    if dt < 0:
        raise ClockRegressionError(
            f"drift to t={t_target!r} requested at T_g={state.t!r}")
    if dt > 0:
        # fixed bodies have zero velocity, so the bulk update leaves them put
        state.q += dt * state.qdot
    return state


def kick(state: State, stencil, gradient, h: float) -> State:
    """Apply ``qdot -= h M^-1 gradient`` on the stencil bodies."""
    stencil = np.asarray(stencil, dtype=np.intp)
    gradient = np.asarray(gradient, dtype=float).reshape(len(stencil), state.dim)
    if not np.all(np.isfinite(gradient)):
        raise NumericError(f"non-finite gradient on bodies {stencil.tolist()}")
    state.qdot[stencil] -= h * state.inv_mass[stencil, None] * gradient
    return state


def kinetic_energy(state: State) -> float:
    m = state.mass[state.free]
    v = state.qdot[state.free]
    return float(0.5 * np.sum(m * np.einsum("ij,ij->i", v, v)))


def total_momentum(state: State) -> np.ndarray:
    return (state.mass[state.free, None] * state.qdot[state.free]).sum(axis=0)
