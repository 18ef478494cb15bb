"""Material potentials, the contact gap and the nested penalty layers.

A penalty layer ``l`` between two primitives acts on the gap measured at
thickness ``eta / l`` with stiffness ``l**3 * k``; summed over all layers the
barrier diverges as the surfaces meet, so contact can never be lost to
tunneling regardless of ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegenerateGeometryError
from .state import Body, State

DEGENERATE_DISTANCE = 1e-12
TANGENT_SPEED_EPS = 1e-9


@dataclass
class ContactParams:
    """Penalty family parameters shared by all contact pairs of a scene."""

    eta: float
    k: float
    e: float = 1.0
    mu: float = 0.0
    alpha: float = 0.1
    h1: Optional[float] = None

    def __post_init__(self):
        if not (self.eta > 0):
            raise ConfigurationError("eta must be positive")
        if not (self.k > 0):
            raise ConfigurationError("k must be positive")
        if not (0.0 <= self.e <= 1.0):
            raise ConfigurationError("e must lie in [0, 1]")
        if not (self.mu >= 0):
            raise ConfigurationError("mu must be non-negative")
        if self.h1 is None and not (self.alpha > 0):
            raise ConfigurationError("alpha must be positive")
        if self.h1 is not None and not (self.h1 > 0):
            raise ConfigurationError("h1 must be positive")

    def base_step(self, m_min: float) -> float:
        if self.h1 is not None:
            return self.h1
        return base_timestep(self.k, self.eta, m_min, self.alpha)


class ContactPair:
    """Geometry of a primitive pair.

    Internally the ball-like body is ``a``; if the pair involves a
    halfplane it is always ``b``. ``swapped`` records whether that reordered
    the caller's bodies.
    """

    def __init__(self, first: Body, second: Body):
        if first.is_halfplane and second.is_halfplane:
            raise ConfigurationError(
                f"halfplane-halfplane contact ({first.id}, {second.id}) is unsupported")
        self.swapped = first.is_halfplane
        self.a, self.b = (second, first) if self.swapped else (first, second)
        self.plane = self.b.is_halfplane
        self.ia = self.a.index
        self.ib = self.b.index
        self.radius_sum = self.a.radius + (0.0 if self.plane else self.b.radius)
        self.key = (min(first.id, second.id), max(first.id, second.id))

    @property
    def bodies(self):
        return (self.ia, self.ib)

    def separation(self, q):
        """Surface distance and the unit normal pointing from ``b`` to ``a``.

        The normal equals the gradient of the distance with respect to
        ``a``'s position.
        """
        xa = q[self.ia]
        if self.plane:
            n = self.b.normal
            return float(np.dot(xa - q[self.ib], n)) - self.a.radius, n
        delta = xa - q[self.ib]
        dist = math.sqrt(float(np.dot(delta, delta)))
        if dist < DEGENERATE_DISTANCE:
            raise DegenerateGeometryError(
                f"coincident centers for bodies {self.a.id} and {self.b.id}")
        return dist - self.radius_sum, delta / dist

    def normal_velocity(self, state: State, normal=None) -> float:
        """Rate of change of the surface distance; positive when separating."""
        if normal is None:
            normal = self.separation(state.q)[1]
        return float(np.dot(state.qdot[self.ia] - state.qdot[self.ib], normal))

    def separating(self, state: State, normal=None) -> bool:
        return self.normal_velocity(state, normal) > 0.0


class PairSet:
    """Index arrays over a list of :class:`ContactPair` for vectorized queries."""

    def __init__(self, pairs, n_bodies: int, dim: int):
        self.pairs = list(pairs)
        self.ia = np.array([pr.ia for pr in self.pairs], dtype=np.intp)
        self.ib = np.array([pr.ib for pr in self.pairs], dtype=np.intp)
        self.ra = np.array([pr.a.radius for pr in self.pairs], dtype=float)
        self.rb = np.array([0.0 if pr.plane else pr.b.radius for pr in self.pairs])
        self.plane = np.array([pr.plane for pr in self.pairs], dtype=bool)
        self.normal = np.zeros((len(self.pairs), dim))
        for i, pr in enumerate(self.pairs):
            if pr.plane:
                self.normal[i] = pr.b.normal
        members = [[] for _ in range(n_bodies)]
        for i, pr in enumerate(self.pairs):
            members[pr.ia].append(i)
            if not pr.plane:
                members[pr.ib].append(i)
        self.by_body = [np.array(m, dtype=np.intp) for m in members]
        self.index = {pr.key: i for i, pr in enumerate(self.pairs)}

    def __len__(self):
        return len(self.pairs)

    def rows_touching(self, bodies) -> np.ndarray:
        if len(bodies) == 1:
            return self.by_body[bodies[0]]
        return np.concatenate([self.by_body[b] for b in bodies])

    def distances(self, q) -> np.ndarray:
        """Surface distance of every pair."""
        delta = q[self.ia] - q[self.ib]
        center = np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.ra - self.rb
        offset = np.einsum("ij,ij->i", delta, self.normal) - self.ra
        return np.where(self.plane, offset, center)


def gap(A: Body, B: Body, state: State, thickness: float) -> float:
    """Surface distance between ``A`` and ``B`` minus ``2 * thickness``."""
    d, _ = ContactPair(A, B).separation(state.q)
    return d - 2.0 * thickness


def gap_gradient(A: Body, B: Body, state: State, thickness: float) -> np.ndarray:
    """Gradient of :func:`gap` with respect to the positions of ``A`` and ``B``.

    Returns an array of shape ``(2, dim)`` with rows for ``A`` then ``B``.
    For a halfplane the row is the derivative with respect to its anchor
    point, which is never applied since the plane is fixed.
    """
    pair = ContactPair(A, B)
    _, n = pair.separation(state.q)
    grad = np.array([n, -n])
    return grad[::-1].copy() if pair.swapped else grad


class Potential:
    """A force term integrated at its own fixed time step ``h``."""

    kind = "potential"

    def __init__(self, h: float, stencil, pid: int = -1):
        if not (h > 0) or not math.isfinite(h):
            raise ConfigurationError(f"{self.kind} time step must be positive")
        self.h = float(h)
        self.stencil = np.asarray(stencil, dtype=np.intp)
        self.id = pid

    @property
    def support(self):
        return self.stencil

    def energy(self, state: State) -> float:
        raise NotImplementedError

    def gradient(self, state: State) -> np.ndarray:
        raise NotImplementedError


class Gravity(Potential):
    """Uniform field ``g`` acting on every free body: ``V = -sum m g.x``."""

    kind = "gravity"

    def __init__(self, g, h: float, state: State, pid: int = -1):
        super().__init__(h, np.flatnonzero(state.free), pid)
        self.g = np.asarray(g, dtype=float)
        self._mass = state.mass[self.stencil]

    def energy(self, state):
        return -float(np.sum(self._mass * (state.q[self.stencil] @ self.g)))

    def gradient(self, state):
        return -self._mass[:, None] * self.g[None, :]


class Spring(Potential):
    """Linear spring ``V = k/2 (|x_a - x_b| - rest)^2``."""

    kind = "spring"

    def __init__(self, a: int, b: int, rest: float, stiffness: float, h: float,
                 pid: int = -1):
        if a == b:
            raise ConfigurationError("spring endpoints must be distinct bodies")
        super().__init__(h, [a, b], pid)
        self.a, self.b = a, b
        self.rest = float(rest)
        self.stiffness = float(stiffness)

    def _delta(self, state):
        delta = state.q[self.a] - state.q[self.b]
        length = math.hypot(*delta)
        if length < DEGENERATE_DISTANCE:
            raise DegenerateGeometryError(
                f"spring endpoints {self.a} and {self.b} coincide")
        return delta, length

    def energy(self, state):
        _, length = self._delta(state)
        return 0.5 * self.stiffness * (length - self.rest) ** 2

    def gradient(self, state):
        delta, length = self._delta(state)
        f = self.stiffness * (length - self.rest) / length * delta
        return np.array([f, -f])


def layer_timestep(l: int, h1: float) -> float:
    if l < 1:
        raise ConfigurationError("layer index starts at 1")
    return h1 * float(l) ** -1.5


def base_timestep(k: float, eta: float, m_min: float, alpha: float) -> float:
    """Layer-1 step: a fraction ``alpha`` of ``sqrt(m_min / 2k)``.

    ``eta`` does not enter the rule but must be positive like the rest.
    """
    for name, value in (("k", k), ("eta", eta), ("m_min", m_min), ("alpha", alpha)):
        if not (value > 0) or not math.isfinite(value):
            raise ConfigurationError(f"{name} must be positive for a time step, got {value}")
    return alpha * math.sqrt(m_min / (2.0 * k))


class PenaltyLayer(Potential):
    """Layer ``l`` of the penalty family for one contact pair."""

    kind = "penalty"

    def __init__(self, pair: ContactPair, l: int, eta: float, k: float, h1: float,
                 e: float = 1.0, mu: float = 0.0, pid: int = -1):
        stencil = [pair.ia] if pair.plane else [pair.ia, pair.ib]
        super().__init__(layer_timestep(l, h1), stencil, pid)
        self.pair = pair
        self.l = int(l)
        self.eta = float(eta)
        self.k = float(k)
        self.e = float(e)
        self.mu = float(mu)

    @property
    def thickness(self) -> float:
        return self.eta / self.l

    @property
    def stiffness(self) -> float:
        return self.l ** 3 * self.k

    def gap(self, state):
        d, n = self.pair.separation(state.q)
        return d - 2.0 * self.thickness, n

    def scale(self, state, normal=None) -> float:
        """Restitution factor: ``e`` while the pair separates, else 1."""
        return self.e if self.pair.separating(state, normal) else 1.0

    def energy(self, state, s: Optional[float] = None) -> float:
        g, n = self.gap(state)
        if g > 0:
            return 0.0
        if s is None:
            s = self.scale(state, n)
        return s * self.stiffness * g * g

    def normal_force(self, state, s: Optional[float] = None):
        """``dV/dg`` and the contact normal; the force is zero when ``dV/dg == 0``."""
        g, n = self.gap(state)
        if g >= 0:
            return 0.0, n
        if s is None:
            s = self.scale(state, n)
        return 2.0 * s * self.stiffness * g, n

    def gradient(self, state, s: Optional[float] = None) -> np.ndarray:
        dv, n = self.normal_force(state, s)
        row = dv * n
        if self.pair.plane:
            return row[None, :]
        return np.array([row, -row])


def layer_energy(layer: PenaltyLayer, state: State, s: Optional[float] = None) -> float:
    return layer.energy(state, s)


def layer_gradient(layer: PenaltyLayer, state: State, s: Optional[float] = None) -> np.ndarray:
    return layer.gradient(state, s)


def family_energy(d: float, eta: float, k: float, s: float = 1.0) -> float:
    """Energy of all layers at surface distance ``d``.

    Layers with ``2 eta / l >= d`` contribute ``s l^3 k (d - 2 eta / l)^2``;
    the sum diverges as ``d -> 0``.
    """
    if d >= 2.0 * eta:
        return 0.0
    if d <= 0.0:
        return math.inf
    top = int(math.floor(2.0 * eta / d))
    ls = np.arange(1, top + 1, dtype=float)
    g = d - 2.0 * eta / ls
    return float(s * k * np.sum(ls ** 3 * g * g))


def friction_impulse(normal_impulse: float, v_tangential, mu: float,
                     inv_mass_sum: Optional[float] = None,
                     eps_v: float = TANGENT_SPEED_EPS) -> np.ndarray:
    """Coulomb impulse on body ``a`` opposing the tangential relative velocity.

    The magnitude is ``mu * normal_impulse`` but never more than what stops
    the relative tangential motion (given the pair's summed inverse mass);
    body ``b`` receives the opposite impulse.
    """
    v_t = np.asarray(v_tangential, dtype=float)
    if normal_impulse < 0:
        raise ValueError("normal impulse magnitude must be non-negative")
    speed = float(np.linalg.norm(v_t))
    if mu == 0 or normal_impulse == 0 or speed <= eps_v:
        return np.zeros_like(v_t)
    magnitude = mu * normal_impulse
    if inv_mass_sum is not None and inv_mass_sum > 0:
        magnitude = min(magnitude, speed / inv_mass_sum)
    return -magnitude * v_t / speed
