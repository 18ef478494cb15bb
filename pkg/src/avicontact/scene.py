"""Scene descriptions: the line-oriented file format and the built-in experiments.

A scene file holds one directive per line; ``#`` starts a comment::

    dim 2
    body particle id=0 pos=0,1 vel=0,0 mass=1
    body halfplane id=2 pos=0,0 normal=0,1
    force gravity g=0,-1 h=0.01
    force spring a=0 b=1 rest=1 stiffness=1 h=0.005
    contact eta=0.1 k=1000
    run duration=100 logdt=0.1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError, SceneError
from .potentials import ContactPair, ContactParams, Gravity, Spring
from .scheduler import Simulation
from .state import FIXED, Body, BodyKind, State

Vector = Tuple[float, ...]

RESTITUTION_SWEEP = (1.0, 0.9, 0.8, 0.7, 0.5, 0.2, 0.0)
BUILTIN_NAMES = ("spring", "box", "restitution-sweep")


@dataclass
class BodySpec:
    id: int
    kind: str
    pos: Vector
    vel: Optional[Vector] = None
    radius: float = 0.0
    mass: float = 1.0
    normal: Optional[Vector] = None


@dataclass
class GravitySpec:
    g: Vector
    h: float


@dataclass
class SpringSpec:
    a: int
    b: int
    rest: float
    stiffness: float
    h: float


@dataclass
class SceneConfig:
    dim: int = 2
    bodies: List[BodySpec] = field(default_factory=list)
    forces: List[Union[GravitySpec, SpringSpec]] = field(default_factory=list)
    contact: Optional[ContactParams] = None
    duration: float = 1.0
    logdt: float = 0.1
    seed: int = 0
    broken_clocks: bool = False

    def validate(self) -> "SceneConfig":
        if self.dim not in (2, 3):
            raise SceneError("dim must be 2 or 3", key="dim")
        ids = [b.id for b in self.bodies]
        if len(set(ids)) != len(ids):
            raise SceneError("body ids must be unique", key="id")
        for b in self.bodies:
            for name in ("pos", "vel", "normal"):
                vec = getattr(b, name)
                if vec is not None and len(vec) != self.dim:
                    raise SceneError(f"body {b.id}: {name} needs {self.dim} components", key=name)
            if b.kind == "halfplane":
                if b.normal is None:
                    raise SceneError(f"halfplane {b.id} needs a normal", key="normal")
                if b.mass != FIXED:
                    raise SceneError(f"halfplane {b.id} must be fixed", key="mass")
            if b.radius < 0:
                raise SceneError(f"body {b.id}: radius must be >= 0", key="radius")
            if not (b.mass > 0):
                raise SceneError(f"body {b.id}: mass must be positive", key="mass")
        known = set(ids)
        for f in self.forces:
            if not (f.h > 0):
                raise SceneError("force time step must be positive", key="h")
            if isinstance(f, SpringSpec):
                for name in ("a", "b"):
                    if getattr(f, name) not in known:
                        raise SceneError(f"spring endpoint {name}={getattr(f, name)} "
                                         "is not a body", key=name)
                if f.a == f.b:
                    raise SceneError("spring endpoints must differ", key="b")
                if not (f.stiffness >= 0):
                    raise SceneError("stiffness must be non-negative", key="stiffness")
                if not (f.rest >= 0):
                    raise SceneError("rest length must be non-negative", key="rest")
            elif len(f.g) != self.dim:
                raise SceneError(f"gravity needs {self.dim} components", key="g")
        if not (self.duration > 0):
            raise SceneError("duration must be positive", key="duration")
        if not (self.logdt > 0):
            raise SceneError("logdt must be positive", key="logdt")
        return self


# -- parsing -----------------------------------------------------------------

def _vector(text, key, lineno):
    try:
        vec = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise SceneError(f"bad vector for {key}: {text!r}", lineno, key) from None
    if not all(math.isfinite(x) for x in vec):
        raise SceneError(f"non-finite value in {key}", lineno, key)
    return vec


def _number(text, key, lineno, cast=float):
    try:
        value = cast(text)
    except ValueError:
        raise SceneError(f"bad value for {key}: {text!r}", lineno, key) from None
    if cast is float and not math.isfinite(value):
        raise SceneError(f"non-finite value for {key}", lineno, key)
    return value


def _bool(text, key, lineno):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise SceneError(f"bad boolean for {key}: {text!r}", lineno, key)


def _pairs(tokens, allowed, lineno):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise SceneError(f"expected key=value, got {tok!r}", lineno)
        key, value = tok.split("=", 1)
        if key not in allowed:
            raise SceneError(f"unknown key {key!r}", lineno, key)
        if key in out:
            raise SceneError(f"duplicate key {key!r}", lineno, key)
        out[key] = value
    return out


def _require(kv, keys, lineno):
    for key in keys:
        if key not in kv:
            raise SceneError(f"missing {key}", lineno, key)


def parse_scene(text: str) -> SceneConfig:
    """Parse scene text; raises :class:`SceneError` with line and key info."""
    cfg = SceneConfig()
    seen_run = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "dim":
            if len(rest) != 1 or rest[0] not in ("2", "3"):
                raise SceneError("dim must be 2 or 3", lineno, "dim")
            cfg.dim = int(rest[0])
        elif head == "body":
            if not rest:
                raise SceneError("body needs a kind", lineno)
            kind = {"sphere": "disc"}.get(rest[0], rest[0])
            if kind not in ("particle", "disc", "halfplane"):
                raise SceneError(f"unknown body kind {rest[0]!r}", lineno, "kind")
            kv = _pairs(rest[1:], {"id", "pos", "vel", "radius", "mass", "normal"}, lineno)
            _require(kv, ("id", "pos"), lineno)
            spec = BodySpec(id=_number(kv["id"], "id", lineno, int), kind=kind,
                            pos=_vector(kv["pos"], "pos", lineno))
            if "vel" in kv:
                spec.vel = _vector(kv["vel"], "vel", lineno)
            if "radius" in kv:
                spec.radius = _number(kv["radius"], "radius", lineno)
                if kind == "particle" and spec.radius != 0:
                    raise SceneError("particles have radius 0", lineno, "radius")
            if "normal" in kv:
                if kind != "halfplane":
                    raise SceneError("only halfplanes take a normal", lineno, "normal")
                spec.normal = _vector(kv["normal"], "normal", lineno)
            if kind == "halfplane":
                spec.mass = FIXED
            if "mass" in kv:
                spec.mass = (FIXED if kv["mass"] == "fixed"
                             else _number(kv["mass"], "mass", lineno))
            try:
                _check_body(spec)
            except SceneError as exc:
                raise SceneError(str(exc), lineno, exc.key) from None
            cfg.bodies.append(spec)
        elif head == "force":
            if not rest or rest[0] not in ("gravity", "spring"):
                raise SceneError("force must be gravity or spring", lineno, "force")
            if rest[0] == "gravity":
                kv = _pairs(rest[1:], {"g", "h"}, lineno)
                _require(kv, ("g", "h"), lineno)
                spec = GravitySpec(_vector(kv["g"], "g", lineno), _number(kv["h"], "h", lineno))
            else:
                kv = _pairs(rest[1:], {"a", "b", "rest", "stiffness", "h"}, lineno)
                _require(kv, ("a", "b", "rest", "stiffness", "h"), lineno)
                spec = SpringSpec(_number(kv["a"], "a", lineno, int),
                                  _number(kv["b"], "b", lineno, int),
                                  _number(kv["rest"], "rest", lineno),
                                  _number(kv["stiffness"], "stiffness", lineno),
                                  _number(kv["h"], "h", lineno))
            if not (spec.h > 0):
                raise SceneError("h must be positive", lineno, "h")
            cfg.forces.append(spec)
        elif head == "contact":
            kv = _pairs(rest, {"eta", "k", "e", "mu", "alpha", "h1"}, lineno)
            _require(kv, ("eta", "k"), lineno)
            if "alpha" in kv and "h1" in kv:
                raise SceneError("give either alpha or h1, not both", lineno, "h1")
            values = {key: _number(v, key, lineno) for key, v in kv.items()}
            for key, ok in (("eta", values["eta"] > 0), ("k", values["k"] > 0),
                            ("e", 0 <= values.get("e", 1.0) <= 1),
                            ("mu", values.get("mu", 0.0) >= 0),
                            ("alpha", values.get("alpha", 0.1) > 0),
                            ("h1", values.get("h1", 1.0) > 0)):
                if not ok:
                    raise SceneError(f"invalid {key}={values[key]}", lineno, key)
            cfg.contact = ContactParams(**values)
        elif head == "run":
            kv = _pairs(rest, {"duration", "logdt", "seed", "broken_clocks"}, lineno)
            _require(kv, ("duration",), lineno)
            cfg.duration = _number(kv["duration"], "duration", lineno)
            if "logdt" in kv:
                cfg.logdt = _number(kv["logdt"], "logdt", lineno)
            if "seed" in kv:
                cfg.seed = _number(kv["seed"], "seed", lineno, int)
            if "broken_clocks" in kv:
                cfg.broken_clocks = _bool(kv["broken_clocks"], "broken_clocks", lineno)
            for key in ("duration", "logdt"):
                if not (getattr(cfg, key) > 0):
                    raise SceneError(f"{key} must be positive", lineno, key)
            seen_run = True
        else:
            raise SceneError(f"unknown directive {head!r}", lineno)
    if not seen_run:
        raise SceneError("missing run directive", key="run")
    return cfg.validate()


def _check_body(spec: BodySpec):
    if spec.radius < 0:
        raise SceneError("radius must be >= 0", key="radius")
    if not (spec.mass > 0):
        raise SceneError("mass must be positive or fixed", key="mass")
    if spec.kind == "halfplane":
        if spec.normal is None:
            raise SceneError("halfplane needs a normal", key="normal")
        if spec.mass != FIXED:
            raise SceneError("halfplanes must be fixed", key="mass")


def _vec_text(v) -> str:
    return ",".join(repr(float(x)) for x in v)


def format_scene(cfg: SceneConfig) -> str:
    """Inverse of :func:`parse_scene`."""
    lines = [f"dim {cfg.dim}"]
    for b in cfg.bodies:
        parts = [f"body {b.kind} id={b.id} pos={_vec_text(b.pos)}"]
        if b.vel is not None:
            parts.append(f"vel={_vec_text(b.vel)}")
        if b.kind == "disc":
            parts.append(f"radius={b.radius!r}")
        if b.normal is not None:
            parts.append(f"normal={_vec_text(b.normal)}")
        parts.append("mass=fixed" if b.mass == FIXED else f"mass={float(b.mass)!r}")
        lines.append(" ".join(parts))
    for f in cfg.forces:
        if isinstance(f, GravitySpec):
            lines.append(f"force gravity g={_vec_text(f.g)} h={f.h!r}")
        else:
            lines.append(f"force spring a={f.a} b={f.b} rest={f.rest!r} "
                         f"stiffness={f.stiffness!r} h={f.h!r}")
    c = cfg.contact
    if c is not None:
        step = f"h1={c.h1!r}" if c.h1 is not None else f"alpha={c.alpha!r}"
        lines.append(f"contact eta={c.eta!r} k={c.k!r} e={c.e!r} mu={c.mu!r} {step}")
    run = f"run duration={cfg.duration!r} logdt={cfg.logdt!r} seed={cfg.seed}"
    if cfg.broken_clocks:
        run += " broken_clocks=true"
    lines.append(run)
    return "\n".join(lines) + "\n"


# -- building ----------------------------------------------------------------

def build_state(cfg: SceneConfig) -> State:
    bodies = [Body(id=b.id, kind=BodyKind(b.kind), radius=b.radius, mass=b.mass,
                   normal=None if b.normal is None else np.array(b.normal, dtype=float))
              for b in cfg.bodies]
    q = np.array([b.pos for b in cfg.bodies], dtype=float).reshape(len(bodies), cfg.dim)
    v = np.array([b.vel if b.vel is not None else (0.0,) * cfg.dim for b in cfg.bodies],
                 dtype=float).reshape(len(bodies), cfg.dim)
    return State(bodies, q, v)


def contact_pairs(bodies) -> List[ContactPair]:
    """Every body pair with at least one free member."""
    pairs = []
    for i, a in enumerate(bodies):
        for b in bodies[i + 1:]:
            if a.fixed and b.fixed:
                continue
            pairs.append(ContactPair(a, b))
    return pairs


def build_simulation(cfg: SceneConfig, on_snapshot=None) -> Simulation:
    cfg.validate()
    state = build_state(cfg)
    index = {b.id: b.index for b in state.bodies}
    potentials = []
    for f in cfg.forces:
        if isinstance(f, GravitySpec):
            potentials.append(Gravity(f.g, f.h, state))
        else:
            potentials.append(Spring(index[f.a], index[f.b], f.rest, f.stiffness, f.h))
    pairs = contact_pairs(state.bodies) if cfg.contact is not None else []
    return Simulation(state, potentials, pairs, cfg.contact, duration=cfg.duration,
                      logdt=cfg.logdt, broken_clocks=cfg.broken_clocks,
                      on_snapshot=on_snapshot)


# -- built-in experiments ----------------------------------------------------

SPRING_GRAVITY_STEP = 0.01
SPRING_STEP = 0.005

BOX_SIZE = 3.0
BOX_RADIUS = 0.1
BOX_ETA = 0.01
BOX_K = 1.0e5
BOX_MAX_SPEED = 10.0
BOX_GRAVITY = 9.8
BOX_GRAVITY_STEP = 0.01
BOX_DEFAULT_SPHERES = 100
SWEEP_DEFAULT_SPHERES = 50


def spring_scene(duration: float = 100.0, broken_clocks: bool = False) -> SceneConfig:
    """Unit spring with unit endpoint masses resting a unit height above a plane."""
    return SceneConfig(
        dim=2,
        bodies=[BodySpec(0, "particle", (0.0, 1.0), (0.0, 0.0)),
                BodySpec(1, "particle", (0.0, 2.0), (0.0, 0.0)),
                BodySpec(2, "halfplane", (0.0, 0.0), None, mass=FIXED, normal=(0.0, 1.0))],
        forces=[GravitySpec((0.0, -1.0), SPRING_GRAVITY_STEP),
                SpringSpec(0, 1, 1.0, 1.0, SPRING_STEP)],
        contact=ContactParams(eta=0.1, k=1000.0),
        duration=duration, logdt=0.1, broken_clocks=broken_clocks)


def box_walls(first_id: int, size: float = BOX_SIZE) -> List[BodySpec]:
    return [BodySpec(first_id, "halfplane", (0.0, 0.0), None, mass=FIXED, normal=(1.0, 0.0)),
            BodySpec(first_id + 1, "halfplane", (size, 0.0), None, mass=FIXED, normal=(-1.0, 0.0)),
            BodySpec(first_id + 2, "halfplane", (0.0, 0.0), None, mass=FIXED, normal=(0.0, 1.0)),
            BodySpec(first_id + 3, "halfplane", (0.0, size), None, mass=FIXED, normal=(0.0, -1.0))]


def box_scene(spheres: int = BOX_DEFAULT_SPHERES, seed: int = 0, e: float = 1.0,
              gravity: Optional[float] = None, duration: float = 10.0,
              walls: bool = True, mu: float = 0.0) -> SceneConfig:
    """Discs with random positions and speeds inside a fixed square box.

    Positions are drawn uniformly with rejection so that no layer is active
    at the start; speeds are uniform in ``[0, 10]`` with uniform direction.
    Randomness comes from numpy's PCG64 generator seeded with ``seed``.
    """
    rng = np.random.default_rng(seed)
    clearance = 2.0 * BOX_ETA * 1.01
    lo = BOX_RADIUS + clearance
    hi = BOX_SIZE - lo
    centers = []
    attempts = 0
    while len(centers) < spheres:
        attempts += 1
        if attempts > 10000 * max(spheres, 1):
            raise ConfigurationError(f"could not place {spheres} discs in the box")
        c = rng.uniform(lo, hi, size=2)
        if all(np.hypot(*(c - o)) > 2 * BOX_RADIUS + clearance for o in centers):
            centers.append(c)
    speed = rng.uniform(0.0, BOX_MAX_SPEED, size=spheres)
    angle = rng.uniform(0.0, 2.0 * math.pi, size=spheres)
    bodies = [BodySpec(i, "disc", tuple(map(float, centers[i])),
                       (float(speed[i] * math.cos(angle[i])), float(speed[i] * math.sin(angle[i]))),
                       radius=BOX_RADIUS, mass=1.0)
              for i in range(spheres)]
    if walls:
        bodies += box_walls(spheres)
    forces = []
    if gravity:
        forces.append(GravitySpec((0.0, -float(gravity)), BOX_GRAVITY_STEP))
    return SceneConfig(dim=2, bodies=bodies, forces=forces,
                       contact=ContactParams(eta=BOX_ETA, k=BOX_K, e=e, mu=mu),
                       duration=duration, logdt=0.1, seed=seed)


def restitution_sweep(spheres: int = SWEEP_DEFAULT_SPHERES, seed: int = 0,
                      duration: float = 20.0) -> List[SceneConfig]:
    """The box with gravity, once per restitution coefficient of the sweep."""
    base = box_scene(spheres, seed, gravity=BOX_GRAVITY, duration=duration)
    return [replace(base, contact=replace(base.contact, e=e)) for e in RESTITUTION_SWEEP]


def builtin_scene(name: str, **options):
    """Look up a built-in experiment; the sweep returns a list of configs."""
    if name == "spring":
        return spring_scene(**options)
    if name == "box":
        return box_scene(**options)
    if name == "restitution-sweep":
        return restitution_sweep(**options)
    raise ConfigurationError(f"unknown experiment {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def head_on_discs(speed: float, k: float, e: float = 1.0, eta: float = 0.1,
                  radius: float = 0.1, mass: float = 1.0, gap: float = 1.0,
                  duration: Optional[float] = None, logdt: Optional[float] = None) -> SceneConfig:
    """Two discs approaching each other along x at closing speed ``speed``.

    The run lasts long enough for the impact and a clean separation.
    """
    half = 0.5 * speed
    x0 = radius + 0.5 * gap
    if duration is None:
        # approach plus a generous allowance for the layer-1 oscillation
        contact_time = math.pi * math.sqrt(0.5 * mass / (2.0 * k))
        duration = 3.0 * gap / speed + 4.0 * contact_time + 0.1
    if logdt is None:
        logdt = duration / 200.0
    return SceneConfig(
        dim=2,
        bodies=[BodySpec(0, "disc", (-x0, 0.0), (half, 0.0), radius=radius, mass=mass),
                BodySpec(1, "disc", (x0, 0.0), (-half, 0.0), radius=radius, mass=mass)],
        contact=ContactParams(eta=eta, k=k, e=e),
        duration=duration, logdt=logdt)
