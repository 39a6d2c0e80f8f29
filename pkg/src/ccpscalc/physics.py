"""Concrete physical plants: rational state, affine drift with box disturbance,
symmetric sensor error bands, box invariants, and disjoint union of plants.

All bounds are exact rationals; interval endpoints carry open/closed flags
so that strict bounds survive every operation unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Optional

from ccpscalc.terms import (
    CcpsError, ProcessTerm, Value, Name, fmt_rat, rat, well_formed,
    Send, Receive, ReadSensor, WriteActuator, TimeoutPrefix, TickPrefix,
    Parallel, Restrict, Fix, IfElse, Nil, ProcVar,
    Cmp, Var, Lit, Neg, BinOp, BoolLit, Not, BoolOp,
)


class UnknownSensor(CcpsError):
    pass


class UnknownActuator(CcpsError):
    pass


class NameClash(CcpsError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__("clashing plant names: " + ", ".join(self.names))


class EmptyIntervalError(CcpsError):
    pass


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Rational-endpoint interval with open/closed endpoint flags.

    The distinguished ``EMPTY`` value stands for the empty interval; every
    constructor of a degenerate interval returns it.
    """

    lo: Fraction
    hi: Fraction
    lo_open: bool = False
    hi_open: bool = False

    def __str__(self):
        l = "(" if self.lo_open else "["
        r = ")" if self.hi_open else "]"
        return f"{l}{fmt_rat(self.lo)}, {fmt_rat(self.hi)}{r}"

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: Fraction) -> bool:
        if x < self.lo or x > self.hi:
            return False
        if x == self.lo and self.lo_open:
            return False
        if x == self.hi and self.hi_open:
            return False
        return True

    def contains_interval(self, other: "Interval") -> bool:
        if other.is_empty:
            return True
        lo_ok = (self.lo < other.lo
                 or (self.lo == other.lo and (not self.lo_open or other.lo_open)))
        hi_ok = (self.hi > other.hi
                 or (self.hi == other.hi and (not self.hi_open or other.hi_open)))
        return lo_ok and hi_ok

    def shift(self, d: Fraction) -> "Interval":
        return Interval(self.lo + d, self.hi + d, self.lo_open, self.hi_open)

    def widen(self, w: Fraction) -> "Interval":
        """Minkowski sum with the closed ball [-w, +w]; w >= 0."""
        if w == 0:
            return self
        return Interval(self.lo - w, self.hi + w, self.lo_open, self.hi_open)

    def intersect(self, other: "Interval") -> "Interval":
        if other.is_empty:
            return EMPTY
        if self.lo > other.lo or (self.lo == other.lo and self.lo_open):
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if self.hi < other.hi or (self.hi == other.hi and self.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        return interval(lo, hi, lo_open, hi_open)

    def hull(self, other: "Interval") -> "Interval":
        if other.is_empty:
            return self
        if self.lo < other.lo or (self.lo == other.lo and not self.lo_open):
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if self.hi > other.hi or (self.hi == other.hi and not self.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        return Interval(lo, hi, lo_open, hi_open)

    def pick(self) -> Fraction:
        """Deterministic representative point: midpoint (always admissible
        for a non-empty interval; a point interval yields its point)."""
        if self.is_point:
            return self.lo
        return (self.lo + self.hi) / 2

    def clamp(self, x: Fraction) -> Fraction:
        """Nearest admissible point to ``x`` (midpoint fallback on open ends)."""
        if self.contains(x):
            return x
        if x <= self.lo:
            return self.lo if not self.lo_open else self.pick_above(self.lo)
        return self.hi if not self.hi_open else self.pick_below(self.hi)

    def pick_above(self, bound: Fraction) -> Fraction:
        cand = self.intersect(Interval(bound, self.hi, True, self.hi_open))
        if cand.is_empty:
            raise EmptyIntervalError(f"no point of {self} above {bound}")
        return cand.pick()

    def pick_below(self, bound: Fraction) -> Fraction:
        cand = self.intersect(Interval(self.lo, bound, self.lo_open, True))
        if cand.is_empty:
            raise EmptyIntervalError(f"no point of {self} below {bound}")
        return cand.pick()


class _Empty(Interval):
    def __init__(self):
        object.__setattr__(self, "lo", Fraction(1))
        object.__setattr__(self, "hi", Fraction(0))
        object.__setattr__(self, "lo_open", True)
        object.__setattr__(self, "hi_open", True)

    @property
    def is_empty(self) -> bool:
        return True

    @property
    def is_point(self) -> bool:
        return False

    def contains(self, x) -> bool:
        return False

    def contains_interval(self, other) -> bool:
        return other.is_empty

    def shift(self, d):
        return self

    def widen(self, w):
        return self

    def intersect(self, other):
        return self

    def hull(self, other):
        return other

    def pick(self):
        raise EmptyIntervalError("cannot pick a point from the empty interval")

    def __str__(self):
        return "(empty)"

    def __repr__(self):
        return "EMPTY"


EMPTY = _Empty()


def interval(lo, hi, lo_open: bool = False, hi_open: bool = False) -> Interval:
    """Normalising constructor: degenerate bounds collapse to ``EMPTY``."""
    lo, hi = rat(lo), rat(hi)
    if lo > hi or (lo == hi and (lo_open or hi_open)):
        return EMPTY
    return Interval(lo, hi, lo_open, hi_open)


def point(v) -> Interval:
    v = rat(v)
    return Interval(v, v, False, False)


# ---------------------------------------------------------------------------
# Drift tables (the evolution law, per variable)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftTable:
    """Per-slot additive drift as a finite table over actuator valuations.

    ``cases`` is tried in order: a case fires when every listed
    (actuator, value) pair matches the current valuation.  ``default``
    makes the table total.
    """

    cases: tuple[tuple[tuple[tuple[str, Value], ...], Fraction], ...] = ()
    default: Fraction = Fraction(0)

    def drift(self, actuators: Mapping[str, Value]) -> Fraction:
        for conds, d in self.cases:
            if all(actuators.get(a) == v for a, v in conds):
                return d
        return self.default

    def mentioned_actuators(self) -> frozenset[str]:
        return frozenset(a for conds, _ in self.cases for a, _ in conds)


def drift_table(cases, default) -> DriftTable:
    """``cases``: iterable of (dict-of-actuator-values, drift)."""
    packed = tuple(
        (tuple(sorted(conds.items())), rat(d)) for conds, d in cases)
    return DriftTable(packed, rat(default))


# ---------------------------------------------------------------------------
# Physical environments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicalEnv:
    """The plant: state values, actuator values, constant disturbance radii,
    drift tables, constant sensor-error radii, sensor targets, and a box
    invariant.  Immutable; updates return fresh values."""

    state: dict[str, Fraction]
    actuators: dict[str, Value]
    uncertainty: dict[str, Fraction]
    dynamics: dict[str, DriftTable]
    sensor_error: dict[str, Fraction]
    sensor_target: dict[str, str]
    invariant: dict[str, Interval]

    def __post_init__(self):
        xs = set(self.state)
        if set(self.uncertainty) != xs or set(self.dynamics) != xs or set(self.invariant) != xs:
            raise CcpsError("uncertainty/dynamics/invariant must be keyed by the state variables")
        if set(self.sensor_error) != set(self.sensor_target):
            raise CcpsError("sensor error and sensor target must share a key set")
        for s, x in self.sensor_target.items():
            if x not in xs:
                raise CcpsError(f"sensor {s!r} measures undeclared variable {x!r}")
        if any(w < 0 for w in self.uncertainty.values()):
            raise CcpsError("uncertainty radii must be non-negative")
        if any(e < 0 for e in self.sensor_error.values()):
            raise CcpsError("sensor error radii must be non-negative")

    def variables(self) -> frozenset[str]:
        return frozenset(self.state)

    def sensors(self) -> frozenset[str]:
        return frozenset(self.sensor_error)

    def actuator_names(self) -> frozenset[str]:
        return frozenset(self.actuators)

    def actuator_key(self) -> tuple:
        return tuple(sorted(self.actuators.items(), key=lambda kv: kv[0]))


def make_env(state, actuators=None, uncertainty=None, dynamics=None,
             sensor_error=None, sensor_target=None, invariant=None) -> PhysicalEnv:
    """Convenience constructor with exact-rational coercion and defaults
    (zero uncertainty, zero drift, unconstrained-by-wide-box invariant)."""
    state = {x: rat(v) for x, v in state.items()}
    actuators = dict(actuators or {})
    uncertainty = {x: rat((uncertainty or {}).get(x, 0)) for x in state}
    dynamics = {x: (dynamics or {}).get(x, DriftTable()) for x in state}
    sensor_error = {s: rat(v) for s, v in (sensor_error or {}).items()}
    sensor_target = dict(sensor_target or {})
    big = Fraction(10) ** 9
    invariant = {x: (invariant or {}).get(x, interval(-big, big)) for x in state}
    return PhysicalEnv(state, actuators, uncertainty, dynamics,
                       sensor_error, sensor_target, invariant)


EMPTY_ENV = make_env({})


# ---------------------------------------------------------------------------
# Cyber-physical systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cps:
    """A plant paired with its controlling process.

    Build through ``make_cps`` (which checks well-formedness); the stepping
    machinery constructs successors directly since steps never introduce
    new device mentions.
    """

    env: PhysicalEnv
    proc: ProcessTerm


def make_cps(env: PhysicalEnv, proc: ProcessTerm) -> Cps:
    m = Cps(env, proc)
    well_formed(m)
    return m


def cps_parallel(m: Cps, q: ProcessTerm) -> Cps:
    return make_cps(m.env, Parallel(m.proc, q))


def cps_restrict(m: Cps, channel: str) -> Cps:
    return Cps(m.env, Restrict(m.proc, channel))


# ---------------------------------------------------------------------------
# Auxiliary operators
# ---------------------------------------------------------------------------

def read_sensor(env: PhysicalEnv, s: str) -> Interval:
    """Set of possible measurements at sensor ``s``: the closed symmetric
    error band around the measured variable's current value."""
    if s not in env.sensor_error:
        raise UnknownSensor(s)
    x = env.state[env.sensor_target[s]]
    e = env.sensor_error[s]
    return Interval(x - e, x + e)


def update_act(env: PhysicalEnv, a: str, v: Value) -> PhysicalEnv:
    """Fresh environment with actuator ``a`` set to ``v``; everything else
    shared bit-identically."""
    if a not in env.actuators:
        raise UnknownActuator(a)
    new_acts = dict(env.actuators)
    new_acts[a] = v
    return replace(env, actuators=new_acts)


def next_envs(env: PhysicalEnv) -> dict[str, Interval]:
    """Per-variable interval of admissible next values: current value plus
    the drift selected by the actuator valuation, widened by the constant
    disturbance radius.  A concrete successor is any point selection."""
    out = {}
    for x, v in env.state.items():
        d = env.dynamics[x].drift(env.actuators)
        w = env.uncertainty[x]
        out[x] = Interval(v + d - w, v + d + w)
    return out


def with_state(env: PhysicalEnv, new_state: Mapping[str, Fraction]) -> PhysicalEnv:
    return replace(env, state=dict(new_state))


def invariant_holds(env: PhysicalEnv) -> bool:
    return all(env.invariant[x].contains(v) for x, v in env.state.items())


def disjoint_union(e1: PhysicalEnv, e2: PhysicalEnv) -> PhysicalEnv:
    """Componentwise union of two plants with pairwise-disjoint variable,
    sensor, and actuator names; the invariant is the conjunction."""
    clashes = ((e1.variables() & e2.variables())
               | (e1.sensors() & e2.sensors())
               | (e1.actuator_names() & e2.actuator_names()))
    if clashes:
        raise NameClash(clashes)
    return PhysicalEnv(
        state={**e1.state, **e2.state},
        actuators={**e1.actuators, **e2.actuators},
        uncertainty={**e1.uncertainty, **e2.uncertainty},
        dynamics={**e1.dynamics, **e2.dynamics},
        sensor_error={**e1.sensor_error, **e2.sensor_error},
        sensor_target={**e1.sensor_target, **e2.sensor_target},
        invariant={**e1.invariant, **e2.invariant},
    )


def non_interfering(m: Cps, n: Cps) -> bool:
    """True iff the two plants have pairwise-disjoint variables, sensors,
    and actuators."""
    e1, e2 = m.env, n.env
    return not ((e1.variables() & e2.variables())
                or (e1.sensors() & e2.sensors())
                or (e1.actuator_names() & e2.actuator_names()))


def cps_union(m: Cps, n: Cps) -> Cps:
    """Parallel composition of non-interfering systems: plants joined by
    disjoint union, processes in parallel."""
    return Cps(disjoint_union(m.env, n.env), Parallel(m.proc, n.proc))


# ---------------------------------------------------------------------------
# Device renaming (systems are identified up to renaming of plant names)
# ---------------------------------------------------------------------------

def _rename_expr(e, names: Mapping[str, str]):
    if isinstance(e, Lit):
        if isinstance(e.value, Name) and e.value.ident in names:
            return Lit(Name(names[e.value.ident]))
        return e
    if isinstance(e, Var):
        return e
    if isinstance(e, Neg):
        return Neg(_rename_expr(e.arg, names))
    if isinstance(e, BinOp):
        return BinOp(e.op, _rename_expr(e.left, names), _rename_expr(e.right, names))
    raise CcpsError(f"unknown expression node {e!r}")


def _rename_bool(b, names: Mapping[str, str]):
    if isinstance(b, BoolLit):
        return b
    if isinstance(b, Not):
        return Not(_rename_bool(b.arg, names))
    if isinstance(b, BoolOp):
        return BoolOp(b.op, _rename_bool(b.left, names), _rename_bool(b.right, names))
    if isinstance(b, Cmp):
        return Cmp(b.op, _rename_expr(b.left, names), _rename_expr(b.right, names))
    raise CcpsError(f"unknown guard node {b!r}")


def rename_proc(term: ProcessTerm, devices: Mapping[str, str],
                values: Mapping[str, str] = ()) -> ProcessTerm:
    """Rename sensor/actuator names (``devices``) and name-values carried in
    expressions (``values``) throughout a process."""
    from ccpscalc.terms import _trusted_rebuild
    values = dict(values)

    def go(t):
        if isinstance(t, (Nil, ProcVar)):
            return t
        if isinstance(t, TickPrefix):
            return TickPrefix(go(t.body))
        if isinstance(t, Parallel):
            return Parallel(go(t.left), go(t.right))
        if isinstance(t, Restrict):
            return Restrict(go(t.body), t.channel)
        if isinstance(t, Fix):
            return Fix(t.var, go(t.body))
        if isinstance(t, IfElse):
            return IfElse(_rename_bool(t.guard, values), go(t.then_branch), go(t.else_branch))
        if isinstance(t, TimeoutPrefix):
            p = t.prefix
            if isinstance(p, Send):
                p = Send(p.channel, _rename_expr(p.expr, values))
            elif isinstance(p, ReadSensor):
                p = ReadSensor(p.var, devices.get(p.sensor, p.sensor))
            elif isinstance(p, WriteActuator):
                p = WriteActuator(_rename_expr(p.expr, values), devices.get(p.actuator, p.actuator))
            return TimeoutPrefix(p, go(t.continuation), go(t.timeout))
        raise CcpsError(f"unknown term node {t!r}")

    with _trusted_rebuild():
        return go(term)


def rename_env(env: PhysicalEnv, names: Mapping[str, str]) -> PhysicalEnv:
    """Rename state variables, sensors, and actuators of a plant."""
    def n(k):
        return names.get(k, k)

    return PhysicalEnv(
        state={n(x): v for x, v in env.state.items()},
        actuators={n(a): v for a, v in env.actuators.items()},
        uncertainty={n(x): v for x, v in env.uncertainty.items()},
        dynamics={n(x): DriftTable(
            tuple((tuple((n(a), val) for a, val in conds), d) for conds, d in t.cases),
            t.default) for x, t in env.dynamics.items()},
        sensor_error={n(s): v for s, v in env.sensor_error.items()},
        sensor_target={n(s): n(x) for s, x in env.sensor_target.items()},
        invariant={n(x): iv for x, iv in env.invariant.items()},
    )


def rename_cps(m: Cps, devices: Mapping[str, str], values: Mapping[str, str] = ()) -> Cps:
    return Cps(rename_env(m.env, devices), rename_proc(m.proc, devices, values))
