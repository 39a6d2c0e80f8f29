"""Finite abstraction of a plant+controller over interval boxes.

An abstract state is a control location (canonical process term plus
actuator valuation) with one interval per state variable.  Sensor reads
split on the guards the measured value feeds, refining the measured
variable's interval through the error band; time steps push the whole box
through the drift and clip it against the invariant, spawning a distinguished
deadlock state for the part that escapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional

from ccpscalc.terms import (
    CcpsError, ProcessTerm, Value, Label, Tau, Tick, Out, In, ActWrite, SensRead,
    TAU, TICK, canonical, canonical_key, label_sort_key,
    IfElse, Parallel, TickPrefix, Restrict, Fix, TimeoutPrefix, Nil, ProcVar,
    Send, Receive, ReadSensor, WriteActuator,
    BoolExpr, BoolLit, BoolOp, Not, Cmp, Var, Lit, Real, Name, Switch,
    bool_vars, expr_vars, eval_bool, fmt_rat, rat,
)
from ccpscalc.physics import (
    Cps, Interval, EMPTY, interval, point, PhysicalEnv,
)
from ccpscalc.lts import process_steps, instantiate, _fv


class AbstractionError(CcpsError):
    """The model is outside the fragment the box abstraction supports."""


class StateBudgetExceeded(CcpsError):
    def __init__(self, limit):
        super().__init__(f"abstract exploration exceeded {limit} states")
        self.limit = limit


class EmptySelection(CcpsError):
    """No abstract state matches a reach-envelope query."""


# ---------------------------------------------------------------------------
# Abstract states
# ---------------------------------------------------------------------------

class _Deadlock:
    """Absorbing state for invariant violation: no rule applies there."""

    def __repr__(self):
        return "DEADLOCK"

    def __str__(self):
        return "DEADLOCK"


DEADLOCK = _Deadlock()


@dataclass(frozen=True, eq=False)
class AbstractState:
    control: ProcessTerm                      # canonical form
    actuators: tuple[tuple[str, Value], ...]  # sorted valuation
    box: tuple[tuple[str, Interval], ...]     # sorted per-variable intervals

    @property
    def control_key(self) -> str:
        return canonical_key(self.control)

    @property
    def location(self) -> tuple:
        return (self.control_key, self.actuators)

    def boxes(self) -> dict[str, Interval]:
        return dict(self.box)

    def actuator_map(self) -> dict[str, Value]:
        return dict(self.actuators)

    def __eq__(self, other):
        return (isinstance(other, AbstractState)
                and self.control_key == other.control_key
                and self.actuators == other.actuators
                and self.box == other.box)

    def __hash__(self):
        return hash((self.control_key, self.actuators, self.box))

    def __str__(self):
        box = ", ".join(f"{x} in {iv}" for x, iv in self.box)
        acts = ", ".join(f"{a}={v}" for a, v in self.actuators)
        return f"<{self.control_key} | {acts} | {box}>"


def _pack_box(box: Mapping[str, Interval]) -> tuple:
    return tuple(sorted(box.items()))


def _pack_acts(acts: Mapping[str, Value]) -> tuple:
    return tuple(sorted(acts.items()))


@dataclass(frozen=True)
class AbstractContext:
    """Static plant data shared by all abstract states of one model."""

    uncertainty: tuple[tuple[str, Fraction], ...]
    dynamics: tuple
    sensor_error: tuple[tuple[str, Fraction], ...]
    sensor_target: tuple[tuple[str, str], ...]
    invariant: tuple[tuple[str, Interval], ...]
    channel_inputs: tuple[tuple[str, tuple[Value, ...]], ...] = ()

    @staticmethod
    def of(env: PhysicalEnv, channel_inputs: Mapping[str, Iterable[Value]] | None = None
           ) -> "AbstractContext":
        return AbstractContext(
            uncertainty=tuple(sorted(env.uncertainty.items())),
            dynamics=tuple(sorted(env.dynamics.items())),
            sensor_error=tuple(sorted(env.sensor_error.items())),
            sensor_target=tuple(sorted(env.sensor_target.items())),
            invariant=tuple(sorted(env.invariant.items())),
            channel_inputs=tuple(sorted(
                (c, tuple(vs)) for c, vs in (channel_inputs or {}).items())),
        )

    def maps(self):
        return (dict(self.uncertainty), dict(self.dynamics),
                dict(self.sensor_error), dict(self.sensor_target),
                dict(self.invariant), dict(self.channel_inputs))


def initial_abstract_state(m: Cps) -> AbstractState | _Deadlock:
    env = m.env
    box = {x: point(v) for x, v in env.state.items()}
    for x, iv in env.invariant.items():
        if not iv.contains(env.state[x]):
            return DEADLOCK
    return AbstractState(canonical(m.proc), _pack_acts(env.actuators), _pack_box(box))


# ---------------------------------------------------------------------------
# Guard splitting for sensor reads
# ---------------------------------------------------------------------------

def _comparison_constants(term: ProcessTerm, var: str) -> set[Fraction]:
    """Constants the variable is compared against in guards.  Raises when the
    variable is used anywhere a single comparison constant cannot capture."""
    consts: set[Fraction] = set()

    def scan_expr(e, inside_guard: bool):
        if isinstance(e, Var) and e.name == var and not inside_guard:
            raise AbstractionError(
                f"sensed variable {var!r} used outside guards; "
                "box abstraction cannot enumerate its values")

    def scan_bool(b):
        if isinstance(b, BoolLit):
            return
        if isinstance(b, Not):
            scan_bool(b.arg)
            return
        if isinstance(b, BoolOp):
            scan_bool(b.left)
            scan_bool(b.right)
            return
        if isinstance(b, Cmp):
            lv = expr_vars(b.left)
            rv = expr_vars(b.right)
            if var not in lv and var not in rv:
                return
            if var in lv and var in rv:
                raise AbstractionError(
                    f"sensed variable {var!r} compared against itself")
            varside, constside = (b.left, b.right) if var in lv else (b.right, b.left)
            if not isinstance(varside, Var):
                raise AbstractionError(
                    f"sensed variable {var!r} used inside arithmetic in a guard")
            if expr_vars(constside):
                raise AbstractionError(
                    f"sensed variable {var!r} compared against a non-constant")
            from ccpscalc.terms import eval_expr
            c = eval_expr(constside)
            if not isinstance(c, Real):
                raise AbstractionError(
                    f"sensed variable {var!r} compared against a non-numeric value")
            consts.add(c.num)
            return
        raise AbstractionError(f"unknown guard node {b!r}")

    def go(t):
        if var not in _fv(t):
            return
        if isinstance(t, IfElse):
            scan_bool(t.guard)
            go(t.then_branch)
            go(t.else_branch)
            return
        if isinstance(t, Parallel):
            go(t.left)
            go(t.right)
            return
        if isinstance(t, TickPrefix):
            go(t.body)
            return
        if isinstance(t, (Restrict, Fix)):
            go(t.body)
            return
        if isinstance(t, TimeoutPrefix):
            p = t.prefix
            if isinstance(p, (Send, WriteActuator)) and var in expr_vars(p.expr):
                scan_expr(Var(var), False)
            if isinstance(p, (Receive, ReadSensor)) and p.var == var:
                pass  # shadowed below
            else:
                go(t.continuation)
            go(t.timeout)
            return
        if isinstance(t, (Nil, ProcVar)):
            return
        raise AbstractionError(f"unknown term node {t!r}")

    go(term)
    return consts


def _cells(sensed: Interval, thresholds: Iterable[Fraction]) -> list[Interval]:
    """Partition of the sensed-value interval by the guard thresholds: open
    segments between cuts plus point cells at the cuts."""
    cuts = sorted(set(thresholds))
    cells = []
    lo, lo_open = sensed.lo, sensed.lo_open
    for t in cuts:
        cells.append(interval(lo, t, lo_open, True).intersect(sensed))
        cells.append(interval(t, t).intersect(sensed))
        lo, lo_open = t, True
    cells.append(interval(lo, sensed.hi, lo_open, sensed.hi_open).intersect(sensed))
    return [c for c in cells if not c.is_empty]


def _decide_cmp(op: str, cell: Interval, c: Fraction, flipped: bool) -> bool:
    """Truth of ``v op c`` for all v in the cell (flipped: ``c op v``)."""
    if flipped:
        op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}[op]
    if op == "=":
        return cell.is_point and cell.lo == c
    if op == "!=":
        return not cell.contains(c)
    all_gt = cell.lo > c or (cell.lo == c and cell.lo_open)
    all_ge = cell.lo >= c
    all_lt = cell.hi < c or (cell.hi == c and cell.hi_open)
    all_le = cell.hi <= c
    if op == ">":
        if all_gt:
            return True
        if all_le:
            return False
    elif op == ">=":
        if all_ge:
            return True
        if all_lt:
            return False
    elif op == "<":
        if all_lt:
            return True
        if all_ge:
            return False
    elif op == "<=":
        if all_le:
            return True
        if all_gt:
            return False
    raise AbstractionError(f"cell {cell} does not decide comparison {op} {fmt_rat(c)}")


def _partial_guard(b: BoolExpr, var: str, cell: Interval):
    """Evaluate the parts of a guard that mention ``var`` over the cell;
    returns a bool or a residual guard free of ``var``."""
    if isinstance(b, BoolLit):
        return b.value if not bool_vars(b) else b
    if isinstance(b, Not):
        r = _partial_guard(b.arg, var, cell)
        return (not r) if isinstance(r, bool) else Not(r)
    if isinstance(b, BoolOp):
        l = _partial_guard(b.left, var, cell)
        r = _partial_guard(b.right, var, cell)
        if b.op == "and":
            if l is False or r is False:
                return False
            if l is True:
                return r
            if r is True:
                return l
            return BoolOp("and", l, r)
        if l is True or r is True:
            return True
        if l is False:
            return r
        if r is False:
            return l
        return BoolOp("or", l, r)
    if isinstance(b, Cmp):
        lv, rv = expr_vars(b.left), expr_vars(b.right)
        if var not in lv and var not in rv:
            if lv or rv:
                return b
            return eval_bool(b)
        from ccpscalc.terms import eval_expr
        if var in lv:
            c = eval_expr(b.right)
            flipped = False
        else:
            c = eval_expr(b.left)
            flipped = True
        if not isinstance(c, Real):
            raise AbstractionError("comparison of sensed value with non-numeric constant")
        return _decide_cmp(b.op, cell, c.num, flipped)
    raise AbstractionError(f"unknown guard node {b!r}")


def resolve_sensed(term: ProcessTerm, var: str, cell: Interval) -> ProcessTerm:
    """Take the guard branches determined by the sensed-value cell."""
    from ccpscalc.terms import _trusted_rebuild
    with _trusted_rebuild():
        return _resolve_sensed(term, var, cell)


def _resolve_sensed(term: ProcessTerm, var: str, cell: Interval) -> ProcessTerm:
    resolve_sensed = _resolve_sensed
    if cell.is_point:
        return instantiate(term, var, Real(cell.lo))
    if var not in _fv(term):
        return term
    if isinstance(term, IfElse):
        if var in bool_vars(term.guard):
            r = _partial_guard(term.guard, var, cell)
            if isinstance(r, bool):
                branch = term.then_branch if r else term.else_branch
                return resolve_sensed(branch, var, cell)
            return IfElse(r, resolve_sensed(term.then_branch, var, cell),
                          resolve_sensed(term.else_branch, var, cell))
        return IfElse(term.guard, resolve_sensed(term.then_branch, var, cell),
                      resolve_sensed(term.else_branch, var, cell))
    if isinstance(term, Parallel):
        return Parallel(resolve_sensed(term.left, var, cell),
                        resolve_sensed(term.right, var, cell))
    if isinstance(term, TickPrefix):
        return TickPrefix(resolve_sensed(term.body, var, cell))
    if isinstance(term, Restrict):
        return Restrict(resolve_sensed(term.body, var, cell), term.channel)
    if isinstance(term, Fix):
        return Fix(term.var, resolve_sensed(term.body, var, cell))
    if isinstance(term, TimeoutPrefix):
        p = term.prefix
        if isinstance(p, (Send, WriteActuator)) and var in expr_vars(p.expr):
            raise AbstractionError(
                f"sensed variable {var!r} used outside guards")
        timeout = resolve_sensed(term.timeout, var, cell)
        if isinstance(p, (Receive, ReadSensor)) and p.var == var:
            cont = term.continuation
        else:
            cont = resolve_sensed(term.continuation, var, cell)
        return TimeoutPrefix(p, cont, timeout)
    return term


# ---------------------------------------------------------------------------
# Abstract successors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbstractEdge:
    label: Label
    target: object  # AbstractState | DEADLOCK
    kind: str       # 'read' | 'write' | 'com' | 'proc' | 'chan' | 'time'
    detail: tuple = ()  # read: (sensor, var, cell); write: (actuator, value)


def abstract_successors(s: AbstractState, ctx: AbstractContext) -> list[AbstractEdge]:
    """Abstract counterparts of the system rules over the state's box."""
    uncertainty, dynamics, sensor_error, sensor_target, invariant, chan_in = ctx.maps()
    acts = s.actuator_map()
    box = s.boxes()
    edges: list[AbstractEdge] = []
    tau_possible = False
    tick_step = None
    for st in process_steps(s.control):
        lbl = st.label
        if isinstance(lbl, Tau):
            tau_possible = True
            edges.append(AbstractEdge(
                TAU, AbstractState(canonical(st.target), s.actuators, s.box),
                "com" if st.note.startswith("com:") else "proc",
                (st.note.split(":", 1)[1],) if st.note.startswith("com:") else ()))
        elif isinstance(lbl, SensRead):
            tau_possible = True
            sensor = lbl.sensor
            tv = sensor_target[sensor]
            eps = sensor_error[sensor]
            sensed = box[tv].widen(eps)
            thresholds = _comparison_constants(st.body, st.var)
            for cell in _cells(sensed, thresholds):
                refined = box[tv].intersect(cell.widen(eps))
                if refined.is_empty:
                    continue
                new_box = dict(box)
                new_box[tv] = refined
                cont = resolve_sensed(st.body, st.var, cell)
                edges.append(AbstractEdge(
                    TAU, AbstractState(canonical(cont), s.actuators, _pack_box(new_box)),
                    "read", (sensor, tv, cell)))
        elif isinstance(lbl, ActWrite):
            tau_possible = True
            new_acts = dict(acts)
            new_acts[lbl.actuator] = lbl.value
            edges.append(AbstractEdge(
                TAU, AbstractState(canonical(st.target), _pack_acts(new_acts), s.box),
                "write", (lbl.actuator, lbl.value)))
        elif isinstance(lbl, Out):
            edges.append(AbstractEdge(
                lbl, AbstractState(canonical(st.target), s.actuators, s.box), "chan"))
        elif isinstance(lbl, In):
            for v in chan_in.get(lbl.channel, ()):
                edges.append(AbstractEdge(
                    In(lbl.channel, v),
                    AbstractState(canonical(st.resolve(v)), s.actuators, s.box), "chan"))
        elif isinstance(lbl, Tick):
            tick_step = st
    if tick_step is not None and not tau_possible:
        moved = {}
        clipped = {}
        fully_inside = True
        any_alive = True
        for x, iv in box.items():
            d = dynamics[x].drift(acts)
            w = uncertainty[x]
            nxt = iv.shift(d).widen(w)
            moved[x] = nxt
            cl = nxt.intersect(invariant[x])
            clipped[x] = cl
            if cl.is_empty:
                any_alive = False
            if not invariant[x].contains_interval(nxt):
                fully_inside = False
        if any_alive:
            edges.append(AbstractEdge(
                TICK,
                AbstractState(canonical(tick_step.target), s.actuators, _pack_box(clipped)),
                "time"))
            if not fully_inside:
                edges.append(AbstractEdge(TICK, DEADLOCK, "time"))
        else:
            edges.append(AbstractEdge(TICK, DEADLOCK, "time"))
    return edges


# ---------------------------------------------------------------------------
# Finite LTS construction
# ---------------------------------------------------------------------------

@dataclass
class FiniteLts:
    """Explicit finite LTS: payloads per state, an initial state, and
    action-labelled edges between state indices."""

    states: list
    initial: int
    edges: frozenset  # {(src, Label, dst)}
    widened: bool = False

    @property
    def num_states(self) -> int:
        return len(self.states)

    def actions(self) -> set[Label]:
        return {a for _, a, _ in self.edges}

    def successors(self) -> dict[int, list[tuple[Label, int]]]:
        out: dict[int, list[tuple[Label, int]]] = {i: [] for i in range(len(self.states))}
        for src, a, dst in sorted(self.edges, key=lambda e: (e[0], label_sort_key(e[1]), e[2])):
            out[src].append((a, dst))
        return out

    def deadlock_indices(self) -> set[int]:
        return {i for i, p in enumerate(self.states) if p is DEADLOCK}


def build_abstract_lts(m: Cps, max_states: int = 20000, policy: str = "hull",
                       channel_inputs: Mapping[str, Iterable[Value]] | None = None
                       ) -> FiniteLts:
    """Fixpoint exploration from the abstract initial state.

    ``hull`` joins boxes per (control, actuators) location, which terminates
    for additive drift with box invariants; ``exact`` keeps every box apart
    up to the state budget.
    """
    if policy not in ("hull", "exact"):
        raise ValueError(f"unknown widening policy {policy!r}")
    ctx = AbstractContext.of(m.env, channel_inputs)
    init = initial_abstract_state(m)
    widened = False
    if init is DEADLOCK:
        return FiniteLts([DEADLOCK], 0, frozenset())

    if policy == "exact":
        index: dict[AbstractState, int] = {init: 0}
        states: list = [init]
        edges = set()
        dead_idx = None
        work = [init]
        while work:
            cur = work.pop()
            src = index[cur]
            for e in abstract_successors(cur, ctx):
                if e.target is DEADLOCK:
                    if dead_idx is None:
                        dead_idx = len(states)
                        states.append(DEADLOCK)
                    edges.add((src, e.label, dead_idx))
                    continue
                j = index.get(e.target)
                if j is None:
                    if len(states) >= max_states:
                        raise StateBudgetExceeded(max_states)
                    j = len(states)
                    index[e.target] = j
                    states.append(e.target)
                    work.append(e.target)
                edges.add((src, e.label, j))
        return FiniteLts(states, 0, frozenset(edges))

    # hull policy: one box per location, grown to fixpoint
    loc_box: dict[tuple, tuple] = {init.location: init.box}
    loc_ctrl: dict[tuple, tuple] = {init.location: (init.control, init.actuators)}
    out_edges: dict[tuple, set] = {}
    work = [init.location]
    iterations = 0
    while work:
        iterations += 1
        if iterations > 200 * max_states:
            raise StateBudgetExceeded(max_states)
        loc = work.pop()
        control, actuators = loc_ctrl[loc]
        cur = AbstractState(control, actuators, loc_box[loc])
        mine = set()
        for e in abstract_successors(cur, ctx):
            if e.target is DEADLOCK:
                mine.add((e.label, DEADLOCK))
                continue
            t = e.target
            tloc = t.location
            old = loc_box.get(tloc)
            if old is None:
                if len(loc_box) >= max_states:
                    raise StateBudgetExceeded(max_states)
                loc_box[tloc] = t.box
                loc_ctrl[tloc] = (t.control, t.actuators)
                work.append(tloc)
            else:
                joined = _join_boxes(old, t.box)
                if joined != old:
                    widened = True
                    loc_box[tloc] = joined
                    if tloc not in work:
                        work.append(tloc)
            mine.add((e.label, tloc))
        out_edges[loc] = mine
    order = sorted(loc_box.keys())
    states: list = []
    index: dict = {}
    for loc in order:
        control, actuators = loc_ctrl[loc]
        st = AbstractState(control, actuators, loc_box[loc])
        index[loc] = len(states)
        states.append(st)
    dead_idx = None
    edges = set()
    for loc, outs in out_edges.items():
        src = index[loc]
        for lbl, tgt in outs:
            if tgt is DEADLOCK:
                if dead_idx is None:
                    dead_idx = len(states)
                    states.append(DEADLOCK)
                edges.add((src, lbl, dead_idx))
            else:
                edges.add((src, lbl, index[tgt]))
    init_state = initial_abstract_state(m)
    return FiniteLts(states, index[init_state.location], frozenset(edges), widened)


def _join_boxes(a: tuple, b: tuple) -> tuple:
    da, db = dict(a), dict(b)
    return tuple(sorted((x, da[x].hull(db[x])) for x in da))


def build_bounded_lts(m: Cps, max_ticks: int, max_states: int = 100000,
                      channel_inputs: Mapping[str, Iterable[Value]] | None = None
                      ) -> FiniteLts:
    """Exact-box exploration cut off after ``max_ticks`` time steps."""
    ctx = AbstractContext.of(m.env, channel_inputs)
    init = initial_abstract_state(m)
    if init is DEADLOCK:
        return FiniteLts([DEADLOCK], 0, frozenset())
    index = {init: 0}
    states: list = [init]
    ticks = {init: 0}
    edges = set()
    dead_idx = None
    from collections import deque as _deque
    work = _deque([init])
    while work:
        cur = work.popleft()
        src = index[cur]
        depth = ticks[cur]
        for e in abstract_successors(cur, ctx):
            stepped = isinstance(e.label, Tick)
            if stepped and depth >= max_ticks:
                continue
            if e.target is DEADLOCK:
                if dead_idx is None:
                    dead_idx = len(states)
                    states.append(DEADLOCK)
                edges.add((src, e.label, dead_idx))
                continue
            j = index.get(e.target)
            if j is None:
                if len(states) >= max_states:
                    raise StateBudgetExceeded(max_states)
                j = len(states)
                index[e.target] = j
                states.append(e.target)
                ticks[e.target] = depth + (1 if stepped else 0)
                work.append(e.target)
            elif depth + (1 if stepped else 0) < ticks[e.target]:
                ticks[e.target] = depth + (1 if stepped else 0)
                work.append(e.target)
            edges.add((src, e.label, j))
    return FiniteLts(states, 0, frozenset(edges))


# ---------------------------------------------------------------------------
# Reach envelopes
# ---------------------------------------------------------------------------

def _pending(control: ProcessTerm, want) -> bool:
    try:
        steps = process_steps(control)
    except CcpsError:
        return False
    return any(want(st.label) for st in steps)


def parse_state_query(query: str) -> Callable[[AbstractState], bool]:
    """Small query language over abstract states.

    Conjunctions with '&'.  Atoms:
      ``all``                every state
      ``turn_on|turn_off``   shorthand for write:cool=on / write:cool=off
      ``write:ACT=VAL``      an actuator write of VAL to ACT is enabled
      ``read:SENSOR``        a read of SENSOR is enabled
      ``out:CHANNEL``        an output on CHANNEL is enabled
      ``act:ACT=VAL``        current actuator valuation maps ACT to VAL
    """
    def parse_value(text: str) -> Value:
        text = text.strip()
        if text in ("on", "off"):
            return Switch(text)
        if text.startswith("'") and text.endswith("'"):
            return Name(text[1:-1])
        return Real(rat(text))

    def atom(a: str) -> Callable[[AbstractState], bool]:
        a = a.strip()
        if a == "all":
            return lambda s: True
        if a == "turn_on":
            a = "write:cool=on"
        elif a == "turn_off":
            a = "write:cool=off"
        if ":" not in a:
            raise CcpsError(f"bad state query atom {a!r}")
        head, rest = a.split(":", 1)
        if head == "write":
            name, _, val = rest.partition("=")
            v = parse_value(val)
            return lambda s: _pending(
                s.control, lambda l: isinstance(l, ActWrite)
                and l.actuator == name and l.value == v)
        if head == "read":
            sensor = rest.strip()
            return lambda s: _pending(
                s.control, lambda l: isinstance(l, SensRead) and l.sensor == sensor)
        if head == "out":
            chan = rest.strip()
            return lambda s: _pending(
                s.control, lambda l: isinstance(l, Out) and l.channel == chan)
        if head == "act":
            name, _, val = rest.partition("=")
            v = parse_value(val)
            return lambda s: s.actuator_map().get(name.strip()) == v
        raise CcpsError(f"bad state query atom {a!r}")

    atoms = [atom(a) for a in query.split("&")]
    return lambda s: all(f(s) for f in atoms)


def reach_envelope(lts: FiniteLts, predicate) -> dict[str, Interval]:
    """Interval hull, per variable, over the abstract states matching the
    predicate (a callable or a query string)."""
    if isinstance(predicate, str):
        predicate = parse_state_query(predicate)
    acc: dict[str, Interval] = {}
    matched = False
    for payload in lts.states:
        if payload is DEADLOCK or not isinstance(payload, AbstractState):
            continue
        if not predicate(payload):
            continue
        matched = True
        for x, iv in payload.box:
            acc[x] = acc.get(x, EMPTY).hull(iv)
    if not matched:
        raise EmptySelection("no abstract state matches the query")
    return acc


# ---------------------------------------------------------------------------
# Text export / import
# ---------------------------------------------------------------------------

def _format_value(v: Value) -> str:
    return str(v)


def _parse_value(text: str) -> Value:
    text = text.strip()
    if text in ("on", "off"):
        return Switch(text)
    if text.startswith("'") and text.endswith("'"):
        return Name(text[1:-1])
    return Real(rat(text))


def format_action(a: Label) -> str:
    if isinstance(a, Tau):
        return "tau"
    if isinstance(a, Tick):
        return "tick"
    if isinstance(a, Out):
        return f"out({a.channel},{_format_value(a.value)})"
    if isinstance(a, In):
        return f"in({a.channel},{_format_value(a.value)})"
    raise CcpsError(f"not a system action: {a!r}")


def parse_action(text: str) -> Label:
    text = text.strip()
    if text == "tau":
        return TAU
    if text == "tick":
        return TICK
    for head, cls in (("out(", Out), ("in(", In)):
        if text.startswith(head) and text.endswith(")"):
            inner = text[len(head):-1]
            chan, _, val = inner.partition(",")
            return cls(chan.strip(), _parse_value(val))
    raise CcpsError(f"bad action {text!r}")


def lts_to_text(lts: FiniteLts) -> str:
    lines = [f"states {lts.num_states}", f"initial {lts.initial}"]
    for src, a, dst in sorted(lts.edges, key=lambda e: (e[0], label_sort_key(e[1]), e[2])):
        lines.append(f"{src} {format_action(a)} {dst}")
    return "\n".join(lines) + "\n"


def lts_from_text(text: str) -> FiniteLts:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("states ") or not lines[1].startswith("initial "):
        raise CcpsError("bad LTS header")
    n = int(lines[0].split()[1])
    initial = int(lines[1].split()[1])
    edges = set()
    for ln in lines[2:]:
        src_s, rest = ln.split(None, 1)
        action_s, dst_s = rest.rsplit(None, 1)
        edges.add((int(src_s), parse_action(action_s), int(dst_s)))
    if not (0 <= initial < max(n, 1)):
        raise CcpsError("initial state out of range")
    return FiniteLts([None] * n, initial, frozenset(edges))
