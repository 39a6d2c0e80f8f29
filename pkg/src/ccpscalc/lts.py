"""Small-step operational semantics.

Process level: channel send/receive, sensor read, actuator write, internal
communication, timeout, and lock-step time passing (time can pass in a
parallel composition only when no internal communication is possible).

System level: channel actions are observable; sensor reads and actuator
writes become internal steps against the plant; time passes only when no
internal step is possible and moves the plant to a next admissible state.
The continuous choices (disturbance within the uncertainty box, measured
value within the sensor band) are delegated to a resolver.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional

from ccpscalc.terms import (
    CcpsError, EvalError,
    ProcessTerm, Nil, TickPrefix, Parallel, TimeoutPrefix, IfElse,
    Restrict, ProcVar, Fix, unfold_fix,
    Send, Receive, ReadSensor, WriteActuator,
    Value, Real, eval_expr, eval_bool, bool_vars, subst_bool, subst_expr,
    free_data_vars, expr_vars,
    Label, Tau, Tick, Out, In, ActWrite, SensRead, TAU, TICK,
    label_sort_key, canonical_key, fmt_rat,
)
from ccpscalc.physics import (
    Cps, Interval, PhysicalEnv, invariant_holds, next_envs, read_sensor,
    update_act, with_state,
)


class ResolverOutOfRange(CcpsError):
    """A resolver returned a point outside the interval it was offered."""


class StuckAt(CcpsError):
    """Trace replay found no step matching the scripted selector."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"no step matches script entry {index}")


# ---------------------------------------------------------------------------
# Identity-keyed caches (terms are immutable and shared, so caching by id is
# sound; caches are cleared when they grow past a bound)
# ---------------------------------------------------------------------------

_CACHE_LIMIT = 200_000

_fv_cache: dict[int, tuple] = {}
_steps_cache: dict[int, tuple] = {}
_unfold_cache: dict[int, tuple] = {}
_par_intern: dict[tuple[int, int], Parallel] = {}
_restrict_intern: dict[tuple[int, str], Restrict] = {}


def _trim(cache: dict):
    if len(cache) > _CACHE_LIMIT:
        cache.clear()


def _fv(term: ProcessTerm) -> frozenset[str]:
    hit = _fv_cache.get(id(term))
    if hit is not None and hit[0] is term:
        return hit[1]
    out = free_data_vars(term)
    _trim(_fv_cache)
    _fv_cache[id(term)] = (term, out)
    return out


def _par(left: ProcessTerm, right: ProcessTerm) -> Parallel:
    key = (id(left), id(right))
    hit = _par_intern.get(key)
    if hit is not None and hit.left is left and hit.right is right:
        return hit
    node = Parallel(left, right)
    _trim(_par_intern)
    _par_intern[key] = node
    return node


def _restr(body: ProcessTerm, channel: str) -> Restrict:
    key = (id(body), channel)
    hit = _restrict_intern.get(key)
    if hit is not None and hit.body is body:
        return hit
    node = Restrict(body, channel)
    _trim(_restrict_intern)
    _restrict_intern[key] = node
    return node


def instantiate(term: ProcessTerm, var: str, v: Value) -> ProcessTerm:
    """Substitute ``v`` for ``var`` and resolve any conditional whose guard
    thereby closes, reusing untouched subterm objects."""
    from ccpscalc.terms import _trusted_rebuild
    with _trusted_rebuild():
        return _instantiate(term, var, v)


def _instantiate(term: ProcessTerm, var: str, v: Value) -> ProcessTerm:
    instantiate = _instantiate
    if var not in _fv(term):
        return term
    if isinstance(term, IfElse):
        if var in bool_vars(term.guard):
            g = subst_bool(term.guard, var, v)
            if not bool_vars(g):
                branch = term.then_branch if eval_bool(g) else term.else_branch
                return instantiate(branch, var, v)
            return IfElse(g, instantiate(term.then_branch, var, v),
                          instantiate(term.else_branch, var, v))
        return IfElse(term.guard, instantiate(term.then_branch, var, v),
                      instantiate(term.else_branch, var, v))
    if isinstance(term, Parallel):
        return _par(instantiate(term.left, var, v), instantiate(term.right, var, v))
    if isinstance(term, TickPrefix):
        return TickPrefix(instantiate(term.body, var, v))
    if isinstance(term, Restrict):
        return _restr(instantiate(term.body, var, v), term.channel)
    if isinstance(term, Fix):
        return Fix(term.var, instantiate(term.body, var, v))
    if isinstance(term, TimeoutPrefix):
        p = term.prefix
        timeout = instantiate(term.timeout, var, v)
        if isinstance(p, (Receive, ReadSensor)) and p.var == var:
            cont = term.continuation
        else:
            cont = instantiate(term.continuation, var, v)
        if isinstance(p, Send):
            p = Send(p.channel, subst_expr(p.expr, var, v))
        elif isinstance(p, WriteActuator):
            p = WriteActuator(subst_expr(p.expr, var, v), p.actuator)
        return TimeoutPrefix(p, cont, timeout)
    return term


# ---------------------------------------------------------------------------
# Process-level steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PStep:
    """One process-level transition.  For input and sensor-read steps the
    bound variable is uninstantiated: ``target`` is None and the pair
    (``var``, ``body``) awaits a value from the context."""

    label: Label
    target: Optional[ProcessTerm] = None
    var: Optional[str] = None
    body: Optional[ProcessTerm] = None
    note: str = ""

    @property
    def symbolic(self) -> bool:
        return self.target is None

    def resolve(self, v: Value) -> ProcessTerm:
        return instantiate(self.body, self.var, v)


def _unfold(term: Fix) -> ProcessTerm:
    hit = _unfold_cache.get(id(term))
    if hit is not None and hit[0] is term:
        return hit[1]
    out = unfold_fix(term)
    _trim(_unfold_cache)
    _unfold_cache[id(term)] = (term, out)
    return out


def process_steps(p: ProcessTerm) -> tuple[PStep, ...]:
    """All transitions of a closed process term.

    Sensor reads and channel inputs appear as binder steps; time steps obey
    the no-internal-step premise of timed parallel composition.
    """
    hit = _steps_cache.get(id(p))
    if hit is not None and hit[0] is p:
        return hit[1]
    out = _compute_steps(p)
    _trim(_steps_cache)
    _steps_cache[id(p)] = (p, out)
    return out


def _compute_steps(p: ProcessTerm) -> tuple[PStep, ...]:
    if isinstance(p, Nil):
        return (PStep(TICK, p),)
    if isinstance(p, TickPrefix):
        return (PStep(TICK, p.body),)
    if isinstance(p, TimeoutPrefix):
        pre = p.prefix
        steps: list[PStep] = []
        if isinstance(pre, Send):
            steps.append(PStep(Out(pre.channel, eval_expr(pre.expr)), p.continuation))
        elif isinstance(pre, Receive):
            steps.append(PStep(In(pre.channel, None), None, pre.var, p.continuation))
        elif isinstance(pre, ReadSensor):
            steps.append(PStep(SensRead(pre.sensor, None), None, pre.var, p.continuation))
        elif isinstance(pre, WriteActuator):
            steps.append(PStep(ActWrite(pre.actuator, eval_expr(pre.expr)), p.continuation))
        else:
            raise TypeError(f"unknown prefix {pre!r}")
        steps.append(PStep(TICK, p.timeout))
        return tuple(steps)
    if isinstance(p, IfElse):
        if bool_vars(p.guard):
            raise EvalError("cannot step a conditional with a free guard variable")
        branch = p.then_branch if eval_bool(p.guard) else p.else_branch
        return process_steps(branch)
    if isinstance(p, Fix):
        return process_steps(_unfold(p))
    if isinstance(p, ProcVar):
        raise CcpsError(f"cannot step open term: free process variable {p.name!r}")
    if isinstance(p, Restrict):
        c = p.channel
        out: list[PStep] = []
        for st in process_steps(p.body):
            lbl = st.label
            if isinstance(lbl, (Out, In)) and lbl.channel == c:
                continue
            if st.symbolic:
                out.append(PStep(lbl, None, st.var, _restr(st.body, c), st.note))
            else:
                out.append(PStep(lbl, _restr(st.target, c), note=st.note))
        return tuple(out)
    if isinstance(p, Parallel):
        ls = process_steps(p.left)
        rs = process_steps(p.right)
        out = []
        ltick = rtick = None
        for st in ls:
            if isinstance(st.label, Tick):
                ltick = st
            elif st.symbolic:
                out.append(PStep(st.label, None, st.var, _par(st.body, p.right), st.note))
            else:
                out.append(PStep(st.label, _par(st.target, p.right), note=st.note))
        for st in rs:
            if isinstance(st.label, Tick):
                rtick = st
            elif st.symbolic:
                out.append(PStep(st.label, None, st.var, _par(p.left, st.body), st.note))
            else:
                out.append(PStep(st.label, _par(p.left, st.target), note=st.note))
        # internal communication between the two sides
        for snd, rcv, flip in ((ls, rs, False), (rs, ls, True)):
            for so in snd:
                if not isinstance(so.label, Out):
                    continue
                for si in rcv:
                    if isinstance(si.label, In) and si.label.channel == so.label.channel:
                        inst = si.resolve(so.label.value)
                        tgt = _par(inst, so.target) if flip else _par(so.target, inst)
                        out.append(PStep(TAU, tgt, note=f"com:{so.label.channel}"))
        if ltick is not None and rtick is not None and not any(
                isinstance(st.label, Tau) for st in out):
            out.append(PStep(TICK, _par(ltick.target, rtick.target)))
        return tuple(out)
    raise TypeError(f"unknown term node {p!r}")


# ---------------------------------------------------------------------------
# Resolvers for the continuous choices
# ---------------------------------------------------------------------------

class DisturbanceResolver:
    """Chooses points from the intervals offered by sensor reads and by the
    evolution law.  Every returned point must lie inside its interval."""

    def sensor_values(self, step_index: int, sensor: str, iv: Interval) -> list[Fraction]:
        raise NotImplementedError

    def tick_points(self, step_index: int, box: dict[str, Interval]) -> list[dict[str, Fraction]]:
        raise NotImplementedError


class ZeroNoise(DisturbanceResolver):
    """No disturbance, no sensor error: always the interval centre."""

    def sensor_values(self, step_index, sensor, iv):
        return [(iv.lo + iv.hi) / 2]

    def tick_points(self, step_index, box):
        return [{x: (iv.lo + iv.hi) / 2 for x, iv in box.items()}]


class SeededSampler(DisturbanceResolver):
    """Uniform exact-rational sampling, reproducible from the seed."""

    def __init__(self, seed: int, denom_bits: int = 48):
        self.rng = random.Random(seed)
        self.denom = 1 << denom_bits
        self.bits = denom_bits

    def _uniform(self, iv: Interval) -> Fraction:
        if iv.is_point:
            return iv.lo
        for _ in range(64):
            u = Fraction(self.rng.getrandbits(self.bits), self.denom)
            x = iv.lo + (iv.hi - iv.lo) * u
            if iv.contains(x):
                return x
        return iv.pick()

    def sensor_values(self, step_index, sensor, iv):
        return [self._uniform(iv)]

    def tick_points(self, step_index, box):
        return [{x: self._uniform(iv) for x, iv in sorted(box.items())}]


class Scripted(DisturbanceResolver):
    """Replays pre-chosen values: ``entries[i]`` may carry ``sensors``
    (sensor name -> measured value) and ``next`` (variable -> next value)
    for replay step ``i``.  Missing entries fall back to the centre."""

    def __init__(self, entries: Iterable[Mapping]):
        self.entries = list(entries)

    def _entry(self, i):
        return self.entries[i] if 0 <= i < len(self.entries) else {}

    def sensor_values(self, step_index, sensor, iv):
        v = self._entry(step_index).get("sensors", {}).get(sensor)
        return [(iv.lo + iv.hi) / 2 if v is None else Fraction(v)]

    def tick_points(self, step_index, box):
        chosen = self._entry(step_index).get("next", {})
        return [{x: Fraction(chosen[x]) if x in chosen else (iv.lo + iv.hi) / 2
                 for x, iv in box.items()}]


class Adversarial(DisturbanceResolver):
    """Delegates every choice to a callback
    ``fn(kind, step_index, name, interval) -> Fraction`` with
    ``kind`` in {'sensor', 'next'}."""

    def __init__(self, fn: Callable[[str, int, str, Interval], Fraction]):
        self.fn = fn

    def sensor_values(self, step_index, sensor, iv):
        return [Fraction(self.fn("sensor", step_index, sensor, iv))]

    def tick_points(self, step_index, box):
        return [{x: Fraction(self.fn("next", step_index, x, iv))
                 for x, iv in sorted(box.items())}]


# ---------------------------------------------------------------------------
# System-level steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SysStep:
    """One system-level transition with the resolution choices it embodies."""

    action: Label  # Tau | Out | In | Tick
    successor: Cps
    source: str = ""               # 'proc' | 'com:c' | 'read:s' | 'write:a' | 'chan' | 'time'
    resolution: tuple = ()         # ((name, Fraction), ...) points chosen

    def sort_key(self):
        return (label_sort_key(self.action), self.source,
                tuple((k, str(v)) for k, v in self.resolution),
                canonical_key(self.successor.proc))


def system_steps(m: Cps, resolver: DisturbanceResolver | None = None,
                 step_index: int = 0,
                 input_values: Mapping[str, Iterable[Value]] | None = None
                 ) -> list[SysStep]:
    """All system transitions of ``m`` under ``resolver``.

    Empty when the invariant is violated (the system is deadlocked).
    Channel inputs are closed-world: they fire only for channels listed in
    ``input_values``.  Time passes only when no internal step exists.
    """
    if resolver is None:
        resolver = ZeroNoise()
    env = m.env
    if not invariant_holds(env):
        return []
    psteps = process_steps(m.proc)
    out: list[SysStep] = []
    tau_possible = False
    tick_step = None
    for st in psteps:
        lbl = st.label
        if isinstance(lbl, Tau):
            tau_possible = True
            out.append(SysStep(TAU, Cps(env, st.target), st.note or "proc"))
        elif isinstance(lbl, SensRead):
            tau_possible = True
            iv = read_sensor(env, lbl.sensor)
            for v in resolver.sensor_values(step_index, lbl.sensor, iv):
                if not iv.contains(v):
                    raise ResolverOutOfRange(
                        f"sensor {lbl.sensor}: {fmt_rat(v)} outside {iv}")
                out.append(SysStep(TAU, Cps(env, st.resolve(Real(v))),
                                   f"read:{lbl.sensor}", ((lbl.sensor, v),)))
        elif isinstance(lbl, ActWrite):
            tau_possible = True
            env2 = update_act(env, lbl.actuator, lbl.value)
            out.append(SysStep(TAU, Cps(env2, st.target), f"write:{lbl.actuator}"))
        elif isinstance(lbl, Out):
            out.append(SysStep(lbl, Cps(env, st.target), "chan"))
        elif isinstance(lbl, In):
            if input_values and lbl.channel in input_values:
                for v in input_values[lbl.channel]:
                    out.append(SysStep(In(lbl.channel, v), Cps(env, st.resolve(v)), "chan"))
        elif isinstance(lbl, Tick):
            tick_step = st
    if tick_step is not None and not tau_possible:
        box = next_envs(env)
        for sel in resolver.tick_points(step_index, box):
            new_state = {}
            for x, iv in box.items():
                v = sel[x]
                if not iv.contains(v):
                    raise ResolverOutOfRange(f"variable {x}: {fmt_rat(v)} outside {iv}")
                new_state[x] = v
            out.append(SysStep(TICK, Cps(with_state(env, new_state), tick_step.target),
                               "time", tuple(sorted(new_state.items()))))
    out.sort(key=SysStep.sort_key)
    return out


# ---------------------------------------------------------------------------
# Scripted replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSelector:
    """Matches one enabled system step during replay.  ``kind`` is one of
    'tick', 'tau', 'out', 'in'; the other fields refine the match."""

    kind: str
    channel: Optional[str] = None
    value: Optional[Value] = None
    source: Optional[str] = None

    def matches(self, step: SysStep) -> bool:
        a = step.action
        if self.kind == "tick" and not isinstance(a, Tick):
            return False
        if self.kind == "tau" and not isinstance(a, Tau):
            return False
        if self.kind == "out" and not isinstance(a, Out):
            return False
        if self.kind == "in" and not isinstance(a, In):
            return False
        if self.channel is not None and getattr(a, "channel", None) != self.channel:
            return False
        if self.value is not None and getattr(a, "value", None) != self.value:
            return False
        if self.source is not None and step.source != self.source:
            return False
        return True


@dataclass
class TraceRecord:
    stepIndex: int
    timeSlot: int
    action: str
    channel: Optional[str]
    value: Optional[str]
    perVariableState: dict
    actuatorValuation: dict
    resolvedDisturbances: dict


@dataclass
class TraceResult:
    final: Cps
    records: list[TraceRecord]


def run_trace(m: Cps, script: Iterable[StepSelector],
              resolver: DisturbanceResolver | None = None,
              input_values=None) -> TraceResult:
    """Deterministically replay ``script`` from ``m``.

    Each selector must match at least one enabled step (ties broken by the
    canonical step order); otherwise ``StuckAt`` reports the failing index.
    """
    cur = m
    slot = 1
    records: list[TraceRecord] = []
    for i, sel in enumerate(script):
        options = system_steps(cur, resolver, step_index=i, input_values=input_values)
        chosen = next((st for st in options if sel.matches(st)), None)
        if chosen is None:
            raise StuckAt(i)
        if isinstance(chosen.action, Tick):
            slot += 1
        records.append(_record(i, slot, chosen))
        cur = chosen.successor
    return TraceResult(cur, records)


def _record(index: int, slot: int, step: SysStep) -> TraceRecord:
    a = step.action
    channel = getattr(a, "channel", None)
    value = getattr(a, "value", None)
    kind = ("tick" if isinstance(a, Tick) else "tau" if isinstance(a, Tau)
            else "out" if isinstance(a, Out) else "in")
    env = step.successor.env
    return TraceRecord(
        stepIndex=index,
        timeSlot=slot,
        action=kind,
        channel=channel,
        value=None if value is None else str(value),
        perVariableState={x: fmt_rat(v) for x, v in sorted(env.state.items())},
        actuatorValuation={a_: str(v) for a_, v in sorted(env.actuators.items())},
        resolvedDisturbances={k: fmt_rat(v) for k, v in step.resolution},
    )


TRACE_FIELDS = ("stepIndex", "timeSlot", "action", "channel", "value",
                "perVariableState", "actuatorValuation", "resolvedDisturbances")


def trace_to_json(records: list[TraceRecord]) -> str:
    return json.dumps([{f: getattr(r, f) for f in TRACE_FIELDS} for r in records],
                      indent=2)


def trace_to_csv(records: list[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in records:
        w.writerow([
            r.stepIndex, r.timeSlot, r.action,
            "" if r.channel is None else r.channel,
            "" if r.value is None else r.value,
            json.dumps(r.perVariableState, sort_keys=True),
            json.dumps(r.actuatorValuation, sort_keys=True),
            json.dumps(r.resolvedDisturbances, sort_keys=True),
        ])
    return buf.getvalue()
