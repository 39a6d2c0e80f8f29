"""The engine / airplane models and their executable property suite.

An engine keeps its temperature in range with a cooling actuator: the
controller polls a temperature sensor every slot, switches cooling on above
the threshold, cools for a fixed number of slots, and signals on a warning
channel when the temperature is still high afterwards.  The airplane pairs
two renamed-apart engines with a checker process that turns warnings into
alarm/failure outputs, with the warning channel restricted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, field
from fractions import Fraction
from typing import Optional

from ccpscalc.terms import (
    Fix, IfElse, ProcVar, TickPrefix, ProcessTerm,
    Send, Receive, ReadSensor, WriteActuator,
    Cmp, Var, Lit, Real, Name, ON, OFF, UNIT,
    act, ticks, rat, fmt_rat, Out,
)
from ccpscalc.physics import (
    Cps, Interval, interval, make_env, make_cps, drift_table,
    cps_union, cps_parallel, cps_restrict, rename_cps, non_interfering,
)
from ccpscalc.abstraction import (
    DEADLOCK, build_abstract_lts, reach_envelope, FiniteLts,
)
from ccpscalc.analysis import (
    weak_bisim, check_congruence_instance, find_trace_to,
    check_time_properties,
)


@dataclass(frozen=True)
class EngineParams:
    initialTemp: Fraction = Fraction(0)
    delta: Fraction = Fraction(2, 5)        # disturbance radius
    epsilon: Fraction = Fraction(1, 10)     # sensor error radius
    heatOff: Fraction = Fraction(1)         # drift with cooling off
    heatOn: Fraction = Fraction(-1)         # drift with cooling on
    threshold: Fraction = Fraction(10)
    coolTicks: int = 5
    invariantBox: Interval = interval(0, 30)
    engineId: str = "ID"

    def __post_init__(self):
        for name in ("initialTemp", "delta", "epsilon", "heatOff", "heatOn", "threshold"):
            object.__setattr__(self, name, rat(getattr(self, name)))
        if self.delta < 0 or self.epsilon < 0 or self.coolTicks < 1:
            raise ValueError("need delta >= 0, epsilon >= 0, coolTicks >= 1")


DEFAULTS = EngineParams()
BAR = replace(DEFAULTS, heatOn=Fraction(-4, 5))    # cooling power reduced 20%
HAT = replace(DEFAULTS, heatOn=Fraction(-7, 10))   # reduced a further 10%


def controller(params: EngineParams) -> ProcessTerm:
    """Polling controller: sense each slot; above the threshold switch the
    coolant on, hold it for ``coolTicks`` slots, then either emit on the
    warning channel and keep cooling, or switch off and resume polling."""
    th = Lit(Real(params.threshold))
    cooling = act(
        WriteActuator(Lit(ON), "cool"),
        Fix("Y", ticks(params.coolTicks, act(
            ReadSensor("x", "st"),
            IfElse(
                Cmp(">", Var("x"), th),
                act(Send("warning", Lit(Name(params.engineId))), ProcVar("Y")),
                act(WriteActuator(Lit(OFF), "cool"), TickPrefix(ProcVar("X"))),
            )))))
    return Fix("X", act(
        ReadSensor("x", "st"),
        IfElse(Cmp(">", Var("x"), th), cooling, TickPrefix(ProcVar("X")))))


def build_engine(params: EngineParams = DEFAULTS) -> Cps:
    """Engine system: single temperature variable, one cooling switch, one
    temperature sensor with a symmetric error band, additive drift selected
    by the coolant state, and a box invariant."""
    env = make_env(
        state={"temp": params.initialTemp},
        actuators={"cool": OFF},
        uncertainty={"temp": params.delta},
        dynamics={"temp": drift_table([({"cool": ON}, params.heatOn)], params.heatOff)},
        sensor_error={"st": params.epsilon},
        sensor_target={"st": "temp"},
        invariant={"temp": params.invariantBox},
    )
    return make_cps(env, controller(params))


def _engine_side(params: EngineParams, side: str) -> Cps:
    suffix = {"L": "_l", "R": "_r"}[side]
    eng = build_engine(replace(params, engineId=side))
    return rename_cps(eng, {"temp": "temp" + suffix,
                            "cool": "cool" + suffix,
                            "st": "st" + suffix})


def check_process() -> ProcessTerm:
    """Warning monitor: the first warning arms a five-slot watch on the other
    engine; a second warning from the other side raises the alarm; five slots
    of one-sided warnings report that engine's failure."""
    def arm(idx: int, engine_id: str) -> ProcessTerm:
        other_warning = act(Send("alarm", Lit(UNIT)), TickPrefix(ProcVar("X")))
        if idx == 5:
            fail_now = act(Send("failure", Lit(Name(engine_id))), TickPrefix(ProcVar("X")))
            fail_timeout = act(Send("failure", Lit(Name(engine_id))), ProcVar("X"))
            return _timeout_recv(
                "z", IfElse(Cmp("!=", Var("z"), Lit(Name(engine_id))),
                            other_warning, fail_now),
                fail_timeout)
        nxt = arm(idx + 1, engine_id)
        return _timeout_recv(
            "y", IfElse(Cmp("!=", Var("y"), Lit(Name(engine_id))),
                        other_warning, TickPrefix(nxt)),
            nxt)

    body = _timeout_recv(
        "x", IfElse(Cmp("=", Var("x"), Lit(Name("L"))), arm(1, "L"), arm(1, "R")),
        ProcVar("X"))
    return Fix("X", body)


def _timeout_recv(var: str, cont: ProcessTerm, timeout: ProcessTerm) -> ProcessTerm:
    from ccpscalc.terms import TimeoutPrefix
    return TimeoutPrefix(Receive("warning", var), cont, timeout)


def build_airplane(params: EngineParams = DEFAULTS) -> Cps:
    """Two renamed-apart engines joined by disjoint union, in parallel with
    the warning monitor, with the warning channel restricted."""
    left = _engine_side(params, "L")
    right = _engine_side(params, "R")
    both = cps_union(left, right)
    return cps_restrict(cps_parallel(both, check_process()), "warning")


def engine_envelopes(params: EngineParams) -> tuple[Interval, Interval]:
    """Expected turn-on / turn-off temperature envelopes from the cooling-
    cycle bounds: on entry the temperature sits in
    (threshold - eps, threshold + heatOff + eps + delta]; each cooling slot
    shifts both ends by the cooling drift widened by the disturbance."""
    th, eps, d = params.threshold, params.epsilon, params.delta
    on_lo, on_hi = th - eps, th + params.heatOff + eps + d
    k = params.coolTicks
    cool = params.heatOn
    off_lo = on_lo + k * (cool - d)
    off_hi = on_hi + k * (cool + d)
    return (interval(on_lo, on_hi, True, False), interval(off_lo, off_hi, True, False))


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------

@dataclass
class SuiteEntry:
    name: str
    passed: bool
    detail: str


@dataclass
class SuiteReport:
    entries: list

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_json_dict(self):
        return {"allPass": self.all_pass,
                "entries": [{"name": e.name, "passed": e.passed, "detail": e.detail}
                            for e in self.entries]}

    def lines(self):
        return [f"{'PASS' if e.passed else 'FAIL'}  {e.name}: {e.detail}"
                for e in self.entries]


def proposition_suite(params: EngineParams = DEFAULTS,
                      oracle_depth: int = 12, oracle_samples: int = 30) -> SuiteReport:
    """Run the case-study property checks in order and report pass/fail."""
    entries: list[SuiteEntry] = []
    bar = replace(params, heatOn=BAR.heatOn)
    hat = replace(params, heatOn=HAT.heatOn)

    eng = build_engine(params)
    lts_eng = build_abstract_lts(eng)
    lts_bar = build_abstract_lts(build_engine(bar))
    lts_hat = build_abstract_lts(build_engine(hat))

    # 1: only internal/timed behaviour, no deadlock, no terminal state
    outs = [a for a in lts_eng.actions() if isinstance(a, Out)]
    dead = lts_eng.deadlock_indices()
    succ = lts_eng.successors()
    terminal = [i for i in range(lts_eng.num_states)
                if not succ[i] and i not in dead]
    p1 = not outs and not dead and not terminal
    entries.append(SuiteEntry(
        "engine-safe", p1,
        f"outputs={len(outs)} deadlocks={len(dead)} terminal={len(terminal)}"))

    # 2: exact switch envelopes
    on_exp, off_exp = engine_envelopes(params)
    on_got = reach_envelope(lts_eng, "turn_on")["temp"]
    off_got = reach_envelope(lts_eng, "turn_off")["temp"]
    p2 = on_got == on_exp and off_got == off_exp
    entries.append(SuiteEntry(
        "switch-envelopes", p2,
        f"on={on_got} (expected {on_exp}), off={off_got} (expected {off_exp})"))

    # 3: the reduced-power variant is equivalent, with its own envelope
    v3 = weak_bisim(lts_eng, lts_bar)
    off_bar_exp = engine_envelopes(bar)[1]
    off_bar_got = reach_envelope(lts_bar, "turn_off")["temp"]
    p3 = v3.bisimilar and off_bar_got == off_bar_exp
    entries.append(SuiteEntry(
        "reduced-power-equivalent", p3,
        f"verdict={'bisimilar' if v3.bisimilar else 'not-bisimilar'}, "
        f"post-cooling={off_bar_got} (expected {off_bar_exp})"))

    # 4: the further-reduced variant is distinguishable by a warning trace
    v4 = weak_bisim(lts_eng, lts_hat)
    has_warn = v4.witness is not None and any(
        isinstance(a, Out) and a.channel == "warning" for a in v4.witness)
    trace = find_trace_to(build_engine(hat), "out warning", bound=17)
    p4 = (not v4.bisimilar) and has_warn and trace is not None
    entries.append(SuiteEntry(
        "overreduced-distinguished", p4,
        "witness=" + ("-" if v4.witness is None else
                      "/".join(str(a) for a in v4.witness)) +
        (f", warning in slot {trace.target_slot}" if trace else ", no trace")))

    # 5: congruence chain for the airplane
    left, right = _engine_side(params, "L"), _engine_side(params, "R")
    bleft, bright = _engine_side(bar, "L"), _engine_side(bar, "R")
    comp = weak_bisim(build_abstract_lts(left), build_abstract_lts(bleft))
    rep = check_congruence_instance(
        cps_union(left, right), cps_union(bleft, bright),
        [("parallel", check_process()), ("restrict", "warning")])
    stage_ok = comp.bisimilar and rep.component.bisimilar \
        and all(v.bisimilar for _, v in rep.stages) and not rep.violation
    entries.append(SuiteEntry(
        "airplane-congruence", stage_ok,
        f"component={'ok' if comp.bisimilar else 'FAIL'}, union="
        f"{'ok' if rep.component.bisimilar else 'FAIL'}, "
        + ", ".join(f"{d}={'ok' if v.bisimilar else 'FAIL'}" for d, v in rep.stages)))

    # 6: timing-property oracle on all models
    oracle_ok = True
    details = []
    for name, system in (("eng", eng), ("eng-bar", build_engine(bar)),
                         ("eng-hat", build_engine(hat)),
                         ("airplane", build_airplane(params))):
        r = check_time_properties(system, depth=oracle_depth,
                                  samples=oracle_samples, seed=7)
        oracle_ok = oracle_ok and r.ok
        details.append(f"{name}:{'ok' if r.ok else 'FAIL'}({r.states_checked})")
    entries.append(SuiteEntry("timing-oracle", oracle_ok, " ".join(details)))

    return SuiteReport(entries)
