"""Executable workbench for a discrete-time calculus of cyber-physical systems.

A system is a physical plant (state variables, actuators, sensors, an
evolution law with bounded disturbance, and an invariant) controlled by a
process term.  The package provides:

* ``terms``       -- the process-term algebra (substitution, congruence,
                     well-formedness).
* ``physics``     -- concrete plant environments and their operators.
* ``lts``         -- the small-step operational semantics and trace replay.
* ``abstraction`` -- finite interval abstractions of a plant+controller.
* ``analysis``    -- weak bisimulation checking, distinguishing traces,
                     timing-property oracles, Monte-Carlo simulation.
* ``casestudy``   -- the engine / airplane models and their property suite.
* ``dsl``         -- the ``.ccps`` model language (parser + printer).
* ``cli``         -- the ``ccps`` command-line driver.
"""

from ccpscalc.terms import (
    Value, Real, Switch, Name, ON, OFF, UNIT,
    ProcessTerm, Nil, TickPrefix, Parallel, TimeoutPrefix, IfElse,
    Restrict, ProcVar, Fix,
    Prefix, Send, Receive, ReadSensor, WriteActuator,
    Label, Tau, Tick, Out, In, ActWrite, SensRead, TAU, TICK,
    substitute_value, unfold_fix, structurally_congruent, well_formed,
)
from ccpscalc.physics import (
    Interval, EMPTY, PhysicalEnv, DriftTable, Cps,
    read_sensor, update_act, next_envs, invariant_holds,
    disjoint_union, non_interfering,
)
from ccpscalc.lts import (
    process_steps, system_steps, run_trace,
    ZeroNoise, SeededSampler, Scripted, Adversarial,
)
from ccpscalc.abstraction import (
    AbstractState, FiniteLts, build_abstract_lts, reach_envelope,
)
from ccpscalc.analysis import (
    weak_bisim, naive_weak_bisim, check_congruence_instance,
    find_trace_to, check_time_properties, monte_carlo,
)
from ccpscalc.casestudy import EngineParams, build_engine, build_airplane, proposition_suite
from ccpscalc.dsl import parse_model, print_model

__all__ = [name for name in dir() if not name.startswith("_")]
