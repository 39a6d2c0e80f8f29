"""Behavioural analysis: weak bisimilarity on finite LTSs, congruence
instances, distinguishing-trace search with concrete replay, timing-property
oracles, and reproducible Monte-Carlo campaigns.

Weak bisimilarity is decided by partition refinement on the tau-saturated
systems; a naive greatest-fixpoint checker over the transfer condition is
kept alongside as an independent oracle.
"""

from __future__ import annotations

import csv
import io
import json
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from ccpscalc.terms import (
    CcpsError, ProcessTerm, Value, Real, Label, Tau, Tick, Out, In, TAU, TICK,
    label_sort_key, canonical_key, structurally_congruent, acts_on_devices,
    instantaneous_bound, fmt_rat,
)
from ccpscalc.physics import (
    Cps, Interval, interval, point, invariant_holds, next_envs,
    non_interfering, cps_union, cps_parallel, cps_restrict, make_cps,
)
from ccpscalc.lts import (
    DisturbanceResolver, ZeroNoise, SeededSampler, Scripted, StepSelector,
    SysStep, TraceResult, process_steps, system_steps, run_trace, StuckAt,
)
from ccpscalc.abstraction import (
    DEADLOCK, AbstractContext, AbstractState, AbstractEdge, FiniteLts,
    abstract_successors, build_abstract_lts, format_action,
    initial_abstract_state,
)


class InterferenceViolation(CcpsError):
    """A congruence-instance context fails its non-interference side condition."""


class ConcretizationFailed(CcpsError):
    """An abstract path to the target was found but did not replay concretely."""


# ---------------------------------------------------------------------------
# Weak transition structure
# ---------------------------------------------------------------------------

class _Weak:
    """Tau closures and weak action images of a finite LTS (or union)."""

    def __init__(self, n: int, edges: Iterable[tuple[int, Label, int]]):
        self.n = n
        self.strong: dict[int, list[tuple[Label, int]]] = {i: [] for i in range(n)}
        acts = set()
        for s, a, t in edges:
            self.strong[s].append((a, t))
            if not isinstance(a, Tau):
                acts.add(a)
        self.actions = sorted(acts, key=label_sort_key)
        self.closure: list[frozenset[int]] = []
        for s in range(n):
            seen = {s}
            stack = [s]
            while stack:
                u = stack.pop()
                for a, t in self.strong[u]:
                    if isinstance(a, Tau) and t not in seen:
                        seen.add(t)
                        stack.append(t)
            self.closure.append(frozenset(seen))
        self._weak_img: dict[tuple[int, Label], frozenset[int]] = {}

    def weak(self, s: int, a: Label) -> frozenset[int]:
        """States reachable by  =a=>  (tau: just the closure)."""
        key = (s, a)
        hit = self._weak_img.get(key)
        if hit is not None:
            return hit
        if isinstance(a, Tau):
            out = self.closure[s]
        else:
            mids = set()
            for u in self.closure[s]:
                for b, t in self.strong[u]:
                    if b == a:
                        mids.add(t)
            out_set: set[int] = set()
            for t in mids:
                out_set |= self.closure[t]
            out = frozenset(out_set)
        self._weak_img[key] = out
        return out

    def weak_set(self, states: Iterable[int], a: Label) -> frozenset[int]:
        out: set[int] = set()
        for s in states:
            out |= self.weak(s, a)
        return frozenset(out)

    def closure_set(self, states: Iterable[int]) -> frozenset[int]:
        out: set[int] = set()
        for s in states:
            out |= self.closure[s]
        return frozenset(out)


def _union_lts(l1: FiniteLts, l2: FiniteLts):
    n1 = l1.num_states
    edges = [(s, a, t) for s, a, t in l1.edges]
    edges += [(s + n1, a, t + n1) for s, a, t in l2.edges]
    return n1 + l2.num_states, edges, l1.initial, l2.initial + n1


def _reachable(n: int, edges, roots: Iterable[int]) -> frozenset[int]:
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for s, _, t in edges:
        adj[s].append(t)
    seen = set(roots)
    stack = list(seen)
    while stack:
        u = stack.pop()
        for t in adj[u]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return frozenset(seen)


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

@dataclass
class BisimVerdict:
    bisimilar: bool
    relation: Optional[frozenset] = None       # pairs (state of l1, state of l2)
    witness: Optional[list[Label]] = None      # distinguishing action sequence
    witness_side: Optional[int] = None         # 1 or 2: the side performing it
    witness_kind: Optional[str] = None         # 'trace' | 'branching'

    def to_json_dict(self) -> dict:
        return {
            "verdict": "bisimilar" if self.bisimilar else "not-bisimilar",
            "relationSize": len(self.relation) if self.relation is not None else None,
            "witness": None if self.witness is None
            else [format_action(a) for a in self.witness],
            "witnessSide": self.witness_side,
            "witnessKind": self.witness_kind,
        }


# ---------------------------------------------------------------------------
# Naive greatest-fixpoint oracle (the independent reference)
# ---------------------------------------------------------------------------

def naive_weak_bisim(l1: FiniteLts, l2: FiniteLts) -> bool:
    """Greatest fixpoint of the weak transfer condition, iterated from the
    full relation over the union state space."""
    n, edges, i1, i2 = _union_lts(l1, l2)
    w = _Weak(n, edges)
    related = [[True] * n for _ in range(n)]
    changed = True
    while changed:
        changed = False
        for p in range(n):
            for q in range(n):
                if not related[p][q]:
                    continue
                if _naive_fails(w, related, p, q) or _naive_fails(w, related, q, p):
                    related[p][q] = False
                    related[q][p] = False
                    changed = True
    return related[i1][i2]


def _naive_fails(w: _Weak, related, p: int, q: int) -> bool:
    for a, p2 in w.strong[p]:
        if isinstance(a, Tau):
            candidates = w.closure[q]
        else:
            candidates = w.weak(q, a)
        if not any(related[p2][q2] for q2 in candidates):
            return True
    return False


# ---------------------------------------------------------------------------
# Partition refinement on the saturated systems
# ---------------------------------------------------------------------------

def _refine_partition(w: _Weak) -> list[int]:
    """Signature refinement over weak transitions; the final partition is the
    weak-bisimilarity quotient."""
    n = w.n
    block = [0] * n
    while True:
        sigs: dict[tuple, int] = {}
        new_block = [0] * n
        for s in range(n):
            sig = set()
            for t in w.closure[s]:
                sig.add((-1, block[t]))  # tau arrows (reflexive closure included)
            for a_i, a in enumerate(w.actions):
                for t in w.weak(s, a):
                    sig.add((a_i, block[t]))
            key = (block[s], frozenset(sig))
            idx = sigs.setdefault(key, len(sigs))
            new_block[s] = idx
        if new_block == block:
            return block
        block = new_block


def weak_bisim(l1: FiniteLts, l2: FiniteLts) -> BisimVerdict:
    """Decide weak bisimilarity of two finite LTSs.

    Bisimilar: the relation (same quotient block, both states reachable).
    Not bisimilar: a minimal distinguishing action sequence; a weak-trace
    difference when one exists, otherwise a branching witness whose validity
    is the oracle's own negative verdict.
    """
    n, edges, i1, i2 = _union_lts(l1, l2)
    w = _Weak(n, edges)
    block = _refine_partition(w)
    n1 = l1.num_states
    if block[i1] == block[i2]:
        reach = _reachable(n, edges, [i1, i2])
        rel = frozenset(
            (p, q - n1)
            for p in range(n1) if p in reach
            for q in range(n1, n) if q in reach and block[p] == block[q])
        return BisimVerdict(True, relation=rel)
    witness, side = _trace_witness(w, i1, i2)
    if witness is not None:
        return BisimVerdict(False, witness=witness, witness_side=side,
                            witness_kind="trace")
    witness, side = _branching_witness(w, block, i1, i2)
    return BisimVerdict(False, witness=witness, witness_side=side,
                        witness_kind="branching")


def _trace_witness(w: _Weak, i1: int, i2: int):
    """Shortest visible-action sequence in the weak-trace symmetric
    difference, by BFS over set pairs; ties broken by action order."""
    start = (w.closure[i1], w.closure[i2])
    seen = {start}
    queue = deque([(start, [])])
    while queue:
        (s1, s2), path = queue.popleft()
        for a in w.actions:
            img1 = w.weak_set(s1, a)
            img2 = w.weak_set(s2, a)
            if img1 and not img2:
                return path + [a], 1
            if img2 and not img1:
                return path + [a], 2
            if img1 and img2:
                nxt = (img1, img2)
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append((nxt, path + [a]))
    return None, None


def _branching_witness(w: _Weak, block: list[int], i1: int, i2: int):
    """Attack sequence when the two systems are weak-trace equivalent but not
    bisimilar: follow attacker moves whose every defender reply lands on a
    pair that falls out of the fixpoint strictly earlier."""
    rank = _ranks(w)
    path: list[Label] = []
    p, q = i1, i2
    side = None
    for _ in range(w.n * w.n + 1):
        if rank.get((p, q)) is None:
            break
        move = _best_attack(w, rank, p, q)
        if move is None:
            break
        a, from_first, nxt = move
        if not isinstance(a, Tau):
            path.append(a)
            if side is None:
                side = 1 if from_first else 2
        if nxt is None:
            break  # defender had no reply: game over
        p, q = nxt
    return path, (side or 1)


def _ranks(w: _Weak) -> dict[tuple[int, int], int]:
    """Iteration at which each pair falls out of the naive fixpoint."""
    n = w.n
    related = [[True] * n for _ in range(n)]
    ranks: dict[tuple[int, int], int] = {}
    rnd = 0
    changed = True
    while changed:
        rnd += 1
        changed = False
        dropped = []
        for p in range(n):
            for q in range(n):
                if not related[p][q]:
                    continue
                if _naive_fails(w, related, p, q) or _naive_fails(w, related, q, p):
                    dropped.append((p, q))
        for p, q in dropped:
            if related[p][q]:
                related[p][q] = False
                related[q][p] = False
                ranks[(p, q)] = rnd
                ranks[(q, p)] = rnd
                changed = True
    return ranks


def _best_attack(w: _Weak, rank, p: int, q: int):
    """One attacker move from a non-bisimilar pair: returns
    (action, from_first, next_pair_or_None), preferring moves with no reply,
    then moves whose worst defender reply has the smallest rank."""
    best = None
    for from_first in (True, False):
        src, other = (p, q) if from_first else (q, p)
        for a, s2 in sorted(w.strong[src], key=lambda at: (label_sort_key(at[0]), at[1])):
            replies = w.closure[other] if isinstance(a, Tau) else w.weak(other, a)
            if not replies:
                move = (a, from_first, None)
                score = (0, 0)
            else:
                worst = -1
                worst_t = None
                all_losing = True
                for t in sorted(replies):
                    pr = rank.get((s2, t) if from_first else (t, s2))
                    if pr is None:
                        all_losing = False
                        break
                    if pr > worst:
                        worst, worst_t = pr, t
                if not all_losing:
                    continue  # some defender reply survives: not an attack
                nxt = (s2, worst_t) if from_first else (worst_t, s2)
                move = (a, from_first, nxt)
                score = (1, worst)
            if best is None or score < best[0]:
                best = (score, move)
    return best[1] if best else None


def validate_witness(l1: FiniteLts, l2: FiniteLts, verdict: BisimVerdict) -> bool:
    """Replay a negative verdict's witness independently of the checker."""
    if verdict.bisimilar or verdict.witness is None:
        return False
    n, edges, i1, i2 = _union_lts(l1, l2)
    w = _Weak(n, edges)
    if verdict.witness_kind == "trace":
        perf, fail = (i1, i2) if verdict.witness_side == 1 else (i2, i1)
        sp = w.closure[perf]
        sf = w.closure[fail]
        for a in verdict.witness:
            sp = w.weak_set(sp, a)
            sf = w.weak_set(sf, a)
            if not sp:
                return False  # performer must complete the sequence
            if not sf:
                return True   # failer dies strictly earlier or at the end
        return False
    # branching witness: justified by the independent fixpoint oracle
    return not naive_weak_bisim(l1, l2)


# ---------------------------------------------------------------------------
# Congruence instances
# ---------------------------------------------------------------------------

@dataclass
class CongruenceReport:
    component: BisimVerdict
    stages: list  # [(description, BisimVerdict)]
    violation: bool

    def to_json_dict(self):
        return {
            "component": self.component.to_json_dict(),
            "stages": [{"context": d, **v.to_json_dict()} for d, v in self.stages],
            "congruenceViolation": self.violation,
        }


def check_congruence_instance(m: Cps, n: Cps, contexts,
                              max_states: int = 20000) -> CongruenceReport:
    """Check one instance of the congruence property: compose both systems
    with the same context(s) and compare verdicts before and after.

    ``contexts``: one of ('uplus', Cps), ('parallel', ProcessTerm),
    ('restrict', channel) or a sequence of them, applied in order.
    A bisimilar component with a non-bisimilar composite is flagged.
    """
    if contexts and isinstance(contexts, tuple) and isinstance(contexts[0], str):
        contexts = [contexts]
    component = weak_bisim(build_abstract_lts(m, max_states),
                           build_abstract_lts(n, max_states))
    stages = []
    cm, cn = m, n
    for ctx in contexts:
        kind = ctx[0]
        if kind == "uplus":
            other = ctx[1]
            if not (non_interfering(cm, other) and non_interfering(cn, other)):
                raise InterferenceViolation(
                    "disjoint-union context shares plant names with a component")
            cm, cn = cps_union(cm, other), cps_union(cn, other)
            desc = "uplus"
        elif kind == "parallel":
            p = ctx[1]
            if acts_on_devices(p):
                raise InterferenceViolation(
                    "parallel context reads sensors or writes actuators")
            cm, cn = cps_parallel(cm, p), cps_parallel(cn, p)
            desc = "parallel"
        elif kind == "restrict":
            c = ctx[1]
            cm, cn = cps_restrict(cm, c), cps_restrict(cn, c)
            desc = f"restrict {c}"
        else:
            raise CcpsError(f"unknown context kind {kind!r}")
        stages.append((desc, weak_bisim(build_abstract_lts(cm, max_states),
                                        build_abstract_lts(cn, max_states))))
    violation = component.bisimilar and any(not v.bisimilar for _, v in stages)
    return CongruenceReport(component, stages, violation)


# ---------------------------------------------------------------------------
# Distinguishing-trace search with concrete replay
# ---------------------------------------------------------------------------

@dataclass
class FoundTrace:
    script: list[StepSelector]
    resolver_entries: list[dict]
    result: TraceResult
    target_slot: int

    @property
    def records(self):
        return self.result.records


def _parse_target(target) -> Callable[[Label], bool]:
    if callable(target):
        return target
    text = str(target).strip()
    if text.startswith("out"):
        chan = text[3:].strip()
        if chan:
            return lambda a: isinstance(a, Out) and a.channel == chan
        return lambda a: isinstance(a, Out)
    if text == "tick":
        return lambda a: isinstance(a, Tick)
    if text == "tau":
        return lambda a: isinstance(a, Tau)
    raise CcpsError(f"bad trace target {target!r}")


def find_trace_to(m: Cps, target, bound: int,
                  max_nodes: int = 300000) -> Optional[FoundTrace]:
    """Search the exact box abstraction for a path whose edge satisfies the
    target within ``bound`` ticks, then concretise and replay it.

    Returns None only when no abstract path exists within the bound.  A path
    that fails concrete replay raises ``ConcretizationFailed``.
    """
    want = _parse_target(target)
    ctx = AbstractContext.of(m.env)
    init = initial_abstract_state(m)
    if init is DEADLOCK:
        return None
    # BFS with covering: skip states some visited state at the same location
    # subsumes (bigger box, no more ticks used).
    cover: dict[tuple, list[tuple[tuple, int]]] = {}
    parent: dict = {init: None}
    queue = deque([(init, 0)])
    cover[init.location] = [(init.box, 0)]
    nodes = 0
    goal = None
    while queue and goal is None:
        cur, ticks = queue.popleft()
        nodes += 1
        if nodes > max_nodes:
            raise CcpsError(f"trace search exceeded {max_nodes} nodes")
        for e in sorted(abstract_successors(cur, ctx),
                        key=lambda e: (label_sort_key(e.label), str(e.detail))):
            if want(e.label):
                goal = (cur, e)
                break
            if e.target is DEADLOCK:
                continue
            t2 = ticks + (1 if isinstance(e.label, Tick) else 0)
            if t2 > bound:
                continue
            tgt = e.target
            entries = cover.setdefault(tgt.location, [])
            tbox = dict(tgt.box)
            if any(t_ <= t2 and all(dict(b)[x].contains_interval(tbox[x]) for x in tbox)
                   for b, t_ in entries):
                continue
            entries.append((tgt.box, t2))
            if tgt not in parent:
                parent[tgt] = (cur, e)
            queue.append((tgt, t2))
    if goal is None:
        return None
    # reconstruct the abstract path
    last_state, last_edge = goal
    edges: list[tuple[AbstractState, AbstractEdge]] = [(last_state, last_edge)]
    s = last_state
    while parent[s] is not None:
        prev, e = parent[s]
        edges.append((prev, e))
        s = prev
    edges.reverse()
    return _concretize(m, ctx, edges, want)


def _concretize(m: Cps, ctx: AbstractContext,
                edges: list[tuple[AbstractState, AbstractEdge]], want) -> FoundTrace:
    uncertainty, dynamics, _, sensor_target, _, _ = ctx.maps()
    sensor_error = dict(ctx.sensor_error)
    # backward-feasible boxes per step
    k = len(edges)
    feas: list[dict[str, Interval]] = [None] * (k + 1)
    last_src, last_edge = edges[-1]
    feas[k] = dict(last_edge.target.box) if isinstance(last_edge.target, AbstractState) \
        else dict(last_src.box)
    for i in range(k - 1, -1, -1):
        src, e = edges[i]
        box = dict(src.box)
        f: dict[str, Interval] = {}
        if e.kind == "time" and isinstance(e.target, AbstractState):
            acts = src.actuator_map()
            for x, iv in box.items():
                d = dynamics[x].drift(acts)
                w = uncertainty[x]
                f[x] = iv.intersect(feas[i + 1][x].shift(-d).widen(w))
        else:
            for x, iv in box.items():
                f[x] = iv.intersect(feas[i + 1].get(x, iv))
        if any(v.is_empty for v in f.values()):
            raise ConcretizationFailed(f"infeasible abstract path at step {i}")
        feas[i] = f
    # forward point selection
    state = {x: v for x, v in m.env.state.items()}
    for x, iv in feas[0].items():
        if not iv.contains(state[x]):
            raise ConcretizationFailed(f"initial value of {x} outside feasible set")
    script: list[StepSelector] = []
    entries: list[dict] = []
    slot = 1
    target_slot = None
    for i, (src, e) in enumerate(edges):
        entry: dict = {}
        if e.kind == "time":
            acts = src.actuator_map()
            nxt = {}
            for x in state:
                d = dynamics[x].drift(acts)
                w = uncertainty[x]
                reachable = interval(state[x] + d - w, state[x] + d + w)
                cand = reachable.intersect(feas[i + 1][x])
                if cand.is_empty:
                    raise ConcretizationFailed(f"no admissible next value for {x} at step {i}")
                nxt[x] = cand.pick()
            entry["next"] = nxt
            state = nxt
            slot += 1
            script.append(StepSelector("tick"))
        elif e.kind == "read":
            sensor, tv, cell = e.detail
            eps = sensor_error[sensor]
            band = interval(state[tv] - eps, state[tv] + eps)
            cand = band.intersect(cell)
            if cand.is_empty:
                raise ConcretizationFailed(
                    f"no admissible measurement for {sensor} at step {i}")
            entry["sensors"] = {sensor: cand.pick()}
            script.append(StepSelector("tau", source=f"read:{sensor}"))
        elif e.kind == "write":
            act, _ = e.detail
            script.append(StepSelector("tau", source=f"write:{act}"))
        elif e.kind == "com":
            script.append(StepSelector("tau", source=f"com:{e.detail[0]}"))
        elif e.kind == "proc":
            script.append(StepSelector("tau", source="proc"))
        elif e.kind == "chan":
            lbl = e.label
            if isinstance(lbl, Out):
                script.append(StepSelector("out", channel=lbl.channel, value=lbl.value))
            else:
                script.append(StepSelector("in", channel=lbl.channel,
                                           value=getattr(lbl, "value", None)))
        else:
            raise CcpsError(f"unknown abstract edge kind {e.kind!r}")
        entries.append(entry)
        if want(e.label) and target_slot is None:
            target_slot = slot
    try:
        result = run_trace(m, script, Scripted(entries))
    except (StuckAt, CcpsError) as exc:
        raise ConcretizationFailed(f"concrete replay failed: {exc}") from exc
    last = result.records[-1]
    ok = want(edges[-1][1].label)
    if not ok:
        raise ConcretizationFailed("replayed trace does not end at the target")
    return FoundTrace(script, entries, result, target_slot)


# ---------------------------------------------------------------------------
# Timing-property oracles
# ---------------------------------------------------------------------------

class _ProbeResolver(DisturbanceResolver):
    """Offers interval endpoints and the centre: a finite, deterministic
    sample of the continuous choices, for property probing."""

    def _pts(self, iv: Interval) -> list[Fraction]:
        pts = []
        if not iv.lo_open:
            pts.append(iv.lo)
        pts.append((iv.lo + iv.hi) / 2)
        if not iv.hi_open:
            pts.append(iv.hi)
        out = []
        for p in pts:
            if p not in out:
                out.append(p)
        return out

    def sensor_values(self, step_index, sensor, iv):
        return self._pts(iv)

    def tick_points(self, step_index, box):
        names = sorted(box)
        if not names:
            return [{}]
        sels = [{x: box[x].lo if not box[x].lo_open else box[x].pick() for x in names},
                {x: (box[x].lo + box[x].hi) / 2 for x in names},
                {x: box[x].hi if not box[x].hi_open else box[x].pick() for x in names}]
        out = []
        for s in sels:
            if s not in out:
                out.append(s)
        return out


@dataclass
class PropertyFinding:
    prop: str
    state: str
    detail: str

    def to_json_dict(self):
        return {"property": self.prop, "state": self.state, "detail": self.detail}


@dataclass
class TimePropertiesReport:
    states_checked: int
    findings: list[PropertyFinding]

    @property
    def ok(self) -> bool:
        return not self.findings

    def passes(self, prop: str) -> bool:
        return not any(f.prop == prop for f in self.findings)

    def to_json_dict(self):
        return {
            "statesChecked": self.states_checked,
            "properties": {p: self.passes(p) for p in
                           ("time-determinism", "maximal-progress",
                            "patience", "well-timedness", "conservation")},
            "findings": [f.to_json_dict() for f in self.findings],
        }


def check_time_properties(m: Cps, depth: int = 30, samples: int = 100,
                          seed: int = 0, max_nodes: int = 2000) -> TimePropertiesReport:
    """Executable oracle for the timing meta-properties of the semantics:

    (a) time determinism  -- all tick derivatives share one control term up
        to congruence, and every successor state sits in the admissible box;
    (b) maximal progress  -- an internal step disables time passing;
    (c) patience          -- time can pass unless the system is deadlocked
        or an internal step exists;
    (d) well-timedness    -- runs of non-tick steps are bounded, and the
        structural bound strictly decreases along them;
    plus conservation of the disturbance and error radii.

    Explores systematically with endpoint/centre resolutions up to ``depth``
    ticks (capped at ``max_nodes`` states), then re-checks along ``samples``
    seeded random runs.  Any finding is an implementation bug.
    """
    findings: list[PropertyFinding] = []
    probe = _ProbeResolver()
    base_unc = tuple(sorted(m.env.uncertainty.items()))
    base_err = tuple(sorted(m.env.sensor_error.items()))

    def dump(cur: Cps) -> str:
        vals = ", ".join(f"{x}={fmt_rat(v)}" for x, v in sorted(cur.env.state.items()))
        acts = ", ".join(f"{a}={v}" for a, v in sorted(cur.env.actuators.items()))
        return f"[{vals} | {acts}] {canonical_key(cur.proc)[:120]}"

    def check_state(cur: Cps, steps: list[SysStep]):
        env = cur.env
        if tuple(sorted(env.uncertainty.items())) != base_unc or \
                tuple(sorted(env.sensor_error.items())) != base_err:
            findings.append(PropertyFinding(
                "conservation", dump(cur), "disturbance or error radii changed"))
        # derive internal-step potential from the process level, independently
        # of the gating inside system_steps
        from ccpscalc.terms import SensRead as _SR, ActWrite as _AW
        psteps = process_steps(cur.proc)
        raw_tau = any(isinstance(st.label, (Tau, _SR, _AW)) for st in psteps)
        tickss = [st for st in steps if isinstance(st.action, Tick)]
        if raw_tau and tickss and invariant_holds(env):
            findings.append(PropertyFinding(
                "maximal-progress", dump(cur), "tau and tick both enabled"))
        if not tickss:
            if invariant_holds(env) and not raw_tau:
                findings.append(PropertyFinding(
                    "patience", dump(cur),
                    "tick disabled without deadlock or internal step"))
        tick_psteps = [st for st in psteps if isinstance(st.label, Tick)]
        if len(tick_psteps) > 1:
            ref0 = tick_psteps[0].target
            for st in tick_psteps[1:]:
                if not structurally_congruent(st.target, ref0):
                    findings.append(PropertyFinding(
                        "time-determinism", dump(cur),
                        "process tick derivatives not congruent"))
        if tickss:
            box = next_envs(env)
            ref = tickss[0].successor.proc
            for st in tickss:
                if not structurally_congruent(st.successor.proc, ref):
                    findings.append(PropertyFinding(
                        "time-determinism", dump(cur),
                        "tick derivatives not congruent"))
                for x, v in st.successor.env.state.items():
                    if not box[x].contains(v):
                        findings.append(PropertyFinding(
                            "time-determinism", dump(cur),
                            f"successor value of {x} outside the admissible box"))
        bound = instantaneous_bound(cur.proc)
        for st in steps:
            if not isinstance(st.action, Tick):
                b2 = instantaneous_bound(st.successor.proc)
                if b2 >= bound:
                    findings.append(PropertyFinding(
                        "well-timedness", dump(cur),
                        f"instantaneous bound did not decrease ({bound} -> {b2})"))

    def state_key(cur: Cps):
        return (canonical_key(cur.proc),
                tuple(sorted(cur.env.state.items())),
                tuple(sorted(cur.env.actuators.items())))

    # systematic phase
    seen = set()
    queue = deque([(m, 0)])
    checked = 0
    while queue and checked < max_nodes and len(findings) < 50:
        cur, ticks = queue.popleft()
        key = state_key(cur)
        if key in seen:
            continue
        seen.add(key)
        steps = system_steps(cur, probe)
        checked += 1
        check_state(cur, steps)
        if ticks >= depth:
            continue
        for st in steps:
            queue.append((st.successor, ticks + (1 if isinstance(st.action, Tick) else 0)))

    # sampled phase
    base = random.Random(seed)
    for r in range(samples):
        rng = random.Random(base.getrandbits(64))
        sampler = SeededSampler(rng.getrandbits(64))
        cur = m
        ticks = 0
        instant = 0
        start_bound = instantaneous_bound(cur.proc)
        while ticks < depth and len(findings) < 50:
            steps = system_steps(cur, sampler)
            checked += 1
            check_state(cur, steps)
            if not steps:
                break
            st = steps[rng.randrange(len(steps))]
            if isinstance(st.action, Tick):
                ticks += 1
                instant = 0
                start_bound = instantaneous_bound(st.successor.proc)
            else:
                instant += 1
                if instant > start_bound:
                    findings.append(PropertyFinding(
                        "well-timedness", dump(cur),
                        f"instantaneous run longer than the bound {start_bound}"))
            cur = st.successor
    return TimePropertiesReport(checked, findings)


# ---------------------------------------------------------------------------
# Monte-Carlo campaigns
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    run: int
    ticks: int
    onTicks: int
    warnings: int
    deadlocked: bool
    turnOnTemps: list
    turnOffTemps: list


@dataclass
class RunStats:
    runs: int
    horizon: int
    turnOnTemps: list
    turnOffTemps: list
    coolantOnFraction: Optional[Fraction]
    warningsEmitted: int
    deadlocks: int
    perRun: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "runs": self.runs,
            "horizon": self.horizon,
            "turnOnTemps": [fmt_rat(t) for t in self.turnOnTemps],
            "turnOffTemps": [fmt_rat(t) for t in self.turnOffTemps],
            "coolantOnFraction": None if self.coolantOnFraction is None
            else fmt_rat(self.coolantOnFraction),
            "warningsEmitted": self.warningsEmitted,
            "deadlocks": self.deadlocks,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "ticks", "onTicks", "onFraction", "warnings",
                    "deadlocked", "turnOnTemps", "turnOffTemps"])
        for r in self.perRun:
            frac = Fraction(r.onTicks, r.ticks) if r.ticks else None
            w.writerow([
                r.run, r.ticks, r.onTicks,
                "" if frac is None else fmt_rat(frac),
                r.warnings, int(r.deadlocked),
                ";".join(fmt_rat(t) for t in r.turnOnTemps),
                ";".join(fmt_rat(t) for t in r.turnOffTemps),
            ])
        w.writerow(["summary", self.horizon * self.runs,
                    sum(r.onTicks for r in self.perRun),
                    "" if self.coolantOnFraction is None else fmt_rat(self.coolantOnFraction),
                    self.warningsEmitted, self.deadlocks,
                    str(len(self.turnOnTemps)), str(len(self.turnOffTemps))])
        return buf.getvalue()


def monte_carlo(m: Cps, runs: int, horizon: int, seed: int,
                watch_actuator: str = "cool", watch_var: str = "temp",
                warn_channel: str = "warning") -> RunStats:
    """Seeded simulation campaign: independent runs of ``horizon`` ticks,
    sampling measured values and disturbances uniformly and internal choices
    uniformly.  Fully reproducible from (model, runs, horizon, seed).

    Records, when the watched actuator and variable exist: the watched
    variable's value at each on/off switch, the fraction of ticks spent with
    the actuator on, output actions on the warning channel, and deadlocks.
    """
    from ccpscalc.terms import Switch
    watch = watch_actuator in m.env.actuators and watch_var in m.env.state
    base = random.Random(seed)
    run_seeds = [(base.getrandbits(64), base.getrandbits(64)) for _ in range(runs)]
    per_run: list[RunRecord] = []
    total_on = 0
    total_ticks = 0
    all_on: list = []
    all_off: list = []
    warnings = 0
    deadlocks = 0
    for r in range(runs):
        pick_seed, sample_seed = run_seeds[r]
        rng = random.Random(pick_seed)
        sampler = SeededSampler(sample_seed)
        cur = m
        ticks = on_ticks = warn = 0
        dead = False
        t_on: list = []
        t_off: list = []
        while ticks < horizon:
            steps = system_steps(cur, sampler)
            if not steps:
                dead = True
                break
            st = steps[rng.randrange(len(steps))] if len(steps) > 1 else steps[0]
            a = st.action
            if isinstance(a, Tick):
                ticks += 1
                if watch and cur.env.actuators.get(watch_actuator) == Switch("on"):
                    on_ticks += 1
            elif isinstance(a, Out) and a.channel == warn_channel:
                warn += 1
            elif isinstance(a, Tau) and watch and st.source == f"write:{watch_actuator}":
                new_val = st.successor.env.actuators.get(watch_actuator)
                old_val = cur.env.actuators.get(watch_actuator)
                if new_val != old_val:
                    temp = cur.env.state[watch_var]
                    if new_val == Switch("on"):
                        t_on.append(temp)
                    else:
                        t_off.append(temp)
            cur = st.successor
        per_run.append(RunRecord(r, ticks, on_ticks, warn, dead, t_on, t_off))
        total_on += on_ticks
        total_ticks += ticks
        all_on.extend(t_on)
        all_off.extend(t_off)
        warnings += warn
        deadlocks += int(dead)
    frac = Fraction(total_on, total_ticks) if total_ticks else None
    return RunStats(runs, horizon, all_on, all_off, frac, warnings, deadlocks, per_run)


# ---------------------------------------------------------------------------
# Abstraction soundness probe
# ---------------------------------------------------------------------------

def embeds_in_abstraction(lts: FiniteLts, m: Cps, ticks: int, seed: int) -> Optional[str]:
    """Run one seeded concrete simulation and check that every visited state
    maps into an abstract state's box at the same control location.
    Returns None on success, else a description of the first escape."""
    loc_box: dict[tuple, dict] = {}
    for payload in lts.states:
        if isinstance(payload, AbstractState):
            loc_box[payload.location] = dict(payload.box)
    rng = random.Random(seed)
    sampler = SeededSampler(rng.getrandbits(64))
    cur = m
    done = 0
    while done < ticks:
        loc = (canonical_key(cur.proc), tuple(sorted(cur.env.actuators.items())))
        box = loc_box.get(loc)
        if box is None:
            return f"control location not in the abstraction: {loc[0][:120]}"
        for x, v in cur.env.state.items():
            if not box[x].contains(v):
                return f"{x}={fmt_rat(v)} outside abstract box {box[x]}"
        steps = system_steps(cur, sampler)
        if not steps:
            return None  # deadlock: concrete run ends
        st = steps[rng.randrange(len(steps))] if len(steps) > 1 else steps[0]
        if isinstance(st.action, Tick):
            done += 1
        cur = st.successor
    return None
