"""Process-term algebra: values, guards, prefixes, terms and their operations.

Terms are immutable and freely shared; every operation here is a pure
function.  Structural identity of terms is decided through ``canonical_key``,
which folds in alpha-renaming, associativity/commutativity of parallel
composition with ``nil`` as unit, and resolution of closed conditionals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Union


class CcpsError(Exception):
    """Base class for all errors raised by the package."""


class EvalError(CcpsError):
    """Raised when a data expression cannot be evaluated to a value."""


class UnguardedRecursionError(CcpsError):
    """Raised when a recursion binder occurs without an intervening time guard."""


class WellFormednessError(CcpsError):
    """A process mentions sensors or actuators the plant does not declare."""

    def __init__(self, unknown_sensors, unknown_actuators):
        self.unknown_sensors = sorted(unknown_sensors)
        self.unknown_actuators = sorted(unknown_actuators)
        parts = []
        if self.unknown_sensors:
            parts.append("unknown sensors: " + ", ".join(self.unknown_sensors))
        if self.unknown_actuators:
            parts.append("unknown actuators: " + ", ".join(self.unknown_actuators))
        super().__init__("; ".join(parts))


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

class Value:
    """A datum carried on channels, written to actuators, or read at sensors."""

    __slots__ = ()


@dataclass(frozen=True)
class Real(Value):
    num: Fraction

    def __post_init__(self):
        if not isinstance(self.num, Fraction):
            object.__setattr__(self, "num", Fraction(self.num))

    def __str__(self):
        return fmt_rat(self.num)


@dataclass(frozen=True)
class Switch(Value):
    state: str  # "on" | "off"

    def __post_init__(self):
        if self.state not in ("on", "off"):
            raise ValueError(f"switch state must be on/off, got {self.state!r}")

    def __str__(self):
        return self.state


@dataclass(frozen=True)
class Name(Value):
    ident: str

    def __str__(self):
        return f"'{self.ident}'"


ON = Switch("on")
OFF = Switch("off")
UNIT = Name("unit")  # payload of pure-synchronisation channels


def rat(x) -> Fraction:
    """Exact rational from int / str ('0.4' parses as 2/5) / Fraction."""
    return x if isinstance(x, Fraction) else Fraction(str(x))


def fmt_rat(q: Fraction) -> str:
    """Exact textual form: decimal when the denominator is a 10-power divisor."""
    if q.denominator == 1:
        return str(q.numerator)
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    digits = max(twos, fives)
    scaled = q.numerator * 10**digits // q.denominator
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled)).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


# ---------------------------------------------------------------------------
# Data expressions and guards
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: Value


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # '+', '-', '*'
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


class BoolExpr:
    __slots__ = ()


@dataclass(frozen=True)
class BoolLit(BoolExpr):
    value: bool


@dataclass(frozen=True)
class Cmp(BoolExpr):
    op: str  # '<', '<=', '>', '>=', '=', '!='
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BoolOp(BoolExpr):
    op: str  # 'and', 'or'
    left: BoolExpr
    right: BoolExpr


@dataclass(frozen=True)
class Not(BoolExpr):
    arg: BoolExpr


def lit(x) -> Expr:
    if isinstance(x, Value):
        return Lit(x)
    return Lit(Real(rat(x)))


def eval_expr(e: Expr) -> Value:
    """Evaluate a closed data expression.  Total on well-typed closed input."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        raise EvalError(f"free data variable {e.name!r} in expression")
    if isinstance(e, Neg):
        v = eval_expr(e.arg)
        if not isinstance(v, Real):
            raise EvalError("negation of a non-numeric value")
        return Real(-v.num)
    if isinstance(e, BinOp):
        l, r = eval_expr(e.left), eval_expr(e.right)
        if not (isinstance(l, Real) and isinstance(r, Real)):
            raise EvalError(f"arithmetic {e.op!r} on non-numeric values")
        if e.op == "+":
            return Real(l.num + r.num)
        if e.op == "-":
            return Real(l.num - r.num)
        if e.op == "*":
            return Real(l.num * r.num)
        raise EvalError(f"unknown operator {e.op!r}")
    raise EvalError(f"unknown expression node {e!r}")


def eval_bool(b: BoolExpr) -> bool:
    """Evaluate a closed guard.  Decidable and total on well-typed input."""
    if isinstance(b, BoolLit):
        return b.value
    if isinstance(b, Not):
        return not eval_bool(b.arg)
    if isinstance(b, BoolOp):
        if b.op == "and":
            return eval_bool(b.left) and eval_bool(b.right)
        if b.op == "or":
            return eval_bool(b.left) or eval_bool(b.right)
        raise EvalError(f"unknown connective {b.op!r}")
    if isinstance(b, Cmp):
        l, r = eval_expr(b.left), eval_expr(b.right)
        if b.op == "=":
            return l == r
        if b.op == "!=":
            return l != r
        if not (isinstance(l, Real) and isinstance(r, Real)):
            raise EvalError(f"ordered comparison {b.op!r} on non-numeric values")
        return {"<": l.num < r.num, "<=": l.num <= r.num,
                ">": l.num > r.num, ">=": l.num >= r.num}[b.op]
    raise EvalError(f"unknown guard node {b!r}")


def expr_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Lit):
        return frozenset()
    if isinstance(e, Neg):
        return expr_vars(e.arg)
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    raise EvalError(f"unknown expression node {e!r}")


def bool_vars(b: BoolExpr) -> frozenset[str]:
    if isinstance(b, BoolLit):
        return frozenset()
    if isinstance(b, Not):
        return bool_vars(b.arg)
    if isinstance(b, BoolOp):
        return bool_vars(b.left) | bool_vars(b.right)
    if isinstance(b, Cmp):
        return expr_vars(b.left) | expr_vars(b.right)
    raise EvalError(f"unknown guard node {b!r}")


def subst_expr(e: Expr, var: str, v: Value) -> Expr:
    if isinstance(e, Var):
        return Lit(v) if e.name == var else e
    if isinstance(e, Lit):
        return e
    if isinstance(e, Neg):
        return Neg(subst_expr(e.arg, var, v))
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.left, var, v), subst_expr(e.right, var, v))
    raise EvalError(f"unknown expression node {e!r}")


def subst_bool(b: BoolExpr, var: str, v: Value) -> BoolExpr:
    if isinstance(b, BoolLit):
        return b
    if isinstance(b, Not):
        return Not(subst_bool(b.arg, var, v))
    if isinstance(b, BoolOp):
        return BoolOp(b.op, subst_bool(b.left, var, v), subst_bool(b.right, var, v))
    if isinstance(b, Cmp):
        return Cmp(b.op, subst_expr(b.left, var, v), subst_expr(b.right, var, v))
    raise EvalError(f"unknown guard node {b!r}")


# ---------------------------------------------------------------------------
# Prefixes and terms
# ---------------------------------------------------------------------------

class Prefix:
    __slots__ = ()


@dataclass(frozen=True)
class Send(Prefix):
    channel: str
    expr: Expr


@dataclass(frozen=True)
class Receive(Prefix):
    channel: str
    var: str


@dataclass(frozen=True)
class ReadSensor(Prefix):
    var: str
    sensor: str


@dataclass(frozen=True)
class WriteActuator(Prefix):
    expr: Expr
    actuator: str


class ProcessTerm:
    __slots__ = ()


@dataclass(frozen=True)
class Nil(ProcessTerm):
    pass


@dataclass(frozen=True)
class TickPrefix(ProcessTerm):
    body: ProcessTerm


@dataclass(frozen=True)
class Parallel(ProcessTerm):
    left: ProcessTerm
    right: ProcessTerm


@dataclass(frozen=True)
class TimeoutPrefix(ProcessTerm):
    prefix: Prefix
    continuation: ProcessTerm
    timeout: ProcessTerm


@dataclass(frozen=True)
class IfElse(ProcessTerm):
    guard: BoolExpr
    then_branch: ProcessTerm
    else_branch: ProcessTerm


@dataclass(frozen=True)
class Restrict(ProcessTerm):
    body: ProcessTerm
    channel: str


@dataclass(frozen=True)
class ProcVar(ProcessTerm):
    name: str


@dataclass(frozen=True)
class Fix(ProcessTerm):
    var: str
    body: ProcessTerm

    def __post_init__(self):
        # guardedness-preserving internal rebuilds (substitution,
        # canonicalisation, renaming) skip the structural check
        if not _TRUSTED_REBUILD[0] and not _time_guarded(self.body, self.var, False):
            raise UnguardedRecursionError(
                f"recursion variable {self.var!r} occurs without a time guard")


NIL = Nil()

_TRUSTED_REBUILD = [0]


class _trusted_rebuild:
    """Scope in which Fix construction skips the guardedness re-check."""

    def __enter__(self):
        _TRUSTED_REBUILD[0] += 1

    def __exit__(self, *exc):
        _TRUSTED_REBUILD[0] -= 1
        return False


def _time_guarded(term: ProcessTerm, var: str, guarded: bool) -> bool:
    """True iff every free occurrence of ``var`` sits under a tick prefix or
    in the timeout arm of a prefix-with-timeout."""
    if isinstance(term, ProcVar):
        return guarded or term.name != var
    if isinstance(term, Nil):
        return True
    if isinstance(term, TickPrefix):
        return _time_guarded(term.body, var, True)
    if isinstance(term, TimeoutPrefix):
        return (_time_guarded(term.continuation, var, guarded)
                and _time_guarded(term.timeout, var, True))
    if isinstance(term, Parallel):
        return (_time_guarded(term.left, var, guarded)
                and _time_guarded(term.right, var, guarded))
    if isinstance(term, IfElse):
        return (_time_guarded(term.then_branch, var, guarded)
                and _time_guarded(term.else_branch, var, guarded))
    if isinstance(term, Restrict):
        return _time_guarded(term.body, var, guarded)
    if isinstance(term, Fix):
        if term.var == var:
            return True
        return _time_guarded(term.body, var, guarded)
    raise TypeError(f"unknown term node {term!r}")


# -- derived forms ----------------------------------------------------------

_fresh_counter = [0]


def fresh_proc_var(hint: str = "W") -> str:
    _fresh_counter[0] += 1
    return f"{hint}#{_fresh_counter[0]}"


def act(prefix: Prefix, continuation: ProcessTerm) -> ProcessTerm:
    """The retry-loop derived form: a bare prefix re-offers itself every slot
    (``pi.P`` stands for ``fix W. [pi.P]W``)."""
    w = fresh_proc_var()
    return Fix(w, TimeoutPrefix(prefix, continuation, ProcVar(w)))


def ticks(k: int, continuation: ProcessTerm) -> ProcessTerm:
    """``tick^k.P`` as ``k`` nested tick prefixes."""
    term = continuation
    for _ in range(k):
        term = TickPrefix(term)
    return term


# ---------------------------------------------------------------------------
# Free variables, substitution, unfolding
# ---------------------------------------------------------------------------

def free_data_vars(term: ProcessTerm) -> frozenset[str]:
    if isinstance(term, (Nil, ProcVar)):
        return frozenset()
    if isinstance(term, TickPrefix):
        return free_data_vars(term.body)
    if isinstance(term, Parallel):
        return free_data_vars(term.left) | free_data_vars(term.right)
    if isinstance(term, Restrict):
        return free_data_vars(term.body)
    if isinstance(term, Fix):
        return free_data_vars(term.body)
    if isinstance(term, IfElse):
        return (bool_vars(term.guard) | free_data_vars(term.then_branch)
                | free_data_vars(term.else_branch))
    if isinstance(term, TimeoutPrefix):
        p = term.prefix
        cont = free_data_vars(term.continuation)
        if isinstance(p, (Receive, ReadSensor)):
            cont = cont - {p.var}
            own = frozenset()
        elif isinstance(p, Send):
            own = expr_vars(p.expr)
        else:
            own = expr_vars(p.expr)
        return own | cont | free_data_vars(term.timeout)
    raise TypeError(f"unknown term node {term!r}")


def free_proc_vars(term: ProcessTerm) -> frozenset[str]:
    if isinstance(term, Nil):
        return frozenset()
    if isinstance(term, ProcVar):
        return frozenset((term.name,))
    if isinstance(term, TickPrefix):
        return free_proc_vars(term.body)
    if isinstance(term, Parallel):
        return free_proc_vars(term.left) | free_proc_vars(term.right)
    if isinstance(term, Restrict):
        return free_proc_vars(term.body)
    if isinstance(term, Fix):
        return free_proc_vars(term.body) - {term.var}
    if isinstance(term, IfElse):
        return free_proc_vars(term.then_branch) | free_proc_vars(term.else_branch)
    if isinstance(term, TimeoutPrefix):
        return free_proc_vars(term.continuation) | free_proc_vars(term.timeout)
    raise TypeError(f"unknown term node {term!r}")


def is_closed(term: ProcessTerm) -> bool:
    return not free_proc_vars(term) and not free_data_vars(term)


def substitute_value(term: ProcessTerm, var: str, v: Value) -> ProcessTerm:
    """Substitute value ``v`` for free occurrences of data variable ``var``.

    Values contain no variables, so no capture can arise; binders for the
    same name shadow as usual.  Substituting an absent variable is identity.
    """
    with _trusted_rebuild():
        return _substitute_value(term, var, v)


def _substitute_value(term: ProcessTerm, var: str, v: Value) -> ProcessTerm:
    substitute_value = _substitute_value
    if isinstance(term, (Nil, ProcVar)):
        return term
    if isinstance(term, TickPrefix):
        return TickPrefix(substitute_value(term.body, var, v))
    if isinstance(term, Parallel):
        return Parallel(substitute_value(term.left, var, v),
                        substitute_value(term.right, var, v))
    if isinstance(term, Restrict):
        return Restrict(substitute_value(term.body, var, v), term.channel)
    if isinstance(term, Fix):
        return Fix(term.var, substitute_value(term.body, var, v))
    if isinstance(term, IfElse):
        return IfElse(subst_bool(term.guard, var, v),
                      substitute_value(term.then_branch, var, v),
                      substitute_value(term.else_branch, var, v))
    if isinstance(term, TimeoutPrefix):
        p = term.prefix
        timeout = substitute_value(term.timeout, var, v)
        if isinstance(p, (Receive, ReadSensor)) and p.var == var:
            cont = term.continuation  # shadowed
        else:
            cont = substitute_value(term.continuation, var, v)
        if isinstance(p, Send):
            p = Send(p.channel, subst_expr(p.expr, var, v))
        elif isinstance(p, WriteActuator):
            p = WriteActuator(subst_expr(p.expr, var, v), p.actuator)
        return TimeoutPrefix(p, cont, timeout)
    raise TypeError(f"unknown term node {term!r}")


def substitute_proc(term: ProcessTerm, var: str, repl: ProcessTerm) -> ProcessTerm:
    """Capture-avoiding substitution of ``repl`` for process variable ``var``."""
    with _trusted_rebuild():
        return _substitute_proc(term, var, repl)


def _substitute_proc(term: ProcessTerm, var: str, repl: ProcessTerm) -> ProcessTerm:
    substitute_proc = _substitute_proc
    repl_free = free_proc_vars(repl)

    def go(t: ProcessTerm) -> ProcessTerm:
        if isinstance(t, Nil):
            return t
        if isinstance(t, ProcVar):
            return repl if t.name == var else t
        if isinstance(t, TickPrefix):
            return TickPrefix(go(t.body))
        if isinstance(t, Parallel):
            return Parallel(go(t.left), go(t.right))
        if isinstance(t, Restrict):
            return Restrict(go(t.body), t.channel)
        if isinstance(t, IfElse):
            return IfElse(t.guard, go(t.then_branch), go(t.else_branch))
        if isinstance(t, TimeoutPrefix):
            return TimeoutPrefix(t.prefix, go(t.continuation), go(t.timeout))
        if isinstance(t, Fix):
            if t.var == var:
                return t  # shadowed
            if t.var in repl_free and var in free_proc_vars(t.body):
                fresh = fresh_proc_var(t.var.split("#")[0])
                body = substitute_proc(t.body, t.var, ProcVar(fresh))
                return Fix(fresh, go(body))
            return Fix(t.var, go(t.body))
        raise TypeError(f"unknown term node {t!r}")

    return go(term)


def unfold_fix(term: Fix) -> ProcessTerm:
    """One-step unfolding: the body with the whole recursion for its variable."""
    if not isinstance(term, Fix):
        raise TypeError("unfold_fix expects a recursion node")
    return substitute_proc(term.body, term.var, term)


# ---------------------------------------------------------------------------
# Canonical forms and structural congruence
# ---------------------------------------------------------------------------

_canon_cache: dict[int, tuple[ProcessTerm, ProcessTerm, str]] = {}


def _canon(term: ProcessTerm, denv: dict, penv: dict, depth: int) -> tuple[ProcessTerm, str]:
    """Canonicalise: alpha-rename binders to depth indices, resolve closed
    conditionals, flatten parallel modulo AC with nil unit.  Returns the
    canonical term and its key string."""
    if isinstance(term, Nil):
        return term, "0"
    if isinstance(term, ProcVar):
        name = penv.get(term.name, term.name)
        return ProcVar(name), f"X({name})"
    if isinstance(term, TickPrefix):
        b, k = _canon(term.body, denv, penv, depth)
        return TickPrefix(b), f"t.{k}"
    if isinstance(term, Parallel):
        parts: list[tuple[ProcessTerm, str]] = []

        def flatten(t: ProcessTerm):
            if isinstance(t, Parallel):
                flatten(t.left)
                flatten(t.right)
                return
            ct, ck = _canon(t, denv, penv, depth)
            if isinstance(ct, Nil):
                return
            if isinstance(ct, Parallel):
                flatten(ct)  # canonical child may itself be a parallel
                return
            parts.append((ct, ck))

        flatten(term.left)
        flatten(term.right)
        if not parts:
            return NIL, "0"
        parts.sort(key=lambda pk: pk[1])
        t_acc, k_acc = parts[0]
        for ct, ck in parts[1:]:
            t_acc = Parallel(t_acc, ct)
        key = "(" + "|".join(k for _, k in parts) + ")"
        return t_acc, key
    if isinstance(term, Restrict):
        b, k = _canon(term.body, denv, penv, depth)
        return Restrict(b, term.channel), f"{k}\\{term.channel}"
    if isinstance(term, Fix):
        fresh = f"X{depth}"
        b, k = _canon(term.body, denv, {**penv, term.var: fresh}, depth + 1)
        return Fix(fresh, b), f"fix {fresh}.{k}"
    if isinstance(term, IfElse):
        if not bool_vars(term.guard):
            # closed guard: identify the conditional with its taken branch
            branch = term.then_branch if eval_bool(term.guard) else term.else_branch
            return _canon(branch, denv, penv, depth)
        tb, tk = _canon(term.then_branch, denv, penv, depth)
        eb, ek = _canon(term.else_branch, denv, penv, depth)
        g, gk = _canon_bool(term.guard, denv)
        return IfElse(g, tb, eb), f"if {gk} {tk} {ek}"
    if isinstance(term, TimeoutPrefix):
        p = term.prefix
        to, tok = _canon(term.timeout, denv, penv, depth)
        if isinstance(p, (Receive, ReadSensor)):
            fresh = f"v{depth}"
            cont, ck = _canon(term.continuation, {**denv, p.var: Var(fresh)}, penv, depth + 1)
            if isinstance(p, Receive):
                np, pk = Receive(p.channel, fresh), f"{p.channel}?({fresh})"
            else:
                np, pk = ReadSensor(fresh, p.sensor), f"read {fresh} {p.sensor}"
        else:
            cont, ck = _canon(term.continuation, denv, penv, depth)
            e, ek = _canon_expr(p.expr, denv)
            if isinstance(p, Send):
                np, pk = Send(p.channel, e), f"{p.channel}!{ek}"
            else:
                np, pk = WriteActuator(e, p.actuator), f"write {ek} {p.actuator}"
        return TimeoutPrefix(np, cont, to), f"[{pk}.{ck}]{tok}"
    raise TypeError(f"unknown term node {term!r}")


def _canon_expr(e: Expr, denv: dict) -> tuple[Expr, str]:
    if isinstance(e, Lit):
        return e, f"#{e.value}"
    if isinstance(e, Var):
        mapped = denv.get(e.name)
        if isinstance(mapped, Var):
            return mapped, mapped.name
        if isinstance(mapped, Value):
            return Lit(mapped), f"#{mapped}"
        return e, e.name
    if isinstance(e, Neg):
        a, k = _canon_expr(e.arg, denv)
        return Neg(a), f"-{k}"
    if isinstance(e, BinOp):
        l, lk = _canon_expr(e.left, denv)
        r, rk = _canon_expr(e.right, denv)
        return BinOp(e.op, l, r), f"({lk}{e.op}{rk})"
    raise EvalError(f"unknown expression node {e!r}")


def _canon_bool(b: BoolExpr, denv: dict) -> tuple[BoolExpr, str]:
    if isinstance(b, BoolLit):
        return b, str(b.value)
    if isinstance(b, Not):
        a, k = _canon_bool(b.arg, denv)
        return Not(a), f"!{k}"
    if isinstance(b, BoolOp):
        l, lk = _canon_bool(b.left, denv)
        r, rk = _canon_bool(b.right, denv)
        return BoolOp(b.op, l, r), f"({lk} {b.op} {rk})"
    if isinstance(b, Cmp):
        l, lk = _canon_expr(b.left, denv)
        r, rk = _canon_expr(b.right, denv)
        return Cmp(b.op, l, r), f"({lk}{b.op}{rk})"
    raise EvalError(f"unknown guard node {b!r}")


_canon_intern: dict[str, ProcessTerm] = {}


def _canonical_entry(term: ProcessTerm) -> tuple[ProcessTerm, str]:
    cached = _canon_cache.get(id(term))
    if cached is not None and cached[0] is term:
        return cached[1], cached[2]
    with _trusted_rebuild():
        ct, key = _canon(term, {}, {}, 0)
    ct = _canon_intern.setdefault(key, ct)  # share one object per key
    if len(_canon_cache) > 200_000:
        _canon_cache.clear()
    _canon_cache[id(term)] = (term, ct, key)
    return ct, key


def canonical(term: ProcessTerm) -> ProcessTerm:
    """Canonical representative of ``term`` modulo structural congruence."""
    return _canonical_entry(term)[0]


def canonical_key(term: ProcessTerm) -> str:
    """Stable text key identifying ``term`` up to structural congruence."""
    return _canonical_entry(term)[1]


def structurally_congruent(p: ProcessTerm, q: ProcessTerm) -> bool:
    """Congruence generated by alpha-conversion and the commutative-monoid
    laws of parallel composition (nil as unit)."""
    return canonical_key(p) == canonical_key(q)


# ---------------------------------------------------------------------------
# Device mentions and well-formedness
# ---------------------------------------------------------------------------

def _prefixes(term: ProcessTerm) -> Iterator[Prefix]:
    stack = [term]
    while stack:
        t = stack.pop()
        if isinstance(t, TimeoutPrefix):
            yield t.prefix
            stack.append(t.continuation)
            stack.append(t.timeout)
        elif isinstance(t, TickPrefix):
            stack.append(t.body)
        elif isinstance(t, Parallel):
            stack.append(t.left)
            stack.append(t.right)
        elif isinstance(t, Restrict):
            stack.append(t.body)
        elif isinstance(t, Fix):
            stack.append(t.body)
        elif isinstance(t, IfElse):
            stack.append(t.then_branch)
            stack.append(t.else_branch)


def mentioned_sensors(term: ProcessTerm) -> frozenset[str]:
    return frozenset(p.sensor for p in _prefixes(term) if isinstance(p, ReadSensor))


def mentioned_actuators(term: ProcessTerm) -> frozenset[str]:
    return frozenset(p.actuator for p in _prefixes(term) if isinstance(p, WriteActuator))


def acts_on_devices(term: ProcessTerm) -> bool:
    """True if the process reads any sensor or writes any actuator."""
    return bool(mentioned_sensors(term)) or bool(mentioned_actuators(term))


def well_formed(m) -> None:
    """Check that every device the process mentions is declared by the plant.

    ``m`` is anything with ``env`` and ``proc`` attributes.  Raises
    ``WellFormednessError`` listing every offending device name.
    """
    bad_s = mentioned_sensors(m.proc) - set(m.env.sensor_error)
    bad_a = mentioned_actuators(m.proc) - set(m.env.actuators)
    if bad_s or bad_a:
        raise WellFormednessError(bad_s, bad_a)


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

class Label:
    __slots__ = ()


@dataclass(frozen=True)
class Tau(Label):
    def __str__(self):
        return "tau"


@dataclass(frozen=True)
class Tick(Label):
    def __str__(self):
        return "tick"


@dataclass(frozen=True)
class Out(Label):
    channel: str
    value: Optional[Value]

    def __str__(self):
        return f"out({self.channel},{self.value})"


@dataclass(frozen=True)
class In(Label):
    channel: str
    value: Optional[Value]  # None while the input binder is uninstantiated

    def __str__(self):
        return f"in({self.channel},{self.value})"


@dataclass(frozen=True)
class ActWrite(Label):
    actuator: str
    value: Value

    def __str__(self):
        return f"{self.actuator}!{self.value}"


@dataclass(frozen=True)
class SensRead(Label):
    sensor: str
    value: Optional[Value]  # None while the read binder is uninstantiated

    def __str__(self):
        return f"{self.sensor}?{self.value}"


TAU = Tau()
TICK = Tick()

SYSTEM_LABELS = (Tau, Out, In, Tick)


def label_sort_key(label: Label) -> tuple:
    if isinstance(label, Tau):
        return (0, "", "")
    if isinstance(label, Tick):
        return (1, "", "")
    if isinstance(label, Out):
        return (2, label.channel, str(label.value))
    if isinstance(label, In):
        return (3, label.channel, str(label.value))
    if isinstance(label, ActWrite):
        return (4, label.actuator, str(label.value))
    if isinstance(label, SensRead):
        return (5, label.sensor, str(label.value))
    raise TypeError(f"unknown label {label!r}")


# ---------------------------------------------------------------------------
# Instantaneous-action bound (well-timedness)
# ---------------------------------------------------------------------------

def instantaneous_bound(term: ProcessTerm) -> int:
    """Upper bound on the number of consecutive non-tick actions the term can
    perform before time must pass.  Strictly decreases along non-tick steps."""
    if isinstance(term, (Nil, ProcVar)):
        return 0
    if isinstance(term, TickPrefix):
        return 0
    if isinstance(term, Parallel):
        return instantaneous_bound(term.left) + instantaneous_bound(term.right)
    if isinstance(term, Restrict):
        return instantaneous_bound(term.body)
    if isinstance(term, Fix):
        return instantaneous_bound(term.body)
    if isinstance(term, IfElse):
        return max(instantaneous_bound(term.then_branch),
                   instantaneous_bound(term.else_branch))
    if isinstance(term, TimeoutPrefix):
        return 1 + instantaneous_bound(term.continuation)
    raise TypeError(f"unknown term node {term!r}")
