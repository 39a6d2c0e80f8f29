"""The ``.ccps`` model language.

A model file declares the plant in four blocks and the controller as process
definitions plus a ``system`` entry::

    vars       { temp = 0 uncertainty 0.4 invariant [0, 30] }
    actuators  { cool = off }
    sensors    { st measures temp error 0.1 }
    dynamics   { temp: cool=on -> -1, default -> 1 }

    process Ctrl = fix X. read x st. if x > 10 then Cooling else tick.X
    process Cooling = write on cool. fix Y. tick^5. read x st.
                      if x > 10 then warning!<'ID'>. Y else write off cool. tick. X

    system Ctrl

Process syntax: ``nil``, ``tick.P`` and ``tick^k.P``, prefix with timeout
``[pi.P]Q``, bare prefix sugar ``pi.P`` (re-offered every slot), parallel
``P | Q``, ``if b then P else Q``, restriction ``P \\ c``, recursion
``fix X. P``.  Prefixes: ``c!<e>`` send (``c!`` pure synchronisation),
``c?(x)`` receive, ``read x s`` sensor read, ``write e a`` actuator write.
Numbers are exact rationals: decimal literals or ``p/q``.  Name values are
quoted: ``'L'``.  Toplevel process names are macro definitions expanded at
parse time; recursion only through ``fix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ccpscalc.terms import (
    CcpsError, fmt_rat, rat,
    Value, Real, Switch, Name, ON, OFF, UNIT,
    Expr, Lit, Var, BinOp, Neg,
    BoolExpr, BoolLit, Cmp, BoolOp, Not,
    Prefix, Send, Receive, ReadSensor, WriteActuator,
    ProcessTerm, Nil, NIL, TickPrefix, Parallel, TimeoutPrefix, IfElse,
    Restrict, ProcVar, Fix, free_proc_vars, act,
)
from ccpscalc.physics import (
    Cps, Interval, interval, PhysicalEnv, DriftTable, drift_table,
    make_env, make_cps,
)


class ParseError(CcpsError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{line}:{col}: {message}{hint}")


@dataclass
class Model:
    cps: Cps
    definitions: dict


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_PUNCT2 = ("->", "!=", ">=", "<=")
_PUNCT1 = "{}[]()<>=,:.|\\!?^-+*/&"


@dataclass
class _Tok:
    kind: str  # 'ident' | 'number' | 'name' | 'punct' | 'eof'
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col, i = 1, 1, 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c == "'":
            j = src.find("'", i + 1)
            if j < 0:
                raise ParseError("unterminated name literal", line, col)
            toks.append(_Tok("name", src[i + 1:j], line, col))
            col += j - i + 1
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            toks.append(_Tok("number", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("ident", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if src[i:i + 2] in _PUNCT2:
            toks.append(_Tok("punct", src[i:i + 2], line, col))
            i += 2
            col += 2
            continue
        if c in _PUNCT1:
            toks.append(_Tok("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, message: str, expected=()):
        t = self.peek()
        raise ParseError(message, t.line, t.col, expected)

    def eat_punct(self, text: str):
        t = self.peek()
        if t.kind == "punct" and t.text == text:
            return self.next()
        self.fail(f"found {t.text!r}", (repr(text),))

    def eat_ident(self, text: Optional[str] = None) -> str:
        t = self.peek()
        if t.kind == "ident" and (text is None or t.text == text):
            return self.next().text
        self.fail(f"found {t.text!r}", (text or "identifier",))

    def at_punct(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "punct" and t.text == text

    def at_ident(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == text

    # -- numbers and values --------------------------------------------------

    def number(self) -> Fraction:
        neg = False
        if self.at_punct("-"):
            self.next()
            neg = True
        t = self.peek()
        if t.kind != "number":
            self.fail(f"found {t.text!r}", ("number",))
        self.next()
        try:
            q = rat(t.text)
        except ValueError:
            raise ParseError(f"bad number {t.text!r}", t.line, t.col) from None
        if self.at_punct("/"):
            self.next()
            d = self.peek()
            if d.kind != "number":
                self.fail(f"found {d.text!r}", ("denominator",))
            self.next()
            q = q / rat(d.text)
        return -q if neg else q

    def value(self) -> Value:
        t = self.peek()
        if t.kind == "name":
            self.next()
            return Name(t.text)
        if t.kind == "ident" and t.text in ("on", "off"):
            self.next()
            return Switch(t.text)
        return Real(self.number())

    def interval_lit(self) -> Interval:
        lo_open = False
        if self.at_punct("("):
            lo_open = True
            self.next()
        else:
            self.eat_punct("[")
        lo = self.number()
        self.eat_punct(",")
        hi = self.number()
        hi_open = False
        if self.at_punct(")"):
            hi_open = True
            self.next()
        else:
            self.eat_punct("]")
        iv = interval(lo, hi, lo_open, hi_open)
        if iv.is_empty:
            self.fail("empty interval")
        return iv

    # -- expressions ----------------------------------------------------------

    def expr(self) -> Expr:
        e = self.mul()
        while self.at_punct("+") or self.at_punct("-"):
            op = self.next().text
            e = BinOp(op, e, self.mul())
        return e

    def mul(self) -> Expr:
        e = self.unary()
        while self.at_punct("*"):
            self.next()
            e = BinOp("*", e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.at_punct("-"):
            self.next()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "number":
            return Lit(Real(self.number()))
        if t.kind == "name":
            self.next()
            return Lit(Name(t.text))
        if t.kind == "ident" and t.text in ("on", "off"):
            self.next()
            return Lit(Switch(t.text))
        if t.kind == "ident":
            self.next()
            return Var(t.text)
        if self.at_punct("("):
            self.next()
            e = self.expr()
            self.eat_punct(")")
            return e
        self.fail(f"found {t.text!r}", ("expression",))

    def bool_expr(self) -> BoolExpr:
        b = self.bool_term()
        while self.at_ident("or"):
            self.next()
            b = BoolOp("or", b, self.bool_term())
        return b

    def bool_term(self) -> BoolExpr:
        b = self.bool_factor()
        while self.at_ident("and"):
            self.next()
            b = BoolOp("and", b, self.bool_factor())
        return b

    def bool_factor(self) -> BoolExpr:
        if self.at_ident("not"):
            self.next()
            return Not(self.bool_factor())
        if self.at_ident("true"):
            self.next()
            return BoolLit(True)
        if self.at_ident("false"):
            self.next()
            return BoolLit(False)
        left = self.expr()
        t = self.peek()
        ops = ("<", "<=", ">", ">=", "=", "!=")
        if t.kind == "punct" and t.text in ops:
            self.next()
            return Cmp(t.text, left, self.expr())
        self.fail(f"found {t.text!r}", ops)

    # -- processes ------------------------------------------------------------

    def _at_prefix(self) -> bool:
        t = self.peek()
        if t.kind != "ident":
            return False
        if t.text in ("read", "write"):
            return True
        nxt = self.peek(1)
        return nxt.kind == "punct" and nxt.text in ("!", "?")

    def prefix(self) -> Prefix:
        if self.at_ident("read"):
            self.next()
            var = self.eat_ident()
            sensor = self.eat_ident()
            return ReadSensor(var, sensor)
        if self.at_ident("write"):
            self.next()
            e = self.expr()
            actuator = self.eat_ident()
            return WriteActuator(e, actuator)
        chan = self.eat_ident()
        if self.at_punct("!"):
            self.next()
            if self.at_punct("<"):
                self.next()
                e = self.expr()
                self.eat_punct(">")
                return Send(chan, e)
            return Send(chan, Lit(UNIT))
        if self.at_punct("?"):
            self.next()
            self.eat_punct("(")
            var = self.eat_ident()
            self.eat_punct(")")
            return Receive(chan, var)
        self.fail(f"found {self.peek().text!r}", ("!", "?"))

    def proc(self) -> ProcessTerm:
        p = self.restricted()
        while self.at_punct("|"):
            self.next()
            p = Parallel(p, self.restricted())
        return p

    def restricted(self) -> ProcessTerm:
        p = self.primary()
        while self.at_punct("\\"):
            self.next()
            p = Restrict(p, self.eat_ident())
        return p

    def primary(self) -> ProcessTerm:
        t = self.peek()
        if self.at_ident("nil"):
            self.next()
            return NIL
        if self.at_ident("tick"):
            self.next()
            k = 1
            if self.at_punct("^"):
                self.next()
                num = self.peek()
                if num.kind != "number" or "." in num.text:
                    self.fail("tick exponent must be a natural number")
                self.next()
                k = int(num.text)
            self.eat_punct(".")
            body = self.primary()
            for _ in range(k):
                body = TickPrefix(body)
            return body
        if self.at_punct("["):
            self.next()
            pre = self.prefix()
            self.eat_punct(".")
            cont = self.proc()
            self.eat_punct("]")
            timeout = self.primary()
            return TimeoutPrefix(pre, cont, timeout)
        if self.at_ident("if"):
            self.next()
            guard = self.bool_expr()
            self.eat_ident("then")
            then_branch = self.primary()
            self.eat_ident("else")
            else_branch = self.primary()
            return IfElse(guard, then_branch, else_branch)
        if self.at_ident("fix"):
            self.next()
            var = self.eat_ident()
            self.eat_punct(".")
            return _DeferredFix(var, self.primary())
        if self._at_prefix():
            pre = self.prefix()
            self.eat_punct(".")
            return _DeferredAct(pre, self.primary())
        if t.kind == "ident":
            self.next()
            return ProcVar(t.text)
        if self.at_punct("("):
            self.next()
            p = self.proc()
            self.eat_punct(")")
            return p
        self.fail(f"found {t.text!r}",
                  ("nil", "tick", "[", "if", "fix", "prefix", "(", "identifier"))


# Deferred nodes postpone the time-guardedness check and the retry-loop
# expansion until process references have been substituted.

@dataclass(frozen=True)
class _DeferredFix(ProcessTerm):
    var: str
    body: ProcessTerm


@dataclass(frozen=True)
class _DeferredAct(ProcessTerm):
    prefix: Prefix
    body: ProcessTerm


def _expand(term: ProcessTerm, defs: dict, stack: tuple) -> ProcessTerm:
    if isinstance(term, ProcVar):
        name = term.name
        if name in stack:
            # bound by an enclosing fix of the same name: leave it
            return term
        if name in defs:
            return _expand(defs[name], defs, stack + (f"!{name}",)) \
                if f"!{name}" not in stack else _cycle(name)
        return term
    if isinstance(term, Nil):
        return term
    if isinstance(term, TickPrefix):
        return TickPrefix(_expand(term.body, defs, stack))
    if isinstance(term, Parallel):
        return Parallel(_expand(term.left, defs, stack), _expand(term.right, defs, stack))
    if isinstance(term, Restrict):
        return Restrict(_expand(term.body, defs, stack), term.channel)
    if isinstance(term, IfElse):
        return IfElse(term.guard, _expand(term.then_branch, defs, stack),
                      _expand(term.else_branch, defs, stack))
    if isinstance(term, _DeferredFix):
        return Fix(term.var, _expand(term.body, defs, stack + (term.var,)))
    if isinstance(term, Fix):
        return Fix(term.var, _expand(term.body, defs, stack + (term.var,)))
    if isinstance(term, _DeferredAct):
        return act(term.prefix, _expand(term.body, defs, stack))
    if isinstance(term, TimeoutPrefix):
        return TimeoutPrefix(term.prefix, _expand(term.continuation, defs, stack),
                             _expand(term.timeout, defs, stack))
    raise CcpsError(f"unknown term node {term!r}")


def _cycle(name: str):
    raise CcpsError(
        f"process definition {name!r} is cyclic; use 'fix' for recursion")


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def parse_model(text: str) -> Model:
    """Parse a model file into a system plus its process definitions.
    Raises ParseError on syntax errors and WellFormednessError when the
    process mentions undeclared devices."""
    p = _Parser(text)
    state: dict = {}
    uncertainty: dict = {}
    invariant: dict = {}
    actuators: dict = {}
    sensor_error: dict = {}
    sensor_target: dict = {}
    dynamics: dict = {}
    defs: dict = {}
    system: Optional[ProcessTerm] = None

    while p.peek().kind != "eof":
        if p.at_ident("vars"):
            p.next()
            p.eat_punct("{")
            while not p.at_punct("}"):
                name = p.eat_ident()
                p.eat_punct("=")
                state[name] = p.number()
                if p.at_ident("uncertainty"):
                    p.next()
                    uncertainty[name] = p.number()
                if p.at_ident("invariant"):
                    p.next()
                    invariant[name] = p.interval_lit()
            p.eat_punct("}")
        elif p.at_ident("actuators"):
            p.next()
            p.eat_punct("{")
            while not p.at_punct("}"):
                name = p.eat_ident()
                p.eat_punct("=")
                actuators[name] = p.value()
            p.eat_punct("}")
        elif p.at_ident("sensors"):
            p.next()
            p.eat_punct("{")
            while not p.at_punct("}"):
                name = p.eat_ident()
                p.eat_ident("measures")
                sensor_target[name] = p.eat_ident()
                p.eat_ident("error")
                sensor_error[name] = p.number()
            p.eat_punct("}")
        elif p.at_ident("dynamics"):
            p.next()
            p.eat_punct("{")
            while not p.at_punct("}"):
                name = p.eat_ident()
                p.eat_punct(":")
                cases = []
                default = Fraction(0)
                while True:
                    if p.at_ident("default"):
                        p.next()
                        p.eat_punct("->")
                        default = p.number()
                    else:
                        conds = {}
                        while True:
                            a = p.eat_ident()
                            p.eat_punct("=")
                            conds[a] = p.value()
                            if p.at_punct("&"):
                                p.next()
                                continue
                            break
                        p.eat_punct("->")
                        cases.append((conds, p.number()))
                    if p.at_punct(","):
                        p.next()
                        continue
                    break
                dynamics[name] = drift_table(cases, default)
            p.eat_punct("}")
        elif p.at_ident("process"):
            p.next()
            name = p.eat_ident()
            p.eat_punct("=")
            defs[name] = p.proc()
        elif p.at_ident("system"):
            p.next()
            system = p.proc()
        else:
            p.fail(f"found {p.peek().text!r}",
                   ("vars", "actuators", "sensors", "dynamics", "process", "system"))

    if system is None:
        raise ParseError("model has no 'system' entry", p.peek().line, p.peek().col)
    proc = _expand(system, defs, ())
    env = make_env(state=state, actuators=actuators, uncertainty=uncertainty,
                   dynamics=dynamics, sensor_error=sensor_error,
                   sensor_target=sensor_target, invariant=invariant)
    expanded_defs = {}
    for name, body in defs.items():
        try:
            expanded_defs[name] = _expand(body, {k: v for k, v in defs.items() if k != name}, ())
        except CcpsError:
            expanded_defs[name] = body
    return Model(make_cps(env, proc), expanded_defs)


def parse_model_file(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

def _print_value(v: Value) -> str:
    if isinstance(v, Real):
        return fmt_rat(v.num)
    return str(v)  # Switch -> on/off, Name -> 'x'


def _print_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Lit):
        return _print_value(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"-{_print_expr(e.arg, 2)}"
    if isinstance(e, BinOp):
        mine = 1 if e.op in "+-" else 2
        text = f"{_print_expr(e.left, mine)} {e.op} {_print_expr(e.right, mine + 1)}"
        return f"({text})" if mine < prec else text
    raise CcpsError(f"unknown expression node {e!r}")


def _print_bool(b: BoolExpr, prec: int = 0) -> str:
    if isinstance(b, BoolLit):
        return "true" if b.value else "false"
    if isinstance(b, Not):
        return f"not {_print_bool(b.arg, 3)}"
    if isinstance(b, BoolOp):
        mine = 1 if b.op == "or" else 2
        text = f"{_print_bool(b.left, mine)} {b.op} {_print_bool(b.right, mine + 1)}"
        return text  # no boolean parens in the grammar; precedence suffices
    if isinstance(b, Cmp):
        return f"{_print_expr(b.left)} {b.op} {_print_expr(b.right)}"
    raise CcpsError(f"unknown guard node {b!r}")


def _print_prefix(p: Prefix) -> str:
    if isinstance(p, Send):
        if isinstance(p.expr, Lit) and p.expr.value == UNIT:
            return f"{p.channel}!"
        return f"{p.channel}!<{_print_expr(p.expr)}>"
    if isinstance(p, Receive):
        return f"{p.channel}?({p.var})"
    if isinstance(p, ReadSensor):
        return f"read {p.var} {p.sensor}"
    if isinstance(p, WriteActuator):
        return f"write {_print_expr(p.expr)} {p.actuator}"
    raise CcpsError(f"unknown prefix {p!r}")


def _retry_sugar(t: ProcessTerm):
    """Recognise  fix W. [pi.P]W  with W unused in P: printable as pi.P."""
    if isinstance(t, Fix) and isinstance(t.body, TimeoutPrefix):
        to = t.body.timeout
        if isinstance(to, ProcVar) and to.name == t.var \
                and t.var not in free_proc_vars(t.body.continuation):
            return t.body.prefix, t.body.continuation
    return None


def print_proc(t: ProcessTerm, level: str = "par") -> str:
    """Render a process; ``level`` selects the grammar slot ('par',
    'restr', 'primary') so that parentheses land exactly where needed."""
    if isinstance(t, Parallel):
        text = f"{print_proc(t.left, 'restr')} | {print_proc(t.right, 'par')}"
        return f"({text})" if level != "par" else text
    if isinstance(t, Restrict):
        text = f"{print_proc(t.body, 'primary')} \\ {t.channel}"
        return f"({text})" if level == "primary" else text
    if isinstance(t, Nil):
        return "nil"
    if isinstance(t, TickPrefix):
        k = 0
        body = t
        while isinstance(body, TickPrefix):
            k += 1
            body = body.body
        tick = "tick" if k == 1 else f"tick^{k}"
        return f"{tick}. {print_proc(body, 'primary')}"
    sugar = _retry_sugar(t)
    if sugar is not None:
        pre, cont = sugar
        return f"{_print_prefix(pre)}. {print_proc(cont, 'primary')}"
    if isinstance(t, Fix):
        return f"fix {t.var}. {print_proc(t.body, 'primary')}"
    if isinstance(t, TimeoutPrefix):
        return (f"[{_print_prefix(t.prefix)}. {print_proc(t.continuation, 'par')}] "
                f"{print_proc(t.timeout, 'primary')}")
    if isinstance(t, IfElse):
        return (f"if {_print_bool(t.guard)} then {print_proc(t.then_branch, 'primary')} "
                f"else {print_proc(t.else_branch, 'primary')}")
    if isinstance(t, ProcVar):
        return t.name
    raise CcpsError(f"unknown term node {t!r}")


def print_model(model) -> str:
    """Pretty-print a model (or bare system) in parse-stable normal form."""
    cps = model.cps if isinstance(model, Model) else model
    env = cps.env
    lines = []
    if env.state:
        lines.append("vars {")
        for x in sorted(env.state):
            lines.append(f"  {x} = {fmt_rat(env.state[x])}"
                         f" uncertainty {fmt_rat(env.uncertainty[x])}"
                         f" invariant {_print_interval(env.invariant[x])}")
        lines.append("}")
    if env.actuators:
        lines.append("actuators {")
        for a in sorted(env.actuators):
            lines.append(f"  {a} = {_print_value(env.actuators[a])}")
        lines.append("}")
    if env.sensor_error:
        lines.append("sensors {")
        for s in sorted(env.sensor_error):
            lines.append(f"  {s} measures {env.sensor_target[s]}"
                         f" error {fmt_rat(env.sensor_error[s])}")
        lines.append("}")
    if env.dynamics and any(t.cases or t.default for t in env.dynamics.values()):
        lines.append("dynamics {")
        for x in sorted(env.dynamics):
            t = env.dynamics[x]
            arms = [(" & ".join(f"{a}={_print_value(v)}" for a, v in conds)
                     + f" -> {fmt_rat(d)}") for conds, d in t.cases]
            arms.append(f"default -> {fmt_rat(t.default)}")
            lines.append(f"  {x}: " + ", ".join(arms))
        lines.append("}")
    lines.append("")
    lines.append(f"system {print_proc(cps.proc, 'par')}")
    return "\n".join(lines) + "\n"


def _print_interval(iv: Interval) -> str:
    l = "(" if iv.lo_open else "["
    r = ")" if iv.hi_open else "]"
    return f"{l}{fmt_rat(iv.lo)}, {fmt_rat(iv.hi)}{r}"
