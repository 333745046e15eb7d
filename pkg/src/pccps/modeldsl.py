"""Textual model format: tokenizer, recursive-descent parser, validating
builder, and canonical pretty-printer.

The surface syntax keeps user-chosen binder names; lowering to the
canonical nameless core happens in `build`. `parse_model(render_model(m))`
is the identity on the surface tree, and every diagnostic carries a
line:column source position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import syntax
from .physics import Constraint, EvolRule, MeasRule, PhysEnv, PhysState
from .semantics import Cps, make_cps
from .values import Atom, GridInterval, Guard, NameRef, VarRef, dec, fmt_dec, on_grid


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Surface syntax tree.


@dataclass(frozen=True)
class RawCmp:
    op: str
    lhs: Tuple[str, object]  # ('name', str) | ('dec', Decimal)
    rhs: Tuple[str, object]


@dataclass(frozen=True)
class RawGuard:
    node: tuple  # ('lit', bool) | ('cmp', RawCmp) | ('not', g) | ('and', g, g) | ('or', g, g)


@dataclass(frozen=True)
class RawProc:
    kind: str
    fields: tuple


def _p(kind, *fields) -> RawProc:
    return RawProc(kind, tuple(fields))


RawChoice = Tuple[Tuple[Decimal, RawProc], ...]


@dataclass(frozen=True)
class VarDecl:
    name: str
    init: Decimal
    lo: Decimal
    hi: Decimal


@dataclass(frozen=True)
class SensorDecl:
    name: str
    source: str
    lo: Decimal
    hi: Decimal
    at_tick: bool


@dataclass(frozen=True)
class ActuatorDecl:
    name: str
    values: Tuple[Tuple[str, Decimal], ...]
    init: str


@dataclass(frozen=True)
class ChannelDecl:
    name: str
    alphabet: Tuple[Tuple[str, object], ...]  # ('atom', name) | ('dec', Decimal)


@dataclass(frozen=True)
class EvolDecl:
    guard: RawGuard
    var: str
    op: str
    uniform: Optional[Tuple[Decimal, Decimal]]
    constant: Optional[Decimal]


@dataclass(frozen=True)
class ModelFile:
    name: str
    granularity: int
    vars: Tuple[VarDecl, ...]
    sensors: Tuple[SensorDecl, ...]
    actuators: Tuple[ActuatorDecl, ...]
    channels: Tuple[ChannelDecl, ...]
    evolution: Tuple[EvolDecl, ...]
    defs: Tuple[Tuple[str, RawProc], ...]
    main: RawProc


# ---------------------------------------------------------------------------
# Tokenizer.

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<dec>-?\d+(?:\.\d+)?)
  | (?P<op>\|\||&&|\+=|-=|:=|!=|<=|>=|[{}\[\]().,:;|\\=<>!])
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "model", "granularity", "var", "sensor", "actuator", "channel",
    "evolution", "proc", "main", "nil", "tick", "out", "in", "read",
    "write", "if", "then", "else", "fix", "timeout", "noise", "uniform",
    "attick", "atread", "values", "init", "alphabet", "when", "on",
    "true", "false",
}


@dataclass
class Token:
    kind: str  # 'dec' | 'id' | 'kw' | literal text for operators
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[Token]:
    out: List[Token] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"stray character {text[pos]!r}", line, col)
        chunk = m.group(0)
        kind = m.lastgroup
        if kind == "ws":
            pass
        elif kind == "dec":
            out.append(Token("dec", chunk, line, col))
        elif kind == "id":
            out.append(Token("kw" if chunk in KEYWORDS else "id", chunk, line, col))
        else:
            out.append(Token(chunk, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


# ---------------------------------------------------------------------------
# Parser.


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def err(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    def expect(self, kind: str, what: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind and not (kind == "kw" and t.kind == "kw"):
            self.err(f"expected {what or kind}, got {t.text!r}")
        return self.next()

    def keyword(self, word: str):
        t = self.peek()
        if t.kind != "kw" or t.text != word:
            self.err(f"expected '{word}', got {t.text!r}")
        return self.next()

    def ident(self, what="identifier") -> str:
        t = self.peek()
        if t.kind != "id":
            self.err(f"expected {what}, got {t.text!r}")
        return self.next().text

    def ident_soft(self, what="a name") -> str:
        """Value/atom positions may reuse keywords (the case study calls an
        actuator value 'on'); declaration and process positions stay strict."""
        t = self.peek()
        if t.kind not in ("id", "kw"):
            self.err(f"expected {what}, got {t.text!r}")
        return self.next().text

    def decimal(self) -> Decimal:
        t = self.expect("dec", "a decimal literal")
        return Decimal(t.text)

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def eat(self, kind: str, text: Optional[str] = None) -> bool:
        if self.at(kind, text):
            self.next()
            return True
        return False

    # -- model structure

    def model(self) -> ModelFile:
        self.keyword("model")
        name = self.ident("model name")
        self.expect("{")
        self.keyword("granularity")
        gtok = self.expect("dec", "an integer")
        if "." in gtok.text or int(gtok.text) < 0:
            self.err("granularity must be a nonnegative integer", gtok)
        g = int(gtok.text)
        self.expect(";")
        vars_, sensors, actuators, channels = [], [], [], []
        evolution: List[EvolDecl] = []
        defs: List[Tuple[str, RawProc]] = []
        main: Optional[RawProc] = None
        while not self.at("}"):
            t = self.peek()
            if t.kind != "kw":
                self.err(f"expected a declaration, got {t.text!r}")
            if t.text == "var":
                vars_.append(self.var_decl())
            elif t.text == "sensor":
                sensors.append(self.sensor_decl())
            elif t.text == "actuator":
                actuators.append(self.actuator_decl())
            elif t.text == "channel":
                channels.append(self.channel_decl())
            elif t.text == "evolution":
                evolution.extend(self.evolution_block())
            elif t.text == "proc":
                self.next()
                pname = self.ident("process name")
                self.expect("=")
                body = self.proc()
                self.expect(";")
                defs.append((pname, body))
            elif t.text == "main":
                self.next()
                main = self.proc()
            else:
                self.err(f"unexpected '{t.text}'")
        self.expect("}")
        self.expect("eof", "end of input")
        if main is None:
            self.err("model has no main process")
        return ModelFile(
            name, g, tuple(vars_), tuple(sensors), tuple(actuators),
            tuple(channels), tuple(evolution), tuple(defs), main,
        )

    def var_decl(self) -> VarDecl:
        self.keyword("var")
        name = self.ident()
        self.expect("=")
        init = self.decimal()
        self.keyword("in")
        self.expect("[")
        lo = self.decimal()
        self.expect(",")
        hi = self.decimal()
        self.expect("]")
        self.expect(";")
        return VarDecl(name, init, lo, hi)

    def sensor_decl(self) -> SensorDecl:
        self.keyword("sensor")
        name = self.ident()
        self.keyword("on")
        source = self.ident()
        self.keyword("noise")
        self.keyword("uniform")
        self.expect("[")
        lo = self.decimal()
        self.expect(",")
        hi = self.decimal()
        self.expect("]")
        mode = self.peek()
        if mode.kind == "kw" and mode.text in ("attick", "atread"):
            self.next()
            at_tick = mode.text == "attick"
        else:
            at_tick = True
        self.expect(";")
        return SensorDecl(name, source, lo, hi, at_tick)

    def actuator_decl(self) -> ActuatorDecl:
        self.keyword("actuator")
        name = self.ident()
        self.keyword("values")
        self.expect("{")
        values = []
        while True:
            atom = self.ident_soft("an atom")
            code = Decimal(0)
            if self.eat("("):
                self.expect("=")
                code = self.decimal()
                self.expect(")")
            values.append((atom, code))
            if not self.eat(","):
                break
        self.expect("}")
        self.keyword("init")
        init = self.ident_soft("an atom")
        self.expect(";")
        return ActuatorDecl(name, tuple(values), init)

    def channel_decl(self) -> ChannelDecl:
        self.keyword("channel")
        name = self.ident()
        self.keyword("alphabet")
        self.expect("{")
        alphabet = []
        while True:
            t = self.peek()
            if t.kind == "dec":
                alphabet.append(("dec", self.decimal()))
            else:
                alphabet.append(("atom", self.ident_soft("an atom or decimal")))
            if not self.eat(","):
                break
        self.expect("}")
        self.expect(";")
        return ChannelDecl(name, tuple(alphabet))

    def evolution_block(self) -> List[EvolDecl]:
        self.keyword("evolution")
        self.expect("{")
        rules = []
        while not self.at("}"):
            self.keyword("when")
            guard = self.guard()
            self.expect(":")
            varname = self.ident("a variable")
            op = self.peek()
            if op.kind not in ("+=", "-=", ":="):
                self.err("expected one of +=, -=, :=")
            self.next()
            if self.at("kw", "uniform"):
                self.next()
                self.expect("[")
                lo = self.decimal()
                self.expect(",")
                hi = self.decimal()
                self.expect("]")
                rules.append(EvolDecl(guard, varname, op.kind, (lo, hi), None))
            else:
                rules.append(EvolDecl(guard, varname, op.kind, None, self.decimal()))
            self.expect(";")
        self.expect("}")
        return rules

    # -- guards

    def guard(self) -> RawGuard:
        return self.guard_or()

    def guard_or(self) -> RawGuard:
        g = self.guard_and()
        while self.eat("||"):
            g = RawGuard(("or", g, self.guard_and()))
        return g

    def guard_and(self) -> RawGuard:
        g = self.guard_not()
        while self.eat("&&"):
            g = RawGuard(("and", g, self.guard_not()))
        return g

    def guard_not(self) -> RawGuard:
        if self.eat("!"):
            return RawGuard(("not", self.guard_not()))
        if self.eat("("):
            g = self.guard_or()
            self.expect(")")
            return g
        if self.at("kw", "true"):
            self.next()
            return RawGuard(("lit", True))
        if self.at("kw", "false"):
            self.next()
            return RawGuard(("lit", False))
        lhs = self.operand()
        op = self.peek()
        if op.kind not in ("<", "<=", "=", "!=", ">", ">="):
            self.err("expected a comparison operator")
        self.next()
        rhs = self.operand()
        return RawGuard(("cmp", RawCmp(op.kind, lhs, rhs)))

    def operand(self) -> Tuple[str, object]:
        t = self.peek()
        if t.kind == "dec":
            return ("dec", self.decimal())
        if t.kind in ("id", "kw"):
            return ("name", self.next().text)
        self.err(f"expected a value or name, got {t.text!r}")

    # -- processes

    def proc(self) -> RawProc:
        parts = [self.restrict_level()]
        while self.eat("||"):
            parts.append(self.restrict_level())
        if len(parts) == 1:
            return parts[0]
        return _p("par", tuple(parts))

    def restrict_level(self) -> RawProc:
        p = self.primary()
        while self.eat("\\"):
            p = _p("restrict", p, self.ident("a channel"))
        return p

    def chbody(self) -> RawChoice:
        if self.eat("{"):
            branches = []
            while True:
                w = self.decimal()
                self.expect(":")
                branches.append((w, self.restrict_level()))
                if not self.eat("|"):
                    break
            self.expect("}")
            return tuple(branches)
        return ((Decimal(1), self.restrict_level()),)

    def primary(self) -> RawProc:
        t = self.peek()
        if t.kind == "(":
            self.next()
            p = self.proc()
            self.expect(")")
            return p
        if t.kind == "id":
            return _p("ref", self.next().text)
        if t.kind != "kw":
            self.err(f"expected a process, got {t.text!r}")
        if t.text == "nil":
            self.next()
            return _p("nil")
        if t.text == "tick":
            self.next()
            self.expect(".")
            return _p("tick", self.chbody())
        if t.text == "out":
            self.next()
            chan = self.ident("a channel")
            self.expect("(")
            value = self.operand()
            self.expect(")")
            self.expect(".")
            cont = self.chbody()
            self.keyword("timeout")
            alt = self.chbody()
            return _p("out", chan, value, cont, alt)
        if t.text == "in":
            self.next()
            chan = self.ident("a channel")
            self.expect("(")
            binder = self.ident("a binder")
            self.expect(")")
            self.expect(".")
            cont = self.chbody()
            self.keyword("timeout")
            alt = self.chbody()
            return _p("inp", chan, binder, cont, alt)
        if t.text == "read":
            self.next()
            sensor = self.ident("a sensor")
            self.expect("(")
            binder = self.ident("a binder")
            self.expect(")")
            self.expect(".")
            return _p("read", sensor, binder, self.chbody())
        if t.text == "write":
            self.next()
            act = self.ident("an actuator")
            self.expect("(")
            value = self.operand()
            self.expect(")")
            self.expect(".")
            return _p("write", act, value, self.chbody())
        if t.text == "if":
            self.next()
            g = self.guard()
            self.keyword("then")
            then = self.restrict_level()
            self.keyword("else")
            els = self.restrict_level()
            return _p("if", g, then, els)
        if t.text == "fix":
            self.next()
            name = self.ident("a recursion variable")
            self.expect(".")
            return _p("fix", name, self.restrict_level())
        self.err(f"expected a process, got {t.text!r}")


def parse_model(text: str) -> ModelFile:
    return _Parser(text).model()


# ---------------------------------------------------------------------------
# Rendering (canonical, reparseable).


def render_model(mf: ModelFile) -> str:
    g = mf.granularity
    d = lambda x: fmt_dec(x, g)  # noqa: E731
    lines = [f"model {mf.name} {{", f"  granularity {g};"]
    for v in mf.vars:
        lines.append(f"  var {v.name} = {d(v.init)} in [{d(v.lo)}, {d(v.hi)}];")
    for s in mf.sensors:
        mode = "attick" if s.at_tick else "atread"
        lines.append(
            f"  sensor {s.name} on {s.source} noise uniform[{d(s.lo)}, {d(s.hi)}] {mode};"
        )
    for a in mf.actuators:
        vals = ", ".join(f"{n}(={d(c)})" for n, c in a.values)
        lines.append(f"  actuator {a.name} values {{{vals}}} init {a.init};")
    for c in mf.channels:
        vals = ", ".join(n if k == "atom" else d(n) for k, n in c.alphabet)
        lines.append(f"  channel {c.name} alphabet {{{vals}}};")
    if mf.evolution:
        lines.append("  evolution {")
        for r in mf.evolution:
            upd = (
                f"uniform[{d(r.uniform[0])}, {d(r.uniform[1])}]"
                if r.uniform is not None
                else d(r.constant)
            )
            lines.append(
                f"    when {_render_guard(r.guard, g)}: {r.var} {r.op} {upd};"
            )
        lines.append("  }")
    for name, body in mf.defs:
        lines.append(f"  proc {name} = {_render_proc(body, g)};")
    lines.append(f"  main {_render_proc(mf.main, g)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_operand(o, g: int) -> str:
    kind, payload = o
    return payload if kind == "name" else fmt_dec(payload, g)


def _render_guard(gd: RawGuard, g: int) -> str:
    tag = gd.node[0]
    if tag == "lit":
        return "true" if gd.node[1] else "false"
    if tag == "cmp":
        c = gd.node[1]
        return f"{_render_operand(c.lhs, g)} {c.op} {_render_operand(c.rhs, g)}"
    if tag == "not":
        return f"!({_render_guard(gd.node[1], g)})"
    op = "&&" if tag == "and" else "||"
    return f"({_render_guard(gd.node[1], g)} {op} {_render_guard(gd.node[2], g)})"


def _render_weight(w: Decimal) -> str:
    digits = max(0, -w.as_tuple().exponent)
    return fmt_dec(w, digits)


def _render_choice(ch: RawChoice, g: int) -> str:
    if len(ch) == 1 and ch[0][0] == 1:
        return _render_restrict(ch[0][1], g)
    body = " | ".join(f"{_render_weight(w)}: {_render_restrict(p, g)}" for w, p in ch)
    return "{" + body + "}"


def _render_restrict(p: RawProc, g: int) -> str:
    """Render at restriction level: parallel compositions get parentheses."""
    if p.kind == "par":
        return "(" + _render_proc(p, g) + ")"
    return _render_proc(p, g)


def _render_proc(p: RawProc, g: int) -> str:
    k = p.kind
    if k == "nil":
        return "nil"
    if k == "ref":
        return p.fields[0]
    if k == "tick":
        return f"tick.{_render_choice(p.fields[0], g)}"
    if k == "out":
        chan, value, cont, alt = p.fields
        return (
            f"out {chan}({_render_operand(value, g)})."
            f"{_render_choice(cont, g)} timeout {_render_choice(alt, g)}"
        )
    if k == "inp":
        chan, binder, cont, alt = p.fields
        return (
            f"in {chan}({binder}).{_render_choice(cont, g)}"
            f" timeout {_render_choice(alt, g)}"
        )
    if k == "read":
        sensor, binder, cont = p.fields
        return f"read {sensor}({binder}).{_render_choice(cont, g)}"
    if k == "write":
        act, value, cont = p.fields
        return f"write {act}({_render_operand(value, g)}).{_render_choice(cont, g)}"
    if k == "par":
        return " || ".join(_render_restrict(q, g) for q in p.fields[0])
    if k == "restrict":
        body, chan = p.fields
        rendered = _render_proc(body, g)
        # anything with a trailing sub-process would swallow the '\' on
        # reparse, so only atomic bodies and chained restrictions go bare
        if body.kind not in ("nil", "ref", "restrict"):
            rendered = f"({rendered})"
        return f"{rendered} \\ {chan}"
    if k == "if":
        guard, then, els = p.fields
        return (
            f"if {_render_guard(guard, g)} then {_render_restrict(then, g)}"
            f" else {_render_restrict(els, g)}"
        )
    if k == "fix":
        name, body = p.fields
        return f"fix {name}. {_render_restrict(body, g)}"
    raise ValueError(f"unknown node {k!r}")


# ---------------------------------------------------------------------------
# Validation and lowering to a system.


class BuildError(Exception):
    pass


def build(mf: ModelFile) -> Cps:
    g = mf.granularity
    var_names = {v.name for v in mf.vars}
    sensor_names = {s.name for s in mf.sensors}
    act_names = {a.name for a in mf.actuators}
    chan_names = {c.name for c in mf.channels}
    all_names = [v.name for v in mf.vars] + [s.name for s in mf.sensors] + [
        a.name for a in mf.actuators
    ] + [c.name for c in mf.channels]
    dupes = {n for n in all_names if all_names.count(n) > 1}
    if dupes:
        raise BuildError(f"names declared twice: {sorted(dupes)}")

    atoms: Dict[str, Atom] = {}
    for a in mf.actuators:
        for atom_name, _code in a.values:
            atoms[atom_name] = Atom(atom_name)
    for c in mf.channels:
        for kind, payload in c.alphabet:
            if kind == "atom" and payload not in atoms:
                atoms[payload] = Atom(payload)

    def grid(lo: Decimal, hi: Decimal, where: str) -> GridInterval:
        try:
            return GridInterval(lo, hi, g)
        except ValueError as e:
            raise BuildError(f"{where}: {e}") from None

    # environment
    evol_rules: Dict[str, List[EvolRule]] = {v.name: [] for v in mf.vars}
    for r in mf.evolution:
        if r.var not in var_names:
            raise BuildError(f"evolution rule targets unknown variable {r.var!r}")
        guard = _lower_rule_guard(r.guard, act_names, atoms)
        if r.uniform is not None:
            rule = EvolRule(guard, r.op, grid(*r.uniform, f"rule for {r.var}"))
        else:
            if not on_grid(r.constant, g):
                raise BuildError(f"constant {r.constant} off the 10^-{g} grid")
            rule = EvolRule(guard, r.op, None, r.constant)
        evol_rules[r.var].append(rule)
    for v in mf.vars:
        if not evol_rules[v.name]:
            raise BuildError(f"variable {v.name!r} has no evolution rule")

    meas_rules: Dict[str, MeasRule] = {}
    for s in mf.sensors:
        if s.source not in var_names:
            raise BuildError(f"sensor {s.name!r} reads unknown variable {s.source!r}")
        meas_rules[s.name] = MeasRule(
            s.source, grid(s.lo, s.hi, f"sensor {s.name}"), s.at_tick
        )

    constraints = [Constraint(v.name, v.lo, v.hi) for v in mf.vars]
    env = PhysEnv(g, evol_rules, meas_rules, constraints)

    init_sensors = {}
    inits = {v.name: v.init for v in mf.vars}
    for v in mf.vars:
        if not on_grid(v.init, g) or not on_grid(v.lo, g) or not on_grid(v.hi, g):
            raise BuildError(f"variable {v.name!r} bounds off the grid")
    for s in mf.sensors:
        init_sensors[s.name] = inits[s.source]  # sensors start on their source
    init_acts = {}
    for a in mf.actuators:
        if a.init not in {n for n, _ in a.values}:
            raise BuildError(f"actuator {a.name!r} initial {a.init!r} not in values")
        init_acts[a.name] = atoms[a.init]
    state = PhysState(inits, init_sensors, init_acts)

    alphabets = {}
    for c in mf.channels:
        vals = []
        for kind, payload in c.alphabet:
            if kind == "dec":
                if not on_grid(payload, g):
                    raise BuildError(f"channel {c.name!r} value off the grid")
                vals.append(payload)
            else:
                vals.append(atoms[payload])
        alphabets[c.name] = tuple(vals)

    act_values = {a.name: {n for n, _ in a.values} for a in mf.actuators}
    scope = _Scope(mf, sensor_names, act_names, chan_names, atoms,
                   alphabets, act_values)
    defs: Dict[str, syntax.Process] = {}
    for name, body in mf.defs:
        if name in defs:
            raise BuildError(f"process {name!r} defined twice")
        defs[name] = scope.lower(body, [], [], defs)
    main = scope.lower(mf.main, [], [], defs)
    try:
        syntax.check_time_guarded(main)
    except ValueError as e:
        raise BuildError(str(e)) from None
    try:
        return make_cps(env, state, main, alphabets)
    except Exception as e:
        raise BuildError(str(e)) from None


class _Scope:
    def __init__(self, mf, sensor_names, act_names, chan_names, atoms,
                 alphabets, act_values):
        self.mf = mf
        self.sensors = sensor_names
        self.acts = act_names
        self.chans = chan_names
        self.atoms = atoms
        self.alphabets = alphabets
        self.act_values = act_values

    def value_operand(self, o, vstack: List[str], what: str):
        kind, payload = o
        if kind == "dec":
            return payload
        if payload in vstack:
            return VarRef(vstack.index(payload))
        if payload in self.atoms:
            return self.atoms[payload]
        raise BuildError(f"{what}: unknown value {payload!r}")

    def lower_guard(self, gd: RawGuard, vstack: List[str]) -> Guard:
        tag = gd.node[0]
        if tag == "lit":
            return Guard.lit(gd.node[1])
        if tag == "cmp":
            c = gd.node[1]
            return Guard.cmp(
                c.op,
                self.value_operand(c.lhs, vstack, "guard"),
                self.value_operand(c.rhs, vstack, "guard"),
            )
        if tag == "not":
            return self.lower_guard(gd.node[1], vstack).negate()
        a = self.lower_guard(gd.node[1], vstack)
        b = self.lower_guard(gd.node[2], vstack)
        return a.and_(b) if tag == "and" else a.or_(b)

    def lower_choice(self, ch: RawChoice, vstack, pstack, defs) -> syntax.Choice:
        branches = []
        for w, p in ch:
            branches.append((Fraction(w), self.lower(p, vstack, pstack, defs)))
        try:
            return syntax.choice(branches)
        except ValueError as e:
            raise BuildError(str(e)) from None

    def lower(self, p: RawProc, vstack, pstack, defs) -> syntax.Process:
        k = p.kind
        if k == "nil":
            return syntax.NIL
        if k == "ref":
            name = p.fields[0]
            if name in pstack:
                return syntax.var(pstack.index(name))
            if name in defs:
                return defs[name]
            raise BuildError(f"unknown process {name!r}")
        if k == "tick":
            return syntax.tick(self.lower_choice(p.fields[0], vstack, pstack, defs))
        if k == "out":
            chan, value, cont, alt = p.fields
            if chan not in self.chans:
                raise BuildError(f"undeclared channel {chan!r}")
            v = self.value_operand(value, vstack, f"out {chan}")
            if not isinstance(v, VarRef) and v not in self.alphabets[chan]:
                raise BuildError(
                    f"value {v!r} is outside the alphabet of channel {chan!r}"
                )
            return syntax.timeout_out(
                chan,
                v,
                self.lower_choice(cont, vstack, pstack, defs),
                self.lower_choice(alt, vstack, pstack, defs),
            )
        if k == "inp":
            chan, binder, cont, alt = p.fields
            if chan not in self.chans:
                raise BuildError(f"undeclared channel {chan!r}")
            return syntax.timeout_in(
                chan,
                self.lower_choice(cont, [binder] + vstack, pstack, defs),
                self.lower_choice(alt, vstack, pstack, defs),
            )
        if k == "read":
            sensor, binder, cont = p.fields
            if sensor not in self.sensors:
                raise BuildError(f"undeclared sensor {sensor!r}")
            return syntax.read(
                sensor, self.lower_choice(cont, [binder] + vstack, pstack, defs)
            )
        if k == "write":
            act, value, cont = p.fields
            if act not in self.acts:
                raise BuildError(f"undeclared actuator {act!r}")
            v = self.value_operand(value, vstack, f"write {act}")
            if not isinstance(v, Atom) or v.name not in self.act_values[act]:
                raise BuildError(
                    f"value {v!r} is outside the declared values of {act!r}"
                )
            return syntax.write(
                act,
                v,
                self.lower_choice(cont, vstack, pstack, defs),
            )
        if k == "par":
            return syntax.par(
                self.lower(q, vstack, pstack, defs) for q in p.fields[0]
            )
        if k == "restrict":
            body, chan = p.fields
            if chan not in self.chans:
                raise BuildError(f"undeclared channel {chan!r}")
            return syntax.restrict(self.lower(body, vstack, pstack, defs), chan)
        if k == "if":
            guard, then, els = p.fields
            return syntax.iff(
                self.lower_guard(guard, vstack),
                self.lower(then, vstack, pstack, defs),
                self.lower(els, vstack, pstack, defs),
            )
        if k == "fix":
            name, body = p.fields
            return syntax.fix(self.lower(body, vstack, [name] + pstack, defs))
        raise BuildError(f"unknown node {k!r}")


def _lower_rule_guard(gd: RawGuard, act_names, atoms) -> Guard:
    tag = gd.node[0]
    if tag == "lit":
        return Guard.lit(gd.node[1])
    if tag == "cmp":
        c = gd.node[1]

        def op(o):
            kind, payload = o
            if kind == "dec":
                return payload
            if payload in act_names:
                return NameRef(payload)
            if payload in atoms:
                return atoms[payload]
            raise BuildError(f"evolution guard: unknown name {payload!r}")

        return Guard.cmp(c.op, op(c.lhs), op(c.rhs))
    if tag == "not":
        return _lower_rule_guard(gd.node[1], act_names, atoms).negate()
    a = _lower_rule_guard(gd.node[1], act_names, atoms)
    b = _lower_rule_guard(gd.node[2], act_names, atoms)
    return a.and_(b) if tag == "and" else a.or_(b)


def load_model(path: str) -> Tuple[ModelFile, Cps]:
    with open(path, "r", encoding="utf-8") as fh:
        mf = parse_model(fh.read())
    return mf, build(mf)
