"""Line-oriented circuit language.

::

    # two particles, product start, one coupling
    particles 2
    init 00
    gate 0 u(0.3, 1.1, -0.4) ; gate 1 H      # ';' puts gates in one layer
    cphase 0 1 theta1=pi/2 modes 1 1 tag A+B
    gate 0 bs(beta1=0, beta2=pi/4) tag A

Statements are ``particles <n>``, ``init <bits>|bell|state <c0> <c1> ...``,
``gate <p> <kind>[(<args>)] [tag <owner>]`` and
``cphase <p> <q> [<name>=]<theta> [modes <mp> <mq>] [tag <owner>]``.  Gate
kinds are H, X, Z, phase(t), u(t, p, l), bs(b1, b2) and mat(8 reals, row-major
re/im pairs).  Arguments are separated by commas or whitespace, may be named
(``name=value``; equal names are tied) and may use ``+ - * /``, parentheses and
``pi``.
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass

import numpy as np

from .state_core import (
    GATE_KINDS,
    MAX_PARTICLES,
    Circuit,
    CircuitError,
    ControlledPhaseGate,
    SingleParticleGate,
    StateVector,
    is_unitary,
    particle_label,
)

MAX_EXPR_LEN = 256
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_OWNER = re.compile(r"[A-Za-z0-9_]+(\+[A-Za-z0-9_]+)*\Z")
_GATE = re.compile(r"([A-Za-z_]\w*)(?:\((.*)\))?\Z", re.S)


class DslError(ValueError):
    def __init__(self, message: str, line: int, column: int, source: str = "<circuit>"):
        self.message, self.line, self.column, self.source = message, line, column, source
        super().__init__(f"{source}:{line}:{column}: {message}")


@dataclass(frozen=True)
class _Tok:
    text: str
    col: int


class _Ctx:
    def __init__(self, source: str, line: int):
        self.source, self.line = source, line

    def error(self, msg: str, col: int) -> DslError:
        return DslError(msg, self.line, col, self.source)


def _tokens(text: str, col0: int, ctx: _Ctx) -> list[_Tok]:
    """Whitespace-separated words; a '(' group is kept in one token."""
    out, i, n = [], 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        start, depth = i, 0
        while i < n and (depth > 0 or not text[i].isspace()):
            if text[i] == "(":
                depth += 1
            elif text[i] == ")":
                depth -= 1
                if depth < 0:
                    raise ctx.error("unbalanced ')'", col0 + i)
            i += 1
        if depth:
            raise ctx.error("unclosed '('", col0 + start)
        out.append(_Tok(text[start:i], col0 + start))
    return out


_BINOPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
           ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    raise ValueError("only numbers, pi, + - * / and parentheses are allowed")


def eval_real(expr: str) -> float:
    """Evaluate a small arithmetic expression; raises ValueError."""
    expr = expr.strip()
    if not expr:
        raise ValueError("empty expression")
    if len(expr) > MAX_EXPR_LEN:
        raise ValueError("expression too long")
    try:
        value = _eval_node(ast.parse(expr, mode="eval"))
    except (SyntaxError, RecursionError, MemoryError, OverflowError, ZeroDivisionError) as exc:
        raise ValueError(f"bad expression {expr!r} ({type(exc).__name__})") from None
    if not math.isfinite(value):
        raise ValueError(f"expression {expr!r} is not finite")
    return value


def _split_args(body: str, col0: int) -> list[tuple[str, int]]:
    sep = "," if "," in body else None
    out, pos = [], 0
    if sep:
        for part in body.split(","):
            lead = len(part) - len(part.lstrip())
            out.append((part.strip(), col0 + pos + lead))
            pos += len(part) + 1
    else:
        for m in re.finditer(r"\S+", body):
            out.append((m.group(), col0 + m.start()))
    return out


def _arg(text: str, col: int, ctx: _Ctx) -> tuple[str, float]:
    name = ""
    if "=" in text:
        name, _, text = text.partition("=")
        name = name.strip()
        if not _NAME.match(name):
            raise ctx.error(f"bad parameter name {name!r}", col)
    try:
        return name, eval_real(text)
    except ValueError as exc:
        raise ctx.error(str(exc), col) from None


def _int(tok: _Tok | None, what: str, ctx: _Ctx, end_col: int) -> int:
    if tok is None:
        raise ctx.error(f"expected {what}", end_col)
    if not re.fullmatch(r"\d{1,6}", tok.text):
        raise ctx.error(f"expected {what}, got {tok.text!r}", tok.col)
    return int(tok.text)


def _trailer(toks: list[_Tok], ctx: _Ctx, allow_modes: bool):
    owner, modes, i = None, None, 0
    while i < len(toks):
        t = toks[i]
        if t.text == "tag" and owner is None:
            if i + 1 >= len(toks) or not _OWNER.match(toks[i + 1].text):
                raise ctx.error("expected an owner after 'tag'", t.col)
            owner = toks[i + 1].text
            i += 2
        elif t.text == "modes" and allow_modes and modes is None:
            if i + 2 >= len(toks):
                raise ctx.error("expected two modes after 'modes'", t.col)
            mp, mq = toks[i + 1], toks[i + 2]
            if mp.text not in ("0", "1") or mq.text not in ("0", "1"):
                bad = mp if mp.text not in ("0", "1") else mq
                raise ctx.error("modes must be 0 or 1", bad.col)
            modes = (int(mp.text), int(mq.text))
            i += 3
        else:
            raise ctx.error(f"unexpected {t.text!r}", t.col)
    return owner, modes


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.n: int | None = None
        self.initial: StateVector | None = None
        self.layers: list = []
        self.tied: dict[str, tuple[float, str]] = {}

    def _check_index(self, p: int, tok: _Tok, ctx: _Ctx):
        if p >= self.n:
            raise ctx.error(f"particle {p} out of range for {self.n} particles", tok.col)

    def _tie(self, name: str, value: float, owner: str, col: int, ctx: _Ctx):
        if not name:
            return
        prev = self.tied.get(name)
        if prev is not None and prev != (value, owner):
            raise ctx.error(f"parameter {name!r} reused with a different value or owner", col)
        self.tied[name] = (value, owner)

    def statement(self, toks: list[_Tok], ctx: _Ctx, end_col: int, in_group: bool):
        head = toks[0]
        kw = head.text
        if kw == "particles":
            if self.n is not None:
                raise ctx.error("'particles' given twice", head.col)
            if in_group or len(toks) != 2:
                raise ctx.error("usage: particles <n>", head.col)
            n = _int(toks[1], "a particle count", ctx, end_col)
            if not 1 <= n <= MAX_PARTICLES:
                raise ctx.error(f"particle count must be in 1..{MAX_PARTICLES}", toks[1].col)
            self.n = n
            return None
        if self.n is None:
            raise ctx.error("'particles <n>' must come first", head.col)
        if kw == "init":
            if in_group:
                raise ctx.error("'init' cannot be grouped with gates", head.col)
            if self.initial is not None or self.layers:
                raise ctx.error("'init' must appear once, before any gate", head.col)
            self.initial = self._init(toks[1:], ctx, head, end_col)
            return None
        if kw == "gate":
            return self._gate(toks, ctx, end_col)
        if kw == "cphase":
            if in_group:
                raise ctx.error("'cphase' must be a layer of its own", head.col)
            return self._cphase(toks, ctx, end_col)
        raise ctx.error(f"unknown statement {kw!r}", head.col)

    def _init(self, toks, ctx, head, end_col) -> StateVector:
        if not toks:
            raise ctx.error("usage: init <bits>|bell|state <amplitudes>", end_col)
        t = toks[0]
        if t.text == "bell":
            if self.n != 2 or len(toks) != 1:
                raise ctx.error("'init bell' needs exactly 2 particles", t.col)
            return StateVector.bell()
        if t.text == "state":
            vals = []
            for a in toks[1:]:
                try:
                    z = complex(a.text)
                except ValueError:
                    try:
                        z = complex(eval_real(a.text))
                    except ValueError as exc:
                        raise ctx.error(f"bad amplitude: {exc}", a.col) from None
                if not (math.isfinite(z.real) and math.isfinite(z.imag)):
                    raise ctx.error("amplitude is not finite", a.col)
                vals.append(z)
            if len(vals) != 2**self.n:
                raise ctx.error(f"expected {2 ** self.n} amplitudes, got {len(vals)}", t.col)
            amps = np.array(vals, dtype=complex)
            nrm = float(np.sum(np.abs(amps) ** 2))
            if not nrm > 0 or not math.isfinite(nrm):
                raise ctx.error("amplitudes must have a finite nonzero norm", t.col)
            try:
                return StateVector(self.n, amps)
            except CircuitError:
                return StateVector.from_unnormalized(amps)
        if len(toks) != 1 or not re.fullmatch(r"[01]+", t.text) or len(t.text) != self.n:
            raise ctx.error(f"expected {self.n} mode bits, 'bell' or 'state'", t.col)
        return StateVector.basis(tuple(int(c) for c in t.text))

    def _gate(self, toks, ctx, end_col) -> SingleParticleGate:
        head = toks[0]
        p = _int(toks[1] if len(toks) > 1 else None, "a target particle", ctx, end_col)
        self._check_index(p, toks[1], ctx)
        if len(toks) < 3:
            raise ctx.error("expected a gate kind", end_col)
        spec = toks[2]
        m = _GATE.match(spec.text)
        if not m:
            raise ctx.error(f"bad gate {spec.text!r}", spec.col)
        kind, body = m.group(1), m.group(2)
        owner, _ = _trailer(toks[3:], ctx, allow_modes=False)
        owner = owner or particle_label(p)
        args = [] if body is None else _split_args(body, spec.col + len(kind) + 1)
        args = [a for a in args if a[0]]
        if kind == "mat":
            if len(args) != 8:
                raise ctx.error(f"mat needs 8 reals, got {len(args)}", spec.col)
            vals = []
            for text, col in args:
                name, v = _arg(text, col, ctx)
                if name:
                    raise ctx.error("mat entries cannot be named", col)
                vals.append(v)
            mat = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            mat = mat.reshape(2, 2)
            if not is_unitary(mat):
                raise ctx.error("matrix is not unitary (tolerance 1e-10)", spec.col)
            return SingleParticleGate(p, mat, "mat", (), owner)
        if kind not in GATE_KINDS:
            raise ctx.error(f"unknown gate kind {kind!r}", spec.col)
        arg_names = GATE_KINDS[kind][0]
        if body is not None and not arg_names and args:
            raise ctx.error(f"{kind} takes no arguments", spec.col)
        if len(args) != len(arg_names):
            raise ctx.error(f"{kind} takes {len(arg_names)} argument(s), got {len(args)}", spec.col)
        names, values = [], []
        for text, col in args:
            name, v = _arg(text, col, ctx)
            self._tie(name, v, owner, col, ctx)
            names.append(name)
            values.append(v)
        return SingleParticleGate.of_kind(kind, p, values, names, owner)

    def _cphase(self, toks, ctx, end_col) -> ControlledPhaseGate:
        p = _int(toks[1] if len(toks) > 1 else None, "a particle index", ctx, end_col)
        self._check_index(p, toks[1], ctx)
        q = _int(toks[2] if len(toks) > 2 else None, "a second particle index", ctx, end_col)
        self._check_index(q, toks[2], ctx)
        if p == q:
            raise ctx.error("cphase needs two distinct particles", toks[2].col)
        if len(toks) < 4:
            raise ctx.error("expected a phase angle", end_col)
        name, theta = _arg(toks[3].text, toks[3].col, ctx)
        owner, modes = _trailer(toks[4:], ctx, allow_modes=True)
        owner = owner or f"{particle_label(p)}+{particle_label(q)}"
        self._tie(name, theta, owner, toks[3].col, ctx)
        return ControlledPhaseGate.make(p, q, theta, name or None, owner, modes or (1, 1))

    def line(self, raw: str, lineno: int):
        ctx = _Ctx(self.source, lineno)
        text = raw.split("#", 1)[0]
        group, pos = [], 0
        for part in text.split(";"):
            toks = _tokens(part, pos + 1, ctx)
            end_col = pos + len(part) + 1
            pos += len(part) + 1
            if not toks:
                if ";" in text:
                    raise ctx.error("empty statement", end_col)
                continue
            item = self.statement(toks, ctx, end_col, in_group=";" in text)
            if item is not None:
                group.append((item, toks[0].col))
        if not group:
            return
        if isinstance(group[0][0], ControlledPhaseGate):
            layer = group[0][0]
        else:
            targets = set()
            for g, col in group:
                if g.target in targets:
                    raise ctx.error(f"particle {g.target} appears twice in one layer", col)
                targets.add(g.target)
            layer = tuple(g for g, _ in group)
        self.layers.append(layer)

    def finish(self, last_line: int) -> Circuit:
        if self.n is None:
            raise DslError("missing 'particles <n>'", max(last_line, 1), 1, self.source)
        try:
            return Circuit(self.n, tuple(self.layers), self.initial)
        except CircuitError as exc:
            raise DslError(str(exc), max(last_line, 1), 1, self.source) from None


def parse_circuit(text: str, source: str = "<circuit>") -> Circuit:
    """Parse circuit text; every failure is a ``DslError`` with line/column."""
    if not isinstance(text, str):
        raise TypeError("circuit text must be str")
    parser = _Parser(source)
    lines = text.splitlines()
    for i, raw in enumerate(lines, start=1):
        try:
            parser.line(raw, i)
        except CircuitError as exc:
            raise DslError(str(exc), i, 1, source) from None
    return parser.finish(len(lines))


def _num(x: float) -> str:
    return repr(float(x))


def _cnum(z: complex) -> str:
    im = repr(float(z.imag))
    return f"{float(z.real)!r}{im if im.startswith('-') else '+' + im}j"


def _format_gate(g: SingleParticleGate) -> str:
    if g.kind == "mat":
        flat = []
        for z in g.matrix.reshape(-1):
            flat += [_num(z.real), _num(z.imag)]
        body = "(" + " ".join(flat) + ")"
    elif g.params:
        body = "(" + ", ".join(f"{p.name}={_num(p.value)}" if p.name else _num(p.value) for p in g.params) + ")"
    else:
        body = ""
    return f"gate {g.target} {g.kind}{body} tag {g.owner}"


def format_circuit(circuit: Circuit) -> str:
    """Text that parses back to an identical circuit (names are explicit)."""
    n = circuit.n_particles
    lines = [f"particles {n}"]
    init = circuit.initial
    nz = np.flatnonzero(init.amplitudes)
    if n == 2 and init == StateVector.bell():
        lines.append("init bell")
    elif len(nz) == 1 and init.amplitudes[nz[0]] == 1:
        lines.append("init " + format(int(nz[0]), f"0{n}b"))
    else:
        lines.append("init state " + " ".join(_cnum(z) for z in init.amplitudes))
    for layer in circuit.layers:
        if isinstance(layer, ControlledPhaseGate):
            (p, q), (mp, mq) = layer.particles, layer.modes
            t = layer.theta
            lines.append(f"cphase {p} {q} {t.name}={_num(t.value)} modes {mp} {mq} tag {t.owner}")
        else:
            lines.append(" ; ".join(_format_gate(g) for g in layer))
    return "\n".join(lines) + "\n"
