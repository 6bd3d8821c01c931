"""Concrete syntax: parser and pretty-printer for processes, types,
environments, and .sxp corpus files."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .syntax import (Abs, App, Bra, In, Name, NameRef, New, Nil, Out, Par,
                     Param, Process, RVar, Rec, Sel, Value, Var, VarRef)
from .types import (END, ArrowT, SessT, SessionType, SharedT, TBra, TIn,
                    TOut, TRec, TSel, TVarT, ValueType, check_guarded)

KEYWORDS = {"app", "lam", "new", "rec", "end", "ho", "lin",
            "gamma", "delta", "def"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op><=|[!?().,:;<>{}|~+&=*]|0)
""", re.VERBOSE)


class ParseError(Exception):
    def __init__(self, msg: str, pos: int, text: str):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{msg} at line {line}, column {col}")
        self.pos = pos
        self.line = line
        self.col = col


@dataclass
class Token:
    kind: str  # "id" | "op" | "eof"
    text: str
    pos: int


def _tokenize(text: str) -> list[Token]:
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError(f"unexpected character {text[i]!r}", i, text)
        i = m.end()
        if m.lastgroup == "ws":
            continue
        toks.append(Token(m.lastgroup, m.group(), m.start()))
    toks.append(Token("eof", "", len(text)))
    return toks


class _P:
    def __init__(self, text: str, shared: set[str]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.shared = set(shared)
        self.bound: list[dict[str, str]] = [{}]  # identifier -> var sort

    # -- token helpers
    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def eat(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.pos, self.text)
        return t

    def ident(self) -> str:
        t = self.next()
        if t.kind != "id" or t.text in KEYWORDS:
            raise ParseError(f"expected identifier, found {t.text!r}", t.pos, self.text)
        return t.text

    # -- scopes
    def lookup(self, base: str) -> Optional[str]:
        for frame in reversed(self.bound):
            if base in frame:
                return frame[base]
        return None

    def push(self, bindings: dict[str, str]):
        self.bound.append(bindings)

    def pop(self):
        self.bound.pop()

    # -- identifiers as values
    def ident_value(self, base: str, dual: bool) -> Value:
        sort = self.lookup(base)
        if sort is not None:
            if dual:
                raise ParseError(f"~ applied to variable {base}", self.peek().pos, self.text)
            if sort == "rec":
                raise ParseError(f"recursion variable {base} used as a value", self.peek().pos, self.text)
            return VarRef(Var(base, sort))
        if base in self.shared:
            if dual:
                raise ParseError(f"~ applied to shared name {base}", self.peek().pos, self.text)
            return NameRef(Name(base, shared=True))
        return NameRef(Name(base, dual=dual))

    # -- processes
    def process(self) -> Process:
        left = self.prefix()
        if self.at("|"):
            self.next()
            return Par(left, self.process())
        return left

    def prefix(self) -> Process:
        t = self.peek()
        if t.text == "0":
            self.next()
            return Nil()
        if t.text == "(":
            nxt = self.toks[self.i + 1]
            if nxt.text == "new":
                return self.restriction()
            self.next()
            p = self.process()
            self.eat(")")
            return p
        if t.text == "app":
            return self.application()
        if t.text == "rec":
            return self.recursion()
        if t.text == "~" or t.kind == "id":
            return self.ident_prefix()
        raise ParseError(f"expected a process, found {t.text!r}", t.pos, self.text)

    def restriction(self) -> Process:
        self.eat("(")
        self.eat("new")
        base = self.ident()
        self.eat(":")
        if self.at("<"):
            anno = self.value_type()
            nm = Name(base, shared=True)
        else:
            anno = SessT(self.session_type())
            nm = Name(base)
        self.eat(")")
        self.push({})
        was_shared = base in self.shared
        if nm.shared:
            self.shared.add(base)
        else:
            self.shared.discard(base)
        body = self.prefix()
        if was_shared:
            self.shared.add(base)
        else:
            self.shared.discard(base)
        self.pop()
        return New(nm, anno, body)

    def application(self) -> Process:
        self.eat("app")
        fun = self.value_atom()
        args: list[Value]
        if self.at("("):
            self.next()
            args = [self.value()]
            while self.at(","):
                self.next()
                args.append(self.value())
            self.eat(")")
        else:
            args = [self.value_atom()]
        return App(fun, tuple(args))

    def recursion(self) -> Process:
        self.eat("rec")
        base = self.ident()
        danno: list = []
        if self.at("{"):
            self.next()
            while not self.at("}"):
                nb = self.ident()
                dual = False
                if nb == "~":  # not reachable: ~ is an op
                    pass
                self.eat(":")
                s = self.session_type()
                danno.append((Name(nb), SessT(s)))
                if self.at(","):
                    self.next()
            self.eat("}")
        self.eat(".")
        self.push({base: "rec"})
        body = self.prefix()
        self.pop()
        return Rec(Var(base, "rec"), tuple(danno), body)

    def ident_prefix(self) -> Process:
        dual = False
        if self.at("~"):
            self.next()
            dual = True
        base = self.ident()
        t = self.peek()
        if t.text == "!":
            self.next()
            subj = self.ident_value(base, dual)
            self.eat("(")
            payload = [self.value()]
            while self.at(","):
                self.next()
                payload.append(self.value())
            self.eat(")")
            self.eat(".")
            return Out(subj, tuple(payload), self.prefix())
        if t.text == "?":
            self.next()
            subj = self.ident_value(base, dual)
            self.eat("(")
            binders = [self.binder()]
            while self.at(","):
                self.next()
                binders.append(self.binder())
            self.eat(")")
            self.eat(".")
            self.push({b.var.base: b.var.sort for b in binders})
            cont = self.prefix()
            self.pop()
            return In(subj, tuple(binders), cont)
        if t.text == "<":
            self.next()
            subj = self.ident_value(base, dual)
            label = self.ident()
            self.eat(".")
            return Sel(subj, label, self.prefix())
        if t.text == ">":
            self.next()
            subj = self.ident_value(base, dual)
            self.eat("{")
            arms = []
            while True:
                label = self.ident()
                self.eat(":")
                arms.append((label, self.process()))
                if self.at(","):
                    self.next()
                    continue
                break
            self.eat("}")
            return Bra(subj, tuple(arms))
        if not dual and self.lookup(base) == "rec":
            return RVar(Var(base, "rec"))
        raise ParseError(f"expected a prefix after {base!r}", t.pos, self.text)

    def binder(self) -> Param:
        base = self.ident()
        anno = None
        sort = "name"
        if self.at(":"):
            self.next()
            anno = self.value_type()
            sort = "abs" if isinstance(anno, ArrowT) else "name"
        return Param(Var(base, sort), anno)

    # -- values
    def value(self) -> Value:
        if self.at("lam"):
            return self.abstraction()
        return self.value_atom()

    def value_atom(self) -> Value:
        if self.at("lam"):
            return self.abstraction()
        if self.at("("):
            self.next()
            v = self.value()
            self.eat(")")
            return v
        dual = False
        if self.at("~"):
            self.next()
            dual = True
        base = self.ident()
        return self.ident_value(base, dual)

    def abstraction(self) -> Abs:
        self.eat("lam")
        self.eat("(")
        params = [self.binder()]
        while self.at(","):
            self.next()
            params.append(self.binder())
        self.eat(")")
        self.eat(".")
        self.push({p.var.base: p.var.sort for p in params})
        body = self.prefix()
        self.pop()
        return Abs(tuple(params), body)

    # -- types
    def session_type(self) -> SessionType:
        t = self.peek()
        if t.text == "end":
            self.next()
            return END
        if t.text == "rec":
            self.next()
            var = self.ident()
            self.eat(".")
            return TRec(var, self.session_type())
        if t.text == "!":
            self.next()
            self.eat("<")
            payload = [self.value_type()]
            while self.at(","):
                self.next()
                payload.append(self.value_type())
            self.eat(">")
            self.eat(".")
            return TOut(tuple(payload), self.session_type())
        if t.text == "?":
            self.next()
            self.eat("(")
            payload = [self.value_type()]
            while self.at(","):
                self.next()
                payload.append(self.value_type())
            self.eat(")")
            self.eat(".")
            return TIn(tuple(payload), self.session_type())
        if t.text in ("+", "&"):
            self.next()
            self.eat("{")
            arms = []
            while True:
                label = self.ident()
                self.eat(":")
                arms.append((label, self.session_type()))
                if self.at(","):
                    self.next()
                    continue
                break
            self.eat("}")
            return TSel(tuple(arms)) if t.text == "+" else TBra(tuple(arms))
        if t.kind == "id" and t.text not in KEYWORDS:
            self.next()
            return TVarT(t.text)
        raise ParseError(f"expected a session type, found {t.text!r}", t.pos, self.text)

    def value_type(self) -> ValueType:
        t = self.peek()
        if t.text == "<":
            self.next()
            inner = self.value_type()
            self.eat(">")
            return SharedT(inner)
        if t.text in ("ho", "lin"):
            self.next()
            shared = t.text == "ho"
            if self.at("("):
                self.next()
                dom = [self.value_type()]
                while self.at(","):
                    self.next()
                    dom.append(self.value_type())
                self.eat(")")
                return ArrowT(tuple(dom), shared)
            return ArrowT((self.value_type(),), shared)
        return SessT(self.session_type())


def parse_process(text: str, shared: set[str] = frozenset()) -> Process:
    p = _P(text, set(shared))
    out = p.process()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.pos, text)
    return out


def parse_type(text: str):
    p = _P(text, set())
    stripped = text.lstrip()
    if stripped.startswith(("<", "ho", "lin")):
        out = p.value_type()
    else:
        out = p.value_type()  # SessT wraps plain session types
        if isinstance(out, SessT):
            out = out.session
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.pos, text)
    check_guarded(out)
    return out


def parse_env(text: str) -> tuple[dict, dict]:
    """Parse `gamma { ... } delta { ... }` into (gamma-map, delta-map) of
    identifier -> type syntax; used by the .sxp loader and tests."""
    src = SourceFile.parse(text if "def" in text else text + " def main = 0;")
    return src.gamma_decls, src.delta_decls


# ---------------------------------------------------------------------------
# source files

@dataclass
class SourceFile:
    gamma_decls: dict          # base -> ValueType (shared entries)
    delta_decls: dict          # Name -> SessionType
    definitions: dict          # name -> Process
    order: list

    @staticmethod
    def parse(text: str) -> "SourceFile":
        p = _P(text, set())
        gamma: dict = {}
        delta: dict = {}
        defs: dict = {}
        order: list = []
        while p.peek().kind != "eof":
            t = p.peek()
            if t.text == "gamma":
                p.next()
                p.eat("{")
                while not p.at("}"):
                    base = p.ident()
                    p.eat(":")
                    ty = p.value_type()
                    if not isinstance(ty, (SharedT, ArrowT)):
                        raise ParseError("gamma entries must be shared or arrow types", t.pos, text)
                    gamma[base] = ty
                    p.shared.add(base) if isinstance(ty, SharedT) else None
                    p.eat(";")
                p.eat("}")
            elif t.text == "delta":
                p.next()
                p.eat("{")
                while not p.at("}"):
                    dual = False
                    if p.at("~"):
                        p.next()
                        dual = True
                    base = p.ident()
                    p.eat(":")
                    s = p.session_type()
                    delta[Name(base, dual=dual)] = s
                    p.eat(";")
                p.eat("}")
            elif t.text == "def":
                p.next()
                dname = p.ident()
                p.eat("=")
                proc = p.process()
                p.eat(";")
                defs[dname] = proc
                order.append(dname)
            else:
                raise ParseError(f"expected gamma/delta/def, found {t.text!r}", t.pos, text)
        return SourceFile(gamma, delta, defs, order)

    @staticmethod
    def load(path) -> "SourceFile":
        with open(path, "r", encoding="utf-8") as fh:
            return SourceFile.parse(fh.read())


# ---------------------------------------------------------------------------
# pretty printing

def pretty_type(t) -> str:
    if isinstance(t, SessT):
        return pretty_type(t.session)
    if isinstance(t, SharedT):
        return f"<{pretty_type(t.inner)}>"
    if isinstance(t, ArrowT):
        head = "ho" if t.shared else "lin"
        if len(t.domain) == 1 and not isinstance(t.domain[0], ArrowT):
            return f"{head} {pretty_type(t.domain[0])}"
        return f"{head} ({', '.join(pretty_type(d) for d in t.domain)})"
    if isinstance(t, TOut):
        return f"!<{', '.join(pretty_type(u) for u in t.payload)}>.{pretty_type(t.cont)}"
    if isinstance(t, TIn):
        return f"?({', '.join(pretty_type(u) for u in t.payload)}).{pretty_type(t.cont)}"
    if isinstance(t, TSel):
        return "+{" + ", ".join(f"{l}: {pretty_type(s)}" for l, s in t.arms) + "}"
    if isinstance(t, TBra):
        return "&{" + ", ".join(f"{l}: {pretty_type(s)}" for l, s in t.arms) + "}"
    if isinstance(t, TRec):
        return f"rec {t.var}. {pretty_type(t.body)}"
    if isinstance(t, TVarT):
        return t.name
    return str(t)


def _pretty_value(v: Value) -> str:
    if isinstance(v, NameRef):
        return str(v.name)
    if isinstance(v, VarRef):
        return v.var.base
    params = ", ".join(
        p.var.base + (f": {pretty_type(p.anno)}" if p.anno is not None else "")
        for p in v.params)
    return f"lam ({params}). {_pretty(v.body, True)}"


def _pretty_subject(v: Value) -> str:
    return _pretty_value(v)


def _pretty(p: Process, atom: bool) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, RVar):
        return p.var.base
    if isinstance(p, Out):
        payload = ", ".join(_pretty_value(v) for v in p.payload)
        return f"{_pretty_subject(p.subject)}!({payload}).{_pretty(p.cont, True)}"
    if isinstance(p, In):
        binders = ", ".join(
            b.var.base + (f": {pretty_type(b.anno)}" if b.anno is not None else "")
            for b in p.binders)
        return f"{_pretty_subject(p.subject)}?({binders}).{_pretty(p.cont, True)}"
    if isinstance(p, Sel):
        return f"{_pretty_subject(p.subject)}<{p.label}.{_pretty(p.cont, True)}"
    if isinstance(p, Bra):
        arms = ", ".join(f"{l}: {_pretty(q, False)}" for l, q in p.arms)
        return f"{_pretty_subject(p.subject)}>{{{arms}}}"
    if isinstance(p, App):
        fun = _pretty_value(p.fun)
        if isinstance(p.fun, Abs):
            fun = f"({fun})"
        if len(p.args) == 1 and isinstance(p.args[0], (NameRef, VarRef)):
            return f"app {fun} {_pretty_value(p.args[0])}"
        if len(p.args) == 1 and isinstance(p.args[0], Abs):
            return f"app {fun} ({_pretty_value(p.args[0])})"
        return f"app {fun} ({', '.join(_pretty_value(v) for v in p.args)})"
    if isinstance(p, Par):
        s = f"{_pretty(p.left, True)} | {_pretty(p.right, False)}"
        return f"({s})" if atom else s
    if isinstance(p, New):
        return f"(new {p.name.base}: {pretty_type(p.anno)}) {_pretty(p.body, True)}"
    if isinstance(p, Rec):
        danno = ""
        if p.danno:
            danno = "{" + ", ".join(f"{k.base if isinstance(k, Name) else k.base}: {pretty_type(v)}"
                                    for k, v in p.danno) + "}"
        return f"rec {p.var.base}{danno}. {_pretty(p.body, True)}"
    raise TypeError(f"unknown process node {p!r}")


def pretty(p: Process) -> str:
    return _pretty(p, False)


def pretty_source(src: SourceFile) -> str:
    lines = []
    if src.gamma_decls:
        lines.append("gamma {")
        for base, ty in src.gamma_decls.items():
            lines.append(f"  {base} : {pretty_type(ty)};")
        lines.append("}")
    if src.delta_decls:
        lines.append("delta {")
        for nm, s in src.delta_decls.items():
            lines.append(f"  {nm} : {pretty_type(s)};")
        lines.append("}")
    for dname in src.order:
        lines.append(f"def {dname} = {pretty(src.definitions[dname])};")
    return "\n".join(lines) + "\n"
