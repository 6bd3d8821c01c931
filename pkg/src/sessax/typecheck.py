"""Algorithmic typing for the unified calculus.

The declarative rules split linear environments nondeterministically; here
resources are threaded through the term and consumed, which is complete for
annotated terms.  Session prefixes advance the subject's remaining session
type; leftovers must be end-typed."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .syntax import (Abs, App, Bra, Ident, In, Name, NameRef, New, Nil, Out,
                     Par, Param, Process, RVar, Rec, Sel, Value, Var, VarRef,
                     free_names, free_vars, value_free_names, value_free_vars)
from .types import (END, ArrowT, EnvError, SessT, SessionEnv, SessionType,
                    SharedT, TBra, TEnd, TIn, TOut, TRec, TSel, TVarT,
                    ValueType, balanced, compute_dual, dual_check, env_join,
                    type_equiv, type_key, unfold_all)


class TypingError(Exception):
    def __init__(self, code: str, msg: str):
        super().__init__(f"{code}: {msg}")
        self.code = code
        self.msg = msg


@dataclass
class Deriv:
    rule: str
    subject: str
    children: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    lam_used: tuple = ()
    delta_used: tuple = ()

    def rules(self) -> list[str]:
        out = [self.rule]
        for c in self.children:
            out.extend(c.rules())
        return out

    def all_notes(self) -> list[str]:
        out = list(self.notes)
        for c in self.children:
            out.extend(c.all_notes())
        return out

    def render(self, indent: int = 0) -> str:
        pad = "  " * indent
        line = f"{pad}[{self.rule}] {self.subject}"
        if self.notes:
            line += "   -- " + "; ".join(self.notes)
        return "\n".join([line] + [c.render(indent + 1) for c in self.children])


@dataclass
class TypingReport:
    used_lambda: dict
    used_delta: dict
    leftover: dict
    derivation: Deriv

    def rule_sequence(self) -> list[str]:
        return self.derivation.rules()


@dataclass
class Ctx:
    """Mutable checking context: shared entries, linear arrows, sessions."""
    gamma: dict
    linear: dict
    sessions: dict
    touched: set

    def copy(self) -> "Ctx":
        return Ctx(dict(self.gamma), dict(self.linear), dict(self.sessions), set(self.touched))


def _ident_of(v: Value) -> Optional[Ident]:
    if isinstance(v, NameRef):
        return v.name
    if isinstance(v, VarRef):
        return v.var
    return None


def _free_idents_value(v: Value) -> set:
    return set(value_free_names(v)) | set(value_free_vars(v))


def _free_idents(p: Process) -> set:
    return set(free_names(p)) | set(free_vars(p))


def _pp(v) -> str:
    from .surface import pretty_type
    if isinstance(v, (SessionType, ValueType)):
        return pretty_type(v)
    return str(v)


def _fits(synth: ValueType, expected: ValueType, promotable: bool, notes: list) -> bool:
    """Does a value of synthesised type fit where expected is required?"""
    if type_equiv(synth, expected):
        return True
    if isinstance(synth, ArrowT) and isinstance(expected, ArrowT):
        if len(synth.domain) == len(expected.domain) and \
                all(type_equiv(a, b) for a, b in zip(synth.domain, expected.domain)):
            if expected.shared and not synth.shared and promotable:
                notes.append("Prom")
                return True
            if not expected.shared and synth.shared:
                notes.append("EProm")
                return True
    return False


class Checker:
    def __init__(self, gamma: dict):
        self.gamma_base = dict(gamma)

    # -- values ------------------------------------------------------------
    def check_value(self, ctx: Ctx, v: Value) -> tuple[ValueType, bool, Deriv]:
        """Synthesise the value's type, consuming resources from ctx.
        Returns (type, promotable, derivation)."""
        if isinstance(v, NameRef):
            n = v.name
            if n.shared:
                ent = ctx.gamma.get(n)
                if ent is None:
                    raise TypingError("unbound", f"shared name {n} not declared")
                return ent, True, Deriv("Sh", str(n), notes=[f"{n}: {_pp(ent)}"])
            if n in ctx.sessions:
                s = ctx.sessions[n]
                if type_equiv(s, END):
                    return SessT(s), True, Deriv("Sess", str(n), notes=[f"{n}: end"])
                del ctx.sessions[n]
                ctx.touched.add(n)
                return SessT(s), False, Deriv("Sess", str(n), notes=[f"{n}: {_pp(s)}"],
                                              delta_used=((n, type_key(s)),))
            raise TypingError("unbound", f"session name {n} not available (unbound or already used)")
        if isinstance(v, VarRef):
            x = v.var
            if x in ctx.linear:
                t = ctx.linear.pop(x)
                ctx.touched.add(x)
                return t, False, Deriv("LVar", str(x), notes=[f"{x}: {_pp(t)}"], lam_used=(x,))
            if x in ctx.gamma:
                return ctx.gamma[x], True, Deriv("Sh", str(x), notes=[f"{x}: {_pp(ctx.gamma[x])}"])
            if x in ctx.sessions:
                s = ctx.sessions[x]
                if type_equiv(s, END):
                    return SessT(s), True, Deriv("Sess", str(x), notes=[f"{x}: end"])
                del ctx.sessions[x]
                ctx.touched.add(x)
                return SessT(s), False, Deriv("Sess", str(x), notes=[f"{x}: {_pp(s)}"],
                                              delta_used=((x, type_key(s)),))
            raise TypingError("unbound", f"variable {x} not in scope")
        if isinstance(v, Abs):
            return self._check_abs(ctx, v)
        raise TypingError("value", f"not a value: {v!r}")

    def _check_abs(self, ctx: Ctx, v: Abs) -> tuple[ValueType, bool, Deriv]:
        domain = []
        inner = ctx.copy()
        saved = []
        for p in v.params:
            if p.anno is None:
                raise TypingError("unannotated", f"abstraction parameter {p.var} lacks a type annotation")
            domain.append(p.anno)
            saved.append(_bind(inner, p))
        before_lin = set(inner.linear) - {p.var for p in v.params}
        before_sess = {k: v2 for k, v2 in inner.sessions.items()
                       if k not in {p.var for p in v.params}}
        deriv = self.check(inner, v.body)
        _require_binders_consumed(inner, v.params, saved)
        # usage outside the parameters
        used_lin = before_lin - set(inner.linear)
        used_sess = {k for k in before_sess
                     if k not in inner.sessions or type_key(inner.sessions[k]) != type_key(before_sess[k])}
        used_sess -= {p.var for p in v.params}
        promotable = not used_lin and not used_sess
        # propagate consumption to the outer context
        for x in used_lin:
            ctx.linear.pop(x, None)
            ctx.touched.add(x)
        for k in used_sess:
            if k in inner.sessions:
                ctx.sessions[k] = inner.sessions[k]
            else:
                ctx.sessions.pop(k, None)
            ctx.touched.add(k)
        t = ArrowT(tuple(domain), False)
        node = Deriv("Abs", f"lam({', '.join(str(p.var) for p in v.params)})", [deriv],
                     notes=[f"type {_pp(t)}"])
        return t, promotable, node

    # -- processes ----------------------------------------------------------
    def check(self, ctx: Ctx, p: Process) -> Deriv:
        if isinstance(p, Nil):
            return Deriv("Nil", "0")
        if isinstance(p, Out):
            return self._check_out(ctx, p)
        if isinstance(p, In):
            return self._check_in(ctx, p)
        if isinstance(p, Sel):
            return self._check_sel(ctx, p)
        if isinstance(p, Bra):
            return self._check_bra(ctx, p)
        if isinstance(p, App):
            return self._check_app(ctx, p)
        if isinstance(p, Par):
            return self._check_par(ctx, p)
        if isinstance(p, New):
            return self._check_new(ctx, p)
        if isinstance(p, Rec):
            return self._check_rec(ctx, p)
        if isinstance(p, RVar):
            return self._check_rvar(ctx, p)
        raise TypingError("node", f"unknown process node {p!r}")

    def _subject_route(self, ctx: Ctx, subject: Value) -> tuple[str, Ident]:
        ident = _ident_of(subject)
        if ident is None:
            raise TypingError("subject", "prefix subject must be a name or variable")
        if isinstance(ident, Name) and ident.shared:
            return "shared", ident
        if ident in ctx.gamma and isinstance(ctx.gamma[ident], SharedT):
            return "shared", ident
        return "session", ident

    def _check_out(self, ctx: Ctx, p: Out) -> Deriv:
        route, ident = self._subject_route(ctx, p.subject)
        if route == "shared":
            ent = ctx.gamma.get(ident)
            if ent is None:
                raise TypingError("unbound", f"shared subject {ident} not declared")
            if len(p.payload) != 1:
                raise TypingError("arity", "polyadic exchange on a shared name is disallowed")
            notes = []
            t, promotable, vd = self.check_value(ctx, p.payload[0])
            if not _fits(t, ent.inner, promotable, notes):
                raise TypingError("prefix-mismatch",
                                  f"shared channel {ident} carries {_pp(ent.inner)}, payload has {_pp(t)}")
            cd = self.check(ctx, p.cont)
            return Deriv("Req", f"{ident}!", [vd, cd], notes=notes)
        if ident not in ctx.sessions:
            raise TypingError("unbound", f"session subject {ident} not available")
        s = unfold_all(ctx.sessions[ident])
        if not isinstance(s, TOut):
            raise TypingError("prefix-mismatch", f"subject {ident} has type {_pp(s)}, output expected !<...>")
        if len(s.payload) != len(p.payload):
            raise TypingError("arity",
                              f"output arity {len(p.payload)} does not match type {_pp(s)}")
        ctx.sessions[ident] = s.cont
        ctx.touched.add(ident)
        notes = []
        kids = []
        for v, expect in zip(p.payload, s.payload):
            t, promotable, vd = self.check_value(ctx, v)
            if not _fits(t, expect, promotable, notes):
                raise TypingError("prefix-mismatch",
                                  f"payload on {ident} has {_pp(t)}, type requires {_pp(expect)}")
            kids.append(vd)
        kids.append(self.check(ctx, p.cont))
        return Deriv("Send", f"{ident}!", kids, notes=notes,
                     delta_used=((ident, type_key(s)),))

    def _check_in(self, ctx: Ctx, p: In) -> Deriv:
        route, ident = self._subject_route(ctx, p.subject)
        if route == "shared":
            ent = ctx.gamma.get(ident)
            if ent is None:
                raise TypingError("unbound", f"shared subject {ident} not declared")
            if len(p.binders) != 1:
                raise TypingError("arity", "polyadic exchange on a shared name is disallowed")
            expect = (ent.inner,)
            rule = "Acc"
        else:
            if ident not in ctx.sessions:
                raise TypingError("unbound", f"session subject {ident} not available")
            s = unfold_all(ctx.sessions[ident])
            if not isinstance(s, TIn):
                raise TypingError("prefix-mismatch", f"subject {ident} has type {_pp(s)}, input expected ?(...)")
            if len(s.payload) != len(p.binders):
                raise TypingError("arity",
                                  f"input arity {len(p.binders)} does not match type {_pp(s)}")
            ctx.sessions[ident] = s.cont
            ctx.touched.add(ident)
            expect = s.payload
            rule = "Rcv"
        binders = []
        saved = []
        for b, ex in zip(p.binders, expect):
            anno = b.anno if b.anno is not None else ex
            if not type_equiv(anno, ex):
                raise TypingError("prefix-mismatch",
                                  f"binder {b.var} annotated {_pp(anno)}, type requires {_pp(ex)}")
            b2 = Param(b.var, anno)
            saved.append(_bind(ctx, b2))
            binders.append(b2)
        cd = self.check(ctx, p.cont)
        _require_binders_consumed(ctx, binders, saved)
        return Deriv(rule, f"{ident}?", [cd])

    def _check_sel(self, ctx: Ctx, p: Sel) -> Deriv:
        route, ident = self._subject_route(ctx, p.subject)
        if route != "session":
            raise TypingError("prefix-mismatch", "selection on a shared name")
        if ident not in ctx.sessions:
            raise TypingError("unbound", f"session subject {ident} not available")
        s = unfold_all(ctx.sessions[ident])
        if not isinstance(s, TSel):
            raise TypingError("prefix-mismatch", f"subject {ident} has type {_pp(s)}, selection expected +{{...}}")
        arms = dict(s.arms)
        if p.label not in arms:
            raise TypingError("prefix-mismatch", f"label {p.label} not offered by {_pp(s)}")
        ctx.sessions[ident] = arms[p.label]
        ctx.touched.add(ident)
        return Deriv("Sel", f"{ident}<{p.label}", [self.check(ctx, p.cont)],
                     delta_used=((ident, type_key(s)),))

    def _check_bra(self, ctx: Ctx, p: Bra) -> Deriv:
        route, ident = self._subject_route(ctx, p.subject)
        if route != "session":
            raise TypingError("prefix-mismatch", "branching on a shared name")
        if ident not in ctx.sessions:
            raise TypingError("unbound", f"session subject {ident} not available")
        s = unfold_all(ctx.sessions[ident])
        if not isinstance(s, TBra):
            raise TypingError("prefix-mismatch", f"subject {ident} has type {_pp(s)}, branching expected &{{...}}")
        arms = dict(s.arms)
        if set(arms) != {l for l, _ in p.arms}:
            raise TypingError("branch-mismatch",
                              f"branch labels {sorted(l for l, _ in p.arms)} differ from type {_pp(s)}")
        ctx.touched.add(ident)
        kids = []
        residuals = []
        for label, q in p.arms:
            sub = ctx.copy()
            sub.sessions[ident] = arms[label]
            kids.append(self.check(sub, q))
            residuals.append(sub)
        first = residuals[0]
        for other in residuals[1:]:
            if set(other.sessions) != set(first.sessions) or set(other.linear) != set(first.linear):
                raise TypingError("branch-mismatch", "branch arms consume different resources")
            for k in first.sessions:
                if not type_equiv(first.sessions[k], other.sessions[k]):
                    raise TypingError("branch-mismatch",
                                      f"branch arms leave {k} at different types")
        ctx.sessions = first.sessions
        ctx.linear = first.linear
        ctx.touched |= first.touched
        return Deriv("Bra", f"{ident}>", kids, delta_used=((ident, type_key(s)),))

    def _check_app(self, ctx: Ctx, p: App) -> Deriv:
        notes: list[str] = []
        if isinstance(p.fun, VarRef) and p.fun.var.sort == "rec":
            raise TypingError("sort", f"recursion variable {p.fun.var} applied as a function")
        t, _, fd = self.check_value(ctx, p.fun)
        if not isinstance(t, ArrowT):
            raise TypingError("prefix-mismatch", f"application head has non-arrow type {_pp(t)}")
        if len(t.domain) != len(p.args):
            raise TypingError("arity",
                              f"application arity {len(p.args)} does not match {_pp(t)}")
        kids = [fd]
        for a, expect in zip(p.args, t.domain):
            ta, promotable, ad = self.check_value(ctx, a)
            if not _fits(ta, expect, promotable, notes):
                raise TypingError("prefix-mismatch",
                                  f"argument has type {_pp(ta)}, arrow requires {_pp(expect)}")
            if not type_equiv(ta, expect):
                pass
            else:
                if type_key(ta) != type_key(expect):
                    notes.append(f"equiv {_pp(ta)} = {_pp(expect)}")
            kids.append(ad)
        rule = "App" if all(not isinstance(a, Abs) and not (
            isinstance(a, VarRef) and a.var.sort == "abs") for a in p.args) else "App+"
        return Deriv(rule, "app", kids, notes=notes)

    def _check_par(self, ctx: Ctx, p: Par) -> Deriv:
        lf = _free_idents(p.left)
        rf = _free_idents(p.right)
        both = lf & rf
        for k in both:
            if k in ctx.linear:
                raise TypingError("linear-reuse",
                                  f"linear identifier {k} used in both parallel components")
            if k in ctx.sessions and not type_equiv(ctx.sessions[k], END):
                raise TypingError("linear-reuse",
                                  f"linear identifier {k} used in both parallel components")
        left = Ctx(dict(ctx.gamma),
                   {k: v for k, v in ctx.linear.items() if k in lf},
                   {k: v for k, v in ctx.sessions.items() if k in lf},
                   set())
        ld = self.check(left, p.left)
        right = Ctx(dict(ctx.gamma),
                    {k: v for k, v in ctx.linear.items() if k in rf},
                    {k: v for k, v in ctx.sessions.items() if k in rf},
                    set())
        rd = self.check(right, p.right)
        for k in lf | rf:
            if k in left.sessions:
                ctx.sessions[k] = left.sessions[k]
            elif k in right.sessions:
                ctx.sessions[k] = right.sessions[k]
            elif k in ctx.sessions and (k in left.touched or k in right.touched):
                del ctx.sessions[k]
            if k in ctx.linear and (k in left.touched or k in right.touched):
                del ctx.linear[k]
        ctx.touched |= left.touched | right.touched
        return Deriv("Par", "|", [ld, rd])

    def _check_new(self, ctx: Ctx, p: New) -> Deriv:
        if p.anno is None:
            raise TypingError("unannotated", f"restriction (new {p.name}) lacks a type annotation")
        if p.name.shared:
            if not isinstance(p.anno, SharedT):
                raise TypingError("prefix-mismatch", f"shared restriction {p.name} needs a <...> annotation")
            sub = ctx
            old = sub.gamma.get(p.name)
            sub.gamma[p.name] = p.anno
            d = self.check(sub, p.body)
            if old is None:
                del sub.gamma[p.name]
            else:
                sub.gamma[p.name] = old
            return Deriv("Res", f"(new {p.name})", [d])
        if not isinstance(p.anno, SessT):
            raise TypingError("prefix-mismatch", f"session restriction {p.name} needs a session annotation")
        s = p.anno.session
        sd = compute_dual(s)
        if not dual_check(s, sd):
            raise TypingError("duality", f"annotation of (new {p.name}) is not dualisable")
        co = p.name.co()
        saved = [(k, ctx.sessions.pop(k, _MISSING), k in ctx.touched) for k in (p.name, co)]
        ctx.sessions[p.name] = s
        ctx.sessions[co] = sd
        d = self.check(ctx, p.body)
        _require_end(ctx, p.name)
        _require_end(ctx, co)
        for k, old, touched in saved:
            if old is not _MISSING:
                ctx.sessions[k] = old
            if not touched:
                ctx.touched.discard(k)
        note = f"dual {_pp(s)} dual {_pp(sd)}"
        return Deriv("ResS", f"(new {p.name})", [d], notes=[note])

    def _check_rec(self, ctx: Ctx, p: Rec) -> Deriv:
        danno = {k: (v.session if isinstance(v, SessT) else v) for k, v in p.danno}
        body_ids = _free_idents(p.body)
        for k in body_ids:
            if k in ctx.linear:
                raise TypingError("linear-reuse",
                                  f"recursion body captures linear variable {k}")
            if k in ctx.sessions and k not in danno \
                    and not type_equiv(ctx.sessions[k], END):
                raise TypingError("rec-mismatch",
                                  f"recursion body uses session {k} absent from its annotation")
        for k, s in danno.items():
            if k not in ctx.sessions:
                raise TypingError("rec-mismatch", f"recursion annotation mentions unavailable {k}")
            if not type_equiv(ctx.sessions[k], s):
                raise TypingError("rec-mismatch",
                                  f"recursion annotation for {k} is {_pp(s)}, context has {_pp(ctx.sessions[k])}")
        ambient_end = {k: s for k, s in ctx.sessions.items()
                       if k not in danno and type_equiv(s, END)}
        sub = Ctx(dict(ctx.gamma), {}, {k: danno[k] for k in danno}, set())
        sub.sessions.update(ambient_end)
        sub.gamma[p.var] = dict(danno)
        d = self.check(sub, p.body)
        for k in danno:
            if k in sub.sessions:
                _require_end(sub, k)
        for k in danno:
            ctx.sessions.pop(k, None)
            ctx.touched.add(k)
        return Deriv("Rec", f"rec {p.var}", [d])

    def _check_rvar(self, ctx: Ctx, p: RVar) -> Deriv:
        ent = ctx.gamma.get(p.var)
        if ent is None or not isinstance(ent, dict):
            raise TypingError("unbound", f"recursion variable {p.var} not in scope")
        for k, s in ent.items():
            if k not in ctx.sessions:
                raise TypingError("rec-mismatch", f"recursion variable {p.var} needs {k}")
            if not type_equiv(ctx.sessions[k], s):
                raise TypingError("rec-mismatch",
                                  f"recursion variable {p.var} needs {k}: {_pp(s)}, "
                                  f"context has {_pp(ctx.sessions[k])}")
            del ctx.sessions[k]
            ctx.touched.add(k)
        return Deriv("RVar", str(p.var))


_MISSING = object()


def _bind(ctx: Ctx, b: Param) -> tuple:
    """Bind a parameter, returning a record that restores shadowed entries."""
    anno = b.anno
    x = b.var
    saved = (x,
             ctx.gamma.pop(x, _MISSING),
             ctx.linear.pop(x, _MISSING),
             ctx.sessions.pop(x, _MISSING),
             x in ctx.touched)
    if isinstance(anno, SessT):
        ctx.sessions[x] = anno.session
    elif isinstance(anno, ArrowT):
        if anno.shared:
            ctx.gamma[x] = anno
        else:
            ctx.linear[x] = anno
    elif isinstance(anno, SharedT):
        ctx.gamma[x] = anno
    else:
        raise TypingError("unannotated", f"binder {x} has unusable annotation {anno!r}")
    return saved


def _require_binders_consumed(ctx: Ctx, binders, saved: list = ()):
    for b in binders:
        x = b.var
        if x in ctx.linear:
            raise TypingError("linear-unused", f"linear variable {x} not used")
        if x in ctx.sessions:
            _require_end(ctx, x)
        ctx.gamma.pop(x, None)
    for x, g, l, s, touched in reversed(list(saved)):
        if g is not _MISSING:
            ctx.gamma[x] = g
        if l is not _MISSING:
            ctx.linear[x] = l
        if s is not _MISSING:
            ctx.sessions[x] = s
        if not touched:
            ctx.touched.discard(x)


def _require_end(ctx: Ctx, ident: Ident):
    if ident in ctx.sessions:
        s = ctx.sessions.pop(ident)
        if not type_equiv(s, END):
            raise TypingError("linear-unused",
                              f"session {ident} left at {_pp(s)}, must be consumed to end")


def check_value(gamma: dict, v: Value, delta: Optional[SessionEnv] = None):
    """Type a value under (gamma; <synth>; delta).  Returns
    (type, lam_used, delta_used, promotable)."""
    ctx = Ctx(dict(gamma), {}, dict(delta or {}), set())
    chk = Checker(gamma)
    t, promotable, deriv = chk.check_value(ctx, v)
    delta_used = {k: (delta or {})[k] for k in (delta or {}) if k not in ctx.sessions}
    return t, {}, delta_used, promotable


def check_process(gamma: dict, delta: SessionEnv, p: Process):
    """Check p under declared gamma/delta; returns (TypingReport, residual ctx)."""
    ctx = Ctx(dict(gamma), {}, dict(delta), set())
    chk = Checker(gamma)
    deriv = chk.check(ctx, p)
    used = {k: delta[k] for k in delta if k in ctx.touched or k not in ctx.sessions}
    return TypingReport(dict(ctx.linear), used, dict(ctx.sessions), deriv), ctx


def typecheck_top(gamma: dict, delta: SessionEnv, p: Process,
                  require_balanced: bool = True) -> TypingReport:
    """Full judgement: every declared session consumed to end, no linear
    leftovers, declared delta balanced when requested."""
    if require_balanced and not balanced(delta):
        raise TypingError("balance", "declared session environment is not balanced")
    report, ctx = check_process(gamma, delta, p)
    for k, s in list(ctx.sessions.items()):
        if not type_equiv(s, END):
            raise TypingError("linear-unused",
                              f"session {k} left at {_pp(s)} (unconsumed linear)")
        report.derivation.notes.append(f"End {k}")
    if ctx.linear:
        raise TypingError("linear-unused",
                          f"linear variables left over: {sorted(map(str, ctx.linear))}")
    return report
