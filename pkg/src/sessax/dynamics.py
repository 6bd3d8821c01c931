"""Reduction semantics, untyped LTS, environmental LTS (plain and refined),
typed transitions, deterministic-tau classification, and barbs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .syntax import (Abs, App, Bra, In, Name, NameRef, New, Nil, Out, Par,
                     Param, Process, RVar, Rec, Sel, Value, Var, VarRef,
                     alpha_eq, canon_key, fresh_name, free_names, rename_name,
                     sc_normalize, subst_name, subst_rec, subst_value,
                     value_canon_key, value_free_names)
from .types import (END, ArrowT, SessT, SessionEnv, SessionType, SharedT,
                    TIn, TOut, TBra, TSel, ValueType, balanced, compute_dual,
                    delta_reduce, env_key, type_equiv, type_key, unfold_all)
from .typecheck import Checker, Ctx, TypingError, typecheck_top


# ---------------------------------------------------------------------------
# labels

class Label:
    pass


@dataclass(frozen=True)
class LTau(Label):
    kind: str = "plain"  # "session" | "beta" | "plain"
    subject: Optional[Name] = None   # sync evidence, not part of the action
    arm: Optional[str] = None

    def __str__(self):
        return {"session": "tau_s", "beta": "tau_b", "plain": "tau"}[self.kind]


@dataclass(frozen=True)
class LOut(Label):
    subject: Name
    payload: tuple[Value, ...]
    extruded: tuple[tuple[Name, object], ...] = ()
    ptype: tuple = ()  # payload value types, when annotated

    def __str__(self):
        ext = f"(new {', '.join(str(n) for n, _ in self.extruded)}) " if self.extruded else ""
        from .surface import _pretty_value
        return f"{ext}{self.subject}!<{', '.join(_pretty_value(v) for v in self.payload)}>"


@dataclass(frozen=True)
class LIn(Label):
    subject: Name
    payload: tuple[Value, ...]

    def __str__(self):
        from .surface import _pretty_value
        return f"{self.subject}?<{', '.join(_pretty_value(v) for v in self.payload)}>"


@dataclass(frozen=True)
class LSel(Label):
    subject: Name
    label: str

    def __str__(self):
        return f"{self.subject}+{self.label}"


@dataclass(frozen=True)
class LBra(Label):
    subject: Name
    label: str

    def __str__(self):
        return f"{self.subject}&{self.label}"


def label_key(l: Label) -> tuple:
    """Alpha-invariant comparison key; extruded binders are positional."""
    if isinstance(l, LTau):
        return ("tau",)
    if isinstance(l, LOut):
        env = {}
        for i, (n, _) in enumerate(l.extruded):
            env[Name(n.base, False, n.shared)] = i
        from .syntax import _canon_value
        keys = tuple(_canon_value(v, env, {}, [len(l.extruded)]) for v in l.payload)
        return ("out", str(l.subject), len(l.extruded), keys)
    if isinstance(l, LIn):
        return ("in", str(l.subject), tuple(value_canon_key(v) for v in l.payload))
    if isinstance(l, LSel):
        return ("sel", str(l.subject), l.label)
    if isinstance(l, LBra):
        return ("bra", str(l.subject), l.label)
    raise TypeError(f"unknown label {l!r}")


def classify_tau(label: Label) -> str:
    if not isinstance(label, LTau):
        raise ValueError("not a tau label")
    return label.kind


def subject_of(l: Label) -> Optional[Name]:
    return getattr(l, "subject", None)


# ---------------------------------------------------------------------------
# untyped LTS

@dataclass
class InSchema:
    """An input prefix available to the environment; payload supplied later."""
    subject: Name
    arity: int
    annos: tuple
    instantiate: Callable[[tuple[Value, ...]], Process]


@dataclass
class Step:
    label: Optional[Label]
    target: Optional[Process]
    schema: Optional[InSchema] = None


def _subject_name(v: Value) -> Optional[Name]:
    return v.name if isinstance(v, NameRef) else None


def _apply(fun: Abs, args: tuple[Value, ...]) -> Optional[Process]:
    if len(fun.params) != len(args):
        return None
    body = fun.body
    for prm, arg in zip(fun.params, args):
        body = subst_value(body, arg, prm.var)
    return body


def _rename_extruded(label: LOut, target: Process, avoid: set[Name]) -> tuple[LOut, Process]:
    """Alpha-rename extruded names clashing with `avoid`."""
    ext = list(label.extruded)
    payload = list(label.payload)
    for i, (n, anno) in enumerate(ext):
        if n in avoid or n.co() in avoid:
            taken = avoid | {m for m, _ in ext} | free_names(target)
            for v in payload:
                taken |= value_free_names(v)
            f = fresh_name(n.base, taken, n.shared)
            plain_old = Name(n.base, False, n.shared)
            plain_new = Name(f.base, False, f.shared)
            target = rename_name(target, plain_old, plain_new)
            payload = [_rename_value(v, plain_old, plain_new) for v in payload]
            ext[i] = (Name(f.base, n.dual, n.shared), anno)
    return LOut(label.subject, tuple(payload), tuple(ext), label.ptype), target


def _rename_value(v: Value, old: Name, new: Name) -> Value:
    if isinstance(v, NameRef):
        if v.name == old:
            return NameRef(new)
        if v.name == old.co():
            return NameRef(new.co())
        return v
    if isinstance(v, Abs):
        return Abs(v.params, rename_name(v.body, old, new))
    return v


def steps(p: Process) -> list[Step]:
    """All transitions and input schemas of p (early style, unfolding
    recursion on demand)."""
    out: list[Step] = []
    if isinstance(p, Nil) or isinstance(p, RVar):
        return out
    if isinstance(p, Out):
        n = _subject_name(p.subject)
        if n is not None:
            out.append(Step(LOut(n, p.payload), p.cont))
        return out
    if isinstance(p, In):
        n = _subject_name(p.subject)
        if n is not None:
            def inst(values: tuple[Value, ...], _p=p) -> Process:
                body = _p.cont
                for b, v in zip(_p.binders, values):
                    body = subst_value(body, v, b.var)
                return body
            out.append(Step(None, None, InSchema(n, len(p.binders),
                                                 tuple(b.anno for b in p.binders), inst)))
        return out
    if isinstance(p, Sel):
        n = _subject_name(p.subject)
        if n is not None:
            out.append(Step(LSel(n, p.label), p.cont))
        return out
    if isinstance(p, Bra):
        n = _subject_name(p.subject)
        if n is not None:
            for label, q in p.arms:
                out.append(Step(LBra(n, label), q))
        return out
    if isinstance(p, App):
        if isinstance(p.fun, Abs):
            t = _apply(p.fun, p.args)
            if t is not None:
                out.append(Step(LTau("beta"), t))
        return out
    if isinstance(p, Rec):
        return steps(subst_rec(p.body, p.var, p))
    if isinstance(p, New):
        inner = steps(p.body)
        for st in inner:
            if st.schema is not None:
                sch = st.schema
                if sch.subject == p.name or sch.subject == p.name.co():
                    continue
                def inst(values, _sch=sch, _p=p):
                    clash = set()
                    for v in values:
                        clash |= value_free_names(v)
                    nm, body_inst = _p.name, None
                    if _p.name in clash or _p.name.co() in clash:
                        f = fresh_name(_p.name.base, clash | free_names(_p.body), _p.name.shared)
                        plain_old = Name(_p.name.base, False, _p.name.shared)
                        renamed = rename_name(_p.body, plain_old, f)
                        nm = f
                        for st2 in steps(renamed):
                            if st2.schema is not None and st2.schema.subject == _sch.subject \
                                    and st2.schema.arity == _sch.arity:
                                return New(nm, _p.anno, st2.schema.instantiate(values))
                        return None
                    return New(nm, _p.anno, _sch.instantiate(values))
                out.append(Step(None, None, InSchema(sch.subject, sch.arity, sch.annos, inst)))
                continue
            lab, tgt = st.label, st.target
            if isinstance(lab, LTau):
                anno = p.anno
                if lab.subject is not None and not lab.subject.shared \
                        and lab.subject.base == p.name.base:
                    anno = _advance_anno(p.anno, lab.subject, p.name, lab.arm)
                    lab = LTau(lab.kind)
                out.append(Step(lab, New(p.name, anno, tgt)))
                continue
            subj = subject_of(lab)
            if subj == p.name or subj == p.name.co():
                continue
            if isinstance(lab, LOut):
                pay_names = set()
                for v in lab.payload:
                    pay_names |= value_free_names(v)
                if p.name in pay_names or p.name.co() in pay_names:
                    ext = []
                    if p.name in pay_names:
                        ext.append((p.name, p.anno))
                    if p.name.co() in pay_names:
                        ext.append((p.name.co(), p.anno))
                    out.append(Step(LOut(lab.subject, lab.payload,
                                         lab.extruded + tuple(ext), lab.ptype), tgt))
                    continue
            out.append(Step(lab, New(p.name, p.anno, tgt)))
        return out
    if isinstance(p, Par):
        ls = steps(p.left)
        rs = steps(p.right)
        fnl = free_names(p.left)
        fnr = free_names(p.right)
        for st in ls:
            if st.schema is not None:
                sch = st.schema
                out.append(Step(None, None, InSchema(
                    sch.subject, sch.arity, sch.annos,
                    lambda vs, _s=sch, _r=p.right: Par(_s.instantiate(vs), _r))))
            else:
                lab, tgt = st.label, st.target
                if isinstance(lab, LOut) and lab.extruded:
                    lab, tgt = _rename_extruded(lab, tgt, fnr)
                out.append(Step(lab, Par(tgt, p.right)))
        for st in rs:
            if st.schema is not None:
                sch = st.schema
                out.append(Step(None, None, InSchema(
                    sch.subject, sch.arity, sch.annos,
                    lambda vs, _s=sch, _l=p.left: Par(_l, _s.instantiate(vs)))))
            else:
                lab, tgt = st.label, st.target
                if isinstance(lab, LOut) and lab.extruded:
                    lab, tgt = _rename_extruded(lab, tgt, fnl)
                out.append(Step(lab, Par(p.left, tgt)))
        # synchronisation
        for a, b, flip in ((p.left, p.right, False), (p.right, p.left, True)):
            asteps = rs if flip else ls
            bsteps = ls if flip else rs
            for sa in asteps:
                if not isinstance(sa.label, LOut):
                    continue
                lab = sa.label
                for sb in bsteps:
                    if sb.schema is None:
                        continue
                    if sb.schema.subject != lab.subject.co():
                        continue
                    if sb.schema.arity != len(lab.payload):
                        continue
                    lab2, tgt2 = _rename_extruded(lab, sa.target, free_names(b))
                    inst = sb.schema.instantiate(lab2.payload)
                    if inst is None:
                        continue
                    body = Par(tgt2, inst) if not flip else Par(inst, tgt2)
                    for n, anno in reversed(lab2.extruded):
                        if not n.dual:
                            body = New(n, anno, body)
                        elif n.co() not in {m for m, _ in lab2.extruded}:
                            body = New(n.co(), anno, body)
                    kind = "plain" if lab.subject.shared else "session"
                    out.append(Step(LTau(kind, lab.subject), body))
            for sa in asteps:
                if not isinstance(sa.label, LSel):
                    continue
                for sb in bsteps:
                    if isinstance(sb.label, LBra) and sb.label.subject == sa.label.subject.co() \
                            and sb.label.label == sa.label.label:
                        body = Par(sa.target, sb.target) if not flip else Par(sb.target, sa.target)
                        kind = "plain" if sa.label.subject.shared else "session"
                        out.append(Step(LTau(kind, sa.label.subject, sa.label.label), body))
        return out
    raise TypeError(f"unknown process node {p!r}")


def _advance_anno(anno, subject: Name, bound: Name, arm: Optional[str]):
    """Advance a session restriction annotation after an internal sync."""
    if not isinstance(anno, SessT):
        return anno
    s = unfold_all(anno.session)
    if arm is None:
        if isinstance(s, (TOut, TIn)):
            return SessT(s.cont)
        return anno
    if isinstance(s, (TSel, TBra)):
        arms = dict(s.arms)
        if arm in arms:
            return SessT(arms[arm])
    return anno


def lts_untyped(p: Process) -> list[tuple[Label, Process]]:
    """Non-input transitions; input prefixes are exposed via `input_schemas`."""
    return [(st.label, st.target) for st in steps(p) if st.schema is None]


def input_schemas(p: Process) -> list[InSchema]:
    return [st.schema for st in steps(p) if st.schema is not None]


def reduce_step(p: Process) -> list[Process]:
    """One-step reducts up to structural normalisation."""
    seen = {}
    for lab, tgt in lts_untyped(p):
        if isinstance(lab, LTau):
            n = sc_normalize(tgt)
            seen[canon_key(n)] = n
    return [seen[k] for k in sorted(seen)]


# ---------------------------------------------------------------------------
# environmental transitions

class EnvStepError(Exception):
    pass


def _consume_value(gamma: dict, sessions: dict, v: Value, expect: ValueType) -> tuple[dict, dict]:
    """Type-check a payload value against `expect`, consuming sessions.
    Returns the residual sessions map.  Raises TypingError on mismatch."""
    ctx = Ctx(dict(gamma), {}, dict(sessions), set())
    chk = Checker(gamma)
    t, promotable, _ = chk.check_value(ctx, v)
    notes: list = []
    from .typecheck import _fits
    if not _fits(t, expect, promotable, notes):
        raise TypingError("prefix-mismatch", f"value does not fit expected type")
    return ctx.sessions, ctx.gamma


def env_step(gamma: dict, lam: dict, delta: SessionEnv, label: Label,
             refined: bool = False) -> list[tuple[dict, dict, SessionEnv]]:
    """Environment evolution for one action.  Returns the possible
    (gamma', lam', delta') triples (empty when the action is not allowed)."""
    if isinstance(label, LTau):
        outs = [(gamma, lam, delta)]
        outs.extend((gamma, lam, d) for d in delta_reduce(delta))
        return outs

    if isinstance(label, (LSel, LBra)):
        s = label.subject
        if s.shared or s not in delta or s.co() in delta:
            return []
        t = unfold_all(delta[s])
        want = TSel if isinstance(label, LSel) else TBra
        if not isinstance(t, want):
            return []
        arms = dict(t.arms)
        if label.label not in arms:
            return []
        d2 = dict(delta)
        d2[s] = arms[label.label]
        return [(gamma, lam, d2)]

    if isinstance(label, LOut):
        s = label.subject
        g2 = dict(gamma)
        d2 = dict(delta)
        if s.shared:
            ent = gamma.get(s)
            if not isinstance(ent, SharedT):
                return []
            expects = (ent.inner,) * len(label.payload)
            if len(label.payload) != 1:
                return []
        else:
            if s not in delta or s.co() in delta:
                return []
            t = unfold_all(delta[s])
            if not isinstance(t, TOut) or len(t.payload) != len(label.payload):
                return []
            expects = t.payload
            d2[s] = t.cont
        ext_names = {n for n, _ in label.extruded}
        for n, anno in label.extruded:
            if n.shared:
                if isinstance(anno, SharedT):
                    g2[n] = anno
            else:
                st = anno.session if isinstance(anno, SessT) else anno
                if n.dual:
                    st = compute_dual(st)
                d2[n] = st
        try:
            sessions = d2
            for v, expect in zip(label.payload, expects):
                sessions, g2 = _consume_value(g2, sessions, v, expect)
        except TypingError:
            return []
        d3 = dict(sessions)
        for n, anno in label.extruded:
            if n.shared:
                continue
            st = anno.session if isinstance(anno, SessT) else anno
            if n.co() not in ext_names and n.co() not in d3:
                d3[n.co()] = compute_dual(st) if not n.dual else st
        return [(g2, lam, d3)]

    if isinstance(label, LIn):
        s = label.subject
        d2 = dict(delta)
        g2 = dict(gamma)
        if s.shared:
            ent = gamma.get(s)
            if not isinstance(ent, SharedT):
                return []
            if len(label.payload) != 1:
                return []
            expects = (ent.inner,)
        else:
            if s not in delta or s.co() in delta:
                return []
            t = unfold_all(delta[s])
            if not isinstance(t, TIn) or len(t.payload) != len(label.payload):
                return []
            expects = t.payload
            d2[s] = t.cont
        # incoming resources: names get the expected type, abstractions get
        # typed against a synthesised environment
        add_delta: dict = {}
        for v, expect in zip(label.payload, expects):
            try:
                _collect_incoming(g2, d2, add_delta, v, expect)
            except TypingError:
                return []
        for k, val in add_delta.items():
            if k in d2:
                return []
            d2[k] = val
        return [(g2, lam, d2)]

    raise TypeError(f"unknown label {label!r}")


def _collect_incoming(gamma: dict, delta: dict, add_delta: dict, v: Value, expect: ValueType):
    """Resources brought in by a received value."""
    if isinstance(v, NameRef):
        n = v.name
        if isinstance(expect, SharedT):
            if not n.shared:
                raise TypingError("prefix-mismatch", "expected a shared name")
            prev = gamma.get(n)
            if prev is not None and not type_equiv(prev, expect):
                raise TypingError("prefix-mismatch", "shared name at different type")
            gamma[n] = expect
            return
        if isinstance(expect, SessT):
            if n.shared or n in delta or n in add_delta:
                raise TypingError("prefix-mismatch", "cannot receive an owned endpoint")
            add_delta[n] = expect.session
            return
        raise TypingError("prefix-mismatch", "name received at non-name type")
    if isinstance(v, Abs):
        # the value must be typable; names free in it that we do not already
        # know get their types synthesised from use, which we approximate by
        # requiring the value to check under (gamma, delta-extension)
        free = value_free_names(v)
        for n in free:
            if n.shared and n not in gamma:
                raise TypingError("unbound", f"incoming value mentions unknown shared name {n}")
        ctx = Ctx(dict(gamma), {}, {n: delta[n] for n in free if n in delta}, set())
        chk = Checker(gamma)
        t, promotable, _ = chk.check_value(ctx, v)
        notes: list = []
        from .typecheck import _fits
        if not _fits(t, expect, promotable, notes):
            raise TypingError("prefix-mismatch", "incoming abstraction does not fit")
        return
    raise TypingError("prefix-mismatch", f"cannot receive value {v!r}")


# ---------------------------------------------------------------------------
# configurations and typed transitions

@dataclass
class Configuration:
    gamma: dict
    delta: SessionEnv
    process: Process

    def key(self) -> tuple:
        k = getattr(self, "_key", None)
        if k is None:
            k = (tuple(sorted((str(k2), type_key(v)) for k2, v in self.gamma.items()
                              if not isinstance(v, dict))),
                 env_key(self.delta), canon_key(sc_normalize(self.process)))
            object.__setattr__(self, "_key", k)
        return k

    def copy(self) -> "Configuration":
        return Configuration(dict(self.gamma), dict(self.delta), self.process)


_CHECK_CACHE: dict = {}
_TT_CACHE: dict = {}


def _config_check_key(gamma: dict, delta: SessionEnv, p: Process):
    try:
        gkey = tuple(sorted((str(k), type_key(v)) for k, v in gamma.items()
                            if not isinstance(v, dict)))
        return (gkey, env_key(delta), canon_key(p))
    except TypeError:
        return None


def _cached_check(gamma: dict, delta: SessionEnv, p: Process) -> bool:
    key = _config_check_key(gamma, delta, p)
    if key is not None and key in _CHECK_CACHE:
        return _CHECK_CACHE[key]
    try:
        typecheck_top(gamma, delta, p)
        ok = True
    except TypingError:
        ok = False
    if key is not None:
        if len(_CHECK_CACHE) > 200000:
            _CHECK_CACHE.clear()
        _CHECK_CACHE[key] = ok
    return ok


def make_config(gamma: dict, delta: SessionEnv, p: Process, check: bool = True) -> Configuration:
    if check and not _cached_check(gamma, delta, p):
        typecheck_top(gamma, delta, p)  # re-raise with the real error
    return Configuration(dict(gamma), dict(delta), p)


def _payload_types(gamma, delta, label: LOut) -> tuple:
    """Annotate an output label with the payload's types (sender side)."""
    if label.subject.shared:
        ent = gamma.get(label.subject)
        return (ent.inner,) if isinstance(ent, SharedT) else ()
    if label.subject in delta:
        t = unfold_all(delta[label.subject])
        if isinstance(t, TOut):
            return t.payload
    return ()


def typed_transitions(c: Configuration, refined: bool = True,
                      candidates: Optional[Callable] = None) -> list[tuple[Label, Configuration]]:
    """Transitions where both the process and its environment can move and
    the successor typechecks."""
    from .equivalence import input_candidates as default_candidates
    use_cache = candidates is None
    if use_cache:
        ck = (c.key(), refined)
        hit = _TT_CACHE.get(ck)
        if hit is not None:
            return hit
    gen = candidates or (default_candidates if refined else None)
    out = []
    seen = set()
    for st in steps(c.process):
        if st.schema is None:
            lab, tgt = st.label, st.target
            if isinstance(lab, LOut):
                lab = LOut(lab.subject, lab.payload, lab.extruded,
                           _payload_types(c.gamma, c.delta, lab))
            for g2, _, d2 in env_step(c.gamma, {}, c.delta, lab, refined):
                if not _cached_check(g2, d2, tgt):
                    continue
                if not balanced(d2):
                    continue
                succ = Configuration(g2, d2, tgt)
                k = (label_key(lab), succ.key())
                if k not in seen:
                    seen.add(k)
                    out.append((lab, succ))
                if isinstance(lab, LTau):
                    break
        else:
            sch = st.schema
            if gen is None:
                continue
            expects = _input_expect(c, sch)
            if expects is None:
                continue
            for values, g_add, d_add in gen(expects, c, sch):
                target = sch.instantiate(values)
                if target is None:
                    continue
                lab = LIn(sch.subject, values)
                g1 = dict(c.gamma)
                g1.update(g_add)
                d1 = dict(c.delta)
                payload_names = {v.name for v in values if isinstance(v, NameRef)}
                ok_extra = True
                for k, v in d_add.items():
                    if k in payload_names:
                        continue
                    if k in d1:
                        ok_extra = False
                        break
                    d1[k] = v
                for g2, _, d2 in env_step(g1, {}, d1, lab, refined) if ok_extra else []:
                    if not _cached_check(g2, d2, target):
                        continue
                    if not balanced(d2):
                        continue
                    succ = Configuration(g2, d2, target)
                    k = (label_key(lab), succ.key())
                    if k not in seen:
                        seen.add(k)
                        out.append((lab, succ))
    out.sort(key=lambda t: (label_key(t[0]), t[1].key()))
    if use_cache:
        if len(_TT_CACHE) > 50000:
            _TT_CACHE.clear()
        _TT_CACHE[ck] = out
    return out


def _input_expect(c: Configuration, sch: InSchema):
    if sch.subject.shared:
        ent = c.gamma.get(sch.subject)
        if not isinstance(ent, SharedT) or sch.arity != 1:
            return None
        return (ent.inner,)
    if sch.subject not in c.delta or sch.subject.co() in c.delta:
        return None
    t = unfold_all(c.delta[sch.subject])
    if not isinstance(t, TIn) or len(t.payload) != sch.arity:
        return None
    return t.payload


@dataclass
class WeakResult:
    configs: list
    budget_exceeded: bool = False


def tau_closure(c: Configuration, refined: bool = True, tau_budget: int = 32,
                deterministic_only: bool = False) -> WeakResult:
    seen = {c.key(): c}
    frontier = [c]
    budget = tau_budget
    exceeded = False
    while frontier:
        nxt = []
        for cfg in frontier:
            for lab, succ in typed_transitions(cfg, refined):
                if not isinstance(lab, LTau):
                    continue
                if deterministic_only and lab.kind == "plain":
                    continue
                if succ.key() in seen:
                    continue
                if budget <= 0:
                    exceeded = True
                    continue
                budget -= 1
                seen[succ.key()] = succ
                nxt.append(succ)
        frontier = nxt
    return WeakResult(list(seen.values()), exceeded)


def weak_transitions(c: Configuration, label: Label, refined: bool = True,
                     tau_budget: int = 32) -> WeakResult:
    """tau* label tau* successors; for label = tau this is the tau closure."""
    pre = tau_closure(c, refined, tau_budget)
    exceeded = pre.budget_exceeded
    if isinstance(label, LTau):
        return WeakResult(pre.configs, exceeded)
    want = label_key(label)
    results = {}
    for cfg in pre.configs:
        for lab, succ in typed_transitions(cfg, refined):
            if label_key(lab) != want:
                continue
            post = tau_closure(succ, refined, tau_budget)
            exceeded = exceeded or post.budget_exceeded
            for r in post.configs:
                results[r.key()] = r
    return WeakResult(list(results.values()), exceeded)


# ---------------------------------------------------------------------------
# barbs

def barbs(c: Configuration) -> set[Name]:
    """Observable output/select subjects: unrestricted, dual not owned."""
    out: set[Name] = set()

    def walk(p: Process, hidden: frozenset):
        if isinstance(p, (Out, Sel)):
            n = _subject_name(p.subject)
            if n is not None and n not in hidden:
                if n.shared or n.co() not in c.delta:
                    out.add(n)
        elif isinstance(p, Par):
            walk(p.left, hidden)
            walk(p.right, hidden)
        elif isinstance(p, New):
            walk(p.body, hidden | {p.name, p.name.co()})
        elif isinstance(p, Rec):
            walk(subst_rec(p.body, p.var, p), hidden)

    walk(sc_normalize(c.process), frozenset())
    return out


def weak_barbs(c: Configuration, refined: bool = True, tau_budget: int = 32) -> set[Name]:
    closure = tau_closure(c, refined, tau_budget)
    out: set[Name] = set()
    for cfg in closure.configs:
        out |= barbs(cfg)
    return out
