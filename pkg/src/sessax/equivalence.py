"""Characteristic processes and values, trigger machinery, refined-input
candidates, definability testers, and a bounded checker for higher-order
and characteristic bisimilarity over the refined typed LTS."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .syntax import (TRIGGER_PREFIX, Abs, App, Bra, In, Name, NameRef, New,
                     Nil, Out, Par, Param, Process, RVar, Rec, Sel, Value,
                     Var, VarRef, canon_key, free_names, sc_normalize,
                     value_free_names)
from .types import (END, ArrowT, SessT, SessionEnv, SessionType, SharedT,
                    TBra, TEnd, TIn, TOut, TRec, TSel, TVarT, ValueType,
                    compute_dual, dual_check, env_confluent, type_equiv,
                    type_key, unfold_all)
from .typecheck import TypingError, typecheck_top
from .dynamics import (Configuration, InSchema, Label, LBra, LIn, LOut, LSel,
                       LTau, label_key, tau_closure, typed_transitions,
                       weak_transitions)


# ---------------------------------------------------------------------------
# fresh-name allocation for observer machinery

class Alloc:
    """Deterministic fresh identifiers against a growing avoid set."""

    def __init__(self, avoid_names=(), avoid_vars=()):
        self.names = {n.base for n in avoid_names}
        self.vars = {v.base for v in avoid_vars}

    def name(self, hint: str, shared: bool = False) -> Name:
        base = hint
        for i in itertools.count(1):
            if base not in self.names:
                break
            base = f"{hint}{i}"
        self.names.add(base)
        return Name(base, shared=shared)

    def var(self, hint: str, sort: str = "name") -> Var:
        base = hint
        for i in itertools.count(1):
            if base not in self.vars:
                break
            base = f"{hint}{i}"
        self.vars.add(base)
        return Var(base, sort)

    def trigger(self) -> Name:
        for i in itertools.count(0):
            base = f"{TRIGGER_PREFIX}{i}"
            if base not in self.names:
                self.names.add(base)
                return Name(base, shared=True)


# ---------------------------------------------------------------------------
# characteristic processes and values

def char_process(t, anchor, alloc: Optional[Alloc] = None):
    """Characteristic process of a type along `anchor`.
    Returns (process, gamma_add, delta_add) where the extra environments
    type the fresh names introduced by omega-values."""
    alloc = alloc or Alloc()
    gadd: dict = {}
    dadd: dict = {}
    p = _char(t, anchor, alloc, gadd, dadd)
    return p, gadd, dadd


def char_value(u: ValueType, alloc: Optional[Alloc] = None):
    """Characteristic (omega) value of a type, with its environments."""
    alloc = alloc or Alloc()
    gadd: dict = {}
    dadd: dict = {}
    v = _omega(u, alloc, gadd, dadd)
    return v, gadd, dadd


def _anchor_value(anchor) -> Value:
    return NameRef(anchor) if isinstance(anchor, Name) else VarRef(anchor)


def _char(t, anchor, alloc: Alloc, gadd: dict, dadd: dict) -> Process:
    if isinstance(t, SessT):
        return _char(t.session, anchor, alloc, gadd, dadd)
    if isinstance(t, SessionType):
        s = t
        if isinstance(s, TEnd):
            return Nil()
        if isinstance(s, TIn):
            binders = []
            pieces = []
            for u in s.payload:
                x = alloc.var("x", "abs" if isinstance(u, ArrowT) else "name")
                binders.append(Param(x, u))
                pieces.append((u, x))
            cont = _char(s.cont, anchor, alloc, gadd, dadd)
            body = cont
            for u, x in pieces:
                body = Par(body, _char(u, x, alloc, gadd, dadd))
            return In(_anchor_value(anchor), tuple(binders), body)
        if isinstance(s, TOut):
            vals = tuple(_omega(u, alloc, gadd, dadd) for u in s.payload)
            return Out(_anchor_value(anchor), vals, _char(s.cont, anchor, alloc, gadd, dadd))
        if isinstance(s, TSel):
            label, arm = sorted(s.arms)[0]
            return Sel(_anchor_value(anchor), label, _char(arm, anchor, alloc, gadd, dadd))
        if isinstance(s, TBra):
            return Bra(_anchor_value(anchor),
                       tuple((l, _char(arm, anchor, alloc, gadd, dadd)) for l, arm in s.arms))
        if isinstance(s, TRec):
            x = Var("X_" + s.var, "rec")
            danno = ((anchor, SessT(s)),)
            return Rec(x, danno, _char(s.body, anchor, alloc, gadd, dadd))
        if isinstance(s, TVarT):
            return RVar(Var("X_" + s.name, "rec"))
        raise TypeError(f"unknown session type {s!r}")
    if isinstance(t, SharedT):
        v = _omega(t.inner, alloc, gadd, dadd)
        return Out(_anchor_value(anchor), (v,), Nil())
    if isinstance(t, ArrowT):
        args = tuple(_omega(u, alloc, gadd, dadd) for u in t.domain)
        return App(_anchor_value(anchor), args)
    raise TypeError(f"characteristic process of {t!r}")


def _omega(u: ValueType, alloc: Alloc, gadd: dict, dadd: dict) -> Value:
    if isinstance(u, SessT):
        s = alloc.name("s")
        dadd[s] = u.session
        return NameRef(s)
    if isinstance(u, SharedT):
        a = alloc.name("a", shared=True)
        gadd[a] = u
        return NameRef(a)
    if isinstance(u, ArrowT):
        params = []
        pieces = []
        for c in u.domain:
            x = alloc.var("x", "abs" if isinstance(c, ArrowT) else "name")
            params.append(Param(x, c))
            pieces.append((c, x))
        body = _char(pieces[0][0], pieces[0][1], alloc, gadd, dadd)
        for c, x in pieces[1:]:
            body = Par(body, _char(c, x, alloc, gadd, dadd))
        return Abs(tuple(params), body)
    raise TypeError(f"omega of {u!r}")


# ---------------------------------------------------------------------------
# triggers

def trigger_value(t: Name, domain: tuple[ValueType, ...] = ()) -> Value:
    """lam (z~). t?(y). app y (z~)  - the trigger value."""
    params = tuple(Param(Var(f"z{i}" if len(domain) != 1 else "z", "name"
                              if not isinstance(c, ArrowT) else "abs"), c)
                   for i, c in enumerate(domain)) or (Param(Var("z", "name"), None),)
    carrier = ArrowT(tuple(c for c in domain), False) if domain else None
    y = Var("y", "abs")
    body = In(NameRef(t), (Param(y, carrier),),
              App(VarRef(y), tuple(VarRef(p.var) for p in params)))
    return Abs(params, body)


def trigger_gamma(t: Name, domain: tuple[ValueType, ...]) -> dict:
    return {t: SharedT(ArrowT(domain, False))}


def htrigger(t: Name, v: Value, ptypes: tuple[ValueType, ...], alloc: Optional[Alloc] = None) -> Process:
    """t <= V : t?(x).(new s)(app x s | ~s!(V).0)"""
    alloc = alloc or Alloc(value_free_names(v) | {t})
    s = alloc.name("s")
    x = Var("x", "abs")
    carrier = TIn(tuple(ptypes), END)
    inner = Par(App(VarRef(x), (NameRef(s),)),
                Out(NameRef(s.co()), (v,) if not isinstance(v, tuple) else v, Nil()))
    if isinstance(v, tuple):
        inner = Par(App(VarRef(x), (NameRef(s),)), Out(NameRef(s.co()), v, Nil()))
    return In(NameRef(t), (Param(x, ArrowT((SessT(carrier),), False)),),
              New(Name(s.base), SessT(carrier), inner))


def ftrigger(t: Name, v: Value, ptypes: tuple[ValueType, ...], alloc: Optional[Alloc] = None):
    """t <=C V:U : t?(x).(new s)([?(U).end]^s | ~s!(V).0); x deliberately unused."""
    alloc = alloc or Alloc(value_free_names(v) | {t})
    s = alloc.name("s")
    x = Var("x", "abs")
    carrier = TIn(tuple(ptypes), END)
    proc, gadd, dadd = char_process(SessT(carrier), s, alloc)
    inner = Par(proc, Out(NameRef(s.co()), (v,) if not isinstance(v, tuple) else v, Nil()))
    body = In(NameRef(t), (Param(x, ArrowT((SessT(carrier),), False)),),
              New(Name(s.base), SessT(carrier), inner))
    return body, gadd, dadd


def trigger_carrier_type(ptypes: tuple[ValueType, ...]) -> ValueType:
    return ArrowT((SessT(TIn(tuple(ptypes), END)),), False)


# ---------------------------------------------------------------------------
# refined input candidates

def input_candidates(expects: tuple, c: Configuration, sch: InSchema,
                     avoid: Optional[set] = None):
    """The RRv payload set: trigger value, characteristic value, or a name.
    Yields (values, gamma_add, delta_add) triples."""
    avoid = set(avoid or set())
    avoid |= set(free_names(c.process))
    avoid |= {k for k in c.delta if isinstance(k, Name)}
    avoid |= {k for k in c.gamma if isinstance(k, Name)}
    per_position: list[list] = []
    for u in expects:
        opts = []
        alloc = Alloc(avoid)
        if isinstance(u, ArrowT):
            t = alloc.trigger()
            opts.append(((trigger_value(t, u.domain),), trigger_gamma(t, u.domain), {}))
        alloc2 = Alloc(avoid)
        v, gadd, dadd = char_value(u, alloc2)
        opts.append(((v,), gadd, dadd))
        if isinstance(u, SessT):
            # receiving the dual of an endpoint we already own
            for k in sorted(c.delta, key=str):
                if isinstance(k, Name) and not k.shared and k.co() not in c.delta \
                        and k.co() not in avoid and dual_check(u.session, c.delta[k]):
                    opts.append((((NameRef(k.co())),), {}, {k.co(): u.session}))
        if isinstance(u, SharedT):
            for k in sorted(c.gamma, key=str):
                if isinstance(k, Name) and k.shared and type_equiv(c.gamma[k], u):
                    opts.append(((NameRef(k),), {}, {}))
        per_position.append(opts)
    for combo in itertools.product(*per_position):
        values = tuple(v for (vs, _, _) in combo for v in vs)
        gadd: dict = {}
        dadd: dict = {}
        clash = False
        for _, g, d in combo:
            for k, val in g.items():
                if k in gadd:
                    clash = True
                gadd[k] = val
            for k, val in d.items():
                if k in dadd:
                    clash = True
                dadd[k] = val
        if not clash:
            yield values, gadd, dadd


# ---------------------------------------------------------------------------
# definability testers

def test_process(label: Label, succ: Name, arm_labels: tuple[str, ...] = (),
                 payload_types: tuple = (), alloc: Optional[Alloc] = None) -> Process:
    """The testing process T<label, succ> from the definability construction."""
    if isinstance(label, LTau):
        raise ValueError("tau is not definable")
    alloc = alloc or Alloc({label.subject, succ})
    n = label.subject
    if isinstance(label, LIn):
        return Out(NameRef(n.co()), label.payload,
                   Out(NameRef(succ), (NameRef(n.co()),), Nil()))
    if isinstance(label, LBra):
        return Sel(NameRef(n.co()), label.label,
                   Out(NameRef(succ), (NameRef(n.co()),), Nil()))
    if isinstance(label, LSel):
        arms = [(label.label, Out(NameRef(succ), (NameRef(n.co()),), Nil()))]
        for l in arm_labels:
            if l == label.label:
                continue
            a = alloc.name("a", shared=True)
            y = alloc.var("y")
            arms.append((l, New(a, SharedT(SessT(END)),
                                In(NameRef(a), (Param(y, SessT(END)),),
                                   Out(NameRef(succ), (NameRef(n.co()),), Nil())))))
        return Bra(NameRef(n.co()), tuple(sorted(arms)))
    if isinstance(label, LOut):
        t = alloc.trigger()
        if all(isinstance(v, NameRef) for v in label.payload):
            xs = [alloc.var("x") for _ in label.payload]
            binders = tuple(Param(x, u) for x, u in zip(xs, payload_types)) \
                if payload_types else tuple(Param(x, None) for x in xs)
            trig = htrigger(t, tuple(VarRef(x) for x in xs) if len(xs) > 1 else VarRef(xs[0]),
                            payload_types or (SessT(END),) * len(xs), alloc)
            return In(NameRef(n.co()), binders,
                      Par(trig, Out(NameRef(succ), (NameRef(n.co()),), Nil())))
        y = alloc.var("y", "abs")
        arity = len(label.payload[0].params) if isinstance(label.payload[0], Abs) else 1
        dom = payload_types[0].domain if payload_types and isinstance(payload_types[0], ArrowT) \
            else (SessT(END),) * arity
        zs = [alloc.var("z", "abs" if isinstance(cu, ArrowT) else "name") for cu in dom]
        wrapped = Abs(tuple(Param(z, cu) for z, cu in zip(zs, dom)),
                      App(VarRef(y), tuple(VarRef(z) for z in zs)))
        binder_ty = payload_types[0] if payload_types else None
        trig = htrigger(t, wrapped, payload_types or (ArrowT(tuple(dom), False),), alloc)
        return In(NameRef(n.co()), (Param(y, binder_ty),),
                  Par(trig, Out(NameRef(succ), (NameRef(n.co()),), Nil())))
    raise TypeError(f"unknown label {label!r}")


# ---------------------------------------------------------------------------
# bisimulation checker

@dataclass
class BisimVerdict:
    result: str                     # "Equivalent" | "Distinguished" | "Unknown"
    depth: int = 0
    trace: list = field(default_factory=list)  # (side, label) pairs
    budget: int = 0

    @property
    def equivalent(self) -> bool:
        return self.result == "Equivalent"

    def __str__(self):
        if self.result == "Equivalent":
            return f"Equivalent(depth={self.depth})"
        if self.result == "Distinguished":
            tr = "; ".join(f"{'left' if s == 1 else 'right'}: {l}" for s, l in self.trace)
            return f"Distinguished[{tr}]"
        return f"Unknown(budget={self.budget})"


class _Budget(Exception):
    pass


def _det_collapse(c: Configuration, tau_budget: int) -> Configuration:
    """Eagerly fire deterministic (session/beta) taus; unique by inertness."""
    cur = c
    for _ in range(tau_budget):
        nxt = None
        for lab, succ in typed_transitions(cur, refined=True):
            if isinstance(lab, LTau) and lab.kind in ("session", "beta"):
                nxt = succ
                break
        if nxt is None:
            return cur
        cur = nxt
    raise _Budget()


def _compose_trigger(cfg: Configuration, label: LOut, kind: str,
                     t: Name, alloc: Alloc) -> Optional[Configuration]:
    ptypes = label.ptype if label.ptype else tuple(SessT(END) for _ in label.payload)
    v = label.payload if len(label.payload) > 1 else label.payload[0]
    gadd: dict = {}
    dadd: dict = {}
    if kind == "HB":
        trig = htrigger(t, v, ptypes, alloc)
    else:
        trig, gadd, dadd = ftrigger(t, v, ptypes, alloc)
    body = Par(cfg.process, trig)
    for n, anno in reversed(label.extruded):
        plain = Name(n.base, False, n.shared)
        if plain not in free_names(body) and plain.co() not in free_names(body):
            continue
        body = New(plain, anno, body)
    gamma = dict(cfg.gamma)
    gamma.update(trigger_gamma(t, (SessT(TIn(tuple(ptypes), END)),)))
    gamma.update(gadd)
    delta = dict(cfg.delta)
    for n, anno in label.extruded:
        delta.pop(n, None)
        delta.pop(n.co(), None)
    for v2, u in zip(label.payload, ptypes):
        for n in (value_free_names(v2) if not isinstance(v2, tuple) else set()):
            pass
    # resources carried by the payload re-enter through the trigger
    payload_names = set()
    for pv in label.payload:
        payload_names |= value_free_names(pv)
    for n in payload_names:
        if isinstance(n, Name) and not n.shared and n not in delta:
            bound = {Name(m.base, False, m.shared) for m, _ in label.extruded}
            if Name(n.base, False, n.shared) in bound:
                continue
            if n in cfg.delta:
                delta[n] = cfg.delta[n]
    delta.update(dadd)
    # payload resources: recover their pre-output types
    for n in payload_names:
        if isinstance(n, Name) and not n.shared and n not in delta:
            bound = {Name(m.base, False, m.shared) for m, _ in label.extruded}
            if Name(n.base, False, n.shared) in bound:
                continue
            return None
    try:
        typecheck_top(gamma, delta, body)
    except TypingError:
        return None
    return Configuration(gamma, delta, body)


def bisim_check(kind: str, c1: Configuration, c2: Configuration,
                depth: int = 6, tau_budget: int = 32) -> BisimVerdict:
    """Bounded weak bisimulation game (higher-order or characteristic)."""
    assert kind in ("HB", "CB")
    conf = env_confluent(c1.delta, c2.delta)
    if conf is False:
        raise ValueError("session environments are not confluent")
    unknown = [False]

    def moves(cfg: Configuration, other: Configuration):
        avoid = set()
        for cc in (cfg, other):
            avoid |= {k for k in cc.delta if isinstance(k, Name)}
            avoid |= {k for k in cc.gamma if isinstance(k, Name)}
            avoid |= free_names(cc.process)
        gen = lambda expects, c, sch: input_candidates(expects, c, sch, avoid)
        return typed_transitions(cfg, refined=True, candidates=gen)

    def weak_match(cfg: Configuration, lab: Label) -> list[Configuration]:
        res = weak_transitions(cfg, lab, refined=True, tau_budget=tau_budget)
        if res.budget_exceeded:
            unknown[0] = True
        return res.configs

    def weak_out_match(cfg: Configuration, lab: LOut) -> list[tuple[LOut, Configuration]]:
        """Weak outputs on the same subject (CB: same payload type)."""
        pre = tau_closure(cfg, True, tau_budget)
        if pre.budget_exceeded:
            unknown[0] = True
        found = []
        for mid in pre.configs:
            for l2, succ in typed_transitions(mid, refined=True):
                if not isinstance(l2, LOut) or l2.subject != lab.subject:
                    continue
                if len(l2.payload) != len(lab.payload):
                    continue
                if kind == "CB" and lab.ptype and l2.ptype:
                    if len(lab.ptype) != len(l2.ptype) or \
                            not all(type_equiv(a, b) for a, b in zip(lab.ptype, l2.ptype)):
                        continue
                post = tau_closure(succ, True, tau_budget)
                if post.budget_exceeded:
                    unknown[0] = True
                for final in post.configs:
                    found.append((l2, final))
        return found

    def attack(a: Configuration, b: Configuration, d: int, path: frozenset) -> Optional[list]:
        try:
            a = _det_collapse(a, tau_budget)
            b = _det_collapse(b, tau_budget)
        except _Budget:
            unknown[0] = True
            return None
        key = (a.key(), b.key())
        if key in path:
            return None
        if d <= 0:
            return None
        path = path | {key, (key[1], key[0])}
        for side, att, dfn in ((1, a, b), (2, b, a)):
            for lab, succ in moves(att, dfn):
                if isinstance(lab, LTau):
                    if lab.kind in ("session", "beta"):
                        continue  # collapsed eagerly
                    matched = False
                    res = tau_closure(dfn, True, tau_budget)
                    if res.budget_exceeded:
                        unknown[0] = True
                    for b2 in res.configs:
                        if attack(succ, b2, d, path) is None:
                            matched = True
                            break
                    if not matched:
                        return [(side, lab)]
                elif isinstance(lab, LOut):
                    t = Alloc({k for k in att.gamma if isinstance(k, Name)}
                              | {k for k in dfn.gamma if isinstance(k, Name)}).trigger()
                    alloc_a = Alloc(free_names(succ.process) | {t}
                                    | {k for k in succ.delta if isinstance(k, Name)})
                    ca = _compose_trigger(succ, lab, kind, t, alloc_a)
                    if ca is None:
                        continue
                    matched = False
                    for l2, b2 in weak_out_match(dfn, lab):
                        alloc_b = Alloc(free_names(b2.process) | {t}
                                        | {k for k in b2.delta if isinstance(k, Name)})
                        cb = _compose_trigger(b2, l2, kind, t, alloc_b)
                        if cb is None:
                            continue
                        if attack(ca, cb, d - 1, path) is None:
                            matched = True
                            break
                    if not matched:
                        return [(side, lab)]
                else:
                    matched = False
                    counter = None
                    for b2 in weak_match(dfn, lab):
                        sub = attack(succ, b2, d - 1, path)
                        if sub is None:
                            matched = True
                            break
                        counter = sub
                    if not matched:
                        return [(side, lab)] + (counter or [])
        return None

    trace = attack(c1, c2, depth, frozenset())
    if trace is not None:
        return BisimVerdict("Distinguished", trace=trace)
    if unknown[0]:
        return BisimVerdict("Unknown", budget=tau_budget)
    return BisimVerdict("Equivalent", depth=depth)
