"""Abstract syntax for the unified higher-order session calculus.

One AST covers the polyadic calculus with higher-order application; the
classical fragments (first-order name passing, pure abstraction passing,
shared-free) are recognised by `classify`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

# Identifier prefixes reserved for machinery; the parser rejects them.
TRIGGER_PREFIX = "#t"
CANON_PREFIX = "$"


# ---------------------------------------------------------------------------
# identifiers

@dataclass(frozen=True, order=True)
class Name:
    """A channel name.  Session names come in dual pairs (s, ~s); shared
    names are self-dual and never carry a dual polarity."""
    base: str
    dual: bool = False
    shared: bool = False

    def __post_init__(self):
        if self.shared and self.dual:
            raise ValueError("shared names have no dual endpoint: " + self.base)

    def co(self) -> "Name":
        if self.shared:
            return self
        return Name(self.base, not self.dual, False)

    def __str__(self):
        return ("~" if self.dual else "") + self.base


@dataclass(frozen=True, order=True)
class Var:
    """A variable: name variable, abstraction variable, or recursion variable."""
    base: str
    sort: str = "name"  # "name" | "abs" | "rec"

    def __str__(self):
        return self.base


Ident = Union[Name, Var]


# ---------------------------------------------------------------------------
# values and processes

class Value:
    pass


class Process:
    pass


@dataclass(frozen=True)
class NameRef(Value):
    name: Name

    def __str__(self):
        return str(self.name)


@dataclass(frozen=True)
class VarRef(Value):
    var: Var

    def __str__(self):
        return str(self.var)


@dataclass(frozen=True)
class Param:
    """Binder with optional type annotation (annotations live in types.py
    but are opaque here)."""
    var: Var
    anno: object = None


@dataclass(frozen=True)
class Abs(Value):
    params: tuple[Param, ...]
    body: "Process"

    def __post_init__(self):
        if not self.params:
            raise ValueError("abstraction with empty parameter list")
        seen = {p.var for p in self.params}
        if len(seen) != len(self.params):
            raise ValueError("abstraction parameters must be pairwise distinct")


@dataclass(frozen=True)
class Out(Process):
    subject: Value
    payload: tuple[Value, ...]
    cont: Process

    def __post_init__(self):
        if not self.payload:
            raise ValueError("output with empty payload")


@dataclass(frozen=True)
class In(Process):
    subject: Value
    binders: tuple[Param, ...]
    cont: Process

    def __post_init__(self):
        if not self.binders:
            raise ValueError("input with empty binder list")


@dataclass(frozen=True)
class Sel(Process):
    subject: Value
    label: str
    cont: Process


@dataclass(frozen=True)
class Bra(Process):
    subject: Value
    arms: tuple[tuple[str, Process], ...]

    def __post_init__(self):
        labels = [l for l, _ in self.arms]
        if not labels or len(set(labels)) != len(labels):
            raise ValueError("branch arms must be non-empty with distinct labels")


@dataclass(frozen=True)
class App(Process):
    fun: Value
    args: tuple[Value, ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("application with no arguments")


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class New(Process):
    name: Name
    anno: object
    body: Process


@dataclass(frozen=True)
class Rec(Process):
    var: Var
    danno: tuple[tuple[Ident, object], ...]
    body: Process


@dataclass(frozen=True)
class RVar(Process):
    var: Var


@dataclass(frozen=True)
class Nil(Process):
    pass


NIL = Nil()


def name(base: str, dual: bool = False, shared: bool = False) -> NameRef:
    return NameRef(Name(base, dual, shared))


# ---------------------------------------------------------------------------
# free names / variables

def _value_free_names(v: Value, acc: set, bound: frozenset):
    if isinstance(v, NameRef):
        if v.name not in bound and v.name.co() not in bound:
            acc.add(v.name)
    elif isinstance(v, Abs):
        _free_names(v.body, acc, bound)


def _free_names(p: Process, acc: set, bound: frozenset):
    if isinstance(p, Nil) or isinstance(p, RVar):
        return
    if isinstance(p, Out):
        _value_free_names(p.subject, acc, bound)
        for v in p.payload:
            _value_free_names(v, acc, bound)
        _free_names(p.cont, acc, bound)
    elif isinstance(p, In):
        _value_free_names(p.subject, acc, bound)
        _free_names(p.cont, acc, bound)
    elif isinstance(p, Sel):
        _value_free_names(p.subject, acc, bound)
        _free_names(p.cont, acc, bound)
    elif isinstance(p, Bra):
        _value_free_names(p.subject, acc, bound)
        for _, q in p.arms:
            _free_names(q, acc, bound)
    elif isinstance(p, App):
        _value_free_names(p.fun, acc, bound)
        for v in p.args:
            _value_free_names(v, acc, bound)
    elif isinstance(p, Par):
        _free_names(p.left, acc, bound)
        _free_names(p.right, acc, bound)
    elif isinstance(p, New):
        _free_names(p.body, acc, bound | {p.name, p.name.co()})
    elif isinstance(p, Rec):
        _free_names(p.body, acc, bound)
    else:
        raise TypeError(f"unknown process node {p!r}")


def free_names(p: Process) -> set[Name]:
    """Free names of a process; session restriction hides both endpoints."""
    acc: set[Name] = set()
    _free_names(p, acc, frozenset())
    return acc


def value_free_names(v: Value) -> set[Name]:
    acc: set[Name] = set()
    _value_free_names(v, acc, frozenset())
    return acc


def ordered_free_names(p: Process) -> list[Name]:
    """Free names sorted lexicographically by (base, polarity), plain < dual."""
    return sorted(free_names(p), key=lambda n: (n.base, n.dual))


def vmap(names: list[Name]) -> list[Var]:
    """Deterministic name-variable sequence x_n for a sorted name sequence."""
    out = []
    seen = set()
    for n in names:
        v = Var("x_" + n.base + ("_dual" if n.dual else ""), "name")
        if v in seen:
            raise ValueError(f"vmap collision on {n}")
        seen.add(v)
        out.append(v)
    return out


def _value_free_vars(v: Value, acc: set, bound: frozenset):
    if isinstance(v, VarRef):
        if v.var not in bound:
            acc.add(v.var)
    elif isinstance(v, Abs):
        _free_vars(v.body, acc, bound | {p.var for p in v.params})


def _free_vars(p: Process, acc: set, bound: frozenset):
    if isinstance(p, Nil):
        return
    if isinstance(p, RVar):
        if p.var not in bound:
            acc.add(p.var)
    elif isinstance(p, Out):
        _value_free_vars(p.subject, acc, bound)
        for v in p.payload:
            _value_free_vars(v, acc, bound)
        _free_vars(p.cont, acc, bound)
    elif isinstance(p, In):
        _value_free_vars(p.subject, acc, bound)
        _free_vars(p.cont, acc, bound | {b.var for b in p.binders})
    elif isinstance(p, Sel):
        _value_free_vars(p.subject, acc, bound)
        _free_vars(p.cont, acc, bound)
    elif isinstance(p, Bra):
        _value_free_vars(p.subject, acc, bound)
        for _, q in p.arms:
            _free_vars(q, acc, bound)
    elif isinstance(p, App):
        _value_free_vars(p.fun, acc, bound)
        for v in p.args:
            _value_free_vars(v, acc, bound)
    elif isinstance(p, Par):
        _free_vars(p.left, acc, bound)
        _free_vars(p.right, acc, bound)
    elif isinstance(p, New):
        _free_vars(p.body, acc, bound)
    elif isinstance(p, Rec):
        _free_vars(p.body, acc, bound | {p.var})
    else:
        raise TypeError(f"unknown process node {p!r}")


def free_vars(p: Process) -> set[Var]:
    acc: set[Var] = set()
    _free_vars(p, acc, frozenset())
    return acc


def value_free_vars(v: Value) -> set[Var]:
    acc: set[Var] = set()
    _value_free_vars(v, acc, frozenset())
    return acc


# ---------------------------------------------------------------------------
# fresh names

def fresh_name(hint: str, avoid: set[Name], shared: bool = False) -> Name:
    """Deterministic fresh name: first of hint, hint1, hint2, ... whose base
    does not clash with any avoided name (either polarity)."""
    bases = {n.base for n in avoid}
    if hint not in bases:
        return Name(hint, shared=shared)
    for i in itertools.count(1):
        cand = f"{hint}{i}"
        if cand not in bases:
            return Name(cand, shared=shared)


def fresh_var(hint: str, avoid: set[Var], sort: str = "name") -> Var:
    bases = {v.base for v in avoid}
    if hint not in bases:
        return Var(hint, sort)
    for i in itertools.count(1):
        cand = f"{hint}{i}"
        if cand not in bases:
            return Var(cand, sort)


# ---------------------------------------------------------------------------
# substitution

class SortMismatch(Exception):
    pass


def _rename_name(v: Value, old: Name, new: Name) -> Value:
    if isinstance(v, NameRef):
        if v.name == old:
            return NameRef(new)
        if v.name == old.co():
            return NameRef(new.co())
        return v
    if isinstance(v, VarRef):
        return v
    return Abs(v.params, rename_name(v.body, old, new))


def rename_name(p: Process, old: Name, new: Name) -> Process:
    """Total renaming old -> new (and dual to dual); assumes new is fresh."""
    rn = lambda q: rename_name(q, old, new)
    rv = lambda v: _rename_name(v, old, new)
    if isinstance(p, Nil) or isinstance(p, RVar):
        return p
    if isinstance(p, Out):
        return Out(rv(p.subject), tuple(rv(v) for v in p.payload), rn(p.cont))
    if isinstance(p, In):
        return In(rv(p.subject), p.binders, rn(p.cont))
    if isinstance(p, Sel):
        return Sel(rv(p.subject), p.label, rn(p.cont))
    if isinstance(p, Bra):
        return Bra(rv(p.subject), tuple((l, rn(q)) for l, q in p.arms))
    if isinstance(p, App):
        return App(rv(p.fun), tuple(rv(v) for v in p.args))
    if isinstance(p, Par):
        return Par(rn(p.left), rn(p.right))
    if isinstance(p, New):
        if p.name == old or p.name == old.co():
            return p
        return New(p.name, p.anno, rn(p.body))
    if isinstance(p, Rec):
        return Rec(p.var, p.danno, rn(p.body))
    raise TypeError(f"unknown process node {p!r}")


def _subst_in_value(v: Value, x: Var, w: Value, avoid_names: set, avoid_vars: set) -> Value:
    if isinstance(v, VarRef):
        return w if v.var == x else v
    if isinstance(v, NameRef):
        return v
    if any(p.var == x for p in v.params):
        return v
    body = v.body
    params = list(v.params)
    # capture avoidance: rename binders clashing with w's free identifiers
    for i, prm in enumerate(params):
        if prm.var in avoid_vars and x in free_vars(body):
            nv = fresh_var(prm.var.base, avoid_vars | free_vars(body) | {q.var for q in params}, prm.var.sort)
            body = subst_var_names(body, {prm.var: VarRef(nv)})
            params[i] = Param(nv, prm.anno)
    return Abs(tuple(params), _subst(body, x, w, avoid_names, avoid_vars))


def _subst(p: Process, x: Var, w: Value, avoid_names: set, avoid_vars: set) -> Process:
    sv = lambda v: _subst_in_value(v, x, w, avoid_names, avoid_vars)
    sp = lambda q: _subst(q, x, w, avoid_names, avoid_vars)
    if isinstance(p, Nil) or isinstance(p, RVar):
        return p
    if isinstance(p, Out):
        return Out(sv(p.subject), tuple(sv(v) for v in p.payload), sp(p.cont))
    if isinstance(p, In):
        if any(b.var == x for b in p.binders):
            return In(sv(p.subject), p.binders, p.cont)
        binders = list(p.binders)
        cont = p.cont
        for i, b in enumerate(binders):
            if b.var in avoid_vars and x in free_vars(cont):
                nv = fresh_var(b.var.base, avoid_vars | free_vars(cont) | {q.var for q in binders}, b.var.sort)
                cont = subst_var_names(cont, {b.var: VarRef(nv)})
                binders[i] = Param(nv, b.anno)
        return In(sv(p.subject), tuple(binders), _subst(cont, x, w, avoid_names, avoid_vars))
    if isinstance(p, Sel):
        return Sel(sv(p.subject), p.label, sp(p.cont))
    if isinstance(p, Bra):
        return Bra(sv(p.subject), tuple((l, sp(q)) for l, q in p.arms))
    if isinstance(p, App):
        return App(sv(p.fun), tuple(sv(v) for v in p.args))
    if isinstance(p, Par):
        return Par(sp(p.left), sp(p.right))
    if isinstance(p, New):
        body = p.body
        nm = p.name
        if (nm in avoid_names or nm.co() in avoid_names) and x in free_vars(body):
            fresh = fresh_name(nm.base, avoid_names | free_names(body) | {nm}, nm.shared)
            body = rename_name(body, Name(nm.base, False, nm.shared), Name(fresh.base, False, fresh.shared))
            nm = Name(fresh.base, nm.dual, nm.shared)
        return New(nm, p.anno, _subst(body, x, w, avoid_names, avoid_vars))
    if isinstance(p, Rec):
        return Rec(p.var, p.danno, sp(p.body))
    raise TypeError(f"unknown process node {p!r}")


def subst_value(p: Process, w: Value, x: Var) -> Process:
    """Capture-avoiding substitution of value w for variable x in p."""
    if x.sort == "rec":
        raise SortMismatch("cannot substitute a value for a recursion variable")
    if isinstance(w, Abs) and x.sort == "name":
        raise SortMismatch(f"abstraction substituted for name variable {x}")
    return _subst(p, x, w, value_free_names(w), value_free_vars(w))


def subst_name(p: Process, n: Name, x: Var) -> Process:
    """Capture-avoiding substitution of name n for name variable x in p."""
    if x.sort != "name":
        raise SortMismatch(f"subst_name on non-name variable {x}")
    return _subst(p, x, NameRef(n), {n, n.co()}, set())


def subst_value_in_value(v: Value, w: Value, x: Var) -> Value:
    return _subst_in_value(v, x, w, value_free_names(w), value_free_vars(w))


def subst_var_names(p: Process, mapping: dict[Var, Value]) -> Process:
    """Simultaneous substitution, used internally for binder renaming."""
    out = p
    for x, w in mapping.items():
        out = _subst(out, x, w, value_free_names(w), value_free_vars(w))
    return out


def subst_rec(p: Process, x: Var, q: Process) -> Process:
    """Unfold substitution of process q for recursion variable x."""
    avoid_n = free_names(q)
    avoid_v = free_vars(q)

    def gov(v: Value) -> Value:
        if isinstance(v, Abs):
            return Abs(v.params, go(v.body))
        return v

    def go(r: Process) -> Process:
        if isinstance(r, RVar):
            return q if r.var == x else r
        if isinstance(r, Nil):
            return r
        if isinstance(r, Out):
            return Out(gov(r.subject), tuple(gov(v) for v in r.payload), go(r.cont))
        if isinstance(r, In):
            return In(gov(r.subject), r.binders, go(r.cont))
        if isinstance(r, Sel):
            return Sel(gov(r.subject), r.label, go(r.cont))
        if isinstance(r, Bra):
            return Bra(gov(r.subject), tuple((l, go(b)) for l, b in r.arms))
        if isinstance(r, App):
            return App(gov(r.fun), tuple(gov(v) for v in r.args))
        if isinstance(r, Par):
            return Par(go(r.left), go(r.right))
        if isinstance(r, New):
            nm, body = r.name, r.body
            if (nm in avoid_n or nm.co() in avoid_n) and x in free_vars(body):
                fresh = fresh_name(nm.base, avoid_n | free_names(body) | {nm}, nm.shared)
                body = rename_name(body, Name(nm.base, False, nm.shared), fresh)
                nm = fresh
            return New(nm, r.anno, go(body))
        if isinstance(r, Rec):
            if r.var == x:
                return r
            return Rec(r.var, r.danno, go(r.body))
        raise TypeError(f"unknown process node {r!r}")

    return go(p)


# ---------------------------------------------------------------------------
# alpha equivalence

def _canon_value(v: Value, nenv, venv, counter) -> tuple:
    if isinstance(v, NameRef):
        n = v.name
        key = Name(n.base, False, n.shared)
        if key in nenv:
            return ("bn", nenv[key], n.dual)
        return ("fn", n.base, n.dual, n.shared)
    if isinstance(v, VarRef):
        if v.var in venv:
            return ("bv", venv[v.var])
        return ("fv", v.var.base, v.var.sort)
    venv2 = dict(venv)
    for prm in v.params:
        venv2[prm.var] = counter[0]
        counter[0] += 1
    return ("abs", len(v.params), _canon(v.body, nenv, venv2, counter))


def _canon(p: Process, nenv, venv, counter) -> tuple:
    cv = lambda v: _canon_value(v, nenv, venv, counter)
    cp = lambda q: _canon(q, nenv, venv, counter)
    if isinstance(p, Nil):
        return ("nil",)
    if isinstance(p, RVar):
        return ("rvar", venv[p.var]) if p.var in venv else ("frvar", p.var.base)
    if isinstance(p, Out):
        return ("out", cv(p.subject), tuple(cv(v) for v in p.payload), cp(p.cont))
    if isinstance(p, In):
        subj = cv(p.subject)
        venv2 = dict(venv)
        for b in p.binders:
            venv2[b.var] = counter[0]
            counter[0] += 1
        return ("in", subj, len(p.binders), _canon(p.cont, nenv, venv2, counter))
    if isinstance(p, Sel):
        return ("sel", cv(p.subject), p.label, cp(p.cont))
    if isinstance(p, Bra):
        return ("bra", cv(p.subject), tuple((l, cp(q)) for l, q in p.arms))
    if isinstance(p, App):
        return ("app", cv(p.fun), tuple(cv(v) for v in p.args))
    if isinstance(p, Par):
        return ("par", cp(p.left), cp(p.right))
    if isinstance(p, New):
        nenv2 = dict(nenv)
        nenv2[Name(p.name.base, False, p.name.shared)] = counter[0]
        counter[0] += 1
        return ("new", p.name.shared, _canon(p.body, nenv2, venv, counter))
    if isinstance(p, Rec):
        venv2 = dict(venv)
        venv2[p.var] = counter[0]
        counter[0] += 1
        return ("rec", _canon(p.body, nenv, venv2, counter))
    raise TypeError(f"unknown process node {p!r}")


def canon_key(p: Process) -> tuple:
    """Canonical de-Bruijn-style key; equal keys iff alpha-equivalent."""
    cached = p.__dict__.get("_canonk")
    if cached is None:
        cached = _canon(p, {}, {}, [0])
        object.__setattr__(p, "_canonk", cached)
    return cached


def alpha_eq(p: Process, q: Process) -> bool:
    return canon_key(p) == canon_key(q)


def value_canon_key(v: Value) -> tuple:
    return _canon_value(v, {}, {}, [0])


def value_alpha_eq(v: Value, w: Value) -> bool:
    return value_canon_key(v) == value_canon_key(w)


# ---------------------------------------------------------------------------
# structural congruence normal form

def _flatten_par(p: Process) -> list[Process]:
    if isinstance(p, Par):
        return _flatten_par(p.left) + _flatten_par(p.right)
    if isinstance(p, Nil):
        return []
    return [p]


def _rebuild_par(parts: list[Process]) -> Process:
    if not parts:
        return NIL
    out = parts[0]
    for q in parts[1:]:
        out = Par(out, q)
    return out


def _sc(p: Process) -> Process:
    """One normalisation pass: children first, then local rules."""
    if isinstance(p, (Nil, RVar)):
        return p
    if isinstance(p, Out):
        return Out(_sc_value(p.subject), tuple(_sc_value(v) for v in p.payload), _sc(p.cont))
    if isinstance(p, In):
        return In(_sc_value(p.subject), p.binders, _sc(p.cont))
    if isinstance(p, Sel):
        return Sel(_sc_value(p.subject), p.label, _sc(p.cont))
    if isinstance(p, Bra):
        return Bra(_sc_value(p.subject), tuple((l, _sc(q)) for l, q in p.arms))
    if isinstance(p, App):
        return App(_sc_value(p.fun), tuple(_sc_value(v) for v in p.args))
    if isinstance(p, Rec):
        return Rec(p.var, p.danno, _sc(p.body))
    if isinstance(p, New):
        body = _sc(p.body)
        if isinstance(body, Nil):
            return NIL
        fn = free_names(body)
        if p.name not in fn and p.name.co() not in fn:
            return body
        return New(p.name, p.anno, body)
    if isinstance(p, Par):
        parts = _flatten_par(Par(_sc(p.left), _sc(p.right)))
        # hoist top-level restrictions of components over the whole group
        binders: list[tuple[Name, object]] = []
        flat: list[Process] = []
        changed = True
        while changed:
            changed = False
            nxt = []
            for comp in parts:
                while isinstance(comp, New):
                    taken = {b for b, _ in binders}
                    outside = set().union(*[free_names(c) for c in parts if c is not comp], set())
                    avoid = taken | {t.co() for t in taken} | outside | free_names(comp.body)
                    nm, body = comp.name, comp.body
                    if nm in avoid or nm.co() in avoid:
                        f = fresh_name(nm.base, avoid, nm.shared)
                        body = rename_name(body, Name(nm.base, False, nm.shared), f)
                        nm = f
                    binders.append((nm, comp.anno))
                    comp = _sc(body)
                    changed = True
                for sub in _flatten_par(comp):
                    nxt.append(sub)
            parts = nxt
        flat = parts
        flat.sort(key=_order_key)
        out = _rebuild_par(flat)
        for nm, anno in reversed(binders):
            fn = free_names(out)
            if nm in fn or nm.co() in fn:
                out = New(nm, anno, out)
        return out
    raise TypeError(f"unknown process node {p!r}")


def _sc_value(v: Value) -> Value:
    if isinstance(v, Abs):
        return Abs(v.params, _sc(v.body))
    return v


def _order_key(p: Process):
    return canon_key(p)


def sc_normalize(p: Process) -> Process:
    """Canonical form under structural congruence: parallel flattened and
    sorted, nil units dropped, dead restrictions dropped, restrictions
    hoisted to a prenex per parallel group.  Recursion is never unfolded."""
    cached = p.__dict__.get("_scnorm")
    if cached is not None:
        return cached
    prev = p
    out = None
    for _ in range(64):
        nxt = _sc(prev)
        if nxt == prev:
            out = _sort_prenex(nxt)
            break
        prev = nxt
    if out is None:
        out = _sort_prenex(prev)
    object.__setattr__(p, "_scnorm", out)
    object.__setattr__(out, "_scnorm", out)
    return out


def _sort_prenex(p: Process) -> Process:
    """Order consecutive restrictions deterministically (nu-permutation)."""
    if isinstance(p, New):
        binders = []
        body = p
        while isinstance(body, New):
            binders.append((body.name, body.anno))
            body = body.body
        body = _sort_prenex_children(body)
        occ = _occurrence_order(body)
        binders.sort(key=lambda b: (occ.get(Name(b[0].base, False, b[0].shared), 1 << 30), b[0].base))
        out = body
        for nm, anno in reversed(binders):
            out = New(nm, anno, out)
        return out
    return _sort_prenex_children(p)


def _sort_prenex_children(p: Process) -> Process:
    if isinstance(p, (Nil, RVar)):
        return p
    if isinstance(p, Out):
        return Out(p.subject, tuple(_sort_prenex_value(v) for v in p.payload), _sort_prenex(p.cont))
    if isinstance(p, In):
        return In(p.subject, p.binders, _sort_prenex(p.cont))
    if isinstance(p, Sel):
        return Sel(p.subject, p.label, _sort_prenex(p.cont))
    if isinstance(p, Bra):
        return Bra(p.subject, tuple((l, _sort_prenex(q)) for l, q in p.arms))
    if isinstance(p, App):
        return App(_sort_prenex_value(p.fun), tuple(_sort_prenex_value(v) for v in p.args))
    if isinstance(p, Par):
        return Par(_sort_prenex(p.left), _sort_prenex(p.right))
    if isinstance(p, Rec):
        return Rec(p.var, p.danno, _sort_prenex(p.body))
    if isinstance(p, New):
        return _sort_prenex(p)
    raise TypeError(f"unknown process node {p!r}")


def _sort_prenex_value(v: Value) -> Value:
    if isinstance(v, Abs):
        return Abs(v.params, _sort_prenex(v.body))
    return v


def _occurrence_order(p: Process) -> dict[Name, int]:
    """Position of first occurrence of each name base (plain polarity key)."""
    order: dict[Name, int] = {}
    idx = [0]

    def notev(v: Value):
        if isinstance(v, NameRef):
            key = Name(v.name.base, False, v.name.shared)
            order.setdefault(key, idx[0])
            idx[0] += 1
        elif isinstance(v, Abs):
            note(v.body)

    def note(q: Process):
        idx[0] += 1
        if isinstance(q, (Nil, RVar)):
            return
        if isinstance(q, Out):
            notev(q.subject)
            for v in q.payload:
                notev(v)
            note(q.cont)
        elif isinstance(q, In):
            notev(q.subject)
            note(q.cont)
        elif isinstance(q, Sel):
            notev(q.subject)
            note(q.cont)
        elif isinstance(q, Bra):
            notev(q.subject)
            for _, b in q.arms:
                note(b)
        elif isinstance(q, App):
            notev(q.fun)
            for v in q.args:
                notev(v)
        elif isinstance(q, Par):
            note(q.left)
            note(q.right)
        elif isinstance(q, New):
            note(q.body)
        elif isinstance(q, Rec):
            note(q.body)

    note(p)
    return order


# ---------------------------------------------------------------------------
# eta contraction for harness equality

def eta_contract(p: Process) -> Process:
    """Collapse trigger-shaped abstractions lam(x1..xk). app V (x1..xk) to V
    when V does not mention the parameters.  Not part of structural
    congruence; used only by comparison harnesses."""

    def gov(v: Value) -> Value:
        if isinstance(v, Abs):
            body = go(v.body)
            if (isinstance(body, App) and len(body.args) == len(v.params)
                    and all(isinstance(a, VarRef) and a.var == prm.var
                            for a, prm in zip(body.args, v.params))):
                head = body.fun
                if isinstance(head, VarRef) and all(head.var != prm.var for prm in v.params):
                    return head
                if isinstance(head, Abs) and not (value_free_vars(head) & {prm.var for prm in v.params}):
                    return gov(head)
            return Abs(v.params, body)
        return v

    def go(q: Process) -> Process:
        if isinstance(q, (Nil, RVar)):
            return q
        if isinstance(q, Out):
            return Out(gov(q.subject), tuple(gov(v) for v in q.payload), go(q.cont))
        if isinstance(q, In):
            return In(gov(q.subject), q.binders, go(q.cont))
        if isinstance(q, Sel):
            return Sel(gov(q.subject), q.label, go(q.cont))
        if isinstance(q, Bra):
            return Bra(gov(q.subject), tuple((l, go(b)) for l, b in q.arms))
        if isinstance(q, App):
            return App(gov(q.fun), tuple(gov(v) for v in q.args))
        if isinstance(q, Par):
            return Par(go(q.left), go(q.right))
        if isinstance(q, New):
            return New(q.name, q.anno, go(q.body))
        if isinstance(q, Rec):
            return Rec(q.var, q.danno, go(q.body))
        raise TypeError(f"unknown process node {q!r}")

    return go(p)


def eq_mod(p: Process, q: Process, unfoldings: int = 0, eta: bool = False) -> bool:
    """Harness equality: alpha equivalence of normal forms, optionally after
    eta-contracting trigger-shaped abstractions and up to k recursion
    unfoldings on either side."""
    def norm(r: Process) -> Process:
        if eta:
            r = eta_contract(r)
        return sc_normalize(r)

    seen_p = {canon_key(norm(p))}
    seen_q = {canon_key(norm(q))}
    if seen_p & seen_q:
        return True
    cur_p, cur_q = [p], [q]
    for _ in range(unfoldings):
        cur_p = [u for r in cur_p for u in _unfold_recs(r)]
        cur_q = [u for r in cur_q for u in _unfold_recs(r)]
        seen_p |= {canon_key(norm(r)) for r in cur_p}
        seen_q |= {canon_key(norm(r)) for r in cur_q}
        if seen_p & seen_q:
            return True
    return False


def _unfold_recs(p: Process) -> list[Process]:
    """All single-position top-level-ish unfoldings of recursion."""
    out = []

    def walk(q: Process, rebuild):
        if isinstance(q, Rec):
            out.append(rebuild(subst_rec(q.body, q.var, q)))
        if isinstance(q, Par):
            walk(q.left, lambda r: rebuild(Par(r, q.right)))
            walk(q.right, lambda r: rebuild(Par(q.left, r)))
        elif isinstance(q, New):
            walk(q.body, lambda r: rebuild(New(q.name, q.anno, r)))

    walk(p, lambda r: r)
    return out if out else [p]


# ---------------------------------------------------------------------------
# subcalculus classification

@dataclass(frozen=True)
class SubcalculusFlags:
    uses_name_passing: bool
    uses_abstraction_passing: bool
    uses_recursion: bool
    uses_shared_names: bool
    uses_higher_order_application: bool
    max_arity: int

    @property
    def in_ho(self) -> bool:
        return not self.uses_name_passing and not self.uses_recursion

    @property
    def in_pi(self) -> bool:
        return not self.uses_abstraction_passing and not self.uses_higher_order_application

    @property
    def in_hopi(self) -> bool:
        return not self.uses_higher_order_application and self.max_arity <= 1

    @property
    def shared_free(self) -> bool:
        return not self.uses_shared_names


def classify(p: Process) -> SubcalculusFlags:
    """Structural scan for subcalculus membership flags."""
    flags = {
        "np": False, "ap": False, "rec": False, "sh": False, "hoapp": False,
        "arity": 1,
    }

    def is_abs_like(v: Value) -> bool:
        return isinstance(v, Abs) or (isinstance(v, VarRef) and v.var.sort == "abs")

    def seev(v: Value):
        if isinstance(v, NameRef) and v.name.shared:
            flags["sh"] = True
        if isinstance(v, Abs):
            flags["arity"] = max(flags["arity"], len(v.params))
            walk(v.body)

    def walk(q: Process):
        if isinstance(q, Nil):
            return
        if isinstance(q, RVar):
            flags["rec"] = True
            return
        if isinstance(q, Out):
            seev(q.subject)
            flags["arity"] = max(flags["arity"], len(q.payload))
            for v in q.payload:
                if is_abs_like(v):
                    flags["ap"] = True
                else:
                    flags["np"] = True
                seev(v)
            walk(q.cont)
        elif isinstance(q, In):
            seev(q.subject)
            flags["arity"] = max(flags["arity"], len(q.binders))
            for b in q.binders:
                if b.var.sort == "abs":
                    flags["ap"] = True
                else:
                    flags["np"] = True
            walk(q.cont)
        elif isinstance(q, Sel):
            seev(q.subject)
            walk(q.cont)
        elif isinstance(q, Bra):
            seev(q.subject)
            for _, b in q.arms:
                walk(b)
        elif isinstance(q, App):
            seev(q.fun)
            flags["arity"] = max(flags["arity"], len(q.args))
            for v in q.args:
                if is_abs_like(v):
                    flags["hoapp"] = True
                seev(v)
            if isinstance(q.fun, Abs):
                walk(q.fun.body)
        elif isinstance(q, Par):
            walk(q.left)
            walk(q.right)
        elif isinstance(q, New):
            if q.name.shared:
                flags["sh"] = True
            walk(q.body)
        elif isinstance(q, Rec):
            flags["rec"] = True
            walk(q.body)
        else:
            raise TypeError(f"unknown process node {q!r}")

    walk(p)
    for n in free_names(p):
        if n.shared:
            flags["sh"] = True
    return SubcalculusFlags(flags["np"], flags["ap"], flags["rec"], flags["sh"],
                            flags["hoapp"], flags["arity"])


# ---------------------------------------------------------------------------
# well-formedness

class IllFormed(Exception):
    pass


def check_well_formed(p: Process):
    """Guarded recursion, no free recursion variables in payload values."""

    def walkv(v: Value, guarded_ok: bool):
        if isinstance(v, Abs):
            bad = free_vars(v.body) & {Var(x.base, "rec") for x in free_vars(v.body)}
            walk(v.body, set())
        if isinstance(v, VarRef) and v.var.sort == "rec":
            raise IllFormed(f"recursion variable {v.var} used as a value")

    def walk(q: Process, unguarded: set):
        if isinstance(q, Nil):
            return
        if isinstance(q, RVar):
            if q.var in unguarded:
                raise IllFormed(f"unguarded recursion variable {q.var}")
            return
        if isinstance(q, Out):
            for v in q.payload:
                if isinstance(v, VarRef) and v.var.sort == "rec":
                    raise IllFormed("payload value contains a recursion variable")
                if isinstance(v, Abs) and any(x.sort == "rec" for x in value_free_vars(v)):
                    raise IllFormed("payload value contains a free recursion variable")
                walkv(v, False)
            walk(q.cont, set())
        elif isinstance(q, In):
            walk(q.cont, set())
        elif isinstance(q, Sel):
            walk(q.cont, set())
        elif isinstance(q, Bra):
            for _, b in q.arms:
                walk(b, set())
        elif isinstance(q, App):
            for v in (q.fun, *q.args):
                walkv(v, False)
        elif isinstance(q, Par):
            walk(q.left, unguarded)
            walk(q.right, unguarded)
        elif isinstance(q, New):
            walk(q.body, unguarded)
        elif isinstance(q, Rec):
            walk(q.body, unguarded | {q.var})
        else:
            raise TypeError(f"unknown process node {q!r}")

    walk(p, set())
