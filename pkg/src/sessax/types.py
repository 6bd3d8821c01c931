"""Session and value types, coinductive equivalence and duality, and the
session-environment algebra (splitting, balance, reduction, confluence)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .syntax import Ident, Name, Var


class SessionType:
    pass


class ValueType:
    pass


@dataclass(frozen=True)
class TEnd(SessionType):
    def __str__(self):
        return "end"


@dataclass(frozen=True)
class TVarT(SessionType):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TRec(SessionType):
    var: str
    body: SessionType

    def __str__(self):
        return f"rec {self.var}. {self.body}"


@dataclass(frozen=True)
class TOut(SessionType):
    payload: tuple[ValueType, ...]
    cont: SessionType

    def __str__(self):
        return f"!<{', '.join(map(str, self.payload))}>.{self.cont}"


@dataclass(frozen=True)
class TIn(SessionType):
    payload: tuple[ValueType, ...]
    cont: SessionType

    def __str__(self):
        return f"?({', '.join(map(str, self.payload))}).{self.cont}"


@dataclass(frozen=True)
class TSel(SessionType):
    arms: tuple[tuple[str, SessionType], ...]

    def __str__(self):
        return "+{" + ", ".join(f"{l}:{s}" for l, s in self.arms) + "}"


@dataclass(frozen=True)
class TBra(SessionType):
    arms: tuple[tuple[str, SessionType], ...]

    def __str__(self):
        return "&{" + ", ".join(f"{l}:{s}" for l, s in self.arms) + "}"


END = TEnd()


@dataclass(frozen=True)
class SessT(ValueType):
    """A session type used as a name type."""
    session: SessionType

    def __str__(self):
        return str(self.session)


@dataclass(frozen=True)
class SharedT(ValueType):
    """Shared-name type <S> or <L>.  Nested <<U>> is tolerated on input
    (see `is_strict_value_type`); the encodings eliminate it."""
    inner: ValueType

    def __str__(self):
        return f"<{self.inner}>"


def is_strict_value_type(t: "ValueType") -> bool:
    """True when the type respects the carried-type restriction (no <<U>>)."""
    if isinstance(t, SharedT):
        return not isinstance(t.inner, SharedT) and is_strict_value_type(t.inner)
    if isinstance(t, ArrowT):
        return all(is_strict_value_type(u) for u in t.domain)
    return True


@dataclass(frozen=True)
class ArrowT(ValueType):
    """Abstraction type: domain -> process (shared) or domain -o process."""
    domain: tuple[ValueType, ...]
    shared: bool

    def __str__(self):
        head = "ho" if self.shared else "lin"
        if len(self.domain) == 1:
            return f"{head} {self.domain[0]}"
        return f"{head} ({', '.join(map(str, self.domain))})"


def sess(s: SessionType) -> SessT:
    return SessT(s)


def tout(payload, cont) -> TOut:
    return TOut(_ptuple(payload), cont)


def tin(payload, cont) -> TIn:
    return TIn(_ptuple(payload), cont)


def _ptuple(payload) -> tuple[ValueType, ...]:
    if isinstance(payload, ValueType):
        return (payload,)
    if isinstance(payload, SessionType):
        return (SessT(payload),)
    return tuple(SessT(x) if isinstance(x, SessionType) else x for x in payload)


def arrow(domain, shared: bool = False) -> ArrowT:
    return ArrowT(_ptuple(domain), shared)


# ---------------------------------------------------------------------------
# guardedness / closedness

class BadType(Exception):
    pass


def free_tvars(t: Union[SessionType, ValueType]) -> set[str]:
    if isinstance(t, TEnd):
        return set()
    if isinstance(t, TVarT):
        return {t.name}
    if isinstance(t, TRec):
        return free_tvars(t.body) - {t.var}
    if isinstance(t, (TOut, TIn)):
        out = free_tvars(t.cont)
        for u in t.payload:
            out |= free_tvars(u)
        return out
    if isinstance(t, (TSel, TBra)):
        out = set()
        for _, s in t.arms:
            out |= free_tvars(s)
        return out
    if isinstance(t, SessT):
        return free_tvars(t.session)
    if isinstance(t, SharedT):
        return free_tvars(t.inner)
    if isinstance(t, ArrowT):
        out = set()
        for u in t.domain:
            out |= free_tvars(u)
        return out
    raise TypeError(f"unknown type node {t!r}")


def check_guarded(t: Union[SessionType, ValueType], pending: frozenset = frozenset()):
    """Reject unguarded recursion like rec t. t."""
    if isinstance(t, TVarT):
        if t.name in pending:
            raise BadType(f"unguarded type variable {t.name}")
        return
    if isinstance(t, TRec):
        check_guarded(t.body, pending | {t.var})
        return
    if isinstance(t, (TOut, TIn)):
        for u in t.payload:
            check_guarded(u, frozenset())
        check_guarded(t.cont, frozenset())
        return
    if isinstance(t, (TSel, TBra)):
        for _, s in t.arms:
            check_guarded(s, frozenset())
        return
    if isinstance(t, TEnd):
        return
    if isinstance(t, SessT):
        check_guarded(t.session, pending)
        return
    if isinstance(t, SharedT):
        check_guarded(t.inner, frozenset())
        return
    if isinstance(t, ArrowT):
        for u in t.domain:
            check_guarded(u, frozenset())
        return
    raise TypeError(f"unknown type node {t!r}")


# ---------------------------------------------------------------------------
# substitution / unfolding

def subst_tvar(t, var: str, repl: SessionType):
    if isinstance(t, TEnd):
        return t
    if isinstance(t, TVarT):
        return repl if t.name == var else t
    if isinstance(t, TRec):
        if t.var == var:
            return t
        return TRec(t.var, subst_tvar(t.body, var, repl))
    if isinstance(t, TOut):
        return TOut(tuple(subst_tvar(u, var, repl) for u in t.payload), subst_tvar(t.cont, var, repl))
    if isinstance(t, TIn):
        return TIn(tuple(subst_tvar(u, var, repl) for u in t.payload), subst_tvar(t.cont, var, repl))
    if isinstance(t, TSel):
        return TSel(tuple((l, subst_tvar(s, var, repl)) for l, s in t.arms))
    if isinstance(t, TBra):
        return TBra(tuple((l, subst_tvar(s, var, repl)) for l, s in t.arms))
    if isinstance(t, SessT):
        return SessT(subst_tvar(t.session, var, repl))
    if isinstance(t, SharedT):
        return SharedT(subst_tvar(t.inner, var, repl))
    if isinstance(t, ArrowT):
        return ArrowT(tuple(subst_tvar(u, var, repl) for u in t.domain), t.shared)
    raise TypeError(f"unknown type node {t!r}")


def unfold(s: SessionType) -> SessionType:
    """One top-level unfolding of a recursive type; identity otherwise."""
    if isinstance(s, TRec):
        return subst_tvar(s.body, s.var, s)
    return s


def unfold_all(s: SessionType, limit: int = 64) -> SessionType:
    """Unfold until the head constructor is not a recursion binder."""
    for _ in range(limit):
        if not isinstance(s, TRec):
            return s
        s = unfold(s)
    raise BadType("recursion unfolding did not converge (unguarded type?)")


# ---------------------------------------------------------------------------
# canonical keys (binders by position) for memoisation

def type_key(t, env=None, depth=0):
    env = env or {}
    if isinstance(t, TEnd):
        return ("end",)
    if isinstance(t, TVarT):
        return ("bt", env[t.name]) if t.name in env else ("ft", t.name)
    if isinstance(t, TRec):
        env2 = dict(env)
        env2[t.var] = depth
        return ("rec", type_key(t.body, env2, depth + 1))
    if isinstance(t, TOut):
        return ("out", tuple(type_key(u, env, depth) for u in t.payload), type_key(t.cont, env, depth))
    if isinstance(t, TIn):
        return ("in", tuple(type_key(u, env, depth) for u in t.payload), type_key(t.cont, env, depth))
    if isinstance(t, TSel):
        return ("sel", tuple((l, type_key(s, env, depth)) for l, s in sorted(t.arms)))
    if isinstance(t, TBra):
        return ("bra", tuple((l, type_key(s, env, depth)) for l, s in sorted(t.arms)))
    if isinstance(t, SessT):
        return ("sess", type_key(t.session, env, depth))
    if isinstance(t, SharedT):
        return ("shared", type_key(t.inner, env, depth))
    if isinstance(t, ArrowT):
        return ("arrow", t.shared, tuple(type_key(u, env, depth) for u in t.domain))
    raise TypeError(f"unknown type node {t!r}")


# ---------------------------------------------------------------------------
# coinductive equivalence and duality

def _equiv(a, b, assumed: set) -> bool:
    key = (type_key(a), type_key(b))
    if key[0] == key[1]:
        return True
    if key in assumed:
        return True
    assumed.add(key)
    if isinstance(a, SessionType) and isinstance(b, SessionType):
        a = unfold_all(a)
        b = unfold_all(b)
        if isinstance(a, TEnd) and isinstance(b, TEnd):
            return True
        if isinstance(a, TVarT) and isinstance(b, TVarT):
            return a.name == b.name
        if isinstance(a, TOut) and isinstance(b, TOut) or isinstance(a, TIn) and isinstance(b, TIn):
            if len(a.payload) != len(b.payload):
                return False
            return (all(_equiv(u, v, assumed) for u, v in zip(a.payload, b.payload))
                    and _equiv(a.cont, b.cont, assumed))
        if isinstance(a, TSel) and isinstance(b, TSel) or isinstance(a, TBra) and isinstance(b, TBra):
            la, lb = dict(a.arms), dict(b.arms)
            if set(la) != set(lb):
                return False
            return all(_equiv(la[l], lb[l], assumed) for l in la)
        return False
    if isinstance(a, SessT) and isinstance(b, SessT):
        return _equiv(a.session, b.session, assumed)
    if isinstance(a, SharedT) and isinstance(b, SharedT):
        return _equiv(a.inner, b.inner, assumed)
    if isinstance(a, ArrowT) and isinstance(b, ArrowT):
        if a.shared != b.shared or len(a.domain) != len(b.domain):
            return False
        return all(_equiv(u, v, assumed) for u, v in zip(a.domain, b.domain))
    return False


def type_equiv(a, b) -> bool:
    """Coinductive type equivalence (equality up to recursive unfolding)."""
    return _equiv(a, b, set())


def _dual(a: SessionType, b: SessionType, assumed: set) -> bool:
    key = (type_key(a), type_key(b))
    if key in assumed:
        return True
    assumed.add(key)
    a = unfold_all(a)
    b = unfold_all(b)
    if isinstance(a, TEnd) and isinstance(b, TEnd):
        return True
    if isinstance(a, TOut) and isinstance(b, TIn) or isinstance(a, TIn) and isinstance(b, TOut):
        if len(a.payload) != len(b.payload):
            return False
        return (all(type_equiv(u, v) for u, v in zip(a.payload, b.payload))
                and _dual(a.cont, b.cont, assumed))
    if isinstance(a, TSel) and isinstance(b, TBra) or isinstance(a, TBra) and isinstance(b, TSel):
        la, lb = dict(a.arms), dict(b.arms)
        if set(la) != set(lb):
            return False
        return all(_dual(la[l], lb[l], assumed) for l in la)
    return False


def dual_check(a: SessionType, b: SessionType) -> bool:
    """Coinductive duality: ! against ?, + against &, equivalent payloads."""
    return _dual(a, b, set())


def compute_dual(s: SessionType) -> SessionType:
    """Syntactic dual.  Occurrences of a recursion variable in payload
    position refer to the original type, so they are replaced by it; this
    keeps the involution correct on non-tail-recursive types."""

    def go(t: SessionType, env: dict[str, SessionType]) -> SessionType:
        if isinstance(t, TEnd) or isinstance(t, TVarT):
            return t
        if isinstance(t, TRec):
            env2 = dict(env)
            env2[t.var] = t
            return TRec(t.var, go(t.body, env2))
        if isinstance(t, (TOut, TIn)):
            payload = tuple(_close(u, env) for u in t.payload)
            cont = go(t.cont, env)
            return TIn(payload, cont) if isinstance(t, TOut) else TOut(payload, cont)
        if isinstance(t, TSel):
            return TBra(tuple((l, go(x, env)) for l, x in t.arms))
        if isinstance(t, TBra):
            return TSel(tuple((l, go(x, env)) for l, x in t.arms))
        raise TypeError(f"unknown session type {t!r}")

    def _close(u, env):
        for var, repl in env.items():
            u = subst_tvar(u, var, repl)
        return u

    return go(s, {})


# ---------------------------------------------------------------------------
# session environments

SessionEnv = dict  # Ident -> SessionType


class EnvError(Exception):
    pass


def env_join(d1: SessionEnv, d2: SessionEnv) -> SessionEnv:
    overlap = set(d1) & set(d2)
    if overlap:
        raise EnvError(f"linear environments overlap on {sorted(map(str, overlap))}")
    out = dict(d1)
    out.update(d2)
    return out


def env_split(delta: SessionEnv, left_domain) -> tuple[SessionEnv, SessionEnv]:
    left_domain = set(left_domain)
    missing = left_domain - set(delta)
    if missing:
        raise EnvError(f"split domain not present: {sorted(map(str, missing))}")
    d1 = {k: v for k, v in delta.items() if k in left_domain}
    d2 = {k: v for k, v in delta.items() if k not in left_domain}
    return d1, d2


def balanced(delta: SessionEnv) -> bool:
    """Both endpoints present implies dual types."""
    for k, s in delta.items():
        if isinstance(k, Name) and not k.shared:
            co = k.co()
            if co in delta and not dual_check(s, delta[co]):
                return False
    return True


def env_key(delta: SessionEnv) -> tuple:
    return tuple(sorted((str(k), type_key(v)) for k, v in delta.items()))


def delta_reduce(delta: SessionEnv) -> list[SessionEnv]:
    """All single-step reducts of a session environment."""
    out = []
    for k, s in delta.items():
        if not isinstance(k, Name) or k.shared or k.dual:
            continue
        co = k.co()
        if co not in delta:
            continue
        a = unfold_all(s)
        b = unfold_all(delta[co])
        if isinstance(a, TOut) and isinstance(b, TIn):
            d = dict(delta)
            d[k], d[co] = a.cont, b.cont
            out.append(d)
        elif isinstance(a, TIn) and isinstance(b, TOut):
            d = dict(delta)
            d[k], d[co] = a.cont, b.cont
            out.append(d)
        elif isinstance(a, TSel) and isinstance(b, TBra):
            la, lb = dict(a.arms), dict(b.arms)
            for l in sorted(set(la) & set(lb)):
                d = dict(delta)
                d[k], d[co] = la[l], lb[l]
                out.append(d)
        elif isinstance(a, TBra) and isinstance(b, TSel):
            la, lb = dict(a.arms), dict(b.arms)
            for l in sorted(set(la) & set(lb)):
                d = dict(delta)
                d[k], d[co] = la[l], lb[l]
                out.append(d)
    return out


def delta_reachable(delta: SessionEnv, bound: int = 64) -> tuple[set, bool]:
    """Reachable set of environment keys under reduction, bounded."""
    seen = {env_key(delta)}
    frontier = [delta]
    exhausted = True
    steps = 0
    while frontier:
        nxt = []
        for d in frontier:
            for r in delta_reduce(d):
                k = env_key(r)
                if k not in seen:
                    seen.add(k)
                    nxt.append(r)
                    steps += 1
                    if steps > bound:
                        return seen, False
        frontier = nxt
    return seen, exhausted


def env_confluent(d1: SessionEnv, d2: SessionEnv, bound: int = 64):
    """True/False/None: None reports Unknown when the bound was hit."""
    s1, done1 = delta_reachable(d1, bound)
    s2, done2 = delta_reachable(d2, bound)
    if s1 & s2:
        return True
    if done1 and done2:
        return False
    return None


# ---------------------------------------------------------------------------
# typing environment triple

GAMMA_KIND_SHARED = "shared"      # u : <S> or <L>
GAMMA_KIND_ARROW = "arrow"        # x : C -> <>   (shared abstraction variable)
GAMMA_KIND_RECVAR = "recvar"      # X : Delta


@dataclass(frozen=True)
class GammaEntry:
    kind: str
    type: object  # ValueType for shared/arrow, env tuple for recvar


@dataclass
class TypeEnv:
    """The (Gamma; Lambda; Delta) triple.  Lambda and Delta are linear."""
    gamma: dict
    lam: dict    # Var -> ArrowT (linear)
    delta: SessionEnv

    def __init__(self, gamma=None, lam=None, delta=None):
        self.gamma = dict(gamma or {})
        self.lam = dict(lam or {})
        self.delta = dict(delta or {})
        overlap = (set(self.gamma) & set(self.lam)) | (set(self.gamma) & set(self.delta)) \
            | (set(self.lam) & set(self.delta))
        if overlap:
            raise EnvError(f"environment domains overlap on {sorted(map(str, overlap))}")

    def copy(self) -> "TypeEnv":
        return TypeEnv(self.gamma, self.lam, self.delta)
