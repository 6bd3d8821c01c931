"""Generate the shipped .sxp corpus (run from the repository root)."""

from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "corpus"

HOPI_GAMMA = """gamma {
  a : <end>;
  b : <?(end).end>;
  c : <lin end>;
  d : <ho end>;
  w : <end>;
}
"""

# session types used throughout the HOpi files
HOPI_DELTA = """delta {
  s : !<end>.end;
  ~s : ?(end).end;
  r : ?(end).end;
  ~r : !<end>.end;
  k : !<lin end>.end;
  ~k : ?(lin end).end;
  h : ?(lin end).!<end>.end;
  ~h : !<lin end>.?(end).end;
  e : end;
  e2 : end;
  q : +{go: !<end>.end, stop: end};
  ~q : &{go: ?(end).end, stop: end};
  t : rec v. !<<end>>.v;
  u : !<lin ?(lin end).end>.end;
  ~u : ?(lin ?(lin end).end).end;
  g : ?(lin ?(end).end).end;
}
"""

HOPI = {
    "basic": [
        ("nil", "0"),
        ("send_name", "s!(e).0"),
        ("recv_name", "~s?(x: end).0"),
        ("pair_sync", "(new p: !<end>.end)(p!(e).0 | ~p?(x: end).0)"),
        ("seq_two", "(new p: !<end>.!<end>.end)(p!(e).p!(e2).0 | ~p?(x: end).~p?(y: end).0)"),
    ],
    "abstractions": [
        ("send_abs", "k!(lam (x: end). 0).0"),
        ("recv_abs", "~k?(f: lin end).app f e"),
        ("abs_sync", "(new p: !<lin end>.end)(p!(lam (x: end). 0).0 | ~p?(f: lin end).app f e)"),
        ("beta_name", "app (lam (x: end). 0) e"),
        ("beta_use", "app (lam (x: !<end>.end). x!(e).0) s"),
        ("shared_abs", "d!(lam (x: end). 0).0"),
        ("recv_shared_abs", "d?(f: ho end).app f e"),
    ],
    "delegation": [
        ("delegate", "(new p: !<!<end>.end>.end)(p!(s).0 | ~p?(x: !<end>.end).x!(e).0)"),
        ("extrude", "(new p: !<end>.end)(p!(e).0 | ~p?(x: end).0) | s!(e2).0"),
        ("ho_delegate", "h?(f: lin end).h!(e2).app f e"),
        ("pack_style", "u!(lam (z: ?(lin end).end). z?(f: lin end).app f e).0"),
    ],
    "choice": [
        ("select_go", "q<go.q!(e).0"),
        ("select_stop", "q<stop.0"),
        ("branch_both", "~q>{go: ~q?(x: end).0, stop: 0}"),
        ("choice_sync",
         "(new p: +{l: !<end>.end, rgt: end})(p<l.p!(e).0 | ~p>{l: ~p?(x: end).0, rgt: 0})"),
    ],
    "shared": [
        ("req", "a!(e).0"),
        ("acc", "a?(x: end).0"),
        ("shared_sync", "a!(e).0 | a?(x: end).0"),
        ("race", "a!(e).0 | a?(x: end).0 | a?(y: end).0"),
        ("new_shared", "(new v: <end>)(v!(e).0 | v?(x: end).0)"),
        ("carry_session", "b!(r).0 | b?(x: ?(end).end).x?(y: end).0"),
    ],
    "recursion": [
        ("rec_shared_loop", "rec X. a!(e).X"),
        ("rec_par", "rec X. (a!(e).0 | X)"),
        ("rec_session", "rec X{t: rec v. !<<end>>.v}. t!(w).X"),
        ("rec_input", "rec X. a?(x: end).X"),
        ("rec_choice", "rec X. (a?(x: end).X | a!(e).0)"),
    ],
}

HOPIPLUS_GAMMA = """gamma {
  a : <end>;
  m : <end>;
}
"""

HOPIPLUS_DELTA = """delta {
  s : !<lin ho end>.end;
  ~s : ?(lin ho end).end;
  k : !<ho ho end>.end;
  ~k : ?(ho ho end).end;
  e : end;
  e2 : end;
  h : !<lin lin end>.end;
  ~h : ?(lin lin end).end;
}
"""

HOPIPLUS = {
    "ho_apps": [
        ("apply_abs_to_abs", "app (lam (f: ho end). app f e) (lam (x: end). 0)"),
        ("apply_var_to_abs", "~s?(g: lin ho end).app g (lam (x: end). 0)"),
        ("ho_beta_chain",
         "app (lam (f: lin ho end). app f (lam (x: end). 0)) (lam (g: ho end). app g e)"),
    ],
    "ho_payloads": [
        ("send_ho_abs", "s!(lam (f: ho end). app f e).0"),
        ("send_ho_shared", "k!(lam (f: ho end). app f e).0"),
        ("ho_sync",
         "(new p: !<lin ho end>.end)(p!(lam (f: ho end). app f e).0 | "
         "~p?(g: lin ho end).app g (lam (x: end). 0))"),
        ("lin_payload", "h!(lam (f: lin end). app f e).0"),
        ("lin_sync",
         "(new p: !<lin lin end>.end)(p!(lam (f: lin end). app f e).0 | "
         "~p?(g: lin lin end).app g (lam (x: end). 0))"),
    ],
    "mixed": [
        ("first_order_ok", "app (lam (x: end). 0) e"),
        ("mixed_par", "app (lam (f: ho end). app f e) (lam (x: end). 0) | a!(e2).0"),
        ("nested_ho",
         "app (lam (f: ho ho ho end). app f (lam (g1: ho end). app g1 e)) "
         "(lam (h1: ho ho end). app h1 (lam (x: end). 0))"),
    ],
}

POLY_GAMMA = """gamma {
  a : <end>;
}
"""

POLY_DELTA = """delta {
  s : !<end, end>.end;
  ~s : ?(end, end).end;
  k : !<lin (end, end)>.end;
  ~k : ?(lin (end, end)).end;
  e : end;
  e2 : end;
  r : !<end, end, end>.end;
  ~r : ?(end, end, end).end;
  e3 : end;
}
"""

POLY = {
    "name_tuples": [
        ("dyadic_out", "s!(e, e2).0"),
        ("dyadic_in", "~s?(x: end, y: end).0"),
        ("dyadic_sync", "(new p: !<end, end>.end)(p!(e, e2).0 | ~p?(x: end, y: end).0)"),
        ("triadic_sync",
         "(new p: !<end, end, end>.end)(p!(e, e2, e3).0 | ~p?(x: end, y: end, z: end).0)"),
    ],
    "poly_abs": [
        ("poly_abs_out", "k!(lam (x: end, y: end). 0).0"),
        ("poly_abs_in", "~k?(f: lin (end, end)).app f (e, e2)"),
        ("poly_beta", "app (lam (x: end, y: end). 0) (e, e2)"),
        ("poly_sync",
         "(new p: !<lin (end, end)>.end)(p!(lam (x: end, y: end). 0).0 | "
         "~p?(f: lin (end, end)).app f (e, e2))"),
        ("monadic_in_poly", "app (lam (x: end). 0) e | a!(e2).0"),
    ],
}

NOSH_DELTA = """delta {
  s : !<end>.end;
  ~s : ?(end).end;
  k : !<lin end>.end;
  ~k : ?(lin end).end;
  q : +{go: end, stop: end};
  ~q : &{go: end, stop: end};
  e : end;
  e2 : end;
}
"""

NOSH = {
    "det": [
        ("sync1", "(new p: !<end>.end)(p!(e).0 | ~p?(x: end).0)"),
        ("sync_seq", "(new p: !<end>.!<end>.end)(p!(e).p!(e2).0 | ~p?(x: end).~p?(y: end).0)"),
        ("beta", "app (lam (x: end). 0) e"),
        ("abs_pass", "(new p: !<lin end>.end)(p!(lam (x: end). 0).0 | ~p?(f: lin end).app f e)"),
        ("sel_sync", "(new p: +{go: end, stop: end})(p<go.0 | ~p>{go: 0, stop: 0})"),
        ("open_out", "s!(e).0"),
        ("open_sel", "q<stop.0"),
        ("two_stage",
         "(new p: !<end>.end)((new o: !<lin end>.end)"
         "(o!(lam (x: end). p!(x).0).0 | ~o?(f: lin end).app f e) | ~p?(y: end).0)"),
    ],
}


def write(dirname: str, gamma: str, delta: str, groups: dict):
    d = ROOT / dirname
    d.mkdir(parents=True, exist_ok=True)
    for group, defs in groups.items():
        lines = [gamma.strip(), delta.strip(), ""]
        for name, body in defs:
            lines.append(f"def {name} = {body};")
        (d / f"{group}.sxp").write_text("\n".join(lines) + "\n", encoding="utf-8")
        expected = "\n".join(f"typecheck {name} OK" for name, _ in defs)
        (d / f"{group}.expect").write_text(expected + "\n", encoding="utf-8")


def main():
    write("hopi", HOPI_GAMMA, HOPI_DELTA, HOPI)
    write("hopiplus", HOPIPLUS_GAMMA, HOPIPLUS_DELTA, HOPIPLUS)
    write("poly", POLY_GAMMA, POLY_DELTA, POLY)
    write("nosh", "", NOSH_DELTA, NOSH)
    golden = ROOT / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    (golden / "rec.sxp").write_text(
        "gamma {\n  a : <<end>>;\n  m : <end>;\n}\n"
        "delta {\n  s : rec v. !<<end>>.v;\n}\n"
        "def rec_shared = rec X. a!(m).X;\n"
        "def rec_par = rec X. (a!(m).0 | X);\n"
        "def rec_session = rec X{s: rec v. !<<end>>.v}. s!(m).X;\n",
        encoding="utf-8")
    (golden / "rec.expect").write_text(
        "typecheck rec_shared OK\ntypecheck rec_par OK\ntypecheck rec_session OK\n",
        encoding="utf-8")
    total = 0
    for f in ROOT.rglob("*.sxp"):
        total += f.read_text().count("def ")
    print(f"wrote corpus with {total} definitions")


if __name__ == "__main__":
    main()
