"""Command-line front door and corpus runner."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .syntax import Name, classify, sc_normalize
from .types import SessT, balanced
from .typecheck import TypingError, typecheck_top
from .surface import ParseError, SourceFile, pretty, pretty_source, pretty_type
from .dynamics import (Configuration, LTau, make_config, typed_transitions,
                       barbs, weak_barbs)
from .equivalence import bisim_check
from . import encodings as enc


def _load(path: str) -> SourceFile:
    return SourceFile.load(path)


def _config_of(src: SourceFile, defname: str, check: bool = True) -> Configuration:
    if defname not in src.definitions:
        raise KeyError(f"no definition named {defname}")
    gamma = {}
    for b, t in src.gamma_decls.items():
        gamma[Name(b, shared=True)] = t
    p = src.definitions[defname]
    from .syntax import free_names
    fn = free_names(p)
    delta = {k: v for k, v in src.delta_decls.items() if k in fn}
    return make_config(gamma, delta, p, check=check)


def _emit(out, fmt: str, cols: tuple):
    if fmt == "tsv":
        out.write("\t".join(str(c) for c in cols) + "\n")
    else:
        out.write("  ".join(str(c) for c in cols) + "\n")


def cmd_parse(args) -> int:
    try:
        src = _load(args.file)
    except ParseError as e:
        print(f"ERR parse {e}", file=sys.stderr)
        return 1
    print(f"OK {len(src.definitions)} definitions: {', '.join(src.order)}")
    return 0


def cmd_fmt(args) -> int:
    src = _load(args.file)
    sys.stdout.write(pretty_source(src))
    return 0


def cmd_typecheck(args) -> int:
    src = _load(args.file)
    names = [args.defname] if args.defname else src.order
    code = 0
    for dn in names:
        try:
            c = _config_of(src, dn, check=False)
            report = typecheck_top(c.gamma, c.delta, c.process)
        except TypingError as e:
            print(f"{dn}: ERR {e.code} {e.msg}")
            code = 1
            continue
        if args.verbose:
            print(report.derivation.render())
        lam = ", ".join(sorted(map(str, report.used_lambda)))
        used = ", ".join(f"{k}: {pretty_type(v)}" for k, v in
                         sorted(report.used_delta.items(), key=lambda kv: str(kv[0])))
        print(f"{dn}: OK L=[{lam}] D=[{used}]")
    return code


def cmd_trace(args) -> int:
    src = _load(args.file)
    dn = args.defname or src.order[0]
    c = _config_of(src, dn)
    frontier = [(c, 0)]
    seen = {c.key()}
    k = 0
    while frontier and k < args.depth:
        nxt = []
        for cfg, _ in frontier:
            for lab, succ in typed_transitions(cfg, refined=args.refined):
                d = ", ".join(f"{n}: {pretty_type(t)}" for n, t in
                              sorted(succ.delta.items(), key=lambda kv: str(kv[0])))
                print(f"STEP {k}: {lab} |- [{d}] |- {pretty(sc_normalize(succ.process))}")
                if succ.key() not in seen:
                    seen.add(succ.key())
                    nxt.append((succ, k + 1))
        frontier = nxt
        k += 1
    return 0


def cmd_barbs(args) -> int:
    src = _load(args.file)
    dn = args.defname or src.order[0]
    c = _config_of(src, dn)
    strong = sorted(map(str, barbs(c)))
    weak = sorted(map(str, weak_barbs(c, tau_budget=args.tau_budget)))
    print(f"{dn}: barbs=[{', '.join(strong)}] weak=[{', '.join(weak)}]")
    return 0


def cmd_bisim(args) -> int:
    src = _load(args.file)
    c1 = _config_of(src, args.left)
    c2 = _config_of(src, args.right)
    kind = {"hb": "HB", "cb": "CB"}[args.kind]
    verdict = bisim_check(kind, c1, c2, depth=args.depth, tau_budget=args.tau_budget)
    print(f"{args.left} ~ {args.right}: {verdict}")
    return 0 if verdict.equivalent else 1


_ENC_BY_PAIR = {
    ("hopi", "ho"): "hopi-ho",
    ("hopi", "pi"): "hopi-pi",
    ("hopi+", "hopi"): "hopi+-hopi",
    ("poly", "mono"): "poly-mono",
    ("poly", "hopi"): "poly-mono",
}


def _encoding_for(args) -> enc.Encoding:
    if getattr(args, "encoding", None):
        eid = args.encoding.replace("hopi-ho", "hopi-ho")
        if eid in enc.ENCODINGS:
            e = enc.ENCODINGS[eid]
        elif eid == "hopi+-ho":
            e = enc.compose(enc.ENC_HOPIP_TO_HOPI, enc.ENC_HOPI_TO_HO)
        else:
            raise KeyError(f"unknown encoding {args.encoding}")
    else:
        key = (args.source, args.target)
        if key == ("hopi+", "ho"):
            e = enc.compose(enc.ENC_HOPIP_TO_HOPI, enc.ENC_HOPI_TO_HO)
        elif key in _ENC_BY_PAIR:
            e = enc.ENCODINGS[_ENC_BY_PAIR[key]]
        else:
            raise KeyError(f"no encoding from {args.source} to {args.target}")
    if getattr(args, "monadic", False):
        e = enc.compose(e, enc.ENC_POLY_TO_MONO)
    return e


def cmd_encode(args) -> int:
    src = _load(args.file)
    e = _encoding_for(args)
    names = [args.defname] if args.defname else src.order
    out = SourceFile({}, {}, {}, [])
    for dn in names:
        c = _config_of(src, dn, check=False)
        q, g2, d2 = e.encode(c.process, c.gamma, c.delta)
        out.definitions[dn] = q
        out.order.append(dn)
        for k, v in g2.items():
            out.gamma_decls[k.base if isinstance(k, Name) else str(k)] = v
        for k, v in d2.items():
            out.delta_decls[k] = v
    sys.stdout.write(pretty_source(out))
    return 0


def cmd_verify(args) -> int:
    paths = []
    p = Path(args.file)
    if p.is_dir():
        paths = sorted(p.rglob("*.sxp"))
    else:
        paths = [p]
    e = _encoding_for(args)
    failures = 0
    unknowns = 0
    fmt = args.format
    for path in paths:
        src = SourceFile.load(path)
        for dn in src.order:
            case = f"{path.stem}:{dn}"
            try:
                c = _config_of(src, dn)
            except TypingError as ex:
                _emit(sys.stdout, fmt, (case, "typecheck", "skip", str(ex)))
                continue
            try:
                enc.check_type_preservation(e, c.gamma, c.delta, c.process)
                _emit(sys.stdout, fmt, (case, "type-preservation", "ok", ""))
            except (TypingError, enc.EncodingError) as ex:
                _emit(sys.stdout, fmt, (case, "type-preservation", "fail", str(ex)))
                failures += 1
                continue
            report = enc.check_correspondence(e, c, depth=args.depth,
                                              case=case, tau_budget=args.tau_budget)
            for row in report.rows:
                _emit(sys.stdout, fmt, (row.case, row.direction, row.label, row.status))
                if row.status == "unmatched":
                    failures += 1
                elif row.status == "unknown":
                    unknowns += 1
    print(f"verify: {'FAIL' if failures else 'OK'} ({failures} failures, {unknowns} unknown)")
    return 1 if failures else 0


def cmd_demo_negative(args) -> int:
    scan = []
    if args.corpus:
        for path in sorted(Path(args.corpus).glob("*.sxp")):
            src = SourceFile.load(path)
            for dn in src.order:
                try:
                    c = _config_of(src, dn)
                except TypingError:
                    continue
                if classify(c.process).shared_free:
                    scan.append(c)
    rep = enc.demo_negative(scan)
    print(f"P1 barbs: {sorted(map(str, rep.barbs1))}")
    print(f"P2 barbs: {sorted(map(str, rep.barbs2))}")
    print(f"tau successors: {rep.tau_count}")
    print(f"shared-free scan: {'ok' if rep.scan_ok else 'FAIL'} ({len(scan)} configurations)")
    print(f"demo-negative: {'OK' if rep.ok else 'FAIL'}")
    return 0 if rep.ok else 1


def cmd_corpus(args) -> int:
    root = Path(args.dir)
    total = passed = 0
    for path in sorted(root.rglob("*.sxp")):
        expect = path.with_suffix(".expect")
        src = SourceFile.load(path)
        checks: list[tuple[str, str, str]] = []
        if expect.exists():
            for line in expect.read_text().splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                checks.append((parts[0], parts[1], parts[2] if len(parts) > 2 else ""))
        else:
            checks = [("typecheck", dn, "OK") for dn in src.order]
        for kind, dn, want in checks:
            total += 1
            ok = False
            detail = ""
            try:
                if kind == "typecheck":
                    try:
                        c = _config_of(src, dn)
                        got = "OK"
                    except TypingError as ex:
                        got = "ERR"
                        detail = str(ex)
                    ok = got == want
                elif kind == "barb":
                    dn2, bname = dn.split(":")
                    c = _config_of(src, dn2)
                    names = {str(n) for n in weak_barbs(c)}
                    ok = (bname in names) == (want == "yes")
                else:
                    detail = f"unknown check {kind}"
            except Exception as ex:  # noqa: BLE001 - reported per case
                detail = repr(ex)
            passed += ok
            _emit(sys.stdout, args.format, (f"{path.stem}:{dn}", kind,
                                            "pass" if ok else "fail", detail))
    print(f"corpus: {passed}/{total} passed")
    return 0 if passed == total else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sessax",
                                 description="workbench for higher-order session processes")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, file_arg=True):
        if file_arg:
            p.add_argument("file")
        p.add_argument("--def", dest="defname", default=None)
        p.add_argument("--depth", type=int, default=6)
        p.add_argument("--tau-budget", type=int, default=32)
        p.add_argument("--unfold-budget", type=int, default=2)
        p.add_argument("--format", choices=("text", "tsv"), default="text")

    p = sub.add_parser("parse")
    common(p)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("fmt")
    common(p)
    p.set_defaults(fn=cmd_fmt)

    p = sub.add_parser("typecheck")
    common(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_typecheck)

    p = sub.add_parser("trace")
    common(p)
    p.add_argument("--refined", action="store_true", default=True)
    p.add_argument("--no-refined", dest="refined", action="store_false")
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("barbs")
    common(p)
    p.set_defaults(fn=cmd_barbs)

    p = sub.add_parser("bisim")
    common(p)
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--kind", choices=("hb", "cb"), default="hb")
    p.set_defaults(fn=cmd_bisim)

    p = sub.add_parser("encode")
    common(p)
    p.add_argument("--from", dest="source", default="hopi")
    p.add_argument("--to", dest="target", default="ho")
    p.add_argument("--encoding", default=None)
    p.add_argument("--monadic", action="store_true")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("verify")
    common(p)
    p.add_argument("--from", dest="source", default="hopi")
    p.add_argument("--to", dest="target", default="ho")
    p.add_argument("--encoding", default=None)
    p.add_argument("--monadic", action="store_true")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("demo-negative")
    p.add_argument("--corpus", default=None)
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    p.set_defaults(fn=cmd_demo_negative)

    p = sub.add_parser("corpus")
    p.add_argument("dir")
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    p.set_defaults(fn=cmd_corpus)

    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    seed = os.environ.get("SESSAX_SEED")
    if seed is not None:
        from .syntax import TRIGGER_PREFIX  # reserved namespace offset
        # deterministic runs: trigger numbering starts at the seed value
        from . import equivalence as _eq
        base = int(seed)

        class _SeededAlloc(_eq.Alloc):
            def trigger(self):
                import itertools as _it
                for i in _it.count(base):
                    nm = f"{TRIGGER_PREFIX}{i}"
                    if nm not in self.names:
                        self.names.add(nm)
                        return Name(nm, shared=True)
        _eq.Alloc = _SeededAlloc
    try:
        return args.fn(args)
    except (ParseError, TypingError, enc.EncodingError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
