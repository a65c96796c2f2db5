"""shl: batch front door for the superhess modules.

Global flags (--seed, --threads, --out, --tol-scale) may appear before or after
the subcommand.  Exit status: 0 pass, 1 hard error, 2 acceptance failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import re
import subprocess
import sys
import tempfile
from pathlib import Path

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- small parsers ------------------------------------------------------------------------

def parse_kv(text: str) -> dict:
    """'m=2,n=4,a=0,0,0,0' -> {'m': '2', 'n': '4', 'a': '0,0,0,0'} (commas may sit inside values)."""
    out = {}
    for part in re.split(r",\s*(?=[A-Za-z_]\w*\s*=)", text.strip()):
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def floats(text: str) -> tuple:
    return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def parse_matrix(text: str):
    import numpy as np

    rows = [floats(r) for r in text.split(";") if r.strip()]
    A = np.array(rows, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"matrix {text!r} is not square")
    return A


def parse_weight(text: str):
    from .mconvex import WeightSpec

    kv = parse_kv(text)
    try:
        n = int(kv["n"])
        a = floats(kv.get("a", ",".join(["0"] * n)))
        return WeightSpec(int(kv["m"]), n, a)
    except KeyError as exc:
        raise ConfigError(f"weight needs {exc.args[0]}=") from None


def make_grid(sec: dict, n: int | None = None):
    from .grid import Grid

    n = int(sec.get("n", n if n is not None else 3))
    if "h" in sec:
        c = floats(sec.get("center", ",".join(["0"] * n)))
        return Grid.around(c, float(sec["h"]), int(sec.get("half_nodes", 16)))
    return Grid.centered(n, int(sec.get("nodes", 33)), float(sec.get("half_width", sec.get("half", 1.0))))


def read_config(path) -> dict:
    """Key=value sections [grid], [current], [weights], [task]; errors carry line numbers."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    text = path.read_text()
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: key outside a [section]") from None
    except configparser.ParsingError as exc:
        ln = exc.errors[0][0]
        raise ConfigError(f"{path}:{ln}: cannot parse {text.splitlines()[ln - 1].strip()!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    known = {"grid", "current", "weights", "task"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"{path}: unknown section [{s}]")
    cfg = {s: dict(cp[s]) if cp.has_section(s) else {} for s in known}
    cfg["_dir"] = path.parent
    return cfg


def resolve(cfg: dict, ref: str) -> Path:
    p = Path(ref)
    if not p.is_absolute():
        p = Path(cfg.get("_dir", ".")) / p
    if not p.exists():
        raise ConfigError(f"referenced file {ref!r} does not exist")
    return p


def region(cfg: dict, text: str, grid):
    """'ball:c1,..,cn:r', 'all', or 'file:mask.txt'."""
    import numpy as np

    from .grid import read_mask

    kind, _, rest = text.partition(":")
    if kind == "ball":
        c, _, r = rest.rpartition(":")
        return grid.radius(floats(c)) < float(r)
    if kind == "closedball":
        c, _, r = rest.rpartition(":")
        return grid.radius(floats(c)) <= float(r)
    if kind == "all":
        return np.ones(grid.shape, bool)
    if kind == "file":
        return read_mask(resolve(cfg, rest))
    raise ConfigError(f"unknown region {text!r}")


def density(text: str, grid):
    """'one', 'bump:R', 'plateau:R2,w' or 'smooth:r0,r1' as a function of |x|."""
    import numpy as np

    from .acceptance import smooth_step

    kind, _, rest = text.partition(":")
    r2 = sum(x ** 2 for x in grid.coords())
    if kind == "one":
        return np.ones(grid.shape)
    if kind == "bump":
        R = float(rest)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(r2 < R * R, np.exp(-1 / np.maximum(R * R - r2, 1e-300) + 1 / (R * R)), 0.0)
    if kind == "plateau":
        R2, w = floats(rest)
        return np.clip((R2 - r2) / w, 0.0, 1.0) ** 3
    if kind == "smooth":
        r0, r1 = floats(rest)
        return smooth_step(np.sqrt(r2), r0, r1)
    raise ConfigError(f"unknown density {text!r}")


def constant_form(text: str, n: int):
    """'unit', 'beta^k', 'matrix:a,b;c,d' or wedge products of those joined by '&'."""
    from .superalgebra import beta_power, form_from_matrix, one, wedge

    out = one(n)
    for part in text.split("&"):
        part = part.strip()
        if part == "unit":
            f = one(n)
        elif part.startswith("beta^"):
            f = beta_power(n, int(part[5:]))
        elif part.startswith("matrix:"):
            f = form_from_matrix(parse_matrix(part[7:]))
        else:
            raise ConfigError(f"unknown form {part!r}")
        out = wedge(out, f)
    return out


# -- reports ---------------------------------------------------------------------------------

def _jsonable(x):
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return str(x)


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def emit_report(out, stem: str, rows=None, summary=None, csv_text: str | None = None,
                json_text: str | None = None) -> list:
    """Write <stem>.csv, <stem>.json and <stem>.txt (digest) into ``out``; returns the paths."""
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    rows = list(rows or [])
    written = []
    if csv_text is None and rows:
        keys = list(rows[0])
        lines = [",".join(keys)] + [",".join(_cell(r.get(k)) for k in keys) for r in rows]
        csv_text = "\n".join(lines) + "\n"
    if csv_text is not None:
        written.append(out / f"{stem}.csv")
        written[-1].write_text(csv_text)
    if json_text is None and summary is not None:
        json_text = dumps(summary)
    if json_text is not None:
        written.append(out / f"{stem}.json")
        written[-1].write_text(json_text)
    digest = [f"# superhess report: {stem}"]
    for r in rows:
        digest.append("  ".join(f"{k}={_cell(v)}" for k, v in r.items()))
    if summary is not None and isinstance(summary, dict):
        for k in sorted(summary):
            if not isinstance(summary[k], (dict, list)):
                digest.append(f"{k}: {_cell(summary[k])}")
    written.append(out / f"{stem}.txt")
    written[-1].write_text("\n".join(digest) + "\n")
    return written


def _cell(v) -> str:
    import numpy as np

    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# -- subcommands ------------------------------------------------------------------------------

def cmd_algebra(args) -> int:
    from . import superalgebra as sa

    if args.op == "sigma":
        A = parse_matrix(args.matrix)
        val = sa.sigma_pairing(A, args.j)
        gen = sa.sigma_pairing_generic(A, args.j)
        summary = {"sigma": val, "generic": gen, "j": args.j,
                   "rel_gap": abs(val - gen) / max(abs(gen), 1e-300)}
    elif args.op == "mixed":
        As = [parse_matrix(t) for t in args.matrix.split("|")]
        summary = {"mixed": sa.mixed_pairing(As), "generic": sa.mixed_pairing_generic(As)}
    elif args.op == "wedge":
        a = sa.FormValue.from_text(Path(args.a).read_text())
        b = sa.FormValue.from_text(Path(args.b).read_text())
        w = sa.wedge(a, b)
        emit_report(args.out, "wedge", summary={"terms": len(w.terms)})
        (Path(args.out) / "wedge.sform").write_text(w.to_text())
        print(w.to_text(), end="")
        return EXIT_OK
    else:  # audit
        v = sa.FormValue.from_text(Path(args.form).read_text())
        rep = sa.weak_positivity_audit(v, args.trials, seed=args.seed)
        summary = {"min_pairing": rep.min_pairing, "trials": rep.trials, "violated": rep.violated}
    emit_report(args.out, f"algebra_{args.op}", summary=summary)
    print(dumps(summary), end="")
    return EXIT_OK


def cmd_field(args) -> int:
    from .grid import MollifierSpec, mollify, read_field, write_field
    from .mconvex import is_m_convex, weight_field

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.op == "weight":
        w = parse_weight(args.weight)
        g = make_grid(parse_kv(args.grid), w.n)
        f = weight_field(w, g)
        write_field(out / "weight.sfield", f)
        summary = {"regime": w.regime, "nodes": g.size, "h": g.h}
    elif args.op == "mollify":
        f = read_field(args.input)
        spec = MollifierSpec(args.level, args.radius_h * f.grid.h)
        write_field(out / "mollified.sfield", mollify(f, spec))
        summary = {"radius": spec.radius}
    else:  # hessian
        f = read_field(args.input)
        rep = is_m_convex(f, args.m, tol=args.tol, rel_tol=args.rel_tol)
        summary = {"m_convex": rep.ok, "worst_sigma": rep.worst_sigma, "worst_j": rep.worst_j,
                   "worst_node": rep.worst_node, "checked": rep.checked}
    emit_report(out, f"field_{args.op}", summary=summary)
    print(dumps(summary), end="")
    return EXIT_OK


def cmd_hessian(args) -> int:
    from .grid import MollifierSpec, integrate
    from .hessmeasure import Current, hessian_measure
    from .mconvex import weight_field

    w = parse_weight(args.weight)
    g = make_grid(parse_kv(args.grid), w.n)
    phi = weight_field(w, g)
    m = args.m or w.m
    spec = MollifierSpec(1, args.mollifier_h * g.h) if args.mollifier_h > 0 else None
    mu = hessian_measure(Current.unit(g), m, [phi] * m, scheme=args.scheme, mollifier=spec)
    rows = []
    target = math.factorial(g.n) * math.pi ** (g.n / 2) / math.gamma(g.n / 2 + 1)
    for k in floats(args.radii_h):
        mass = integrate(mu, g.radius(w.a) < k * g.h)
        rows.append({"r": k * g.h, "mass": mass, "ratio": mass / target})
    emit_report(args.out, "hessian", rows=rows, summary={"target": target, "m": m, "scheme": args.scheme})
    for r in rows:
        print(f"r={r['r']:.6g}  mass={r['mass']:.8g}  ratio={r['ratio']:.6f}")
    return EXIT_OK


def cmd_potential(args) -> int:
    from .grid import ScalarField, write_field
    from .hessmeasure import Current
    from .potential import local_potential, residual, trace_by_beta

    cfg = read_config(args.config)
    g = make_grid(cfg["grid"])
    cur = cfg["current"]
    T = Current.from_form(g, constant_form(cur.get("form", "beta^2"), g.n), density(cur.get("density", "one"), g))
    eta = ScalarField(g, density(cfg["weights"].get("cutoff", "one"), g))
    task = cfg["task"]
    P = local_potential(T, eta, method=task.get("method", "auto"),
                        audit_nodes=int(task.get("audit_nodes", 8)), seed=args.seed)
    u = trace_by_beta(P.U, T.p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "trace.sfield", ScalarField(g, u))
    summary = {"p": T.p, "trace_min": float(u.min()), "trace_max": float(u.max()),
               "diag_vs_beta": float(abs(P.u.values - u).max()), "audit_min": P.audit_min}
    if task.get("residual", "no") == "yes":
        inner = g.radius((0.0,) * g.n) < float(task.get("inner", 0.3))
        summary["residual_sup"] = residual(T, eta, P).sup_norm(inner)
    emit_report(out, "potential", summary=summary)
    print(dumps(summary), end="")
    return EXIT_OK


def _current(text: str, grid):
    from .hessmeasure import Current

    kind, _, rest = text.partition(":")
    if kind == "unit":
        return Current.unit(grid)
    if kind == "form":
        return Current.from_form(grid, constant_form(rest, grid.n))
    raise ConfigError(f"unknown current {text!r}")


def cmd_lelong(args) -> int:
    from .grid import MollifierSpec
    from .lelong import nu_m_ladder
    from .mconvex import weight_field

    w = parse_weight(args.weight)
    gk = parse_kv(args.grid) if args.grid else {}
    gk.setdefault("h", "0.0625")
    gk.setdefault("half_nodes", "16")
    gk.setdefault("center", ",".join(repr(x) for x in w.a))
    g = make_grid(gk, w.n)
    T = _current(args.current, g)
    phi = weight_field(w, g)
    reach = 0.85 * g.h * int(gk["half_nodes"])
    ts = [reach * 0.5 ** k for k in range(args.ladder)]
    if w.regime == "log":
        levels = [math.log(t) for t in ts]
    elif w.regime == "quad":
        levels = [t * t for t in ts]
    else:
        k = w.exponent
        levels = [-t ** (-k) / k for t in ts]
    spec = MollifierSpec(1, args.mollifier_h * g.h) if args.mollifier_h > 0 else None
    lad = nu_m_ladder(T, phi, w.m, levels, scheme=args.scheme, mollifier=spec)
    if spec is not None:
        shallow = [k for k, t in enumerate(ts) if t < 8 * spec.refined().radius]
        if shallow:
            print(f"shl: warning: levels {shallow} lie within 8 mollifier radii and are not resolved",
                  file=sys.stderr)
    emit_report(args.out, "lelong", rows=[{"r": r, "nu": v} for r, v in zip(lad.levels, lad.nu)],
                summary=json.loads(lad.to_json()), csv_text=lad.to_csv(), json_text=lad.to_json())
    print(lad.to_csv(), end="")
    print(lad.to_json())
    return EXIT_OK


def cmd_capacity(args) -> int:
    from .capacity import CapacityProblem, cap_mu
    from .grid import read_field, write_field

    cfg = read_config(args.problem)
    g = make_grid(cfg["grid"])
    task = cfg["task"]
    for key in ("omega", "E"):
        if key not in task:
            raise ConfigError(f"{args.problem}: [task] needs {key}=")
    omega, E = region(cfg, task["omega"], g), region(cfg, task["E"], g)
    u = None
    if "u" in cfg["weights"]:
        u = read_field(resolve(cfg, cfg["weights"]["u"].removeprefix("file:")))
    P = CapacityProblem(g, omega, E, int(task.get("m", 1)), u=u, tol=float(task.get("tol", 1e-8)) * args.tol_scale,
                        max_sweeps=int(task.get("max_sweeps", 200000)))
    rep = cap_mu(P)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "extremal.sfield", rep.solution.field)
    emit_report(out, "capacity", summary=json.loads(rep.to_json()), json_text=rep.to_json())
    print(rep.to_json())
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import Criterion, run_suite

    if args.suite != "acceptance":
        raise ConfigError(f"unknown suite {args.suite!r}")
    ids = [int(x) for x in args.only.split(",")] if args.only else None
    print(f"{'id':>3}  {'result':6}  {'value':>14}  {'tol':>12}  {'sec':>6}  name", flush=True)

    def log(c):
        print(f"{c.id:>3}  {'PASS' if c.passed else 'FAIL':6}  {c.value:>14.6g}  {c.tol:>12.6g}  "
              f"{c.seconds:>6.1f}  {c.name}", flush=True)

    results = run_suite(ids, seed=args.seed, tol_scale=args.tol_scale, log=log)
    out = Path(args.out)
    json_text = dumps({"criteria": [c.row() for c in results]})
    detail_text = dumps({str(c.id): c.detail for c in results})
    if not args.no_determinism and (ids is None or 12 in ids):
        with tempfile.TemporaryDirectory() as tmp:
            cmd = [sys.executable, "-m", "superhess.cli", "verify", "--no-determinism", "--out", tmp,
                   "--seed", str(args.seed), "--threads", str(args.threads), "--tol-scale", repr(args.tol_scale)]
            if args.only:
                cmd += ["--only", args.only]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            other = Path(tmp) / "acceptance.json"
            same = (proc.returncode in (EXIT_OK, EXIT_FAIL) and other.exists()
                    and other.read_text() == json_text
                    and (Path(tmp) / "acceptance_detail.json").read_text() == detail_text)
        c = Criterion(12, "determinism", same, 0.0 if same else 1.0, 0.0,
                      {"compared": ["acceptance.json", "acceptance_detail.json"]})
        log(c)
        results.append(c)
        json_text = dumps({"criteria": [c.row() for c in results]})
    emit_report(out, "acceptance", rows=[{"id": c.id, "name": c.name, "pass": c.passed, "value": c.value,
                                           "tol": c.tol} for c in results], json_text=json_text)
    (out / "acceptance_detail.json").write_text(detail_text)
    digest = hashlib.sha256(json_text.encode()).hexdigest()
    (out / "acceptance.sha256").write_text(digest + "\n")
    n_fail = sum(not c.passed for c in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria pass; sha256 {digest[:16]}")
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


# -- argument parsing --------------------------------------------------------------------------

def _globals(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="RNG seed for sampled audits (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="cap on FFT and BLAS worker threads (default 1)")
    p.add_argument("--out", default=d("shl_out"), help="output directory for CSV/JSON/digest (default shl_out)")
    p.add_argument("--tol-scale", type=float, default=d(1.0),
                   help="multiplies every acceptance tolerance and solver tolerance (default 1.0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shl", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    _globals(ap, False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_, epilog):
        p = sub.add_parser(name, help=help_, description=help_, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _globals(p, True)
        return p

    p = add("algebra", "pointwise superform algebra: sigma pairings, mixed pairings, wedge, positivity audit",
            "Matrices are written row by row, 'a,b;c,d'; several matrices are separated by '|'.\n"
            "sigma is normalized: sigma(A, j) = e_j(eigenvalues)/C(n, j) (dimensionless).\n"
            "Forms are 'sform n=..' text files.  The fast path and the generic wedge path agree to 1e-12 relative.")
    p.add_argument("op", choices=["sigma", "mixed", "wedge", "audit"])
    p.add_argument("--matrix", default="1,0,0;0,2,0;0,0,3")
    p.add_argument("-j", "--j", type=int, default=1)
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--form")
    p.add_argument("--trials", type=int, default=200, help="random strongly positive test forms (default 200)")
    p.set_defaults(fn=cmd_algebra)

    p = add("field", "grid fields: write a weight, mollify a field, test discrete m-convexity",
            "Grids: 'n=3,nodes=33,half=1' (cube [-half,half]^n) or 'n=3,h=0.0625,half_nodes=16,center=0,0,0'.\n"
            "Lengths are in grid units of x; --radius-h is measured in multiples of the spacing h.\n"
            "m-convexity: sigma_j >= -(tol + rel_tol*|H|^j), tol defaults to 1e-10*(1+|H|).")
    p.add_argument("op", choices=["weight", "mollify", "hessian"])
    p.add_argument("--weight", default="m=1,n=3,a=0,0,0")
    p.add_argument("--grid", default="n=3,nodes=33,half=1")
    p.add_argument("--input", help="sfield file for mollify/hessian")
    p.add_argument("--level", type=int, default=1, help="mollifier level j (radius divided by j)")
    p.add_argument("--radius-h", type=float, default=1.5, help="mollifier radius in units of h (default 1.5)")
    p.add_argument("-m", "--m", type=int, default=1)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=0.0)
    p.set_defaults(fn=cmd_field)

    p = add("hessian", "Hessian measure (dd#phi)^m ^ beta^(n-m) of a weight, masses of balls",
            "Masses are superintegral densities summed against h^n; the calibration target is\n"
            "n!*Vol(unit ball).  Acceptance: within 3% for radii >= 8 mollifier radii.")
    p.add_argument("--weight", default="m=2,n=4,a=0,0,0,0")
    p.add_argument("--grid", default="n=4,h=0.0625,half_nodes=16")
    p.add_argument("-m", "--m", type=int, default=0, help="Hessian degree (default: the weight's m)")
    p.add_argument("--radii-h", default="12,13,14", help="ball radii in units of h")
    p.add_argument("--mollifier-h", type=float, default=3.0,
                   help="coarse mollifier radius in units of h, 0 = none; the measure is the level-2 refinement (half)")
    p.add_argument("--scheme", choices=["pairing", "inductive"], default="inductive")
    p.set_defaults(fn=cmd_hessian)

    p = add("potential", "local potential U of eta*T and its beta-trace",
            "Config sections: [grid] n, nodes, half_width; [current] form (beta^k, matrix:.., '&' wedges),\n"
            "density (one, bump:R, plateau:R2,w, smooth:r0,r1); [weights] cutoff (same syntax);\n"
            "[task] method (auto|fft|direct), audit_nodes, residual (yes|no), inner.\n"
            "The two trace routes agree to 1e-8 relative; the residual is a coefficientwise sup-norm.")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_potential)

    p = add("lelong", "weighted Lelong ladder nu_T^m(phi, r) on a geometric ratio-1/2 ladder",
            "Weight 'm=..,n=..,a=..'.  Current 'unit' or 'form:beta^k'.  Levels are r = log t (2m = n),\n"
            "t^2 (2m > n) or phi_m(t) (2m < n) with t = 0.85*reach*2^-k.  Output: CSV r,mass,nu and\n"
            "JSON {limit, uncertainty, monotone}; uncertainty = |last - second-to-last|.")
    p.add_argument("--weight", default="m=2,n=4,a=0,0,0,0")
    p.add_argument("--current", default="unit")
    p.add_argument("--ladder", type=int, default=4, help="number of levels (default 4)")
    p.add_argument("--grid", default="", help="'h=..,half_nodes=..' (default h=1/16, 16 nodes each side)")
    p.add_argument("--mollifier-h", type=float, default=3.0, help="coarse mollifier radius in units of h")
    p.add_argument("--scheme", choices=["pairing", "inductive"], default="inductive")
    p.set_defaults(fn=cmd_lelong)

    p = add("capacity", "relative capacity Cap_{m,u}(E, Omega) by the extremal and sup routes",
            "Manifest sections: [grid] n, nodes, half_width; [task] m, omega, E (ball:c:r, closedball:c:r,\n"
            "all, file:mask), tol (sweep change, default 1e-8), max_sweeps; [weights] u = file:field.\n"
            "Writes extremal.sfield plus capacity.json {cap, route_gap, sweeps, residual}.")
    p.add_argument("--problem", required=True)
    p.set_defaults(fn=cmd_capacity)

    p = add("verify", "run the acceptance suite and print a pass/fail table",
            "Writes acceptance.json {criteria: [{id, pass, value, tol}]}, acceptance_detail.json,\n"
            "acceptance.csv, a text digest and its sha256.  Tolerances are scaled by --tol-scale.\n"
            "Criterion 12 re-runs the suite in a subprocess and compares the report bytes.")
    p.add_argument("--suite", default="acceptance")
    p.add_argument("--only", default="", help="comma-separated criterion ids")
    p.add_argument("--no-determinism", action="store_true", help="skip the subprocess rerun")
    p.set_defaults(fn=cmd_verify)
    return ap


def _cap_threads(k: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(k)
    from . import potential

    potential.FFT_WORKERS = k


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        _cap_threads(args.threads)
        return args.fn(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"shl: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
