"""Command-line front end.

Subcommands: classify, commutators, flow, solve, verify-determining.
Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 verified failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
from fractions import Fraction
from pathlib import Path

from . import expr as ex
from . import flows as fl
from . import solutions as so
from . import symmetry as sy
from . import verify as vf
from .model import ModelError, build_model, load_model_file, model_from_mapping

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3

MODEL_KEYS = ("k0", "m", "c0", "n", "lam", "mu", "a", "b", "c", "d")
SOLUTION_PARAMS = ("C0", "C1", "C2", "c1", "c2", "Q", "D", "M")
FLOW_DISCREPANCY_TOL = 1e-7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _num(text):
    """Exact Fraction from an int/decimal/ratio string."""
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _add_model_args(p, nu_required=True):
    g = p.add_argument_group("model")
    g.add_argument("--model-file", help="key = value model file")
    g.add_argument("--family", choices=["power", "exp", "linear", "custom"])
    for k in MODEL_KEYS:
        g.add_argument(f"--{k}", type=_num)
    g.add_argument("--K", help="custom K(u) expression")
    g.add_argument("--C", help="custom C(u) expression")
    g.add_argument("--u-min", type=float)
    g.add_argument("--u-max", type=float)
    g.add_argument("--nu", type=_num, help="geometry exponent" + ("" if nu_required else " (has a default)"))


def _add_output_args(p, formats=("text", "json")):
    p.add_argument("--format", choices=formats, default="text")
    p.add_argument("--output", help="write to this file instead of stdout")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled checks")


def build_parser():
    p = _Parser(prog="radheat", description="Symmetry classification and verification for C(u)u_t = z^-nu (K(u) z^nu u_z)_z")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("classify", help="ratio class, generators and compatibility constants")
    _add_model_args(c)
    _add_output_args(c)

    c = sub.add_parser("commutators", help="structure constants checked against the expected tables")
    _add_model_args(c)
    c.add_argument("--case", choices=["nonconstant", "constant"], help="algebra when no model is given")
    c.add_argument("--beta", type=_num, help="beta for the constant-ratio case without a model")
    _add_output_args(c, ("text", "json", "csv"))

    c = sub.add_parser("flow", help="apply a one-parameter group, closed form and numeric side by side")
    _add_model_args(c, nu_required=False)
    c.add_argument("--gen", required=True, help="group label, e.g. G2, G4_corrected, L1, Lt3")
    c.add_argument("--point", required=True, help="z,t,u")
    c.add_argument("--lambda", dest="lam_value", type=float, required=True)
    c.add_argument("--beta", type=_num)
    c.add_argument("--M", type=_num)
    _add_output_args(c)

    c = sub.add_parser("solve", help="build a catalog solution, write its grid and a residual report")
    _add_model_args(c, nu_required=False)
    c.add_argument("--id", required=True, dest="sid", help="catalog id, e.g. eq137")
    for k in SOLUTION_PARAMS:
        c.add_argument(f"--{k}", type=_num)
    c.add_argument("--beta", type=_num, help="beta of the default constant-coefficient model")
    c.add_argument("--grid", default="20x20", help="NZxNT over the validity rectangle, or z0:z1:nz,t0:t1:nt")
    c.add_argument("--method", choices=["auto", "symbolic", "numeric"], default="auto")
    c.add_argument("--tol", type=float, help="override the residual tolerance")
    c.add_argument("--report", help="path for the JSON report (default: next to --output)")
    _add_output_args(c, ("text", "json", "csv"))

    c = sub.add_parser("verify-determining", help="determining equations for every classified generator")
    _add_model_args(c)
    c.add_argument("--points", type=int, default=30)
    c.add_argument("--variant", choices=["corrected", "printed"], default="corrected")
    c.add_argument("--inject-bogus", action="store_true", help="also check the plain z-translation (expected to fail)")
    c.add_argument("--oracle", action="store_true", help="add the prolongation oracle per generator")
    _add_output_args(c)
    return p


# ---------------------------------------------------------------------------
# model resolution


def _has_model_flags(args):
    return args.model_file or args.family or any(getattr(args, k) is not None for k in MODEL_KEYS) or args.K or args.C


def model_from_args(args, default=None, default_nu=None):
    """Model from --model-file or inline flags; ``default`` builds one when neither is given."""
    if args.model_file:
        if args.family:
            raise UsageError("give either --model-file or --family, not both")
        model = load_model_file(args.model_file)
        if args.nu is not None:
            from .model import with_nu

            model = with_nu(model, args.nu)
        return model
    if not _has_model_flags(args):
        if default is None:
            raise UsageError("a model is required: --family ... or --model-file")
        nu = args.nu if args.nu is not None else default_nu
        if nu is None:
            raise UsageError("--nu is required")
        return default(nu)
    if not args.family:
        raise UsageError("--family is required with inline model parameters")
    if args.nu is None:
        raise UsageError("--nu is required")
    cfg = {"family": args.family, "nu": str(args.nu)}
    for k in MODEL_KEYS:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = str(v)
    if args.family == "custom":
        if not (args.K and args.C):
            raise UsageError("custom family needs --K and --C")
        cfg["K"], cfg["C"] = args.K, args.C
    if args.u_min is not None:
        cfg["u_min"] = str(args.u_min)
    if args.u_max is not None:
        cfg["u_max"] = str(args.u_max)
    return model_from_mapping(cfg)


def _constant_default(beta):
    # constant coefficients K = 1, C = beta
    return lambda nu: build_model("exp", nu, k0=1, lam=0, c0=beta, mu=0)


def _nonconstant_default(nu):
    return build_model("power", nu, k0=1, m=1, c0=1, n=2)


# ---------------------------------------------------------------------------
# output helpers


def _emit(args, text):
    if args.output:
        Path(args.output).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        print(text)


def _jsonable(x):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else str(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _dumps(obj):
    return json.dumps(_jsonable(obj), indent=2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args):
    model = model_from_args(args)
    cl = sy.classify(model)
    out = {"model": model.describe(), **cl.render()}
    if args.format == "json":
        _emit(args, _dumps(out))
        return EXIT_OK
    rc = out["ratio_class"]
    lines = [f"model: {model.family} nu={model.nu} K={ex.unparse(model.K_expr)} C={ex.unparse(model.C_expr)}"]
    if rc["kind"] == "ConstantRatio":
        lines.append(f"ratio class: ConstantRatio beta={rc['beta']}")
    else:
        lines.append(f"ratio class: NonConstant C'/C - K'/K = {rc['ratio']}")
    lines.append(f"case: {cl.case_tag}")
    lines.append("generators: " + " ".join(cl.labels()))
    for g in out["generators"]:
        lines.append(f"  {g['label']}: xi = {g['xi']}; tau = {g['tau']}; eta = {g['eta_inf']}")
    if out["constants"]:
        lines.append("constants: " + ", ".join(f"{k}={v}" for k, v in out["constants"].items()))
    lines += [f"note: {n}" for n in cl.notes]
    _emit(args, "\n".join(lines))
    return EXIT_OK


def _commutator_setup(args):
    if _has_model_flags(args):
        model = model_from_args(args)
        constant = model.is_constant_ratio
    else:
        if args.nu is None:
            raise UsageError("--nu is required")
        constant = args.case == "constant" or (args.case is None and args.beta is not None)
        model = _constant_default(args.beta if args.beta is not None else 1)(args.nu) if constant else _nonconstant_default(args.nu)
    nu = Fraction(model.nu)
    if constant:
        beta = sy._as_fraction(model.beta)
        gens = sy.constant_generators(nu, beta)
        expected = sy.expected_spherical_table(beta) if nu == 2 else sy.expected_constant_table(nu)
        name = "spherical constant-ratio table" if nu == 2 else "constant-ratio table"
    else:
        if nu == 2:
            raise sy.CompatibilityError("nu = 2: the non-constant algebra has no z^(2-nu) generator, no 4x4 table")
        gens = sy.nonconstant_table_basis(nu)
        expected = sy.expected_nonconstant_table(nu)
        name = "non-constant table"
    return model, gens, expected, name


def cmd_commutators(args):
    model, gens, expected, name = _commutator_setup(args)
    table = sy.commutator_table(gens, model, seed=args.seed + 1)
    mism = sy.compare_tables(table, expected)
    n = len(table.labels)
    status = "match" if not mism else f"{len(mism)} mismatching entr{'y' if len(mism) == 1 else 'ies'}"
    if args.format == "json":
        out = {
            "expected": name,
            "nu": model.nu,
            "table": table.as_dict(),
            "antisymmetry_defect": table.antisymmetry_defect(),
            "jacobi_defect": table.jacobi_defect(),
            "mismatches": [{"row": r, "col": c, "computed": a, "expected": b} for r, c, a, b in mism],
            "pass": not mism,
        }
        _emit(args, _dumps(out))
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "computed", "expected", "match"])
        for i in range(n):
            for j in range(n):
                a, b = table.render_entry(i, j), expected.render_entry(i, j)
                w.writerow([table.labels[i], table.labels[j], a, b, table.coeffs[i][j] == expected.coeffs[i][j]])
        _emit(args, buf.getvalue().rstrip("\n"))
    else:
        width = max(len(table.render_entry(i, j)) for i in range(n) for j in range(n))
        width = max(width, max(len(x) for x in table.labels)) + 2
        lines = [f"structure constants vs {name} (nu={model.nu}): {status}"]
        lines.append(" " * 6 + "".join(f"{lab:<{width}}" for lab in table.labels))
        for i in range(n):
            lines.append(f"{table.labels[i]:<6}" + "".join(f"{table.render_entry(i, j):<{width}}" for j in range(n)))
        for r, c, a, b in mism:
            lines.append(f"mismatch [{r},{c}]: computed {a}, expected {b}")
        lines.append(f"antisymmetry defect {table.antisymmetry_defect():.1e}, Jacobi defect {table.jacobi_defect():.1e}")
        _emit(args, "\n".join(lines))
    return EXIT_OK if not mism else EXIT_FAILED


def _flow_defaults(label):
    if label.startswith("Lt"):
        return Fraction(2)
    if label.startswith("L"):
        return Fraction(3, 2)
    if label.startswith("G4_nu1"):
        return Fraction(1)
    if label.startswith("G4_nu2"):
        return Fraction(2)
    return Fraction(3)


def _parse_point(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--point must be z,t,u; got {text!r}") from None
    if len(vals) != 3:
        raise UsageError(f"--point must be z,t,u; got {text!r}")
    return vals


def cmd_flow(args):
    label = args.gen
    if label not in fl.CATALOG:
        raise UsageError(f"unknown group {label!r}; known: {', '.join(fl.CATALOG)}")
    p = _parse_point(args.point)
    default = _constant_default(args.beta if args.beta is not None else 1) if label.startswith("L") else _nonconstant_default
    model = model_from_args(args, default=default, default_nu=_flow_defaults(label))
    params = {}
    if args.M is not None:
        params["M"] = args.M
    if args.beta is not None and label.startswith("L"):
        params["beta"] = args.beta
    cf = fl.closed_flow(label, model, **params)
    closed = fl.flow_closed(cf, model, p, args.lam_value)
    numeric = fl.flow_numeric(cf.generator, model, p, args.lam_value)
    disc = max(abs(a - b) / max(1.0, abs(b)) for a, b in zip(closed, numeric))
    flagged = disc > FLOW_DISCREPANCY_TOL
    out = {
        "group": cf.label,
        "status": cf.status,
        "point": p,
        "lambda": args.lam_value,
        "closed": list(closed),
        "numeric": list(numeric),
        "discrepancy": disc,
        "discrepancy_flag": flagged,
        "corrected_sibling": cf.sibling,
    }
    if args.format == "json":
        _emit(args, _dumps(out))
    else:
        fmt = lambda q: "(" + ", ".join(f"{x:.12g}" for x in q) + ")"
        lines = [
            f"{cf.label} [{cf.status}] lambda={args.lam_value} from {fmt(p)}",
            f"closed:  {fmt(closed)}",
            f"numeric: {fmt(numeric)}",
            f"discrepancy: {disc:.3e}" + ("  DISCREPANCY" if flagged else ""),
        ]
        if flagged and cf.sibling:
            lines.append(f"corrected variant: {cf.sibling}")
        _emit(args, "\n".join(lines))
    return EXIT_FAILED if flagged else EXIT_OK


def _solve_model(args):
    sid = so.ALIASES.get(args.sid, args.sid)
    if args.beta is not None and _has_model_flags(args):
        raise UsageError("--beta selects the default constant-coefficient model; do not combine it with model flags")
    beta = args.beta if args.beta is not None else 1
    default_nu = 2 if sid in ("eq137", "eq142") or args.nu is None else None
    return model_from_args(args, default=_constant_default(beta), default_nu=default_nu)


def _grid_csv(s, grid, with_v):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "t", "u", "v"] if with_v else ["z", "t", "u"])
    for z, t in grid.points():
        try:
            u = s.evaluate(z, t)
        except (ex.DomainError, ex.EvaluationError, ValueError, ZeroDivisionError, OverflowError):
            u = math.nan
        row = [z, t, u]
        if with_v:
            try:
                row.append(s.evaluate_v(z, t))
            except (ex.DomainError, ex.EvaluationError, ValueError, ZeroDivisionError, OverflowError, so.SolutionError):
                row.append(math.nan)
        w.writerow(["%.17g" % x for x in row])
    return buf.getvalue()


def cmd_solve(args):
    model = _solve_model(args)
    params = {k: getattr(args, k) for k in SOLUTION_PARAMS if getattr(args, k) is not None}
    s = so.build_solution(args.sid, model, **params)
    try:
        grid = vf.Grid.parse(args.grid, s.validity)
    except ValueError:
        raise UsageError(f"bad --grid {args.grid!r}") from None
    report = vf.residual_pde(s, model, grid, method=args.method, tol=args.tol, tolerate_failures=True)
    with_v = s.v_evaluator is not None
    csv_text = _grid_csv(s, grid, with_v)
    rep_json = report.to_json(indent=2)

    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
        rpath = Path(args.report) if args.report else Path(args.output).with_suffix(".report.json")
        rpath.write_text(rep_json + "\n", encoding="utf-8")
    elif args.report:
        Path(args.report).write_text(rep_json + "\n", encoding="utf-8")

    if args.format == "csv":
        if not args.output:
            sys.stdout.write(csv_text)
    elif args.format == "json":
        print(rep_json)
    else:
        d = s.describe()
        (z0, z1), (t0, t1) = s.validity
        lines = [
            f"{s.id} [{s.kind}, {s.status}] generator {s.generator}",
            f"params: {', '.join(f'{k}={v}' for k, v in _jsonable(s.params).items()) or '-'}",
            f"validity: z in [{z0:.6g}, {z1:.6g}], t in [{t0:.6g}, {t1:.6g}]",
        ]
        if d.get("u"):
            lines.append(f"u = {d['u']}")
        lines.append(
            f"residual ({report.method}): max {report.max_residual:.3e}, mean {report.mean_residual:.3e}, tol {report.tolerance:g} -> "
            + ("pass" if report.passed else "FAIL")
        )
        lines += [f"note: {n}" for n in s.notes]
        if args.output:
            lines.append(f"wrote {args.output} and its report")
        print("\n".join(lines))
    return EXIT_OK if report.passed else EXIT_FAILED


def _bogus_translation():
    return sy.Generator("bogus_dz", ex.Const(1), ex.Const(0), ex.Const(0), "injected")


def cmd_verify_determining(args):
    model = model_from_args(args)
    cl = sy.classify(model)
    rows = []
    ok = True
    for g in cl.generators:
        rep = sy.check_determining(model, g, n_points=args.points, seed=args.seed, variant=args.variant)
        row = {"generator": g.label, "expected": "pass", **rep.render()}
        if args.oracle:
            row["oracle"], _ = sy.prolongation_residual(model, g, seed=args.seed)
        ok &= rep.passed
        rows.append(row)
    if args.inject_bogus:
        g = _bogus_translation()
        rep = sy.check_determining(model, g, n_points=args.points, seed=args.seed, variant=args.variant)
        row = {"generator": g.label, "expected": "fail", **rep.render()}
        if args.oracle:
            row["oracle"], _ = sy.prolongation_residual(model, g, seed=args.seed)
        ok &= not rep.passed
        rows.append(row)
    if args.format == "json":
        _emit(args, _dumps({"branch": "constant" if model.is_constant_ratio else "nonconstant", "variant": args.variant, "results": rows, "pass": ok}))
    else:
        names = sy.EQUATION_NAMES
        lines = [f"determining equations ({args.variant}), {args.points} points, seed {args.seed}"]
        lines.append(f"{'generator':<10}" + "".join(f"{n:>8}" for n in names) + "  result" + ("    oracle" if args.oracle else ""))
        for row in rows:
            marks = {e["equation"]: ("ok" if e["pass"] else "FAIL") for e in row["equations"]}
            verdict = "pass" if row["pass"] else "fail"
            if row["expected"] == "fail":
                verdict += " (expected fail)"
            line = f"{row['generator']:<10}" + "".join(f"{marks[n]:>8}" for n in names) + f"  {verdict}"
            if args.oracle:
                line += f"  {row['oracle']:.1e}"
            lines.append(line)
        lines.append("all as expected" if ok else "UNEXPECTED RESULT")
        _emit(args, "\n".join(lines))
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {
    "classify": cmd_classify,
    "commutators": cmd_commutators,
    "flow": cmd_flow,
    "solve": cmd_solve,
    "verify-determining": cmd_verify_determining,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand; one of " + ", ".join(COMMANDS))
        random.seed(args.seed)
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as err:
        print(f"model error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (fl.FlowError, so.SolutionError, sy.CompatibilityError, sy.BracketClosureError, vf.VerifyError, ex.ExprError, ArithmeticError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
