"""Command-line entry point: construct, verify, sweep, oracle.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from .families import (
    FamilyError,
    build,
    dumps_instance,
    loads_instance,
    spec_from_dict,
)
from .jets import JetDomainError, finite_difference_oracle, jet_first_second
from .ode import GuardError, IntegrationError
from .tensors import DegenerateMetricError
from .verify import (
    CHECK_NAMES,
    TOL,
    SampleGrid,
    cotton_norm,
    degeneracy_check,
    equation_residual,
    run_suite,
)

FAMILIES = {
    "soliton-cylinder": ("soliton-cylinder", {}),
    "qb-vstatic": ("qb", {"kind": "vstatic"}),
    "qb-cpm": ("qb", {"kind": "critical"}),
    "p-cpm": ("p", {}),
    "warped": ("warped", {}),
}

CSV_TAIL = ["chart_x1", "chart_x2", "chart_x3", "max_eq_residual", "min_eigen_gap", "cotton_witness", "guard_note"]


class InputError(Exception):
    pass


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".17g")


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


def spec_from_params(family: str, params: dict):
    if family not in FAMILIES:
        raise InputError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if not isinstance(params, dict):
        raise InputError("parameter document must be a JSON object")
    tag, extra = FAMILIES[family]
    clash = set(extra) & set(params)
    if clash:
        raise InputError(f"field(s) {', '.join(sorted(clash))} are fixed by --family {family}")
    try:
        return spec_from_dict({"family": tag, **extra, **params})
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid parameters: {exc}") from None


def _load_instance(path: str):
    text = _read_json(path)
    try:
        return loads_instance(json.dumps(text))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a valid instance document ({exc})") from None


def _grid(text: str) -> SampleGrid:
    try:
        return SampleGrid.parse(text)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _chart_lengths(inst) -> list[float]:
    return [h - l for l, h in zip(inst.chart.lo, inst.chart.hi)]


# ---------------------------------------------------------------------------
# commands


def cmd_construct(args) -> int:
    spec = spec_from_params(args.family, _read_json(args.params))
    try:
        inst = build(spec)
    except (FamilyError, GuardError, IntegrationError) as exc:
        raise InputError(str(exc)) from None
    Path(args.out).write_text(dumps_instance(inst))
    lo, hi = inst.chart.lo, inst.chart.hi
    print(f"family: {inst.tag}")
    print("chart: " + ", ".join(f"x{i + 1} in [{lo[i]:.10g}, {hi[i]:.10g}]" for i in range(3)))
    print("guards: " + ("; ".join(inst.guard_notes) if inst.guard_notes else "none triggered"))
    print("drift: " + ", ".join(f"{k}={s.drift:.3e}" for k, s in inst.solutions.items()))
    if not inst.verifiable:
        print("warning: drift exceeds 1e-8, instance will be rejected by verify")
    return 0


def cmd_verify(args) -> int:
    if args.tol is not None and not args.tol > 0:
        raise InputError("--tol must be positive")
    grid = _grid(args.grid)
    if args.checks == "all":
        checks = "all"
    else:
        checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        unknown = [c for c in checks if c not in CHECK_NAMES]
        if unknown or not checks:
            raise InputError(f"unknown check(s) {', '.join(unknown) or '(none given)'}; valid: {', '.join(CHECK_NAMES)}")
    inst = _load_instance(args.instance)
    try:
        report = run_suite(inst, checks, grid, tol=args.tol or TOL)
    except (DegenerateMetricError, JetDomainError) as exc:
        Path(args.report).write_text(json.dumps({"passed": False, "error": str(exc)}, indent=1, sort_keys=True))
        print(f"verification aborted: {exc}", file=sys.stderr)
        return 1
    Path(args.report).write_text(report.to_json())
    for c in report.checks:
        flag = "" if c.mandatory else " (informative)"
        print(f"{c.name:36s} {c.status:12s} max={c.max_residual:.3e} tol={c.tolerance:.1e}{flag}")
    print("overall: " + ("PASS" if report.passed else "FAIL"))
    return 0 if report.passed else 1


def _expand_ranges(ranges: dict) -> tuple[list[str], list[tuple]]:
    if not isinstance(ranges, dict) or not ranges:
        raise InputError("param-ranges must define at least one range")
    names, axes = [], []
    for name, r in ranges.items():
        if isinstance(r, list):
            vals = [float(v) for v in r]
        elif isinstance(r, dict):
            try:
                vals = np.linspace(float(r["start"]), float(r["stop"]), int(r["num"])).tolist()
            except (KeyError, TypeError, ValueError):
                raise InputError(f"range {name!r} needs start, stop and num") from None
        else:
            raise InputError(f"range {name!r} must be a list or a start/stop/num object")
        if not vals:
            raise InputError(f"range {name!r} is empty")
        names.append(name)
        axes.append(vals)
    return names, list(itertools.product(*axes))


def sweep_rows(family: str, base: dict, names: list[str], tuples: list[tuple], grid: SampleGrid):
    for values in tuples:
        params = dict(base)
        params.update(zip(names, values))
        row = {"family": family, **{n: _fmt(v) for n, v in zip(names, values)}}
        try:
            inst = build(spec_from_params(family, params))
        except (GuardError, FamilyError, IntegrationError, InputError) as exc:
            guard = getattr(exc, "guard", "")
            note = f"guard: {guard}" if guard else str(exc)
            row.update(chart_x1=_fmt(0.0), chart_x2=_fmt(0.0), chart_x3=_fmt(0.0), max_eq_residual="",
                       min_eigen_gap="", cotton_witness="", guard_note=note)
            yield row, None
            continue
        eq = equation_residual(inst, grid)
        deg = degeneracy_check(inst, grid)
        cot = cotton_norm(inst, grid)
        lengths = _chart_lengths(inst)
        row.update(chart_x1=_fmt(lengths[0]), chart_x2=_fmt(lengths[1]), chart_x3=_fmt(lengths[2]),
                   max_eq_residual=_fmt(eq.max_residual), min_eigen_gap=_fmt(deg.details["min_gap"]),
                   cotton_witness=_fmt(cot.details["max_cotton"]), guard_note="; ".join(inst.guard_notes))
        yield row, eq


def cmd_sweep(args) -> int:
    grid = _grid(args.grid)
    if args.family not in FAMILIES:
        raise InputError(f"unknown family {args.family!r}; choose from {', '.join(FAMILIES)}")
    doc = _read_json(args.param_ranges)
    if not isinstance(doc, dict):
        raise InputError("param-ranges document must be a JSON object with 'base' and 'ranges'")
    base = doc.get("base", {})
    names, tuples = _expand_ranges(doc.get("ranges"))
    header = ["family", *names, *CSV_TAIL]
    failed = 0
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        for row, eq in sweep_rows(args.family, base, names, tuples, grid):
            writer.writerow(row)
            if eq is not None and not eq.passed:
                failed += 1
    print(f"{len(tuples)} rows written to {args.out}; {failed} above tolerance")
    return 1 if failed else 0


def _parse_point(text: str) -> np.ndarray:
    try:
        p = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InputError(f"point must be x,y,z, got {text!r}") from None
    if p.shape != (3,):
        raise InputError(f"point must have three coordinates, got {text!r}")
    return p


def cmd_oracle(args) -> int:
    if not args.step > 0:
        raise InputError("--step must be positive")
    inst = _load_instance(args.instance)
    point = _parse_point(args.point)
    if not inst.chart.contains(point, pad=args.step):
        raise InputError(f"point {args.point} is outside the chart (with stencil padding {args.step:g})")
    labels = ["d1", "d2", "d3", "d11", "d12", "d13", "d22", "d23", "d33"]
    fields = {"g11": inst.metric.g11, "g22": inst.metric.g22, "g33": inst.metric.g33, "f": inst.potential}
    worst = 0.0
    print(f"{'field':5s} {'partial':7s} {'jet':>24s} {'finite-diff':>24s} {'rel dev':>10s}")
    for name, fld in fields.items():
        try:
            fd = np.concatenate(finite_difference_oracle(fld, point, args.step))
        except JetDomainError as exc:
            raise InputError(str(exc)) from None
        jt = np.concatenate(jet_first_second(fld, point))
        dev = np.abs(jt - fd) / (1 + np.abs(jt))
        worst = max(worst, float(np.max(dev)))
        for lab, a, b, d in zip(labels, jt, fd, dev):
            print(f"{name:5s} {lab:7s} {a:24.16e} {b:24.16e} {d:10.2e}")
    ok = worst <= 1e-5
    print(f"max relative deviation {worst:.3e} ({'within' if ok else 'above'} 1e-5)")
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riccideg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build an instance from a parameter document")
    c.add_argument("--family", required=True, choices=list(FAMILIES))
    c.add_argument("--params", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="run the verification suite on an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--checks", default="all")
    v.add_argument("--grid", default="7x7x7")
    v.add_argument("--report", required=True)
    v.add_argument("--tol", type=float, default=None, help=f"residual tolerance (default {TOL:g})")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="tabulate residuals over parameter ranges")
    s.add_argument("--family", required=True)
    s.add_argument("--param-ranges", required=True)
    s.add_argument("--grid", default="7x7x7")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="compare jet partials with central differences")
    o.add_argument("--instance", required=True)
    o.add_argument("--point", required=True)
    o.add_argument("--step", type=float, default=1e-4)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
