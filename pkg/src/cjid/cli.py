"""Command-line front end: ``cjid {verify,fit,derive,translate,list}``.

Identities are selected from the bundled catalog (``--eq``, ``--table``,
``--family`` with ``--p``) or read from DSL files given as positional
arguments.  Reports go to stdout as text or JSON lines, one record per
(identity, m), in a fixed order.

Exit status: 0 when everything passes, 1 on any verification failure,
2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import catalog
from .catalog import (
    FamilyConstraintError, bundled_lockfile, load_catalog, read_lockfile,
    specs_for, write_lockfile,
)
from .engine import (
    CONSTANT_RTOL, DEFAULT_M_GRID, DEFAULT_X_COUNT, RESIDUAL_TOL, SampleGrid,
    differentiate, imaginary_translate, normalize, verify,
)
from .expr import DSLError, IdentitySpec, parse, render_spec

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LOCK_RTOL = 1e-6


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def _env_value(name: str, cast):
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"{name}={raw!r} is not a valid {cast.__name__}") from None


def resolve_config(args) -> tuple[SampleGrid, float]:
    """Flags beat CJID_* environment variables, which beat the defaults."""
    tol = args.tol
    if tol is None:
        tol = _env_value("CJID_TOL", float)
    if tol is None:
        tol = RESIDUAL_TOL
    x_count = args.x_count
    if x_count is None:
        x_count = _env_value("CJID_XCOUNT", int)
    if x_count is None:
        x_count = DEFAULT_X_COUNT
    if not (tol > 0 and math.isfinite(tol)):
        raise UsageError(f"tolerance must be positive, got {tol!r}")
    m_values = DEFAULT_M_GRID if args.m_grid is None else _parse_m_grid(args.m_grid)
    try:
        grid = SampleGrid(m_values, x_count)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return grid, tol


def _parse_m_grid(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--m-grid expects comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--m-grid is empty")
    return values


# --------------------------------------------------------------- selection


def _split_list(values) -> list[str]:
    out = []
    for v in values or ():
        out += [s.strip() for s in v.split(",") if s.strip()]
    return out


def _entry(eq: str):
    try:
        return catalog.get_entry(eq.upper())
    except KeyError:
        raise UsageError(f"unknown catalog entry {eq!r}") from None


def _entry_specs(entry, p: int | None) -> list[IdentitySpec]:
    if entry.is_family:
        if p is None:
            raise UsageError(f"{entry.eq} is a general-p family; give --p")
        try:
            return specs_for(entry, p)
        except FamilyConstraintError as exc:
            raise UsageError(str(exc)) from None
    specs = specs_for(entry, p)
    if not specs:
        raise UsageError(f"{entry.eq} has no identity at p={p}")
    return specs


def select(args) -> list[IdentitySpec]:
    """Resolve the selectors into a deterministic list of identities."""
    specs: list[IdentitySpec] = []
    for eq in _split_list(args.eq):
        specs += _entry_specs(_entry(eq), args.p)
    for fam in _split_list(args.family):
        entry = _entry(fam)
        if not entry.is_family:
            raise UsageError(f"{entry.eq} is not a general-p family")
        specs += _entry_specs(entry, args.p)
    if args.table is not None:
        entries = [e for e in load_catalog() if e.table == args.table]
        if not entries:
            raise UsageError(f"no catalog table {args.table}")
        for e in entries:
            if e.is_family:
                if args.families and args.p is not None and e.family.allows(args.p):
                    specs += specs_for(e, args.p)
            else:
                specs += specs_for(e, args.p)
        if not specs and not args.paths:
            raise UsageError(f"table {args.table} has no identity at p={args.p}")
    for path in args.paths:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        try:
            specs += parse(text)
        except DSLError as exc:
            raise UsageError(f"{path}: {exc}") from None
    if not specs:
        raise UsageError("no identities selected (use --eq, --table, --family or DSL files)")
    return specs


# ----------------------------------------------------------------- records


def _json_number(v):
    if isinstance(v, complex):
        return [_json_number(v.real), _json_number(v.imag)]
    v = float(v)
    return v if math.isfinite(v) else None


def _text_number(v) -> str:
    if isinstance(v, complex):
        return f"({v.real!r}{v.imag:+.17g}j)"
    return repr(float(v))


def _record(spec: IdentitySpec, rec, constants: dict, verdict: bool, **extra) -> dict:
    out = {
        "name": spec.name,
        "eq": spec.eq,
        "p": spec.p,
        "m": rec.m,
        "residual": rec.residual,
        "constants": dict(sorted(constants.items())),
        "verdict": "pass" if verdict else "fail",
    }
    out.update(extra)
    return out


class Writer:
    """Serializes report records and free text to one ordered stream."""

    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    def record(self, rec: dict, note: str = "") -> None:
        if self.fmt == "jsonl":
            row = dict(rec)
            row["residual"] = _json_number(row["residual"])
            row["constants"] = {k: _json_number(v) for k, v in row["constants"].items()}
            self.stream.write(json.dumps(row) + "\n")
            return
        consts = " ".join(f"{k}={_text_number(v)}" for k, v in rec["constants"].items())
        parts = [rec["verdict"].upper(), rec["name"], f"p={rec['p']}", f"m={rec['m']!r}",
                 f"residual={rec['residual']:.3e}"]
        if consts:
            parts.append(consts)
        if rec.get("match") is not None:
            parts.append(f"match={'yes' if rec['match'] else 'no'}")
        if note:
            parts.append(f"[{note}]")
        self.stream.write(" ".join(parts) + "\n")

    def text(self, line: str) -> None:
        """Free-form output; in jsonl mode it is wrapped as a comment object."""
        if self.fmt == "jsonl":
            self.stream.write(json.dumps({"text": line}) + "\n")
        else:
            self.stream.write(line + "\n")

    def summary(self, n_ok: int, n: int) -> None:
        if self.fmt == "text":
            self.stream.write(f"{n_ok}/{n} identities pass\n")


def _emit_verification(writer: Writer, spec: IdentitySpec, grid, tol) -> bool:
    report = verify(spec, grid, tol, CONSTANT_RTOL)
    for rec in report.records:
        verdict = rec.verdict and report.degree_ok
        writer.record(_record(spec, rec, rec.constants, verdict), rec.note)
    if not report.degree_ok:
        writer.text(f"{spec.name}: rhs block degrees break the rank rule")
    return report.verdict


# ---------------------------------------------------------------- commands


def cmd_verify(args, writer: Writer) -> int:
    grid, tol = resolve_config(args)
    specs = select(args)
    ok = [_emit_verification(writer, s, grid, tol) for s in specs]
    writer.summary(sum(ok), len(ok))
    return EXIT_OK if all(ok) else EXIT_FAIL


def _load_lock(path: str | None) -> dict:
    if path is None:
        return bundled_lockfile()
    try:
        return read_lockfile(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read lockfile {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _lock_ok(lock: dict, name: str, m: float, values: dict) -> bool | None:
    """None when the lockfile has nothing for this (identity, m)."""
    seen = False
    for u, v in values.items():
        ref = lock.get((f"{name}:{u}", m))
        if ref is None:
            continue
        seen = True
        if abs(complex(v) - ref) > LOCK_RTOL * (1 + abs(ref)):
            return False
    return True if seen else None


def cmd_fit(args, writer: Writer) -> int:
    grid, tol = resolve_config(args)
    specs = select(args)
    lock = _load_lock(args.lockfile)
    rows, ok = [], []
    for spec in specs:
        report = verify(spec, grid, tol, CONSTANT_RTOL)
        for rec in report.records:
            fitted = rec.fitted if rec.fitted is not None else rec.constants
            match = rec.constants_ok
            locked = _lock_ok(lock, spec.name, rec.m, fitted) if spec.to_fit else None
            verdict = rec.verdict and report.degree_ok and locked is not False
            writer.record(_record(spec, rec, fitted, verdict, match=match, locked=locked),
                          rec.note)
            ok.append(verdict)
            if spec.to_fit and "rank-deficient" not in rec.note:
                rows += [(spec.name, u, rec.m, float(complex(fitted[u]).real))
                         for u in spec.to_fit if not isinstance(fitted[u], complex)]
    if args.write_lockfile:
        Path(args.write_lockfile).write_text(write_lockfile(rows))
    n_ids = len(specs)
    per_id = len(grid.m_values)
    id_ok = [all(ok[i * per_id:(i + 1) * per_id]) for i in range(n_ids)]
    writer.summary(sum(id_ok), n_ids)
    return EXIT_OK if all(ok) else EXIT_FAIL


def _transform(args, writer: Writer, fn, label: str) -> int:
    grid, tol = resolve_config(args)
    specs = select(args)
    ok = []
    for spec in specs:
        try:
            new = fn(spec)
        except Exception as exc:  # report the stage, keep going
            writer.text(f"{spec.name}: {label} failed at transformation stage: {exc}")
            ok.append(False)
            continue
        writer.text(render_spec(new))
        passed = _emit_verification(writer, new, grid, tol)
        if not passed:
            writer.text(f"{new.name}: {label} failed at verification stage")
        ok.append(passed)
    writer.summary(sum(ok), len(ok))
    return EXIT_OK if all(ok) else EXIT_FAIL


def cmd_derive(args, writer: Writer) -> int:
    return _transform(args, writer, lambda s: normalize(differentiate(s)), "derive")


def cmd_translate(args, writer: Writer) -> int:
    return _transform(args, writer, imaginary_translate, "translate")


def _spec_meta(spec: IdentitySpec) -> dict:
    return {
        "name": spec.name, "eq": spec.eq, "table": spec.table, "p": spec.p,
        "rank": spec.rank, "spacing": spec.spacing, "lattice": spec.lattice,
        "known": sorted(spec.constants_known), "fit": list(spec.to_fit),
    }


def cmd_list(args, writer: Writer) -> int:
    selected = args.eq or args.family or args.table is not None or args.paths
    if selected:
        rows = [_spec_meta(s) for s in select(args)]
    else:
        rows = []
        for e in load_catalog():
            if e.is_family:
                f = e.family
                rows.append({"eq": e.eq, "table": e.table, "family": True,
                             "parity": f.parity, "min_p": f.min_p,
                             "pattern": f.pattern, "rhs": f.rhs_shape, "note": e.note})
            else:
                rows += [_spec_meta(s) for s in e.specs]
    for row in rows:
        if writer.fmt == "jsonl":
            writer.stream.write(json.dumps(row) + "\n")
        elif row.get("family"):
            writer.stream.write(
                f"{row['eq']:<6} table {row['table']}  family  p {row['parity']} >= "
                f"{row['min_p']}  {row['pattern']}  rhs {row['rhs']}\n")
        else:
            known = ",".join(row["known"]) or "-"
            fit = ",".join(row["fit"]) or "-"
            writer.stream.write(
                f"{row['name']:<10} table {row['table']}  p={row['p']} rank={row['rank']} "
                f"spacing={row['spacing']} lattice={row['lattice']} known={known} fit={fit}\n")
    return EXIT_OK


COMMANDS = {
    "verify": (cmd_verify, "check identities over the sample grid"),
    "fit": (cmd_fit, "fit the constants per m and compare with closed forms"),
    "derive": (cmd_derive, "differentiate, normalize and verify the new identity"),
    "translate": (cmd_translate, "move to the imaginary lattice and verify"),
    "list": (cmd_list, "show catalog metadata"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("paths", nargs="*", help="DSL files with identities")
    common.add_argument("--eq", action="append", help="catalog label, e.g. E23 (repeatable)")
    common.add_argument("--table", type=int, help="all entries of one table (0 = text)")
    common.add_argument("--family", action="append", help="general-p family label")
    common.add_argument("--families", action="store_true",
                        help="with --table and --p, include the table's families")
    common.add_argument("--p", type=int, help="number of lattice points")
    common.add_argument("--m-grid", help="comma-separated m values")
    common.add_argument("--x-count", type=int, help="x samples per m (env CJID_XCOUNT)")
    common.add_argument("--tol", type=float, help="residual tolerance (env CJID_TOL)")
    common.add_argument("--format", choices=("text", "jsonl"), default="text")
    common.add_argument("--lockfile", help="fitted-constant lockfile to compare against")

    parser = argparse.ArgumentParser(
        prog="cjid", description="Verify cyclic identities of Jacobi elliptic functions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "fit":
            p.add_argument("--write-lockfile", metavar="PATH",
                           help="write well-conditioned fitted constants here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "write_lockfile"):
        args.write_lockfile = None
    fn = COMMANDS[args.command][0]
    writer = Writer(args.format)
    try:
        return fn(args, writer)
    except UsageError as exc:
        print(f"cjid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
