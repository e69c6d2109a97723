"""``etomo`` command line.

Exit codes: 0 success or pass, 1 verification failure, 2 usage or format error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import formats
from .field_ops import ElasticField, Grid, apply_H_adjoint, apply_K_adjoint, field_norm
from .geometry import sphere_directions
from .helmholtz import decompose_field, decomposition_report, subspace_dimensions
from .lemma_verifier import verify_no_pw_kernel, verify_reduction
from .phantoms import PHANTOM_KINDS, make_phantom
from .ray_transform import admissible_triples, offset_grid, sinogram, slice_check
from .spectral import SymmetricPencil, eigen_derivatives
from .tensor_core import TensorShape

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_PLAN_DEFAULTS = {"directions": 7, "offsets": 9, "radius": 1.6, "pol": "both", "seed": 1}
_LEMMA_RANGES = {"no-pw-kernel": range(1, 5), "reduction": range(2, 6)}


class UsageError(Exception):
    pass


def parse_plan(text: str | None) -> dict:
    """``key=value`` pairs separated by commas, or a path to a JSON object."""
    plan = dict(_PLAN_DEFAULTS)
    if not text:
        return plan
    if Path(text).is_file():
        try:
            extra = json.loads(Path(text).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"plan file is not valid JSON: {exc}") from None
    else:
        extra = {}
        for item in text.split(","):
            if "=" not in item:
                raise UsageError(f"plan entry {item!r} is not key=value")
            k, v = item.split("=", 1)
            extra[k.strip()] = v.strip()
    for k, v in extra.items():
        if k not in plan:
            raise UsageError(f"unknown plan key {k!r}; known: {', '.join(plan)}")
        try:
            plan[k] = type(_PLAN_DEFAULTS[k])(v)
        except ValueError:
            raise UsageError(f"plan key {k!r} has invalid value {v!r}") from None
    if plan["pol"] not in ("parallel", "orthogonal", "both"):
        raise UsageError("plan key 'pol' must be parallel, orthogonal or both")
    if plan["directions"] < 1 or plan["offsets"] < 1:
        raise UsageError("plan needs at least one direction and one offset")
    return plan


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path):
    f = formats.read_field(path)
    if not isinstance(f, ElasticField):
        raise formats.FormatError("container field 'kind' is invalid: expected an elastic field")
    return f


# --------------------------------------------------------------------------
# subcommands


def cmd_phantom(args) -> int:
    grid = Grid.centered(args.n, args.grid, args.extent)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = make_phantom(args.kind, grid, m=args.m, seed=args.seed, sigma=args.sigma,
                         lam=args.lam, mu=args.mu)
    if not args.out:
        raise UsageError("phantom needs --out")
    formats.write_field(args.out, f)
    info = {"kind": args.kind, "n": args.n, "m": args.m, "seed": args.seed, "norm": field_norm(f)}
    if args.kind == "solenoidal" and args.m == 2:
        fn = field_norm(f)
        info["K_adjoint_over_f"] = field_norm(apply_K_adjoint(f)) / fn
        info["H_adjoint_over_f"] = field_norm(apply_H_adjoint(f)) / fn
    sys.stderr.write(formats.dump_json(info))
    return EXIT_OK


def cmd_transform(args) -> int:
    f = _load(args.field)
    plan = parse_plan(args.plan)
    dirs = sphere_directions(f.shape.n, plan["directions"], seed=plan["seed"])
    offs = offset_grid(f.shape.n, plan["offsets"], plan["radius"])
    s = sinogram(f, dirs, offs, plan["pol"])
    _emit(formats.sinogram_to_csv(s), args.out)
    if args.tol is not None:
        peak = float(np.max(np.abs(s.value)))
        if peak > args.tol:
            sys.stderr.write(f"max |value| = {peak:.3e} exceeds --tol {args.tol:.3e}\n")
            return EXIT_FAIL
    return EXIT_OK


def cmd_decompose(args) -> int:
    f = _load(args.field)
    if f.shape.m != 2:
        raise formats.FormatError("container field 'm' is invalid: decompose needs a rank-2 field")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_field(f)
    report = decomposition_report(f, dec)
    summary = {**dec.summary(), "residuals": report}
    if not dec.theorem_guarantee:
        summary["flags"] = ["no-theorem-guarantee"]
    if args.out:
        prefix = args.out
        formats.write_field(f"{prefix}_W.etf", dec.W)
        formats.write_field(f"{prefix}_h.etf", dec.h)
        formats.write_field(f"{prefix}_S.etf", dec.S)
        formats.write_json(f"{prefix}_summary.json", summary)
    else:
        sys.stdout.write(formats.dump_json(summary))
    if args.tol is not None:
        keys = ("reconstruction_residual", "K_adjoint_S_over_f", "H_adjoint_S_over_f")
        if any(report[k] > args.tol for k in keys):
            return EXIT_FAIL
    return EXIT_OK


def cmd_slice_check(args) -> int:
    f = _load(args.field)
    if f.shape.m != 2:
        raise formats.FormatError("container field 'm' is invalid: slice-check needs a rank-2 field")
    rng = np.random.default_rng(args.seed)
    rows = []
    for v, q, p in admissible_triples(f.shape.n, args.count, rng):
        (lhs, rhs, res), = slice_check(f, v, q, [p])
        rows.append({"v": v.tolist(), "q": q.tolist(), "p": p.tolist(),
                     "lhs": [lhs.real, lhs.imag], "rhs": [rhs.real, rhs.imag], "residual": res})
    worst = max(r["residual"] for r in rows)
    tol = 1e-2 if args.tol is None else args.tol
    out = {"count": len(rows), "max_residual": worst, "tol": tol, "pass": worst <= tol, "records": rows}
    _emit(formats.dump_json(out), args.out)
    return EXIT_OK if worst <= tol else EXIT_FAIL


def cmd_verify(args) -> int:
    lemma = args.lemma
    if args.n not in _LEMMA_RANGES[lemma]:
        r = _LEMMA_RANGES[lemma]
        raise UsageError(f"--n for {lemma} must be in {r.start}..{r.stop - 1}, got {args.n}")
    cert = verify_no_pw_kernel(args.n) if lemma == "no-pw-kernel" else verify_reduction(args.n)
    _emit(formats.dump_json(cert), args.out)
    return EXIT_OK if cert["pass"] else EXIT_FAIL


def _read_matrix(path) -> np.ndarray:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise formats.FormatError(f"cannot read matrix file: {exc}") from None
    try:
        M = np.array(json.loads(text), dtype=float) if text.lstrip().startswith("[") else np.loadtxt(p, ndmin=2)
    except (ValueError, json.JSONDecodeError) as exc:
        raise formats.FormatError(f"matrix file {path} is malformed: {exc}") from None
    return M


def cmd_perturb(args) -> int:
    A, Ap = _read_matrix(args.A), _read_matrix(args.Aprime)
    try:
        pencil = SymmetricPencil(A, Ap)
    except ValueError as exc:
        raise formats.FormatError(str(exc)) from None
    report = eigen_derivatives(pencil, args.tol)
    _emit(report.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_dim_info(args) -> int:
    shape = TensorShape(args.n, args.m)
    info = {"n": args.n, "m": args.m, "dim": shape.dim}
    if args.m == 2 and args.n >= 2:
        p = np.arange(1.0, args.n + 1)
        info["subspaces"] = subspace_dimensions(p)
    _emit(formats.dump_json(info), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="etomo", description="Elastic X-ray transform toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a phantom field container")
    p.add_argument("kind", choices=PHANTOM_KINDS)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--grid", type=int, default=48, help="samples per axis")
    p.add_argument("--extent", type=float, default=8.0, help="box side length")
    p.add_argument("--sigma", type=float, default=0.8)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("transform", help="sinogram CSV of a field")
    p.add_argument("field")
    p.add_argument("--plan", help="directions=7,offsets=9,radius=1.6,pol=both,seed=1 or a JSON file")
    p.add_argument("--tol", type=float, help="fail if max |value| exceeds this")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("decompose", help="split a rank-2 field into K W + H h + S")
    p.add_argument("field")
    p.add_argument("--out", help="prefix for the W/h/S containers and summary JSON")
    p.add_argument("--tol", type=float, help="fail if certificates exceed this")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("slice-check", help="Fourier slice residuals at random admissible (v, q, p)")
    p.add_argument("field")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice_check)

    p = sub.add_parser("verify", help="exact lemma certificate")
    p.add_argument("--lemma", choices=sorted(_LEMMA_RANGES), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("perturb", help="first-order eigenvalue derivatives of A + s A'")
    p.add_argument("A")
    p.add_argument("Aprime")
    p.add_argument("--tol", type=float, help="degeneracy tolerance (default 1e-8 ||A||)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("dim-info", help="dimension of E^m_n and symbol subspaces")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dim_info)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, formats.FormatError) as exc:
        sys.stderr.write(f"etomo {args.command}: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"etomo {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
