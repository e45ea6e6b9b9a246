"""Command-line front end.

Subcommands: coeffs, error-table, bounds, covariance, verify, oracle.
Reports go to stdout (or --out FILE) as json, csv or an aligned table;
all floats are serialized with 17 significant digits and runs with a
fixed seed and thread count are byte-identical.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
3 cost-guard rejection.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import bounds as bd
from . import fock_oracle as fo
from . import grassmann_check as gc
from . import perturb as pt
from . import propagator as pr
from .model import ModelParams

SCHEMA = "hubbard-pert/1"
DEFAULT_BUDGET = 500_000_000


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialization with fixed float formatting


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    raise TypeError(f"unsupported scalar {type(x)}")


def _to_json(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{k}": {_to_json(v, indent + 1)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(
            f"{pad}  {_to_json(v, indent + 1)}" for v in obj
        )
        return "[\n" + items + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return _fmt(obj)


def _row_header(rows: list[dict]) -> list[str]:
    header: list[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    return header


def _cell(r: dict, k: str) -> str:
    if k not in r:
        return ""
    v = r[k]
    return v if isinstance(v, str) else _fmt(v)


def _emit(report: dict, rows: list[dict], args) -> None:
    fmt = args.format
    out = []
    if fmt == "json":
        payload = {"schema": SCHEMA, **report, "rows": rows}
        out.append(_to_json(payload))
    elif fmt == "csv":
        header = _row_header(rows)
        out.append(",".join(header))
        for r in rows:
            out.append(",".join(_cell(r, k) for k in header))
    else:
        for k, v in report.items():
            if k == "schema":
                continue
            if isinstance(v, dict):
                v = " ".join(f"{kk}={_cell(v, kk)}" for kk in v)
            out.append(f"{k}: {v if isinstance(v, str) else _fmt(v)}")
        if rows:
            header = _row_header(rows)
            out.append("\t".join(header))
            for r in rows:
                out.append("\t".join(_cell(r, k) for k in header))
    text = "\n".join(out) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# argument plumbing


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=2, help="space dimension")
    p.add_argument("--L", type=int, default=10, help="lattice edge length")
    p.add_argument("--t", type=float, default=0.01)
    p.add_argument("--tprime", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=1.0)


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.add_argument("--out", default=None, help="write the report to a file")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help="max momentum tuples per coefficient term")


def _params(args) -> ModelParams:
    try:
        return ModelParams(
            d=args.d, L=args.L, t=args.t, tprime=args.tprime,
            mu=args.mu, beta=args.beta,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_sites(spec: str, params: ModelParams) -> pt.SiteQuad:
    toks = [t for t in spec.replace(";", " ").replace(",", " ").split() if t]
    vals = []
    for t in toks:
        try:
            vals.append(int(t))
        except ValueError as exc:
            raise ConfigError(f"bad site coordinate {t!r}") from exc
    if len(vals) != 4 * params.d:
        raise ConfigError(
            f"--sites needs 4*d = {4 * params.d} integers, got {len(vals)}"
        )
    quads = [vals[i * params.d:(i + 1) * params.d] for i in range(4)]
    return pt.SiteQuad.on(params, *quads)


def _parse_u_list(args) -> list[float]:
    if getattr(args, "U_list", None):
        items = [t for t in args.U_list.replace(",", " ").split() if t]
        return [float(t) for t in items]
    if getattr(args, "U", None) is not None:
        return [args.U]
    return []


def _set_threads(args) -> None:
    n = args.threads
    if n is None:
        env = os.environ.get("HUBBARD_PERT_THREADS")
        n = int(env) if env else None
    if n is not None:
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_coeffs(args) -> int:
    params = _params(args)
    sites = _parse_sites(args.sites, params)
    u_values = _parse_u_list(args)
    prop = pr.Propagator(params)

    def progress(i, total, g):
        if params.L ** (params.d * 4) > 1_000_000:
            print(f"# a2 term {i + 1}/{total}: {g:.6e}", file=sys.stderr)

    coeffs = pt.coefficients(
        prop, sites, budget=args.budget,
        checkpoint=args.checkpoint, progress=progress,
    )
    rows = [
        {"U": u, "series": pt.series_eval(coeffs, u)} for u in u_values
    ]
    report = {
        "command": "coeffs",
        "params": _param_dict(params),
        "sites": args.sites,
        "a0": coeffs.a0,
        "a1": coeffs.a1,
        "a2": coeffs.a2,
    }
    _emit(report, rows, args)
    return 0


def _param_dict(params: ModelParams) -> dict:
    return {
        "d": params.d, "L": params.L, "t": params.t,
        "tprime": params.tprime, "mu": params.mu, "beta": params.beta,
    }


def _decay_constant(args, params: ModelParams) -> float:
    if args.D is not None:
        if args.D <= 0:
            raise ConfigError("--D must be positive")
        return args.D
    if args.prop51:
        return bd.D_upper_2d(params)
    raise ConfigError("need --D or --prop51 to fix the decay constant")


def cmd_error_table(args) -> int:
    params = _params(args)
    d = _decay_constant(args, params)
    u_values = _parse_u_list(args)
    try:
        rows = [
            {"U": u, "error": err}
            for (u, err) in bd.error_table(u_values, d, args.m)
        ]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {
        "command": "error-table",
        "D": d,
        "radius": 1.0 / (27.0 * d),
        "m": args.m,
    }
    _emit(report, rows, args)
    return 0


def cmd_bounds(args) -> int:
    params = _params(args)
    d = _decay_constant(args, params)
    rows = [
        {"n": n, "coeff_bound": bd.coeff_bound(n, d)}
        for n in range(args.n_max + 1)
    ]
    report = {
        "command": "bounds",
        "D": d,
        "radius": 1.0 / (27.0 * d),
        "R_at_radius": bd.R_bound(1.0 / (27.0 * d), d),
        "f_at_radius": bd.f_closed(bd.F_RADIUS),
    }
    _emit(report, rows, args)
    return 0


def cmd_covariance(args) -> int:
    params = _params(args)
    prop = pr.Propagator(params)
    if params.n_sites * round(params.beta * args.h) * 2 > 2048:
        raise gc.CostGuardError("covariance matrix too large for this command")
    dc = pr.build_discrete_covariance(prop, args.h)
    det = pr.det_covariance(dc)
    closed = pr.det_covariance_closed(params)
    rows = [{
        "h": args.h,
        "dim": dc.dim,
        "det": det,
        "det_closed": closed,
        "rel_err": abs(det - closed) / abs(closed),
        "D_h": pr.decay_Dh(prop, args.h),
    }]
    report = {"command": "covariance", "params": _param_dict(params)}
    _emit(report, rows, args)
    return 0


def cmd_oracle(args) -> int:
    params = _params(args)
    sites = _parse_sites(args.sites, params)
    basis = fo.FockBasis.build(params)
    if basis.dim > fo.DIM_CAP:
        raise ConfigError(
            f"Fock dimension {basis.dim} too large for exact diagonalization"
        )
    prop = pr.Propagator(params)
    coeffs = pt.coefficients(prop, sites, budget=args.budget)
    dconst = pr.decay_D(prop, 1e-7)
    radius = 1.0 / (27.0 * dconst)
    grid = np.linspace(-radius / 10.0, radius / 10.0, 9)
    fit = fo.coeff_fit(basis, params, sites, grid)
    u_values = _parse_u_list(args) or [radius / 2.0]
    rows = []
    for u in u_values:
        exact = fo.correlation_exact(basis, params, u, sites)
        series = pt.series_eval(coeffs, u)
        rows.append({
            "U": u,
            "exact": exact,
            "series": series,
            "abs_diff": abs(exact - series),
            "remainder_bound": bd.remainder_bound(2, abs(u), dconst),
        })
    report = {
        "command": "oracle",
        "params": _param_dict(params),
        "D": dconst,
        "radius": radius,
        "a0": coeffs.a0, "a1": coeffs.a1, "a2": coeffs.a2,
        "fit_a0": fit.a0, "fit_a1": fit.a1, "fit_a2": fit.a2,
    }
    _emit(report, rows, args)
    return 0


# ---------------------------------------------------------------------------
# verification suite


def _check_det_identity(seed: int) -> dict:
    worst = 0.0
    for d, eL in ((1, 2), (2, 2)):
        params = ModelParams(d=d, L=eL, t=1.0, tprime=0.3, mu=0.2, beta=1.0)
        prop = pr.Propagator(params)
        closed = pr.det_covariance_closed(params)
        for bh in (4, 8):
            det = pr.det_covariance(
                pr.build_discrete_covariance(prop, bh / params.beta)
            )
            worst = max(worst, abs(det - closed) / abs(closed))
    return {"name": "det_identity", "passed": worst < 1e-10, "worst_rel": worst}


def _check_car(seed: int) -> dict:
    params = ModelParams(d=1, L=2, t=1.0, tprime=0.0, mu=0.5, beta=1.0)
    basis = fo.FockBasis.build(params)
    ops = [
        fo.annihilation(basis, site, spin)
        for site in ((0,), (1,))
        for spin in (0, 1)
    ]
    eye = np.eye(basis.dim)
    worst = 0.0
    for i, a in enumerate(ops):
        for j, b in enumerate(ops):
            anti = (a.mat @ b.mat + b.mat @ a.mat).toarray()
            worst = max(worst, np.max(np.abs(anti)))
            mixed = (a.mat @ b.dagger().mat + b.dagger().mat @ a.mat).toarray()
            target = eye if i == j else 0.0
            worst = max(worst, np.max(np.abs(mixed - target)))
    return {"name": "car", "passed": worst < 1e-12, "worst": worst}


def _check_det_bound(seed: int) -> dict:
    params = ModelParams(d=1, L=2, t=1.0, tprime=0.0, mu=0.3, beta=2.0)
    prop = pr.Propagator(params)
    worst_margin = -1.0
    ok = True
    for i in range(50):
        n = 1 + (i % 4)
        val = pr.determinant_bound_sample(prop, n, seed + i)
        ok = ok and val <= 4.0**n
        worst_margin = max(worst_margin, val / 4.0**n)
    return {"name": "determinant_bound", "passed": ok, "worst_ratio": worst_margin}


def _check_tree_count(seed: int) -> dict:
    ok = all(bd.tree_count(n) == bd.tree_count_bruteforce(n) for n in range(1, 6))
    return {"name": "tree_count", "passed": ok}


def _check_f_function(seed: int) -> dict:
    boundary = abs(bd.f_closed(bd.F_RADIUS) - 81.0 / 16.0)
    worst = boundary
    for x in np.linspace(0.005, 0.12, 24):
        worst = max(worst, abs(bd.f_series(float(x), 200) - bd.f_closed(float(x))))
    return {"name": "f_function", "passed": worst < 1e-10, "worst": worst}


def _check_p_h(seed: int) -> dict:
    params = ModelParams(d=1, L=1, t=0.0, tprime=0.0, mu=0.0, beta=1.0)
    prop = pr.Propagator(params)
    basis = fo.FockBasis.build(params)
    try:
        gc.convergence_study(prop, basis, params, 0.1, [4.0, 8.0, 16.0], 4)
    except gc.ConvergenceError as exc:
        return {"name": "p_h_convergence", "passed": False, "detail": str(exc)}
    return {"name": "p_h_convergence", "passed": True}


def _check_oracle_fit(seed: int) -> dict:
    params = ModelParams(d=1, L=2, t=1.0, tprime=0.0, mu=0.0, beta=1.0)
    prop = pr.Propagator(params)
    basis = fo.FockBasis.build(params)
    sites = pt.SiteQuad.on(params, (0,), (0,), (0,), (0,))
    coeffs = pt.coefficients(prop, sites)
    dconst = pr.decay_D(prop, 1e-7)
    radius = 1.0 / (27.0 * dconst)
    fit = fo.coeff_fit(
        basis, params, sites, np.linspace(-radius / 10, radius / 10, 9)
    )
    rels = (
        abs(fit.a0 - coeffs.a0) / abs(coeffs.a0),
        abs(fit.a1 - coeffs.a1) / abs(coeffs.a1),
        abs(fit.a2 - coeffs.a2) / abs(coeffs.a2),
    )
    passed = rels[0] < 1e-6 and rels[1] < 1e-4 and rels[2] < 1e-3
    return {
        "name": "oracle_coeff_fit",
        "passed": passed,
        "rel_a0": rels[0], "rel_a1": rels[1], "rel_a2": rels[2],
    }


VERIFY_CHECKS = (
    _check_det_identity,
    _check_car,
    _check_det_bound,
    _check_tree_count,
    _check_f_function,
    _check_p_h,
    _check_oracle_fit,
)


def cmd_verify(args) -> int:
    rows = [check(args.seed) for check in VERIFY_CHECKS]
    ok = all(r["passed"] for r in rows)
    report = {"command": "verify", "seed": args.seed, "passed": ok}
    _emit(report, rows, args)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hubbard-pert",
        description="Second-order perturbation series of the Hubbard 4-point "
        "function with rigorous remainder bounds",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="compute a0, a1, a2 and the series value")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--sites", required=True,
                   help="flat integer coordinates of x1 x2 y1 y2")
    p.add_argument("--U", type=float, default=None)
    p.add_argument("--U-list", dest="U_list", default=None)
    p.add_argument("--checkpoint", default=None,
                   help="JSON file for resumable a2 term sums")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("error-table", help="remainder bounds for a list of U")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--U", type=float, default=None)
    p.add_argument("--U-list", dest="U_list", default=None)
    p.add_argument("--D", type=float, default=None)
    p.add_argument("--prop51", action="store_true",
                   help="use the closed-form d=2 decay-constant bound")
    p.add_argument("--m", type=int, default=2)
    p.set_defaults(func=cmd_error_table)

    p = sub.add_parser("bounds", help="decay constant, radius, per-order bounds")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--D", type=float, default=None)
    p.add_argument("--prop51", action="store_true")
    p.add_argument("--n-max", dest="n_max", type=int, default=5)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("covariance", help="discrete covariance diagnostics")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--h", type=float, required=True)
    p.set_defaults(func=cmd_covariance)

    p = sub.add_parser("verify", help="run the cross-validation suite")
    _add_common_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="exact diagonalization vs the series")
    _add_model_args(p)
    _add_common_args(p)
    p.add_argument("--sites", required=True)
    p.add_argument("--U", type=float, default=None)
    p.add_argument("--U-list", dest="U_list", default=None)
    p.set_defaults(func=cmd_oracle)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (pt.CostGuardError, gc.CostGuardError) as exc:
        print(f"cost guard: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
