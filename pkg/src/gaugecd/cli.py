"""Command-line frontend: model functions, Heisenberg queries and verification suites.

Exit status: 0 success (or passed check), 1 failed check, 2 usage error,
3 solver error.  Grids use the syntax ``a:b:n`` (n points, endpoints
included); lists are comma separated; ``inf`` is accepted wherever a number
is.  The default seed comes from the GAUGECD_SEED environment variable and
is overridden by ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import distortion, heisenberg as heis, lq_models, verify
from .batch_rk import IntegrationError
from .report import dumps, format_number

SEED_ENV = "GAUGECD_SEED"
FAMILIES = ("row", "riemannian", "sasakian", "two-columns", "heisenberg", "fat")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- argument types

def parse_values(text):
    """A grid ``a:b:n``, a comma-separated list, or a single number."""
    text = text.strip()
    if text.count(":") == 2:
        a, b, n = text.split(":")
        try:
            n = int(n)
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid size must be an integer: {text!r}")
        if n < 1:
            raise argparse.ArgumentTypeError("grid needs at least one point")
        return np.linspace(float(a), float(b), n)
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number, list or a:b:n grid: {text!r}")


def parse_point(text):
    vals = parse_values(text)
    if vals.size != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z: {text!r}")
    return vals


def parse_box(text):
    vals = parse_values(text)
    if vals.size != 6:
        raise argparse.ArgumentTypeError(f"expected x0,x1,y0,y1,z0,z1: {text!r}")
    return tuple((float(vals[2 * i]), float(vals[2 * i + 1])) for i in range(3))


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


# ---------------------------------------------------------------- output

def table_text(columns, rows, fmt):
    if fmt == "json":
        return dumps({"columns": list(columns), "records": [dict(zip(columns, r)) for r in rows]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_number(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in r])
    return buf.getvalue()


def emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------- model

def model_function(family, params, d):
    p = [] if params is None else [float(v) for v in params]

    def need(k):
        if len(p) != k:
            raise UsageError(f"family {family} takes {k} parameter(s), got {len(p)}")

    if family == "heisenberg":
        return distortion.heisenberg_s(d)
    if family == "fat":
        need(6)
        return distortion.compose_fat_s(int(p[0]), int(p[1]), *p[2:])
    if family == "riemannian":
        need(1)
        kappa = p
    elif family == "sasakian":
        need(1)
        kappa = [p[0], 0.0]
    elif family == "two-columns":
        need(2)
        kappa = p
    else:
        if not p:
            raise UsageError("family row needs --params kappa_1,...,kappa_ell")
        kappa = p
    ell = len(kappa)
    if family == "row":
        model = lq_models.build_row_model(ell, kappa)
        ev = lambda th: lq_models.s_det(model, np.abs(np.asarray(th, dtype=float)))
    else:
        name = family.replace("-", "_")
        args = kappa[:1] if family == "sasakian" else kappa
        ev = lambda th, name=name, args=args: lq_models.closed_form_s(name, args, np.abs(np.asarray(th, dtype=float)))
    first_zero = distortion.kappa_conjugate_time(kappa)
    return distortion.ModelFunction(ev, float(ell * ell), first_zero, name=family)


def cmd_model_s(a):
    s = model_function(a.family, a.params, a.d)
    ts = a.t_grid
    vals = np.atleast_1d(s(ts))
    return table_text(("t", "s"), list(zip(ts, vals)), a.format), EXIT_OK


def cmd_model_beta(a):
    if a.family == "heisenberg":
        beta = lambda t, th: distortion.beta_heisenberg(a.d, t, th)
    else:
        beta = distortion.make_beta(model_function(a.family, a.params, a.d))
    rows = [(t, th, float(beta(t, th))) for t in a.t for th in a.theta]
    return table_text(("t", "theta", "beta"), rows, a.format), EXIT_OK


def cmd_model_conjugate_time(a):
    kappa = a.kappa
    ell = a.ell if a.ell is not None else kappa.size
    model = lq_models.build_row_model(ell, kappa)
    ct = lq_models.conjugate_time(model, horizon=a.horizon)
    return format_number(ct.value) + "\n", EXIT_OK


def cmd_model_dom(a):
    phi, dirs = distortion.dom_directions(a.directions)
    D = distortion.dom_region(distortion.three_d_model(a.K), dirs)
    return table_text(("phi", "D_theta"), list(zip(phi, D)), a.format), EXIT_OK


# ---------------------------------------------------------------- heis

def _solve_pair(a):
    rel = heis.relative_arrays(a.src[None, :], a.dst[None, :])
    res = heis.solve_covector_batch(a.eps, rel, tol=a.tol)
    st = int(res.status[0])
    if st != heis.OK:
        raise heis.ShootingError(f"covector shooting failed: {heis.STATUS_NAMES[st]}", st)
    return res.covectors[0], float(res.residual[0])


def cmd_heis(a):
    lam, resid = _solve_pair(a)
    rho, pz = float(math.hypot(lam[0], lam[1])), float(lam[2])
    if a.query == "distance":
        rows, cols = [(a.eps, math.sqrt(2.0 * heis.hamiltonian_array(a.eps, lam[None, :])[0]))], ("eps", "distance")
    elif a.query == "covector":
        cols = ("eps", "px", "py", "pz", "rho", "phi", "residual")
        rows = [(a.eps, lam[0], lam[1], pz, rho, math.atan2(lam[1], lam[0]), resid)]
    elif a.query == "gauge":
        rows, cols = [(a.eps, abs(pz))], ("eps", "gauge")
    elif a.query == "beta-true":
        ts = np.asarray(a.t, dtype=float)
        tb = heis.true_beta_covectors(a.eps, lam[None, :], ts)[:, 0]
        rows, cols = list(zip([a.eps] * ts.size, ts, tb)), ("eps", "t", "beta_true")
    else:
        cols = ("eps", "t", "rho", "pz", "beta_closed")
        rows = [(a.eps, t, rho, pz, heis.beta_canvar_closed(a.eps, float(t), rho, pz)) for t in a.t]
    return table_text(cols, rows, a.format), EXIT_OK


# ---------------------------------------------------------------- verify

def _mc(a, box):
    return verify.MonteCarloConfig(a.seed, a.samples, box, a.workers)


def _report(rep, a):
    if a.format == "csv":
        return rep.to_csv()
    return rep.to_json()


def cmd_verify(a):
    suite = a.suite
    if suite == "comparison":
        rng = np.random.default_rng(a.seed)
        grid = [(r, p) for r in a.rho for p in a.pz]
        phis = rng.uniform(-math.pi, math.pi, size=len(grid))
        covs = np.array([(r * math.cos(f), r * math.sin(f), p) for (r, p), f in zip(grid, phis)])
        targets = heis.exp_map_batch(a.eps, covs)
        rep = verify.comparison_sweep(a.eps, targets, a.t_grid, tol=a.tol)
    elif suite == "mcp":
        rep = verify.mcp_entropy_check(a.eps, a.x_bar, a.box, a.t_grid, _mc(a, a.box), tol=a.tol, model=a.model)
    elif suite == "hbm":
        rep = verify.half_brunn_minkowski_check(a.x_bar, a.box, a.t_grid, _mc(a, a.box), eps=a.eps)
    elif suite == "bishop-gromov":
        box = verify.bishop_gromov_box(a.rho)
        rep = verify.bishop_gromov_check(a.x_bar, a.rho, a.r_grid, _mc(a, box))
    elif suite == "gauge-diameter":
        h = 0.5 * a.box_side
        rep = verify.gauge_diameter_check(a.x_bar, _mc(a, ((-h, h),) * 3), eps=a.eps)
    elif suite == "geodim":
        ts = a.t_grid if a.t_grid is not None else np.logspace(-2, math.log10(0.2), 8)
        rep = verify.geodesic_dimension_fit(a.x_bar, a.box, ts, eps=a.eps)
    else:
        pairs = verify.sample_pairs(a.seed, a.samples)
        rep = verify.canvar_limits_check(a.eps_down, a.eps_up, pairs)
    text = _report(rep, a)
    print(rep.line(), file=sys.stderr)
    return text, EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------- parser

VERIFY_DEFAULTS = {
    "comparison": {"samples": 0},
    "mcp": {"samples": 2000, "t_grid": "0.1:0.9:9"},
    "hbm": {"samples": 2000, "t_grid": "0.1:1:10"},
    "bishop-gromov": {"samples": 1_000_000},
    "gauge-diameter": {"samples": 100_000},
    "geodim": {"samples": 0},
    "canvar": {"samples": 200},
}


def build_parser():
    p = argparse.ArgumentParser(prog="gaugecd", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="group", required=True)

    def common(q):
        q.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
        q.add_argument("--out", default=None, help="output path (default standard output)")

    m = sub.add_parser("model", help="model functions and distortion coefficients")
    msub = m.add_subparsers(dest="command", required=True)
    for name in ("s", "beta"):
        q = msub.add_parser(name)
        q.add_argument("--family", choices=FAMILIES, required=True)
        q.add_argument("--params", type=parse_values, default=None,
                       help="kappa values (row, riemannian, sasakian, two-columns) or n,k,C,ka,kb,kc (fat)")
        q.add_argument("--d", type=int, default=1, help="Heisenberg dimension parameter (default 1)")
        if name == "s":
            q.add_argument("--t-grid", type=parse_values, default=parse_values("0:1:11"))
        else:
            q.add_argument("--theta", type=parse_values, required=True)
            q.add_argument("--t", type=parse_values, default=parse_values("0:1:11"))
        common(q)
    q = msub.add_parser("conjugate-time")
    q.add_argument("--ell", type=int, default=None)
    q.add_argument("--kappa", type=parse_values, required=True)
    q.add_argument("--horizon", type=float, default=50.0)
    q = msub.add_parser("dom")
    q.add_argument("--K", type=float, required=True)
    q.add_argument("--directions", type=int, default=32)
    common(q)

    h = sub.add_parser("heis", help="Heisenberg geodesic queries")
    hsub = h.add_subparsers(dest="query", required=True)
    for name in ("distance", "covector", "gauge", "beta-true", "beta-closed"):
        q = hsub.add_parser(name)
        q.add_argument("--eps", type=float, default=0.0)
        q.add_argument("--from", dest="src", type=parse_point, default=np.zeros(3))
        q.add_argument("--to", dest="dst", type=parse_point, required=True)
        q.add_argument("--tol", type=float, default=1e-10)
        if name.startswith("beta"):
            q.add_argument("--t", type=parse_values, default=parse_values("0.1:0.9:9"))
        common(q)

    v = sub.add_parser("verify", help="verification suites")
    vsub = v.add_subparsers(dest="suite", required=True)
    for name, dflt in VERIFY_DEFAULTS.items():
        q = vsub.add_parser(name)
        q.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
        q.add_argument("--samples", type=int, default=dflt["samples"])
        q.add_argument("--workers", type=int, default=1)
        q.add_argument("--eps", type=float, default=0.0)
        q.add_argument("--tol", type=float, default=1e-3)
        q.add_argument("--x-bar", type=parse_point, default=np.zeros(3))
        if name == "comparison":
            q.add_argument("--rho", type=parse_values, default=parse_values("0.5,2"))
            q.add_argument("--pz", type=parse_values, default=parse_values("0.5,2,5"))
            q.add_argument("--t-grid", type=parse_values, default=parse_values("0.2:0.9:8"))
        if name in ("mcp", "hbm", "geodim"):
            q.add_argument("--box", type=parse_box, default=parse_box("1.6,2.4,0.1,0.9,-0.1,0.7"))
            q.add_argument("--t-grid", type=parse_values,
                           default=parse_values(dflt["t_grid"]) if "t_grid" in dflt else None)
        if name == "mcp":
            q.add_argument("--model", choices=("heisenberg", "true"), default="heisenberg")
        if name == "bishop-gromov":
            q.add_argument("--rho", type=float, default=3.0)
            q.add_argument("--r-grid", type=parse_values,
                           default=np.array([0.5 * math.pi, math.pi, 1.5 * math.pi]))
        if name == "gauge-diameter":
            q.add_argument("--box-side", type=float, default=6.0)
        if name == "canvar":
            q.add_argument("--eps-down", type=parse_values, default=parse_values("1,0.3,0.1,0.03"))
            q.add_argument("--eps-up", type=parse_values, default=parse_values("1,3,10,30"))
        common(q)
        q.set_defaults(format="json")
    return p


DISPATCH = {
    ("model", "s"): cmd_model_s,
    ("model", "beta"): cmd_model_beta,
    ("model", "conjugate-time"): cmd_model_conjugate_time,
    ("model", "dom"): cmd_model_dom,
}


def run(argv=None):
    """Parse ``argv``, run the command and return the exit status."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if a.group == "verify":
            if a.seed is None:
                a.seed = default_seed()
            fn = cmd_verify
        elif a.group == "heis":
            fn = cmd_heis
        else:
            fn = DISPATCH[(a.group, a.command)]
        text, status = fn(a)
        emit(text, getattr(a, "out", None))
        return status
    except (heis.ShootingError, lq_models.ConjugateTimeError, IntegrationError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())
