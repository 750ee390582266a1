"""Numerical checks of comparison inequalities and limits on the Heisenberg group.

Every check returns a VerificationReport.  Monte Carlo checks draw their
samples from per-worker random streams spawned from one seed, evaluate each
worker's chunk independently and reduce the chunks in worker order, so a
report depends only on (seed, samples, worker_count).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import distortion, heisenberg as heis
from .report import VerificationReport

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MonteCarloConfig:
    seed: int = 0
    samples: int = 10_000
    box: tuple = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
    worker_count: int = 1

    def __post_init__(self):
        if self.samples < 1 or self.worker_count < 1:
            raise ValueError("samples and worker_count must be positive")
        b = np.asarray(self.box, dtype=float)
        if b.shape != (3, 2) or np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("box must be three increasing (lo, hi) pairs")

    @property
    def volume(self):
        b = np.asarray(self.box, dtype=float)
        return float(np.prod(b[:, 1] - b[:, 0]))

    def chunk_sizes(self):
        base, extra = divmod(self.samples, self.worker_count)
        return [base + (1 if i < extra else 0) for i in range(self.worker_count)]

    def streams(self):
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(self.worker_count)]

    def sample_chunks(self):
        b = np.asarray(self.box, dtype=float)
        return [rng.uniform(b[:, 0], b[:, 1], size=(n, 3)) for rng, n in zip(self.streams(), self.chunk_sizes())]


def run_chunks(mc, fn):
    """Apply ``fn`` to each worker's sample chunk; results come back in worker order."""
    chunks = mc.sample_chunks()
    if mc.worker_count == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=mc.worker_count) as pool:
        return list(pool.map(fn, chunks))


def box_around(center, half_widths):
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_widths, dtype=float) * np.ones(3)
    return tuple((float(a - w), float(a + w)) for a, w in zip(c, h))


def model_beta(t, theta):
    """Comparison coefficient used for every eps.

    For eps = 0 this is the Heisenberg coefficient; for eps > 0 it is the
    coefficient of s(theta) = theta (2 - 2 cos theta - theta sin theta), a
    constant multiple of the same function, hence the same coefficient.
    """
    return distortion.beta_heisenberg(1, t, theta)


def _solve(eps, sources, targets, margin=1e-4):
    rel = heis.relative_arrays(np.atleast_2d(sources), np.atleast_2d(targets))
    return heis.solve_covector_batch(eps, rel, margin=margin)


def covector_targets(eps, rho_values, pz_values, phi=0.3):
    """Endpoints (from the identity) of geodesics with prescribed (rho, p_z); returns (targets, grid)."""
    grid = np.array([(r, p) for r in rho_values for p in pz_values], dtype=float)
    covs = np.column_stack([grid[:, 0] * math.cos(phi), grid[:, 0] * math.sin(phi), grid[:, 1]])
    return heis.exp_map_batch(eps, covs), grid


# ---------------------------------------------------------------- comparison

def comparison_sweep(eps, targets, t_grid, tol=1e-3, sources=None, require_sharp=None):
    """Check true_beta(x, y, t) >= beta_model_t(G(x, y)) - tol pointwise.

    Also checks that the quotient true / model is non-increasing in t and,
    at eps = 0 by default, that it equals 1 within tol (sharpness).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.zeros_like(targets) if sources is None else np.atleast_2d(sources)
    ts = np.sort(np.asarray(t_grid, dtype=float))
    if require_sharp is None:
        require_sharp = eps == 0.0
    res = _solve(eps, sources, targets)
    ok = res.status == heis.OK
    covs = res.covectors[ok]
    tb = heis.true_beta_covectors(eps, covs, ts) if covs.size else np.zeros((ts.size, 0))
    records = []
    min_def, max_sharp, mono_viol = math.inf, 0.0, 0
    for j, lam in enumerate(covs):
        rho, pz = math.hypot(lam[0], lam[1]), float(lam[2])
        bm = model_beta(ts, abs(pz))
        ratio = tb[:, j] / bm
        d = tb[:, j] - bm
        min_def = min(min_def, float(np.min(d)))
        max_sharp = max(max_sharp, float(np.max(np.abs(ratio - 1.0))))
        mono_viol += int(np.sum(np.diff(ratio) > tol))
        for i, t in enumerate(ts):
            records.append({"eps": float(eps), "t": float(t), "rho": rho, "pz": pz,
                            "beta_true": float(tb[i, j]), "beta_model": float(bm[i]),
                            "ratio": float(ratio[i]), "deficit": float(d[i])})
    violations = sum(1 for r in records if r["deficit"] < -tol)
    passed = bool(ok.any()) and violations == 0 and mono_viol == 0
    if require_sharp:
        passed = passed and max_sharp <= tol
    summary = {"min_deficit": min_def, "violations": violations, "monotonicity_violations": mono_viol,
               "max_abs_ratio_minus_one": max_sharp, "solver_failures": int(np.sum(~ok)),
               "points": int(ok.sum()), "sharpness_required": bool(require_sharp)}
    return VerificationReport("comparison", passed, tol,
                              ("eps", "t", "rho", "pz", "beta_true", "beta_model", "ratio"), records, summary)


# ---------------------------------------------------------------- MCP entropy

def _log_betas(eps, x_bar, ys, ts, model):
    res = _solve(eps, np.broadcast_to(x_bar, ys.shape), ys)
    ok = res.status == heis.OK
    covs = res.covectors[ok]
    lt = np.log(heis.true_beta_covectors(eps, covs, ts)) if covs.size else np.zeros((ts.size, 0))
    if model == "true":
        lm = lt.copy()
    else:
        G = np.abs(covs[:, 2])
        lm = np.log(model_beta(ts[:, None], G[None, :]))
    return lt, lm, int(np.sum(~ok))


def mcp_entropy_check(eps, x_bar, mu1_box, t_grid, mc, tol=1e-3, model="heisenberg"):
    """Entropy form of the measure contraction inequality for a Dirac source.

    With mu_0 the Dirac mass at x_bar and mu_1 uniform on the box,
    Ent(mu_t) = Ent(mu_1) - E[log true_beta(x_bar, y, t)].  The check is
    E[log true_beta] >= E[log beta_model(G)] - tol - 3 sigma, where sigma is
    the CLT standard error of the paired difference.  ``model="true"`` uses
    true_beta on both sides, for which the deficit is exactly zero.
    """
    if model not in ("heisenberg", "true"):
        raise ValueError("model must be 'heisenberg' or 'true'")
    mc = MonteCarloConfig(mc.seed, mc.samples, mu1_box, mc.worker_count)
    ts = np.asarray(t_grid, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    parts = run_chunks(mc, lambda ys: _log_betas(eps, x_bar, ys, ts, model))
    lt = np.concatenate([p[0] for p in parts], axis=1)
    lm = np.concatenate([p[1] for p in parts], axis=1)
    failures = sum(p[2] for p in parts)
    n = lt.shape[1]
    if n < 2:
        raise ValueError("insufficient admissible samples")
    ent1 = -math.log(mc.volume)
    records, passed, min_def = [], True, math.inf
    for i, t in enumerate(ts):
        lhs, rhs = float(np.mean(lt[i])), float(np.mean(lm[i]))
        diff = lt[i] - lm[i]
        deficit = float(np.mean(diff))
        sigma = float(np.std(diff, ddof=1) / math.sqrt(n))
        ok = deficit >= -(tol + 3.0 * sigma)
        passed &= ok
        min_def = min(min_def, deficit)
        records.append({"t": float(t), "lhs": lhs, "rhs": rhs, "deficit": deficit, "sigma": sigma,
                        "entropy_t": ent1 - lhs, "entropy_1": ent1, "pass": bool(ok)})
    summary = {"min_deficit": min_def, "samples": n, "solver_failures": failures, "model": model,
               "confidence_radius": max(3.0 * r["sigma"] for r in records)}
    return VerificationReport("mcp", bool(passed), tol,
                              ("t", "lhs", "rhs", "deficit", "sigma", "entropy_t", "entropy_1"), records, summary)


# ---------------------------------------------------------------- half Brunn-Minkowski

def half_brunn_minkowski_check(x_bar, box_A, t_grid, mc, eps=0.0):
    """vol(A_t) = int_A true_beta(x_bar, y, t) dy against inf_A beta_model(G) vol(A)."""
    mc = MonteCarloConfig(mc.seed, mc.samples, box_A, mc.worker_count)
    ts = np.asarray(t_grid, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)

    def chunk(ys):
        res = _solve(eps, np.broadcast_to(x_bar, ys.shape), ys)
        ok = res.status == heis.OK
        covs = res.covectors[ok]
        tb = heis.true_beta_covectors(eps, covs, ts)
        bm = model_beta(ts[:, None], np.abs(covs[:, 2])[None, :])
        return tb, bm, int(np.sum(~ok))

    parts = run_chunks(mc, chunk)
    tb = np.concatenate([p[0] for p in parts], axis=1)
    bm = np.concatenate([p[1] for p in parts], axis=1)
    n = tb.shape[1]
    V = mc.volume
    records, passed, min_def = [], True, math.inf
    for i, t in enumerate(ts):
        vol_t = V * float(np.mean(tb[i]))
        sigma = V * float(np.std(tb[i], ddof=1)) / math.sqrt(n)
        rhs = float(np.min(bm[i])) * V
        deficit = vol_t - rhs
        ok = deficit >= -3.0 * sigma
        passed &= ok
        min_def = min(min_def, deficit)
        records.append({"t": float(t), "vol_At": vol_t, "rhs": rhs, "deficit": deficit, "sigma": sigma})
    summary = {"min_deficit": min_def, "samples": n, "solver_failures": sum(p[2] for p in parts),
               "volume_A": V}
    return VerificationReport("hbm", bool(passed), 0.0, ("t", "vol_At", "rhs", "deficit", "sigma"),
                              records, summary)


# ---------------------------------------------------------------- Bishop-Gromov

def heisenberg_weight_integral(r):
    """int_0^r s(t)/t dt for the Heisenberg model function, by quadrature."""
    s = distortion.heisenberg_s(1)
    val, _ = integrate.quad(lambda t: float(s(t)) / t if t > 0 else 0.0, 0.0, r, epsabs=1e-13, epsrel=1e-12)
    return val


def bishop_gromov_check(x_bar, rho, r_grid, mc, r_zero=1e-6):
    """Monotonicity of gauge-ball volumes normalised by int_0^r s(t)/t dt.

    v(r) = vol{y : G(x_bar, y) <= r, d(x_bar, y) <= rho} is estimated by
    rejection sampling in ``mc.box`` (interpreted relative to x_bar; Lebesgue
    measure is invariant under left translation).  Consecutive quotients
    (v(r) - v(0+)) / I(r) must not increase beyond three standard errors of
    their paired difference.
    """
    rs = np.sort(np.asarray(r_grid, dtype=float))
    if np.any(rs <= 0) or np.any(rs >= TWO_PI):
        raise ValueError("r_grid must lie in (0, 2pi)")
    integrals = np.array([heisenberg_weight_integral(r) for r in rs])
    V = mc.volume
    x_bar = np.asarray(x_bar, dtype=float)

    def chunk(us):
        ys = heis.mul_arrays(np.broadcast_to(x_bar, us.shape), us)
        rel = heis.relative_arrays(np.broadcast_to(x_bar, ys.shape), ys)
        d, pz, inside = heis.sub_riemannian_lookup(rel)
        G = np.where(inside, np.abs(pz), TWO_PI)
        inball = inside & (d <= rho)
        ind = np.array([inball & (G <= r) for r in rs], dtype=float)
        zero = inball & (G <= r_zero)
        return ind, zero.astype(float), int(np.sum(~inside))

    parts = run_chunks(mc, chunk)
    ind = np.concatenate([p[0] for p in parts], axis=1)
    zero = np.concatenate([p[1] for p in parts])
    n = ind.shape[1]
    v0 = V * float(np.mean(zero))
    vols = V * ind.mean(axis=1)
    sig = V * ind.std(axis=1, ddof=1) / math.sqrt(n)
    quot = (vols - v0) / integrals
    records, passed, inconclusive = [], True, 0
    for i, r in enumerate(rs):
        status = "ok"
        if vols[i] <= 3.0 * sig[i] or vols[i] - v0 <= 3.0 * sig[i]:
            status = "inconclusive"
            inconclusive += 1
        records.append({"r": float(r), "volume": float(vols[i]), "sigma": float(sig[i]),
                        "integral": float(integrals[i]), "quotient": float(quot[i]), "status": status})
    steps = []
    for i in range(len(rs) - 1):
        diff = V * ((ind[i + 1] - zero) / integrals[i + 1] - (ind[i] - zero) / integrals[i])
        sd = float(np.std(diff, ddof=1) / math.sqrt(n))
        inc = float(quot[i + 1] - quot[i])
        ok = inc <= 3.0 * sd
        conclusive = records[i]["status"] == "ok" and records[i + 1]["status"] == "ok"
        if conclusive:
            passed &= ok
        steps.append({"r_lo": float(rs[i]), "r_hi": float(rs[i + 1]), "increase": inc,
                      "three_sigma": 3.0 * sd, "ok": bool(ok), "conclusive": bool(conclusive)})
    summary = {"rho": float(rho), "v_zero": v0, "samples": n, "near_axis_excluded": sum(p[2] for p in parts),
               "inconclusive": inconclusive, "steps": steps,
               "max_increase_over_3sigma": max((s["increase"] / s["three_sigma"] for s in steps
                                                if s["three_sigma"] > 0), default=0.0)}
    if inconclusive == len(rs):
        passed = False
    return VerificationReport("bishop-gromov", bool(passed), 0.0,
                              ("r", "volume", "sigma", "integral", "quotient", "status"), records, summary)


def bishop_gromov_box(rho, pad=1.02):
    """Box (relative to x_bar) containing the sub-Riemannian ball of radius rho."""
    zmax = pad * rho * rho / (4.0 * math.pi)
    return ((-pad * rho, pad * rho), (-pad * rho, pad * rho), (-zmax, zmax))


# ---------------------------------------------------------------- gauge diameter

def gauge_diameter_check(x_bar, mc, eps=0.0, margin=1e-4):
    """Count sampled targets whose gauge reaches 2 pi or that have no admissible covector."""
    x_bar = np.asarray(x_bar, dtype=float)

    def chunk(us):
        ys = heis.mul_arrays(np.broadcast_to(x_bar, us.shape), us)
        if eps == 0.0:
            res = heis.solve_covector_lookup(heis.relative_arrays(np.broadcast_to(x_bar, ys.shape), ys),
                                             margin=margin)
        else:
            res = _solve(eps, np.broadcast_to(x_bar, ys.shape), ys, margin=margin)
        G = np.abs(res.covectors[:, 2])
        st = res.status
        bad = (st == heis.OK) & (G >= TWO_PI)
        fail = (st == heis.NONCONVERGED) | (st == heis.AMBIGUOUS)
        rec = [{"x": float(y[0]), "y": float(y[1]), "z": float(y[2]), "gauge": float(g),
                "status": heis.STATUS_NAMES[int(s)]}
               for y, g, s, b, f in zip(ys, G, st, bad, fail) if b or f]
        return (int(bad.sum()), int(fail.sum()), int(np.sum(st == heis.ON_AXIS)),
                int(np.sum(st == heis.OK)), float(np.nanmax(np.where(st == heis.OK, G, np.nan))), rec)

    parts = run_chunks(mc, chunk)
    violations = sum(p[0] for p in parts)
    failures = sum(p[1] for p in parts)
    records = [r for p in parts for r in p[5]]
    summary = {"violations": violations, "solver_failures": failures,
               "near_axis_excluded": sum(p[2] for p in parts), "admissible": sum(p[3] for p in parts),
               "max_gauge": max(p[4] for p in parts), "margin": margin, "bound": TWO_PI}
    return VerificationReport("gauge-diameter", violations == 0 and failures == 0, 0.0,
                              ("x", "y", "z", "gauge", "status"), records, summary)


# ---------------------------------------------------------------- geodesic dimension

def geodesic_dimension_fit(x_bar, box_A, t_grid_small, eps=0.0, nodes=6, expected=None, band=0.1):
    """Log-log slope of vol(A_t) = int_A true_beta(x_bar, y, t) dy as t -> 0.

    The integral uses tensor Gauss-Legendre quadrature with ``nodes`` points
    per axis.  The expected slope is 5 for eps = 0 and 3 for eps > 0.
    """
    ts = np.asarray(t_grid_small, dtype=float)
    if np.any(ts <= 0) or np.any(ts > 0.2):
        raise ValueError("t_grid_small must lie in (0, 0.2]")
    if expected is None:
        expected = 5.0 if eps == 0.0 else 3.0
    b = np.asarray(box_A, dtype=float)
    g, w = np.polynomial.legendre.leggauss(nodes)
    axes = [0.5 * (lo + hi) + 0.5 * (hi - lo) * g for lo, hi in b]
    wts = [0.5 * (hi - lo) * w for lo, hi in b]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", *wts).ravel()
    x_bar = np.asarray(x_bar, dtype=float)
    res = _solve(eps, np.broadcast_to(x_bar, P.shape), P)
    if np.any(res.status != heis.OK):
        raise heis.ShootingError("quadrature node off the admissible set")
    tb = heis.true_beta_covectors(eps, res.covectors, ts)
    vols = tb @ W
    A = np.column_stack([np.log(ts), np.ones_like(ts)])
    coef, *_ = np.linalg.lstsq(A, np.log(vols), rcond=None)
    resid = np.log(vols) - A @ coef
    dof = max(len(ts) - 2, 1)
    cov = np.linalg.inv(A.T @ A) * float(resid @ resid) / dof
    slope, se = float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))
    records = [{"eps": float(eps), "t": float(t), "volume": float(v)} for t, v in zip(ts, vols)]
    G = np.abs(res.covectors[:, 2])
    summary = {"slope": slope, "standard_error": se, "expected": expected, "band": band,
               "gauge_min": float(G.min()), "gauge_max": float(G.max())}
    return VerificationReport("geodim", abs(slope - expected) <= band, band, ("eps", "t", "volume"),
                              records, summary)


# ---------------------------------------------------------------- canonical variation

def canvar_limits_check(eps_list_down, eps_list_up, pair_samples, beta_grid=None,
                        down_threshold=0.05, up_threshold=0.1, beta_tol=1e-9):
    """Gauge limits of the canonical variation and the monotonicity of beta in eps.

    (a) sup |G_eps - G_0| over the pairs decreases strictly along eps_list_down
        and is at most ``down_threshold`` at its last entry;
    (b) sup |G_eps| decreases strictly along eps_list_up and is at most
        ``up_threshold`` at its last entry;
    (c) beta^eps_t >= beta^0_t - beta_tol on ``beta_grid`` = (eps, t, rho, p_z) values.
    """
    pairs = np.asarray(pair_samples, dtype=float)
    src, dst = pairs[:, 0, :], pairs[:, 1, :]
    base = _solve(0.0, src, dst)
    ok0 = base.status == heis.OK
    G0 = np.abs(base.covectors[:, 2])
    records = []

    def sweep(eps_list, part, ref):
        sups = []
        for e in eps_list:
            r = _solve(float(e), src, dst)
            ok = ok0 & (r.status == heis.OK)
            G = np.abs(r.covectors[:, 2])
            dev = np.abs(G - G0)[ok] if ref else G[ok]
            sup, mean = float(np.max(dev)), float(np.mean(dev))
            sups.append(sup)
            records.append({"part": part, "eps": float(e), "sup": sup, "mean": mean,
                            "failures": int(np.sum(~ok))})
        return sups

    down = sweep(eps_list_down, "sub-riemannian", True)
    up = sweep(eps_list_up, "adiabatic", False)
    down_ok = all(b < a for a, b in zip(down, down[1:])) and down[-1] <= down_threshold
    up_ok = all(b < a for a, b in zip(up, up[1:])) and up[-1] <= up_threshold

    if beta_grid is None:
        beta_grid = [(e, t, r, p) for e in (0.5, 1.0) for t in np.arange(0.2, 0.95, 0.1)
                     for r in (0.5, 2.0) for p in (0.5, 2.0, 5.0)]
    min_gap = math.inf
    for e, t, r, p in beta_grid:
        gap = heis.beta_canvar_closed(e, t, r, p) - heis.beta_canvar_closed(0.0, t, r, p)
        min_gap = min(min_gap, gap)
    records.append({"part": "beta-monotonicity", "eps": float("nan"), "sup": float("nan"),
                    "mean": float("nan"), "failures": 0, "min_deficit": min_gap})
    mono_ok = min_gap >= -beta_tol
    summary = {"down_sups": down, "up_sups": up, "down_ok": bool(down_ok), "up_ok": bool(up_ok),
               "min_deficit": min_gap, "beta_ok": bool(mono_ok), "base_failures": int(np.sum(~ok0))}
    return VerificationReport("canvar", bool(down_ok and up_ok and mono_ok), beta_tol,
                              ("part", "eps", "sup", "mean", "failures"), records, summary)


def sample_pairs(seed, n, horizontal=(1.0, 2.0), vertical=1.0):
    """Random pairs whose relative position has planar distance in ``horizontal``."""
    rng = np.random.default_rng(seed)
    src = rng.uniform(-1.0, 1.0, size=(n, 3))
    r = rng.uniform(*horizontal, size=n)
    a = rng.uniform(-math.pi, math.pi, size=n)
    rel = np.column_stack([r * np.cos(a), r * np.sin(a), rng.uniform(-vertical, vertical, size=n)])
    dst = heis.mul_arrays(src, rel)
    return np.stack([src, dst], axis=1)
