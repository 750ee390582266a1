"""Heisenberg group H^1 and its canonical variation.

Points use exponential coordinates (x, y, z) with the group law

    (x, y, z) * (x', y', z') = (x + x', y + y', z + z' + (x y' - y x') / 2).

The left-invariant frame is X = d_x - (y/2) d_z, Y = d_y + (x/2) d_z, Z = d_z.
For eps > 0 the Riemannian metric makes {X, Y, eps Z} orthonormal; eps = 0 is
the sub-Riemannian (Carnot-Caratheodory) structure.  Covectors at the identity
are written in the frame dual to X, Y, Z, so H_eps = (p_x^2 + p_y^2 + eps^2 p_z^2) / 2.

Geodesics are obtained by integrating Hamilton's equations numerically; no
closed-form geodesic is used by the solvers in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from . import batch_rk

TWO_PI = 2.0 * math.pi
EXP_TOL = 1e-11
# absolute tolerance relative to EXP_TOL; small so short geodesics keep relative accuracy
ATOL_RATIO = 1e-3

# shooting status codes
OK = 0
NONCONVERGED = 1
ON_AXIS = 2
AMBIGUOUS = 3
DEGENERATE = 4

STATUS_NAMES = {
    OK: "ok",
    NONCONVERGED: "nonconverged",
    ON_AXIS: "on-axis",
    AMBIGUOUS: "ambiguous",
    DEGENERATE: "degenerate",
}


class ShootingError(RuntimeError):
    """Covector shooting failed for a target."""

    def __init__(self, message, status=NONCONVERGED):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class HeisenbergPoint:
    x: float
    y: float
    z: float

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class HeisenbergCovector:
    """Covector at the identity in the frame dual to X, Y, Z."""

    px: float
    py: float
    pz: float

    @property
    def rho(self):
        return math.hypot(self.px, self.py)

    @property
    def phi(self):
        return math.atan2(self.py, self.px)

    @classmethod
    def from_cylindrical(cls, phi, rho, pz):
        return cls(rho * math.cos(phi), rho * math.sin(phi), pz)

    def as_array(self):
        return np.array([self.px, self.py, self.pz], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def scaled(self, s):
        return HeisenbergCovector(s * self.px, s * self.py, s * self.pz)


@dataclass(frozen=True)
class CanonicalVariation:
    eps: float = 0.0

    def __post_init__(self):
        if not (self.eps >= 0.0 and math.isfinite(self.eps)):
            raise ValueError("eps must be a finite nonnegative number")

    def hamiltonian(self, lam):
        a = lam.as_array() if isinstance(lam, HeisenbergCovector) else np.asarray(lam, dtype=float)
        return hamiltonian_array(self.eps, a)


def hamiltonian_array(eps, covs):
    c = np.asarray(covs, dtype=float)
    return 0.5 * (c[..., 0] ** 2 + c[..., 1] ** 2 + eps ** 2 * c[..., 2] ** 2)


def _as_eps(ev):
    return ev.eps if isinstance(ev, CanonicalVariation) else float(ev)


def _pt(p):
    return p.as_array() if isinstance(p, HeisenbergPoint) else np.asarray(p, dtype=float)


# ---------------------------------------------------------------- group

def mul_arrays(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = a + b
    out[..., 2] += 0.5 * (a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    return out


def group_mul(p, q):
    return HeisenbergPoint.from_array(mul_arrays(_pt(p), _pt(q)))


def group_inv(p):
    return HeisenbergPoint(-p.x, -p.y, -p.z)


def dilate(p, lam):
    """Carnot dilation (x, y, z) -> (lam x, lam y, lam^2 z)."""
    return HeisenbergPoint(lam * p.x, lam * p.y, lam * lam * p.z)


def relative_arrays(p, q):
    """inv(p) * q, row-wise."""
    return mul_arrays(-np.asarray(p, dtype=float), q)


# ---------------------------------------------------------------- flows

def _hamilton_rhs(eps):
    e2 = eps * eps

    def f(s):
        x, y, hx, hy, hz = s[:, 0], s[:, 1], s[:, 3], s[:, 4], s[:, 5]
        out = np.empty_like(s)
        out[:, 0] = hx
        out[:, 1] = hy
        out[:, 2] = 0.5 * (x * hy - y * hx) + e2 * hz
        out[:, 3] = -hy * hz
        out[:, 4] = hx * hz
        out[:, 5] = 0.0
        return out

    return f


def _variational_rhs(eps, ncols):
    """Hamilton's equations plus the linearised flow for ``ncols`` directions."""
    base = _hamilton_rhs(eps)
    e2 = eps * eps

    def f(s):
        n = s.shape[0]
        out = np.empty_like(s)
        out[:, :6] = base(s[:, :6])
        x, y, hx, hy, hz = s[:, 0], s[:, 1], s[:, 3], s[:, 4], s[:, 5]
        J = s[:, 6:].reshape(n, 6, ncols)
        dJ = out[:, 6:].reshape(n, 6, ncols)
        dJ[:, 0] = J[:, 3]
        dJ[:, 1] = J[:, 4]
        dJ[:, 2] = (0.5 * hy[:, None] * J[:, 0] - 0.5 * hx[:, None] * J[:, 1]
                    - 0.5 * y[:, None] * J[:, 3] + 0.5 * x[:, None] * J[:, 4] + e2 * J[:, 5])
        dJ[:, 3] = -hz[:, None] * J[:, 4] - hy[:, None] * J[:, 5]
        dJ[:, 4] = hz[:, None] * J[:, 3] + hx[:, None] * J[:, 5]
        dJ[:, 5] = 0.0
        return out

    return f


def flow_states(eps, covs, t=1.0, tol=EXP_TOL):
    """Full phase-space state (x, y, z, h_X, h_Y, h_Z) after time ``t``."""
    covs = np.atleast_2d(np.asarray(covs, dtype=float))
    s0 = np.zeros((covs.shape[0], 6))
    s0[:, 3:] = covs
    return batch_rk.integrate(_hamilton_rhs(float(eps)), s0, t, rtol=tol, atol=tol * ATOL_RATIO)


def exp_map_batch(eps, covs, t=1.0, tol=EXP_TOL):
    """Endpoints of the normal geodesics with initial covectors ``covs``."""
    return flow_states(eps, covs, t, tol)[:, :3]


def exp_map(ev, lam, t=1.0, tol=EXP_TOL):
    if t < 0:
        raise ValueError("t must be nonnegative")
    a = lam.as_array() if isinstance(lam, HeisenbergCovector) else np.asarray(lam, dtype=float)
    return HeisenbergPoint.from_array(exp_map_batch(_as_eps(ev), a[None, :], t, tol)[0])


def exp_map_with_jacobian(eps, covs, directions, tol=EXP_TOL):
    """Endpoints at time 1 and their derivatives along the given covector directions.

    ``directions`` has shape (n, 3, k); the result is (points (n, 3), J (n, 3, k)).
    """
    covs = np.atleast_2d(np.asarray(covs, dtype=float))
    directions = np.asarray(directions, dtype=float)
    n, k = covs.shape[0], directions.shape[2]
    s0 = np.zeros((n, 6 + 6 * k))
    s0[:, 3:6] = covs
    J0 = np.zeros((n, 6, k))
    J0[:, 3:6, :] = directions
    s0[:, 6:] = J0.reshape(n, -1)
    s = batch_rk.integrate(_variational_rhs(float(eps), k), s0, 1.0, rtol=tol, atol=tol * ATOL_RATIO)
    return s[:, :3], s[:, 6:].reshape(n, 6, k)[:, :3, :]


# ---------------------------------------------------------------- shooting

@dataclass
class ShootingResult:
    covectors: np.ndarray
    residual: np.ndarray
    status: np.ndarray
    hamiltonian: np.ndarray

    @property
    def ok(self):
        return self.status == OK


def _pz_grid(n=2001, edge=5e-4):
    u = np.linspace(-1.0, 1.0, n)
    return np.sign(u) * (TWO_PI - edge) * (1.0 - (1.0 - np.abs(u)) ** 2)


@lru_cache(maxsize=32)
def radial_table(eps):
    """Endpoints of exp(1, 0, p_z) over a grid of p_z in (-2pi, 2pi), built by integration.

    Returns (p_z grid, planar radius, height).  Used only to seed Newton iterations
    and, at eps = 0, for the fast dilation-invariant gauge lookup.
    """
    pz = _pz_grid()
    covs = np.column_stack([np.ones_like(pz), np.zeros_like(pz), pz])
    end = exp_map_batch(eps, covs)
    return pz, np.hypot(end[:, 0], end[:, 1]), end[:, 2]


@lru_cache(maxsize=1)
def _sr_inverse():
    """Splines for eps = 0: asinh(z / r^2) -> p_z and p_z -> planar radius at unit speed."""
    pz, a, zt = radial_table(0.0)
    w = np.arcsinh(zt / a ** 2)
    order = np.argsort(w)
    w, p_sorted = w[order], pz[order]
    keep = np.concatenate([[True], np.diff(w) > 0])
    return CubicSpline(w[keep], p_sorted[keep]), CubicSpline(pz, a), (w[keep][0], w[keep][-1])


def sub_riemannian_lookup(targets):
    """Fast (distance, p_z, inside_table) for eps = 0 targets at the identity.

    Uses the dilation invariance of z / r^2 and spline interpolation of the
    integrated radial table.  Targets too close to the z-axis fall outside the
    table and are flagged.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    p_of_w, a_of_p, (wlo, whi) = _sr_inverse()
    r = np.hypot(targets[:, 0], targets[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.arcsinh(targets[:, 2] / r ** 2)
    inside = np.isfinite(w) & (w >= wlo) & (w <= whi)
    pz = np.full(r.shape, np.nan)
    d = np.full(r.shape, np.nan)
    pz[inside] = p_of_w(w[inside])
    d[inside] = r[inside] / a_of_p(pz[inside])
    return d, pz, inside


@lru_cache(maxsize=32)
def _height_tables(eps):
    """Integrated heights of exp(rho, 0, p_z) at rho = 0 and rho = 1 on the table grid."""
    pz, a, z1 = radial_table(eps)
    z0 = exp_map_batch(eps, np.column_stack([np.zeros_like(pz), np.zeros_like(pz), pz]))[:, 2]
    return pz, a, z0, z1


def _table_seeds(eps, r, z, max_roots=4, chunk=2000):
    """Seeds (rho, p_z) from sign changes of the tabulated height mismatch.

    For each grid value p_j the start rho_j = r / a_j matches the planar radius,
    and the height is predicted by interpolating quadratically in rho between
    the integrated rho = 0 and rho = 1 tables.  Roots of the mismatch in p_z
    become Newton starts; missing seeds are NaN.
    """
    pz, a, z0, z1 = _height_tables(eps)
    n = r.shape[0]
    out = np.full((n, max_roots, 2), np.nan)
    for lo in range(0, n, chunk):
        rr = r[lo:lo + chunk, None]
        g = (rr / a[None, :]) ** 2 * (z1 - z0)[None, :] + z0[None, :] - z[lo:lo + chunk, None]
        sc = np.signbit(g[:, :-1]) != np.signbit(g[:, 1:])
        rows, cols = np.nonzero(sc)
        if rows.size == 0:
            continue
        g0, g1 = g[rows, cols], g[rows, cols + 1]
        w = np.where(g1 != g0, g0 / (g0 - g1), 0.0)
        proot = pz[cols] + w * (pz[cols + 1] - pz[cols])
        arow = np.interp(proot, pz, a)
        # rank of each root within its row
        first = np.concatenate([[True], rows[1:] != rows[:-1]])
        idx = np.arange(rows.size)
        start = np.maximum.accumulate(np.where(first, idx, 0))
        rank = idx - start
        keep = rank < max_roots
        out[lo + rows[keep], rank[keep], 0] = r[lo + rows[keep]] / arow[keep]
        out[lo + rows[keep], rank[keep], 1] = proot[keep]
    return out


def _multi_start_seeds(eps, r):
    starts = np.linspace(-TWO_PI + 0.05, TWO_PI - 0.05, 32)
    pt, at, _ = radial_table(eps)
    a = np.interp(starts, pt, at)
    rho = r[:, None] / a[None, :]
    return np.stack([rho, np.broadcast_to(starts, rho.shape)], axis=-1)


def _initial_guesses(eps, r, z, multi):
    """Candidate (rho, p_z) starts for each target; shape (n, m, 2), NaN where absent."""
    if multi:
        return _multi_start_seeds(eps, r)
    if eps == 0.0:
        d, pz, inside = sub_riemannian_lookup(np.column_stack([r, np.zeros_like(r), z]))
        pz = np.where(inside, pz, np.sign(z) * (TWO_PI - 1e-3))
        pt, at, _ = radial_table(0.0)
        a = np.interp(pz, pt, at)
        return np.stack([r / a, pz], axis=-1)[:, None, :]
    return _table_seeds(eps, r, z)


def _radial_newton(eps, r, z, guess, tol, max_iter):
    """Damped Newton on (rho, p_z) with phi = 0 matching planar radius r and height z."""
    x = guess.copy()
    n = x.shape[0]
    scale = 1.0 + np.hypot(r, z)
    conv = np.zeros(n, dtype=bool)
    dirs = np.zeros((n, 3, 2))
    dirs[:, 0, 0] = 1.0
    dirs[:, 2, 1] = 1.0
    limit = TWO_PI - 1e-12

    def residual(v, idx):
        covs = np.column_stack([v[:, 0], np.zeros(len(idx)), v[:, 1]])
        e = exp_map_batch(eps, covs)
        return np.column_stack([np.hypot(e[:, 0], e[:, 1]) - r[idx], e[:, 2] - z[idx]])

    active = np.flatnonzero(np.all(np.isfinite(x), axis=1))
    res_norm = np.full(n, np.inf)
    for _ in range(max_iter):
        if active.size == 0:
            break
        v = x[active]
        covs = np.column_stack([v[:, 0], np.zeros(active.size), v[:, 1]])
        e, J = exp_map_with_jacobian(eps, covs, dirs[active])
        R = np.hypot(e[:, 0], e[:, 1])
        F = np.column_stack([R - r[active], e[:, 2] - z[active]])
        rn = np.linalg.norm(F, axis=1)
        res_norm[active] = rn
        done = rn <= tol * scale[active]
        conv[active[done]] = True
        keep = ~done
        active, v, e, J, R, F, rn = active[keep], v[keep], e[keep], J[keep], R[keep], F[keep], rn[keep]
        if active.size == 0:
            break
        Rs = np.where(R > 0, R, 1.0)
        jac = np.empty((active.size, 2, 2))
        jac[:, 0, :] = (e[:, 0, None] * J[:, 0, :] + e[:, 1, None] * J[:, 1, :]) / Rs[:, None]
        jac[:, 1, :] = J[:, 2, :]
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        bad = ~np.isfinite(det) | (np.abs(det) < 1e-300)
        det = np.where(bad, 1.0, det)
        step = np.empty_like(F)
        step[:, 0] = (jac[:, 1, 1] * F[:, 0] - jac[:, 0, 1] * F[:, 1]) / det
        step[:, 1] = (-jac[:, 1, 0] * F[:, 0] + jac[:, 0, 0] * F[:, 1]) / det
        step[bad] = 0.0
        lam = np.ones(active.size)
        pending = np.arange(active.size)
        trial = v.copy()
        for _ in range(12):
            cand = v[pending] - lam[pending, None] * step[pending]
            cand[:, 0] = np.abs(cand[:, 0])
            cand[:, 1] = np.clip(cand[:, 1], -limit, limit)
            rt = np.linalg.norm(residual(cand, active[pending]), axis=1)
            better = rt < rn[pending]
            trial[pending[better]] = cand[better]
            pending = pending[~better]
            if pending.size == 0:
                break
            lam[pending] *= 0.5
        stuck = pending
        x[active] = trial
        # rows whose line search failed cannot make progress
        if stuck.size:
            active = np.delete(active, stuck)
    return x, conv, res_norm


def _pick(eps, r, z, guess, tol, max_iter):
    """Run Newton from every seed and keep the lowest-energy converged solution."""
    m = guess.shape[1]
    rr = np.repeat(r, m)
    zz = np.repeat(z, m)
    sol, conv, _ = _radial_newton(eps, rr, zz, guess.reshape(-1, 2), tol, max_iter)
    sol = sol.reshape(-1, m, 2)
    conv = conv.reshape(-1, m) & (np.abs(sol[:, :, 1]) < TWO_PI)
    energy = np.where(conv, 0.5 * (sol[:, :, 0] ** 2 + eps ** 2 * sol[:, :, 1] ** 2), np.inf)
    best = np.argmin(energy, axis=1)
    rows = np.arange(r.shape[0])
    chosen = sol[rows, best]
    found = np.isfinite(energy[rows, best])
    ambiguous = np.zeros(r.shape[0], dtype=bool)
    if m > 1:
        e_best = energy[rows, best][:, None]
        distinct = (np.abs(sol[:, :, 1] - chosen[:, None, 1]) > 1e-6 * (1 + np.abs(chosen[:, None, 1]))) | (
            np.abs(sol[:, :, 0] - chosen[:, None, 0]) > 1e-6 * (1 + np.abs(chosen[:, None, 0])))
        close = np.abs(energy - e_best) <= 1e-6 * np.maximum(e_best, 1e-300)
        ambiguous = np.any(distinct & close & conv, axis=1) & found
    return chosen, found, ambiguous


def solve_covector_batch(ev, targets, tol=1e-10, margin=1e-4, multi_start=False, max_iter=100):
    """Initial covectors of geodesics from the identity to each target.

    Returns a ShootingResult.  Only covectors with |p_z| < 2pi are searched.
    Newton starts come from the integrated radial tables (at eps = 0 a single
    spline-inverted start, for eps > 0 every bracketed root of the tabulated
    height mismatch).  Targets left unresolved are retried from a 32-value
    multi-start in p_z; ``multi_start=True`` uses that from the outset.  The
    lowest-energy converged solution is kept, and a second distinct solution
    within 1e-6 relative energy marks the target ambiguous.
    """
    eps = _as_eps(ev)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = targets.shape[0]
    r = np.hypot(targets[:, 0], targets[:, 1])
    psi = np.arctan2(targets[:, 1], targets[:, 0])
    z = targets[:, 2]
    status = np.full(n, NONCONVERGED)
    covs = np.full((n, 3), np.nan)
    resid = np.full(n, np.inf)

    degenerate = (r == 0.0) & (z == 0.0)
    on_axis = (r < margin) & ~degenerate if eps == 0.0 else np.zeros(n, dtype=bool)
    status[degenerate] = DEGENERATE
    status[on_axis] = ON_AXIS
    work = np.flatnonzero(~degenerate & ~on_axis)
    if work.size == 0:
        return ShootingResult(covs, resid, status, np.full(n, np.nan))

    chosen, found, ambiguous = _pick(eps, r[work], z[work],
                                     _initial_guesses(eps, r[work], z[work], multi_start), tol, max_iter)
    retry = np.flatnonzero(~found)
    if retry.size and not multi_start:
        c2, f2, a2 = _pick(eps, r[work[retry]], z[work[retry]],
                           _multi_start_seeds(eps, r[work[retry]]), tol, max_iter)
        chosen[retry], found[retry], ambiguous[retry] = c2, f2, a2

    # rotate the radial solution onto the target azimuth
    fidx = work[found]
    ch = chosen[found]
    if fidx.size:
        base = exp_map_batch(eps, np.column_stack([ch[:, 0], np.zeros(fidx.size), ch[:, 1]]))
        phi = psi[fidx] - np.arctan2(base[:, 1], base[:, 0])
        cand = np.column_stack([ch[:, 0] * np.cos(phi), ch[:, 0] * np.sin(phi), ch[:, 1]])
        cand, res = _polish(eps, cand, targets[fidx], tol)
        covs[fidx] = cand
        resid[fidx] = res
        good = res <= tol * (1.0 + np.linalg.norm(targets[fidx], axis=1))
        good &= np.abs(cand[:, 2]) < TWO_PI
        status[fidx[good]] = OK
    amb_idx = work[ambiguous]
    status[amb_idx[status[amb_idx] == OK]] = AMBIGUOUS
    return ShootingResult(covs, resid, status, hamiltonian_array(eps, covs))


def solve_covector_lookup(targets, tol=1e-8, margin=1e-4):
    """Fast eps = 0 shooting: spline lookup, one verifying flow, full solve for the rest.

    A lookup covector is accepted when its endpoint residual is at most
    ``tol * (1 + |target|)``; rejected targets go through solve_covector_batch.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = targets.shape[0]
    r = np.hypot(targets[:, 0], targets[:, 1])
    d, pz, inside = sub_riemannian_lookup(targets)
    inside &= r >= margin
    covs = np.full((n, 3), np.nan)
    resid = np.full(n, np.inf)
    status = np.full(n, NONCONVERGED)
    idx = np.flatnonzero(inside)
    if idx.size:
        unit = exp_map_batch(0.0, np.column_stack([np.ones(idx.size), np.zeros(idx.size), pz[idx]]))
        phi = np.arctan2(targets[idx, 1], targets[idx, 0]) - np.arctan2(unit[:, 1], unit[:, 0])
        cand = np.column_stack([d[idx] * np.cos(phi), d[idx] * np.sin(phi), pz[idx]])
        res = np.linalg.norm(exp_map_batch(0.0, cand) - targets[idx], axis=1)
        good = (res <= tol * (1.0 + np.linalg.norm(targets[idx], axis=1))) & (np.abs(pz[idx]) < TWO_PI)
        covs[idx[good]] = cand[good]
        resid[idx[good]] = res[good]
        status[idx[good]] = OK
    rest = np.flatnonzero(status != OK)
    if rest.size:
        full = solve_covector_batch(0.0, targets[rest], tol=1e-10, margin=margin)
        covs[rest], resid[rest], status[rest] = full.covectors, full.residual, full.status
    return ShootingResult(covs, resid, status, hamiltonian_array(0.0, covs))


def _polish(eps, covs, targets, tol, steps=3):
    """A few full three-dimensional Newton steps on the endpoint map."""
    dirs = np.broadcast_to(np.eye(3), (covs.shape[0], 3, 3))
    covs = covs.copy()
    scale = 1.0 + np.linalg.norm(targets, axis=1)
    for _ in range(steps):
        e, J = exp_map_with_jacobian(eps, covs, dirs)
        F = e - targets
        res = np.linalg.norm(F, axis=1)
        need = res > 0.1 * tol * scale
        if not np.any(need):
            break
        try:
            delta = np.linalg.solve(J[need], F[need][..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        covs[need] -= delta
    e = exp_map_batch(eps, covs)
    return covs, np.linalg.norm(e - targets, axis=1)


def solve_covector(ev, target, tol=1e-10, margin=1e-4):
    """Initial covector of the geodesic from the identity to ``target``.

    Raises ShootingError for targets on the z-axis (eps = 0), the identity,
    non-convergence, or an ambiguous pair of near-equal-energy solutions.
    """
    res = solve_covector_batch(ev, _pt(target)[None, :], tol=tol, margin=margin)
    st = int(res.status[0])
    if st != OK:
        raise ShootingError(f"covector shooting failed: {STATUS_NAMES[st]}", st)
    return HeisenbergCovector.from_array(res.covectors[0])


def cc_distance(ev, p, q, tol=1e-10):
    """Distance d_eps(p, q) = sqrt(2 H) of the shooting covector for inv(p) * q."""
    rel = relative_arrays(_pt(p), _pt(q))
    if not np.any(rel):
        return 0.0
    lam = solve_covector(ev, rel, tol=tol)
    return math.sqrt(2.0 * CanonicalVariation(_as_eps(ev)).hamiltonian(lam))


def gauge_theta(ev, p, q, tol=1e-10):
    """Gauge value |p_z| of the covector joining p to q; lies in [0, 2pi)."""
    rel = relative_arrays(_pt(p), _pt(q))
    if not np.any(rel):
        raise ShootingError("gauge undefined for coincident points", DEGENERATE)
    return abs(solve_covector(ev, rel, tol=tol).pz)


def distance_gauge_batch(ev, sources, targets, tol=1e-10, margin=1e-4):
    """Vectorised (distance, gauge, status) for pairs of points."""
    eps = _as_eps(ev)
    rel = relative_arrays(np.atleast_2d(sources), np.atleast_2d(targets))
    res = solve_covector_batch(eps, rel, tol=tol, margin=margin)
    d = np.sqrt(2.0 * res.hamiltonian)
    g = np.abs(res.covectors[:, 2])
    bad = res.status != OK
    d[bad] = np.nan
    g[bad] = np.nan
    return d, g, res.status


# ---------------------------------------------------------------- D function

def d_function_fd(ev, p, q, h=1e-3, eps_reference=1.0, tol=1e-10):
    """Finite-difference norm of the gradient of c = d_eps^2 / 2 in its first argument.

    The gradient is measured in the reference metric for which {X, Y, eps_R Z}
    is orthonormal, differentiating along the right-multiplication flows
    p * exp(s X) etc. with central differences, Richardson-extrapolated over
    the steps h and h / 2.
    """
    eps = _as_eps(ev)
    p = _pt(p)
    q = _pt(q)
    unit = np.eye(3)

    def partials(step):
        shifted = []
        for i in range(3):
            for sgn in (1.0, -1.0):
                shifted.append(mul_arrays(p, sgn * step * unit[i]))
        shifted = np.array(shifted)
        rel = relative_arrays(shifted, np.broadcast_to(q, shifted.shape))
        res = solve_covector_batch(eps, rel, tol=tol)
        if np.any(res.status != OK):
            raise ShootingError("shooting failed inside the finite-difference stencil")
        c = res.hamiltonian
        return (c[0::2] - c[1::2]) / (2.0 * step)

    g1 = partials(h)
    g2 = partials(h / 2.0)
    g = (4.0 * g2 - g1) / 3.0
    w = np.array([1.0, 1.0, 1.0 / eps_reference])
    return float(np.linalg.norm(g * w))


# ---------------------------------------------------------------- distortion

def _fd_jacobian_dets(eps, covs, tol=EXP_TOL):
    """Determinants of the covector -> endpoint Jacobian by central differences."""
    covs = np.atleast_2d(np.asarray(covs, dtype=float))
    n = covs.shape[0]
    step = 1e-5 * (1.0 + np.linalg.norm(covs, axis=1))
    pert = np.repeat(covs[:, None, :], 6, axis=1)
    for i in range(3):
        pert[:, 2 * i, i] += step
        pert[:, 2 * i + 1, i] -= step
    ends = exp_map_batch(eps, pert.reshape(-1, 3), tol=tol).reshape(n, 6, 3)
    J = (ends[:, 0::2, :] - ends[:, 1::2, :]) / (2.0 * step[:, None, None])
    # J[:, i, :] is d(endpoint)/d(cov_i); determinant is transpose-invariant
    return np.linalg.det(J)


def true_beta_covectors(eps, covs, t):
    """t^3 |det Dexp(t lam)| / |det Dexp(lam)| for each covector row and each time."""
    covs = np.atleast_2d(np.asarray(covs, dtype=float))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    stack = np.concatenate([covs] + [tt * covs for tt in ts], axis=0)
    dets = np.abs(_fd_jacobian_dets(eps, stack)).reshape(len(ts) + 1, -1)
    out = ts[:, None] ** 3 * dets[1:] / dets[0][None, :]
    out[ts == 1.0] = 1.0
    out[ts == 0.0] = 0.0
    return out


def true_beta(ev, x, y, t, tol=1e-10):
    """Distortion of the exponential map along the geodesic from x to y at time t."""
    if not 0.0 < t <= 1.0:
        raise ValueError("t must lie in (0, 1]")
    lam = solve_covector(ev, relative_arrays(_pt(x), _pt(y)), tol=tol)
    return float(true_beta_covectors(_as_eps(ev), lam.as_array(), t)[0, 0])


def _h(s):
    return np.sinc(s / np.pi)


def _k_scaled(s):
    """(sin s - s cos s) / s^3, by its Taylor series for |s| < 0.5."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array((np.sin(s) - s * np.cos(s)) / s ** 3, dtype=float)
    if np.any(small):
        s2 = s[small] ** 2
        acc = np.zeros_like(s2)
        term = np.ones_like(s2)
        fact = 6.0  # (2n+1)! for n = 1
        for n in range(1, 9):
            acc += (-1) ** (n + 1) * 2 * n * term / fact
            term = term * s2
            fact *= (2 * n + 2) * (2 * n + 3)
        out[small] = acc
    return out


def beta_canvar_closed(eps, t, rho, pz):
    """Closed-form distortion of the canonical variation along (rho, p_z).

    With h(s) = sin(s)/s and k(s) = sin(s) - s cos(s) the coefficient is

        t^2 h(a) [eps^2 t p_z^3 h(a) + 2 rho^2 k(a)] / (h(b) [eps^2 p_z^3 h(b) + 2 rho^2 k(b)])

    for a = t p_z / 2, b = p_z / 2.  Both brackets are divided by p_z^3 and
    k(s)/s^3 is evaluated by series near 0, so small p_z loses no accuracy and
    p_z = 0 gives the directional limit t^3 (12 eps^2 + rho^2 t^2) / (12 eps^2 + rho^2).
    """
    eps, t, rho, pz = (float(v) for v in (eps, t, rho, pz))
    if abs(pz) >= TWO_PI:
        raise ValueError("|p_z| must be below 2pi")
    if rho < 0 or (rho == 0 and pz == 0):
        raise ValueError("rho must be nonnegative and (rho, p_z) nonzero")
    if t == 1.0:
        return 1.0
    if t == 0.0:
        return 0.0
    e2, r2 = eps * eps, rho * rho
    a, b = t * pz / 2.0, pz / 2.0
    ha, hb = float(_h(a)), float(_h(b))
    num = ha * (e2 * t * ha + 0.25 * r2 * t ** 3 * float(_k_scaled(a)))
    den = hb * (e2 * hb + 0.25 * r2 * float(_k_scaled(b)))
    return t * t * num / den


def sub_riemannian_exp_closed(rho, phi, pz, t=1.0, eps=0.0):
    """Closed-form endpoint of the normal geodesic; independent test oracle.

    The horizontal part is the same circle for every eps; the vertical part
    gains the drift eps^2 p_z t.
    """
    w = pz * t
    if abs(w) < 1e-8:
        xy = rho * t * complex(math.cos(phi), math.sin(phi)) * (1 + 0.5j * w)
        z = rho * rho * t * t * w / 12.0 + eps * eps * pz * t
        return np.array([xy.real, xy.imag, z])
    xy = rho * complex(math.cos(phi), math.sin(phi)) * (complex(math.cos(w), math.sin(w)) - 1) / (1j * pz)
    z = rho * rho * (w - math.sin(w)) / (2.0 * pz * pz) + eps * eps * pz * t
    return np.array([xy.real, xy.imag, z])
