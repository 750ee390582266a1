"""Linear-quadratic comparison models and their Hamiltonian matrix flows.

An LQ model (A, B, Q) generates the matrix solution (M(t), N(t)) of

    d/dt (M; N) = [[-A^T, -Q], [B, A]] (M; N),    M(0) = I, N(0) = 0,

and the model function s(t) = det N(t).  Row models use the shift/projector
pair (A, B) and Q = diag(kappa).  The model distortion is det N(t)/det N(1),
valid while t stays below the first conjugate time (first zero of det N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .report import VerificationReport

DEFAULT_TOL = 1e-10
# Absolute tolerance used with the relative one.  It is tiny so that
# determinants of order t^(ell^2) near t = 0 keep their relative accuracy.
ABS_FLOOR = 1e-40


class ConjugateTimeError(ValueError):
    """The requested time lies at or beyond the first conjugate time."""


@dataclass(frozen=True, eq=False)
class LQModel:
    ell: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    kappa: tuple | None = None

    def __post_init__(self):
        for name in ("A", "B", "Q"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (self.ell, self.ell):
                raise ValueError(f"{name} must be {self.ell}x{self.ell}")
            object.__setattr__(self, name, m)
        if not np.allclose(self.B, self.B.T) or not np.allclose(self.Q, self.Q.T):
            raise ValueError("B and Q must be symmetric")
        if np.min(np.linalg.eigvalsh(self.B)) < -1e-12:
            raise ValueError("B must be positive semi-definite")
        if kalman_rank(self.A, self.B) != self.ell:
            raise ValueError("Kalman rank condition fails")

    def key(self):
        return (self.ell, self.A.tobytes(), self.B.tobytes(), self.Q.tobytes())

    def hamiltonian_matrix(self):
        return np.block([[-self.A.T, -self.Q], [self.B, self.A]])


def kalman_rank(A, B):
    ell = A.shape[0]
    blocks, P = [], np.array(B, dtype=float)
    for _ in range(ell):
        blocks.append(P)
        P = A @ P
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def shift_matrices(ell):
    """(A, B) of a single Young-diagram row of length ell: ones below the diagonal, e_1 e_1^T."""
    A = np.eye(ell, k=-1)
    B = np.zeros((ell, ell))
    B[0, 0] = 1.0
    return A, B


def build_row_model(ell, kappa):
    if int(ell) != ell or ell < 1:
        raise ValueError("ell must be a positive integer")
    ell = int(ell)
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if kappa.shape != (ell,):
        raise ValueError(f"kappa must have length {ell}")
    A, B = shift_matrices(ell)
    return LQModel(ell, A, B, np.diag(kappa), tuple(float(k) for k in kappa))


@dataclass
class HamiltonianTrajectory:
    times: np.ndarray
    M: np.ndarray
    N: np.ndarray
    det_N: np.ndarray
    solution: object = field(default=None, repr=False)

    def at(self, t):
        """(M(t), N(t)) from the dense interpolant."""
        ell = self.M.shape[1]
        y = self.solution(t).reshape(2 * ell, ell)
        return y[:ell], y[ell:]


def _rhs(model):
    H = model.hamiltonian_matrix()
    ell = model.ell

    def f(_t, y):
        return (H @ y.reshape(2 * ell, ell)).ravel()

    return f


def _y0(ell):
    return np.vstack([np.eye(ell), np.zeros((ell, ell))]).ravel()


def _solve(model, t_max, tol, dense=True, t_eval=None):
    sol = solve_ivp(_rhs(model), (0.0, t_max), _y0(model.ell), method="DOP853", rtol=tol,
                    atol=tol * ABS_FLOOR / DEFAULT_TOL, dense_output=dense, t_eval=t_eval,
                    first_step=min(1e-6, t_max))
    if not sol.success:
        raise RuntimeError(f"Hamiltonian integration failed: {sol.message}")
    return sol


_DENSE_CACHE = {}


def _dense(model, t_max, tol):
    key = (model.key(), float(t_max), float(tol))
    sol = _DENSE_CACHE.get(key)
    if sol is None:
        if len(_DENSE_CACHE) > 256:
            _DENSE_CACHE.clear()
        sol = _solve(model, t_max, tol).sol
        _DENSE_CACHE[key] = sol
    return sol


def integrate_hamiltonian(model, t_max, tol=DEFAULT_TOL, n_grid=201):
    """Matrix solution (M, N) on a uniform grid of [0, t_max] plus a dense interpolant."""
    if not t_max > 0 or not tol > 0:
        raise ValueError("t_max and tol must be positive")
    sol = _dense(model, t_max, tol)
    times = np.linspace(0.0, t_max, n_grid)
    ell = model.ell
    Y = sol(times).T.reshape(-1, 2 * ell, ell)
    M, N = Y[:, :ell], Y[:, ell:]
    return HamiltonianTrajectory(times, M, N, np.linalg.det(N), sol)


def s_det(model, t, tol=DEFAULT_TOL):
    """det N(t).  Each requested time is reached by integration, not interpolation."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be nonnegative")
    ell = model.ell
    out = np.zeros(ts.shape)
    order = np.argsort(ts)
    y = _y0(ell)
    t_prev = 0.0
    f = _rhs(model)
    for i in order:
        ti = ts[i]
        if ti > t_prev:
            sol = solve_ivp(f, (t_prev, ti), y, method="DOP853", rtol=tol,
                            atol=tol * ABS_FLOOR / DEFAULT_TOL,
                            first_step=min(1e-6, ti - t_prev) if t_prev == 0.0 else None)
            if not sol.success:
                raise RuntimeError(f"Hamiltonian integration failed: {sol.message}")
            y = sol.y[:, -1]
            t_prev = ti
        out[i] = np.linalg.det(y.reshape(2 * ell, ell)[ell:]) if ti > 0 else 0.0
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class ConjugateTime:
    value: float
    bracket: tuple
    horizon: float

    @property
    def finite(self):
        return math.isfinite(self.value)


def _det_on(sol, ts, ell):
    Y = sol(ts).T.reshape(-1, 2 * ell, ell)
    return np.linalg.det(Y[:, ell:])


def _frame_segments(model, horizon, tol):
    """Yield (t0, t1, dense solution, sign) over [0, horizon].

    On each segment the flow starts from an orthonormal basis of the column
    span of (M; N); ``sign`` is the sign of the accumulated triangular factor,
    so sign * det(N-block of the segment solution) has the sign of det N(t)
    without the cancellation that exponential growth would cause.
    """
    ell = model.ell
    H = model.hamiltonian_matrix()
    span = 2.0 / max(np.linalg.norm(H, 2), 1e-12)
    f = _rhs(model)
    Y = _y0(ell).reshape(2 * ell, ell)
    sign = 1.0
    t0 = 0.0
    while t0 < horizon:
        t1 = min(horizon, t0 + span)
        sol = solve_ivp(f, (t0, t1), Y.ravel(), method="DOP853", rtol=tol,
                        atol=tol * ABS_FLOOR / DEFAULT_TOL, dense_output=True,
                        first_step=min(1e-6, t1 - t0) if t0 == 0.0 else None)
        if not sol.success:
            raise RuntimeError(f"Hamiltonian integration failed: {sol.message}")
        yield t0, t1, sol.sol, sign
        Qm, R = np.linalg.qr(sol.y[:, -1].reshape(2 * ell, ell))
        sign *= float(np.prod(np.sign(np.diag(R))))
        Y = Qm
        t0 = t1


def conjugate_time(model, horizon=50.0, n_scan=10_000, tol=DEFAULT_TOL, rel_width=1e-9):
    """First zero of det N in (0, horizon], or +inf if none is found.

    A uniform scan of ``n_scan`` points looks for a sign change (or a touching
    zero at a local minimum of |det N|); the bracket is refined by bisection
    until its width is below ``rel_width`` relative to the root.  The scan
    runs on a re-orthonormalised frame so that growing solutions cannot fake
    a sign change.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ell = model.ell
    grid = np.linspace(0.0, horizon, n_scan + 1)[1:]
    prev_t, prev_d = None, None
    for t0, t1, sol, sign in _frame_segments(model, horizon, tol):
        ts = grid[(grid > t0) & (grid <= t1)]
        if ts.size == 0:
            continue
        d = sign * _det_on(sol, ts, ell)
        if prev_t is not None:
            ts = np.concatenate([[prev_t], ts])
            d = np.concatenate([[prev_d], d])
        hit = _first_zero(lambda u: sign * _det_on(sol, np.atleast_1d(u), ell)[0], ts, d, t0, rel_width)
        if hit is not None:
            value, bracket = hit
            return ConjugateTime(float(value), tuple(float(b) for b in bracket), float(horizon))
        prev_t, prev_d = ts[-1], d[-1]
    return ConjugateTime(math.inf, (horizon, math.inf), float(horizon))


def _first_zero(fun, ts, d, t0, rel_width):
    """Earliest zero of ``fun`` bracketed on the sampled values, or None."""
    candidates = []
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        candidates.append((ts[zero[0]], (ts[zero[0]], ts[zero[0]])))
    change = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    if change.size:
        i = change[0]
        lo, hi = ts[i], ts[i + 1]
        lo_eval = max(lo, t0)
        flo = fun(lo_eval) if lo_eval != lo else d[i]
        lo = lo_eval
        while hi - lo > rel_width * hi:
            mid = 0.5 * (lo + hi)
            fm = fun(mid)
            if fm == 0.0:
                lo = hi = mid
                break
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        candidates.append((0.5 * (lo + hi), (lo, hi)))
    # double roots: local minima of |det N| that refine to zero
    a = np.abs(d)
    limit = change[0] if change.size else len(a) - 1
    mins = np.flatnonzero((a[1:-1] <= a[:-2]) & (a[1:-1] <= a[2:]))[:64] + 1
    for i in mins:
        if i >= limit:
            break
        scale = max(a[i - 1], a[i + 1])
        if a[i] > 0.25 * scale or ts[i - 1] < t0:
            continue
        res = minimize_scalar(lambda u: abs(fun(u)), bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                              options={"xatol": rel_width * ts[i]})
        if res.fun <= 1e-9 * scale:
            candidates.append((res.x, (ts[i - 1], ts[i + 1])))
            break
    if not candidates:
        return None
    return min(candidates, key=lambda c: c[0])


def _require_regular(model, tol):
    tc = conjugate_time(model, horizon=1.0 + 1e-9, n_scan=2000, tol=tol)
    if tc.finite:
        raise ConjugateTimeError(f"first conjugate time {tc.value:.12g} does not exceed 1")


def beta_lq(model, t, tol=DEFAULT_TOL):
    """Model distortion det N(t) / det N(1) for t in [0, 1]."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any((ts < 0) | (ts > 1)):
        raise ValueError("t must lie in [0, 1]")
    _require_regular(model, tol)
    vals = s_det(model, np.concatenate([ts, [1.0]]), tol)
    out = vals[:-1] / vals[-1]
    out[ts == 0.0] = 0.0
    out[ts == 1.0] = 1.0
    return out if np.ndim(t) else float(out[0])


def beta_riccati(model, t, s0=0.05, tol=DEFAULT_TOL):
    """Model distortion from the Riccati representation.

    V = M N^{-1} solves dV/ds = -(A^T V + V A + V B V + Q); the distortion is
    exp(-int_t^1 tr(B V + A) ds).  The Riccati flow starts at max(t, s0) with
    V taken from the Hamiltonian flow; for t < s0 the missing piece of the
    integral is replaced by the determinant ratio on [t, s0].
    """
    if not 0.0 < t <= 1.0:
        raise ValueError("t must lie in (0, 1]")
    _require_regular(model, tol)
    if t == 1.0:
        return 1.0
    ell = model.ell
    A, B, Q = model.A, model.B, model.Q
    start = max(t, s0)
    y = solve_ivp(_rhs(model), (0.0, start), _y0(ell), method="DOP853", rtol=tol,
                  atol=tol * ABS_FLOOR / DEFAULT_TOL, first_step=min(1e-6, start)).y[:, -1]
    Y = y.reshape(2 * ell, ell)
    V0 = Y[:ell] @ np.linalg.inv(Y[ell:])
    trA = np.trace(A)

    def rhs(_s, w):
        V = w[:-1].reshape(ell, ell)
        dV = -(A.T @ V + V @ A + V @ B @ V + Q)
        return np.concatenate([dV.ravel(), [np.trace(B @ V) + trA]])

    w0 = np.concatenate([V0.ravel(), [0.0]])
    sol = solve_ivp(rhs, (start, 1.0), w0, method="DOP853", rtol=tol, atol=tol)
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    value = math.exp(-sol.y[-1, -1])
    if t < start:
        a, b = s_det(model, np.array([t, start]), tol)
        value *= a / b
    return value


# ---------------------------------------------------------------- closed forms

FAMILIES = ("riemannian", "sasakian", "two_columns")
_SMALL = 1e-2
_GAP = 1e-4


def _riemannian(kappa, t):
    if kappa > 0:
        r = math.sqrt(kappa)
        return np.sin(r * t) / r
    if kappa < 0:
        r = math.sqrt(-kappa)
        return np.sinh(r * t) / r
    return np.asarray(t, dtype=float) * 1.0


def _sasakian(k1, t):
    if k1 > 0:
        x = math.sqrt(k1) * t
        return (2.0 - 2.0 * np.cos(x) - x * np.sin(x)) / k1 ** 2
    x = math.sqrt(-k1) * t
    return (2.0 - 2.0 * np.cosh(x) + x * np.sinh(x)) / k1 ** 2


def _xi(k1, k2):
    x = k1 / 2.0
    y = np.sqrt(complex(4.0 * k2 + k1 * k1)) / 2.0
    a, b = np.sqrt(x + y), np.sqrt(x - y)
    return (a + b) / 2.0, (a - b) / 2.0


def _two_columns(k1, k2, t):
    xp, xm = _xi(k1, k2)
    t = np.asarray(t, dtype=float)
    num = xm ** 2 * np.sin(xp * t) ** 2 - xp ** 2 * np.sin(xm * t) ** 2
    return np.real(num / (4.0 * xm ** 2 * xp ** 2 * (xm ** 2 - xp ** 2)))


def _one_frequency(xi, t):
    """Two-columns expression in the limit where one of the xi vanishes."""
    t = np.asarray(t, dtype=float)
    return np.real((xi ** 2 * t ** 2 - np.sin(xi * t) ** 2) / (4.0 * xi ** 4))


def _confluent(xi, t):
    """Two-columns expression in the limit xi_+ = xi_-."""
    t = np.asarray(t, dtype=float)
    s = np.sin(xi * t)
    return np.real((s ** 2 - xi * t * s * np.cos(xi * t)) / (4.0 * xi ** 4))


def _patch_small(values, ts, small, kappa):
    """Replace cancellation-prone small-argument values by the ODE determinant."""
    small = np.asarray(small) & (ts > 0)
    if not np.any(small):
        return values
    values = np.array(values, dtype=float)
    values[small] = s_det(build_row_model(2, kappa), ts[small])
    return values if values.ndim else float(values)


def closed_form_s(family, params, t):
    """Closed-form model functions of the constant-curvature families.

    riemannian(kappa): sin(sqrt(kappa) t)/sqrt(kappa), sinh for kappa < 0, t for 0.
    sasakian(k1): (2 - 2 cos(sqrt(k1) t) - sqrt(k1) t sin(sqrt(k1) t)) / k1^2.
    two_columns(k1, k2): xi-formula with complex principal branches.

    All share the det N normalisation of the corresponding row model.  Where
    the formula loses accuracy (small curvature, nearly coincident or nearly
    vanishing xi) the value is taken from the ODE determinant instead; the
    exactly degenerate two-columns loci use their analytic limits.
    """
    params = tuple(float(p) for p in np.atleast_1d(params))
    ts = np.asarray(t, dtype=float)
    if family == "riemannian":
        if len(params) != 1:
            raise ValueError("riemannian takes one parameter")
        return _riemannian(params[0], ts)
    if family == "sasakian":
        if len(params) != 1:
            raise ValueError("sasakian takes one parameter")
        k1 = params[0]
        if k1 == 0.0:
            return ts ** 4 / 12.0
        return _patch_small(_sasakian(k1, ts), ts, abs(k1) * ts ** 2 < _SMALL, [k1, 0.0])
    if family == "two_columns":
        if len(params) != 2:
            raise ValueError("two_columns takes two parameters")
        k1, k2 = params
        xp, xm = _xi(k1, k2)
        if k1 == 0.0 and k2 == 0.0:
            return ts ** 4 / 12.0
        if k2 == 0.0:
            return _confluent(xp, ts)
        if 4.0 * k2 + k1 * k1 == 0.0:
            return _one_frequency(xp if abs(xp) > abs(xm) else xm, ts)
        big = max(abs(xp), abs(xm))
        if abs(xp ** 2 - xm ** 2) < _GAP * big ** 2 or min(abs(xp), abs(xm)) < _GAP * big:
            return s_det(build_row_model(2, [k1, k2]), ts)
        return _patch_small(_two_columns(k1, k2, ts), ts, (big * ts) ** 2 < _SMALL, [k1, k2])
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------- rescaling

def rescale_kappa(kappa, lam):
    kappa = np.asarray(kappa, dtype=float)
    return kappa * lam ** (2.0 * np.arange(1, kappa.size + 1))


def check_rescaling(ell, kappa, lam, t_grid, tol=1e-8):
    """Compare s_{lam.kappa}(t) with s_kappa(lam t) / lam^(ell^2) on a grid.

    The comparison is made in ratio form, |lhs - rhs| / |rhs|.  For lam = 0
    the check is that s_0(t) / t^(ell^2) is constant over the grid.
    """
    ts = np.asarray(t_grid, dtype=float)
    ts = ts[ts > 0]
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0:
        s0 = s_det(build_row_model(ell, np.zeros(ell)), ts)
        c = s0 / ts ** (ell * ell)
        err = float(np.max(np.abs(c / c[0] - 1.0)))
        recs = [{"t": float(a), "lhs": float(b), "rhs": float(c[0] * a ** (ell * ell))} for a, b in zip(ts, s0)]
        return VerificationReport("rescaling", err <= tol, tol, ("t", "lhs", "rhs"), recs,
                                  {"max_error": err, "normalization": float(c[0]), "lam": 0.0})
    lhs = s_det(build_row_model(ell, rescale_kappa(kappa, lam)), ts)
    rhs = s_det(build_row_model(ell, kappa), lam * ts) / lam ** (ell * ell)
    rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    recs = [{"t": float(a), "lhs": float(b), "rhs": float(c)} for a, b, c in zip(ts, lhs, rhs)]
    err = float(np.max(rel))
    return VerificationReport("rescaling", err <= tol, tol, ("t", "lhs", "rhs"), recs,
                              {"max_error": err, "max_abs_error": float(np.max(np.abs(lhs - rhs))),
                               "lam": float(lam)})


# ---------------------------------------------------------------- vector kappa

@dataclass(frozen=True)
class VectorKappa:
    """Curvature vector depending on a gauge value theta in the nonnegative orthant of R^m.

    Component i (1-based) must be homogeneous of degree 2 i in theta.
    """

    m: int
    components: Sequence[Callable]

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.array([float(c(theta)) for c in self.components])

    @property
    def ell(self):
        return len(self.components)

    def homogeneity_defect(self, rng, trials=20):
        worst = 0.0
        for _ in range(trials):
            th = rng.uniform(0.0, 2.0, self.m)
            lam = rng.uniform(0.1, 3.0)
            a, b = self(lam * th), self(th)
            for i in range(self.ell):
                worst = max(worst, abs(a[i] - lam ** (2 * (i + 1)) * b[i]) / (1.0 + abs(b[i])))
        return worst


def three_d_kappa(K):
    """kbar(theta1, theta2) = (theta1^2 + K theta2^2, 0)."""
    return VectorKappa(2, (lambda th: th[0] ** 2 + K * th[1] ** 2, lambda th: 0.0 * th[0]))


def s_vector(ell, kbar, theta, tol=DEFAULT_TOL):
    """s_{kbar(theta/|theta|)}(|theta|); zero at theta = 0."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must lie in the nonnegative orthant")
    if kbar.ell != ell:
        raise ValueError("kbar length does not match ell")
    r = float(np.linalg.norm(theta))
    if r == 0.0:
        return 0.0
    return s_det(build_row_model(ell, kbar(theta / r)), r, tol)


@lru_cache(maxsize=4096)
def _conjugate_time_cached(ell, kappa, horizon):
    return conjugate_time(build_row_model(ell, list(kappa)), horizon=horizon).value


def row_conjugate_time(kappa, horizon=50.0):
    """Conjugate time of a row model, memoised on the curvature values."""
    kappa = tuple(float(k) for k in np.atleast_1d(kappa))
    return _conjugate_time_cached(len(kappa), kappa, float(horizon))
