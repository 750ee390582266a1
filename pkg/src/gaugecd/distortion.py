"""Model functions and the distortion coefficients they generate.

A model function s has s(theta) ~ c theta^N at zero and first positive zero D.
Its distortion coefficient is

    beta_t(theta) = t^N                 theta = 0
                  = s(t theta) / s(theta)   0 < theta < D
                  = +inf, 0 or 1         theta >= D and t in (0, 1), t = 0, t = 1.

+inf is represented by ``math.inf`` and only ever produced by the case
analysis above, never by overflow.  Vector-valued gauges use the radial
boundary D_theta of the positivity domain instead of D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lq_models

TWO_PI = 2.0 * math.pi
INF = math.inf


class CorruptModelError(ValueError):
    """s is not positive somewhere inside the interval it claims."""


class UnboundedExponentError(ValueError):
    """No power t^N' bounds the coefficient from below on the search lattice."""


@dataclass(frozen=True)
class ModelFunction:
    """A model function together with its order at zero and first zero.

    Scalar models have ``arity == 1`` and a number ``first_zero``.  Vector
    models take a point of the nonnegative orthant of R^m and provide
    ``dom_boundary(direction) -> D_theta``.
    """

    evaluator: Callable
    order: float
    first_zero: float = INF
    arity: int = 1
    dom_boundary: Callable | None = None
    leading_sign: int = 1
    name: str = "s"

    def __call__(self, theta):
        return self.evaluator(theta)

    @property
    def is_vector(self):
        return self.arity > 1

    def boundary(self, theta):
        """First zero along the ray through ``theta`` (vector) or D (scalar)."""
        if not self.is_vector:
            return self.first_zero
        theta = np.asarray(theta, dtype=float)
        r = np.linalg.norm(theta)
        if r == 0:
            return INF
        if self.dom_boundary is not None:
            return self.dom_boundary(theta / r)
        return radial_first_zero(self, theta / r)


@dataclass(frozen=True)
class DistortionCoefficient:
    evaluator: Callable
    parent: ModelFunction | None = None
    arity: int = 1
    name: str = "beta"

    def __call__(self, t, theta):
        return self.evaluator(t, theta)


# ---------------------------------------------------------------- construction

def make_beta(s, ratio_cap=1e12):
    """Distortion coefficient of a model function."""
    N = s.order

    def scalar(t, theta):
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if t == 0.0:
            return 0.0
        if t == 1.0:
            return 1.0
        if s.is_vector:
            th = np.asarray(theta, dtype=float)
            r = float(np.linalg.norm(th))
            if r == 0.0:
                return t ** N
            if r >= s.boundary(th):
                return INF
            den = float(s(th))
            if den <= 0.0:
                return INF
            val = float(s(t * th)) / den
            return INF if val > ratio_cap else val
        theta = float(theta)
        if theta == 0.0:
            return t ** N
        if theta >= s.first_zero:
            return INF
        den = float(s(theta))
        if den <= 0.0:
            raise CorruptModelError(f"s({theta}) = {den} is not positive inside (0, D)")
        return float(s(t * theta)) / den

    def evaluate(t, theta):
        if s.is_vector:
            return scalar(t, theta)
        tt, th = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(theta, dtype=float))
        if tt.ndim == 0:
            return scalar(tt, th)
        out = np.array([scalar(a, b) for a, b in zip(tt.ravel(), th.ravel())])
        return out.reshape(tt.shape)

    return DistortionCoefficient(evaluate, s, s.arity, f"beta[{s.name}]")


def interpolate_betas(beta0, beta1, w):
    """Pointwise geometric interpolation (beta0)^(1-w) (beta1)^w."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")

    def evaluate(t, theta):
        a = np.asarray(beta0(t, theta), dtype=float)
        b = np.asarray(beta1(t, theta), dtype=float)
        if w == 0.0:
            return a
        if w == 1.0:
            return b
        with np.errstate(invalid="ignore", divide="ignore"):
            out = a ** (1.0 - w) * b ** w
        return out

    return DistortionCoefficient(evaluate, None, beta0.arity, "interpolated")


def fit_order(s, lo=1e-4, hi=1e-2, n=20, direction=None):
    """Least-squares slope of log s against log theta on [lo, hi]."""
    th = np.logspace(math.log10(lo), math.log10(hi), n)
    if direction is None:
        vals = np.asarray(s(th), dtype=float) if _vectorised(s) else np.array([s(x) for x in th])
    else:
        u = np.asarray(direction, dtype=float)
        vals = np.array([s(x * u) for x in th])
    A = np.column_stack([np.log(th), np.ones_like(th)])
    coef, res, *_ = np.linalg.lstsq(A, np.log(np.abs(vals)), rcond=None)
    return float(coef[0])


def _vectorised(s):
    try:
        out = np.asarray(s(np.array([0.5, 0.25])))
        return out.shape == (2,)
    except Exception:
        return False


def radial_first_zero(s, direction, r_max=50.0, n=10_000, rel_width=1e-10):
    """First sign change of r -> s(r u) on (0, r_max], +inf if none."""
    u = np.asarray(direction, dtype=float)
    rs = np.linspace(0.0, r_max, n + 1)[1:]
    vals = np.array([float(s(r * u)) for r in rs])
    bad = np.flatnonzero(vals <= 0.0)
    if bad.size == 0:
        return INF
    i = bad[0]
    if i == 0:
        return float(rs[0])
    lo, hi = rs[i - 1], rs[i]
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if float(s(mid * u)) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def radial_monotonicity(f, direction, r_max, n=1000):
    """Classify r -> f(r u) on (0, r_max] as 'nonincreasing', 'nondecreasing', 'constant' or 'neither'."""
    u = np.asarray(direction, dtype=float)
    rs = np.linspace(0.0, r_max, n + 1)[1:]
    vals = np.array([float(f(r * u)) for r in rs])
    dv = np.diff(vals)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    up, down = np.any(dv > tol), np.any(dv < -tol)
    if up and down:
        return "neither"
    if up:
        return "nondecreasing"
    if down:
        return "nonincreasing"
    return "constant"


# ---------------------------------------------------------------- named families

def _k_half_scaled(x):
    """(sin(x/2) - (x/2) cos(x/2)) / (x/2)^3, with a series near zero."""
    x = np.asarray(x, dtype=float)
    s = 0.5 * x
    small = np.abs(s) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array((np.sin(s) - s * np.cos(s)) / s ** 3, dtype=float)
    if np.any(small):
        ss2 = s[small] ** 2
        acc = np.zeros_like(ss2)
        term = np.ones_like(ss2)
        fact = 6.0  # (2n+1)! for n = 1
        for n in range(1, 9):
            acc += (-1) ** (n + 1) * 2 * n * term / fact
            term = term * ss2
            fact *= (2 * n + 2) * (2 * n + 3)
        out[small] = acc
    return out


def _k_half(x):
    """sin(x/2) - (x/2) cos(x/2)."""
    x = np.asarray(x, dtype=float)
    return (0.5 * x) ** 3 * _k_half_scaled(x)


def heisenberg_s(d=1):
    """theta sin(theta/2)^(2d-1) [sin(theta/2) - (theta/2) cos(theta/2)]."""

    def s(theta):
        th = np.asarray(theta, dtype=float)
        return th * np.sin(0.5 * th) ** (2 * d - 1) * _k_half(th)

    return ModelFunction(s, float(2 * d + 3), TWO_PI, name=f"heisenberg(d={d})")


def beta_heisenberg(d, t, theta):
    """Heisenberg coefficient with order 2d + 3 and first zero 2 pi (array-friendly)."""
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    t_arr, th = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(theta, dtype=float))
    if np.any((t_arr < 0) | (t_arr > 1)) or np.any(th < 0):
        raise ValueError("need t in [0, 1] and theta >= 0")
    N = 2 * d + 3
    out = np.empty(t_arr.shape)
    beyond = th >= TWO_PI
    zero = th == 0.0
    inside = ~beyond & ~zero
    tt, x = t_arr[inside], th[inside]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_sin = np.where(np.abs(x) < 1e-8, tt, np.sin(0.5 * tt * x) / np.sin(0.5 * x))
        val = tt ** 4 * ratio_sin ** (2 * d - 1) * _k_half_scaled(tt * x) / _k_half_scaled(x)
    out[inside] = val
    out[zero] = t_arr[zero] ** N
    out[beyond] = INF
    out[beyond & (t_arr == 0.0)] = 0.0
    out[beyond & (t_arr == 1.0)] = 1.0
    out[t_arr == 0.0] = 0.0
    out[t_arr == 1.0] = 1.0
    return float(out) if out.ndim == 0 else out


def beta_classical(kind, K, N, t, theta):
    """sigma (kind 'sigma') or tau (kind 'tau') coefficients of curvature K and dimension N."""
    t, theta, K, N = float(t), float(theta), float(K), float(N)
    if kind not in ("sigma", "tau"):
        raise ValueError("kind must be 'sigma' or 'tau'")
    if not 0.0 <= t <= 1.0 or theta < 0:
        raise ValueError("need t in [0, 1] and theta >= 0")
    if N < 1 or (kind == "tau" and K != 0.0 and N <= 1):
        raise ValueError("invalid dimension parameter")
    Kt2 = K * theta * theta
    if Kt2 == 0.0:
        return t ** N
    M = N if kind == "sigma" else N - 1.0
    prefactor = 1.0 if kind == "sigma" else t
    if Kt2 >= M * math.pi ** 2:
        return 0.0 if t == 0.0 else (1.0 if t == 1.0 else INF)
    c = theta * math.sqrt(abs(K) / M)
    if Kt2 > 0:
        ratio = math.sin(t * c) / math.sin(c)
    else:
        ratio = math.sinh(t * c) / math.sinh(c)
    return prefactor * ratio ** M


def classical_model(kind, K, N):
    """Model function whose coefficient is the sigma/tau family."""
    M = N if kind == "sigma" else N - 1.0
    if K > 0:
        c = math.sqrt(K / M)
        f = lambda th: np.sin(c * np.asarray(th, dtype=float)) ** M
        D = math.pi / c
    elif K < 0:
        c = math.sqrt(-K / M)
        f = lambda th: np.sinh(c * np.asarray(th, dtype=float)) ** M
        D = INF
    else:
        f = lambda th: np.asarray(th, dtype=float) ** M
        D = INF
    if kind == "tau":
        g = lambda th: np.asarray(th, dtype=float) * f(th)
        return ModelFunction(g, float(N), D, name=f"tau(K={K}, N={N})")
    return ModelFunction(f, float(N), D, name=f"sigma(K={K}, N={N})")


def find_Nprime(beta, t_grid, theta_grid, step=0.01, base=None, max_steps=100_000):
    """Smallest N' on the lattice base + step * j with beta_t(theta) >= t^N' on the grid.

    Returns (N', min deficit of beta - t^N' over the grid).
    """
    N = base if base is not None else (beta.parent.order if beta.parent is not None else 1.0)
    ts = np.asarray(t_grid, dtype=float)
    ths = np.asarray(theta_grid, dtype=float)
    T, TH = np.meshgrid(ts, ths, indexing="ij")
    vals = np.asarray(beta(T, TH), dtype=float)
    inner = (T > 0) & (T < 1) & np.isfinite(vals)
    if np.any(vals[inner] <= 0):
        raise UnboundedExponentError("coefficient vanishes at an interior grid point")
    need = np.log(vals[inner]) / np.log(T[inner]) if np.any(inner) else np.array([N])
    worst = float(np.max(need))
    j = max(0, math.ceil((worst - N) / step - 1e-9))
    if j > max_steps:
        raise UnboundedExponentError(f"required exponent {worst} exceeds the search range")
    Np = N + j * step
    deficit = vals[inner] - T[inner] ** Np
    return Np, float(np.min(deficit)) if deficit.size else 0.0


# ---------------------------------------------------------------- fat composite

def _row_s(kappa):
    model = lq_models.build_row_model(len(kappa), kappa)
    return lambda th: lq_models.s_det(model, np.abs(np.asarray(th, dtype=float)))


def compose_fat_s(n, k, C, kappa_a, kappa_b, kappa_c, horizon=50.0):
    """theta e^(C theta) s_{kb,ka}(theta)^(n-k) s_{kc}(theta)^(2k-n-1); order 3n - 2k."""
    if not (2 <= k < n <= 2 * k):
        raise ValueError("need 2 <= k < n <= 2k")
    e1, e2 = n - k, 2 * k - n - 1
    s_two = _row_s([kappa_b, kappa_a])
    s_one = _row_s([kappa_c])

    def s(theta):
        th = np.asarray(theta, dtype=float)
        val = th * np.exp(C * th) * s_two(th) ** e1
        if e2:
            val = val * s_one(th) ** e2
        return val

    zeros = [lq_models.row_conjugate_time([kappa_b, kappa_a], horizon)]
    if e2:
        zeros.append(lq_models.row_conjugate_time([kappa_c], horizon))
    return ModelFunction(s, float(3 * n - 2 * k), min(zeros), name=f"fat(n={n}, k={k})")


# ---------------------------------------------------------------- vector models

def kappa_conjugate_time(kappa, horizon=50.0):
    """Conjugate time of a row model, computed after rescaling kappa to unit size.

    With lam = max_i |kappa_i|^(1/(2i)) the rescaled curvature kappa_i / lam^(2i)
    has unit size and t_kappa = t_{rescaled} / lam.
    """
    kappa = np.asarray(kappa, dtype=float)
    idx = np.arange(1, kappa.size + 1)
    lam = float(np.max(np.abs(kappa) ** (1.0 / (2.0 * idx))))
    if lam == 0.0:
        return INF
    unit = kappa / lam ** (2.0 * idx)
    return lq_models.row_conjugate_time(unit, horizon) / lam


def vector_model(ell, kbar, extra_power=0):
    """Vector model s(theta) = |theta|^extra_power s_{kbar(theta/|theta|)}(|theta|)."""

    def s(theta):
        th = np.asarray(theta, dtype=float)
        r = float(np.linalg.norm(th))
        return r ** extra_power * lq_models.s_vector(ell, kbar, th) if r > 0 else 0.0

    return ModelFunction(s, float(ell * ell + extra_power), INF, arity=kbar.m,
                         dom_boundary=lambda u: kappa_conjugate_time(kbar(u)), name="vector")


def three_d_model(K):
    """Model of the three-dimensional Lie group examples with gauge (|h_0|, d)."""
    return vector_model(2, lq_models.three_d_kappa(K), extra_power=1)


def dom_region(s, directions):
    """Radial boundary D_theta for each direction (rows of ``directions``)."""
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / norms
    return np.array([s.boundary(u) for u in dirs])


def dom_directions(n):
    """n unit directions (cos phi, sin phi), phi uniform on [0, pi/2]."""
    phi = np.linspace(0.0, 0.5 * math.pi, n)
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    # exact zeros on the axes, so axis directions see exactly vanishing curvature
    dirs[np.abs(dirs) < 1e-15] = 0.0
    return phi, dirs


def beta_3d_model(K, t, theta1, theta2):
    """t s_{k,0}(t) / s_{k,0}(1) with k = theta1^2 + K theta2^2; +inf outside the domain."""
    if theta1 < 0 or theta2 < 0:
        raise ValueError("theta must lie in the nonnegative quadrant")
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return 0.0
    if t == 1.0:
        return 1.0
    kap = theta1 * theta1 + K * theta2 * theta2
    if kap > 0 and math.sqrt(kap) >= TWO_PI:
        return INF
    if theta1 == 0.0 and theta2 == 0.0:
        return t ** 5
    if kap == 0.0:
        return t ** 5
    vals = lq_models.closed_form_s("sasakian", [kap], np.array([t, 1.0]))
    return t * float(vals[0]) / float(vals[1])
