"""Weyl fractional derivatives and the Zähle representation of Young integrals.

Paths are treated as their piecewise-linear interpolants. On every grid cell
the singular kernels ``u^(-alpha-1)`` and ``u^(-alpha)`` are integrated in
closed form, so no quadrature point ever lands on the singular endpoint.

Sign convention: the formal phases ``(-1)^alpha`` and ``(-1)^(1-alpha)`` of the
two-sided representation multiply to ``-1``. ``weyl_right_adjusted`` returns
the right derivative with its phase dropped and ``zahle_integral`` applies the
combined factor ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, special

from .exceptions import AdmissibilityError, DomainError
from .metrics import (
    SamplePath,
    _index_range,
    estimate_holder_exponent,
    holder_norm,
    holder_seminorm,
)

_CHUNK = 1 << 21  # max entries of a (points x cells) work array
ESTIMATE_TOL = 0.1


@dataclass(frozen=True)
class ExponentTriple:
    """Exponents ``alpha < gamma < beta`` with ``gamma + beta > 1``.

    ``beta >= 1 - alpha`` is checked non-strictly: the default triple
    (0.35, 0.55, 0.65) sits on that boundary.
    """

    alpha: float = 0.35
    gamma: float = 0.55
    beta: float = 0.65

    def __post_init__(self):
        a, g, b = self.alpha, self.gamma, self.beta
        failed = []
        if not 0 < a < g:
            failed.append("0 < alpha < gamma")
        if not g < b < 1:
            failed.append("gamma < beta < 1")
        if not b + g > 1:
            failed.append("beta + gamma > 1")
        if b < 1 - a - 1e-12:
            failed.append("beta >= 1 - alpha")
        if failed:
            raise AdmissibilityError(
                f"inadmissible exponents (alpha={a}, gamma={g}, beta={b}): "
                + ", ".join(failed)
            )


def _check_order(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


def _left_weyl_pl(values, dt, alpha, tau):
    """Left Weyl derivative of a piecewise-linear function.

    ``values`` sit on nodes ``j * dt`` (``j = 0..n``), the lower limit is 0 and
    ``tau`` is an array of evaluation points in ``(0, n * dt]``.
    """
    values = np.asarray(values, dtype=float)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    n = values.size - 1
    slopes = np.diff(values) / dt
    pos = tau / dt
    # cell holding tau, chosen so that the partial cell is never empty
    k = np.clip(np.ceil(pos - 1e-12).astype(int) - 1, 0, n - 1)
    r = pos - k
    v_tau = values[k] + slopes[k] * r * dt
    one_m = 1.0 - alpha

    out = np.empty_like(tau)
    step = max(1, _CHUNK // max(n, 1))
    j = np.arange(n)
    for lo in range(0, tau.size, step):
        sl = slice(lo, lo + step)
        p = pos[sl, None]
        kk = k[sl, None]
        mask = j[None, :] < kk
        u_hi = np.where(mask, (p - j) * dt, 1.0)
        u_lo = np.where(mask, (p - j - 1) * dt, 1.0)
        c = v_tau[sl, None] - values[:-1] - slopes * u_hi
        terms = c * (u_lo**-alpha - u_hi**-alpha)
        terms += alpha * slopes * (u_hi**one_m - u_lo**one_m) / one_m
        full = np.sum(np.where(mask, terms, 0.0), axis=1)
        partial = alpha * slopes[k[sl]] * (r[sl] * dt) ** one_m / one_m
        out[sl] = full + partial
    out += v_tau * tau**-alpha
    return out / special.gamma(one_m)


def _left_weyl_cells(values, dt, alpha, offsets):
    """Left Weyl derivative at ``(c + x) * dt`` for every cell ``c`` and offset ``x``.

    Same quantity as ``_left_weyl_pl`` but evaluated on a lattice: for a fixed
    offset the full-cell contributions are discrete convolutions in the lag
    ``c - j`` and are computed with the FFT. Returns shape ``(n, len(offsets))``.
    """
    values = np.asarray(values, dtype=float)
    n = values.size - 1
    slopes = np.diff(values) / dt
    one_m = 1.0 - alpha
    kappa = alpha / one_m
    cells = np.arange(n)
    lag = np.arange(1, n + 1)
    out = np.empty((n, len(offsets)))
    for col, x in enumerate(offsets):
        u_hi = (lag + x) * dt
        u_lo = (lag - 1 + x) * dt
        pa_hi, pa_lo = u_hi**-alpha, u_lo**-alpha
        a_ker = np.concatenate([[0.0], pa_lo - pa_hi])
        e_ker = np.concatenate(
            [[0.0], u_hi * (pa_lo - pa_hi) - kappa * (u_hi * pa_hi - u_lo * pa_lo)]
        )
        conv_v = signal.fftconvolve(values[:-1], a_ker)[:n]
        conv_m = signal.fftconvolve(slopes, e_ker)[:n]
        tau = (cells + x) * dt
        v_tau = values[:-1] + slopes * x * dt
        telescoped = (x * dt) ** -alpha - tau**-alpha
        full = v_tau * telescoped - conv_v - conv_m
        partial = kappa * slopes * (x * dt) ** one_m
        out[:, col] = full + partial + v_tau * tau**-alpha
    return out / special.gamma(one_m)


def _eval_points(t):
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    return np.atleast_1d(t), scalar


def weyl_left(f, a, alpha, t):
    """Left Weyl derivative of order ``alpha`` of ``f`` with lower limit ``a``.

    ``a`` must be a grid node; ``t`` may be a scalar or an array in ``(a, T]``.
    """
    alpha = _check_order(alpha)
    t, scalar = _eval_points(t)
    if np.any(t <= a):
        raise DomainError("weyl_left requires t > a")
    i, j = _index_range(f.grid, a, f.grid.t_end)
    a_node = i * f.grid.dt
    if abs(a_node - a) > 1e-9 * f.grid.dt:
        raise DomainError(f"lower limit a={a} is not a grid node")
    if np.any(t > f.grid.t_end * (1 + 1e-12)):
        raise DomainError("evaluation point beyond the grid span")
    out = _left_weyl_pl(f.values[i:], f.grid.dt, alpha, t - a_node)
    return float(out[0]) if scalar else out


def weyl_right_adjusted(g, b, alpha, t):
    """Right Weyl derivative of order ``1 - alpha`` of ``g - g(b)``, phase dropped.

    ``b`` must be a grid node and ``t`` lies in ``[0, b)``.
    """
    alpha = _check_order(alpha)
    t, scalar = _eval_points(t)
    if np.any(t >= b):
        raise DomainError("weyl_right_adjusted requires t < b")
    if np.any(t < -1e-12 * g.grid.t_end):
        raise DomainError("evaluation point before the grid start")
    _, jb = _index_range(g.grid, 0.0, b)
    b_node = jb * g.grid.dt
    if abs(b_node - b) > 1e-9 * g.grid.dt:
        raise DomainError(f"upper limit b={b} is not a grid node")
    reflected = g.values[jb::-1] - g.values[jb]
    out = _left_weyl_pl(reflected, g.grid.dt, 1.0 - alpha, b_node - t)
    return float(out[0]) if scalar else out


def check_admissible(alpha, f_exponent, g_exponent, tol=0.0):
    """Raise unless ``gamma_f > alpha``, ``beta_g > 1 - alpha``, ``gamma_f + beta_g > 1``.

    ``tol`` relaxes each inequality; it absorbs the sampling error of
    estimated exponents.
    """
    failed = []
    if not f_exponent > alpha - tol:
        failed.append(f"gamma_f={f_exponent:.4g} > alpha={alpha:.4g}")
    if not g_exponent > 1 - alpha - tol:
        failed.append(f"beta_g={g_exponent:.4g} > 1 - alpha={1 - alpha:.4g}")
    if not f_exponent + g_exponent > 1 - tol:
        failed.append(f"gamma_f + beta_g={f_exponent + g_exponent:.4g} > 1")
    if failed:
        raise AdmissibilityError("inadmissible exponents; failed: " + "; ".join(failed))


def _cell_rule(q, left_exp, right_exp):
    """Gauss-Jacobi rule on [-1, 1] for weight (1-x)^right_exp (1+x)^left_exp.

    Returns nodes and weights already divided by the weight function.
    """
    if left_exp == 0 and right_exp == 0:
        return special.roots_legendre(q)
    x, w = special.roots_jacobi(q, right_exp, left_exp)
    return x, w / ((1 - x) ** right_exp * (1 + x) ** left_exp)


def zahle_integral(f, g, alpha, a=None, b=None, *, quad_points=8,
                   f_exponent=None, g_exponent=None, check=True):
    """Young integral of ``f`` against ``g`` on ``[a, b]`` via Weyl derivatives.

    The outer integral uses ``quad_points`` Gauss nodes per grid cell, with
    Jacobi weights on the end cells where the left derivative blows up like
    ``(t - a)^(-alpha)`` and the right one vanishes like ``(b - t)^alpha``.

    When ``check`` is set the Hölder exponents of ``f`` and ``g`` must satisfy
    ``gamma_f > alpha``, ``beta_g > 1 - alpha`` and ``gamma_f + beta_g > 1``.
    Exponents not given are estimated from the data and the inequalities
    are then relaxed by ``ESTIMATE_TOL``.
    """
    alpha = _check_order(alpha)
    if f.grid != g.grid:
        raise DomainError("f and g must share a grid")
    i, j = _index_range(f.grid, a, b)
    if check:
        estimated = f_exponent is None or g_exponent is None
        fe = min(1.0, estimate_holder_exponent(f)) if f_exponent is None else f_exponent
        ge = min(1.0, estimate_holder_exponent(g)) if g_exponent is None else g_exponent
        check_admissible(alpha, fe, ge, tol=ESTIMATE_TOL if estimated else 0.0)
    dt = f.grid.dt
    fv = f.values[i:j + 1]
    gv = g.values[i:j + 1]
    n = j - i
    width = n * dt

    xs, ws = special.roots_legendre(quad_points)
    offsets = 0.5 * (xs + 1.0)
    left_d = _left_weyl_cells(fv, dt, alpha, offsets)
    # the right derivative at cell c, offset x is the reflected left derivative
    # at cell n-1-c, offset 1-x
    right_d = _left_weyl_cells(gv[::-1] - gv[-1], dt, 1.0 - alpha, 1.0 - offsets)
    right_d = right_d[::-1]
    total = 0.5 * dt * np.sum(ws * left_d[1:-1] * right_d[1:-1])

    # end cells: Jacobi rules absorb (t-a)^(-alpha) and (b-t)^alpha
    ends = [0, n - 1] if n > 1 else [0]
    for c in ends:
        left = -alpha if c == 0 else 0.0
        right = alpha if c == n - 1 else 0.0
        xe, we = _cell_rule(quad_points, left, right)
        tau = (c + 0.5 * (xe + 1.0)) * dt
        ld = _left_weyl_pl(fv, dt, alpha, tau)
        rd = _left_weyl_pl(gv[::-1] - gv[-1], dt, 1.0 - alpha, width - tau)
        total += 0.5 * dt * np.sum(we * ld * rd)
    return float(-total)


def rs_sum(f, g, a=None, b=None):
    """Left-point Riemann-Stieltjes sum over the grid cells in ``[a, b]``."""
    if f.grid != g.grid:
        raise DomainError("f and g must share a grid")
    i, j = _index_range(f.grid, a, b)
    return float(np.sum(f.values[i:j] * np.diff(g.values[i:j + 1])))


def beta_kernel_integral(s, t, a, d):
    """Closed form of the integral of ``(r-s)^(-a) (t-r)^(-d)`` over ``[s, t]``."""
    _check_kernel_args(s, t, a, d)
    return float(np.exp((1 - a - d) * np.log(t - s) + special.betaln(1 - a, 1 - d)))


def beta_kernel_quadrature(s, t, a, d):
    """Same integral by adaptive quadrature, split at the midpoint.

    Each half carries one algebraic endpoint singularity, handled by QUADPACK's
    algebraic weight.
    """
    _check_kernel_args(s, t, a, d)
    mid = 0.5 * (s + t)
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    left, _ = integrate.quad(lambda r: (t - r) ** -d, s, mid, weight="alg",
                             wvar=(-a, 0.0), **opts)
    right, _ = integrate.quad(lambda r: (r - s) ** -a, mid, t, weight="alg",
                              wvar=(0.0, -d), **opts)
    return left + right


def _check_kernel_args(s, t, a, d):
    if not (0 <= a < 1 and 0 <= d < 1):
        raise DomainError(f"kernel exponents must lie in [0, 1), got a={a}, d={d}")
    if not s < t:
        raise DomainError(f"kernel integral requires s < t, got s={s}, t={t}")


@dataclass(frozen=True)
class YoungBound:
    lhs: float
    rhs_factor: float
    ratio: float


def young_bound_check(f, g, trip, s, t, *, quad_points=4):
    """Empirical constant in ``|int_s^t f dg| <= C ||f||_{gamma,s,t} |||g|||_beta (t-s)^beta``."""
    if not isinstance(trip, ExponentTriple):
        trip = ExponentTriple(*trip)
    lhs = abs(zahle_integral(f, g, trip.alpha, s, t, quad_points=quad_points,
                             check=False))
    i, j = _index_range(f.grid, s, t)
    span = (j - i) * f.grid.dt
    rhs = holder_norm(f, trip.gamma, s, t) * holder_seminorm(g, trip.beta) * span**trip.beta
    if rhs == 0.0:
        if lhs > 1e-14:
            raise ArithmeticError(
                f"bound violated: integral {lhs:.3e} with vanishing right-hand side"
            )
        return YoungBound(lhs, rhs, 0.0)
    return YoungBound(lhs, rhs, lhs / rhs)
