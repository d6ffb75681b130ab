"""Deterministic reference solver by windowed contraction, and the resolvent check.

Per mode, with D = a1 shift(-r) + Q_gamma and F = -k^2 (a2 shift(-r) + Q_beta),
the solution satisfies

    x(t) = D x_t + e^{-k^2 (t - w)} z(w) + int_w^t e^{-k^2 (t - s)} F x_s ds

on each window [w, w + t0], where z = x - D x is the head.  On a window
short enough that ||gamma||_2 sqrt(t0) + k^2 ||beta||_2 t0 <= 1/2 the right
hand side is a contraction in the unknown part of x and is iterated to a
fixed point.  Windows never exceed r, so the point-delay terms only read
already known values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import charfn
from .errors import ConfigError, NonConvergenceError, PreconditionError
from .kernels import trapezoid_weights

MAX_ITER = 200
TARGET_DELTA = 0.5


def contraction_factor(sys, k, t0):
    """delta(t0) = ||gamma||_2 sqrt(t0) + k^2 ||beta||_2 t0."""
    return sys.gamma.l2_norm() * math.sqrt(t0) + k * k * sys.beta.l2_norm() * t0


def window_size(sys, k, target=TARGET_DELTA):
    """Largest t0 <= r with contraction_factor(sys, k, t0) <= target."""
    g = sys.gamma.l2_norm()
    f = k * k * sys.beta.l2_norm()
    if f > 0:
        s = (-g + math.sqrt(g * g + 4.0 * f * target)) / (2.0 * f)
    elif g > 0:
        s = target / g
    else:
        return float(sys.r)
    return min(float(sys.r), s * s)


@dataclass
class PicardWindow:
    k: int
    start: float
    t0: float
    delta: float
    iterations: int
    contraction: list = field(default_factory=list)

    @property
    def max_contraction(self):
        return max(self.contraction) if self.contraction else 0.0


@dataclass
class PicardResult:
    t: np.ndarray  # (n+1,)
    x: np.ndarray  # (n+1, K)
    z: np.ndarray  # (n+1, K)
    h: float
    windows: list

    def at(self, times):
        """Linear interpolation of ``x`` at the given times."""
        times = np.asarray(times, dtype=float)
        return np.stack([np.interp(times, self.t, self.x[:, i]) for i in range(self.x.shape[1])], axis=-1)


def _grid(r, h):
    n = int(round(r / h))
    if n < 1 or abs(n * h - r) > 1e-9 * r:
        raise ConfigError(f"h={h} does not divide r={r}", key="h")
    return n


def _solve_mode(sys, k, hist, z0, n_steps, h, tol, wg, wb):
    N = wg.size - 1
    kk = float(k * k)
    x = np.empty(N + 1 + n_steps)
    x[: N + 1] = hist
    z = np.empty(n_steps + 1)
    z[0] = z0
    e = math.exp(-kk * h)
    n_win = max(1, int(math.floor(window_size(sys, k) / h * (1 + 1e-12))))
    use_g = bool(np.any(wg))
    windows = []
    pos = 0  # index of the window start on the time grid
    while pos < n_steps:
        n = min(n_win, n_steps - pos)
        i0 = N + pos  # index of the window start in x
        x[i0 + 1: i0 + n + 1] = x[i0]
        decay = e ** np.arange(n + 1)
        contraction = []
        prev_diff = None
        for it in range(1, MAX_ITER + 1):
            seg = x[i0 - N: i0 + n + 1]
            dx = sys.alpha1 * seg[: n + 1]
            if use_g:
                dx = dx + np.correlate(seg, wg, mode="valid")
            fx = -kk * (sys.alpha2 * seg[: n + 1] + np.correlate(seg, wb, mode="valid"))
            conv = lfilter([0.5 * h, 0.5 * h * e], [1.0, -e], fx)
            conv = conv - conv[0] * decay  # integral from the window start
            zw = decay * z[pos] + conv
            new = dx + zw
            diff = float(np.max(np.abs(new[1:] - x[i0 + 1: i0 + n + 1])))
            x[i0 + 1: i0 + n + 1] = new[1:]
            z[pos + 1: pos + n + 1] = zw[1:]
            if prev_diff is not None and prev_diff > 0:
                contraction.append(diff / prev_diff)
            prev_diff = diff
            if diff <= tol:
                break
        else:
            raise NonConvergenceError(
                f"mode {k}: Picard iteration did not converge on window at t={pos * h:.6g}")
        windows.append(PicardWindow(k, pos * h, n * h, contraction_factor(sys, k, n * h), it, contraction))
        pos += n
    return x[N:], z, windows


def picard_solve(sys, phi1, T, tol=1e-12, h=1e-3, phi0=None):
    """Deterministic solution on [0, T] (noise ignored), grid step ``h``.

    ``phi1`` gives the history per mode on theta = -r..0 in steps of ``h``
    (array (K, N+1) or callable ``theta -> (K, len(theta))``); ``phi0`` the
    head, defaulting to ``phi1(0) - D phi1``.
    """
    N = _grid(sys.r, h)
    n_steps = int(round(T / h))
    if abs(n_steps * h - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T={T} is not a multiple of h={h}", key="T")
    theta = np.linspace(-sys.r, 0.0, N + 1)
    hist = np.asarray(phi1(theta) if callable(phi1) else phi1, dtype=float)
    K = sys.modes
    if hist.shape != (K, N + 1):
        raise ConfigError(f"history shape {hist.shape} does not match ({K}, {N + 1})", key="history")
    # np.correlate(seg, w)[i] = sum_j seg[i + j] w[j], so w[j] multiplies
    # the history node theta_j = -r + j h of window node i
    wg = trapezoid_weights(sys.gamma, N)
    wb = trapezoid_weights(sys.beta, N)
    if phi0 is None:
        z0 = hist[:, -1] - sys.alpha1 * hist[:, 0] - hist @ wg
    else:
        z0 = np.broadcast_to(np.asarray(phi0, dtype=float), (K,))
    xs, zs, wins = [], [], []
    for k in range(1, K + 1):
        x, z, w = _solve_mode(sys, k, hist[k - 1], float(z0[k - 1]), n_steps, h, tol, wg, wb)
        xs.append(x)
        zs.append(z)
        wins.extend(w)
    t = h * np.arange(n_steps + 1)
    return PicardResult(t, np.stack(xs, axis=1), np.stack(zs, axis=1), h, wins)


# --------------------------------------------------------------------------
# resolvent identity


@dataclass
class ResolventResult:
    residual: float
    history_residual: float
    head_residual: float
    phi0: complex
    phi1: np.ndarray
    grid: np.ndarray


def _cumtrapz_from_right(g, h):
    """int_{theta_j}^{0} g on a uniform grid (0 at the right end)."""
    seg = 0.5 * h * (g[1:] + g[:-1])
    out = np.zeros_like(g)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def resolvent_check(sys, k, lam, psi0, psi1, n_grid, singular_tol=1e-9):
    """Solve (lam - A_k) phi = psi on an ``n_grid``-interval history grid and
    return the residual of the defining relation.

    ``psi1`` is a callable of theta or an array of ``n_grid + 1`` samples.
    """
    charfn._check_mode(sys, k)
    r = sys.r
    lam = complex(lam)
    delta = complex(charfn.delta_mode(sys, k, lam))
    if abs(delta) < singular_tol * (1.0 + abs(lam) + k * k):
        raise PreconditionError(f"Delta_{k}({lam}) = {delta:.3g} is singular")
    h = r / n_grid
    theta = np.linspace(-r, 0.0, n_grid + 1)
    p1 = np.asarray(psi1(theta) if callable(psi1) else psi1, dtype=complex)
    if p1.shape != theta.shape:
        raise ConfigError("psi1 does not match the grid", key="psi1")
    kk = float(k * k)
    wg = trapezoid_weights(sys.gamma, n_grid)
    wb = trapezoid_weights(sys.beta, n_grid)

    def D(v):
        return sys.alpha1 * v[0] + wg @ v

    def F(v):
        return -kk * (sys.alpha2 * v[0] + wb @ v)

    P = np.exp(lam * theta) * _cumtrapz_from_right(np.exp(-lam * theta) * p1, h)
    u = (psi0 + (lam + kk) * D(P) + F(P)) / delta
    phi1 = u * np.exp(lam * theta) + P
    phi0 = u - D(phi1)
    d1 = np.gradient(phi1, h, edge_order=2)
    hist_res = float(np.max(np.abs(lam * phi1 - d1 - p1)))
    head_res = float(abs((lam + kk) * phi0 - F(phi1) - psi0))
    return ResolventResult(hist_res + head_res, hist_res, head_res, complex(phi0), phi1, theta)


def fitted_order(grids, residuals):
    """Least-squares slope of log(residual) against log(1/grid step)."""
    x = np.log(np.asarray(grids, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    return float(np.polyfit(x, y, 1)[0] * -1.0)
