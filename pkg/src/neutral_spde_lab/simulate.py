"""Per-mode time stepping of the neutral stochastic delay system.

Mode k obeys

    d[y - a1 y(t-r) - Q_gamma y_t] = -k^2 [y - a1 y(t-r) - Q_gamma y_t] dt
                                     -k^2 [a2 y(t-r) + Q_beta y_t] dt + b_k dW

with one scalar Brownian motion shared by all modes.  The state is the
bracket ``z`` (head) plus the history of ``y`` on the step grid over
[-r, 0].  History integrals use the composite trapezoid rule; the weight
on the newest node is folded into a scalar (explicit) or 2x2 (semi-implicit)
solve for the new value of ``y``.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _stepper_py
from .errors import ConfigError, StepSingularError
from .kernels import Sum, trapezoid_weights
from .noise import brownian_increments

try:
    from . import _stepper as _stepper_c
except ImportError:  # pragma: no cover - depends on the build
    _stepper_c = None

BACKENDS = {"python": _stepper_py.advance}
if _stepper_c is not None:
    BACKENDS["cython"] = _stepper_c.advance

if os.environ.get("NEUTRAL_SPDE_LAB_PURE") or _stepper_c is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

SCHEMES = ("explicit", "semi_implicit")
SINGULAR = 1e-6
_CHUNK = 1 << 15


@dataclass(frozen=True)
class SimConfig:
    h: float
    T: float
    burn_in: float = 0.0
    scheme: str = "semi_implicit"
    seed: int = 0
    replicas: int = 1
    stride: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError("h must be positive", key="h")
        if self.T < 0:
            raise ConfigError("T must be non-negative", key="T")
        if self.T > 0 and not self.burn_in < self.T:
            raise ConfigError("burn_in must be smaller than T", key="burn_in")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}", key="scheme")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1", key="replicas")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1", key="stride")

    def steps(self, duration=None):
        duration = self.T if duration is None else duration
        n = int(round(duration / self.h))
        if abs(n * self.h - duration) > 1e-9 * max(1.0, duration):
            raise ConfigError(f"duration {duration} is not a multiple of h={self.h}", key="T")
        return n


def history_intervals(r, h):
    n = int(round(r / h))
    if n < 1 or abs(n * h - r) > 1e-9 * r:
        raise ConfigError(f"h={h} does not divide r={r}", key="h")
    return n


@dataclass
class SegmentState:
    """Lifted state: head ``z`` (R, K) and history ``y`` (R, K, N+1) on
    theta = -r, -r+h, ..., 0, at time ``t = step * h``."""

    z: np.ndarray
    history: np.ndarray
    h: float
    step: int = 0

    @property
    def t(self):
        return self.step * self.h

    @property
    def y(self):
        return self.history[..., -1]

    def copy(self):
        return SegmentState(self.z.copy(), self.history.copy(), self.h, self.step)


@dataclass
class Trajectory:
    t: np.ndarray  # (n_out,)
    y: np.ndarray  # (R, n_out, K)
    z: np.ndarray  # (R, n_out, K)
    final: SegmentState

    def to_csv(self, path, replica=0):
        K = self.y.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"y_{k}" for k in range(1, K + 1)] + [f"z_{k}" for k in range(1, K + 1)])
            for i, t in enumerate(self.t):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.y[replica, i]]
                           + [repr(float(v)) for v in self.z[replica, i]])


def _weights(sys, h):
    N = history_intervals(sys.r, h)
    wg = trapezoid_weights(sys.gamma, N)
    # drift kernel beta - gamma; the bracket's A-part is expanded
    wq = trapezoid_weights(sys.beta, N) - wg
    return np.ascontiguousarray(wg), np.ascontiguousarray(wq)


def head_from_history(sys, history, h):
    """Bracket value ``y(0) - a1 y(-r) - Q_gamma[y]`` of a history segment."""
    wg, _ = _weights(sys, h)
    return history[..., -1] - sys.alpha1 * history[..., 0] - history @ wg


def recovery_residual(sys, state):
    """|z - (y - a1 y(t-r) - Q_gamma y_t)| per replica and mode."""
    return np.abs(state.z - head_from_history(sys, state.history, state.h))


def init_history(sys, phi1, h, phi0=None, replicas=1):
    """Initial SegmentState from a history ``phi1`` and optional head ``phi0``.

    ``phi1`` is an array (K, N+1) or (R, K, N+1) on theta = -r..0, or a
    callable ``theta -> (K, len(theta))``.  Without ``phi0`` the head is the
    bracket of the history.  A supplied ``phi0`` is honoured and the newest
    history node is re-solved so that the bracket matches it.
    """
    N = history_intervals(sys.r, h)
    K = sys.modes
    theta = np.linspace(-sys.r, 0.0, N + 1)
    if callable(phi1):
        phi1 = phi1(theta)
    hist = np.array(phi1, dtype=float)
    if hist.ndim == 2:
        hist = np.broadcast_to(hist, (replicas,) + hist.shape).copy()
    if hist.shape[1:] != (K, N + 1):
        raise ConfigError(f"history shape {hist.shape} does not match (R, {K}, {N + 1})", key="history")
    if phi0 is None:
        z = head_from_history(sys, hist, h)
    else:
        wg, _ = _weights(sys, h)
        z = np.broadcast_to(np.asarray(phi0, dtype=float), hist.shape[:2]).copy()
        rest = hist[..., :-1] @ wg[:-1] + sys.alpha1 * hist[..., 0]
        hist[..., -1] = (z + rest) / (1.0 - wg[-1])
    return SegmentState(np.ascontiguousarray(z), np.ascontiguousarray(hist), h, 0)


def _check_singular(sys, config, wg):
    g_end = wg[-1]
    if config.scheme == "explicit":
        det = np.array([1.0 - g_end])
    else:
        k2 = np.arange(1, sys.modes + 1) ** 2
        det = 1.0 - g_end + config.h * k2
    if np.min(np.abs(det)) < SINGULAR:
        raise StepSingularError("trapezoid endpoint solve is singular; reduce h")


def _run_group(advance, sys, config, state, n_steps, r0, r1, out_y, out_z, wg, wq, replica_offset):
    K = sys.modes
    M = wg.size
    hist = np.empty((r1 - r0, K, 2 * M))
    hist[..., :M] = state.history[r0:r1]
    hist[..., M:] = state.history[r0:r1]
    z = state.z[r0:r1].copy()
    a = (np.arange(1, K + 1, dtype=float)) ** 2
    b = np.ascontiguousarray(sys.noise, dtype=float)
    noisy = bool(np.any(b))
    semi = config.scheme == "semi_implicit"
    stride = config.stride
    chunk = stride * max(1, _CHUNK // stride)
    pos = 0
    done = 0
    o = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        if noisy:
            dW = np.stack([
                brownian_increments(config.seed, replica_offset + i, state.step + done, m, config.h)
                for i in range(r0, r1)
            ])
        else:
            dW = np.zeros((r1 - r0, m))
        n_rec = m // stride
        yo = np.empty((r1 - r0, n_rec, K))
        zo = np.empty((r1 - r0, n_rec, K))
        pos = advance(hist, pos, z, np.ascontiguousarray(dW), wg, wq, a, b, config.h,
                      sys.alpha1, sys.alpha2 - sys.alpha1, semi, stride, yo, zo)
        out_y[r0:r1, 1 + o:1 + o + n_rec] = yo
        out_z[r0:r1, 1 + o:1 + o + n_rec] = zo
        o += n_rec
        done += m
    idx = (pos + np.arange(M)) % M
    return z, hist[..., idx]


def run(sys, config, state, duration=None, threads=1, backend=None, replica_offset=0):
    """Integrate from ``state`` for ``duration`` (default ``config.T``).

    Output holds the initial state and every ``config.stride``-th step.  For
    fixed seed and config the result is bitwise identical for any
    ``threads`` (increments are a function of (seed, replica, step) only).
    """
    advance = BACKENDS[backend or BACKEND]
    n_steps = config.steps(duration)
    if n_steps % config.stride:
        raise ConfigError("number of steps must be a multiple of stride", key="stride")
    wg, wq = _weights(sys, config.h)
    _check_singular(sys, config, wg)
    if abs(state.h - config.h) > 1e-15 * config.h:
        raise ConfigError("state grid step differs from config.h", key="h")
    R, K = state.z.shape
    n_out = n_steps // config.stride
    out_y = np.empty((R, n_out + 1, K))
    out_z = np.empty((R, n_out + 1, K))
    out_y[:, 0] = state.history[..., -1]
    out_z[:, 0] = state.z
    groups = np.array_split(np.arange(R), max(1, min(threads, R)))
    groups = [(int(g[0]), int(g[-1]) + 1) for g in groups if g.size]
    args = (advance, sys, config, state, n_steps)
    if len(groups) > 1:
        with ThreadPoolExecutor(len(groups)) as pool:
            res = list(pool.map(lambda g: _run_group(*args, g[0], g[1], out_y, out_z, wg, wq, replica_offset), groups))
    else:
        res = [_run_group(*args, groups[0][0], groups[0][1], out_y, out_z, wg, wq, replica_offset)]
    z = np.concatenate([r[0] for r in res])
    hist = np.concatenate([r[1] for r in res])
    final = SegmentState(np.ascontiguousarray(z), np.ascontiguousarray(hist), config.h, state.step + n_steps)
    t = (state.step + config.stride * np.arange(n_out + 1)) * config.h
    return Trajectory(t, out_y, out_z, final)


def step(state, sys, config, dW, backend=None):
    """Advance a state by one step with the given increment(s) per replica."""
    advance = BACKENDS[backend or BACKEND]
    wg, wq = _weights(sys, config.h)
    _check_singular(sys, config, wg)
    R, K = state.z.shape
    M = wg.size
    hist = np.concatenate([state.history, state.history], axis=-1)
    z = state.z.copy()
    dW = np.ascontiguousarray(np.broadcast_to(np.asarray(dW, dtype=float).reshape(-1, 1), (R, 1)))
    yo = np.empty((R, 1, K))
    zo = np.empty((R, 1, K))
    a = np.arange(1, K + 1, dtype=float) ** 2
    pos = advance(hist, 0, z, dW, wg, wq, a, np.ascontiguousarray(sys.noise), config.h,
                  sys.alpha1, sys.alpha2 - sys.alpha1, config.scheme == "semi_implicit", 1, yo, zo)
    idx = (pos + np.arange(M)) % M
    return SegmentState(z, np.ascontiguousarray(hist[..., idx]), config.h, state.step + 1)


def reconstruct_field(modal, xi):
    """y(xi) = sum_k y_k sqrt(2/pi) sin(k xi); exactly zero at xi = 0 and pi."""
    modal = np.asarray(modal, dtype=float)
    xi = np.asarray(xi, dtype=float)
    K = modal.shape[-1]
    basis = math.sqrt(2.0 / math.pi) * np.sin(np.multiply.outer(np.arange(1, K + 1), xi))
    basis[:, (xi == 0.0) | (xi == math.pi)] = 0.0
    return modal @ basis


def restart_check(sys, config, state, s, t, backend=None):
    """Sup-norm gap between evolving s+t at once and s then t (noise off)."""
    quiet = sys.with_noise(np.zeros(sys.modes))
    cfg = replace(config, stride=1)
    direct = run(quiet, cfg, state, s + t, backend=backend).final
    mid = run(quiet, cfg, state, s, backend=backend).final
    mid = SegmentState(mid.z.copy(), mid.history.copy(), mid.h, mid.step)
    two = run(quiet, cfg, mid, t, backend=backend).final
    return float(max(np.max(np.abs(direct.z - two.z)), np.max(np.abs(direct.history - two.history))))


def zero_history(sys, h, replicas=1):
    N = history_intervals(sys.r, h)
    return init_history(sys, np.zeros((sys.modes, N + 1)), h, replicas=replicas)


def constant_history(sys, h, values, replicas=1):
    N = history_intervals(sys.r, h)
    vals = np.asarray(values, dtype=float).reshape(-1, 1)
    return init_history(sys, np.repeat(vals, N + 1, axis=1) * np.ones((sys.modes, 1)), h, replicas=replicas)
