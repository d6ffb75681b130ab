"""Stationary second moments: frequency-domain oracle and window tests.

For a stable mode the stationary solution is Gaussian with

    C_jk = (1/2pi) int_R b_j b_k Re[T_j(iw) conj(T_k(iw))] dw,   T_k = 1/Delta_k,

and v_k = C_kk.  The integrand is even in w, so only [0, inf) is
integrated.  On the imaginary axis

    |Delta_k(iw)| >= c w - k^2 (1 + S),   c = 1 - |a1| - ||gamma||_1,

with S = |a1| + ||gamma||_1 + |a2| + ||beta||_1, which gives the
rigorous tail bound

    (1/pi) int_W^inf |b_j b_k| / (c w - K)^2 dw = |b_j b_k| / (pi c (c W - K)).

W is chosen so this is below tol/4, and [0, W] is integrated by adaptive
Simpson to an estimated error below tol/2.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import charfn, spectrum
from .errors import (InsufficientLengthError, NonConvergenceError, PreconditionError,
                     TailBoundUnavailableError)

MAX_EVALS = 20_000_000
MIN_WINDOW_DELAYS = 10.0
DEFAULT_BATCHES = 20
BURN_IN_FACTOR = 50.0


def neutral_margin(sys):
    """c = 1 - |a1| - ||gamma||_1 (positive iff the neutral part contracts)."""
    return 1.0 - abs(sys.alpha1) - sys.gamma.l1_norm()


def _delta_growth(sys, k):
    s = abs(sys.alpha1) + sys.gamma.l1_norm() + abs(sys.alpha2) + sys.beta.l1_norm()
    return k * k * (1.0 + s)


def default_burn_in(abscissa):
    return BURN_IN_FACTOR / abs(abscissa)


def adaptive_simpson(f, breaks, tol, max_evals=MAX_EVALS):
    """Integrate a vectorized ``f`` over consecutive panels ``breaks``.

    Breadth-first adaptive Simpson: every live interval is halved at once,
    accepted when ``|S2 - S1| / 15`` is below its share of ``tol`` (halved
    at each split), and the Richardson-corrected value is accumulated.

    Returns ``(value, error_estimate, evaluations)``.
    """
    a = np.asarray(breaks[:-1], dtype=float)
    b = np.asarray(breaks[1:], dtype=float)
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    eps = np.full(a.size, tol / a.size)
    evals = 3 * a.size
    total = 0.0
    err = 0.0
    while a.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        evals += 2 * a.size
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        diff = left + right - whole
        est = np.abs(diff) / 15.0
        ok = (est <= eps) | (m - a <= 1e-14 * np.abs(m))
        total += float(np.sum((left + right + diff / 15.0)[ok]))
        err += float(np.sum(est[ok]))
        keep = ~ok
        if not keep.any():
            break
        if evals > max_evals:
            raise NonConvergenceError(
                f"adaptive quadrature exceeded {max_evals} evaluations (tol={tol:g})")
        a, m, b, lm, rm = a[keep], m[keep], b[keep], lm[keep], rm[keep]
        fa, flm, fm, frm, fb = fa[keep], flm[keep], fm[keep], frm[keep], fb[keep]
        left, right, e2 = left[keep], right[keep], eps[keep] / 2.0
        a, b, m = np.concatenate([a, m]), np.concatenate([m, b]), np.concatenate([lm, rm])
        fa = np.concatenate([fa, fm])
        fb = np.concatenate([fm, fb])
        fm = np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        eps = np.concatenate([e2, e2])
    return total, err, evals


@dataclass
class OracleResult:
    value: float
    quadrature_error: float
    tail_bound: Optional[float]
    omega_max: float
    evaluations: int

    def to_dict(self):
        return asdict(self)


def _check_stable(sys, *modes):
    for k in set(modes):
        absc = spectrum.mode_abscissa(sys, k)
        if not absc < 0:
            raise PreconditionError(f"mode {k} is not stable (abscissa {absc:.6g})")


def _omega_max(sys, bb, kmax, tol, omega_max):
    c = neutral_margin(sys)
    growth = _delta_growth(sys, kmax)
    if omega_max is not None:
        if c > 0 and c * omega_max > growth:
            return float(omega_max), bb / (math.pi * c * (c * omega_max - growth))
        return float(omega_max), None
    if c <= 0:
        raise TailBoundUnavailableError(
            "neutral part is not contractive (|a1| + ||gamma||_1 >= 1); supply omega_max")
    if bb == 0.0:
        return 0.0, 0.0
    w = (growth + 4.0 * bb / (math.pi * c * tol)) / c
    return w, bb / (math.pi * c * (c * w - growth))


def _breaks(sys, kmax, w):
    w0 = min(w, 10.0 * max(1.0, kmax * kmax, 1.0 / sys.r))
    lin = np.linspace(0.0, w0, 65)
    if w <= w0:
        return lin
    n = max(1, int(math.ceil(math.log2(w / w0))))
    return np.concatenate([lin, np.geomspace(w0, w, n + 1)[1:]])


def _integrate(sys, j, k, tol, omega_max):
    bj, bk = float(sys.noise[j - 1]), float(sys.noise[k - 1])
    bb = abs(bj * bk)
    w, tail = _omega_max(sys, bb, max(j, k), tol, omega_max)
    if bb == 0.0:
        return OracleResult(0.0, 0.0, tail, w, 0)

    def f(om):
        lam = 1j * om
        dj = charfn.delta_mode(sys, j, lam)
        dk = dj if j == k else charfn.delta_mode(sys, k, lam)
        return (bj * bk / math.pi) * np.real(1.0 / (dj * np.conj(dk)))

    val, err, n = adaptive_simpson(f, _breaks(sys, max(j, k), w), tol / 2.0)
    return OracleResult(val, err, tail, w, n)


def oracle_variance(sys, k, tol=1e-8, omega_max=None, check_stability=True, full=False):
    """Stationary variance of mode ``k`` (b_k^2 times the H2 norm squared of 1/Delta_k)."""
    charfn._check_mode(sys, k)
    if check_stability:
        _check_stable(sys, k)
    res = _integrate(sys, k, k, tol, omega_max)
    return res if full else res.value


def oracle_cross_cov(sys, j, k, tol=1e-8, omega_max=None, check_stability=True, full=False):
    """Stationary covariance of modes ``j`` and ``k`` driven by one Brownian motion."""
    charfn._check_mode(sys, j)
    charfn._check_mode(sys, k)
    if check_stability:
        _check_stable(sys, j, k)
    j, k = min(j, k), max(j, k)
    res = _integrate(sys, j, k, tol, omega_max)
    return res if full else res.value


def oracle_matrix(sys, tol=1e-8, omega_max=None, check_stability=True):
    """Full K x K covariance matrix and the largest per-entry error bound."""
    K = sys.modes
    if check_stability:
        _check_stable(sys, *range(1, K + 1))
    C = np.zeros((K, K))
    worst = 0.0
    for j in range(1, K + 1):
        for k in range(j, K + 1):
            res = _integrate(sys, j, k, tol, omega_max)
            C[j - 1, k - 1] = C[k - 1, j - 1] = res.value
            worst = max(worst, res.quadrature_error + (res.tail_bound or 0.0))
    return C, worst


# --------------------------------------------------------------------------
# empirical side


@dataclass
class WindowStats:
    mean: np.ndarray
    mean_se: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    autocov: np.ndarray
    autocov_se: np.ndarray


@dataclass
class StationaryEstimate:
    windows: list
    pooled_variance: np.ndarray
    pooled_variance_se: np.ndarray
    window_verdicts: dict
    verdict: str
    oracle_variance: Optional[np.ndarray] = None
    oracle_z: Optional[np.ndarray] = None
    oracle_verdict: Optional[str] = None
    lag_samples: int = 0
    batches: int = DEFAULT_BATCHES
    notes: list = field(default_factory=list)

    def to_dict(self):
        def conv(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, WindowStats):
                return {key: conv(v) for key, v in asdict(x).items()}
            if isinstance(x, dict):
                return {key: conv(v) for key, v in x.items()}
            if isinstance(x, list):
                return [conv(v) for v in x]
            return x
        return {key: conv(getattr(self, key)) for key in self.__dataclass_fields__}


def _batch_stat(x, batches):
    """Mean and batch-means standard error of per-sample values ``x`` (R, n, K).

    Batches are formed along time, averaged over replicas, then treated as
    approximately independent.
    """
    n = x.shape[1]
    edges = np.linspace(0, n, batches + 1).astype(int)
    bm = np.stack([x[:, edges[i]:edges[i + 1]].mean(axis=(0, 1)) for i in range(batches)])
    return bm.mean(axis=0), bm.std(axis=0, ddof=1) / math.sqrt(batches)


def _window_stats(y, lag, batches):
    mu = y.mean(axis=(0, 1))
    c = y - mu
    m, m_se = _batch_stat(y, batches)
    v, v_se = _batch_stat(c * c, batches)
    if lag < y.shape[1]:
        a, a_se = _batch_stat(c[:, : y.shape[1] - lag] * c[:, lag:], batches)
    else:  # pragma: no cover - prevented by the length check
        a = a_se = np.full(y.shape[2], np.nan)
    return WindowStats(m, m_se, v, v_se, a, a_se)


def _as_series(trajectory):
    if hasattr(trajectory, "t") and hasattr(trajectory, "y"):
        t, y = trajectory.t, trajectory.y
    else:
        t, y = trajectory
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :, None]
    elif y.ndim == 2:
        y = y[None]
    return t, y


def empirical_report(trajectory, burn_in, r, windows=2, batches=DEFAULT_BATCHES, oracle=None,
                     sigmas=3.0):
    """Two-window stationarity test of a sampled trajectory.

    ``trajectory`` is a :class:`~neutral_spde_lab.simulate.Trajectory` or a
    pair ``(t, y)`` with ``y`` of shape (n,), (n, K) or (R, n, K) on a
    uniform time grid.  Samples with ``t >= burn_in`` are split into
    ``windows`` equal windows; for each mode the mean, variance and lag-r
    autocovariance are compared between windows using batch-means standard
    errors.  If ``oracle`` (per-mode variances) is given, the pooled
    variance is compared against it as well.
    """
    t, y = _as_series(trajectory)
    if t.size < 2:
        raise InsufficientLengthError("trajectory has fewer than two samples")
    dt = float(t[1] - t[0])
    keep = t >= burn_in - 1e-12 * max(1.0, abs(burn_in))
    y = y[:, keep]
    n = y.shape[1]
    duration = n * dt
    need = windows * MIN_WINDOW_DELAYS * r
    if duration < need - 1e-9 * need or n < windows * batches * 2:
        raise InsufficientLengthError(
            f"post burn-in length {duration:.6g} is shorter than {windows} windows of {MIN_WINDOW_DELAYS:g}r"
            f" (= {need:.6g}) or has too few samples")
    lag = max(1, int(round(r / dt)))
    w_len = n // windows
    stats = [_window_stats(y[:, i * w_len:(i + 1) * w_len], lag, batches) for i in range(windows)]
    verdicts = {}
    ok_all = True
    for name in ("mean", "variance", "autocov"):
        s0, s1 = stats[0], stats[-1]
        diff = np.abs(getattr(s0, name) - getattr(s1, name))
        se = np.sqrt(getattr(s0, name + "_se") ** 2 + getattr(s1, name + "_se") ** 2)
        ok = diff < sigmas * se
        verdicts[name] = {"difference": diff, "combined_se": se, "pass": ok}
        ok_all = ok_all and bool(np.all(ok))
    pooled = y[:, : windows * w_len]
    c = pooled - pooled.mean(axis=(0, 1))
    pv, pv_se = _batch_stat(c * c, batches)
    est = StationaryEstimate(
        windows=stats,
        pooled_variance=pv,
        pooled_variance_se=pv_se,
        window_verdicts=verdicts,
        verdict="PASS" if ok_all else "FAIL",
        lag_samples=lag,
        batches=batches,
    )
    if oracle is not None:
        ov = np.asarray(oracle, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(pv - ov) / pv_se
        z = np.where((pv_se == 0) & (pv == ov), 0.0, z)
        est.oracle_variance = ov
        est.oracle_z = z
        est.oracle_verdict = "PASS" if bool(np.all(z < sigmas)) else "FAIL"
    return est
