"""Characteristic roots and spectral abscissa.

Roots of ``Delta_k`` (and of ``n`` for the Gamma0 set) are located by the
argument principle on rectangles, recursive bisection of boxes until each
holds a single root, and Newton polish.

Search regions.  For ``Re lam >= x`` the Laplace transforms obey
``|L_g(lam)| <= ||g||_1 exp(-x r)``, so every root of ``Delta_k`` there has

    |lam| <= Omega(x) = k^2 (1 + S e^{-x r}) / (1 - G e^{-x r}),

with ``G = |a1| + ||gamma||_1`` and ``S = G + |a2| + ||beta||_1``, as long as
the denominator is positive.  The box ``[x, Omega] x [-Omega, Omega]``
therefore holds *all* roots right of ``x``.  If it is empty, unit-width
strips further left are scanned (same height) until roots show up; those
values are reported as found, the rigorous part is the bound ``x``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import charfn
from .errors import (
    CertificateUnavailableError,
    ConfigError,
    ContourTooCoarseError,
    LabError,
    ModeError,
    RefineError,
    RootOnContourError,
)

ON_CONTOUR = 1e-9
MAX_SAMPLES = 2**20
MAX_NUDGES = 5
DISTINCT = 1e-6
MAX_REAL_EXTENT = 600.0  # keeps exp(-lam r) finite on the contour
DELAY_GROWTH_CAP = 100.0  # bound on S e^{a r} for the left edge of the bound box

_SPLITS = (0.5 + 0.0137, 0.5 - 0.0291, 0.5 + 0.0713, 0.5 - 0.1109, 0.37, 0.63)


@dataclass(frozen=True)
class SearchBox:
    """[re_min, re_max] x [-im_max, im_max]."""

    re_min: float
    re_max: float
    im_max: float
    contour_points: int = 256

    def __post_init__(self):
        if not self.re_min < self.re_max:
            raise ConfigError("re_min must be < re_max", key="re_min")
        if not self.im_max > 0:
            raise ConfigError("im_max must be positive", key="im_max")
        if self.contour_points < 8:
            raise ConfigError("contour_points must be >= 8", key="contour_points")

    def rect(self):
        return _Rect(self.re_min, self.re_max, -self.im_max, self.im_max)


@dataclass(frozen=True)
class _Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def center(self):
        return complex(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def diameter(self):
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def expanded(self, frac):
        dx = frac * (self.x1 - self.x0)
        dy = frac * (self.y1 - self.y0)
        return _Rect(self.x0 - dx, self.x1 + dx, self.y0 - dy, self.y1 + dy)

    def contains(self, z, slack=0.0):
        return (self.x0 - slack <= z.real <= self.x1 + slack
                and self.y0 - slack <= z.imag <= self.y1 + slack)

    def split(self, frac):
        if self.x1 - self.x0 >= self.y1 - self.y0:
            xm = self.x0 + frac * (self.x1 - self.x0)
            return _Rect(self.x0, xm, self.y0, self.y1), _Rect(xm, self.x1, self.y0, self.y1)
        ym = self.y0 + frac * (self.y1 - self.y0)
        return _Rect(self.x0, self.x1, self.y0, ym), _Rect(self.x0, self.x1, ym, self.y1)

    def as_box(self, contour_points=256):
        # symmetric view, used for reporting
        return {"re_min": self.x0, "re_max": self.x1, "im_min": self.y0, "im_max": self.y1}


class _OnContour(Exception):
    pass


def _contour_points(rect, s):
    """Map parameter s in [0, 4) to the counter-clockwise rectangle boundary."""
    edge = np.floor(s).astype(int) % 4
    t = s - np.floor(s)
    x0, x1, y0, y1 = rect.x0, rect.x1, rect.y0, rect.y1
    re = np.choose(edge, [x0 + t * (x1 - x0), np.full_like(t, x1), x1 - t * (x1 - x0), np.full_like(t, x0)])
    im = np.choose(edge, [np.full_like(t, y0), y0 + t * (y1 - y0), np.full_like(t, y1), y1 - t * (y1 - y0)])
    return re + 1j * im


def winding_number(f, rect, n_points=256, max_samples=MAX_SAMPLES, density=4.0):
    """Winding number of ``f`` around 0 along the boundary of ``rect``.

    Samples are refined until every consecutive argument change is below
    pi/2 and the modulus changes by less than a factor e between
    neighbours.  ``density`` is a floor on samples per unit length (the
    delay terms oscillate with period 2 pi / r along vertical edges).
    Raises ``_OnContour`` if ``|f|`` nearly vanishes on a sample.
    """
    w, h = rect.x1 - rect.x0, rect.y1 - rect.y0
    per = [max(8, int(round(n_points * L / (2 * (w + h)))), int(math.ceil(density * L)))
           for L in (w, h, w, h)]
    s = np.concatenate([e + np.arange(n) / n for e, n in enumerate(per)])
    vals = f(_contour_points(rect, s))
    while True:
        if not np.all(np.isfinite(vals)):
            raise ContourTooCoarseError("non-finite characteristic values on contour")
        if np.any(np.abs(vals) < ON_CONTOUR):
            raise _OnContour
        nxt = np.roll(vals, -1)
        ratio = nxt / vals
        dphi = np.angle(ratio)
        bad = (np.abs(dphi) >= 0.5 * np.pi) | (np.abs(np.log(np.abs(ratio))) >= 1.0)
        if not bad.any():
            break
        s_next = np.append(s[1:], 4.0)
        mids = 0.5 * (s[bad] + s_next[bad])
        if s.size + mids.size > max_samples:
            raise ContourTooCoarseError(f"contour refinement exceeded {max_samples} samples")
        idx = np.flatnonzero(bad) + 1
        s = np.insert(s, idx, mids)
        vals = np.insert(vals, idx, f(_contour_points(rect, mids)))
    return int(round(dphi.sum() / (2 * np.pi)))


def _count(f, rect, n_points=256, density=4.0):
    """Winding number with the 1 % box nudge when a root sits on the contour."""
    for _ in range(MAX_NUDGES + 1):
        try:
            return winding_number(f, rect, n_points, density=density), rect
        except _OnContour:
            rect = rect.expanded(0.01)
    raise RootOnContourError(f"root on contour after {MAX_NUDGES} nudges")


def newton(f, df, z0, scale=None, maxit=50):
    """Newton iteration; returns (root, residual) or raises RefineError.

    Accepts when ``|f| <= 1e-10 (1 + |z|^2)``, or when the step has stalled
    at rounding level relative to ``scale(z)`` (the size of the terms whose
    cancellation defines the root).
    """
    z = complex(z0)
    fz = complex(f(z))
    for _ in range(maxit):
        d = complex(df(z))
        if d == 0 or not np.isfinite(d):
            break
        step = fz / d
        z = z - step
        fz = complex(f(z))
        if not np.isfinite(fz):
            break
        if abs(step) <= 1e-12 * (1.0 + abs(z)):
            if abs(fz) <= 1e-10 * (1.0 + abs(z) ** 2):
                return z, abs(fz)
            if scale is not None and abs(fz) <= 1e-12 * scale(z):
                return z, abs(fz)
            break
    raise RefineError(f"Newton did not converge from {z0}")


@dataclass
class Root:
    value: complex
    residual: float
    cls: Optional[charfn.GammaClass] = None
    multiplicity: int = 1

    def to_dict(self):
        return {
            "re": self.value.real,
            "im": self.value.imag,
            "class": self.cls.tag if self.cls else None,
            "residual": self.residual,
            "multiplicity": self.multiplicity,
        }


def _find_in(f, df, rect, count, scale, n_points, depth=0, density=4.0):
    if count == 0:
        return []
    if count == 1 or rect.diameter < 1e-7 * (1 + abs(rect.center)):
        try:
            z, res = newton(f, df, rect.center, scale)
            if rect.contains(z, slack=1e-9 * (1 + rect.diameter)):
                return [Root(z, res, multiplicity=count)]
        except RefineError:
            if rect.diameter < 1e-7 * (1 + abs(rect.center)) or depth > 80:
                raise
    if depth > 80:
        raise RefineError("box subdivision depth exceeded")
    for frac in _SPLITS:
        a, b = rect.split(frac)
        try:
            ca = winding_number(f, a, n_points, density=density)
            cb = winding_number(f, b, n_points, density=density)
        except _OnContour:
            continue
        if ca + cb == count:
            return (_find_in(f, df, a, ca, scale, n_points, depth + 1, density)
                    + _find_in(f, df, b, cb, scale, n_points, depth + 1, density))
    raise RefineError("could not split box consistently")


def _merge(roots):
    out = []
    for r in sorted(roots, key=lambda r: (r.value.real, r.value.imag)):
        for o in out:
            if abs(o.value - r.value) <= DISTINCT:
                o.multiplicity += r.multiplicity
                break
        else:
            out.append(r)
    return out


def find_roots(f, df, rect, scale=None, n_points=256, density=4.0):
    """All roots of ``f`` inside ``rect`` (with the argument-principle count)."""
    count, rect = _count(f, rect, n_points, density)
    roots = _merge(_find_in(f, df, rect, count, scale, max(64, n_points // 4), density=density))
    return roots, count, rect


# per-mode machinery


def _quiet(fn):
    def wrapped(z):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return fn(z)
    return wrapped


def _mode_fns(sys, k):
    f = _quiet(lambda z: charfn.delta_mode(sys, k, z))
    df = _quiet(lambda z: charfn.delta_mode_derivative(sys, k, z))
    G, S = _growth_consts(sys)

    def scale(z):
        e = math.exp(min(700.0, max(0.0, -z.real * sys.r)))
        return abs(z) * (1 + G * e) + k * k * (1 + S * e)

    return f, df, scale


def _density(sys):
    return 4.0 * max(1.0, sys.r)


def _growth_consts(sys):
    G = abs(sys.alpha1) + sys.gamma.l1_norm()
    S = G + abs(sys.alpha2) + sys.beta.l1_norm()
    return G, S


def omega_bound(sys, k, x=0.0):
    """Bound on |lam| for roots of Delta_k with Re lam >= x (None if unavailable)."""
    G, S = _growth_consts(sys)
    e = math.exp(-x * sys.r)
    den = 1.0 - G * e
    if den <= 0:
        return None
    return k * k * (1.0 + S * e) / den


def _left_limit(sys, a_max):
    """How far left of 0 the bound box may start.

    Keeps the denominator of Omega at least (1-G)/2 and S e^{a r} at most
    DELAY_GROWTH_CAP, so the box height stays a modest multiple of k^2.
    """
    G, S = _growth_consts(sys)
    a = min(a_max, MAX_REAL_EXTENT / sys.r)
    if G > 0:
        a = min(a, math.log((1 + G) / (2 * G)) / sys.r)
    if S > 0:
        a = min(a, max(0.0, math.log(DELAY_GROWTH_CAP / S) / sys.r))
    return a


def count_roots(sys, k, box: SearchBox):
    f, _, _ = _mode_fns(sys, k)
    return _count(f, box.rect(), box.contour_points, _density(sys))[0]


def refine_root(sys, k, seed):
    f, df, scale = _mode_fns(sys, k)
    return newton(f, df, seed, scale)[0]


@dataclass
class ModeResult:
    k: int
    roots: list
    count: int
    abscissa: float
    box: dict
    rigorous_bound: Optional[float] = None
    bound_only: bool = False

    def to_dict(self):
        return {
            "k": self.k,
            "roots": [r.to_dict() for r in self.roots],
            "count": self.count,
            "abscissa": self.abscissa,
            "box": self.box,
            "rigorous_bound": self.rigorous_bound,
            "bound_only": self.bound_only,
        }


def _strip_search(f, df, scale, x_right, height, x_stop, n_points, density, width=1.0):
    """Scan unit strips leftwards from ``x_right`` until a non-empty one."""
    x = x_right
    while x > x_stop:
        x_new = max(x - width, x_stop)
        rect = _Rect(x_new, x, -height, height)
        roots, count, rect = find_roots(f, df, rect, scale, n_points, density)
        if count:
            return roots, count, rect
        x = x_new
        width *= 2
    return [], 0, None


def _scan(f, df, scale, x0, omega, x_stop, n_points, density):
    """Roots right of ``x0`` inside the bound box, else the first non-empty strip."""
    pad = 1.0
    rect = _Rect(x0, max(0.5, omega + pad), -(omega + pad), omega + pad)
    roots, count, rect = find_roots(f, df, rect, scale, n_points, density)
    if count:
        return roots, count, rect, False
    roots2, count2, rect2 = _strip_search(f, df, scale, x0, omega + pad, x_stop, n_points, density)
    if count2:
        return roots2, count2, rect2, False
    return [], 0, rect, True


def mode_roots(sys, k, box: Optional[SearchBox] = None, a_max=None, tol=charfn.DEFAULT_CLASSIFY_TOL):
    """Roots of Delta_k and its abscissa.  See module docstring for the region logic."""
    charfn._check_mode(sys, k)
    f, df, scale = _mode_fns(sys, k)
    a_max = 5.0 * k * k if a_max is None else a_max
    if box is not None:
        roots, count, rect = find_roots(f, df, box.rect(), scale, box.contour_points, _density(sys))
        for r in roots:
            r.cls = charfn.classify(sys, r.value, tol)
        absc = max((r.value.real for r in roots), default=-math.inf)
        return ModeResult(k, roots, count, absc, rect.as_box(), None, not roots)
    omega0 = omega_bound(sys, k, 0.0)
    if omega0 is None:
        raise CertificateUnavailableError(
            "neutral part not contractive (|alpha1| + ||gamma||_1 >= 1); supply a search box")
    a = _left_limit(sys, a_max)
    omega = omega_bound(sys, k, -a)
    x_stop = -min(a_max, MAX_REAL_EXTENT / sys.r)
    roots, count, rect, empty = _scan(f, df, scale, -a, omega, x_stop, 256, _density(sys))
    for r in roots:
        r.cls = charfn.classify(sys, r.value, tol)
    if empty:
        return ModeResult(k, [], 0, -a, rect.as_box(), -a, True)
    absc = max(r.value.real for r in roots)
    return ModeResult(k, roots, count, absc, rect.as_box(), -a, False)


def mode_abscissa(sys, k, box=None, a_max=None):
    return mode_roots(sys, k, box, a_max).abscissa


def gamma0_roots(sys, height=None, depth=20.0, tol=charfn.DEFAULT_CLASSIFY_TOL):
    """Nonzero roots of n.

    Right of ``x_n = ln(|a1| + |a2| + ||gamma||_1 + ||beta||_1) / r`` there
    are none, since ``|n - 1|`` stays below 1 there.  Strips left of that
    bound (height ``height``) are scanned for the rightmost roots.
    """
    G, S = _growth_consts(sys)
    if S == 0:
        return ModeResult(0, [], 0, -math.inf, {}, -math.inf, True)
    x_n = math.log(S) / sys.r
    f = _quiet(lambda z: charfn.n_of(sys, z))
    df = _quiet(lambda z: charfn.n_derivative(sys, z))

    def scale(z):
        return 1 + S * math.exp(min(700.0, max(0.0, -z.real * sys.r)))

    height = 20 * math.pi / sys.r if height is None else height
    x_right = x_n + 1e-3 * (1 + abs(x_n))
    roots, count, rect = _strip_search(f, df, scale, x_right, height, x_right - depth, 256, _density(sys))
    roots = [r for r in roots if abs(r.value) > tol]
    for r in roots:
        r.cls = charfn.classify(sys, r.value, tol)
    if not roots:
        return ModeResult(0, [], 0, x_n, {}, x_n, True)
    absc = max(r.value.real for r in roots)
    return ModeResult(0, roots, count, absc, rect.as_box(), x_n, False)


@dataclass
class RootReport:
    modes: list
    gamma0: ModeResult
    system_abscissa: float
    modes_scanned: int
    tail_note: str
    gamma0_dominates: bool = False

    def to_dict(self):
        g0 = self.gamma0.to_dict()
        g0.pop("k")
        return {
            "modes": [m.to_dict() for m in self.modes],
            "gamma0": g0,
            "system_abscissa": self.system_abscissa,
            "modes_scanned": self.modes_scanned,
            "tail_note": self.tail_note,
            "gamma0_dominates": self.gamma0_dominates,
        }


def _tail_note(absc):
    if len(absc) < 3:
        return f"only {len(absc)} mode(s) scanned; tail behaviour not assessed"
    last = absc[-3:]
    if all(b <= a + 1e-12 for a, b in zip(last, last[1:])):
        return "mode abscissae non-increasing over the last 3 modes (heuristic: higher modes do not raise the supremum)"
    return "mode abscissae increase over the last 3 modes; higher modes may raise the supremum (compare the Gamma0 abscissa, their accumulation set)"


def system_abscissa(sys, box=None, threads=1, a_max=None):
    """Spectral abscissa over modes 1..K plus the Gamma0 set."""

    def one(k):
        try:
            return mode_roots(sys, k, box, a_max)
        except LabError as exc:
            raise ModeError(k, exc) from exc

    ks = range(1, sys.modes + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            modes = list(pool.map(one, ks))
    else:
        modes = [one(k) for k in ks]
    g0 = gamma0_roots(sys)
    mode_max = max(m.abscissa for m in modes)
    sup = max(mode_max, g0.abscissa)
    return RootReport(
        modes=modes,
        gamma0=g0,
        system_abscissa=sup,
        modes_scanned=sys.modes,
        tail_note=_tail_note([m.abscissa for m in modes]),
        gamma0_dominates=g0.abscissa > mode_max,
    )
