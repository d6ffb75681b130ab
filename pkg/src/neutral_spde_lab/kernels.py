"""Delay weight functions on ``[-r, 0]``.

Every kernel knows its horizon ``r`` and provides pointwise values, L1/L2
norms and the Laplace-type transform

    L_g(lam) = int_{-r}^0 g(theta) exp(lam * theta) dtheta

together with its derivative in ``lam``.  Closed forms are used for the
constant and exponential variants; tabulated kernels fall back to the
composite trapezoid rule on their own grid, which is the same rule the
simulator uses for history integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "DelayKernel",
    "Zero",
    "Constant",
    "Exponential",
    "Sum",
    "Table",
    "evaluate",
    "l1_norm",
    "l2_norm",
    "laplace",
    "laplace_derivative",
    "trapezoid_weights",
    "kernel_from_spec",
    "kernel_to_spec",
]

# |s r| below which the transform switches to its Taylor series.
SERIES_CUTOFF = 1e-6
# The derivative loses ~2 digits per decade near the removable singularity,
# so it switches to a longer series much earlier.
DERIV_SERIES_CUTOFF = 0.5
SUM_QUADRATURE_POINTS = 2049


def _phi0(s, r):
    """int_{-r}^0 exp(s theta) dtheta for complex ``s`` (array-friendly)."""
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    s = s.reshape(-1)
    z = s * r
    small = np.abs(z) < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = -np.expm1(-z) / np.where(small, 1.0, s)
    if np.any(small):
        zs = z[small]
        # r * sum_{n<6} (-z)^n / (n+1)!
        acc = np.zeros_like(zs)
        term = np.ones_like(zs)
        for n in range(6):
            acc += term / math.factorial(n + 1)
            term = term * (-zs)
        out[small] = r * acc
    return out.reshape(shape)


def _phi1(s, r):
    """int_{-r}^0 theta exp(s theta) dtheta, the s-derivative of ``_phi0``."""
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    s = s.reshape(-1)
    z = s * r
    small = np.abs(z) < DERIV_SERIES_CUTOFF
    ss = np.where(small, 1.0, s)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (z * np.exp(-z) + np.expm1(-z)) / (ss * ss)
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        term = np.ones_like(zs)
        for n in range(24):
            acc += term / (math.factorial(n) * (n + 2))
            term = term * (-zs)
        out[small] = -r * r * acc
    return out.reshape(shape)


def _trapz_weights(n, r):
    h = r / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _ret(x, like):
    # scalars in, scalars out
    if np.ndim(like) == 0:
        return x.item() if isinstance(x, np.ndarray) else x
    return x


class DelayKernel:
    """Base class; concrete variants are frozen dataclasses below."""

    r: float

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        slack = 1e-12 * self.r
        if np.any(theta < -self.r - slack) or np.any(theta > slack):
            raise DomainError(f"theta outside [-{self.r}, 0]")
        return np.clip(theta, -self.r, 0.0)

    def evaluate(self, theta):
        th = self._check_theta(theta)
        return _ret(self._values(th), theta)

    def laplace(self, lam):
        return _ret(self._laplace(np.asarray(lam, dtype=complex)), lam)

    def laplace_derivative(self, lam):
        return _ret(self._laplace_derivative(np.asarray(lam, dtype=complex)), lam)

    def _grid_quadrature(self, fn, n=SUM_QUADRATURE_POINTS):
        theta = np.linspace(-self.r, 0.0, n)
        return float(_trapz_weights(n, self.r) @ fn(self._values(theta)))

    def l1_norm(self):
        return self._grid_quadrature(np.abs)

    def l2_norm(self):
        return math.sqrt(self._grid_quadrature(np.square))

    @property
    def is_zero(self):
        return False

    def __add__(self, other):
        return Sum(self, other)


@dataclass(frozen=True)
class Zero(DelayKernel):
    r: float = 1.0

    def __post_init__(self):
        _check_r(self.r)

    def _values(self, theta):
        return np.zeros_like(theta)

    def _laplace(self, lam):
        return np.zeros_like(lam)

    _laplace_derivative = _laplace

    def l1_norm(self):
        return 0.0

    def l2_norm(self):
        return 0.0

    @property
    def is_zero(self):
        return True


@dataclass(frozen=True)
class Constant(DelayKernel):
    a: float
    r: float = 1.0

    def __post_init__(self):
        _check_r(self.r)

    def _values(self, theta):
        return np.full_like(theta, self.a, dtype=float)

    def _laplace(self, lam):
        return self.a * _phi0(lam, self.r)

    def _laplace_derivative(self, lam):
        return self.a * _phi1(lam, self.r)

    def l1_norm(self):
        return abs(self.a) * self.r

    def l2_norm(self):
        return abs(self.a) * math.sqrt(self.r)

    @property
    def is_zero(self):
        return self.a == 0.0


@dataclass(frozen=True)
class Exponential(DelayKernel):
    """theta -> kappa * exp(mu * theta)."""

    kappa: float
    mu: float
    r: float = 1.0

    def __post_init__(self):
        _check_r(self.r)

    def _values(self, theta):
        return self.kappa * np.exp(self.mu * theta)

    def _laplace(self, lam):
        return self.kappa * _phi0(lam + self.mu, self.r)

    def _laplace_derivative(self, lam):
        return self.kappa * _phi1(lam + self.mu, self.r)

    def l1_norm(self):
        return abs(self.kappa) * _phi0(self.mu, self.r).real.item()

    def l2_norm(self):
        return abs(self.kappa) * math.sqrt(_phi0(2.0 * self.mu, self.r).real.item())

    @property
    def is_zero(self):
        return self.kappa == 0.0


@dataclass(frozen=True)
class Sum(DelayKernel):
    left: DelayKernel
    right: DelayKernel
    r: float = field(init=False)

    def __post_init__(self):
        rl, rr = self.left.r, self.right.r
        if abs(rl - rr) > 1e-12 * max(rl, rr):
            raise ConfigError(f"sum operands have different horizons {rl} and {rr}")
        object.__setattr__(self, "r", rl)

    def _values(self, theta):
        return self.left._values(theta) + self.right._values(theta)

    def _laplace(self, lam):
        return self.left._laplace(lam) + self.right._laplace(lam)

    def _laplace_derivative(self, lam):
        return self.left._laplace_derivative(lam) + self.right._laplace_derivative(lam)

    @property
    def is_zero(self):
        return self.left.is_zero and self.right.is_zero


@dataclass(frozen=True, eq=False)
class Table(DelayKernel):
    """Samples on the uniform grid ``linspace(-r, 0, len(values))``."""

    values: np.ndarray
    r: float = 1.0

    def __post_init__(self):
        _check_r(self.r)
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ConfigError("table kernel needs at least 2 samples", key="values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (
            isinstance(other, Table)
            and self.r == other.r
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def grid(self):
        return np.linspace(-self.r, 0.0, self.values.size)

    def _values(self, theta):
        return np.interp(theta, self.grid, self.values)

    def _transform(self, lam, power):
        theta = self.grid
        wg = _trapz_weights(theta.size, self.r) * self.values * theta**power
        flat = lam.reshape(-1)
        out = np.empty(flat.shape, dtype=complex)
        chunk = max(1, 2**20 // theta.size)
        for i in range(0, flat.size, chunk):
            out[i : i + chunk] = np.exp(np.multiply.outer(flat[i : i + chunk], theta)) @ wg
        return out.reshape(lam.shape)

    def _laplace(self, lam):
        return self._transform(lam, 0)

    def _laplace_derivative(self, lam):
        return self._transform(lam, 1)

    def l1_norm(self):
        return float(_trapz_weights(self.values.size, self.r) @ np.abs(self.values))

    def l2_norm(self):
        return math.sqrt(_trapz_weights(self.values.size, self.r) @ self.values**2)

    @property
    def is_zero(self):
        return not np.any(self.values)


def _check_r(r):
    if not (r > 0 and math.isfinite(r)):
        raise ConfigError(f"delay horizon must be positive, got {r}", key="r")


# functional aliases


def evaluate(kernel, theta):
    return kernel.evaluate(theta)


def l1_norm(kernel):
    return kernel.l1_norm()


def l2_norm(kernel):
    return kernel.l2_norm()


def laplace(kernel, lam):
    return kernel.laplace(lam)


def laplace_derivative(kernel, lam):
    return kernel.laplace_derivative(lam)


def trapezoid_weights(kernel, n_intervals):
    """Kernel samples times composite-trapezoid weights on ``n_intervals + 1``
    uniform nodes of ``[-r, 0]`` (node 0 is ``theta = -r``)."""
    theta = np.linspace(-kernel.r, 0.0, n_intervals + 1)
    return _trapz_weights(n_intervals + 1, kernel.r) * kernel._values(theta)


def kernel_from_spec(spec, r):
    """Build a kernel from the config grammar, e.g. ``{"type": "constant", "a": 0.3}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("kernel spec must be an object with a 'type'", key="type")
    kind = spec["type"]
    allowed = {
        "zero": set(),
        "constant": {"a"},
        "exponential": {"kappa", "mu"},
        "table": {"values"},
        "sum": {"terms"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown kernel type {kind!r}", key="type")
    extra = set(spec) - allowed[kind] - {"type"}
    if extra:
        raise ConfigError(f"unknown kernel key(s) {sorted(extra)}", key=sorted(extra)[0])
    missing = allowed[kind] - set(spec)
    if missing:
        raise ConfigError(f"missing kernel key(s) {sorted(missing)}", key=sorted(missing)[0])
    if kind == "zero":
        return Zero(r)
    if kind == "constant":
        return Constant(float(spec["a"]), r)
    if kind == "exponential":
        return Exponential(float(spec["kappa"]), float(spec["mu"]), r)
    if kind == "table":
        return Table(np.asarray(spec["values"], dtype=float), r)
    terms = [kernel_from_spec(t, r) for t in spec["terms"]]
    if not terms:
        return Zero(r)
    return reduce(Sum, terms)


def kernel_to_spec(kernel):
    if isinstance(kernel, Zero):
        return {"type": "zero"}
    if isinstance(kernel, Constant):
        return {"type": "constant", "a": kernel.a}
    if isinstance(kernel, Exponential):
        return {"type": "exponential", "kappa": kernel.kappa, "mu": kernel.mu}
    if isinstance(kernel, Table):
        return {"type": "table", "values": kernel.values.tolist()}
    terms = []
    for part in (kernel.left, kernel.right):
        sub = kernel_to_spec(part)
        terms.extend(sub["terms"] if sub["type"] == "sum" else [sub])
    return {"type": "sum", "terms": terms}
