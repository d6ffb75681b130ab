"""Characteristic scalars of the neutral system and per-mode characteristic functions.

The spatial operator is the Dirichlet Laplacian on (0, pi), so on the k-th
sine mode it acts as multiplication by ``-k**2``.  With

    m(lam) = lam * (1 - a1 e^{-lam r} - L_gamma(lam))
    n(lam) = 1 - a1 e^{-lam r} - L_gamma(lam) + a2 e^{-lam r} + L_beta(lam)

the mode-k characteristic function is ``m(lam) + k**2 n(lam)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError, SingularTransferError
from .kernels import Constant, DelayKernel, Exponential, Sum, Zero

DEFAULT_CLASSIFY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NeutralSystem:
    """Problem datum in abstract neutral form.

    ``gamma`` sits inside the neutral bracket, ``beta`` multiplies the
    spatial operator applied to the history.  ``concrete`` keeps the
    original (gamma, beta) pair when the system came from the heat-equation
    form via :func:`from_concrete`.
    """

    r: float
    gamma: DelayKernel
    beta: DelayKernel
    alpha1: float = 0.0
    alpha2: float = 0.0
    noise: np.ndarray = field(default_factory=lambda: np.ones(1))
    concrete: Optional[tuple] = None
    c0: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigError("r must be positive", key="r")
        for name in ("gamma", "beta"):
            k = getattr(self, name)
            if abs(k.r - self.r) > 1e-12 * self.r:
                raise ConfigError(f"{name} horizon {k.r} differs from r={self.r}", key=name)
        b = np.array(self.noise, dtype=float).reshape(-1)
        if b.size < 1:
            raise ConfigError("at least one mode is required", key="modes")
        b.setflags(write=False)
        object.__setattr__(self, "noise", b)
        object.__setattr__(self, "alpha1", float(self.alpha1))
        object.__setattr__(self, "alpha2", float(self.alpha2))

    @property
    def modes(self):
        return self.noise.size

    @property
    def has_point_delay(self):
        return self.alpha1 != 0.0 or self.alpha2 != 0.0

    def with_noise(self, noise):
        return NeutralSystem(self.r, self.gamma, self.beta, self.alpha1, self.alpha2,
                             noise, self.concrete, self.c0)

    def with_kernels(self, gamma, beta):
        return NeutralSystem(self.r, gamma, beta, self.alpha1, self.alpha2,
                             self.noise, None, self.c0)


def from_concrete(r, gamma, beta, modes=1, noise=None):
    """Rewrite the heat-equation form into abstract neutral form.

    The concrete equation applies the Laplacian to ``y`` and to the
    beta-weighted history; moving the bracket under the operator shifts
    ``gamma`` into the distributed term, so the abstract beta is
    ``beta + gamma``.
    """
    for name, k in (("gamma", gamma), ("beta", beta)):
        if abs(k.r - r) > 1e-12 * r:
            raise ConfigError(f"{name} horizon {k.r} differs from r={r}", key=name)
    if noise is None:
        noise = np.ones(modes)
    elif np.size(noise) != modes:
        raise ConfigError("noise length must equal modes", key="noise")
    if beta.is_zero and gamma.is_zero:
        beta_abs = Zero(r)
    elif gamma.is_zero:
        beta_abs = beta
    else:
        beta_abs = Sum(beta, gamma)
    return NeutralSystem(r, gamma, beta_abs, 0.0, 0.0, noise, concrete=(gamma, beta))


def example_system(r, kappa, mu, alpha, modes=1, noise=None):
    """Neutral Laplace example: gamma(theta) = kappa e^{mu theta}, beta = alpha,
    written directly in abstract form."""
    if noise is None:
        noise = np.ones(modes)
    return NeutralSystem(r, Exponential(kappa, mu, r), Constant(alpha, r), 0.0, 0.0, noise)


def no_delay(modes=1, noise=None, r=1.0):
    if noise is None:
        noise = np.ones(modes)
    return NeutralSystem(r, Zero(r), Zero(r), 0.0, 0.0, noise)


def _ret(x, like):
    return x.item() if np.ndim(like) == 0 else x


def _bracket(sys, lam):
    if sys.has_point_delay:
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(-lam * sys.r)
    else:
        e = np.zeros_like(lam)
    return e, 1.0 - sys.alpha1 * e - sys.gamma._laplace(lam)


def m_of(sys, lam):
    lam_a = np.asarray(lam, dtype=complex)
    _, br = _bracket(sys, lam_a)
    return _ret(lam_a * br, lam)


def n_of(sys, lam):
    lam_a = np.asarray(lam, dtype=complex)
    e, br = _bracket(sys, lam_a)
    return _ret(br + sys.alpha2 * e + sys.beta._laplace(lam_a), lam)


def _mn_and_derivs(sys, lam):
    r = sys.r
    e, br = _bracket(sys, lam)
    dg = sys.gamma._laplace_derivative(lam)
    m = lam * br
    n = br + sys.alpha2 * e + sys.beta._laplace(lam)
    dbr = r * sys.alpha1 * e - dg
    dm = br + lam * dbr
    dn = dbr - r * sys.alpha2 * e + sys.beta._laplace_derivative(lam)
    return m, n, dm, dn


def _check_mode(sys, k):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= sys.modes):
        raise DomainError(f"mode index {k} outside 1..{sys.modes}")


def delta_mode(sys, k, lam):
    _check_mode(sys, k)
    lam_a = np.asarray(lam, dtype=complex)
    e, br = _bracket(sys, lam_a)
    n = br + sys.alpha2 * e + sys.beta._laplace(lam_a)
    return _ret(lam_a * br + k * k * n, lam)


def delta_mode_derivative(sys, k, lam):
    _check_mode(sys, k)
    lam_a = np.asarray(lam, dtype=complex)
    _, _, dm, dn = _mn_and_derivs(sys, lam_a)
    return _ret(dm + k * k * dn, lam)


def n_derivative(sys, lam):
    lam_a = np.asarray(lam, dtype=complex)
    return _ret(_mn_and_derivs(sys, lam_a)[3], lam)


def transfer(sys, k, omega):
    """Mode response ``1 / Delta_k(i omega)``."""
    d = np.asarray(delta_mode(sys, k, 1j * np.asarray(omega, dtype=float)))
    if np.any(np.abs(d) < 1e-12):
        raise SingularTransferError(f"Delta_{k}(i omega) vanishes: system on the stability boundary")
    return _ret(1.0 / d, omega)


@dataclass(frozen=True)
class GammaClass:
    """Spectral set membership of a point.

    ``tag`` is ``"Gamma0"``, ``"Gamma1"`` or ``"NotSpectral"``.  For the
    self-adjoint diagonal operator used here the residual spectrum is empty
    and sigma(A) = sigma_p(A), so Gamma1 coincides with the point part.
    """

    tag: str
    k: Optional[int]
    n_residual: float
    delta_residual: float


def classify(sys, lam, tol=DEFAULT_CLASSIFY_TOL):
    if not tol > 0:
        raise DomainError("tol must be positive")
    lam = complex(lam)
    m = m_of(sys, lam)
    n = n_of(sys, lam)
    an = abs(n)
    if an <= tol:
        if abs(lam) > tol:
            return GammaClass("Gamma0", None, an, abs(m))
        return GammaClass("NotSpectral", None, an, abs(m))
    q = m / n
    best_k, best_res = None, np.inf
    for k in range(1, sys.modes + 1):
        res = abs(q + k * k)
        if res <= tol * k * k and res < best_res:
            best_k, best_res = k, res
    if best_k is not None:
        return GammaClass("Gamma1", best_k, an, abs(m + best_k**2 * n))
    # nearest mode for the residual report
    k_near = int(np.clip(round(np.sqrt(max(-q.real, 1.0))), 1, sys.modes))
    return GammaClass("NotSpectral", None, an, abs(m + k_near**2 * n))
