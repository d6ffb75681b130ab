"""Sufficient stability conditions and the combined certificate."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from . import spectrum
from .kernels import Constant, Exponential
from .errors import LabError

STRICT_MARGIN = 1e-12
NUMERIC_THRESHOLD = -1e-6

CERTIFIED_ANALYTIC = "CERTIFIED_ANALYTIC"
CERTIFIED_NUMERIC_ONLY = "CERTIFIED_NUMERIC_ONLY"
NOT_CERTIFIED = "NOT_CERTIFIED"

EXIT_CODES = {CERTIFIED_ANALYTIC: 0, CERTIFIED_NUMERIC_ONLY: 10, NOT_CERTIFIED: 20}


class Condition(NamedTuple):
    holds: bool
    margin: float
    applicable: bool = True


def check_prop43(sys):
    """L1 smallness ``||gamma||_1 + ||beta||_1 < 1`` of the abstract kernels.

    Only applicable without point delays; otherwise the returned condition
    has ``applicable=False`` and ``holds=False``.
    """
    margin = 1.0 - sys.gamma.l1_norm() - sys.beta.l1_norm()
    if sys.has_point_delay:
        return Condition(False, margin, False)
    return Condition(margin > STRICT_MARGIN, margin)


def check_intro(sys):
    """``2||gamma||_1 + ||beta||_1 < 1`` on the heat-equation kernels (None if
    the system was not built from the concrete form)."""
    if sys.concrete is None:
        return None
    gamma, beta = sys.concrete
    margin = 1.0 - 2.0 * gamma.l1_norm() - beta.l1_norm()
    return Condition(margin > STRICT_MARGIN, margin)


def example_kappa_bound(r, mu, alpha):
    if mu <= 0:
        return math.exp(r * mu) * (1.0 - abs(alpha) * r) / r
    return (1.0 - abs(alpha) * r) / r


def check_example_bounds(r, kappa, mu, alpha):
    """Closed-form region for gamma = kappa e^{mu theta}, beta = alpha."""
    if not abs(alpha) < 1.0 / r:
        return False
    return abs(kappa) <= example_kappa_bound(r, mu, alpha)


def _example_params(sys):
    if isinstance(sys.gamma, Exponential) and isinstance(sys.beta, Constant) and not sys.has_point_delay:
        return sys.r, sys.gamma.kappa, sys.gamma.mu, sys.beta.a
    return None


@dataclass
class Certificate:
    cond_prop43: bool
    margin_prop43: float
    prop43_applicable: bool
    cond_intro: Optional[bool]
    margin_intro: Optional[float]
    cond_example: Optional[bool]
    numerical_abscissa: Optional[float]
    verdict: str
    notes: list

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def exit_code(self):
        return EXIT_CODES[self.verdict]


def certify(sys, use_numeric=True, box=None, threads=1):
    notes = []
    p43 = check_prop43(sys)
    if not p43.applicable:
        notes.append("point delays present: analytic L1 certificate not applicable")
    intro = check_intro(sys)
    ex = _example_params(sys)
    cond_example = check_example_bounds(*ex) if ex is not None else None

    absc = None
    if use_numeric:
        try:
            absc = spectrum.system_abscissa(sys, box=box, threads=threads).system_abscissa
        except LabError as exc:
            notes.append(f"numeric scan failed: {exc}")

    if p43.holds and p43.applicable:
        verdict = CERTIFIED_ANALYTIC
    elif absc is not None and absc < NUMERIC_THRESHOLD:
        verdict = CERTIFIED_NUMERIC_ONLY
    else:
        verdict = NOT_CERTIFIED
        if absc is not None and abs(absc) <= -NUMERIC_THRESHOLD:
            notes.append("INCONCLUSIVE: numerical abscissa within 1e-6 of zero")
        elif absc is not None and absc > 0:
            notes.append("positive numerical abscissa (evidence of instability, not a proof)")
    return Certificate(
        cond_prop43=p43.holds,
        margin_prop43=p43.margin,
        prop43_applicable=p43.applicable,
        cond_intro=None if intro is None else intro.holds,
        margin_intro=None if intro is None else intro.margin,
        cond_example=cond_example,
        numerical_abscissa=absc,
        verdict=verdict,
        notes=notes,
    )
