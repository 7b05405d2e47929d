"""The double-well nonlinearity W = B + P split into a convex part and a
smooth perturbation.

Four kinds are provided:

* ``regular``      W(r) = (r²-1)²/4, convex part beta(r) = r³, pi(r) = -r.
* ``logarithmic``  W(r) = (1+r)ln(1+r) + (1-r)ln(1-r) - c r² on (-1, 1),
                   beta(r) = ln(1+r) - ln(1-r), pi(r) = -2cr.
* ``obstacle``     W(r) = I_[-1,1](r) - c r²; beta is the subdifferential of
                   the indicator and is only reachable through its Yosida
                   regularization beta_eps(r) = (r - clamp(r,-1,1))/eps.
* ``rational``     beta(r) = 1 - 1/(r+1) on (-1, ∞), pi = 0; singular at -1
                   with linear growth at +∞.

``gamma`` denotes beta + pi, the combination the state and adjoint equations
actually consume.  The obstacle kind supports forward solves only: its
regularized derivative is piecewise constant, good enough for the Newton
Jacobian but excluded from sensitivity/adjoint computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DomainViolationError,
    NumericalError,
    UnsupportedPotentialError,
)

REGULAR = "regular"
LOGARITHMIC = "logarithmic"
OBSTACLE = "obstacle"
RATIONAL = "rational"

_KINDS = (REGULAR, LOGARITHMIC, OBSTACLE, RATIONAL)


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    c: float = 1.0
    eps_yosida: float | None = None
    domain_margin: float = 1e-9

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if self.kind in (LOGARITHMIC, OBSTACLE) and self.c <= 0:
            raise ConfigurationError("coefficient c must be positive")
        if self.kind == OBSTACLE:
            if self.eps_yosida is None or self.eps_yosida <= 0:
                raise ConfigurationError(
                    "obstacle potential requires a positive eps_yosida"
                )
        if self.domain_margin <= 0:
            raise ConfigurationError("domain safety margin must be positive")

    @property
    def domain(self) -> tuple[float, float]:
        """Open interval on which beta/gamma may be evaluated."""
        if self.kind == LOGARITHMIC:
            return (-1.0, 1.0)
        if self.kind == RATIONAL:
            return (-1.0, math.inf)
        # regular is entire; obstacle goes through beta_eps, defined on all of R
        return (-math.inf, math.inf)

    @property
    def supports_derivatives(self) -> bool:
        """Whether gamma is C², as the sensitivity and adjoint systems need."""
        return self.kind != OBSTACLE


def _check_domain(spec: PotentialSpec, r):
    lo, hi = spec.domain
    if lo == -math.inf and hi == math.inf:
        return
    arr = np.asarray(r, dtype=float)
    bad = (arr <= lo + spec.domain_margin) | (arr >= hi - spec.domain_margin)
    if np.any(bad):
        offender = float(np.atleast_1d(arr)[np.atleast_1d(bad)][0])
        raise DomainViolationError(offender, lo, hi)


def _reject_obstacle(spec: PotentialSpec, what: str):
    if spec.kind == OBSTACLE:
        raise UnsupportedPotentialError(
            f"{what} is multivalued for the obstacle kind; use yosida()"
        )


def beta(spec: PotentialSpec, r):
    _reject_obstacle(spec, "beta")
    _check_domain(spec, r)
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = r**3
    elif spec.kind == LOGARITHMIC:
        out = np.log1p(r) - np.log1p(-r)
    else:
        out = 1.0 - 1.0 / (r + 1.0)
    return out if out.ndim else float(out)


def beta_prime(spec: PotentialSpec, r):
    _reject_obstacle(spec, "beta_prime")
    _check_domain(spec, r)
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = 3.0 * r**2
    elif spec.kind == LOGARITHMIC:
        out = 2.0 / (1.0 - r**2)
    else:
        out = 1.0 / (r + 1.0) ** 2
    return out if out.ndim else float(out)


def beta_second(spec: PotentialSpec, r):
    _reject_obstacle(spec, "beta_second")
    _check_domain(spec, r)
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = 6.0 * r
    elif spec.kind == LOGARITHMIC:
        out = 4.0 * r / (1.0 - r**2) ** 2
    else:
        out = -2.0 / (r + 1.0) ** 3
    return out if out.ndim else float(out)


def beta_hat(spec: PotentialSpec, r):
    """Primitive of beta with value 0 at 0 (the convex part of W)."""
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = 0.25 * r**4
    elif spec.kind == LOGARITHMIC:
        # extends continuously to ±1 with value 2 ln 2 at the endpoints
        with np.errstate(invalid="ignore", divide="ignore"):
            plus = np.where(r > -1.0, (1.0 + r) * np.log1p(r), np.inf)
            minus = np.where(r < 1.0, (1.0 - r) * np.log1p(-r), np.inf)
        plus = np.where(np.isclose(r, -1.0), 0.0, plus)
        minus = np.where(np.isclose(r, 1.0), 0.0, minus)
        out = plus + minus
        out = np.where((r < -1.0) | (r > 1.0), np.inf, out)
    elif spec.kind == OBSTACLE:
        # Moreau envelope of the indicator: squared distance to [-1, 1]
        gap = r - np.clip(r, -1.0, 1.0)
        out = gap**2 / (2.0 * spec.eps_yosida)
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(r > -1.0, r - np.log1p(np.maximum(r, -1.0)), np.inf)
    return out if out.ndim else float(out)


def pi_value(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = -r
    elif spec.kind == RATIONAL:
        out = np.zeros_like(r)
    else:
        out = -2.0 * spec.c * r
    return out if out.ndim else float(out)


def pi_prime(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = np.full_like(r, -1.0)
    elif spec.kind == RATIONAL:
        out = np.zeros_like(r)
    else:
        out = np.full_like(r, -2.0 * spec.c)
    return out if out.ndim else float(out)


def pi_second(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    return out if out.ndim else float(out)


def pi_hat(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    if spec.kind == REGULAR:
        out = -0.5 * r**2
    elif spec.kind == RATIONAL:
        out = np.zeros_like(r)
    else:
        out = -spec.c * r**2
    return out if out.ndim else float(out)


def w_hat(spec: PotentialSpec, r):
    """The full potential B + P (obstacle: with B replaced by its envelope)."""
    return beta_hat(spec, r) + pi_hat(spec, r)


def _obstacle_beta_eps(r, eps):
    r = np.asarray(r, dtype=float)
    return (r - np.clip(r, -1.0, 1.0)) / eps


def _obstacle_beta_eps_prime(r, eps):
    r = np.asarray(r, dtype=float)
    out = np.where(np.abs(r) > 1.0, 1.0 / eps, 0.0)
    out = np.where(np.abs(r) == 1.0, 0.5 / eps, out)
    return out


def gamma_value(spec: PotentialSpec, r):
    """beta + pi; for the obstacle kind the Yosida-regularized convex part."""
    if spec.kind == OBSTACLE:
        out = _obstacle_beta_eps(r, spec.eps_yosida) + np.asarray(pi_value(spec, r))
        return out if out.ndim else float(out)
    return beta(spec, r) + pi_value(spec, r)


def gamma_prime(spec: PotentialSpec, r):
    if spec.kind == OBSTACLE:
        out = _obstacle_beta_eps_prime(r, spec.eps_yosida) + np.asarray(
            pi_prime(spec, r)
        )
        return out if out.ndim else float(out)
    return beta_prime(spec, r) + pi_prime(spec, r)


def gamma_second(spec: PotentialSpec, r):
    _reject_obstacle(spec, "gamma_second")
    return beta_second(spec, r) + pi_second(spec, r)


def _resolvent_scalar(spec: PotentialSpec, r: float, eps: float) -> float:
    """Solve J + eps*beta(J) = r for J strictly inside the domain.

    The map is strictly increasing with range all of R (beta blows up at any
    finite endpoint), so a safeguarded Newton on a sign-changing bracket
    always converges.
    """
    lo, hi = spec.domain
    margin = spec.domain_margin

    def f(j):
        # inside the safety margin beta rejects; the sign of the blow-up is known
        try:
            return j + eps * float(beta(spec, j)) - r
        except DomainViolationError:
            return -math.inf if (math.isfinite(lo) and j - lo <= 2.0 * margin) else math.inf

    blo = lo + 2.0 * margin if math.isfinite(lo) else min(r, 0.0) - 1.0
    bhi = hi - 2.0 * margin if math.isfinite(hi) else max(r, 0.0) + 1.0
    while f(blo) > 0.0:
        if math.isfinite(lo):
            blo = lo + 0.5 * (blo - lo)
        else:
            blo -= 2.0 * (bhi - blo)
    while f(bhi) < 0.0:
        if math.isfinite(hi):
            bhi = hi - 0.5 * (hi - bhi)
        else:
            bhi += 2.0 * (bhi - blo)

    j = min(max(r, blo), bhi)
    for _ in range(200):
        fj = f(j)
        if abs(fj) <= 1e-14 * (1.0 + abs(r)):
            return j
        if fj > 0.0:
            bhi = j
        else:
            blo = j
        try:
            j_new = j - fj / (1.0 + eps * float(beta_prime(spec, j)))
        except DomainViolationError:
            j_new = math.nan
        if not math.isfinite(j_new) or not (blo < j_new < bhi):
            j_new = 0.5 * (blo + bhi)
        j = j_new
    raise NumericalError(
        f"Yosida resolvent did not converge for r={r}, eps={eps} "
        f"(last iterate {j}, residual {f(j):.3e})"
    )


def yosida(spec: PotentialSpec, r, eps: float):
    """Yosida regularization of beta at level eps."""
    if eps <= 0:
        raise ConfigurationError("Yosida level eps must be positive")
    if spec.kind == OBSTACLE:
        out = _obstacle_beta_eps(r, eps)
        return out if out.ndim else float(out)
    arr = np.asarray(r, dtype=float)
    flat = arr.ravel()
    out = np.array([(x - _resolvent_scalar(spec, x, eps)) / eps for x in flat])
    out = out.reshape(arr.shape)
    return out if out.ndim else float(out)
