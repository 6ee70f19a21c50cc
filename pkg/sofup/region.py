# Copyright (C) 2026 The sofup authors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
#

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import scipy.integrate

import sofup.cfg as cfg
from sofup.errors import DomainError, QuadratureFailure

# Guaranteed stability region in the unit square of (tau, theta) perturbation coordinates:
# the updated loop is provably stable whenever sin(pi tau / 2) sin(pi theta / 2) < beta / rho.
# All integrals over tau in [kappa, 1] go through tau = kappa + s^2, which removes the
# square-root behaviour of the integrands at tau = kappa.


@dataclass(frozen=True)
class StabilityRegion:
    """Class to represent the guaranteed stability region for a given MDRP beta and bound rho."""

    kappa: float
    rho: float
    beta: float
    full_square: bool

    @property
    def ratio(self) -> float:
        return self.beta / self.rho


def _check_positive(**values) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def kappa(beta: float, rho: float) -> float:
    """(2/pi) arcsin(beta/rho), the tau below which every theta is safe."""
    _check_positive(beta=beta, rho=rho)
    if beta > rho:
        raise DomainError(f"beta = {beta} > rho = {rho}: the whole square is safe, no kappa")

    return (2 / math.pi) * math.asin(beta / rho)


def stability_region(beta: float, rho: float) -> StabilityRegion:
    _check_positive(beta=beta, rho=rho)
    if rho < beta:
        return StabilityRegion(kappa=1.0, rho=rho, beta=beta, full_square=True)

    return StabilityRegion(kappa=kappa(beta, rho), rho=rho, beta=beta, full_square=False)


def _check_kappa(k: float) -> None:
    if not 0 < k <= 1:
        raise DomainError(f"kappa must lie in (0, 1], got {k}")


def zeta(tau: float, kappa: float) -> float:
    """Boundary theta of the region at a given tau >= kappa."""
    _check_kappa(kappa)
    if not kappa <= tau <= 1:
        raise DomainError(f"zeta needs kappa <= tau <= 1, got tau = {tau}, kappa = {kappa}")

    ratio = math.sin(math.pi * kappa / 2) / math.sin(math.pi * tau / 2)
    return (2 / math.pi) * math.asin(min(ratio, 1.0))


def _check_point(tau: float, theta: float) -> None:
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    if not 0 <= theta <= 1:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")


def contains(tau: float, theta: float, region: StabilityRegion) -> bool:
    """Membership through the region geometry: tau < kappa, or theta under the boundary."""
    _check_point(tau, theta)
    if region.full_square:
        return True
    if tau < region.kappa:
        return True

    return theta < zeta(tau, region.kappa)


def contains_inequality(tau: float, theta: float, region: StabilityRegion) -> bool:
    """Membership through the sufficient condition sin(pi tau/2) sin(pi theta/2) < beta/rho."""
    _check_point(tau, theta)
    if region.full_square:
        return True

    return math.sin(math.pi * tau / 2) * math.sin(math.pi * theta / 2) < region.ratio


def boundary(kappa: float, n: int) -> List[Tuple[float, float]]:
    """n samples (tau, zeta(tau, kappa)) along tau in [kappa, 1]."""
    _check_kappa(kappa)
    if n < 2:
        raise DomainError(f"need at least 2 boundary samples, got {n}")

    taus = np.linspace(kappa, 1.0, n)
    return [(float(t), zeta(float(t), kappa)) for t in taus]


def _integrate(f: Callable[[float], float], upper: float, scale: float) -> float:
    """Adaptive Gauss-Kronrod integral of f over [0, upper], with a breakpoint at scale."""
    points = [scale] if 0 < scale < 0.5 * upper else None

    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            value, abserr = scipy.integrate.quad(
                f,
                0.0,
                upper,
                epsabs=cfg.get_float("quad_epsabs"),
                epsrel=cfg.get_float("quad_epsrel"),
                limit=cfg.get_int("quad_limit"),
                points=points,
            )
        except scipy.integrate.IntegrationWarning as e:
            raise QuadratureFailure(f"quadrature did not converge: {e}")

    logging.debug(f"quadrature over [0, {upper:.6g}]: {value:.15g} (+- {abserr:.2e})")
    return value


def xi(kappa: float) -> float:
    """Area of the region relative to the unit square: kappa + integral of zeta over [kappa, 1]."""
    _check_kappa(kappa)
    if kappa == 1.0:
        return 1.0

    k = kappa
    # exact in floating point for kappa >= 1/2
    eps_k = 1.0 - k

    def integrand(s: float) -> float:
        s2 = s * s
        sin_a = math.sin(math.pi * (k + s2) / 2)
        # sin(a) - sin(pi k / 2), as a product
        gap = 2 * math.sin(math.pi * (2 * eps_k - s2) / 4) * math.sin(math.pi * s2 / 4)
        half = min(max(gap / sin_a / 2, 0.0), 1.0)
        # zeta = 1 - (2/pi) arccos(y), arccos(y) = 2 arcsin(sqrt((1 - y) / 2))
        z = 1.0 - (4 / math.pi) * math.asin(math.sqrt(half))
        return 2 * s * z

    return k + _integrate(integrand, math.sqrt(eps_k), math.sqrt(k))


def _inverse_root_integral(beta: float, rho: float) -> float:
    """Integral over tau in [kappa, 1] of q / sqrt(sin(pi tau/2)^2 - q^2), q = beta/rho."""
    _check_positive(beta=beta, rho=rho)
    if not beta < rho:
        raise DomainError(f"derivatives need beta < rho, got beta = {beta}, rho = {rho}")

    q = beta / rho
    k = kappa(beta, rho)
    # exact in floating point for kappa >= 1/2
    eps_k = 1.0 - k

    def integrand(s: float) -> float:
        s2 = s * s
        # sin^2(a) - q^2 = sin(pi s^2 / 2) sin(pi (k + s^2/2)); the first factor over s^2
        # is (pi/2) sinc(s^2/2), which cancels the ds = 2 s ds Jacobian smoothly
        x = min(k + s2 / 2, eps_k - s2 / 2)
        product = (math.pi / 2) * float(np.sinc(s2 / 2)) * math.sin(math.pi * x)
        return 2 * q / math.sqrt(product)

    return _integrate(integrand, math.sqrt(eps_k), math.sqrt(k))


def dxi_drho(beta: float, rho: float) -> float:
    """Derivative of the region area with respect to the perturbation bound rho (<= 0)."""
    value = -(2 / (math.pi * rho)) * _inverse_root_integral(beta, rho)
    return min(value, 0.0)


def dxi_dbeta(beta: float, rho: float) -> float:
    """Derivative of the region area with respect to the MDRP beta (>= 0)."""
    value = (2 / (math.pi * rho)) * _inverse_root_integral(beta, rho) / (beta / rho)
    return max(value, 0.0)


def xi_for(beta: float, rho: float) -> float:
    """Region area for an MDRP beta and a bound rho, 1 when rho < beta."""
    region = stability_region(beta, rho)
    if region.full_square:
        return 1.0
    return xi(region.kappa)
