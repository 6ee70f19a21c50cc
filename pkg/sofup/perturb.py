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
from dataclasses import dataclass

import numpy as np

from sofup.errors import (
    DegenerateCoverage,
    DimensionMismatch,
    DomainError,
    NormExceedsBound,
    ZeroPerturbation,
)
from sofup.statespace import Perturbation
from sofup.update import factorize

# blocks whose norm falls below this are treated as empty
BLOCK_EPS = 1e-12


def _unit(vector: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float).ravel()
    if len(vector) == 0:
        return vector

    norm = np.linalg.norm(vector)
    if abs(norm - 1.0) > 1e-12:
        raise DomainError(f"{name} must be a unit vector, got norm {norm}")
    return vector


def _canonical(length: int) -> np.ndarray:
    e1 = np.zeros(length)
    if length > 0:
        e1[0] = 1.0
    return e1


@dataclass(frozen=True)
class PerturbationCoords:
    """Class to represent a perturbation by size tau, split theta and two unit directions.

    ||Delta||_F = rho sin(pi tau / 2). theta = 0 puts all of Delta in the part a gain update
    cancels (direction phi_c), theta = 1 puts all of it in the part no update reaches (phi_s).
    """

    rho: float
    tau: float
    theta: float
    phi_c: np.ndarray
    phi_s: np.ndarray

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if not 0 < self.tau <= 1:
            raise DomainError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0 <= self.theta <= 1:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")

        object.__setattr__(self, "phi_c", _unit(self.phi_c, "phi_c"))
        object.__setattr__(self, "phi_s", _unit(self.phi_s, "phi_s"))

    @property
    def r(self) -> float:
        return self.rho * math.sin(math.pi * self.tau / 2)

    @classmethod
    def random(cls, n: int, m: int, p: int, rho: float, tau: float, theta: float, rng):
        """Builds coordinates with phi_c and phi_s drawn uniformly from their unit spheres."""
        phi_c = rng.standard_normal(m * p)
        phi_s = rng.standard_normal(n * n - m * p)
        phi_c /= np.linalg.norm(phi_c)
        if len(phi_s) > 0:
            phi_s /= np.linalg.norm(phi_s)

        return cls(rho=rho, tau=tau, theta=theta, phi_c=phi_c, phi_s=phi_s)


def synthesize(B: np.ndarray, C: np.ndarray, coords: PerturbationCoords) -> Perturbation:
    """Builds Delta = r U_B vec^-1(U_Omega [phi_c cos(pi theta/2); phi_s sin(pi theta/2)]) V_C^T."""
    projector = factorize(B, C)
    n, mp = projector.n, projector.mp

    if len(coords.phi_c) != mp:
        raise DimensionMismatch(f"phi_c must have length mp = {mp}, got {len(coords.phi_c)}")
    if len(coords.phi_s) != n * n - mp:
        raise DimensionMismatch(
            f"phi_s must have length n^2 - mp = {n * n - mp}, got {len(coords.phi_s)}"
        )
    if n * n == mp and coords.theta > 0:
        raise DegenerateCoverage("mp = n^2: every perturbation is cancellable, theta must be 0")

    half_pi_theta = math.pi * coords.theta / 2
    psi = np.concatenate(
        [coords.phi_c * math.cos(half_pi_theta), coords.phi_s * math.sin(half_pi_theta)]
    )

    delta = coords.r * projector.unrotate(psi)
    return Perturbation(delta=delta, rho=coords.rho)


def analyze(delta: Perturbation, B: np.ndarray, C: np.ndarray) -> PerturbationCoords:
    """Inverse of synthesize(): recovers (rho, tau, theta, phi_c, phi_s) from Delta."""
    projector = factorize(B, C)
    mp = projector.mp

    r = float(np.linalg.norm(delta.delta, "fro"))
    if r == 0:
        raise ZeroPerturbation("a zero perturbation has no coordinates")
    if r > delta.rho * (1 + 1e-12):
        raise NormExceedsBound(f"||Delta||_F = {r} exceeds rho = {delta.rho}")

    tau = (2 / math.pi) * math.asin(min(r / delta.rho, 1.0))

    psi = projector.rotate(delta.delta) / r
    mu = psi[:mp]
    nu = psi[mp:]
    mu_norm = float(np.linalg.norm(mu))
    nu_norm = float(np.linalg.norm(nu))

    theta = (2 / math.pi) * math.atan2(nu_norm, mu_norm)
    theta = min(max(theta, 0.0), 1.0)

    phi_c = mu / mu_norm if mu_norm > BLOCK_EPS else _canonical(len(mu))
    phi_s = nu / nu_norm if nu_norm > BLOCK_EPS else _canonical(len(nu))

    logging.debug(f"perturbation coordinates: r = {r:.6g}, tau = {tau:.6g}, theta = {theta:.6g}")

    # renormalize, rounding may leave |phi| a few ulps away from 1
    if len(phi_c):
        phi_c = phi_c / np.linalg.norm(phi_c)
    if len(phi_s):
        phi_s = phi_s / np.linalg.norm(phi_s)

    return PerturbationCoords(rho=delta.rho, tau=tau, theta=theta, phi_c=phi_c, phi_s=phi_s)


def closed_form_cost(rho: float, tau: float, theta: float) -> float:
    """J* in coordinates: (rho sin(pi tau / 2) sin(pi theta / 2))^2."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    if not 0 <= theta <= 1:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")

    return (rho * math.sin(math.pi * tau / 2) * math.sin(math.pi * theta / 2)) ** 2
