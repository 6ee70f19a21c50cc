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
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

import sofup.cfg as cfg
from sofup.errors import DimensionMismatch, DimensionOverflow
from sofup.statespace import (
    GainMatrix,
    Perturbation,
    Provenance,
    StateSpaceModel,
    SvdTriplet,
    closed_loop,
    pinv,
    require_input_matrix,
    require_output_matrix,
    spectral_abscissa,
    spectrum,
    validate,
)

# All vectorizations stack columns: vec(X Y Z) = (Z^T kron X) vec(Y) only holds that way.


def vec(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=float).reshape(-1, order="F")


def unvec(vector: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    return np.asarray(vector, dtype=float).reshape(shape, order="F")


def _delta_matrix(delta: Union[Perturbation, np.ndarray]) -> np.ndarray:
    if isinstance(delta, Perturbation):
        return delta.delta
    return np.asarray(delta, dtype=float)


def _check_pair(B: np.ndarray, C: np.ndarray, delta: Optional[np.ndarray] = None):
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    require_input_matrix(B)
    require_output_matrix(C)

    n = B.shape[0]
    if C.shape[1] != n:
        raise DimensionMismatch(f"B is {B.shape} but C is {C.shape}, expected p x {n}")
    if delta is not None and delta.shape != (n, n):
        raise DimensionMismatch(f"Delta must be {n} x {n}, got {delta.shape}")

    return B, C


@dataclass(frozen=True)
class ProjectorP:
    """Class to represent P = I - H H^+ for H = C^T kron B through the SVD factors of B and C.

    U_H = (V_C kron U_B) U_Omega and V_H = (U_C kron V_B) V_Omega. Omega = Sigma_C^T kron
    Sigma_B has one nonzero per column, so U_Omega and V_Omega are permutations:
    U_Omega = I[:, u_order] and V_Omega = I[:, v_order]. The explicit matrices P and H are
    only present when n is small enough.
    """

    svd_B: SvdTriplet
    svd_C: SvdTriplet
    u_order: np.ndarray
    v_order: np.ndarray
    sigma_H: np.ndarray
    P: Optional[np.ndarray] = field(default=None, repr=False)
    H: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.svd_B.U.shape[0]

    @property
    def m(self) -> int:
        return self.svd_B.V.shape[0]

    @property
    def p(self) -> int:
        return self.svd_C.U.shape[0]

    @property
    def mp(self) -> int:
        return self.m * self.p

    @property
    def explicit(self) -> bool:
        return self.P is not None

    def rotate(self, delta: np.ndarray) -> np.ndarray:
        """Returns U_H^T vec(Delta) without forming U_H."""
        core = self.svd_B.U.T @ delta @ self.svd_C.V
        return vec(core)[self.u_order]

    def unrotate(self, chi: np.ndarray) -> np.ndarray:
        """Returns vec^-1(U_H chi), the inverse of rotate()."""
        y = np.zeros(self.n * self.n)
        y[self.u_order] = chi
        return self.svd_B.U @ unvec(y, (self.n, self.n)) @ self.svd_C.V.T

    def U_H(self) -> np.ndarray:
        self._require_explicit("U_H")
        return np.kron(self.svd_C.V, self.svd_B.U)[:, self.u_order]

    def V_H(self) -> np.ndarray:
        self._require_explicit("V_H")
        return np.kron(self.svd_C.U, self.svd_B.V)[:, self.v_order]

    def svd_H(self) -> SvdTriplet:
        return SvdTriplet(U=self.U_H(), S=self.sigma_H, V=self.V_H())

    def _require_explicit(self, what: str) -> None:
        limit = cfg.get_int("explicit_projector_max_n")
        if self.n > limit:
            raise DimensionOverflow(f"{what} is n^2 x n^2 and n = {self.n} > {limit}")


def _omega_orders(sigma_B: np.ndarray, sigma_C: np.ndarray, n: int):
    m = len(sigma_B)
    p = len(sigma_C)

    # column k*m + l of Sigma_C^T kron Sigma_B holds sigma_C[k] * sigma_B[l] in row k*n + l
    k, ell = np.divmod(np.arange(m * p), m)
    values = sigma_C[k] * sigma_B[ell]
    rows = k * n + ell

    order = np.argsort(-values, kind="stable")
    used = rows[order]
    unused = np.setdiff1d(np.arange(n * n), used, assume_unique=True)

    return np.concatenate([used, unused]), order, values[order]


def direct_projector(B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """P = I - H H^+ straight from the Kronecker product, no factor reuse."""
    B, C = _check_pair(B, C)
    n = B.shape[0]
    limit = cfg.get_int("explicit_projector_max_n")
    if n > limit:
        raise DimensionOverflow(f"explicit P is n^2 x n^2 and n = {n} > {limit}")

    H = np.kron(C.T, B)
    return np.eye(n * n) - H @ pinv(H)


def _factor(B: np.ndarray, C: np.ndarray, explicit: bool) -> ProjectorP:
    n = B.shape[0]
    svd_B = SvdTriplet.of(B)
    svd_C = SvdTriplet.of(C)
    u_order, v_order, sigma_H = _omega_orders(svd_B.S, svd_C.S, n)

    projector = ProjectorP(
        svd_B=svd_B, svd_C=svd_C, u_order=u_order, v_order=v_order, sigma_H=sigma_H
    )
    if not explicit:
        return projector

    H = np.kron(C.T, B)
    U_s = projector.U_H()[:, projector.mp :]
    P = U_s @ U_s.T

    # both routes must agree, the factored one is the one we keep
    gap = np.linalg.norm(P - direct_projector(B, C), "fro")
    if gap > 1e-9:
        logging.warning(f"factored and direct projectors differ by {gap:.3e}")
    else:
        logging.debug(f"factored and direct projectors agree ({gap:.3e})")

    P.setflags(write=False)
    H.setflags(write=False)
    return replace(projector, P=P, H=H)


@dataclass
class FactorCache:
    """Class to keep one ProjectorP per (B, C) pair, so every coordinate map sees the same factors.

    SVD factors carry sign and ordering freedom; caching them pins one choice.
    """

    max_entries: int = 16
    cache: Dict[tuple, ProjectorP] = field(init=False, default_factory=dict)
    lock: threading.Lock = field(init=False, default_factory=threading.Lock, repr=False)

    def _key(self, B: np.ndarray, C: np.ndarray) -> tuple:
        B = np.ascontiguousarray(B, dtype=float)
        C = np.ascontiguousarray(C, dtype=float)
        return (B.shape, C.shape, B.tobytes(), C.tobytes())

    def get_or_create(self, B: np.ndarray, C: np.ndarray, explicit: bool) -> ProjectorP:
        """Get the cached factors for (B, C), or compute them if needed."""
        key = self._key(B, C)

        with self.lock:
            projector = self.cache.get(key, None)
            if projector is not None and (projector.explicit or not explicit):
                logging.debug("projector factors found in cache")
                return projector

            projector = _factor(B, C, explicit)
            if len(self.cache) >= self.max_entries:
                # oldest first, dicts keep insertion order
                self.cache.pop(next(iter(self.cache)))
            self.cache[key] = projector

        return projector

    def flush(self) -> None:
        """Delete the cache."""
        with self.lock:
            self.cache.clear()
        logging.debug("factor cache flushed")


FACTORS = FactorCache()


def build_projector(B: np.ndarray, C: np.ndarray) -> ProjectorP:
    """Explicit projector P (and H), checked against the direct formula."""
    B, C = _check_pair(B, C)
    limit = cfg.get_int("explicit_projector_max_n")
    if B.shape[0] > limit:
        raise DimensionOverflow(
            f"explicit P is n^2 x n^2 and n = {B.shape[0]} > {limit}, use factorize()"
        )

    return FACTORS.get_or_create(B, C, explicit=True)


def factorize(B: np.ndarray, C: np.ndarray) -> ProjectorP:
    """Projector factors, with P made explicit only when n is under the cap."""
    B, C = _check_pair(B, C)
    explicit = B.shape[0] <= cfg.get_int("explicit_projector_max_n")
    return FACTORS.get_or_create(B, C, explicit=explicit)


def optimal_update(B: np.ndarray, C: np.ndarray, delta) -> np.ndarray:
    """G* = -B^+ Delta (C^T+)^T, the minimizer of ||B G C + Delta||_F."""
    delta = _delta_matrix(delta)
    B, C = _check_pair(B, C, delta)

    # (C^T+)^T == C^+, a p-column right inverse
    return -(pinv(B) @ delta) @ pinv(C)


def optimal_update_vectorized(B: np.ndarray, C: np.ndarray, delta) -> np.ndarray:
    """g* = -(C^T+ kron B^+) vec(Delta), the least-squares solution of min ||H g + delta||.

    Raises DimensionOverflow above explicit_projector_max_n, where optimal_update gives the
    same G* without the Kronecker product.
    """
    delta = _delta_matrix(delta)
    B, C = _check_pair(B, C, delta)

    limit = cfg.get_int("explicit_projector_max_n")
    if B.shape[0] > limit:
        raise DimensionOverflow(f"Kronecker pseudo-inverse needs n <= {limit}")

    return -np.kron(pinv(C.T), pinv(B)) @ vec(delta)


def optimal_update_svd(B: np.ndarray, C: np.ndarray, delta) -> np.ndarray:
    """G* from the SVD of H: -vec^-1(V_H [Sigma_H^-1 0] U_H^T vec(Delta))."""
    delta = _delta_matrix(delta)
    B, C = _check_pair(B, C, delta)
    projector = factorize(B, C)
    m, p, mp = projector.m, projector.p, projector.mp

    if projector.explicit:
        svd_H = projector.svd_H()
        w = (svd_H.U[:, :mp].T @ vec(delta)) / svd_H.S
        return -unvec(svd_H.V @ w, (m, p))

    w = projector.rotate(delta)[:mp] / projector.sigma_H
    y = np.zeros(mp)
    y[projector.v_order] = w
    return -(projector.svd_B.V @ unvec(y, (m, p)) @ projector.svd_C.U.T)


def residual_cost(B: np.ndarray, C: np.ndarray, delta) -> float:
    """J*(Delta) = delta^T P delta, the part of Delta no gain update can cancel."""
    delta = _delta_matrix(delta)
    B, C = _check_pair(B, C, delta)
    projector = factorize(B, C)

    if projector.explicit:
        d = vec(delta)
        cost = float(d @ projector.P @ d)
    else:
        chi = projector.rotate(delta)
        cost = float(chi[projector.mp :] @ chi[projector.mp :])

    G = optimal_update(B, C, delta)
    direct = float(np.linalg.norm(B @ G @ C + delta, "fro") ** 2)
    if abs(cost - direct) > cfg.get_float("cost_crosscheck_rtol") * max(1.0, direct):
        logging.warning(f"residual cost mismatch: delta'P delta = {cost}, direct = {direct}")

    return max(cost, 0.0)


@dataclass(frozen=True)
class UpdateResult:
    """Class to represent the outcome of updating a nominal gain against a known perturbation."""

    G_star: np.ndarray
    J_star: float
    F_updated: GainMatrix
    alpha_closed: float
    certified: bool
    beta: Optional[float] = None
    alpha_nominal: Optional[float] = None
    alpha_perturbed: Optional[float] = None
    relative_perturbation_percent: Optional[float] = None
    spectrum_perturbed: Optional[np.ndarray] = field(default=None, repr=False)
    spectrum_updated: Optional[np.ndarray] = field(default=None, repr=False)


def apply_update(
    model: StateSpaceModel,
    F_nominal: GainMatrix,
    delta: Perturbation,
    beta: Optional[float] = None,
) -> UpdateResult:
    """F_updated = F_nominal + G*, certified stable by sqrt(J*) < beta when beta is given.

    The certificate is only as good as beta: it proves stability when beta does not exceed
    the true minimum destabilizing perturbation of A + B F_nominal C.
    """
    validate(model)
    F_nominal.check_against(model)
    if delta.delta.shape != model.A.shape:
        raise DimensionMismatch(f"Delta must be {model.A.shape}, got {delta.delta.shape}")

    start = time.perf_counter()
    G_star = optimal_update(model.B, model.C, delta)
    elapsed = time.perf_counter() - start
    logging.debug(f"gain update computed in {elapsed:.6f} s")

    F_updated = GainMatrix(F=F_nominal.F + G_star, provenance=Provenance.UPDATED)
    J_star = residual_cost(model.B, model.C, delta)

    updated_loop = closed_loop(model, F_updated, delta)
    alpha_closed = spectral_abscissa(updated_loop)
    certified = beta is not None and float(np.sqrt(J_star)) < beta

    perturbed_plant = model.A + delta.delta
    a_norm = float(np.linalg.norm(model.A, "fro"))
    relative = 100.0 * delta.fro_norm / a_norm if a_norm > 0 else None

    result = UpdateResult(
        G_star=G_star,
        J_star=J_star,
        F_updated=F_updated,
        alpha_closed=alpha_closed,
        certified=certified,
        beta=beta,
        alpha_nominal=spectral_abscissa(closed_loop(model, F_nominal)),
        alpha_perturbed=spectral_abscissa(closed_loop(model, F_nominal, delta)),
        relative_perturbation_percent=relative,
        spectrum_perturbed=spectrum(perturbed_plant),
        spectrum_updated=spectrum(updated_loop),
    )

    logging.info(
        f"updated gain: J* = {J_star:.6g}, alpha(closed loop) = {alpha_closed:.6g}, "
        f"certified = {certified}"
    )
    if certified and alpha_closed >= 0:
        logging.warning("certified update is not Hurwitz: beta overestimates the true MDRP")

    return result
