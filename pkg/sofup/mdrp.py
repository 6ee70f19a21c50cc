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
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

import sofup.cfg as cfg
import sofup.pool as pool
from sofup.errors import BudgetExceeded, DimensionMismatch, DomainError, NotStable, NotSymmetric
from sofup.statespace import spectral_abscissa
from sofup.update import unvec, vec

# The minimum destabilizing real perturbation (MDRP) of a stable M is the smallest ||X||_F
# with alpha(M + X) = 0. Bisection over beta, with an inner search for a unit direction
# that pushes alpha(M + beta X) up to zero:
#  1) start with the bracket (0, upper_bound(M)]; the upper end has a known destabilizer
#  2) at each trial beta, run inner_starts local searches; any hit shrinks the bracket from
#     above, no hit grows it from below
#  3) the returned beta is the lower end: no destabilizer was found at that size. That is an
#     estimate, not a certificate, but it errs on the side that keeps certificates sound.


class MdrpMethod(Enum):
    """Class to represent how an MDRP value was obtained."""

    SYMMETRIC_EXACT = auto()
    BISECTION = auto()
    UPPER_BOUND_ONLY = auto()

    def __str__(self):
        """String representation."""
        return self.name.lower()


@dataclass(frozen=True)
class MdrpEstimate:
    """Class to represent an estimate of the MDRP of a stable matrix."""

    beta: float
    upper: float
    method: MdrpMethod
    iterations: int = 0
    inner_starts: int = 0
    tol: float = 0.0
    seed: int = 0
    witness: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return dict(
            beta=self.beta,
            upper=self.upper,
            method=str(self.method),
            iterations=self.iterations,
            inner_starts=self.inner_starts,
            tol=self.tol,
            seed=self.seed,
        )


def _require_stable(M: np.ndarray) -> Tuple[np.ndarray, float]:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"M must be square, got shape {M.shape}")

    alpha = spectral_abscissa(M)
    if alpha >= 0:
        raise NotStable(f"matrix is not Hurwitz, alpha = {alpha}")
    return M, alpha


def upper_bound(M: np.ndarray) -> float:
    """min{sigma_min(M), -sqrt(n) alpha(M)}, the size of the cheaper of two known destabilizers."""
    M, alpha = _require_stable(M)
    sigma_min = float(scipy.linalg.svdvals(M)[-1])
    return min(sigma_min, -math.sqrt(M.shape[0]) * alpha)


def identity_destabilizer(M: np.ndarray) -> np.ndarray:
    """X = -alpha(M) I, shifting the rightmost eigenvalue onto the imaginary axis."""
    M, alpha = _require_stable(M)
    return -alpha * np.eye(M.shape[0])


def singular_destabilizer(M: np.ndarray) -> np.ndarray:
    """Rank-one X = -sigma_min u_min v_min^T, making M + X singular."""
    M, _ = _require_stable(M)
    U, s, Vt = scipy.linalg.svd(M)
    return -s[-1] * np.outer(U[:, -1], Vt[-1])


def symmetric_exact(M: np.ndarray) -> float:
    """Exact MDRP -alpha(M) of a stable symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"M must be square, got shape {M.shape}")
    asymmetry = np.linalg.norm(M - M.T, "fro")
    if asymmetry > 1e-10:
        raise NotSymmetric(f"||M - M^T||_F = {asymmetry:.3e}")

    _, alpha = _require_stable(M)
    return -alpha


def is_symmetric(M: np.ndarray) -> bool:
    M = np.asarray(M, dtype=float)
    return M.shape[0] == M.shape[1] and np.linalg.norm(M - M.T, "fro") <= 1e-10


def stream(seed: int, step: int, restart: int) -> np.random.Generator:
    """Counter-based generator owned by one (seed, bisection step, restart) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, step, restart])))


class _Stalled(Exception):
    """Raised from inside the local search once alpha stops improving."""


class _WitnessFound(Exception):
    """Raised from inside the local search to stop it at the first destabilizing direction."""

    def __init__(self, v: np.ndarray, alpha: float):
        super().__init__(f"witness with alpha = {alpha}")
        self.v = v
        self.alpha = alpha


@dataclass(frozen=True)
class _Restart:
    """Everything one inner local search needs, so it can run on any thread."""

    M: np.ndarray = field(repr=False)
    beta: float
    start: np.ndarray = field(repr=False)
    index: int
    maxfev: int
    threshold: float
    stall: int
    stall_atol: float


def _direction(M: np.ndarray, v: np.ndarray, beta: float) -> np.ndarray:
    return beta * unvec(v / np.linalg.norm(v), M.shape)


def _local_search(restart: _Restart) -> Tuple[float, Optional[np.ndarray]]:
    """Maximize alpha(M + beta vec^-1(v/||v||)) from one start. Returns (alpha, v or None).

    The search gives up once restart.stall evaluations in a row failed to raise the best
    alpha by more than restart.stall_atol.
    """
    best = -math.inf
    evaluations = 0
    improved_at = 0

    def objective(v):
        nonlocal best, evaluations, improved_at
        if not np.any(v):
            return math.inf

        evaluations += 1
        alpha = spectral_abscissa(restart.M + _direction(restart.M, v, restart.beta))
        if alpha >= restart.threshold:
            raise _WitnessFound(v.copy(), alpha)

        if alpha > best + restart.stall_atol:
            improved_at = evaluations
        best = max(best, alpha)
        if evaluations - improved_at >= restart.stall:
            raise _Stalled()
        return -alpha

    try:
        # alpha is not smooth where eigenvalues coalesce, so no gradients
        scipy.optimize.minimize(
            objective,
            restart.start,
            method="Nelder-Mead",
            options={"maxfev": restart.maxfev, "xatol": 1e-7, "fatol": 1e-10, "adaptive": True},
        )
    except _WitnessFound as found:
        return found.alpha, found.v
    except _Stalled:
        logging.debug(f"restart {restart.index} stalled after {evaluations} evaluations")

    return best, None


def _starts(M: np.ndarray, seed: int, step: int, inner_starts: int):
    """Restart 0 and 1 follow the two known destabilizers, the rest are random directions."""
    n2 = M.shape[0] ** 2
    starts = []
    for index in range(inner_starts):
        if index == 0:
            v = vec(singular_destabilizer(M))
        elif index == 1:
            v = vec(identity_destabilizer(M))
        else:
            v = stream(seed, step, index).standard_normal(n2)
        starts.append(v / np.linalg.norm(v))
    return starts


def _destabilize(
    M: np.ndarray, beta: float, seed: int, step: int, inner_starts: int, threads: Optional[int]
) -> Optional[np.ndarray]:
    """Search for X with ||X||_F = beta and alpha(M + X) >= threshold. Returns X or None."""
    threshold = cfg.get_float("witness_threshold")

    # budgets grow with the n^2 search dimensions, capped by mdrp_inner_maxfev
    simplex = M.shape[0] ** 2 + 1
    maxfev = min(
        cfg.get_int("mdrp_inner_maxfev"), max(200, cfg.get_int("mdrp_inner_fev_per_dim") * simplex)
    )
    stall = max(50, cfg.get_int("mdrp_inner_stall_per_dim") * simplex)
    stall_atol = cfg.get_float("mdrp_inner_stall_rtol") * beta

    restarts = [
        _Restart(
            M=M,
            beta=beta,
            start=start,
            index=i,
            maxfev=maxfev,
            threshold=threshold,
            stall=stall,
            stall_atol=stall_atol,
        )
        for i, start in enumerate(_starts(M, seed, step, inner_starts))
    ]

    if pool.thread_count(threads) == 1:
        # first hit wins, same as the lowest-index hit of the parallel path
        results = []
        for restart in restarts:
            results.append(_local_search(restart))
            if results[-1][1] is not None:
                break
    else:
        results = pool.map_ordered(_local_search, restarts, threads)

    for index, (alpha, v) in enumerate(results):
        if v is None:
            continue

        X = _direction(M, v, beta)
        verified = spectral_abscissa(M + X)
        if verified >= threshold:
            logging.debug(
                f"beta = {beta:.9g}: restart {index} destabilizes, alpha = {verified:.3e}"
            )
            return X

        logging.warning(f"restart {index} witness failed re-verification: alpha = {verified}")

    best = max(alpha for alpha, _ in results)
    logging.debug(f"beta = {beta:.9g}: no destabilizer found, best alpha = {best:.6g}")
    return None


def estimate(
    M: np.ndarray,
    tol: Optional[float] = None,
    seed: int = 0,
    inner_starts: Optional[int] = None,
    max_iterations: Optional[int] = None,
    threads: Optional[int] = None,
) -> MdrpEstimate:
    """Bisection estimate of the MDRP of a stable M. See the module comment."""
    M, _ = _require_stable(M)
    upper = upper_bound(M)

    if tol is None:
        tol = 1e-3 * upper
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")
    if inner_starts is None:
        inner_starts = cfg.get_int("mdrp_inner_starts")
    if max_iterations is None:
        max_iterations = cfg.get_int("mdrp_max_iterations")

    if inner_starts <= 0:
        logging.info(f"no inner search requested, reporting the upper bound {upper:.6g}")
        return MdrpEstimate(
            beta=upper, upper=upper, method=MdrpMethod.UPPER_BOUND_ONLY, tol=tol, seed=seed
        )

    lo, hi = 0.0, upper
    witness = None
    iterations = 0

    # a bracket closing on 0 would claim nothing, so keep halving until lo moves
    while hi - lo > tol or lo == 0.0:
        if iterations >= max_iterations:
            raise BudgetExceeded(
                f"bracket [{lo}, {hi}] still open after {iterations} bisection steps"
            )
        iterations += 1

        mid = 0.5 * (lo + hi)
        found = _destabilize(M, mid, seed, iterations, inner_starts, threads)
        if found is not None:
            hi = mid
            witness = found
        else:
            lo = mid

    logging.info(f"mdrp estimate {lo:.9g} (upper bound {upper:.9g}) after {iterations} steps")

    return MdrpEstimate(
        beta=lo,
        upper=upper,
        method=MdrpMethod.BISECTION,
        iterations=iterations,
        inner_starts=inner_starts,
        tol=tol,
        seed=seed,
        witness=witness,
    )


def nominal_mdrp(
    M: np.ndarray, force_bisection: bool = False, seed: int = 0, **kwargs
) -> MdrpEstimate:
    """Exact MDRP when M is symmetric, unless bisection is forced; estimate() otherwise."""
    M, _ = _require_stable(M)
    if is_symmetric(M) and not force_bisection:
        beta = symmetric_exact(M)
        logging.info(f"symmetric closed loop, exact mdrp {beta:.9g}")
        return MdrpEstimate(
            beta=beta, upper=upper_bound(M), method=MdrpMethod.SYMMETRIC_EXACT, seed=seed
        )

    return estimate(M, seed=seed, **kwargs)
