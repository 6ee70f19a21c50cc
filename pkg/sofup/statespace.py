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
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Optional

import numpy as np
import scipy.linalg

from sofup.errors import (
    DimensionMismatch,
    DomainError,
    EigenFailure,
    NormExceedsBound,
    RankDeficient,
    SvdFailure,
)


def _frozen(matrix, name: str, ndim: int = 2) -> np.ndarray:
    """Returns a read-only float copy of matrix."""
    try:
        arr = np.array(matrix, dtype=float)
    except (TypeError, ValueError) as e:
        raise DimensionMismatch(f"{name} is not a real matrix: {e}")

    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must have {ndim} dimensions, got shape {arr.shape}")

    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} has non-finite entries")

    arr.setflags(write=False)
    return arr


class Provenance(Enum):
    """Class to represent where a gain matrix came from."""

    NOMINAL = auto()
    UPDATED = auto()
    PROJECTED = auto()
    EXTERNAL = auto()

    def __str__(self):
        """String representation."""
        return self.name.lower()


@dataclass(frozen=True)
class StateSpaceModel:
    """Class to represent the plant (A, B, C) of x' = Ax + Bu, y = Cx."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, "A"))
        object.__setattr__(self, "B", _frozen(self.B, "B"))
        object.__setattr__(self, "C", _frozen(self.C, "C"))

        n, n_cols = self.A.shape
        if n != n_cols or n == 0:
            raise DimensionMismatch(f"A must be square and nonempty, got {self.A.shape}")
        if self.B.shape[0] != n or self.B.shape[1] == 0:
            raise DimensionMismatch(f"B must be {n} x m with m > 0, got {self.B.shape}")
        if self.C.shape[1] != n or self.C.shape[0] == 0:
            raise DimensionMismatch(f"C must be p x {n} with p > 0, got {self.C.shape}")
        if self.m > n:
            raise DimensionMismatch(f"more inputs than states: m = {self.m} > n = {n}")
        if self.p > n:
            raise DimensionMismatch(f"more outputs than states: p = {self.p} > n = {n}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def __str__(self):
        """String representation."""
        return f"StateSpaceModel(n={self.n}, m={self.m}, p={self.p})"


@dataclass(frozen=True)
class GainMatrix:
    """Class to represent an m x p static output feedback gain u = F y."""

    F: np.ndarray
    provenance: Provenance = Provenance.EXTERNAL

    def __post_init__(self):
        object.__setattr__(self, "F", _frozen(self.F, "F"))

    def check_against(self, model: StateSpaceModel) -> None:
        """Raise DimensionMismatch unless F is m x p for model."""
        if self.F.shape != (model.m, model.p):
            raise DimensionMismatch(
                f"{self.provenance} gain must be {model.m} x {model.p}, got {self.F.shape}"
            )


@dataclass(frozen=True)
class Perturbation:
    """Class to represent a known real perturbation Delta with ||Delta||_F <= rho."""

    delta: np.ndarray
    rho: Optional[float] = None
    fro_norm: float = field(init=False)

    def __post_init__(self):
        delta = _frozen(self.delta, "Delta")
        if delta.shape[0] != delta.shape[1]:
            raise DimensionMismatch(f"Delta must be square, got {delta.shape}")

        fro_norm = float(np.linalg.norm(delta, "fro"))
        rho = self.rho
        if rho is None:
            # tightest admissible bound; an all-zero Delta gets a unit bound
            rho = fro_norm if fro_norm > 0 else 1.0

        rho = float(rho)
        if not rho > 0:
            raise DomainError(f"perturbation bound rho must be positive, got {rho}")
        if fro_norm > rho * (1 + 1e-12):
            raise NormExceedsBound(f"||Delta||_F = {fro_norm} exceeds rho = {rho}")

        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "fro_norm", fro_norm)

    @property
    def n(self) -> int:
        return self.delta.shape[0]


def _svd(matrix: np.ndarray, full_matrices: bool):
    try:
        return scipy.linalg.svd(matrix, full_matrices=full_matrices, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower driver does not
        pass

    try:
        return scipy.linalg.svd(matrix, full_matrices=full_matrices, lapack_driver="gesvd")
    except np.linalg.LinAlgError as e:
        raise SvdFailure(f"svd of a {matrix.shape} matrix failed: {e}")


@dataclass(frozen=True)
class SvdTriplet:
    """Class to represent a full SVD M = U diag(S) V^T."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @classmethod
    def of(cls, matrix: np.ndarray):
        """Builds the full SVD of matrix."""
        U, S, Vt = _svd(matrix, full_matrices=True)

        return cls(U=U, S=S, V=Vt.T)

    def sigma(self) -> np.ndarray:
        """Rectangular Sigma with the same shape as the source matrix."""
        out = np.zeros((self.U.shape[0], self.V.shape[0]))
        k = len(self.S)
        out[:k, :k] = np.diag(self.S)
        return out

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.sigma() @ self.V.T


@dataclass(frozen=True)
class ValidationReport:
    """Class to represent the outcome of checking the rank assumption on B and C."""

    n: int
    m: int
    p: int
    rank_B: int
    rank_C: int
    sigma_min_B: float
    sigma_min_C: float
    tol_B: float
    tol_C: float

    @property
    def passed(self) -> bool:
        return self.rank_B == self.m and self.rank_C == self.p

    @property
    def offending(self) -> Optional[str]:
        """Name of the first matrix that fails the rank assumption, if any."""
        if self.rank_B < self.m:
            return "B"
        if self.rank_C < self.p:
            return "C"
        return None

    def as_dict(self) -> dict:
        return dict(
            n=self.n,
            m=self.m,
            p=self.p,
            rank_B=self.rank_B,
            rank_C=self.rank_C,
            sigma_min_B=self.sigma_min_B,
            sigma_min_C=self.sigma_min_C,
            tol_B=self.tol_B,
            tol_C=self.tol_C,
            passed=self.passed,
            offending=self.offending,
        )


def rank_tolerance(matrix: np.ndarray, singular_values: np.ndarray) -> float:
    """Numerical-rank cutoff eps * max(rows, cols) * sigma_max."""
    if len(singular_values) == 0:
        return 0.0
    return float(np.finfo(float).eps * max(matrix.shape) * singular_values[0])


def _numerical_rank(matrix: np.ndarray, rank_tol: Optional[float]):
    try:
        s = scipy.linalg.svdvals(matrix)
    except np.linalg.LinAlgError as e:
        raise SvdFailure(f"singular values of a {matrix.shape} matrix failed: {e}")
    tol = rank_tolerance(matrix, s) if rank_tol is None else float(rank_tol)
    rank = int(np.sum(s > tol))
    return rank, float(s[-1]), tol


def validate(
    model: StateSpaceModel, rank_tol: Optional[float] = None, strict: bool = True
) -> ValidationReport:
    """Check that B has full column rank and C has full row rank.

    With strict (the default) a failing check raises RankDeficient naming the matrix, the
    report being attached to the exception. Otherwise the report is returned either way.
    """
    rank_B, sigma_min_B, tol_B = _numerical_rank(model.B, rank_tol)
    rank_C, sigma_min_C, tol_C = _numerical_rank(model.C, rank_tol)

    report = ValidationReport(
        n=model.n,
        m=model.m,
        p=model.p,
        rank_B=rank_B,
        rank_C=rank_C,
        sigma_min_B=sigma_min_B,
        sigma_min_C=sigma_min_C,
        tol_B=tol_B,
        tol_C=tol_C,
    )
    logging.debug(f"validate {model}: {report}")

    if strict and not report.passed:
        matrix = report.offending
        if matrix == "B":
            message = f"rank {rank_B} < m = {model.m} (sigma_min {sigma_min_B:.3e} <= {tol_B:.3e})"
        else:
            message = f"rank {rank_C} < p = {model.p} (sigma_min {sigma_min_C:.3e} <= {tol_C:.3e})"
        raise RankDeficient(matrix, message, report)

    return report


def require_input_matrix(B: np.ndarray) -> None:
    """Raise RankDeficient unless B is n x m with full column rank."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] > B.shape[0]:
        raise DimensionMismatch(f"B must be n x m with m <= n, got {B.shape}")

    rank, sigma_min, tol = _numerical_rank(B, None)
    if rank < B.shape[1]:
        raise RankDeficient("B", f"rank {rank} < m = {B.shape[1]} (sigma_min {sigma_min:.3e})")


def require_output_matrix(C: np.ndarray) -> None:
    """Raise RankDeficient unless C is p x n with full row rank."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] > C.shape[1]:
        raise DimensionMismatch(f"C must be p x n with p <= n, got {C.shape}")

    rank, sigma_min, tol = _numerical_rank(C, None)
    if rank < C.shape[0]:
        raise RankDeficient("C", f"rank {rank} < p = {C.shape[0]} (sigma_min {sigma_min:.3e})")


def pinv(matrix: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a full-rank matrix from its thin SVD."""
    U, s, Vt = _svd(matrix, full_matrices=False)
    tol = rank_tolerance(matrix, s)
    if np.any(s <= tol):
        raise RankDeficient("matrix", f"singular value {s[-1]:.3e} below tolerance {tol:.3e}")

    return (Vt.T / s) @ U.T


def _require_square(M: np.ndarray, name: str = "M") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    return M


def _eigenvalues(M: np.ndarray) -> np.ndarray:
    M = _require_square(M)
    try:
        # LAPACK geev: Hessenberg reduction + shifted QR to real Schur form
        eigenvalues = scipy.linalg.eigvals(M, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(f"eigenvalue computation failed: {e}")
    return eigenvalues


def spectrum(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of M sorted by descending real part, then descending imaginary part."""
    eigenvalues = _eigenvalues(M)
    order = np.lexsort((-eigenvalues.imag, -eigenvalues.real))
    return eigenvalues[order]


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest real part over the eigenvalues of M."""
    return float(np.max(_eigenvalues(M).real))


def is_hurwitz(M: np.ndarray, margin: float = 0.0) -> bool:
    if margin < 0:
        raise DomainError(f"hurwitz margin must be nonnegative, got {margin}")
    return spectral_abscissa(M) < -margin


def closed_loop(
    model: StateSpaceModel, F: GainMatrix, delta: Optional[Perturbation] = None
) -> np.ndarray:
    """Returns A + B F C, plus Delta when given."""
    F.check_against(model)
    M = model.A + model.B @ F.F @ model.C

    if delta is not None:
        if delta.delta.shape != model.A.shape:
            raise DimensionMismatch(f"Delta must be {model.A.shape}, got {delta.delta.shape}")
        M = M + delta.delta

    return M


def project_state_feedback(K: np.ndarray, C: np.ndarray) -> GainMatrix:
    """Least-squares SOF gain F = K C^T (C C^T)^-1 from a state feedback gain K."""
    K = np.asarray(K, dtype=float)
    C = np.asarray(C, dtype=float)
    if K.ndim != 2 or C.ndim != 2 or K.shape[1] != C.shape[1]:
        raise DimensionMismatch(f"K ({K.shape}) and C ({C.shape}) must share n columns")

    require_output_matrix(C)

    # F C ~= K  <=>  C^T F^T ~= K^T
    Ft, _, _, _ = scipy.linalg.lstsq(C.T, K.T, lapack_driver="gelsd")
    return GainMatrix(F=Ft.T, provenance=Provenance.PROJECTED)
