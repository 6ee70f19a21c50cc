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

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64


class SofupError(Exception):
    """Base class for every error raised by sofup."""


class ValidationError(SofupError):
    """Exception that indicates that the inputs do not satisfy a precondition."""


class NumericalError(SofupError):
    """Exception that indicates that a numerical routine failed on valid inputs."""


class UsageError(SofupError):
    """Exception that indicates a bad command line."""


class DimensionMismatch(ValidationError):
    """Matrix shapes are inconsistent."""


class RankDeficient(ValidationError):
    """B is not full column rank or C is not full row rank."""

    def __init__(self, matrix: str, message: str, report=None):
        super().__init__(f"{matrix} is rank deficient: {message}")
        self.matrix = matrix
        self.report = report


class NotStable(ValidationError):
    """A matrix that must be Hurwitz is not."""


class NotSymmetric(ValidationError):
    """A matrix that must be symmetric is not."""


class DomainError(ValidationError):
    """A scalar argument is outside its admissible range."""


class ZeroPerturbation(ValidationError):
    """A perturbation with zero norm has no (tau, theta) coordinates."""


class NormExceedsBound(ValidationError):
    """The Frobenius norm of a perturbation is above its bound rho."""


class DegenerateCoverage(ValidationError):
    """mp = n^2, so there is no uncancellable subspace to point into."""


class DimensionOverflow(ValidationError):
    """An explicit n^2 x n^2 object was requested above the configured size cap."""


class EmptyGrid(ValidationError):
    """A scan grid has no cells."""


class GridMismatch(ValidationError):
    """Two trajectories do not share a time grid."""


class StepTooLarge(ValidationError):
    """The integration step is too large for the closed-loop dynamics."""


class ModelFileError(ValidationError):
    """An input file is missing, malformed or incomplete."""


class EigenFailure(NumericalError):
    """The dense eigensolver did not converge."""


class SvdFailure(NumericalError):
    """The singular value decomposition did not converge with either LAPACK driver."""


class QuadratureFailure(NumericalError):
    """Adaptive quadrature did not reach its tolerance."""


class BudgetExceeded(NumericalError):
    """An iterative method hit its iteration cap."""


def exit_code_for(exc: SofupError) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION

    # a bare SofupError names no category, report it as numerical
    return EXIT_NUMERICAL
