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
from typing import List, Optional, Tuple

import numpy as np

import sofup.cfg as cfg
import sofup.pool as pool
from sofup.errors import DegenerateCoverage, DomainError, EmptyGrid, NotStable
from sofup.mdrp import stream
from sofup.perturb import PerturbationCoords, closed_form_cost, synthesize
from sofup.region import StabilityRegion, contains, stability_region
from sofup.statespace import (
    GainMatrix,
    Provenance,
    StateSpaceModel,
    closed_loop,
    spectral_abscissa,
    validate,
)
from sofup.update import optimal_update, residual_cost

# Stability maps over the (tau, theta) unit square. Every cell draws its own unit directions
# from a stream keyed by (seed, i, j), so a cell's content depends on nothing but its
# position and the seed, whatever the thread schedule.

CSV_HEADER = [
    "tau",
    "theta",
    "J_closed",
    "J_residual",
    "alpha_closed",
    "guaranteed",
    "exact_stable",
]


@dataclass(frozen=True)
class GridSpec:
    """Class to represent the shape of a scan grid."""

    n_tau: int = 41
    n_theta: int = 41

    def __post_init__(self):
        if self.n_tau < 1 or self.n_theta < 1:
            raise EmptyGrid(f"grid {self.n_tau}x{self.n_theta} has no cells")

    @classmethod
    def parse(cls, text: str):
        """Reads '41x41' style grid sizes."""
        try:
            n_tau, n_theta = (int(part) for part in text.lower().split("x"))
        except ValueError:
            raise DomainError(f"grid must look like 41x41, got '{text}'")
        return cls(n_tau=n_tau, n_theta=n_theta)

    def taus(self) -> np.ndarray:
        """Evenly spaced over (0, 1], the first point moved from 0 to half a step."""
        if self.n_tau == 1:
            return np.array([1.0])
        taus = np.linspace(0.0, 1.0, self.n_tau)
        taus[0] = 0.5 * taus[1]
        return taus

    def thetas(self) -> np.ndarray:
        if self.n_theta == 1:
            return np.array([0.0])
        return np.linspace(0.0, 1.0, self.n_theta)


@dataclass(frozen=True)
class ScanCell:
    """Class to represent one (tau, theta) sample of a stability map."""

    tau: float
    theta: float
    J_closed: float
    J_residual: float
    alpha_closed: float
    guaranteed: bool
    exact_stable: bool

    def row(self) -> list:
        return [
            self.tau,
            self.theta,
            self.J_closed,
            self.J_residual,
            self.alpha_closed,
            self.guaranteed,
            self.exact_stable,
        ]


@dataclass(frozen=True)
class ScanGrid:
    """Class to represent a stability map. Cells are stored row by row, tau major."""

    taus: Tuple[float, ...]
    thetas: Tuple[float, ...]
    seed: int
    rho: float
    beta: float
    kappa: float
    cells: Tuple[ScanCell, ...] = field(repr=False)

    def violations(self) -> int:
        """Cells promised stable by the region that are not stable after the update."""
        return sum(1 for cell in self.cells if cell.guaranteed and not cell.exact_stable)

    def cell(self, i: int, j: int) -> ScanCell:
        return self.cells[i * len(self.thetas) + j]


@dataclass(frozen=True)
class _Row:
    """Everything needed to fill one tau row of the grid."""

    model: StateSpaceModel = field(repr=False)
    F_nominal: GainMatrix = field(repr=False)
    region: StabilityRegion
    rho: float
    seed: int
    i: int
    tau: float
    thetas: Tuple[float, ...]


def _scan_cell(row: _Row, j: int, theta: float) -> ScanCell:
    model = row.model
    rng = stream(row.seed, row.i, j)
    coords = PerturbationCoords.random(
        model.n, model.m, model.p, rho=row.rho, tau=row.tau, theta=theta, rng=rng
    )

    delta = synthesize(model.B, model.C, coords)
    G_star = optimal_update(model.B, model.C, delta)
    updated = GainMatrix(F=row.F_nominal.F + G_star, provenance=Provenance.UPDATED)
    alpha = spectral_abscissa(closed_loop(model, updated, delta))

    J_closed = closed_form_cost(row.rho, row.tau, theta)
    J_residual = residual_cost(model.B, model.C, delta)
    if abs(J_residual - J_closed) > cfg.get_float("cost_crosscheck_rtol") * max(1.0, J_closed):
        logging.warning(
            f"cell ({row.tau:.4f}, {theta:.4f}): closed form cost {J_closed} "
            f"differs from residual {J_residual}"
        )

    return ScanCell(
        tau=row.tau,
        theta=theta,
        J_closed=J_closed,
        J_residual=J_residual,
        alpha_closed=alpha,
        guaranteed=contains(row.tau, theta, row.region),
        exact_stable=alpha < 0,
    )


def _scan_row(row: _Row) -> List[ScanCell]:
    return [_scan_cell(row, j, theta) for j, theta in enumerate(row.thetas)]


def scan(
    model: StateSpaceModel,
    F_nominal: GainMatrix,
    rho: float,
    beta: float,
    grid: Optional[GridSpec] = None,
    seed: int = 0,
    threads: Optional[int] = None,
) -> ScanGrid:
    """Guaranteed versus exact stability of the updated loop over a (tau, theta) grid."""
    validate(model)
    F_nominal.check_against(model)
    if grid is None:
        grid = GridSpec()
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")

    alpha_nominal = spectral_abscissa(closed_loop(model, F_nominal))
    if alpha_nominal >= 0:
        raise NotStable(f"nominal closed loop is not Hurwitz, alpha = {alpha_nominal}")

    thetas = tuple(float(t) for t in grid.thetas())
    if model.n**2 == model.m * model.p and max(thetas) > 0:
        raise DegenerateCoverage("mp = n^2: no perturbation escapes the update, theta > 0 is empty")

    region = stability_region(beta, rho)
    taus = tuple(float(t) for t in grid.taus())
    rows = [
        _Row(
            model=model,
            F_nominal=F_nominal,
            region=region,
            rho=rho,
            seed=seed,
            i=i,
            tau=tau,
            thetas=thetas,
        )
        for i, tau in enumerate(taus)
    ]

    logging.info(f"scanning {len(taus)}x{len(thetas)} cells, kappa = {region.kappa:.6g}")
    cells = tuple(cell for row in pool.map_ordered(_scan_row, rows, threads) for cell in row)

    result = ScanGrid(
        taus=taus,
        thetas=thetas,
        seed=seed,
        rho=rho,
        beta=beta,
        kappa=region.kappa,
        cells=cells,
    )

    violations = result.violations()
    if violations:
        logging.warning(f"{violations} cells guaranteed stable but unstable: beta is too large")

    return result


def region_fraction(grid: ScanGrid) -> dict:
    """Fractions of cells flagged guaranteed and exact_stable."""
    if not grid.cells:
        raise EmptyGrid("cannot compute fractions of an empty grid")

    total = len(grid.cells)
    return dict(
        guaranteed_frac=sum(1 for cell in grid.cells if cell.guaranteed) / total,
        exact_frac=sum(1 for cell in grid.cells if cell.exact_stable) / total,
    )
