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
from typing import Optional

import numpy as np

from sofup.errors import DimensionMismatch, DomainError, GridMismatch, StepTooLarge
from sofup.statespace import GainMatrix, Perturbation, StateSpaceModel, closed_loop
from sofup.statespace import spectral_abscissa

# inputs smaller than this have no meaningful relative error
INPUT_FLOOR = 1e-12
# t_end / dt within this of a whole number takes no partial last step
HORIZON_SLACK = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """Class to represent a sampled closed-loop trajectory, one row per time step."""

    times: np.ndarray
    states: np.ndarray = field(repr=False)
    inputs: np.ndarray = field(repr=False)
    outputs: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.times)


def _rk4_step(M: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    k1 = M @ x
    k2 = M @ (x + 0.5 * h * k1)
    k3 = M @ (x + 0.5 * h * k2)
    k4 = M @ (x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(
    model: StateSpaceModel,
    F: GainMatrix,
    delta: Optional[Perturbation],
    x0: np.ndarray,
    t_end: float,
    dt: float,
) -> Trajectory:
    """Fixed-step RK4 integration of x' = (A + Delta + B F C) x from x0 over [0, t_end]."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not t_end >= dt:
        raise DomainError(f"t_end = {t_end} must be at least dt = {dt}")

    x0 = np.asarray(x0, dtype=float).ravel()
    if len(x0) != model.n:
        raise DimensionMismatch(f"x0 must have length n = {model.n}, got {len(x0)}")

    M = closed_loop(model, F, delta)
    norm = float(np.linalg.norm(M, 2))
    if dt * norm > 1:
        raise StepTooLarge(f"dt * ||closed loop||_2 = {dt * norm:.3g} > 1, reduce dt")

    alpha = spectral_abscissa(M)
    if alpha >= 0:
        logging.warning(f"simulating an unstable closed loop, alpha = {alpha:.6g}")

    # full steps, then one shorter step when t_end is not a whole number of them
    steps = int(math.floor(t_end / dt + HORIZON_SLACK))
    times = dt * np.arange(steps + 1)
    if t_end - times[-1] > HORIZON_SLACK * dt:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end

    states = np.empty((len(times), model.n))
    states[0] = x0
    for k in range(len(times) - 1):
        h = dt if k < steps else t_end - times[k]
        states[k + 1] = _rk4_step(M, states[k], h)

    outputs = states @ model.C.T
    inputs = outputs @ F.F.T

    end = np.linalg.norm(states[-1])
    logging.debug(f"simulated {len(times) - 1} steps up to {t_end} s, |x(end)| = {end:.6g}")
    return Trajectory(times=times, states=states, inputs=inputs, outputs=outputs)


def input_relative_error(traj_a: Trajectory, traj_b: Trajectory) -> np.ndarray:
    """100 |u_a - u_b| / |u_b| per time step, in percent. NaN where u_b vanishes."""
    if traj_a.times.shape != traj_b.times.shape or not np.array_equal(traj_a.times, traj_b.times):
        raise GridMismatch("trajectories must share the same time grid")
    if traj_a.inputs.shape != traj_b.inputs.shape:
        raise GridMismatch(
            f"input shapes differ: {traj_a.inputs.shape} vs {traj_b.inputs.shape}"
        )

    reference = np.linalg.norm(traj_b.inputs, axis=1)
    difference = np.linalg.norm(traj_a.inputs - traj_b.inputs, axis=1)

    error = np.full(len(reference), np.nan)
    valid = reference > INPUT_FLOOR
    error[valid] = 100.0 * difference[valid] / reference[valid]
    return error
