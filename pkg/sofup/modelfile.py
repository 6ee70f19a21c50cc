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

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sofup.errors import ModelFileError, SofupError
from sofup.statespace import GainMatrix, Perturbation, Provenance, StateSpaceModel

# Every verb reads its matrices through here. Files hold row-major nested arrays:
#   model:  {"A": [[..]], "B": [[..]], "C": [[..]], "F_nominal": [[..]]?, "Delta": [[..]]?,
#            "rho": number?}
#   gain:   {"F": [[..]]} or a bare nested array
#   delta:  {"Delta": [[..]], "rho": number?} or a bare nested array
#   x0:     {"x0": [..]} or a bare array
# A "metadata" key, as written by our own outputs, is ignored.


@dataclass(frozen=True)
class ModelDocument:
    """Class to represent the contents of a model file."""

    model: StateSpaceModel
    F_nominal: Optional[GainMatrix] = None
    delta: Optional[Perturbation] = field(default=None, repr=False)
    rho: Optional[float] = None
    path: str = ""

    def require_gain(self) -> GainMatrix:
        if self.F_nominal is None:
            raise ModelFileError(f"{self.path}: F_nominal is required for this command")
        return self.F_nominal

    def require_delta(self) -> Perturbation:
        if self.delta is None:
            raise ModelFileError(f"{self.path}: Delta is required for this command")
        return self.delta

    def require_rho(self) -> float:
        if self.rho is not None:
            return self.rho
        if self.delta is not None:
            return self.delta.rho
        raise ModelFileError(f"{self.path}: rho is required for this command")


def _read_json(path: str):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ModelFileError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ModelFileError(f"{path} is not valid JSON: {e}")


def _matrix(value, name: str, path: str) -> np.ndarray:
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelFileError(f"{path}: {name} is not a numeric matrix: {e}")

    if matrix.ndim == 1 and matrix.size > 0:
        # a single row written flat
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise ModelFileError(f"{path}: {name} must be a nested array of rows")
    return matrix


def _number(value, name: str, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFileError(f"{path}: {name} must be a number, got {value!r}")
    return float(value)


def _entry(data, key: str, path: str):
    """Value under key for an object document, or the document itself when it is bare."""
    if isinstance(data, dict):
        if key not in data:
            raise ModelFileError(f"{path}: missing '{key}'")
        return data[key]
    return data


def load_model(path: str) -> ModelDocument:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ModelFileError(f"{path}: a model file must hold a JSON object")

    for key in ("A", "B", "C"):
        if key not in data:
            raise ModelFileError(f"{path}: missing '{key}'")

    known = {"A", "B", "C", "F_nominal", "Delta", "rho", "metadata"}
    for key in data:
        if key not in known:
            logging.warning(f"{path}: ignoring unknown key '{key}'")

    try:
        model = StateSpaceModel(
            A=_matrix(data["A"], "A", path),
            B=_matrix(data["B"], "B", path),
            C=_matrix(data["C"], "C", path),
        )

        F_nominal = None
        if "F_nominal" in data:
            F_nominal = GainMatrix(
                F=_matrix(data["F_nominal"], "F_nominal", path), provenance=Provenance.NOMINAL
            )
            F_nominal.check_against(model)

        rho = _number(data["rho"], "rho", path) if "rho" in data else None

        delta = None
        if "Delta" in data:
            delta = Perturbation(delta=_matrix(data["Delta"], "Delta", path), rho=rho)
            if delta.delta.shape != model.A.shape:
                raise ModelFileError(f"{path}: Delta must be {model.A.shape}")
    except ModelFileError:
        raise
    except SofupError as e:
        raise ModelFileError(f"{path}: {e}")

    logging.debug(f"loaded {model} from {path}")
    return ModelDocument(model=model, F_nominal=F_nominal, delta=delta, rho=rho, path=path)


def load_gain(path: str) -> GainMatrix:
    data = _read_json(path)
    try:
        return GainMatrix(F=_matrix(_entry(data, "F", path), "F", path))
    except ModelFileError:
        raise
    except SofupError as e:
        raise ModelFileError(f"{path}: {e}")


def load_delta(path: str) -> Perturbation:
    data = _read_json(path)
    rho = None
    if isinstance(data, dict) and "rho" in data:
        rho = _number(data["rho"], "rho", path)

    try:
        return Perturbation(delta=_matrix(_entry(data, "Delta", path), "Delta", path), rho=rho)
    except ModelFileError:
        raise
    except SofupError as e:
        raise ModelFileError(f"{path}: {e}")


def load_x0(path: str) -> np.ndarray:
    data = _read_json(path)
    try:
        x0 = np.array(_entry(data, "x0", path), dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelFileError(f"{path}: x0 is not a numeric vector: {e}")

    if x0.ndim != 1 or x0.size == 0 or not np.all(np.isfinite(x0)):
        raise ModelFileError(f"{path}: x0 must be a flat, finite, nonempty array")
    return x0


def input_digest(*paths: str) -> str:
    """sha256 over the bytes of every input file, in argument order."""
    digest = hashlib.sha256()
    for path in paths:
        try:
            with open(path, "rb") as f:
                digest.update(f.read())
        except OSError as e:
            raise ModelFileError(f"cannot read {path}: {e}")

    return digest.hexdigest()
