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

import json
import logging
import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from sofup import __version__

# Output documents. JSON floats go through float.__repr__, the shortest string that reads
# back to the same double, and keys are sorted, so equal results give equal bytes.
# CSV numbers use 17 significant digits. CSV files open with '#' metadata lines.

TOOL = "sofup"


@dataclass(frozen=True)
class Metadata:
    """Class to represent the reproducibility block attached to every output."""

    seed: Optional[int] = None
    input_digest: str = ""
    tool: str = TOOL
    version: str = __version__

    def as_dict(self) -> dict:
        return dict(
            tool=self.tool, version=self.version, seed=self.seed, input_digest=self.input_digest
        )


@dataclass(frozen=True)
class Artifact:
    """Class to represent a rendered output document and where it goes."""

    path: Optional[str]
    body: str

    def write(self) -> None:
        """Write the document to its path, or to stdout when there is none."""
        if self.path is None or self.path == "-":
            sys.stdout.write(self.body)
            sys.stdout.flush()
            return

        with open(self.path, "w", newline="") as f:
            f.write(self.body)
        logging.info(f"wrote {len(self.body)} bytes to {self.path}")


def jsonable(value):
    """Plain Python structure for value: arrays as nested lists, complex as [re, im]."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, Enum):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [jsonable(value.real), jsonable(value.imag)]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # strict JSON has no NaN or infinity
        return value if math.isfinite(value) else None

    return value


def compose_json(payload: dict, metadata: Metadata, path: Optional[str] = None) -> Artifact:
    document = jsonable(payload)
    document["metadata"] = metadata.as_dict()
    body = json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"
    return Artifact(path=path, body=body)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def compose_csv(
    header: Sequence[str],
    rows: Iterable[Sequence],
    metadata: Metadata,
    path: Optional[str] = None,
) -> Artifact:
    body = ""
    for key, value in metadata.as_dict().items():
        body += f"# {key}: {value}\n"

    body += ",".join(header) + "\n"
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        body += ",".join(_cell(value) for value in row) + "\n"

    return Artifact(path=path, body=body)
