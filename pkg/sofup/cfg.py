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

import os
import sys
import json
import logging
from typing import Mapping

ENV_PREFIX = "SOFUP_"

# some defaults
CFG_DICT = {
    # print debug information into stderr
    "debug": "no",
    # max worker threads for scan cells and mdrp restarts. Results do not depend on this.
    "threads": "1",
    # the explicit projector P is n^2 x n^2. Above this n, only the factored form is kept
    "explicit_projector_max_n": "64",
    # multi-start count for the inner destabilizer search
    "mdrp_inner_starts": "20",
    # bisection steps before giving up on closing the bracket
    "mdrp_max_iterations": "60",
    # hard cap on function evaluations per inner local search
    "mdrp_inner_maxfev": "2000",
    # inner search budget per dimension of the n^2 + 1 point simplex, under the cap above
    "mdrp_inner_fev_per_dim": "20",
    # an inner search stops after this many simplex sizes of evaluations without progress
    "mdrp_inner_stall_per_dim": "5",
    # progress means alpha rising by more than this times beta
    "mdrp_inner_stall_rtol": "1e-6",
    # a trial perturbation counts as destabilizing when alpha >= this
    "witness_threshold": "-1e-9",
    # quadrature tolerances for the region integrals
    "quad_epsabs": "1e-11",
    "quad_epsrel": "1e-11",
    "quad_limit": "200",
    # relative tolerance when comparing delta' P delta against ||B G C + Delta||_F^2
    "cost_crosscheck_rtol": "1e-8",
}


def get_int(key: str) -> int:
    return int(CFG_DICT[key])


def get_float(key: str) -> float:
    return float(CFG_DICT[key])


def get_bool(key: str) -> bool:
    return CFG_DICT[key].lower() in ("yes", "true", "1")


def reconfigure_logging():
    logging_format = "%(asctime)s %(levelname)s: %(message)s"
    # stdout carries the JSON documents, logs go elsewhere
    logging.basicConfig(format=logging_format, stream=sys.stderr, datefmt="%Y-%m-%d %H:%M:%S")

    logging_level = logging.DEBUG
    if not get_bool("debug"):
        logging_level = logging.INFO

    logging.getLogger().setLevel(logging_level)


def reconfigure(data: Mapping[str, str]):
    for key in data:
        if key not in CFG_DICT:
            logging.warning(f"ignoring unknown config key '{key}' (doesn't have a previous value)")
            continue

        CFG_DICT[key] = str(data[key])

    reconfigure_logging()
    logging.debug(f"new configuration: {CFG_DICT}")


def from_environment(environ: Mapping[str, str] = os.environ) -> dict:
    """Collect SOFUP_<KEY> variables as config overrides."""
    data = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue

        data[name[len(ENV_PREFIX) :].lower()] = value

    return data


def from_file(path: str) -> dict:
    """Read config overrides from a flat JSON object."""
    with open(path) as f:
        data = json.load(f)

    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")

    return data
