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

import asyncio
import logging
from typing import Callable, List, Optional, Sequence, TypeVar

import sofup.cfg as cfg

T = TypeVar("T")
R = TypeVar("R")


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = cfg.get_int("threads")
    return max(1, int(threads))


async def _gather_bounded(fn: Callable[[T], R], items: Sequence[T], threads: int) -> List[R]:
    semaphore = asyncio.Semaphore(threads)

    async def _one(item: T) -> R:
        async with semaphore:
            # numpy/LAPACK release the GIL, so worker threads do overlap
            return await asyncio.to_thread(fn, item)

    return await asyncio.gather(*(_one(item) for item in items))


def map_ordered(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """Apply fn to every item, in parallel when allowed, returning results in item order.

    Every item must carry everything fn needs (seed included), so the output never depends
    on the schedule.
    """
    threads = thread_count(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logging.debug(f"running {len(items)} tasks on {threads} threads")
    return asyncio.run(_gather_bounded(fn, items, threads))
