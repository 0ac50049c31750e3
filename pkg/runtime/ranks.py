"""
Simulated ranks
Runs one program per rank on its own thread with MPI-like point-to-point
messages and collectives. Reductions combine contributions in ascending
rank order so results do not depend on thread scheduling; allreduce_fsum
rounds once and so does not depend on the number of ranks either.
"""

import copy
import math
import queue
import threading
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from common.errors import CollectiveMismatchError, InvalidArgumentError, RankFailureError

DEFAULT_TIMEOUT = 300.0
_POLL = 0.05


class _GroupAborted(Exception):
    """Raised inside surviving ranks after another rank failed"""


def _snapshot(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.copy()
    if isinstance(value, (int, float, str, type(None))):
        return value
    return copy.deepcopy(value)


class RankGroup:
    """Shared state of one group of simulated ranks"""

    def __init__(self, nprocs: int, timeout: float = DEFAULT_TIMEOUT):
        if nprocs < 1:
            raise InvalidArgumentError(f"nprocs must be >= 1, got {nprocs}")
        self.nprocs = nprocs
        self.timeout = timeout
        self._barrier = threading.Barrier(nprocs)
        self._slots: List[Optional[Tuple[str, Any]]] = [None] * nprocs
        self._channels: Dict[Tuple[int, int, int], queue.Queue] = {}
        self._channel_lock = threading.Lock()
        self.aborted = threading.Event()

    def channel(self, src: int, dst: int, tag: int) -> queue.Queue:
        key = (src, dst, tag)
        with self._channel_lock:
            if key not in self._channels:
                self._channels[key] = queue.Queue()
            return self._channels[key]

    def wait(self):
        try:
            self._barrier.wait(self.timeout)
        except threading.BrokenBarrierError:
            raise _GroupAborted()

    def abort(self):
        self.aborted.set()
        self._barrier.abort()

    def collective(self, rank: int, op: str, value: Any) -> List[Any]:
        """Deposit a value, wait for every rank, return all values in rank order"""
        self._slots[rank] = (op, _snapshot(value))
        self.wait()
        ops = [slot[0] for slot in self._slots]
        values = [slot[1] for slot in self._slots]
        self.wait()
        if len(set(ops)) != 1:
            raise CollectiveMismatchError(f"ranks entered different collectives: {ops}")
        return values


class RankContext:
    """Per-rank handle: identity, messages and collectives"""

    def __init__(self, group: RankGroup, rank: int):
        self._group = group
        self.rank = rank
        self.nprocs = group.nprocs

    def barrier(self):
        self._group.collective(self.rank, "barrier", None)

    def send(self, dest: int, value: Any, tag: int = 0):
        self._group.channel(self.rank, dest, tag).put(_snapshot(value))

    def recv(self, source: int, tag: int = 0) -> Any:
        channel = self._group.channel(source, self.rank, tag)
        waited = 0.0
        while True:
            if self._group.aborted.is_set():
                raise _GroupAborted()
            try:
                return channel.get(timeout=_POLL)
            except queue.Empty:
                waited += _POLL
                if waited > self._group.timeout:
                    raise TimeoutError(f"rank {self.rank}: no message from {source} (tag {tag})")

    def allgather(self, value: Any) -> List[Any]:
        return self._group.collective(self.rank, "allgather", value)

    def broadcast(self, value: Any, root: int = 0) -> Any:
        return self._group.collective(self.rank, f"broadcast:{root}", value)[root]

    def alltoall(self, values: List[Any]) -> List[Any]:
        """values[p] goes to rank p; result[p] came from rank p"""
        if len(values) != self.nprocs:
            raise InvalidArgumentError(f"alltoall needs {self.nprocs} entries, got {len(values)}")
        everything = self._group.collective(self.rank, "alltoall", values)
        return [everything[src][self.rank] for src in range(self.nprocs)]

    def allreduce_sum(self, value: Any) -> Any:
        parts = self._group.collective(self.rank, "allreduce_sum", value)
        total = parts[0]
        for part in parts[1:]:
            total = total + part
        return total

    def allreduce_fsum(self, terms: np.ndarray) -> Any:
        """Correctly rounded sum of every rank's terms along the last axis.

        1D terms give a float, 2D terms one float per row. The result is
        the same for any split of the terms over any number of ranks.
        """
        terms = np.asarray(terms, dtype=float)
        if terms.ndim not in (1, 2):
            raise InvalidArgumentError(f"allreduce_fsum needs 1D or 2D terms, got {terms.ndim}D")
        parts = self._group.collective(self.rank, "allreduce_fsum", terms)
        joined = np.concatenate(parts, axis=-1)
        if joined.ndim == 1:
            return math.fsum(joined)
        return np.array([math.fsum(row) for row in joined])

    def allreduce_max(self, value: Any) -> Any:
        parts = self._group.collective(self.rank, "allreduce_max", value)
        if isinstance(parts[0], np.ndarray):
            return np.maximum.reduce(parts)
        return max(parts)


def serial_context() -> RankContext:
    """Single-rank context for library calls made outside spawn_ranks"""
    return RankContext(RankGroup(1), 0)


def spawn_ranks(nprocs: int, program: Callable[..., Any], *args,
                timeout: float = DEFAULT_TIMEOUT, **kwargs) -> List[Any]:
    """Run program(ctx, *args, **kwargs) once per rank and return results in rank order.

    When a rank raises, the group is aborted and RankFailureError names the
    lowest failing rank.
    """
    group = RankGroup(nprocs, timeout)
    results: List[Any] = [None] * nprocs
    errors: Dict[int, BaseException] = {}

    def run(rank: int):
        ctx = RankContext(group, rank)
        try:
            results[rank] = program(ctx, *args, **kwargs)
            # every rank must leave through the same door
            group.collective(rank, "exit", None)
        except _GroupAborted:
            pass
        except BaseException as exc:
            errors[rank] = exc
            group.abort()

    if nprocs == 1:
        run(0)
    else:
        threads = [threading.Thread(target=run, args=(r,), name=f"rank-{r}", daemon=True)
                   for r in range(nprocs)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if errors:
        rank = min(errors)
        raise RankFailureError(rank, errors[rank]) from errors[rank]
    return results
