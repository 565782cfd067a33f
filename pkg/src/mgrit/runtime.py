"""Time-domain decomposition and the transport layer between workers.

The finest grid is split into contiguous index ranges, one per worker; every
coarser level inherits its ownership from the fine-level image of each point.
Workers interact only through a two-primitive transport contract: ordered
point-to-point messages of packed buffers, and gather/scatter rooted at one
worker (built on top of the point-to-point primitive, so no barriers).  The
in-process thread transport is the reference implementation; an MPI-backed
transport with identical semantics is available when mpi4py is installed.
"""

import queue
import threading
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

__all__ = [
    "distribute_points",
    "TimeDecomposition",
    "CommunicatorSplit",
    "split_communicator",
    "split_mpi_communicator",
    "Transport",
    "LocalTransport",
    "ThreadTransport",
    "MpiTransport",
    "TransportError",
]

RECV_TIMEOUT_SECONDS = 120.0


class TransportError(RuntimeError):
    """Raised when a message cannot be delivered or does not match."""


def distribute_points(n_points: int, n_workers: int) -> list:
    """Contiguous [lo, hi) ranges splitting n_points evenly across workers.

    The first n_points mod n_workers workers receive one extra point.
    """
    if n_workers < 1:
        raise ValueError("need at least one worker")
    base, extra = divmod(n_points, n_workers)
    ranges = []
    lo = 0
    for w in range(n_workers):
        hi = lo + base + (1 if w < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


@dataclass(frozen=True)
class CommunicatorSplit:
    """Row/column split of a worker set into time and space groups."""

    world_size: int
    world_rank: int
    time_size: int
    time_rank: int
    space_size: int
    space_rank: int


def split_communicator(world_size: int, world_rank: int, space_size: int) -> CommunicatorSplit:
    """Split a world of workers into time x space groups.

    Workers with equal rank mod space_size share a time group; workers with
    equal rank div space_size share a space group.
    """
    if world_size % space_size != 0:
        raise ValueError(
            f"world size {world_size} is not divisible by space size {space_size}"
        )
    if not 0 <= world_rank < world_size:
        raise ValueError("world rank out of range")
    return CommunicatorSplit(
        world_size=world_size,
        world_rank=world_rank,
        time_size=world_size // space_size,
        time_rank=world_rank // space_size,
        space_size=space_size,
        space_rank=world_rank % space_size,
    )


def split_mpi_communicator(comm, space_size: int):
    """Split an mpi4py communicator into (comm_time, comm_space)."""
    split = split_communicator(comm.Get_size(), comm.Get_rank(), space_size)
    comm_time = comm.Split(color=split.space_rank, key=split.time_rank)
    comm_space = comm.Split(color=split.time_rank, key=split.space_rank)
    return comm_time, comm_space


class TimeDecomposition:
    """Ownership of time-point indices per worker per level.

    Level-0 ranges come from distribute_points (or an explicit override);
    on level l+1 a point is owned by the owner of its level-l image, so
    ranges stay contiguous on every level.  During the coarsest-level solve
    one designated worker temporarily holds all points via gather/scatter.
    """

    def __init__(self, level_sizes, cf_maps, n_workers, ranges0=None):
        if ranges0 is None:
            ranges0 = distribute_points(level_sizes[0], n_workers)
        if len(ranges0) != n_workers:
            raise ValueError("ranges0 must list one range per worker")
        self.n_workers = n_workers
        self.ranges = [list(ranges0)]
        for l, cf_map in enumerate(cf_maps):
            coarse = []
            for lo, hi in self.ranges[l]:
                clo = int(np.searchsorted(cf_map, lo, side="left"))
                chi = int(np.searchsorted(cf_map, hi, side="left"))
                coarse.append((clo, chi))
            self.ranges.append(coarse)
        # range start offsets per level, for owner lookup
        self._starts = [[r[0] for r in level] for level in self.ranges]

    @property
    def n_levels(self):
        return len(self.ranges)

    def owned(self, level: int, rank: int) -> tuple:
        return self.ranges[level][rank]

    def owner_of(self, level: int, index: int) -> int:
        """Rank owning the given index; empty ranges are skipped naturally."""
        w = bisect_right(self._starts[level], index) - 1
        while self.ranges[level][w][0] > index or self.ranges[level][w][1] <= index:
            w -= 1
            if w < 0:
                raise ValueError(f"index {index} not owned at level {level}")
        return w

    def n_boundaries(self, level: int) -> int:
        """Number of adjacent ownership boundaries (nonempty ranges - 1)."""
        nonempty = sum(1 for lo, hi in self.ranges[level] if hi > lo)
        return max(nonempty - 1, 0)

    @property
    def coarsest_owner(self) -> int:
        return self.owner_of(self.n_levels - 1, 0)


class Transport:
    """Point-to-point + rooted gather/scatter between workers.

    Subclasses provide send/recv; gather, scatter and bcast are composed
    from them, receiving in rank order so results are deterministic.
    Message counts are recorded for budget assertions.
    """

    rank: int
    size: int

    def __init__(self):
        self._coll_seq = 0

    def send(self, dst: int, tag, payload) -> None:
        raise NotImplementedError

    def recv(self, src: int, tag):
        raise NotImplementedError

    def _next_coll_tag(self):
        self._coll_seq += 1
        return ("coll", self._coll_seq)

    def gather(self, root: int, payload):
        """All workers contribute; root returns the rank-ordered list."""
        tag = self._next_coll_tag()
        if self.rank == root:
            return [
                payload if r == root else self.recv(r, tag) for r in range(self.size)
            ]
        self.send(root, tag, payload)
        return None

    def scatter(self, root: int, payloads):
        """Root hands out payloads[r] to each rank; returns the local one."""
        tag = self._next_coll_tag()
        if self.rank == root:
            for r in range(self.size):
                if r != root:
                    self.send(r, tag, payloads[r])
            return payloads[root]
        return self.recv(root, tag)

    def bcast(self, root: int, payload):
        return self.scatter(root, [payload] * self.size if self.rank == root else None)


class LocalTransport(Transport):
    """Single-worker transport; point-to-point traffic is impossible."""

    def __init__(self):
        super().__init__()
        self.rank = 0
        self.size = 1

    def send(self, dst, tag, payload):
        raise TransportError("single-worker run attempted to send a message")

    def recv(self, src, tag):
        raise TransportError("single-worker run attempted to receive a message")

    def gather(self, root, payload):
        return [payload]

    def scatter(self, root, payloads):
        return payloads[0]


class ThreadTransport(Transport):
    """In-process transport for workers running as threads.

    One FIFO queue per directed worker pair; tags are carried with each
    message and verified on receipt, so any protocol mismatch fails loudly
    instead of silently mispairing values.  A shared log of (src, dst, tag)
    triples supports message-budget checks.
    """

    def __init__(self, rank, size, channels, log, log_lock):
        super().__init__()
        self.rank = rank
        self.size = size
        self._channels = channels
        self.log = log
        self._log_lock = log_lock

    @classmethod
    def create(cls, n_workers: int) -> list:
        """Connected transports for n workers sharing one channel set."""
        channels = {
            (src, dst): queue.Queue()
            for src in range(n_workers)
            for dst in range(n_workers)
            if src != dst
        }
        log = []
        lock = threading.Lock()
        return [cls(r, n_workers, channels, log, lock) for r in range(n_workers)]

    def send(self, dst, tag, payload):
        self._channels[(self.rank, dst)].put((tag, payload))
        with self._log_lock:
            self.log.append((self.rank, dst, tag))

    def recv(self, src, tag):
        try:
            got_tag, payload = self._channels[(src, self.rank)].get(
                timeout=RECV_TIMEOUT_SECONDS
            )
        except queue.Empty:
            raise TransportError(
                f"worker {self.rank} timed out waiting for {tag} from worker {src}"
            ) from None
        if got_tag != tag:
            raise TransportError(
                f"worker {self.rank} expected {tag} from worker {src}, got {got_tag}"
            )
        return payload


class MpiTransport(Transport):
    """Transport over an mpi4py communicator.

    Delivery between a worker pair is ordered, and the exchange protocol is
    globally deterministic, so matching by order alone is sufficient; the
    structured tag is not transmitted.
    """

    _P2P_TAG = 7

    def __init__(self, comm):
        super().__init__()
        self.comm = comm
        self.rank = comm.Get_rank()
        self.size = comm.Get_size()
        self.log = []

    def send(self, dst, tag, payload):
        self.comm.send(payload, dest=dst, tag=self._P2P_TAG)
        self.log.append((self.rank, dst, tag))

    def recv(self, src, tag):
        return self.comm.recv(source=src, tag=self._P2P_TAG)
