"""Core contracts: state vectors, time grids, applications, spatial transfers.

A problem is described by an Application: a time grid, an initial condition,
and a one-step integrator that propagates a StateVector from one time point
to the next.  The solver only ever touches problems through these contracts,
so any time-dependent problem with a step routine can be plugged in.
"""

import copy
from abc import ABC, abstractmethod

import numpy as np

__all__ = [
    "StateVector",
    "DenseVector",
    "TimeGrid",
    "Application",
    "SpatialTransfer",
    "IdentityTransfer",
    "PropagationError",
    "sequential_solve",
]


class PropagationError(RuntimeError):
    """Raised when a time-integration step cannot be carried out."""


class StateVector(ABC):
    """Solution at a single point in time.

    Values are treated as immutable once produced: operations return new
    vectors instead of mutating their operands.  The packed form is the wire
    format for communication between workers: a flat, contiguous buffer of
    little-endian 64-bit reals whose length is fixed per application.
    """

    @abstractmethod
    def __add__(self, other: "StateVector") -> "StateVector":
        ...

    @abstractmethod
    def __sub__(self, other: "StateVector") -> "StateVector":
        ...

    @abstractmethod
    def norm(self) -> float:
        """Non-negative magnitude; zero exactly when the payload is all zeros."""

    @abstractmethod
    def clone(self) -> "StateVector":
        """Independent deep copy."""

    @abstractmethod
    def clone_zero(self) -> "StateVector":
        """New vector of the same structure, all zeros."""

    @abstractmethod
    def clone_rand(self, rng: np.random.Generator) -> "StateVector":
        """New vector of the same structure with i.i.d. uniform [0, 1) entries."""

    @abstractmethod
    def pack(self) -> np.ndarray:
        """Flat float64 buffer holding the payload."""

    @abstractmethod
    def unpack(self, buffer: np.ndarray) -> "StateVector":
        """New vector of the same structure rebuilt from a packed buffer."""


class DenseVector(StateVector):
    """Numpy-backed state vector; the payload is a real array of any shape.

    The norm is the Euclidean norm of the flattened payload.  Problems that
    need a different notion of magnitude can subclass and override norm().
    """

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def __add__(self, other):
        return DenseVector(self.values + other.values)

    def __sub__(self, other):
        return DenseVector(self.values - other.values)

    def norm(self):
        return float(np.linalg.norm(self.values.ravel()))

    def clone(self):
        return DenseVector(self.values.copy())

    def clone_zero(self):
        return DenseVector(np.zeros_like(self.values))

    def clone_rand(self, rng):
        return DenseVector(rng.random(self.values.shape))

    def pack(self):
        return np.ascontiguousarray(self.values, dtype="<f8").ravel().copy()

    def unpack(self, buffer):
        buffer = np.asarray(buffer, dtype=np.float64)
        if buffer.size != self.values.size:
            raise ValueError(
                f"packed buffer has {buffer.size} entries, expected {self.values.size}"
            )
        return DenseVector(buffer.reshape(self.values.shape).copy())

    def __repr__(self):
        return f"DenseVector({self.values!r})"


class TimeGrid:
    """Ordered, strictly increasing array of time points."""

    __slots__ = ("points",)

    def __init__(self, points):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 1 or points.size < 2:
            raise ValueError("a time grid needs at least two points")
        if not np.all(np.diff(points) > 0):
            raise ValueError("time points must be strictly increasing")
        self.points = points

    @classmethod
    def uniform(cls, t_start: float, t_stop: float, nt: int) -> "TimeGrid":
        """Grid of nt equally spaced points covering [t_start, t_stop]."""
        if nt < 2:
            raise ValueError("uniform grid needs nt >= 2 points")
        if not t_stop > t_start:
            raise ValueError("t_stop must exceed t_start")
        return cls(np.linspace(t_start, t_stop, nt))

    @property
    def t_start(self):
        return float(self.points[0])

    @property
    def t_stop(self):
        return float(self.points[-1])

    @property
    def count(self):
        return int(self.points.size)

    def __len__(self):
        return self.points.size

    def __repr__(self):
        return f"TimeGrid({self.t_start}..{self.t_stop}, {self.count} points)"


class Application(ABC):
    """A time grid plus a one-step time integrator and an initial condition.

    Subclasses must set two member variables in their constructor:

    * ``vector_template`` -- a prototype StateVector used for allocation and
      for rebuilding vectors from packed buffers, and
    * ``vector_t_start`` -- the initial condition at the first grid point.

    The constructor accepts either an explicit TimeGrid or the triple
    (t_start, t_stop, nt), where nt counts time points including the start.
    """

    vector_template: StateVector
    vector_t_start: StateVector

    def __init__(self, time_grid=None, t_start=None, t_stop=None, nt=None):
        if time_grid is None:
            time_grid = TimeGrid.uniform(t_start, t_stop, nt)
        self.time_grid = time_grid

    @abstractmethod
    def step(self, u_start: StateVector, t_start: float, t_stop: float) -> StateVector:
        """Propagate u_start from t_start to t_stop, forcing included.

        Must be deterministic: identical inputs produce bitwise-identical
        output.  Implementations raise PropagationError on non-finite input
        or when an inner solve fails, naming the offending time interval.
        """

    def on_time_grid(self, time_grid: TimeGrid) -> "Application":
        """Shallow copy of this application bound to a different time grid.

        This is the re-discretization used for coarse levels: the step
        routine is unchanged and simply sees larger intervals.
        """
        other = copy.copy(self)
        other.time_grid = time_grid
        return other


class SpatialTransfer(ABC):
    """Transfer of a state between the spatial grids of two adjacent levels."""

    @abstractmethod
    def restrict(self, u: StateVector) -> StateVector:
        """Fine-space vector to coarse-space vector."""

    @abstractmethod
    def interpolate(self, u: StateVector) -> StateVector:
        """Coarse-space vector to fine-space vector."""


class IdentityTransfer(SpatialTransfer):
    """Exact identity in both directions (no spatial coarsening)."""

    def restrict(self, u):
        return u

    def interpolate(self, u):
        return u


def _check_finite(u: StateVector, t_start: float, t_stop: float) -> None:
    """Guard used by the shipped applications at the top of step()."""
    if not np.all(np.isfinite(u.values)):
        raise PropagationError(
            f"non-finite state entering the step from t={t_start} to t={t_stop}"
        )


def sequential_solve(app: Application) -> list:
    """Classical time marching over the full grid; the serial reference."""
    t = app.time_grid.points
    u = [app.vector_t_start]
    for i in range(1, len(t)):
        u.append(app.step(u[-1], t[i - 1], t[i]))
    return u
