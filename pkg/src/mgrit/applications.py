"""Shipped problems: Dahlquist's scalar ODE and forced 1D/2D heat equations.

All three use backward Euler, so each step is an implicit solve over one
interval: a closed-form division for the scalar ODE, a direct tridiagonal
solve in 1D, and a cached sparse LU factorization in 2D.  A full-weighting /
linear-interpolation transfer pair for nested 1D grids supports spatial
coarsening runs.
"""

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .core import Application, DenseVector, SpatialTransfer, _check_finite

__all__ = [
    "Dahlquist",
    "Heat1D",
    "Heat2D",
    "Heat1DTransfer",
    "heat1d_exact",
    "heat1d_forcing",
    "heat2d_exact",
    "heat2d_forcing",
]


class Dahlquist(Application):
    """u' = lambda * u with u(t_start) = 1, backward Euler.

    The step is the affine map u -> u / (1 - dt * lambda), stable for
    lambda < 0 and any dt > 0.
    """

    def __init__(self, constant_lambda=-1.0, **grid_kwargs):
        super().__init__(**grid_kwargs)
        self.constant_lambda = float(constant_lambda)
        self.vector_template = DenseVector(np.zeros(1))
        self.vector_t_start = DenseVector(np.ones(1))

    def step(self, u_start, t_start, t_stop):
        _check_finite(u_start, t_start, t_stop)
        return DenseVector(
            1.0 / (1.0 - (t_stop - t_start) * self.constant_lambda) * u_start.values
        )


def heat1d_exact(x, t):
    """Exact solution sin(pi x) cos(t) of the forced 1D problem below."""
    return np.sin(np.pi * x) * np.cos(t)


def heat1d_forcing(x, t):
    """Forcing -sin(pi x) (sin t - pi^2 cos t); makes heat1d_exact exact."""
    return -np.sin(np.pi * x) * (np.sin(t) - np.pi**2 * np.cos(t))


class Heat1D(Application):
    """u_t - a u_xx = b(x, t) on [0, 1], homogeneous Dirichlet boundaries.

    Second-order central differences on n_x equispaced points (boundaries
    included in the state, pinned to zero), backward Euler in time with the
    forcing evaluated at the end of the interval.  The tridiagonal system is
    eliminated directly, so each step is exact to machine precision.
    """

    def __init__(self, n_x=1025, a=1.0, forcing=heat1d_forcing, **grid_kwargs):
        super().__init__(**grid_kwargs)
        if n_x < 3:
            raise ValueError("need at least one interior point")
        self.n_x = int(n_x)
        self.a = float(a)
        self.forcing = forcing
        self.x = np.linspace(0.0, 1.0, self.n_x)
        ic = heat1d_exact(self.x, self.time_grid.t_start)
        ic[0] = ic[-1] = 0.0
        self.vector_template = DenseVector(np.zeros(self.n_x))
        self.vector_t_start = DenseVector(ic)

    def step(self, u_start, t_start, t_stop):
        _check_finite(u_start, t_start, t_stop)
        dt = t_stop - t_start
        if not dt > 0:
            raise ValueError("t_stop must exceed t_start")
        h = 1.0 / (self.n_x - 1)
        r = dt * self.a / h**2
        m = self.n_x - 2
        # banded form of I - dt*a*L on the interior points
        ab = np.empty((3, m))
        ab[0] = -r
        ab[1] = 1.0 + 2.0 * r
        ab[2] = -r
        rhs = u_start.values[1:-1] + dt * self.forcing(self.x[1:-1], t_stop)
        interior = scipy.linalg.solve_banded((1, 1), ab, rhs)
        out = np.zeros(self.n_x)
        out[1:-1] = interior
        return DenseVector(out)


def heat2d_exact(x, y, t):
    """Exact solution sin(2 pi x) sin(2 pi y) cos(t) of the 2D problem."""
    return np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) * np.cos(t)


def heat2d_forcing(x, y, t):
    """Forcing for which heat2d_exact solves u_t - lap(u) = b."""
    s = np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    return -s * np.sin(t) + 8 * np.pi**2 * s * np.cos(t)


class Heat2D(Application):
    """u_t - lap(u) = b(x, y, t) on the unit square, zero boundaries.

    Five-point Laplacian on an n_x by n_y grid, backward Euler; the implicit
    system is solved by a sparse LU factorization cached per step size.  A
    space communicator handle may be passed for problems that distribute the
    spatial solve; this implementation is serial in space and ignores it.
    """

    def __init__(self, n_x=33, n_y=33, comm_space=None, forcing=heat2d_forcing, **grid_kwargs):
        super().__init__(**grid_kwargs)
        if n_x < 3 or n_y < 3:
            raise ValueError("need at least one interior point per direction")
        self.n_x, self.n_y = int(n_x), int(n_y)
        self.comm_space = comm_space
        self.forcing = forcing
        self.x = np.linspace(0.0, 1.0, self.n_x)
        self.y = np.linspace(0.0, 1.0, self.n_y)
        self._xx, self._yy = np.meshgrid(
            self.x[1:-1], self.y[1:-1], indexing="ij"
        )
        ic = heat2d_exact(
            self.x[:, None], self.y[None, :], self.time_grid.t_start
        )
        ic[0, :] = ic[-1, :] = 0.0
        ic[:, 0] = ic[:, -1] = 0.0
        self.vector_template = DenseVector(np.zeros((self.n_x, self.n_y)))
        self.vector_t_start = DenseVector(ic)
        self._lu_cache = {}

    def _laplacian(self):
        mx, my = self.n_x - 2, self.n_y - 2
        hx = 1.0 / (self.n_x - 1)
        hy = 1.0 / (self.n_y - 1)
        dxx = scipy.sparse.diags(
            [1.0, -2.0, 1.0], [-1, 0, 1], shape=(mx, mx)
        ) / hx**2
        dyy = scipy.sparse.diags(
            [1.0, -2.0, 1.0], [-1, 0, 1], shape=(my, my)
        ) / hy**2
        ix = scipy.sparse.identity(mx)
        iy = scipy.sparse.identity(my)
        return scipy.sparse.kron(dxx, iy) + scipy.sparse.kron(ix, dyy)

    def _solver_for(self, dt):
        lu = self._lu_cache.get(dt)
        if lu is None:
            m = (self.n_x - 2) * (self.n_y - 2)
            system = scipy.sparse.identity(m) - dt * self._laplacian()
            lu = scipy.sparse.linalg.splu(system.tocsc())
            self._lu_cache[dt] = lu
        return lu

    def step(self, u_start, t_start, t_stop):
        _check_finite(u_start, t_start, t_stop)
        dt = t_stop - t_start
        if not dt > 0:
            raise ValueError("t_stop must exceed t_start")
        rhs = u_start.values[1:-1, 1:-1] + dt * self.forcing(
            self._xx, self._yy, t_stop
        )
        interior = self._solver_for(dt).solve(rhs.ravel())
        out = np.zeros((self.n_x, self.n_y))
        out[1:-1, 1:-1] = interior.reshape(self.n_x - 2, self.n_y - 2)
        return DenseVector(out)


class Heat1DTransfer(SpatialTransfer):
    """Full-weighting restriction / linear interpolation between nested 1D
    grids with n_fine = 2 * n_coarse - 1 points.

    Interpolation reproduces any function that is linear between coarse
    points exactly; the composition interpolate(restrict(.)) preserves
    constants exactly.
    """

    def __init__(self, n_fine, n_coarse):
        if n_fine != 2 * n_coarse - 1:
            raise ValueError(
                f"grids are not nested: n_fine={n_fine}, n_coarse={n_coarse}"
            )
        self.n_fine = int(n_fine)
        self.n_coarse = int(n_coarse)

    def restrict(self, u):
        v = u.values
        if v.size != self.n_fine:
            raise ValueError(f"expected {self.n_fine} fine values, got {v.size}")
        w = np.empty(self.n_coarse)
        w[0], w[-1] = v[0], v[-1]
        w[1:-1] = 0.25 * v[1:-3:2] + 0.5 * v[2:-1:2] + 0.25 * v[3:-1:2]
        return DenseVector(w)

    def interpolate(self, u):
        v = u.values
        if v.size != self.n_coarse:
            raise ValueError(f"expected {self.n_coarse} coarse values, got {v.size}")
        w = np.empty(self.n_fine)
        w[0::2] = v
        w[1::2] = 0.5 * (v[:-1] + v[1:])
        return DenseVector(w)
