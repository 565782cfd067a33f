"""The multigrid-reduction-in-time iteration.

One iteration relaxes the finest level, restricts the current approximation
and its residual to each coarser level in turn (full approximation scheme,
so nonlinear integrators need no special handling), solves the coarsest
level by forward substitution, and corrects back up through injection at
C-points followed by an F-relaxation.  V- and F-cycles, nested iteration,
and an optional extra spatial transfer per level pair are supported.

The engine works on the slice of each level owned by this worker plus a
received left-boundary value; all cross-worker traffic flows through the
transport handed in at construction.  A single worker runs with zero
communication.
"""

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import IdentityTransfer, PropagationError
from .runtime import LocalTransport, ThreadTransport, TimeDecomposition

__all__ = [
    "MgritSettings",
    "SolveInfo",
    "LevelState",
    "MgritSolver",
    "DivergenceError",
    "combine_residual_norms",
    "solve_parallel",
]


class DivergenceError(RuntimeError):
    """Raised when the residual becomes non-finite."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite residual at iteration {iteration}")


@dataclass
class MgritSettings:
    """Algorithmic choices for a solve.

    cf_iter counts the CF-sweeps that follow the always performed leading
    F-relaxation: 0 gives F-, 1 FCF-, 2 FCFCF-relaxation.  With
    skip_first_f_relax on, the leading finest-level F-relaxation is omitted
    from the third iteration onward; the preceding correction already left
    the F-points consistent, so the converged result is unchanged.
    """

    cycle_type: str = "V"
    cf_iter: int = 1
    tol: float = 1e-7
    max_iter: int = 100
    nested_iteration: bool = True
    random_seed: int = 0
    skip_first_f_relax: bool = True
    transfers: list = None
    trace: bool = False

    def __post_init__(self):
        if self.cycle_type not in ("V", "F"):
            raise ValueError("cycle_type must be 'V' or 'F'")
        if self.cf_iter < 0:
            raise ValueError("cf_iter must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveInfo:
    """Statistics of one solve.

    residual_history holds one entry per completed iteration; the residual
    measured after the setup phase (nested iteration or the degenerate
    single-level direct solve) is reported separately in setup_residual.
    """

    iterations: int
    residual_history: list
    setup_seconds: float
    solve_seconds: float
    converged: bool
    setup_residual: float = None
    residual_seconds: list = field(default_factory=list)


class LevelState:
    """Per-level arrays over that level's time points.

    u is the current approximation, v the snapshot taken at injection time
    (the pre-solve coarse value the correction is measured against), and g
    the right-hand side: on the finest level the initial condition followed
    by zeros, on coarse levels the full-approximation right-hand side
    arranged so that every level solves u_i - phi(u_{i-1}) = g_i.
    """

    __slots__ = ("u", "v", "g")

    def __init__(self, n):
        self.u = [None] * n
        self.v = [None] * n
        self.g = [None] * n


def combine_residual_norms(norms) -> float:
    """Euclidean combination of per-C-point residual norms.

    Exact (order-independent) accumulation, so the result is identical for
    any grouping of the contributions across workers.
    """
    return math.sqrt(math.fsum(x * x for x in norms))


class MgritSolver:
    """Iterates on a hierarchy until the space-time residual is below tol.

    The residual is measured at the C-points of the finest grid after every
    iteration: r_i = g_i - (u_i - phi(u_{i-1})), combined over all C-points
    in the Euclidean norm.  After an F-relaxation the residual at F-points
    is zero by construction, so measuring at C-points only loses nothing.
    """

    def __init__(self, hierarchy, settings=None, transport=None, ranges0=None):
        self.hierarchy = hierarchy
        self.settings = settings or MgritSettings()
        self.transport = transport or LocalTransport()

        n_levels = len(hierarchy)
        if self.settings.transfers is None:
            self.transfers = [IdentityTransfer()] * (n_levels - 1)
        else:
            self.transfers = list(self.settings.transfers)
            if len(self.transfers) != n_levels - 1:
                raise ValueError(
                    f"got {len(self.transfers)} spatial transfers for "
                    f"{n_levels} levels, expected {n_levels - 1}"
                )

        # ranges0 overrides the even finest-level ownership split
        self.decomp = TimeDecomposition(
            hierarchy.sizes, hierarchy.cf_maps(), self.transport.size, ranges0=ranges0
        )
        self._prepare_local_structure()
        self.states = None
        self.trace = []
        self._phase_seq = defaultdict(int)

    # ------------------------------------------------------------------
    # local slice structure

    def _prepare_local_structure(self):
        rank = self.transport.rank
        self._lo, self._hi = [], []
        self._is_c = []
        self._f_indep = []
        self._f_dep = []
        self._owned_c = []
        for l, lev in enumerate(self.hierarchy.levels):
            lo, hi = self.decomp.owned(l, rank)
            self._lo.append(lo)
            self._hi.append(hi)
            if lev.cf_map is None:
                self._is_c.append(None)
                self._f_indep.append([])
                self._f_dep.append(None)
                self._owned_c.append([])
                continue
            is_c = np.zeros(lev.count, dtype=bool)
            is_c[lev.cf_map] = True
            self._is_c.append(is_c)
            indep, dep = [], None
            for bs, be in lev.f_blocks:
                s, e = max(bs, lo), min(be, hi)
                if s >= e:
                    continue
                if s == lo and lo > 0:
                    dep = (s, e)
                else:
                    indep.append((s, e))
            self._f_indep.append(indep)
            self._f_dep.append(dep)
            self._owned_c.append(
                [int(i) for i in lev.cf_map if max(lo, 1) <= i < hi]
            )

    def _phase_tag(self, level, phase):
        # counters advance in lockstep on every worker, so sender and
        # receiver derive the same tag independently
        key = (level, phase)
        self._phase_seq[key] += 1
        return (level, phase, self._phase_seq[key])

    def _send_value(self, level, tag, index, vec):
        self.transport.send(self.decomp.owner_of(level, index), tag, vec.pack())

    def _recv_value(self, level, tag, index):
        buf = self.transport.recv(self.decomp.owner_of(level, index), tag)
        return self.hierarchy[level].app.vector_template.unpack(buf)

    def _phi(self, level, i, u):
        """Propagate u across the level's interval ending at point i."""
        app = self.hierarchy[level].app
        t = app.time_grid.points
        try:
            return app.step(u, t[i - 1], t[i])
        except PropagationError:
            raise
        except Exception as exc:
            raise PropagationError(
                f"step failed on level {level}, interval [{t[i - 1]}, {t[i]}]: {exc}"
            ) from exc

    def _trace(self, level, op, first, last):
        if self.settings.trace:
            self.trace.append((level, op, first, last))

    # ------------------------------------------------------------------
    # relaxation

    def f_relax(self, l):
        """Propagate across every owned F-block, each seeded by its C-point.

        Blocks are independent; a block cut by an ownership boundary is
        continued from the left neighbour's boundary value, so at most one
        value crosses each boundary per sweep.
        """
        st = self.states[l]
        lo, hi = self._lo[l], self._hi[l]
        n = self.hierarchy[l].count
        is_c = self._is_c[l]
        tag = self._phase_tag(l, "frelax")
        send_needed = lo < hi and hi < n and not is_c[hi]
        dep = self._f_dep[l]

        for s, e in self._f_indep[l]:
            u = st.u[s - 1]
            for i in range(s, e):
                u = self._phi(l, i, u) + st.g[i]
                st.u[i] = u
        if send_needed and not (dep is not None and dep[0] <= hi - 1 < dep[1]):
            self._send_value(l, tag, hi, st.u[hi - 1])
            send_needed = False
        if dep is not None:
            s, e = dep
            st.u[s - 1] = self._recv_value(l, tag, s - 1)
            u = st.u[s - 1]
            for i in range(s, e):
                u = self._phi(l, i, u) + st.g[i]
                st.u[i] = u
        if send_needed:
            self._send_value(l, tag, hi, st.u[hi - 1])
        self._trace(l, "f_relax", lo, hi - 1)

    def c_relax(self, l):
        """Update every owned C-point (except index 0) from its predecessor."""
        st = self.states[l]
        lo, hi = self._lo[l], self._hi[l]
        n = self.hierarchy[l].count
        is_c = self._is_c[l]
        tag = self._phase_tag(l, "crelax")
        if lo < hi and hi < n and is_c[hi]:
            self._send_value(l, tag, hi, st.u[hi - 1])
        if lo < hi and lo > 0 and is_c[lo]:
            st.u[lo - 1] = self._recv_value(l, tag, lo - 1)
        for i in self._owned_c[l]:
            st.u[i] = self._phi(l, i, st.u[i - 1]) + st.g[i]
        self._trace(l, "c_relax", lo, hi - 1)

    def relax(self, l, skip_first=False):
        """Leading F-relaxation followed by cf_iter CF-sweeps."""
        if not skip_first:
            self.f_relax(l)
        for _ in range(self.settings.cf_iter):
            self.c_relax(l)
            self.f_relax(l)

    # ------------------------------------------------------------------
    # residual

    def residual_c_norms(self, l=0):
        """Norms of the residual at the owned C-points of a level, in index
        order; index 0 is zero by construction and not measured."""
        st = self.states[l]
        lo, hi = self._lo[l], self._hi[l]
        n = self.hierarchy[l].count
        is_c = self._is_c[l]
        tag = self._phase_tag(l, "residual")
        if is_c is not None:
            if lo < hi and hi < n and is_c[hi]:
                self._send_value(l, tag, hi, st.u[hi - 1])
            if lo < hi and lo > 0 and is_c[lo]:
                st.u[lo - 1] = self._recv_value(l, tag, lo - 1)
            indices = self._owned_c[l]
        else:
            # degenerate single-level hierarchy: every point is measured
            if lo < hi and hi < n:
                self._send_value(l, tag, hi, st.u[hi - 1])
            if lo < hi and lo > 0:
                st.u[lo - 1] = self._recv_value(l, tag, lo - 1)
            indices = range(max(lo, 1), hi)
        norms = []
        for i in indices:
            r = st.g[i] - st.u[i] + self._phi(l, i, st.u[i - 1])
            norms.append(r.norm())
        self._trace(l, "residual", lo, hi - 1)
        return norms

    def residual_norm(self):
        """Global space-time residual norm on the finest level."""
        local = self.residual_c_norms(0)
        gathered = self.transport.gather(0, local)
        value = None
        if self.transport.rank == 0:
            value = combine_residual_norms(
                x for chunk in gathered for x in chunk
            )
        return self.transport.bcast(0, value)

    # ------------------------------------------------------------------
    # grid transfer

    def restrict(self, l):
        """Full-approximation restriction from level l to level l+1.

        Injects the C-point values (through the spatial restriction when
        one is configured), snapshots them, and assembles the coarse
        right-hand side so that the coarse system reads
        u_j - phi(u_{j-1}) = g_j.
        """
        fine, coarse = self.states[l], self.states[l + 1]
        cf = self.hierarchy[l].cf_map
        R = self.transfers[l].restrict
        clo, chi = self._lo[l + 1], self._hi[l + 1]
        flo, fhi = self._lo[l], self._hi[l]
        n_c = self.hierarchy[l + 1].count
        n_f = self.hierarchy[l].count
        is_c = self._is_c[l]

        for j in range(clo, chi):
            coarse.u[j] = R(fine.u[cf[j]])
            coarse.v[j] = coarse.u[j]

        tag_c = self._phase_tag(l + 1, "restrict_coarse")
        if clo < chi and chi < n_c:
            self._send_value(l + 1, tag_c, chi, coarse.u[chi - 1])
        if clo < chi and clo > 0:
            coarse.u[clo - 1] = self._recv_value(l + 1, tag_c, clo - 1)

        tag_f = self._phase_tag(l, "restrict_fine")
        if flo < fhi and fhi < n_f and is_c[fhi]:
            self._send_value(l, tag_f, fhi, fine.u[fhi - 1])
        if flo < fhi and flo > 0 and is_c[flo]:
            fine.u[flo - 1] = self._recv_value(l, tag_f, flo - 1)

        for j in range(clo, chi):
            if j == 0:
                coarse.g[0] = coarse.u[0]
            else:
                f = cf[j]
                r_fine = fine.g[f] - fine.u[f] + self._phi(l, f, fine.u[f - 1])
                coarse.g[j] = (
                    R(r_fine) + coarse.u[j] - self._phi(l + 1, j, coarse.u[j - 1])
                )
        self._trace(l, "restrict", flo, fhi - 1)

    def correct(self, l):
        """Coarse-grid correction of level l: inject the coarse error at the
        C-points (interpolated spatially when configured) and F-relax.

        Index 0 is pinned everywhere, so its error is identically zero and
        is skipped.
        """
        fine, coarse = self.states[l], self.states[l + 1]
        cf = self.hierarchy[l].cf_map
        P = self.transfers[l].interpolate
        clo, chi = self._lo[l + 1], self._hi[l + 1]
        for j in range(max(clo, 1), chi):
            e = coarse.u[j] - coarse.v[j]
            fine.u[cf[j]] = fine.u[cf[j]] + P(e)
        self._trace(l, "correct", self._lo[l], self._hi[l] - 1)
        self.f_relax(l)

    # ------------------------------------------------------------------
    # coarsest-level solve

    def coarse_solve(self, l):
        """Forward substitution u_0 = g_0, u_i = phi(u_{i-1}) + g_i.

        The right-hand sides are gathered to the worker owning point 0,
        solved sequentially there, and the solution slices handed back.
        """
        st = self.states[l]
        lo, hi = self._lo[l], self._hi[l]
        n = self.hierarchy[l].count
        owner = self.decomp.owner_of(l, 0)
        template = self.hierarchy[l].app.vector_template

        packed = [st.g[i].pack() for i in range(lo, hi)]
        slices = self.transport.gather(owner, packed)
        if self.transport.rank == owner:
            g_all = [template.unpack(b) for chunk in slices for b in chunk]
            u = [g_all[0]]
            for i in range(1, n):
                u.append(self._phi(l, i, u[-1]) + g_all[i])
            out = []
            for r in range(self.transport.size):
                rlo, rhi = self.decomp.owned(l, r)
                out.append([u[i].pack() for i in range(rlo, rhi)])
            mine = self.transport.scatter(owner, out)
        else:
            mine = self.transport.scatter(owner, None)
        for k, i in enumerate(range(lo, hi)):
            st.u[i] = template.unpack(mine[k])
        self._trace(l, "coarse_solve", 0, n - 1)

    # ------------------------------------------------------------------
    # cycles

    def v_cycle(self, l=0, skip_first_f=False):
        """Relax, restrict, recurse (or solve), correct; one coarsest visit."""
        if l == len(self.hierarchy) - 1:
            self.coarse_solve(l)
            return
        self.relax(l, skip_first=skip_first_f)
        self.restrict(l)
        self.v_cycle(l + 1)
        self.correct(l)

    def f_cycle(self, skip_first_f=False):
        """Descend to the coarsest level once, then return to it after each
        level is corrected for the first time: correct, then one V-cycle
        from that level, before ascending further."""
        L = len(self.hierarchy) - 1
        if L == 0:
            self.coarse_solve(0)
            return
        for l in range(L):
            self.relax(l, skip_first=skip_first_f and l == 0)
            self.restrict(l)
        self.coarse_solve(L)
        for l in range(L - 1, -1, -1):
            self.correct(l)
            if l > 0:
                self.v_cycle(l)

    # ------------------------------------------------------------------
    # setup

    def _allocate_states(self):
        self.states = [LevelState(lev.count) for lev in self.hierarchy.levels]
        self.trace = []
        self._phase_seq.clear()
        self._init_rhs(0)

    def _init_rhs(self, l):
        """Right-hand side of the original problem on level l: the level's
        initial condition at index 0, zeros elsewhere."""
        st = self.states[l]
        app = self.hierarchy[l].app
        for i in range(self._lo[l], self._hi[l]):
            st.g[i] = app.vector_t_start if i == 0 else app.vector_template.clone_zero()

    def _random_guess(self):
        """Seeded per-point random initial guess on the finest level.

        Each point draws from its own generator keyed by (seed, index), so
        the guess is identical for any worker count.
        """
        st = self.states[0]
        app = self.hierarchy[0].app
        seed = self.settings.random_seed
        for i in range(self._lo[0], self._hi[0]):
            if i == 0:
                st.u[0] = app.vector_t_start
            else:
                st.u[i] = app.vector_template.clone_rand(
                    np.random.default_rng((seed, i))
                )

    def _inject_initial_guess(self, l):
        """Nested-iteration injection of level l+1's solution into level l."""
        fine, coarse = self.states[l], self.states[l + 1]
        cf = self.hierarchy[l].cf_map
        P = self.transfers[l].interpolate
        for j in range(self._lo[l + 1], self._hi[l + 1]):
            fine.u[cf[j]] = P(coarse.u[j])
        if self._lo[l] == 0:
            # the start value is the level's own initial condition; a
            # non-identity spatial round trip must not perturb it
            fine.u[0] = self.hierarchy[l].app.vector_t_start
        self._trace(l, "inject", self._lo[l], self._hi[l] - 1)

    def nested_iteration(self):
        """Coarse-to-fine cascade producing the initial guess.

        The coarsest level is solved directly for the re-discretized
        original problem; each finer level receives the injected solution,
        is F-relaxed, and (except the finest) improved by one V-cycle.
        """
        L = len(self.hierarchy) - 1
        self._init_rhs(L)
        self.coarse_solve(L)
        for l in range(L - 1, -1, -1):
            self._init_rhs(l)
            self._inject_initial_guess(l)
            self.f_relax(l)
            if l > 0:
                self.v_cycle(l)

    # ------------------------------------------------------------------
    # driver

    def solve(self) -> SolveInfo:
        """Setup (nested iteration or random guess), then cycle until the
        residual drops below tol or max_iter is reached."""
        settings = self.settings
        t_setup = time.perf_counter()
        self._allocate_states()

        setup_residual = None
        if len(self.hierarchy) == 1:
            # degenerate hierarchy: the direct solve is the answer
            self.coarse_solve(0)
            setup_residual = self.residual_norm()
        elif settings.nested_iteration:
            self.nested_iteration()
            setup_residual = self.residual_norm()
        else:
            self._random_guess()
        setup_seconds = time.perf_counter() - t_setup

        converged = setup_residual is not None and setup_residual < settings.tol
        history, times = [], []
        t_solve = time.perf_counter()
        k = 0
        single_level = len(self.hierarchy) == 1
        while not converged and not single_level and k < settings.max_iter:
            k += 1
            skip = settings.skip_first_f_relax and k >= 3
            if settings.cycle_type == "V":
                self.v_cycle(0, skip_first_f=skip)
            else:
                self.f_cycle(skip_first_f=skip)
            r = self.residual_norm()
            history.append(r)
            times.append(time.perf_counter() - t_solve)
            if not math.isfinite(r):
                raise DivergenceError(k)
            if r < settings.tol:
                converged = True
        solve_seconds = time.perf_counter() - t_solve

        return SolveInfo(
            iterations=k,
            residual_history=history,
            setup_seconds=setup_seconds,
            solve_seconds=solve_seconds,
            converged=converged,
            setup_residual=setup_residual,
            residual_seconds=times,
        )

    def solution(self):
        """Finest-level solution gathered at worker 0 (None elsewhere)."""
        lo, hi = self._lo[0], self._hi[0]
        template = self.hierarchy[0].app.vector_template
        packed = [self.states[0].u[i].pack() for i in range(lo, hi)]
        slices = self.transport.gather(0, packed)
        if self.transport.rank != 0:
            return None
        return [template.unpack(b) for chunk in slices for b in chunk]


def solve_parallel(hierarchy, settings=None, n_workers=1, transports=None, solvers_out=None):
    """Run one solver per worker thread over a shared hierarchy.

    Returns worker 0's (SolveInfo, solution).  Pass a pre-built transport
    list to inspect message logs afterwards, or a list as solvers_out to
    collect the per-worker solver objects (rank order).
    """
    import threading

    if transports is None:
        transports = ThreadTransport.create(n_workers)
    if len(transports) != n_workers:
        raise ValueError("need one transport per worker")

    results = [None] * n_workers
    solvers = [None] * n_workers
    errors = []

    def run(rank):
        try:
            solver = MgritSolver(hierarchy, settings, transport=transports[rank])
            solvers[rank] = solver
            info = solver.solve()
            results[rank] = (info, solver.solution())
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    if n_workers == 1:
        run(0)
    else:
        threads = [
            threading.Thread(target=run, args=(r,), name=f"mgrit-worker-{r}")
            for r in range(n_workers)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    if errors:
        raise errors[0]
    if solvers_out is not None:
        solvers_out.extend(solvers)
    return results[0]
