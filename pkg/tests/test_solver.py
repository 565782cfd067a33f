import math

import numpy as np
import pytest

from mgrit import (
    Dahlquist,
    DenseVector,
    Heat1D,
    MgritSettings,
    MgritSolver,
    build_uniform_hierarchy,
    combine_residual_norms,
    sequential_solve,
)


def dahlquist_solver(nt, m, levels=2, t_stop=5.0, **settings):
    p = Dahlquist(t_start=0, t_stop=t_stop, nt=nt)
    h = build_uniform_hierarchy(p, levels=levels, coarsening=m)
    return MgritSolver(h, MgritSettings(**settings))


def prepared(solver, guess="random"):
    solver._allocate_states()
    if guess == "random":
        solver._random_guess()
    elif guess == "sequential":
        ref = sequential_solve(solver.hierarchy[0].app)
        solver.states[0].u = list(ref)
    return solver


def finest_values(solver):
    return np.array([u.values[0] for u in solver.states[0].u])


# ---------------------------------------------------------------------------
# relaxation


def test_f_relax_hand_values():
    # 5 points, m=4, dt=0.05, u0=1, zero rhs: u[1..3] = (1/1.05)^k by hand
    s = prepared(dahlquist_solver(5, 4, t_stop=0.2, nested_iteration=False))
    s.states[0].u = [DenseVector([1.0])] + [DenseVector([0.0])] * 4
    s.f_relax(0)
    c = 1.0 / 1.05
    expected = [1.0, c, c * c, c * c * c]
    got = finest_values(s)[:4]
    np.testing.assert_allclose(got, expected, rtol=1e-15)
    assert s.states[0].u[4].values[0] == 0.0  # C-point untouched


def test_f_relax_fixed_point_on_sequential_solution():
    s = prepared(dahlquist_solver(13, 4, nested_iteration=False), guess="sequential")
    before = finest_values(s)
    s.f_relax(0)
    np.testing.assert_array_equal(finest_values(s), before)


def test_f_relax_blocks_are_independent():
    # each block equals sequential stepping from its own C-point, computed
    # with the closed-form recursion
    s = prepared(dahlquist_solver(13, 4, t_stop=1.2, nested_iteration=False, random_seed=5))
    t = s.hierarchy[0].app.time_grid.points
    start = finest_values(s)
    s.f_relax(0)
    got = finest_values(s)
    for c_idx in (0, 4, 8):
        u = start[c_idx]
        for i in range(c_idx + 1, c_idx + 4):
            u = 1.0 / (1.0 - (t[i] - t[i - 1]) * (-1.0)) * u
            assert got[i] == pytest.approx(u, abs=0)
    np.testing.assert_array_equal(got[[0, 4, 8, 12]], start[[0, 4, 8, 12]])


def test_c_relax_updates_exactly_the_c_points():
    s = prepared(dahlquist_solver(13, 4, nested_iteration=False, random_seed=2))
    start = finest_values(s)
    s.c_relax(0)
    got = finest_values(s)
    changed = np.nonzero(got != start)[0]
    np.testing.assert_array_equal(changed, [4, 8, 12])


def test_c_relax_fixed_point():
    s = prepared(dahlquist_solver(9, 2, nested_iteration=False), guess="sequential")
    before = finest_values(s)
    s.c_relax(0)
    np.testing.assert_array_equal(finest_values(s), before)


def test_degenerate_two_point_coarsest_solve_updates_index_one_only():
    # 5 points with m=4 leave a 2-point coarsest level; its solve is one step
    s = prepared(dahlquist_solver(5, 4, t_stop=0.2, nested_iteration=False, random_seed=1))
    s.f_relax(0)
    s.restrict(0)
    u0_before = s.states[1].u[0].values[0]
    s.coarse_solve(1)
    assert s.states[1].u[0].values[0] == u0_before
    expected = s._phi(1, 1, s.states[1].u[0]) + s.states[1].g[1]
    assert (s.states[1].u[1] - expected).norm() == 0.0


@pytest.mark.parametrize("nu", [0, 1, 2])
def test_relax_fixed_point_any_nu(nu):
    s = prepared(
        dahlquist_solver(17, 4, cf_iter=nu, nested_iteration=False),
        guess="sequential",
    )
    before = finest_values(s)
    s.relax(0)
    assert np.max(np.abs(finest_values(s) - before)) <= 1e-13


def test_relax_nu_zero_equals_single_f_relax():
    a = prepared(dahlquist_solver(13, 4, cf_iter=0, nested_iteration=False, random_seed=9))
    b = prepared(dahlquist_solver(13, 4, cf_iter=0, nested_iteration=False, random_seed=9))
    a.relax(0)
    b.f_relax(0)
    np.testing.assert_array_equal(finest_values(a), finest_values(b))


# ---------------------------------------------------------------------------
# residual


def brute_force_rows(values, t, lam=-1.0):
    """All rows of the one-step system: row 0 = g0 - u0, row i = -u_i + phi(u_{i-1})."""
    rows = [1.0 - values[0]]
    for i in range(1, len(values)):
        phi = values[i - 1] / (1.0 - (t[i] - t[i - 1]) * lam)
        rows.append(-values[i] + phi)
    return np.array(rows)


def test_residual_matches_brute_force_oracle():
    s = prepared(dahlquist_solver(5, 2, nested_iteration=False, random_seed=11))
    t = s.hierarchy[0].app.time_grid.points
    rows = brute_force_rows(finest_values(s), t)
    norms = s.residual_c_norms(0)
    expected = [abs(rows[i]) for i in (2, 4)]
    np.testing.assert_allclose(norms, expected, rtol=1e-15)
    assert s.residual_norm() == pytest.approx(
        math.sqrt(sum(r * r for r in expected)), rel=1e-15
    )


def test_residual_zero_at_f_points_after_f_relax():
    s = prepared(dahlquist_solver(9, 4, nested_iteration=False, random_seed=3))
    s.f_relax(0)
    t = s.hierarchy[0].app.time_grid.points
    rows = brute_force_rows(finest_values(s), t)
    f_points = [1, 2, 3, 5, 6, 7]
    assert np.max(np.abs(rows[f_points])) <= 1e-13


def test_residual_zero_on_sequential_solution():
    s = prepared(dahlquist_solver(17, 4, nested_iteration=False), guess="sequential")
    assert s.residual_norm() <= 1e-14


def test_combine_residual_norms_examples():
    assert combine_residual_norms([0.0, 0.0, 0.0]) == 0.0
    assert combine_residual_norms([3.0, 4.0]) == 5.0
    assert combine_residual_norms([2.5]) == 2.5


# ---------------------------------------------------------------------------
# FAS restriction, coarse solve, correction


def test_restrict_exact_solution_is_coarse_fixed_point():
    # Dahlquist 9 -> 3 points: with the fine level solved exactly, the coarse
    # right-hand side makes the injected values a fixed point of the coarse
    # forward solve
    s = prepared(dahlquist_solver(9, 4, nested_iteration=False), guess="sequential")
    s.f_relax(0)
    s.restrict(0)
    coarse_before = [u.values.copy() for u in s.states[1].u]
    s.coarse_solve(1)
    for u, before in zip(s.states[1].u, coarse_before):
        assert np.max(np.abs(u.values - before)) <= 1e-14


def test_restrict_injection_is_bitwise_with_identity_transfer():
    s = prepared(dahlquist_solver(9, 4, nested_iteration=False, random_seed=8))
    s.f_relax(0)
    s.restrict(0)
    for j, f in enumerate([0, 4, 8]):
        assert s.states[1].u[j].values[0] == s.states[0].u[f].values[0]
        assert s.states[1].v[j].values[0] == s.states[1].u[j].values[0]


def test_correct_with_zero_error_only_f_relaxes():
    s = prepared(dahlquist_solver(9, 4, nested_iteration=False, random_seed=8))
    s.f_relax(0)
    s.restrict(0)
    before = finest_values(s)
    s.correct(0)  # coarse u untouched since restrict, so e == 0
    after = finest_values(s)
    np.testing.assert_array_equal(after, before)  # F-relax is idempotent here


def test_coarse_solve_hand_computed_three_points():
    # two applications of the closed-form step from g0=1 with zero rhs
    s = prepared(dahlquist_solver(3, 2, levels=1, t_stop=0.1, nested_iteration=False))
    st = s.states[0]
    st.g[0] = DenseVector([1.0])
    st.g[1] = DenseVector([0.0])
    st.g[2] = DenseVector([0.0])
    s.coarse_solve(0)
    c = 1.0 / 1.05
    np.testing.assert_allclose(finest_values(s), [1.0, c, c * c], rtol=1e-15)


def test_coarse_solve_with_nonzero_rhs():
    s = prepared(dahlquist_solver(3, 2, levels=1, t_stop=0.1, nested_iteration=False))
    st = s.states[0]
    st.g[0] = DenseVector([2.0])
    st.g[1] = DenseVector([0.5])
    st.g[2] = DenseVector([-1.0])
    s.coarse_solve(0)
    c = 1.0 / 1.05
    u1 = c * 2.0 + 0.5
    u2 = c * u1 - 1.0
    np.testing.assert_allclose(finest_values(s), [2.0, u1, u2], rtol=1e-15)


def test_fas_reduces_to_linear_two_grid_on_linear_problem():
    # independent oracle: restrict the residual with a zero coarse guess,
    # solve the linear coarse error equation by forward substitution, and
    # correct; must match one engine V-cycle to 1e-12
    nt, m, lam = 17, 4, -1.0
    s = prepared(dahlquist_solver(nt, m, cf_iter=0, nested_iteration=False, random_seed=13))
    t = s.hierarchy[0].app.time_grid.points
    u = finest_values(s).copy()

    def phi(v, dt):
        return v / (1.0 - dt * lam)

    # F-relaxation
    for c_idx in range(0, nt - 1, m):
        for i in range(c_idx + 1, min(c_idx + m, nt)):
            u[i] = phi(u[i - 1], t[i] - t[i - 1])
    # residual at C-points, zero-guess coarse error solve: e_j = phi_c(e_{j-1}) + r_j
    c_indices = list(range(0, nt, m))
    e = [0.0]
    for j in range(1, len(c_indices)):
        i = c_indices[j]
        r = -u[i] + phi(u[i - 1], t[i] - t[i - 1])
        dT = t[i] - t[c_indices[j - 1]]
        e.append(phi(e[j - 1], dT) + r)
    for j, i in enumerate(c_indices):
        u[i] += e[j]
    for c_idx in range(0, nt - 1, m):
        for i in range(c_idx + 1, min(c_idx + m, nt)):
            u[i] = phi(u[i - 1], t[i] - t[i - 1])

    s.v_cycle(0)
    assert np.max(np.abs(finest_values(s) - u)) <= 1e-12


# ---------------------------------------------------------------------------
# cycle shapes (golden traces, four levels)


def cycle_shape(trace):
    seq = [level for level, op, first, last in trace]
    out = []
    for x in seq:
        if not out or out[-1] != x:
            out.append(x)
    return out


def four_level_solver(**settings):
    p = Dahlquist(t_start=0, t_stop=5, nt=65)
    h = build_uniform_hierarchy(p, levels=4, coarsening=4)
    return MgritSolver(h, MgritSettings(trace=True, **settings))


def test_v_cycle_shape():
    s = prepared(four_level_solver(nested_iteration=False))
    s.trace.clear()
    s.v_cycle(0)
    assert cycle_shape(s.trace) == [0, 1, 2, 3, 2, 1, 0]


def test_f_cycle_shape():
    # descend once, then return to the coarsest after each level is reached
    s = prepared(four_level_solver(nested_iteration=False))
    s.trace.clear()
    s.f_cycle()
    assert cycle_shape(s.trace) == [0, 1, 2, 3, 2, 3, 2, 1, 2, 3, 2, 1, 0]


def test_nested_iteration_shape():
    s = four_level_solver()
    s._allocate_states()
    s.trace.clear()
    s.nested_iteration()
    assert cycle_shape(s.trace) == [3, 2, 3, 2, 1, 2, 3, 2, 1, 0]


def test_nested_iteration_two_level_shape():
    # coarse solve + inject + F-relax, no cycle above
    p = Dahlquist(t_start=0, t_stop=5, nt=17)
    h = build_uniform_hierarchy(p, 2, 4)
    s = MgritSolver(h, MgritSettings(trace=True))
    s._allocate_states()
    s.trace.clear()
    s.nested_iteration()
    assert cycle_shape(s.trace) == [1, 0]
    ops = [op for level, op, a, b in s.trace]
    assert ops == ["coarse_solve", "inject", "f_relax"]


def test_random_guess_reproducible_and_pinned_start():
    a = prepared(dahlquist_solver(9, 2, nested_iteration=False, random_seed=21))
    b = prepared(dahlquist_solver(9, 2, nested_iteration=False, random_seed=21))
    np.testing.assert_array_equal(finest_values(a), finest_values(b))
    assert a.states[0].u[0].values[0] == 1.0
    c = prepared(dahlquist_solver(9, 2, nested_iteration=False, random_seed=22))
    assert not np.array_equal(finest_values(a), finest_values(c))


# ---------------------------------------------------------------------------
# solve driver


def test_default_two_level_solve_matches_sequential():
    s = dahlquist_solver(101, 2, tol=1e-10)
    info = s.solve()
    assert info.converged
    assert len(info.residual_history) == info.iterations
    assert info.setup_residual is not None
    ref = sequential_solve(s.hierarchy[0].app)
    err = max((a - b).norm() for a, b in zip(s.solution(), ref))
    assert err <= 1e-9
    # the start value stays pinned to the initial condition throughout
    ic = s.hierarchy[0].app.vector_t_start
    assert (s.states[0].u[0] - ic).norm() == 0.0


def test_single_level_solver_is_direct_solve():
    s = dahlquist_solver(10, 2, levels=1, tol=1e-10)
    info = s.solve()
    assert info.converged and info.iterations == 0
    assert info.residual_history == []
    ref = sequential_solve(s.hierarchy[0].app)
    assert max((a - b).norm() for a, b in zip(s.solution(), ref)) == 0.0


@pytest.mark.parametrize("nt_intervals,m", [(8, 2), (8, 4), (16, 2), (16, 4), (32, 2), (32, 4)])
def test_two_level_exactness_bounds(nt_intervals, m):
    # exact after N_t/m (F) and N_t/(2m) (FCF) iterations for any guess
    for nu, bound in ((0, nt_intervals // m), (1, max(nt_intervals // (2 * m), 1))):
        s = dahlquist_solver(
            nt_intervals + 1, m, cf_iter=nu, tol=1e-12,
            nested_iteration=False, max_iter=bound + 5, random_seed=4,
        )
        info = s.solve()
        assert info.converged
        assert info.iterations <= bound


def test_skip_optimization_neutrality():
    results = {}
    for skip in (True, False):
        p = Heat1D(n_x=33, t_start=0, t_stop=2, nt=65)
        h = build_uniform_hierarchy(p, 3, 4)
        s = MgritSolver(h, MgritSettings(tol=1e-9, skip_first_f_relax=skip,
                                         nested_iteration=False, random_seed=6))
        info = s.solve()
        assert info.converged
        results[skip] = s.solution()
    err = max((a - b).norm() for a, b in zip(results[True], results[False]))
    assert err <= 1e-12


def test_fixed_point_of_full_cycles():
    # a state equal to the sequential solution moves by at most 1e-13
    for cycle in ("V", "F"):
        for nu in (0, 1):
            s = prepared(
                dahlquist_solver(33, 4, levels=3, cycle_type=cycle, cf_iter=nu,
                                 nested_iteration=False),
                guess="sequential",
            )
            before = finest_values(s)
            if cycle == "V":
                s.v_cycle(0)
            else:
                s.f_cycle()
            assert np.max(np.abs(finest_values(s) - before)) <= 1e-13


def test_divergence_raises_with_iteration_index():
    from mgrit import Application, DivergenceError

    class Exploding(Application):
        # no input guard: overflow must be caught by the residual check
        def __init__(self, **kw):
            super().__init__(**kw)
            self.vector_template = DenseVector([0.0])
            self.vector_t_start = DenseVector([1.0])

        def step(self, u_start, t_start, t_stop):
            with np.errstate(over="ignore", invalid="ignore"):
                return DenseVector(u_start.values * 1e200)

    h = build_uniform_hierarchy(Exploding(t_start=0, t_stop=1, nt=17), 2, 4)
    s = MgritSolver(h, MgritSettings(tol=1e-12, nested_iteration=False))
    with pytest.raises(DivergenceError) as err:
        with np.errstate(over="ignore", invalid="ignore"):
            s.solve()
    assert err.value.iteration >= 1


def test_settings_validation():
    with pytest.raises(ValueError):
        MgritSettings(cycle_type="W")
    with pytest.raises(ValueError):
        MgritSettings(tol=0.0)
    with pytest.raises(ValueError):
        MgritSettings(cf_iter=-1)
    with pytest.raises(ValueError):
        MgritSettings(max_iter=0)


def test_transfer_count_validated():
    from mgrit import IdentityTransfer

    p = Dahlquist(t_start=0, t_stop=5, nt=17)
    h = build_uniform_hierarchy(p, 3, 2)
    with pytest.raises(ValueError):
        MgritSolver(h, MgritSettings(transfers=[IdentityTransfer()]))


def test_mgrit_solution_matches_sequential_for_all_variants():
    p = Heat1D(n_x=17, t_start=0, t_stop=2, nt=65)
    h = build_uniform_hierarchy(p, 3, 4)
    ref = sequential_solve(p)
    for cycle, nu in (("V", 1), ("F", 0)):
        s = MgritSolver(h, MgritSettings(cycle_type=cycle, cf_iter=nu, tol=1e-8))
        info = s.solve()
        assert info.converged
        err = max((a - b).norm() for a, b in zip(s.solution(), ref))
        assert err <= 10 * 1e-8
