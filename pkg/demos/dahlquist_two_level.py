#!/usr/bin/env python3
# Minimal end-to-end run: scalar decay problem, two time levels.
#
# The flow is always the same three steps: create a problem, derive a
# multilevel time hierarchy from it, solve.

from mgrit import Dahlquist, MgritSettings, MgritSolver, build_uniform_hierarchy, sequential_solve

# 101 time points in [0, 5]; one point is the start time
dahlquist = Dahlquist(t_start=0, t_stop=5, nt=101)

# two-level hierarchy with coarsening factor 2 -> coarse level has 51 points
hierarchy = build_uniform_hierarchy(dahlquist, levels=2, coarsening=2)
print("level sizes:", hierarchy.sizes)

solver = MgritSolver(hierarchy, MgritSettings(tol=1e-10))
info = solver.solve()

print(f"converged: {info.converged} after {info.iterations} iterations")
for k, r in enumerate(info.residual_history, start=1):
    print(f"  iteration {k}: residual {r:.3e}")

# the iterative solution agrees with classical time stepping
reference = sequential_solve(dahlquist)
error = max((a - b).norm() for a, b in zip(solver.solution(), reference))
print(f"max difference vs sequential stepping: {error:.2e}")
