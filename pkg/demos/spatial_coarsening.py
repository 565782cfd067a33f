#!/usr/bin/env python3
# Coarsen in space and in time together: each level halves the spatial grid
# (129 -> 65 -> 33 points) while the time grid thins by a factor of 4.
# A transfer operator pair per level moves states between spatial grids.

from mgrit import (
    Heat1D,
    Heat1DTransfer,
    MgritSettings,
    MgritSolver,
    TimeGrid,
    build_hierarchy_from_grids,
    sequential_solve,
)

spatial_grids = (129, 65, 33)
points = TimeGrid.uniform(0, 2, 257).points

apps = []
for n_x in spatial_grids:
    apps.append(Heat1D(n_x=n_x, time_grid=TimeGrid(points)))
    points = points[::4]

hierarchy = build_hierarchy_from_grids(apps)
print("time points per level:", hierarchy.sizes)
print("space points per level:", [app.n_x for app in apps])

transfers = [Heat1DTransfer(129, 65), Heat1DTransfer(65, 33)]
settings = MgritSettings(cycle_type="V", cf_iter=1, tol=1e-7, transfers=transfers)
solver = MgritSolver(hierarchy, settings)
info = solver.solve()
print(f"converged: {info.converged} after {info.iterations} iterations")

# compare against plain sequential stepping on the finest grid
reference = sequential_solve(apps[0])
error = max((a - b).norm() for a, b in zip(solver.solution(), reference))
print(f"max difference vs fine-grid stepping: {error:.2e}")
