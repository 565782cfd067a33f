#!/usr/bin/env python3
# Time decomposition across workers: each worker owns a contiguous slice of
# every level's time points and exchanges only boundary values with its
# neighbours.  Residual histories are identical for any worker count.

from mgrit import (
    Heat1D,
    MgritSettings,
    ThreadTransport,
    TimeDecomposition,
    build_uniform_hierarchy,
    solve_parallel,
)

heat = Heat1D(n_x=129, t_start=0, t_stop=2, nt=257)
hierarchy = build_uniform_hierarchy(heat, levels=5, coarsening=4)
settings = MgritSettings(cycle_type="V", cf_iter=1, tol=1e-7,
                         nested_iteration=False, random_seed=3)

histories = {}
for workers in (1, 2, 4):
    transports = ThreadTransport.create(workers)
    info, solution = solve_parallel(hierarchy, settings,
                                    n_workers=workers, transports=transports)
    histories[workers] = info.residual_history
    messages = len(transports[0].log)
    print(f"{workers} worker(s): {info.iterations} iterations, "
          f"{messages} point-to-point messages")

print("histories identical 1 vs 2:", histories[1] == histories[2])
print("histories identical 1 vs 4:", histories[1] == histories[4])

# how the finest level is split for 4 workers, and what the coarser levels
# inherit from it
decomp = TimeDecomposition(hierarchy.sizes, hierarchy.cf_maps(), 4)
for level, ranges in enumerate(decomp.ranges):
    print(f"level {level} ownership:", ranges)
