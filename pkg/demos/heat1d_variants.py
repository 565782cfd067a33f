#!/usr/bin/env python3
# Cycle type and relaxation strength both trade work per iteration against
# iteration count.  Five-level hierarchy on the forced 1D heat equation,
# coarsening factor 4, random initial guess, tolerance 1e-7.

import time

from mgrit import Heat1D, MgritSettings, MgritSolver, build_uniform_hierarchy

heat = Heat1D(n_x=129, t_start=0, t_stop=2, nt=257)
hierarchy = build_uniform_hierarchy(heat, levels=5, coarsening=4)
print("level sizes:", hierarchy.sizes)

# (cycle, number of CF-sweeps after the leading F-relaxation)
variants = [
    ("V", 1, "V-cycles, FCF relaxation"),
    ("V", 2, "V-cycles, FCFCF relaxation"),
    ("F", 0, "F-cycles, F relaxation"),
    ("F", 1, "F-cycles, FCF relaxation"),
    ("F", 2, "F-cycles, FCFCF relaxation"),
]

print(f"{'variant':<30} {'iterations':>10} {'seconds':>8}")
for cycle, nu, label in variants:
    settings = MgritSettings(cycle_type=cycle, cf_iter=nu, tol=1e-7,
                             nested_iteration=False, random_seed=3)
    start = time.perf_counter()
    info = MgritSolver(hierarchy, settings).solve()
    elapsed = time.perf_counter() - start
    print(f"{label:<30} {info.iterations:>10} {elapsed:>8.2f}")
