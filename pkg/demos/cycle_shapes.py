#!/usr/bin/env python3
# Visualize the level-visit pattern of V-cycles, F-cycles and nested
# iteration on a four-level hierarchy, from the solver's trace output.

from mgrit import Dahlquist, MgritSettings, MgritSolver, build_uniform_hierarchy

problem = Dahlquist(t_start=0, t_stop=5, nt=65)
hierarchy = build_uniform_hierarchy(problem, levels=4, coarsening=4)


def level_sequence(trace):
    seq = []
    for level, op, first, last in trace:
        if not seq or seq[-1] != level:
            seq.append(level)
    return seq


def draw(title, seq, n_levels=4):
    print(f"\n{title}: {seq}")
    for level in range(n_levels):
        row = "".join("o  " if x == level else ".  " for x in seq)
        print(f"  level {level}  {row}")


solver = MgritSolver(hierarchy, MgritSettings(trace=True, nested_iteration=False))
solver._allocate_states()
solver._random_guess()

solver.trace.clear()
solver.v_cycle(0)
draw("V-cycle", level_sequence(solver.trace))

solver.trace.clear()
solver.f_cycle()
draw("F-cycle", level_sequence(solver.trace))

fresh = MgritSolver(hierarchy, MgritSettings(trace=True))
fresh._allocate_states()
fresh.trace.clear()
fresh.nested_iteration()
draw("nested iteration", level_sequence(fresh.trace))
