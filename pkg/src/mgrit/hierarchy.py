"""Multilevel time-grid hierarchies and the C/F splitting between levels.

Every m-th point of a level is a C-point and survives on the next coarser
level; the remaining points are F-points.  A hierarchy is a list of level
problems, finest first, where each level records the injection map into its
own grid (cf_map) and the maximal runs of F-points between C-points.
"""

import numpy as np

from .core import Application, TimeGrid

__all__ = [
    "HierarchyError",
    "LevelProblem",
    "Hierarchy",
    "cf_splitting",
    "build_uniform_hierarchy",
    "build_hierarchy_from_grids",
]


class HierarchyError(ValueError):
    """Raised when a hierarchy cannot be constructed as requested."""


def cf_splitting(fine_count: int, coarse_indices) -> list:
    """Maximal F-point runs [start, stop) between consecutive C-points.

    A trailing run after the last C-point is included, which covers grids
    whose interval count is not divisible by the coarsening factor.
    """
    coarse_indices = np.asarray(coarse_indices, dtype=np.intp)
    if coarse_indices.size == 0 or coarse_indices[0] != 0:
        raise HierarchyError("the first time point must be a C-point")
    bounds = list(coarse_indices) + [fine_count]
    blocks = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a > 1:
            blocks.append((int(a) + 1, int(b)))
    return blocks


class LevelProblem:
    """One hierarchy level: the application on this level's grid plus the
    splitting that links it to the next coarser level.

    cf_map[j] is the index in this level's grid that coarse point j injects
    from; it is None on the coarsest level.
    """

    def __init__(self, app: Application, cf_map=None):
        self.app = app
        if cf_map is not None:
            cf_map = np.asarray(cf_map, dtype=np.intp)
            self.f_blocks = cf_splitting(app.time_grid.count, cf_map)
        else:
            self.f_blocks = None
        self.cf_map = cf_map

    @property
    def count(self):
        return self.app.time_grid.count


class Hierarchy:
    """Ordered list of level problems, index 0 finest."""

    def __init__(self, levels):
        if not levels:
            raise HierarchyError("a hierarchy needs at least one level")
        if levels[-1].count < 2:
            raise HierarchyError("the coarsest level must keep at least two points")
        self.levels = list(levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, l):
        return self.levels[l]

    @property
    def sizes(self):
        return [lev.count for lev in self.levels]

    def cf_maps(self):
        return [lev.cf_map for lev in self.levels[:-1]]


def _check_vectors(app: Application, level: int) -> None:
    if app.vector_template.pack().size != app.vector_t_start.pack().size:
        raise HierarchyError(
            f"level {level}: vector_template and vector_t_start have different pack lengths"
        )


def build_uniform_hierarchy(problem: Application, levels: int, coarsening) -> Hierarchy:
    """Hierarchy built by keeping every m-th point of the previous level.

    coarsening is a single integer factor applied between every pair of
    levels, or a sequence of levels-1 per-pair factors.  Each coarse level
    is the same problem re-discretized on the coarser grid.
    """
    if levels < 1:
        raise HierarchyError("levels must be at least 1")
    if np.isscalar(coarsening):
        factors = [int(coarsening)] * (levels - 1)
    else:
        factors = [int(m) for m in coarsening]
        if len(factors) != levels - 1:
            raise HierarchyError(
                f"got {len(factors)} coarsening factors for {levels} levels, expected {levels - 1}"
            )
    if any(m < 2 for m in factors):
        raise HierarchyError("every coarsening factor must be an integer >= 2")

    _check_vectors(problem, 0)
    level_list = [LevelProblem(problem)]
    points = problem.time_grid.points
    for l, m in enumerate(factors):
        coarse_idx = np.arange(0, len(points), m, dtype=np.intp)
        if coarse_idx.size < 2:
            raise HierarchyError(
                f"coarsening by {m} exhausts the grid at level {l + 1} "
                f"({len(points)} points -> {coarse_idx.size})"
            )
        coarse_points = points[coarse_idx]
        level_list[-1] = LevelProblem(level_list[-1].app, cf_map=coarse_idx)
        level_list.append(LevelProblem(problem.on_time_grid(TimeGrid(coarse_points))))
        points = coarse_points
    return Hierarchy(level_list)


def _match_indices(fine_points: np.ndarray, coarse_points: np.ndarray, level: int) -> np.ndarray:
    """Indices of coarse_points inside fine_points, exact float matches only."""
    idx = np.searchsorted(fine_points, coarse_points)
    bad = (idx >= fine_points.size) | (fine_points[np.minimum(idx, fine_points.size - 1)] != coarse_points)
    if np.any(bad):
        offender = coarse_points[np.argmax(bad)]
        raise HierarchyError(
            f"level {level}: time point {offender!r} is not a point of level {level - 1}"
        )
    return idx.astype(np.intp)


def build_hierarchy_from_grids(apps) -> Hierarchy:
    """Hierarchy from explicit per-level applications, finest first.

    Each level's time points must be a subset of the previous level's,
    sharing the start point; identical grids on two levels are rejected.
    Per-level factors and per-level spatial resolutions are both allowed,
    so this is also the entry point for spatial coarsening setups.
    """
    apps = list(apps)
    if not apps:
        raise HierarchyError("need at least one application")
    for l, app in enumerate(apps):
        _check_vectors(app, l)
    level_list = []
    for l in range(len(apps) - 1):
        fine, coarse = apps[l].time_grid.points, apps[l + 1].time_grid.points
        if coarse.size >= fine.size:
            raise HierarchyError(
                f"level {l + 1} does not coarsen level {l} "
                f"({coarse.size} vs {fine.size} points)"
            )
        cf_map = _match_indices(fine, coarse, l + 1)
        if cf_map[0] != 0:
            raise HierarchyError(f"level {l + 1}: the start time must be a C-point")
        level_list.append(LevelProblem(apps[l], cf_map=cf_map))
    level_list.append(LevelProblem(apps[-1]))
    return Hierarchy(level_list)
