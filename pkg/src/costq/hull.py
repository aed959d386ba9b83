"""Model selection on the cost/accuracy plane.

From a cloud of validation results we keep the points forming the upper-left
convex frontier: nothing dominated (another point with at most the cost and at
least the accuracy) and accuracy concave as a function of cost, i.e. the
chord slopes are non-increasing left to right. Points lying exactly on a
frontier segment count as selected.
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


def _cross(o, a, b) -> float:
    """Positive when the path o -> a -> b turns left (a below the o-b chord)."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_hull_indices(costs, accuracies) -> list[int]:
    """Indices of the points on the upper-left convex frontier.

    Exact duplicates of a selected (cost, accuracy) pair are all selected, so
    the result is invariant to input ordering and duplication.
    """
    costs = np.asarray(costs, dtype=float)
    accuracies = np.asarray(accuracies, dtype=float)
    n = len(costs)
    if n == 0:
        return []

    # Pareto staircase: scan by cost ascending, accuracy descending; a point
    # survives only by strictly improving accuracy, which removes everything
    # dominated (including duplicates and flat or vertical runs).
    order = np.lexsort((-accuracies, costs))
    staircase: list[tuple[float, float]] = []
    best_acc = -np.inf
    for i in order:
        if accuracies[i] > best_acc:
            staircase.append((costs[i], accuracies[i]))
            best_acc = accuracies[i]

    # Upper concave hull over the staircase; collinear points are kept.
    stack: list[tuple[float, float]] = []
    for p in staircase:
        while len(stack) >= 2 and _cross(stack[-2], stack[-1], p) > 0:
            stack.pop()
        stack.append(p)

    selected = set(stack)
    return [i for i in range(n) if (costs[i], accuracies[i]) in selected]


def convex_hull_select(points):
    """Subset of trade-off points on the upper-left convex frontier.

    Accepts any objects exposing ``mean_cost`` and ``accuracy``; the original
    objects are returned in input order.
    """
    idx = upper_hull_indices([p.mean_cost for p in points],
                            [p.accuracy for p in points])
    return [points[i] for i in idx]
