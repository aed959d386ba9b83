from fractions import Fraction

import numpy as np

from costq.hull import convex_hull_select, upper_hull_indices
from costq.train import TradeoffPoint


def point(cost, accuracy, run_id=""):
    return TradeoffPoint(lam=0.0, seed=0, split="validation", mean_cost=cost,
                         accuracy=accuracy, mean_reward=0.0, objective=0.0,
                         run_id=run_id)


def hull_oracle(costs, accuracies):
    """Brute-force frontier membership in exact rational arithmetic.

    A point is selected iff nothing dominates it and no chord between two
    other points passes strictly above it.
    """
    pts = [(Fraction(c), Fraction(a)) for c, a in zip(costs, accuracies)]
    n = len(pts)
    selected = []
    for i, (c, a) in enumerate(pts):
        dominated = any(
            (cj <= c and aj >= a and (cj < c or aj > a))
            for j, (cj, aj) in enumerate(pts) if j != i)
        if dominated:
            continue
        above = False
        for j, (cj, aj) in enumerate(pts):
            for k, (ck, ak) in enumerate(pts):
                if j == i or k == i or not (cj < c < ck):
                    continue
                chord = aj + (ak - aj) * (c - cj) / (ck - cj)
                if chord > a:
                    above = True
        if not above:
            selected.append(i)
    return selected


def grid_points(rng, max_points=20):
    """Random points on a 1/64 grid: exactly representable, so the float
    implementation and the rational oracle see identical geometry."""
    n = int(rng.integers(1, max_points + 1))
    costs = rng.integers(0, 257, size=n) / 64.0
    accuracies = rng.integers(0, 65, size=n) / 64.0
    return costs, accuracies


def test_worked_example_all_kept():
    points = [point(0, 0.5), point(0.5, 0.85), point(1, 0.9), point(2, 0.91)]
    assert convex_hull_select(points) == points  # slopes 0.7, 0.1, 0.01


def test_dominated_point_excluded():
    points = [point(0, 0.5), point(0.5, 0.85), point(1, 0.9), point(2, 0.91),
              point(1.5, 0.8)]
    selected = convex_hull_select(points)
    assert points[4] not in selected
    assert selected == points[:4]


def test_single_point_is_itself():
    points = [point(0.3, 0.7)]
    assert convex_hull_select(points) == points


def test_below_chord_point_excluded():
    # (1, 0.6) lies under the chord between (0, 0.5) and (2, 0.9)
    points = [point(0, 0.5), point(1, 0.6), point(2, 0.9)]
    assert convex_hull_select(points) == [points[0], points[2]]


def test_collinear_point_kept():
    points = [point(0, 0.0), point(1, 0.5), point(2, 1.0)]
    assert convex_hull_select(points) == points


def test_flat_and_vertical_runs_trimmed():
    points = [point(0, 0.9), point(1, 0.9),   # flat: second adds cost for nothing
              point(0, 0.5)]                  # vertical: dominated at cost 0
    assert convex_hull_select(points) == [points[0]]


def test_invariant_to_ordering_and_duplicates():
    rng = np.random.default_rng(55)
    costs, accuracies = grid_points(rng, max_points=12)
    base = set(map(tuple, np.array([costs, accuracies]).T[
        upper_hull_indices(costs, accuracies)]))
    for _ in range(10):
        perm = rng.permutation(len(costs))
        dup = rng.integers(len(costs), size=4)
        c2 = np.concatenate([costs[perm], costs[dup]])
        a2 = np.concatenate([accuracies[perm], accuracies[dup]])
        got = set(map(tuple, np.array([c2, a2]).T[upper_hull_indices(c2, a2)]))
        assert got == base


def test_matches_exact_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(400):
        costs, accuracies = grid_points(rng)
        fast = set(upper_hull_indices(costs, accuracies))
        slow = set(hull_oracle(costs, accuracies))
        assert fast == slow, (costs, accuracies)


def test_selected_points_dominate_at_their_cost_level():
    rng = np.random.default_rng(77)
    for _ in range(100):
        costs, accuracies = grid_points(rng)
        chosen = upper_hull_indices(costs, accuracies)
        for i in chosen:
            for j in range(len(costs)):
                if j in chosen:
                    continue
                if costs[j] <= costs[i]:
                    assert accuracies[j] <= accuracies[i]


def test_empty_input():
    assert convex_hull_select([]) == []
