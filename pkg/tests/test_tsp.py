import numpy as np
import pytest

from bbmsd import tsp
from bbmsd.bbcode import build_code, preset
from bbmsd.compiler import apply_masking, build_cost_matrix, optimize_mapping, rotation_paulis
from bbmsd.protocol import shipped_protocol


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("start", [None, 0])
def test_held_karp_matches_brute_force(seed, start):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 10))
    w = rng.integers(0, 20, size=(n, n)).astype(float)
    np.fill_diagonal(w, 0)
    order_hk, cost_hk = tsp.held_karp(w, start)
    _, cost_bf = tsp.brute_force(w, start)
    assert cost_hk == pytest.approx(cost_bf)
    assert tsp.path_cost(w, order_hk, start) == pytest.approx(cost_hk)
    expected = n - (start is not None)
    assert sorted(order_hk) == sorted(v for v in range(n) if v != start) and len(order_hk) == expected


def test_trivial_sizes():
    assert tsp.held_karp(np.zeros((1, 1)), 0) == ([], 0.0)
    order, cost = tsp.held_karp(np.array([[0, 3.0], [1.0, 0]]))
    assert cost == 1.0 and order == [1, 0]


@pytest.mark.parametrize("seed", range(4))
def test_heuristic_is_valid_path(seed):
    rng = np.random.default_rng(100 + seed)
    w = rng.random((25, 25))
    order, cost = tsp.heuristic(w, 0)
    assert sorted(order) == list(range(1, 25))
    assert tsp.path_cost(w, order, 0) == pytest.approx(cost)
    assert cost <= tsp.path_cost(w, list(range(1, 25)), 0) + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_heuristic_close_to_exact_random(seed):
    rng = np.random.default_rng(200 + seed)
    w = rng.integers(1, 10, size=(12, 12)).astype(float)
    _, exact = tsp.held_karp(w, 0)
    _, heur = tsp.heuristic(w, 0)
    assert heur >= exact - 1e-12
    assert heur <= 1.25 * exact


def test_heuristic_within_five_percent_on_15to1():
    code = build_code(preset("gross"))
    G = shipped_protocol("15-to-1")
    mapping = optimize_mapping(G, code, "pivot-based", 1, False, 0)
    rots = [apply_masking(r, code, mapping) for r in rotation_paulis(G, mapping)]
    w = build_cost_matrix(rots, code).w
    _, exact = tsp.held_karp(w, 0)
    _, heur = tsp.heuristic(w, 0)
    assert heur <= 1.05 * exact


def test_shortest_path_methods():
    rng = np.random.default_rng(9)
    w = rng.random((8, 8))
    _, exact = tsp.shortest_path(w, 0, "exact")
    _, auto = tsp.shortest_path(w, 0, "auto")
    assert auto == pytest.approx(exact)
