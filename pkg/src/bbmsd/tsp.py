"""Minimum-cost Hamiltonian paths on small asymmetric cost matrices.

Paths are open: they may start at a fixed node or anywhere, and end anywhere.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

EXACT_LIMIT = 18


def path_cost(w: np.ndarray, order, start: int | None = None) -> float:
    nodes = list(order)
    if start is not None:
        nodes = [start] + nodes
    return float(sum(w[a, b] for a, b in zip(nodes, nodes[1:])))


def _free_nodes(n: int, start: int | None) -> list[int]:
    return [v for v in range(n) if v != start]


def brute_force(w: np.ndarray, start: int | None = None) -> tuple[list[int], float]:
    """Reference solver by enumeration; intended for at most nine nodes."""
    w = np.asarray(w, dtype=float)
    nodes = _free_nodes(len(w), start)
    best, best_cost = nodes, math.inf
    for perm in itertools.permutations(nodes):
        c = path_cost(w, perm, start)
        if c < best_cost - 1e-12:
            best, best_cost = list(perm), c
    return list(best), (0.0 if not nodes else best_cost)


def held_karp(w: np.ndarray, start: int | None = None) -> tuple[list[int], float]:
    """Exact dynamic program over subsets, vectorized per subset size."""
    w = np.asarray(w, dtype=float)
    nodes = _free_nodes(len(w), start)
    n = len(nodes)
    if n == 0:
        return [], 0.0
    sub = w[np.ix_(nodes, nodes)]
    init = w[start, nodes] if start is not None else np.zeros(n)
    full = 1 << n
    dp = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int16)
    for j in range(n):
        dp[1 << j, j] = init[j]
    masks = np.arange(full)
    pop = np.array([bin(x).count("1") for x in range(full)]) if n <= 12 else _popcounts(full)
    for size in range(2, n + 1):
        layer = masks[pop == size]
        for j in range(n):
            bit = 1 << j
            m = layer[(layer & bit) != 0]
            prev = m ^ bit
            cand = dp[prev] + sub[:, j][None, :]
            arg = np.argmin(cand, axis=1)
            dp[m, j] = cand[np.arange(len(m)), arg]
            parent[m, j] = arg
    last = int(np.argmin(dp[full - 1]))
    cost = float(dp[full - 1, last])
    order, mask = [], full - 1
    j = last
    while j >= 0:
        order.append(nodes[j])
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj if mask else -1
    order.reverse()
    return order, cost


def _popcounts(size: int) -> np.ndarray:
    pop = np.zeros(size, dtype=np.int64)
    for b in range(size.bit_length()):
        pop += (np.arange(size) >> b) & 1
    return pop


def nearest_neighbor(w: np.ndarray, start: int | None = None) -> list[int]:
    w = np.asarray(w, dtype=float)
    remaining = _free_nodes(len(w), start)
    if not remaining:
        return []
    if start is None:
        cur = remaining.pop(0)
        order = [cur]
    else:
        cur, order = start, []
    while remaining:
        nxt = min(remaining, key=lambda v: (w[cur, v], v))
        remaining.remove(nxt)
        order.append(nxt)
        cur = nxt
    return order


def improve(w: np.ndarray, order: list[int], start: int | None = None, max_rounds: int = 200) -> list[int]:
    """Local search with segment reversal (2-opt) and segment moves (or-3opt)."""
    w = np.asarray(w, dtype=float)
    best = list(order)
    best_cost = path_cost(w, best, start)
    n = len(best)
    for _ in range(max_rounds):
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                cand = best[:i] + best[i:j + 1][::-1] + best[j + 1:]
                c = path_cost(w, cand, start)
                if c < best_cost - 1e-12:
                    best, best_cost, improved = cand, c, True
        for length in (1, 2, 3):
            for i in range(n - length + 1):
                seg = best[i:i + length]
                rest = best[:i] + best[i + length:]
                for j in range(len(rest) + 1):
                    if j == i:
                        continue
                    cand = rest[:j] + seg + rest[j:]
                    c = path_cost(w, cand, start)
                    if c < best_cost - 1e-12:
                        best, best_cost, improved = cand, c, True
        if not improved:
            break
    return best


def heuristic(w: np.ndarray, start: int | None = None) -> tuple[list[int], float]:
    order = improve(w, nearest_neighbor(w, start), start)
    return order, path_cost(w, order, start)


def shortest_path(w: np.ndarray, start: int | None = None, method: str = "auto") -> tuple[list[int], float]:
    """Order the nodes (other than ``start``) to minimize the open path cost."""
    w = np.asarray(w, dtype=float)
    n = len(_free_nodes(len(w), start))
    if method == "auto":
        method = "exact" if n <= EXACT_LIMIT else "heuristic"
    if method == "exact":
        return held_karp(w, start)
    if method == "heuristic":
        return heuristic(w, start)
    if method == "brute":
        return brute_force(w, start)
    raise ValueError(f"unknown method {method!r}")
