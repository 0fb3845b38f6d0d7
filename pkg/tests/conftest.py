"""Shared oracles. These deliberately avoid the package's own reduction code."""
from itertools import combinations

import numpy as np
import pytest

ACCEPTANCE = []  # (criterion, passed, detail), filled by test_acceptance


def naive_lower_star_pairs(simplices, f):
    """Persistence pairs by textbook column reduction (no clearing, Python sets).

    ``simplices`` is a list of sorted vertex tuples closed under faces.
    Returns ``(finite, essential)``: finite is a list of (dim, birth, death)
    with death > birth, essential a list of (dim, birth).
    """
    f = np.asarray(f, dtype=float)
    key = lambda s: (max(f[v] for v in s), len(s) - 1, s)
    order = sorted(simplices, key=key)
    index = {s: i for i, s in enumerate(order)}
    cols = []
    for s in order:
        if len(s) == 1:
            cols.append(set())
        else:
            cols.append({index[face] for face in combinations(s, len(s) - 1)})
    low_owner = {}
    paired = set()
    finite = []
    for j in range(len(cols)):
        col = cols[j]
        while col and max(col) in low_owner:
            col ^= cols[low_owner[max(col)]]
        if col:
            i = max(col)
            low_owner[i] = j
            paired.update((i, j))
            b, d = key(order[i])[0], key(order[j])[0]
            if d > b:
                finite.append((len(order[i]) - 1, b, d))
    essential = [(len(order[i]) - 1, key(order[i])[0]) for i in range(len(order)) if i not in paired]
    return finite, essential


def gf2_rank(M):
    M = (np.array(M, dtype=np.uint8) % 2).copy()
    rank = 0
    rows, ncols = M.shape
    for c in range(ncols):
        pivot = next((r for r in range(rank, rows) if M[r, c]), None)
        if pivot is None:
            continue
        M[[rank, pivot]] = M[[pivot, rank]]
        for r in range(rows):
            if r != rank and M[r, c]:
                M[r] ^= M[rank]
        rank += 1
    return rank


def betti_numbers(simplices_by_dim):
    """Betti numbers over Z/2 from dense boundary ranks."""
    counts = [len(s) for s in simplices_by_dim]
    ranks = [0]
    for k in range(1, len(simplices_by_dim)):
        lower = {tuple(s): i for i, s in enumerate(simplices_by_dim[k - 1])}
        B = np.zeros((counts[k - 1], counts[k]), dtype=np.uint8)
        for j, s in enumerate(simplices_by_dim[k]):
            for face in combinations(tuple(s), k):
                B[lower[face], j] = 1
        ranks.append(gf2_rank(B))
    ranks.append(0)
    return [counts[k] - ranks[k] - ranks[k + 1] for k in range(len(counts))]


def all_simplices(cx):
    return [tuple(int(v) for v in row) for s in cx.simplices for row in s]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
