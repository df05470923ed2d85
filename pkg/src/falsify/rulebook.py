"""Priority DAG over metrics and the partial order it induces on outcomes.

An edge (i, j) states that metric i outranks metric j.  Reachability
through one or more edges gives the precedence relation; outcome vectors
are then compared with a dominance operator that lets a worse value on
one metric be excused by a strictly better value on some higher-priority
metric.  All metrics are minimized: lower robustness means "more
falsified", which is what the search wants to push toward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import CycleError, DomainError

# Embedding used to order boolean falsification vectors with the same
# dominance operator as real-valued outcomes: a falsified metric sorts
# below a satisfied one.
FALSIFIED = 0.0
SATISFIED = 1.0

FalsificationVector = tuple[bool, ...]


class Dominance(Enum):
    LEFT_DOMINATES = "left"
    RIGHT_DOMINATES = "right"
    EQUIVALENT = "equivalent"
    INCOMPARABLE = "incomparable"


def _find_cycle(n: int, adj: list[list[int]]) -> list[int] | None:
    """Return one directed cycle as a vertex list, or None if acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * n
    parent: dict[int, int] = {}

    for root in range(n):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = GRAY
        while stack:
            v, it = stack[-1]
            advanced = False
            for w in it:
                if color[w] == WHITE:
                    color[w] = GRAY
                    parent[w] = v
                    stack.append((w, iter(adj[w])))
                    advanced = True
                    break
                if color[w] == GRAY:
                    cycle = [w, v]
                    cur = v
                    while cur != w:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
            if not advanced:
                color[v] = BLACK
                stack.pop()
    return None


@dataclass(frozen=True)
class Rulebook:
    """Immutable priority DAG with precomputed reachability.

    Built via :func:`build`, :func:`total_order` or :func:`disconnected`.
    ``reach[i, j]`` is True iff j is reachable from i through >= 1 edge.
    """

    metric_count: int
    edges: frozenset[tuple[int, int]]
    reach: np.ndarray = field(repr=False)

    def precedes(self, i: int, j: int) -> bool:
        """True iff metric i outranks metric j (irreflexive, transitive)."""
        self._check_index(i)
        self._check_index(j)
        return bool(self.reach[i, j])

    def dominates(self, a: Sequence[float], b: Sequence[float]) -> bool:
        """Partial-order test: outcome ``a`` is at least as violating as ``b``.

        Holds iff for every metric where ``a`` is worse (higher) than ``b``,
        some higher-priority metric is strictly better (lower) in ``a``.
        Reflexive by construction.
        """
        a = self._as_vector(a)
        b = self._as_vector(b)
        worse = b < a           # positions where a fails to improve on b
        if not worse.any():
            return True
        better = a < b          # candidate excusing positions
        if not better.any():
            return False
        # excused[i]: some j with reach[j, i] and a[j] < b[j]
        excused = self.reach[better, :].any(axis=0)
        return bool(excused[worse].all())

    def strictly_dominates(self, a: Sequence[float], b: Sequence[float]) -> bool:
        return self.dominates(a, b) and not self.dominates(b, a)

    def compare(self, a: Sequence[float], b: Sequence[float]) -> Dominance:
        ab = self.dominates(a, b)
        ba = self.dominates(b, a)
        if ab and ba:
            return Dominance.EQUIVALENT
        if ab:
            return Dominance.LEFT_DOMINATES
        if ba:
            return Dominance.RIGHT_DOMINATES
        return Dominance.INCOMPARABLE

    def bits_dominates(self, a: FalsificationVector, b: FalsificationVector) -> bool:
        return self.dominates(bits_to_objective(a), bits_to_objective(b))

    def bits_strictly_dominates(self, a: FalsificationVector, b: FalsificationVector) -> bool:
        return self.bits_dominates(a, b) and not self.bits_dominates(b, a)

    def insert_maximal(
        self, maximal: Iterable[FalsificationVector], bits: FalsificationVector
    ) -> tuple[list[FalsificationVector], bool]:
        """Offer ``bits`` to a maximal set; return (new set, accepted).

        If an existing element strictly dominates ``bits`` the set is
        returned unchanged.  Otherwise ``bits`` joins the set and every
        element it strictly dominates is dropped.  Re-offering an element
        already present is accepted and leaves the set unchanged.
        """
        bits = tuple(bool(x) for x in bits)
        current = [tuple(bool(x) for x in m) for m in maximal]
        for m in current:
            if len(m) != len(bits):
                raise DomainError("falsification vectors must have equal length")
        target = bits_to_objective(bits)
        embedded = [bits_to_objective(m) for m in current]
        for vec in embedded:
            if self.dominates(vec, target) and not self.dominates(target, vec):
                return current, False
        kept = [
            m
            for m, vec in zip(current, embedded)
            if not (self.dominates(target, vec) and not self.dominates(vec, target))
        ]
        if bits not in kept:
            kept.append(bits)
        return kept, True

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.metric_count:
            raise DomainError(
                f"metric index {i} out of range [0, {self.metric_count})"
            )

    def _as_vector(self, v: Sequence[float]) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        if arr.shape != (self.metric_count,):
            raise DomainError(
                f"expected vector of length {self.metric_count}, got shape {arr.shape}"
            )
        return arr


def bits_to_objective(bits: FalsificationVector) -> np.ndarray:
    """Embed booleans into reals: falsified -> 0.0, satisfied -> 1.0."""
    return np.array([FALSIFIED if b else SATISFIED for b in bits])


def build(metric_count: int, edges: Iterable[tuple[int, int]]) -> Rulebook:
    """Construct a rulebook, rejecting cycles and invalid indices."""
    if metric_count < 1:
        raise DomainError(f"metric_count must be >= 1, got {metric_count}")
    edge_set = frozenset((int(i), int(j)) for i, j in edges)
    adj: list[list[int]] = [[] for _ in range(metric_count)]
    for i, j in sorted(edge_set):
        for k in (i, j):
            if not 0 <= k < metric_count:
                raise DomainError(
                    f"edge ({i}, {j}) references metric {k} outside [0, {metric_count})"
                )
        if i == j:
            raise CycleError([i, i])
        adj[i].append(j)

    cycle = _find_cycle(metric_count, adj)
    if cycle is not None:
        raise CycleError(cycle)

    reach = np.zeros((metric_count, metric_count), dtype=bool)
    for i, j in edge_set:
        reach[i, j] = True
    for k in range(metric_count):  # Floyd-Warshall on booleans
        reach |= reach[:, k, None] & reach[None, k, :]
    reach.setflags(write=False)
    return Rulebook(metric_count, edge_set, reach)


def total_order(metric_count: int) -> Rulebook:
    """Chain rulebook: metric 0 outranks 1 outranks ... outranks n-1."""
    return build(metric_count, [(i, i + 1) for i in range(metric_count - 1)])


def disconnected(metric_count: int) -> Rulebook:
    """Edge-free rulebook: no preference between any metrics."""
    return build(metric_count, [])
