"""Disjoint-set union with path compression and union by rank."""

from __future__ import annotations


class DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        px, py = self.find(x), self.find(y)
        if px == py:
            return
        if self.rank[px] < self.rank[py]:
            px, py = py, px
        self.parent[py] = px
        if self.rank[px] == self.rank[py]:
            self.rank[px] += 1

    def labels(self) -> list[int]:
        """Contiguous component ids, ordered by each component's smallest member."""
        roots = [self.find(i) for i in range(len(self.parent))]
        order: dict[int, int] = {}
        for r in roots:
            if r not in order:
                order[r] = len(order)
        return [order[r] for r in roots]
