"""Dinic max-flow on real capacities with incremental edge insertion.

Edges are stored in paired arrays (edge ``e`` and its reverse ``e ^ 1``), so a
network can be grown, solved, snapshotted and rolled back cheaply. Flow left in
the network is kept across calls: adding edges and calling :meth:`max_flow`
again continues from the current (still feasible) flow.
"""

from __future__ import annotations

from collections import deque

# residual capacities at or below this count as saturated
EPS = 1e-13


class FlowNetwork:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[int] = []   # head node of each edge
        self.cap: list[float] = []  # residual capacity of each edge
        self._adj = None

    @property
    def n_edges(self) -> int:
        return len(self.head)

    def add_edge(self, u: int, v: int, c: float) -> int:
        """Add u -> v with capacity c; returns the forward edge id."""
        e = len(self.head)
        self.head += [v, u]
        self.cap += [float(c), 0.0]
        self._adj = None
        return e

    def tail(self, e: int) -> int:
        return self.head[e ^ 1]

    def flow_on(self, e: int) -> float:
        """Flow currently pushed through forward edge ``e``."""
        return self.cap[e ^ 1]

    # -- state management -------------------------------------------------

    def snapshot(self):
        return len(self.head), list(self.cap)

    def restore(self, snap) -> None:
        n_edges, cap = snap
        del self.head[n_edges:]
        self.cap = list(cap)
        self._adj = None

    # -- algorithm --------------------------------------------------------

    def _adjacency(self):
        if self._adj is None:
            adj = [[] for _ in range(self.n)]
            head = self.head
            for e in range(len(head)):
                adj[head[e ^ 1]].append(e)
            self._adj = adj
        return self._adj

    def _levels(self, s: int, t: int):
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        adj, head, cap = self._adjacency(), self.head, self.cap
        while q:
            u = q.popleft()
            for e in adj[u]:
                v = head[e]
                if level[v] < 0 and cap[e] > EPS:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def max_flow(self, s: int, t: int) -> float:
        """Augment to a maximum flow; returns the amount added by this call."""
        adj, head = self._adjacency(), self.head
        total = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return total
            cap = self.cap
            it = [0] * self.n
            while True:
                # iterative DFS along the level graph with current-arc pointers
                path: list[int] = []
                u = s
                while u != t:
                    edges = adj[u]
                    i = it[u]
                    while i < len(edges):
                        e = edges[i]
                        v = head[e]
                        if cap[e] > EPS and level[v] == level[u] + 1:
                            break
                        i += 1
                    it[u] = i
                    if i == len(edges):
                        if u == s:
                            break
                        # dead end: retreat and skip the arc that led here
                        level[u] = -1
                        e_back = path.pop()
                        u = head[e_back ^ 1]
                        it[u] += 1
                        continue
                    path.append(edges[i])
                    u = head[edges[i]]
                if u != t:
                    break
                push = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= push
                    cap[e ^ 1] += push
                total += push

    def reachable(self, s: int) -> list[bool]:
        """Nodes reachable from ``s`` through edges with positive residual."""
        seen = [False] * self.n
        seen[s] = True
        q = deque([s])
        adj, head, cap = self._adjacency(), self.head, self.cap
        while q:
            u = q.popleft()
            for e in adj[u]:
                v = head[e]
                if not seen[v] and cap[e] > EPS:
                    seen[v] = True
                    q.append(v)
        return seen
