"""Exact minimum-weight perfect matching referee on perfect syndromes.

Each Pauli sector is decoded independently on its own decoding graph:
nodes are the stabilizers that detect that sector (Z-type checks for X
flips, X-type checks for Z flips) plus one virtual boundary node; every
data qubit is an edge between the (one or two) checks it touches, or
between its single check and the boundary.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache

import networkx as nx
import numpy as np

from .surface import Axis, CodeLayout, PauliFrame, is_trivial, perfect_syndrome

EXHAUSTIVE_LIMIT = 10


class DecodingGraph:
    def __init__(self, layout: CodeLayout, axis: Axis):
        self.axis = axis
        self.n_qubits = layout.n_qubits
        check_kind = "Z" if axis == "X" else "X"
        self.checks = layout.stabilizer_indices(check_kind)
        local = {s: i for i, s in enumerate(self.checks)}
        k = len(self.checks)
        self.boundary = k

        touching: dict[int, list[int]] = {q: [] for q in range(layout.n_qubits)}
        for s in self.checks:
            for q in layout.stabilizers[s].support:
                touching[q].append(local[s])
        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(k + 1)]
        for q in range(layout.n_qubits):
            ends = touching[q]
            if len(ends) == 1:
                ends = [ends[0], self.boundary]
            a, b = ends
            adjacency[a].append((q, b))
            adjacency[b].append((q, a))
        for row in adjacency:
            row.sort()

        # BFS from every check; the boundary node is never passed through.
        # Visiting edges in ascending qubit order fixes a canonical shortest path.
        self.dist = np.zeros((k, k + 1), dtype=np.int64)
        self.paths: list[list[tuple[int, ...]]] = []
        for src in range(k):
            parent: dict[int, tuple[int, int]] = {src: (-1, -1)}
            order = deque([src])
            while order:
                node = order.popleft()
                if node == self.boundary:
                    continue
                for q, nxt in adjacency[node]:
                    if nxt not in parent:
                        parent[nxt] = (node, q)
                        order.append(nxt)
            row = []
            for dst in range(k + 1):
                qs = []
                node = dst
                while node != src:
                    node, q = parent[node]
                    qs.append(q)
                row.append(tuple(sorted(qs)))
                self.dist[src, dst] = len(qs)
            self.paths.append(row)

    def match(self, defects: list[int]) -> tuple[list[tuple[int, int]], int]:
        """Minimum-weight pairing of local defect indices.

        Returns ``(pairs, total_weight)``; a pair ``(i, boundary)`` sends ``i``
        to the boundary.
        """
        if len(defects) <= EXHAUSTIVE_LIMIT:
            return _exhaustive_match(tuple(defects), self.dist, self.boundary)
        return _blossom_match(defects, self.dist, self.boundary)

    def correction(self, defects: list[int]) -> np.ndarray:
        bits = np.zeros(self.n_qubits, dtype=np.uint8)
        pairs, _ = self.match(defects)
        for a, b in pairs:
            bits[list(self.paths[a][b])] ^= 1
        return bits


def _exhaustive_match(defects: tuple[int, ...], dist: np.ndarray, boundary: int):
    n = len(defects)

    @lru_cache(maxsize=None)
    def best(mask: int) -> tuple[int, tuple[tuple[int, int], ...]]:
        if mask == 0:
            return 0, ()
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        a = defects[i]
        w, pairs = best(rest)
        choice = (int(dist[a, boundary]) + w, ((a, boundary),) + pairs)
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            b = defects[j]
            w, pairs = best(rest & ~(1 << j))
            cand = int(dist[a, b]) + w
            if cand < choice[0]:
                choice = (cand, ((a, b),) + pairs)
        return choice

    total, pairs = best((1 << n) - 1)
    return list(pairs), total


def _blossom_match(defects: list[int], dist: np.ndarray, boundary: int):
    g = nx.Graph()
    for i, a in enumerate(defects):
        g.add_edge(("d", i), ("b", i), weight=int(dist[a, boundary]))
        for j in range(i + 1, len(defects)):
            b = defects[j]
            g.add_edge(("d", i), ("d", j), weight=int(dist[a, b]))
            g.add_edge(("b", i), ("b", j), weight=0)
    matching = nx.min_weight_matching(g)
    pairs = []
    total = 0
    for u, v in sorted(matching, key=lambda e: sorted(e)):
        if u[0] == "b" and v[0] == "b":
            continue
        if u[0] == "b":
            u, v = v, u
        a = defects[u[1]]
        b = boundary if v[0] == "b" else defects[v[1]]
        pairs.append((a, b))
        total += int(dist[a, b])
    return pairs, total


class MatchingReferee:
    """Single-shot perfect-syndrome decoder (X and Z sectors independent)."""

    def __init__(self, layout: CodeLayout, cache_size: int = 1 << 16):
        self.layout = layout
        self.graphs = {axis: DecodingGraph(layout, axis) for axis in ("X", "Z")}
        self._decode_bytes = lru_cache(maxsize=cache_size)(self._decode_uncached)

    def _decode_uncached(self, key: bytes) -> tuple[np.ndarray, np.ndarray]:
        syndrome = np.frombuffer(key, dtype=np.uint8)
        out = []
        for axis in ("X", "Z"):
            g = self.graphs[axis]
            defects = [i for i, s in enumerate(g.checks) if syndrome[s]]
            bits = g.correction(defects)
            bits.flags.writeable = False
            out.append(bits)
        return out[0], out[1]

    def decode(self, syndrome: np.ndarray) -> PauliFrame:
        x, z = self._decode_bytes(np.ascontiguousarray(syndrome, dtype=np.uint8).tobytes())
        return PauliFrame(x.copy(), z.copy())

    def verdict(self, frame: PauliFrame) -> bool:
        """True iff decoding the frame's perfect syndrome leaves a trivial frame."""
        correction = self.decode(perfect_syndrome(self.layout, frame))
        return is_trivial(self.layout, frame ^ correction)


_REFEREES: dict[int, MatchingReferee] = {}


def _referee_for(layout: CodeLayout) -> MatchingReferee:
    ref = _REFEREES.get(id(layout))
    if ref is None or ref.layout is not layout:
        ref = MatchingReferee(layout)
        _REFEREES[id(layout)] = ref
    return ref


def referee_decode(layout: CodeLayout, syndrome: np.ndarray) -> PauliFrame:
    return _referee_for(layout).decode(syndrome)


def referee_verdict(layout: CodeLayout, frame: PauliFrame) -> bool:
    return _referee_for(layout).verdict(frame)
