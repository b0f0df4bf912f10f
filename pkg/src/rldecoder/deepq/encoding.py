"""Embedding of (syndrome volume, action history) into a binary image stack.

Each channel is a ``(2d+1, 2d+1)`` grid.  Vertex cells ``(odd, odd)`` hold
qubits, plaquette cells ``(even, even)`` hold stabilizers and the mixed
parity cells are lattice edges.  Channel order: the ``depth`` syndrome
slices oldest to newest, then the X-flip history, then the Z-flip history.

Syndrome slices also carry constant stabilizer-type markers on edge cells:
an X-type plaquette marks the vertical-edge cell directly below its centre
(above it on the bottom boundary), a Z-type plaquette marks the
horizontal-edge cell to the right of its centre (left of it on the right
boundary).  The two marker families live on disjoint cell parities, so
they never collide with each other or with syndrome/history bits.
"""

from __future__ import annotations

import numpy as np

from ..env import ActionSpace, EnvState
from ..surface import CodeLayout


class StateEncoder:
    def __init__(self, layout: CodeLayout, volume_depth: int, actions: ActionSpace):
        self.layout = layout
        self.depth = volume_depth
        self.actions = actions
        g = layout.grid_size
        self.shape = (volume_depth + 2, g, g)

        coords = np.array([s.grid_coord for s in layout.stabilizers])
        self.plaq_rows, self.plaq_cols = coords[:, 0], coords[:, 1]
        self.vertex_rows = np.array([2 * r + 1 for r, _ in layout.qubits])
        self.vertex_cols = np.array([2 * c + 1 for _, c in layout.qubits])

        markers = np.zeros((g, g), dtype=np.uint8)
        for s in layout.stabilizers:
            R, C = s.grid_coord
            if s.kind == "X":
                markers[R + 1 if R < g - 1 else R - 1, C] = 1
            else:
                markers[R, C + 1 if C < g - 1 else C - 1] = 1
        self.type_markers = markers

    def encode(self, state: EnvState) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.uint8)
        out[: self.depth] = self.type_markers
        t, s = np.nonzero(state.volume)
        out[t, self.plaq_rows[s], self.plaq_cols[s]] = 1
        n = self.layout.n_qubits
        for a in state.history:
            q = a if a < n else a - n
            channel = self.depth if a < n else self.depth + 1
            out[channel, self.vertex_rows[q], self.vertex_cols[q]] = 1
        return out

    def decode(self, encoded: np.ndarray) -> tuple[np.ndarray, set[tuple[str, int]]]:
        """Recover the volume and the set of ``(axis, qubit)`` history flips."""
        volume = encoded[: self.depth, self.plaq_rows, self.plaq_cols].astype(np.uint8)
        flips = set()
        for axis, channel in (("X", self.depth), ("Z", self.depth + 1)):
            hits = encoded[channel, self.vertex_rows, self.vertex_cols]
            flips |= {(axis, int(q)) for q in np.flatnonzero(hits)}
        return volume, flips


def encode_state(layout: CodeLayout, state: EnvState, actions: ActionSpace) -> np.ndarray:
    return StateEncoder(layout, state.volume.shape[0], actions).encode(state)
