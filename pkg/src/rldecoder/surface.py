"""Rotated surface code geometry and Pauli-frame arithmetic.

Data qubits sit on the vertices of a ``d x d`` lattice, indexed row-major
(``q = r * d + c``).  Plaquettes are labelled by their top-left vertex
``(r, c)`` with ``r, c`` in ``[-1, d - 1]``; a plaquette is X-type iff
``r + c`` is even.  Weight-2 X-type plaquettes sit on the top and bottom
edges, weight-2 Z-type plaquettes on the left and right edges, so that

* logical X is an X string down column 0 (top to bottom boundary),
* logical Z is a Z string along row 0 (left to right boundary).

In the ``(2d+1) x (2d+1)`` embedding grid used by the agent, vertex
``(r, c)`` maps to ``(2r+1, 2c+1)`` and plaquette ``(r, c)`` to
``(2r+2, 2c+2)``.

Frames ignore global phases: a frame is a pair of bit-vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Axis = Literal["X", "Z"]


class NotInCodeSpaceError(ValueError):
    """Raised when a homology class is requested for a frame with nonzero syndrome."""


@dataclass(frozen=True)
class StabilizerRecord:
    kind: Axis
    support: tuple[int, ...]
    plaquette: tuple[int, int]  # top-left vertex of the plaquette
    grid_coord: tuple[int, int]  # cell in the (2d+1)^2 embedding grid


@dataclass(frozen=True, eq=False)
class CodeLayout:
    d: int
    qubits: tuple[tuple[int, int], ...]
    stabilizers: tuple[StabilizerRecord, ...]
    logical_x_support: tuple[int, ...]
    logical_z_support: tuple[int, ...]
    # Dense helpers built once; rows are stabilizers, columns qubits.
    # detects_x[s, q] = 1 iff stabilizer s is Z-type and q in its support.
    detects_x: np.ndarray = field(repr=False)
    detects_z: np.ndarray = field(repr=False)
    support_matrix: np.ndarray = field(repr=False)
    neighbours: np.ndarray = field(repr=False)  # qubits sharing a plaquette (reflexive)

    @property
    def n_qubits(self) -> int:
        return self.d * self.d

    @property
    def n_stabilizers(self) -> int:
        return len(self.stabilizers)

    @property
    def grid_size(self) -> int:
        return 2 * self.d + 1

    def qubit_index(self, r: int, c: int) -> int:
        return r * self.d + c

    def stabilizer_indices(self, kind: Axis) -> list[int]:
        return [i for i, s in enumerate(self.stabilizers) if s.kind == kind]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "qubits": [list(q) for q in self.qubits],
            "stabilizers": [
                {
                    "kind": s.kind,
                    "support": list(s.support),
                    "plaquette": list(s.plaquette),
                    "grid_coord": list(s.grid_coord),
                }
                for s in self.stabilizers
            ],
            "logical_x_support": list(self.logical_x_support),
            "logical_z_support": list(self.logical_z_support),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_code(d: int) -> CodeLayout:
    """Build the distance-``d`` rotated surface code layout.

    Raises
    ------
    ValueError
        If ``d`` is even or smaller than 3.
    """
    if not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
        raise ValueError(f"code distance must be an odd integer >= 3, got {d!r}")
    d = int(d)
    qubits = tuple((r, c) for r in range(d) for c in range(d))

    stabilizers = []
    for r in range(-1, d):
        for c in range(-1, d):
            kind: Axis = "X" if (r + c) % 2 == 0 else "Z"
            bulk = 0 <= r <= d - 2 and 0 <= c <= d - 2
            if not bulk:
                on_row_edge = r in (-1, d - 1) and 0 <= c <= d - 2
                on_col_edge = c in (-1, d - 1) and 0 <= r <= d - 2
                # rough edges (top/bottom) carry X checks, smooth edges Z checks
                if not ((on_row_edge and kind == "X") or (on_col_edge and kind == "Z")):
                    continue
            support = tuple(
                sorted(
                    (r + dr) * d + (c + dc)
                    for dr in (0, 1)
                    for dc in (0, 1)
                    if 0 <= r + dr < d and 0 <= c + dc < d
                )
            )
            stabilizers.append(
                StabilizerRecord(kind, support, (r, c), (2 * r + 2, 2 * c + 2))
            )

    n = d * d
    m = len(stabilizers)
    support_matrix = np.zeros((m, n), dtype=np.uint8)
    for i, s in enumerate(stabilizers):
        support_matrix[i, list(s.support)] = 1
    is_z = np.array([s.kind == "Z" for s in stabilizers])
    detects_x = support_matrix * is_z[:, None].astype(np.uint8)
    detects_z = support_matrix * (~is_z)[:, None].astype(np.uint8)

    shared = support_matrix.T.astype(np.int32) @ support_matrix.astype(np.int32)
    neighbours = (shared > 0) | np.eye(n, dtype=bool)

    return CodeLayout(
        d=d,
        qubits=qubits,
        stabilizers=tuple(stabilizers),
        logical_x_support=tuple(r * d for r in range(d)),
        logical_z_support=tuple(range(d)),
        detects_x=detects_x,
        detects_z=detects_z,
        support_matrix=support_matrix,
        neighbours=neighbours,
    )


@dataclass(frozen=True, eq=False)
class PauliFrame:
    """Accumulated X/Z flips as two uint8 bit-vectors (phase dropped)."""

    x: np.ndarray
    z: np.ndarray

    @classmethod
    def empty(cls, n_qubits: int) -> "PauliFrame":
        return cls(np.zeros(n_qubits, np.uint8), np.zeros(n_qubits, np.uint8))

    @classmethod
    def from_sets(cls, n_qubits: int, x=(), z=()) -> "PauliFrame":
        frame = cls.empty(n_qubits)
        frame.x[list(x)] = 1
        frame.z[list(z)] = 1
        return frame

    def __xor__(self, other: "PauliFrame") -> "PauliFrame":
        return PauliFrame(self.x ^ other.x, self.z ^ other.z)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliFrame):
            return NotImplemented
        return bool(np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z))

    __hash__ = None  # type: ignore[assignment]

    def copy(self) -> "PauliFrame":
        return PauliFrame(self.x.copy(), self.z.copy())

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))

    def x_set(self) -> set[int]:
        return set(np.flatnonzero(self.x).tolist())

    def z_set(self) -> set[int]:
        return set(np.flatnonzero(self.z).tolist())


def apply_flip(frame: PauliFrame, axis: Axis, qubit: int) -> PauliFrame:
    """Return a new frame with one single-qubit flip toggled."""
    n = frame.x.shape[0]
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    out = frame.copy()
    if axis == "X":
        out.x[qubit] ^= 1
    elif axis == "Z":
        out.z[qubit] ^= 1
    else:
        raise ValueError(f"axis must be 'X' or 'Z', got {axis!r}")
    return out


def _check_dims(layout: CodeLayout, frame: PauliFrame) -> None:
    if frame.x.shape != (layout.n_qubits,) or frame.z.shape != (layout.n_qubits,):
        raise ValueError(
            f"frame has {frame.x.shape[0]} qubits, layout expects {layout.n_qubits}"
        )


def perfect_syndrome(layout: CodeLayout, frame: PauliFrame) -> np.ndarray:
    """Noiseless syndrome bits, aligned with ``layout.stabilizers``."""
    _check_dims(layout, frame)
    counts = layout.detects_x @ frame.x.astype(np.int32) + layout.detects_z @ frame.z.astype(np.int32)
    return (counts & 1).astype(np.uint8)


def homology_class(layout: CodeLayout, frame: PauliFrame) -> tuple[int, int]:
    """Logical class ``(x_class, z_class)`` of a zero-syndrome frame.

    ``x_class`` is 1 iff the X part acts as logical X up to stabilizers, read off
    as the overlap parity with the logical Z string (and vice versa).
    """
    if perfect_syndrome(layout, frame).any():
        raise NotInCodeSpaceError("frame has a nonzero syndrome")
    return _logical_parities(layout, frame)


def _logical_parities(layout: CodeLayout, frame: PauliFrame) -> tuple[int, int]:
    x_class = int(frame.x[list(layout.logical_z_support)].sum() & 1)
    z_class = int(frame.z[list(layout.logical_x_support)].sum() & 1)
    return x_class, z_class


def is_trivial(layout: CodeLayout, frame: PauliFrame) -> bool:
    """True iff the frame is an element of the stabilizer group."""
    if perfect_syndrome(layout, frame).any():
        return False
    return _logical_parities(layout, frame) == (0, 0)
