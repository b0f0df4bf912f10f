import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rldecoder.deepq import StateEncoder, encode_state
from rldecoder.env import ActionSpace, EnvState
from rldecoder.surface import build_code


def test_default_d5_shape():
    lay = build_code(5)
    enc = StateEncoder(lay, 5, ActionSpace(25, False))
    out = enc.encode(EnvState(np.zeros((5, 24), np.uint8), ()))
    assert out.shape == (7, 11, 11) and out.dtype == np.uint8
    assert set(np.unique(out)) <= {0, 1}


def test_cell_placement_d3():
    lay = build_code(3)
    enc = StateEncoder(lay, 2, ActionSpace(9, True))
    vol = np.zeros((2, 8), np.uint8)
    vol[1, 2] = 1  # X plaquette with top-left qubit (0, 0) -> centre (2, 2)
    out = enc.encode(EnvState(vol, (4, 9 + 8)))  # X on centre qubit, Z on corner qubit 8
    assert out[1, 2, 2] == 1 and out[0, 2, 2] == 0
    assert out[2, 3, 3] == 1  # qubit 4 = (1, 1) -> vertex cell (3, 3)
    assert out[3, 5, 5] == 1  # qubit 8 = (2, 2) -> vertex cell (5, 5)
    assert out[2].sum() == 1 and out[3].sum() == 1


def test_markers_sit_on_edge_cells_only():
    lay = build_code(5)
    enc = StateEncoder(lay, 5, ActionSpace(25, False))
    R, C = np.nonzero(enc.type_markers)
    assert len(R) == lay.n_stabilizers
    assert np.all((R + C) % 2 == 1)  # mixed parity: never a vertex or plaquette cell
    out = enc.encode(EnvState(np.zeros((5, 24), np.uint8), ()))
    for t in range(5):
        np.testing.assert_array_equal(out[t], enc.type_markers)
    assert not out[5:].any()
    # X markers on odd rows, Z markers on odd columns
    for s in lay.stabilizers:
        r, c = s.grid_coord
        near = [(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        hit = [(a, b) for a, b in near if 0 <= a < 11 and 0 <= b < 11 and enc.type_markers[a, b]]
        want_row_offset = s.kind == "X"
        assert any((a != r) == want_row_offset for a, b in hit)


@settings(max_examples=60, deadline=None)
@given(
    d=st.sampled_from([3, 5]),
    allow_z=st.booleans(),
    depth=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip(d, allow_z, depth, seed):
    lay = build_code(d)
    actions = ActionSpace(lay.n_qubits, allow_z)
    rng = np.random.default_rng(seed)
    vol = (rng.random((depth, lay.n_stabilizers)) < 0.3).astype(np.uint8)
    k = int(rng.integers(0, 6))
    hist = tuple(int(a) for a in rng.choice(actions.n_actions - 1, size=k, replace=False))
    enc = StateEncoder(lay, depth, actions)
    got_vol, flips = enc.decode(enc.encode(EnvState(vol, hist)))
    np.testing.assert_array_equal(got_vol, vol)
    assert flips == {actions.describe(a) for a in hist}


def test_encode_state_wrapper():
    lay = build_code(3)
    s = EnvState(np.ones((5, 8), np.uint8), (1,))
    a = encode_state(lay, s, ActionSpace(9, False))
    b = StateEncoder(lay, 5, ActionSpace(9, False)).encode(s)
    np.testing.assert_array_equal(a, b)
