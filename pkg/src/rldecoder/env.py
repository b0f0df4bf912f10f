"""Episodic decoding environment.

The agent sees a faulty syndrome volume plus the flips it has made since
that volume was issued.  A flip not yet in the history is applied to the
hidden frame and the volume is kept; a repeated flip or a request for a
new syndrome triggers a fresh round of noisy measurements and clears the
history.  The matching referee decides when the episode is over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Optional

import numpy as np

from .noise import NoiseConfig, generate_volume, make_rng
from .referee import MatchingReferee
from .surface import CodeLayout, PauliFrame, is_trivial

DEFAULT_MAX_STEPS = 10**6


class EpisodeOverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionSpace:
    """Flat action indexing: X flips, then Z flips (depolarizing only), then request."""

    n_qubits: int
    allow_z: bool

    @classmethod
    def for_noise(cls, layout: CodeLayout, noise: NoiseConfig) -> "ActionSpace":
        return cls(layout.n_qubits, noise.model == "depolarizing")

    @property
    def n_actions(self) -> int:
        return (2 if self.allow_z else 1) * self.n_qubits + 1

    @property
    def request(self) -> int:
        return self.n_actions - 1

    def flip(self, axis: str, qubit: int) -> int:
        if axis == "X":
            return qubit
        if axis == "Z" and self.allow_z:
            return self.n_qubits + qubit
        raise ValueError(f"{axis} flips are not part of this action space")

    def describe(self, action: int) -> Optional[tuple[str, int]]:
        """``(axis, qubit)`` for a flip, ``None`` for the request action."""
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        if action == self.request:
            return None
        if action < self.n_qubits:
            return "X", action
        return "Z", action - self.n_qubits


@dataclass(frozen=True, eq=False)
class EnvState:
    volume: np.ndarray  # (depth, n_stabilizers) uint8, oldest slice first
    history: tuple[int, ...] = ()


@dataclass(frozen=True)
class StepOutcome:
    state: EnvState
    reward: int
    terminal: bool
    truncated: bool = False


def exploration_mask(layout: CodeLayout, state: EnvState, actions: ActionSpace) -> np.ndarray:
    """Actions an exploring agent may pick.

    A flip on qubit q is allowed if q touches a stabilizer violated in any
    slice of the volume, or shares a plaquette with a qubit already acted on.
    Requesting a new syndrome is always allowed.
    """
    violated = state.volume.any(axis=0)
    qubits = layout.support_matrix[violated].any(axis=0)
    if state.history:
        acted = [actions.describe(a)[1] for a in state.history]
        qubits = qubits | layout.neighbours[acted].any(axis=0)
    per_axis = [qubits, qubits] if actions.allow_z else [qubits]
    return np.concatenate(per_axis + [np.array([True])])


class Environment:
    """Surface-code decoding environment with a hidden Pauli frame.

    Parameters
    ----------
    layout, noise
        Code and two-stage noise model.
    seed
        Anything accepted by :func:`rldecoder.noise.make_rng`.
    referee
        Terminal-state oracle; defaults to a :class:`MatchingReferee`.
    max_steps
        Agent actions per episode before the episode is truncated.
    trace
        Optional text stream receiving one JSON record per step.
    """

    def __init__(
        self,
        layout: CodeLayout,
        noise: NoiseConfig,
        seed=None,
        referee: Optional[MatchingReferee] = None,
        max_steps: int = DEFAULT_MAX_STEPS,
        trace: Optional[IO[str]] = None,
    ):
        if noise.p_phys == 0 and noise.p_meas == 0:
            raise ValueError("p_phys = p_meas = 0 never produces a non-trivial volume")
        self.layout = layout
        self.noise = noise
        self.actions = ActionSpace.for_noise(layout, noise)
        self.referee = referee if referee is not None else MatchingReferee(layout)
        self.rng = make_rng(seed)
        self.max_steps = max_steps
        self.trace = trace
        self._hidden = PauliFrame.empty(layout.n_qubits)
        self._state: Optional[EnvState] = None
        self._done = True
        self.steps = 0
        self.rounds_elapsed = 0
        self.volumes_generated = 0

    @property
    def n_actions(self) -> int:
        return self.actions.n_actions

    @property
    def done(self) -> bool:
        return self._done

    def _new_volume(self) -> np.ndarray:
        # trivial volumes carry no information for the agent, but physical
        # time still passes while they are discarded
        while True:
            self._hidden, volume = generate_volume(self.layout, self._hidden, self.noise, self.rng)
            self.rounds_elapsed += self.noise.volume_depth
            self.volumes_generated += 1
            if volume.any():
                volume.flags.writeable = False
                return volume

    def reset(self) -> EnvState:
        self._hidden = PauliFrame.empty(self.layout.n_qubits)
        self.steps = 0
        self.rounds_elapsed = 0
        self.volumes_generated = 0
        self._state = EnvState(self._new_volume(), ())
        self._done = False
        return self._state

    def _judge(self) -> tuple[int, bool]:
        reward = int(is_trivial(self.layout, self._hidden))
        terminal = not self.referee.verdict(self._hidden)
        return reward, terminal

    def _apply(self, axis: str, qubit: int) -> tuple[int, bool]:
        if axis == "X":
            self._hidden.x[qubit] ^= 1
        else:
            self._hidden.z[qubit] ^= 1
        return self._judge()

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise EpisodeOverError("step() called on a finished episode; call reset()")
        action = int(action)
        flip = self.actions.describe(action)
        state = self._state
        if flip is not None and action not in state.history:
            branch = "flip"
            reward, terminal = self._apply(*flip)
            new_state = EnvState(state.volume, state.history + (action,))
        else:
            if flip is not None:
                branch = "repeat"
                reward, terminal = self._apply(*flip)
            else:
                # frame untouched by the action; judged as it stands, which
                # includes any noise from the volume the agent just saw
                branch = "request"
                reward, terminal = self._judge()
            if terminal:
                new_state = EnvState(state.volume, ())
            else:
                new_state = EnvState(self._new_volume(), ())

        self.steps += 1
        truncated = not terminal and self.steps >= self.max_steps
        self._state = new_state
        self._done = terminal or truncated
        if self.trace is not None:
            self._write_trace(state, action, branch, reward, terminal, truncated)
        return StepOutcome(new_state, reward, terminal, truncated)

    def _write_trace(self, before, action, branch, reward, terminal, truncated):
        record = {
            "step": self.steps,
            "mask_size": int(exploration_mask(self.layout, before, self.actions).sum()),
            "action": action,
            "branch": branch,
            "reward": reward,
            "terminal": terminal,
            "truncated": truncated,
            "rounds": self.rounds_elapsed,
        }
        if branch != "flip":
            # corrections accumulated against the volume that was just replaced
            record["accumulated"] = list(before.history) + ([action] if branch == "repeat" else [])
        self.trace.write(json.dumps(record) + "\n")
