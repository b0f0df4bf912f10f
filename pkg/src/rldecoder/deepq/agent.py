"""Action selection and double-Q learning updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import StateEncoder
from .network import Adam, QNetwork, ShapeError
from .replay import Batch


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LinearEpsilon:
    """Linear anneal from ``initial`` to ``final`` over ``steps``, then constant."""

    initial: float
    final: float
    steps: int

    def __call__(self, step: int) -> float:
        if self.steps <= 0 or step >= self.steps:
            return self.final
        return self.initial + (self.final - self.initial) * step / self.steps


def select_action(
    network: QNetwork,
    encoded: np.ndarray,
    epsilon: float,
    mask: np.ndarray,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy choice.

    Exploratory draws are uniform over ``mask``; greedy choices take the
    argmax over all actions, lowest index winning ties.
    """
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise ValueError("exploration mask allows no action")
    if rng.random() < epsilon:
        return int(allowed[rng.integers(allowed.size)])
    return int(np.argmax(network.forward(encoded)[0]))


def bellman_targets(batch: Batch, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """Double-Q targets: the online net picks the next action, the target net values it."""
    if online.spec != target.spec:
        raise ShapeError("online and target networks must share a spec")
    r = np.asarray(batch.r, dtype=np.float64)
    cont = 1.0 - np.asarray(batch.t, dtype=np.float64)
    if gamma == 0:
        return r
    best = np.argmax(online.forward(batch.s_next), axis=1)
    q_next = target.forward(batch.s_next)[np.arange(len(best)), best]
    return r + gamma * q_next * cont


def td_loss_and_grads(
    online: QNetwork, batch: Batch, targets: np.ndarray, rng: np.random.Generator | None = None,
    training: bool = True,
):
    """Mean squared TD error on the taken actions, and its gradients."""
    q, cache = online.forward_train(batch.s, training=training, rng=rng)
    n = len(batch.a)
    rows = np.arange(n)
    diff = q[rows, batch.a].astype(np.float64) - targets
    loss = float(np.mean(diff**2))
    dq = np.zeros_like(q)
    dq[rows, batch.a] = 2.0 * diff / n
    return loss, online.backward(cache, dq)


def train_step(
    online: QNetwork,
    target: QNetwork,
    batch: Batch,
    optimizer: Adam,
    gamma: float,
    rng: np.random.Generator,
) -> float:
    """One optimizer step on the online network; returns the batch loss."""
    y = bellman_targets(batch, online, target, gamma)
    loss, grads = td_loss_and_grads(online, batch, y, rng)
    if not np.isfinite(loss):
        raise NonFiniteLossError(
            f"loss={loss}; targets in [{y.min()}, {y.max()}], "
            f"max |w| = {max(float(np.abs(v).max()) for v in online.params.values())}"
        )
    optimizer.step(online.params, grads)
    return loss


def sync_target(online: QNetwork, target: QNetwork) -> None:
    target.load_from(online)


class GreedyAgent:
    """Frozen-weight policy used at evaluation time."""

    def __init__(self, network: QNetwork, encoder: StateEncoder):
        if network.spec.input_shape != encoder.shape:
            raise ShapeError(f"network expects {network.spec.input_shape}, encoder yields {encoder.shape}")
        if network.spec.n_actions != encoder.actions.n_actions:
            raise ShapeError("network output size does not match the action space")
        self.network = network
        self.encoder = encoder

    def act(self, state) -> int:
        return int(np.argmax(self.network.forward(self.encoder.encode(state))[0]))
