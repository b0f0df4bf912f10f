from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CAPACITY = 50_000


class UnderfilledMemoryError(ValueError):
    pass


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.a)


class ReplayMemory:
    """Fixed-capacity ring buffer of experience tuples (oldest evicted first)."""

    def __init__(self, state_shape: tuple[int, ...], capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_shape = tuple(state_shape)
        self.s = np.zeros((capacity,) + self.state_shape, dtype=np.uint8)
        self.s_next = np.zeros_like(self.s)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float32)
        self.t = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.next_index = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a: int, r: float, s_next, t: bool) -> None:
        i = self.next_index
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.t[i] = t
        self.next_index = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Buffer slots from oldest to newest."""
        start = self.next_index if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise UnderfilledMemoryError(
                f"memory holds {self.size} tuples, cannot sample a batch of {batch_size}"
            )
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement over the current contents."""
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.t[idx])

    def state_dict(self) -> dict[str, np.ndarray]:
        order = self.ordered_indices()
        return {
            "s": self.s[order],
            "a": self.a[order],
            "r": self.r[order],
            "s_next": self.s_next[order],
            "t": self.t[order],
            "capacity": np.array([self.capacity], dtype=np.int64),
        }

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray], capacity: int | None = None) -> "ReplayMemory":
        cap = int(state["capacity"][0]) if capacity is None else capacity
        mem = cls(state["s"].shape[1:], cap)
        n = len(state["a"])
        keep = slice(max(0, n - cap), n)
        k = keep.stop - keep.start
        for name in ("s", "a", "r", "s_next", "t"):
            getattr(mem, name)[:k] = state[name][keep]
        mem.size = k
        mem.next_index = k % cap
        return mem


def replay_push(memory: ReplayMemory, s, a, r, s_next, t) -> None:
    memory.push(s, a, r, s_next, t)


def replay_sample(memory: ReplayMemory, batch_size: int, rng: np.random.Generator) -> Batch:
    return memory.sample(batch_size, rng)
