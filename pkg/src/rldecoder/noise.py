"""Two-stage phenomenological noise: data-qubit errors, then measurement flips."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Literal

import numpy as np

from .surface import CodeLayout, PauliFrame, perfect_syndrome

NoiseModel = Literal["bitflip", "depolarizing"]
NOISE_MODELS = ("bitflip", "depolarizing")


@dataclass(frozen=True)
class NoiseConfig:
    model: NoiseModel = "bitflip"
    p_phys: float = 0.001
    p_meas: float = 0.001
    volume_depth: int = 5

    def __post_init__(self):
        if self.model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; expected one of {NOISE_MODELS}")
        for name in ("p_phys", "p_meas"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if int(self.volume_depth) != self.volume_depth or self.volume_depth < 1:
            raise ValueError(f"volume_depth must be a positive integer, got {self.volume_depth}")

    @classmethod
    def uniform(cls, model: NoiseModel, p: float, volume_depth: int = 5) -> "NoiseConfig":
        """Config with ``p_phys == p_meas == p``."""
        return cls(model=model, p_phys=p, p_meas=p, volume_depth=volume_depth)

    def to_dict(self) -> dict:
        return asdict(self)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; accepts an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def apply_physical_channel(
    frame: PauliFrame, config: NoiseConfig, rng: np.random.Generator
) -> PauliFrame:
    n = frame.x.shape[0]
    hit = rng.random(n) < config.p_phys
    if config.model == "bitflip":
        return PauliFrame(frame.x ^ hit, frame.z.copy())
    # 0 -> X, 1 -> Y, 2 -> Z; Y sets both bits
    which = rng.integers(0, 3, size=n)
    x = frame.x ^ (hit & (which != 2))
    z = frame.z ^ (hit & (which != 0))
    return PauliFrame(x.astype(np.uint8), z.astype(np.uint8))


def corrupt_syndrome(syndrome: np.ndarray, p_meas: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random(syndrome.shape[0]) < p_meas
    return (syndrome ^ flips).astype(np.uint8)


def generate_volume(
    layout: CodeLayout, frame: PauliFrame, config: NoiseConfig, rng: np.random.Generator
) -> tuple[PauliFrame, np.ndarray]:
    """Run ``volume_depth`` noise rounds.

    Returns the advanced frame and a ``(volume_depth, n_stabilizers)`` uint8
    array of faulty syndromes, oldest first.  Measurement errors never
    touch the frame.
    """
    volume = np.empty((config.volume_depth, layout.n_stabilizers), dtype=np.uint8)
    for t in range(config.volume_depth):
        frame = apply_physical_channel(frame, config, rng)
        volume[t] = corrupt_syndrome(perfect_syndrome(layout, frame), config.p_meas, rng)
    return frame, volume
