"""Lifetime evaluation of decoding agents.

Lifetime is measured in noise rounds: every generated volume, including
the first one and any discarded trivial ones, contributes ``volume_depth``
rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple, Optional, Protocol

import numpy as np

from .env import Environment, EnvState

MIN_EVAL_SYNDROMES = 10**4
REPORT_SYNDROMES = 10**6


class Agent(Protocol):
    def act(self, state: EnvState) -> int: ...


class EpisodeResult(NamedTuple):
    lifetime: int
    censored: bool
    steps: int


@dataclass
class EvalReport:
    error_rate: float
    episodes: int
    total_syndromes_seen: int
    mean_lifetime: float
    standard_error: float
    baseline_lifetime: float
    cap_hits: int
    seed: Optional[int] = None
    checkpoint_id: Optional[str] = None

    @property
    def lower_bound(self) -> bool:
        """Censored episodes make the mean a lower bound."""
        return self.cap_hits > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lower_bound"] = self.lower_bound
        return d


def baseline_lifetime(p: float) -> float:
    """Mean rounds until an unprotected qubit with per-round error rate ``p`` fails."""
    if not 0 < p <= 1:
        raise ValueError(f"baseline lifetime needs 0 < p <= 1, got {p}")
    return 1.0 / p


def decode_episode(agent: Agent, env: Environment) -> EpisodeResult:
    """Run one greedy episode and return its lifetime in noise rounds."""
    state = env.reset()
    while True:
        out = env.step(agent.act(state))
        if out.terminal or out.truncated:
            return EpisodeResult(env.rounds_elapsed, bool(out.truncated), env.steps)
        state = out.state


def evaluate_agent(
    agent: Agent,
    env: Environment,
    min_syndromes: int = REPORT_SYNDROMES,
    seed: Optional[int] = None,
    checkpoint_id: Optional[str] = None,
    error_rate: Optional[float] = None,
) -> EvalReport:
    """Average lifetime over as many episodes as needed to see ``min_syndromes`` rounds."""
    if min_syndromes < MIN_EVAL_SYNDROMES:
        raise ValueError(f"min_syndromes must be >= {MIN_EVAL_SYNDROMES}, got {min_syndromes}")
    lifetimes = []
    total = 0
    cap_hits = 0
    while total < min_syndromes:
        result = decode_episode(agent, env)
        lifetimes.append(result.lifetime)
        total += result.lifetime
        cap_hits += result.censored
    n = len(lifetimes)
    stderr = float(np.std(lifetimes, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    if error_rate is None:
        error_rate = env.noise.p_phys
    return EvalReport(
        error_rate=float(error_rate),
        episodes=n,
        total_syndromes_seen=int(total),
        mean_lifetime=total / n,
        standard_error=stderr,
        baseline_lifetime=baseline_lifetime(error_rate),
        cap_hits=int(cap_hits),
        seed=seed,
        checkpoint_id=checkpoint_id,
    )


class RequestOnlyAgent:
    """Never corrects; always asks for a new syndrome."""

    def __init__(self, request_action: int):
        self.request_action = request_action

    def act(self, state: EnvState) -> int:
        return self.request_action
