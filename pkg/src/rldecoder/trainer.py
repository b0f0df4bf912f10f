"""Iterative deepQ training with a hyper-parameter grid at each error rate.

One *stage* trains an agent per grid point at a fixed error rate, ranks
them by greedy evaluation, and promotes the winner's weights and replay
memory to seed every agent of the next (higher) error rate.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .deepq.agent import GreedyAgent, LinearEpsilon, select_action, train_step
from .deepq.checkpoint import Checkpoint, check_compatible, content_hash, save_checkpoint
from .deepq.encoding import StateEncoder
from .deepq.network import DEFAULT_CONV, DEFAULT_DENSE, Adam, NetworkSpec, QNetwork
from .deepq.replay import ReplayMemory
from .env import ActionSpace, Environment, exploration_mask
from .evaluation import EvalReport, baseline_lifetime, evaluate_agent
from .noise import NoiseConfig
from .surface import build_code

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParamPoint:
    initial_epsilon: float = 1.0
    final_epsilon: float = 0.02
    exploration_steps: int = 100_000
    learning_rate: float = 1e-5
    target_update_freq: int = 5000

    def label(self) -> str:
        return (
            f"eps{self.initial_epsilon:g}-{self.final_epsilon:g}"
            f"_x{self.exploration_steps}_lr{self.learning_rate:g}_sync{self.target_update_freq}"
        )


GRID_INITIAL_EPS = (1.0, 0.5, 0.25)
GRID_FINAL_EPS = (0.04, 0.02, 0.001)
GRID_EXPLORATION = (100_000, 200_000)
GRID_LR = (10e-5, 5e-5, 1e-5, 0.5e-5)
GRID_SYNC = (2500, 5000)


def full_grid() -> list[HyperParamPoint]:
    """Full 144-point grid, in nested order eps0, eps1, exploration, lr, sync."""
    return [
        HyperParamPoint(e0, e1, x, lr, s)
        for e0, e1, x, lr, s in itertools.product(
            GRID_INITIAL_EPS, GRID_FINAL_EPS, GRID_EXPLORATION, GRID_LR, GRID_SYNC
        )
    ]


DESK_EXPLORATION = 30_000
DESK_TRAINING_STEPS = 200_000


def desk_grid() -> list[HyperParamPoint]:
    """Eight-point sub-grid sized for a single workstation at d=3.

    Ordered so that the strongest settings seen in d=3 trial runs come first;
    the short exploration phase matches ``FixedParams.desk()``.
    """
    return [
        HyperParamPoint(e0, 0.02, DESK_EXPLORATION, lr, s)
        for e0, lr, s in itertools.product((1.0, 0.5), (10e-5, 5e-5), (2500, 5000))
    ]


@dataclass(frozen=True)
class FixedParams:
    batch_size: int = 32
    rolling_window: int = 1000
    patience: int = 1000
    max_training_steps: int = 1_000_000
    memory_capacity: int = 50_000
    volume_depth: int = 5
    gamma: float = 0.99
    warmup_steps: int = 1000
    eval_syndromes: int = 100_000
    max_episode_steps: int = 10**6
    conv: tuple = DEFAULT_CONV
    dense: tuple = DEFAULT_DENSE

    @classmethod
    def desk(cls) -> "FixedParams":
        return cls(max_training_steps=DESK_TRAINING_STEPS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv"] = [list(c) for c in self.conv]
        d["dense"] = [list(c) for c in self.dense]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FixedParams":
        d = dict(d)
        if "conv" in d:
            d["conv"] = tuple(tuple(c) for c in d["conv"])
        if "dense" in d:
            d["dense"] = tuple(tuple(c) for c in d["dense"])
        return cls(**d)


class RollingMonitor:
    """Rolling-average lifetime with patience-based early stopping.

    Improvement means a strict increase over the best rolling average seen
    while the monitor was armed; unarmed updates only feed the window.
    """

    def __init__(self, window: int, patience: int):
        self.values: deque[int] = deque(maxlen=window)
        self.total = 0
        self.patience = patience
        self.best = float("-inf")
        self.since_best = 0

    def update(self, lifetime: int, armed: bool = True) -> tuple[float, bool, bool]:
        """Returns ``(rolling, improved, stop)``."""
        if len(self.values) == self.values.maxlen:
            self.total -= self.values[0]
        self.values.append(lifetime)
        self.total += lifetime
        rolling = self.total / len(self.values)
        if not armed:
            return rolling, False, False
        if rolling > self.best:
            self.best = rolling
            self.since_best = 0
            return rolling, True, False
        self.since_best += 1
        return rolling, False, self.since_best >= self.patience


@dataclass
class TrainRecord:
    hyperparams: HyperParamPoint
    seed: int
    error_rate: float
    lifetimes: list[int] = field(default_factory=list)
    rolling: list[float] = field(default_factory=list)
    training_steps: int = 0
    gradient_steps: int = 0
    target_syncs: int = 0
    best_rolling: float = float("-inf")
    best_episode: int = -1
    stopped_early: bool = False
    evaluation: Optional[EvalReport] = None
    checkpoint: Optional[Checkpoint] = None
    grid_index: int = 0

    @property
    def mean_lifetime(self) -> float:
        if self.evaluation is not None:
            return self.evaluation.mean_lifetime
        return self.best_rolling

    def summary(self) -> dict:
        return {
            "grid_index": self.grid_index,
            "hyperparams": asdict(self.hyperparams),
            "seed": self.seed,
            "error_rate": self.error_rate,
            "episodes": len(self.lifetimes),
            "training_steps": self.training_steps,
            "gradient_steps": self.gradient_steps,
            "target_syncs": self.target_syncs,
            "best_rolling": None if math.isinf(self.best_rolling) else self.best_rolling,
            "best_episode": self.best_episode,
            "stopped_early": self.stopped_early,
            "evaluation": None if self.evaluation is None else self.evaluation.to_dict(),
            "checkpoint_sha256": None if self.checkpoint is None else content_hash(self.checkpoint),
        }

    def jsonl_lines(self) -> list[str]:
        lines = [json.dumps({"record": "summary", **self.summary()}, sort_keys=True)]
        for i, (life, roll) in enumerate(zip(self.lifetimes, self.rolling)):
            lines.append(json.dumps({"record": "episode", "episode": i, "lifetime": life, "rolling": roll}))
        return lines


@dataclass(frozen=True)
class StageConfig:
    distance: int
    noise: NoiseConfig
    fixed: FixedParams = FixedParams()


def network_spec(distance: int, noise: NoiseConfig, fixed: FixedParams) -> NetworkSpec:
    layout = build_code(distance)
    actions = ActionSpace.for_noise(layout, noise)
    g = layout.grid_size
    return NetworkSpec((noise.volume_depth + 2, g, g), actions.n_actions, fixed.conv, fixed.dense)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def train_agent(
    stage: StageConfig,
    hp: HyperParamPoint,
    init: Optional[Checkpoint] = None,
    seed=0,
    grid_index: int = 0,
    progress: Optional[Callable[[int, TrainRecord], None]] = None,
) -> TrainRecord:
    """Train one agent; returns the record holding the best-rolling-average weights."""
    fixed = stage.fixed
    if stage.noise.volume_depth != fixed.volume_depth:
        stage = replace(stage, noise=replace(stage.noise, volume_depth=fixed.volume_depth))
    layout = build_code(stage.distance)
    env_seed, agent_seed, init_seed, eval_seed = _seed_sequence(seed).spawn(4)
    env = Environment(layout, stage.noise, seed=env_seed, max_steps=fixed.max_episode_steps)
    encoder = StateEncoder(layout, fixed.volume_depth, env.actions)
    spec = network_spec(stage.distance, stage.noise, fixed)
    rng = np.random.Generator(np.random.PCG64(agent_seed))

    if init is not None:
        check_compatible(init, spec)
        online = init.online.copy()
        memory = (
            ReplayMemory.from_state_dict(init.memory.state_dict(), fixed.memory_capacity)
            if init.memory is not None
            else ReplayMemory(encoder.shape, fixed.memory_capacity)
        )
    else:
        online = QNetwork.initialize(spec, np.random.Generator(np.random.PCG64(init_seed)))
        memory = ReplayMemory(encoder.shape, fixed.memory_capacity)
    target = online.copy()
    optimizer = Adam(online.params, hp.learning_rate)
    schedule = LinearEpsilon(hp.initial_epsilon, hp.final_epsilon, hp.exploration_steps)

    seed_id = int(np.asarray(_seed_sequence(seed).generate_state(1))[0])
    record = TrainRecord(hp, seed_id, stage.noise.p_phys, grid_index=grid_index)
    best_params = {k: v.copy() for k, v in online.params.items()}
    monitor = RollingMonitor(fixed.rolling_window, fixed.patience)

    state = env.reset() if fixed.max_training_steps > 0 else None
    encoded = encoder.encode(state) if state is not None else None
    step = 0
    while step < fixed.max_training_steps:
        mask = exploration_mask(layout, state, env.actions)
        action = select_action(online, encoded, schedule(step), mask, rng)
        out = env.step(action)
        encoded_next = encoder.encode(out.state)
        memory.push(encoded, action, out.reward, encoded_next, out.terminal)
        step += 1

        if step > fixed.warmup_steps and len(memory) >= fixed.batch_size:
            batch = memory.sample(fixed.batch_size, rng)
            train_step(online, target, batch, optimizer, fixed.gamma, rng)
            record.gradient_steps += 1
        if step % hp.target_update_freq == 0:
            target.load_from(online)
            record.target_syncs += 1

        if out.terminal or out.truncated:
            life = env.rounds_elapsed
            record.lifetimes.append(life)
            # exploration-phase episodes only feed the window
            rolling, improved, stop = monitor.update(life, armed=step >= hp.exploration_steps)
            record.rolling.append(rolling)
            if improved:
                record.best_rolling = rolling
                record.best_episode = len(record.lifetimes) - 1
                for k, v in online.params.items():
                    best_params[k][...] = v
            if progress is not None:
                progress(step, record)
            if stop:
                record.stopped_early = True
                break
            state = env.reset()
            encoded = encoder.encode(state)
        else:
            state, encoded = out.state, encoded_next

    record.training_steps = step
    if record.best_episode < 0:
        # never armed: fall back to the final weights
        best_params = {k: v.copy() for k, v in online.params.items()}
    best = QNetwork(spec, best_params)
    record.checkpoint = Checkpoint(
        online=best,
        target=target,
        memory=memory,
        optimizer_state=optimizer.state_dict(),
        meta={
            "distance": stage.distance,
            "noise": stage.noise.to_dict(),
            "n_actions": spec.n_actions,
            "training_steps": step,
            "epsilon": {**asdict(schedule), "current": schedule(step)},
            "hyperparams": asdict(hp),
            "seed": seed_id,
        },
    )
    if fixed.eval_syndromes > 0:
        eval_env = Environment(layout, stage.noise, seed=eval_seed, max_steps=fixed.max_episode_steps)
        record.evaluation = evaluate_agent(
            GreedyAgent(best, encoder), eval_env, fixed.eval_syndromes, seed=seed_id,
            checkpoint_id=content_hash(record.checkpoint, groups=("online",))[:16],
        )
    return record


class StageFailedError(RuntimeError):
    """Every grid point of a stage raised."""


@dataclass
class GridFailure:
    grid_index: int
    hyperparams: HyperParamPoint
    error: str


def point_seed(seed: int, stage_index: int, grid_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, stage_index, grid_index])


def _run_point(args):
    train_fn, stage, hp, init, seed, index = args
    try:
        return train_fn(stage, hp, init=init, seed=seed, grid_index=index)
    except Exception as exc:  # recorded per point; the stage fails only if every point fails
        log.exception("grid point %d failed", index)
        return GridFailure(index, hp, f"{type(exc).__name__}: {exc}")


def run_grid(
    stage: StageConfig,
    grid: Sequence[HyperParamPoint],
    init: Optional[Checkpoint] = None,
    seed: int = 0,
    stage_index: int = 0,
    workers: int = 1,
    train_fn: Callable[..., TrainRecord] = train_agent,
) -> list:
    """Train one agent per grid point; results are ordered by grid index."""
    if not grid:
        raise ValueError("grid must contain at least one point")
    jobs = [
        (train_fn, stage, hp, init, point_seed(seed, stage_index, i), i) for i, hp in enumerate(grid)
    ]
    if workers <= 1 or len(jobs) == 1:
        results = [_run_point(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    if all(isinstance(r, GridFailure) for r in results):
        raise StageFailedError("every grid point failed: " + "; ".join(r.error for r in results))
    return results


def rank_and_promote(records: Sequence) -> tuple[TrainRecord, list[dict]]:
    """Best record by evaluated mean lifetime; ties go to fewer steps, then lower index."""
    ok = [r for r in records if isinstance(r, TrainRecord)]
    if not ok:
        raise ValueError("no successful training records to rank")
    ranked = sorted(ok, key=lambda r: (-r.mean_lifetime, r.training_steps, r.grid_index))
    leaderboard = [
        {
            "rank": i,
            "grid_index": r.grid_index,
            "mean_lifetime": r.mean_lifetime,
            "standard_error": None if r.evaluation is None else r.evaluation.standard_error,
            "training_steps": r.training_steps,
            "hyperparams": asdict(r.hyperparams),
        }
        for i, r in enumerate(ranked)
    ]
    leaderboard += [
        {"rank": None, "grid_index": f.grid_index, "error": f.error, "hyperparams": asdict(f.hyperparams)}
        for f in records
        if isinstance(f, GridFailure)
    ]
    return ranked[0], leaderboard


@dataclass(frozen=True)
class CurriculumConfig:
    distance: int = 5
    noise_model: str = "bitflip"
    p_start: float = 1e-3
    p_increment: float = 2e-3
    p_final: float = 1.5e-2
    grid: tuple[HyperParamPoint, ...] = tuple(full_grid())
    fixed: FixedParams = FixedParams()
    seed: int = 0

    def __post_init__(self):
        if self.p_increment <= 0:
            raise ValueError("p_increment must be positive")
        if not 0 < self.p_start <= self.p_final <= 1:
            raise ValueError("need 0 < p_start <= p_final <= 1")

    def rates(self) -> list[float]:
        n = int(math.floor((self.p_final - self.p_start) / self.p_increment + 1e-9)) + 1
        return [round(self.p_start + k * self.p_increment, 12) for k in range(n)]

    def stage(self, p: float) -> StageConfig:
        noise = NoiseConfig.uniform(self.noise_model, p, self.fixed.volume_depth)
        return StageConfig(self.distance, noise, self.fixed)


@dataclass
class StageResult:
    error_rate: float
    best: TrainRecord
    leaderboard: list[dict]
    records: list


def write_stage(out_dir: Path, stage_name: str, result: StageResult) -> Path:
    from .plotting import plot_training_curves

    stage_dir = Path(out_dir) / stage_name
    stage_dir.mkdir(parents=True, exist_ok=True)
    for rec in result.records:
        point_dir = stage_dir / str(rec.grid_index)
        point_dir.mkdir(exist_ok=True)
        if isinstance(rec, GridFailure):
            (point_dir / "failure.json").write_text(json.dumps(asdict(rec), indent=2, default=str))
            continue
        save_checkpoint(point_dir / "checkpoint.zip", rec.checkpoint)
        (point_dir / "record.jsonl").write_text("\n".join(rec.jsonl_lines()) + "\n")
    (stage_dir / "leaderboard.json").write_text(json.dumps(result.leaderboard, indent=2, sort_keys=True))
    plot_training_curves(
        [r for r in result.records if isinstance(r, TrainRecord)], stage_dir / "training_curves.png"
    )
    return stage_dir


def run_curriculum(
    config: CurriculumConfig,
    out_dir: Optional[Path] = None,
    workers: int = 1,
    train_fn: Callable[..., TrainRecord] = train_agent,
    init: Optional[Checkpoint] = None,
) -> list[StageResult]:
    """Sweep increasing error rates, promoting the best agent between stages.

    Stops after the last rate, or after the first stage whose best agent
    does not outlive an unprotected qubit (mean lifetime < 1/p).
    """
    results = []
    for k, p in enumerate(config.rates()):
        records = run_grid(config.stage(p), config.grid, init, config.seed, k, workers, train_fn)
        best, leaderboard = rank_and_promote(records)
        result = StageResult(p, best, leaderboard, records)
        results.append(result)
        if out_dir is not None:
            write_stage(out_dir, f"stage{k:02d}_p{p:.4f}", result)
        log.info("stage %d p=%g best lifetime %.1f (baseline %.1f)", k, p, best.mean_lifetime, 1 / p)
        if best.mean_lifetime < baseline_lifetime(p):
            break
        init = best.checkpoint
    return results
