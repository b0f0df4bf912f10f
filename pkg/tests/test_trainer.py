import json

import numpy as np
import pytest

from rldecoder.deepq import Checkpoint, NetworkSpec, QNetwork, ReplayMemory
from rldecoder.deepq.checkpoint import content_hash
from rldecoder.evaluation import EvalReport
from rldecoder.noise import NoiseConfig
from rldecoder.trainer import (
    CurriculumConfig,
    FixedParams,
    GridFailure,
    HyperParamPoint,
    RollingMonitor,
    StageConfig,
    StageFailedError,
    TrainRecord,
    desk_grid,
    full_grid,
    network_spec,
    rank_and_promote,
    run_curriculum,
    run_grid,
    train_agent,
    write_stage,
)

TINY_FIXED = FixedParams(
    max_training_steps=200, eval_syndromes=10_000, warmup_steps=20, rolling_window=10, patience=30,
    memory_capacity=300, volume_depth=3, conv=((4, 3, 2),), dense=((8, 0.0),),
)
TINY_STAGE = StageConfig(3, NoiseConfig.uniform("bitflip", 0.05, 3), TINY_FIXED)
TINY_HP = HyperParamPoint(1.0, 0.1, 100, 1e-3, 50)


def test_full_grid_values():
    grid = full_grid()
    assert len(grid) == 144 and len(set(grid)) == 144
    assert {g.initial_epsilon for g in grid} == {1.0, 0.5, 0.25}
    assert {g.final_epsilon for g in grid} == {0.04, 0.02, 0.001}
    assert {g.exploration_steps for g in grid} == {100_000, 200_000}
    assert {g.learning_rate for g in grid} == {1e-4, 5e-5, 1e-5, 5e-6}
    assert {g.target_update_freq for g in grid} == {2500, 5000}


def test_fixed_defaults_and_desk_preset():
    f = FixedParams()
    assert (f.batch_size, f.rolling_window, f.patience, f.max_training_steps) == (32, 1000, 1000, 10**6)
    assert (f.memory_capacity, f.volume_depth, f.gamma) == (50_000, 5, 0.99)
    desk = FixedParams.desk()
    assert desk.max_training_steps <= 200_000
    assert len(desk_grid()) == 8 and len(set(desk_grid())) == 8
    assert FixedParams.from_dict(json.loads(json.dumps(desk.to_dict()))) == desk


def rolling_oracle(stream, window, patience, armed_from=0):
    """Index of the episode that triggers the stop, or None."""
    best = -np.inf
    since = 0
    for i in range(len(stream)):
        lo = max(0, i - window + 1)
        mean = sum(stream[lo : i + 1]) / (i + 1 - lo)
        if i < armed_from:
            continue
        if mean > best:
            best, since = mean, 0
        else:
            since += 1
            if since >= patience:
                return i
    return None


@pytest.mark.parametrize("window,patience", [(1, 5), (10, 20), (50, 7)])
def test_rolling_monitor_plateau(window, patience):
    stream = list(range(1, 80)) + [79] * 200 + [0] * 10
    mon = RollingMonitor(window, patience)
    stop_at = None
    for i, v in enumerate(stream):
        _, _, stop = mon.update(v)
        if stop:
            stop_at = i
            break
    assert stop_at == rolling_oracle(stream, window, patience)
    # the rolling mean stops rising once the window is full of the plateau value
    assert stop_at == 78 + window - 1 + patience


def test_rolling_monitor_unarmed_updates_never_stop():
    mon = RollingMonitor(5, 2)
    stream = [10, 9, 8, 7, 6, 5, 4, 3]
    assert not any(mon.update(v, armed=False)[2] for v in stream)
    _, improved, _ = mon.update(1, armed=True)
    assert improved  # first armed value sets the best
    assert rolling_oracle(stream + [1, 1, 1], 5, 2, armed_from=8) == 10


def fake_checkpoint(tag):
    spec = NetworkSpec((1, 2, 2), 2, conv=(), dense=())
    net = QNetwork.zeros(spec)
    net.params["head/b"][:] = tag
    mem = ReplayMemory((1, 2, 2), 4)
    mem.push(np.zeros((1, 2, 2)), 0, float(tag), np.zeros((1, 2, 2)), False)
    return Checkpoint(net, memory=mem, meta={"tag": tag})


def stub_train(stage, hp, init=None, seed=0, grid_index=0, progress=None):
    """Deterministic stand-in: lifetime depends on the grid point and error rate."""
    p = stage.noise.p_phys
    factor = 1.5 if p < 0.006 else 0.5
    life = factor / p + grid_index * (1 if hp.learning_rate > 2e-5 else -1)
    rec = TrainRecord(hp, int(seed.generate_state(1)[0]), p, grid_index=grid_index)
    rec.training_steps = 100 + grid_index
    rec.evaluation = EvalReport(p, 10, int(10 * life), life, 1.0, 1 / p, 0)
    rec.checkpoint = fake_checkpoint(life)
    rec.checkpoint.meta["init_hash"] = None if init is None else content_hash(init)
    return rec


def failing_train(stage, hp, init=None, seed=0, grid_index=0, progress=None):
    if grid_index % 2:
        raise FloatingPointError("diverged")
    return stub_train(stage, hp, init, seed, grid_index)


def always_failing(stage, hp, init=None, seed=0, grid_index=0, progress=None):
    raise FloatingPointError("diverged")


def test_rank_by_lifetime_then_steps_then_index():
    hp = HyperParamPoint()

    def rec(i, life, steps):
        r = TrainRecord(hp, 0, 0.01, grid_index=i)
        r.training_steps = steps
        r.evaluation = EvalReport(0.01, 1, 1, life, 0.0, 100.0, 0)
        return r

    records = [rec(0, 50.0, 300), rec(1, 80.0, 500), rec(2, 80.0, 400), rec(3, 80.0, 400), GridFailure(4, hp, "x")]
    best, board = rank_and_promote(records)
    assert best.grid_index == 2
    assert [row["grid_index"] for row in board] == [2, 3, 1, 0, 4]
    assert board[-1]["rank"] is None and board[-1]["error"] == "x"
    with pytest.raises(ValueError):
        rank_and_promote([GridFailure(0, hp, "x")])


def test_serial_and_parallel_grids_agree():
    grid = desk_grid()[:4]
    a = run_grid(TINY_STAGE, grid, seed=3, workers=1, train_fn=stub_train)
    b = run_grid(TINY_STAGE, grid, seed=3, workers=2, train_fn=stub_train)
    assert [r.grid_index for r in a] == [0, 1, 2, 3]
    assert [r.summary() for r in a] == [r.summary() for r in b]


def test_grid_failures_are_recorded_until_all_fail():
    grid = desk_grid()[:4]
    out = run_grid(TINY_STAGE, grid, train_fn=failing_train)
    assert [type(r).__name__ for r in out] == ["TrainRecord", "GridFailure", "TrainRecord", "GridFailure"]
    assert "diverged" in out[1].error
    with pytest.raises(StageFailedError):
        run_grid(TINY_STAGE, grid, train_fn=always_failing)
    with pytest.raises(ValueError):
        run_grid(TINY_STAGE, [], train_fn=stub_train)


def test_curriculum_rates():
    c = CurriculumConfig(grid=(HyperParamPoint(),))
    assert c.rates() == [0.001, 0.003, 0.005, 0.007, 0.009, 0.011, 0.013, 0.015]
    with pytest.raises(ValueError):
        CurriculumConfig(p_increment=0)
    with pytest.raises(ValueError):
        CurriculumConfig(p_start=0.02, p_final=0.01)


def test_curriculum_stops_below_baseline_and_promotes(tmp_path):
    config = CurriculumConfig(distance=3, grid=tuple(desk_grid()[:3]), fixed=TINY_FIXED, seed=1)
    results = run_curriculum(config, tmp_path, train_fn=stub_train)
    # stub agents outlive 1/p only below p = 0.006, so the fourth stage (0.007) is the last
    assert [r.error_rate for r in results] == [0.001, 0.003, 0.005, 0.007]
    assert results[-1].best.mean_lifetime < 1 / 0.007
    for prev, cur in zip(results, results[1:]):
        want = content_hash(prev.best.checkpoint)
        assert all(r.checkpoint.meta["init_hash"] == want for r in cur.records)
    assert results[0].records[0].checkpoint.meta["init_hash"] is None
    stage_dir = tmp_path / "stage00_p0.0010"
    assert (stage_dir / "leaderboard.json").exists() and (stage_dir / "training_curves.png").exists()
    for i in range(3):
        assert (stage_dir / str(i) / "checkpoint.zip").exists()
        first = json.loads((stage_dir / str(i) / "record.jsonl").read_text().splitlines()[0])
        assert first["record"] == "summary" and first["grid_index"] == i


def test_write_stage_records_failures(tmp_path):
    from rldecoder.trainer import StageResult

    recs = run_grid(TINY_STAGE, desk_grid()[:2], train_fn=failing_train)
    best, board = rank_and_promote(recs)
    write_stage(tmp_path, "s", StageResult(0.05, best, board, recs))
    assert json.loads((tmp_path / "s" / "1" / "failure.json").read_text())["grid_index"] == 1


def test_network_spec_matches_action_space():
    spec = network_spec(5, NoiseConfig.uniform("depolarizing", 0.01), FixedParams())
    assert spec.input_shape == (7, 11, 11) and spec.n_actions == 51


def test_train_agent_is_deterministic_and_seed_sensitive():
    a = train_agent(TINY_STAGE, TINY_HP, seed=5)
    b = train_agent(TINY_STAGE, TINY_HP, seed=5)
    c = train_agent(TINY_STAGE, TINY_HP, seed=6)
    assert a.jsonl_lines() == b.jsonl_lines()
    assert content_hash(a.checkpoint) == content_hash(b.checkpoint)
    assert content_hash(a.checkpoint) != content_hash(c.checkpoint)
    assert a.training_steps == 200 and a.gradient_steps == 200 - 31  # needs 32 stored tuples
    assert a.target_syncs == 200 // 50
    assert a.evaluation.total_syndromes_seen >= 10_000
    assert a.checkpoint.meta["training_steps"] == 200


def test_no_early_stop_during_exploration():
    fixed = FixedParams(**{**TINY_FIXED.__dict__, "patience": 1, "rolling_window": 1, "eval_syndromes": 0})
    stage = StageConfig(3, TINY_STAGE.noise, fixed)
    rec = train_agent(stage, HyperParamPoint(1.0, 0.1, 10**6, 1e-3, 50), seed=0)
    assert not rec.stopped_early and rec.training_steps == 200
    assert rec.best_episode == -1  # never armed: final weights are kept
    rec = train_agent(stage, HyperParamPoint(1.0, 0.1, 0, 1e-3, 50), seed=0)
    assert rec.stopped_early and rec.training_steps < 200


def test_warm_start_carries_weights_and_memory():
    fixed = FixedParams(**{**TINY_FIXED.__dict__, "max_training_steps": 0, "eval_syndromes": 0})
    stage = StageConfig(3, TINY_STAGE.noise, fixed)
    first = train_agent(TINY_STAGE, TINY_HP, seed=1)
    again = train_agent(stage, TINY_HP, init=first.checkpoint, seed=2)
    assert content_hash(again.checkpoint) == content_hash(first.checkpoint)
