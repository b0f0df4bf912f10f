"""Command-line entry point: ``rldecoder <subcommand> [flags]``.

Exit codes
----------
0  success
1  unexpected internal error
2  usage or configuration error
3  referee-check found uncorrected low-weight errors
4  checkpoint missing, corrupt or incompatible with the requested code
5  training failed (every grid point raised, or the loss diverged)
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfg
from .deepq.agent import GreedyAgent, NonFiniteLossError
from .deepq.checkpoint import CheckpointError, check_compatible, content_hash, load_checkpoint, save_checkpoint
from .deepq.encoding import StateEncoder
from .env import Environment
from .evaluation import RequestOnlyAgent, evaluate_agent
from .noise import NOISE_MODELS, NoiseConfig
from .plotting import plot_lifetimes, plot_training_curves
from .referee import referee_verdict
from .surface import PauliFrame, build_code
from .trainer import (
    GridFailure,
    StageFailedError,
    network_spec,
    point_seed,
    run_curriculum,
    train_agent,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_REFEREE = 3
EXIT_CHECKPOINT = 4
EXIT_TRAINING = 5

CSV_FIELDS = ("p", "mean_lifetime", "stderr", "baseline")

log = logging.getLogger("rldecoder")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--distance", type=int, help="code distance (odd, >= 3)")
    g.add_argument("--noise", choices=NOISE_MODELS, help="noise model")
    g.add_argument("--p", type=float, help="error rate used for both data and measurement noise")
    g.add_argument("--depth", type=int, help="syndrome volume depth")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--config", type=Path, help="JSON run configuration")
    g.add_argument("--out", type=Path, default=None, help="output directory")
    g.add_argument("--preset", choices=cfg.PRESETS, help="default configuration (desk: d=3 sub-grid)")
    g.add_argument("--workers", type=int, help="worker processes for grid points")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rldecoder", description="deepQ surface-code decoding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one grid point at one error rate")
    _common(p)
    p.add_argument("--grid-index", type=int, default=0, help="which point of the configured grid")
    p.add_argument("--steps", type=int, help="override the training-step cap")
    p.add_argument("--eval-syndromes", type=int, help="evaluation budget after training")
    p.add_argument("--init", type=Path, help="checkpoint to warm-start from")

    p = sub.add_parser("sweep", help="curriculum over increasing error rates")
    _common(p)
    p.add_argument("--steps", type=int, help="override the training-step cap")
    p.add_argument("--eval-syndromes", type=int, help="ranking evaluation budget per grid point")
    p.add_argument("--grid-size", type=int, help="use only the first N grid points")

    p = sub.add_parser("evaluate", help="lifetime of a checkpoint across error rates")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path, help="checkpoint archive")
    src.add_argument("--request-only", action="store_true", help="evaluate the never-correcting agent")
    p.add_argument("--rates", type=float, nargs="+", help="error rates (default: --p or config list)")
    p.add_argument("--min-syndromes", type=int, help="syndromes per rate (>= 1e4)")

    p = sub.add_parser("referee-check", help="exhaustive low-weight sweep of the referee")
    _common(p)
    p.add_argument("--max-weight", type=int, help="default: (d - 1) // 2")

    p = sub.add_parser("dump-layout", help="print the code layout as JSON")
    _common(p)
    return parser


def _overrides(args) -> dict:
    over: dict = {}
    if args.distance is not None:
        over["distance"] = args.distance
    if args.noise is not None:
        cfg.set_path(over, "noise.model", args.noise)
    if args.p is not None:
        cfg.set_path(over, "noise.p_phys", args.p)
        cfg.set_path(over, "noise.p_meas", args.p)
    if args.depth is not None:
        cfg.set_path(over, "noise.volume_depth", args.depth)
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    if getattr(args, "steps", None) is not None:
        cfg.set_path(over, "fixed.max_training_steps", args.steps)
    if getattr(args, "eval_syndromes", None) is not None:
        cfg.set_path(over, "fixed.eval_syndromes", args.eval_syndromes)
    if getattr(args, "min_syndromes", None) is not None:
        cfg.set_path(over, "evaluation.min_syndromes", args.min_syndromes)
    return over


def _out_dir(args, default: str) -> Path:
    out = args.out if args.out is not None else Path("runs") / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path: Path, rows) -> Path:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in CSV_FIELDS})
    path.write_text(buf.getvalue())
    return path


def _row(report) -> dict:
    return {
        "p": report.error_rate,
        "mean_lifetime": report.mean_lifetime,
        "stderr": report.standard_error,
        "baseline": report.baseline_lifetime,
    }


def cmd_train(args, doc) -> int:
    grid = cfg.grid(doc)
    if not 0 <= args.grid_index < len(grid):
        raise cfg.ConfigError(f"--grid-index {args.grid_index} outside the {len(grid)}-point grid")
    stage = cfg.stage_config(doc)
    init = None
    if args.init is not None:
        init = load_checkpoint(args.init)
    out = _out_dir(args, "train")
    (out / "config.json").write_text(cfg.dumps(doc) + "\n")
    seed = point_seed(int(doc["seed"]), 0, args.grid_index)
    rec = train_agent(stage, grid[args.grid_index], init=init, seed=seed, grid_index=args.grid_index)
    save_checkpoint(out / "checkpoint.zip", rec.checkpoint)
    (out / "record.jsonl").write_text("\n".join(rec.jsonl_lines()) + "\n")
    plot_training_curves([rec], out / "training_curves.png")
    if rec.evaluation is not None:
        (out / "evaluation.jsonl").write_text(json.dumps(rec.evaluation.to_dict(), sort_keys=True) + "\n")
        write_csv(out / "lifetimes.csv", [_row(rec.evaluation)])
    print(json.dumps(rec.summary(), sort_keys=True))
    return EXIT_OK


def cmd_sweep(args, doc) -> int:
    if args.grid_size is not None:
        if args.grid_size < 1:
            raise cfg.ConfigError("--grid-size must be >= 1")
        doc["grid"] = doc["grid"][: args.grid_size]
    curriculum = cfg.curriculum_config(doc)
    out = _out_dir(args, "sweep")
    (out / "config.json").write_text(cfg.dumps(doc) + "\n")
    results = run_curriculum(curriculum, out, workers=int(doc["workers"]))
    rows = []
    with open(out / "sweep.jsonl", "w") as fh:
        for k, res in enumerate(results):
            best = res.best
            line = {
                "stage": k,
                "p": res.error_rate,
                "best_grid_index": best.grid_index,
                "mean_lifetime": best.mean_lifetime,
                "baseline": 1.0 / res.error_rate,
                "failures": sum(isinstance(r, GridFailure) for r in res.records),
                "checkpoint_sha256": content_hash(best.checkpoint),
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")
            stderr = best.evaluation.standard_error if best.evaluation is not None else float("nan")
            rows.append({"p": res.error_rate, "mean_lifetime": best.mean_lifetime, "stderr": stderr,
                         "baseline": 1.0 / res.error_rate})
    write_csv(out / "lifetimes.csv", rows)
    plot_lifetimes(rows, out / "lifetimes.png", title=f"d={curriculum.distance} {curriculum.noise_model}")
    print(json.dumps({"stages": len(results), "out": str(out)}))
    return EXIT_OK


def cmd_evaluate(args, doc) -> int:
    rates = args.rates or ([args.p] if args.p is not None else doc["evaluation"]["rates"])
    min_syndromes = int(doc["evaluation"]["min_syndromes"])
    seed = int(doc["seed"])
    model = doc["noise"]["model"]
    depth = int(doc["noise"]["volume_depth"])
    distance = int(doc["distance"])
    ckpt = None
    if args.checkpoint is not None:
        ckpt = load_checkpoint(args.checkpoint)
        meta = ckpt.meta
        # the checkpoint fixes the code and action space unless flags say otherwise
        if args.distance is None and "distance" in meta:
            distance = int(meta["distance"])
        if args.noise is None and "noise" in meta:
            model = meta["noise"]["model"]
        if args.depth is None and "noise" in meta:
            depth = int(meta["noise"]["volume_depth"])
    layout = build_code(distance)
    out = _out_dir(args, "evaluate")
    (out / "config.json").write_text(cfg.dumps(doc) + "\n")
    rows = []
    with open(out / "evaluation.jsonl", "w") as fh:
        for k, p in enumerate(rates):
            noise = NoiseConfig(model, p, p, depth)
            env = Environment(layout, noise, seed=np.random.SeedSequence([seed, k]),
                              max_steps=int(doc["fixed"]["max_episode_steps"]))
            if ckpt is None:
                agent, cid = RequestOnlyAgent(env.actions.request), "request-only"
            else:
                layers = replace(cfg.fixed_params(doc), conv=ckpt.spec.conv, dense=ckpt.spec.dense)
                check_compatible(ckpt, network_spec(distance, noise, layers))
                agent = GreedyAgent(ckpt.online, StateEncoder(layout, depth, env.actions))
                cid = content_hash(ckpt, groups=("online",))[:16]
            report = evaluate_agent(agent, env, min_syndromes, seed=seed, checkpoint_id=cid)
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
            rows.append(_row(report))
            log.info("p=%g lifetime %.1f +- %.1f (baseline %.1f)", p, report.mean_lifetime,
                     report.standard_error, report.baseline_lifetime)
    write_csv(out / "lifetimes.csv", rows)
    plot_lifetimes(rows, out / "lifetimes.png", title=f"d={distance} {model}")
    print(json.dumps({"rates": len(rates), "out": str(out)}))
    return EXIT_OK


def _low_weight_frames(n, max_weight):
    import itertools

    for w in range(max_weight + 1):
        for qubits in itertools.combinations(range(n), w):
            for paulis in itertools.product("XYZ", repeat=w):
                x = [q for q, s in zip(qubits, paulis) if s in "XY"]
                z = [q for q, s in zip(qubits, paulis) if s in "ZY"]
                yield PauliFrame.from_sets(n, x, z)


def cmd_referee_check(args, doc) -> int:
    d = int(doc["distance"])
    max_weight = args.max_weight if args.max_weight is not None else (d - 1) // 2
    layout = build_code(d)
    checked = failed = 0
    for frame in _low_weight_frames(layout.n_qubits, max_weight):
        checked += 1
        failed += not referee_verdict(layout, frame)
    result = {"distance": d, "max_weight": max_weight, "checked": checked, "failed": failed,
              "status": "pass" if failed == 0 else "fail"}
    print(json.dumps(result))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "referee_check.json").write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK if failed == 0 else EXIT_REFEREE


def cmd_dump_layout(args, doc) -> int:
    text = build_code(int(doc["distance"])).to_json()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"layout_d{doc['distance']}.json").write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "referee-check": cmd_referee_check,
    "dump-layout": cmd_dump_layout,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        doc = cfg.resolve(args.preset, args.config, _overrides(args))
        return COMMANDS[args.command](args, doc)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NonFiniteLossError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except StageFailedError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
