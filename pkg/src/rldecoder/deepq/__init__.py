from .agent import GreedyAgent, LinearEpsilon, bellman_targets, select_action, sync_target, train_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoding import StateEncoder, encode_state
from .network import DEFAULT_CONV, DEFAULT_DENSE, Adam, NetworkSpec, QNetwork, ShapeError
from .replay import Batch, ReplayMemory, replay_push, replay_sample

__all__ = [
    "DEFAULT_CONV", "DEFAULT_DENSE", "ShapeError", "Adam", "Batch", "Checkpoint", "GreedyAgent", "LinearEpsilon", "NetworkSpec", "QNetwork",
    "ReplayMemory", "StateEncoder", "bellman_targets", "encode_state", "load_checkpoint",
    "replay_push", "replay_sample", "save_checkpoint", "select_action", "sync_target", "train_step",
]
