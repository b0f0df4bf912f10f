"""Checkpoint archives.

A checkpoint is a zip file holding

``manifest.json``
    Layer spec, action count, distance, noise model, training-step counter,
    epsilon state, free-form metadata, and an ``arrays`` table mapping each
    array name to ``{"dtype", "shape", "sha256"}``.
``arrays/<group>/<name>.bin``
    Raw C-order little-endian bytes of each array.  Groups are ``online``,
    ``target``, ``optimizer`` and ``replay``.

Entries carry a fixed timestamp so identical contents give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import Adam, NetworkSpec, QNetwork
from .replay import ReplayMemory

FORMAT = "rldecoder-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    online: QNetwork
    target: Optional[QNetwork] = None
    memory: Optional[ReplayMemory] = None
    optimizer_state: Optional[dict[str, np.ndarray]] = None
    meta: dict = field(default_factory=dict)

    @property
    def spec(self) -> NetworkSpec:
        return self.online.spec


def _le(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">" or (a.dtype.byteorder == "=" and not np.little_endian):
        a = a.astype(a.dtype.newbyteorder("<"))
    return a


def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _collect_arrays(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    arrays = {f"online/{k}": v for k, v in ckpt.online.params.items()}
    if ckpt.target is not None:
        arrays.update({f"target/{k}": v for k, v in ckpt.target.params.items()})
    if ckpt.optimizer_state is not None:
        arrays.update({f"optimizer/{k}": v for k, v in ckpt.optimizer_state.items()})
    if ckpt.memory is not None:
        arrays.update({f"replay/{k}": v for k, v in ckpt.memory.state_dict().items()})
    return arrays


def content_hash(ckpt: Checkpoint, groups=("online", "replay")) -> str:
    """SHA-256 over the named array groups (weights + memory by default)."""
    h = hashlib.sha256()
    for name, arr in sorted(_collect_arrays(ckpt).items()):
        if name.split("/", 1)[0] in groups:
            a = _le(arr)
            h.update(name.encode())
            h.update(a.dtype.str.encode())
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
    return h.hexdigest()


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: _le(v) for k, v in sorted(_collect_arrays(ckpt).items())}
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "spec": ckpt.spec.to_dict(),
        "n_actions": ckpt.spec.n_actions,
        "meta": ckpt.meta,
        "arrays": {
            k: {"dtype": v.dtype.str, "shape": list(v.shape), "sha256": hashlib.sha256(v.tobytes()).hexdigest()}
            for k, v in arrays.items()
        },
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode())
        for k, v in arrays.items():
            _write(zf, f"arrays/{k}.bin", v.tobytes())
    return path


def load_checkpoint(path) -> Checkpoint:
    try:
        return _load(path)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} is not a readable checkpoint: {exc}") from exc


def _load(path) -> Checkpoint:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT:
            raise CheckpointError(f"{path} is not a {FORMAT} archive")
        if manifest.get("version") != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
        groups: dict[str, dict[str, np.ndarray]] = {}
        for name, info in manifest["arrays"].items():
            raw = zf.read(f"arrays/{name}.bin")
            if hashlib.sha256(raw).hexdigest() != info["sha256"]:
                raise CheckpointError(f"checksum mismatch for {name}")
            arr = np.frombuffer(raw, dtype=np.dtype(info["dtype"])).reshape(info["shape"]).copy()
            group, key = name.split("/", 1)
            groups.setdefault(group, {})[key] = arr
    spec = NetworkSpec.from_dict(manifest["spec"])
    online = QNetwork(spec, groups["online"])
    target = QNetwork(spec, groups["target"]) if "target" in groups else None
    memory = ReplayMemory.from_state_dict(groups["replay"]) if "replay" in groups else None
    return Checkpoint(online, target, memory, groups.get("optimizer"), manifest["meta"])


def check_compatible(ckpt: Checkpoint, spec: NetworkSpec) -> None:
    if ckpt.spec != spec:
        raise CheckpointError(f"checkpoint spec {ckpt.spec} does not match {spec}")


def optimizer_from_state(params: dict[str, np.ndarray], lr: float, state=None) -> Adam:
    opt = Adam(params, lr)
    if state is not None:
        opt.load_state_dict(state)
    return opt
