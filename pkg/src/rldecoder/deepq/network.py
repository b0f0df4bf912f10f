"""Convolutional dueling q-network in plain numpy.

Layer spec follows the ``[[filters, width, stride], ..., [units, dropout], ...]``
notation: valid (unpadded) ReLU convolutions, then ReLU dense layers with
inverted dropout, then a linear head emitting one state value plus one
advantage per action, combined as ``Q = V + A - mean(A)``.

Activations are kept channels-last internally; inputs are ``(N, C, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

DEFAULT_CONV = ((64, 3, 2), (32, 2, 1), (32, 2, 1))
DEFAULT_DENSE = ((512, 0.2),)


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    n_actions: int
    conv: tuple[tuple[int, int, int], ...] = DEFAULT_CONV
    dense: tuple[tuple[int, float], ...] = DEFAULT_DENSE

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv", tuple(tuple(int(v) for v in c) for c in self.conv))
        object.__setattr__(self, "dense", tuple((int(u), float(p)) for u, p in self.dense))
        h = self.input_shape[1:]
        for filters, width, stride in self.conv:
            h = tuple((s - width) // stride + 1 for s in h)
            if min(h) < 1:
                raise ShapeError(f"convolution stack collapses input {self.input_shape}")

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """Output (H, W, C) of each conv layer."""
        c, hh, ww = self.input_shape
        shapes = []
        for filters, width, stride in self.conv:
            hh = (hh - width) // stride + 1
            ww = (ww - width) // stride + 1
            shapes.append((hh, ww, filters))
        return shapes

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c_in = self.input_shape[0]
        for i, (filters, width, _) in enumerate(self.conv):
            shapes[f"conv{i}/w"] = (width * width * c_in, filters)
            shapes[f"conv{i}/b"] = (filters,)
            c_in = filters
        if self.conv:
            h, w, c = self.conv_shapes()[-1]
            flat = h * w * c
        else:
            flat = int(np.prod(self.input_shape))
        for i, (units, _) in enumerate(self.dense):
            shapes[f"dense{i}/w"] = (flat, units)
            shapes[f"dense{i}/b"] = (units,)
            flat = units
        shapes["head/w"] = (flat, self.n_actions + 1)
        shapes["head/b"] = (self.n_actions + 1,)
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: [list(v) for v in d[k]] if k in ("conv", "dense") else d[k] for k in d}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            input_shape=tuple(d["input_shape"]),
            n_actions=int(d["n_actions"]),
            conv=tuple(tuple(c) for c in d["conv"]),
            dense=tuple(tuple(x) for x in d["dense"]),
        )


@dataclass
class _Cache:
    layers: list = field(default_factory=list)


class QNetwork:
    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray]):
        expected = spec.param_shapes()
        if set(params) != set(expected):
            raise ShapeError(f"parameter names {sorted(params)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.spec = spec
        self.params = {name: params[name] for name in expected}
        self.dtype = next(iter(self.params.values())).dtype

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32) -> "QNetwork":
        """Fan-in scaled uniform weights (``limit = sqrt(6 / fan_in)``), zero biases."""
        params = {}
        for name, shape in spec.param_shapes().items():
            if name.endswith("/w"):
                limit = np.sqrt(6.0 / shape[0])
                params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        return cls(spec, params)

    @classmethod
    def zeros(cls, spec: NetworkSpec, dtype=np.float32) -> "QNetwork":
        return cls(spec, {n: np.zeros(s, dtype) for n, s in spec.param_shapes().items()})

    def copy(self) -> "QNetwork":
        return QNetwork(self.spec, {k: v.copy() for k, v in self.params.items()})

    def load_from(self, other: "QNetwork") -> None:
        if other.spec != self.spec:
            raise ShapeError("cannot copy weights between networks with different specs")
        for k, v in other.params.items():
            self.params[k][...] = v

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode q-values; dropout disabled."""
        q, _ = self.forward_train(x, training=False)
        return q

    def forward_train(
        self, x: np.ndarray, training: bool = True, rng: Optional[np.random.Generator] = None
    ) -> tuple[np.ndarray, _Cache]:
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match {self.spec.input_shape}")
        cache = _Cache()
        a = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=self.dtype)
        n = a.shape[0]
        for i, (filters, width, stride) in enumerate(self.spec.conv):
            cols, oh, ow = _im2col(a, width, stride)
            z = cols @ self.params[f"conv{i}/w"] + self.params[f"conv{i}/b"]
            cache.layers.append(("conv", i, a.shape, cols, z))
            a = np.maximum(z, 0).reshape(n, oh, ow, filters)
        a = a.reshape(n, -1)
        for i, (units, rate) in enumerate(self.spec.dense):
            z = a @ self.params[f"dense{i}/w"] + self.params[f"dense{i}/b"]
            h = np.maximum(z, 0)
            mask = None
            if training and rate > 0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng")
                mask = (rng.random(h.shape) >= rate).astype(self.dtype) / self.dtype.type(1 - rate)
                h = h * mask
            cache.layers.append(("dense", i, a, z, mask))
            a = h
        y = a @ self.params["head/w"] + self.params["head/b"]
        cache.layers.append(("head", 0, a))
        adv = y[:, 1:]
        q = y[:, :1] + adv - adv.mean(axis=1, keepdims=True)
        return q, cache

    def backward(self, cache: _Cache, dq: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dq * q)`` with respect to every parameter."""
        grads: dict[str, np.ndarray] = {}
        dq = dq.astype(self.dtype, copy=False)
        dy = np.empty((dq.shape[0], dq.shape[1] + 1), dtype=self.dtype)
        dy[:, 0] = dq.sum(axis=1)
        dy[:, 1:] = dq - dq.sum(axis=1, keepdims=True) / dq.shape[1]

        _, _, a = cache.layers[-1]
        grads["head/w"] = a.T @ dy
        grads["head/b"] = dy.sum(axis=0)
        da = dy @ self.params["head/w"].T

        for kind, i, *rest in reversed(cache.layers[:-1]):
            if kind == "dense":
                a_in, z, mask = rest
                if mask is not None:
                    da = da * mask
                dz = da * (z > 0)
                grads[f"dense{i}/w"] = a_in.T @ dz
                grads[f"dense{i}/b"] = dz.sum(axis=0)
                da = dz @ self.params[f"dense{i}/w"].T
            else:
                in_shape, cols, z = rest
                _, width, stride = self.spec.conv[i]
                dz = da.reshape(z.shape) * (z > 0)
                grads[f"conv{i}/w"] = cols.T @ dz
                grads[f"conv{i}/b"] = dz.sum(axis=0)
                if i > 0:
                    dcols = dz @ self.params[f"conv{i}/w"].T
                    da = _col2im(dcols, in_shape, width, stride)
        return {k: grads[k] for k in self.params}


def _im2col(a: np.ndarray, width: int, stride: int) -> tuple[np.ndarray, int, int]:
    n, h, w, c = a.shape
    oh = (h - width) // stride + 1
    ow = (w - width) // stride + 1
    patches = [
        a[:, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride, :]
        for i in range(width)
        for j in range(width)
    ]
    cols = np.stack(patches, axis=3).reshape(n * oh * ow, width * width * c)
    return cols, oh, ow


def _col2im(dcols: np.ndarray, in_shape, width: int, stride: int) -> np.ndarray:
    n, h, w, c = in_shape
    oh = (h - width) // stride + 1
    ow = (w - width) // stride + 1
    dcols = dcols.reshape(n, oh, ow, width * width, c)
    out = np.zeros(in_shape, dtype=dcols.dtype)
    k = 0
    for i in range(width):
        for j in range(width):
            out[:, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride, :] += dcols[:, :, :, k, :]
            k += 1
    return out


class Adam:
    """Adaptive-moment optimizer updating a parameter dict in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            params[k] -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype, copy=False)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": v for k, v in self.m.items()}
        out.update({f"v/{k}": v for k, v in self.v.items()})
        out["t"] = np.array([self.t], dtype=np.int64)
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k in self.m:
            self.m[k][...] = state[f"m/{k}"]
            self.v[k][...] = state[f"v/{k}"]
        self.t = int(state["t"][0])
