"""Trainable layers, sequential and two-branch networks, loss, gradient checks.

Every layer follows the same protocol: forward(x) caches what backward needs,
backward(dy) returns dx and fills per-parameter gradients. Shapes are batched,
channel-last: images (N, H, W, C), features (N, D), predictions (N, C).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import BadMagicError, DataError, ShapeError, StaleCacheError, TruncatedPayloadError, VersionMismatchError
from .tensor import DTYPE

PRED_CLAMP_FLOOR = 1e-7


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=DTYPE) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


class Conv:
    """3x3-style convolution, stride 1, `same` zero padding."""

    kind = "conv"

    def __init__(self, k: int, cin: int, cout: int, rng: np.random.Generator | None = None):
        if k % 2 == 0:
            raise ShapeError(f"Conv kernel must be odd for same padding, got {k}")
        self.k, self.cin, self.cout = k, cin, cout
        fan = k * k
        if rng is None:
            self.weights = np.zeros((k, k, cin, cout), dtype=DTYPE)
        else:
            self.weights = glorot_uniform(rng, (k, k, cin, cout), fan * cin, fan * cout)
        self.bias = np.zeros(cout, dtype=self.weights.dtype)
        self._cache = None

    def config(self):
        return (self.k, self.cin, self.cout)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[3] != self.cin:
            raise ShapeError(f"Conv({self.cin}->{self.cout}) got input {x.shape}")
        pad = self.k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        cols, h_out, w_out = tensor.im2col(xp, self.k, 1)
        out = cols @ self.weights.reshape(-1, self.cout) + self.bias
        self._cache = (cols, xp.shape, x.shape)
        return out.reshape(x.shape[0], h_out, w_out, self.cout)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("Conv.backward before forward")
        cols, padded_shape, in_shape = self._cache
        self._cache = None
        n, h, w, _ = in_shape
        dy_col = dy.reshape(-1, self.cout)
        self.grad_weights = (cols.T @ dy_col).reshape(self.weights.shape)
        self.grad_bias = dy_col.sum(axis=0)
        dcols = dy_col @ self.weights.reshape(-1, self.cout).T
        dxp = tensor.col2im_add(dcols, padded_shape, self.k, 1)
        pad = self.k // 2
        return dxp[:, pad : pad + h, pad : pad + w, :]

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]

    def astype(self, dtype):
        clone = Conv(self.k, self.cin, self.cout)
        clone.weights = self.weights.astype(dtype)
        clone.bias = self.bias.astype(dtype)
        return clone


class MaxPool2:
    kind = "maxpool2"

    def __init__(self):
        self._cache = None

    def config(self):
        return ()

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, idx = tensor.maxpool2(x)
        self._cache = (idx, x.shape)
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("MaxPool2.backward before forward")
        idx, in_shape = self._cache
        self._cache = None
        return tensor.maxpool2_scatter(dy, idx, in_shape)

    def parameters(self):
        return []

    def gradients(self):
        return []

    def astype(self, dtype):
        return MaxPool2()


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._cache = None

    def config(self):
        return ()

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("Flatten.backward before forward")
        shape = self._cache
        self._cache = None
        return dy.reshape(shape)

    def parameters(self):
        return []

    def gradients(self):
        return []

    def astype(self, dtype):
        return Flatten()


class Dense:
    kind = "dense"

    def __init__(self, nin: int, nout: int, rng: np.random.Generator | None = None):
        self.nin, self.nout = nin, nout
        if rng is None:
            self.weights = np.zeros((nin, nout), dtype=DTYPE)
        else:
            self.weights = glorot_uniform(rng, (nin, nout), nin, nout)
        self.bias = np.zeros(nout, dtype=self.weights.dtype)
        self._cache = None

    def config(self):
        return (self.nin, self.nout)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.nin:
            raise ShapeError(f"Dense({self.nin}->{self.nout}) got input {x.shape}")
        self._cache = x
        return tensor.matmul(x, self.weights) + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("Dense.backward before forward")
        x = self._cache
        self._cache = None
        self.grad_weights = tensor.matmul(x.T, dy)
        self.grad_bias = dy.sum(axis=0)
        return tensor.matmul(dy, self.weights.T)

    def parameters(self):
        return [self.weights, self.bias]

    def gradients(self):
        return [self.grad_weights, self.grad_bias]

    def astype(self, dtype):
        clone = Dense(self.nin, self.nout)
        clone.weights = self.weights.astype(dtype)
        clone.bias = self.bias.astype(dtype)
        return clone


class ReLU:
    kind = "relu"

    def __init__(self):
        self._cache = None

    def config(self):
        return ()

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x
        return tensor.relu(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("ReLU.backward before forward")
        x = self._cache
        self._cache = None
        return dy * tensor.relu_grad(x)

    def parameters(self):
        return []

    def gradients(self):
        return []

    def astype(self, dtype):
        return ReLU()


class Softmax:
    kind = "softmax"

    def __init__(self):
        self._cache = None

    def config(self):
        return ()

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=-1, keepdims=True)
        self._cache = out
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StaleCacheError("Softmax.backward before forward")
        s = self._cache
        self._cache = None
        return s * (dy - (dy * s).sum(axis=-1, keepdims=True))

    def parameters(self):
        return []

    def gradients(self):
        return []

    def astype(self, dtype):
        return Softmax()


_LAYER_KINDS = {cls.kind: cls for cls in (Conv, MaxPool2, Flatten, Dense, ReLU, Softmax)}


def _run_forward(layers, x):
    for layer in layers:
        x = layer.forward(x)
    return x


def _run_backward(layers, dy):
    for layer in reversed(layers):
        dy = layer.backward(dy)
    return dy


class Network:
    """Single-input sequential classifier ending in Softmax."""

    n_inputs = 1

    def __init__(self, layers: list):
        self.layers = layers

    def forward_batch(self, inputs) -> np.ndarray:
        inputs = _as_input_list(inputs)
        if len(inputs) != 1:
            raise ShapeError(f"this network takes 1 input, got {len(inputs)}")
        return _run_forward(self.layers, inputs[0])

    def backward(self, dpred: np.ndarray) -> None:
        _run_backward(self.layers, dpred)

    def all_layers(self):
        return list(self.layers)

    def astype(self, dtype) -> "Network":
        return Network([l.astype(dtype) for l in self.layers])


class TwoBranchNetwork:
    """Two convolutional feature branches concatenated into a shared head."""

    n_inputs = 2

    def __init__(self, branch_a: list, branch_b: list, head: list):
        self.branch_a = branch_a
        self.branch_b = branch_b
        self.head = head
        self._split = None

    def forward_batch(self, inputs) -> np.ndarray:
        inputs = _as_input_list(inputs)
        if len(inputs) != 2:
            raise ShapeError(f"this network takes 2 inputs, got {len(inputs)}")
        fa = _run_forward(self.branch_a, inputs[0])
        fb = _run_forward(self.branch_b, inputs[1])
        self._split = fa.shape[1]
        return _run_forward(self.head, np.concatenate([fa, fb], axis=1))

    def backward(self, dpred: np.ndarray) -> None:
        if self._split is None:
            raise StaleCacheError("TwoBranchNetwork.backward before forward")
        dfeat = _run_backward(self.head, dpred)
        split = self._split
        self._split = None
        _run_backward(self.branch_a, dfeat[:, :split])
        _run_backward(self.branch_b, dfeat[:, split:])

    def all_layers(self):
        return list(self.branch_a) + list(self.branch_b) + list(self.head)

    def astype(self, dtype) -> "TwoBranchNetwork":
        return TwoBranchNetwork(
            [l.astype(dtype) for l in self.branch_a],
            [l.astype(dtype) for l in self.branch_b],
            [l.astype(dtype) for l in self.head],
        )


def _as_input_list(inputs):
    if isinstance(inputs, np.ndarray):
        return [inputs]
    return list(inputs)


def parameters(net) -> list[np.ndarray]:
    out = []
    for layer in net.all_layers():
        out.extend(layer.parameters())
    return out


def gradients(net) -> list[np.ndarray]:
    out = []
    for layer in net.all_layers():
        out.extend(layer.gradients())
    return out


def n_params(net) -> int:
    return sum(p.size for p in parameters(net))


def forward(net, inputs) -> np.ndarray:
    """Run one unbatched sample through the network, returning a length-C vector."""
    inputs = _as_input_list(inputs)
    if len(inputs) != net.n_inputs:
        raise ShapeError(f"network takes {net.n_inputs} input(s), got {len(inputs)}")
    return net.forward_batch([x[None] for x in inputs])[0]


def _validate_one_hot(truth: np.ndarray) -> None:
    ok = np.all((truth == 0.0) | (truth == 1.0)) and np.all(truth.sum(axis=-1) == 1.0)
    if not ok:
        raise ValueError("truth must be one-hot (a single 1.0 per row, rest 0.0)")


def cross_entropy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean cross-entropy; predictions clamped to [1e-7, 1] before the log."""
    pred = np.atleast_2d(np.asarray(pred))
    truth = np.atleast_2d(np.asarray(truth))
    if pred.shape != truth.shape:
        raise ShapeError(f"pred {pred.shape} vs truth {truth.shape}")
    _validate_one_hot(truth)
    clamped = np.clip(pred, PRED_CLAMP_FLOOR, 1.0)
    return float(-(truth * np.log(clamped)).sum(axis=-1).mean())


def cross_entropy_grad(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """d(mean cross-entropy)/d(pred); zero inside the clamp's flat region."""
    pred = np.atleast_2d(np.asarray(pred))
    truth = np.atleast_2d(np.asarray(truth))
    clamped = np.clip(pred, PRED_CLAMP_FLOOR, 1.0)
    grad = np.where(pred >= PRED_CLAMP_FLOOR, -truth / clamped, 0.0)
    return (grad / pred.shape[0]).astype(pred.dtype)


@dataclass
class GradientCheckReport:
    per_layer: dict = field(default_factory=dict)  # layer label -> max relative error
    max_rel_error: float = 0.0
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        lines = [f"gradient check: max rel err {self.max_rel_error:.3e} "
                 f"({'PASS' if self.passed else 'FAIL'} at {self.tolerance:g})"]
        for name, err in self.per_layer.items():
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def gradient_check(net, inputs, truth, epsilon: float = 1e-3, tolerance: float = 1e-4) -> GradientCheckReport:
    """Compare analytic parameter gradients against central finite differences.

    The whole computation is promoted to float64; the net must stay small
    (every parameter is perturbed twice).
    """
    if n_params(net) > 10_000:
        raise ValueError(f"gradient_check limited to 1e4 params, net has {n_params(net)}")
    net64 = net.astype(np.float64)
    inputs64 = [np.asarray(x, dtype=np.float64)[None] for x in _as_input_list(inputs)]
    truth64 = np.asarray(truth, dtype=np.float64)[None]

    pred = net64.forward_batch(inputs64)
    net64.backward(cross_entropy_grad(pred, truth64))

    def loss() -> float:
        return cross_entropy(net64.forward_batch(inputs64), truth64)

    report = GradientCheckReport(tolerance=tolerance)
    for li, layer in enumerate(net64.all_layers()):
        grads = layer.gradients()
        if not grads:
            continue
        worst = 0.0
        for param, analytic in zip(layer.parameters(), grads):
            flat = param.reshape(-1)
            fd = np.empty_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss()
                flat[i] = orig - epsilon
                down = loss()
                flat[i] = orig
                fd[i] = (up - down) / (2.0 * epsilon)
            a = analytic.reshape(-1)
            rel = np.abs(a - fd) / np.maximum(np.abs(a) + np.abs(fd), 1e-6)
            worst = max(worst, float(rel.max()))
        report.per_layer[f"{li}:{type(layer).__name__}"] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report


# --- checkpoint container ------------------------------------------------
# Binary layout (little-endian): magic "FNET", u16 version=1, u16 reserved,
# u8 net type (0 sequential, 1 two-branch), then one section per layer list.
# Section: u32 layer count; per layer: u8 kind tag, u8 #config, u32 config
# values, u8 #params; per param: u8 ndim, u32 extents, float32 payload.

NET_MAGIC = b"FNET"
NET_VERSION = 1
_KIND_TAGS = {"conv": 1, "maxpool2": 2, "flatten": 3, "dense": 4, "relu": 5, "softmax": 6}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def _pack_section(layers) -> bytes:
    chunks = [struct.pack("<I", len(layers))]
    for layer in layers:
        cfg = layer.config()
        params = layer.parameters()
        chunks.append(struct.pack("<BB", _KIND_TAGS[layer.kind], len(cfg)))
        chunks.append(struct.pack(f"<{len(cfg)}I", *cfg) if cfg else b"")
        chunks.append(struct.pack("<B", len(params)))
        for p in params:
            arr = np.ascontiguousarray(p, dtype=np.float32)
            chunks.append(struct.pack("<B", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise TruncatedPayloadError(f"{self.path}: truncated (wanted {n} bytes at offset {self.off})")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_section(r: _Reader) -> list:
    (count,) = r.unpack("<I")
    layers = []
    for _ in range(count):
        tag, ncfg = r.unpack("<BB")
        if tag not in _TAG_KINDS:
            raise DataError(f"{r.path}: unknown layer kind tag {tag}")
        cfg = r.unpack(f"<{ncfg}I") if ncfg else ()
        layer = _LAYER_KINDS[_TAG_KINDS[tag]](*cfg)
        (nparams,) = r.unpack("<B")
        params = []
        for _ in range(nparams):
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            n = int(np.prod(shape)) if shape else 1
            params.append(np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).copy())
        own = layer.parameters()
        if len(own) != len(params):
            raise DataError(f"{r.path}: layer {layer.kind} expects {len(own)} params, file has {len(params)}")
        for dst, src in zip(own, params):
            if dst.shape != src.shape:
                raise DataError(f"{r.path}: param shape {src.shape} != expected {dst.shape}")
            dst[...] = src
        layers.append(layer)
    return layers


def save_network(path, net) -> None:
    sections = [net.layers] if isinstance(net, Network) else [net.branch_a, net.branch_b, net.head]
    net_type = 0 if isinstance(net, Network) else 1
    blob = b"".join([
        NET_MAGIC,
        struct.pack("<HHB", NET_VERSION, 0, net_type),
        *[_pack_section(s) for s in sections],
    ])
    with open(path, "wb") as fh:
        fh.write(blob)


def load_network(path):
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, str(path))
    if r.take(4) != NET_MAGIC:
        raise BadMagicError(f"{path}: bad magic, not a network checkpoint")
    version, _, net_type = r.unpack("<HHB")
    if version != NET_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, expected {NET_VERSION}")
    if net_type == 0:
        return Network(_unpack_section(r))
    if net_type == 1:
        return TwoBranchNetwork(_unpack_section(r), _unpack_section(r), _unpack_section(r))
    raise DataError(f"{path}: unknown network type {net_type}")
