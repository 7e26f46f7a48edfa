"""
Small numpy neural networks with reverse-mode automatic differentiation.

Every differentiable operation is a :class:`Function` subclass. ``apply``
runs the forward pass on raw arrays and links the result to its inputs, so
``loss.backward()`` can walk the graph in reverse topological order and
accumulate ``grad`` on every parameter.

Example::

    net = AskNet(NetConfig(), seed=0)
    logits, value = net.forward(np.zeros((12, 12, 4)))
    loss = (logits * logits).sum() + value.sum()
    net.zero_grad()
    loss.backward()
"""

import json
import logging
import struct
import threading
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CheckpointError, UsageError

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"W2A1"
CHECKPOINT_VERSION = 1
#: Logit given to masked-out categories.
MASK_FILL = -1e9

_grad_mode = threading.local()


def grad_enabled():
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """Run forward passes without recording a graph. Thread-local."""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array that remembers how it was computed."""

    __array_ufunc__ = None

    def __init__(self, values, requires_grad=False, ctx=None, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.requires_grad = requires_grad
        self.ctx = ctx
        self.name = name

    def __repr__(self):
        label = " {}".format(self.name) if self.name else ""
        return "<Tensor{} shape={}>".format(label, self.shape)

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def backward(self):
        """Backpropagate from this scalar, accumulating ``grad`` on leaf tensors."""
        if self.size != 1:
            raise UsageError("backward() needs a scalar, got shape {}".format(self.shape))
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.ctx is not None:
                for parent in node.ctx.parents:
                    if id(parent) not in visited:
                        stack.append((parent, False))

        grads = {id(self): np.ones_like(self.values)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.ctx is None:
                if node.requires_grad:
                    node.grad = node.grad + grad
                continue
            for parent, parent_grad in zip(node.ctx.parents, node.ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    def __neg__(self):
        return Neg.apply(self)

    def __add__(self, other):
        return Add.apply(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def sum(self, axis=None):
        return Sum.apply(self, axis=axis)

    def mean(self, axis=None):
        count = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    def relu(self):
        return Relu.apply(self)

    def reshape(self, shape):
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, axes):
        return Transpose.apply(self, axes=tuple(axes))

    def clip(self, low, high):
        return Clip.apply(self, low=low, high=high)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """One node of the graph. Subclasses keep what ``backward`` needs on ``self``."""

    def __init__(self, *parents):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs, **kwargs):
        tensors = [as_tensor(x) for x in inputs]
        ctx = cls(*tensors)
        values = ctx.forward(*[t.values for t in tensors], **kwargs)
        if grad_enabled() and any(t.requires_grad for t in tensors):
            return Tensor(values, requires_grad=True, ctx=ctx)
        return Tensor(values)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Add(Function):
    def forward(self, x, y):
        self.shapes = x.shape, y.shape
        return x + y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x, y):
        self.shapes = x.shape, y.shape
        return x - y

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return _unbroadcast(grad * self.y, self.x.shape), _unbroadcast(grad * self.x, self.y.shape)


class Div(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        return (
            _unbroadcast(grad / self.y, self.x.shape),
            _unbroadcast(-grad * self.x / (self.y * self.y), self.y.shape),
        )


class MatMul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x @ y

    def backward(self, grad):
        return grad @ self.y.T, self.x.T @ grad


class Sum(Function):
    def forward(self, x, axis=None):
        self.shape, self.axis = x.shape, axis
        return x.sum(axis=axis)

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Relu(Function):
    def forward(self, x):
        self.active = x > 0
        return x * self.active

    def backward(self, grad):
        return (grad * self.active,)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes):
        self.inverse = tuple(np.argsort(axes))
        return x.transpose(axes)

    def backward(self, grad):
        return (grad.transpose(self.inverse),)


class Clip(Function):
    def forward(self, x, low, high):
        self.inside = (x >= low) & (x <= high)
        return np.clip(x, low, high)

    def backward(self, grad):
        return (grad * self.inside,)


class Minimum(Function):
    def forward(self, x, y):
        self.first = x <= y
        self.shapes = x.shape, y.shape
        return np.minimum(x, y)

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.first, self.shapes[0]),
            _unbroadcast(grad * ~self.first, self.shapes[1]),
        )


class Gather(Function):
    def forward(self, x, index):
        self.shape = x.shape
        self.index = np.asarray(index, dtype=np.int64)
        return np.take_along_axis(x, self.index, axis=1)

    def backward(self, grad):
        out = np.zeros(self.shape)
        rows = np.arange(self.shape[0])[:, None]
        np.add.at(out, (rows, self.index), grad)
        return (out,)


class LogSoftmax(Function):
    def forward(self, x, mask=None):
        z = x if mask is None else np.where(mask, x, MASK_FILL)
        shifted = z - z.max(axis=-1, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        self.probs = np.exp(out)
        self.mask = mask
        return out

    def backward(self, grad):
        dx = grad - self.probs * grad.sum(axis=-1, keepdims=True)
        if self.mask is not None:
            dx = np.where(self.mask, dx, 0.0)
        return (dx,)


class Conv2d3x3(Function):
    """3x3 convolution, stride 1, zero padding 1, on ``(batch, channels, W, H)`` input."""

    def forward(self, x, w, b):
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        # (B, C, W, H, 3, 3)
        self.cols = sliding_window_view(padded, (3, 3), axis=(2, 3))
        self.x_shape, self.w = x.shape, w
        return np.einsum("bcwhij,ocij->bowh", self.cols, w, optimize=True) + b[None, :, None, None]

    def backward(self, grad):
        gw = np.einsum("bowh,bcwhij->ocij", grad, self.cols, optimize=True)
        gb = grad.sum(axis=(0, 2, 3))
        gx = None
        if self.parents[0].requires_grad:
            _, _, width, height = self.x_shape
            gpad = np.zeros(self.x_shape[:2] + (width + 2, height + 2))
            for i in range(3):
                for j in range(3):
                    gpad[:, :, i : i + width, j : j + height] += np.einsum(
                        "bowh,oc->bcwh", grad, self.w[:, :, i, j], optimize=True
                    )
            gx = gpad[:, :, 1:-1, 1:-1]
        return gx, gw, gb


def minimum(x, y):
    return Minimum.apply(x, y)


def gather(x, index):
    """Pick ``x[b, index[b, k]]`` for every row ``b``."""
    return Gather.apply(x, index=index)


def log_softmax(x, mask=None):
    """Log-softmax over the last axis. Masked-out entries get logit ``MASK_FILL``."""
    return LogSoftmax.apply(x, mask=None if mask is None else np.asarray(mask, dtype=bool))


def conv2d(x, w, b):
    return Conv2d3x3.apply(x, w, b)


def orthogonal(shape, rng, gain=1.0):
    """Orthogonal initialisation of a 2-D weight matrix."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Dense:
    def __init__(self, in_features, out_features, rng, gain=1.0, name="dense"):
        self.weight = Tensor(
            orthogonal((in_features, out_features), rng, gain),
            requires_grad=True,
            name=name + ".weight",
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, name=name + ".bias")

    def __call__(self, x):
        return x @ self.weight + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class Conv2d:
    def __init__(self, in_channels, out_channels, rng, gain=1.0, name="conv"):
        w = orthogonal((out_channels, in_channels * 9), rng, gain)
        w = w.reshape(out_channels, in_channels, 3, 3)
        self.weight = Tensor(w, requires_grad=True, name=name + ".weight")
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name=name + ".bias")

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


@dataclass(frozen=True)
class NetConfig:
    """
    Shape of an :class:`AskNet`.

    ``head`` is ``"ask"`` for ask/not-ask pairs over ``outputs // 2`` options or
    ``"selector"`` for one logit per option.
    """

    in_channels: int = 4
    width: int = 12
    height: int = 12
    channels: Tuple[int, int, int] = (16, 32, 32)
    hidden: Tuple[int, int] = (128, 64)
    outputs: int = 20
    head: str = "ask"

    def __post_init__(self):
        if self.head not in ("ask", "selector"):
            raise UsageError("head must be 'ask' or 'selector', got {!r}".format(self.head))
        if self.head == "ask" and self.outputs % 2:
            raise UsageError("An ask head needs an even number of outputs")

    @property
    def vocabulary_size(self):
        return self.outputs // 2 if self.head == "ask" else self.outputs

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc["channels"] = tuple(doc["channels"])
        doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


class AskNet:
    """
    Convolutional actor-critic network.

    Three 3x3 convolutions with ReLU, a dense layer with ReLU, a second dense layer, then
    a policy head and a scalar value head. Inputs are channels-last, ``(W, H, C)`` or
    ``(B, W, H, C)``, like the observations they are built from.

    :param config: Network shape.
    :type config: NetConfig
    :param seed: Seed of the orthogonal initialisation.
    :type seed: int
    """

    def __init__(self, config=None, seed=0):
        self.config = config or NetConfig()
        rng = np.random.default_rng(seed)
        c1, c2, c3 = self.config.channels
        h1, h2 = self.config.hidden
        self.conv1 = Conv2d(self.config.in_channels, c1, rng, name="conv1")
        self.conv2 = Conv2d(c1, c2, rng, name="conv2")
        self.conv3 = Conv2d(c2, c3, rng, name="conv3")
        self.fc1 = Dense(c3 * self.config.width * self.config.height, h1, rng, name="fc1")
        self.fc2 = Dense(h1, h2, rng, name="fc2")
        self.policy_head = Dense(h2, self.config.outputs, rng, gain=0.01, name="policy_head")
        self.value_head = Dense(h2, 1, rng, gain=1.0, name="value_head")
        #: Number of updates applied so far.
        self.version = 0

    def parameters(self):
        params: List[Tensor] = []
        layers = (self.conv1, self.conv2, self.conv3, self.fc1, self.fc2)
        for layer in layers + (self.policy_head, self.value_head):
            params.extend(layer.parameters())
        return params

    def forward(self, inputs):
        """
        :return: ``(logits, value)`` with shapes ``(B, outputs)`` and ``(B,)``.
        """
        x = as_tensor(inputs)
        if len(x.shape) == 3:
            x = x.reshape((1,) + x.shape)
        expected = (self.config.width, self.config.height, self.config.in_channels)
        if x.shape[1:] != expected:
            raise UsageError("Expected input shape (B,) + {}, got {}".format(expected, x.shape))
        batch = x.shape[0]
        h = x.transpose((0, 3, 1, 2))
        h = self.conv1(h).relu()
        h = self.conv2(h).relu()
        h = self.conv3(h).relu()
        h = h.reshape((batch, -1))
        h = self.fc1(h).relu()
        h = self.fc2(h)
        logits = self.policy_head(h)
        value = self.value_head(h).reshape((batch,))
        return logits, value

    __call__ = forward

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_values(self):
        return [p.values.copy() for p in self.parameters()]

    def load_values(self, values):
        params = self.parameters()
        if len(values) != len(params):
            raise CheckpointError("Expected {} tensors, got {}".format(len(params), len(values)))
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise CheckpointError(
                    "{} has shape {}, got {}".format(p.name, p.shape, np.shape(v))
                )
            p.values = np.array(v, dtype=np.float64)
            p.zero_grad()

    def clone(self):
        twin = AskNet(self.config, seed=0)
        twin.load_values(self.state_values())
        twin.version = self.version
        return twin


class Categorical:
    """
    Categorical distribution over the last axis of a batch of logits.

    :param logits: ``(B, n)`` logits, a :class:`Tensor` to keep gradients.
    :param mask: Optional boolean ``(B, n)`` mask of allowed categories.
    """

    def __init__(self, logits, mask=None):
        logits = as_tensor(logits)
        if len(logits.shape) == 1:
            logits = logits.reshape((1, logits.shape[0]))
        if mask is not None:
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        self.mask = mask
        self.log_probs = log_softmax(logits, mask)
        self.probs = np.exp(self.log_probs.values)

    def sample(self, rng):
        u = rng.random(self.probs.shape[0])[:, None]
        cdf = np.cumsum(self.probs, axis=1)
        picks = (u > cdf).sum(axis=1)
        return np.minimum(picks, self.probs.shape[1] - 1)

    def mode(self):
        return np.argmax(self.log_probs.values, axis=1)

    def log_prob(self, actions):
        actions = np.asarray(actions, dtype=np.int64).reshape(-1, 1)
        return gather(self.log_probs, actions).reshape((actions.shape[0],))

    def entropy(self):
        return -(self.log_probs.exp() * self.log_probs).sum(axis=1)


def categorical(logits, mask=None):
    return Categorical(logits, mask)


def adam_step(params, grads, state, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """
    One Adam update, in place on ``params``.

    Tensors whose gradient holds NaN or inf are skipped and counted in
    ``state["skipped"]``.

    :param params: Tensors to update.
    :param grads: Gradient arrays, one per tensor.
    :param state: Optimiser state, filled on the first call.
    :type state: dict
    """
    if not state:
        state.update(
            t=0,
            skipped=0,
            m=[np.zeros_like(p.values) for p in params],
            v=[np.zeros_like(p.values) for p in params],
        )
    if len(state["m"]) != len(params):
        raise UsageError(
            "Optimiser state tracks {} tensors, got {}".format(len(state["m"]), len(params))
        )
    state["t"] += 1
    t = state["t"]
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            state["skipped"] += 1
            log.warning(
                "Skipping update of %s: non-finite gradient", p.name or "tensor {}".format(i)
            )
            continue
        state["m"][i] = beta1 * state["m"][i] + (1 - beta1) * g
        state["v"][i] = beta2 * state["v"][i] + (1 - beta2) * g * g
        m_hat = state["m"][i] / (1 - beta1**t)
        v_hat = state["v"][i] / (1 - beta2**t)
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state: dict = {}

    @property
    def skipped(self):
        return self.state.get("skipped", 0)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        grads = [p.grad for p in self.params]
        beta1, beta2 = self.betas
        adam_step(self.params, grads, self.state, self.lr, beta1, beta2, self.eps)


def clip_grad_norm(params, max_norm):
    """Scale gradients so their global L2 norm is at most ``max_norm``. Returns the norm."""
    total = float(np.sqrt(sum(float((p.grad**2).sum()) for p in params)))
    if np.isfinite(total) and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            p.grad = p.grad * scale
    return total


def save_checkpoint(net, path, metadata=None):
    """
    Write a network to ``path``.

    Layout: 4-byte magic ``W2A1``, little-endian ``uint32`` header length, the JSON
    header, then every parameter as little-endian float64 in declaration order.
    """
    header = {
        "version": CHECKPOINT_VERSION,
        "architecture": net.config.to_dict(),
        "K": net.config.vocabulary_size,
        "W": net.config.width,
        "H": net.config.height,
        "in_channels": net.config.in_channels,
        "updates": net.version,
        "metadata": metadata or {},
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    values = np.concatenate([p.values.ravel() for p in net.parameters()]).astype("<f8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", CHECKPOINT_MAGIC, len(payload)))
        fh.write(payload)
        fh.write(values.tobytes())
    log.info("Saved checkpoint %s", path)


def read_checkpoint_header(path):
    data = Path(path).read_bytes()
    return _split_checkpoint(data, path)[0]


def _split_checkpoint(data, path):
    if len(data) < 8:
        raise CheckpointError("{}: file too short".format(path))
    magic, length = struct.unpack_from("<4sI", data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("{}: bad magic {!r}".format(path, magic))
    try:
        header = json.loads(data[8 : 8 + length].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise CheckpointError("{}: unreadable header: {}".format(path, e)) from e
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError("{}: unsupported version {!r}".format(path, header.get("version")))
    return header, 8 + length


def load_checkpoint(path, expected=None):
    """
    Read a network written by :func:`save_checkpoint`.

    :param expected: When given, the checkpoint must match its head, ``K``, grid size and
        input channels.
    :type expected: NetConfig
    :raises CheckpointError: On a malformed file or a shape mismatch.
    :rtype: AskNet
    """
    data = Path(path).read_bytes()
    header, offset = _split_checkpoint(data, path)
    config = NetConfig.from_dict(header["architecture"])
    if expected is not None:
        mismatched = [
            "{}={} (expected {})".format(name, got, want)
            for name, got, want in (
                ("head", config.head, expected.head),
                ("K", config.vocabulary_size, expected.vocabulary_size),
                ("W", config.width, expected.width),
                ("H", config.height, expected.height),
                ("in_channels", config.in_channels, expected.in_channels),
            )
            if got != want
        ]
        if mismatched:
            raise CheckpointError(
                "{}: checkpoint does not fit: {}".format(path, ", ".join(mismatched))
            )
    net = AskNet(config, seed=0)
    values = np.frombuffer(data, dtype="<f8", offset=offset)
    total = sum(p.size for p in net.parameters())
    if values.size != total:
        raise CheckpointError("{}: expected {} values, found {}".format(path, total, values.size))
    chunks = []
    start = 0
    for p in net.parameters():
        chunks.append(values[start : start + p.size].reshape(p.shape))
        start += p.size
    net.load_values(chunks)
    net.version = header.get("updates", 0)
    return net
