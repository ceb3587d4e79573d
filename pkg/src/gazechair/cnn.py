"""Compact convolutional gaze classifier trained from scratch.

Default architecture for 64x64x3 input: conv 16@3x3 -> max-pool 4 ->
conv 12@3x3 -> adaptive max-pool (factor = surviving spatial size, so the
output is a stack of 1x1 maps) -> fully connected 16 -> 4 outputs, tanh
after every convolution and fully connected layer. The shape chain is
62x62x16 -> 15x15x16 -> 13x13x12 -> 1x1x12 -> 16 -> 4.

Training is adaptive-rate backpropagation: one iteration is one full pass
over the training set, the loss is the plain sum of squared output errors
(targets +1 for the true class, -1 elsewhere), and the learning rate grows
5% after an iteration whose loss decreased and shrinks 30% otherwise.
Stopping: train classification error <= 1%, 100 iterations, or gradient
L2 norm below 0.001.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import GAZE_CLASSES, EyeFrame, GazeClass
from .preprocess import TARGET_SIZE, decimate, normalize

N_CLASSES = 4


@dataclass
class TrainConfig:
    epsilon0: float = 0.001
    lr_up: float = 1.05
    lr_down: float = 0.70
    max_iters: int = 100
    min_train_error: float = 0.01
    min_grad_norm: float = 0.001
    seed: int = 0
    batch_size: int | None = 1  # None = single full-batch update per iteration
    shuffle: bool = True
    chunk_size: int = 256  # memory partitioning for full-batch gradient sums

    def __post_init__(self):
        if not 0 < self.lr_down < 1 < self.lr_up:
            raise ValueError("need 0 < lr_down < 1 < lr_up")
        if self.epsilon0 <= 0 or self.max_iters <= 0:
            raise ValueError("epsilon0 and max_iters must be positive")
        if self.min_train_error <= 0 or self.min_grad_norm <= 0:
            raise ValueError("stopping thresholds must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 (or None for full batch)")


class Network:
    """Weights plus the architecture bookkeeping for one classifier."""

    PARAM_NAMES = ("w1", "b1", "w2", "b2", "wf", "bf", "wo", "bo")

    def __init__(self, input_shape=(TARGET_SIZE[0], TARGET_SIZE[1], 3),
                 conv_filters=(16, 12), pool1=4, fc_hidden=16,
                 n_classes=N_CLASSES, dtype=np.float32):
        h, w, c = input_shape
        f1, f2 = conv_filters
        if h < 3 or w < 3:
            raise ValueError(f"input {input_shape} too small for the first convolution")
        h1, w1 = h - 2, w - 2
        p1h, p1w = h1 // pool1, w1 // pool1
        h2, w2 = p1h - 2, p1w - 2
        if h2 < 1 or w2 < 1:
            raise ValueError(f"input {input_shape} too small for the second convolution")
        if h2 != w2:
            raise ValueError("second conv output must be square for the adaptive pool")
        self.input_shape = (h, w, c)
        self.pool1 = pool1
        self.pool2 = h2  # adaptive: collapses the surviving maps to 1x1
        self.conv_filters = (f1, f2)
        self.fc_hidden = fc_hidden
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        self.shape_chain = [
            (h1, w1, f1), (p1h, p1w, f1), (h2, w2, f2), (1, 1, f2),
            (fc_hidden,), (n_classes,),
        ]
        z = lambda *s: np.zeros(s, dtype=self.dtype)
        self.w1 = z(3, 3, c, f1)
        self.b1 = z(f1)
        self.w2 = z(3, 3, f1, f2)
        self.b2 = z(f2)
        self.wf = z(f2, fc_hidden)
        self.bf = z(fc_hidden)
        self.wo = z(fc_hidden, n_classes)
        self.bo = z(n_classes)

    def initialize(self, rng: np.random.Generator) -> None:
        """Uniform [-0.1, 0.1] weights, zero biases."""
        for name in ("w1", "w2", "wf", "wo"):
            w = getattr(self, name)
            w[...] = rng.uniform(-0.1, 0.1, size=w.shape).astype(self.dtype)
        for name in ("b1", "b2", "bf", "bo"):
            getattr(self, name)[...] = 0

    def parameters(self) -> list:
        return [getattr(self, n) for n in self.PARAM_NAMES]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input {self.input_shape}, got {x.shape[1:] if x.ndim == 4 else x.shape}")
        return np.ascontiguousarray(x, dtype=self.dtype)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Batch forward pass -> (N, n_classes) scores in (-1, 1).

        Max pooling commutes with tanh (both pick the same element and
        tanh is strictly increasing), so pooling runs on the raw conv
        output and tanh on the much smaller pooled maps.
        """
        x = self._check_input(x)
        n = x.shape[0]
        z1 = kernels.conv2d_forward(x, self.w1, self.b1)
        p1, idx1 = kernels.maxpool_forward(z1, self.pool1)
        a1 = np.tanh(p1)
        z2 = kernels.conv2d_forward(a1, self.w2, self.b2)
        p2, idx2 = kernels.maxpool_forward(z2, self.pool2)
        a2 = np.tanh(p2)
        flat = a2.reshape(n, -1)
        hid = np.tanh(flat @ self.wf + self.bf)
        scores = np.tanh(hid @ self.wo + self.bo)
        if want_cache:
            cache = (x, z1.shape, idx1, a1, z2.shape, idx2, a2, flat, hid, scores)
            return scores, cache
        return scores

    def backward(self, cache, dscores: np.ndarray, need_dx: bool = False):
        """Gradients of the batch loss for every parameter (and optionally
        the input), given d(loss)/d(scores)."""
        x, z1_shape, idx1, a1, z2_shape, idx2, a2, flat, hid, scores = cache
        dzo = dscores * (1.0 - scores * scores)
        dwo = hid.T @ dzo
        dbo = dzo.sum(axis=0)
        dhid = dzo @ self.wo.T
        dzf = dhid * (1.0 - hid * hid)
        dwf = flat.T @ dzf
        dbf = dzf.sum(axis=0)
        dflat = dzf @ self.wf.T
        da2 = (dflat * (1.0 - flat * flat)).reshape(a2.shape)
        dz2 = kernels.maxpool_backward(da2, idx2, z2_shape, self.pool2)
        da1_raw, dw2, db2 = kernels.conv2d_backward(a1, self.w2, dz2)
        dp1 = da1_raw * (1.0 - a1 * a1)
        dz1 = kernels.maxpool_backward(dp1, idx1, z1_shape, self.pool1)
        dx, dw1, db1 = kernels.conv2d_backward(x, self.w1, dz1, need_dx)
        grads = [dw1, db1, dw2, db2, dwf, dbf, dwo, dbo]
        return (grads, dx) if need_dx else (grads, None)

    def copy(self) -> "Network":
        dup = Network(self.input_shape, self.conv_filters, self.pool1,
                      self.fc_hidden, self.n_classes, self.dtype)
        for name in self.PARAM_NAMES:
            getattr(dup, name)[...] = getattr(self, name)
        return dup

    def save(self, path) -> None:
        np.savez(
            path,
            format_version=1,
            input_shape=np.array(self.input_shape),
            conv_filters=np.array(self.conv_filters),
            pool1=self.pool1,
            fc_hidden=self.fc_hidden,
            n_classes=self.n_classes,
            dtype=str(self.dtype),
            preprocessing="decimate-64x64;zero-center-unit-sigma",
            **{n: getattr(self, n) for n in self.PARAM_NAMES},
        )

    @classmethod
    def load(cls, path) -> "Network":
        with np.load(path, allow_pickle=False) as data:
            if int(data["format_version"]) != 1:
                raise ValueError(f"unsupported model format version {data['format_version']}")
            net = cls(
                input_shape=tuple(int(v) for v in data["input_shape"]),
                conv_filters=tuple(int(v) for v in data["conv_filters"]),
                pool1=int(data["pool1"]),
                fc_hidden=int(data["fc_hidden"]),
                n_classes=int(data["n_classes"]),
                dtype=np.dtype(str(data["dtype"])),
            )
            for name in cls.PARAM_NAMES:
                stored = data[name]
                current = getattr(net, name)
                if stored.shape != current.shape:
                    raise ValueError(f"model file parameter {name} has shape "
                                     f"{stored.shape}, expected {current.shape}")
                current[...] = stored.astype(net.dtype)
        return net


def softmax(scores: np.ndarray) -> np.ndarray:
    """Exp-normalize with max subtraction; preserves the argmax."""
    s = np.asarray(scores, dtype=np.float64)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def target_matrix(labels: np.ndarray, n_classes: int = N_CLASSES,
                  dtype=np.float64) -> np.ndarray:
    """+1 for the true class, -1 elsewhere (tanh output range)."""
    t = -np.ones((len(labels), n_classes), dtype=dtype)
    t[np.arange(len(labels)), labels] = 1.0
    return t


def loss(scores: np.ndarray, target_class: int) -> float:
    """Sum of squared errors over the outputs for one item; no averaging."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = -np.ones(s.shape[0])
    t[target_class] = 1.0
    d = s - t
    return float((d * d).sum())


@dataclass
class TrainHistory:
    iterations: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.iterations)


def prepare_inputs(frames, dtype=np.float64) -> np.ndarray:
    """Decimate + normalize a sequence of frames into one (N, 64, 64, 3)
    batch ready for the network."""
    out = []
    for f in frames:
        pixels = f.pixels if isinstance(f, EyeFrame) else np.asarray(f)
        out.append(normalize(decimate(pixels, TARGET_SIZE)))
    return np.asarray(out, dtype=dtype)


def _full_pass(net: Network, x: np.ndarray, targets: np.ndarray,
               labels: np.ndarray, chunk_size: int):
    """One full-batch pass: total loss, error rate, summed gradients."""
    n = x.shape[0]
    total_loss = 0.0
    n_wrong = 0
    grad_acc = None
    for start in range(0, n, chunk_size):
        sl = slice(start, min(start + chunk_size, n))
        scores, cache = net.forward(x[sl], want_cache=True)
        diff = scores.astype(np.float64) - targets[sl]
        total_loss += float((diff * diff).sum())
        n_wrong += int((scores.argmax(axis=1) != labels[sl]).sum())
        dscores = (2.0 * diff).astype(net.dtype)
        grads, _ = net.backward(cache, dscores)
        if grad_acc is None:
            grad_acc = grads
        else:
            for acc, g in zip(grad_acc, grads):
                acc += g
    grad_norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum())
                                  for g in grad_acc)))
    return total_loss, n_wrong / n, grad_acc, grad_norm


def _sgd_pass(net: Network, x: np.ndarray, targets: np.ndarray,
              labels: np.ndarray, order: np.ndarray, batch_size: int,
              eps: float):
    """One pass over the train set updating after every (mini-)batch.

    Returns the pass's total loss, error rate, and the L2 norm of the
    summed per-batch gradients (the iteration-level gradient).
    """
    n = x.shape[0]
    step = net.dtype.type(eps)
    total_loss = 0.0
    n_wrong = 0
    grad_acc = [np.zeros_like(p, dtype=np.float64) for p in net.parameters()]
    for start in range(0, n, batch_size):
        sel = order[start:start + batch_size]
        scores, cache = net.forward(x[sel], want_cache=True)
        diff = scores.astype(np.float64) - targets[sel]
        total_loss += float((diff * diff).sum())
        n_wrong += int((scores.argmax(axis=1) != labels[sel]).sum())
        grads, _ = net.backward(cache, (2.0 * diff).astype(net.dtype))
        for p, g, acc in zip(net.parameters(), grads, grad_acc):
            p -= step * g
            acc += g
    grad_norm = float(np.sqrt(sum(float((g ** 2).sum()) for g in grad_acc)))
    return total_loss, n_wrong / n, grad_norm


def train(net: Network, train_set, config: TrainConfig | None = None):
    """Adaptive-rate backpropagation; returns (net, history).

    ``train_set`` is (inputs, labels) with inputs already preprocessed.
    The net's weights are (re)initialized from config.seed. One iteration
    is one pass over the train set: with the default batch_size=1 the
    Eq.-style update runs after every example (stochastic gradient
    descent); batch_size=None accumulates the whole pass into a single
    update. Either way the learning rate adapts once per iteration from
    the pass's total loss.
    """
    config = config or TrainConfig()
    x, labels = train_set
    x = np.asarray(x)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty train set")
    rng = np.random.default_rng(config.seed)
    net.initialize(rng)
    targets = target_matrix(labels, net.n_classes)
    n = x.shape[0]
    eps = config.epsilon0
    prev_loss = None
    history = TrainHistory()
    history.stop_reason = "max_iters"
    for it in range(1, config.max_iters + 1):
        if config.batch_size is None:
            total_loss, error, grads, grad_norm = _full_pass(
                net, x, targets, labels, config.chunk_size)
        else:
            order = rng.permutation(n) if config.shuffle else np.arange(n)
            total_loss, error, grad_norm = _sgd_pass(
                net, x, targets, labels, order, config.batch_size, eps)
            grads = None
        if prev_loss is not None:
            eps = eps * (config.lr_up if total_loss < prev_loss else config.lr_down)
        history.iterations.append({
            "iteration": it, "loss": total_loss, "error": error,
            "epsilon": eps, "grad_norm": grad_norm,
        })
        prev_loss = total_loss
        if error <= config.min_train_error:
            history.stop_reason = "train_error"
            break
        if grad_norm < config.min_grad_norm:
            history.stop_reason = "grad_norm"
            break
        if grads is not None:
            step = net.dtype.type(eps)
            for p, g in zip(net.parameters(), grads):
                p -= step * g
    return net, history


def predict(net: Network, frame):
    """Preprocess -> forward -> softmax -> argmax (canonical tie-break)."""
    x = prepare_inputs([frame], dtype=net.dtype)
    scores = net.forward(x)[0]
    probs = softmax(scores)
    return GazeClass(int(np.argmax(probs))), probs


def predict_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Labels for a preprocessed batch (evaluation fast path)."""
    scores = net.forward(x)
    return scores.argmax(axis=1)
