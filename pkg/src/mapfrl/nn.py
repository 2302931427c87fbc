"""Minimal dense-network kernel: ELU MLPs, explicit backprop, Adam, checkpoints.

Everything is plain numpy. forward() returns the output together with a
GradientTape holding the intermediates; backward() consumes the tape exactly
once and returns parameter gradients plus the input gradient, so every loss
used in training can be checked against finite differences.
"""

from __future__ import annotations

import numpy as np

FORMAT_VERSION = 1
_MAGIC = "NNET1"

HEAD_LINEAR = "linear"
HEAD_SOFTMAX = "softmax"


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(z))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(z)).astype(z.dtype)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; rows sum to 1."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class GradientTape:
    """Intermediates of one forward pass; consumable by backward() once."""

    __slots__ = ("net", "x", "pre", "post", "out", "used", "squeezed")

    def __init__(self, net, x, pre, post, out, squeezed):
        self.net = net
        self.x = x
        self.pre = pre  # pre-activations per layer
        self.post = post  # hidden activations (inputs to the next layer)
        self.out = out
        self.used = False
        self.squeezed = squeezed  # input was a single vector


class DenseNet:
    """Fully connected network with ELU hidden layers.

    Args:
        layer_sizes: (input, hidden..., output) unit counts.
        head: "linear" or "softmax" output.
        seed: seeds the init generator; weights are uniform in
            +/- sqrt(6 / (fan_in + fan_out)), biases zero.
        dtype: float64 by default; training code passes float32.
    """

    def __init__(self, layer_sizes, head: str = HEAD_LINEAR, seed: int | None = 0,
                 dtype=np.float64):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        if head not in (HEAD_LINEAR, HEAD_SOFTMAX):
            raise ValueError(f"unknown head {head!r}")
        self.layer_sizes = tuple(sizes)
        self.head = head
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.params.append(w.astype(self.dtype))
            self.params.append(np.zeros(fan_out, dtype=self.dtype))

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def _prepare(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=self.dtype)
        squeezed = arr.ndim == 1
        if squeezed:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_size:
            raise ValueError(
                f"input shape {np.shape(x)} incompatible with input size "
                f"{self.input_size}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("non-finite values in network input")
        return arr, squeezed

    def forward(self, x) -> tuple[np.ndarray, GradientTape]:
        """Run the network, returning (output, tape)."""
        a, squeezed = self._prepare(x)
        pre, post = [], [a]
        for k in range(self.num_layers):
            z = a @ self.params[2 * k] + self.params[2 * k + 1]
            pre.append(z)
            a = elu(z) if k < self.num_layers - 1 else z
            if k < self.num_layers - 1:
                post.append(a)
        out = softmax(a) if self.head == HEAD_SOFTMAX else a
        tape = GradientTape(self, post[0], pre, post, out, squeezed)
        return (out[0] if squeezed else out), tape

    def predict(self, x) -> np.ndarray:
        """Forward pass without keeping a tape."""
        return self.forward(x)[0]

    def backward(self, tape: GradientTape, grad_output) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate d(loss)/d(output) through a fresh tape from this net.

        Returns (parameter gradients aligned with self.params, input gradient).
        """
        if tape.net is not self:
            raise ValueError("tape was produced by a different network")
        if tape.used:
            raise RuntimeError("gradient tape already consumed")
        tape.used = True
        g = np.asarray(grad_output, dtype=self.dtype)
        if tape.squeezed and g.ndim == 1:
            g = g[None, :]
        if g.shape != tape.out.shape:
            raise ValueError(
                f"grad_output shape {g.shape} does not match output {tape.out.shape}"
            )
        if self.head == HEAD_SOFTMAX:
            p = tape.out
            dz = p * (g - (g * p).sum(axis=1, keepdims=True))
        else:
            dz = g
        grads: list[np.ndarray] = [None] * len(self.params)
        for k in range(self.num_layers - 1, -1, -1):
            a_prev = tape.post[k]
            grads[2 * k] = a_prev.T @ dz
            grads[2 * k + 1] = dz.sum(axis=0)
            da = dz @ self.params[2 * k].T
            if k > 0:
                dz = da * elu_grad(tape.pre[k - 1])
        grad_input = da[0] if tape.squeezed else da
        return grads, grad_input


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        """One update. Rejects (raises, no state change) on non-finite grads."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient structure does not match optimizer")
        for g in grads:
            if not np.isfinite(g).all():
                raise ValueError("non-finite gradient; update rejected")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_arrays(path, arrays: list[np.ndarray], tags: list[str]) -> None:
    """Write a self-describing container: text header, then float32 payload."""
    if len(arrays) != len(tags):
        raise ValueError("one tag per array required")
    lines = [_MAGIC, f"version {FORMAT_VERSION}", f"arrays {len(arrays)}"]
    for tag, arr in zip(tags, arrays):
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"array {tag} {arr.ndim} {shape}".rstrip())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_arrays(path) -> tuple[list[np.ndarray], list[str]]:
    with open(path, "rb") as fh:
        data = fh.read()
    header_end = data.index(b"end\n") + len(b"end\n")
    lines = data[:header_end].decode("ascii").splitlines()
    if lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a network container")
    if lines[1] != f"version {FORMAT_VERSION}":
        raise ValueError(f"{path}: unsupported {lines[1]}")
    count = int(lines[2].split()[1])
    arrays, tags = [], []
    offset = header_end
    for spec in lines[3 : 3 + count]:
        parts = spec.split()
        tag, ndim = parts[1], int(parts[2])
        shape = tuple(int(s) for s in parts[3 : 3 + ndim])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape)
        arrays.append(arr.copy())
        tags.append(tag)
        offset += n * 4
    return arrays, tags


def _seed_text(seed) -> str:
    if seed is None:
        return "none"
    if isinstance(seed, tuple):
        return " ".join(_seed_text(s) for s in seed)
    return str(int(seed))


def _parse_seed(text: str):
    parts = text.split()
    if parts == ["none"]:
        return None
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


def save_net(net: DenseNet, path) -> None:
    """Checkpoint a network (float32 payload) plus a text manifest sidecar."""
    path = str(path)
    with open(path, "wb") as fh:
        header = [
            _MAGIC,
            f"version {FORMAT_VERSION}",
            "kind densenet",
            "layers " + " ".join(str(s) for s in net.layer_sizes),
            "hidden elu",
            f"head {net.head}",
            f"seed {_seed_text(net.seed)}",
            "end",
        ]
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    manifest = [
        f"parameters {net.num_parameters()}",
        f"layers {' '.join(str(s) for s in net.layer_sizes)}",
        f"head {net.head}",
        f"seed {_seed_text(net.seed)}",
    ]
    with open(path + ".manifest.txt", "w", encoding="ascii") as fh:
        fh.write("\n".join(manifest) + "\n")


def load_net(path, dtype=np.float32) -> DenseNet:
    """Load a checkpointed network; parameters restore bit-exactly as float32."""
    with open(path, "rb") as fh:
        data = fh.read()
    header_end = data.index(b"end\n") + len(b"end\n")
    lines = data[:header_end].decode("ascii").splitlines()
    if lines[0] != _MAGIC or lines[1] != f"version {FORMAT_VERSION}":
        raise ValueError(f"{path}: not a version-{FORMAT_VERSION} network checkpoint")
    fields = dict(line.split(" ", 1) for line in lines[2:-1])
    if fields.get("kind") != "densenet":
        raise ValueError(f"{path}: not a network checkpoint")
    sizes = [int(s) for s in fields["layers"].split()]
    net = DenseNet(sizes, head=fields["head"],
                   seed=_parse_seed(fields.get("seed", "none")), dtype=dtype)
    offset = header_end
    for idx, p in enumerate(net.params):
        arr = np.frombuffer(data, dtype="<f4", count=p.size, offset=offset)
        net.params[idx] = arr.reshape(p.shape).astype(dtype)
        offset += p.size * 4
    if offset != len(data):
        raise ValueError(f"{path}: payload size does not match declared shapes")
    return net
