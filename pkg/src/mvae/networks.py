"""Dense softplus networks with Gaussian or logits heads, and checkpoint I/O."""

import struct
from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .autograd import Tensor
from .distributions import DiagGaussian
from .errors import DimensionError, MVaeError

GAUSSIAN = "gaussian"
LOGITS = "logits"
HEADS = (GAUSSIAN, LOGITS)

MAGIC = b"MVAEPRM1"


@dataclass
class Mlp:
    """Weights are stored (out x in); hidden layers use softplus.

    A Gaussian head emits ``2 * d`` outputs that are split into mean and
    log-variance halves.
    """

    weights: list
    biases: list
    head: str

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        out = self.weights[-1].shape[0]
        return out // 2 if self.head == GAUSSIAN else out

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @property
    def n_params(self):
        return int(sum(p.data.size for p in self.parameters()))

    def __call__(self, x):
        return mlp_forward(self, x)


def mlp_init(layer_sizes, head=LOGITS, seed=0):
    """Weights ~ N(0, 1/fan_in) from a seeded generator, biases zero."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise MVaeError(f"need at least input and output sizes, got {layer_sizes!r}")
    if any(s < 1 for s in sizes):
        raise MVaeError(f"layer sizes must be positive, got {layer_sizes!r}")
    if head not in HEADS:
        raise MVaeError(f"unknown head {head!r}")
    if head == GAUSSIAN:
        sizes[-1] *= 2
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(ad.parameter(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)))
        biases.append(ad.parameter(np.zeros(fan_out)))
    return Mlp(weights, biases, head)


def mlp_forward(net, x):
    """Evaluate the network on ``x`` of shape (..., in_dim).

    Returns a :class:`DiagGaussian` for Gaussian heads, logits otherwise.
    """
    shape = x.shape
    if len(shape) == 0 or shape[-1] != net.in_dim:
        raise DimensionError(f"network expects input dimension {net.in_dim}, got {shape}")
    h = x.reshape(-1, shape[-1]) if isinstance(x, Tensor) else np.reshape(x, (-1, shape[-1]))
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < last:
            h = ad.softplus(h)
    out = h.reshape(*shape[:-1], h.shape[-1])
    if net.head == GAUSSIAN:
        d = out.shape[-1] // 2
        return DiagGaussian(out[..., :d], out[..., d:])
    return out


def zero_network(net):
    for p in net.parameters():
        p.data[...] = 0.0
    return net


# checkpoint format -----------------------------------------------------------
#
#   magic   8 bytes  b"MVAEPRM1"
#   count   uint32   number of arrays
#   then per array:
#     ndim  uint32
#     dims  ndim x uint32
#     data  prod(dims) x float64, row-major
#
# All integers and floats little-endian.


def save_arrays(path, arrays):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            a = np.ascontiguousarray(a, dtype="<f8")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes(order="C"))


def load_arrays(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise MVaeError(f"{path}: not a parameter file")
    (count,) = struct.unpack_from("<I", blob, 8)
    pos, arrays = 12, []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arrays.append(np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(dims).copy())
        pos += 8 * n
    if pos != len(blob):
        raise MVaeError(f"{path}: {len(blob) - pos} trailing bytes")
    return arrays


def set_arrays(params, arrays):
    if len(params) != len(arrays):
        raise DimensionError(f"expected {len(params)} arrays, got {len(arrays)}")
    for p, a in zip(params, arrays):
        if p.data.shape != a.shape:
            raise DimensionError(f"shape {a.shape} does not match parameter {p.data.shape}")
        p.data = np.array(a, dtype=np.float64)
