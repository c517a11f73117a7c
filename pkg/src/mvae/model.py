"""The M-VAE: five networks, the class prior and a fixed label-noise channel.

Generative side::

    y ~ Cat(prior_y),  z2 ~ N(0, I)
    z1 ~ dec_z1(z2, y),  x ~ dec_x(z1),  y' ~ noise[y]

Variational side::

    q(z1 | x) = enc_z1(x),  q(y | z1) = softmax(enc_y(z1)),  q(z2 | z1, y) = enc_z2(z1, y)

Class inputs enter ``dec_z1`` and ``enc_z2`` as one-hot vectors appended to
the continuous input.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .distributions import CategoricalDist, DiagGaussian, reparam_sample
from .errors import DimensionError, MVaeError
from .networks import GAUSSIAN, LOGITS, Mlp, mlp_init, set_arrays
from .noise import NoiseMatrix, uniform_noise

NETWORK_NAMES = ("dec_z1", "dec_x", "enc_z1", "enc_y", "enc_z2")
DEFAULT_HIDDEN = (32,)


@dataclass(frozen=True)
class ModelDims:
    d_x: int
    d_z1: int
    d_z2: int
    n_classes: int

    def __post_init__(self):
        if min(self.d_x, self.d_z1, self.d_z2) < 1:
            raise MVaeError(f"dimensions must be >= 1: {self}")
        if self.n_classes < 2:
            raise MVaeError(f"need at least two classes, got {self.n_classes}")


@dataclass
class MVaeModel:
    dims: ModelDims
    dec_z1: Mlp
    dec_x: Mlp
    enc_z1: Mlp
    enc_y: Mlp
    enc_z2: Mlp
    prior_y: np.ndarray
    noise: NoiseMatrix

    def networks(self):
        return [(name, getattr(self, name)) for name in NETWORK_NAMES]

    def parameters(self):
        return [p for _, net in self.networks() for p in net.parameters()]

    @property
    def n_params(self):
        return sum(net.n_params for _, net in self.networks())

    def get_arrays(self):
        return [p.data.copy() for p in self.parameters()]

    def set_arrays(self, arrays):
        set_arrays(self.parameters(), arrays)

    def copy(self):
        return copy.deepcopy(self)

    @property
    def log_prior_y(self):
        return np.log(self.prior_y)


def build_model(dims, hidden=DEFAULT_HIDDEN, seed=0, prior_y=None, noise=None,
                classifier_hidden=None):
    """Fresh model; every network is initialised from its own child seed.

    ``classifier_hidden`` sets the hidden layers of q(y | z1) separately
    (``[]`` gives a linear softmax classifier); by default it is ``hidden``.
    """
    c = dims.n_classes
    hidden = list(hidden)
    hidden_y = hidden if classifier_hidden is None else list(classifier_hidden)
    if prior_y is None:
        prior_y = np.full(c, 1.0 / c)
    prior_y = CategoricalDist(prior_y).probs
    if prior_y.size != c or np.any(prior_y <= 0):
        raise MVaeError("prior_y must be a strictly positive distribution over C classes")
    if noise is None:
        noise = uniform_noise(0.0, c)
    if noise.n_classes != c:
        raise DimensionError(f"noise matrix is {noise.n_classes}x{noise.n_classes}, need C={c}")
    seeds = np.random.SeedSequence(seed).spawn(len(NETWORK_NAMES))
    shapes = {
        "dec_z1": ([dims.d_z2 + c, *hidden, dims.d_z1], GAUSSIAN),
        "dec_x": ([dims.d_z1, *hidden, dims.d_x], GAUSSIAN),
        "enc_z1": ([dims.d_x, *hidden, dims.d_z1], GAUSSIAN),
        "enc_y": ([dims.d_z1, *hidden_y, c], LOGITS),
        "enc_z2": ([dims.d_z1 + c, *hidden, dims.d_z2], GAUSSIAN),
    }
    nets = {name: mlp_init(shapes[name][0], shapes[name][1], seed=s)
            for name, s in zip(NETWORK_NAMES, seeds)}
    return MVaeModel(dims=dims, prior_y=prior_y, noise=noise, **nets)


def one_hot(y, n_classes):
    return np.eye(n_classes)[np.asarray(y)]


def _check_x(m, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (m.dims.d_x,):
        raise DimensionError(f"x must have last dimension {m.dims.d_x}, got {x.shape}")
    return x


def encode(m, x):
    """q(z1 | x) as a numpy-valued DiagGaussian (batched over leading axes)."""
    x = _check_x(m, x)
    with ad.no_grad():
        g = m.enc_z1(x)
    return DiagGaussian(ad.value(g.mean), ad.value(g.log_var))


def predict_proba(m, x, mode="mean", n_samples=1, seed=0, noise=None):
    """Class probabilities q(y | z1) for each row of x.

    ``mode="mean"`` evaluates at the encoder mean; ``mode="mc"`` averages over
    ``n_samples`` reparameterised draws of z1 (``noise`` overrides the draws).
    """
    x = _check_x(m, x)
    with ad.no_grad():
        g = m.enc_z1(x)
        if mode == "mean":
            return ad.value(ad.softmax(m.enc_y(g.mean)))
        if mode != "mc":
            raise MVaeError(f"unknown prediction mode {mode!r}")
        if n_samples < 1:
            raise MVaeError("mc prediction needs n_samples >= 1")
        if noise is None:
            rng = np.random.default_rng(seed)
            noise = rng.standard_normal((n_samples, *g.mean.shape))
        z1 = reparam_sample(g, noise)
        return ad.value(ad.softmax(m.enc_y(z1))).mean(axis=0)


def predict(m, x, mode="mean", n_samples=1, seed=0, noise=None):
    """Single-row prediction as a CategoricalDist."""
    x = _check_x(m, x)
    if x.ndim != 1:
        raise DimensionError("predict takes one row; use predict_proba for batches")
    return CategoricalDist(predict_proba(m, x, mode, n_samples, seed, noise))


def predict_labels(m, x):
    return np.argmax(predict_proba(m, x), axis=-1)


@dataclass(frozen=True)
class AncestralSample:
    x: np.ndarray
    y: np.ndarray
    y_obs: np.ndarray
    z1: np.ndarray
    z2: np.ndarray


def ancestral_sample(m, n, seed=0):
    """Draw n rows from the generative process."""
    if n < 1:
        raise MVaeError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    c = m.dims.n_classes
    y = rng.choice(c, size=n, p=m.prior_y)
    z2 = rng.standard_normal((n, m.dims.d_z2))
    with ad.no_grad():
        pz1 = m.dec_z1(np.concatenate([z2, one_hot(y, c)], axis=1))
        z1 = ad.value(reparam_sample(pz1, rng.standard_normal((n, m.dims.d_z1))))
        px = m.dec_x(z1)
        x = ad.value(reparam_sample(px, rng.standard_normal((n, m.dims.d_x))))
    cdf = np.cumsum(m.noise.entries[y], axis=1)
    u = rng.random(n)[:, None]
    y_obs = np.minimum((u >= cdf).sum(axis=1), c - 1)
    return AncestralSample(x=x, y=y, y_obs=y_obs, z1=z1, z2=z2)
