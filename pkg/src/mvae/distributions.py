"""Diagonal Gaussian and categorical families.

Functions accept either numpy arrays or autograd tensors.  Densities reduce
over the last axis, so a batch of Gaussians is just arrays with leading batch
dimensions.  With plain numpy inputs of a single distribution the result is a
Python float.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .autograd import Tensor
from .errors import DimensionError, InvalidDistributionError, NonFiniteError

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_VAR_MIN, LOG_VAR_MAX = -30.0, 30.0


def _check_finite(name, *arrays):
    for a in arrays:
        if isinstance(a, Tensor):
            continue
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"{name}: non-finite input", term=name)


def _scalarize(out):
    if isinstance(out, Tensor):
        return out
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DiagGaussian:
    """Gaussian with diagonal covariance, parameterised by mean and log-variance.

    ``log_var`` is clamped to [-30, 30] on construction.
    """

    mean: object
    log_var: object

    def __post_init__(self):
        mean, log_var = self.mean, self.log_var
        if not isinstance(mean, Tensor):
            mean = np.asarray(mean, dtype=np.float64)
        if not isinstance(log_var, Tensor):
            log_var = np.asarray(log_var, dtype=np.float64)
        if mean.shape != log_var.shape:
            raise DimensionError(
                f"mean shape {mean.shape} != log_var shape {log_var.shape}")
        if mean.ndim == 0 or mean.shape[-1] < 1:
            raise DimensionError("Gaussian dimension must be >= 1")
        _check_finite("DiagGaussian", mean, log_var)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", ad.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX))

    @property
    def dim(self):
        return self.mean.shape[-1]

    @classmethod
    def standard(cls, d):
        return cls(np.zeros(d), np.zeros(d))


@dataclass(frozen=True)
class CategoricalDist:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise InvalidDistributionError("probs must be a non-empty vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidDistributionError(f"invalid probabilities {p}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidDistributionError(f"probabilities sum to {p.sum()}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def n_classes(self):
        return self.probs.size

    @classmethod
    def uniform(cls, n_classes):
        return cls(np.full(n_classes, 1.0 / n_classes))

    def argmax(self):
        return int(np.argmax(self.probs))


def gauss_log_prob(x, g):
    """log N(x; mean, diag(exp(log_var))), summed over the last axis."""
    if not isinstance(x, Tensor):
        x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != g.mean.shape[-1:]:
        raise DimensionError(f"x has dimension {x.shape[-1:]}, Gaussian has {g.dim}")
    _check_finite("gauss_log_prob", x)
    diff = x - g.mean
    quad = diff * diff * ad.exp(-g.log_var)
    out = ad.sum(-0.5 * LOG_2PI - 0.5 * g.log_var - 0.5 * quad, axis=-1)
    return _scalarize(out)


def gauss_kl_std(g):
    """KL(g || N(0, I)) in closed form."""
    m, lv = g.mean, g.log_var
    out = 0.5 * ad.sum(m * m + ad.exp(lv) - lv - 1.0, axis=-1)
    return _scalarize(out)


def reparam_sample(g, noise):
    """mean + exp(log_var / 2) * noise, differentiable in both parameters."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1:] != g.mean.shape[-1:]:
        raise DimensionError(f"noise has dimension {noise.shape[-1:]}, Gaussian has {g.dim}")
    return g.mean + ad.exp(0.5 * g.log_var) * noise


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("softmax: non-finite logits", term="logits")
    return CategoricalDist(ad.softmax(logits))


def categorical_kl(q, p):
    """KL(q || p) with the convention 0 log 0 = 0."""
    qp, pp = q.probs, p.probs
    if qp.shape != pp.shape:
        raise DimensionError(f"class counts differ: {qp.size} vs {pp.size}")
    support = qp > 0
    if np.any(pp[support] == 0):
        raise InvalidDistributionError("KL is infinite: p has zero mass where q does not")
    return float(np.sum(qp[support] * (np.log(qp[support]) - np.log(pp[support]))))


def categorical_kl_from_log(log_q, log_p):
    """KL over the last axis from log-probabilities (tensor-capable)."""
    return ad.sum(ad.exp(log_q) * (log_q - log_p), axis=-1)
