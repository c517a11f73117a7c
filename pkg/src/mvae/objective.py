"""The M-VAE evidence lower bound, its classification term, and the M1+M2 objective.

Per row, with z1 ~ q(z1 | x) reparameterised and the class enumerated::

    ELBO = sum_k q(k | z1) [ -KL(q(z2 | z1, k) || N(0, I))
                             + log p(z1 | z2_k, k) - log q(z1 | x) ]
           + log p(x | z1) - KL(q(y | z1) || p(y))
           + psi                                   (labeled rows only)

    psi  = sum_k q(k | z1)   log p(y' | k)          "standard"
    psi  = sum_k q(k | z1)^2 log p(y' | k)          "literal"

The M1+M2 objective replaces psi by ``alpha * q(y' | z1)``.  Under uniform
label noise with rate eps and ``alpha = f_weight(eps, C)`` the two differ by
the constant ``log(eps / (C - 1))`` per labeled row.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import autograd as ad
from .distributions import (
    CategoricalDist,
    categorical_kl_from_log,
    gauss_kl_std,
    gauss_log_prob,
    reparam_sample,
)
from .errors import DimensionError, ImpossibleObservationError, InvalidNoiseMatrixError, MVaeError
from .noise import f_weight, uniform_epsilon, uniform_noise

STANDARD = "standard"
LITERAL = "literal"
PSI_MODES = (STANDARD, LITERAL)
MISSING = -1

TERM_NAMES = ("kl_z2", "z1_ce", "recon_x", "kl_y", "psi")


@dataclass(frozen=True)
class ElboBreakdown:
    """Per-term values; ``total = -kl_z2 + z1_ce + recon_x - kl_y + psi``.

    Fields are floats for a single row or arrays for a batch.  For the M1+M2
    objective ``psi`` holds the penalty ``alpha * q(y' | z1)``.
    """

    kl_z2: object
    z1_ce: object
    recon_x: object
    kl_y: object
    psi: object
    total: object

    @classmethod
    def from_terms(cls, kl_z2, z1_ce, recon_x, kl_y, psi):
        return cls(kl_z2, z1_ce, recon_x, kl_y, psi, combine(kl_z2, z1_ce, recon_x, kl_y, psi))

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def summed(self):
        """Sum every term over rows (the dataset-level bound)."""
        return ElboBreakdown(**{k: float(np.sum(v)) for k, v in self.as_dict().items()})


def combine(kl_z2, z1_ce, recon_x, kl_y, psi):
    return -kl_z2 + z1_ce + recon_x - kl_y + psi


@dataclass(frozen=True)
class Draws:
    """Standard-normal draws: z1 (S, N, d_z1) and z2 (S, N, C, d_z2)."""

    z1: np.ndarray
    z2: np.ndarray

    def rows(self, idx):
        return Draws(self.z1[:, idx], self.z2[:, idx])


def draw_noise(rng, n_mc, n_rows, dims):
    if n_mc < 1:
        raise MVaeError(f"n_mc must be >= 1, got {n_mc}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    z1 = rng.standard_normal((n_mc, n_rows, dims.d_z1))
    z2 = rng.standard_normal((n_mc, n_rows, dims.n_classes, dims.d_z2))
    return Draws(z1, z2)


def _class_inputs(z, n_classes):
    """Append one-hot(k) along a trailing class axis: (..., C, d) -> (..., C, d + C)."""
    eye = np.broadcast_to(np.eye(n_classes), (*z.shape[:-1], n_classes))
    return ad.concatenate([z, eye], axis=-1)


def _label_weights(m, y_obs):
    """log p(y' | k) for every row and class (zero rows for unlabeled data)."""
    y_obs = np.asarray(y_obs)
    c = m.dims.n_classes
    labeled = y_obs != MISSING
    if np.any((y_obs[labeled] < 0) | (y_obs[labeled] >= c)):
        raise MVaeError(f"observed labels must lie in [0, {c}) or be missing")
    w = np.zeros((y_obs.size, c))
    w[labeled] = m.noise.log_entries[:, y_obs[labeled]].T
    if np.any(np.isneginf(w)):
        row = int(np.flatnonzero(np.isneginf(w).any(axis=1))[0])
        raise ImpossibleObservationError(
            f"row {row}: label {int(y_obs[row])} has zero probability under some class "
            "with positive posterior mass")
    return w, labeled


def row_terms(m, x, y_obs, draws, mode=STANDARD, alpha=None):
    """Per-row objective terms as (possibly graph-recording) arrays of shape (N,).

    ``alpha is None`` selects the M-VAE bound with the given psi mode,
    otherwise the M1+M2 penalty with weight ``alpha``.
    """
    x = np.asarray(x, dtype=np.float64)
    y_obs = np.asarray(y_obs)
    if x.ndim != 2 or x.shape[1] != m.dims.d_x:
        raise DimensionError(f"x must be (N, {m.dims.d_x}), got {x.shape}")
    if y_obs.shape != (x.shape[0],):
        raise DimensionError("y_obs must have one entry per row")
    if mode not in PSI_MODES:
        raise MVaeError(f"unknown psi mode {mode!r}")
    c = m.dims.n_classes

    q_z1 = m.enc_z1(x)
    z1 = reparam_sample(q_z1, draws.z1)                            # (S, N, d1)
    log_q_z1 = gauss_log_prob(z1, q_z1)                            # (S, N)
    log_qy = ad.log_softmax(m.enc_y(z1))                           # (S, N, C)
    qy = ad.exp(log_qy)

    z1_k = ad.broadcast_to(z1.reshape(*z1.shape[:-1], 1, z1.shape[-1]),
                           (*z1.shape[:-1], c, z1.shape[-1]))      # (S, N, C, d1)
    q_z2 = m.enc_z2(_class_inputs(z1_k, c))
    z2 = reparam_sample(q_z2, draws.z2)                            # (S, N, C, d2)
    kl_z2_k = gauss_kl_std(q_z2)                                   # (S, N, C)
    p_z1 = m.dec_z1(_class_inputs(z2, c))
    ce_k = gauss_log_prob(z1_k, p_z1) - log_q_z1.reshape(*log_q_z1.shape, 1)

    recon_x = gauss_log_prob(x, m.dec_x(z1))                       # (S, N)
    kl_y = categorical_kl_from_log(log_qy, m.log_prior_y)
    kl_z2 = ad.sum(qy * kl_z2_k, axis=-1)
    z1_ce = ad.sum(qy * ce_k, axis=-1)

    if alpha is None:
        w, _ = _label_weights(m, y_obs)
        weight = qy * qy if mode == LITERAL else qy
        label = ad.sum(weight * w, axis=-1)
    else:
        if not np.isfinite(alpha):
            raise MVaeError(f"alpha must be finite, got {alpha}")
        labeled = y_obs != MISSING
        if np.any((y_obs[labeled] < 0) | (y_obs[labeled] >= c)):
            raise MVaeError(f"observed labels must lie in [0, {c}) or be missing")
        sel = np.zeros((y_obs.size, c))
        sel[labeled, y_obs[labeled]] = alpha
        label = ad.sum(qy * sel, axis=-1)

    terms = {"kl_z2": kl_z2, "z1_ce": z1_ce, "recon_x": recon_x, "kl_y": kl_y, "psi": label}
    return {k: ad.mean(v, axis=0) for k, v in terms.items()}


def batch_breakdown(m, x, y_obs, n_mc=1, seed=0, mode=STANDARD, alpha=None,
                    draws=None, chunk=512):
    """Per-row breakdown (numpy arrays) over a batch, evaluated in row chunks."""
    x = np.asarray(x, dtype=np.float64)
    y_obs = np.asarray(y_obs)
    if draws is None:
        draws = draw_noise(seed, n_mc, x.shape[0], m.dims)
    parts = {k: [] for k in TERM_NAMES}
    with ad.no_grad():
        for start in range(0, x.shape[0], chunk):
            idx = slice(start, start + chunk)
            terms = row_terms(m, x[idx], y_obs[idx], draws.rows(idx), mode, alpha)
            for k in TERM_NAMES:
                parts[k].append(ad.value(terms[k]))
    return ElboBreakdown.from_terms(*(np.concatenate(parts[k]) for k in TERM_NAMES))


def _single(m, x, y_obs, n_mc, seed, mode, alpha):
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != m.dims.d_x:
        raise DimensionError(f"x must have dimension {m.dims.d_x}")
    y = MISSING if y_obs is None else int(y_obs)
    if y_obs is not None and not 0 <= y < m.dims.n_classes:
        raise MVaeError(f"y_obs={y_obs} outside [0, {m.dims.n_classes})")
    b = batch_breakdown(m, x, np.array([y]), n_mc, seed, mode, alpha)
    return ElboBreakdown(**{k: float(v[0]) for k, v in b.as_dict().items()})


def elbo_terms(m, x, y_obs=None, n_mc=1, seed=0, mode=STANDARD):
    """ELBO breakdown for one row; ``y_obs=None`` marks an unlabeled row."""
    return _single(m, x, y_obs, n_mc, seed, mode, None)


def m1m2_objective(m, x, y_obs=None, n_mc=1, seed=0, alpha=1.0):
    """ELBO with psi replaced by the penalty ``alpha * q(y' | z1)``.

    Uses the same random draws as :func:`elbo_terms` for the same seed.
    """
    return _single(m, x, y_obs, n_mc, seed, STANDARD, float(alpha)).total


def classification_term(qy, y_obs, noise, mode=STANDARD):
    """psi for a single labeled row given the class posterior ``qy``."""
    probs = qy.probs if isinstance(qy, CategoricalDist) else np.asarray(qy, dtype=np.float64)
    c = noise.n_classes
    if probs.size != c:
        raise DimensionError(f"qy has {probs.size} classes, noise matrix has {c}")
    if not 0 <= y_obs < c:
        raise MVaeError(f"y_obs={y_obs} outside [0, {c})")
    if mode not in PSI_MODES:
        raise MVaeError(f"unknown psi mode {mode!r}")
    col = noise.entries[:, y_obs]
    support = probs > 0
    if np.any(col[support] == 0):
        raise ImpossibleObservationError(
            f"label {y_obs} has zero probability under a class with positive posterior mass")
    weight = probs[support] ** 2 if mode == LITERAL else probs[support]
    return float(np.sum(weight * np.log(col[support])))


def psi_rewrite_residual(qy, y_obs, epsilon, n_classes):
    """psi - [q(y') f(eps) + log(eps / (C - 1))] under uniform noise; zero in theory."""
    f = f_weight(epsilon, n_classes)
    probs = qy.probs if isinstance(qy, CategoricalDist) else np.asarray(qy, dtype=np.float64)
    psi = classification_term(probs, y_obs, uniform_noise(epsilon, n_classes))
    return psi - (probs[y_obs] * f + np.log(epsilon / (n_classes - 1)))


def equivalence_residual(m, batch, epsilon, n_mc=1, seed=0):
    """|ELBO - (M1+M2 objective + N_l log(eps / (C - 1)))| summed over the batch.

    Both objectives see identical random draws.  ``m.noise`` must be the
    uniform matrix with rate ``epsilon``.
    """
    x, y_obs = batch
    c = m.dims.n_classes
    f = f_weight(epsilon, c)
    eps_m = uniform_epsilon(m.noise)
    if eps_m is None or abs(eps_m - epsilon) > 1e-12:
        raise InvalidNoiseMatrixError(
            f"model noise matrix is not uniform_noise({epsilon}, {c})")
    x = np.asarray(x, dtype=np.float64)
    y_obs = np.asarray(y_obs)
    draws = draw_noise(seed, n_mc, x.shape[0], m.dims)
    elbo = batch_breakdown(m, x, y_obs, draws=draws)
    m1m2 = batch_breakdown(m, x, y_obs, alpha=f, draws=draws)
    # difference term by term: totals of untrained models can reach 1e17, where
    # subtracting them would lose everything below the rounding unit
    diff = sum(float(np.sum(getattr(elbo, k) - getattr(m1m2, k))) for k in TERM_NAMES)
    n_labeled = int(np.sum(y_obs != MISSING))
    return abs(diff - n_labeled * np.log(epsilon / (c - 1)))
