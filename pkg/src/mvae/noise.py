"""The label-noise channel p(y' | y) and the uniform-noise label weight."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ImpossibleObservationError, InvalidNoiseMatrixError

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class NoiseMatrix:
    """Row-stochastic matrix; ``entries[k, j] = p(y' = j | y = k)``."""

    entries: np.ndarray

    @property
    def n_classes(self):
        return self.entries.shape[0]

    @property
    def log_entries(self):
        with np.errstate(divide="ignore"):
            return np.log(self.entries)

    def to_list(self):
        return self.entries.tolist()


def new_noise_matrix(entries):
    """Validate ``entries``; violations are rejected, never renormalised."""
    m = np.array(entries, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidNoiseMatrixError(f"noise matrix must be square, got shape {m.shape}")
    if m.shape[0] < 2:
        raise InvalidNoiseMatrixError("noise matrix needs at least 2 classes")
    if not np.all(np.isfinite(m)):
        raise InvalidNoiseMatrixError("noise matrix has non-finite entries")
    if np.any(m < 0) or np.any(m > 1):
        raise InvalidNoiseMatrixError("noise matrix entries must lie in [0, 1]")
    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise InvalidNoiseMatrixError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    m.setflags(write=False)
    return NoiseMatrix(m)


def _check_epsilon(epsilon, n_classes):
    if n_classes < 2:
        raise InvalidNoiseMatrixError(f"need C >= 2, got {n_classes}")
    if not 0.0 <= epsilon < 1.0:
        raise InvalidNoiseMatrixError(f"epsilon must lie in [0, 1), got {epsilon}")


def uniform_noise(epsilon, n_classes):
    """Correct with probability 1 - eps, otherwise uniform over the other classes."""
    _check_epsilon(epsilon, n_classes)
    m = np.full((n_classes, n_classes), epsilon / (n_classes - 1))
    np.fill_diagonal(m, 1.0 - epsilon)
    return new_noise_matrix(m)


def per_class_flip(flip):
    """Class k is mislabeled with probability flip[k], uniformly to another class."""
    flip = np.asarray(flip, dtype=np.float64)
    c = flip.size
    if c < 2:
        raise InvalidNoiseMatrixError("need at least two flip probabilities")
    if np.any(flip < 0) or np.any(flip > 1):
        raise InvalidNoiseMatrixError(f"flip probabilities must lie in [0, 1], got {flip}")
    m = np.repeat((flip / (c - 1))[:, None], c, axis=1)
    np.fill_diagonal(m, 1.0 - flip)
    return new_noise_matrix(m)


def with_floor(m, floor):
    """Mix with the uniform matrix so that every entry is at least ``floor``.

    Returns ``m`` unchanged when it already satisfies the floor.
    """
    c = m.n_classes
    if floor <= 0 or m.entries.min() >= floor:
        return m
    if floor >= 1.0 / c:
        raise ConfigError(f"noise floor {floor} must be below 1/C = {1.0 / c}")
    lam = (floor - m.entries.min()) / (1.0 / c - m.entries.min())
    return new_noise_matrix((1 - lam) * m.entries + lam / c)


def log_confusion(m, y_true, y_obs):
    """log p(y' = y_obs | y = y_true); raises if that probability is zero."""
    c = m.n_classes
    if not (0 <= y_true < c and 0 <= y_obs < c):
        raise IndexError(f"class indices must lie in [0, {c})")
    p = m.entries[y_true, y_obs]
    if p == 0.0:
        raise ImpossibleObservationError(
            f"observing label {y_obs} is impossible when the true class is {y_true}")
    return float(np.log(p))


def f_weight(epsilon, n_classes):
    """log(1 - eps) - log(eps / (C - 1)), the label weight under uniform noise."""
    if n_classes < 2:
        raise InvalidNoiseMatrixError(f"need C >= 2, got {n_classes}")
    if not 0.0 < epsilon < 1.0:
        raise InvalidNoiseMatrixError(f"f(eps) is undefined at eps = {epsilon}")
    return float(np.log1p(-epsilon) - np.log(epsilon / (n_classes - 1)))


def uniform_epsilon(m, tol=1e-12):
    """The eps for which ``m`` equals uniform_noise(eps, C), or None."""
    c = m.n_classes
    eps = 1.0 - m.entries[0, 0]
    expected = np.full((c, c), eps / (c - 1))
    np.fill_diagonal(expected, 1.0 - eps)
    return float(eps) if np.max(np.abs(m.entries - expected)) <= tol else None


def from_spec(spec, n_classes=None):
    """Build a matrix from explicit rows or a ``{"kind": ...}`` shorthand."""
    if isinstance(spec, NoiseMatrix):
        return spec
    if isinstance(spec, (list, tuple, np.ndarray)):
        return new_noise_matrix(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"cannot interpret noise spec {spec!r}")
    kind = spec["kind"]
    if kind == "uniform":
        c = spec.get("n_classes", n_classes)
        if c is None:
            raise ConfigError("uniform noise spec needs n_classes")
        return uniform_noise(float(spec["epsilon"]), int(c))
    if kind == "per-class-flip":
        if "flip" in spec:
            return per_class_flip(spec["flip"])
        return per_class_flip([spec["p0"], spec["p1"]])
    if kind == "rows":
        return new_noise_matrix(spec["rows"])
    raise ConfigError(f"unknown noise kind {kind!r}")
