"""Synthetic mixtures, label corruption, labeled-subset selection and CSV I/O."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .noise import per_class_flip

MISSING = -1


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Covariates with held-out true labels and partially observed labels.

    ``y_obs`` uses ``-1`` for rows whose label is hidden from the learner;
    it is observed exactly on ``labeled_idx``.
    """

    x: np.ndarray
    y_true: np.ndarray
    y_obs: np.ndarray
    n_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = _frozen(self.x, np.float64)
        if x.ndim != 2:
            x = _frozen(x.reshape(len(self.y_true), -1), np.float64)
        y_true = _frozen(self.y_true, np.int64)
        y_obs = _frozen(self.y_obs, np.int64)
        if not (x.shape[0] == y_true.size == y_obs.size):
            raise DataError("x, y_true and y_obs must have the same number of rows")
        if np.any((y_true < 0) | (y_true >= self.n_classes)):
            raise DataError(f"true labels must lie in [0, {self.n_classes})")
        if np.any((y_obs < MISSING) | (y_obs >= self.n_classes)):
            raise DataError(f"observed labels must lie in [0, {self.n_classes}) or be -1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y_true", y_true)
        object.__setattr__(self, "y_obs", y_obs)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d_x(self):
        return self.x.shape[1]

    @property
    def labeled_idx(self):
        return np.flatnonzero(self.y_obs != MISSING)

    @property
    def n_labeled(self):
        return int(np.sum(self.y_obs != MISSING))

    def subset(self, idx):
        return replace(self, x=self.x[idx], y_true=self.y_true[idx], y_obs=self.y_obs[idx])


@dataclass(frozen=True)
class MixtureConfig:
    means: np.ndarray
    std: float = 1.0
    n_per_class: int = 500

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        if means.shape[0] < 2:
            raise DataError("a mixture needs at least two classes")
        if not self.std > 0:
            raise DataError(f"std must be positive, got {self.std}")
        if self.n_per_class < 0:
            raise DataError("n_per_class must be >= 0")
        object.__setattr__(self, "means", means)

    @property
    def n_classes(self):
        return self.means.shape[0]

    @property
    def d_x(self):
        return self.means.shape[1]

    @classmethod
    def two_class(cls, separation=2.5, std=1.0, n_per_class=500, d_x=2):
        """Class means at -/+ separation/2 along the first axis."""
        means = np.zeros((2, d_x))
        means[0, 0], means[1, 0] = -separation / 2, separation / 2
        return cls(means, std, n_per_class)


def generate_mixture(cfg, seed=0):
    """Isotropic Gaussian classes, rows grouped by class; all labels observed."""
    rng = np.random.default_rng(seed)
    c, d, n = cfg.n_classes, cfg.d_x, cfg.n_per_class
    y = np.repeat(np.arange(c), n)
    x = cfg.means[y] + cfg.std * rng.standard_normal((c * n, d))
    return LabeledDataset(x, y, y.copy(), c, meta={"source": "mixture", "data_seed": seed})


def corrupt_labels(ds, flip, seed=0):
    """Flip each observed label of true class k with probability flip[k].

    A flipped label moves to one of the other classes uniformly.  Rows whose
    label is hidden stay hidden; ``y_true`` is never touched.
    """
    flip = np.asarray(flip, dtype=np.float64)
    c = ds.n_classes
    if flip.size != c:
        raise DataError(f"need {c} flip probabilities, got {flip.size}")
    if np.any(flip < 0) or np.any(flip > 1):
        raise DataError(f"flip probabilities must lie in [0, 1], got {flip}")
    rng = np.random.default_rng(seed)
    u = rng.random(ds.n)
    shift = rng.integers(1, c, size=ds.n) if c > 2 else np.ones(ds.n, dtype=np.int64)
    flipped = (u < flip[ds.y_true]) & (ds.y_obs != MISSING)
    y_obs = np.where(flipped, (ds.y_true + shift) % c, ds.y_obs)
    meta = dict(ds.meta, flip=flip.tolist(), corruption_seed=seed,
                noise_matrix=per_class_flip(flip).to_list())
    return replace(ds, y_obs=y_obs, meta=meta)


def select_labeled(ds, per_class, seed=0, stratify="observed"):
    """Keep ``per_class`` observed labels per class and hide the rest.

    ``stratify="observed"`` groups rows by their (possibly corrupted) label,
    which is all a learner could see.  ``stratify="true"`` groups by the true
    class, so the selection does not depend on the corruption and the labeled
    rows still follow the noise channel p(y' | y).
    """
    if stratify not in ("observed", "true"):
        raise DataError(f"stratify must be 'observed' or 'true', got {stratify!r}")
    rng = np.random.default_rng(seed)
    key = ds.y_obs if stratify == "observed" else np.where(ds.y_obs != MISSING, ds.y_true, MISSING)
    keep = []
    for k in range(ds.n_classes):
        rows = np.flatnonzero(key == k)
        if rows.size < per_class:
            raise DataError(
                f"{stratify} class {k} has {rows.size} labeled rows, cannot select {per_class}")
        keep.append(rng.choice(rows, size=per_class, replace=False))
    keep = np.sort(np.concatenate(keep))
    y_obs = np.full(ds.n, MISSING)
    y_obs[keep] = ds.y_obs[keep]
    meta = dict(ds.meta, per_class=per_class, selection_seed=seed,
                stratify=f"by {stratify} label, after corruption")
    return replace(ds, y_obs=y_obs, meta=meta)


def load_csv(path, label_column, feature_columns=None, labels=None, log1p=False):
    """Read a header-first CSV; the label column becomes ``y_true``.

    Labels map to class indices in ``labels`` order when given, otherwise in
    sorted order of the distinct strings.  All rows start fully observed.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: no label column {label_column!r} in header {header}")
        if feature_columns is None:
            feature_columns = [h for h in header if h != label_column]
        missing = [f for f in feature_columns if f not in header]
        if missing:
            raise DataError(f"{path}: feature columns not in header: {missing}")
        li = header.index(label_column)
        fi = [header.index(f) for f in feature_columns]
        rows, raw_labels = [], []
        for line, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(rec[i]) for i in fi])
            except ValueError:
                bad = next(i for i in fi if not _is_float(rec[i]))
                raise DataError(
                    f"{path}:{line}: column {header[bad]!r} is not numeric: {rec[bad]!r}") from None
            raw_labels.append(rec[li])
    known = list(labels) if labels is not None else sorted(set(raw_labels))
    index = {lab: i for i, lab in enumerate(known)}
    unknown = sorted(set(raw_labels) - set(index))
    if unknown:
        raise DataError(f"{path}: unknown labels {unknown}; known labels are {known}")
    if len(known) < 2:
        raise DataError(f"{path}: need at least two classes, found {known}")
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(fi))
    if log1p:
        x = np.log1p(x)
    y = np.array([index[lab] for lab in raw_labels], dtype=np.int64)
    meta = {"source": str(path), "labels": known, "features": list(feature_columns),
            "log1p": bool(log1p)}
    return LabeledDataset(x, y, y.copy(), len(known), meta=meta)


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_csv(ds, path, label_column="label", labels=None):
    """Write features and true labels; floats use repr so loading is exact."""
    names = labels if labels is not None else ds.meta.get("labels") or [
        str(k) for k in range(ds.n_classes)]
    features = ds.meta.get("features") or [f"x{i}" for i in range(ds.d_x)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*features, label_column])
        for row, y in zip(ds.x, ds.y_true):
            w.writerow([repr(float(v)) for v in row] + [names[y]])
