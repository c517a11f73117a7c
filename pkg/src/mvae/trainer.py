"""Minibatch stochastic-gradient training of the M-VAE or M1+M2 objective."""

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ad
from .errors import ConfigError, NonFiniteError, TrainingError
from .model import predict_labels
from .objective import MISSING, PSI_MODES, STANDARD, TERM_NAMES, combine, draw_noise, row_terms

MVAE = "mvae"
M1M2 = "m1m2"
OBJECTIVES = (MVAE, M1M2)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class TrainConfig:
    objective: str = MVAE
    alpha: float = None
    epochs: int = 50
    batch_size: int = 100
    learning_rate: float = 1e-3
    n_mc: int = 1
    seed: int = 0
    psi_mode: str = STANDARD
    labeled_weight: float = 1.0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.objective == M1M2 and (self.alpha is None or not np.isfinite(self.alpha)):
            raise ConfigError("the m1m2 objective needs a finite alpha")
        if self.epochs < 1 or self.batch_size < 1 or self.n_mc < 1:
            raise ConfigError("epochs, batch_size and n_mc must all be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not self.labeled_weight > 0:
            raise ConfigError(f"labeled_weight must be positive, got {self.labeled_weight}")
        if self.psi_mode not in PSI_MODES:
            raise ConfigError(f"psi_mode must be one of {PSI_MODES}")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    elbo: float
    train_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def elbo(self):
        return np.array([r.elbo for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "elbo", "train_acc", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.elbo), repr(r.train_acc), f"{r.seconds:.6f}"])


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr):
    """One Adam descent step; returns new (params, state) without mutating inputs."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient {i} is not finite", term=f"grad[{i}]")
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1, c2 = 1.0 - BETA1 ** t, 1.0 - BETA2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def _offending_term(terms):
    for k in TERM_NAMES:
        if not np.all(np.isfinite(ad.value(terms[k]))):
            return k
    return "total"


def train(model, data, cfg, checkpoint=None):
    """Maximise the configured objective; returns (trained copy, history).

    ``checkpoint(epoch, model)`` is called every ``cfg.checkpoint_every`` epochs.
    The input model is not modified.
    """
    if data.n == 0:
        raise ConfigError("cannot train on an empty dataset")
    if data.d_x != model.dims.d_x or data.n_classes != model.dims.n_classes:
        raise ConfigError("dataset and model dimensions disagree")
    m = model.copy()
    params = m.parameters()
    state = AdamState.zeros_like([p.data for p in params])
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    alpha = cfg.alpha if cfg.objective == M1M2 else None
    x, y_obs = data.x, data.y_obs
    labeled = data.labeled_idx
    row_weight = np.where(y_obs != MISSING, cfg.labeled_weight, 1.0)
    history = TrainHistory()
    start = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(data.n)
        elbo_sum = 0.0
        for b in range(0, data.n, cfg.batch_size):
            idx = perm[b:b + cfg.batch_size]
            draws = draw_noise(rng, cfg.n_mc, idx.size, m.dims)
            for p in params:
                p.grad = None
            terms = row_terms(m, x[idx], y_obs[idx], draws, cfg.psi_mode, alpha)
            total = combine(*(terms[k] for k in TERM_NAMES))
            w = row_weight[idx]
            loss = -ad.sum(total * (w / w.sum()))
            if not np.isfinite(loss.item()):
                term = _offending_term(terms)
                raise TrainingError(
                    f"epoch {epoch}: non-finite objective (term {term!r})", term=term, epoch=epoch)
            loss.backward()
            grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
            try:
                new, state = adam_step([p.data for p in params], grads, state, cfg.learning_rate)
            except NonFiniteError as err:
                raise TrainingError(f"epoch {epoch}: {err}", term=err.term, epoch=epoch) from err
            for p, a in zip(params, new):
                p.data = a
            elbo_sum += float(np.sum(ad.value(total)))
        if not all(np.all(np.isfinite(p.data)) for p in params):
            raise TrainingError(f"epoch {epoch}: parameters became non-finite", epoch=epoch)
        history.records.append(EpochRecord(
            epoch=epoch, elbo=elbo_sum, train_acc=_labeled_accuracy(m, x, y_obs, labeled),
            seconds=time.perf_counter() - start))
        if checkpoint is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint(epoch, m)
    return m, history


def _labeled_accuracy(m, x, y_obs, labeled):
    if labeled.size == 0:
        return float("nan")
    return float(np.mean(predict_labels(m, x[labeled]) == y_obs[labeled]))
