"""Corruption experiments: single runs, p1 sweeps, and result files.

A run builds a dataset, corrupts its labels with per-class flip
probabilities, keeps a few labeled rows per class, trains one objective and
reports accuracy against the true labels.  All randomness is derived from
the run seed, so the two objectives of a sweep cell see the same data,
initialisation and training draws.
"""

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import ConfigError, MVaeError
from .model import ModelDims, build_model, predict_labels
from .networks import load_arrays, save_arrays
from .noise import f_weight, from_spec, per_class_flip, with_floor
from .objective import batch_breakdown
from .trainer import M1M2, MVAE, OBJECTIVES, TrainConfig, train

log = logging.getLogger(__name__)

# stream ids for SeedSequence([seed, stream])
_DATA, _CORRUPT, _SELECT, _INIT, _EVAL, _SPLIT = 1, 2, 3, 4, 5, 6


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {
        "kind": "mixture", "n_classes": 2, "n_per_class": 500, "d_x": 2,
        "separation": 2.5, "std": 1.0})
    flip: list = None
    sweep: dict = None
    per_class: int = 10
    stratify: str = "observed"
    model: dict = field(default_factory=lambda: {"d_z1": 2, "d_z2": 2, "hidden": [32]})
    noise: object = None
    noise_floor: float = 1e-3
    train: dict = field(default_factory=dict)
    objective: str = MVAE
    alpha: float = None
    seeds: list = field(default_factory=lambda: [0])
    eval_n_mc: int = 64
    holdout_fraction: float = 0.0
    out_dir: str = None

    def __post_init__(self):
        if self.per_class == "all":
            self.per_class = None
        if self.per_class is not None and (not isinstance(self.per_class, int) or self.per_class < 1):
            raise ConfigError("per_class must be a positive integer, 'all' or null")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.sweep is not None:
            if "p0" not in self.sweep or not self.sweep.get("p1"):
                raise ConfigError("sweep needs p0 and a non-empty p1 grid")
        if self.stratify not in ("observed", "true"):
            raise ConfigError("stratify must be 'observed' or 'true'")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        unknown = set(self.train) - {f.name for f in fields(TrainConfig)}
        if unknown:
            raise ConfigError(f"unknown train keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"{path}: {err}") from err

    def to_dict(self):
        return asdict(self)

    @property
    def n_classes(self):
        if self.data.get("kind") == "mixture":
            return len(self.data["means"]) if "means" in self.data else self.data.get("n_classes", 2)
        return len(self.data["labels"]) if self.data.get("labels") else None


@dataclass
class ResultRow:
    p0: float
    p1: float
    seed: int
    objective: str
    alpha: float
    accuracy: float
    elbo: float
    epochs: int
    runtime: float
    error: str = ""


RESULT_FIELDS = [f.name for f in fields(ResultRow)]


def _seq(seed, stream):
    return [int(seed), stream]


def build_dataset(cfg, seed):
    spec = dict(cfg.data)
    kind = spec.pop("kind", "mixture")
    if kind == "mixture":
        if "means" in spec:
            mix = data_mod.MixtureConfig(spec["means"], spec.get("std", 1.0),
                                         spec.get("n_per_class", 500))
        else:
            if spec.get("n_classes", 2) != 2:
                raise ConfigError("mixtures with more than two classes need explicit means")
            mix = data_mod.MixtureConfig.two_class(
                spec.get("separation", 2.5), spec.get("std", 1.0),
                spec.get("n_per_class", 500), spec.get("d_x", 2))
        return data_mod.generate_mixture(mix, seed=_seq(seed, _DATA))
    if kind == "csv":
        return data_mod.load_csv(spec["path"], spec["label_column"], spec.get("feature_columns"),
                                 spec.get("labels"), spec.get("log1p", False))
    raise ConfigError(f"unknown data kind {kind!r}")


def sweep_flip(p0, p1, n_classes):
    """Class 0 flips with p0, every other class with p1."""
    return [float(p0)] + [float(p1)] * (n_classes - 1)


@dataclass
class PreparedRun:
    train_set: object
    eval_set: object
    noise: object
    alpha: float


def prepare(cfg, seed, flip, objective):
    full = build_dataset(cfg, seed)
    c = full.n_classes
    flip = list(flip) if flip is not None else [0.0] * c
    if len(flip) != c:
        raise ConfigError(f"flip vector has {len(flip)} entries for {c} classes")
    ds = data_mod.corrupt_labels(full, flip, seed=_seq(seed, _CORRUPT))
    train_set = eval_set = ds
    if cfg.holdout_fraction > 0:
        perm = np.random.default_rng(_seq(seed, _SPLIT)).permutation(ds.n)
        n_eval = int(round(cfg.holdout_fraction * ds.n))
        eval_set = ds.subset(np.sort(perm[:n_eval]))
        train_set = ds.subset(np.sort(perm[n_eval:]))
    if cfg.per_class is not None:
        train_set = data_mod.select_labeled(train_set, cfg.per_class, seed=_seq(seed, _SELECT),
                                            stratify=cfg.stratify)
    noise = from_spec(cfg.noise, c) if cfg.noise is not None else per_class_flip(flip)
    noise = with_floor(noise, cfg.noise_floor)
    alpha = None
    if objective == M1M2:
        if cfg.alpha is not None:
            alpha = float(cfg.alpha)
        else:
            # oracle weight at the average corruption rate, kept inside f's domain
            eps = min(max(float(np.mean(flip)), cfg.noise_floor), 1 - cfg.noise_floor)
            alpha = f_weight(eps, c)
    return PreparedRun(train_set, eval_set, noise, alpha)


def run_dir_name(p0, p1, seed, objective):
    return f"p0={p0:g}_p1={p1:g}_seed={seed}_{objective}"


def run_single(cfg, seed=None, flip=None, objective=None, out_dir=None):
    """Train and evaluate one (flip, seed, objective) cell."""
    seed = cfg.seeds[0] if seed is None else seed
    objective = objective or cfg.objective
    flip = flip if flip is not None else cfg.flip
    start = time.perf_counter()
    run = prepare(cfg, seed, flip, objective)
    c = run.train_set.n_classes
    m = cfg.model
    dims = ModelDims(run.train_set.d_x, m.get("d_z1", 2), m.get("d_z2", 2), c)
    model = build_model(dims, hidden=m.get("hidden", [32]), seed=_seq(seed, _INIT),
                        noise=run.noise, classifier_hidden=m.get("classifier_hidden"))
    tcfg = TrainConfig(**{**cfg.train, "objective": objective, "alpha": run.alpha,
                          "seed": int(seed)})
    flip_used = run.train_set.meta["flip"]
    p0, p1 = flip_used[0], flip_used[1]
    target = Path(out_dir) / run_dir_name(p0, p1, seed, objective) if out_dir else None
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)

    def checkpoint(epoch, mdl):
        save_arrays(target / f"checkpoint_epoch{epoch:04d}.bin", mdl.get_arrays())

    trained, history = train(model, run.train_set, tcfg,
                             checkpoint=checkpoint if target is not None else None)
    ev = run.eval_set
    accuracy = float(np.mean(predict_labels(trained, ev.x) == ev.y_true))
    ts = run.train_set
    terms = batch_breakdown(trained, ts.x, ts.y_obs, n_mc=cfg.eval_n_mc,
                            seed=_seq(seed, _EVAL), mode=tcfg.psi_mode, alpha=run.alpha).summed()
    elbo = terms.total
    row = ResultRow(p0=p0, p1=p1, seed=int(seed), objective=objective, alpha=run.alpha,
                    accuracy=accuracy, elbo=elbo, epochs=tcfg.epochs,
                    runtime=time.perf_counter() - start)
    if target is not None:
        save_arrays(target / "model.bin", trained.get_arrays())
        history.write_csv(target / "history.csv")
        manifest = {
            "config": cfg.to_dict(), "seed": int(seed), "objective": objective,
            "flip": flip_used, "alpha": run.alpha,
            "dims": asdict(dims), "hidden": list(m.get("hidden", [32])),
            "classifier_hidden": m.get("classifier_hidden"),
            "prior_y": trained.prior_y.tolist(), "noise_matrix": run.noise.to_list(),
            "n_labeled": ts.n_labeled, "dataset": {k: v for k, v in ts.meta.items()
                                                   if k != "noise_matrix"},
        }
        (target / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
        result = {**asdict(row), "elbo_terms": terms.as_dict()}
        (target / "result.json").write_text(json.dumps(result, indent=2))
    return row


def _json_default(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _sweep_cell(args):
    cfg, p1, seed, objective, out_dir = args
    flip = sweep_flip(cfg.sweep["p0"], p1, cfg.n_classes or 2)
    try:
        return run_single(cfg, seed=seed, flip=flip, objective=objective, out_dir=out_dir)
    except MVaeError as err:
        log.warning("run p1=%s seed=%s %s failed: %s", p1, seed, objective, err)
        return ResultRow(p0=float(cfg.sweep["p0"]), p1=float(p1), seed=int(seed),
                         objective=objective, alpha=None, accuracy=None, elbo=None,
                         epochs=cfg.train.get("epochs", TrainConfig.epochs), runtime=0.0,
                         error=f"{type(err).__name__}: {err}")


def run_sweep(cfg, jobs=1, out_dir=None, objectives=OBJECTIVES):
    """Every (p1, seed, objective) cell; rows sorted by (p1, seed, objective)."""
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    cells = [(cfg, float(p1), int(s), obj, out_dir)
             for p1 in cfg.sweep["p1"] for s in cfg.seeds for obj in objectives]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    return sorted(rows, key=lambda r: (r.p1, r.seed, r.objective))


def summarize(rows):
    """Mean accuracy per (p1, objective), ignoring error rows."""
    out = {}
    for r in rows:
        if r.accuracy is not None:
            out.setdefault((r.p1, r.objective), []).append(r.accuracy)
    return {k: float(np.mean(v)) for k, v in sorted(out.items())}


# result files ----------------------------------------------------------------


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, fh, fmt="csv"):
    """Serialise rows to an open text stream."""
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in rows:
            w.writerow([_cell(getattr(r, f)) for f in RESULT_FIELDS])
    elif fmt == "json":
        fh.write(json.dumps([asdict(r) for r in rows], indent=2) + "\n")
    else:
        raise ConfigError(f"unknown result format {fmt!r}")


def emit_results(rows, path, fmt="csv"):
    """Write rows as CSV (one column per ResultRow field, in order) or JSON."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown result format {fmt!r}")
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_rows(rows, fh, fmt)
    except OSError as err:
        raise MVaeError(f"cannot write results to {path}: {err}") from err
    return path


_TYPES = {"p0": float, "p1": float, "seed": int, "objective": str, "alpha": float,
          "accuracy": float, "elbo": float, "epochs": int, "runtime": float, "error": str}


def load_results(path):
    path = Path(path)
    if path.suffix == ".json":
        return [ResultRow(**d) for d in json.loads(path.read_text(encoding="utf-8"))]
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(ResultRow(**{
                k: (None if rec[k] == "" and k != "error" else _TYPES[k](rec[k]))
                for k in RESULT_FIELDS}))
    return rows


def evaluate_run(run_dir):
    """Reload a run directory's final model and recompute its accuracy."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = ExperimentConfig.from_dict(manifest["config"])
    run = prepare(cfg, manifest["seed"], manifest["flip"], manifest["objective"])
    dims = ModelDims(**manifest["dims"])
    model = build_model(dims, hidden=manifest["hidden"], seed=0, noise=run.noise,
                        classifier_hidden=manifest.get("classifier_hidden"))
    model.set_arrays(load_arrays(run_dir / "model.bin"))
    ev = run.eval_set
    acc = float(np.mean(predict_labels(model, ev.x) == ev.y_true))
    return {"run_dir": str(run_dir), "accuracy": acc, "n_eval": ev.n,
            "n_labeled": run.train_set.n_labeled}


def with_overrides(cfg, **kw):
    """Copy of cfg with top-level fields or ``train.<key>`` entries replaced."""
    top = {k: v for k, v in kw.items() if v is not None and not k.startswith("train.")}
    train_kw = {k[6:]: v for k, v in kw.items() if v is not None and k.startswith("train.")}
    new = replace(cfg, **top)
    if train_kw:
        new = replace(new, train={**new.train, **train_kw})
    return new


def is_finite(x):
    return x is not None and math.isfinite(x)
