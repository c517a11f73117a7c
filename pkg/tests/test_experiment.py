import json
import math
from dataclasses import asdict, replace

import numpy as np
import pytest
from scipy.stats import norm

from mvae.errors import ConfigError
from mvae.experiment import (
    RESULT_FIELDS,
    ExperimentConfig,
    ResultRow,
    build_dataset,
    emit_results,
    evaluate_run,
    load_results,
    run_dir_name,
    run_single,
    run_sweep,
    summarize,
)
from mvae.networks import load_arrays
from mvae.noise import f_weight


def _cfg(**kw):
    base = dict(
        data={"kind": "mixture", "n_per_class": 30, "separation": 2.5, "std": 1.0},
        flip=[0.2, 0.3], per_class=5, train={"epochs": 2, "batch_size": 20},
        seeds=[0], eval_n_mc=4)
    base.update(kw)
    return ExperimentConfig(**base)


def _strip(row):
    d = asdict(row)
    d.pop("runtime")
    return d


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = _cfg(sweep={"p0": 0.2, "p1": [0.1]}, alpha=1.5)
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.load(path) == cfg

    @pytest.mark.parametrize("kw", [
        {"seeds": []}, {"sweep": {"p0": 0.2, "p1": []}}, {"sweep": {"p1": [0.1]}},
        {"objective": "m3"}, {"stratify": "both"}, {"holdout_fraction": 1.0},
        {"train": {"epoch": 3}}, {"per_class": 0},
    ])
    def test_rejected(self, kw):
        with pytest.raises(ConfigError):
            _cfg(**kw)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"seed": 3})

    def test_unreadable_file(self, tmp_path):
        bad = tmp_path / "c.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(bad)

    def test_all_labeled(self):
        assert _cfg(per_class="all").per_class is None


class TestRunSingle:
    def test_row(self):
        row = run_single(_cfg())
        assert (row.p0, row.p1, row.seed, row.objective) == (0.2, 0.3, 0, "mvae")
        assert row.alpha is None and row.epochs == 2 and row.error == ""
        assert 0.0 <= row.accuracy <= 1.0 and math.isfinite(row.elbo)

    def test_oracle_alpha(self):
        row = run_single(_cfg(), objective="m1m2")
        assert row.alpha == pytest.approx(f_weight(0.25, 2), abs=1e-15)
        assert run_single(_cfg(alpha=0.7), objective="m1m2").alpha == 0.7

    def test_deterministic(self, tmp_path):
        a = run_single(_cfg(train={"epochs": 2, "checkpoint_every": 1}), out_dir=tmp_path / "a")
        b = run_single(_cfg(train={"epochs": 2, "checkpoint_every": 1}), out_dir=tmp_path / "b")
        assert _strip(a) == _strip(b)
        name = run_dir_name(0.2, 0.3, 0, "mvae")
        for f in ("model.bin", "checkpoint_epoch0001.bin", "checkpoint_epoch0002.bin"):
            a_bytes = (tmp_path / "a" / name / f).read_bytes()
            assert a_bytes == (tmp_path / "b" / name / f).read_bytes()

    def test_outputs(self, tmp_path):
        row = run_single(_cfg(), out_dir=tmp_path)
        d = tmp_path / run_dir_name(0.2, 0.3, 0, "mvae")
        manifest = json.loads((d / "manifest.json").read_text())
        assert manifest["flip"] == [0.2, 0.3] and manifest["seed"] == 0
        assert manifest["n_labeled"] == 10
        np.testing.assert_allclose(manifest["noise_matrix"], [[0.8, 0.2], [0.3, 0.7]])
        assert (d / "history.csv").read_text().count("\n") == 3
        assert evaluate_run(d)["accuracy"] == row.accuracy

    def test_easy_mixture_fully_labeled(self):
        # classes three standard deviations either side of the origin
        cfg = _cfg(data={"kind": "mixture", "n_per_class": 200, "separation": 6.0, "std": 1.0},
                   flip=[0.0, 0.0], per_class="all",
                   train={"epochs": 30, "batch_size": 50, "learning_rate": 1e-2})
        ds = build_dataset(cfg, 0)
        # equal priors and covariances: the likelihood-ratio rule is the sign of x0
        bayes = np.mean((ds.x[:, 0] > 0).astype(int) == ds.y_true)
        assert bayes > 0.95 and abs(bayes - norm.cdf(3.0)) < 3 * math.sqrt(0.00135 / 400)
        assert run_single(cfg).accuracy > 0.95

    def test_final_elbo_offset_between_objectives(self):
        eps = 0.3
        cfg = _cfg(flip=[eps, eps], noise={"kind": "uniform", "epsilon": eps},
                   train={"epochs": 3, "batch_size": 20, "learning_rate": 1e-2})
        mvae = run_single(cfg, objective="mvae")
        m1m2 = run_single(cfg, objective="m1m2")
        assert m1m2.alpha == f_weight(eps, 2)
        assert abs(mvae.elbo - m1m2.elbo - 10 * math.log(eps)) < 1e-6
        assert mvae.accuracy == m1m2.accuracy

    def test_eval_with_linear_classifier(self, tmp_path):
        cfg = _cfg(model={"d_z1": 2, "d_z2": 2, "hidden": [8], "classifier_hidden": []})
        row = run_single(cfg, out_dir=tmp_path)
        d = tmp_path / run_dir_name(0.2, 0.3, 0, "mvae")
        assert evaluate_run(d)["accuracy"] == row.accuracy

    def test_holdout(self, tmp_path):
        cfg = _cfg(holdout_fraction=0.25)
        run_single(cfg, out_dir=tmp_path)
        assert evaluate_run(tmp_path / run_dir_name(0.2, 0.3, 0, "mvae"))["n_eval"] == 15

    def test_flip_length(self):
        with pytest.raises(ConfigError):
            run_single(_cfg(flip=[0.1, 0.2, 0.3]))


class TestSweep:
    def test_row_count_and_order(self):
        grid = [0.45, 0.1, 0.3]
        rows = run_sweep(_cfg(sweep={"p0": 0.2, "p1": grid}, seeds=[3, 1],
                              train={"epochs": 1, "batch_size": 30}))
        assert len(rows) == 2 * len(grid) * 2
        keys = [(r.p1, r.seed, r.objective) for r in rows]
        assert keys == sorted(keys)
        assert {r.p0 for r in rows} == {0.2}

    def test_singleton_grid_matches_run_single(self):
        cfg = _cfg(sweep={"p0": 0.2, "p1": [0.3]})
        rows = run_sweep(cfg)
        singles = [run_single(cfg, flip=[0.2, 0.3], objective=o) for o in ("m1m2", "mvae")]
        assert [_strip(r) for r in rows] == [_strip(r) for r in singles]

    def test_failed_cell_becomes_error_row(self):
        # with every class-0 label flipped no row is observed as class 0
        rows = run_sweep(_cfg(flip=None, sweep={"p0": 1.0, "p1": [0.0]}, stratify="observed"))
        assert len(rows) == 2
        assert all("DataError" in r.error and r.accuracy is None for r in rows)

    def test_parallel_matches_serial(self):
        cfg = _cfg(sweep={"p0": 0.2, "p1": [0.1, 0.4]}, train={"epochs": 1, "batch_size": 30})
        serial = [_strip(r) for r in run_sweep(cfg, jobs=1)]
        assert [_strip(r) for r in run_sweep(cfg, jobs=2)] == serial

    def test_equal_flip_rates_train_identically(self, tmp_path):
        eps = 0.2
        cfg = _cfg(sweep={"p0": eps, "p1": [eps]}, train={"epochs": 2, "batch_size": 20,
                                                          "learning_rate": 1e-2})
        run_sweep(cfg, out_dir=tmp_path)
        a = load_arrays(tmp_path / run_dir_name(eps, eps, 0, "mvae") / "model.bin")
        b = load_arrays(tmp_path / run_dir_name(eps, eps, 0, "m1m2") / "model.bin")
        for p, q in zip(a, b):
            np.testing.assert_allclose(p, q, rtol=1e-8, atol=1e-10)

    def test_summarize_skips_errors(self):
        rows = [ResultRow(0.2, 0.1, 0, "mvae", None, 0.8, -1.0, 1, 0.0),
                ResultRow(0.2, 0.1, 1, "mvae", None, 0.6, -1.0, 1, 0.0),
                ResultRow(0.2, 0.1, 2, "mvae", None, None, None, 1, 0.0, "boom")]
        assert summarize(rows) == {(0.1, "mvae"): pytest.approx(0.7)}


class TestEmit:
    rows = [ResultRow(0.2, 0.1, 0, "m1m2", 1.7346010553881062, 0.75, -612.25, 10, 1.5),
            ResultRow(0.2, 0.1, 0, "mvae", None, 0.8, -600.125, 10, 1.25),
            ResultRow(0.2, 0.45, 1, "mvae", None, None, None, 10, 0.0, "DataError: x, y")]

    def test_empty_csv_is_header_only(self, tmp_path):
        p = emit_results([], tmp_path / "r.csv")
        assert p.read_text() == ",".join(RESULT_FIELDS) + "\n"

    def test_column_order(self):
        assert RESULT_FIELDS == ["p0", "p1", "seed", "objective", "alpha", "accuracy", "elbo",
                                 "epochs", "runtime", "error"]

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt):
        p = emit_results(self.rows, tmp_path / f"r.{fmt}", fmt)
        assert load_results(p) == self.rows

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_byte_stable(self, tmp_path, fmt):
        a = emit_results(self.rows, tmp_path / f"a.{fmt}", fmt).read_bytes()
        b = emit_results(list(self.rows), tmp_path / f"b.{fmt}", fmt).read_bytes()
        assert a == b

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(Exception, match="missing"):
            emit_results(self.rows, tmp_path / "missing" / "r.csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_results(self.rows, tmp_path / "r.txt", "xml")


def test_replace_keeps_validation():
    with pytest.raises(ConfigError):
        replace(_cfg(), seeds=[])
