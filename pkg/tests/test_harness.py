import json

import numpy as np
import pytest

from tempcal import harness as hn
from tempcal import linreg_known as lrk
from tempcal import linreg_unknown as lru
from tempcal.core import Dataset, GaussianPrior
from tempcal.datasets import gen_linreg


def tiny_config(**overrides):
    base = {
        "model": "linreg_known",
        "dataset": {"setting": "linreg", "n": 16, "d": 2, "sigma2": 1.0},
        "strategies": ["bayes", "sample_split"],
        "repetitions": 2,
        "seed": 3,
        "strategy_cfg": {"boot": 10, "sgd": {"max_iters": 10}},
    }
    base.update(overrides)
    return hn.config_from_json(base)


class TestConfigParsing:
    def test_unknown_top_level_key(self):
        with pytest.raises(hn.ConfigError, match="unknown key"):
            tiny_config(bogus=1)

    def test_unknown_nested_keys(self):
        with pytest.raises(hn.ConfigError):
            tiny_config(dataset={"setting": "linreg", "n": 8, "d": 1, "sigma2": 1.0, "extra": 2})
        with pytest.raises(hn.ConfigError):
            tiny_config(strategy_cfg={"mc": 100, "nope": 1})
        with pytest.raises(hn.ConfigError):
            tiny_config(model_params={"sigma2": 1.0, "wat": 3})

    def test_model_dataset_compatibility(self):
        with pytest.raises(hn.ConfigError, match="incompatible"):
            tiny_config(dataset={"setting": "logistic", "n": 10, "d": 2})

    def test_bad_strategy_name(self):
        with pytest.raises(hn.ConfigError):
            tiny_config(strategies=["bayes", "magic"])

    def test_bad_evaluation_mode(self):
        with pytest.raises(hn.ConfigError):
            tiny_config(evaluation="vibes")

    def test_roundtrip_json(self):
        cfg = tiny_config()
        again = hn.config_from_json(cfg.to_json())
        assert again == cfg


class TestOracleRisk:
    def test_delta_posterior_at_truth_gives_half(self):
        rng = np.random.default_rng(0)
        theta = rng.standard_normal(3)
        data, truth = gen_linreg(50_000, 3, theta, 2.0, rng)
        model = lrk.KnownVarModel(2.0, GaussianPrior.standard(3))
        post = lrk.GaussianPosterior(theta, np.zeros((3, 3)))
        risk = hn.oracle_risk(model, post, data)
        assert risk == pytest.approx(0.5, abs=0.02)

    def test_informative_bayes_beats_prior(self):
        rng = np.random.default_rng(1)
        theta = rng.standard_normal(3)
        data, truth = gen_linreg(60, 3, theta, 1.0, rng)
        test, _ = gen_linreg(5000, 3, theta, 1.0, np.random.default_rng(2))
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(3))
        prior_post = lrk.fit(model, data, 0.0)
        bayes_post = lrk.fit(model, data, float(data.n))
        assert hn.oracle_risk(model, bayes_post, test) < hn.oracle_risk(model, prior_post, test)

    def test_test_size_stability(self):
        rng = np.random.default_rng(3)
        theta = rng.standard_normal(2)
        data, truth = gen_linreg(30, 2, theta, 1.0, rng)
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(2))
        post = lrk.fit(model, data, 30.0)
        small, _ = gen_linreg(3000, 2, theta, 1.0, np.random.default_rng(5))
        big, _ = gen_linreg(6000, 2, theta, 1.0, np.random.default_rng(6))
        a = hn.oracle_risk(model, post, small)
        b = hn.oracle_risk(model, post, big)
        assert abs(a - b) < 0.05 * max(a, b)

    def test_plug_in_mode_drops_spread(self):
        rng = np.random.default_rng(4)
        data, truth = gen_linreg(20, 2, rng.standard_normal(2), 1.0, rng)
        model = lrk.KnownVarModel(1.0, GaussianPrior.standard(2))
        post = lrk.fit(model, data, 5.0)
        plug = hn.oracle_risk(model, post, data, mode="plug_in")
        draw = hn.oracle_risk(model, post, data, mode="draw_averaged")
        assert plug < draw  # the trace term is strictly positive here


class TestRunExperiment:
    def test_single_bayes_repetition(self):
        cfg = tiny_config(strategies=["bayes"], repetitions=1)
        res = hn.run_experiment(cfg)
        assert len(res.repetitions) == 1
        out = res.repetitions[0].outcomes["bayes"]
        assert out.alpha_over_n == 1.0
        assert res.failures == []

    def test_deterministic_rerun(self):
        cfg = tiny_config()
        a = hn.run_experiment(cfg)
        b = hn.run_experiment(cfg)
        for ra, rb in zip(a.repetitions, b.repetitions):
            for name in ra.outcomes:
                assert ra.outcomes[name].alpha == rb.outcomes[name].alpha
                assert ra.outcomes[name].oracle_risk == rb.outcomes[name].oracle_risk
            assert ra.alpha_star == rb.alpha_star
            assert ra.min_risk == rb.min_risk

    def test_parallel_equals_serial(self):
        serial = hn.run_experiment(tiny_config())
        parallel = hn.run_experiment(tiny_config(workers=2))
        for ra, rb in zip(serial.repetitions, parallel.repetitions):
            assert ra.index == rb.index
            for name in ra.outcomes:
                assert ra.outcomes[name].alpha == rb.outcomes[name].alpha
                assert ra.outcomes[name].oracle_risk == rb.outcomes[name].oracle_risk

    def test_oracle_optimality_invariants(self):
        cfg = tiny_config(repetitions=4, strategies=["bayes", "naive", "sample_split"])
        res = hn.run_experiment(cfg)
        assert res.failures == []
        for rep in res.repetitions:
            assert rep.min_risk <= rep.risk_star + 1e-9
            for out in rep.outcomes.values():
                assert out.oracle_risk >= rep.risk_star - 1e-7 * (1 + abs(rep.risk_star))

    def test_freeze_design_shares_design_across_reps(self):
        cfg = tiny_config(freeze_design=True, repetitions=2)
        rng0 = np.random.default_rng([cfg.seed, 900])
        d0, _ = hn.generate_setting(cfg.dataset, np.random.default_rng(cfg.seed + 0), design_rng=rng0)
        rng1 = np.random.default_rng([cfg.seed, 900])
        d1, _ = hn.generate_setting(cfg.dataset, np.random.default_rng(cfg.seed + 1), design_rng=rng1)
        np.testing.assert_array_equal(d0.Z, d1.Z)
        assert not np.array_equal(d0.Y, d1.Y)

    def test_partial_failure_recorded(self):
        # sample splitting needs n >= 2; a 1-row dataset fails that cell only
        cfg = tiny_config(
            dataset={"setting": "linreg", "n": 1, "d": 1, "sigma2": 1.0},
            strategies=["bayes", "sample_split"],
            repetitions=1,
        )
        res = hn.run_experiment(cfg)
        assert "bayes" in res.repetitions[0].outcomes
        assert any(f["strategy"] == "sample_split" for f in res.failures)


class TestNigAndLogisticPaths:
    def test_nig_experiment_runs(self):
        cfg = hn.config_from_json(
            {
                "model": "linreg_unknown",
                "dataset": {"setting": "gmm", "n": 14, "d": 2, "sigma2": 4.0, "delta2": 0.1, "p": 0.5},
                "strategies": ["bayes", "safebayes"],
                "repetitions": 2,
                "seed": 1,
            }
        )
        res = hn.run_experiment(cfg)
        assert res.failures == []
        assert all(len(rep.outcomes) == 2 for rep in res.repetitions)

    def test_logistic_experiment_runs(self):
        cfg = hn.config_from_json(
            {
                "model": "logistic_jaakkola",
                "dataset": {"setting": "logistic", "n": 12, "d": 2},
                "strategies": ["bayes", "sample_split"],
                "repetitions": 1,
                "seed": 2,
                "grid_points": 8,
                "test_multiplier": 10,
                "strategy_cfg": {"mc": 32, "sgd": {"max_iters": 5}},
            }
        )
        res = hn.run_experiment(cfg)
        assert res.failures == []


class TestSummaries:
    def test_singleton_summary_collapses(self):
        cfg = tiny_config(strategies=["bayes"], repetitions=1)
        rows = hn.summarize_boxplot(hn.run_experiment(cfg))
        bayes = next(r for r in rows if r["strategy"] == "bayes")
        assert bayes["min"] == bayes["q1"] == bayes["median"] == bayes["q3"] == bayes["max"]

    def test_reference_rows_present_and_ordered(self):
        cfg = tiny_config(repetitions=3)
        rows = hn.summarize_boxplot(hn.run_experiment(cfg))
        names = [r["strategy"] for r in rows]
        assert "alpha_star" in names and "min_risk" in names
        star = next(r for r in rows if r["strategy"] == "alpha_star")
        for r in rows:
            if r["strategy"] not in ("alpha_star", "min_risk"):
                assert star["median"] <= r["median"] + 1e-9

    def test_adding_larger_risk_moves_max_only(self):
        vals = [0.5, 0.7, 0.9]
        import numpy as np

        base = {
            "min": min(vals),
            "q1": float(np.percentile(vals, 25)),
            "median": float(np.median(vals)),
            "q3": float(np.percentile(vals, 75)),
            "max": max(vals),
        }
        grown = vals + [5.0]
        assert max(grown) == 5.0 and min(grown) == base["min"]


class TestRiskCurve:
    def test_grid_endpoints_and_columns(self):
        cfg = tiny_config(grid_points=5)
        rows = hn.risk_curve(cfg, repetition_seed=3)
        assert len(rows) == 5
        ratios = [r[0] for r in rows]
        assert ratios[0] == 0.0 and ratios[-1] == pytest.approx(3.0)
        for _, est, oracle in rows:
            assert np.isfinite(est) and np.isfinite(oracle)

    def test_misspecified_polynomial_has_interior_minimum(self):
        cfg = hn.config_from_json(
            {
                "model": "linreg_known",
                "dataset": {"setting": "polynomial", "n": 30, "d": 12, "f": "parabola", "sigma2": 0.5},
                "model_params": {"sigma2": 0.01},
                "strategies": ["sample_split"],
                "grid_points": 25,
                "seed": 1000,
            }
        )
        rows = hn.risk_curve(cfg, repetition_seed=1000)
        oracle = np.array([r[2] for r in rows])
        interior = oracle.argmin()
        assert 0 < interior < len(oracle) - 1
        assert oracle[-1] > oracle[interior]

    def test_easy_setting_flat_or_decreasing(self):
        cfg = hn.config_from_json(
            {
                "model": "linreg_known",
                "dataset": {"setting": "gaussian_mean", "n": 40, "sigma2": 4.0},
                "model_params": {"sigma2": 4.0, "prior": "identity"},
                "strategies": ["sample_split"],
                "grid_points": 25,
                "seed": 4,
            }
        )
        rows = hn.risk_curve(cfg, repetition_seed=4)
        oracle = np.array([r[2] for r in rows])
        # no overfitting: the curve never rises along the grid
        assert np.all(np.diff(oracle) <= 1e-9)


class TestWriteResults:
    def test_files_and_schema(self, tmp_path):
        res = hn.run_experiment(tiny_config())
        paths = hn.write_results(res, tmp_path)
        lines = (tmp_path / "results.csv").read_text().splitlines()
        assert lines[0].startswith("# generated ")
        assert lines[1] == "repetition,strategy,alpha,alpha_over_n,oracle_risk,wall_time_ms"
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[1] == "strategy,min,q1,median,q3,max"
        failures = json.loads((tmp_path / "failures.json").read_text())
        assert failures == {"failures": []}
        mirror = json.loads((tmp_path / "results.json").read_text())
        assert mirror["config"]["seed"] == 3

    def test_rerun_identical_modulo_timestamp_and_walltime(self, tmp_path):
        def normalized(path):
            out = []
            for line in path.read_text().splitlines():
                if line.startswith("#"):
                    continue
                cells = line.split(",")
                out.append(",".join(cells[:-1]))  # drop wall_time_ms
            return out

        hn.write_results(hn.run_experiment(tiny_config()), tmp_path / "a")
        hn.write_results(hn.run_experiment(tiny_config()), tmp_path / "b")
        assert normalized(tmp_path / "a" / "results.csv") == normalized(tmp_path / "b" / "results.csv")
        sa = [l for l in (tmp_path / "a" / "summary.csv").read_text().splitlines() if not l.startswith("#")]
        sb = [l for l in (tmp_path / "b" / "summary.csv").read_text().splitlines() if not l.startswith("#")]
        assert sa == sb
