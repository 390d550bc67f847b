import math

import numpy as np
import pytest

from rare_ring.benchmarks import BenchmarkEvaluator, get_benchmark, reference_solution
from rare_ring.classifier import FAILURE, NO_RESULT, SAFE, ExperimentalDesign
from rare_ring.driver import RunConfig, estimate_only, initialize, run, should_stop, step
from rare_ring.errors import ConfigError


def _cfg(**kw):
    base = dict(benchmark="wavy_circle", budget=60, seed=1, n_is=2000, n_is_final=20_000,
                dots_per_seed=300)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def wavy_run():
    return run(_cfg(budget=200, n_is=5000, n_is_final=100_000, dots_per_seed=1000, stop_psi_ratio=0))


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(benchmark=None),
        dict(command="cat"),
        dict(budget=0),
        dict(n_is=0),
        dict(estimate_every=0),
        dict(stop_psi_ratio=-1.0),
        dict(fraction=0.0),
        dict(fraction=1.0),
        dict(outer_rule="nearest"),
        dict(seed=-3),
        dict(benchmark="no_such_thing"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            _cfg(**kw).validate()

    def test_external_needs_dim(self):
        with pytest.raises(ConfigError):
            RunConfig(command="cat").validate()

    def test_dim_filled_from_benchmark(self):
        assert _cfg().validate().dim == 2
        assert _cfg(benchmark="linear", dim=5).validate().dim == 5


class TestInitialize:
    @pytest.mark.parametrize("name", ["wavy_circle", "black_swan", "four_branch", "metaballs"])
    def test_origin_first_and_safe(self, name):
        state = initialize(_cfg(benchmark=name))
        assert len(state.ed) == 1
        np.testing.assert_array_equal(state.ed.points[0], 0.0)
        assert state.ed.labels[0] == SAFE
        assert state.plan is not None

    def test_budget_one(self):
        res = run(_cfg(budget=1))
        assert res.n_sim == 1
        assert res.termination == "budget"
        assert res.final == []
        assert len(res.history) == 1

    def test_crash_at_origin_is_no_result(self):
        def broken(x):
            raise RuntimeError("solver diverged")

        state = initialize(_cfg(), evaluator=broken)
        assert state.ed.labels[0] == NO_RESULT


class TestStep:
    def test_pool_exploration_only_before_discovery(self):
        state = initialize(_cfg(benchmark="black_swan"))
        for _ in range(10):
            step(state)
        assert set(state.origins[1:]) == {"exploration"}

    def test_black_swan_budget_five(self):
        res = run(_cfg(benchmark="black_swan", budget=5))
        assert res.termination == "budget"
        assert res.p_hat == 0.0
        assert res.n_sim == 5
        assert res.sensitivities == []

    def test_exploitation_after_discovery(self, wavy_run):
        first = next(i for i, lab in enumerate(wavy_run.ed.labels) if lab == FAILURE)
        later = wavy_run.origins[first + 1:first + 31]
        assert "exploitation" in later
        assert "exploration" in wavy_run.origins

    def test_evaluator_crash_recorded(self):
        bench = get_benchmark("wavy_circle")
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            if calls["n"] % 7 == 3:
                raise ValueError("mesh failure")
            return bench.evaluate(x)

        res = run(_cfg(budget=30), evaluator=flaky)
        assert res.n_sim == 30
        assert sum(lab == NO_RESULT for lab in res.ed.labels) == 4


class TestRun:
    def test_budget_accounting(self):
        cfg = _cfg(budget=40, stop_psi_ratio=0)
        ev = BenchmarkEvaluator(get_benchmark("wavy_circle"))
        res = run(cfg, evaluator=ev)
        assert ev.calls == res.n_sim == 40
        assert len(res.history) <= cfg.budget * 2

    def test_no_duplicates(self, wavy_run):
        pts = wavy_run.ed.points
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() > 1e-9

    def test_history_monotone(self, wavy_run):
        n = [row.n_sim for row in wavy_run.history]
        assert n == sorted(n)
        assert n[-1] <= wavy_run.n_sim

    def test_wavy_circle_accuracy(self, wavy_run):
        ratio = wavy_run.p_hat / reference_solution("wavy_circle").p_f
        assert 0.85 <= ratio <= 1.15

    def test_determinism(self):
        a = run(_cfg(budget=50))
        b = run(_cfg(budget=50))
        np.testing.assert_array_equal(a.ed.points, b.ed.points)
        np.testing.assert_array_equal(a.ed.codes, b.ed.codes)
        assert [vars(r) for r in a.history] == [vars(r) for r in b.history]
        assert a.p_hat == b.p_hat

    def test_seed_changes_path(self):
        a = run(_cfg(budget=30, seed=1))
        b = run(_cfg(budget=30, seed=2))
        assert not np.array_equal(a.ed.points, b.ed.points)

    def test_binary_only_same_decisions(self):
        a = run(_cfg(budget=50))
        b = run(_cfg(budget=50, binary_only=True))
        np.testing.assert_array_equal(a.ed.points, b.ed.points)
        assert a.p_hat == b.p_hat
        assert all(r is None for r in b.ed.to_dict()["raw"])

    def test_psi_stop(self):
        res = run(_cfg(budget=400, stop_psi_ratio=0.5))
        assert res.termination == "psi_stop"
        assert res.n_sim < 400

    def test_stopping_needs_estimate(self):
        state = initialize(_cfg(stop_psi_ratio=1e9))
        step(state)
        assert not should_stop(state)

    def test_sensitivities_reported(self, wavy_run):
        (sens,) = wavy_run.sensitivities
        assert math.isclose(sum(sens.s), 1.0, rel_tol=1e-12)


class TestEstimateOnly:
    def test_matches_run_scale(self, wavy_run):
        ed = ExperimentalDesign.from_dict(wavy_run.ed.to_dict())
        records, sens = estimate_only(ed, n_is=50_000, seed=3)
        (rec,) = records
        assert rec.label == FAILURE
        assert rec.p_hat == pytest.approx(wavy_run.p_hat, rel=0.1)
        assert len(sens) == 1

    def test_all_safe(self):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        assert estimate_only(ed, n_is=100) == ([], [])
