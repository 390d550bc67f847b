import math

import numpy as np
import pytest
from scipy.special import ndtr

from rare_ring.benchmarks import get_benchmark, oracle_pf
from rare_ring.candidates import DotCloud, ExploitationConfig
from rare_ring.classifier import FAILURE, SAFE, EventLabel, ExperimentalDesign
from rare_ring.errors import ConfigError, DomainError, StateError
from rare_ring.estimator import (
    GLOBAL_RING,
    HISTORY_FIELDS,
    ConvergenceHistory,
    EstimateRecord,
    HistoryRow,
    build_annulus,
    global_is_estimate,
    localized_is_estimate,
    record_history,
    ring_nodes,
    screen,
    screen_from_cloud,
)
from rare_ring.gaussian_geometry import AnnulusSpec, chi_ppf, chi_sf, radius_for_pout

LINEAR_BETA = 4.7534243


def two_point_design():
    return ExperimentalDesign(2).add_point([0.0, 0.0], SAFE).add_point([4.0, 0.0], FAILURE)


def wavy_codes(x):
    return get_benchmark("wavy_circle").codes(x)


class TestScreening:
    def test_min_over_rare_dots(self, rng):
        ed = two_point_design()
        res = screen(rng, ed, FAILURE, dots_per_seed=2000)
        hit = res.codes == FAILURE.code
        assert res.r == pytest.approx(min(4.0, np.linalg.norm(res.dots[hit], axis=1).min()))
        # the surrogate boundary is the plane x1 = 2
        assert 2.0 <= res.r < 2.2

    def test_island_falls_back_to_seed(self, rng):
        ed = ExperimentalDesign(2)
        ed.add_point([3.0, 0.0], FAILURE)
        for x in ([3.01, 0.0], [2.99, 0.0], [3.0, 0.01], [3.0, -0.01], [0.0, 0.0]):
            ed.add_point(x, SAFE)
        res = screen(rng, ed, FAILURE, dots_per_seed=20, sigma=5.0)
        if not np.any(res.codes == FAILURE.code):
            assert res.r == 3.0
        assert res.r <= 3.0

    def test_requires_rare_point(self, rng):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        with pytest.raises(StateError):
            screen(rng, ed, FAILURE)

    def test_cloud_view_matches_fresh_classification(self, rng):
        ed = two_point_design()
        cloud = DotCloud(2, ExploitationConfig(300))
        cloud.add_seeds(rng, ed, [1])
        ed.add_point([2.5, 1.0], FAILURE)
        res = screen_from_cloud(cloud, ed, FAILURE.code)
        np.testing.assert_array_equal(res.codes, ed.classify_codes(res.dots))


class TestLocalized:
    def test_density_equals_nominal(self, rng):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], FAILURE)
        res = screen(rng, ed, FAILURE, dots_per_seed=500, sigma=1.0)
        rec = localized_is_estimate(res, ed)
        assert rec.p_hat == pytest.approx(1.0, rel=1e-12)
        assert rec.variance == pytest.approx(0.0, abs=1e-20)
        assert "diagnostic" in rec.flags

    def test_no_rare_dots(self, rng):
        ed = ExperimentalDesign(2).add_point([3.0, 0.0], FAILURE)
        for x in ([3.001, 0.0], [2.999, 0.0], [3.0, 0.001], [3.0, -0.001]):
            ed.add_point(x, SAFE)
        res = screen(rng, ed, FAILURE, dots_per_seed=50)
        res.codes[:] = SAFE.code
        rec = localized_is_estimate(res, ed)
        assert rec.p_hat == 0.0 and rec.cov == math.inf

    def test_four_branch_record_produced(self, rng):
        bench = get_benchmark("four_branch")
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        for x in rng.standard_normal((120, 2)) * 2.5:
            ed.add_point(x, bench.evaluate(x)[1])
        rec = localized_is_estimate(screen(rng, ed, FAILURE), ed)
        assert rec.method == "localized" and rec.flags == ["diagnostic"]
        assert rec.p_hat >= 0


class TestBuildAnnulus:
    def test_exterior_rule(self):
        ann = build_annulus(3.0, None, 2)
        assert chi_sf(ann.R, 2) == pytest.approx(chi_sf(3.0, 2) / 1e4, rel=1e-10)
        assert build_annulus(3.0, 0.1, 2, rule="exterior").R == pytest.approx(ann.R)

    def test_estimate_rule(self):
        ann = build_annulus(3.0, 2.582e-3, 2)
        assert ann.R == pytest.approx(chi_ppf(1 - 2.582e-7, 2), rel=1e-8)
        assert ann.R == pytest.approx(radius_for_pout(2.582e-7, 2), rel=1e-13)

    def test_fields(self):
        ann = build_annulus(3.0, 1e-3, 2)
        assert ann.p_r == pytest.approx(1 - math.exp(-4.5), rel=1e-14)
        assert ann.p_ann == pytest.approx(ann.q_r - ann.q_R, rel=1e-14)

    def test_widening(self):
        with pytest.warns(RuntimeWarning):
            ann = build_annulus(6.0, 1.0, 2, fraction=0.5)
        assert ann.R > 6.0

    @pytest.mark.parametrize("kwargs, exc", [({"rule": "nope"}, ConfigError), ({"fraction": 2.0}, ConfigError)])
    def test_bad_config(self, kwargs, exc):
        with pytest.raises(exc):
            build_annulus(3.0, None, 2, **kwargs)

    def test_negative_radius(self):
        with pytest.raises(DomainError):
            build_annulus(-1.0, None, 2)


class TestRingNodes:
    def test_inside_ring(self, rng):
        ann = AnnulusSpec.from_radii(3.0, 5.5, 3)
        x = ring_nodes(rng, ann, 3, 5000)
        r = np.linalg.norm(x, axis=1)
        assert np.all((r > 3.0) & (r < 5.5))

    def test_one_dim(self, rng):
        ann = AnnulusSpec.from_radii(1.0, 4.0, 1)
        x = ring_nodes(rng, ann, 1, 1000)
        assert np.all(np.abs(x[:, 0]) > 1.0) and 400 < np.sum(x[:, 0] > 0) < 600

    def test_bad_count(self, rng):
        with pytest.raises(ConfigError):
            ring_nodes(rng, AnnulusSpec.from_radii(1.0, 2.0, 2), 2, 0)


class TestGlobalEstimate:
    def test_full_indicator(self, rng):
        ann = AnnulusSpec.from_radii(2.0, 5.0, 2)
        ed = ExperimentalDesign(2).add_point([3.0, 0.0], FAILURE)
        (rec,) = global_is_estimate(rng, ed, [FAILURE], ann, 1000)
        assert rec.p_hat == pytest.approx(ann.p_ann, rel=1e-15)
        assert rec.variance == 0.0 and rec.cov == 0.0
        assert rec.method == GLOBAL_RING

    def test_no_hits(self, rng):
        ann = AnnulusSpec.from_radii(2.0, 5.0, 2)
        (rec,) = global_is_estimate(rng, two_point_design(), [FAILURE], ann, 500, indicator=lambda x: np.zeros(len(x)))
        assert rec.p_hat == 0 and rec.cov == math.inf and rec.n_is_hits == 0

    def test_labels_partition_ring(self, rng):
        ed = ExperimentalDesign(2)
        labels = [SAFE, FAILURE, EventLabel(2, "no_result")]
        for k, x in enumerate(rng.standard_normal((30, 2)) * 3):
            ed.add_point(x, labels[k % 3])
        ann = AnnulusSpec.from_radii(1.0, 4.5, 2)
        recs = global_is_estimate(rng, ed, labels, ann, 20_000)
        assert sum(r.p_hat for r in recs) == pytest.approx(ann.p_ann, abs=1e-12)

    def test_variance_matches_generic_estimator(self, rng):
        ann = AnnulusSpec.from_radii(3.0, 5.2, 2)
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        recs, sample = global_is_estimate(
            rng, ed, [FAILURE], ann, 10_000, indicator=wavy_codes, return_sample=True
        )
        rec = recs[0]
        # generic IS: average of indicator * f/h, with f/h = p_ann on the ring
        terms = np.where(sample.codes == FAILURE.code, ann.p_ann, 0.0)
        n = len(terms)
        assert terms.mean() == pytest.approx(rec.p_hat, rel=1e-12)
        generic_var = np.mean((terms - terms.mean()) ** 2) / n
        assert rec.variance == pytest.approx(generic_var, rel=1e-9, abs=1e-12)
        assert rec.cov == pytest.approx(math.sqrt(rec.variance) / rec.p_hat, rel=1e-9)

    def test_linear_oracle(self, rng):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        ann = build_annulus(LINEAR_BETA, 1e-6, 2)
        indicator = lambda x: (x[:, 0] >= LINEAR_BETA).astype(int)
        (rec,) = global_is_estimate(rng, ed, [FAILURE], ann, 100_000, indicator=indicator)
        assert abs(rec.p_hat - 1e-6) <= 3 * rec.cov * rec.p_hat

    def test_wavy_circle_oracle(self, rng):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        ann = build_annulus(3.0, None, 2)
        (rec,) = global_is_estimate(rng, ed, [FAILURE], ann, 100_000, indicator=wavy_codes)
        assert abs(rec.p_hat - 2.582e-3) <= 3 * rec.cov * rec.p_hat

    def test_unbiased_over_repeats(self):
        truth = oracle_pf("wavy_circle")
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        ann = build_annulus(3.0, truth, 2)
        rng = np.random.default_rng(77)
        est = [global_is_estimate(rng, ed, [FAILURE], ann, 2000, indicator=wavy_codes)[0].p_hat for _ in range(200)]
        se = np.std(est, ddof=1) / math.sqrt(len(est))
        # the ring misses truth * 1e-4 beyond R
        assert abs(np.mean(est) - truth) <= 3 * se + truth * 1e-4

    def test_black_swan_oracle(self, rng):
        bench = get_benchmark("black_swan")
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        ann = build_annulus(math.sqrt(29) - 1e-9, 6.52136e-9, 2)
        (rec,) = global_is_estimate(rng, ed, [FAILURE], ann, 100_000, indicator=bench.codes)
        assert abs(rec.p_hat - ndtr(-5) * ndtr(-2)) <= 3 * rec.cov * rec.p_hat


class TestHistory:
    def rec(self, n, p):
        return EstimateRecord(n, FAILURE, p, 0.0, 0.1, 100, 10, AnnulusSpec.from_radii(3, 5, 2), GLOBAL_RING)

    def test_single_row(self):
        h = record_history(ConvergenceHistory(), 1, 0.2, {"failure": None}, {})
        assert len(h) == 1
        row = h.rows[0]
        assert (row.p_hat, row.cov) == (0.0, math.inf)
        assert math.isnan(row.r_inner)

    def test_fields(self):
        assert HISTORY_FIELDS == ("n_sim", "psi", "label", "p_hat", "cov", "r_inner", "r_outer", "n_rare")

    def test_monotone(self):
        h = ConvergenceHistory()
        for n in range(1, 6):
            record_history(h, n, 0.1, {"failure": self.rec(n, 1e-3)}, {"failure": n})
        assert np.all(np.diff(h.column("n_sim")) > 0)
        with pytest.raises(DomainError):
            h.append(HistoryRow(3, 0.1, "failure", 0, 0, 0, 0, 0))
        with pytest.raises(DomainError):
            h.append(HistoryRow(5, 0.1, "failure", 0, 0, 0, 0, 0))

    def test_per_label_rows(self):
        h = record_history(ConvergenceHistory(), 4, 0.1, {"failure": self.rec(4, 1e-3), "mode_b": None}, {"failure": 2})
        assert [r.label for r in h] == ["failure", "mode_b"]
        assert h.column("r_outer", "failure")[0] == 5
