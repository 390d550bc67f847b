import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from rare_ring.classifier import (
    FAILURE,
    NO_RESULT,
    SAFE,
    EventLabel,
    ExperimentalDesign,
    brute_force_neighbours,
    label_from_token,
)
from rare_ring.errors import DomainError, StateError


def random_design(rng, n, dim, n_labels=2):
    ed = ExperimentalDesign(dim)
    labels = [SAFE, FAILURE, NO_RESULT][:n_labels]
    for x in rng.standard_normal((n, dim)) * 2:
        ed.add_point(x, labels[int(rng.integers(n_labels))])
    return ed


def naive_two_nearest(points, x):
    d = np.linalg.norm(points - x, axis=1)
    order = np.lexsort((np.arange(len(points)), d))
    return order[:2]


class TestLabels:
    @pytest.mark.parametrize("token, expected", [("safe", SAFE), ("failure", FAILURE), ("0", SAFE), ("1", FAILURE), (" no_result\n", NO_RESULT)])
    def test_standard_tokens(self, token, expected):
        assert label_from_token(token) == expected

    def test_new_names_get_fresh_codes(self):
        reg = {}
        a = label_from_token("mode_A", reg)
        b = label_from_token("mode_B", reg)
        assert a.code != b.code
        assert a.code not in (0, 1, 2)
        assert label_from_token("mode_A", reg) is a

    def test_unknown_integer(self):
        reg = {}
        lab = label_from_token("7", reg)
        assert lab == EventLabel(7, "label_7")
        assert label_from_token("7", reg) is lab


class TestAddPoint:
    def test_first_point(self):
        ed = ExperimentalDesign(2).add_point([0.0, 0.0], SAFE)
        assert len(ed) == 1

    def test_duplicate_rejected(self):
        ed = ExperimentalDesign(2).add_point([1.0, 2.0], SAFE)
        with pytest.raises(DomainError):
            ed.add_point([1.0, 2.0 + 1e-13], FAILURE)

    @pytest.mark.parametrize("x", [[1.0], [1.0, np.nan], [np.inf, 0.0]])
    def test_bad_points(self, x):
        with pytest.raises(DomainError):
            ExperimentalDesign(2).add_point(x, SAFE)

    def test_conflicting_code(self):
        ed = ExperimentalDesign(1).add_point([0.0], SAFE)
        with pytest.raises(DomainError):
            ed.add_point([1.0], EventLabel(0, "other"))

    def test_raw_kept(self):
        ed = ExperimentalDesign(1).add_point([0.0], SAFE, 3.5).add_point([1.0], FAILURE)
        assert ed.raw == [3.5, None]


class TestClassify:
    def test_empty(self):
        with pytest.raises(StateError):
            ExperimentalDesign(2).classify([0.0, 0.0])

    def test_midpoint_partition(self):
        ed = ExperimentalDesign(2).add_point([0, 0], SAFE).add_point([4, 0], FAILURE)
        assert ed.classify([1.0, 0.0]) == SAFE
        assert ed.classify([3.0, 0.0]) == FAILURE

    def test_tie_goes_to_lowest_index(self):
        ed = ExperimentalDesign(2).add_point([0, 0], FAILURE).add_point([4, 0], SAFE)
        assert ed.classify([2.0, 0.0]) == FAILURE
        ed2 = ExperimentalDesign(2).add_point([4, 0], SAFE).add_point([0, 0], FAILURE)
        assert ed2.classify([2.0, 0.0]) == SAFE

    def test_many_equidistant(self):
        # eight points on a circle, all equidistant from the centre
        ang = np.arange(8) * np.pi / 4
        ed = ExperimentalDesign(2)
        for i, a in enumerate(ang):
            ed.add_point([np.cos(a), np.sin(a)], FAILURE if i == 0 else SAFE)
        assert ed.classify([0.0, 0.0]) == FAILURE

    def test_seeds_classify_to_themselves(self, rng):
        ed = random_design(rng, 200, 3, 3)
        np.testing.assert_array_equal(ed.classify_codes(ed.points), ed.codes)

    @pytest.mark.parametrize("dim, n", [(2, 50), (3, 400), (5, 2000), (10, 700)])
    def test_index_matches_brute_force(self, rng, dim, n):
        ed = random_design(rng, n, dim)
        xs = rng.standard_normal((4_000_000 // n, dim)) * 2.5
        d, i = ed.nearest(xs, 2)
        db, ib = brute_force_neighbours(ed.points, xs, 2)
        np.testing.assert_array_equal(i, ib)
        np.testing.assert_allclose(d, db, rtol=0, atol=0)

    def test_million_queries(self, rng):
        ed = random_design(rng, 25, 2)
        xs = rng.standard_normal((1_000_000, 2)) * 3
        codes = ed.classify_codes(xs)
        for chunk in range(0, len(xs), 100_000):
            _, ib = brute_force_neighbours(ed.points, xs[chunk : chunk + 100_000], 1)
            np.testing.assert_array_equal(codes[chunk : chunk + 100_000], ed.codes[ib[:, 0]])

    def test_batch_matches_pointwise(self, rng):
        ed = random_design(rng, 80, 3, 3)
        xs = rng.standard_normal((10_000, 3)) * 2
        batch = ed.classify_batch(xs)
        assert batch == [ed.classify(x) for x in xs]

    def test_empty_batch(self, rng):
        assert random_design(rng, 5, 2).classify_batch(np.empty((0, 2))) == []

    @given(seed=st.integers(0, 2**32 - 1))
    def test_rotation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        ed = random_design(rng, 40, 3)
        q = special_ortho_group.rvs(3, random_state=seed)
        rot = ExperimentalDesign(3)
        for x, lab in zip(ed.points, ed.labels):
            rot.add_point(q @ x, lab)
        xs = rng.standard_normal((300, 3)) * 2
        d, _ = ed.nearest(xs, 2)
        keep = np.abs(d[:, 1] - d[:, 0]) > 1e-9
        np.testing.assert_array_equal(ed.classify_codes(xs)[keep], rot.classify_codes(xs @ q.T)[keep])


class TestTwoNearest:
    def test_needs_two(self):
        ed = ExperimentalDesign(2).add_point([0, 0], SAFE)
        with pytest.raises(StateError):
            ed.two_nearest_labels([1.0, 1.0])

    def test_midway(self):
        ed = ExperimentalDesign(2).add_point([0, 0], SAFE).add_point([4, 0], FAILURE)
        assert set(ed.two_nearest_labels([2.0, 0.5])) == {SAFE, FAILURE}

    def test_inside_cluster(self):
        ed = ExperimentalDesign(2)
        for x in ([0, 0], [0.1, 0], [0, 0.1], [5, 5]):
            ed.add_point(x, SAFE if x != [5, 5] else FAILURE)
        assert ed.two_nearest_labels([0.03, 0.03]) == (SAFE, SAFE)

    def test_against_naive_scan(self, rng):
        ed = random_design(rng, 150, 2)
        xs = rng.standard_normal((100_000, 2)) * 2
        _, idx, codes = ed.two_nearest_codes(xs)
        sample = rng.choice(len(xs), 300, replace=False)
        for q in sample:
            np.testing.assert_array_equal(idx[q], naive_two_nearest(ed.points, xs[q]))
        _, ib = brute_force_neighbours(ed.points, xs, 2)
        np.testing.assert_array_equal(idx, ib)
        np.testing.assert_array_equal(codes, ed.codes[ib])


class TestSerialization:
    def test_json_round_trip(self, rng):
        ed = random_design(rng, 30, 3, 3)
        ed.raw[4] = 1.25
        back = ExperimentalDesign.from_dict(json.loads(ed.to_json()))
        np.testing.assert_array_equal(back.points, ed.points)
        np.testing.assert_array_equal(back.codes, ed.codes)
        assert back.labels == ed.labels
        assert back.raw == ed.raw

    def test_csv_layout(self):
        ed = ExperimentalDesign(2).add_point([0, 0], SAFE, 4.0).add_point([1.5, -2], FAILURE)
        lines = ed.to_csv().split("\n")
        assert lines[0] == "index,x1,x2,label,raw"
        assert lines[1] == "0,0,0,safe,4"
        assert lines[2] == "1,1.5,-2,failure,"
        assert "\r" not in ed.to_csv()
