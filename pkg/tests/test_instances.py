from pathlib import Path

import numpy as np
import pytest

from cascade_rl.instances import (
    MISSING_ATTRACTION,
    InsufficientDataError,
    RatingRecord,
    RatingsFormatError,
    build_from_ratings,
    build_synthetic,
    ingest_ratings_file,
    synthetic_good_items,
    synthetic_layer,
)
from cascade_rl.model import action_space_size

FIXTURE = Path(__file__).parent / "data" / "ratings.csv"


class TestSynthetic:
    def test_shape(self):
        mdp = build_synthetic(5, 4, 3)
        assert (mdp.num_states, mdp.num_items, mdp.max_list_len, mdp.horizon) == (9, 4, 3, 5)
        assert mdp.initial_state == 0
        assert np.all(mdp.attraction[:, :4] == 0.5)

    def test_layers(self):
        assert [synthetic_layer(s) for s in range(9)] == [1, 2, 2, 3, 3, 4, 4, 5, 5]
        assert synthetic_good_items(4, 3) == (1, 2, 3)

    def test_rewards_follow_states(self):
        mdp = build_synthetic(5, 4, 3)
        for s in range(9):
            assert np.all(mdp.reward[s, :4] == (1.0 if s % 2 == 1 else 0.0))
        assert np.all(mdp.reward[:, 4] == 0.0)

    def test_transitions(self):
        mdp = build_synthetic(5, 4, 3)
        p = mdp.transition
        np.testing.assert_allclose(p.sum(axis=2), 1.0)
        for s in (0, 1, 2):
            layer = synthetic_layer(s)
            good, bad = 2 * layer - 1, 2 * layer
            for a in (1, 2, 3):
                assert (p[s, a, good], p[s, a, bad]) == (0.9, pytest.approx(0.1))
            for a in (0, 4):
                assert (p[s, a, good], p[s, a, bad]) == (0.1, pytest.approx(0.9))
        for s in (7, 8):
            assert np.all(p[s, :, s] == 1.0)

    def test_pure(self):
        a, b = build_synthetic(4, 5, 2), build_synthetic(4, 5, 2)
        assert a.to_dict() == b.to_dict()

    @pytest.mark.parametrize("args", [(1, 4, 3), (5, 4, 4), (5, 4, 0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            build_synthetic(*args)


class TestIngest:
    def test_fixture(self):
        records = ingest_ratings_file(FIXTURE)
        assert len(records) == 2019
        assert all(0.0 <= r.rating <= 5.0 for r in records)
        assert len({(r.user_id, r.item_id) for r in records}) == len(records)

    def test_header_only(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("user_id,item_id,rating\n")
        assert ingest_ratings_file(path) == []

    def test_single_row(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("7,42,4.5\n")
        assert ingest_ratings_file(path) == [RatingRecord(7, 42, 4.5)]

    def test_last_duplicate_wins(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2,3.0\n1,3,1.0\n1,2,5.0\n")
        records = ingest_ratings_file(path)
        assert sorted(records, key=lambda r: r.item_id) == [RatingRecord(1, 2, 5.0), RatingRecord(1, 3, 1.0)]

    @pytest.mark.parametrize("bad", ["1,2\n", "a,2,3\n", "1,2,6.5\n", "1,2,-1\n", "1,2,3,4\n"])
    def test_malformed_rows_name_the_line(self, tmp_path, bad):
        path = tmp_path / "r.csv"
        path.write_text("user_id,item_id,rating\n1,1,4.0\n" + bad)
        with pytest.raises(RatingsFormatError, match=":3:"):
            ingest_ratings_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            ingest_ratings_file(tmp_path / "absent.csv")


@pytest.fixture(scope="module")
def records():
    return ingest_ratings_file(FIXTURE)


class TestFromRatings:
    def test_fixture_instance(self, records):
        mdp = build_from_ratings(records, 20, 10)
        assert (mdp.num_states, mdp.num_items, mdp.max_list_len, mdp.horizon) == (20, 10, 3, 3)
        assert action_space_size(mdp.num_items, mdp.max_list_len) == 820
        np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-9)
        assert np.all(mdp.reward[:, :10] == 1.0) and np.all(mdp.reward[:, 10] == 0.0)

    def test_attraction_and_rows(self):
        records = [
            RatingRecord(1, 10, 5.0), RatingRecord(1, 11, 2.5),
            RatingRecord(2, 10, 4.0), RatingRecord(3, 11, 4.5),
            RatingRecord(1, 12, 1.0),
        ]
        mdp = build_from_ratings(records, 3, 2, horizon=2, max_list_len=1)
        # user 1 is busiest, items 10 and 11 tie on count and keep id order
        assert mdp.attraction[0, 0] == 1.0
        assert mdp.attraction[0, 1] == 0.5
        assert mdp.attraction[1, 0] == pytest.approx(0.8)
        assert mdp.attraction[1, 1] == MISSING_ATTRACTION
        np.testing.assert_allclose(mdp.transition[0, 0], [0.9, 0.05, 0.05])
        np.testing.assert_allclose(mdp.transition[2, 1], [0.05, 0.05, 0.9])
        np.testing.assert_allclose(mdp.transition[1, 0], [1 / 3] * 3)
        np.testing.assert_allclose(mdp.transition[1, 1], [1 / 3] * 3)
        np.testing.assert_allclose(mdp.transition[:, 2], 1 / 3)

    def test_insufficient(self, records):
        with pytest.raises(InsufficientDataError):
            build_from_ratings(records, 500, 10)
        with pytest.raises(InsufficientDataError):
            build_from_ratings(records, 20, 60)
