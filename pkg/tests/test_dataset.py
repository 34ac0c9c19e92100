import json

import numpy as np
import pytest

from attrexplain.dataset import (GENRES, InteractionSet, disliked, liked, parse_items, parse_ratings,
                                 save_split_snapshot, split_from_snapshot, stratified_split, write_ratings)
from attrexplain.errors import ParseError, SplitError, ValidationError

from conftest import ML100K, needs_ml100k, write_movielens


def test_parse_single_line(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("196\t242\t3\t881250949\n")
    s = parse_ratings(p)
    assert len(s) == 1
    r = s.record(0)
    assert (r.user_id, r.item_id, r.rating, r.timestamp) == (196, 242, 3, 881250949)


def test_parse_empty_file(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("")
    s = parse_ratings(p)
    assert len(s) == 0 and s.n_users == 0


def test_malformed_line_names_line_number(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("1\t2\t3\t4\n1\t2\t3\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_ratings(p)


def test_non_integer_field(tmp_path):
    p = tmp_path / "u.data"
    p.write_text("1\tx\t3\t4\n")
    with pytest.raises(ParseError, match=":1:"):
        parse_ratings(p)


@pytest.mark.parametrize("rating", [0, 6])
def test_rating_out_of_range(tmp_path, rating):
    p = tmp_path / "u.data"
    p.write_text(f"1\t2\t{rating}\t4\n")
    with pytest.raises(ValidationError):
        parse_ratings(p)


def test_duplicate_pair_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        InteractionSet([1, 1], [2, 2], [3, 4])


def test_round_trip(tmp_path, rng):
    n = 200
    pairs = rng.choice(50 * 40, size=n, replace=False)
    s = InteractionSet(pairs // 40 + 1, pairs % 40 + 1, rng.integers(1, 6, n), rng.integers(0, 10**9, n))
    p = tmp_path / "round.data"
    write_ratings(s, p)
    again = parse_ratings(p)
    assert again == s
    assert again.fingerprint() == s.fingerprint()


def test_parse_items_drops_unknown_flag(tmp_path):
    _, item = write_movielens(tmp_path, [], {1: {"Crime", "Documentary", "Horror"}, 2: set()})
    cat = parse_items(item)
    assert cat.n_attributes == 18
    assert cat.genre_names == GENRES
    v = cat.vector(1)
    assert v.sum() == 3
    assert [GENRES[a] for a in np.flatnonzero(v)] == ["Crime", "Documentary", "Horror"]
    # unknown-only item kept with an empty vector
    assert 2 in cat and cat.vector(2).sum() == 0


def test_parse_items_wrong_flag_count(tmp_path):
    p = tmp_path / "u.item"
    p.write_text("1|Movie|||" + "|".join(["0"] * 19) + "\n")
    with pytest.raises(ParseError):
        parse_items(p)


def test_parse_items_non_binary_flag(tmp_path):
    p = tmp_path / "u.item"
    p.write_text("1|Movie||||" + "|".join(["0"] * 18 + ["2"]) + "\n")
    with pytest.raises(ValidationError):
        parse_items(p)


def test_liked_disliked():
    assert liked(4) and liked(5)
    assert disliked(1) and disliked(2)
    assert not liked(3) and not disliked(3)


def _user_set(n_per_user):
    users, items = [], []
    for u, n in enumerate(n_per_user, 1):
        users += [u] * n
        items += list(range(1, n + 1))
    return InteractionSet(users, items, [3] * len(users))


def test_split_counts_ten_ratings():
    s = stratified_split(_user_set([10]), 0.7, seed=0)
    assert len(s.train) == 7 and len(s.test) == 3


def test_split_deterministic():
    data = _user_set([10, 23, 5, 2])
    a = stratified_split(data, 0.7, 3).to_snapshot()
    b = stratified_split(data, 0.7, 3).to_snapshot()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    c = stratified_split(data, 0.7, 4).to_snapshot()
    assert a != c


def test_split_partition_property():
    data = _user_set([10, 23, 5, 2, 3, 7])
    s = stratified_split(data, 0.7, 1)
    for u in data.user_ids:
        tr, te = set(s.train.user_items(u)), set(s.test.user_items(u))
        assert not tr & te
        assert tr | te == set(data.user_items(u))
        assert tr and te
        n = len(data.user_items(u))
        assert abs(len(tr) - 0.7 * n) <= 1


def test_split_rejects_single_rating_user():
    with pytest.raises(SplitError):
        stratified_split(_user_set([5, 1]), 0.7, 0)


def test_snapshot_round_trip(tmp_path):
    data = _user_set([10, 6, 4])
    s = stratified_split(data, 0.7, 0)
    p = tmp_path / "split.json"
    save_split_snapshot(s, p)
    back = split_from_snapshot(data, json.loads(p.read_text()))
    assert back.train == s.train and back.test == s.test


@pytest.fixture(scope="module")
def ml_data():
    return parse_ratings(ML100K / "u.data"), parse_items(ML100K / "u.item")


@needs_ml100k
class TestMovieLens:
    @pytest.fixture
    def data(self, ml_data):
        return ml_data

    def test_counts(self, data):
        ratings, catalog = data
        assert len(ratings) == 100_000
        assert ratings.n_users == 943
        assert ratings.n_items == 1682
        assert len(catalog.item_ids) == 1682

    def test_first_record(self, data):
        r = data[0].record(0)
        assert (r.user_id, r.item_id, r.rating, r.timestamp) == (196, 242, 3, 881250949)

    def test_every_rated_item_in_catalog(self, data):
        ratings, catalog = data
        assert all(int(i) in catalog for i in np.unique(ratings.items))

    def test_unknown_only_items(self, data):
        _, catalog = data
        empty = [int(i) for i, row in zip(catalog.item_ids, catalog.matrix) if not row.any()]
        assert empty == [267, 1373]

    def test_split_size(self, data):
        ratings, _ = data
        s = stratified_split(ratings, 0.7, 0)
        # per-user ceilings add at most one record per user
        assert 70_000 <= len(s.train) <= 70_000 + 943
        assert len(s.train) + len(s.test) == 100_000
