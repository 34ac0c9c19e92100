import os
from pathlib import Path

import numpy as np
import pytest

from attrexplain.dataset import GENRES, AttributeCatalog, InteractionSet, SplitDataset

ROOT = Path(__file__).resolve().parents[1]
ML100K = Path(os.environ.get("ATTREX_ML100K", ROOT / "data" / "ml-100k"))


def have_ml100k():
    return (ML100K / "u.data").exists() and (ML100K / "u.item").exists()


needs_ml100k = pytest.mark.skipif(not have_ml100k(), reason="MovieLens-100K files not found")


def write_movielens(tmp_path, ratings, item_genres, genre_names=GENRES):
    """Write u.data / u.item in MovieLens layout. ``item_genres``: item -> genre names."""
    data = tmp_path / "u.data"
    data.write_text("".join(f"{u}\t{i}\t{r}\t{880000000 + k}\n" for k, (u, i, r) in enumerate(ratings)))
    item = tmp_path / "u.item"
    lines = []
    for i, genres in sorted(item_genres.items()):
        flags = ["1" if not genres else "0"] + ["1" if g in genres else "0" for g in genre_names]
        lines.append("|".join([str(i), f"Movie {i} (1995)", "01-Jan-1995", "", "http://x"] + flags))
    item.write_text("\n".join(lines) + "\n")
    return data, item


# Miniature world: 3 users, 6 items, 4 genres. Each user rates an item 5 when it
# carries the user's genre and 2 otherwise. Train/test are fixed by hand.
MINI_GENRES = ("A", "B", "C", "D")
MINI_ITEMS = {1: "A", 2: "AB", 3: "B", 4: "C", 5: "CD", 6: "D"}
MINI_TASTE = {1: "A", 2: "C", 3: "B"}
MINI_TRAIN = {1: (1, 3, 4, 6), 2: (4, 6, 1, 3), 3: (2, 3, 1, 4)}


def mini_rating(user, item):
    return 5 if MINI_TASTE[user] in MINI_ITEMS[item] else 2


@pytest.fixture
def mini_catalog():
    vecs = {i: [1 if g in gs else 0 for g in MINI_GENRES] for i, gs in MINI_ITEMS.items()}
    return AttributeCatalog.from_dict(MINI_GENRES, vecs)


@pytest.fixture
def mini_split():
    tr, te = [], []
    for u in MINI_TASTE:
        for i in MINI_ITEMS:
            (tr if i in MINI_TRAIN[u] else te).append((u, i, mini_rating(u, i)))
    mk = lambda rows: InteractionSet(*zip(*rows))
    return SplitDataset(mk(tr), mk(te), 0, 4 / 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion number -> (title, passed, detail)
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n:>2}. {title}: {detail}")
