"""Attribute preferences by single-attribute removal (set to zero) on the aux model.

The specific preference of a user for one of an item's attributes is the drop
in predicted rating when that attribute alone is zeroed. The general
preference averages those drops over the items the user liked in training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AttributeCatalog
from .errors import ExplanationError, ValidationError

REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class PreferenceRanking:
    user_id: int
    item_id: int | None
    kind: str                     # "specific" | "general"
    entries: tuple                # ((attribute index, score), ...) best first

    @property
    def attributes(self) -> list[int]:
        return [a for a, _ in self.entries]

    def __len__(self):
        return len(self.entries)


def make_ranking(user, item, kind, scores: dict) -> PreferenceRanking:
    """Sort ``{attribute: score}`` by score descending, ties by attribute index."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return PreferenceRanking(int(user), None if item is None else int(item), kind,
                             tuple((int(a), float(s)) for a, s in ordered))


def top_k(ranking: PreferenceRanking, k: int = 3) -> list[int]:
    if k < 1:
        raise ValidationError("k must be >= 1")
    return ranking.attributes[:k]


def removal_deltas(predict_many, attribute_rows: np.ndarray) -> np.ndarray:
    """Drop in prediction when each present attribute is zeroed, for many items.

    ``predict_many`` maps an (n, n_attributes) array to n predictions for a
    fixed user. Returns an array shaped like ``attribute_rows`` holding the
    deltas at present attributes and 0 elsewhere.
    """
    rows = np.atleast_2d(np.asarray(attribute_rows, dtype=np.float64))
    item_idx, attr_idx = np.nonzero(rows)
    zeroed = rows[item_idx].copy()
    zeroed[np.arange(len(item_idx)), attr_idx] = 0.0
    preds = predict_many(np.vstack([rows, zeroed]))
    full, removed = preds[:len(rows)], preds[len(rows):]
    deltas = np.zeros_like(rows)
    deltas[item_idx, attr_idx] = full[item_idx] - removed
    return deltas


def specific_from_deltas(user, item, attrs_row, delta_row) -> PreferenceRanking:
    present = np.flatnonzero(attrs_row)
    if len(present) == 0:
        raise ExplanationError(f"item {item} has no attributes to explain")
    return make_ranking(user, item, "specific", {int(a): float(delta_row[a]) for a in present})


def general_from_scores(user, attrs_rows, score_rows, reduction="mean") -> PreferenceRanking:
    """Reduce per-item attribute scores over the items that contain each attribute.

    Attributes absent from every item are left out of the ranking.
    """
    if reduction not in REDUCTIONS:
        raise ValidationError(f"unknown reduction {reduction!r}")
    attrs_rows = np.atleast_2d(attrs_rows)
    present = attrs_rows > 0
    counts = present.sum(axis=0)
    if counts.sum() == 0:
        raise ExplanationError(f"user {user} has no liked items with attributes")
    totals = np.where(present, score_rows, 0.0).sum(axis=0)
    values = totals / np.maximum(counts, 1) if reduction == "mean" else totals
    return make_ranking(user, None, "general", {int(a): float(values[a]) for a in np.flatnonzero(counts)})


def specific_preference(aux, user, item, catalog: AttributeCatalog) -> PreferenceRanking:
    attrs = catalog.vector(item)
    deltas = removal_deltas(lambda a: aux.predict_many(user, a), attrs)
    return specific_from_deltas(user, item, attrs, deltas[0])


def general_preference(aux, user, liked_items, catalog: AttributeCatalog,
                       reduction: str = "mean") -> PreferenceRanking:
    liked_items = list(liked_items)
    if not liked_items:
        raise ExplanationError(f"user {user} has no liked items")
    rows = catalog.matrix[catalog.rows(liked_items)]
    deltas = removal_deltas(lambda a: aux.predict_many(user, a), rows)
    return general_from_scores(user, rows, deltas, reduction)


def to_dict(ranking: PreferenceRanking, catalog: AttributeCatalog) -> dict:
    out = {"user": ranking.user_id, "kind": ranking.kind,
           "entries": [{"genre": catalog.genre_names[a], "score": s} for a, s in ranking.entries]}
    if ranking.item_id is not None:
        out["item"] = ranking.item_id
    out["sentence"] = sentence(ranking, catalog)
    return out


def sentence(ranking: PreferenceRanking, catalog: AttributeCatalog) -> str:
    if not ranking.entries:
        return "No attribute explains this recommendation."
    return f"We recommend this because you like {catalog.genre_names[ranking.entries[0][0]]} movies"
