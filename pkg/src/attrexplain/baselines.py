"""Preference methods compared in the evaluation, all behind one interface.

Every method answers ``specific_preference(user, item)`` and
``general_preference(user)`` with a :class:`PreferenceRanking`.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import AttributeCatalog, InteractionSet
from .errors import ExplanationError, TrainingError, ValidationError
from .explainer import (PreferenceRanking, general_from_scores, make_ranking,
                        removal_deltas, specific_from_deltas)
from .mfrec import MFModel
from .optimkit import Adam

log = logging.getLogger(__name__)

METHOD_IDS = ("ours-linear", "ours-mlp1", "ours-mlp2", "lime-rs", "amcf-ph",
              "global-pop", "user-pop", "random")
# Jointly trained AMCF is not post-hoc; it is reported as unsupported.
UNSUPPORTED = ("amcf",)


class PreferenceMethod:
    method_id = ""

    def __init__(self, train: InteractionSet, catalog: AttributeCatalog):
        self.train = train
        self.catalog = catalog

    def liked(self, user) -> np.ndarray:
        return self.train.liked_items(user)

    def specific_preference(self, user, item) -> PreferenceRanking:
        raise NotImplementedError

    def general_preference(self, user) -> PreferenceRanking:
        raise NotImplementedError

    def specific_preferences(self, user, items) -> list:
        return [self.specific_preference(user, i) for i in items]


class _ScoredMethod(PreferenceMethod):
    """Methods that assign each (user, item, attribute) a score.

    General preference reduces the scores over the user's liked train items.
    """

    reduction = "mean"

    def item_scores(self, user, items) -> np.ndarray:
        """(len(items), n_attributes) scores; only present attributes are read."""
        raise NotImplementedError

    def specific_preference(self, user, item):
        return self.specific_preferences(user, [item])[0]

    def specific_preferences(self, user, items):
        items = list(items)
        rows = self.catalog.matrix[self.catalog.rows(items)]
        scores = self.item_scores(user, items)
        return [specific_from_deltas(user, i, r, s) for i, r, s in zip(items, rows, scores)]

    def general_preference(self, user):
        liked = self.liked(user)
        if len(liked) == 0:
            raise ExplanationError(f"user {user} has no liked train items")
        rows = self.catalog.matrix[self.catalog.rows(liked)]
        return general_from_scores(user, rows, self.item_scores(user, liked), self.reduction)


class OursMethod(_ScoredMethod):
    """Removal-based preferences read off a trained auxiliary model."""

    def __init__(self, aux, train, catalog, reduction="mean", method_id=None):
        super().__init__(train, catalog)
        self.aux = aux
        self.reduction = reduction
        self.method_id = method_id or f"ours-{aux.spec.architecture}"

    def item_scores(self, user, items):
        rows = self.catalog.matrix[self.catalog.rows(items)]
        return removal_deltas(lambda a: self.aux.predict_many(user, a), rows)


class _CountMethod(PreferenceMethod):
    def counts(self, user) -> np.ndarray:
        raise NotImplementedError

    def general_preference(self, user):
        c = self.counts(user)
        if c.sum() == 0:
            raise ExplanationError(f"user {user} has no liked train items with attributes")
        return make_ranking(user, None, "general", {int(a): float(c[a]) for a in np.flatnonzero(c)})

    def specific_preference(self, user, item):
        c = self.counts(user)
        present = self.catalog.attributes_of(item)
        if not present:
            raise ExplanationError(f"item {item} has no attributes to explain")
        return make_ranking(user, item, "specific", {a: float(c[a]) for a in present})


class GlobalPopularity(_CountMethod):
    """Genre frequency over every liked (rating >= 4) train rating."""

    method_id = "global-pop"

    def __init__(self, train, catalog):
        super().__init__(train, catalog)
        mask = train.ratings >= 4
        self._counts = catalog.matrix[catalog.rows(train.items[mask])].sum(axis=0)

    def counts(self, user):
        return self._counts


class UserPopularity(_CountMethod):
    """Genre frequency over one user's liked train items."""

    method_id = "user-pop"

    def counts(self, user):
        liked = self.liked(user)
        if len(liked) == 0:
            raise ExplanationError(f"user {user} has no liked train items")
        return self.catalog.matrix[self.catalog.rows(liked)].sum(axis=0)


class RandomMethod(PreferenceMethod):
    """Seeded random permutations; independent of query order."""

    method_id = "random"

    def __init__(self, train, catalog, seed: int = 0):
        super().__init__(train, catalog)
        self.seed = seed

    def general_preference(self, user):
        rng = np.random.default_rng([self.seed, 0, int(user)])
        perm = rng.permutation(self.catalog.n_attributes)
        n = len(perm)
        return PreferenceRanking(int(user), None, "general",
                                 tuple((int(a), float(n - r)) for r, a in enumerate(perm)))

    def specific_preference(self, user, item):
        present = self.catalog.attributes_of(item)
        if not present:
            raise ExplanationError(f"item {item} has no attributes to explain")
        rng = np.random.default_rng([self.seed, 1, int(user), int(item)])
        perm = rng.permutation(present)
        n = len(perm)
        return PreferenceRanking(int(user), int(item), "specific",
                                 tuple((int(a), float(n - r)) for r, a in enumerate(perm)))


def weighted_least_squares(x, y, w, ridge: float = 1e-6, intercept: bool = True) -> np.ndarray:
    """Solve min sum_j w_j (y_j - [1, x_j] . beta)^2; ridge only if the design is rank deficient."""
    return _wls_operator(x, w, ridge, intercept) @ np.asarray(y, dtype=np.float64)


def _wls_operator(x, w, ridge, intercept):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if intercept:
        x = np.hstack([np.ones((len(x), 1)), x])
    xtw = x.T * np.asarray(w, dtype=np.float64)
    gram = xtw @ x
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        gram = gram + ridge * np.eye(gram.shape[0])
    return np.linalg.solve(gram, xtw)


@dataclass
class LimeConfig:
    n_samples: int = 200
    kernel_width: float | None = 0.25   # None: uniform weights
    ridge: float = 1e-6

    def to_dict(self):
        return asdict(self)


def cosine_distances(emb: np.ndarray, rows) -> np.ndarray:
    norm = emb / np.maximum(np.linalg.norm(emb, axis=1, keepdims=True), 1e-12)
    return 1.0 - norm[rows] @ norm.T


class LimeRS(_ScoredMethod):
    """Local weighted linear surrogate of the MF scores around each item.

    Samples are the items nearest to the explained item in MF item-embedding
    space (cosine distance), weighted by the LIME kernel
    ``sqrt(exp(-d^2 / width^2))``. The regression maps attribute vectors to
    the user's MF scores; its coefficients are the attribute preferences.
    """

    method_id = "lime-rs"

    def __init__(self, mf: MFModel, train, catalog, config: LimeConfig | None = None, pool=None):
        super().__init__(train, catalog)
        self.mf = mf
        self.config = config or LimeConfig()
        if pool is None:
            pool = np.unique(np.concatenate([v for v in mf.rated.values()] or [np.empty(0, np.int64)]))
        self.pool = np.asarray(pool, dtype=np.int64)
        self._pool_rows = np.array([mf.item_row(i) for i in self.pool], dtype=np.int64)
        self._pool_attrs = catalog.matrix[catalog.rows(self.pool)]
        self._pool_emb = mf.item_embeddings[self._pool_rows]
        self._pos = {int(i): k for k, i in enumerate(self.pool)}
        self._cache: dict = {}

    def neighborhood(self, item):
        """(pool indices, kernel weights, regression operator) for one item."""
        item = int(item)
        if item not in self._cache:
            if item not in self._pos:
                raise ExplanationError(f"item {item} is not in the LIME-RS sample pool")
            cfg = self.config
            dist = cosine_distances(self._pool_emb, [self._pos[item]])[0]
            order = np.lexsort((self.pool, dist))[:cfg.n_samples]
            if cfg.kernel_width is None:
                w = np.ones(len(order))
            else:
                w = np.sqrt(np.exp(-dist[order] ** 2 / cfg.kernel_width ** 2))
            op = _wls_operator(self._pool_attrs[order], w, cfg.ridge, True)
            self._cache[item] = (order, w, op)
        return self._cache[item]

    def coefficients(self, user, item) -> np.ndarray:
        scores = self.mf.scores(user)[self._pool_rows]
        order, _, op = self.neighborhood(item)
        return (op @ scores[order])[1:]

    def item_scores(self, user, items):
        scores = self.mf.scores(user)[self._pool_rows]
        out = np.zeros((len(items), self.catalog.n_attributes))
        for k, item in enumerate(items):
            order, _, op = self.neighborhood(item)
            out[k] = (op @ scores[order])[1:]
        return out


@dataclass
class AmcfConfig:
    epochs: int = 2000
    lr: float = 0.01
    init_std: float = 0.1
    tolerance: float = 1e-7
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def attention_weights(q: np.ndarray, basis: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over present attributes of <item embedding, attribute basis vector>."""
    s = q @ basis.T
    s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def reconstruction_loss_grad(q, basis, mask):
    """Loss 0.5 * mean_n ||sum_a alpha_na B_a - q_n||^2 and its gradient w.r.t. B."""
    n = len(q)
    alpha = attention_weights(q, basis, mask)
    r = alpha @ basis - q
    loss = 0.5 * np.sum(r * r) / n
    g_alpha = r @ basis.T / n
    g_s = alpha * (g_alpha - np.sum(alpha * g_alpha, axis=1, keepdims=True))
    grad = alpha.T @ r / n + g_s.T @ q
    return loss, grad


def fit_attribute_basis(q, mask, config: AmcfConfig | None = None):
    """Learn one basis vector per attribute so that attention-weighted sums rebuild ``q``."""
    config = config or AmcfConfig()
    q = np.asarray(q, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    keep = mask.any(axis=1)
    q, mask = q[keep], mask[keep]
    rng = np.random.default_rng(config.seed)
    basis = rng.normal(0.0, config.init_std, size=(mask.shape[1], q.shape[1]))
    opt = Adam(lr=config.lr)
    losses = []
    for epoch in range(1, config.epochs + 1):
        loss, grad = reconstruction_loss_grad(q, basis, mask)
        if not np.isfinite(loss):
            raise TrainingError(f"AMCF-PH training diverged at epoch {epoch}")
        losses.append(loss)
        if len(losses) > 1 and abs(losses[-2] - loss) <= config.tolerance * max(losses[-2], 1e-12):
            break
        opt.step([basis], [grad])
    return basis, losses


class AmcfPH(_ScoredMethod):
    """Attention over attribute basis vectors reconstructing frozen MF item embeddings.

    Specific preference is the attention weight of each present attribute;
    general preference is the mean weight over the user's liked items.
    """

    method_id = "amcf-ph"

    def __init__(self, mf: MFModel, train, catalog, config: AmcfConfig | None = None, pool=None):
        super().__init__(train, catalog)
        self.mf = mf
        self.config = config or AmcfConfig()
        if pool is None:
            pool = np.unique(np.concatenate([v for v in mf.rated.values()] or [np.empty(0, np.int64)]))
        before = mf.parameter_hash()
        q = mf.item_embeddings[[mf.item_row(i) for i in pool]]
        mask = catalog.matrix[catalog.rows(pool)] > 0
        self.basis, self.losses = fit_attribute_basis(q, mask, self.config)
        if mf.parameter_hash() != before:
            raise AssertionError("MF parameters changed during AMCF-PH training")
        self.mf_hash = before

    def attention(self, items) -> np.ndarray:
        items = list(items)
        q = self.mf.item_embeddings[[self.mf.item_row(i) for i in items]]
        mask = self.catalog.matrix[self.catalog.rows(items)] > 0
        out = np.zeros(mask.shape)
        has = mask.any(axis=1)
        if has.any():
            out[has] = attention_weights(q[has], self.basis, mask[has])
        return out

    def item_scores(self, user, items):
        return self.attention(items)


def build_method(method_id, *, train, catalog, mf=None, aux_models=None, seed=0,
                 lime=None, amcf=None, reduction="mean") -> PreferenceMethod:
    if method_id.startswith("ours-"):
        arch = method_id.split("-", 1)[1]
        if not aux_models or arch not in aux_models:
            raise ValidationError(f"no trained aux model for {method_id}")
        return OursMethod(aux_models[arch], train, catalog, reduction, method_id)
    if method_id == "global-pop":
        return GlobalPopularity(train, catalog)
    if method_id == "user-pop":
        return UserPopularity(train, catalog)
    if method_id == "random":
        return RandomMethod(train, catalog, seed)
    if method_id == "lime-rs":
        m = LimeRS(mf, train, catalog, lime)
        m.reduction = reduction
        return m
    if method_id == "amcf-ph":
        m = AmcfPH(mf, train, catalog, amcf)
        m.reduction = reduction
        return m
    raise ValidationError(f"unknown method {method_id!r}; expected one of {METHOD_IDS}")
