"""Biased matrix factorization trained with SGD, plus top-k recommendation."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import InteractionSet
from .errors import TrainingError, ValidationError

log = logging.getLogger(__name__)

FORMAT = "attrexplain-mf/1"


@dataclass
class MFConfig:
    dim: int = 32
    lr: float = 0.01
    reg: float = 0.05
    epochs: int = 50
    batch_size: int = 64
    init_std: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RecommendationList:
    user_id: int
    items: tuple
    scores: tuple
    k: int


@dataclass
class MFModel:
    user_ids: np.ndarray
    item_ids: np.ndarray
    user_embeddings: np.ndarray   # (n_users, d)
    item_embeddings: np.ndarray   # (n_items, d)
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_mean: float
    rated: dict = field(default_factory=dict)   # user -> sorted train item ids
    train_fingerprint: str = ""
    rmse_history: list = field(default_factory=list)

    def __post_init__(self):
        self.user_ids = np.asarray(self.user_ids, dtype=np.int64)
        self.item_ids = np.asarray(self.item_ids, dtype=np.int64)
        for name in ("user_embeddings", "item_embeddings", "user_bias", "item_bias"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            setattr(self, name, arr)
        self.global_mean = float(self.global_mean)
        if self.user_embeddings.shape[0] != len(self.user_ids) or self.item_embeddings.shape[0] != len(self.item_ids):
            raise ValidationError("embedding rows do not match id lists")
        if self.user_embeddings.shape[1] != self.item_embeddings.shape[1]:
            raise ValidationError("user and item embedding widths differ")
        self._urow = {int(u): k for k, u in enumerate(self.user_ids)}
        self._irow = {int(i): k for k, i in enumerate(self.item_ids)}

    @property
    def dim(self) -> int:
        return self.user_embeddings.shape[1]

    def user_row(self, user) -> int:
        try:
            return self._urow[int(user)]
        except KeyError:
            raise ValidationError(f"unknown user {user}") from None

    def item_row(self, item) -> int:
        try:
            return self._irow[int(item)]
        except KeyError:
            raise ValidationError(f"unknown item {item}") from None

    def has_user(self, user) -> bool:
        return int(user) in self._urow

    def scores(self, user) -> np.ndarray:
        """Predicted score for every item, aligned with ``item_ids``."""
        u = self.user_row(user)
        return (self.global_mean + self.user_bias[u] + self.item_bias
                + self.item_embeddings @ self.user_embeddings[u])

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.user_ids, self.item_ids, self.user_embeddings, self.item_embeddings,
                  self.user_bias, self.item_bias, np.array([self.global_mean])):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "dim": self.dim,
            "global_mean": self.global_mean,
            "user_ids": self.user_ids.tolist(),
            "item_ids": self.item_ids.tolist(),
            "user_bias": self.user_bias.tolist(),
            "item_bias": self.item_bias.tolist(),
            "user_embeddings": self.user_embeddings.ravel().tolist(),
            "item_embeddings": self.item_embeddings.ravel().tolist(),
            "rated": {str(u): list(map(int, v)) for u, v in sorted(self.rated.items())},
            "train_fingerprint": self.train_fingerprint,
            "rmse_history": list(self.rmse_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MFModel":
        if d.get("format") != FORMAT:
            raise ValidationError(f"unsupported MF model format {d.get('format')!r}")
        dim = d["dim"]
        return cls(
            user_ids=d["user_ids"], item_ids=d["item_ids"],
            user_embeddings=np.array(d["user_embeddings"]).reshape(-1, dim),
            item_embeddings=np.array(d["item_embeddings"]).reshape(-1, dim),
            user_bias=d["user_bias"], item_bias=d["item_bias"], global_mean=d["global_mean"],
            rated={int(u): np.array(v, dtype=np.int64) for u, v in d["rated"].items()},
            train_fingerprint=d["train_fingerprint"], rmse_history=d["rmse_history"],
        )


def train_mf(train: InteractionSet, config: MFConfig | None = None, item_ids=None) -> MFModel:
    """Fit mu + b_u + b_i + <p_u, q_i> to the train ratings.

    Updates are per-rating SGD steps applied in small shuffled batches
    (gradients are summed, not averaged). ``item_ids`` fixes the item universe,
    e.g. to the full catalog so unrated items can still be recommended.
    """
    config = config or MFConfig()
    if len(train) == 0:
        raise ValidationError("cannot train MF on an empty interaction set")
    rng = np.random.default_rng(config.seed)
    user_ids = np.array(train.user_ids, dtype=np.int64)
    if item_ids is None:
        item_ids = np.unique(train.items)
    item_ids = np.unique(np.asarray(item_ids, dtype=np.int64))
    missing = np.setdiff1d(train.items, item_ids)
    if len(missing):
        raise ValidationError(f"train references items outside the item universe: {missing[:5].tolist()}")

    u = np.searchsorted(user_ids, train.users)
    i = np.searchsorted(item_ids, train.items)
    r = train.ratings.astype(np.float64)
    mu = float(r.mean())
    d = config.dim
    P = rng.normal(0.0, config.init_std, size=(len(user_ids), d))
    Q = rng.normal(0.0, config.init_std, size=(len(item_ids), d))
    bu = np.zeros(len(user_ids))
    bi = np.zeros(len(item_ids))
    lr, reg = config.lr, config.reg

    def rmse():
        pred = mu + bu[u] + bi[i] + np.einsum("ij,ij->i", P[u], Q[i])
        return float(np.sqrt(np.mean((r - pred) ** 2)))

    history = [rmse()]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(r))
        for s in range(0, len(r), config.batch_size):
            b = order[s:s + config.batch_size]
            ub, ib = u[b], i[b]
            pu, qi = P[ub], Q[ib]
            e = r[b] - (mu + bu[ub] + bi[ib] + np.einsum("ij,ij->i", pu, qi))
            np.add.at(bu, ub, lr * (e - reg * bu[ub]))
            np.add.at(bi, ib, lr * (e - reg * bi[ib]))
            np.add.at(P, ub, lr * (e[:, None] * qi - reg * pu))
            np.add.at(Q, ib, lr * (e[:, None] * pu - reg * qi))
        history.append(rmse())
        if not np.isfinite(history[-1]):
            raise TrainingError(f"MF training diverged at epoch {epoch}")
    log.info("MF trained: %d users, %d items, d=%d, train RMSE %.4f -> %.4f",
             len(user_ids), len(item_ids), d, history[0], history[-1])
    rated = {int(usr): np.sort(train.user_items(usr)) for usr in user_ids}
    return MFModel(user_ids, item_ids, P, Q, bu, bi, mu, rated, train.fingerprint(), history)


def predict(model: MFModel, user, item) -> float:
    """mu + b_u + b_i + <p_u, q_i>, unclamped."""
    ur, ir = model.user_row(user), model.item_row(item)
    return float(model.global_mean + model.user_bias[ur] + model.item_bias[ir]
                 + model.user_embeddings[ur] @ model.item_embeddings[ir])


def user_embedding(model: MFModel, user) -> np.ndarray:
    return model.user_embeddings[model.user_row(user)]


def rank_items(item_ids, scores) -> np.ndarray:
    """Indices sorting by descending score, ties by ascending item id."""
    return np.lexsort((np.asarray(item_ids), -np.asarray(scores)))


def top_k_recommend(model: MFModel, user, k: int = 20) -> RecommendationList:
    """The ``k`` best-scoring items the user did not rate in training."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    scores = model.scores(user)
    keep = ~np.isin(model.item_ids, model.rated.get(int(user), ()))
    ids, sc = model.item_ids[keep], scores[keep]
    if len(ids) < k:
        log.warning("user %s has only %d candidate items (< k=%d)", user, len(ids), k)
    top = rank_items(ids, sc)[:k]
    return RecommendationList(int(user), tuple(int(x) for x in ids[top]),
                              tuple(float(x) for x in sc[top]), k)
