"""Auxiliary rating model: [frozen MF user embedding ; item attribute vector] -> rating."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import AttributeCatalog, InteractionSet
from .errors import ValidationError
from .mfrec import MFModel
from . import optimkit
from .optimkit import FeedForwardNet, TrainConfig, forward

log = logging.getLogger(__name__)

FORMAT = "attrexplain-aux/1"
# number of hidden layers per architecture
ARCHITECTURES = {"linear": 0, "mlp1": 1, "mlp2": 3}


@dataclass
class AuxSpec:
    architecture: str = "linear"
    hidden_width: int = 64
    activation: str = "relu"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"unknown architecture {self.architecture!r}; "
                                  f"expected one of {sorted(ARCHITECTURES)}")

    @property
    def hidden(self) -> tuple:
        return (self.hidden_width,) * ARCHITECTURES[self.architecture]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AuxSpec":
        d = dict(d)
        d["train"] = TrainConfig(**d["train"])
        return cls(**d)


@dataclass
class AuxModel:
    net: FeedForwardNet
    mf: MFModel
    n_attributes: int
    spec: AuxSpec
    mf_hash: str = ""
    losses: list = field(default_factory=list)

    def __post_init__(self):
        if self.net.in_dim != self.mf.dim + self.n_attributes:
            raise ValidationError(f"aux input width {self.net.in_dim} != "
                                  f"{self.mf.dim} + {self.n_attributes}")
        if not self.mf_hash:
            self.mf_hash = self.mf.parameter_hash()

    @property
    def input_dim(self) -> int:
        return self.net.in_dim

    def inputs(self, user, attributes) -> np.ndarray:
        """Rows [user embedding ; attributes] for one user and many attribute vectors."""
        emb = self.mf.user_embeddings[self.mf.user_row(user)]
        a = np.atleast_2d(np.asarray(attributes, dtype=np.float64))
        if a.shape[1] != self.n_attributes:
            raise ValidationError(f"attribute vector length {a.shape[1]} != {self.n_attributes}")
        return np.hstack([np.broadcast_to(emb, (len(a), len(emb))), a])

    def predict_many(self, user, attributes) -> np.ndarray:
        return forward(self.net, self.inputs(user, attributes))

    def linear_coefficients(self) -> np.ndarray:
        """Attribute weights of a linear aux model."""
        if self.net.depth != 1:
            raise ValidationError("coefficients are only defined for the linear architecture")
        return self.net.layers[0].weight[0, self.mf.dim:].copy()

    def to_dict(self) -> dict:
        return {"format": FORMAT, "spec": self.spec.to_dict(), "n_attributes": self.n_attributes,
                "mf_hash": self.mf_hash, "net": self.net.to_dict(), "losses": list(self.losses)}

    @classmethod
    def from_dict(cls, d: dict, mf: MFModel) -> "AuxModel":
        if d.get("format") != FORMAT:
            raise ValidationError(f"unsupported aux model format {d.get('format')!r}")
        if d["mf_hash"] != mf.parameter_hash():
            raise ValidationError("aux model was trained on a different MF model")
        return cls(FeedForwardNet.from_dict(d["net"]), mf, d["n_attributes"],
                   AuxSpec.from_dict(d["spec"]), d["mf_hash"], d["losses"])


def build_input(user_embedding, attributes, n_attributes: int | None = None) -> np.ndarray:
    emb = np.asarray(user_embedding, dtype=np.float64).reshape(-1)
    attrs = np.asarray(attributes, dtype=np.float64).reshape(-1)
    if n_attributes is not None and len(attrs) != n_attributes:
        raise ValidationError(f"attribute vector length {len(attrs)} != {n_attributes}")
    return np.concatenate([emb, attrs])


def training_matrix(train: InteractionSet, mf: MFModel, catalog: AttributeCatalog):
    """One row per train rating; target is the original rating."""
    missing = [u for u in train.user_ids if not mf.has_user(u)]
    if missing:
        raise ValidationError(f"users without MF embeddings: {missing[:5]}")
    urows = np.array([mf.user_row(u) for u in train.users], dtype=np.int64)
    x = np.hstack([mf.user_embeddings[urows], catalog.matrix[catalog.rows(train.items)]])
    return x, train.ratings.astype(np.float64)


def train_aux(train: InteractionSet, mf: MFModel, catalog: AttributeCatalog,
              spec: AuxSpec | None = None) -> AuxModel:
    spec = spec or AuxSpec()
    if mf.train_fingerprint and mf.train_fingerprint != train.fingerprint():
        raise ValidationError("MF model was trained on a different train split")
    before = mf.parameter_hash()
    x, y = training_matrix(train, mf, catalog)
    net = FeedForwardNet.create(x.shape[1], spec.hidden, seed=spec.train.seed,
                                activation=spec.activation)
    result = optimkit.train(net, x, y, spec.train)
    after = mf.parameter_hash()
    if before != after:
        raise AssertionError("MF parameters changed during auxiliary training")
    log.info("aux %s: %d epochs, train MSE %.4f", spec.architecture, result.epochs, result.final_loss)
    return AuxModel(result.net, mf, catalog.n_attributes, spec, after, result.losses)


def predict_rating(aux: AuxModel, user, attributes) -> float:
    """Predicted rating; ``attributes`` may be a modified (e.g. zeroed) vector."""
    a = np.asarray(attributes, dtype=np.float64)
    if a.ndim != 1:
        raise ValidationError("expected a single attribute vector")
    return float(aux.predict_many(user, a)[0])
