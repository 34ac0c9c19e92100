"""Command-line pipeline: split -> train-mf -> train-aux -> evaluate.

Every artifact written to the run directory carries a stage key: a hash of
the config fields (and upstream keys) that determine it. Downstream stages
refuse artifacts whose key does not match the current config.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import dataset, explainer, metrics
from .auxmodel import ARCHITECTURES, AuxModel, AuxSpec, train_aux
from .baselines import METHOD_IDS, UNSUPPORTED, AmcfConfig, LimeConfig, build_method
from .errors import AttrExplainError, StaleArtifactError, TrainingError, ValidationError
from .mfrec import MFConfig, MFModel, train_mf
from .optimkit import TrainConfig

log = logging.getLogger("attrexplain")

ENV_PREFIX = "ATTREX_"
DEFAULT_METHODS = tuple(m for m, _ in metrics.COLUMNS)

DEFAULT_CONFIG = """\
# attrexplain experiment configuration
[data]
ratings = data/ml-100k/u.data
items = data/ml-100k/u.item

[experiment]
seed = 0
out = runs/default

[split]
train_fraction = 0.7

[mf]
dim = 32
lr = 0.01
reg = 0.05
epochs = 50
batch_size = 64
init_std = 0.1

[aux]
architectures = linear, mlp1, mlp2
hidden_width = 64
optimizer = adam
lr = 0.001
batch_size = 256
max_epochs = 200
tolerance = 1e-4
patience = 3

[explainer]
reduction = mean

[baselines]
methods = lime-rs, amcf, amcf-ph, global-pop, user-pop, random, ours-linear, ours-mlp1, ours-mlp2
lime.n_samples = 200
lime.kernel_width = 0.25
lime.ridge = 1e-6
amcf.epochs = 2000
amcf.lr = 0.01
amcf.init_std = 0.1

[metrics]
k = 3
n_recs = 20
rbo_p = 0.9
odds_alpha = 0
"""


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _abspath(p) -> str:
    return str(Path(p).resolve())


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    ratings: str = "data/ml-100k/u.data"
    items: str = "data/ml-100k/u.item"
    seed: int = 0
    out: str = "runs/default"
    train_fraction: float = 0.7
    mf: MFConfig = field(default_factory=MFConfig)
    architectures: tuple = ("linear", "mlp1", "mlp2")
    hidden_width: int = 64
    aux_train: TrainConfig = field(default_factory=TrainConfig)
    reduction: str = "mean"
    methods: tuple = DEFAULT_METHODS
    lime: LimeConfig = field(default_factory=LimeConfig)
    amcf: AmcfConfig = field(default_factory=AmcfConfig)
    metrics: metrics.MetricConfig = field(default_factory=metrics.MetricConfig)
    base_dir: str = "."

    @classmethod
    def from_ini(cls, text: str, base_dir=".") -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(DEFAULT_CONFIG)
        cp.read_string(text)
        g = cp.get
        try:
            mf = MFConfig(dim=cp.getint("mf", "dim"), lr=cp.getfloat("mf", "lr"), reg=cp.getfloat("mf", "reg"),
                          epochs=cp.getint("mf", "epochs"), batch_size=cp.getint("mf", "batch_size"),
                          init_std=cp.getfloat("mf", "init_std"))
            aux = TrainConfig(max_epochs=cp.getint("aux", "max_epochs"), batch_size=cp.getint("aux", "batch_size"),
                              tolerance=cp.getfloat("aux", "tolerance"), patience=cp.getint("aux", "patience"),
                              optimizer=g("aux", "optimizer"), lr=cp.getfloat("aux", "lr"))
            width = g("baselines", "lime.kernel_width").strip().lower()
            lime = LimeConfig(n_samples=cp.getint("baselines", "lime.n_samples"),
                              kernel_width=None if width in ("none", "uniform") else float(width),
                              ridge=cp.getfloat("baselines", "lime.ridge"))
            amcf = AmcfConfig(epochs=cp.getint("baselines", "amcf.epochs"), lr=cp.getfloat("baselines", "amcf.lr"),
                              init_std=cp.getfloat("baselines", "amcf.init_std"))
            met = metrics.MetricConfig(k=cp.getint("metrics", "k"), n_recs=cp.getint("metrics", "n_recs"),
                                       rbo_p=cp.getfloat("metrics", "rbo_p"),
                                       odds_alpha=cp.getfloat("metrics", "odds_alpha"))
            cfg = cls(ratings=g("data", "ratings"), items=g("data", "items"),
                      seed=cp.getint("experiment", "seed"), out=g("experiment", "out"),
                      train_fraction=cp.getfloat("split", "train_fraction"), mf=mf,
                      architectures=tuple(_list(g("aux", "architectures"))),
                      hidden_width=cp.getint("aux", "hidden_width"), aux_train=aux,
                      reduction=g("explainer", "reduction"),
                      methods=tuple(_list(g("baselines", "methods"))),
                      lime=lime, amcf=amcf, metrics=met, base_dir=str(base_dir))
        except ValueError as e:
            raise ValidationError(f"bad config value: {e}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, env=None) -> "ExperimentConfig":
        env = os.environ if env is None else env
        if path:
            p = Path(path)
            if not p.exists():
                raise ValidationError(f"config file {path} not found")
            cfg = cls.from_ini(p.read_text(), base_dir=p.parent)
        else:
            cfg = cls.from_ini("")
        over = {}
        # path overrides are relative to the working directory, not the config file
        for key, cast in (("ratings", _abspath), ("items", _abspath), ("out", _abspath), ("seed", int)):
            if ENV_PREFIX + key.upper() in env:
                over[key] = cast(env[ENV_PREFIX + key.upper()])
        return replace(cfg, **over) if over else cfg

    def validate(self):
        bad = [a for a in self.architectures if a not in ARCHITECTURES]
        if bad:
            raise ValidationError(f"unknown architectures {bad}")
        bad = [m for m in self.methods if m not in METHOD_IDS and m not in UNSUPPORTED]
        if bad:
            raise ValidationError(f"unknown methods {bad}")
        if self.reduction not in explainer.REDUCTIONS:
            raise ValidationError(f"unknown reduction {self.reduction!r}")

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_dir(self) -> Path:
        return self.path(self.out)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name in ("base_dir", "out"):
                continue
            v = getattr(self, f.name)
            d[f.name] = v.to_dict() if hasattr(v, "to_dict") else (list(v) if isinstance(v, tuple) else v)
        return d

    def aux_spec(self, arch: str) -> AuxSpec:
        return AuxSpec(arch, self.hidden_width, "relu", replace(self.aux_train, seed=self.seed))

    # stage keys
    def split_key(self) -> str:
        return _hash({"ratings": file_sha256(self.path(self.ratings)),
                      "fraction": self.train_fraction, "seed": self.seed})

    def mf_key(self) -> str:
        return _hash({"split": self.split_key(), "items": file_sha256(self.path(self.items)),
                      "mf": self.mf.to_dict(), "seed": self.seed})

    def aux_key(self, arch: str) -> str:
        return _hash({"mf": self.mf_key(), "spec": self.aux_spec(arch).to_dict()})


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True) + "\n")
    tmp.replace(path)


def _read_stage(path: Path, key: str, stage: str) -> dict:
    if not path.exists():
        raise StaleArtifactError(f"{path} is missing; run `attrexplain {stage}` first")
    d = json.loads(path.read_text())
    if d.get("stage_key") != key:
        raise StaleArtifactError(f"{path} was built from a different config; rerun `attrexplain {stage}`")
    return d


class Pipeline:
    """Loads data once and caches stage outputs for one config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._ratings = None
        self._catalog = None

    @property
    def out(self) -> Path:
        return self.config.out_dir

    @property
    def ratings(self):
        if self._ratings is None:
            self._ratings = dataset.parse_ratings(self.config.path(self.config.ratings))
        return self._ratings

    @property
    def catalog(self):
        if self._catalog is None:
            self._catalog = dataset.parse_items(self.config.path(self.config.items))
            missing = set(map(int, self.ratings.items)) - set(map(int, self._catalog.item_ids))
            if missing:
                raise ValidationError(f"rated items missing from the catalog: {sorted(missing)[:5]}")
        return self._catalog

    def _fresh(self, path: Path, key: str) -> bool:
        if not path.exists():
            return False
        try:
            return json.loads(path.read_text()).get("stage_key") == key
        except json.JSONDecodeError:
            return False

    def split(self, force=False) -> Path:
        path, key = self.out / "split.json", self.config.split_key()
        if force or not self._fresh(path, key):
            s = dataset.stratified_split(self.ratings, self.config.train_fraction, self.config.seed)
            _write_json(path, {"stage_key": key, **s.to_snapshot()})
            log.info("split: %d train / %d test -> %s", len(s.train), len(s.test), path)
        return path

    def load_split(self):
        d = _read_stage(self.out / "split.json", self.config.split_key(), "split")
        return dataset.split_from_snapshot(self.ratings, d)

    def train_mf(self, force=False) -> Path:
        path, key = self.out / "mf.json", self.config.mf_key()
        if force or not self._fresh(path, key):
            split = self.load_split()
            mf = train_mf(split.train, replace(self.config.mf, seed=self.config.seed),
                          item_ids=self.catalog.item_ids)
            _write_json(path, {"stage_key": key, "split_key": self.config.split_key(), **mf.to_dict()})
            log.info("mf: train RMSE %.4f -> %s", mf.rmse_history[-1], path)
        return path

    def load_mf(self) -> MFModel:
        return MFModel.from_dict(_read_stage(self.out / "mf.json", self.config.mf_key(), "train-mf"))

    def train_aux(self, arch: str, force=False) -> Path:
        path, key = self.out / f"aux-{arch}.json", self.config.aux_key(arch)
        if force or not self._fresh(path, key):
            split, mf = self.load_split(), self.load_mf()
            aux = train_aux(split.train, mf, self.catalog, self.config.aux_spec(arch))
            _write_json(path, {"stage_key": key, "mf_key": self.config.mf_key(), **aux.to_dict()})
            log.info("aux %s: %d epochs, train MSE %.4f -> %s", arch, len(aux.losses), aux.losses[-1], path)
        return path

    def load_aux(self, arch: str, mf: MFModel) -> AuxModel:
        d = _read_stage(self.out / f"aux-{arch}.json", self.config.aux_key(arch), f"train-aux --arch {arch}")
        return AuxModel.from_dict(d, mf)

    def methods(self, method_ids, split, mf) -> dict:
        cfg = self.config
        aux = {m.split("-", 1)[1]: self.load_aux(m.split("-", 1)[1], mf)
               for m in method_ids if m.startswith("ours-")}
        out = {}
        for mid in method_ids:
            if mid in UNSUPPORTED:
                out[mid] = None
                continue
            out[mid] = build_method(mid, train=split.train, catalog=self.catalog, mf=mf, aux_models=aux,
                                    seed=cfg.seed, lime=cfg.lime, amcf=replace(cfg.amcf, seed=cfg.seed),
                                    reduction=cfg.reduction)
        return out

    def evaluate(self, method_ids=None) -> metrics.MetricReport:
        method_ids = list(method_ids or self.config.methods)
        split, mf = self.load_split(), self.load_mf()
        extra = {"experiment": self.config.to_dict(), "methods": method_ids,
                 "stage_keys": {"split": self.config.split_key(), "mf": self.config.mf_key(),
                                **{f"aux-{m[5:]}": self.config.aux_key(m[5:])
                                   for m in method_ids if m.startswith("ours-")}}}
        report = metrics.build_report(self.methods(method_ids, split, mf), split, mf, self.catalog,
                                      self.config.metrics, extra)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "report.json").write_text(report.to_json())
        (self.out / "report.md").write_text(report.to_markdown())
        (self.out / "report.csv").write_text(report.to_csv())
        return report

    def explain(self, user: int, item: int | None = None, arch: str = "linear") -> dict:
        split, mf = self.load_split(), self.load_mf()
        aux = self.load_aux(arch, mf)
        if item is None:
            ranking = explainer.general_preference(aux, user, split.train.liked_items(user), self.catalog,
                                                   self.config.reduction)
        else:
            ranking = explainer.specific_preference(aux, user, item, self.catalog)
        return {"method": f"ours-{arch}", **explainer.to_dict(ranking, self.catalog)}


def cmd_split(config, force=False):
    return Pipeline(config).split(force)


def cmd_train_mf(config, force=False):
    return Pipeline(config).train_mf(force)


def cmd_train_aux(config, architecture="linear", force=False):
    return Pipeline(config).train_aux(architecture, force)


def cmd_explain(config, user, item=None, architecture="linear"):
    return Pipeline(config).explain(user, item, architecture)


def cmd_evaluate(config, methods=None):
    return Pipeline(config).evaluate(methods)


def cmd_reproduce(config, methods=None, force=False):
    """Run every stage (reusing fresh artifacts unless ``force``) and evaluate."""
    p = Pipeline(config)
    p.out.mkdir(parents=True, exist_ok=True)
    (p.out / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n")
    p.split(force)
    p.train_mf(force)
    method_ids = list(methods or config.methods)
    archs = sorted({m[5:] for m in method_ids if m.startswith("ours-")})
    for arch in archs:
        p.train_aux(arch, force)
    return p.evaluate(method_ids)


def cmd_genre_dist(config):
    p = Pipeline(config)
    p.out.mkdir(parents=True, exist_ok=True)
    path = p.out / "genre_distribution.csv"
    path.write_text(metrics.genre_distribution_csv(p.catalog))
    return path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults built in)")
    common.add_argument("--seed", type=int, help="overrides [experiment] seed")
    common.add_argument("--out", help="run directory; overrides [experiment] out")
    common.add_argument("--force", action="store_true", help="recompute even if the artifact is fresh")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="attrexplain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("split", parents=[common], help="write the stratified split snapshot")
    sub.add_parser("train-mf", parents=[common], help="train the MF recommender")
    p = sub.add_parser("train-aux", parents=[common], help="train an auxiliary model")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="linear")
    p = sub.add_parser("explain", parents=[common], help="explain for a user (and item)")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="linear")
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--item", type=int)
    for name, help_ in (("evaluate", "compute the metric report"),
                        ("reproduce", "run all stages and emit the report")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--method", help="comma-separated method ids")
        p.add_argument("--format", choices=("json", "md", "csv"), default="md")
    sub.add_parser("genre-dist", parents=[common], help="write the genre distribution CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ExperimentConfig.load(args.config)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.out is not None:
            over["out"] = _abspath(args.out)
        config = replace(config, **over)
        if args.command == "split":
            print(cmd_split(config, args.force))
        elif args.command == "train-mf":
            print(cmd_train_mf(config, args.force))
        elif args.command == "train-aux":
            print(cmd_train_aux(config, args.arch, args.force))
        elif args.command == "explain":
            print(json.dumps(cmd_explain(config, args.user, args.item, args.arch), indent=2))
        elif args.command in ("evaluate", "reproduce"):
            methods = _list(args.method) if args.method else None
            if methods:
                replace(config, methods=tuple(methods)).validate()
            start = time.perf_counter()
            if args.command == "evaluate":
                report = cmd_evaluate(config, methods)
            else:
                report = cmd_reproduce(config, methods, args.force)
            log.info("%s finished in %.1f s", args.command, time.perf_counter() - start)
            print({"json": report.to_json, "md": report.to_markdown, "csv": report.to_csv}[args.format](),
                  end="")
        elif args.command == "genre-dist":
            print(cmd_genre_dist(config))
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (AttrExplainError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
