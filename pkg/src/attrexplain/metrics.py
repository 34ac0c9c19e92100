"""Coverage and personalization metrics for attribute-preference methods."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import AttributeCatalog, SplitDataset
from .errors import AttrExplainError, ValidationError
from .explainer import top_k
from .mfrec import MFModel, top_k_recommend

log = logging.getLogger(__name__)

METRICS = (
    "Testset Coverage",
    "Recommendations Coverage",
    "CondProb Generalpref Coverage",
    "CondProb Generalpref Ranking",
    "CondProb Specificpref Coverage",
    "CondProb Specificpref Ranking",
    "Odds Generalpref Coverage",
    "Odds Generalpref Ranking",
    "Odds Specificpref Coverage",
    "Odds Specificpref Ranking",
)
COLUMNS = (
    ("lime-rs", "LIME-RS"), ("amcf", "AMCF"), ("amcf-ph", "AMCF-PH"),
    ("global-pop", "GBL Popl."), ("user-pop", "User Popl."), ("random", "Random"),
    ("ours-linear", "Our-Linear"), ("ours-mlp1", "Our-MLP1"), ("ours-mlp2", "Our-MLP2"),
)
LABELS = dict(COLUMNS)


@dataclass(frozen=True)
class ProxyPreference:
    user_id: int
    kind: str              # "cond-prob" | "odds"
    weights: np.ndarray    # NaN where undefined
    inf_order: np.ndarray | None = None   # ranks genres tied at +inf, higher first

    def top_k(self, k: int = 3) -> list[int]:
        """Defined genres by weight, then ``inf_order`` among infinities, then index."""
        defined = np.flatnonzero(~np.isnan(self.weights))
        w = self.weights[defined]
        second = np.zeros(len(defined))
        if self.inf_order is not None:
            second = np.where(np.isinf(w), self.inf_order[defined], 0.0)
        order = np.lexsort((defined, -second, -w))
        return [int(a) for a in defined[order][:k]]


def _user_counts(train, user, catalog):
    idx = train.user_indices(user)
    rows = catalog.matrix[catalog.rows(train.items[idx])]
    r = train.ratings[idx]
    return rows[r >= 4].sum(axis=0), rows[r <= 2].sum(axis=0), rows.sum(axis=0)


def cond_prob_proxy(train, user, catalog) -> ProxyPreference:
    """P(liked | genre present) over the user's train ratings."""
    liked, _, rated = _user_counts(train, user, catalog)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(rated > 0, liked / np.where(rated > 0, rated, 1), np.nan)
    return ProxyPreference(int(user), "cond-prob", w)


def odds_proxy(train, user, catalog, alpha: float = 0.0) -> ProxyPreference:
    """(liked + alpha) / (disliked + alpha) over the user's train ratings.

    With alpha = 0 a genre that was liked but never disliked gets +inf; those
    genres rank first, ordered by liked count (the alpha -> 0+ limit).
    """
    if alpha < 0:
        raise ValidationError("odds smoothing must be >= 0")
    liked, disliked, _ = _user_counts(train, user, catalog)
    seen = (liked + disliked) > 0
    num, den = liked + alpha, disliked + alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(den > 0, num / np.where(den > 0, den, 1), np.inf)
    return ProxyPreference(int(user), "odds", np.where(seen, w, np.nan), liked.astype(np.float64))


def rbo(list_a, list_b, p: float = 0.9) -> float:
    """Truncated rank-biased overlap evaluated to depth max(len(a), len(b))."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"RBO persistence must lie in (0, 1), got {p}")
    depth = max(len(list_a), len(list_b))
    seen_a, seen_b = set(), set()
    overlap = 0
    total = 0.0
    for d in range(depth):
        # overlap tracks |a[:d+1] & b[:d+1]|; lists are duplicate-free
        if d < len(list_a):
            seen_a.add(list_a[d])
            overlap += list_a[d] in seen_b
        if d < len(list_b):
            seen_b.add(list_b[d])
            overlap += list_b[d] in seen_a
        total += p ** d * overlap / (d + 1)
    return (1.0 - p) * total


def covers(preferences, attributes) -> bool:
    return bool(set(preferences) & set(attributes))


def pref_coverage(method_topk, proxy_topk) -> float:
    return 1.0 if covers(method_topk, proxy_topk) else 0.0


def pref_ranking(method_topk, proxy_topk, p: float = 0.9) -> float:
    return rbo(list(method_topk), list(proxy_topk), p)


def item_coverage(preferences, items, catalog: AttributeCatalog) -> float | None:
    """Fraction of ``items`` whose attributes meet ``preferences``; None for no items."""
    items = list(items)
    if not items:
        return None
    prefs = list(preferences)
    rows = catalog.matrix[catalog.rows(items)]
    return float(np.mean(rows[:, prefs].sum(axis=1) > 0)) if prefs else 0.0


def testset_coverage(general_topk, split: SplitDataset, user, catalog) -> float | None:
    return item_coverage(general_topk, split.test.liked_items(user), catalog)


def topk_rec_coverage(general_topk, mf: MFModel, user, catalog, n_recs: int = 20) -> float | None:
    return item_coverage(general_topk, top_k_recommend(mf, user, n_recs).items, catalog)


@dataclass
class MetricConfig:
    k: int = 3
    n_recs: int = 20
    rbo_p: float = 0.9
    odds_alpha: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class UserContext:
    """Per-user inputs shared by every method."""

    user: int
    liked_train: list          # liked train items with at least one attribute
    liked_test: list
    recs: list
    proxies: dict              # kind -> top-k list


def evaluable_users(split: SplitDataset, catalog: AttributeCatalog) -> tuple[list, list]:
    """Users with at least one liked train item carrying an attribute, and the rest."""
    ok, excluded = [], []
    for u in split.train.user_ids:
        liked = split.train.liked_items(u)
        if len(liked) and catalog.matrix[catalog.rows(liked)].any():
            ok.append(u)
        else:
            excluded.append(u)
    return ok, excluded


def user_contexts(split, mf, catalog, config: MetricConfig, users) -> list[UserContext]:
    out = []
    for u in users:
        liked = [int(i) for i in split.train.liked_items(u) if catalog.vector(i).any()]
        out.append(UserContext(
            u, liked, [int(i) for i in split.test.liked_items(u)],
            list(top_k_recommend(mf, u, config.n_recs).items),
            {"CondProb": cond_prob_proxy(split.train, u, catalog).top_k(config.k),
             "Odds": odds_proxy(split.train, u, catalog, config.odds_alpha).top_k(config.k)},
        ))
    return out


def user_metrics(method, ctx: UserContext, catalog, config: MetricConfig) -> dict:
    """The ten per-user values (fractions in [0, 1]); coverage entries may be None."""
    k, p = config.k, config.rbo_p
    general = top_k(method.general_preference(ctx.user), k)
    specific = [top_k(r, k) for r in method.specific_preferences(ctx.user, ctx.liked_train)]
    out = {
        "Testset Coverage": item_coverage(general, ctx.liked_test, catalog),
        "Recommendations Coverage": item_coverage(general, ctx.recs, catalog),
    }
    for proxy, ptop in ctx.proxies.items():
        out[f"{proxy} Generalpref Coverage"] = pref_coverage(general, ptop)
        out[f"{proxy} Generalpref Ranking"] = pref_ranking(general, ptop, p)
        out[f"{proxy} Specificpref Coverage"] = float(np.mean([pref_coverage(s, ptop) for s in specific]))
        out[f"{proxy} Specificpref Ranking"] = float(np.mean([pref_ranking(s, ptop, p) for s in specific]))
    return out


@dataclass
class MetricReport:
    methods: list                      # column order
    values: dict                       # method -> metric -> value in [0, 100] or None
    status: dict                       # method -> "ok" | "unsupported" | error text
    n_users: int
    n_excluded: int
    metric_users: dict                 # metric -> number of users averaged
    config: dict
    fingerprint: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "attrexplain-report/1",
            "fingerprint": self.fingerprint,
            "config": self.config,
            "users_evaluated": self.n_users,
            "users_excluded": self.n_excluded,
            "metric_users": self.metric_users,
            "methods": self.methods,
            "status": self.status,
            "values": self.values,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def best(self, metric):
        vals = [self.values[m][metric] for m in self.methods if self.values[m].get(metric) is not None]
        return max(vals) if vals else None

    def to_markdown(self) -> str:
        head = ["Metrics"] + [LABELS.get(m, m) for m in self.methods]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for metric in METRICS:
            best = self.best(metric)
            cells = [metric]
            for m in self.methods:
                v = self.values[m].get(metric)
                if v is None:
                    cells.append("unsupported")
                elif best is not None and round(v, 1) == round(best, 1):
                    cells.append(f"**{v:.1f}**")
                else:
                    cells.append(f"{v:.1f}")
            lines.append("| " + " | ".join(cells) + " |")
        lines += [
            "",
            f"Users evaluated: {self.n_users} (excluded, no liked train item with a genre: {self.n_excluded}).",
            f"Coverage values are percentages; ranking values are RBO x 100 "
            f"(truncated, p={self.config['metrics']['rbo_p']}, k={self.config['metrics']['k']}).",
            f"Config fingerprint: {self.fingerprint}",
        ]
        lines += [f"Note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric"] + list(self.methods))
        for metric in METRICS:
            row = [metric]
            for m in self.methods:
                v = self.values[m].get(metric)
                row.append("" if v is None else f"{v:.6f}")
            w.writerow(row)
        return buf.getvalue()


def config_fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def evaluate_method(method, contexts, catalog, config: MetricConfig) -> tuple[dict, dict]:
    sums = {m: 0.0 for m in METRICS}
    counts = {m: 0 for m in METRICS}
    for ctx in contexts:
        for metric, v in user_metrics(method, ctx, catalog, config).items():
            if v is not None:
                sums[metric] += v
                counts[metric] += 1
    values = {m: (100.0 * sums[m] / counts[m] if counts[m] else None) for m in METRICS}
    return values, counts


def build_report(methods: dict, split: SplitDataset, mf: MFModel, catalog: AttributeCatalog,
                 config: MetricConfig | None = None, extra_config: dict | None = None) -> MetricReport:
    """Evaluate every method on the same user set.

    ``methods`` maps method id to a constructed method, or to None for methods
    reported as unsupported. A method that raises is reported with its error
    instead of aborting the whole report.
    """
    config = config or MetricConfig()
    users, excluded = evaluable_users(split, catalog)
    contexts = user_contexts(split, mf, catalog, config, users)
    order = [m for m, _ in COLUMNS if m in methods] + [m for m in methods if m not in LABELS]
    values, status = {}, {}
    metric_users = {}
    for mid in order:
        method = methods[mid]
        if method is None:
            values[mid] = {m: None for m in METRICS}
            status[mid] = "unsupported"
            continue
        try:
            values[mid], counts = evaluate_method(method, contexts, catalog, config)
            status[mid] = "ok"
            metric_users = counts
        except (AttrExplainError, ArithmeticError, np.linalg.LinAlgError) as e:
            log.exception("method %s failed", mid)
            values[mid] = {m: None for m in METRICS}
            status[mid] = f"failed: {e}"
    full_config = {"metrics": config.to_dict(), **(extra_config or {})}
    notes = []
    if "amcf" in methods and methods["amcf"] is None:
        notes.append("AMCF (jointly trained, not post-hoc) is not implemented; see AMCF-PH.")
    if "lime-rs" in methods:
        notes.append("LIME-RS general preferences average its coefficients over liked train items.")
    return MetricReport(order, values, status, len(users), len(excluded), metric_users,
                        full_config, config_fingerprint(full_config), notes)


def genre_distribution(catalog: AttributeCatalog) -> list[tuple[str, int, float]]:
    counts = catalog.genre_counts()
    n = len(catalog.item_ids)
    return [(g, int(c), float(c) / n if n else 0.0) for g, c in zip(catalog.genre_names, counts)]


def genre_distribution_csv(catalog: AttributeCatalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["genre", "n_items", "fraction"])
    for g, c, f in genre_distribution(catalog):
        w.writerow([g, c, f"{f:.6f}"])
    return buf.getvalue()
