"""Acceptance criteria, each run at its stated tolerance.

The directional criteria (1-6, 13) need the MovieLens-100K files and run the
full pipeline for seeds 0, 1 and 2, which takes a few minutes; they carry the
``slow`` marker (deselect with ``-m "not slow"``).
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from attrexplain.auxmodel import AuxSpec, train_aux
from attrexplain.baselines import AmcfPH, GlobalPopularity, OursMethod, UserPopularity
from attrexplain.cli import ExperimentConfig, Pipeline, cmd_reproduce
from attrexplain.explainer import top_k
from attrexplain.metrics import METRICS, MetricConfig, build_report, cond_prob_proxy, odds_proxy, rbo
from attrexplain.mfrec import MFConfig, train_mf
from attrexplain.optimkit import FeedForwardNet, TrainConfig, backward, numerical_gradient, relative_error

from conftest import ACCEPTANCE, MINI_TASTE, ML100K, have_ml100k, needs_ml100k

SEEDS = (0, 1, 2)
OURS = ("ours-linear", "ours-mlp1", "ours-mlp2")
BASELINES = ("lime-rs", "amcf-ph", "global-pop", "user-pop", "random")
TIME_BUDGET = 600.0


def record(n, title, passed, detail=""):
    if n in ACCEPTANCE:  # parametrized criteria report once, all cases combined
        _, prev_ok, prev_detail = ACCEPTANCE[n]
        ACCEPTANCE[n] = (title, prev_ok and bool(passed), f"{prev_detail}; {detail}")
    else:
        ACCEPTANCE[n] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {n}. {title}: {detail}")
    assert passed, f"criterion {n} failed: {detail}"


def ml_config(out, seed):
    cfg = ExperimentConfig.load(None, env={})
    return replace(cfg, ratings=str(ML100K / "u.data"), items=str(ML100K / "u.item"),
                   out=str(out), seed=seed)


@pytest.fixture(scope="session")
def ml_runs(tmp_path_factory):
    """seed -> (config, report, wall seconds) for a full default reproduction."""
    if not have_ml100k():
        pytest.skip("MovieLens-100K files not found")
    runs = {}
    for seed in SEEDS:
        cfg = ml_config(tmp_path_factory.mktemp(f"seed{seed}"), seed)
        start = time.perf_counter()
        report = cmd_reproduce(cfg)
        runs[seed] = (cfg, report, time.perf_counter() - start)
    return runs


def majority(per_seed):
    """Holds on at least 2 of the 3 seeds."""
    return sum(per_seed.values()) >= 2


def seed_summary(per_seed):
    return ", ".join(f"seed {s} {'ok' if v else 'no'}" for s, v in per_seed.items())


def val(report, method, metric):
    return report.values[method][metric]


# --- directional reproduction on MovieLens-100K ---------------------------------------

@pytest.mark.slow
@needs_ml100k
def test_criterion_01_global_pop_testset_coverage(ml_runs):
    per_seed, shown = {}, []
    for seed, (_, rep, _) in ml_runs.items():
        tc = {m: val(rep, m, "Testset Coverage") for m in BASELINES + OURS}
        best = max(tc, key=tc.get)
        second_baseline = sorted(BASELINES, key=tc.get, reverse=True)[1]
        per_seed[seed] = best == "global-pop" and tc["global-pop"] >= 75 and second_baseline == "user-pop"
        shown.append(f"{tc['global-pop']:.1f}")
    record(1, "global popularity has the highest testset coverage (>= 75), user popularity second",
           majority(per_seed), f"global {'/'.join(shown)}; {seed_summary(per_seed)}")


@pytest.mark.slow
@needs_ml100k
def test_criterion_02_testset_coverage_ordering(ml_runs):
    per_seed = {}
    for seed, (_, rep, _) in ml_runs.items():
        tc = lambda m: val(rep, m, "Testset Coverage")
        ours = [tc(m) for m in OURS]
        per_seed[seed] = (tc("global-pop") > tc("user-pop") > max(ours)
                          and min(ours) > tc("random") > tc("lime-rs"))
    rep0 = ml_runs[0][1]
    detail = " > ".join(f"{m} {val(rep0, m, 'Testset Coverage'):.1f}"
                        for m in ("global-pop", "user-pop", *OURS, "random", "lime-rs"))
    record(2, "testset coverage: global-pop > user-pop > ours > random > LIME-RS",
           majority(per_seed), f"seed 0: {detail}; {seed_summary(per_seed)}")


ODDS = ("Odds Generalpref Coverage", "Odds Generalpref Ranking",
        "Odds Specificpref Coverage", "Odds Specificpref Ranking")


@pytest.mark.slow
@needs_ml100k
def test_criterion_03_ours_wins_odds_metrics(ml_runs):
    per_seed, lines = {}, []
    for seed, (_, rep, _) in ml_runs.items():
        ok = True
        for metric in ODDS:
            ours = max(val(rep, m, metric) for m in OURS)
            rival = max(val(rep, m, metric) for m in ("global-pop", "user-pop", "random"))
            margin = 5.0 if "Coverage" in metric else 0.0
            ok &= ours - rival > margin
            if seed == 0:
                lines.append(f"{metric.replace('Odds ', '')} {ours:.1f} vs {rival:.1f}")
        per_seed[seed] = ok
    record(3, "ours beats popularity and random on the four odds metrics (coverage margin > 5)",
           majority(per_seed), f"seed 0 best-ours vs best-rival: {'; '.join(lines)}; {seed_summary(per_seed)}")


@pytest.mark.slow
@needs_ml100k
def test_criterion_04_linear_condprob_general_coverage(ml_runs):
    per_seed = {}
    for seed, (_, rep, _) in ml_runs.items():
        ours = val(rep, "ours-linear", "CondProb Generalpref Coverage")
        rival = max(val(rep, m, "CondProb Generalpref Coverage") for m in ("global-pop", "user-pop", "random"))
        per_seed[seed] = ours - rival > 5.0
    rep0 = ml_runs[0][1]
    detail = ", ".join(f"{m} {val(rep0, m, 'CondProb Generalpref Coverage'):.1f}"
                       for m in ("ours-linear", "random", "global-pop", "user-pop"))
    record(4, "ours-linear condprob general coverage exceeds baselines by > 5",
           majority(per_seed), f"seed 0: {detail}; {seed_summary(per_seed)}")


@pytest.mark.slow
@needs_ml100k
def test_criterion_05_random_condprob_general_coverage(ml_runs):
    values = {s: val(rep, "random", "CondProb Generalpref Coverage") for s, (_, rep, _) in ml_runs.items()}
    per_seed = {s: abs(v - 44.0) <= 8.0 for s, v in values.items()}
    record(5, "random condprob general coverage within 44 +/- 8", majority(per_seed),
           ", ".join(f"seed {s} {v:.1f}" for s, v in values.items()))


@pytest.mark.slow
@needs_ml100k
def test_criterion_06_reproduce_wall_time(ml_runs):
    times = {s: t for s, (_, _, t) in ml_runs.items()}
    record(6, "end-to-end reproduce under 10 minutes", all(t < TIME_BUDGET for t in times.values()),
           ", ".join(f"seed {s} {t:.0f} s" for s, t in times.items()))


# --- property suites ------------------------------------------------------------------

def test_criterion_07_gradient_checks():
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(100):
        in_dim = int(rng.integers(1, 9))
        hidden = tuple(int(h) for h in rng.integers(1, 9, size=rng.integers(0, 4)))
        net = FeedForwardNet.create(in_dim, hidden, seed=trial)
        n = int(rng.integers(1, 6))
        x, t = rng.normal(size=(n, in_dim)), rng.normal(size=n)
        worst = max(worst, relative_error(backward(net, x, t), numerical_gradient(net, x, t)))
    record(7, "analytic vs finite-difference gradients over 100 networks", worst < 1e-4,
           f"max relative error {worst:.2e}")


@pytest.fixture(scope="module")
def ml_seed0(tmp_path_factory):
    """Split and MF model for seed 0, built through the pipeline."""
    if not have_ml100k():
        pytest.skip("MovieLens-100K files not found")
    p = Pipeline(ml_config(tmp_path_factory.mktemp("props"), 0))
    p.split()
    p.train_mf()
    return p, p.load_split(), p.load_mf()


@needs_ml100k
def test_criterion_08_linear_exactness(ml_seed0):
    p, split, mf = ml_seed0
    aux = train_aux(split.train, mf, p.catalog, p.config.aux_spec("linear"))
    coef = aux.linear_coefficients()
    method = OursMethod(aux, split.train, p.catalog)
    rng = np.random.default_rng(8)
    items = [i for i in p.catalog.item_ids if p.catalog.vector(i).any()]
    users = split.train.user_ids
    worst, order_ok = 0.0, True
    for _ in range(1000):
        user, item = users[rng.integers(len(users))], items[rng.integers(len(items))]
        ranking = method.specific_preference(user, item)
        present = p.catalog.attributes_of(item)
        worst = max(worst, max(abs(s - coef[a]) for a, s in ranking.entries))
        order_ok &= ranking.attributes == sorted(present, key=lambda a: (-coef[a], a))
    record(8, "linear aux deltas equal coefficients on 1,000 pairs", worst < 1e-9 and order_ok,
           f"max |delta - coef| {worst:.1e}, rankings follow coefficients: {order_ok}")


def rbo_direct(a, b, p):
    depth = max(len(a), len(b))
    return (1 - p) * sum(p ** (d - 1) * len(set(a[:d]) & set(b[:d])) / d for d in range(1, depth + 1))


def test_criterion_09_rbo_oracle():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(10_000):
        a = list(rng.permutation(12)[:rng.integers(0, 8)])
        b = list(rng.permutation(12)[:rng.integers(0, 8)])
        p = float(rng.uniform(0.05, 0.95))
        worst = max(worst, abs(rbo(a, b, p) - rbo_direct(a, b, p)))
    closed = all(abs(rbo(list(range(n)), list(range(n)), p) - (1 - p ** n)) < 1e-12
                 for n in range(1, 10) for p in (0.5, 0.9))
    disjoint = rbo([1, 2, 3], [4, 5, 6]) == 0.0
    record(9, "RBO matches direct summation on 10,000 pairs", worst < 1e-12 and closed and disjoint,
           f"max error {worst:.1e}; rbo(x, x) = 1 - p^|x|: {closed}; disjoint = 0: {disjoint}")


def scan_proxies(train, user, catalog, alpha):
    n = catalog.n_attributes
    liked, disliked, rated = [0] * n, [0] * n, [0] * n
    for rec in train:
        if rec.user_id != user:
            continue
        for a in catalog.attributes_of(rec.item_id):
            rated[a] += 1
            liked[a] += rec.rating >= 4
            disliked[a] += rec.rating <= 2
    cp = [liked[a] / rated[a] if rated[a] else float("nan") for a in range(n)]
    odds = []
    for a in range(n):
        if liked[a] + disliked[a] == 0:
            odds.append(float("nan"))
        elif disliked[a] + alpha == 0:
            odds.append(float("inf"))
        else:
            odds.append((liked[a] + alpha) / (disliked[a] + alpha))
    return np.array(cp), np.array(odds)


@needs_ml100k
@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_criterion_10_proxy_oracle(ml_seed0, alpha):
    p, split, _ = ml_seed0
    train, catalog = split.train, p.catalog
    mismatched = []
    for user in train.user_ids:
        cp, odds = scan_proxies(train, user, catalog, alpha)
        if not (np.array_equal(cp, cond_prob_proxy(train, user, catalog).weights, equal_nan=True)
                and np.array_equal(odds, odds_proxy(train, user, catalog, alpha).weights, equal_nan=True)):
            mismatched.append(user)
    n = len(train.user_ids)
    record(10, "proxy weights equal an exhaustive scan for all users", n == 943 and not mismatched,
           f"{n} users, odds alpha {alpha:g}, mismatches {len(mismatched)}")


# Hand-computed cells (x100) for the miniature world; condprob and odds cells agree
# because both proxies give u1 [A,B,C], u2 [C,A,B], u3 [B,A,C].
MINI_EXPECTED = {
    "global-pop": (100.0, 250 / 3, 100.0, 56.8 / 3, 100.0, 50.2 / 3),
    "user-pop": (100.0, 100 / 3, 100.0, 19.6, 100.0, 18.4),
    "ours-mlp1": (100.0, 100 / 3, 100.0, 19.6, 100.0, 18.4),
}


def expand(cells):
    test, recs, gcov, grank, scov, srank = cells
    return dict(zip(METRICS, (test, recs, gcov, grank, scov, srank, gcov, grank, scov, srank)))


def test_criterion_11_miniature_end_to_end(mini_split, mini_catalog):
    train = mini_split.train
    mf = train_mf(train, MFConfig(dim=4, epochs=200, lr=0.05, reg=0.0, seed=0), item_ids=range(1, 7))
    spec = AuxSpec("mlp1", 16, train=TrainConfig(max_epochs=3000, batch_size=12, lr=0.01,
                                                 tolerance=1e-9, patience=50, seed=0))
    aux = train_aux(train, mf, mini_catalog, spec)
    ours = OursMethod(aux, train, mini_catalog, method_id="ours-mlp1")
    rank1 = {u: top_k(ours.general_preference(u), 1)[0] for u in MINI_TASTE}
    taste_ok = all(mini_catalog.genre_names[a] == MINI_TASTE[u] for u, a in rank1.items())
    methods = {"global-pop": GlobalPopularity(train, mini_catalog),
               "user-pop": UserPopularity(train, mini_catalog), "ours-mlp1": ours}
    report = build_report(methods, mini_split, mf, mini_catalog, MetricConfig(k=3, n_recs=20))
    wrong = [(m, metric, report.values[m][metric], want)
             for m, cells in MINI_EXPECTED.items() for metric, want in expand(cells).items()
             if abs(report.values[m][metric] - want) > 1e-9]
    record(11, "miniature dataset: rank-1 genre recovered and all metric cells match",
           taste_ok and not wrong,
           f"rank-1 {'/'.join(mini_catalog.genre_names[rank1[u]] for u in MINI_TASTE)}; "
           f"{3 * len(METRICS) - len(wrong)}/{3 * len(METRICS)} cells match")


@needs_ml100k
def test_criterion_12_mf_hash_unchanged(ml_seed0):
    p, split, mf = ml_seed0
    before = mf.parameter_hash()
    aux = train_aux(split.train, mf, p.catalog,
                    AuxSpec("mlp1", 64, train=TrainConfig(max_epochs=2, seed=0)))
    after_aux = mf.parameter_hash()
    amcf = AmcfPH(mf, split.train, p.catalog, p.config.amcf)
    after_amcf = mf.parameter_hash()
    ok = before == after_aux == after_amcf == aux.mf_hash == amcf.mf_hash
    record(12, "MF parameter hash unchanged by aux and AMCF-PH training", ok, f"hash {before[:12]}")


@pytest.mark.slow
@needs_ml100k
def test_criterion_13_reproduce_is_deterministic(ml_runs, tmp_path):
    cfg0 = ml_runs[0][0]
    cmd_reproduce(replace(cfg0, out=str(tmp_path)))
    same = {name: (cfg0.out_dir / name).read_bytes() == (tmp_path / name).read_bytes()
            for name in ("report.json", "report.md", "report.csv")}
    record(13, "two reproduce runs give byte-identical reports", all(same.values()),
           ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in same.items()))
