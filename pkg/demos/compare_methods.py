"""Compare the preference methods on a small slice of users.

Builds every method once and prints, for a few users, each method's top-3
general preference next to the odds proxy computed from training ratings.

    python demos/compare_methods.py
"""
from pathlib import Path

from attrexplain import dataset
from attrexplain.auxmodel import AuxSpec, train_aux
from attrexplain.baselines import build_method
from attrexplain.explainer import top_k
from attrexplain.metrics import odds_proxy, rbo
from attrexplain.mfrec import MFConfig, train_mf
from attrexplain.optimkit import TrainConfig

DATA = Path(__file__).resolve().parents[1] / "data" / "ml-100k"

ratings = dataset.parse_ratings(DATA / "u.data")
catalog = dataset.parse_items(DATA / "u.item")
split = dataset.stratified_split(ratings, 0.7, seed=0)
mf = train_mf(split.train, MFConfig(seed=0), item_ids=catalog.item_ids)
aux = {"linear": train_aux(split.train, mf, catalog, AuxSpec("linear", train=TrainConfig(max_epochs=30)))}

methods = {m: build_method(m, train=split.train, catalog=catalog, mf=mf, aux_models=aux)
           for m in ("ours-linear", "global-pop", "user-pop", "random", "lime-rs")}
name = lambda attrs: ", ".join(catalog.genre_names[a] for a in attrs)

for user in (1, 42, 300):
    proxy = odds_proxy(split.train, user, catalog).top_k(3)
    print(f"\nuser {user}: odds proxy [{name(proxy)}]")
    for mid, method in methods.items():
        top = top_k(method.general_preference(user), 3)
        print(f"  {mid:<12} [{name(top)}]  rbo {100 * rbo(top, proxy):5.1f}")
