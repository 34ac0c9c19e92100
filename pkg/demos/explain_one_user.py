"""Walk through one user's explanations on MovieLens-100K.

Trains the recommender and a one-hidden-layer auxiliary model, prints the
user's top recommendations, and explains each with the attribute whose
removal costs the most predicted rating.

    python demos/explain_one_user.py [user_id]
"""
import sys
from pathlib import Path

from attrexplain import dataset, explainer
from attrexplain.auxmodel import AuxSpec, train_aux
from attrexplain.mfrec import MFConfig, top_k_recommend, train_mf
from attrexplain.optimkit import TrainConfig

DATA = Path(__file__).resolve().parents[1] / "data" / "ml-100k"
user = int(sys.argv[1]) if len(sys.argv) > 1 else 196

ratings = dataset.parse_ratings(DATA / "u.data")
catalog = dataset.parse_items(DATA / "u.item")
split = dataset.stratified_split(ratings, 0.7, seed=0)
print(f"{len(split.train)} train / {len(split.test)} test ratings")

mf = train_mf(split.train, MFConfig(seed=0), item_ids=catalog.item_ids)
aux = train_aux(split.train, mf, catalog, AuxSpec("mlp1", train=TrainConfig(max_epochs=30)))

# what does this user care about overall?
general = explainer.general_preference(aux, user, split.train.liked_items(user), catalog)
print(f"\nuser {user} general preference:")
for a, score in general.entries[:5]:
    print(f"  {catalog.genre_names[a]:<12} {score:+.3f}")

print("\ntop recommendations:")
rec = top_k_recommend(mf, user, 5)
for item, score in zip(rec.items, rec.scores):
    if not catalog.vector(item).any():
        continue
    ranking = explainer.specific_preference(aux, user, item, catalog)
    genres = ", ".join(f"{catalog.genre_names[a]} {s:+.2f}" for a, s in ranking.entries)
    print(f"  item {item:>4} (score {score:.2f}): {genres}")
    print(f"    {explainer.sentence(ranking, catalog)}")
