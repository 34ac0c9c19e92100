"""Rebuild MovieLens-100K ``u.data`` / ``u.item`` from the copy bundled in the
RecBole wheel (``recbole/dataset_example/ml-100k``).

Usage::

    pip download --no-deps recbole==1.2.1 -d /tmp/recbole
    python scripts/ml100k_from_recbole.py /tmp/recbole/recbole-1.2.1-py3-none-any.whl data/ml-100k

Only the fields the toolkit reads are faithful: ids, ratings, timestamps and
the 19 genre flags. Titles are copied; release dates and URLs are left blank.
"""
import sys
import zipfile
from pathlib import Path

GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
          "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
          "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]
PREFIX = "recbole/dataset_example/ml-100k/"


def main(wheel, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        inter = z.read(PREFIX + "ml-100k.inter").decode("utf-8").splitlines()[1:]
        items = z.read(PREFIX + "ml-100k.item").decode("utf-8").splitlines()[1:]

    with open(out / "u.data", "w", newline="\n") as f:
        for line in inter:
            u, i, r, t = line.split("\t")
            f.write(f"{int(u)}\t{int(i)}\t{int(float(r))}\t{int(float(t))}\n")

    rows = []
    for line in items:
        iid, title, year, classes = line.split("\t")
        present = set(classes.split())
        unknown = present - set(GENRES)
        if unknown:
            raise ValueError(f"item {iid}: unexpected genres {sorted(unknown)}")
        flags = ["1" if g in present else "0" for g in GENRES]
        label = f"{title} ({year})" if year else title
        rows.append((int(iid), "|".join([iid, label, "", "", ""] + flags)))
    with open(out / "u.item", "w", encoding="latin-1", errors="replace", newline="\n") as f:
        for _, row in sorted(rows):
            f.write(row + "\n")


if __name__ == "__main__":
    main(*sys.argv[1:3])
