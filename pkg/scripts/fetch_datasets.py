#!/usr/bin/env python3
"""Pointers for the real-world benchmark datasets.

The benchmarks in the experiment protocol also run on two public UCI
datasets.  They are not redistributed with this package; this script prints
where to get them and how to convert each into the CSV shape ``load_csv``
expects (numeric cells only, one point per row, optional label in the last
column).

  kddcup.data_10_percent (KDD Cup 1999)
    https://archive.ics.uci.edu/dataset/130/kdd+cup+1999+data
    Keep the 38 numeric columns, drop the categorical ones, subsample to
    10000 rows.  Load with: load_csv(path)

  spambase.data (Spambase)
    https://archive.ics.uci.edu/dataset/94/spambase
    4601 rows, 57 numeric features plus a trailing class label.
    Load with: load_csv(path, label_column=True)

Run any experiment config against the result:

  kmeans-outliers experiment --input data/kdd10k.csv --config cfg.txt --out runs.json
"""

import sys


def main() -> int:
    sys.stdout.write(__doc__)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
