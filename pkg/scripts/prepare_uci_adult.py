#!/usr/bin/env python3
"""Convert the raw census income files into CSVs matching uci_adult.schema.json.

Expects the two standard distribution files (train/test, comma separated, no
header; the test file has a banner line and trailing periods on the label).
Writes headered train.csv / test.csv with whitespace stripped.

Usage:
  python3 scripts/prepare_uci_adult.py adult.data adult.test --out data/uci_adult
"""

import argparse
import csv
import os

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def convert(src, dst, strip_label_dot=False):
    n = 0
    with open(src, newline="") as f_in, open(dst, "w", newline="") as f_out:
        writer = csv.writer(f_out)
        writer.writerow(COLUMNS)
        for row in csv.reader(f_in):
            if len(row) != len(COLUMNS):
                continue  # banner / blank lines
            row = [cell.strip() for cell in row]
            if strip_label_dot:
                row[-1] = row[-1].rstrip(".")
            writer.writerow(row)
            n += 1
    print(f"{dst}: {n} rows")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("train_file")
    ap.add_argument("test_file")
    ap.add_argument("--out", default="data/uci_adult")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    convert(args.train_file, os.path.join(args.out, "train.csv"))
    convert(args.test_file, os.path.join(args.out, "test.csv"),
            strip_label_dot=True)


if __name__ == "__main__":
    main()
