#!/usr/bin/env python3
"""Convert the raw statlog credit file into CSVs matching german_credit.schema.json.

The source file is space separated with no header (20 attributes plus the
risk outcome, 1000 rows).  There is no canonical train/test split, so rows
are shuffled with a fixed seed and split 80/20.

Usage:
  python3 scripts/prepare_german_credit.py german.data --out data/german_credit
"""

import argparse
import csv
import os
import random

COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose",
    "credit_amount", "savings_status", "employment", "installment_rate",
    "personal_status", "other_parties", "residence_since",
    "property_magnitude", "age", "other_payment_plans", "housing",
    "existing_credits", "job", "num_dependents", "own_telephone",
    "foreign_worker", "risk",
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source_file")
    ap.add_argument("--out", default="data/german_credit")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    rows = []
    with open(args.source_file) as f:
        for line in f:
            parts = line.split()
            if len(parts) != len(COLUMNS):
                continue
            rows.append(parts)

    random.Random(args.seed).shuffle(rows)
    n_train = int(len(rows) * args.train_fraction)
    os.makedirs(args.out, exist_ok=True)
    for name, chunk in (("train.csv", rows[:n_train]),
                        ("test.csv", rows[n_train:])):
        path = os.path.join(args.out, name)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(COLUMNS)
            writer.writerows(chunk)
        print(f"{path}: {len(chunk)} rows")


if __name__ == "__main__":
    main()
