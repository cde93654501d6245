#!/usr/bin/env python3
"""Convert a law-school bar passage study CSV into files matching lsac.schema.json.

The study data circulates in several column layouts.  This script expects a
headered CSV and looks for the columns below (case insensitive), renaming
them to what the schema uses.  Gender may arrive as male/female strings, as
a male 0/1 indicator ("male" column), or as 1/2 codes; all are normalized
to "male"/"female".  Rows are shuffled with a fixed seed and split 80/20.

Required source columns (aliases in parentheses):
  lsat, ugpa, fam_inc (faminc), race (race1), fulltime (ft), tier,
  pass_bar (bar_passed), fygpa (zfygpa accepted as a fallback, see --fygpa-col),
  gender (sex, male)

Usage:
  python3 scripts/prepare_lsac.py lsac.csv --out data/lsac
"""

import argparse
import csv
import os
import random

ALIASES = {
    "lsat": ["lsat"],
    "ugpa": ["ugpa"],
    "fam_inc": ["fam_inc", "faminc"],
    "race": ["race", "race1"],
    "fulltime": ["fulltime", "ft"],
    "tier": ["tier"],
    "pass_bar": ["pass_bar", "bar_passed"],
    "gender": ["gender", "sex", "male"],
}

MALE_TOKENS = {"male", "m", "1", "1.0", "true"}
FEMALE_TOKENS = {"female", "f", "0", "0.0", "2", "2.0", "false"}


def find_column(header_map, want, explicit=None):
    candidates = [explicit] if explicit else ALIASES[want]
    for cand in candidates:
        if cand and cand.lower() in header_map:
            return header_map[cand.lower()]
    raise SystemExit(f"source file has no column for {want!r} "
                     f"(tried {candidates})")


def normalize_gender(token, source_was_male_flag):
    t = token.strip().lower()
    if source_was_male_flag:
        # "male" indicator column: 1 means male, 0 means female
        if t in {"1", "1.0", "true"}:
            return "male"
        if t in {"0", "0.0", "false"}:
            return "female"
        return ""
    if t in MALE_TOKENS:
        return "male"
    if t in FEMALE_TOKENS:
        return "female"
    return ""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source_file")
    ap.add_argument("--out", default="data/lsac")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-fraction", type=float, default=0.8)
    ap.add_argument("--fygpa-col", default=None,
                    help="column holding first-year GPA (default: fygpa, "
                         "falling back to zfygpa)")
    args = ap.parse_args()

    with open(args.source_file, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        header_map = {h.strip().lower(): i for i, h in enumerate(header)}
        idx = {want: find_column(header_map, want) for want in ALIASES}
        fygpa_idx = None
        for cand in ([args.fygpa_col] if args.fygpa_col else ["fygpa", "zfygpa"]):
            if cand and cand.lower() in header_map:
                fygpa_idx = header_map[cand.lower()]
                break
        if fygpa_idx is None:
            raise SystemExit("source file has no fygpa/zfygpa column")
        gender_is_flag = header[idx["gender"]].strip().lower() == "male"

        out_columns = ["lsat", "ugpa", "fam_inc", "race", "fulltime", "tier",
                       "pass_bar", "fygpa", "gender"]
        rows = []
        for row in reader:
            if not row or len(row) <= max(max(idx.values()), fygpa_idx):
                continue
            rows.append([
                row[idx["lsat"]].strip(), row[idx["ugpa"]].strip(),
                row[idx["fam_inc"]].strip(), row[idx["race"]].strip(),
                row[idx["fulltime"]].strip(), row[idx["tier"]].strip(),
                row[idx["pass_bar"]].strip(), row[fygpa_idx].strip(),
                normalize_gender(row[idx["gender"]], gender_is_flag),
            ])

    random.Random(args.seed).shuffle(rows)
    n_train = int(len(rows) * args.train_fraction)
    os.makedirs(args.out, exist_ok=True)
    for name, chunk in (("train.csv", rows[:n_train]),
                        ("test.csv", rows[n_train:])):
        path = os.path.join(args.out, name)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(out_columns)
            writer.writerows(chunk)
        print(f"{path}: {len(chunk)} rows")


if __name__ == "__main__":
    main()
