#!/usr/bin/env python3
"""Convert the WISDM v1.1 raw accelerometer log into train/test window CSVs.

Windows are 200 consecutive samples (10 s at 20 Hz) of one user and one activity,
non-overlapping. Users are split, so no subject appears in both sets.
"""
import argparse
import pathlib

import numpy as np
import pandas as pd

CLASSES = ["Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"]


def load(path):
    rows = []
    with open(path) as f:
        for line in f:
            for rec in line.strip().split(";"):
                parts = rec.strip().strip(",").split(",")
                if len(parts) != 6 or not parts[3]:
                    continue
                try:
                    rows.append((int(parts[0]), parts[1], int(parts[2]), float(parts[3]), float(parts[4]), float(parts[5])))
                except ValueError:
                    continue
    return pd.DataFrame(rows, columns=["user", "activity", "ts", "x", "y", "z"])


def windows(df, length):
    out, labels, users = [], [], []
    for (user, act), g in df.groupby(["user", "activity"], sort=True):
        if act not in CLASSES:
            continue
        xyz = g.sort_values("ts")[["x", "y", "z"]].to_numpy(dtype=np.float64)
        for s in range(0, len(xyz) - length + 1, length):
            out.append(xyz[s : s + length].T.reshape(-1))
            labels.append(CLASSES.index(act))
            users.append(user)
    return np.array(out), np.array(labels), np.array(users)


def save(path, x, y, length):
    with open(path, "w") as f:
        f.write(f"# subbyte-har-csv v1 channels=3 length={length} classes={len(CLASSES)}\n")
        for row, label in zip(x, y):
            f.write(",".join(f"{v:.6g}" for v in row) + f",{label}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("raw", help="WISDM_ar_v1.1_raw.txt")
    ap.add_argument("--out", default="data/wisdm")
    ap.add_argument("--length", type=int, default=200)
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    x, y, users = windows(load(args.raw), args.length)
    ids = np.unique(users)
    rng = np.random.default_rng(args.seed)
    test_users = set(rng.choice(ids, size=max(1, round(len(ids) * args.test_fraction)), replace=False))
    test = np.isin(users, list(test_users))
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save(out / "train.csv", x[~test], y[~test], args.length)
    save(out / "test.csv", x[test], y[test], args.length)
    print(f"train,{int((~test).sum())}\ntest,{int(test.sum())}\ntest_users,{len(test_users)}")


if __name__ == "__main__":
    main()
