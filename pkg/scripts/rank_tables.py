#!/usr/bin/env python3
"""Rank externally supplied per-paradigm metrics tables without training.

Feed it a CSV with columns paradigm,class,accuracy,precision,recall,f1
(one row per paradigm/class) and it prints the ranking and verdict:

    python scripts/rank_tables.py metrics.csv
"""

import argparse
import sys

from fuselab import evaluation as ev


def run():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", help="metrics CSV to rank")
    args = ap.parse_args()
    report = ev.compare_paradigms(ev.parse_metrics_csv(args.csv))
    for rank, e in enumerate(report.ranking, 1):
        print(f"{rank}. {e.paradigm:14s} macro-F1 {e.macro_f1:.4f}  worst-class F1 {e.min_f1:.4f}")
    print(f"verdict: {report.best}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
