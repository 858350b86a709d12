"""Regenerate the bundled synthetic reference price file.

The file is a stand-in for a daily index export (``Date,AdjClose``): 502
business days starting 2013-12-09, log-returns drawn from a Student-t with
4 degrees of freedom scaled to 0.8% daily volatility.  Replace it with a real
export to calibrate against market data.
"""
import csv
import sys

import numpy as np

OUT = sys.argv[1] if len(sys.argv) > 1 else "src/abmsurrogate/data/reference_prices.csv"

rng = np.random.default_rng(20131209)
n = 502
df = 4
shocks = rng.standard_t(df, size=n - 1) * 0.008 / np.sqrt(df / (df - 2))
prices = 1808.37 * np.exp(np.concatenate([[0.0], np.cumsum(shocks)]))
dates = np.busday_offset("2013-12-09", np.arange(n), roll="forward")
with open(OUT, "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["Date", "AdjClose"])
    for d, p in zip(dates, prices):
        w.writerow([str(d), f"{p:.6f}"])
