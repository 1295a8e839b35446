#!/usr/bin/env python3
"""Steady current against applied voltage, with the departure from Ohm's law.

Runs the channel config once per voltage, tabulates the steady current, and
plots the curve next to its best linear fit.  The residuals panel is the
interesting part: Joule heating bends the curve away from a straight line.
"""

import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from heatpnp.config import load_config, with_voltage
from heatpnp.solver import run_simulation

HERE = pathlib.Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "config", nargs="?",
        default=str(HERE.parent / "configs" / "channel_na_cl.cfg"),
    )
    ap.add_argument("--voltages", default="20,40,60,80,100")
    ap.add_argument("--table", default="iv.csv")
    ap.add_argument("--out", default="iv_curve.png")
    args = ap.parse_args()

    base = load_config(args.config)
    volts = [float(tok) for tok in args.voltages.split(",") if tok.strip()]
    rows = []
    for v in volts:
        res = run_simulation(with_voltage(base, v))
        rec = res.records[-1]
        rows.append({"voltage": v, "current": rec.current, "T_max": rec.T_max,
                     "t_stop": rec.time})
        print(f"V = {v:g}: I = {rec.current:.6g}  (T_max {rec.T_max:.4f}, "
              f"stopped at t = {rec.time:g})")

    table = pd.DataFrame(rows)
    table.to_csv(args.table, index=False)
    print(f"wrote {args.table}")

    coeff = np.polyfit(table.voltage, table.current, 1)
    fit = np.polyval(coeff, table.voltage)
    resid = (table.current - fit) / np.abs(table.current)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(table.voltage, table.current, "o-", label="simulated")
    ax1.plot(table.voltage, fit, "--", label=f"linear fit ({coeff[0]:.4g} V + b)")
    ax1.set_xlabel("applied voltage")
    ax1.set_ylabel("current")
    ax1.legend()
    ax2.axhline(0.0, color="gray", lw=0.8)
    ax2.plot(table.voltage, 100.0 * resid, "o-")
    ax2.set_xlabel("applied voltage")
    ax2.set_ylabel("deviation from fit [%]")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
