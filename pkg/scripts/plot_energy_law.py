#!/usr/bin/env python3
"""Entropy bookkeeping for the closed channel and the driven channel.

Left: the grounded no-flux relaxation, where the discrete energy functional
must fall every step (plotted with the entropy and dissipation history).
Right: the biased channel, where entropy production and the boundary entropy
flux converge to each other as the run approaches steady state.
"""

import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from heatpnp.config import load_config
from heatpnp.solver import build_problem, initial_state, run_simulation

HERE = pathlib.Path(__file__).resolve().parent
CONFIGS = HERE.parent / "configs"


def closed_relaxation():
    cfg = load_config(CONFIGS / "channel_closed.cfg")
    problem = build_problem(cfg)
    x = problem.mesh.vertices[:, 0]
    bump = 0.2 * np.cos(np.pi * x / cfg.mesh.Lx)
    start = initial_state(
        problem, rho=[0.06 * (1.0 + bump), 0.06 * (1.0 - bump)]
    )
    return run_simulation(problem=problem, initial=start)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="energy_law.png")
    args = ap.parse_args()

    closed = closed_relaxation()
    driven = run_simulation(load_config(CONFIGS / "channel_na_cl.cfg"))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))

    t = [r.time for r in closed.records]
    e = [r.energy_functional for r in closed.records]
    s = [-r.entropy for r in closed.records]
    ax1.plot(t, e, label="energy functional")
    ax1.plot(t, s, label="bulk entropy")
    ax1.set_xlabel("t")
    ax1.legend()
    ax1.set_title("closed relaxation (decay is enforced)")

    t = np.array([r.time for r in driven.records])
    diss = np.array([r.dissipation for r in driven.records])
    flux = np.array([-r.boundary_flux for r in driven.records])
    ax2.semilogy(t[1:], diss[1:], label="entropy production")
    ax2.semilogy(t[1:], np.abs(flux[1:]), label="|boundary entropy flux|")
    ax2.semilogy(t[1:], np.abs(diss - flux)[1:], label="|difference|", ls="--")
    ax2.set_xlabel("t")
    ax2.legend()
    ax2.set_title("driven channel balance")

    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    print(f"closed run: energy {e[0]:.6f} -> {e[-1]:.6f} over {len(e) - 1} steps")


if __name__ == "__main__":
    main()
