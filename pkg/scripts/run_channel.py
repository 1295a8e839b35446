#!/usr/bin/env python3
"""Run the heated-channel configuration and plot the steady fields.

Produces the diagnostics CSV (wherever the config points it) plus a
three-panel figure: centerline temperature, ion densities, and potential.
"""

import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from heatpnp.config import load_config
from heatpnp.solver import run_simulation

HERE = pathlib.Path(__file__).resolve().parent


def centerline(mesh, values, Ly):
    mask = np.abs(mesh.vertices[:, 1] - 0.5 * Ly) < 1e-9 * Ly
    idx = np.nonzero(mask)[0]
    idx = idx[np.argsort(mesh.vertices[idx, 0])]
    return mesh.vertices[idx, 0], values[idx]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "config", nargs="?",
        default=str(HERE.parent / "configs" / "channel_na_cl.cfg"),
    )
    ap.add_argument("--out", default="channel_profiles.png")
    args = ap.parse_args()

    cfg = load_config(args.config)
    result = run_simulation(cfg)
    state = result.state
    mesh = result.problem.mesh
    last = result.records[-1]
    print(f"finished at t = {state.time:g} after {len(result.records) - 1} steps")
    print(f"current = {last.current:.6g}   T range = [{last.T_min:.4f}, {last.T_max:.4f}]")

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    x, T = centerline(mesh, np.exp(state.xi.values), cfg.mesh.Ly)
    axes[0].plot(x, T)
    axes[0].set_xlabel("x")
    axes[0].set_ylabel("T")
    axes[0].set_title("centerline temperature")

    for i, eta in enumerate(state.eta, start=1):
        x, rho = centerline(mesh, np.exp(eta.values), cfg.mesh.Ly)
        axes[1].plot(x, rho, label=f"species {i}")
    axes[1].set_xlabel("x")
    axes[1].set_ylabel("density")
    axes[1].legend()
    axes[1].set_title("centerline densities")

    x, phi = centerline(mesh, state.phi.values, cfg.mesh.Ly)
    axes[2].plot(x, phi)
    axes[2].set_xlabel("x")
    axes[2].set_ylabel("phi")
    axes[2].set_title("centerline potential")

    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
