"""Shared test setup: deterministic hypothesis profile and config helpers."""

import pathlib

from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

REPO_ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"

_MINI_BASE = {
    "mesh.Lx": "1.0",
    "mesh.Ly": "1.0",
    "mesh.nx": "4",
    "mesh.ny": "4",
    "physics.epsilon": "1.0",
    "physics.k": "1.0",
    "species.count": "1",
    "species1.z": "1",
    "species1.nu": "1.0",
    "species1.C": "1.0",
    "species1.rho0": "1.0",
    "boundary.phi_left_kind": "dirichlet",
    "boundary.phi_left_value": "0.0",
    "solver.t_end": "0.01",
}


def mini_config_text(**overrides):
    """Small single-species config; override keys with dots spelled as __.

    Passing None for a value drops the key entirely, which is how tests
    exercise the missing-key errors.
    """
    entries = dict(_MINI_BASE)
    for key, value in overrides.items():
        entries[key.replace("__", ".")] = None if value is None else str(value)
    return "\n".join(f"{k} = {v}" for k, v in entries.items() if v is not None)
