"""Scalar monitors: mass, entropy, dissipation, fluxes, current, Nusselt.

Every integral here uses the same nodal-interpolant / lumped quadrature as
the assembly routines, because the discrete balance laws being monitored
hold for exactly those discrete functionals.  Velocities are piecewise
constant; reciprocal temperature factors are averaged from vertex values.

``state`` arguments are duck-typed: any object with ``phi`` (Field), ``eta``
(list of Fields, log densities), ``xi`` (Field, log temperature) and ``u``
(list of ElemFields) works.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, InvariantViolation
from .fem import elem_means, p1_gradients

_EDGE_TOL = 1e-12


def _mesh_of(state):
    return state.xi.mesh


def _densities(state):
    return [np.exp(eta.values) for eta in state.eta]


def total_mass(rho):
    """Lumped-mass integral of a nodal density Field."""
    return float(np.dot(rho.mesh.lumped_area, rho.values))


def entropy(state, species, k_B=1.0):
    """S = sum_i int k_B rho_i (log rho_i - C_i log T - C_i), nodal quadrature.

    As written this functional decreases toward equilibrium; its negative is
    the quantity that grows and plateaus in the bulk-entropy monitors.
    """
    mesh = _mesh_of(state)
    xi = state.xi.values
    total = 0.0
    for sp, eta in zip(species, state.eta):
        rho = np.exp(eta.values)
        integrand = k_B * rho * (eta.values - sp.C * xi - sp.C)
        total += float(np.dot(mesh.lumped_area, integrand))
    return total


def dissipation(state, species, phys):
    """Entropy production: int nu rho |u|^2 / T + k |grad T|^2 / T^2 >= 0."""
    mesh = _mesh_of(state)
    xi_elem = state.xi.values[mesh.elements]  # (m, 3)
    inv_T = np.mean(np.exp(-xi_elem), axis=1)
    inv_T2 = np.mean(np.exp(-2.0 * xi_elem), axis=1)

    grad_T = p1_gradients(mesh, np.exp(state.xi.values))
    total = float(
        np.sum(mesh.areas * phys.k * np.sum(grad_T * grad_T, axis=1) * inv_T2)
    )
    for sp, eta, u in zip(species, state.eta, state.u):
        rho_over_T = np.mean(
            np.exp(eta.values[mesh.elements]) * np.exp(-xi_elem), axis=1
        )
        speed2 = np.sum(u.values * u.values, axis=1)
        total += float(np.sum(mesh.areas * sp.nu * rho_over_T * speed2))
    return total


def _outward_normals(mesh):
    """Unit outward normal and length for each boundary edge."""
    be = mesh.boundary_edges
    i = mesh.edges[be, 0]
    j = mesh.edges[be, 1]
    t = mesh.vertices[j] - mesh.vertices[i]
    lengths = np.hypot(t[:, 0], t[:, 1])
    n = np.stack([t[:, 1], -t[:, 0]], axis=1) / lengths[:, None]
    tau = mesh.edge_elems[be, 0]
    centroid = mesh.vertices[mesh.elements[tau]].mean(axis=1)
    mid = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
    flip = np.sum(n * (mid - centroid), axis=1) < 0.0
    n[flip] *= -1.0
    return n, lengths, i, j, tau


def boundary_entropy_flux(state, phys):
    """int_bdry k (grad T . n) / T with edge-midpoint temperature.

    Negative when heat leaves the domain through the walls.
    """
    mesh = _mesh_of(state)
    T = np.exp(state.xi.values)
    grad_T = p1_gradients(mesh, T)
    n, lengths, i, j, tau = _outward_normals(mesh)
    T_mid = 0.5 * (T[i] + T[j])
    flux = phys.k * np.sum(grad_T[tau] * n, axis=1)
    return float(np.sum(flux * lengths / T_mid))


def energy_functional(state):
    """E = sum_i int rho_i (log rho_i - log T - 1); non-increasing when closed."""
    mesh = _mesh_of(state)
    xi = state.xi.values
    total = 0.0
    for eta in state.eta:
        rho = np.exp(eta.values)
        total += float(np.dot(mesh.lumped_area, rho * (eta.values - xi - 1.0)))
    return total


def _chord_lengths(mesh, crossed, x_cut):
    """Length of each crossed triangle's intersection with the line x = x_cut."""
    chords = np.empty(len(crossed))
    pts = mesh.vertices[mesh.elements[crossed]]  # (nc, 3, 2)
    for row, tri in enumerate(pts):
        ys = []
        for a in range(3):
            b = (a + 1) % 3
            xa, ya = tri[a]
            xb, yb = tri[b]
            if (xa - x_cut) * (xb - x_cut) < 0.0:
                t = (x_cut - xa) / (xb - xa)
                ys.append(ya + t * (yb - ya))
        chords[row] = max(ys) - min(ys) if len(ys) >= 2 else 0.0
    return chords


def current(state, x_cut, species, e=1.0):
    """Net charge flux through the vertical section x = x_cut.

    I = sum_i z_i e int_{x = x_cut} rho_i u_i . x_hat dy, summed over the
    elements the section strictly crosses.  A cut landing exactly on a mesh
    line is nudged right by a fixed fraction of the cell width so the set of
    crossed elements is well defined and deterministic.
    """
    mesh = _mesh_of(state)
    xs = mesh.vertices[:, 0]
    lo, hi = xs.min(), xs.max()
    if not lo < x_cut < hi:
        raise EvaluationError(f"cut position {x_cut!r} outside the domain interior")
    if np.any(np.abs(xs - x_cut) < _EDGE_TOL * max(1.0, hi - lo)):
        x_cut = x_cut + 1e-6 * mesh.hx

    ex = xs[mesh.elements]
    crossed = np.nonzero((ex.min(axis=1) < x_cut) & (ex.max(axis=1) > x_cut))[0]
    chords = _chord_lengths(mesh, crossed, x_cut)

    total = 0.0
    for sp, eta, u in zip(species, state.eta, state.u):
        rho_bar = elem_means(mesh, np.exp(eta.values))[crossed]
        total += sp.z * e * float(np.sum(rho_bar * u.values[crossed, 0] * chords))
    return total


def nusselt_number(h, dT_dy, T_w, T_m):
    """Wall heat-transfer ratio -h (dT/dy) / (T_w - T_m) for a bottom wall."""
    if abs(T_w - T_m) <= 1e-12:
        raise EvaluationError("degenerate Nusselt denominator: T_w equals T_m")
    return -h * dT_dy / (T_w - T_m)


def nusselt(state, wall, h_width):
    """Local Nusselt number along a horizontal wall.

    Returns (vertex indices, values) ordered by x.  The vertical derivative
    at each wall vertex is the area-weighted average over its adjacent
    elements; T_m is the trapezoid mean of T over the vertical cross-section
    through the vertex.  ``wall`` is "bottom" or "top"; for the top wall the
    derivative sign is flipped so positive Nu still means heat flowing out of
    a hot wall.
    """
    if wall not in ("bottom", "top"):
        raise EvaluationError(f"nusselt wall must be bottom or top, got {wall!r}")
    mesh = _mesh_of(state)
    T = np.exp(state.xi.values)
    ys = mesh.vertices[:, 1]
    y_wall = ys.min() if wall == "bottom" else ys.max()
    tol = _EDGE_TOL * max(1.0, ys.max() - ys.min())
    idx = np.nonzero(np.abs(ys - y_wall) < tol)[0]
    idx = idx[np.argsort(mesh.vertices[idx, 0], kind="stable")]

    grad_T = p1_gradients(mesh, T)
    num = np.zeros(mesh.n_vertices)
    den = np.zeros(mesh.n_vertices)
    np.add.at(num, mesh.elements.ravel(),
              np.repeat(grad_T[:, 1] * mesh.areas, 3))
    np.add.at(den, mesh.elements.ravel(), np.repeat(mesh.areas, 3))
    dT_dy = num / den
    sign = 1.0 if wall == "bottom" else -1.0

    xs = mesh.vertices[:, 0]
    values = np.empty(len(idx))
    for out, v in enumerate(idx):
        col = np.nonzero(np.abs(xs - xs[v]) < tol)[0]
        col = col[np.argsort(ys[col], kind="stable")]
        yc = ys[col]
        w = np.zeros(len(col))
        w[:-1] += 0.5 * np.diff(yc)
        w[1:] += 0.5 * np.diff(yc)
        T_m = float(np.dot(w, T[col]) / np.sum(w))
        values[out] = nusselt_number(h_width, sign * dT_dy[v], float(T[v]), T_m)
    return idx, values


def field_extrema(field):
    """(min, max, argmin vertex, argmax vertex), exact over nodal values."""
    v = field.values
    a_min = int(np.argmin(v))
    a_max = int(np.argmax(v))
    return float(v[a_min]), float(v[a_max]), a_min, a_max


def inverse_temperature_peak(state):
    """max nodal exp(-xi); logged as a crude regularity trend indicator."""
    return float(np.max(np.exp(-state.xi.values)))


@dataclass(frozen=True)
class DiagRecord:
    time: float
    mass: tuple
    entropy: float
    dissipation: float
    boundary_flux: float
    energy_functional: float
    current: float
    T_min: float
    T_max: float
    picard_iters: int
    dt: float


def csv_header(n_species):
    cols = ["time"]
    cols += [f"mass_{i}" for i in range(1, n_species + 1)]
    cols += [
        "entropy",
        "dissipation",
        "boundary_flux",
        "energy_functional",
        "current",
        "T_min",
        "T_max",
        "picard_iters",
        "dt",
    ]
    return cols


def record_row(rec):
    vals = [rec.time, *rec.mass, rec.entropy, rec.dissipation, rec.boundary_flux,
            rec.energy_functional, rec.current, rec.T_min, rec.T_max]
    return [repr(float(v)) for v in vals] + [str(rec.picard_iters), repr(float(rec.dt))]


def collect_record(state, cfg, picard_iters, dt_used):
    """Evaluate every monitored scalar for one accepted time step."""
    from .fem import Field

    mesh = _mesh_of(state)
    masses = tuple(
        total_mass(Field(mesh, np.exp(eta.values))) for eta in state.eta
    )
    T = np.exp(state.xi.values)
    rec = DiagRecord(
        time=state.time,
        mass=masses,
        entropy=entropy(state, cfg.species, cfg.physics.k_B),
        dissipation=dissipation(state, cfg.species, cfg.physics),
        boundary_flux=boundary_entropy_flux(state, cfg.physics),
        energy_functional=energy_functional(state),
        current=current(state, cfg.cut_position(), cfg.species, cfg.physics.e),
        T_min=float(T.min()),
        T_max=float(T.max()),
        picard_iters=picard_iters,
        dt=dt_used,
    )
    flat = [rec.time, *rec.mass, rec.entropy, rec.dissipation, rec.boundary_flux,
            rec.energy_functional, rec.current, rec.T_min, rec.T_max, rec.dt]
    if not np.all(np.isfinite(flat)):
        raise InvariantViolation(
            f"non-finite diagnostic value at t = {state.time:g}"
        )
    return rec
