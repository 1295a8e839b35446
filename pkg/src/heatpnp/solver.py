"""Coupled ion-transport / potential / temperature time stepper.

The model being advanced, in the positivity-preserving log variables
eta_i = log rho_i and xi = log T:

    species:     d(rho_i)/dt = div( (T grad rho_i + rho_i grad T
                                     + z_i e rho_i grad phi) / nu_i )
    potential:   -div(eps grad phi) = sum_i z_i e rho_i + rho_fixed
    temperature: (sum_i k_B C_i rho_i) dT/dt + transport
                   = div(k grad T) + sum_i nu_i rho_i |u_i|^2 + q_src

Each backward-Euler step runs Picard sweeps; one sweep solves, in order:
every species system with coefficients lagged to the previous iterate, the
Poisson system with the fresh densities, the element velocities, and the
temperature system in divergence form.  Convergence is declared when the
lumped-L2 changes of xi and every eta_i drop below picard_tol.

All convection-diffusion systems use the edge-fitted assembly, which makes
the species update conservative (flux columns sum to zero) and, with a
nonnegative lumped reaction, renders an M-matrix so the solved density and
temperature stay positive and the temperature obeys the discrete minimum
principle.  A negative lumped reaction aborts the sweep; the step is then
retried with half the time step, down to dt_min.

The time-derivative terms are discretized conservatively: the species right
side carries rho^{j-1}/dt and the temperature right side carries
(sum k_B C_i rho_i^{j-1}) T^{j-1}/dt, both from the previous accepted step,
never from the previous Picard iterate (which would cancel the time
derivative at the fixed point and degrade the step to quasi-steady).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .config import SIDES
from .eafe import assemble_eafe
from .errors import (
    ConfigurationError,
    CPositivityError,
    InvariantViolation,
    SolveFailure,
    TimeStepError,
)
from .fem import (
    ElemField,
    Field,
    apply_dirichlet,
    assemble_robin,
    assemble_stiffness,
    dirichlet_lift,
    elem_means,
    lumped_l2,
    p1_gradients,
)
from .io import CsvWriter, write_vtk_snapshot
from .linalg import factorize, is_m_matrix, solve
from .mesh import (
    BoundaryTag,
    PhiBC,
    boundary_edges_with_phi,
    build_rect_mesh,
    side_rules,
    tag_boundary,
)

log = logging.getLogger("heatpnp")

DMP_SLACK = 1e-10
MASS_DRIFT_TOL = 1e-10
ENERGY_SLACK = 1e-8


class _PicardStall(Exception):
    """Internal: Picard loop hit max_iter without meeting the tolerance."""


@dataclass
class SimState:
    """Value snapshot of the coupled fields at one time level."""

    time: float
    phi: Field
    eta: list
    xi: Field
    u: list
    picard_iters_last: int = 0

    def copy(self):
        mesh = self.xi.mesh
        return SimState(
            self.time,
            Field(mesh, self.phi.values.copy()),
            [Field(mesh, e.values.copy()) for e in self.eta],
            Field(mesh, self.xi.values.copy()),
            [ElemField(mesh, v.values.copy()) for v in self.u],
            self.picard_iters_last,
        )


def _side_vertices(mesh, Lx, Ly, side):
    tol = 1e-9 * max(Lx, Ly)
    x = mesh.vertices[:, 0]
    y = mesh.vertices[:, 1]
    mask = {
        "left": np.abs(x) <= tol,
        "right": np.abs(x - Lx) <= tol,
        "bottom": np.abs(y) <= tol,
        "top": np.abs(y - Ly) <= tol,
    }[side]
    return np.nonzero(mask)[0]


class Problem:
    """Mesh, boundary data, and cached matrices for one configuration.

    The Poisson matrix never changes during a run, so its Dirichlet
    elimination and LU factorization are built once here.  The species and
    temperature matrices depend on the evolving fields and are reassembled
    every sweep.

    Test hooks: ``freeze_phi`` / ``freeze_temperature`` skip the respective
    sub-solves (the fields keep their current values), and
    ``check_m_matrix`` records a sign-structure check of every assembled
    species/temperature system in ``m_matrix_checks`` / ``m_matrix_failures``
    instead of asserting.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        b = cfg.boundary
        mp = cfg.mesh
        side_tags = {
            side: BoundaryTag(
                phi=PhiBC[b.phi_kind(side).upper()],
                temp_dirichlet=side in b.T_dirichlet_sides,
            )
            for side in SIDES
        }
        mesh = build_rect_mesh(mp.Lx, mp.Ly, mp.nx, mp.ny)
        self.mesh = tag_boundary(mesh, side_rules(mp.Lx, mp.Ly, side_tags))

        vals = {}
        for side in SIDES:
            if b.phi_kind(side) != "dirichlet":
                continue
            value = b.phi_value(side)
            for vtx in _side_vertices(self.mesh, mp.Lx, mp.Ly, side):
                if vtx in vals and vals[vtx] != value:
                    raise ConfigurationError(
                        f"conflicting potential values at corner vertex "
                        f"{int(vtx)}: {vals[vtx]!r} vs {value!r}"
                    )
                vals[vtx] = value
        order = sorted(vals)
        self.phi_dir_idx = np.array(order, dtype=np.int64)
        self.phi_dir_vals = np.array([vals[i] for i in order], dtype=np.float64)

        tset = set()
        for side in b.T_dirichlet_sides:
            tset.update(_side_vertices(self.mesh, mp.Lx, mp.Ly, side).tolist())
        self.temp_dir_idx = np.array(sorted(tset), dtype=np.int64)
        self.temp_dir_vals = np.full(len(tset), b.T_dirichlet)

        if b.species_bc == "dirichlet":
            # density clamp on the two channel ends (the reservoir model)
            ends = set(_side_vertices(self.mesh, mp.Lx, mp.Ly, "left").tolist())
            ends.update(_side_vertices(self.mesh, mp.Lx, mp.Ly, "right").tolist())
            self.species_dir_idx = np.array(sorted(ends), dtype=np.int64)
        else:
            self.species_dir_idx = np.array([], dtype=np.int64)

        phys = cfg.physics
        A = assemble_stiffness(self.mesh, phys.epsilon)
        robin_mat, robin_load = assemble_robin(self.mesh, b.robin_kappa, b.robin_C)
        A = (A + robin_mat).tocsr()
        neumann_load = np.zeros(self.mesh.n_vertices)
        neu = boundary_edges_with_phi(self.mesh, PhiBC.NEUMANN)
        if neu.size and b.phi_neumann_value != 0.0:
            half = 0.5 * self.mesh.edge_lengths[neu] * b.phi_neumann_value
            np.add.at(neumann_load, self.mesh.edges[neu, 0], half)
            np.add.at(neumann_load, self.mesh.edges[neu, 1], half)
        self.phi_load_const = robin_load + neumann_load
        try:
            if self.phi_dir_idx.size:
                A_elim, lift, _, _ = dirichlet_lift(
                    A, self.phi_dir_idx, self.phi_dir_vals
                )
                self.phi_lift = lift
                self.phi_lu = factorize(A_elim)
            else:
                self.phi_lift = None
                self.phi_lu = factorize(A)
        except SolveFailure as exc:
            raise SolveFailure(f"poisson factorization failed: {exc}") from exc

        self.kBC = np.array([phys.k_B * sp.C for sp in cfg.species])

        self.freeze_phi = False
        self.freeze_temperature = False
        self.check_m_matrix = False
        self.m_matrix_checks = 0
        self.m_matrix_failures = []

    def _check_m(self, A, label):
        if not self.check_m_matrix:
            return
        self.m_matrix_checks += 1
        if not is_m_matrix(A, tol=1e-12):
            self.m_matrix_failures.append(label)


def build_problem(cfg):
    return Problem(cfg)


def initial_state(problem, rho=None):
    """Uniform initial densities and temperature; potential from a Poisson solve.

    ``rho`` may carry one positive nodal array per species to start from a
    non-uniform density profile instead of the configured constants.
    """
    cfg = problem.cfg
    mesh = problem.mesh
    n = mesh.n_vertices
    if rho is None:
        eta = [Field(mesh, np.full(n, np.log(sp.rho0))) for sp in cfg.species]
    else:
        if len(rho) != len(cfg.species):
            raise ValueError(
                f"expected {len(cfg.species)} initial density arrays, got {len(rho)}"
            )
        eta = []
        for i, arr in enumerate(rho):
            vals = np.asarray(arr, dtype=float)
            if vals.shape != (n,) or not np.all(vals > 0.0) or not np.all(
                np.isfinite(vals)
            ):
                raise ValueError(
                    f"initial density {i + 1} must be {n} positive finite values"
                )
            eta.append(Field(mesh, np.log(vals)))
    # the temperature Dirichlet value doubles as the uniform initial T
    xi = Field(mesh, np.full(n, np.log(cfg.boundary.T_dirichlet)))
    rho = [np.exp(e.values) for e in eta]
    phi = solve_poisson(problem, rho)
    T = np.exp(xi.values)
    u = [
        ElemField(mesh, compute_velocity(problem, i, rho[i], T, phi.values))
        for i in range(len(cfg.species))
    ]
    return SimState(0.0, phi, eta, xi, u, 0)


def solve_poisson(problem, rho_list):
    """Potential from the current densities, using the cached factorization."""
    mesh = problem.mesh
    phys = problem.cfg.physics
    charge = np.full(mesh.n_vertices, phys.rho_fixed)
    for sp, rho in zip(problem.cfg.species, rho_list):
        charge += sp.z * phys.e * rho
    b = mesh.lumped_area * charge + problem.phi_load_const
    if problem.phi_dir_idx.size:
        b = b - problem.phi_lift
        b[problem.phi_dir_idx] = problem.phi_dir_vals
    try:
        x = problem.phi_lu.solve(b)
    except SolveFailure as exc:
        raise SolveFailure(f"poisson solve failed: {exc}") from exc
    return Field(mesh, x)


def compute_velocity(problem, isp, rho, T, phi):
    """P0 transport velocity u = -(grad(rho T) + z e rho_bar grad phi)/(nu rho_bar)."""
    mesh = problem.mesh
    sp = problem.cfg.species[isp]
    e = problem.cfg.physics.e
    rho_bar = elem_means(mesh, rho)
    if np.any(rho_bar < 1e-300):
        raise InvariantViolation(
            f"species {isp + 1} element-mean density underflowed"
        )
    grad_rho_T = p1_gradients(mesh, rho * T)
    grad_phi = p1_gradients(mesh, phi)
    rb = rho_bar[:, None]
    return -(grad_rho_T + sp.z * e * rb * grad_phi) / (sp.nu * rb)


def species_system(problem, isp, rho_old, xi_prev, phi_prev, dt):
    """Assemble (A, b) for one species density solve.

    Diffusion T/nu, edge potential (xi_j - xi_i) + z e (phi_j - phi_i)/T_E,
    lumped mass 1/dt, right side rho_old/dt.  No-flux sides are natural; in
    density-clamp mode the channel-end rows are eliminated to rho0.
    """
    mesh = problem.mesh
    cfg = problem.cfg
    sp = cfg.species[isp]
    T_prev = np.exp(xi_prev)
    a_elem = elem_means(mesh, T_prev) / sp.nu
    drift = (sp.z * cfg.physics.e / sp.nu) * p1_gradients(mesh, phi_prev)
    A = assemble_eafe(
        mesh,
        a_elem,
        drift,
        reaction=1.0 / dt,
        aux=xi_prev,
        average=cfg.solver.eafe_average,
    )
    b = mesh.lumped_area * rho_old / dt
    if problem.species_dir_idx.size:
        clamp = np.full(problem.species_dir_idx.size, sp.rho0)
        A, b = apply_dirichlet(A, b, (problem.species_dir_idx, clamp))
    return A, b


def solve_species(problem, isp, rho_old, xi_prev, phi_prev, dt):
    """One species solve; returns the new log-density Field."""
    A, b = species_system(problem, isp, rho_old, xi_prev, phi_prev, dt)
    problem._check_m(A, f"species {isp + 1}")
    try:
        x, _ = solve(
            A, b,
            tol=problem.cfg.solver.linear_tol,
            method=problem.cfg.solver.linear_solver,
        )
    except SolveFailure as exc:
        raise SolveFailure(f"species {isp + 1} solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        mesh = problem.mesh
        v = int(np.argmin(x))
        raise InvariantViolation(
            f"species {isp + 1} density lost positivity at vertex {v} "
            f"(value {x[v]:g}; mesh h = {mesh.h:g}, "
            f"min edge weight = {mesh.edge_weights.min():g})"
        )
    return Field(problem.mesh, np.log(x))


def temperature_system(problem, rho_list, u_list, rho_old_list, T_old, dt):
    """Assemble (A, b) for the divergence-form temperature solve.

    The physical convection field is b_T = sum_i k_B C_i rho_i u_i; the
    edge-fitted assembly expects the operator -div(a grad T + beta T), so the
    drift passed in is -b_T.  Reaction: heat capacity / dt at the vertices
    plus the elementwise -sum_i grad(rho_i) . u_i; the combined lumped value
    must stay nonnegative (CPositivityError otherwise).  Right side: Joule
    heating, the volumetric source, and the previous-step heat content.
    """
    mesh = problem.mesh
    cfg = problem.cfg
    phys = cfg.physics

    sigma_new = np.zeros(mesh.n_vertices)
    sigma_old = np.zeros(mesh.n_vertices)
    b_drift = np.zeros((mesh.n_elements, 2))
    reac_elem = np.zeros(mesh.n_elements)
    for kbc, rho, rho_old, u in zip(problem.kBC, rho_list, rho_old_list, u_list):
        sigma_new += kbc * rho
        sigma_old += kbc * rho_old
        b_drift += kbc * elem_means(mesh, rho)[:, None] * u
        reac_elem -= np.sum(p1_gradients(mesh, rho) * u, axis=1)

    A = assemble_eafe(
        mesh,
        phys.k,
        drift=-b_drift,
        reaction=sigma_new / dt,
        reaction_elem=reac_elem,
        average=cfg.solver.eafe_average,
    )

    b = mesh.lumped_area * (phys.q_src + sigma_old * T_old / dt)
    third = mesh.areas / 3.0
    for sp, rho, u in zip(cfg.species, rho_list, u_list):
        speed2 = np.sum(u * u, axis=1)
        contrib = (sp.nu * third * speed2)[:, None] * rho[mesh.elements]
        np.add.at(b, mesh.elements.ravel(), contrib.ravel())

    if problem.temp_dir_idx.size:
        A, b = apply_dirichlet(A, b, (problem.temp_dir_idx, problem.temp_dir_vals))
    return A, b


def solve_temperature(problem, rho_list, u_list, rho_old_list, T_old, dt):
    """Temperature solve; returns the new log-temperature Field.

    Positivity and the boundary minimum principle are asserted on the solved
    values; violations indicate a broken matrix structure and are fatal.
    """
    A, b = temperature_system(problem, rho_list, u_list, rho_old_list, T_old, dt)
    problem._check_m(A, "temperature")
    try:
        x, _ = solve(
            A, b,
            tol=problem.cfg.solver.linear_tol,
            method=problem.cfg.solver.linear_solver,
        )
    except SolveFailure as exc:
        raise SolveFailure(f"temperature solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        v = int(np.argmin(x))
        raise InvariantViolation(
            f"temperature lost positivity at vertex {v} (value {x[v]:g})"
        )
    if problem.temp_dir_idx.size:
        floor = float(problem.temp_dir_vals.min())
        if x.min() < floor - DMP_SLACK:
            v = int(np.argmin(x))
            raise InvariantViolation(
                f"temperature minimum principle violated at vertex {v}: "
                f"T = {x[v]:.15g} under boundary floor {floor:g}"
            )
    return Field(problem.mesh, np.log(x))


def picard_step(problem, state, dt, rho_old_list, T_old):
    """One Picard sweep; returns (new state, converged, max field change)."""
    cfg = problem.cfg
    mesh = problem.mesh
    omega = cfg.solver.relaxation
    xi_prev = state.xi.values
    phi_prev = state.phi.values

    eta_new = []
    for i in range(len(cfg.species)):
        f = solve_species(problem, i, rho_old_list[i], xi_prev, phi_prev, dt)
        v = f.values if omega == 1.0 else omega * f.values + (1.0 - omega) * state.eta[i].values
        eta_new.append(v)
    rho_new = [np.exp(v) for v in eta_new]

    phi = state.phi if problem.freeze_phi else solve_poisson(problem, rho_new)

    T_prev = np.exp(xi_prev)
    u_new = [
        compute_velocity(problem, i, rho_new[i], T_prev, phi.values)
        for i in range(len(cfg.species))
    ]

    if problem.freeze_temperature:
        xi_acc = xi_prev
    else:
        f = solve_temperature(problem, rho_new, u_new, rho_old_list, T_old, dt)
        xi_acc = f.values if omega == 1.0 else omega * f.values + (1.0 - omega) * xi_prev

    change = lumped_l2(mesh, xi_acc - xi_prev)
    for v, old in zip(eta_new, state.eta):
        change = max(change, lumped_l2(mesh, v - old.values))
    converged = change <= cfg.solver.picard_tol

    new_state = SimState(
        state.time,
        phi,
        [Field(mesh, v) for v in eta_new],
        Field(mesh, xi_acc),
        [ElemField(mesh, u) for u in u_new],
        state.picard_iters_last,
    )
    return new_state, converged, change


def _dump(problem, state, reason, dt):
    rho = [np.exp(e.values) for e in state.eta]
    masses = [float(np.dot(problem.mesh.lumped_area, r)) for r in rho]
    T = np.exp(state.xi.values)
    return (
        f"time stepping aborted at t = {state.time:g} (dt floor {dt:g}): {reason}\n"
        f"  species masses: {masses}\n"
        f"  T range: [{T.min():g}, {T.max():g}]\n"
        f"  phi range: [{state.phi.values.min():g}, {state.phi.values.max():g}]"
    )


def time_step(problem, state, dt):
    """Advance one accepted backward-Euler step; returns (state, dt used).

    Retries with half the step from the saved state on a negative lumped
    reaction or a stalled Picard loop; below dt_min the run aborts with a
    diagnostic dump.
    """
    cfg = problem.cfg
    rho_old = [np.exp(e.values) for e in state.eta]
    T_old = np.exp(state.xi.values)
    cur = dt
    while True:
        try:
            it = state
            converged = False
            change = np.inf
            iters = 0
            for k in range(1, cfg.solver.picard_max_iter + 1):
                it, converged, change = picard_step(problem, it, cur, rho_old, T_old)
                iters = k
                if converged:
                    break
            if not converged:
                raise _PicardStall(
                    f"no convergence in {iters} sweeps (last change {change:g})"
                )
            return (
                SimState(state.time + cur, it.phi, it.eta, it.xi, it.u, iters),
                cur,
            )
        except (CPositivityError, _PicardStall) as exc:
            nxt = 0.5 * cur
            log.warning(
                "step of %g rejected at t = %g (%s); retrying with %g",
                cur, state.time, exc, nxt,
            )
            if nxt < cfg.solver.dt_min:
                raise TimeStepError(
                    _dump(problem, state, str(exc), nxt),
                    time=state.time,
                    dt=nxt,
                ) from exc
            cur = nxt


def _write_snapshot(problem, state, step, directory):
    mesh = problem.mesh
    points = {"phi": state.phi.values}
    for i, eta in enumerate(state.eta, start=1):
        points[f"rho_{i}"] = np.exp(eta.values)
    points["T"] = np.exp(state.xi.values)
    cells = {f"u_{i}": u.values for i, u in enumerate(state.u, start=1)}
    path = os.path.join(directory, f"step_{step:06d}.vtk")
    write_vtk_snapshot(path, mesh, points, cells)


@dataclass
class SimResult:
    problem: Problem
    records: list
    state: SimState
    states: list = None


def _no_applied_bias(problem):
    """True when the potential boundary data cannot drive a sustained current.

    Equal Dirichlet levels, a zero natural surface-charge density, and no
    Robin sides leave relaxation toward equilibrium as the only dynamics.
    An applied bias does work on the ions and the energy functional (which
    carries no electrostatic term) is then allowed to grow.
    """
    b = problem.cfg.boundary
    if b.phi_neumann_value != 0.0:
        return False
    if any(b.phi_kind(s) == "robin" for s in SIDES):
        return False
    levels = [b.phi_value(s) for s in SIDES if b.phi_kind(s) == "dirichlet"]
    return not levels or max(levels) == min(levels)


def run_simulation(cfg=None, problem=None, initial=None, keep_states=False,
                   max_steps=None):
    """Drive a configured problem from t = 0 to t_end.

    Emits one diagnostic record for the initial state and one per accepted
    step; CSV rows are flushed as they happen so partial output survives an
    abort.  For closed systems (no-flux species, zero heat source, no frozen
    fields) the per-step mass monitor is armed and raises InvariantViolation
    on drift; the energy-functional monitor additionally requires unbiased
    potential boundary data, since an applied voltage feeds work into the
    ions that the functional does not account for.

    ``problem`` may be passed to reuse caches or preset test hooks;
    ``initial`` overrides the default uniform initial state.  With
    steady_tol > 0 the run stops early once the per-unit-time change of the
    log fields falls below it.
    """
    if problem is None:
        problem = build_problem(cfg)
    cfg = problem.cfg
    state = initial_state(problem) if initial is None else initial
    mesh = problem.mesh
    sol = cfg.solver
    out = cfg.output

    closed = (
        cfg.boundary.species_bc == "noflux"
        and cfg.physics.q_src == 0.0
        and not problem.freeze_phi
        and not problem.freeze_temperature
    )
    monotone_energy = closed and _no_applied_bias(problem)

    records = [diagnostics.collect_record(state, cfg, 0, 0.0)]
    states = [state] if keep_states else None
    writer = None
    if out.csv_path:
        writer = CsvWriter(out.csv_path, diagnostics.csv_header(len(cfg.species)))
        writer.write(diagnostics.record_row(records[0]))
    if out.vtk_every_n_steps > 0:
        os.makedirs(out.snapshot_dir, exist_ok=True)
        _write_snapshot(problem, state, 0, out.snapshot_dir)

    mass0 = records[0].mass
    energy_prev = records[0].energy_functional
    dt = sol.dt
    t_end = sol.t_end
    horizon = t_end - 1e-12 * max(abs(t_end), 1.0)
    step = 0
    try:
        while state.time < horizon and (max_steps is None or step < max_steps):
            want = min(dt, t_end - state.time)
            prev = state
            state, used = time_step(problem, state, want)
            if used < want:
                dt = used  # keep the reduced step; no automatic regrowth
            step += 1
            rec = diagnostics.collect_record(state, cfg, state.picard_iters_last, used)
            if closed:
                for i, (m_now, m_ref) in enumerate(zip(rec.mass, mass0), start=1):
                    if abs(m_now - m_ref) > MASS_DRIFT_TOL * abs(m_ref):
                        raise InvariantViolation(
                            f"species {i} mass drifted to {m_now!r} from "
                            f"{m_ref!r} at t = {state.time:g}"
                        )
                if (monotone_energy
                        and rec.energy_functional > energy_prev + ENERGY_SLACK):
                    raise InvariantViolation(
                        f"energy functional rose from {energy_prev!r} to "
                        f"{rec.energy_functional!r} at t = {state.time:g}"
                    )
            energy_prev = rec.energy_functional
            records.append(rec)
            if writer is not None:
                writer.write(diagnostics.record_row(rec))
            if keep_states:
                states.append(state)
            if out.vtk_every_n_steps > 0 and step % out.vtk_every_n_steps == 0:
                _write_snapshot(problem, state, step, out.snapshot_dir)
            log.debug(
                "t = %g dt = %g picard = %d inv-T peak = %g",
                state.time, used, state.picard_iters_last,
                diagnostics.inverse_temperature_peak(state),
            )
            if sol.steady_tol > 0.0:
                rate = lumped_l2(mesh, state.xi.values - prev.xi.values)
                for e_now, e_prev in zip(state.eta, prev.eta):
                    rate = max(rate, lumped_l2(mesh, e_now.values - e_prev.values))
                rate /= used
                if rate <= sol.steady_tol:
                    log.info("steady state at t = %g (rate %g)", state.time, rate)
                    break
    finally:
        if writer is not None:
            writer.close()
    return SimResult(problem, records, state, states)
