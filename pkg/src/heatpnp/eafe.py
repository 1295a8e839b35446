"""Edge-averaged finite element (exponentially fitted) assembly.

Discretizes divergence-form convection-diffusion operators

    L u = -div(a grad u + beta u) + c u

on P1 triangulations by replacing each Laplacian edge weight with Bernoulli
function conductances.  Writing dpsi_E for the potential increment along edge
E = (i, j) (oriented low index -> high index), the edge contributes

    +w_E a_E B(+dpsi)   to (i, i),      -w_E a_E B(-dpsi)   to (i, j),
    -w_E a_E B(+dpsi)   to (j, i),      +w_E a_E B(-dpsi)   to (j, j),

with B(t) = t / (exp(t) - 1).  With beta = 0 this reduces exactly to the
weighted stiffness matrix, and on meshes without obtuse angles the result is
an M-matrix whenever the lumped reaction is nonnegative.  Edge fluxes are
antisymmetric by construction, and the columns of the flux part sum to zero,
which is what makes the species time stepping conservative.

Edge data (a_E, beta_E) are averages of the adjacent-element values;
arithmetic by default, harmonic optionally.  The optional ``aux`` nodal field
adds its edge difference to dpsi_E, which lets the species equation use the
exact nodal jump of log T for its log-diffusion part instead of a gradient
reconstruction.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, CPositivityError
from .fem import elem_values, nodal_values
from .linalg import csr_from_triplets

# Below this threshold the rational form of B loses digits to cancellation.
_TAYLOR_CUT = 1e-5
# Beyond this exp(t) is effectively infinite in double precision.
_EXP_CUT = 700.0


def bernoulli(t):
    """Scalar Bernoulli function B(t) = t / (exp(t) - 1)."""
    t = float(t)
    if abs(t) < _TAYLOR_CUT:
        return 1.0 - t / 2.0 + t * t / 12.0 - t ** 4 / 720.0
    if t > _EXP_CUT:
        return t * math.exp(-t)
    if t < -_EXP_CUT:
        return -t
    return t / math.expm1(t)


def bernoulli_vec(t):
    """Vectorized Bernoulli function."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    small = np.abs(t) < _TAYLOR_CUT
    pos = t > _EXP_CUT
    neg = t < -_EXP_CUT
    mid = ~(small | pos | neg)
    ts = t[small]
    out[small] = 1.0 - ts / 2.0 + ts * ts / 12.0 - ts ** 4 / 720.0
    out[pos] = t[pos] * np.exp(-t[pos])
    out[neg] = -t[neg]
    out[mid] = t[mid] / np.expm1(t[mid])
    return out


def _edge_average(mesh, elem_arr, average):
    e1 = mesh.edge_elems[:, 0]
    e2 = mesh.edge_elems[:, 1]
    v1 = elem_arr[e1]
    v2 = np.where(
        (e2 >= 0).reshape((-1,) + (1,) * (elem_arr.ndim - 1)), elem_arr[e2], v1
    )
    if average == "arithmetic":
        return 0.5 * (v1 + v2)
    if average == "harmonic":
        s = v1 + v2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s != 0.0, 2.0 * v1 * v2 / s, 0.0)
        return out
    raise ValueError(f"unknown edge average '{average}'")


def _edge_data(mesh, diffusion, drift, aux, average):
    a_elem = elem_values(mesh, diffusion)
    if np.any(a_elem <= 0.0) or not np.all(np.isfinite(a_elem)):
        bad = int(np.argmin(a_elem))
        raise AssemblyError(
            f"non-positive diffusion coefficient on element {bad} "
            f"(a = {a_elem[bad]:g})"
        )
    a_edge = _edge_average(mesh, a_elem, average)
    if np.any(a_edge <= 0.0):
        raise AssemblyError("non-positive edge diffusion after averaging")

    i = mesh.edges[:, 0]
    j = mesh.edges[:, 1]
    dpsi = np.zeros(mesh.n_edges)
    if drift is not None:
        beta_elem = elem_values(mesh, drift, vector=True)
        beta_edge = _edge_average(mesh, beta_elem, average)
        tvec = mesh.vertices[j] - mesh.vertices[i]
        dpsi += np.sum(beta_edge * tvec, axis=1) / a_edge
    if aux is not None:
        aux_v = nodal_values(mesh, aux)
        dpsi += aux_v[j] - aux_v[i]
    return a_edge, dpsi


def edge_potential(mesh, diffusion, drift=None, aux=None, average="arithmetic"):
    """Per-edge potential increment dpsi_E = (beta_E . t_E) / a_E + d(aux).

    Edges are oriented from the lower to the higher vertex index.  Returns an
    array over all mesh edges.
    """
    _, dpsi = _edge_data(mesh, diffusion, drift, aux, average)
    return dpsi


def lumped_reaction_diagonal(mesh, reaction=None, reaction_elem=None):
    """Lumped reaction diagonal from nodal and per-element contributions."""
    diag = np.zeros(mesh.n_vertices)
    if reaction is not None:
        diag += nodal_values(mesh, reaction) * mesh.lumped_area
    if reaction_elem is not None:
        c_el = elem_values(mesh, reaction_elem)
        contrib = np.repeat(c_el * mesh.areas / 3.0, 3)
        np.add.at(diag, mesh.elements.ravel(), contrib)
    return diag


def assemble_eafe(
    mesh,
    diffusion,
    drift=None,
    reaction=None,
    reaction_elem=None,
    aux=None,
    lumped=True,
    average="arithmetic",
):
    """Assemble the edge-fitted operator matrix for L u.

    Parameters
    ----------
    diffusion : per-element a > 0 (scalar broadcasts).
    drift : per-element beta vectors (m, 2), or None for pure diffusion.
    reaction : nodal reaction coefficient, mass-lumped when ``lumped``.
    reaction_elem : per-element reaction contribution, always lumped onto the
        vertices with weight area/3 (used for reconstructed-gradient terms).
    aux : nodal field whose edge jump is added to the edge potential.
    lumped : lump the reaction; required for the M-matrix property.  The
        combined lumped reaction must be nonnegative at every vertex, else
        CPositivityError is raised naming the vertex.
    """
    a_edge, dpsi = _edge_data(mesh, diffusion, drift, aux, average)
    w = mesh.edge_weights * a_edge
    bp = w * bernoulli_vec(dpsi)
    bm = w * bernoulli_vec(-dpsi)

    i = mesh.edges[:, 0]
    j = mesh.edges[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([bp, bm, -bm, -bp])
    A = csr_from_triplets(mesh.n_vertices, (rows, cols, vals))

    if reaction is None and reaction_elem is None:
        return A

    if lumped:
        diag = lumped_reaction_diagonal(mesh, reaction, reaction_elem)
        worst = int(np.argmin(diag))
        if diag[worst] < 0.0:
            # report the nodal c value, not the area-scaled diagonal
            raise CPositivityError(worst, diag[worst] / mesh.lumped_area[worst])
        return (A + sp.diags(diag)).tocsr()

    if reaction_elem is not None:
        raise ValueError("per-element reaction requires lumped=True")
    return (A + _consistent_reaction(mesh, reaction)).tocsr()


def _consistent_reaction(mesh, reaction):
    """Exact P1 mass matrix weighted by the nodal interpolant of c."""
    c = nodal_values(mesh, reaction)[mesh.elements]  # (m, 3)
    m = mesh.n_elements
    local = np.empty((m, 3, 3))
    total = c.sum(axis=1)
    for a in range(3):
        for b in range(3):
            if a == b:
                # int lam_a^2 lam_v: |tau|/10 for v=a, |tau|/30 otherwise
                local[:, a, a] = (2.0 * total + 4.0 * c[:, a]) / 60.0
            else:
                v = 3 - a - b
                local[:, a, b] = (2.0 * c[:, a] + 2.0 * c[:, b] + c[:, v]) / 60.0
    local *= mesh.areas[:, None, None]
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    return csr_from_triplets(mesh.n_vertices, (rows, cols, local.ravel()))
