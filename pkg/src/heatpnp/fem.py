"""P1 finite element assembly on triangular meshes.

Covers the pieces the coupled solver composes: weighted stiffness matrices,
lumped mass, Robin boundary terms, nodal interpolation, and symmetric
Dirichlet elimination with lifting.  All quadrature is exact for piecewise
linears; integrals of nodal data use the lumped (vertex) rule throughout so
that assembly and diagnostics agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, EvaluationError
from .linalg import csr_from_triplets
from .mesh import PhiBC, boundary_edges_with_phi


@dataclass
class Field:
    """Nodal scalar field: one value per mesh vertex."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"field has {self.values.shape} values for "
                f"{self.mesh.n_vertices} vertices"
            )


@dataclass
class ElemField:
    """Piecewise-constant field: one value (or vector) per element."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[0] != self.mesh.n_elements:
            raise ValueError("element field length does not match element count")


def nodal_values(mesh, f):
    """Coerce a Field, array, or scalar to a nodal value array."""
    if isinstance(f, Field):
        return f.values
    arr = np.asarray(f, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(mesh.n_vertices, float(arr))
    if arr.shape != (mesh.n_vertices,):
        raise ValueError("nodal array has wrong length")
    return arr


def elem_values(mesh, f, vector=False):
    """Coerce an ElemField, array, or scalar to a per-element array."""
    if isinstance(f, ElemField):
        arr = f.values
    else:
        arr = np.asarray(f, dtype=np.float64)
    if arr.ndim == 0:
        shape = (mesh.n_elements, 2) if vector else (mesh.n_elements,)
        return np.full(shape, float(arr))
    want = (mesh.n_elements, 2) if vector else (mesh.n_elements,)
    if arr.shape != want:
        raise ValueError(f"element array has shape {arr.shape}, expected {want}")
    return arr


def elem_means(mesh, nodal):
    """Per-element mean of a nodal array."""
    return nodal[mesh.elements].mean(axis=1)


def p1_gradients(mesh, nodal):
    """Per-element gradient of the P1 interpolant of nodal data, shape (m, 2)."""
    vals = nodal[mesh.elements]  # (m, 3)
    return np.einsum("mk,mkd->md", vals, mesh.grads)


def interpolate(mesh, f):
    """Nodal interpolation: evaluate f at every vertex and return a Field.

    ``f`` may be a callable of (x, y), a scalar, or an existing value array.
    Non-finite results raise EvaluationError naming the first bad vertex.
    """
    if callable(f):
        vals = np.array(
            [f(x, y) for x, y in mesh.vertices], dtype=np.float64
        )
    else:
        vals = nodal_values(mesh, f).copy()
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        v = bad[0]
        x, y = mesh.vertices[v]
        raise EvaluationError(
            f"non-finite value at vertex {v} ({x:g}, {y:g}): {vals[v]}"
        )
    return Field(mesh, vals)


def assemble_stiffness(mesh, coeff=1.0):
    """Weighted stiffness matrix: entry (i, j) = sum_tau coeff_tau (grad_i, grad_j)_tau."""
    c = elem_values(mesh, coeff)
    m = mesh.n_elements
    scale = c * mesh.areas  # (m,)
    local = np.einsum("m,mkd,mld->mkl", scale, mesh.grads, mesh.grads)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    return csr_from_triplets(mesh.n_vertices, (rows, cols, local.ravel()))


def assemble_mass_lumped(mesh, density=1.0):
    """Diagonal of the lumped mass matrix with nodal density weighting.

    Entry v is density(v) times a third of the area of the elements touching
    v.  Returned as a 1-D array (the matrix is diagonal).
    """
    rho = nodal_values(mesh, density)
    return rho * mesh.lumped_area


def lumped_mass_matrix(mesh, density=1.0):
    return sp.diags(assemble_mass_lumped(mesh, density))


def assemble_robin(mesh, kappa, C):
    """Edge-lumped Robin terms on the boundary edges tagged Robin.

    Returns (matrix, load): kappa*|E|/2 added to each endpoint diagonal and
    C*|E|/2 added to each endpoint load entry, per tagged edge.
    """
    n = mesh.n_vertices
    load = np.zeros(n)
    robin = boundary_edges_with_phi(mesh, PhiBC.ROBIN)
    if robin.size == 0:
        return sp.csr_matrix((n, n)), load
    ij = mesh.edges[robin]
    half = 0.5 * mesh.edge_lengths[robin]
    diag = np.zeros(n)
    np.add.at(diag, ij[:, 0], kappa * half)
    np.add.at(diag, ij[:, 1], kappa * half)
    np.add.at(load, ij[:, 0], C * half)
    np.add.at(load, ij[:, 1], C * half)
    return sp.diags(diag).tocsr(), load


def apply_dirichlet(A, b, bdata):
    """Impose Dirichlet values by symmetric elimination with lifting.

    ``bdata`` is a list of (vertex, value) pairs or an (indices, values)
    tuple.  Returns modified copies (A', b'); constrained rows/columns are
    zeroed, the diagonal set to one, and the solution reproduces the data
    exactly.  Duplicate vertices with conflicting values raise
    ConfigurationError.
    """
    n = A.shape[0]
    if isinstance(bdata, tuple) and len(bdata) == 2:
        idx = np.asarray(bdata[0], dtype=np.int64)
        vals = np.asarray(bdata[1], dtype=np.float64)
    else:
        bdata = list(bdata)
        idx = np.array([int(p[0]) for p in bdata], dtype=np.int64)
        vals = np.array([float(p[1]) for p in bdata], dtype=np.float64)
    if idx.size == 0:
        return A.copy(), b.copy()
    if idx.min() < 0 or idx.max() >= n:
        raise ConfigurationError("Dirichlet vertex index out of range")

    uniq, first = np.unique(idx, return_index=True)
    if uniq.size != idx.size:
        # tolerate exact duplicates, reject conflicts
        ref = np.zeros(n)
        ref[idx[first]] = vals[first]
        if np.any(ref[idx] != vals):
            bad = idx[ref[idx] != vals][0]
            raise ConfigurationError(
                f"conflicting Dirichlet values at vertex {int(bad)}"
            )
        idx, vals = uniq, ref[uniq]

    g = np.zeros(n)
    g[idx] = vals
    b2 = b - A @ g
    b2[idx] = vals
    keep = np.ones(n)
    keep[idx] = 0.0
    D = sp.diags(keep)
    pin = np.zeros(n)
    pin[idx] = 1.0
    A2 = (D @ A @ D + sp.diags(pin)).tocsr()
    return A2, b2


def dirichlet_lift(A, idx, vals):
    """Precomputable pieces for repeated solves with a fixed constraint set.

    Returns (A_eliminated, lift, idx, vals) where b' = b - lift away from the
    constrained set and b'[idx] = vals.
    """
    n = A.shape[0]
    g = np.zeros(n)
    g[idx] = vals
    lift = A @ g
    keep = np.ones(n)
    keep[idx] = 0.0
    D = sp.diags(keep)
    pin = np.zeros(n)
    pin[idx] = 1.0
    A2 = (D @ A @ D + sp.diags(pin)).tocsr()
    return A2, lift, np.asarray(idx, dtype=np.int64), np.asarray(vals, dtype=np.float64)


def lumped_l2(mesh, nodal):
    """Lumped-mass weighted L2 norm of a nodal array."""
    return float(np.sqrt(np.sum(mesh.lumped_area * nodal * nodal)))
