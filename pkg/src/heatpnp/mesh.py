"""Structured triangular meshes for rectangular channel domains.

Conventions baked into the construction:

* vertices are numbered row by row, x fastest: ``v(ix, iy) = iy*(nx+1) + ix``;
* every grid cell is split along its bottom-left -> top-right diagonal;
* element vertex lists are counterclockwise, so all signed areas are positive;
* edges are stored with the lower vertex index first, which fixes the
  orientation used for edge differences everywhere downstream.

Splitting rectangles this way yields right triangles only, hence no obtuse
angles and a Laplacian stiffness matrix with nonpositive off-diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError


class PhiBC(IntEnum):
    """Boundary condition kind for the electrostatic potential equation."""

    DIRICHLET = 0
    NEUMANN = 1
    ROBIN = 2


class SpeciesBC(IntEnum):
    """Boundary condition kind for the species equations (no-flux only)."""

    NOFLUX = 0


@dataclass(frozen=True)
class BoundaryTag:
    """Boundary condition kinds carried by one boundary edge, one per equation."""

    phi: PhiBC
    temp_dirichlet: bool
    species: SpeciesBC = SpeciesBC.NOFLUX


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation of a rectangle with geometry caches.

    Attributes
    ----------
    vertices : (n, 2) float array of coordinates.
    elements : (m, 3) int array, CCW vertex triples.
    edges : (ne, 2) int array, canonical (low, high) vertex pairs.
    edge_elems : (ne, 2) int array of adjacent elements, -1 when absent.
    elem_edges : (m, 3) int array; entry k is the edge opposite local vertex k.
    boundary_edges : indices into ``edges`` of the single-element edges.
    areas, grads : per-element area and P1 basis gradients (m, 3, 2).
    lumped_area : per-vertex lumped patch area (sum of |tau|/3 over elements).
    edge_weights : per-edge Laplacian stiffness weight, summed over the
        adjacent elements; equals minus the assembled off-diagonal entry.
    bc_phi, bc_temp : per-boundary-edge tag arrays, set by ``tag_boundary``.
    """

    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    edge_elems: np.ndarray
    elem_edges: np.ndarray
    boundary_edges: np.ndarray
    areas: np.ndarray
    grads: np.ndarray
    lumped_area: np.ndarray
    edge_lengths: np.ndarray
    edge_weights: np.ndarray
    hx: float
    hy: float
    h: float
    bc_phi: np.ndarray | None = None
    bc_temp: np.ndarray | None = None

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def boundary_midpoints(self):
        ij = self.edges[self.boundary_edges]
        return 0.5 * (self.vertices[ij[:, 0]] + self.vertices[ij[:, 1]])

    @property
    def tagged(self):
        return self.bc_phi is not None

    def validate(self):
        """Check the structural invariants; raise AssertionError on failure."""
        nv, ne, m = self.n_vertices, self.n_edges, self.n_elements
        assert np.all(self.areas > 0.0), "element with non-positive area"
        counts = np.sum(self.edge_elems >= 0, axis=1)
        interior = np.ones(ne, dtype=bool)
        interior[self.boundary_edges] = False
        assert np.all(counts[interior] == 2), "interior edge without two elements"
        assert np.all(counts[self.boundary_edges] == 1), "boundary edge adjacency"
        assert nv - ne + m == 1, "Euler relation violated"
        assert np.all(self.edges[:, 0] < self.edges[:, 1]), "edge orientation"


def build_rect_mesh(Lx, Ly, nx, ny):
    """Triangulate [0, Lx] x [0, Ly] into an nx-by-ny grid of split cells."""
    if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
        raise ValueError("nx and ny must be integers")
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    Lx = float(Lx)
    Ly = float(Ly)
    if not (math.isfinite(Lx) and math.isfinite(Ly)) or Lx <= 0.0 or Ly <= 0.0:
        raise ValueError(f"domain lengths must be positive, got Lx={Lx}, Ly={Ly}")

    hx = Lx / nx
    hy = Ly / ny
    xs = np.arange(nx + 1, dtype=np.float64) * hx
    ys = np.arange(ny + 1, dtype=np.float64) * hy
    xs[-1] = Lx
    ys[-1] = Ly
    vertices = np.column_stack(
        [np.tile(xs, ny + 1), np.repeat(ys, nx + 1)]
    )

    ix = np.arange(nx)
    iy = np.arange(ny)
    bl = (iy[:, None] * (nx + 1) + ix[None, :]).ravel()
    br = bl + 1
    tl = bl + (nx + 1)
    tr = tl + 1
    m = 2 * nx * ny
    elements = np.empty((m, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([bl, br, tr])  # lower triangle of each cell
    elements[1::2] = np.column_stack([bl, tr, tl])  # upper triangle

    return _finish(vertices, elements, hx, hy)


def _finish(vertices, elements, hx, hy):
    p = vertices[elements]  # (m, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    two_a = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(two_a <= 0.0):
        raise ConfigurationError("mesh has non-CCW or degenerate elements")
    areas = 0.5 * two_a

    # P1 basis gradients: grad lambda_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / 2A
    grads = np.empty((elements.shape[0], 3, 2))
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        grads[:, k, 0] = (p[:, k1, 1] - p[:, k2, 1]) / two_a
        grads[:, k, 1] = (p[:, k2, 0] - p[:, k1, 0]) / two_a

    # Local edge k sits opposite local vertex k.
    local = [(1, 2), (2, 0), (0, 1)]
    pairs = np.stack([elements[:, lv] for lv in local], axis=1)  # (m, 3, 2)
    pairs = np.sort(pairs, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    elem_edges = inverse.reshape(-1, 3)

    ne = edges.shape[0]
    counts = np.bincount(inverse, minlength=ne)
    order = np.argsort(inverse, kind="stable")
    tau_of = np.repeat(np.arange(elements.shape[0]), 3)[order]
    starts = np.zeros(ne, dtype=np.int64)
    starts[1:] = np.cumsum(counts)[:-1]
    edge_elems = np.full((ne, 2), -1, dtype=np.int64)
    edge_elems[:, 0] = tau_of[starts]
    second = counts == 2
    edge_elems[second, 1] = tau_of[starts[second] + 1]

    edge_weights = np.zeros(ne)
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        w = -areas * np.sum(grads[:, k1] * grads[:, k2], axis=1)
        np.add.at(edge_weights, elem_edges[:, k], w)

    lumped = np.zeros(vertices.shape[0])
    for k in range(3):
        np.add.at(lumped, elements[:, k], areas / 3.0)

    dv = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    edge_lengths = np.hypot(dv[:, 0], dv[:, 1])
    boundary_edges = np.nonzero(counts == 1)[0]

    # hx/2, hy/2 and the square root all commute with halving in binary
    # arithmetic, so refining (nx, ny) -> (2nx, 2ny) halves h exactly.
    h = math.sqrt(hx * hx + hy * hy)

    mesh = Mesh(
        vertices=vertices,
        elements=elements,
        edges=edges,
        edge_elems=edge_elems,
        elem_edges=elem_edges,
        boundary_edges=boundary_edges,
        areas=areas,
        grads=grads,
        lumped_area=lumped,
        edge_lengths=edge_lengths,
        edge_weights=edge_weights,
        hx=hx,
        hy=hy,
        h=h,
    )
    mesh.validate()
    return mesh


def tag_boundary(mesh, rules):
    """Attach boundary tags; ``rules`` is a list of (predicate, BoundaryTag).

    Predicates receive the edge midpoint as an (x, y) array; the first
    matching rule wins.  Every boundary edge must be covered.
    """
    if not rules:
        raise ConfigurationError("tag_boundary needs at least one rule")
    mids = mesh.boundary_midpoints
    nb = mids.shape[0]
    bc_phi = np.full(nb, -1, dtype=np.int8)
    bc_temp = np.zeros(nb, dtype=bool)
    for predicate, tag in rules:
        if not isinstance(tag, BoundaryTag):
            raise ConfigurationError("tag_boundary rules must carry BoundaryTag values")
        hit = np.array([bool(predicate(mid)) for mid in mids])
        fresh = hit & (bc_phi < 0)
        bc_phi[fresh] = int(tag.phi)
        bc_temp[fresh] = tag.temp_dirichlet
    missing = np.nonzero(bc_phi < 0)[0]
    if missing.size:
        shown = ", ".join(f"({x:g}, {y:g})" for x, y in mids[missing[:5]])
        raise ConfigurationError(
            f"{missing.size} boundary edges left untagged; first midpoints: {shown}"
        )
    return replace(mesh, bc_phi=bc_phi, bc_temp=bc_temp)


def boundary_edges_with_phi(mesh, kind):
    """Indices (into mesh.edges) of boundary edges whose potential tag is ``kind``."""
    _require_tags(mesh)
    return mesh.boundary_edges[mesh.bc_phi == int(kind)]


def boundary_edges_with_temp_dirichlet(mesh):
    _require_tags(mesh)
    return mesh.boundary_edges[mesh.bc_temp]


def _require_tags(mesh):
    if not mesh.tagged:
        raise ConfigurationError("mesh has no boundary tags; run tag_boundary first")


def side_rules(Lx, Ly, side_tags):
    """Build tag rules for the four sides of the rectangle.

    ``side_tags`` maps 'left'/'right'/'bottom'/'top' to BoundaryTag.  Corners
    resolve by the listed order, matching the first side that contains them.
    """
    tol = 1e-9 * max(Lx, Ly)
    preds = {
        "left": lambda mid: abs(mid[0]) <= tol,
        "right": lambda mid: abs(mid[0] - Lx) <= tol,
        "bottom": lambda mid: abs(mid[1]) <= tol,
        "top": lambda mid: abs(mid[1] - Ly) <= tol,
    }
    rules = []
    for side, tag in side_tags.items():
        if side not in preds:
            raise ConfigurationError(f"unknown side name '{side}'")
        rules.append((preds[side], tag))
    return rules
