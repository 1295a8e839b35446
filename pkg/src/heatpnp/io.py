"""Output writers: incremental diagnostic CSV and legacy-ASCII VTK snapshots.

Floats are written with repr(), the shortest decimal string that round-trips
the double exactly, so repeated runs of the same problem produce
byte-identical files.
"""

from __future__ import annotations

import numpy as np


class CsvWriter:
    """Append-style CSV writer that flushes after every row.

    Flushing per row keeps partial output on disk if the run aborts midway.
    """

    def __init__(self, path, header):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._ncols = len(header)
        self._fh.write(",".join(header) + "\n")
        self._fh.flush()

    def write(self, row):
        if len(row) != self._ncols:
            raise ValueError(
                f"row has {len(row)} fields, header has {self._ncols}"
            )
        self._fh.write(",".join(row) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *_exc):
        self.close()


def write_diag_csv(path, records, n_species):
    """One-shot dump of diagnostic records; header-only when records is empty."""
    from .diagnostics import csv_header, record_row

    with CsvWriter(path, csv_header(n_species)) as w:
        for rec in records:
            w.write(record_row(rec))


def _fmt(x):
    return repr(float(x))


def write_vtk_snapshot(path, mesh, point_fields, cell_fields=None):
    """Legacy ASCII VTK unstructured-grid snapshot.

    ``point_fields`` maps name -> nodal array (scalars); ``cell_fields`` maps
    name -> (n_elements, 2) array written as 3-vectors with zero z.  Field
    names must not contain whitespace.  Mismatched array sizes raise
    ValueError.
    """
    cell_fields = cell_fields or {}
    n = mesh.n_vertices
    m = mesh.n_elements
    for name, arr in point_fields.items():
        if " " in name:
            raise ValueError(f"field name {name!r} contains whitespace")
        if np.asarray(arr).shape != (n,):
            raise ValueError(
                f"point field {name!r} has shape {np.shape(arr)}, expected ({n},)"
            )
    for name, arr in cell_fields.items():
        if " " in name:
            raise ValueError(f"field name {name!r} contains whitespace")
        if np.asarray(arr).shape != (m, 2):
            raise ValueError(
                f"cell field {name!r} has shape {np.shape(arr)}, expected ({m}, 2)"
            )

    lines = [
        "# vtk DataFile Version 3.0",
        "heatpnp snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0")
    lines.append(f"CELLS {m} {4 * m}")
    for a, b, c in mesh.elements:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)

    if point_fields:
        lines.append(f"POINT_DATA {n}")
        for name, arr in point_fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(arr, dtype=np.float64))
    if cell_fields:
        lines.append(f"CELL_DATA {m}")
        for name, arr in cell_fields.items():
            lines.append(f"VECTORS {name} double")
            for vx, vy in np.asarray(arr, dtype=np.float64):
                lines.append(f"{_fmt(vx)} {_fmt(vy)} 0.0")

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
