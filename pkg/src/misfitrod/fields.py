"""Nodal displacement fields, per-cell deformation gradients, thin rescaling.

A displacement field stores one 3-vector per node of a grid plus optional
jump surfaces. The deformation is ``y = x + u``; across each jump face the
represented deformation additionally jumps by the face's Burgers vector, so
the nodal values hold the one-sided (left) trace on the interface plane. The
per-cell strain is the average of the 8 trilinear shape-function gradients of
``y`` (exact for affine maps); for cells right-adjacent to a jump face the
across-face difference is corrected by ``-h b`` so that ``G`` is the
absolutely continuous part of the deformation gradient: the jump never enters
``G``, it is carried by the jump metadata and observed through circuits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import DislocationSpec, Grid

__all__ = [
    "DisplacementField",
    "StrainField",
    "RescaledField",
    "strain",
    "rescale",
    "change_of_variables",
    "save_field",
    "load_field",
]


@dataclass
class DisplacementField:
    """Nodal displacements ``u`` on a grid, with optional jump surfaces."""

    grid: Grid
    values: np.ndarray
    jumps: tuple[DislocationSpec, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = self.grid.node_shape + (3,)
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape} != node shape {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite displacement values")
        self.values = v
        self.jumps = tuple(self.jumps)

    @classmethod
    def zeros(cls, grid: Grid, jumps=()) -> "DisplacementField":
        return cls(grid, np.zeros(grid.node_shape + (3,)), tuple(jumps))

    @classmethod
    def from_affine(
        cls, grid: Grid, A: np.ndarray, c: np.ndarray | None = None, jumps=()
    ) -> "DisplacementField":
        """Displacement of the affine deformation ``y = A x + c``."""
        A = np.asarray(A, dtype=float)
        X = grid.node_positions
        u = X @ (A - np.eye(3)).T
        if c is not None:
            u = u + np.asarray(c, dtype=float)
        return cls(grid, u, tuple(jumps))

    def copy(self) -> "DisplacementField":
        return replace(self, values=self.values.copy())

    @property
    def jump_id(self) -> str:
        return "+".join(s.jump_id for s in self.jumps) if self.jumps else "none"


@dataclass
class StrainField:
    """Per-cell deformation gradients; keeps a reference to its source field."""

    grid: Grid
    G: np.ndarray
    source: DisplacementField | None = None

    def __post_init__(self):
        expected = self.grid.cell_shape + (3, 3)
        if self.G.shape != expected:
            raise ValueError(f"G shape {self.G.shape} != cell shape {expected}")

    @property
    def jumps(self):
        return self.source.jumps if self.source is not None else ()


@dataclass
class RescaledField:
    """Columnwise thin rescaling ``F_h = (F^1 | F^2/h | F^3/h)``."""

    F_h: np.ndarray
    h: float


def strain(u: DisplacementField) -> StrainField:
    """Per-cell strain of ``x + u`` with jump corrections.

    The cell value is the trilinear-average gradient (central difference at
    the cell center), one 3x3 matrix per cell over the full cell lattice;
    downstream energy sums apply the section mask.
    """
    g = u.grid
    a1, a2, a3 = g.spacings
    yhat = g.node_positions + u.values

    G = np.empty(g.cell_shape + (3, 3))
    d = yhat[1:, :, :] - yhat[:-1, :, :]
    G[..., 0] = 0.25 * (
        d[:, :-1, :-1] + d[:, 1:, :-1] + d[:, :-1, 1:] + d[:, 1:, 1:]
    ) / a1
    d = yhat[:, 1:, :] - yhat[:, :-1, :]
    G[..., 1] = 0.25 * (
        d[:-1, :, :-1] + d[1:, :, :-1] + d[:-1, :, 1:] + d[1:, :, 1:]
    ) / a2
    d = yhat[:, :, 1:] - yhat[:, :, :-1]
    G[..., 2] = 0.25 * (
        d[:-1, :-1, :] + d[1:, :-1, :] + d[:-1, 1:, :] + d[1:, 1:, :]
    ) / a3

    i1 = g.plane_node_index  # right-adjacent cell layer spans [0, a]
    for spec in u.jumps:
        if spec.h == 0.0 or len(spec.faces) == 0:
            continue
        J = spec.burgers
        G[i1, spec.faces[:, 0], spec.faces[:, 1], :, 0] -= J / a1
    return StrainField(g, G, source=u)


def rescale(F: StrainField, h: float) -> RescaledField:
    """Thin rescaling of a strain field; errors on ``h <= 0``."""
    if not (0.0 < h <= 1.0):
        raise ValueError(f"thickness parameter h must lie in (0, 1]; got {h}")
    F_h = F.G.copy()
    F_h[..., 1] /= h
    F_h[..., 2] /= h
    return RescaledField(F_h, float(h))


def change_of_variables(u: DisplacementField, to_grid: Grid) -> DisplacementField:
    """Reinterpret nodal values on an anisotropically scaled conforming grid.

    The two grids must share node counts and axial coordinates; the cross
    coordinates may differ by a uniform factor (the thin-domain change of
    variables). Values are copied verbatim, so a round trip is bit-identical.
    """
    g = u.grid
    if g.node_shape != to_grid.node_shape:
        raise ValueError("grids are not conformal: node counts differ")
    if not np.allclose(g.axial_nodes, to_grid.axial_nodes, rtol=0, atol=1e-12):
        raise ValueError("grids are not conformal: axial coordinates differ")
    ratio = to_grid.cross_nodes[-1] / g.cross_nodes[-1]
    if not np.allclose(
        to_grid.cross_nodes, ratio * g.cross_nodes, rtol=0, atol=1e-12
    ):
        raise ValueError("grids are not conformal: cross coordinates not scaled")
    return DisplacementField(to_grid, u.values.copy(), u.jumps)


def save_field(u: DisplacementField, path, h: float = 1.0) -> None:
    """Serialize nodal values with a small header (grid hash, h, jump id)."""
    header = json.dumps(
        {"grid": u.grid.grid_hash, "h": h, "jump": u.jump_id}, sort_keys=True
    )
    np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8),
             values=u.values)


def load_field(path, grid: Grid, jumps=()) -> tuple[DisplacementField, dict]:
    """Load a serialized field onto ``grid``; the grid hash must match."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        values = data["values"]
    if header["grid"] != grid.grid_hash:
        raise ValueError(
            f"field was saved for grid {header['grid']}, not {grid.grid_hash}"
        )
    u = DisplacementField(grid, values, tuple(jumps))
    if u.jump_id != header["jump"]:
        raise ValueError("jump surfaces do not match the stored header")
    return u, header
