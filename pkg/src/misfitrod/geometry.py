"""Discretized rod domain, dislocation rasterization, Burgers circuits.

The rod occupies ``(-M, M) x section`` where the section is a disk of radius
``r`` or a square of half-side ``r`` in the ``(x2, x3)`` plane. Cells are
regular hexahedra of axial spacing ``a`` and cross spacing ``a * cross_scale``
(the anisotropic cross scale serves thin-rod evaluations; it is 1 for the
standard runs). A cell belongs to the domain when its center lies inside the
section; disk boundaries are stair-cased.

The interface plane ``x1 = 0`` always coincides with a grid plane. A
dislocation is a set of interface faces (the rasterization of the region
enclosed by a closed curve) carrying a constant displacement jump; the
circulation of the elastic strain along lattice loops is the observable that
measures its Burgers content.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "CrossSection",
    "Grid",
    "build_grid",
    "DislocationSpec",
    "rasterize_dislocation",
    "burgers_circuit",
    "linking_loop",
    "polygon_area",
]

_SHAPES = ("disk", "square")


@dataclass(frozen=True)
class CrossSection:
    """Rod cross-section: ``disk`` (radius) or ``square`` (half-side)."""

    shape: str
    half_extent: float

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"shape must be one of {_SHAPES}; got {self.shape!r}")
        if not (self.half_extent > 0.0):
            raise ValueError(f"half_extent must be positive; got {self.half_extent}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Strict interior test for points ``(..., 2)``."""
        pts = np.asarray(pts, dtype=float)
        r = self.half_extent
        if self.shape == "disk":
            return pts[..., 0] ** 2 + pts[..., 1] ** 2 < r * r
        return np.maximum(np.abs(pts[..., 0]), np.abs(pts[..., 1])) < r


class Grid:
    """Regular hexahedral grid over ``(-M, M) x section``.

    Node and cell orderings are lexicographic in ``(i1, i2, i3)``. All masked
    cells have their 8 corner nodes allocated (nodes cover the full bounding
    box). Instances are immutable after construction and safe to share.
    """

    def __init__(
        self,
        cross_section: CrossSection,
        axial_half_length: float,
        spacing: float,
        cross_scale: float = 1.0,
    ):
        if spacing <= 0.0:
            raise ValueError("spacing must be positive")
        if cross_scale <= 0.0:
            raise ValueError("cross_scale must be positive")
        M = float(axial_half_length)
        a = float(spacing)
        ratio = M / a
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"spacing {a} does not divide the axial half-length {M}: "
                "the interface plane x1=0 must coincide with a grid plane"
            )
        self.cross_section = cross_section
        self.axial_half_length = M
        self.spacing = a
        self.cross_scale = float(cross_scale)

        ac = a * self.cross_scale
        r = cross_section.half_extent
        half_cells = int(np.ceil(r / ac - 1e-9))
        self.n1 = 2 * int(round(ratio))
        self.n2 = 2 * half_cells
        self.n3 = 2 * half_cells
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError(
                f"under-resolved grid: {self.n1} axial x {self.n2} cross cells; "
                "need at least 4 cells across the smallest extent"
            )
        self._cross_up = half_cells * ac

    # ---------------------------------------------------------------- axes
    @cached_property
    def axial_nodes(self) -> np.ndarray:
        return -self.axial_half_length + self.spacing * np.arange(self.n1 + 1)

    @cached_property
    def cross_nodes(self) -> np.ndarray:
        ac = self.spacing * self.cross_scale
        return -self._cross_up + ac * np.arange(self.n2 + 1)

    @property
    def spacings(self) -> tuple[float, float, float]:
        ac = self.spacing * self.cross_scale
        return (self.spacing, ac, ac)

    @property
    def node_shape(self) -> tuple[int, int, int]:
        return (self.n1 + 1, self.n2 + 1, self.n3 + 1)

    @property
    def cell_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def plane_node_index(self) -> int:
        """Axial node index of the interface plane x1 = 0."""
        return self.n1 // 2

    @property
    def cell_volume(self) -> float:
        a1, a2, a3 = self.spacings
        return a1 * a2 * a3

    # ---------------------------------------------------------------- masks
    @cached_property
    def cross_centers(self) -> np.ndarray:
        ac = self.spacing * self.cross_scale
        c = -self._cross_up + ac * (np.arange(self.n2) + 0.5)
        return c

    @cached_property
    def mask2d(self) -> np.ndarray:
        """Boolean (n2, n3): cross cells whose centers lie inside the section."""
        c2, c3 = np.meshgrid(self.cross_centers, self.cross_centers, indexing="ij")
        m = self.cross_section.contains(np.stack([c2, c3], axis=-1))
        m.setflags(write=False)
        return m

    @cached_property
    def cell_mask(self) -> np.ndarray:
        m = np.broadcast_to(self.mask2d[None, :, :], self.cell_shape)
        return m

    @property
    def masked_cell_count(self) -> int:
        return int(self.mask2d.sum()) * self.n1

    @cached_property
    def axial_centers(self) -> np.ndarray:
        return -self.axial_half_length + self.spacing * (np.arange(self.n1) + 0.5)

    @cached_property
    def node_positions(self) -> np.ndarray:
        """Node coordinates, shape ``(n1+1, n2+1, n3+1, 3)``."""
        X = np.empty(self.node_shape + (3,))
        X[..., 0] = self.axial_nodes[:, None, None]
        X[..., 1] = self.cross_nodes[None, :, None]
        X[..., 2] = self.cross_nodes[None, None, :]
        X.setflags(write=False)
        return X

    # ---------------------------------------------------------------- misc
    def params(self) -> tuple:
        return (
            self.cross_section.shape,
            float(self.cross_section.half_extent),
            float(self.axial_half_length),
            float(self.spacing),
            float(self.cross_scale),
        )

    @cached_property
    def grid_hash(self) -> str:
        payload = repr(self.params()).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, Grid) and self.params() == other.params()

    def __hash__(self):
        return hash(self.params())

    def __repr__(self):
        cs = self.cross_section
        return (
            f"Grid({cs.shape}, r={cs.half_extent}, M={self.axial_half_length}, "
            f"a={self.spacing}, s={self.cross_scale}, "
            f"cells={self.n1}x{self.n2}x{self.n3})"
        )


def build_grid(
    cross_section: CrossSection,
    axial_half_length: float,
    spacing: float,
    cross_scale: float = 1.0,
) -> Grid:
    """Build a grid; rejects spacings that miss the interface plane or
    under-resolve the section (fewer than 4 cells across the smallest extent).
    """
    if cross_section.half_extent < 2.0 * spacing * cross_scale - 1e-12:
        raise ValueError(
            "cross-section half-extent must be at least two cross spacings"
        )
    return Grid(cross_section, axial_half_length, spacing, cross_scale)


# ---------------------------------------------------------------------------
# dislocations
# ---------------------------------------------------------------------------


def polygon_area(verts: np.ndarray) -> float:
    """Unsigned shoelace area of a closed polygon given by its vertices."""
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(
        float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    )


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _is_simple(verts: np.ndarray) -> bool:
    n = len(verts)
    for i in range(n):
        p1, p2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            q1, q2 = verts[j], verts[(j + 1) % n]
            if _segments_intersect(p1, p2, q1, q2):
                return False
    return True


def points_in_polygon(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd membership for points ``(K, 2)``; boundary points count inside."""
    pts = np.asarray(pts, dtype=float)
    verts = np.asarray(verts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    scale = max(1.0, float(np.max(np.abs(verts))))
    tol = 1e-12 * scale
    n = len(verts)
    for k in range(n):
        x1, y1 = verts[k]
        x2, y2 = verts[(k + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        cross = (x - x1) * dy - (y - y1) * dx
        seg2 = dx * dx + dy * dy
        if seg2 > 0:
            tproj = ((x - x1) * dx + (y - y1) * dy) / seg2
            on_edge |= (np.abs(cross) <= tol * np.sqrt(seg2)) & (tproj >= -1e-12) & (
                tproj <= 1.0 + 1e-12
            )
        crossing = (y1 > y) != (y2 > y)
        if np.any(crossing):
            with np.errstate(divide="ignore", invalid="ignore"):
                xin = x1 + (y - y1) / (y2 - y1) * dx
            inside ^= crossing & (xin > x)
    return inside | on_edge


@dataclass(frozen=True)
class DislocationSpec:
    """Jump surface at the interface plane with a constant displacement jump.

    ``b`` is the unit Burgers direction, ``h`` its scale (the jump vector is
    ``h * b``), ``faces`` the ``(K, 2)`` cross-cell indices of the interface
    faces carrying the jump, each oriented along ``+e1``. ``curve`` optionally
    records the polygon the faces were rasterized from.
    """

    b: np.ndarray
    h: float
    faces: np.ndarray
    curve: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(3).copy()
        f = np.asarray(self.faces, dtype=np.intp).reshape(-1, 2).copy()
        b.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "faces", f)
        if self.h < 0:
            raise ValueError("jump scale h must be non-negative")
        nb = np.linalg.norm(b)
        if self.h > 0 and abs(nb - 1.0) > 1e-9:
            raise ValueError("b must be a unit vector when h > 0")

    @classmethod
    def from_jump(
        cls, jump: np.ndarray, faces: np.ndarray, curve: np.ndarray | None = None
    ) -> "DislocationSpec":
        jump = np.asarray(jump, dtype=float).reshape(3)
        h = float(np.linalg.norm(jump))
        b = jump / h if h > 0 else np.zeros(3)
        return cls(b=b, h=h, faces=faces, curve=curve)

    @property
    def burgers(self) -> np.ndarray:
        """The scaled Burgers vector ``h b`` (the displacement jump)."""
        return self.h * self.b

    @property
    def jump_id(self) -> str:
        payload = (self.b.tobytes(), float(self.h), self.faces.tobytes())
        return hashlib.sha1(repr(payload).encode()).hexdigest()[:12]

    def face_lookup(self, grid: Grid) -> np.ndarray:
        """Boolean (n2, n3) table of jump-face membership."""
        tab = np.zeros((grid.n2, grid.n3), dtype=bool)
        if len(self.faces):
            tab[self.faces[:, 0], self.faces[:, 1]] = True
        return tab


def rasterize_dislocation(
    curve: np.ndarray, grid: Grid, burgers: np.ndarray
) -> DislocationSpec:
    """Rasterize a closed curve in the interface cross-section.

    The jump surface collects every interface face whose center lies inside
    the polygon (even-odd rule, boundary ties count as inside). The polygon
    must be simple, closed, and strictly inside the cross-section.
    """
    verts = np.asarray(curve, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise ValueError("curve must be a list of at least 3 planar vertices")
    if np.allclose(verts[0], verts[-1]):
        verts = verts[:-1]
    if len(verts) < 3:
        raise ValueError("degenerate curve")
    if not np.all(grid.cross_section.contains(verts)):
        raise ValueError(
            "dislocation curve touches or leaves the cross-section boundary; "
            "it must be strictly inside the section"
        )
    if not _is_simple(verts):
        raise ValueError("dislocation curve must be a simple (non-crossing) polygon")

    a1, a2, a3 = grid.spacings
    if polygon_area(verts) < a2 * a3:
        warnings.warn(
            "dislocation polygon has area below one cell: unresolved, "
            "empty jump surface",
            stacklevel=2,
        )
        return DislocationSpec.from_jump(
            burgers, np.zeros((0, 2), dtype=np.intp), curve=verts
        )

    c2, c3 = np.meshgrid(grid.cross_centers, grid.cross_centers, indexing="ij")
    centers = np.stack([c2.ravel(), c3.ravel()], axis=-1)
    inside = points_in_polygon(centers, verts).reshape(grid.n2, grid.n3)
    inside &= grid.mask2d
    faces = np.argwhere(inside)
    return DislocationSpec.from_jump(burgers, faces, curve=verts)


# ---------------------------------------------------------------------------
# circuits
# ---------------------------------------------------------------------------


def linking_loop(
    grid: Grid, inside: tuple[int, int], outside: tuple[int, int], layers: int = 2
) -> np.ndarray:
    """Closed rectangular lattice loop crossing the interface plane twice.

    Runs up the axis at cross-node ``inside``, over to cross-node ``outside``
    above the plane, back down, and returns below the plane. Linking with a
    jump surface is decided by which of the two cross positions lies over it.
    """
    plane = grid.plane_node_index
    lo, hi = plane - layers, plane + layers
    if lo < 0 or hi > grid.n1:
        raise ValueError("axial extent too small for the requested loop")

    def cross_walk(i1, start, stop):
        path = []
        j2, j3 = start
        while j2 != stop[0]:
            j2 += 1 if stop[0] > j2 else -1
            path.append((i1, j2, j3))
        while j3 != stop[1]:
            j3 += 1 if stop[1] > j3 else -1
            path.append((i1, j2, j3))
        return path

    loop = [(i1, inside[0], inside[1]) for i1 in range(lo, hi + 1)]
    loop += cross_walk(hi, inside, outside)
    loop += [(i1, outside[0], outside[1]) for i1 in range(hi - 1, lo - 1, -1)]
    loop += cross_walk(lo, outside, inside)
    return np.array(loop, dtype=np.intp)


def burgers_circuit(field, loop: np.ndarray) -> np.ndarray:
    """Line integral of the elastic strain along a closed lattice edge loop.

    ``field`` is a displacement field or a strain field carrying its source
    displacement. Per edge, the integrand is the directional derivative of
    the adjacent cell's trilinear deformation interpolant, which along an
    axis-aligned edge equals the corrected nodal difference exactly; the sum
    therefore telescopes and returns ``-(winding) * h b`` per jump surface up
    to floating rounding, and 0 for non-linking loops.

    The loop is given as an ``(L, 3)`` integer array of node multi-indices
    with ``loop[0] == loop[-1]``, consecutive entries differing by one unit
    step. It must keep at least one cell away from each jump-surface boundary
    curve.
    """
    u = getattr(field, "source", field)
    if u is None:
        raise ValueError("strain field does not carry its source displacement")
    grid = u.grid
    loop = np.asarray(loop, dtype=np.intp)
    if loop.ndim != 2 or loop.shape[1] != 3 or len(loop) < 2:
        raise ValueError("loop must be an (L, 3) array of node indices")
    if np.any(loop[0] != loop[-1]):
        raise ValueError("open path: loop must end at its starting node")
    steps = np.diff(loop, axis=0)
    if np.any(np.abs(steps).sum(axis=1) != 1):
        raise ValueError("loop steps must move along single lattice edges")
    shape = grid.node_shape
    for d in range(3):
        if np.any(loop[:, d] < 0) or np.any(loop[:, d] >= shape[d]):
            raise ValueError("loop leaves the grid")

    yhat = grid.node_positions + u.values
    vals = yhat[loop[:, 0], loop[:, 1], loop[:, 2]]
    total = np.sum(np.diff(vals, axis=0), axis=0)

    plane = grid.plane_node_index
    axial = steps[:, 0]
    crossing = np.nonzero(axial != 0)[0]
    for spec in u.jumps:
        if spec.h == 0.0 or len(spec.faces) == 0:
            continue
        tab = spec.face_lookup(grid)
        winding = 0
        for k in crossing:
            i1 = loop[k, 0]
            sgn = int(axial[k])
            # the edge spanning [0, a] starts at the plane going up, or at
            # plane+1 going down
            if not (i1 == plane and sgn == 1) and not (i1 == plane + 1 and sgn == -1):
                continue
            i2, i3 = int(loop[k, 1]), int(loop[k, 2])
            stats = [
                tab[f2, f3]
                for f2 in (i2 - 1, i2)
                for f3 in (i3 - 1, i3)
                if 0 <= f2 < grid.n2 and 0 <= f3 < grid.n3
            ]
            if not stats:
                continue
            if any(stats) != all(stats):
                raise ValueError(
                    "loop passes within one cell of a jump-surface boundary "
                    f"curve at node ({i1}, {i2}, {i3})"
                )
            if all(stats):
                winding += sgn
        total = total - winding * spec.burgers
    return total
