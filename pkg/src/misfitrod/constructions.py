"""Explicit competitor fields: mismatch ramp, glued quadrants, recovery path.

Three families of admissible fields with known energy structure:

* ``mismatch_ramp`` interpolates linearly between the identity and the
  mismatch map over the middle half of the rod; its energy is quadratic in
  the mismatch and cubic in the section radius.
* ``glued_quadrant_field`` tiles a square section with translated copies of a
  narrower transition field, blended across wedge-shaped sectors; the copies
  differ by affine constants whose mismatch across the interface plane is a
  constant jump per tile, so the assembled field carries one dislocation
  plate per non-reference tile.
* ``recovery_sequence`` renders a piecewise-constant rotation profile at
  thickness ``h``: far pieces are exact affine maps, interior rotation jumps
  are bridged by geodesic bands of width ``2 sigma_h``, and the interface
  transition is a stored clamped minimizer squeezed into ``|x1| < sigma_h``.

Each builder returns the field together with its discrete energy and an
itemized per-region breakdown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import DisplacementField
from .geometry import CrossSection, DislocationSpec, Grid, build_grid
from .material import ElasticModel
from .so3 import geodesic, is_rotation
from .solver import cellwise_density, total_energy

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

__all__ = [
    "RampSpec",
    "QuadrantGlueSpec",
    "RecoverySpec",
    "mismatch_ramp",
    "glued_quadrant_field",
    "recovery_sequence",
    "rotation_path",
    "default_overlap",
]


# ---------------------------------------------------------------------------
# mismatch ramp
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RampSpec:
    """Linear two-well ramp; ``delta`` is ``|H - I|`` (Frobenius).

    The profile equals 1 below ``-r/2``, 0 above ``r/2`` and is affine in
    between, with ``r`` the cross-section half-extent of the target grid.
    """

    delta: float

    @classmethod
    def for_model(cls, model: ElasticModel) -> "RampSpec":
        return cls(delta=float(np.linalg.norm(model.well_right - np.eye(3))))


def _ramp_profile(x1: np.ndarray, r: float) -> np.ndarray:
    return np.clip(-x1 / r + 0.5, 0.0, 1.0)


def mismatch_ramp(
    spec: RampSpec, grid: Grid, model: ElasticModel
) -> tuple[DisplacementField, float]:
    """Nodal sampling of ``u(x) = phi(x1) x + (1 - phi(x1)) H x``.

    The strain stays within ``2 delta`` of the identity; the returned energy
    is the discrete energy of the sampled field.
    """
    r = grid.cross_section.half_extent
    if grid.axial_half_length < r / 2.0 + grid.spacing - 1e-12:
        raise ValueError("grid axial half-length must cover the ramp plus one slab")
    dH = float(np.linalg.norm(model.well_right - np.eye(3)))
    if abs(dH - spec.delta) > 1e-9 * (1.0 + dH):
        raise ValueError(
            f"RampSpec.delta={spec.delta} inconsistent with |H - I|={dH}"
        )
    X = grid.node_positions
    phi = _ramp_profile(X[..., 0], r)
    u = (1.0 - phi)[..., None] * (X @ (model.well_right - np.eye(3)).T)
    fld = DisplacementField(grid, u)
    return fld, total_energy(fld, model)


# ---------------------------------------------------------------------------
# glued quadrants
# ---------------------------------------------------------------------------


def default_overlap(r: float, spacing: float) -> float:
    """Sublinear overlap schedule ``mu ~ r^(2/3)/4`` rounded to an even cell
    count (even keeps the shrunk tile centers on the lattice), at least two
    cells and at most ``r/4``. The sublinearity is what breaks the exact
    homothety of fixed cells-per-radius sweeps."""
    target = r ** (2.0 / 3.0) / 4.0
    cells = 2 * max(1, round(target / (2.0 * spacing)))
    cap = max(2, 2 * int(r / (4.0 * spacing) / 2))
    return min(cells, cap) * spacing


@dataclass
class QuadrantGlueSpec:
    """Geometry of the tiled-transition competitor on a square section.

    ``quadrant_count`` selects the decomposition: 4 gives the 2x2 tiling into
    sub-squares of half-side ``r/2``; 8 gives a 2x4 tiling into congruent
    sub-rectangles. Tiles are enlarged by ``mu`` across interior seams (so
    neighbors overlap) and their centers shrink inward by ``mu/2``; the
    Burgers vector of tile ``i`` is ``(H - I) (0, c_i - c_0)`` with ``c_i``
    the shrunk centers.

    ``base`` holds the transition field used for every tile (built on the
    enlarged tile cylinder with the same spacing and axial length); ``None``
    requests the mismatch ramp.
    """

    r: float
    mu: float
    M: float
    base: DisplacementField | None = None
    quadrant_count: int = 4

    def __post_init__(self):
        if self.quadrant_count not in (4, 8):
            raise ValueError("quadrant_count must be 4 or 8")
        # r/4 keeps the enlarged tiles and wedges geometrically disjoint;
        # desk-scale grids cannot resolve overlaps below this anyway
        if not (0 < self.mu <= self.r / 4.0 + 1e-12):
            raise ValueError("overlap mu must satisfy 0 < mu <= r/4")

    @property
    def tiling(self) -> tuple[int, int]:
        return (2, 2) if self.quadrant_count == 4 else (2, 4)

    def tile_centers(self) -> np.ndarray:
        """Shrunk tile centers, shape (k2*k3, 2); index 0 is the reference."""
        k2, k3 = self.tiling
        cs = []
        for j2 in range(k2):
            for j3 in range(k3):
                cs.append([self._axis_center(j2, k2), self._axis_center(j3, k3)])
        return np.array(cs)

    def _axis_center(self, j: int, k: int) -> float:
        r, mu = self.r, self.mu
        lo = -r + 2.0 * j * r / k
        hi = lo + 2.0 * r / k
        if j > 0:
            lo -= mu
        if j < k - 1:
            hi += mu
        return 0.5 * (lo + hi)

    def tile_half_extents(self) -> tuple[float, float]:
        k2, k3 = self.tiling
        h2 = self.r / k2 + (0.0 if k2 == 1 else self.mu / 2.0)
        h3 = self.r / k3 + (0.0 if k3 == 1 else self.mu / 2.0)
        # interior tiles of a k>2 axis gain mu on both sides; enlarge all
        # tiles to the largest so every copy samples one congruent base
        if k3 > 2:
            h3 = self.r / k3 + self.mu
        if k2 > 2:
            h2 = self.r / k2 + self.mu
        return (h2, h3)

    def burgers_vectors(self, model: ElasticModel) -> np.ndarray:
        C = self.tile_centers()
        d = C - C[0]
        HmI = model.well_right - np.eye(3)
        return np.concatenate([np.zeros((len(C), 1)), d], axis=1) @ HmI.T


def _tile_axis_weights(coord, j, k, r, mu, M, x1):
    """Blend weight of tile ``j`` along one cross axis at positions
    ``coord`` (same shape as ``x1``). Outside every wedge the nominal tile
    has weight 1; inside the wedge around an interior seam the two adjacent
    tiles share bilinear weights pinched at the interface plane."""
    w = np.zeros_like(coord)
    lo = -r + 2.0 * j * r / k
    hi = lo + 2.0 * r / k
    nominal = (coord >= lo) & (coord < hi)
    if j == 0:
        nominal |= coord < lo
    if j == k - 1:
        nominal |= coord >= hi
    w[nominal] = 1.0
    tan_bar = mu / M
    for seam, side in ((lo, "lo"), (hi, "hi")):
        interior = (seam > -r + 1e-12) and (seam < r - 1e-12)
        if not interior:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.where(x1 != 0.0, (coord - seam) / (x1 * tan_bar), np.inf)
        wedge = np.abs(coord - seam) < tan_bar * np.abs(x1)
        # weight of the tile on the 'hi' side of the seam is (1 + tau)/2 for
        # x1 > 0 and (1 - tau)/2 for x1 < 0; reverse for the 'lo' side
        hi_side = np.where(x1 > 0.0, 0.5 * (1.0 + tau), 0.5 * (1.0 - tau))
        wt = hi_side if side == "lo" else 1.0 - hi_side
        w = np.where(wedge, wt, w)
    return w


def glued_quadrant_field(
    spec: QuadrantGlueSpec, grid: Grid, model: ElasticModel
) -> tuple[DisplacementField, float, dict]:
    """Assemble the tiled-transition competitor on ``(-M, M) x Q_r``.

    Returns the field (with one jump surface per non-reference tile), its
    discrete energy, and an itemized breakdown with the tile and sector
    contributions. The base transition must be resolved: ``mu`` at least two
    cells, tile centers on the cross lattice.
    """
    r, mu, M = spec.r, spec.mu, spec.M
    a = grid.spacing
    cs = grid.cross_section
    if cs.shape != "square" or abs(cs.half_extent - r) > 1e-12:
        raise ValueError("grid section must be the square of half-side r")
    if abs(grid.axial_half_length - M) > 1e-12:
        raise ValueError("grid axial half-length must equal spec.M")
    if grid.cross_scale != 1.0:
        raise ValueError("glued construction requires an isotropic grid")
    if mu < 2.0 * a - 1e-12:
        raise ValueError("overlap mu must be resolved by at least 2 cells")

    centers = spec.tile_centers()
    for c in centers.ravel():
        if abs(c / a - round(c / a)) > 1e-9:
            raise ValueError(
                "tile centers fall off the cross lattice; choose mu as an even "
                "multiple of the spacing"
            )

    h2, h3 = spec.tile_half_extents()
    base = spec.base
    if base is None:
        sub = build_grid(
            CrossSection("square", max(h2, h3)), M, a
        )
        base, _ = mismatch_ramp(RampSpec.for_model(model), sub, model)
    bgrid = base.grid
    if abs(bgrid.spacing - a) > 1e-12 or abs(bgrid.axial_half_length - M) > 1e-12:
        raise ValueError("base field grid must match spacing and axial length")
    if base.jumps:
        raise ValueError("base transition field must be jump-free")

    H = model.well_right
    eye = np.eye(3)
    X = grid.node_positions
    x1 = X[..., 0]
    right = x1 > 0.0  # plane nodes carry the left branch

    k2, k3 = spec.tiling
    n_tiles = len(centers)
    bvecs = spec.burgers_vectors(model)

    # nodal index offset of each tile's sampling window inside the base grid
    values = np.zeros(grid.node_shape + (3,))
    weight_sum = np.zeros(grid.node_shape)
    w2_all, w3_all = [], []
    for j2 in range(k2):
        w2_all.append(
            _tile_axis_weights(X[..., 1], j2, k2, r, mu, M, x1)
        )
    for j3 in range(k3):
        w3_all.append(
            _tile_axis_weights(X[..., 2], j3, k3, r, mu, M, x1)
        )

    for t in range(n_tiles):
        j2, j3 = divmod(t, k3)
        c = centers[t]
        w = w2_all[j2] * w3_all[j3]
        sel = w > 0.0
        if not np.any(sel):
            continue
        # sample the base at x - (0, c): exact nodal correspondence
        off2 = int(round((grid.cross_nodes[0] - c[0] - bgrid.cross_nodes[0]) / a))
        off3 = int(round((grid.cross_nodes[0] - c[1] - bgrid.cross_nodes[0]) / a))
        idx = np.nonzero(sel)
        i2 = idx[1] + off2
        i3 = idx[2] + off3
        if i2.min() < 0 or i2.max() >= bgrid.n2 + 1 or i3.min() < 0 or i3.max() >= bgrid.n3 + 1:
            raise ValueError("tile sampling window leaves the base grid")
        yb = bgrid.node_positions[idx[0], i2, i3] + base.values[idx[0], i2, i3]
        shift = np.array([0.0, c[0], c[1]])
        tile_vals = np.where(
            right[idx][:, None],
            yb + (H @ shift - H @ np.array([0.0, centers[0][0], centers[0][1]])
                  + np.array([0.0, centers[0][0], centers[0][1]])),
            yb + shift,
        )
        values[idx] += w[idx][:, None] * tile_vals
        weight_sum[idx] += w[idx]

    if not np.allclose(weight_sum, 1.0, rtol=0, atol=1e-9):
        raise RuntimeError("tile weights do not partition unity")
    values -= X  # displacement

    # jump surfaces: nominal (unextended) tiles, skipping the reference
    jumps = []
    c2g, c3g = np.meshgrid(grid.cross_centers, grid.cross_centers, indexing="ij")
    for t in range(1, n_tiles):
        j2, j3 = divmod(t, k3)
        lo2 = -r + 2.0 * j2 * r / k2
        lo3 = -r + 2.0 * j3 * r / k3
        sel = (
            (c2g >= lo2) & (c2g < lo2 + 2.0 * r / k2)
            & (c3g >= lo3) & (c3g < lo3 + 2.0 * r / k3)
        )
        faces = np.argwhere(sel & grid.mask2d)
        if np.linalg.norm(bvecs[t]) > 0.0:
            jumps.append(DislocationSpec.from_jump(bvecs[t], faces))

    fld = DisplacementField(grid, values, tuple(jumps))
    energy = total_energy(fld, model)

    # itemization: sector = cells whose centers lie in a wedge
    cc1 = grid.axial_centers[:, None, None]
    cc2 = c2g[None, :, :]
    cc3 = c3g[None, :, :]
    tan_bar = mu / M
    sector2 = np.zeros(grid.cell_shape, dtype=bool)
    sector3 = np.zeros(grid.cell_shape, dtype=bool)
    for j in range(1, k2):
        seam = -r + 2.0 * j * r / k2
        sector2 |= np.abs(cc2 - seam) < tan_bar * np.abs(cc1)
    for j in range(1, k3):
        seam = -r + 2.0 * j * r / k3
        sector3 |= np.abs(cc3 - seam) < tan_bar * np.abs(cc1)
    W = cellwise_density(fld, model) * grid.cell_volume
    breakdown = {
        "total": energy,
        "sector_w1": float(W[sector2 & ~sector3].sum()),
        "sector_w2": float(W[sector3 & ~sector2].sum()),
        "sector_overlap": float(W[sector2 & sector3].sum()),
        "quadrants": float(W[~(sector2 | sector3)].sum()),
        "burgers": [list(map(float, b)) for b in bvecs],
        "mu": mu,
    }
    return fld, energy, breakdown


# ---------------------------------------------------------------------------
# recovery sequence
# ---------------------------------------------------------------------------


@dataclass
class RecoverySpec:
    """Piecewise-constant rotation profile rendered at thickness ``h``.

    ``left_rotations`` holds ``R_0..R_n`` (the profile on ``(-L, 0)`` with
    jumps at ``left_breaks``); ``right_rotations`` holds the rotation parts
    of ``S_0..S_k = R H``. ``block`` is a stored clamped transition from
    ``R_n`` to ``S_0 = (right_rotations[0]) H`` on its own rod grid, with its
    recorded energy. ``sigma_h`` is the half-width of every transition band.
    """

    L: float
    h: float
    sigma_h: float
    left_rotations: list
    right_rotations: list
    block: DisplacementField
    block_energy: float
    left_breaks: list = field(default_factory=list)
    right_breaks: list = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.h < self.sigma_h):
            raise ValueError("need h < sigma_h (separation of scales)")
        if self.sigma_h / self.h < 2.0:
            raise ValueError("sigma_h/h must be at least 2 to contain the block")
        if self.sigma_h >= self.L / 2.0:
            raise ValueError("sigma_h too large for the axial length")
        if len(self.left_rotations) != len(self.left_breaks) + 1:
            raise ValueError("need one more left rotation than left breaks")
        if len(self.right_rotations) != len(self.right_breaks) + 1:
            raise ValueError("need one more right rotation than right breaks")
        for R in list(self.left_rotations) + list(self.right_rotations):
            if not is_rotation(np.asarray(R, float), tol=1e-9):
                raise ValueError("profile matrices must be proper rotations")
        breaks = [-self.L] + list(self.left_breaks) + [0.0] + list(self.right_breaks) + [self.L]
        if np.any(np.diff(breaks) <= 2.0 * self.sigma_h - 1e-12):
            raise ValueError("profile pieces too short for the transition bands")


def rotation_path(R0: np.ndarray, R1: np.ndarray, t: float) -> np.ndarray:
    """Geodesic rotation path with exact endpoints.

    For a relative rotation by exactly pi the axis choice follows the
    deterministic branch rule of the logarithm (largest diagonal, fixed
    signs).
    """
    R0 = np.asarray(R0, float)
    R1 = np.asarray(R1, float)
    if not is_rotation(R0, 1e-9) or not is_rotation(R1, 1e-9):
        raise ValueError("rotation_path endpoints must be proper rotations")
    return geodesic(R0, R1, float(t))


def _band_values(grid, lo_i, hi_i, P0, P1, h, substeps=8):
    """Nodal deformation in a rotation band: axial geodesic integral plus the
    rotated thin cross term. Returns values for axial node slice lo_i..hi_i."""
    x1 = grid.axial_nodes[lo_i : hi_i + 1]
    n = len(x1)
    span = x1[-1] - x1[0]
    Ps = [rotation_path(P0, P1, (x - x1[0]) / span) for x in x1]
    # cumulative integral of P(s) e1 ds by fine trapezoid
    integral = np.zeros((n, 3))
    acc = np.zeros(3)
    for k in range(1, n):
        ts = np.linspace((x1[k - 1] - x1[0]) / span, (x1[k] - x1[0]) / span, substeps + 1)
        vals = np.stack([rotation_path(P0, P1, t)[:, 0] for t in ts])
        acc = acc + _trapezoid(vals, dx=(x1[k] - x1[k - 1]) / substeps, axis=0)
        integral[k] = acc
    X = grid.node_positions[lo_i : hi_i + 1]
    cross = np.stack([np.zeros_like(X[..., 1]), h * X[..., 1], h * X[..., 2]], axis=-1)
    Parr = np.stack(Ps)  # (n, 3, 3)
    vals = integral[:, None, None, :] + np.einsum("nij,nabj->nabi", Parr, cross)
    return vals


def recovery_sequence(
    spec: RecoverySpec, grid: Grid, model: ElasticModel
) -> tuple[DisplacementField, float, dict]:
    """Assemble the thin-rod recovery field on ``(-L, L) x S`` and return the
    rescaled energy ``(1/h) I_h`` computed with the thin column rule.

    Region boundaries snap to grid planes; the additive constants of each
    region are solved left to right by matching nodal traces on the shared
    plane, and a residual trace mismatch above 1e-10 is an error.
    """
    h = spec.h
    bgrid = spec.block.grid
    if abs(grid.axial_half_length - spec.L) > 1e-12:
        raise ValueError("grid axial half-length must equal spec.L")
    # cross grids must conform (same section, cross spacing = block spacing)
    if grid.node_shape[1:] != bgrid.node_shape[1:]:
        raise ValueError("grid cross nodes must match the block grid")
    if abs(grid.spacings[1] - bgrid.spacings[1]) > 1e-12:
        raise ValueError("grid cross spacing must match the block grid")
    sigma_i = max(1, int(round(spec.sigma_h / grid.spacing)))
    if sigma_i * grid.spacing / h < bgrid.axial_half_length - 1e-9:
        raise ValueError(
            "sigma_h/h must cover the block transition length "
            f"({sigma_i * grid.spacing / h:.3g} < {bgrid.axial_half_length:.3g})"
        )

    H = model.well_right

    # the stored block must transition between the profile's inner matrices
    from .fields import strain as _strain

    bG = _strain(spec.block).G
    gl = bG[0, bgrid.n2 // 2, bgrid.n3 // 2]
    gr = bG[-1, bgrid.n2 // 2, bgrid.n3 // 2]
    Rn = np.asarray(spec.left_rotations[-1], float)
    S0 = np.asarray(spec.right_rotations[0], float) @ H
    if np.max(np.abs(gl - Rn)) > 1e-8 or np.max(np.abs(gr - S0)) > 1e-8:
        raise ValueError(
            "block far fields do not match the profile: the block must lie in "
            "the transition class between the last left matrix and the first "
            "right matrix"
        )

    def axial_index(x):
        return int(round((x + spec.L) / grid.spacing))

    # region list: (kind, payload, lo_node, hi_node), contiguous
    regions = []
    lefts = [-spec.L] + [float(b) for b in spec.left_breaks]
    for i, R in enumerate(spec.left_rotations):
        lo = axial_index(lefts[i] + (spec.sigma_h if i > 0 else 0.0))
        hi = axial_index(
            (lefts[i + 1] - spec.sigma_h) if i + 1 < len(lefts) else -spec.sigma_h
        )
        if i > 0:
            regions.append(("band", (spec.left_rotations[i - 1], R), band_lo, lo))
        regions.append(("piece", np.asarray(R, float), lo, hi))
        band_lo = hi
    regions.append(("block", None, axial_index(-spec.sigma_h), axial_index(spec.sigma_h)))
    rights = [float(b) for b in spec.right_breaks] + [spec.L]
    band_lo = axial_index(spec.sigma_h)
    for j, Rr in enumerate(spec.right_rotations):
        S = np.asarray(Rr, float) @ H
        lo = axial_index((spec.right_breaks[j - 1] + spec.sigma_h) if j > 0 else spec.sigma_h)
        hi = axial_index(rights[j] - spec.sigma_h) if j < len(rights) - 1 else grid.n1
        if j > 0:
            regions.append(
                ("band", (np.asarray(spec.right_rotations[j - 1], float) @ H,
                          S), band_lo, lo)
            )
        regions.append(("piece", S, lo, hi))
        band_lo = hi

    X = grid.node_positions
    values = np.empty(grid.node_shape + (3,))

    def piece_values(P, lo, hi):
        Xs = X[lo : hi + 1]
        pts = np.stack(
            [Xs[..., 0], h * Xs[..., 1], h * Xs[..., 2]], axis=-1
        )
        return pts @ np.asarray(P, float).T

    def block_values(lo, hi):
        # y = h * v(x1/h, x'): linear interpolation of the stored block
        # deformation along its axis (cross nodes coincide by construction);
        # outside the block grid the affine far fields continue the values
        z = grid.axial_nodes[lo : hi + 1] / h
        zc = np.clip(z, bgrid.axial_nodes[0], bgrid.axial_nodes[-1])
        zi = np.clip((zc - bgrid.axial_nodes[0]) / bgrid.spacing, 0.0, bgrid.n1 - 1e-12)
        k0 = np.floor(zi).astype(int)
        tz = zi - k0
        yb = bgrid.node_positions + spec.block.values
        v0 = yb[k0]
        v1 = yb[k0 + 1]
        vals = (1.0 - tz)[:, None, None, None] * v0 + tz[:, None, None, None] * v1
        over = z - zc  # nonzero only beyond the block grid
        vals = vals + np.where(over < 0, over, 0.0)[:, None, None, None] * Rn[:, 0]
        vals = vals + np.where(over > 0, over, 0.0)[:, None, None, None] * S0[:, 0]
        return h * vals

    solved = []
    offset = np.zeros(3)
    prev_vals = None
    prev_hi = None
    mism = 0.0
    for kind, payload, lo, hi in regions:
        if hi < lo:
            raise ValueError("region collapsed: sigma_h too large for the profile")
        if kind == "piece":
            vals = piece_values(payload, lo, hi)
        elif kind == "block":
            vals = block_values(lo, hi)
        else:
            vals = _band_values(grid, lo, hi, payload[0], payload[1], h)
        if prev_vals is None:
            offset = np.zeros(3)
        else:
            diff = prev_vals[-1] - vals[0]
            offset = diff.reshape(-1, 3).mean(axis=0)
            mism = max(mism, float(np.max(np.abs(diff - offset))))
        vals = vals + offset
        solved.append((kind, lo, hi, vals))
        prev_vals = vals
        prev_hi = hi

    if mism > 1e-10:
        raise ValueError(f"inconsistent block traces: mismatch {mism:.3e} > 1e-10")

    for kind, lo, hi, vals in solved:
        values[lo : hi + 1] = vals
    values -= X

    # the block may carry a dislocation: rescale its jump surfaces by h
    jumps = tuple(
        DislocationSpec.from_jump(h * s.burgers, s.faces, s.curve)
        for s in spec.block.jumps
    )
    fld = DisplacementField(grid, values, jumps)
    energy = total_energy(fld, model, thin_h=h)

    W = cellwise_density(fld, model, thin_h=h) * grid.cell_volume / h
    cc = grid.axial_centers
    band_mask = np.zeros(grid.n1, dtype=bool)
    block_mask = np.zeros(grid.n1, dtype=bool)
    for kind, lo, hi, _ in solved:
        sel = (np.arange(grid.n1) >= lo) & (np.arange(grid.n1) < hi)
        if kind == "band":
            band_mask |= sel
        elif kind == "block":
            block_mask |= sel
    breakdown = {
        "total": float(energy),
        "block": float(W[block_mask].sum()),
        "bands": float(W[band_mask].sum()),
        "pieces": float(W[~(band_mask | block_mask)].sum()),
        "block_energy_recorded": float(spec.block_energy),
        "h": h,
        "sigma_h": spec.sigma_h,
    }
    return fld, float(energy), breakdown
