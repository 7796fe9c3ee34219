"""Total energy assembly and clamped minimization.

The discrete energy is one-point quadrature over masked cells,

    E(u) = (vol / h) * sum_cells W(phase(cell), F_h(G(cell))),

with the phase decided by the sign of the cell-center axial coordinate and
``F_h`` the thin rescaling (identity for ``h = 1``). Minimization runs over
nodal displacements with both end slabs clamped to affine maps: the left slab
translation is pinned to zero, the right slab translation is one extra
unknown (the admissible class fixes gradients, not translations).

The descent is limited-memory BFGS with Armijo backtracking; the nonsmooth
min in the density is handled by the quadratic-branch subgradient selection
of the material kernels. Everything is plain numpy and deterministic for a
fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fields import DisplacementField, strain
from .material import ElasticModel, density_and_gradient_batch, density_batch

__all__ = [
    "EndClamp",
    "SolverConfig",
    "MinimizationResult",
    "SolverAbort",
    "total_energy",
    "total_gradient",
    "cellwise_density",
    "minimize",
]

log = logging.getLogger("misfitrod.solver")


class SolverAbort(RuntimeError):
    """Line search hit a non-finite energy (step too large / field blow-up)."""


@dataclass(frozen=True)
class EndClamp:
    """Affine end-slab constraints: gradient ``P`` on the left slab (through
    the origin), gradient ``Q`` on the right slab with a free translation."""

    P: np.ndarray
    Q: np.ndarray
    slab_depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float).reshape(3, 3))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float).reshape(3, 3))
        if self.slab_depth < 1:
            raise ValueError("slab_depth must be at least one cell layer")


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float | None = None  # default: 1e-6 * sqrt(masked cell count)
    max_iter: int = 50_000
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    lbfgs_memory: int = 10
    num_starts: int = 3  # total starts; the first is unperturbed
    perturb_amplitude: float | None = None  # default: 1e-3 * section half-extent
    seed: int = 0
    max_backtracks: int = 60
    log_every: int = 0

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.num_starts < 1:
            raise ValueError("num_starts must be at least 1")


@dataclass
class MinimizationResult:
    energy: float
    iterations: int
    grad_norm: float
    field: DisplacementField
    converged: bool
    history: np.ndarray = field(repr=False, default=None)
    restart_energies: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# energy / gradient kernels
# ---------------------------------------------------------------------------


def _phase_indices(grid):
    mask = grid.cell_mask
    left = mask & (grid.axial_centers < 0.0)[:, None, None]
    right = mask & ~(grid.axial_centers < 0.0)[:, None, None]
    return np.nonzero(left), np.nonzero(right)


def _thin_scale(A: np.ndarray, h: float) -> np.ndarray:
    if h == 1.0:
        return A
    B = A.copy()
    B[..., 1] /= h
    B[..., 2] /= h
    return B


def total_energy(u: DisplacementField, model: ElasticModel, thin_h: float = 1.0) -> float:
    """Discrete two-phase energy; for ``thin_h < 1`` the thin-rescaled value
    ``(1/h) * sum vol * W(F_h)``."""
    grid = u.grid
    left, right = _phase_indices(grid)
    G = strain(u).G
    p = model.p
    E = 0.0
    for idx, K in ((left, model.well_left), (right, model.well_right)):
        if len(idx[0]) == 0:
            continue
        A = _thin_scale(G[idx], thin_h)
        E += float(np.sum(density_batch(A, K, p)))
    return grid.cell_volume / thin_h * E


def cellwise_density(
    u: DisplacementField, model: ElasticModel, thin_h: float = 1.0
) -> np.ndarray:
    """Per-cell density values (zero outside the section mask); the sum times
    ``vol/h`` is :func:`total_energy`."""
    grid = u.grid
    left, right = _phase_indices(grid)
    G = strain(u).G
    W = np.zeros(grid.cell_shape)
    for idx, K in ((left, model.well_left), (right, model.well_right)):
        if len(idx[0]) == 0:
            continue
        A = _thin_scale(G[idx], thin_h)
        W[idx] = density_batch(A, K, model.p)
    return W


def _energy_and_cellgrad(G, grid, model, left, right, thin_h):
    """Energy and d(energy)/dG over the full cell lattice."""
    p = model.p
    E = 0.0
    C = np.zeros(grid.cell_shape + (3, 3))
    for idx, K in ((left, model.well_left), (right, model.well_right)):
        if len(idx[0]) == 0:
            continue
        A = _thin_scale(G[idx], thin_h)
        W, dW = density_and_gradient_batch(A, K, p)
        E += float(np.sum(W))
        dW = _thin_scale(dW, thin_h)  # chain rule back to G columns
        C[idx] = dW
    pref = grid.cell_volume / thin_h
    return pref * E, pref * C


def _scatter_to_nodes(C: np.ndarray, grid) -> np.ndarray:
    """Adjoint of the per-cell average-gradient operator."""
    a1, a2, a3 = grid.spacings
    n1, n2, n3 = grid.cell_shape
    w0 = C[..., :, 0] / (4.0 * a1)
    w1 = C[..., :, 1] / (4.0 * a2)
    w2 = C[..., :, 2] / (4.0 * a3)
    gn = np.zeros(grid.node_shape + (3,))
    for e1 in (0, 1):
        s1 = 1.0 if e1 else -1.0
        for e2 in (0, 1):
            s2 = 1.0 if e2 else -1.0
            for e3 in (0, 1):
                s3 = 1.0 if e3 else -1.0
                gn[e1 : n1 + e1, e2 : n2 + e2, e3 : n3 + e3] += (
                    s1 * w0 + s2 * w1 + s3 * w2
                )
    return gn


def total_gradient(
    u: DisplacementField,
    model: ElasticModel,
    clamp: EndClamp | None = None,
    thin_h: float = 1.0,
) -> np.ndarray:
    """Exact gradient of :func:`total_energy` with respect to nodal
    displacements; entries of clamped slab nodes are zeroed when a clamp is
    given."""
    grid = u.grid
    left, right = _phase_indices(grid)
    G = strain(u).G
    _, C = _energy_and_cellgrad(G, grid, model, left, right, thin_h)
    gn = _scatter_to_nodes(C, grid)
    if clamp is not None:
        d = clamp.slab_depth
        gn[: d + 1] = 0.0
        gn[grid.n1 - d :] = 0.0
    return gn


# ---------------------------------------------------------------------------
# clamped minimization
# ---------------------------------------------------------------------------


class _Problem:
    """DOF mapping and cached assembly data for one clamped minimization."""

    def __init__(self, grid, model, clamp, jumps, thin_h):
        self.grid = grid
        self.model = model
        self.clamp = clamp
        self.jumps = tuple(jumps)
        self.thin_h = float(thin_h)
        self.left, self.right = _phase_indices(grid)

        d = clamp.slab_depth
        n1 = grid.n1
        if 2 * d >= n1:
            raise ValueError("slabs overlap: grid too short for slab_depth")
        i1 = np.arange(n1 + 1)
        self.left_nodes = i1 <= d
        self.right_nodes = i1 >= n1 - d
        free = ~(self.left_nodes | self.right_nodes)
        self.free_mask = np.zeros(grid.node_shape, dtype=bool)
        self.free_mask[free] = True
        self.n_free = int(self.free_mask.sum())

        X = grid.node_positions
        eye = np.eye(3)
        self.left_target = X[self.left_nodes] @ (clamp.P - eye).T
        self.right_affine = X[self.right_nodes] @ (clamp.Q - eye).T

    @property
    def ndof(self) -> int:
        return 3 * self.n_free + 3

    def pack(self, values: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.concatenate([values[self.free_mask].ravel(), np.asarray(t, float)])

    def expand(self, x: np.ndarray) -> np.ndarray:
        vals = np.empty(self.grid.node_shape + (3,))
        vals[self.free_mask] = x[:-3].reshape(-1, 3)
        t = x[-3:]
        vals[self.left_nodes] = self.left_target
        vals[self.right_nodes] = self.right_affine + t
        return vals

    def _strain(self, vals):
        u = DisplacementField(self.grid, vals, self.jumps)
        return strain(u).G

    def energy(self, x: np.ndarray) -> float:
        vals = self.expand(x)
        G = self._strain(vals)
        p = self.model.p
        E = 0.0
        for idx, K in ((self.left, self.model.well_left), (self.right, self.model.well_right)):
            if len(idx[0]) == 0:
                continue
            A = _thin_scale(G[idx], self.thin_h)
            E += float(np.sum(density_batch(A, K, p)))
        return self.grid.cell_volume / self.thin_h * E

    def energy_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        vals = self.expand(x)
        G = self._strain(vals)
        E, C = _energy_and_cellgrad(
            G, self.grid, self.model, self.left, self.right, self.thin_h
        )
        gn = _scatter_to_nodes(C, self.grid)
        g_t = gn[self.right_nodes].reshape(-1, 3).sum(axis=0)
        g = np.concatenate([gn[self.free_mask].ravel(), g_t])
        return E, g


def _lbfgs_descent(problem, x0, cfg, tol):
    x = x0.copy()
    E, g = problem.energy_grad(x)
    if not np.isfinite(E):
        raise SolverAbort("non-finite energy at the starting point")
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    history = [(E, gnorm)]
    buf: list[tuple[np.ndarray, np.ndarray, float]] = []
    it = 0
    converged = gnorm <= tol
    while not converged and it < cfg.max_iter:
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(buf):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if buf:
            s, y, _ = buf[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y, rho), a in zip(buf, reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        d = -q
        gd = float(g @ d)
        if gd >= 0.0:
            d = -g
            gd = -float(g @ g)
        if gd == 0.0:
            break

        if buf:
            step = 1.0
        else:
            # steepest-descent start: trial displacement of half a cell;
            # scales with the grid so homothetic problems take exactly
            # rescaled trajectories
            step = 0.5 * problem.grid.spacing / float(np.max(np.abs(d)))
        accepted = False
        for _ in range(cfg.max_backtracks):
            xt = x + step * d
            Et = problem.energy(xt)
            if not np.isfinite(Et):
                raise SolverAbort(
                    f"non-finite energy during line search (step {step:g}): "
                    "field blow-up"
                )
            if Et <= E + cfg.armijo_c * step * gd:
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            break  # at numerical floor; gradient criterion decides the flag

        _, gt = problem.energy_grad(xt)
        s = xt - x
        y = gt - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            buf.append((s, y, 1.0 / sy))
            if len(buf) > cfg.lbfgs_memory:
                buf.pop(0)
        x, E, g = xt, Et, gt
        gnorm = float(np.max(np.abs(g)))
        history.append((E, gnorm))
        it += 1
        converged = gnorm <= tol
        if cfg.log_every and it % cfg.log_every == 0:
            log.info("iter=%d energy=%.12e gnorm=%.3e", it, E, gnorm)
    return x, E, gnorm, it, converged, np.array(history)


def minimize(
    u0: DisplacementField,
    clamp: EndClamp,
    cfg: SolverConfig,
    model: ElasticModel,
    thin_h: float = 1.0,
) -> MinimizationResult:
    """Minimize the clamped energy starting from ``u0``.

    ``u0`` must satisfy the clamp on the slab nodes (the right slab up to a
    uniform translation, which becomes the extra unknown). Runs
    ``cfg.num_starts`` descents, the first from ``u0`` and the rest from
    seeded perturbations, and returns the best with all start energies
    recorded. Slab nodes match their affine targets exactly in the returned
    field.
    """
    grid = u0.grid
    problem = _Problem(grid, model, clamp, u0.jumps, thin_h)

    scale = max(1.0, float(np.max(np.abs(u0.values))))
    dl = u0.values[problem.left_nodes] - problem.left_target
    if np.max(np.abs(dl)) > 1e-8 * scale:
        raise ValueError("u0 violates the left slab clamp")
    dr = u0.values[problem.right_nodes] - problem.right_affine
    t0 = dr.reshape(-1, 3).mean(axis=0)
    if np.max(np.abs(dr - t0)) > 1e-8 * scale:
        raise ValueError("u0 violates the right slab clamp (non-affine slab)")

    x0 = problem.pack(u0.values, t0)
    tol = cfg.grad_tol
    if tol is None:
        tol = 1e-6 * np.sqrt(max(1, grid.masked_cell_count))
    amp = cfg.perturb_amplitude
    if amp is None:
        amp = 1e-3 * grid.cross_section.half_extent

    best = None
    energies = []
    for k in range(cfg.num_starts):
        if k == 0:
            xk = x0
        else:
            rng = np.random.default_rng([cfg.seed, k])
            xk = x0 + amp * rng.standard_normal(x0.shape)
        x, E, gnorm, it, conv, hist = _lbfgs_descent(problem, xk, cfg, tol)
        energies.append(E)
        if best is None or E < best[1]:
            best = (x, E, gnorm, it, conv, hist)

    x, E, gnorm, it, conv, hist = best
    out = DisplacementField(grid, problem.expand(x), u0.jumps)
    return MinimizationResult(
        energy=float(E),
        iterations=int(it),
        grad_norm=float(gnorm),
        field=out,
        converged=bool(conv),
        history=hist,
        restart_energies=energies,
    )
