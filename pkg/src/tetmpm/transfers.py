"""Particle/grid transfers and the per-object background grid.

P2G scatters mass and momentum (plus the APIC affine term), internal forces
come from per-particle stress contracted with kernel gradients, and G2P
gathers velocities back and advances positions and deformation gradients.
Gravity is applied as a nodal force, not per particle.
"""

from enum import Enum

import numpy as np

from .kernels import KernelType, stencil_batch

MASS_EPS_REL = 1e-12  # active-node mass threshold, relative to the max nodal mass


class TransferType(str, Enum):
    BASIC = "basic"
    APIC = "apic"
    MLS = "mls"


class Grid:
    """Uniform background grid for one object.

    Nodes are indexed flat in C order.  After finalize(), ``active_map``
    sends flat node indices to dense DOF slots (-1 for inactive nodes).
    """

    def __init__(self, spacing: float, origin, dims):
        self.spacing = float(spacing)
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.dims = tuple(int(d) for d in dims)
        n = self.dims[0] * self.dims[1] * self.dims[2]
        self.node_count = n
        self.node_mass = np.zeros(n)
        self.node_momentum = np.zeros((n, 3))
        self.node_velocity = np.zeros((n, 3))
        self.node_force_int = np.zeros((n, 3))
        self.node_force_ext = np.zeros((n, 3))
        self.active_map = np.full(n, -1, dtype=np.int64)
        self.active_nodes = np.empty(0, dtype=np.int64)
        self._interior_cache = {}

    def clear(self):
        self.node_mass[:] = 0.0
        self.node_momentum[:] = 0.0
        self.node_velocity[:] = 0.0
        self.node_force_int[:] = 0.0
        self.node_force_ext[:] = 0.0
        self.active_map[:] = -1
        self.active_nodes = np.empty(0, dtype=np.int64)

    def node_positions(self, flat_idx: np.ndarray) -> np.ndarray:
        flat_idx = np.asarray(flat_idx)
        nyz = self.dims[1] * self.dims[2]
        i = flat_idx // nyz
        j = (flat_idx % nyz) // self.dims[2]
        k = flat_idx % self.dims[2]
        return self.origin + self.spacing * np.stack(
            [i.astype(float), j.astype(float), k.astype(float)], axis=-1
        )

    def finalize(self, boundary_layers: int = 0):
        """Pick active nodes and compute nodal velocities from momentum."""
        mmax = self.node_mass.max() if self.node_mass.size else 0.0
        active = self.node_mass > MASS_EPS_REL * mmax
        if boundary_layers > 0:
            interior = self._interior_cache.get(boundary_layers)
            if interior is None:
                nx, ny, nz = self.dims
                ii, jj, kk = np.unravel_index(np.arange(self.node_count), self.dims)
                interior = (
                    (ii >= boundary_layers) & (ii < nx - boundary_layers)
                    & (jj >= boundary_layers) & (jj < ny - boundary_layers)
                    & (kk >= boundary_layers) & (kk < nz - boundary_layers)
                )
                self._interior_cache[boundary_layers] = interior
            active &= interior
        self.active_nodes = np.flatnonzero(active)
        self.active_map[:] = -1
        self.active_map[self.active_nodes] = np.arange(len(self.active_nodes))
        self.node_velocity[:] = 0.0
        self.node_velocity[self.active_nodes] = (
            self.node_momentum[self.active_nodes]
            / self.node_mass[self.active_nodes, None]
        )

    @property
    def active_count(self) -> int:
        return len(self.active_nodes)

    def set_active_velocity(self, v_flat: np.ndarray):
        self.node_velocity[:] = 0.0
        self.node_velocity[self.active_nodes] = v_flat.reshape(-1, 3)

    def active_velocity(self) -> np.ndarray:
        return self.node_velocity[self.active_nodes].ravel()


def apic_inertia(pts, grid, kernel: KernelType, sten=None) -> np.ndarray:
    """Per-particle affine inertia D_p (n, 3, 3).

    Closed form (h^2/4) I for the quadratic B-spline; assembled explicitly
    for the linear kernel, where it varies with the cell-relative position.
    """
    n = len(pts)
    if kernel == KernelType.QUADRATIC:
        return np.broadcast_to(0.25 * grid.spacing ** 2 * np.eye(3), (n, 3, 3))
    idx, w, _ = sten if sten is not None else stencil_batch(pts.x, kernel, grid)
    dx = grid.node_positions(idx) - pts.x[:, None, :]
    return np.einsum("ns,nsa,nsb->nab", w, dx, dx)


def p2g(pts, grid: Grid, kernel: KernelType, transfer: TransferType, sten=None):
    """Scatter particle mass and momentum to the grid (grid must be cleared)."""
    if sten is None:
        sten = stencil_batch(pts.x, kernel, grid)
    idx, w, _ = sten
    np.add.at(grid.node_mass, idx.ravel(), (pts.mass[:, None] * w).ravel())
    mom = pts.mass[:, None, None] * w[..., None] * pts.v[:, None, :]
    if transfer in (TransferType.APIC, TransferType.MLS):
        dx = grid.node_positions(idx) - pts.x[:, None, :]
        mom += pts.mass[:, None, None] * w[..., None] * np.einsum(
            "nab,nsb->nsa", pts.affine, dx
        )
    np.add.at(grid.node_momentum, idx.ravel(), mom.reshape(-1, 3))
    return sten


def internal_forces(pts, grid: Grid, kernel: KernelType, sten=None) -> np.ndarray:
    """Accumulate f_int = -sum_p V_p P_p grad(N) onto the grid; returns the array.

    Particle stresses must already be stored in ``pts.stress``.
    """
    if sten is None:
        sten = stencil_batch(pts.x, kernel, grid)
    idx, _, gw = sten
    contrib = -pts.volume[:, None, None] * np.einsum("nab,nsb->nsa", pts.stress, gw)
    np.add.at(grid.node_force_int, idx.ravel(), contrib.reshape(-1, 3))
    return grid.node_force_int


def g2p(grid: Grid, pts, kernel: KernelType, transfer: TransferType, dt: float, sten=None):
    """Gather grid velocities, advect particles, advance deformation gradients.

    Velocity gradients follow the plain kernel-gradient sum; the MLS variant
    reconstructs them from the affine moment matrix instead.  The elastic
    gradient receives the same trial update as the total gradient; plastic
    projection happens afterwards in the driver.
    """
    if sten is None:
        sten = stencil_batch(pts.x, kernel, grid)
    idx, w, gw = sten
    v_nodes = grid.node_velocity[idx]  # (n, S, 3)
    v_new = np.einsum("ns,nsa->na", w, v_nodes)

    if transfer == TransferType.MLS:
        dx = grid.node_positions(idx) - pts.x[:, None, :]
        L = np.einsum("ns,nsa,nsb->nab", w, v_nodes, dx) * (4.0 / grid.spacing ** 2)
        pts.affine = L.copy()
    else:
        L = np.einsum("nsa,nsb->nab", v_nodes, gw)
        if transfer == TransferType.APIC:
            dx = grid.node_positions(idx) - pts.x[:, None, :]
            B = np.einsum("ns,nsa,nsb->nab", w, v_nodes, dx)
            D = apic_inertia(pts, grid, kernel, sten)
            if kernel == KernelType.QUADRATIC:
                pts.affine = B * (4.0 / grid.spacing ** 2)
            else:
                pts.affine = np.einsum("nab,nbc->nac", B, np.linalg.pinv(D))

    growth = np.eye(3) + dt * L
    pts.F = np.einsum("nab,nbc->nac", growth, pts.F)
    pts.F_elastic = np.einsum("nab,nbc->nac", growth, pts.F_elastic)
    pts.v = v_new
    pts.x = pts.x + dt * v_new
    return L
