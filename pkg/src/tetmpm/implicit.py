"""Linearized backward-Euler velocity system for one object.

The grid momentum balance is linearized once per step around the current
configuration:

    A dv = b,   A = M + dt D + dt^2 K,   b = dt (f_ext - f_int)

with lumped mass M, Rayleigh damping D = alpha M + beta K, and stiffness K
from contracting each particle's stress tangent with its kernel gradients
through the deformation-gradient update.  A is symmetrized and factorized
once; the factorization doubles as the admittance operator that contact
resolution reuses.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationError

logger = logging.getLogger(__name__)

SHIFT_START = 1e-10
SHIFT_ATTEMPTS = 8
DENSE_DOF_LIMIT = 3000  # below this, sum K's triplets through a dense buffer


@dataclass
class SystemMatrices:
    """Assembled implicit system for one object, with its factorization."""

    mass: np.ndarray          # (ndof,) lumped
    K: sp.spmatrix            # stiffness, as assembled (not symmetrized)
    A: sp.spmatrix            # symmetrized full system
    b: np.ndarray             # (ndof,)
    dof_count: int
    shift_applied: float = 0.0
    factor_time: float = 0.0
    solve_count: int = field(default=0)
    _lu: object = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the admittance A^-1 to one rhs vector or a column block."""
        self.solve_count += 1
        return self._lu.solve(np.asarray(rhs, dtype=float))


def _particle_blocks(pts, grid, tangent, sten, lo, hi):
    """Element stiffness blocks blk[(i,c),(j,a)] for particles lo:hi.

    Per particle p and stencil nodes i, j:
        blk[(i,c),(j,a)] = V_p * T[c,d,a,b] * gradN_i[d] * (F_e^T gradN_j)[b]
    Shaped (m, S, 3, S, 3) with node axes i, j in stencil order.
    """
    _, _, gw = sten
    S = gw.shape[1]
    m = hi - lo
    g = gw[lo:hi]                                       # (m, S, 3)
    q = np.einsum("nba,nsb->nsa", pts.F_elastic[lo:hi], g)
    Tv = tangent[lo:hi] * pts.volume[lo:hi, None, None, None, None]
    Tm = Tv.transpose(0, 2, 1, 3, 4).reshape(m, 3, 27)  # d x (c,a,b)
    t1 = g @ Tm                                         # (m, S, 27)
    blk = t1.reshape(m, S * 9, 3) @ q.transpose(0, 2, 1)
    return blk.reshape(m, S, 3, 3, S).transpose(0, 1, 2, 4, 3)


def _stiffness_dense(pts, grid, tangent, sten, chunk=512):
    """K over active DOFs, summed through a dense buffer.

    Inactive stencil nodes are routed to one trash row/column that is
    sliced away at the end.
    """
    idx, _, _ = sten
    n, S = idx.shape
    N = grid.active_count
    side = 3 * N + 3
    acc = np.zeros(side * side)
    dmap = grid.active_map[idx]
    d2 = np.where(dmap < 0, N, dmap).astype(np.int64)
    comp = np.arange(3, dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        blk = _particle_blocks(pts, grid, tangent, sten, lo, hi)
        rows = 3 * d2[lo:hi, :, None, None, None] + comp[None, None, :, None, None]
        cols = 3 * d2[lo:hi, None, None, :, None] + comp[None, None, None, None, :]
        key = rows * side + cols                        # (m, S, 3, S, 3)
        acc += np.bincount(key.ravel(), weights=blk.ravel(), minlength=side * side)
    return acc.reshape(side, side)[:3 * N, :3 * N]


def _stiffness_triplets(pts, grid, tangent, sten, chunk=256):
    """COO triplets of K over active DOFs (fallback for large systems).

    Entries touching inactive nodes are dropped.
    """
    idx, _, _ = sten
    n, S = idx.shape
    dense = grid.active_map[idx]  # (n, S)
    rows_out, cols_out, vals_out = [], [], []
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        blk = _particle_blocks(pts, grid, tangent, sten, lo, hi)
        d = dense[lo:hi]                                # (m, S)
        m = hi - lo
        rows = (3 * d[:, :, None, None, None] + np.arange(3)[None, None, :, None, None])
        rows = np.broadcast_to(rows, (m, S, 3, S, 3))
        cols = (3 * d[:, None, None, :, None] + np.arange(3)[None, None, None, None, :])
        cols = np.broadcast_to(cols, (m, S, 3, S, 3))
        keep = (d[:, :, None, None, None] >= 0) & (d[:, None, None, :, None] >= 0)
        keep = np.broadcast_to(keep, (m, S, 3, S, 3))
        rows_out.append(rows[keep])
        cols_out.append(cols[keep])
        vals_out.append(blk[keep])
    return (
        np.concatenate(rows_out) if rows_out else np.empty(0, dtype=np.int64),
        np.concatenate(cols_out) if cols_out else np.empty(0, dtype=np.int64),
        np.concatenate(vals_out) if vals_out else np.empty(0),
    )


def assemble(pts, grid, dt: float, tangent: np.ndarray,
             rayleigh_alpha: float = 0.0, rayleigh_beta: float = 0.0,
             sten=None) -> SystemMatrices:
    """Assemble and factorize the velocity system for one object.

    Expects the grid to be finalized with forces accumulated
    (node_force_int / node_force_ext) and ``tangent`` to hold each
    particle's dP/dF evaluated at its current elastic gradient.
    """
    if sten is None:
        raise ValueError("assemble requires the precomputed kernel stencils")
    ndof = 3 * grid.active_count
    mass = np.repeat(grid.node_mass[grid.active_nodes], 3)

    if 0 < ndof <= DENSE_DOF_LIMIT:
        K = sp.csc_matrix(_stiffness_dense(pts, grid, tangent, sten))
    else:
        rows, cols, vals = _stiffness_triplets(pts, grid, tangent, sten)
        K = sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsc()

    coeff = rayleigh_beta * dt + dt * dt
    A = sp.diags(mass * (1.0 + dt * rayleigh_alpha)) + coeff * K
    A = 0.5 * (A + A.T)

    # node_force_int already stores the force -sum V_p P grad(N), so the
    # momentum balance adds it to the external force.
    force = grid.node_force_ext[grid.active_nodes] + grid.node_force_int[grid.active_nodes]
    b = dt * force.ravel()

    sys = SystemMatrices(mass=mass, K=K, A=A.tocsc(), b=b, dof_count=ndof)
    _factorize(sys)
    return sys


def _factorize(sys: SystemMatrices):
    """Sparse symmetric-mode LU with escalating diagonal shifts on failure."""
    t0 = time.perf_counter()
    base = sys.A
    trace = base.diagonal().sum()
    shift = 0.0
    delta = SHIFT_START
    for attempt in range(SHIFT_ATTEMPTS):
        A = base if shift == 0.0 else base + sp.identity(sys.dof_count, format="csc") * shift
        try:
            sys._lu = spla.splu(
                A.tocsc(),
                permc_spec="MMD_AT_PLUS_A",
                options={"SymmetricMode": True},
            )
            sys.shift_applied = shift
            sys.factor_time = time.perf_counter() - t0
            logger.debug(
                "factorized dofs=%d time=%.1fms shift=%g",
                sys.dof_count, 1e3 * sys.factor_time, shift,
            )
            return
        except RuntimeError:
            shift = delta * trace / max(sys.dof_count, 1)
            delta *= 2.0
    raise FactorizationError(
        f"system factorization failed after {SHIFT_ATTEMPTS} shift attempts"
    )


def free_velocity(sys: SystemMatrices, v_n: np.ndarray) -> np.ndarray:
    """Unconstrained end-of-step velocity: v_n + A^-1 b (flat, active DOFs)."""
    if sys.dof_count == 0:
        return np.zeros(0)
    return v_n.ravel() + sys.solve(sys.b)


def admittance_apply(sys: SystemMatrices, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs reusing the stored factorization."""
    return sys.solve(rhs)
