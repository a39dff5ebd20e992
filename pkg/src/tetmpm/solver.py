"""Frictional impulse solve as a cone complementarity problem.

Per contact, impulses live in the friction cone K_mu and oppose the shifted
relative velocity sigma + [0, 0, mu * |sigma_t|] (the shift makes the
complementarity cone-consistent).  The global coupled problem

    K_mu  ∋  lambda  ⊥  sigma + shift(sigma)  ∈  K_mu^*,  sigma = G lambda + g

is solved by ADMM on the quadratic objective with the shift lagged: each
sweep splits into a linear solve with (G + rho I), a cone projection, a
scaled dual update, and a shift refresh.  Component order is [t1, t2, n].

The iteration runs on a per-contact equilibrated system: each contact's
three rows/columns are scaled by 1/sqrt(mean diagonal of its G block).
Friction cones are invariant under positive per-contact scaling, so the
scaled problem is the same NCP; the rescaling only equalizes the admittance
spread between light and heavy nodes so that a single proximal parameter
works for all contacts.  Residuals and the returned solution are always in
the original variables.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

logger = logging.getLogger(__name__)

RHO_ADAPT_PERIOD = 25
RHO_RATIO = 10.0
DIVERGE_FACTOR = 1e3  # residual growth over the best iterate that triggers recovery


@dataclass
class SolverResult:
    impulses: np.ndarray        # (n, 3)
    sigma: np.ndarray           # (n, 3) final relative velocities
    iterations: int
    ncp_residual: float
    primal_residual: float
    dual_residual: float
    converged: bool
    scale: float = 0.0          # residual normalization of the returned iterate


def project_cone(x: np.ndarray, mu: float) -> np.ndarray:
    """Euclidean projection of [t1, t2, n] onto the friction cone."""
    out = project_cone_many(np.asarray(x, dtype=float)[None, :], np.array([mu]))
    return out[0]


def project_cone_many(x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    mu = np.asarray(mu, dtype=float)
    t = np.hypot(x[:, 0], x[:, 1])
    zn = x[:, 2]
    inside = t <= mu * zn
    polar = mu * t + zn <= 0.0
    # surface projection coefficients
    coef_n = (mu * t + zn) / (1.0 + mu * mu)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale_t = np.where(t > 0.0, mu * coef_n / np.where(t > 0.0, t, 1.0), 0.0)
    out = np.empty_like(x)
    out[:, 0] = scale_t * x[:, 0]
    out[:, 1] = scale_t * x[:, 1]
    out[:, 2] = coef_n
    out[polar] = 0.0
    out[inside] = x[inside]
    return out


def project_dual_cone_many(x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Projection onto the dual cone (aperture 1/mu; half-space n >= 0 at mu=0)."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    mu = np.asarray(mu, dtype=float)
    out = np.empty_like(x)
    pos = mu > 0.0
    if np.any(pos):
        out[pos] = project_cone_many(x[pos], 1.0 / mu[pos])
    if np.any(~pos):
        free = x[~pos].copy()
        free[:, 2] = np.maximum(free[:, 2], 0.0)
        out[~pos] = free
    return out


def de_saxce(sigma: np.ndarray, mu: float) -> np.ndarray:
    """Normal shift [0, 0, mu * |sigma_t|] that makes the contact law a cone NCP."""
    s = np.asarray(sigma, dtype=float)
    return np.array([0.0, 0.0, mu * np.hypot(s[0], s[1])])


def de_saxce_many(sigma: np.ndarray, mu: np.ndarray) -> np.ndarray:
    out = np.zeros_like(sigma)
    out[:, 2] = mu * np.hypot(sigma[:, 0], sigma[:, 1])
    return out


def ncp_residual(lam: np.ndarray, sigma: np.ndarray, mu: np.ndarray, scale: float) -> float:
    """Max violation of cone feasibility, dual feasibility, and complementarity."""
    shifted = sigma + de_saxce_many(sigma, mu)
    r_lam = np.abs(lam - project_cone_many(lam, mu)).max(initial=0.0)
    r_sig = np.abs(shifted - project_dual_cone_many(shifted, mu)).max(initial=0.0)
    r_comp = np.abs(np.einsum("ni,ni->n", lam, shifted)).max(initial=0.0)
    return max(r_lam, r_sig, r_comp) / scale


def _problem_scale(G: np.ndarray, g: np.ndarray, z: np.ndarray) -> float:
    return _scale_from_norms(_operator_norm(G), np.abs(g).max(initial=0.0), z)


def _operator_norm(G: np.ndarray) -> float:
    """Induced infinity norm (max absolute row sum)."""
    if G.size == 0:
        return 0.0
    return float(np.abs(G).sum(axis=1).max())


def _scale_from_norms(Gnorm: float, gmax: float, z: np.ndarray) -> float:
    zmax = np.abs(z).max(initial=0.0)
    return max(gmax, Gnorm * zmax, 1e-12)


def solve(problem, tol: float = 1e-6, max_iters: int = 1000) -> SolverResult:
    """Run ADMM on one contact problem (cold start).

    Returns the last iterate when the iteration cap is hit; ``converged``
    reports whether the NCP residual reached ``tol``.
    """
    n = len(problem.mu)
    G, g, mu = problem.G, problem.g, problem.mu
    if n == 0:
        return SolverResult(
            impulses=np.zeros((0, 3)), sigma=np.zeros((0, 3)), iterations=0,
            ncp_residual=0.0, primal_residual=0.0, dual_residual=0.0, converged=True,
        )

    z = np.zeros(3 * n)
    # fast path: lambda = 0 already satisfies the NCP (all contacts separating)
    sigma0 = g.reshape(-1, 3)
    scale0 = _problem_scale(G, g, z)
    res0 = ncp_residual(z.reshape(-1, 3), sigma0, mu, scale0)
    if res0 <= tol:
        return SolverResult(
            impulses=np.zeros((n, 3)), sigma=sigma0.copy(), iterations=0,
            ncp_residual=res0, primal_residual=0.0, dual_residual=0.0, converged=True,
            scale=float(scale0),
        )

    Gnorm = _operator_norm(G)
    gmax = np.abs(g).max(initial=0.0)

    # equilibrate: unit mean diagonal per contact block
    d = np.diagonal(G).reshape(n, 3).mean(axis=1)
    e = 1.0 / np.sqrt(np.maximum(d, 1e-30))
    E = np.repeat(e, 3)
    Gs = G * (E[:, None] * E[None, :])
    gs = g * E

    rho = max(np.trace(Gs) / (3 * n), 1e-12)
    chol, rho = _factor(Gs, rho, n)
    x = np.zeros(3 * n)
    u = np.zeros(3 * n)
    s = np.zeros(3 * n)
    r_p = r_d = np.inf
    res = res0
    best_res, best_z, best_sigma = res0, z.copy(), gs.copy()
    allow_decrease = True
    impulse_bound = 1e8 * max(np.abs(gs).max(initial=0.0) / rho, 1e-12)
    scale = max(gmax, 1e-12)
    it = 0
    for it in range(1, max_iters + 1):
        x = sla.cho_solve(chol, rho * (z - u) - gs - s)
        z_prev = z
        z = project_cone_many((x + u).reshape(-1, 3), mu).ravel()
        u = u + x - z
        sigma = Gs @ z + gs
        s = de_saxce_many(sigma.reshape(-1, 3), mu).ravel()

        r_p = np.abs(x - z).max(initial=0.0)
        r_d = rho * np.abs(z - z_prev).max(initial=0.0)
        lam_orig = E * z
        scale = _scale_from_norms(Gnorm, gmax, lam_orig)
        res = ncp_residual(lam_orig.reshape(-1, 3), (sigma / E).reshape(-1, 3), mu, scale)
        # The shift refresh makes the sweep a fixed-point scheme that loses
        # contraction when rho drops too far; restart from the best iterate
        # with a stiffer penalty instead of letting it run away.  Checked
        # before the tolerance test: a runaway iterate inflates the residual
        # scale and could otherwise pass as converged.
        diverged = (
            not np.isfinite(res)
            or res > DIVERGE_FACTOR * max(best_res, tol)
            or np.abs(z).max(initial=0.0) > impulse_bound
        )
        if not diverged:
            if res < best_res:
                best_res, best_z, best_sigma = res, z.copy(), sigma.copy()
            if res <= tol:
                break
        if diverged:
            z = best_z.copy()
            u = np.zeros(3 * n)
            sigma = best_sigma.copy()
            s = de_saxce_many(sigma.reshape(-1, 3), mu).ravel()
            allow_decrease = False
            chol, rho = _factor(Gs, rho * 4.0, n)
            logger.debug("admm recovery at it=%d: rho -> %.3e", it, rho)
            continue
        if it % RHO_ADAPT_PERIOD == 0:
            if r_p > RHO_RATIO * r_d:
                rho_new = rho * 2.0
            elif allow_decrease and r_d > RHO_RATIO * r_p:
                rho_new = rho * 0.5
            else:
                rho_new = rho
            if rho_new != rho:
                u *= rho / rho_new
                chol, rho = _factor(Gs, rho_new, n)

    if res > best_res:
        z, res = best_z, best_res
        sigma = best_sigma
    else:
        sigma = Gs @ z + gs
    converged = res <= tol
    if not converged:
        logger.debug("admm hit iteration cap: residual=%.3e after %d iters", res, it)
    scale_out = _scale_from_norms(Gnorm, gmax, E * z)
    return SolverResult(
        impulses=(E * z).reshape(-1, 3).copy(),
        sigma=(sigma / E).reshape(-1, 3).copy(),
        iterations=it,
        ncp_residual=float(res),
        primal_residual=float(np.abs(E * (x - z)).max(initial=0.0) / scale),
        dual_residual=float(rho * np.abs(E * (z - z_prev)).max(initial=0.0) / scale),
        converged=bool(converged),
        scale=float(scale_out),
    )


def _factor(G: np.ndarray, rho: float, n: int):
    """Cholesky of G + rho I, raising rho tenfold on failure.

    Returns (factor, rho) so the caller keeps using the rho that was
    actually factorized.
    """
    for _ in range(4):
        try:
            return sla.cho_factor(G + rho * np.eye(3 * n), lower=True), rho
        except np.linalg.LinAlgError:
            rho *= 10.0
    raise np.linalg.LinAlgError("could not factor regularized Delassus operator")
