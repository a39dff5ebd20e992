"""Hyperelastic material laws, their exact tangents, and plastic projections.

Stress is the first Piola-Kirchhoff tensor P(F).  Tangents are the full
3x3x3x3 derivatives dP/dF, laid out as T[c, d, a, b] = dP_cd / dF_ab; they
are analytic (the corotational rotation derivative comes from a closed-form
3x3 solve, not finite differences).

Plasticity uses the multiplicative split F = F_elastic * F_plastic.  The
projections return the new elastic part together with the updated plastic
part so the split stays exact.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NonInvertibleError

_EYE = np.eye(3)


class MaterialLaw(str, Enum):
    LINEAR = "linear"
    STVK = "stvk"
    COROTATIONAL = "corotational"
    NEOHOOKEAN = "neohookean"


class Plasticity(str, Enum):
    NONE = "none"
    DEVIATORIC_ERASER = "deviatoric_eraser"
    BOX_CLAMP = "box_clamp"


@dataclass
class MaterialParams:
    """Material description for one body.

    theta_c / theta_s are the compression and stretch limits of the
    box-clamp plasticity (fractions of unit stretch) and are required only
    when plasticity is BOX_CLAMP.
    """

    law: MaterialLaw = MaterialLaw.NEOHOOKEAN
    youngs_modulus: float = 1.0e5
    poisson_ratio: float = 0.3
    density: float = 1000.0
    plasticity: Plasticity = Plasticity.NONE
    theta_c: float = field(default=0.0)
    theta_s: float = field(default=0.0)

    def __post_init__(self):
        self.law = MaterialLaw(self.law)
        self.plasticity = Plasticity(self.plasticity)
        if self.youngs_modulus <= 0:
            raise ValueError("youngs_modulus must be positive")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in [0, 0.5)")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.plasticity == Plasticity.BOX_CLAMP:
            if not 0 < self.theta_c < 1:
                raise ValueError("theta_c must lie in (0, 1)")
            if self.theta_s <= 0:
                raise ValueError("theta_s must be positive")

    @property
    def lame_mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        e, nu = self.youngs_modulus, self.poisson_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


@dataclass
class StressEval:
    P: np.ndarray                 # (3, 3)
    tangent: np.ndarray | None    # (3, 3, 3, 3) or None
    J: float
    energy: float


def proper_svd(F: np.ndarray):
    """SVD with rotation factors: det(U) = det(V) = +1.

    Sign flips go into the last singular value, so U @ diag(s) @ Vt == F and
    s[2] carries the sign of det(F).  Works on (..., 3, 3) stacks.
    """
    U, s, Vt = np.linalg.svd(F)
    U, s, Vt = U.copy(), s.copy(), Vt.copy()
    flip = np.linalg.det(U) < 0
    U[..., :, 2] = np.where(flip[..., None], -U[..., :, 2], U[..., :, 2])
    s[..., 2] = np.where(flip, -s[..., 2], s[..., 2])
    flip = np.linalg.det(Vt) < 0
    Vt[..., 2, :] = np.where(flip[..., None], -Vt[..., 2, :], Vt[..., 2, :])
    s[..., 2] = np.where(flip, -s[..., 2], s[..., 2])
    return U, s, Vt


def _axial(M: np.ndarray) -> np.ndarray:
    # axial vector of the skew part of M, batched over leading dims
    return 0.5 * np.stack(
        [
            M[..., 2, 1] - M[..., 1, 2],
            M[..., 0, 2] - M[..., 2, 0],
            M[..., 1, 0] - M[..., 0, 1],
        ],
        axis=-1,
    )


def _cross_matrix(w: np.ndarray) -> np.ndarray:
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def _rotation_derivative(F: np.ndarray, R: np.ndarray, S: np.ndarray) -> np.ndarray:
    """dR/dF for the polar decomposition F = R S, batched.

    Uses the identity axial(W S + S W) = (tr(S) I - S) w for skew W with
    axial vector w; one 3x3 solve per perturbation direction.
    Returns (..., 3, 3, 3, 3) with layout [c, d, a, b] = dR_cd / dF_ab.
    """
    lead = F.shape[:-2]
    G = np.trace(S, axis1=-2, axis2=-1)[..., None, None] * _EYE - S
    dR = np.zeros(lead + (3, 3, 3, 3))
    for a in range(3):
        for b in range(3):
            dF = np.zeros((3, 3))
            dF[a, b] = 1.0
            M = np.swapaxes(R, -1, -2) @ dF  # R^T dF
            w = np.linalg.solve(G, 2.0 * _axial(M)[..., None])[..., 0]
            dR[..., :, :, a, b] = R @ _cross_matrix(w)
    return dR


def stress_batch(F: np.ndarray, material: MaterialParams, with_tangent: bool = True,
                 fixed_rotation: bool = False):
    """P and (optionally) dP/dF for a stack of deformation gradients.

    Returns (P (n,3,3), T (n,3,3,3,3) or None, J (n,), energy (n,)).
    """
    F = np.asarray(F, dtype=float)
    squeeze = F.ndim == 2
    if squeeze:
        F = F[None]
    n = F.shape[0]
    mu, lam = material.lame_mu, material.lame_lambda
    J = np.linalg.det(F)
    Ft = np.swapaxes(F, -1, -2)
    T = None

    if material.law == MaterialLaw.LINEAR:
        eps = 0.5 * (F + Ft) - _EYE
        trace = np.trace(F, axis1=-2, axis2=-1) - 3.0
        P = mu * (F + Ft - 2.0 * _EYE) + lam * trace[:, None, None] * _EYE
        energy = mu * np.einsum("nij,nij->n", eps, eps) + 0.5 * lam * trace ** 2
        if with_tangent:
            I4 = np.einsum("ca,db->cdab", _EYE, _EYE)
            I4t = np.einsum("cb,da->cdab", _EYE, _EYE)
            II = np.einsum("cd,ab->cdab", _EYE, _EYE)
            T = np.broadcast_to(mu * (I4 + I4t) + lam * II, (n, 3, 3, 3, 3)).copy()

    elif material.law == MaterialLaw.STVK:
        E = 0.5 * (Ft @ F - _EYE)
        trE = np.trace(E, axis1=-2, axis2=-1)
        S = 2.0 * mu * E + lam * trE[:, None, None] * _EYE
        P = F @ S
        energy = mu * np.einsum("nij,nij->n", E, E) + 0.5 * lam * trE ** 2
        if with_tangent:
            T = np.zeros((n, 3, 3, 3, 3))
            # delta_ca S_bd
            T += np.einsum("ca,nbd->ncdab", _EYE, S)
            # mu (F_cb F_ad + (F F^T)_ca delta_db)
            T += mu * np.einsum("ncb,nad->ncdab", F, F)
            FFt = F @ Ft
            T += mu * np.einsum("nca,db->ncdab", FFt, _EYE)
            # lam F_cd F_ab
            T += lam * np.einsum("ncd,nab->ncdab", F, F)

    elif material.law == MaterialLaw.NEOHOOKEAN:
        if np.any(J <= 0):
            raise NonInvertibleError("neohookean stress needs det(F) > 0")
        Finv = np.linalg.inv(F)
        FinvT = np.swapaxes(Finv, -1, -2)
        logJ = np.log(J)
        P = mu * (F - FinvT) + lam * logJ[:, None, None] * FinvT
        I1 = np.einsum("nij,nij->n", F, F)
        energy = 0.5 * mu * (I1 - 3.0) - mu * logJ + 0.5 * lam * logJ ** 2
        if with_tangent:
            T = mu * np.einsum("ca,db->cdab", _EYE, _EYE)[None] + np.zeros((n, 3, 3, 3, 3))
            coeff = (mu - lam * logJ)[:, None, None, None, None]
            T += coeff * np.einsum("nad,ncb->ncdab", FinvT, FinvT)
            T += lam * np.einsum("ncd,nab->ncdab", FinvT, FinvT)

    elif material.law == MaterialLaw.COROTATIONAL:
        U, s, Vt = proper_svd(F)
        R = U @ Vt
        S = np.swapaxes(R, -1, -2) @ F
        trRF = np.trace(S, axis1=-2, axis2=-1) - 3.0
        P = 2.0 * mu * (F - R) + lam * trRF[:, None, None] * R
        D = F - R
        energy = mu * np.einsum("nij,nij->n", D, D) + 0.5 * lam * trRF ** 2
        if with_tangent:
            I4 = np.einsum("ca,db->cdab", _EYE, _EYE)
            if fixed_rotation:
                T = 2.0 * mu * np.broadcast_to(I4, (n, 3, 3, 3, 3)).copy()
                T += lam * np.einsum("ncd,nab->ncdab", R, R)
            else:
                dR = _rotation_derivative(F, R, S)
                T = 2.0 * mu * (I4[None] - dR)
                # d(tr(R^T F)) = dR : F + R : dF
                dtr = np.einsum("nij,nijab->nab", F, dR) + R
                T += lam * np.einsum("nab,ncd->ncdab", dtr, R)
                T += lam * trRF[:, None, None, None, None] * dR
    else:  # pragma: no cover
        raise ValueError(f"unknown material law {material.law}")

    if squeeze:
        return P[0], (None if T is None else T[0]), J[0], energy[0]
    return P, T, J, energy


def stress(F_elastic: np.ndarray, material: MaterialParams, with_tangent: bool = True,
           fixed_rotation: bool = False) -> StressEval:
    """Stress evaluation for a single deformation gradient."""
    P, T, J, W = stress_batch(F_elastic, material, with_tangent, fixed_rotation)
    return StressEval(P=P, tangent=T, J=float(J), energy=float(W))


def project_tangent_batch(tangent: np.ndarray) -> np.ndarray:
    """Clamp each particle's dP/dF block to be positive semi-definite.

    Views every (3,3,3,3) tangent as a 9x9 operator on flattened matrices,
    symmetrizes it, and zeroes negative eigenvalues.  Used by the implicit
    assembly when the scene asks for a guaranteed-definite stiffness under
    strong compression.
    """
    n = tangent.shape[0]
    M = tangent.reshape(n, 9, 9)
    M = 0.5 * (M + M.transpose(0, 2, 1))
    w, Q = np.linalg.eigh(M)
    M = np.einsum("nij,nj,nkj->nik", Q, np.maximum(w, 0.0), Q)
    return M.reshape(n, 3, 3, 3, 3)


def plastic_project_batch(F_trial: np.ndarray, material: MaterialParams,
                          F_plastic_old: np.ndarray | None = None):
    """Project a stack of trial elastic gradients onto the yield surface.

    Returns (F_elastic, F_plastic_new) with
    F_elastic @ F_plastic_new == F_trial @ F_plastic_old exactly up to
    roundoff.  Raises NonInvertibleError when any det(F_trial) <= 0.
    """
    F_trial = np.asarray(F_trial, dtype=float)
    squeeze = F_trial.ndim == 2
    if squeeze:
        F_trial = F_trial[None]
    n = F_trial.shape[0]
    if F_plastic_old is None:
        F_plastic_old = np.broadcast_to(_EYE, (n, 3, 3)).copy()
    elif F_plastic_old.ndim == 2:
        F_plastic_old = F_plastic_old[None]

    if material.plasticity == Plasticity.NONE:
        Fe, Fp = F_trial.copy(), F_plastic_old.copy()
    else:
        det = np.linalg.det(F_trial)
        if np.any(det <= 0):
            raise NonInvertibleError("plastic projection needs det(F_trial) > 0")
        if material.plasticity == Plasticity.DEVIATORIC_ERASER:
            # keep only the volumetric part; plastic flow erases all shear
            Fe = det[:, None, None] ** (1.0 / 3.0) * _EYE + np.zeros((n, 3, 3))
        else:  # BOX_CLAMP
            U, s, Vt = proper_svd(F_trial)
            s = np.clip(s, 1.0 - material.theta_c, 1.0 + material.theta_s)
            Fe = (U * s[:, None, :]) @ Vt
        Fp = np.linalg.solve(Fe, F_trial @ F_plastic_old)

    if squeeze:
        return Fe[0], Fp[0]
    return Fe, Fp


def plastic_project(F_trial: np.ndarray, material: MaterialParams,
                    F_plastic_old: np.ndarray | None = None):
    """Single-gradient form of plastic_project_batch."""
    return plastic_project_batch(F_trial, material, F_plastic_old)
