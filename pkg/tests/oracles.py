"""Independent reference implementations used to cross-check the package.

Everything here favors brute force and clarity over speed: distances by
feature enumeration, overlap by exhaustive axis tests, contact solutions by
mode enumeration with full KKT verification.
"""

import itertools

import numpy as np
import scipy.optimize

_TET_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_TET_FACES = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]


def segment_segment_distance(p1, q1, p2, q2):
    """Closest distance between segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    tiny = 1e-30
    if a <= tiny and e <= tiny:
        return np.linalg.norm(p1 - p2)
    if a <= tiny:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= tiny:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > tiny else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    return np.linalg.norm((p1 + s * d1) - (p2 + t * d2))


def point_triangle_distance(p, a, b, c):
    """Distance from point p to triangle abc (Ericson's closest point)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return np.linalg.norm(p - a)
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return np.linalg.norm(p - b)
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return np.linalg.norm(p - (a + v * ab))
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return np.linalg.norm(p - c)
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return np.linalg.norm(p - (a + w * ac))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(p - (b + w * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.linalg.norm(p - (a + v * ab + w * ac))


def _seg_seg_distance_many(p1, q1, p2, q2):
    """Batched clamped segment-segment distance (non-degenerate segments)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = (d1 * d1).sum(-1)
    e = (d2 * d2).sum(-1)
    f = (d2 * r).sum(-1)
    c = (d1 * r).sum(-1)
    b = (d1 * d2).sum(-1)
    denom = a * e - b * b
    s = np.where(denom > 1e-30,
                 np.clip((b * f - c * e) / np.where(denom > 1e-30, denom, 1.0), 0.0, 1.0),
                 0.0)
    t = (b * s + f) / e
    s = np.where(t < 0.0, np.clip(-c / a, 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip((b - c) / a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    diff = (p1 + s[..., None] * d1) - (p2 + t[..., None] * d2)
    return np.linalg.norm(diff, axis=-1)


def _point_tri_distance_many(p, a, b, c):
    """Batched point-triangle distance, same region logic as the scalar form."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    q = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def fill(mask, val):
        nonlocal done
        m = mask & ~done
        q[m] = val[m]
        done = done | m

    def safe(x):
        return np.where(x == 0.0, 1.0, x)

    fill((d1 <= 0.0) & (d2 <= 0.0), a)
    fill((d3 >= 0.0) & (d4 <= d3), b)
    v = (d1 / safe(d1 - d3))[..., None]
    fill((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + v * ab)
    fill((d6 >= 0.0) & (d5 <= d6), c)
    w = (d2 / safe(d2 - d6))[..., None]
    fill((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + w * ac)
    w2 = ((d4 - d3) / safe((d4 - d3) + (d5 - d6)))[..., None]
    fill((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0), b + w2 * (c - b))
    denom = safe(va + vb + vc)[..., None]
    fill(np.ones(len(p), dtype=bool), a + (vb[..., None] / denom) * ab
         + (vc[..., None] / denom) * ac)
    return np.linalg.norm(p - q, axis=-1)


_EDGE_IDX = np.array(_TET_EDGES)
_FACE_IDX = np.array(_TET_FACES)


def tet_tet_distance(va, vb):
    """Distance between two tetrahedra by feature enumeration (0 if overlapping)."""
    if tets_overlap_sat(va, vb):
        return 0.0
    fa = va[_FACE_IDX]  # (4, 3, 3)
    fb = vb[_FACE_IDX]
    pa = np.repeat(va, 4, axis=0)
    tb = np.tile(fb, (4, 1, 1))
    best = _point_tri_distance_many(pa, tb[:, 0], tb[:, 1], tb[:, 2]).min()
    pb = np.repeat(vb, 4, axis=0)
    ta = np.tile(fa, (4, 1, 1))
    best = min(best, _point_tri_distance_many(pb, ta[:, 0], ta[:, 1], ta[:, 2]).min())
    ea0, ea1 = va[_EDGE_IDX[:, 0]], va[_EDGE_IDX[:, 1]]
    eb0, eb1 = vb[_EDGE_IDX[:, 0]], vb[_EDGE_IDX[:, 1]]
    rep = lambda x: np.repeat(x, 6, axis=0)
    til = lambda x: np.tile(x, (6, 1))
    best = min(best, _seg_seg_distance_many(rep(ea0), rep(ea1),
                                            til(eb0), til(eb1)).min())
    return float(best)


def _sat_axes(va, vb):
    """All 44 candidate separating axes: 8 face normals + 36 edge crosses."""
    fa = va[_FACE_IDX]
    fb = vb[_FACE_IDX]
    face_n = np.concatenate([
        np.cross(fa[:, 1] - fa[:, 0], fa[:, 2] - fa[:, 0]),
        np.cross(fb[:, 1] - fb[:, 0], fb[:, 2] - fb[:, 0]),
    ])
    ea = va[_EDGE_IDX[:, 1]] - va[_EDGE_IDX[:, 0]]
    eb = vb[_EDGE_IDX[:, 1]] - vb[_EDGE_IDX[:, 0]]
    crosses = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    return np.concatenate([face_n, crosses])


def _sat_overlaps(va, vb):
    """Per-axis interval overlaps for all valid normalized axes."""
    scale = max(np.abs(va).max(), np.abs(vb).max(), 1.0)
    axes = _sat_axes(va, vb)
    norms = np.linalg.norm(axes, axis=1)
    axes = axes[norms >= 1e-12 * scale] / norms[norms >= 1e-12 * scale, None]
    pa = axes @ va.T
    pb = axes @ vb.T
    return (np.minimum(pa.max(axis=1), pb.max(axis=1))
            - np.maximum(pa.min(axis=1), pb.min(axis=1))), scale


def tets_overlap_sat(va, vb) -> bool:
    """Exhaustive separating-axis test for two tetrahedra (closed sets)."""
    overlaps, scale = _sat_overlaps(va, vb)
    return bool(overlaps.min() >= -1e-12 * scale)


def sat_signed_overlap(va, vb) -> float:
    """Smallest interval overlap across all candidate separating axes.

    Positive values are the exact minimal-translation depth for overlapping
    tets; negative values certify separation (their magnitude is a lower
    bound on the distance, tight for face-type closest features).
    """
    overlaps, _ = _sat_overlaps(va, vb)
    return float(overlaps.min())


def solve_contact_modes(G, g, mu, direction_iters=300, tol=1e-10):
    """Reference NCP solution by per-contact mode enumeration.

    Modes per contact: separating (lambda = 0), sticking (sigma = 0), or
    sliding (sigma_n = 0, lambda_t = -mu lambda_n * slip direction, with the
    direction found by fixed point).  Every candidate is verified against
    the full shifted complementarity conditions; returns (lambda, sigma) of
    the first verified candidate or None.
    """
    n = len(mu)
    scale = max(np.abs(g).max(), 1.0)
    for modes in itertools.product(("sep", "stick", "slide"), repeat=n):
        out = _try_modes(G, g, mu, modes, direction_iters, tol * scale)
        if out is not None:
            return out
    return None


def _solve_given_directions(G, g, mu, modes, dirs):
    """One linear solve for the impulses once every sliding direction is fixed."""
    n = len(mu)
    M = np.zeros((3 * n, 3 * n))
    rhs = np.zeros(3 * n)
    for c, m in enumerate(modes):
        r = slice(3 * c, 3 * c + 3)
        if m == "sep":
            M[r, r] = np.eye(3)
        elif m == "stick":
            M[r, :] = G[r, :]
            rhs[r] = -g[r]
        else:
            d = dirs[c]
            # lambda_t + mu lambda_n d = 0 (two rows), sigma_n = 0
            M[3 * c, 3 * c] = 1.0
            M[3 * c, 3 * c + 2] = mu[c] * d[0]
            M[3 * c + 1, 3 * c + 1] = 1.0
            M[3 * c + 1, 3 * c + 2] = mu[c] * d[1]
            M[3 * c + 2, :] = G[3 * c + 2, :]
            rhs[3 * c + 2] = -g[3 * c + 2]
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None


def _try_modes(G, g, mu, modes, direction_iters, tol):
    n = len(mu)
    sliding = [c for c, m in enumerate(modes) if m == "slide"]
    sigma0 = g.reshape(-1, 3)
    dirs = {}
    for c in sliding:
        t = np.linalg.norm(sigma0[c, :2])
        dirs[c] = sigma0[c, :2] / t if t > 1e-14 else np.array([1.0, 0.0])

    lam = None
    converged = not sliding
    for _ in range(max(direction_iters, 1)):
        lam = _solve_given_directions(G, g, mu, modes, dirs)
        if lam is None:
            return None
        if not sliding:
            break
        sigma = (G @ lam + g).reshape(-1, 3)
        done = True
        for c in sliding:
            t = np.linalg.norm(sigma[c, :2])
            if t < 1e-14:
                return None
            d_new = sigma[c, :2] / t
            if np.linalg.norm(d_new - dirs[c]) > 1e-13:
                done = False
            # damped update: the raw fixed point can cycle with period two
            avg = dirs[c] + d_new
            norm = np.linalg.norm(avg)
            dirs[c] = avg / norm if norm > 1e-14 else d_new
        if done:
            converged = True
            break

    if not converged:
        lam = _root_find_modes(G, g, mu, modes, lam)
    if lam is None and len(sliding) == 1:
        lam = _slide_angle_scan(G, g, mu, modes, sliding[0])
    if lam is None:
        return None
    sigma = G @ lam + g
    if _verify_kkt(lam.reshape(-1, 3), sigma.reshape(-1, 3), mu, tol):
        return lam.reshape(-1, 3), sigma.reshape(-1, 3)
    return None


def _root_find_modes(G, g, mu, modes, lam0):
    """Newton-type root find on the fixed-mode equations in the impulses."""
    n = len(mu)

    def residual(lam):
        sigma = (G @ lam + g).reshape(-1, 3)
        out = np.zeros(3 * n)
        for c, m in enumerate(modes):
            r = slice(3 * c, 3 * c + 3)
            if m == "sep":
                out[r] = lam[r]
            elif m == "stick":
                out[r] = sigma[c]
            else:
                t = max(np.linalg.norm(sigma[c, :2]), 1e-30)
                d = sigma[c, :2] / t
                out[3 * c] = lam[3 * c] + mu[c] * lam[3 * c + 2] * d[0]
                out[3 * c + 1] = lam[3 * c + 1] + mu[c] * lam[3 * c + 2] * d[1]
                out[3 * c + 2] = sigma[c, 2]
        return out

    start = lam0 if lam0 is not None else np.zeros(3 * n)
    sol = scipy.optimize.root(residual, start, method="hybr", tol=1e-14)
    if not sol.success and np.abs(residual(sol.x)).max() > 1e-11 * max(np.abs(g).max(), 1.0):
        return None
    return sol.x


def _slide_angle_scan(G, g, mu, modes, c, coarse=3600):
    """Grid + bisection on the sliding angle for one sliding contact.

    Root-finds angle(sigma_T) - theta = 0 over a fine circle scan; used when
    the damped fixed point fails to settle.
    """
    def mismatch(theta):
        dirs = {c: np.array([np.cos(theta), np.sin(theta)])}
        lam = _solve_given_directions(G, g, mu, modes, dirs)
        if lam is None:
            return None, None
        sigma = (G @ lam + g).reshape(-1, 3)
        t = np.linalg.norm(sigma[c, :2])
        if t < 1e-14:
            return None, None
        err = np.arctan2(sigma[c, 1], sigma[c, 0]) - theta
        return (err + np.pi) % (2 * np.pi) - np.pi, lam

    thetas = np.linspace(-np.pi, np.pi, coarse, endpoint=False)
    errs = []
    for th in thetas:
        e, _ = mismatch(th)
        errs.append(np.nan if e is None else e)
    errs = np.array(errs)
    for k in range(coarse):
        k2 = (k + 1) % coarse
        a, b = errs[k], errs[k2]
        if np.isnan(a) or np.isnan(b) or a * b > 0 or abs(a - b) > np.pi:
            continue
        lo, hi = thetas[k], thetas[k] + 2 * np.pi / coarse
        flo = a
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            fm, lam = mismatch(mid)
            if fm is None:
                break
            if fm == 0.0 or hi - lo < 1e-15:
                return lam
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        else:
            _, lam = mismatch(0.5 * (lo + hi))
            return lam
    return None


def _verify_kkt(lam, sigma, mu, tol):
    shift = np.zeros_like(sigma)
    shift[:, 2] = mu * np.hypot(sigma[:, 0], sigma[:, 1])
    shifted = sigma + shift
    for c in range(len(mu)):
        lt = np.hypot(lam[c, 0], lam[c, 1])
        if lt > mu[c] * lam[c, 2] + tol:          # cone feasibility
            return False
        st = np.hypot(shifted[c, 0], shifted[c, 1])
        if mu[c] * st > shifted[c, 2] + tol:      # dual-cone feasibility
            return False
        if abs(lam[c] @ shifted[c]) > tol * max(1.0, lt + lam[c, 2]):
            return False
    return True
