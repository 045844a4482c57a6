"""Small dense linear algebra: batched one-sided Jacobi SVD.

Matrices handled here are at most 8x8, so a Hestenes sweep over column
pairs is cheap and keeps the norm code free of LAPACK-specific behaviour.
All routines accept a stack of matrices with shape ``(..., m, n)``.
"""

import numpy as np

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60
MAX_DIM = 8


def jacobi_svd(a, tol=JACOBI_TOL, compute_uv=True):
    """
    Singular value decomposition by one-sided Jacobi rotations.

    Parameters
    ----------
    a : array_like
        Array of shape ``(..., m, n)`` with ``m, n <= 8``.
    tol : float
        Relative orthogonality threshold between column pairs.
    compute_uv : bool
        If False only the singular values are returned.

    Returns
    -------
    u : ndarray, shape (..., m, k)
    s : ndarray, shape (..., k)
        Singular values in decreasing order, ``k = min(m, n)``.
    vt : ndarray, shape (..., k, n)
    """
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise ValueError("expected an array of matrices")
    m, n = a.shape[-2:]
    if max(m, n) > MAX_DIM:
        raise ValueError(f"matrices up to {MAX_DIM}x{MAX_DIM} supported, got {m}x{n}")
    if m < n:
        res = jacobi_svd(np.swapaxes(a, -1, -2), tol=tol, compute_uv=compute_uv)
        if not compute_uv:
            return res
        u, s, vt = res
        return np.swapaxes(vt, -1, -2), s, np.swapaxes(u, -1, -2)

    batch = a.shape[:-2]
    w = a.reshape((-1, m, n)).copy()
    v = np.broadcast_to(np.eye(n), w.shape[:1] + (n, n)).copy()
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp = w[:, :, p]
                wq = w[:, :, q]
                alpha = np.einsum("bi,bi->b", wp, wp)
                beta = np.einsum("bi,bi->b", wq, wq)
                gamma = np.einsum("bi,bi->b", wp, wq)
                active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                g = np.where(active, gamma, 1.0)
                # a huge zeta overflows to inf, which correctly gives t = 0
                with np.errstate(over="ignore"):
                    zeta = (beta - alpha) / (2.0 * g)
                    t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
                t = np.where(zeta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                cw, sw = c[:, None], s[:, None]
                new_p = cw * wp - sw * wq
                new_q = sw * wp + cw * wq
                w[:, :, p], w[:, :, q] = new_p, new_q
                vp = v[:, :, p].copy()
                vq = v[:, :, q]
                v[:, :, p] = cw * vp - sw * vq
                v[:, :, q] = sw * vp + cw * vq
        if not rotated:
            break

    sv = np.sqrt(np.einsum("bij,bij->bj", w, w))
    order = np.argsort(-sv, axis=1, kind="stable")
    sv = np.take_along_axis(sv, order, axis=1)
    if not compute_uv:
        return sv.reshape(batch + (n,))
    w = np.take_along_axis(w, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    safe = np.where(sv > 0, sv, 1.0)
    u = w / safe[:, None, :]
    # zero singular values leave u columns undefined; fill with an orthonormal completion
    for b in np.nonzero(np.any(sv <= 0, axis=1))[0]:
        u[b] = _complete_columns(u[b], sv[b] > 0)
    return (u.reshape(batch + (m, n)), sv.reshape(batch + (n,)),
            np.swapaxes(v, -1, -2).reshape(batch + (n, n)))


def _complete_columns(u, keep):
    m, n = u.shape
    basis = [u[:, j] for j in range(n) if keep[j]]
    out = u.copy()
    candidates = iter(np.eye(m))
    for j in range(n):
        if keep[j]:
            continue
        for e in candidates:
            r = e - sum(np.dot(e, b) * b for b in basis)
            nr = np.linalg.norm(r)
            if nr > 1e-8:
                out[:, j] = r / nr
                basis.append(out[:, j])
                break
    return out


def singular_values(a, tol=JACOBI_TOL):
    """Singular values of a stack of small matrices, largest first."""
    return jacobi_svd(a, tol=tol, compute_uv=False)


def random_orthogonal(n, rng):
    """Haar-distributed orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
