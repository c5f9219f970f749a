"""Compiled per-group loops for the marginal likelihood and its derivatives.

Everything here works on the row-stacked layout of :class:`LMEProblem`
(``offsets`` delimits groups). Ω_i⁻¹ is never formed: each group's
Cholesky factor is applied by forward substitution to the block
``[X_i | Z_i | ξ_i]``.
"""
import numba
import numpy as np

ORDER_VALUE = 0
ORDER_GRADIENT = 1
ORDER_HESSIAN = 2


@numba.njit(cache=True, nogil=True)
def _cholesky_inplace(a):
    n = a.shape[0]
    for j in range(n):
        d = a[j, j]
        for k in range(j):
            d -= a[j, k] * a[j, k]
        if not d > 0.0:
            return False
        d = np.sqrt(d)
        a[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / d
        for i in range(j):
            a[i, j] = 0.0
    return True


@numba.njit(cache=True, nogil=True)
def _forward_solve_inplace(chol, rhs):
    n = chol.shape[0]
    ncol = rhs.shape[1]
    for r in range(n):
        for k in range(r):
            lrk = chol[r, k]
            if lrk != 0.0:
                for c in range(ncol):
                    rhs[r, c] -= lrk * rhs[k, c]
        inv = 1.0 / chol[r, r]
        for c in range(ncol):
            rhs[r, c] *= inv


@numba.njit(cache=True, nogil=True)
def evaluate(x, z, y, obs_var, offsets, beta, gamma, order):
    """Returns (ok, nll, grad_beta, grad_gamma, H_bb, H_bg, H_gg, fisher).

    ``order`` selects how much is accumulated: 0 value only, 1 adds the
    gradient, 2 adds all Hessian blocks and the Fisher matrix. Arrays not
    requested are returned as zeros. ``ok`` is False when some Ω_i is not
    numerically positive definite.
    """
    p = x.shape[1]
    q = z.shape[1]
    nll = 0.0
    g_beta = np.zeros(p)
    g_gamma = np.zeros(q)
    h_bb = np.zeros((p, p))
    h_bg = np.zeros((p, q))
    h_gg = np.zeros((q, q))
    fisher = np.zeros((q, q))
    width = 1
    if order >= ORDER_GRADIENT:
        width = p + q + 1
    for i in range(offsets.shape[0] - 1):
        start = offsets[i]
        stop = offsets[i + 1]
        s = stop - start
        omega = np.zeros((s, s))
        for a in range(s):
            for b in range(a + 1):
                acc = 0.0
                for k in range(q):
                    acc += z[start + a, k] * gamma[k] * z[start + b, k]
                omega[a, b] = acc
                omega[b, a] = acc
            omega[a, a] += obs_var[start + a]
        if not _cholesky_inplace(omega):
            return False, np.inf, g_beta, g_gamma, h_bb, h_bg, h_gg, fisher
        rhs = np.empty((s, width))
        for a in range(s):
            resid = y[start + a]
            for k in range(p):
                resid -= x[start + a, k] * beta[k]
            rhs[a, width - 1] = resid
            if order >= ORDER_GRADIENT:
                for k in range(p):
                    rhs[a, k] = x[start + a, k]
                for k in range(q):
                    rhs[a, p + k] = z[start + a, k]
        _forward_solve_inplace(omega, rhs)
        for a in range(s):
            nll += 0.5 * rhs[a, width - 1] ** 2 + np.log(omega[a, a])
        if order < ORDER_GRADIENT:
            continue
        lx = np.ascontiguousarray(rhs[:, :p])
        lz = np.ascontiguousarray(rhs[:, p:p + q])
        lxi = rhs[:, width - 1]
        bz = np.zeros(q)
        for k in range(q):
            acc = 0.0
            diag = 0.0
            for a in range(s):
                acc += lz[a, k] * lxi[a]
                diag += lz[a, k] * lz[a, k]
            bz[k] = acc
            g_gamma[k] += 0.5 * (diag - acc * acc)
        for k in range(p):
            acc = 0.0
            for a in range(s):
                acc += lx[a, k] * lxi[a]
            g_beta[k] -= acc
        if order < ORDER_HESSIAN:
            continue
        zz = lz.T @ lz
        h_bb += lx.T @ lx
        xz = lx.T @ lz
        for k in range(p):
            for j in range(q):
                h_bg[k, j] += xz[k, j] * bz[j]
        for j in range(q):
            for k in range(q):
                a2 = zz[j, k] * zz[j, k]
                h_gg[j, k] += 0.5 * (2.0 * bz[j] * bz[k] * zz[j, k] - a2)
                fisher[j, k] += 0.5 * a2
    return True, nll, g_beta, g_gamma, h_bb, h_bg, h_gg, fisher
