"""Frisch-Newton interior point kernel for the fixed-effects QR linear program.

The design is Z = [X | E], where E has one nonzero per row (the indicator of
the row's unit, scaled by the row's weight).  Normal matrices Z'QZ are then
arrowheads: a dense p x p block, N diagonal entries, and a p x N border;
they are solved through the p x p Schur complement.

Rows must be grouped by unit; ``starts[i]:starts[i+1]`` are unit i's rows.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MAXITER = 1
STATUS_SINGULAR = 2


@njit(cache=True, nogil=True)
def _assemble(X, e, starts, q):
    """Blocks of Z'QZ: dense A (p x p), border C (N x p), diagonal d (N)."""
    m, p = X.shape
    n = starts.shape[0] - 1
    A = np.zeros((p, p))
    C = np.zeros((n, p))
    d = np.zeros(n)
    for i in range(n):
        for k in range(starts[i], starts[i + 1]):
            qk = q[k]
            ek = e[k]
            d[i] += qk * ek * ek
            for a in range(p):
                xa = qk * X[k, a]
                C[i, a] += xa * ek
                for b in range(a + 1):
                    A[a, b] += xa * X[k, b]
    for a in range(p):
        for b in range(a):
            A[b, a] = A[a, b]
    return A, C, d


@njit(cache=True, nogil=True)
def _factor(A, C, d):
    """Cholesky factor of the Schur complement A - C' diag(1/d) C."""
    p = A.shape[0]
    n = d.shape[0]
    L = np.zeros((p, p))
    for i in range(n):
        if not d[i] > 0.0:
            return L, False
    S = A.copy()
    for i in range(n):
        inv = 1.0 / d[i]
        for a in range(p):
            ca = C[i, a] * inv
            for b in range(p):
                S[a, b] -= ca * C[i, b]
    scale = 0.0
    for a in range(p):
        scale = max(scale, abs(A[a, a]))
    # relative pivot floor; failure means the design is singular
    floor = 1e-13 * max(scale, 1e-300)
    for a in range(p):
        s = S[a, a]
        for c in range(a):
            s -= L[a, c] * L[a, c]
        if not s > floor:
            return L, False
        L[a, a] = np.sqrt(s)
        for b in range(a + 1, p):
            s2 = S[b, a]
            for c in range(a):
                s2 -= L[b, c] * L[a, c]
            L[b, a] = s2 / L[a, a]
    return L, True


@njit(cache=True, nogil=True)
def _solve(L, C, d, fb, fa):
    p = L.shape[0]
    n = d.shape[0]
    rhs = fb.copy()
    for i in range(n):
        g = fa[i] / d[i]
        for a in range(p):
            rhs[a] -= C[i, a] * g
    z = np.zeros(p)
    for a in range(p):
        s = rhs[a]
        for c in range(a):
            s -= L[a, c] * z[c]
        z[a] = s / L[a, a]
    ub = np.zeros(p)
    for a in range(p - 1, -1, -1):
        s = z[a]
        for c in range(a + 1, p):
            s -= L[c, a] * ub[c]
        ub[a] = s / L[a, a]
    ua = np.zeros(n)
    for i in range(n):
        s = fa[i]
        for a in range(p):
            s -= C[i, a] * ub[a]
        ua[i] = s / d[i]
    return ub, ua


def arrow_solve(X, e, starts, q, fb, fa):
    """Solve (Z'QZ) [ub; ua] = [fb; fa]; returns (ub, ua, ok)."""
    A, C, d = _assemble(X, e, starts, q)
    L, ok = _factor(A, C, d)
    if not ok:
        return np.zeros(X.shape[1]), np.zeros(d.shape[0]), False
    ub, ua = _solve(L, C, d, fb, fa)
    return ub, ua, True


@njit(cache=True, nogil=True)
def _zt(X, e, starts, v):
    m, p = X.shape
    n = starts.shape[0] - 1
    fb = np.zeros(p)
    fa = np.zeros(n)
    for i in range(n):
        for k in range(starts[i], starts[i + 1]):
            vk = v[k]
            fa[i] += e[k] * vk
            for a in range(p):
                fb[a] += X[k, a] * vk
    return fb, fa


@njit(cache=True, nogil=True)
def _z(X, e, starts, ub, ua):
    m, p = X.shape
    n = starts.shape[0] - 1
    out = np.empty(m)
    for i in range(n):
        for k in range(starts[i], starts[i + 1]):
            s = e[k] * ua[i]
            for a in range(p):
                s += X[k, a] * ub[a]
            out[k] = s
    return out


@njit(cache=True, nogil=True)
def _gap(c, x, w, ub, ua, bb, ba):
    g = 0.0
    for k in range(c.shape[0]):
        g += c[k] * x[k] + w[k]
    for a in range(ub.shape[0]):
        g -= ub[a] * bb[a]
    for i in range(ua.shape[0]):
        g -= ua[i] * ba[i]
    return g


@njit(cache=True, nogil=True)
def frisch_newton(X, e, starts, y, tau, tol, max_iter):
    """Solve min sum rho_tau(y - X b - E a); returns (theta, iters, rel_gap, status).

    ``theta`` is (b, a).  Bounded-variable dual formulation with Mehrotra
    predictor-corrector steps; loops are fused to avoid temporaries.
    """
    m, p = X.shape
    n = starts.shape[0] - 1
    step = 0.9995
    x = np.full(m, 1.0 - tau)
    s = np.full(m, tau)
    c = -y
    bb, ba = _zt(X, e, starts, x)

    A, C, d = _assemble(X, e, starts, np.ones(m))
    L, ok = _factor(A, C, d)
    if not ok:
        return np.zeros(p + n), 0, np.inf, STATUS_SINGULAR
    fb, fa = _zt(X, e, starts, c)
    ub, ua = _solve(L, C, d, fb, fa)
    r = c - _z(X, e, starts, ub, ua)
    z = np.empty(m)
    w = np.empty(m)
    for k in range(m):
        if r[k] == 0.0:
            r[k] = 0.001
        z[k] = max(r[k], 0.0)
        w[k] = z[k] - r[k]

    q = np.empty(m)
    v = np.empty(m)
    dx = np.empty(m)
    dz = np.empty(m)
    dw = np.empty(m)
    xi = np.empty(m)
    xinv = np.empty(m)
    sinv = np.empty(m)
    dxdz = np.empty(m)
    dsdw = np.empty(m)

    gap = _gap(c, x, w, ub, ua, bb, ba)
    cx = 0.0
    for k in range(m):
        cx += c[k] * x[k]
    it = 0
    while gap > tol * (1.0 + abs(cx)) and it < max_iter:
        it += 1
        for k in range(m):
            xinv[k] = 1.0 / x[k]
            sinv[k] = 1.0 / s[k]
            q[k] = 1.0 / (z[k] * xinv[k] + w[k] * sinv[k])
            r[k] = z[k] - w[k]
            v[k] = q[k] * r[k]
        A, C, d = _assemble(X, e, starts, q)
        L, ok = _factor(A, C, d)
        if not ok:
            return np.concatenate((-ub, -ua)), it, gap, STATUS_SINGULAR
        fb, fa = _zt(X, e, starts, v)
        dyb, dya = _solve(L, C, d, fb, fa)
        zd = _z(X, e, starts, dyb, dya)
        fx = 1e20
        fs = 1e20
        fw = 1e20
        fz = 1e20
        for k in range(m):
            dxk = q[k] * (zd[k] - r[k])
            dsk = -dxk
            dzk = -z[k] * (dxk * xinv[k] + 1.0)
            dwk = -w[k] * (dsk * sinv[k] + 1.0)
            dx[k] = dxk
            dz[k] = dzk
            dw[k] = dwk
            if dxk < 0.0:
                fx = min(fx, -x[k] / dxk)
            if dsk < 0.0:
                fs = min(fs, -s[k] / dsk)
            if dzk < 0.0:
                fz = min(fz, -z[k] / dzk)
            if dwk < 0.0:
                fw = min(fw, -w[k] / dwk)
        fp = min(step * min(fx, fs), 1.0)
        fd = min(step * min(fw, fz), 1.0)
        if min(fp, fd) < 1.0:
            mu = 0.0
            g = 0.0
            for k in range(m):
                mu += z[k] * x[k] + w[k] * s[k]
                g += (z[k] + fd * dz[k]) * (x[k] + fp * dx[k]) + (w[k] + fd * dw[k]) * (
                    s[k] - fp * dx[k]
                )
            mu = mu * (g / mu) ** 3 / (2.0 * m)
            for k in range(m):
                dxdz[k] = dx[k] * dz[k]
                dsdw[k] = -dx[k] * dw[k]
                xi[k] = mu * (xinv[k] - sinv[k])
                v[k] = q[k] * r[k] + q[k] * (dxdz[k] - dsdw[k] - xi[k])
            fb, fa = _zt(X, e, starts, v)
            dyb, dya = _solve(L, C, d, fb, fa)
            zd = _z(X, e, starts, dyb, dya)
            fx = 1e20
            fs = 1e20
            fw = 1e20
            fz = 1e20
            for k in range(m):
                dxk = q[k] * (zd[k] + xi[k] - r[k] - dxdz[k] + dsdw[k])
                dsk = -dxk
                dzk = mu * xinv[k] - z[k] - xinv[k] * z[k] * dxk - dxdz[k]
                dwk = mu * sinv[k] - w[k] - sinv[k] * w[k] * dsk - dsdw[k]
                dx[k] = dxk
                dz[k] = dzk
                dw[k] = dwk
                if dxk < 0.0:
                    fx = min(fx, -x[k] / dxk)
                if dsk < 0.0:
                    fs = min(fs, -s[k] / dsk)
                if dzk < 0.0:
                    fz = min(fz, -z[k] / dzk)
                if dwk < 0.0:
                    fw = min(fw, -w[k] / dwk)
            fp = min(step * min(fx, fs), 1.0)
            fd = min(step * min(fw, fz), 1.0)
        cx = 0.0
        for k in range(m):
            x[k] += fp * dx[k]
            s[k] -= fp * dx[k]
            w[k] += fd * dw[k]
            z[k] += fd * dz[k]
            cx += c[k] * x[k]
        for a in range(p):
            ub[a] += fd * dyb[a]
        for i in range(n):
            ua[i] += fd * dya[i]
        gap = _gap(c, x, w, ub, ua, bb, ba)
    rel = gap / (1.0 + abs(cx))
    status = STATUS_OK if rel <= tol else STATUS_MAXITER
    return np.concatenate((-ub, -ua)), it, rel, status
