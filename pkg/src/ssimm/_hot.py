"""Hot inner loops: the two ADMM solvers and the constraint projection.

Each kernel has a numba implementation (``*_nb``) that loops over problems
with ``prange`` and a numpy implementation (``*_np``) that vectorises across
problems. Both follow the same update order and produce the same iterates up
to floating-point rounding. The public functions dispatch on
:data:`ssimm._accel.USE_NUMBA`; the suffixed variants stay importable for
tests and ``benchmarks/``.

Sphere ADMM (one problem, scaled dual ``u``)::

    w  <- w - eta * grad f(w) - eta * rho * (w - xi + u)
    xi <- (w + u) / ||w + u||
    u  <- u + w - xi

Embedding ADMM (one block index)::

    Y <- Y - eta * sum_j grad theta_j(Y) - eta * rho * (Y - V + J)
    V <- Pi(Y + J)        # centre columns, set singular values to sqrt(n)
    J <- J + Y - V
"""

import numpy as np

from . import _accel
from ._accel import njit, prange

# status codes returned alongside iterates
CONVERGED = 0
MAX_ITER = 1
DIVERGED = 2


# ---------------------------------------------------------------------------
# sphere-constrained reconstruction, input space
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def sphere_admm_input_nb(x, X, c, rho, eta, tol, max_iter, w0, want_trace):
    m, q, k = X.shape
    T = max_iter if want_trace else 0
    out_xi = np.empty((m, k))
    out_w = np.empty((m, k))
    out_u = np.empty((m, k))
    iters = np.zeros(m, dtype=np.int64)
    resid = np.zeros(m)
    fval = np.zeros(m)
    status = np.zeros(m, dtype=np.int64)
    trace_w = np.zeros((m, T, k))
    trace_f = np.zeros((m, T))
    for p in prange(m):
        xp = x[p]
        Xp = X[p]
        w = w0.copy()
        xi = w0.copy()
        u = np.zeros(k)
        best = xi.copy()
        best_f = np.inf
        xx = 0.0
        for a in range(q):
            xx += xp[a] * xp[a]
        r = np.empty(q)
        g = np.empty(k)
        st = MAX_ITER
        res = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            # f and its gradient at the current w
            rr = 0.0
            xr = 0.0
            for a in range(q):
                s = 0.0
                for b in range(k):
                    s += Xp[a, b] * w[b]
                r[a] = s
                rr += s * s
                xr += xp[a] * s
            den = xx + rr + c
            f = (xx + rr - 2.0 * xr) / den
            for b in range(k):
                s = 0.0
                for a in range(q):
                    s += Xp[a, b] * ((1.0 - f) * r[a] - xp[a])
                g[b] = 2.0 * s / den
            for b in range(k):
                w[b] = w[b] - eta * g[b] - eta * rho * (w[b] - xi[b] + u[b])
            nv = 0.0
            for b in range(k):
                nv += (w[b] + u[b]) ** 2
            nv = np.sqrt(nv)
            if not np.isfinite(nv):
                st = DIVERGED
                break
            if nv > 0.0:
                for b in range(k):
                    xi[b] = (w[b] + u[b]) / nv
            res = 0.0
            for b in range(k):
                u[b] += w[b] - xi[b]
                res += (w[b] - xi[b]) ** 2
            res = np.sqrt(res)
            # objective at the feasible iterate
            rr = 0.0
            xr = 0.0
            for a in range(q):
                s = 0.0
                for b in range(k):
                    s += Xp[a, b] * xi[b]
                rr += s * s
                xr += xp[a] * s
            fx = (xx + rr - 2.0 * xr) / (xx + rr + c)
            if fx < best_f:
                best_f = fx
                best[:] = xi
            if want_trace:
                trace_w[p, it - 1, :] = w
                trace_f[p, it - 1] = f
            if res <= tol:
                st = CONVERGED
                best_f = fx
                best[:] = xi
                break
        out_xi[p] = best
        out_w[p] = w
        out_u[p] = u
        iters[p] = it
        resid[p] = res
        fval[p] = best_f
        status[p] = st
    return out_xi, out_w, out_u, iters, resid, fval, status, trace_w, trace_f


def sphere_admm_input_np(x, X, c, rho, eta, tol, max_iter, w0, want_trace):
    m, q, k = X.shape
    T = max_iter if want_trace else 0
    w = np.tile(w0, (m, 1))
    xi = w.copy()
    u = np.zeros((m, k))
    best = xi.copy()
    best_f = np.full(m, np.inf)
    xx = np.einsum("pa,pa->p", x, x)
    active = np.ones(m, dtype=bool)
    iters = np.zeros(m, dtype=np.int64)
    resid = np.full(m, np.inf)
    status = np.full(m, MAX_ITER, dtype=np.int64)
    trace_w = np.zeros((m, T, k))
    trace_f = np.zeros((m, T))
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Xa, xa, wa, xia, ua = X[idx], x[idx], w[idx], xi[idx], u[idx]
        r = np.einsum("pab,pb->pa", Xa, wa)
        rr = np.einsum("pa,pa->p", r, r)
        xr = np.einsum("pa,pa->p", xa, r)
        den = xx[idx] + rr + c
        f = (xx[idx] + rr - 2.0 * xr) / den
        g = 2.0 * np.einsum("pab,pa->pb", Xa, (1.0 - f)[:, None] * r - xa) / den[:, None]
        wa = wa - eta * g - eta * rho * (wa - xia + ua)
        v = wa + ua
        nv = np.sqrt(np.einsum("pb,pb->p", v, v))
        bad = ~np.isfinite(nv)
        ok = nv > 0.0
        xia = np.where(ok[:, None], v / np.where(ok, nv, 1.0)[:, None], xia)
        ua = ua + wa - xia
        res = np.sqrt(np.einsum("pb,pb->p", wa - xia, wa - xia))
        r2 = np.einsum("pab,pb->pa", Xa, xia)
        rr2 = np.einsum("pa,pa->p", r2, r2)
        xr2 = np.einsum("pa,pa->p", xa, r2)
        fx = (xx[idx] + rr2 - 2.0 * xr2) / (xx[idx] + rr2 + c)
        w[idx], xi[idx], u[idx] = wa, xia, ua
        iters[idx] = it
        resid[idx] = res
        if want_trace:
            trace_w[idx, it - 1] = wa
            trace_f[idx, it - 1] = f
        improve = fx < best_f[idx]
        done = (res <= tol) & ~bad
        take = improve | done
        best[idx[take]] = xia[take]
        best_f[idx[take]] = fx[take]
        status[idx[done]] = CONVERGED
        status[idx[bad]] = DIVERGED
        active[idx[done | bad]] = False
    return best, w, u, iters, resid, best_f, status, trace_w, trace_f


# ---------------------------------------------------------------------------
# sphere-constrained reconstruction, kernel (gram) form
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def sphere_admm_gram_nb(kxx, kvec, K, c, rho, eta, tol, max_iter, w0, want_trace):
    m, k = kvec.shape
    T = max_iter if want_trace else 0
    out_xi = np.empty((m, k))
    out_w = np.empty((m, k))
    out_u = np.empty((m, k))
    iters = np.zeros(m, dtype=np.int64)
    resid = np.zeros(m)
    fval = np.zeros(m)
    status = np.zeros(m, dtype=np.int64)
    trace_w = np.zeros((m, T, k))
    trace_f = np.zeros((m, T))
    for p in prange(m):
        Kp = K[p]
        kv = kvec[p]
        kx = kxx[p]
        w = w0.copy()
        xi = w0.copy()
        u = np.zeros(k)
        best = xi.copy()
        best_f = np.inf
        Kw = np.empty(k)
        st = MAX_ITER
        res = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            wKw = 0.0
            wk = 0.0
            for a in range(k):
                s = 0.0
                for b in range(k):
                    s += Kp[a, b] * w[b]
                Kw[a] = s
                wKw += w[a] * s
                wk += w[a] * kv[a]
            den = kx + wKw + c
            f = (kx + wKw - 2.0 * wk) / den
            for a in range(k):
                g = 2.0 * ((1.0 - f) * Kw[a] - kv[a]) / den
                w[a] = w[a] - eta * g - eta * rho * (w[a] - xi[a] + u[a])
            nv = 0.0
            for a in range(k):
                nv += (w[a] + u[a]) ** 2
            nv = np.sqrt(nv)
            if not np.isfinite(nv):
                st = DIVERGED
                break
            if nv > 0.0:
                for a in range(k):
                    xi[a] = (w[a] + u[a]) / nv
            res = 0.0
            for a in range(k):
                u[a] += w[a] - xi[a]
                res += (w[a] - xi[a]) ** 2
            res = np.sqrt(res)
            xKx = 0.0
            xk = 0.0
            for a in range(k):
                s = 0.0
                for b in range(k):
                    s += Kp[a, b] * xi[b]
                xKx += xi[a] * s
                xk += xi[a] * kv[a]
            fx = (kx + xKx - 2.0 * xk) / (kx + xKx + c)
            if fx < best_f:
                best_f = fx
                best[:] = xi
            if want_trace:
                trace_w[p, it - 1, :] = w
                trace_f[p, it - 1] = f
            if res <= tol:
                st = CONVERGED
                best_f = fx
                best[:] = xi
                break
        out_xi[p] = best
        out_w[p] = w
        out_u[p] = u
        iters[p] = it
        resid[p] = res
        fval[p] = best_f
        status[p] = st
    return out_xi, out_w, out_u, iters, resid, fval, status, trace_w, trace_f


def sphere_admm_gram_np(kxx, kvec, K, c, rho, eta, tol, max_iter, w0, want_trace):
    m, k = kvec.shape
    T = max_iter if want_trace else 0
    w = np.tile(w0, (m, 1))
    xi = w.copy()
    u = np.zeros((m, k))
    best = xi.copy()
    best_f = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    iters = np.zeros(m, dtype=np.int64)
    resid = np.full(m, np.inf)
    status = np.full(m, MAX_ITER, dtype=np.int64)
    trace_w = np.zeros((m, T, k))
    trace_f = np.zeros((m, T))
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ka, kv, kx = K[idx], kvec[idx], kxx[idx]
        wa, xia, ua = w[idx], xi[idx], u[idx]
        Kw = np.einsum("pab,pb->pa", Ka, wa)
        wKw = np.einsum("pa,pa->p", wa, Kw)
        wk = np.einsum("pa,pa->p", wa, kv)
        den = kx + wKw + c
        f = (kx + wKw - 2.0 * wk) / den
        g = 2.0 * ((1.0 - f)[:, None] * Kw - kv) / den[:, None]
        wa = wa - eta * g - eta * rho * (wa - xia + ua)
        v = wa + ua
        nv = np.sqrt(np.einsum("pb,pb->p", v, v))
        bad = ~np.isfinite(nv)
        ok = nv > 0.0
        xia = np.where(ok[:, None], v / np.where(ok, nv, 1.0)[:, None], xia)
        ua = ua + wa - xia
        res = np.sqrt(np.einsum("pb,pb->p", wa - xia, wa - xia))
        Kx = np.einsum("pab,pb->pa", Ka, xia)
        xKx = np.einsum("pa,pa->p", xia, Kx)
        xk = np.einsum("pa,pa->p", xia, kv)
        fx = (kx + xKx - 2.0 * xk) / (kx + xKx + c)
        w[idx], xi[idx], u[idx] = wa, xia, ua
        iters[idx] = it
        resid[idx] = res
        if want_trace:
            trace_w[idx, it - 1] = wa
            trace_f[idx, it - 1] = f
        improve = fx < best_f[idx]
        done = (res <= tol) & ~bad
        take = improve | done
        best[idx[take]] = xia[take]
        best_f[idx[take]] = fx[take]
        status[idx[done]] = CONVERGED
        status[idx[bad]] = DIVERGED
        active[idx[done | bad]] = False
    return best, w, u, iters, resid, best_f, status, trace_w, trace_f


# ---------------------------------------------------------------------------
# projection onto {V : V^T 1 = 0, V^T V / n = I}
# ---------------------------------------------------------------------------


@njit(cache=True)
def _complete_basis(U, rank):
    """Replace columns ``rank..p-1`` of ``U`` by orthonormal vectors orthogonal
    to the first ``rank`` columns and to the all-ones vector."""
    n, p = U.shape
    basis = np.zeros((n, p + 1))
    basis[:, 0] = 1.0 / np.sqrt(n)
    for a in range(rank):
        basis[:, a + 1] = U[:, a]
    filled = rank + 1
    cand = 0
    while filled < p + 1 and cand < n:
        v = np.zeros(n)
        v[cand] = 1.0
        cand += 1
        for _ in range(2):
            for b in range(filled):
                dot = 0.0
                for t in range(n):
                    dot += basis[t, b] * v[t]
                for t in range(n):
                    v[t] -= dot * basis[t, b]
        nv = 0.0
        for t in range(n):
            nv += v[t] * v[t]
        nv = np.sqrt(nv)
        if nv > 1e-8:
            for t in range(n):
                basis[t, filled] = v[t] / nv
            filled += 1
    for a in range(rank, p):
        U[:, a] = basis[:, a + 1]


@njit(cache=True)
def project_nb(A):
    n, p = A.shape
    C = np.empty((n, p))
    for b in range(p):
        mu = 0.0
        for t in range(n):
            mu += A[t, b]
        mu /= n
        for t in range(n):
            C[t, b] = A[t, b] - mu
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    U = np.ascontiguousarray(U)
    thresh = max(n, p) * 2.220446049250313e-16 * s[0]
    rank = 0
    for a in range(p):
        if s[a] > thresh and s[a] > 0.0:
            rank += 1
    if rank < p:
        _complete_basis(U, rank)
    return np.sqrt(n) * (U @ Vt)


def project_np(A):
    A = np.asarray(A, dtype=np.float64)
    n, p = A.shape
    C = A - A.mean(axis=0, keepdims=True)
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    U = np.ascontiguousarray(U)
    thresh = max(n, p) * np.finfo(float).eps * s[0]
    rank = int(np.sum((s > thresh) & (s > 0.0)))
    if rank < p:
        _complete_basis(U, rank)
    return np.sqrt(n) * (U @ Vt)


# ---------------------------------------------------------------------------
# embedding objective and its gradient (rank-2 forms)
# ---------------------------------------------------------------------------


@njit(cache=True)
def theta_sum_grad_nb(Y, nbr, wts, c, grad):
    """Sum of theta_j over j; writes the gradient of that sum into ``grad``.

    Uses the symmetric part of M_j, since tr(Y^T M Y) only sees (M + M^T)/2.
    """
    n, p = Y.shape
    k = nbr.shape[1]
    grad[:, :] = 0.0
    a = np.empty(p)
    bvec = np.empty(p)
    total = 0.0
    for j in range(n):
        for t in range(p):
            a[t] = Y[j, t]
            s = 0.0
            for r in range(k):
                s += wts[j, r] * Y[nbr[j, r], t]
            bvec[t] = s
        num = 0.0
        aa = 0.0
        bb = 0.0
        for t in range(p):
            num += (a[t] - bvec[t]) ** 2
            aa += a[t] * a[t]
            bb += bvec[t] * bvec[t]
        den = aa + bb + c
        th = num / den
        total += th
        sc = 2.0 / den
        for t in range(p):
            grad[j, t] += sc * ((a[t] - bvec[t]) - th * a[t])
        for r in range(k):
            wr = wts[j, r]
            if wr == 0.0:
                continue
            row = nbr[j, r]
            for t in range(p):
                grad[row, t] += sc * wr * (-(a[t] - bvec[t]) - th * bvec[t])
    return total


def theta_sum_grad_np(Y, nbr, wts, c, grad=None):
    n, p = Y.shape
    B = np.einsum("jr,jrt->jt", wts, Y[nbr])
    D = Y - B
    num = np.einsum("jt,jt->j", D, D)
    den = np.einsum("jt,jt->j", Y, Y) + np.einsum("jt,jt->j", B, B) + c
    th = num / den
    sc = (2.0 / den)[:, None]
    g = sc * (D - th[:, None] * Y)
    contrib = (sc * (-D - th[:, None] * B))[:, None, :] * wts[:, :, None]
    np.add.at(g, nbr.reshape(-1), contrib.reshape(-1, p))
    if grad is not None:
        grad[:, :] = g
    return float(th.sum()), g


@njit(cache=True)
def _embed_one_nb(nbr, wts, Y0, c, rho, eta, tol, max_iter, trace):
    n, p = Y0.shape
    Y = Y0.copy()
    V = Y0.copy()
    J = np.zeros((n, p))
    grad = np.empty((n, p))
    scale = np.sqrt(n * p)
    st = MAX_ITER
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        theta_sum_grad_nb(Y, nbr, wts, c, grad)
        for j in range(n):
            for t in range(p):
                Y[j, t] = Y[j, t] - eta * grad[j, t] - eta * rho * (Y[j, t] - V[j, t] + J[j, t])
        ok = True
        for j in range(n):
            for t in range(p):
                if not np.isfinite(Y[j, t] + J[j, t]):
                    ok = False
        if not ok:
            st = DIVERGED
            break
        V = project_nb(Y + J)
        res = 0.0
        for j in range(n):
            for t in range(p):
                dlt = Y[j, t] - V[j, t]
                J[j, t] += dlt
                res += dlt * dlt
        res = np.sqrt(res) / scale
        trace[it - 1] = theta_sum_grad_nb(V, nbr, wts, c, grad)
        if res <= tol:
            st = CONVERGED
            break
    return V, Y, J, it, res, st


@njit(cache=True, parallel=True)
def embed_admm_nb(nbr, wts, Y0, c, rho, eta, tol, max_iter):
    B, n, p = Y0.shape
    Vs = np.empty((B, n, p))
    Ys = np.empty((B, n, p))
    Js = np.empty((B, n, p))
    iters = np.zeros(B, dtype=np.int64)
    resid = np.zeros(B)
    status = np.zeros(B, dtype=np.int64)
    traces = np.full((B, max_iter), np.nan)
    for i in prange(B):
        V, Y, J, it, res, st = _embed_one_nb(
            nbr[i], wts[i], Y0[i], c, rho, eta, tol, max_iter, traces[i]
        )
        Vs[i] = V
        Ys[i] = Y
        Js[i] = J
        iters[i] = it
        resid[i] = res
        status[i] = st
    return Vs, Ys, Js, iters, resid, status, traces


def _embed_one_np(nbr, wts, Y0, c, rho, eta, tol, max_iter, trace):
    n, p = Y0.shape
    Y = Y0.copy()
    V = Y0.copy()
    J = np.zeros((n, p))
    scale = np.sqrt(n * p)
    st, res, it = MAX_ITER, np.inf, 0
    for it in range(1, max_iter + 1):
        _, g = theta_sum_grad_np(Y, nbr, wts, c)
        Y = Y - eta * g - eta * rho * (Y - V + J)
        if not np.all(np.isfinite(Y + J)):
            st = DIVERGED
            break
        V = project_np(Y + J)
        dlt = Y - V
        J = J + dlt
        res = np.sqrt(np.sum(dlt * dlt)) / scale
        trace[it - 1] = theta_sum_grad_np(V, nbr, wts, c)[0]
        if res <= tol:
            st = CONVERGED
            break
    return V, Y, J, it, res, st


def embed_admm_np(nbr, wts, Y0, c, rho, eta, tol, max_iter):
    B, n, p = Y0.shape
    Vs, Ys, Js = (np.empty((B, n, p)) for _ in range(3))
    iters = np.zeros(B, dtype=np.int64)
    resid = np.zeros(B)
    status = np.zeros(B, dtype=np.int64)
    traces = np.full((B, max_iter), np.nan)
    for i in range(B):
        V, Y, J, it, res, st = _embed_one_np(
            nbr[i], wts[i], Y0[i], c, rho, eta, tol, max_iter, traces[i]
        )
        Vs[i], Ys[i], Js[i] = V, Y, J
        iters[i], resid[i], status[i] = it, res, st
    return Vs, Ys, Js, iters, resid, status, traces


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _pick(nb, np_):
    return nb if _accel.USE_NUMBA else np_


def sphere_admm_input(*args):
    return _pick(sphere_admm_input_nb, sphere_admm_input_np)(*args)


def sphere_admm_gram(*args):
    return _pick(sphere_admm_gram_nb, sphere_admm_gram_np)(*args)


def project(A):
    A = np.ascontiguousarray(A, dtype=np.float64)
    return _pick(project_nb, project_np)(A)


def embed_admm(*args):
    return _pick(embed_admm_nb, embed_admm_np)(*args)


def theta_sum_grad(Y, nbr, wts, c):
    if _accel.USE_NUMBA:
        g = np.empty_like(Y)
        total = theta_sum_grad_nb(Y, nbr, wts, c, g)
        return total, g
    return theta_sum_grad_np(Y, nbr, wts, c)
