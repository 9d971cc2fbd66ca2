"""Solvers for the contact quadratic program ``min 1/2 p.Hp - u.p, p >= 0``.

`active_set_qp` is a Lawson-Hanson style primal active-set method working
directly on the symmetric positive definite matrix ``H`` (which is what the
NNLS problem ``min ||Ap - b||`` with ``H = A^T A`` reduces to). It accepts a
feasible warm start, and finishes with exact complementarity.

`polonsky_keer` is the constrained conjugate-gradient scheme of Polonsky &
Keer (Wear 231, 1999), driven through a matrix-vector product only; it is
used for problems too large for dense factorisation and to produce a good
initial support for the active-set polish.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import ContactSolverError

__all__ = ["active_set_qp", "block_pivoting_qp", "polonsky_keer", "kkt_residuals"]


def kkt_residuals(p, w):
    """Return ``(primal, dual, complementarity)`` violations, all >= 0.

    ``primal = max(-p)``, ``dual = max(-w)`` and complementarity is
    ``max|p_i w_i|``.
    """
    p = np.asarray(p)
    w = np.asarray(w)
    if p.size == 0:
        return 0.0, 0.0, 0.0
    return (max(0.0, float(-p.min())), max(0.0, float(-w.min())),
            float(np.max(np.abs(p * w))))


def _cholesky_solve(A, b):
    try:
        return cho_solve(cho_factor(A, check_finite=False), b, check_finite=False)
    except LinAlgError:
        return np.linalg.solve(A, b)


def _solve_spd(H, idx, u):
    return _cholesky_solve(H[np.ix_(idx, idx)], u[idx])


def active_set_qp(H, u, x0=None, tol=1e-10, maxiter=None):
    """Solve ``min 1/2 x.Hx - u.x`` subject to ``x >= 0``.

    Parameters
    ----------
    H : ndarray, shape (m, m)
        Symmetric positive definite matrix.
    u : ndarray, shape (m,)
        Linear term.
    x0 : ndarray, shape (m,), optional
        Feasible (non-negative) starting point. Its support is the initial
        passive set.
    tol : float
        Relative tolerance on the dual feasibility ``w = Hx - u >= 0``,
        scaled by ``max|u|``.
    maxiter : int, optional
        Maximum number of iterations, default ``10 * m``.

    Returns
    -------
    x : ndarray
        Minimiser.
    w : ndarray
        Gradient ``Hx - u`` at the minimiser.
    iterations : int
    """
    H = np.asarray(H, dtype=float)
    u = np.asarray(u, dtype=float)
    m = u.size
    if maxiter is None:
        maxiter = 10 * max(m, 1)
    if m == 0:
        return np.zeros(0), np.zeros(0), 0

    thresh = tol * max(float(np.max(np.abs(u))), np.finfo(float).tiny)
    x = np.zeros(m) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 0.0)
    passive = x > 0
    blocked = np.zeros(m, dtype=bool)
    it = 0

    def solve(mask):
        z = np.zeros(m)
        idx = np.flatnonzero(mask)
        if idx.size:
            z[idx] = _solve_spd(H, idx, u)
        return z

    def restore_feasibility(x, z):
        # walk from feasible x towards z, dropping indices that hit zero
        nonlocal it
        while True:
            neg = passive & (z <= 0)
            if not neg.any():
                return z
            ratios = x[neg] / (x[neg] - z[neg])
            k = np.argmin(ratios)
            x = x + ratios[k] * (z - x)
            drop = passive & (x <= 1e-14 * max(float(x.max()), 0.0))
            drop[np.flatnonzero(neg)[k]] = True
            x[drop] = 0.0
            passive[drop] = False
            z = solve(passive)
            it += 1
            if it > maxiter:
                w = H @ x - u
                raise ContactSolverError("active-set inner loop did not terminate",
                                         it, float(max(-w.min(), 0.0)))

    if passive.any():
        x = restore_feasibility(x, solve(passive))

    while True:
        w = H @ x - u
        cand = ~passive & ~blocked
        if not cand.any():
            break
        j = np.flatnonzero(cand)[np.argmin(w[cand])]
        if w[j] >= -thresh:
            break
        it += 1
        if it > maxiter:
            raise ContactSolverError("active-set solver exceeded the iteration limit",
                                     it, float(-w[j]))
        passive[j] = True
        z = solve(passive)
        if z[j] <= 0:
            # round-off: adding j cannot decrease the objective
            passive[j] = False
            blocked[j] = True
            continue
        blocked[:] = False
        x = restore_feasibility(x, z)
    return x, w, it


def block_pivoting_qp(H, u, x0=None, tol=1e-10, maxiter=50, matvec=None):
    """Block principal pivoting for the same problem as `active_set_qp`.

    Starting from the support of `x0`, every infeasible index is swapped
    between the passive and the active set at once; after three swaps that
    fail to shrink the infeasible set, only the largest infeasible index is
    swapped (Judice & Pires, 1994). Each iteration costs one Cholesky
    factorisation of the passive block, so a good initial support makes
    this much cheaper than one-at-a-time updates.

    Parameters
    ----------
    H : ndarray or callable
        The matrix, or ``idx -> H[idx][:, idx]`` building passive blocks.
    u : ndarray
    x0 : ndarray, optional
        Its support is the initial passive set.
    tol : float
        Dual feasibility tolerance relative to ``max|u|``.
    maxiter : int
    matvec : callable, optional
        ``x -> H @ x``; required when `H` is a callable.

    Returns ``(x, w, iterations)``; raises `ContactSolverError` if no
    complementary solution is found within `maxiter` iterations.
    """
    u = np.asarray(u, dtype=float)
    if callable(H):
        block = H
    else:
        H = np.asarray(H, dtype=float)
        block = lambda idx: H[np.ix_(idx, idx)]
        matvec = H.__matmul__
    m = u.size
    if m == 0:
        return np.zeros(0), np.zeros(0), 0
    thresh = tol * max(float(np.max(np.abs(u))), np.finfo(float).tiny)
    F = (np.zeros(m, dtype=bool) if x0 is None
         else np.asarray(x0, dtype=float) > 0)
    ninf = m + 1
    backup = 3
    nbad = m
    for it in range(1, maxiter + 1):
        x = np.zeros(m)
        idx = np.flatnonzero(F)
        if idx.size:
            x[idx] = _cholesky_solve(block(idx), u[idx])
        w = matvec(x) - u
        bad = (F & (x < 0)) | (~F & (w < -thresh))
        nbad = int(bad.sum())
        if nbad == 0:
            return x, w, it
        if nbad < ninf:
            ninf = nbad
            backup = 3
            F ^= bad
        elif backup > 0:
            backup -= 1
            F ^= bad
        else:
            j = np.flatnonzero(bad)[-1]
            F[j] = not F[j]
    raise ContactSolverError("block pivoting did not terminate", maxiter, float(nbad))


def polonsky_keer(matvec, u, x0=None, tol=1e-10, maxiter=None):
    """Constrained conjugate gradient for displacement-controlled contact.

    Solves the same complementarity problem as `active_set_qp`, using only
    products ``matvec(x) = Hx``. Iterates stay non-negative; the search
    direction lives on the current contact set and is reset whenever
    overlapping cells are re-admitted.

    Parameters
    ----------
    matvec : callable
        ``x -> H @ x``.
    u : ndarray
        Imposed indentations.
    x0 : ndarray, optional
        Non-negative starting point.
    tol : float
        Stopping tolerance, applied both to the relative update
        ``||x_k+1 - x_k|| / ||x_k+1||`` and to the RMS gap on the contact
        set relative to ``max|u|``.
    maxiter : int, optional
        Default ``10 * len(u)``.

    Returns
    -------
    x, w, iterations
    """
    u = np.asarray(u, dtype=float)
    m = u.size
    if maxiter is None:
        maxiter = 10 * max(m, 1)
    if m == 0 or u.max() <= 0:
        x = np.zeros(m)
        return x, matvec(x) - u, 0
    x = np.zeros(m) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 0.0)
    if not x.any():
        x = np.where(u > 0, 1e-3 * u.max(), 0.0)
    scale = float(np.abs(u).max())

    t = np.zeros(m)
    g_old = 1.0
    delta = 0.0
    for it in range(1, maxiter + 1):
        gap = matvec(x) - u
        S = x > 0
        G = float(np.dot(gap[S], gap[S]))
        t[S] = gap[S] + delta * (G / g_old) * t[S]
        t[~S] = 0.0
        g_old = G if G > 0 else 1.0
        r = matvec(t)
        denom = float(np.dot(r[S], t[S]))
        tau = float(np.dot(gap[S], t[S])) / denom if denom > 0 else 0.0
        x_old = x.copy()
        x[S] -= tau * t[S]
        x[x < 0] = 0.0
        overlap = ~S & (gap < 0)
        if overlap.any():
            # re-admit overlapping cells with an exact line search along -gap;
            # tau vanishes once the contact set has converged
            delta = 0.0
            e = np.zeros(m)
            e[overlap] = -gap[overlap]
            ee = float(np.dot(e, e))
            x[overlap] += ee / float(np.dot(e, matvec(e))) * e[overlap]
        else:
            delta = 1.0
        change = np.linalg.norm(x - x_old) / max(np.linalg.norm(x), np.finfo(float).tiny)
        resid = np.sqrt(G / max(int(S.sum()), 1)) / scale
        if change < tol and resid < tol and not overlap.any():
            return x, matvec(x) - u, it
    w = matvec(x) - u
    raise ContactSolverError("constrained conjugate gradient did not converge", maxiter,
                             float(np.linalg.norm(w[x > 0]) / scale))
