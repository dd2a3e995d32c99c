"""Compiled coordinate-descent kernels.

Two flavours are used: a residual-updating kernel for weighted linear
lasso problems (the inner solve of the proximal-Newton outer loop), and
a Gram-based kernel for the nodewise regressions where one shared
p x p second-moment matrix serves every row, every fold and every
penalty on the path.

Both kernels solve ``n^{-1} ||y - X g||^2 + 2 lam ||g||_1`` up to a
coordinate-move tolerance; certification against the exact KKT
conditions happens in the callers.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True, nogil=True)
def lasso_cd(X, y, lam, gamma, max_sweeps, tol):
    """Cyclic coordinate descent with residual updates.

    Alternates full sweeps with sweeps over the active set; converged
    when a full sweep moves no coordinate by more than ``tol``.
    Mutates ``gamma`` in place and returns (sweeps, converged).
    """
    n, q = X.shape
    colsq = np.empty(q)
    for j in range(q):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        colsq[j] = s / n

    resid = y.copy()
    for j in range(q):
        gj = gamma[j]
        if gj != 0.0:
            for i in range(n):
                resid[i] -= X[i, j] * gj

    active = np.zeros(q, dtype=np.uint8)
    for j in range(q):
        if gamma[j] != 0.0:
            active[j] = 1

    sweeps = 0
    full_pass = True
    while sweeps < max_sweeps:
        sweeps += 1
        max_move = 0.0
        for j in range(q):
            if not full_pass and active[j] == 0:
                continue
            dj = colsq[j]
            if dj <= 0.0:
                gamma[j] = 0.0
                continue
            old = gamma[j]
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * resid[i]
            rho = old * dj + acc / n
            new = _soft(rho, lam) / dj
            delta = new - old
            if delta != 0.0:
                gamma[j] = new
                for i in range(n):
                    resid[i] -= X[i, j] * delta
                move = abs(delta)
                if move > max_move:
                    max_move = move
            active[j] = 1 if new != 0.0 else 0
        if max_move < tol:
            if full_pass:
                return sweeps, True
            full_pass = True
        else:
            full_pass = False
    return sweeps, False


@njit(cache=True, nogil=True)
def nodewise_cd(G, j, lam, u, s, max_sweeps, tol):
    """Coordinate descent on a quadratic form with one pinned coordinate.

    Minimizes u' G u + 2 lam sum_{m != j} |u_m| with u[j] fixed at 1;
    the regression coefficients of column j on the others are -u[m].
    ``s`` must equal G @ u on entry and is kept in sync (enables warm
    starts along a penalty path).  Returns (sweeps, converged).
    """
    p = G.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_move = 0.0
        for m in range(p):
            if m == j:
                continue
            gmm = G[m, m]
            old = u[m]
            if gmm <= 0.0:
                new = 0.0
            else:
                rho = s[m] - gmm * old
                new = -_soft(rho, lam) / gmm
            delta = new - old
            if delta != 0.0:
                u[m] = new
                for a in range(p):
                    s[a] += G[m, a] * delta
                move = abs(delta)
                if move > max_move:
                    max_move = move
        if max_move < tol:
            return sweeps, True
    return sweeps, False


@njit(cache=True, nogil=True)
def nodewise_cv_losses(grams_train, grams_val, j, lambdas, max_sweeps, tol,
                       max_active):
    """Validation losses for one nodewise row over a penalty path.

    grams_train/grams_val: (F, p, p) fold second-moment matrices.
    Returns an (L, F) matrix of validation quadratic-form losses.
    A fold's path stops descending once the active set exceeds
    ``max_active`` (saturated, never competitive); deeper entries
    repeat the last computed loss.
    """
    F = grams_train.shape[0]
    p = grams_train.shape[1]
    L = lambdas.shape[0]
    losses = np.empty((L, F))
    for f in range(F):
        Gt = grams_train[f]
        Gv = grams_val[f]
        u = np.zeros(p)
        u[j] = 1.0
        s = Gt[j].copy()  # G @ e_j by symmetry
        loss = 0.0
        saturated = False
        for li in range(L):
            if not saturated:
                nodewise_cd(Gt, j, lambdas[li], u, s, max_sweeps, tol)
                active = 0
                loss = 0.0
                for a in range(p):
                    ua = u[a]
                    if ua != 0.0:
                        active += 1
                        row = 0.0
                        for b in range(p):
                            ub = u[b]
                            if ub != 0.0:
                                row += Gv[a, b] * ub
                        loss += ua * row
                if active - 1 > max_active:
                    saturated = True
            losses[li, f] = loss
    return losses
