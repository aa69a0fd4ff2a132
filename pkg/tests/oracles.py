"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def localization_brute(X, s):
    """max ||X v||_inf over {-1, 0, 1}-valued v with at most s nonzeros."""
    X = np.asarray(X, dtype=float)
    r = X.shape[1]
    best = 0.0
    for k in range(1, s + 1):
        for support in itertools.combinations(range(r), k):
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                v = np.zeros(r)
                v[list(support)] = signs
                best = max(best, float(np.abs(X @ v).max()))
    return best


def lasso_sign_oracle(phi, target, c, lam_w):
    """Exact minimiser of ``(c/2)||target - phi x||^2 + sum_j lam_w_j |x_j|``.

    Every sign pattern sigma in {-1, 0, 1}^m is tried: the stationarity
    equation on the active set is solved and kept if the solution agrees in
    sign with sigma.  The optimum is among the candidates, and every
    candidate is a genuine point, so the smallest objective wins.
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.shape[1]
    lam_w = np.broadcast_to(np.asarray(lam_w, dtype=float), (m,))

    def F(x):
        r = target - phi @ x
        return 0.5 * c * float(r @ r) + float(lam_w @ np.abs(x))

    best_x, best_val = np.zeros(m), F(np.zeros(m))
    for sigma in itertools.product((-1, 0, 1), repeat=m):
        sigma = np.array(sigma, dtype=float)
        S = np.flatnonzero(sigma)
        if S.size == 0:
            continue
        P = phi[:, S]
        G = c * P.T @ P
        rhs = c * P.T @ target - lam_w[S] * sigma[S]
        try:
            xs = np.linalg.solve(G, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.any(sigma[S] * xs < 0):
            continue
        x = np.zeros(m)
        x[S] = xs
        val = F(x)
        if val < best_val:
            best_x, best_val = x, val
    return best_x, best_val


def central_gradient(fun, x, h):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def dct_column(p, j):
    """Closed-form DCT-II column j (0-based)."""
    i = np.arange(p)
    scale = math.sqrt(1.0 / p) if j == 0 else math.sqrt(2.0 / p)
    return scale * np.cos(math.pi * (2 * i + 1) * j / (2 * p))
