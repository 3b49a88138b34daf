"""Full-batch gradient descent for L2-regularized logistic loss.

One optimizer serves the plain trainer, the penalty trainer, and the
cluster-split loss. Descent is deterministic: zero initialization and
backtracking (Armijo) line search, stopping at gradient norm <= tol or the
iteration cap.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log1p_exp(z: np.ndarray) -> np.ndarray:
    """log(1 + exp(z)) without overflow."""
    return np.where(z > 0, z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def descend(value_and_grad, w0: np.ndarray, tol: float, max_iters: int,
            step0: float = 1.0, armijo: float = 1e-4):
    """Minimize a smooth convex function by gradient descent with backtracking.

    ``value_and_grad(w) -> (f, g)``. Returns (w, f, iterations). The accepted
    step size carries over between iterations (doubled once per iteration) so
    well-scaled problems rarely backtrack.
    """
    w = w0.astype(np.float64).copy()
    f, g = value_and_grad(w)
    step = step0
    it = 0
    while it < max_iters:
        gnorm2 = float(g @ g)
        if np.sqrt(gnorm2) <= tol:
            break
        step = min(step * 2.0, 1e8)
        while True:
            w_new = w - step * g
            f_new, g_new = value_and_grad(w_new)
            if f_new <= f - armijo * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-16:
                w_new, f_new, g_new = w, f, g
                break
        if step < 1e-16:
            break
        w, f, g = w_new, f_new, g_new
        it += 1
    return w, f, it


def logistic_value_and_grad(w_aug, X_aug, y, lam):
    """Mean cross-entropy + (lam/2)||w||^2; the bias (last column) unpenalized."""
    n = X_aug.shape[0]
    z = X_aug @ w_aug
    p = sigmoid(z)
    loss = float(np.mean(log1p_exp(z) - y * z))
    reg = w_aug.copy()
    reg[-1] = 0.0
    loss += 0.5 * lam * float(reg @ reg)
    grad = X_aug.T @ (p - y) / n + lam * reg
    return loss, grad


def fit_logistic(X, y, lam=1e-4, tol=1e-6, max_iters=5000):
    """Fit weights and bias for logistic regression on (X, y).

    Minimizes mean loss; returns (weights, bias, mean_objective, iterations).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_aug = np.hstack([X, np.ones((X.shape[0], 1))])
    w0 = np.zeros(X_aug.shape[1])
    f = lambda w: logistic_value_and_grad(w, X_aug, y, lam)
    w, val, it = descend(f, w0, tol, max_iters)
    return w[:-1], float(w[-1]), val, it


def fit_logistic_sum(X, y, lam=1e-4, tol=1e-6, max_iters=5000):
    """Minimize sum cross-entropy + (lam/2)||w||^2 (the cluster-split loss).

    Internally optimizes the equivalent mean objective with lam/n; returns
    (weights, bias, sum_objective).
    """
    n = max(len(y), 1)
    w, b, val, _ = fit_logistic(X, y, lam=lam / n, tol=tol, max_iters=max_iters)
    return w, b, val * n


def logistic_sum_loss(w, b, X, y):
    """Plain (unregularized) sum cross-entropy of a fixed model on (X, y)."""
    z = np.asarray(X, dtype=np.float64) @ w + b
    return float(np.sum(log1p_exp(z) - np.asarray(y, dtype=np.float64) * z))
