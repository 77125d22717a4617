"""RBF support vector machine trained by SMO, with Platt probability calibration.

The dual

    min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  y^T a = 0

is solved by sequential minimal optimization, always updating the maximal
violating pair, until the KKT gap falls below ``tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import TrainingError

log = logging.getLogger(__name__)

TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    C: float = 0.5
    gamma: float | None = None  # None: 1 / (n_features * X.var())
    tol: float = 1e-3
    max_iter: int = 200_000

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass
class SvmModel:
    support: np.ndarray  # support vectors, (n_sv, d)
    coef: np.ndarray  # alpha_i * y_i for each support vector
    b: float
    gamma: float
    C: float
    prob_a: float = 0.0
    prob_b: float = 0.0
    alpha: np.ndarray | None = None  # full dual vector over the training set
    y: np.ndarray | None = None
    n_iter: int = 0


def rbf_kernel(a, b, gamma):
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * d2)


def _labels(labels):
    y = np.asarray(labels)
    if y.dtype == bool or set(np.unique(y)) <= {0, 1}:
        y = np.where(y.astype(bool), 1.0, -1.0)
    return y.astype(np.float64)


def smo(K, y, C, tol=1e-3, max_iter=200_000):
    """Solve the dual for a precomputed kernel; returns ``(alpha, b, n_iter)``."""
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q alpha - e
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(Q).copy()
    it = 0
    while it < max_iter:
        minus_yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(minus_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(minus_yg[low])])
        if minus_yg[i] - minus_yg[j] < tol:
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2 * Q[i, j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2 * Q[i, j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        grad += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tol=%g", max_iter, tol)

    # bias from free vectors, else the midpoint of the feasible interval
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(yg[free]))
    else:
        ub = np.inf
        lb = -np.inf
        for k in range(n):
            if (alpha[k] >= C and y[k] < 0) or (alpha[k] <= 0 and y[k] > 0):
                ub = min(ub, yg[k])
            else:
                lb = max(lb, yg[k])
        rho = (ub + lb) / 2
    return alpha, -rho, it


def svm_train(features, labels, cfg=None):
    """Train a binary RBF SVM; label 1/True is the positive (idling) class."""
    cfg = cfg or SvmConfig()
    X = np.asarray(features, dtype=np.float64)
    y = _labels(labels)
    if not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("SVM training needs samples of both classes")
    var = X.var()
    gamma = cfg.gamma if cfg.gamma is not None else (1.0 / (X.shape[1] * var) if var > 0 else 1.0)
    K = rbf_kernel(X, X, gamma)
    alpha, b, it = smo(K, y, cfg.C, cfg.tol, cfg.max_iter)
    sv = alpha > 0
    model = SvmModel(X[sv], alpha[sv] * y[sv], b, gamma, cfg.C, alpha=alpha, y=y, n_iter=it)
    dec = K[:, sv] @ model.coef + b
    model.prob_a, model.prob_b = platt_fit(dec, y > 0)
    return model


def decision_function(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return rbf_kernel(X, model.support, model.gamma) @ model.coef + model.b


def svm_predict_proba(model, X):
    """Calibrated probability of the positive class for each row of ``X``."""
    f = decision_function(model, X)
    z = model.prob_a * f + model.prob_b
    # 1 / (1 + exp(z)) without overflow
    return np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))


def platt_fit(dec, positive, max_iter=100, min_step=1e-10, sigma=1e-12, eps=1e-5):
    """Fit ``P(y=1|f) = 1 / (1 + exp(A f + B))`` by regularized maximum likelihood.

    Newton iterations with backtracking on Platt's smoothed targets
    (the Lin, Lin & Weng formulation).
    """
    dec = np.asarray(dec, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    prior1 = float(positive.sum())
    prior0 = float(len(positive) - prior1)
    hi, lo = (prior1 + 1) / (prior1 + 2), 1 / (prior0 + 2)
    t = np.where(positive, hi, lo)
    A, B = 0.0, np.log((prior0 + 1) / (prior1 + 1))

    def objective(A, B):
        fApB = dec * A + B
        return float(np.sum(np.where(fApB >= 0, t * fApB + np.log1p(np.exp(-fApB)), (t - 1) * fApB + np.log1p(np.exp(fApB)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        fApB = dec * A + B
        p = np.where(fApB >= 0, np.exp(-fApB) / (1 + np.exp(-fApB)), 1 / (1 + np.exp(fApB)))
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(dec * dec * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(dec * d2)
        d1 = t - p
        g1 = np.sum(dec * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


def kkt_violation(model, K):
    """Largest KKT violation of the training solution, in units of y f(x).

    ``K`` is the training kernel matrix (see ``training_kernel``).
    """
    alpha, y, C = model.alpha, model.y, model.C
    f = K @ (alpha * y) + model.b
    m = y * f
    viol = np.zeros_like(m)
    at0 = alpha <= 0
    atC = alpha >= C
    free = ~at0 & ~atC
    viol[at0] = np.maximum(0.0, 1 - m[at0])
    viol[atC] = np.maximum(0.0, m[atC] - 1)
    viol[free] = np.abs(m[free] - 1)
    return float(viol.max())


def training_kernel(model, X):
    return rbf_kernel(np.asarray(X, dtype=np.float64), np.asarray(X, dtype=np.float64), model.gamma)
