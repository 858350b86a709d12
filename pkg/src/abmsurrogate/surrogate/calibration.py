"""Platt scaling and an L2-regularised logistic-regression baseline."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


LOGIT_FORMAT = "abmsurrogate.logit/1"


class ConvergenceError(RuntimeError):
    pass


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def platt_calibrate(raw_scores, y_true, max_iter: int = 100, tol: float = 1e-8) -> tuple[float, float]:
    """Fit ``P(y=1 | s) = 1 / (1 + exp(A s + B))``.

    Newton iterations with backtracking on the negative log-likelihood
    against Platt's smoothed targets ``(N+ + 1)/(N+ + 2)`` and ``1/(N- + 2)``.
    """
    s = np.asarray(raw_scores, dtype=float)
    y = np.asarray(y_true, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Platt scaling needs both classes")
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(A, B):
        f = A * s + B
        return float(np.sum(t * f + _log1pexp(-f)))

    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = objective(A, B)
    for _ in range(max_iter):
        f = A * s + B
        p = 1.0 / (1.0 + np.exp(np.clip(f, -700, 700)))
        d1 = t - p
        g1, g2 = float(np.dot(s, d1)), float(np.sum(d1))
        if abs(g1) < tol and abs(g2) < tol:
            break
        d2 = p * (1.0 - p)
        h11 = 1e-12 + float(np.dot(s * s, d2))
        h22 = 1e-12 + float(np.sum(d2))
        h21 = float(np.dot(s, d2))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return A, B


def apply_platt(raw_scores, A: float, B: float) -> np.ndarray:
    f = A * np.asarray(raw_scores, dtype=float) + B
    return np.exp(-_log1pexp(f))


@dataclass(frozen=True)
class LogitModel:
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray

    def decision(self, X) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.scale
        return Z @ self.weights + self.intercept

    def predict(self, X) -> np.ndarray:
        return np.exp(-_log1pexp(-self.decision(X)))

    @property
    def coef(self) -> np.ndarray:
        """Weights on the original (unstandardised) feature scale."""
        return self.weights / self.scale

    def to_json(self) -> str:
        return json.dumps({
            "format": LOGIT_FORMAT,
            "weights": [float(v) for v in self.weights],
            "intercept": float(self.intercept),
            "mean": [float(v) for v in self.mean],
            "scale": [float(v) for v in self.scale],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "LogitModel":
        doc = json.loads(text)
        if doc.get("format") != LOGIT_FORMAT:
            raise ValueError("not a logit model document")
        return cls(np.array(doc["weights"], dtype=float), float(doc["intercept"]),
                   np.array(doc["mean"], dtype=float), np.array(doc["scale"], dtype=float))


def fit_logit(X, y, l2: float = 1.0, max_iter: int = 100, tol: float = 1e-8) -> LogitModel:
    """Newton-Raphson on ``sum(logloss) + l2/2 |w|^2`` over standardised features.

    The intercept is not penalised.  Raises ``ConvergenceError`` when the
    iteration does not settle, which is what perfectly separable data does
    with ``l2 == 0``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise ValueError("logit needs both classes")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = np.hstack([np.ones((X.shape[0], 1)), (X - mean) / scale])
    penalty = np.full(Z.shape[1], float(l2))
    penalty[0] = 0.0

    def objective(beta):
        f = Z @ beta
        return float(np.sum(_log1pexp(f) - y * f) + 0.5 * np.sum(penalty * beta * beta))

    rate = y.mean()
    beta = np.zeros(Z.shape[1])
    beta[0] = math.log(rate / (1.0 - rate))
    fval = objective(beta)
    for _ in range(max_iter):
        p = np.exp(-_log1pexp(-(Z @ beta)))
        grad = Z.T @ (p - y) + penalty * beta
        hess = (Z * (p * (1.0 - p))[:, None]).T @ Z + np.diag(penalty)
        step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        t = 1.0
        while t >= 1e-10:
            cand = beta + t * step
            cf = objective(cand)
            if cf <= fval + 1e-4 * t * float(grad @ step):
                break
            t /= 2.0
        beta, fval = cand, cf
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 1e6:
            raise ConvergenceError("logit coefficients diverge (separable data?)")
        if np.max(np.abs(t * step)) < tol:
            # saturated probabilities stall Newton, but without a penalty the MLE does not exist
            if l2 == 0 and np.max(np.abs(np.exp(-_log1pexp(-(Z @ beta))) - y)) < 1e-6:
                raise ConvergenceError("logit coefficients diverge (separable data?)")
            return LogitModel(beta[1:].copy(), float(beta[0]), mean, scale)
    raise ConvergenceError(f"logit did not converge in {max_iter} iterations")
