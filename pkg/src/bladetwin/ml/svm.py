"""Soft-margin RBF support vector machines trained by SMO.

The binary solver follows the dual form
    min 1/2 a^T Q a - e^T a,  0 <= a_i <= C,  y^T a = 0,  Q_ij = y_i y_j K_ij
with second-order working-set selection: i maximises -y_t G_t over I_up and
j minimises -b^2 / a over the violating part of I_low.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MLError

TAU = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySVM:
    support_vectors: np.ndarray
    coef: np.ndarray  # alpha_i y_i of the support vectors
    rho: float
    gamma: float
    iterations: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.atleast_2d(X), self.support_vectors, self.gamma) @ self.coef - self.rho

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "coef": self.coef.tolist(),
            "rho": self.rho,
            "gamma": self.gamma,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinarySVM":
        sv = np.array(d["support_vectors"], float).reshape(len(d["coef"]), -1)
        return cls(sv, np.array(d["coef"], float), float(d["rho"]), float(d["gamma"]), int(d.get("iterations", 0)))


@dataclass
class SmoState:
    alpha: np.ndarray
    grad: np.ndarray
    y: np.ndarray
    C: float


def _select(state: SmoState, K: np.ndarray, tol: float):
    a, G, y, C = state.alpha, state.grad, state.y, state.C
    score = -y * G
    up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
    low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    i = int(np.flatnonzero(up)[np.argmax(score[up])])
    gmax = score[i]
    gmin = float(np.min(score[low]))
    gap = gmax - gmin
    if gap < tol:
        return -1, -1, gap
    cand = low & (score < gmax)
    idx = np.flatnonzero(cand)
    b = gmax - score[idx]
    quad = K[i, i] + np.diag(K)[idx] - 2.0 * K[i, idx]
    quad = np.where(quad > 0, quad, TAU)
    j = int(idx[np.argmin(-(b * b) / quad)])
    return i, j, gap


def smo_binary(K: np.ndarray, y: np.ndarray, C: float = 1.0, tol: float = 1e-3, max_iter: int = 100_000):
    """Solve the binary dual on a precomputed kernel; returns (alpha, rho, iterations)."""
    n = len(y)
    y = np.asarray(y, dtype=float)
    state = SmoState(np.zeros(n), -np.ones(n), y, C)
    a, G = state.alpha, state.grad
    it = 0
    gap = np.inf
    while True:
        i, j, gap = _select(state, K, tol)
        if i < 0:
            break
        if it >= max_iter:
            raise MLError(f"SMO did not converge within {max_iter} iterations (KKT violation {gap:.3g})")
        it += 1
        ai_old, aj_old = a[i], a[j]
        if y[i] != y[j]:
            quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        di, dj = a[i] - ai_old, a[j] - aj_old
        G += y * (y[i] * K[:, i] * di + y[j] * K[:, j] * dj)
    return a.copy(), _rho(state), it


def _rho(state: SmoState) -> float:
    a, G, y, C = state.alpha, state.grad, state.y, state.C
    yG = y * G
    free = (a > 0) & (a < C)
    if free.any():
        return float(np.mean(yG[free]))
    # bounds from the at-bound variables
    ub_mask = ((y > 0) & (a >= C)) | ((y < 0) & (a <= 0))
    lb_mask = ((y > 0) & (a <= 0)) | ((y < 0) & (a >= C))
    ub = float(np.min(yG[ub_mask])) if ub_mask.any() else np.inf
    lb = float(np.max(yG[lb_mask])) if lb_mask.any() else -np.inf
    return 0.5 * (ub + lb)


def train_binary(X: np.ndarray, y: np.ndarray, C: float, gamma: float, tol: float = 1e-3, max_iter: int = 100_000):
    """Binary machine with labels y in {+1, -1}."""
    K = rbf_kernel(X, X, gamma)
    alpha, rho, it = smo_binary(K, y, C, tol, max_iter)
    sv = alpha > 0
    return BinarySVM(X[sv].copy(), (alpha * y)[sv], rho, gamma, it), alpha


def kkt_violations(X: np.ndarray, y: np.ndarray, alpha: np.ndarray, machine: BinarySVM, C: float, tol: float) -> int:
    """Count training points whose margin breaks complementary slackness by more than ``tol``."""
    m = y * machine.decision(X)
    lower = alpha <= 0
    upper = alpha >= C
    free = ~lower & ~upper
    bad = (lower & (m < 1 - tol)) | (upper & (m > 1 + tol)) | (free & (np.abs(m - 1) > tol))
    return int(np.sum(bad))
