"""Graph Laplacian, synchronization certificate, and equilibrium solving.

The certificate is the sufficient condition for existence of a unique stable
equilibrium whose neighboring angle differences are bounded by gamma:

    max over edges (i,j) of |(L^+ p)_i - (L^+ p)_j|  <=  sin(gamma)

with L the weighted graph Laplacian and L^+ its Moore-Penrose inverse.
Equilibria are found by damped Newton iteration on the gauge-reduced system
(one angle pinned, removing the uniform-shift invariance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import StageModel


class EquilibriumError(RuntimeError):
    pass


class RankError(np.linalg.LinAlgError):
    def __init__(self, msg, singular_values):
        super().__init__(msg)
        self.singular_values = singular_values


def laplacian(stage: StageModel) -> np.ndarray:
    """Weighted graph Laplacian L = diag(row sums of K) - K."""
    return np.diag(stage.K.sum(axis=1)) - stage.K


def pseudoinverse(L: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Moore-Penrose inverse, verified against the four Penrose identities."""
    L = np.asarray(L, dtype=float)
    Lp = np.linalg.pinv(L, hermitian=bool(np.allclose(L, L.T)))
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    checks = (
        np.abs(L @ Lp @ L - L).max(initial=0.0) / scale,
        np.abs(Lp @ L @ Lp - Lp).max(initial=0.0),
        np.abs((L @ Lp) - (L @ Lp).T).max(initial=0.0),
        np.abs((Lp @ L) - (Lp @ L).T).max(initial=0.0),
    )
    if max(checks) > tol:
        raise RankError(
            f"pseudoinverse failed Penrose identity check (max defect {max(checks):.2e})",
            np.linalg.svd(L, compute_uv=False),
        )
    return Lp


def edge_dissimilarity(y: np.ndarray, edges) -> float:
    """Worst-case dissimilarity: max over edges of |y_i - y_j|."""
    if not edges:
        return 0.0
    y = np.asarray(y, dtype=float)
    return max(abs(y[i] - y[j]) for i, j in edges)


@dataclass(frozen=True)
class Certificate:
    gamma: float
    lhs: float       # worst-case dissimilarity of L^+ p over the edges
    rhs: float       # sin(gamma)
    passed: bool
    margin: float


def sync_certificate(stage: StageModel, gamma: float) -> Certificate:
    """Check the sufficient synchronization condition at cohesiveness gamma."""
    if not 0.0 < gamma <= math.pi / 2:
        raise ValueError("gamma must lie in (0, pi/2]")
    Lp = pseudoinverse(laplacian(stage))
    lhs = edge_dissimilarity(Lp @ stage.p, stage.edges)
    rhs = math.sin(gamma)
    # equality counts as a pass; tolerate round-off at the boundary
    return Certificate(gamma=gamma, lhs=lhs, rhs=rhs,
                       passed=lhs <= rhs + 1e-12, margin=rhs - lhs)


@dataclass(frozen=True)
class EquilibriumResult:
    angles: np.ndarray       # equilibrium rotor angles (velocities are zero)
    residual: float          # max-norm of the equilibrium equations
    cohesive_gamma: float    # max over edges of |angle_i - angle_j|


def _residual(stage, x):
    return stage.p - (stage.K * np.sin(x[:, None] - x[None, :])).sum(axis=1)


def find_equilibrium(stage: StageModel, guess, gauge_index: int = 0,
                     tol: float = 1e-10, max_iter: int = 100) -> EquilibriumResult:
    """Solve p_i = sum_j K_ij sin(x_i - x_j) with one angle pinned.

    The stage should be frame-shifted (zero-sum p); otherwise no equilibrium
    exists and the iteration cannot converge.  Damped Newton: the step is
    halved (up to 30 times) whenever the residual norm would increase.
    """
    x = np.asarray(guess, dtype=float).copy()
    if x.shape != (stage.m,):
        raise ValueError(f"guess must have length {stage.m}")
    free = np.array([i for i in range(stage.m) if i != gauge_index])
    if free.size == 0:  # single machine: equilibrium iff p == 0
        res = float(np.abs(_residual(stage, x)).max())
        if res > tol:
            raise EquilibriumError(f"single-machine stage has p != 0 (residual {res:.2e})")
        return EquilibriumResult(x, res, 0.0)

    F = _residual(stage, x)
    for _ in range(max_iter):
        norm = np.linalg.norm(F)
        if np.abs(F).max() < tol:
            break
        C = stage.K * np.cos(x[:, None] - x[None, :])
        J = -(np.diag(C.sum(axis=1)) - C)          # dF/dx
        Jr = J[np.ix_(free, free)]
        try:
            dx = np.linalg.solve(Jr, -F[free])
        except np.linalg.LinAlgError as e:
            raise EquilibriumError(
                "singular Jacobian in Newton iteration; retry with a perturbed guess"
            ) from e
        step = 1.0
        for _ in range(30):
            x_try = x.copy()
            x_try[free] += step * dx
            F_try = _residual(stage, x_try)
            if np.linalg.norm(F_try) < norm or step < 1e-8:
                break
            step *= 0.5
        x, F = x_try, F_try
    else:
        raise EquilibriumError(
            f"Newton did not converge in {max_iter} iterations "
            f"(residual {np.abs(F).max():.2e})"
        )
    return EquilibriumResult(
        angles=x,
        residual=float(np.abs(F).max()),
        cohesive_gamma=edge_dissimilarity(x, stage.edges),
    )


def reduced_jacobian_eigenvalues(stage: StageModel, angles,
                                 gauge_index: int = 0) -> np.ndarray:
    """Diagnostic: eigenvalues of the linearized dynamics on the reduced space.

    Nonpositive real parts corroborate stability of an equilibrium; this is
    optional and not part of the certificate.
    """
    x = np.asarray(angles, dtype=float)
    m = stage.m
    free = np.array([i for i in range(m) if i != gauge_index])
    C = stage.K * np.cos(x[:, None] - x[None, :])
    Jang = -(np.diag(C.sum(axis=1)) - C)
    A = np.zeros((2 * (m - 1), 2 * (m - 1)))
    n = m - 1
    A[:n, n:] = np.eye(n)
    A[n:, :n] = Jang[np.ix_(free, free)]
    A[n:, n:] = -np.diag(stage.d[free])
    return np.linalg.eigvals(A)
