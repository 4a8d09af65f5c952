"""Entropic optimal transport between source and generated positions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import ShapeError
from .local import ModulationField
from .tensor import feature_map

log = logging.getLogger(__name__)

BALANCED = "balanced"
UNBALANCED = "unbalanced"

# balanced solves switch from scaling updates to Newton steps on the dual
# after this many iterations (or half of max_iters) when n + m is small
SCALING_BUDGET = 500
NEWTON_MAX_SIZE = 1024


@dataclass(frozen=True)
class TransportPlan:
    """Coupling ``matrix[i, j]``: mass moved from source ``i`` to target ``j``.

    ``iterations``, ``violation`` (max absolute marginal error of the stored
    matrix) and ``converged`` describe the solve; ``warning`` is set when a
    balanced solve stopped at ``max_iters`` above tolerance.
    """

    matrix: np.ndarray
    mode: str
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int = 0
    violation: float = 0.0
    converged: bool = True

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def warning(self) -> bool:
        return self.mode == BALANCED and not self.converged

    def transposed(self) -> "TransportPlan":
        """Plan oriented target x source."""
        return TransportPlan(
            np.ascontiguousarray(self.matrix.T), self.mode, self.beta, self.alpha,
            self.iterations, self.violation, self.converged,
        )

    def cost(self, C) -> float:
        return float(np.sum(np.asarray(C, dtype=np.float64) * self.matrix))


def cost_matrix(F_s, F_o, epsilon_norm: float = 1e-8) -> np.ndarray:
    """Cosine cost ``1 - <s_i, o_j> / ((|s_i| + eps)(|o_j| + eps))`` over positions.

    Returns an ``HW x HW`` float32 matrix with values in ``[0, 2]``.
    """
    F_s = feature_map(F_s, "F_s")
    F_o = feature_map(F_o, "F_o")
    if F_s.shape != F_o.shape:
        raise ShapeError(f"F_s {F_s.shape} and F_o {F_o.shape} differ")
    if epsilon_norm <= 0:
        raise ValueError("epsilon_norm must be positive")
    s = F_s.reshape(F_s.shape[0], -1).astype(np.float64)
    o = F_o.reshape(F_o.shape[0], -1).astype(np.float64)
    ns = np.sqrt((s * s).sum(axis=0)) + epsilon_norm
    no = np.sqrt((o * o).sum(axis=0)) + epsilon_norm
    cos = (s.T @ o) / np.outer(ns, no)
    return np.clip(1.0 - cos, 0.0, 2.0).astype(np.float32)


def uniform_marginal(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def sinkhorn(
    C,
    alpha=None,
    beta=None,
    eps_reg: float = 0.05,
    tau: float = 10.0,
    max_iters: int = 2000,
    tol: float = 1e-6,
    mode: str = BALANCED,
) -> TransportPlan:
    """Entropy-regularized transport plan by alternating scaling updates.

    The scalings are periodically absorbed into log-domain dual potentials,
    which keeps the kernel from under/overflowing at small ``eps_reg``.

    In ``"balanced"`` mode both marginals are enforced and iteration stops
    once the marginal error of the current plan falls below ``tol``.
    Scaling updates converge slowly when the plan is close to a
    permutation, so for ``n + m <= 1024`` a solve still running after
    ``min(max_iters // 2, 500)`` updates continues with damped Newton steps
    on the same dual problem; each step counts as one iteration.  ``"unbalanced"`` mode
    relaxes both marginals with a KL penalty of strength ``tau``; each
    update is raised to ``tau / (tau + eps_reg)`` and iteration stops when
    the log-scalings change by less than ``tol``.

    Non-convergence is not an error: the plan is returned with
    ``converged=False`` and a warning is logged.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise ShapeError(f"cost must be a matrix, got shape {C.shape}")
    n, m = C.shape
    a = uniform_marginal(n) if alpha is None else np.asarray(alpha, dtype=np.float64)
    b = uniform_marginal(m) if beta is None else np.asarray(beta, dtype=np.float64)
    if a.shape != (n,) or b.shape != (m,):
        raise ShapeError(f"marginals {a.shape}, {b.shape} do not match cost {C.shape}")
    if np.any(a < 0) or np.any(b < 0) or a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("marginals must be non-negative with positive mass")
    if eps_reg <= 0 or tau <= 0:
        raise ValueError("eps_reg and tau must be positive")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    if mode == BALANCED:
        exponent = 1.0
    elif mode == UNBALANCED:
        exponent = tau / (tau + eps_reg)
    else:
        raise ValueError(f"unknown transport mode {mode!r}")

    # zero-mass rows/columns carry no plan entries; solve on the support
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    C_sub = np.ascontiguousarray(C[np.ix_(rows, cols)])
    a_sub = np.ascontiguousarray(a[rows])
    b_sub = np.ascontiguousarray(b[cols])
    # stop short of tol so rounding the plan to float32 stays inside it
    inner_tol = 0.5 * tol
    polish = mode == BALANCED and rows.size + cols.size <= NEWTON_MAX_SIZE
    budget = max(1, min(max_iters // 2, SCALING_BUDGET)) if polish else max_iters
    sub, f, g, iters, converged = kernels.sinkhorn(
        C_sub, a_sub, b_sub, float(eps_reg), float(exponent), int(budget), float(inner_tol)
    )
    if polish and not converged and iters < max_iters:
        sub, steps, converged = _newton_polish(C_sub, a_sub, b_sub, eps_reg, f, g, max_iters - iters, inner_tol)
        iters += steps
    plan = np.zeros((n, m))
    plan[np.ix_(rows, cols)] = sub
    plan = plan.astype(np.float32)
    p64 = plan.astype(np.float64)
    violation = max(np.abs(p64.sum(axis=1) - a).max(), np.abs(p64.sum(axis=0) - b).max())
    if mode == BALANCED:
        converged = converged and violation < tol
    if mode == BALANCED and not converged:
        log.warning("sinkhorn stopped after %d iterations with marginal violation %.3e", iters, violation)
    return TransportPlan(plan, mode, a, b, int(iters), float(violation), bool(converged))


def _newton_polish(C, a, b, eps, f, g, max_steps, tol):
    """Levenberg-Marquardt damped Newton ascent on the entropic dual.

    Starts from the potentials ``(f, g)`` and solves ``(H + lam I) d = grad``
    with the damping ``lam`` shrunk after accepted steps and grown after
    rejected ones.  The damping also removes the constant-shift null space
    of ``H``.  Returns ``(plan, steps, converged)``; every trial counts as
    a step.
    """
    n = C.shape[0]

    def evaluate(f, g):
        with np.errstate(over="ignore"):
            P = np.exp((f[:, None] + g[None, :] - C) / eps)
        r, c = P.sum(axis=1), P.sum(axis=0)
        viol = max(np.abs(r - a).max(), np.abs(c - b).max())
        return P, r, c, viol, a @ f + b @ g - eps * P.sum()

    P, r, c, viol, value = evaluate(f, g)
    lam = 1e-3 * max(r.max(), c.max()) / eps
    steps = 0
    while steps < max_steps and viol >= tol:
        grad = np.concatenate([a - r, b - c])
        H = np.block([[np.diag(r), P], [P.T, np.diag(c)]]) / eps
        H[np.diag_indices_from(H)] += lam
        d = np.linalg.solve(H, grad)
        steps += 1
        trial = evaluate(f + d[:n], g + d[n:])
        if np.isfinite(trial[4]) and (trial[4] > value or trial[3] < viol):
            f, g = f + d[:n], g + d[n:]
            P, r, c, viol, value = trial
            lam = max(lam / 3.0, 1e-300)
        else:
            lam *= 4.0
    return P, steps, bool(viol < tol)


def row_normalize(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    sums = P.sum(axis=1, keepdims=True)
    return np.divide(P, sums, out=np.zeros_like(P), where=sums > 0)


def warp_modulation(TP, field: ModulationField, normalize_rows: bool = True) -> ModulationField:
    """Re-express a modulation field through a plan: ``out = P @ field``.

    Rows of ``P`` index output positions and columns index positions of
    ``field``.  By default rows are scaled to sum to one, making each output
    a convex combination of input parameters; ``normalize_rows=False`` uses
    the raw plan.
    """
    P = TP.matrix if isinstance(TP, TransportPlan) else np.asarray(TP)
    H, W, C = field.shape
    n = H * W
    if P.shape != (n, n):
        raise ShapeError(f"plan {P.shape} does not match {n} field positions")
    P = row_normalize(P) if normalize_rows else P.astype(np.float64)
    kk = field.taps.shape[3]
    taps = P @ field.taps.reshape(n, C * kk).astype(np.float64)
    bias = P @ field.bias.reshape(n, C).astype(np.float64)
    return ModulationField(taps.reshape(H, W, C, kk), bias.reshape(H, W, C), field.k)
