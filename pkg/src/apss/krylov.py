"""Iterative solvers: conjugate gradients and flexible GMRES with right
preconditioning.

Both solvers are matrix-free: the operator (and preconditioner) are callables
on flat vectors.  FGMRES keeps the preconditioned direction vectors, so the
preconditioner may change from step to step (inner iterative solves are fine).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["SolveReport", "CgBreakdownError", "cg", "fgmres"]

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``residual_history`` holds one relative residual per iteration, starting
    with the initial one; for :func:`cg` the values are recurrence residuals
    relative to the starting residual, for :func:`fgmres` they are relative to
    ||b|| and the final entry is a true (unprojected) residual.
    """

    iterations: int
    residual_history: np.ndarray
    converged: bool
    wall_seconds: float


class CgBreakdownError(RuntimeError):
    """p^T A p <= 0 occurred: the operator is not positive definite.

    The best iterate so far is available as ``iterate``.
    """

    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = iterate


def cg(apply: Operator, b: np.ndarray, x0: np.ndarray | None = None,
       reduction: float = 1e-3, maxit: int = 200) -> tuple[np.ndarray, SolveReport]:
    """Conjugate gradients on an SPD operator.

    Stops once the residual 2-norm has dropped below ``reduction`` times the
    starting residual norm, or after ``maxit`` iterations (returning the last
    iterate with ``converged=False``).
    """
    if not 0.0 < reduction < 1.0:
        raise ValueError("reduction must lie in (0, 1)")
    start = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply(x) if x.any() else b.copy()
    r0 = np.linalg.norm(r)
    history = [1.0]
    if r0 == 0.0:
        return x, SolveReport(0, np.array([0.0]), True, time.perf_counter() - start)
    target = reduction * r0
    p = r.copy()
    rr = r @ r
    it = 0
    converged = np.sqrt(rr) <= target
    while not converged and it < maxit:
        ap = apply(p)
        pap = p @ ap
        if pap <= 0.0:
            raise CgBreakdownError(
                f"cg breakdown at iteration {it}: p^T A p = {pap:.3e} (operator not SPD)", x)
        alpha = rr / pap
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = r @ r
        it += 1
        history.append(np.sqrt(rr_new) / r0)
        converged = np.sqrt(rr_new) <= target
        beta = rr_new / rr
        rr = rr_new
        p = r + beta * p
    return x, SolveReport(it, np.asarray(history), bool(converged),
                          time.perf_counter() - start)


def fgmres(apply: Operator, precond: Operator | None, b: np.ndarray,
           x0: np.ndarray | None = None, tol: float = 1e-7, maxit: int = 2000,
           restart: int | None = None) -> tuple[np.ndarray, SolveReport]:
    """Flexible GMRES with right preconditioning.

    The default ``restart=None`` runs the complete method: one Arnoldi space
    grown until convergence or ``maxit`` total iterations.  Passing an integer
    rebuilds the space every ``restart`` steps, which reproduces the behaviour
    of classical restarted solvers (and their stagnation on hard problems).

    Orthogonalization is modified Gram-Schmidt with a second pass whenever the
    projected remainder is small (||w_new|| < 1e-3 ||w||), and the least
    squares problem is updated by Givens rotations.  Convergence is flagged on
    the rotation-estimated residual and then confirmed against the true
    residual; on singular (but consistent) systems the estimate can be
    optimistic, in which case the iteration simply continues.

    Raises ``ValueError`` for a zero right-hand side.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if maxit < 1:
        raise ValueError("maxit must be at least 1")
    start = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        raise ValueError("fgmres requires a nonzero right-hand side")
    dim = b.shape[0]
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=np.float64)
    history: list[float] = []
    total = 0
    confirm_every_step = False

    def finish(xf: np.ndarray, conv: bool) -> tuple[np.ndarray, SolveReport]:
        return xf, SolveReport(total, np.asarray(history), conv,
                               time.perf_counter() - start)

    while True:
        r = b - apply(x) if x.any() else b - 0.0
        beta = np.linalg.norm(r)
        if not history:
            history.append(beta / bnorm)
        if beta / bnorm <= tol:
            return finish(x, True)
        if total >= maxit:
            return finish(x, False)
        cycle = maxit - total if restart is None else min(restart, maxit - total)
        v = np.zeros((cycle + 1, dim))
        z = np.zeros((cycle, dim))
        h = np.zeros((cycle + 1, cycle))
        cs = np.zeros(cycle)
        sn = np.zeros(cycle)
        g = np.zeros(cycle + 1)
        v[0] = r / beta
        g[0] = beta
        k = 0
        happy = False

        def current_solution() -> np.ndarray:
            y = np.linalg.solve(h[:k, :k], g[:k])
            return x + z[:k].T @ y

        for j in range(cycle):
            zj = v[j] if precond is None else precond(v[j])
            w = apply(zj)
            z[j] = zj
            wnorm = np.linalg.norm(w)
            for i in range(j + 1):
                h[i, j] = v[i] @ w
                w -= h[i, j] * v[i]
            if np.linalg.norm(w) < 1e-3 * wnorm:
                # orthogonality loss: one more modified Gram-Schmidt pass
                for i in range(j + 1):
                    corr = v[i] @ w
                    h[i, j] += corr
                    w -= corr * v[i]
            h[j + 1, j] = np.linalg.norm(w)
            happy = h[j + 1, j] <= 1e-14 * max(wnorm, bnorm)
            if not happy:
                v[j + 1] = w / h[j + 1, j]
            for i in range(j):
                t = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = t
            rho = np.hypot(h[j, j], h[j + 1, j])
            if rho == 0.0:
                cs[j], sn[j], rho = 1.0, 0.0, 1.0
            else:
                cs[j] = h[j, j] / rho
                sn[j] = h[j + 1, j] / rho
            h[j, j] = rho
            h[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            total += 1
            estimate = abs(g[j + 1]) / bnorm
            history.append(estimate)
            if estimate <= tol or happy or confirm_every_step:
                xc = current_solution()
                true_res = np.linalg.norm(b - apply(xc)) / bnorm
                if true_res <= tol:
                    history[-1] = true_res
                    return finish(xc, True)
                if happy:
                    # invariant Krylov space, nothing further can improve
                    history[-1] = true_res
                    return finish(xc, False)
                if estimate <= tol:
                    # estimate is optimistic (singular operator): keep going,
                    # but track the true residual from now on
                    confirm_every_step = True
            if total >= maxit:
                break
        if k:
            x = current_solution()
        if total >= maxit:
            true_res = np.linalg.norm(b - apply(x)) / bnorm
            history[-1] = min(history[-1], true_res) if history else true_res
            return finish(x, true_res <= tol)
