"""Alternating positive semi-definite splitting (APSS) of the saddle operator.

The assembled operator splits as full = part1 + part2 with

    part1 = [ A  B^T 0 ]      part2 = [ 0  0    0  ]
            [ -B  0  0 ]              [ 0  0  -C^T ]
            [ 0   0  0 ]              [ 0  C    0  ]

both positive semi-definite in the real sense.  For a shift alpha > 0 the
two-half-step iteration

    (alpha I + part1) x^{k+1/2} = (alpha I - part2) x^k     + b
    (alpha I + part2) x^{k+1}   = (alpha I - part1) x^{k+1/2} + b

is driven by two SPD sub-solves obtained from block elimination:

    shifted part1:  (alpha I + A + (1/alpha) B^T B) w_x = r_x - (1/alpha) B^T r_y,
                    w_y = (r_y + B w_x)/alpha,  w_z = r_z/alpha
    shifted part2:  (alpha^2 I + C C^T) w_z = alpha r_z - C r_y,
                    w_y = (r_y + C^T w_z)/alpha,  w_x = r_x/alpha

Composing the two shifted inverses yields the preconditioner application
z = (alpha I + part2)^{-1} (alpha I + part1)^{-1} r used with FGMRES.  The
sub-solves run either through unpreconditioned CG (matrix-free Gram
operators) or through exact sparse factorizations.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .krylov import SolveReport, cg
from .saddle import BlockVector, SaddleSystem, assemble_full
from .sparse import frobenius_norm

__all__ = ["ApssOperator", "IterationDivergedError", "estimate_alpha", "apss_iterate"]

_DIVERGENCE_FACTOR = 1e6


class IterationDivergedError(RuntimeError):
    """Stationary iteration residual grew past the divergence guard.

    Carries the offending ``report`` built up to the abort point.
    """

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def estimate_alpha(system: SaddleSystem) -> float:
    """Shift estimate minimizing the quadratic surrogate of the splitting error.

    With n1 = ||part1||_F, n2 = ||part2||_F and N the total dimension, the
    surrogate  N a^2 - a (n1 + n2) + n1 n2  is minimized at
    (n1 + n2) / (2 N).  Meant to be evaluated on the system actually solved,
    i.e. after scaling.  Strictly positive whenever A is nonzero.
    """
    n1 = np.sqrt(frobenius_norm(system.A) ** 2 + 2.0 * frobenius_norm(system.B) ** 2)
    n2 = np.sqrt(2.0) * frobenius_norm(system.C)
    return float((n1 + n2) / (2.0 * system.total_dim))


class ApssOperator:
    """A fixed shift alpha bound to a system, exposing the two shifted solves.

    ``inner_mode`` selects how the SPD sub-systems are solved: ``"cg"`` runs
    unpreconditioned CG from a zero start until the residual drops by
    ``inner_reduction`` (at most ``inner_maxit`` steps), ``"exact"`` uses
    cached sparse LU factorizations.  ``stats`` counts inner iterations and
    how often the inner cap was hit.

    Instances are immutable apart from lazily cached factorizations and the
    counters; concurrent solves on one operator are safe.
    """

    def __init__(self, system: SaddleSystem, alpha: float,
                 inner_reduction: float = 1e-3, inner_maxit: int = 200,
                 inner_mode: str = "cg"):
        if alpha <= 0.0:
            raise ValueError("alpha must be strictly positive")
        if not 0.0 < inner_reduction < 1.0:
            raise ValueError("inner_reduction must lie in (0, 1)")
        if inner_mode not in ("cg", "exact"):
            raise ValueError(f"unknown inner_mode {inner_mode!r}")
        self.system = system
        self.alpha = float(alpha)
        self.inner_reduction = float(inner_reduction)
        self.inner_maxit = int(inner_maxit)
        self.inner_mode = inner_mode
        self.stats = {"inner_iterations": 0, "inner_cap_hits": 0}
        self._lu1 = None
        self._lu2 = None
        self._full = None

    # -- inner SPD solves -----------------------------------------------------

    def _gram1(self, v: np.ndarray) -> np.ndarray:
        a, b = self.system.A, self.system.B
        return self.alpha * v + a @ v + (b.T @ (b @ v)) / self.alpha

    def _gram2(self, v: np.ndarray) -> np.ndarray:
        c = self.system.C
        return self.alpha ** 2 * v + c @ (c.T @ v)

    def _factor(self):
        if self._lu1 is None:
            a, b, c = self.system.A, self.system.B, self.system.C
            n, l = self.system.n, self.system.l
            g1 = (self.alpha * sp.identity(n) + a + (b.T @ b) / self.alpha).tocsc()
            g2 = (self.alpha ** 2 * sp.identity(l) + (c @ c.T)).tocsc()
            self._lu1 = spla.splu(g1)
            self._lu2 = spla.splu(g2)

    def _inner_solve(self, which: int, rhs: np.ndarray) -> np.ndarray:
        if not rhs.any():
            return np.zeros_like(rhs)
        if self.inner_mode == "exact":
            self._factor()
            return (self._lu1 if which == 1 else self._lu2).solve(rhs)
        gram = self._gram1 if which == 1 else self._gram2
        x, report = cg(gram, rhs, reduction=self.inner_reduction, maxit=self.inner_maxit)
        self.stats["inner_iterations"] += report.iterations
        if not report.converged:
            self.stats["inner_cap_hits"] += 1
        return x

    # -- shifted block solves ---------------------------------------------------

    def solve_shift_a1(self, r: BlockVector) -> BlockVector:
        """Solve (alpha I + part1) w = r by elimination of the y and z blocks."""
        alpha, b = self.alpha, self.system.B
        wx = self._inner_solve(1, r.x - (b.T @ r.y) / alpha)
        wy = (r.y + b @ wx) / alpha
        wz = r.z / alpha
        return BlockVector(wx, wy, wz)

    def solve_shift_a2(self, r: BlockVector) -> BlockVector:
        """Solve (alpha I + part2) w = r; the z-block Gram is SPD for any rank of C."""
        alpha, c = self.alpha, self.system.C
        wx = r.x / alpha
        wz = self._inner_solve(2, alpha * r.z - c @ r.y)
        wy = (r.y + c.T @ wz) / alpha
        return BlockVector(wx, wy, wz)

    def apply_preconditioner(self, r: np.ndarray) -> np.ndarray:
        """z = (alpha I + part2)^{-1} (alpha I + part1)^{-1} r on flat vectors."""
        half = self.solve_shift_a1(BlockVector.from_flat(np.asarray(r, float), self.system))
        return self.solve_shift_a2(half).to_flat()

    # -- applications of the shifted right-hand-side operators -----------------

    def _apply_minus_a1(self, v: BlockVector) -> BlockVector:
        a, b = self.system.A, self.system.B
        alpha = self.alpha
        return BlockVector(alpha * v.x - (a @ v.x + b.T @ v.y),
                           alpha * v.y + b @ v.x,
                           alpha * v.z)

    def _apply_minus_a2(self, v: BlockVector) -> BlockVector:
        c = self.system.C
        alpha = self.alpha
        return BlockVector(alpha * v.x,
                           alpha * v.y + c.T @ v.z,
                           alpha * v.z - c @ v.y)

    def full_matrix(self) -> sp.csr_matrix:
        if self._full is None:
            self._full = assemble_full(self.system)
        return self._full


def apss_iterate(op: ApssOperator, b: np.ndarray, x0: np.ndarray | None = None,
                 tol: float = 1e-7, maxit: int = 2000) -> tuple[np.ndarray, SolveReport]:
    """Run the two-half-step stationary iteration until the relative residual
    of the full system drops below ``tol``.

    Equivalent to the fixed-point form x <- T x + f where T composes the four
    shifted factors and f = 2 alpha (alpha I + part2)^{-1} (alpha I + part1)^{-1} b.
    A residual blowing up by more than a factor 1e6 over the best one seen
    aborts with :class:`IterationDivergedError`.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    full = op.full_matrix()
    b = np.asarray(b, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        raise ValueError("apss_iterate requires a nonzero right-hand side")
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    sysd = op.system
    bv = BlockVector.from_flat(b, sysd)
    history = [float(np.linalg.norm(b - full @ x) / bnorm)]
    it = 0
    best = history[0]
    while history[-1] > tol and it < maxit:
        xb = BlockVector.from_flat(x, sysd)
        rhs1 = op._apply_minus_a2(xb)
        half = op.solve_shift_a1(BlockVector(rhs1.x + bv.x, rhs1.y + bv.y, rhs1.z + bv.z))
        rhs2 = op._apply_minus_a1(half)
        xb = op.solve_shift_a2(BlockVector(rhs2.x + bv.x, rhs2.y + bv.y, rhs2.z + bv.z))
        x = xb.to_flat()
        it += 1
        res = float(np.linalg.norm(b - full @ x) / bnorm)
        history.append(res)
        best = min(best, res)
        if res > _DIVERGENCE_FACTOR * best:
            report = SolveReport(it, np.asarray(history), False,
                                 time.perf_counter() - start)
            raise IterationDivergedError(
                f"residual grew to {res:.3e}, {res / best:.1e} times the best seen", report)
    return x, SolveReport(it, np.asarray(history), history[-1] <= tol,
                          time.perf_counter() - start)
