"""Block three-by-three saddle operator: assembly, splitting, scaling, residuals.

The systems handled here couple a symmetric positive (semi)definite block A
with two constraint blocks B and C through the nonsymmetric arrangement

    [  A   B^T   0  ]
    [ -B    0  -C^T ]
    [  0    C    0  ]

acting on stacked unknowns (x; y; z) of sizes (n, m, l).  The skew placement
of B and C makes the operator positive semi-definite in the real sense, which
is what the alternating splitting in :mod:`apss.splitting` exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import column_two_norms, frobenius_norm

__all__ = [
    "SaddleSystem",
    "BlockVector",
    "ScalingRecord",
    "assemble_full",
    "assemble_split",
    "scale_system",
    "rhs_for_ones",
    "residual_norm",
]

_SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """The block triple (A, B, C) with A symmetric n x n, B m x n, C l x m.

    Instances are treated as immutable; none of the operations in this package
    mutate the stored matrices.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix

    def __post_init__(self):
        a, b, c = self.A, self.B, self.C
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got {a.shape}")
        if b.shape[1] != a.shape[0]:
            raise ValueError(f"B has {b.shape[1]} columns, expected {a.shape[0]}")
        if c.shape[1] != b.shape[0]:
            raise ValueError(f"C has {c.shape[1]} columns, expected {b.shape[0]}")
        asym = (a - a.T).tocsr()
        dev = np.max(np.abs(asym.data)) if asym.nnz else 0.0
        if dev > _SYMMETRY_RTOL * max(frobenius_norm(a), 1e-300):
            raise ValueError(f"A is not numerically symmetric (max deviation {dev:.3e})")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def l(self) -> int:
        return self.C.shape[0]

    @property
    def total_dim(self) -> int:
        return self.n + self.m + self.l


@dataclass
class BlockVector:
    """Unknown (x; y; z) partitioned to match a SaddleSystem."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def from_flat(cls, v: np.ndarray, system: SaddleSystem) -> "BlockVector":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (system.total_dim,):
            raise ValueError(f"flat vector has shape {v.shape}, expected ({system.total_dim},)")
        n, m = system.n, system.m
        return cls(v[:n].copy(), v[n:n + m].copy(), v[n + m:].copy())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, self.z])


@dataclass
class ScalingRecord:
    """Positive diagonal weights d used in the congruence D^{-1/2} A D^{-1/2}."""

    d: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        if np.any(self.d <= 0):
            raise ValueError("scaling weights must be strictly positive")

    def unscale_solution(self, x_scaled: np.ndarray) -> np.ndarray:
        """Map a solution of the scaled system back to the original variables."""
        return np.asarray(x_scaled) / np.sqrt(self.d)


def assemble_full(system: SaddleSystem) -> sp.csr_matrix:
    """Assemble the full nonsymmetric operator in canonical CSR form."""
    a, b, c = system.A, system.B, system.C
    full = sp.bmat([[a, b.T, None],
                    [-b, None, -c.T],
                    [None, c, None]], format="csr")
    full.sort_indices()
    return full


def assemble_split(system: SaddleSystem) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """The two positive semi-definite parts whose sum is the full operator.

    The first part carries A and the B coupling, the second the skew C
    coupling; their stored entries occupy disjoint blocks, so the sum equals
    the assembled operator entrywise.
    """
    a, b, c = system.A, system.B, system.C
    n, m, l = system.n, system.m, system.l
    zl = sp.csr_matrix((l, l))
    part1 = sp.bmat([[a, b.T, None],
                     [-b, None, sp.csr_matrix((m, l))],
                     [None, sp.csr_matrix((l, m)), zl]], format="csr")
    part2 = sp.bmat([[sp.csr_matrix((n, n)), None, None],
                     [None, sp.csr_matrix((m, m)), -c.T],
                     [None, c, zl]], format="csr")
    part1.sort_indices()
    part2.sort_indices()
    return part1, part2


def scale_system(system: SaddleSystem) -> tuple[SaddleSystem, ScalingRecord]:
    """Symmetric diagonal scaling by the column norms of the assembled operator.

    With d the column 2-norms (zero columns are assigned weight 1), the scaled
    operator is D^{-1/2} * full * D^{-1/2}; the returned system holds its
    blocks.  The congruence preserves the block sign pattern.
    """
    full = assemble_full(system)
    d = column_two_norms(full)
    d[d == 0.0] = 1.0
    n, m = system.n, system.m
    sx = 1.0 / np.sqrt(d[:n])
    sy = 1.0 / np.sqrt(d[n:n + m])
    sz = 1.0 / np.sqrt(d[n + m:])
    dx = sp.diags(sx, format="csr")
    dy = sp.diags(sy, format="csr")
    dz = sp.diags(sz, format="csr")
    a = (dx @ system.A @ dx).tocsr()
    b = (dy @ system.B @ dx).tocsr()
    c = (dz @ system.C @ dy).tocsr()
    for blk in (a, b, c):
        blk.sort_indices()
    return SaddleSystem(a, b, c), ScalingRecord(d)


def rhs_for_ones(system: SaddleSystem) -> np.ndarray:
    """Right-hand side whose exact solution is the all-ones vector.

    Being an image vector, the result keeps the system consistent even when
    the assembled operator is singular.
    """
    return assemble_full(system) @ np.ones(system.total_dim)


def residual_norm(system: SaddleSystem, x: BlockVector | np.ndarray, b: np.ndarray) -> float:
    """Relative residual ||b - full @ x||_2 / ||b||_2 of the assembled system."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        raise ValueError("residual_norm requires a nonzero right-hand side")
    xf = x.to_flat() if isinstance(x, BlockVector) else np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(b - assemble_full(system) @ xf) / bnorm)
