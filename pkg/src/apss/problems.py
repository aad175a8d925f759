"""Test problem generators and MatrixMarket / manifest file I/O.

Two generator families are provided: a deterministic Kronecker-product
discretization with a rank-deficient constraint block, and a seeded random
family for property testing.  Externally produced systems (for instance
Stokes discretizations exported from other tools) are loaded through the
MatrixMarket path plus a small manifest listing the three block files.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .saddle import SaddleSystem
from .sparse import from_triplets, kron, matrix_entries, tridiag

__all__ = [
    "gen_kron_example",
    "gen_random_singular",
    "load_matrix_market",
    "save_matrix_market",
    "write_system",
    "load_system",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.txt"


def gen_kron_example(p: int, duplicate_last_row: bool = False) -> SaddleSystem:
    """Kronecker-structured singular saddle system on a p x p grid, h = 1/(p+1).

    Blocks, with T = tridiag(-1, 2, -1)/h^2, F = tridiag(0, 1, -1)/h and
    E = diag(1, p+1, 2p+1, ..., p^2-p+1):

      A = blockdiag(I (x) T + T (x) I, I (x) T + T (x) I)   (2p^2 x 2p^2, SPD)
      B = [I (x) F, F (x) I]                                (p^2 x 2p^2)
      C = [C1; c1; c2],  C1 = E (x) F                       ((p^2+2) x p^2)

    where c1 and c2 sum the first and second halves of C1's rows.  The two
    appended rows are exact combinations of rows of the nonsingular C1, so
    rank(C) = p^2 and the assembled operator is singular with nullity 2.

    ``duplicate_last_row`` replaces c1 by a second copy of c2; the rank
    deficiency is unchanged.
    """
    if p < 2 or p % 2 != 0:
        raise ValueError("gen_kron_example requires an even p >= 2 "
                         "(the half-row sums need p^2 even)")
    h = 1.0 / (p + 1)
    t = tridiag(p, -1.0, 2.0, -1.0, 1.0 / h**2)
    f = tridiag(p, 0.0, 1.0, -1.0, 1.0 / h)
    i_p = sp.identity(p, format="csr")
    lap = (kron(i_p, t) + kron(t, i_p)).tocsr()
    a = sp.block_diag([lap, lap], format="csr")
    b = sp.hstack([kron(i_p, f), kron(f, i_p)], format="csr")
    e = sp.diags(1.0 + p * np.arange(p, dtype=np.float64), format="csr")
    c1_blk = kron(e, f)
    half = p * p // 2
    w1 = np.zeros(p * p)
    w1[:half] = 1.0
    w2 = np.zeros(p * p)
    w2[half:] = 1.0
    row_a = w2 @ c1_blk if duplicate_last_row else w1 @ c1_blk
    row_b = w2 @ c1_blk
    c = sp.vstack([c1_blk, sp.csr_matrix(row_a), sp.csr_matrix(row_b)], format="csr")
    for blk in (a, b, c):
        blk.sort_indices()
    return SaddleSystem(a.tocsr(), b.tocsr(), c.tocsr())


class _SplitMix64:
    """SplitMix64 generator with Box-Muller normals.

    The update is x += 0x9E3779B97F4A7C15 followed by two xor-shift-multiply
    mixes (constants 0xBF58476D1CE4E5B9, 0x94D049BB133111EB).  Uniforms take
    the top 53 bits.  The algorithm is spelled out so that seeds reproduce the
    same matrices in any implementation.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self._state = seed & self._MASK
        self._spare: float | None = None

    def _next(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & self._MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self._next() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        if self._spare is not None:
            v = self._spare
            self._spare = None
            return v
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        self._spare = r * np.sin(2.0 * np.pi * u2)
        return r * np.cos(2.0 * np.pi * u2)

    def normal_matrix(self, rows: int, cols: int) -> np.ndarray:
        return np.array([[self.normal() for _ in range(cols)] for _ in range(rows)])


def gen_random_singular(n: int, m: int, l: int, deficiency: int, seed: int) -> SaddleSystem:
    """Seeded random system with SPD A, full-row-rank B and rank(C) = l - deficiency.

    A = M^T M + I for an n x n normal draw M; B is an m x n normal draw
    (verified full row rank); C stacks l - deficiency independent normal rows
    and then ``deficiency`` random linear combinations of them.  Draw order is
    M, B, base rows, combination coefficients, all row-major, so a seed pins
    the system exactly.  Intended for desk-scale property tests.
    """
    if deficiency < 1:
        raise ValueError("deficiency must be >= 1")
    if l < deficiency:
        raise ValueError("need l >= deficiency")
    if m < l - deficiency:
        raise ValueError("need m >= l - deficiency to reach rank l - deficiency")
    if m > n:
        raise ValueError("need m <= n for B to have full row rank")
    rng = _SplitMix64(seed)
    mdraw = rng.normal_matrix(n, n)
    a = mdraw.T @ mdraw + np.eye(n)
    b = rng.normal_matrix(m, n)
    base = rng.normal_matrix(l - deficiency, m)
    coeff = rng.normal_matrix(deficiency, l - deficiency)
    c = np.vstack([base, coeff @ base]) if deficiency else base
    if np.linalg.matrix_rank(b) != m:
        raise RuntimeError("degenerate draw: B is not full row rank, use another seed")
    if np.linalg.matrix_rank(base) != l - deficiency:
        raise RuntimeError("degenerate draw: base rows of C are dependent, use another seed")

    def to_csr(dense: np.ndarray) -> sp.csr_matrix:
        rr, cc = np.nonzero(dense)
        return from_triplets(dense.shape[0], dense.shape[1],
                             zip(rr.tolist(), cc.tolist(), dense[rr, cc].tolist()))

    return SaddleSystem(to_csr(a), to_csr(b), to_csr(c))


# -- MatrixMarket coordinate I/O ---------------------------------------------
#
# Supported banner: %%MatrixMarket matrix coordinate real general|symmetric
# Indices are 1-based; symmetric files store one triangle and are expanded on
# load.  Values are written with 17 significant digits so that save -> load
# round-trips float64 exactly.

def save_matrix_market(m: sp.spmatrix, path: str | os.PathLike) -> None:
    m = m.tocsr()
    entries = matrix_entries(m)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{m.shape[0]} {m.shape[1]} {len(entries)}\n")
        for i, j, v in entries:
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def load_matrix_market(path: str | os.PathLike) -> sp.csr_matrix:
    with open(path, "r", encoding="ascii") as fh:
        banner = fh.readline()
        parts = banner.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket":
            raise ValueError(f"{path}: malformed MatrixMarket banner {banner!r}")
        _, obj, fmt, field, symmetry = (s.lower() for s in parts)
        if obj != "matrix" or fmt != "coordinate":
            raise ValueError(f"{path}: only 'matrix coordinate' files are supported")
        if field != "real":
            raise ValueError(f"{path}: field {field!r} is not supported, expected 'real'")
        if symmetry not in ("general", "symmetric"):
            raise ValueError(f"{path}: symmetry {symmetry!r} is not supported")
        lines = [ln.strip() for ln in fh]
    body = [ln for ln in lines if ln and not ln.startswith("%")]
    if not body:
        raise ValueError(f"{path}: missing size line")
    size = body[0].split()
    if len(size) != 3:
        raise ValueError(f"{path}: malformed size line {body[0]!r}")
    rows, cols, nnz = (int(s) for s in size)
    data = body[1:]
    if len(data) != nnz:
        raise ValueError(f"{path}: header declares {nnz} entries but file has {len(data)}")
    triplets: list[tuple[int, int, float]] = []
    for ln in data:
        toks = ln.split()
        if len(toks) != 3:
            raise ValueError(f"{path}: malformed entry line {ln!r}")
        i, j, v = int(toks[0]) - 1, int(toks[1]) - 1, float(toks[2])
        if not (0 <= i < rows and 0 <= j < cols):
            raise ValueError(f"{path}: entry ({i + 1}, {j + 1}) out of bounds")
        triplets.append((i, j, v))
        if symmetry == "symmetric" and i != j:
            triplets.append((j, i, v))
    return from_triplets(rows, cols, triplets)


# -- system manifest ----------------------------------------------------------

def write_system(system: SaddleSystem, out_dir: str | os.PathLike,
                 extra: dict | None = None) -> str:
    """Write A.mtx/B.mtx/C.mtx plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    for name, blk in (("A", system.A), ("B", system.B), ("C", system.C)):
        save_matrix_market(blk, os.path.join(out_dir, f"{name}.mtx"))
    manifest = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest, "w", encoding="ascii") as fh:
        fh.write("# saddle system manifest\n")
        fh.write("A = A.mtx\nB = B.mtx\nC = C.mtx\n")
        fh.write(f"dof = {system.total_dim}\n")
        for key, val in (extra or {}).items():
            fh.write(f"{key} = {val}\n")
    return manifest


def load_system(manifest_path: str | os.PathLike) -> SaddleSystem:
    """Load a SaddleSystem from a manifest of three MatrixMarket paths."""
    fields: dict[str, str] = {}
    with open(manifest_path, "r", encoding="ascii") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise ValueError(f"{manifest_path}: malformed manifest line {ln!r}")
            key, _, val = ln.partition("=")
            fields[key.strip()] = val.strip()
    missing = [k for k in ("A", "B", "C") if k not in fields]
    if missing:
        raise ValueError(f"{manifest_path}: manifest is missing entries for {missing}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    blocks = [load_matrix_market(os.path.join(base, fields[k])) for k in ("A", "B", "C")]
    return SaddleSystem(*blocks)
