"""Desk-scale spectral certification of the splitting iteration.

Everything here works on dense matrices built from a (small) system: the
stationary iteration matrix, its spectrum and pseudo-spectral radius, the
index-one test for the singular case, contraction norms of the two shifted
factors, and the spectrum of the preconditioned operator.  These are the
numerical counterparts of the semi-convergence theory: the iteration on a
singular consistent system converges for every positive shift exactly when
index(I - T) = 1 and the eigenvalues other than 1 stay strictly inside the
unit circle.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .saddle import SaddleSystem, assemble_full, assemble_split
from .sparse import operator_two_norm

__all__ = [
    "SpectralCertificate",
    "build_iteration_matrix",
    "spectrum",
    "pseudo_spectral_radius",
    "index_is_one",
    "kellogg_norm",
    "preconditioned_spectrum",
    "certify",
    "write_eigenvalues_csv",
    "eigenvalue_matching_distance",
]

DENSE_CAP_DEFAULT = 2000


@dataclass
class SpectralCertificate:
    """Spectral evidence for semi-convergence at one shift value.

    ``pseudo_spectral_radius`` is the largest modulus among eigenvalues whose
    distance from 1 exceeds ``unit_tol`` (0 if there are none);
    ``unit_eigen_count`` counts the remaining ones.  ``kellogg_a1`` and
    ``kellogg_a2`` are the 2-norms of the two shifted contraction factors,
    bounded by 1 for positive semi-definite parts.
    """

    alpha: float
    eigenvalues: np.ndarray
    unit_eigen_count: int
    pseudo_spectral_radius: float
    index_one: bool
    kellogg_a1: float
    kellogg_a2: float
    unit_tol: float


def _check_cap(system: SaddleSystem, dense_cap: int):
    if system.total_dim > dense_cap:
        raise ValueError(f"system order {system.total_dim} exceeds the dense cap {dense_cap}; "
                         "use a smaller problem for spectral analysis")


def _dense_parts(system: SaddleSystem, alpha: float):
    if alpha <= 0.0:
        raise ValueError("alpha must be strictly positive")
    p1, p2 = assemble_split(system)
    a1 = p1.toarray()
    a2 = p2.toarray()
    eye = np.eye(system.total_dim)
    lu1 = sla.lu_factor(alpha * eye + a1)
    lu2 = sla.lu_factor(alpha * eye + a2)
    return a1, a2, eye, lu1, lu2


def build_iteration_matrix(system: SaddleSystem, alpha: float,
                           dense_cap: int = DENSE_CAP_DEFAULT) -> np.ndarray:
    """Dense stationary iteration matrix
    (aI + part2)^{-1} (aI - part1) (aI + part1)^{-1} (aI - part2),
    formed by exact shifted solves against the full basis."""
    _check_cap(system, dense_cap)
    a1, a2, eye, lu1, lu2 = _dense_parts(system, alpha)
    t = sla.lu_solve(lu1, alpha * eye - a2)
    t = (alpha * eye - a1) @ t
    return sla.lu_solve(lu2, t)


def spectrum(m: np.ndarray) -> np.ndarray:
    """All eigenvalues of a square dense matrix (complex, unordered)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"spectrum requires a square matrix, got {m.shape}")
    return sla.eigvals(m)


def pseudo_spectral_radius(eigs: np.ndarray, unit_tol: float = 1e-6) -> tuple[float, int]:
    """(max |lambda| over eigenvalues away from 1, count of unit eigenvalues).

    Eigenvalues with |lambda - 1| <= unit_tol are classified as unit.  The
    maximum over an empty set is 0.
    """
    eigs = np.asarray(eigs)
    unit = np.abs(eigs - 1.0) <= unit_tol
    rest = np.abs(eigs[~unit])
    return (float(rest.max()) if rest.size else 0.0, int(unit.sum()))


def index_is_one(t: np.ndarray, rank_tol: float = 1e-12) -> bool:
    """Whether index(I - t) = 1, tested as rank(I - t) == rank((I - t)^2).

    Numerical ranks count singular values above rank_tol * sigma_max * dim,
    each matrix using its own sigma_max.
    """
    t = np.asarray(t, dtype=np.float64)
    m = np.eye(t.shape[0]) - t

    def rank(mat: np.ndarray) -> int:
        s = sla.svdvals(mat)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > rank_tol * s[0] * mat.shape[0]))

    return rank(m) == rank(m @ m)


def kellogg_norm(system: SaddleSystem, which: str, alpha: float,
                 dense_cap: int = DENSE_CAP_DEFAULT) -> float:
    """2-norm of (alpha I + part)^{-1} (alpha I - part) for one splitting part.

    Positive semi-definiteness of the part bounds this by 1 for every
    alpha > 0; the skew part attains exactly 1 (its factor is orthogonal).
    Evaluated by power iteration with exact shifted solves.
    """
    if which not in ("a1", "a2"):
        raise ValueError("which must be 'a1' or 'a2'")
    _check_cap(system, dense_cap)
    a1, a2, eye, lu1, lu2 = _dense_parts(system, alpha)
    part, lu = (a1, lu1) if which == "a1" else (a2, lu2)
    shifted = alpha * eye - part

    def apply(v: np.ndarray) -> np.ndarray:
        return sla.lu_solve(lu, shifted @ v)

    def adjoint(v: np.ndarray) -> np.ndarray:
        return shifted.T @ sla.lu_solve(lu, v, trans=1)

    return operator_two_norm(apply, system.total_dim, adjoint=adjoint)


def preconditioned_spectrum(system: SaddleSystem, alpha: float,
                            dense_cap: int = DENSE_CAP_DEFAULT) -> np.ndarray:
    """Eigenvalues of the preconditioned operator
    (aI + part2)^{-1} (aI + part1)^{-1} * full, with exact shifted solves."""
    _check_cap(system, dense_cap)
    _, _, _, lu1, lu2 = _dense_parts(system, alpha)
    full = assemble_full(system).toarray()
    return sla.eigvals(sla.lu_solve(lu2, sla.lu_solve(lu1, full)))


def certify(system: SaddleSystem, alpha: float, unit_tol: float = 1e-6,
            rank_tol: float = 1e-12, dense_cap: int = DENSE_CAP_DEFAULT) -> SpectralCertificate:
    """Assemble the full spectral certificate for one shift value."""
    t = build_iteration_matrix(system, alpha, dense_cap)
    eigs = spectrum(t)
    theta, units = pseudo_spectral_radius(eigs, unit_tol)
    return SpectralCertificate(
        alpha=float(alpha),
        eigenvalues=eigs,
        unit_eigen_count=units,
        pseudo_spectral_radius=theta,
        index_one=index_is_one(t, rank_tol),
        kellogg_a1=kellogg_norm(system, "a1", alpha, dense_cap),
        kellogg_a2=kellogg_norm(system, "a2", alpha, dense_cap),
        unit_tol=unit_tol,
    )


def write_eigenvalues_csv(eigs: np.ndarray, path: str | os.PathLike) -> None:
    """CSV export with header ``re,im``, one eigenvalue per row, 17 digits."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("re,im\n")
        for lam in np.asarray(eigs):
            fh.write(f"{lam.real:.17g},{lam.imag:.17g}\n")


def eigenvalue_matching_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Greedy multiset matching distance between two spectra.

    Both sets are sorted by (real, imaginary); each eigenvalue of ``a`` is
    paired with the nearest unused one of ``b`` and the largest pairing
    distance is returned.  Only meaningful at desk scale (O(n^2)).
    """
    a = sorted(np.asarray(a, dtype=complex), key=lambda z: (z.real, z.imag))
    b = list(sorted(np.asarray(b, dtype=complex), key=lambda z: (z.real, z.imag)))
    if len(a) != len(b):
        raise ValueError("spectra have different sizes")
    worst = 0.0
    for z in a:
        dists = [abs(z - w) for w in b]
        k = int(np.argmin(dists))
        worst = max(worst, dists[k])
        b.pop(k)
    return worst
