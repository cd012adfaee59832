"""Discrete eigenpairs of the energy form and their qualitative checks.

The generalized problem Gram e = lambda Mass e realizes the successive
Rayleigh-quotient minimization over mass-orthogonal complements; dense
Cholesky-based reduction keeps it deterministic at desk scale.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import Field
from .report import PropertyVerdict


class EigenSolveError(RuntimeError):
    """Eigensolve failed to reach the requested residual tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class EigenResult:
    """Ascending eigenvalues with mass-orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray          # column k is the k-th eigenvector
    residuals: np.ndarray
    space: object

    def eigenfield(self, k):
        return Field(self.space, self.vectors[:, k])


def _as_matrix(m):
    return m.matrix if hasattr(m, "matrix") else np.asarray(m, dtype=float)


def eigenpairs(gram, mass, m, tol=1e-9, space=None):
    """Smallest m generalized eigenpairs of (Gram, Mass).

    Both matrices must be symmetric positive definite.  Eigenvectors are
    mass-orthonormal and sign-normalized so the entry of largest
    magnitude is positive.
    """
    g = _as_matrix(gram)
    b = _as_matrix(mass)
    if m < 1 or m > g.shape[0]:
        raise ValueError("requested %d eigenpairs from a %d-dimensional "
                         "space" % (m, g.shape[0]))
    for name, mat in (("gram", g), ("mass", b)):
        if np.max(np.abs(mat - mat.T)) > 1e-10 * np.max(np.abs(mat)):
            raise ValueError("%s matrix is not symmetric" % name)
        try:
            scipy.linalg.cholesky(mat)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError("%s matrix is not positive definite" % name) \
                from exc
    vals, vecs = scipy.linalg.eigh(g, b, subset_by_index=(0, m - 1))
    for k in range(m):
        j = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[j, k] < 0.0:
            vecs[:, k] = -vecs[:, k]
    residuals = np.array([
        np.linalg.norm(g @ vecs[:, k] - vals[k] * (b @ vecs[:, k]))
        for k in range(m)])
    scale = np.linalg.norm(g, 2)
    if np.any(residuals > tol * scale):
        raise EigenSolveError(
            "eigen residuals %s exceed tol %.1e * |G|" %
            (residuals.tolist(), tol), residuals=residuals)
    space = space if space is not None else getattr(gram, "space", None)
    return EigenResult(values=vals, vectors=vecs, residuals=residuals,
                       space=space)


def spectral_report(result, space, s, gap_tol_rel=1e-8):
    """Qualitative eigenstructure verdicts.

    Checks the simplicity gap after the principal eigenvalue, the fixed
    sign of the principal eigenfunction, the sign change of every higher
    mode, and a positive lower bound for e1 / delta^s.
    """
    if result.values.shape[0] < 3:
        raise ValueError("need at least three eigenpairs for the report")
    lam = result.values
    e1 = result.vectors[:, 0]
    delta = space.node_delta[space.interior_nodes]
    verdicts = []

    gap = lam[1] - lam[0]
    verdicts.append(PropertyVerdict(
        name="principal-eigenvalue-simple",
        passed=bool(gap > gap_tol_rel * lam[0]),
        measured=float(gap),
        threshold=float(gap_tol_rel * lam[0]),
        context={"lambda1": float(lam[0]), "lambda2": float(lam[1])}))

    # sign-normalized: the largest entry is positive, so constancy of sign
    # means strict positivity everywhere
    min_e1 = float(np.min(e1))
    verdicts.append(PropertyVerdict(
        name="principal-eigenfunction-positive",
        passed=bool(min_e1 > 0.0),
        measured=min_e1,
        threshold=0.0,
        context={}))

    nodal = True
    for k in range(1, result.values.shape[0]):
        ek = result.vectors[:, k]
        nodal = nodal and bool(np.min(ek) < 0.0 < np.max(ek))
    verdicts.append(PropertyVerdict(
        name="higher-modes-change-sign",
        passed=nodal,
        measured=float(np.min(result.vectors[:, 1])),
        threshold=0.0,
        context={"modes": int(result.values.shape[0] - 1)}))

    quot = e1 / delta ** s
    verdicts.append(PropertyVerdict(
        name="principal-eigenfunction-delta-quotient",
        passed=bool(np.min(quot) > 0.0),
        measured=float(np.min(quot)),
        threshold=0.0,
        context={"s": s}))
    return verdicts
