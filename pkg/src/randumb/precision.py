"""Shrinkage and inversion of the pooled covariance.

The raw covariance S is pulled toward a scaled identity by the
closed-form oracle-approximating shrinkage intensity

    mu  = tr(S) / E
    rho = min(1, [ (1 - 2/E) tr(S^2) + tr(S)^2 ]
                 / [ (n + 1 - 2/E) ( tr(S^2) - tr(S)^2 / E ) ])
    shrunk = (1 - rho) S + rho mu I

with rho = 1 when the denominator is non-positive (S already
proportional to the identity).  A ridge term lambda * I is then added
and the result factorized once (Cholesky); scoring needs only solves
against this factorization, never an explicit inverse.

A rank-1 inverse update (Sherman-Morrison) is provided for the
strict-online prediction path, where an explicit inverse is maintained
instead of a factorization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DataError, NumericalError, ShapeError, SingularUpdateError

_SM_DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class ShrinkageResult:
    """Shrinkage intensity rho in [0, 1], target scale mu = tr(S)/E, and
    the shrunk matrix (1-rho) S + rho mu I."""

    rho: float
    mu: float
    shrunk: np.ndarray


def oas_shrink(S: np.ndarray, n: int, copy: bool = True) -> ShrinkageResult:
    """Shrink a symmetric covariance toward mu*I with the closed-form rho.

    ``n`` is the number of samples behind S (augmented copies included).
    With copy=False, S itself is overwritten with the shrunk matrix.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {S.shape}")
    if n < 2:
        raise DataError(f"shrinkage needs n >= 2 samples, got {n}")
    scale = np.abs(S).max()
    asym = np.abs(S - S.T).max()
    if asym > 1e-6 * max(scale, 1e-300):
        raise DataError(
            f"covariance is not symmetric: max |S - S^T| = {asym:.3e} "
            f"against scale {scale:.3e}"
        )
    e = S.shape[0]
    tr_s = float(np.trace(S))
    tr_s2 = float((S * S).sum())  # tr(S @ S) for symmetric S
    mu = tr_s / e
    num = (1.0 - 2.0 / e) * tr_s2 + tr_s * tr_s
    den = (n + 1.0 - 2.0 / e) * (tr_s2 - tr_s * tr_s / e)
    rho = 1.0 if den <= 0.0 else min(1.0, num / den)
    if copy:
        out = S * (1.0 - rho)
    else:
        out = S
        out *= 1.0 - rho
    out[np.diag_indices(e)] += rho * mu
    return ShrinkageResult(rho=rho, mu=mu, shrunk=out)


class PrecisionModel:
    """A factorized (shrunk + lambda I): repeated SPD solves and the
    Mahalanobis quadratic form, plus log-determinant diagnostics."""

    def __init__(self, shrunk: np.ndarray, ridge: float, overwrite: bool = False):
        shrunk = np.asarray(shrunk, dtype=np.float64)
        if shrunk.ndim != 2 or shrunk.shape[0] != shrunk.shape[1]:
            raise ShapeError(f"matrix must be square, got shape {shrunk.shape}")
        if ridge < 0:
            raise DataError(f"ridge must be >= 0, got {ridge}")
        self.embed_dim = shrunk.shape[0]
        self.ridge = float(ridge)
        if not overwrite:
            shrunk = shrunk.copy()
        if ridge:
            shrunk[np.diag_indices(self.embed_dim)] += ridge
        try:
            self._factor = cho_factor(
                shrunk, lower=True, overwrite_a=True, check_finite=True
            )
        except LinAlgError as exc:
            match = re.search(r"(\d+)-th leading minor", str(exc))
            pivot = int(match.group(1)) - 1 if match else None
            raise NumericalError(
                f"regularized covariance is not positive definite "
                f"(ridge={ridge:g}): {exc}",
                pivot_index=pivot,
            ) from exc
        except ValueError as exc:
            raise NumericalError(f"factorization rejected the matrix: {exc}") from exc
        diag = np.diagonal(self._factor[0])
        self.log_det = float(2.0 * np.log(diag).sum())

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (shrunk + lambda I) z = b for one vector or a column stack."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.embed_dim:
            raise ShapeError(
                f"right-hand side has leading dim {b.shape[0]}, "
                f"expected {self.embed_dim}"
            )
        return cho_solve(self._factor, b, check_finite=False)

    def mahalanobis_sq(self, delta: np.ndarray) -> float:
        """delta^T (shrunk + lambda I)^{-1} delta, clamped at zero.

        A tiny negative value (>= -1e-9) is floating-point noise and is
        clamped; anything more negative means the factorization is
        inconsistent and raises.
        """
        delta = np.asarray(delta, dtype=np.float64)
        if delta.ndim != 1 or delta.shape[0] != self.embed_dim:
            raise ShapeError(
                f"expected a vector of length {self.embed_dim}, "
                f"got shape {delta.shape}"
            )
        q = float(delta @ self.solve(delta))
        if q < -1e-9:
            raise NumericalError(f"quadratic form came out negative: {q:.3e}")
        return max(q, 0.0)

    def inverse(self) -> np.ndarray:
        """Explicit dense inverse, for the rank-1 incremental update path."""
        return self.solve(np.eye(self.embed_dim))


def build_precision(
    shrunk: np.ndarray, ridge: float, overwrite: bool = False
) -> PrecisionModel:
    """Factorize (shrunk + ridge I) for repeated solves."""
    return PrecisionModel(shrunk, ridge, overwrite=overwrite)


def sherman_morrison_update(
    inv: np.ndarray, u: np.ndarray, c: float, out: np.ndarray | None = None
) -> np.ndarray:
    """Given inv = A^{-1}, return (A + c u u^T)^{-1}.

    Uses the rank-1 identity
        (A + c u u^T)^{-1} = inv - c (inv u)(u^T inv) / (1 + c u^T inv u).
    An ``out`` buffer (same shape, may be ``inv`` itself) avoids a fresh
    allocation per step.
    """
    inv = np.asarray(inv, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if inv.ndim != 2 or inv.shape[0] != inv.shape[1]:
        raise ShapeError(f"inverse must be square, got shape {inv.shape}")
    if u.ndim != 1 or u.shape[0] != inv.shape[0]:
        raise ShapeError(
            f"update vector length {u.shape} does not match matrix {inv.shape}"
        )
    iu = inv @ u
    ui = u @ inv
    den = 1.0 + c * float(u @ iu)
    if abs(den) < _SM_DENOMINATOR_FLOOR:
        raise SingularUpdateError(
            f"rank-1 update is singular: 1 + c u^T A^(-1) u = {den:.3e}"
        )
    if out is None:
        out = inv.copy()
    elif out is not inv:
        np.copyto(out, inv)
    out -= np.outer(iu, ui * (c / den))
    return out
