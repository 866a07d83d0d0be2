"""Canonical correlations of a (possibly measure-transformed) moment set."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NonFiniteInput, SingularCovariance
from .moments import MtFunctionSpec, PairedSample, TransformedMoments, transformed_moments

_JITTER = 1e-10
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class CcaSolution:
    """Canonical coefficients in non-increasing order with paired directions.

    Column ``k`` of ``a_dirs`` / ``b_dirs`` is the k-th direction pair, scaled
    to unit variance under the (transformed) measure.
    """

    rho: np.ndarray
    a_dirs: np.ndarray
    b_dirs: np.ndarray
    spec_used: Optional[MtFunctionSpec]
    conditioning: dict

    @property
    def r(self) -> int:
        return self.rho.size

    def variates(self, sample: PairedSample, k: int = 1):
        """Canonical variates ``(a_k^T x_n, b_k^T y_n)`` for every observation."""
        return sample.x_data @ self.a_dirs[:, k - 1], sample.y_data @ self.b_dirs[:, k - 1]


def _whitening_factor(cov, which):
    d = cov.shape[0]
    ridge = _JITTER * np.trace(cov) / d
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    try:
        if lam_min <= ridge:
            raise np.linalg.LinAlgError
        return linalg.cholesky(cov, lower=True), lam_min
    except np.linalg.LinAlgError:
        pass
    # one retry with a tiny ridge; anything that still fails is singular
    jittered = cov + ridge * np.eye(d)
    lam_j = lam_min + ridge
    if not (ridge > 0 and lam_j > ridge):
        raise SingularCovariance(which, f"{which} is singular (min eigenvalue {lam_min:.3e})")
    try:
        return linalg.cholesky(jittered, lower=True), lam_j
    except np.linalg.LinAlgError:
        raise SingularCovariance(which) from None


def _apply_sign_convention(a, b):
    for k in range(a.shape[1]):
        i = int(np.argmax(np.abs(a[:, k])))
        if a[i, k] < 0:
            a[:, k] *= -1
            b[:, k] *= -1


def _tie_order(rho, a):
    order = list(range(rho.size))
    start = 0
    while start < rho.size:
        stop = start + 1
        while stop < rho.size and abs(rho[stop] - rho[start]) <= _TIE_TOL * max(1.0, rho[start]):
            stop += 1
        if stop - start > 1:
            block = sorted(range(start, stop), key=lambda k: tuple(-np.abs(a[:, k])))
            order[start:stop] = block
        start = stop
    return np.array(order)


def solve_cca(moments: TransformedMoments) -> CcaSolution:
    """Solve the canonical-correlation pencil by Cholesky whitening and an SVD.

    The singular values of ``Lx^{-1} Sxy Ly^{-T}`` are the canonical
    coefficients; back-substitution gives directions satisfying the
    unit-variance and mutual-uncorrelatedness constraints.

    Raises
    ------
    SingularCovariance
        If ``sigma_x`` or ``sigma_y`` cannot be factorised even after one
        ridge of ``1e-10 * trace / dim``.
    NonFiniteInput
        If any moment is NaN or infinite.
    """
    sx = np.asarray(moments.sigma_x, dtype=float)
    sy = np.asarray(moments.sigma_y, dtype=float)
    sxy = np.asarray(moments.sigma_xy, dtype=float)
    if not all(np.all(np.isfinite(m)) for m in (sx, sy, sxy)):
        raise NonFiniteInput("moments contain NaN or infinite entries")
    lx, min_x = _whitening_factor(sx, "sigma_x")
    ly, min_y = _whitening_factor(sy, "sigma_y")

    k_mat = linalg.solve_triangular(lx, sxy, lower=True)
    k_mat = linalg.solve_triangular(ly, k_mat.T, lower=True).T
    u, sv, vt = np.linalg.svd(k_mat, full_matrices=False)
    r = min(sx.shape[0], sy.shape[0])
    u, sv, v = u[:, :r], sv[:r], vt[:r].T

    a = linalg.solve_triangular(lx.T, u, lower=False)
    b = linalg.solve_triangular(ly.T, v, lower=False)
    _apply_sign_convention(a, b)
    rho = np.clip(sv, 0.0, 1.0)
    order = _tie_order(rho, a)
    return CcaSolution(
        rho=rho[order],
        a_dirs=a[:, order],
        b_dirs=b[:, order],
        spec_used=moments.spec,
        conditioning={"sigma_x_min_eig": min_x, "sigma_y_min_eig": min_y},
    )


def mtcca(sample: PairedSample, spec: Optional[MtFunctionSpec] = None) -> CcaSolution:
    """Measure-transformed CCA of ``sample`` under ``spec`` (identity gives LCCA)."""
    if spec is None:
        spec = MtFunctionSpec.identity()
    return solve_cca(transformed_moments(sample, spec))
