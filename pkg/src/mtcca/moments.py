"""Measure-transformed weights and moments.

An MT-function pair ``(u, v)`` reweights every joint observation by
``u(x_n) v(y_n)``; the weighted means and (cross-)covariances computed here
are the inputs of the canonical-correlation solver.  Weights are handled in
the log domain throughout so that large exponential tilts or narrow Gaussian
widths never overflow.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateWeights, DimensionMismatch, NonFiniteInput

# a single observation holding more than this share of the mass is degenerate
_DEGENERATE_SHARE = 1.0 - 1e-12


class Family(str, enum.Enum):
    IDENTITY = "identity"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 1-d or 2-d array, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class PairedSample:
    """N joint observations of ``X`` (p columns) and ``Y`` (q columns).

    Rows are observations. Labels default to ``x1..xp`` / ``y1..yq``.
    """

    x_data: np.ndarray
    y_data: np.ndarray
    x_labels: tuple = ()
    y_labels: tuple = ()

    def __post_init__(self):
        x = _as_matrix(self.x_data, "x_data")
        y = _as_matrix(self.y_data, "y_data")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"x_data has {x.shape[0]} rows but y_data has {y.shape[0]}")
        if x.shape[0] < 2:
            raise DimensionMismatch("at least two observations are required")
        if x.shape[1] < 1 or y.shape[1] < 1:
            raise DimensionMismatch("x_data and y_data need at least one column")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("sample contains NaN or infinite entries")
        x_labels = tuple(self.x_labels) or tuple(f"x{i + 1}" for i in range(x.shape[1]))
        y_labels = tuple(self.y_labels) or tuple(f"y{j + 1}" for j in range(y.shape[1]))
        if len(x_labels) != x.shape[1] or len(y_labels) != y.shape[1]:
            raise DimensionMismatch("label count does not match column count")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x_data", x)
        object.__setattr__(self, "y_data", y)
        object.__setattr__(self, "x_labels", x_labels)
        object.__setattr__(self, "y_labels", y_labels)

    @property
    def n(self) -> int:
        return self.x_data.shape[0]

    @property
    def p(self) -> int:
        return self.x_data.shape[1]

    @property
    def q(self) -> int:
        return self.y_data.shape[1]

    def with_y_permuted(self, perm) -> "PairedSample":
        """Return a copy whose Y rows are reordered by ``perm``."""
        return PairedSample(self.x_data, self.y_data[perm], self.x_labels, self.y_labels)


@dataclass(frozen=True)
class MtFunctionSpec:
    """Transform family and its parameters.

    ``s`` and ``t`` are the exponential tilts or Gaussian centres; ``sigma``
    and ``tau`` are the Gaussian widths and are ignored by other families.
    """

    kind: Family
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        kind = Family(self.kind)
        s = np.atleast_1d(np.asarray(self.s, dtype=float)).copy()
        t = np.atleast_1d(np.asarray(self.t, dtype=float)).copy()
        if s.ndim != 1 or t.ndim != 1:
            raise DimensionMismatch("s and t must be vectors")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
            raise NonFiniteInput("MT parameters must be finite")
        if kind is Family.GAUSSIAN:
            if self.sigma is None or self.tau is None or not (self.sigma > 0 and self.tau > 0):
                raise ValueError("Gaussian MT-functions need sigma > 0 and tau > 0")
            if not (np.isfinite(self.sigma) and np.isfinite(self.tau)):
                raise NonFiniteInput("Gaussian widths must be finite")
        s.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "MtFunctionSpec":
        return cls(Family.IDENTITY)

    @classmethod
    def exponential(cls, s: Sequence[float], t: Sequence[float]) -> "MtFunctionSpec":
        return cls(Family.EXPONENTIAL, s, t)

    @classmethod
    def gaussian(cls, s, t, sigma: float, tau: float) -> "MtFunctionSpec":
        return cls(Family.GAUSSIAN, s, t, float(sigma), float(tau))

    def check_dims(self, sample: PairedSample) -> None:
        if self.kind is Family.IDENTITY:
            return
        if self.s.shape != (sample.p,) or self.t.shape != (sample.q,):
            raise DimensionMismatch(
                f"spec has len(s)={self.s.size}, len(t)={self.t.size} but sample has "
                f"p={sample.p}, q={sample.q}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "s": self.s.tolist(),
            "t": self.t.tolist(),
            "sigma": self.sigma,
            "tau": self.tau,
        }


@dataclass(frozen=True)
class TransformedMoments:
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_xy: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    log_weight_max: float = 0.0
    effective_sample_fraction: float = 1.0
    spec: Optional[MtFunctionSpec] = None


def log_weights(sample: PairedSample, spec: MtFunctionSpec) -> np.ndarray:
    """Per-observation ``log u(x_n) + log v(y_n)``, up to a shared constant.

    Gaussian normalisation constants are dropped; they cancel once the
    weights are normalised.
    """
    spec.check_dims(sample)
    if spec.kind is Family.IDENTITY:
        return np.zeros(sample.n)
    x, y = sample.x_data, sample.y_data
    if spec.kind is Family.EXPONENTIAL:
        ell = x @ spec.s + y @ spec.t
    else:
        ell = (-0.5 * np.sum((x - spec.s) ** 2, axis=1) / spec.sigma ** 2
               - 0.5 * np.sum((y - spec.t) ** 2, axis=1) / spec.tau ** 2)
    assert np.all(np.isfinite(ell)), "log weights overflowed"
    return ell


def normalized_weights(log_w) -> np.ndarray:
    """Weights ``phi_n`` with unit mean, computed by shifting by ``max(log_w)``."""
    log_w = np.asarray(log_w, dtype=float)
    if not np.all(np.isfinite(log_w)):
        raise NonFiniteInput("log weights must be finite")
    e = np.exp(log_w - log_w.max())
    return e * (log_w.size / e.sum())


def transformed_moments(sample: PairedSample, spec: MtFunctionSpec) -> TransformedMoments:
    """Weighted means and unbiased-style weighted (cross-)covariances.

    With unit-mean weights ``phi`` and ``mu = mean(phi * z)`` this evaluates
    ``sum(phi * z w^T) / (N-1) - N/(N-1) mu_z mu_w^T`` in the algebraically
    equal centred form ``sum(phi (z - mu_z)(w - mu_w)^T) / (N-1)``, which is
    positive semidefinite by construction.  The identity spec reproduces the
    ordinary unbiased sample covariance.

    Raises
    ------
    DegenerateWeights
        If one observation carries more than ``1 - 1e-12`` of the total weight.
    """
    ell = log_weights(sample, spec)
    n = sample.n
    e = np.exp(ell - ell.max())
    total = e.sum()
    if 1.0 / total > _DEGENERATE_SHARE:
        raise DegenerateWeights(
            "one observation carries all the transformed mass; moments are undefined")
    phi = e * (n / total)
    ess = total ** 2 / (n * np.dot(e, e))

    x, y = sample.x_data, sample.y_data
    x_bar, y_bar = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - x_bar, y - y_bar
    mu_xc = phi @ xc / n
    mu_yc = phi @ yc / n
    dx, dy = xc - mu_xc, yc - mu_yc
    wdx = dx * phi[:, None]
    sigma_x = wdx.T @ dx / (n - 1)
    sigma_y = (dy * phi[:, None]).T @ dy / (n - 1)
    sigma_xy = wdx.T @ dy / (n - 1)
    sigma_x = 0.5 * (sigma_x + sigma_x.T)
    sigma_y = 0.5 * (sigma_y + sigma_y.T)
    return TransformedMoments(
        sigma_x=sigma_x,
        sigma_y=sigma_y,
        sigma_xy=sigma_xy,
        mu_x=x_bar + mu_xc,
        mu_y=y_bar + mu_yc,
        log_weight_max=float(ell.max()),
        effective_sample_fraction=float(min(ess, 1.0)),
        spec=spec,
    )


class MomentBatch:
    """Evaluate the moments needed by the psi objective for many parameter
    points at once.

    Only the per-coordinate variances and the cross-covariance are formed.
    With ``perms`` (an M x N array of Y-row orderings) every point also
    carries an owner index selecting which re-pairing of the sample it is
    evaluated on, so one batch serves all permutations of a test.

    Log weights of every family are linear in a per-observation design
    ``[xc, yc, -|xc|^2/2, -|yc|^2/2]`` of centred data, and the moments are
    linear in the normalised weights, so each owner's points reduce to two
    matrix products against precomputed arrays.
    """

    # points per chunk (bounds the chunk x N temporaries)
    chunk = 2048

    def __init__(self, sample: PairedSample, perms=None):
        self.sample = sample
        n, p, q = sample.n, sample.p, sample.q
        self.x_bar = sample.x_data.mean(axis=0)
        self.y_bar = sample.y_data.mean(axis=0)
        xc = sample.x_data - self.x_bar
        yc = sample.y_data - self.y_bar
        if perms is None:
            perms = np.arange(n)[None, :]
        perms = np.atleast_2d(np.asarray(perms, dtype=np.intp))
        if perms.shape[1] != n:
            raise DimensionMismatch("each permutation must have one entry per observation")
        self.perms = perms
        m = perms.shape[0]
        yp = yc[perms]                                    # M x N x q
        design = np.empty((m, n, p + q + 2))
        design[:, :, :p] = xc
        design[:, :, p:p + q] = yp
        design[:, :, p + q] = -0.5 * np.sum(xc ** 2, axis=1)
        design[:, :, p + q + 1] = -0.5 * np.sum(yp ** 2, axis=2)
        self.design_t = np.ascontiguousarray(np.transpose(design, (0, 2, 1)))
        cross = (xc[None, :, :, None] * yp[:, :, None, :]).reshape(m, n, p * q)
        self.features = np.concatenate(
            [np.broadcast_to(xc, (m, n, p)), yp,
             np.broadcast_to(xc ** 2, (m, n, p)), yp ** 2, cross], axis=2)

    @property
    def n_owners(self) -> int:
        return self.perms.shape[0]

    def _coefficients(self, kind, s, t, sigma, tau):
        kind = Family(kind)
        s = np.atleast_2d(s)
        t = np.atleast_2d(t)
        k = s.shape[0]
        p, q = self.sample.p, self.sample.q
        coef = np.zeros((k, p + q + 2))
        if kind is Family.EXPONENTIAL:
            coef[:, :p] = s
            coef[:, p:p + q] = t
        elif kind is Family.GAUSSIAN:
            coef[:, :p] = (s - self.x_bar) / sigma ** 2
            coef[:, p:p + q] = (t - self.y_bar) / tau ** 2
            coef[:, p + q] = 1.0 / sigma ** 2
            coef[:, p + q + 1] = 1.0 / tau ** 2
        return coef

    @staticmethod
    def _groups(owners):
        """Contiguous runs ``(owner, lo, hi)`` of a sorted owner vector."""
        cut = np.flatnonzero(np.diff(owners)) + 1
        lo = np.concatenate([[0], cut])
        hi = np.concatenate([cut, [owners.size]])
        return zip(owners[lo].tolist(), lo.tolist(), hi.tolist())

    def log_weights(self, kind, s, t, sigma=None, tau=None, owner: int = 0) -> np.ndarray:
        """Rows of log weights (K x N) for K parameter points; row constants dropped."""
        return self._coefficients(kind, s, t, sigma, tau) @ self.design_t[owner]

    def psi_moments(self, kind, s, t, sigma=None, tau=None, owners=None):
        """Return ``(var_x, var_y, cov_xy, degenerate, ess)`` for each parameter row.

        ``var_x`` is K x p, ``var_y`` K x q, ``cov_xy`` K x p x q,
        ``degenerate`` a boolean K-vector flagging collapsed weights and
        ``ess`` the effective sample fraction of each weight vector.
        """
        coef = self._coefficients(kind, s, t, sigma, tau)
        k = coef.shape[0]
        n, p, q = self.sample.n, self.sample.p, self.sample.q
        if owners is None:
            owners = np.zeros(k, dtype=np.intp)
        owners = np.asarray(owners, dtype=np.intp)
        order = None
        if k > 1 and np.any(owners[1:] < owners[:-1]):
            order = np.argsort(owners, kind="stable")
            coef, owners = coef[order], owners[order]
        mom = np.empty((k, self.features.shape[2]))
        degenerate = np.empty(k, dtype=bool)
        ess = np.empty(k)
        for lo in range(0, k, self.chunk):
            hi = min(k, lo + self.chunk)
            ell = np.empty((hi - lo, n))
            groups = list(self._groups(owners[lo:hi]))
            for m, a, b in groups:
                np.matmul(coef[lo + a:lo + b], self.design_t[m], out=ell[a:b])
            ell -= ell.max(axis=1, keepdims=True)
            e = np.exp(ell, out=ell)
            total = e.sum(axis=1)
            for m, a, b in groups:
                np.matmul(e[a:b], self.features[m], out=mom[lo + a:lo + b])
            mom[lo:hi] /= total[:, None]
            degenerate[lo:hi] = 1.0 / total > _DEGENERATE_SHARE
            ess[lo:hi] = total ** 2 / (n * np.einsum("ij,ij->i", e, e))
        if order is not None:
            inv = np.empty_like(order)
            inv[order] = np.arange(k)
            mom, degenerate, ess = mom[inv], degenerate[inv], ess[inv]
        mx, my = mom[:, :p], mom[:, p:p + q]
        scale = n / (n - 1)
        var_x = scale * (mom[:, p + q:2 * p + q] - mx ** 2)
        var_y = scale * (mom[:, 2 * p + q:2 * (p + q)] - my ** 2)
        cov_xy = scale * (mom[:, 2 * (p + q):].reshape(-1, p, q) - mx[:, :, None] * my[:, None, :])
        return var_x, var_y, cov_xy, degenerate, ess
