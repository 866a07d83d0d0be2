"""Independent reference implementations used only by the tests.

Nothing here imports the package: each oracle recomputes a quantity from
its definition with plain loops or a different numerical route.
"""
import math

import numpy as np
from scipy import linalg


def brute_force_moments(x, y, log_u):
    """Weighted means and (cross-)covariances from explicit per-sample sums.

    ``log_u[n]`` is ``log u(x_n) + log v(y_n)``.  Uses the uncentred form
    ``sum(phi z w^T) / (N-1) - N/(N-1) mu_z mu_w^T`` with unit-mean weights.
    """
    x = [list(map(float, row)) for row in np.atleast_2d(np.asarray(x, float).reshape(len(x), -1))]
    y = [list(map(float, row)) for row in np.atleast_2d(np.asarray(y, float).reshape(len(y), -1))]
    n = len(x)
    top = max(log_u)
    raw = [math.exp(v - top) for v in log_u]
    mean_raw = math.fsum(raw) / n
    phi = [r / mean_raw for r in raw]

    def mean(rows):
        d = len(rows[0])
        return [math.fsum(phi[i] * rows[i][a] for i in range(n)) / n for a in range(d)]

    def cov(z, w, mz, mw):
        out = np.empty((len(mz), len(mw)))
        for a in range(len(mz)):
            for b in range(len(mw)):
                s = math.fsum(phi[i] * z[i][a] * w[i][b] for i in range(n))
                out[a, b] = s / (n - 1) - n / (n - 1) * mz[a] * mw[b]
        return out

    mx, my = mean(x), mean(y)
    return {
        "phi": np.array(phi),
        "mu_x": np.array(mx), "mu_y": np.array(my),
        "sigma_x": cov(x, x, mx, mx), "sigma_y": cov(y, y, my, my),
        "sigma_xy": cov(x, y, mx, my),
    }


def dense_pencil_cca(sx, sy, sxy):
    """Canonical coefficients and directions from the full block pencil
    ``[[0, Sxy], [Sxy^T, 0]] w = rho [[Sx, 0], [0, Sy]] w``.

    Returns ``(rho, a, b)`` for the ``min(p, q)`` largest eigenvalues.  The
    eigenvectors are B-orthonormal, so each half is rescaled to unit
    variance before return.
    """
    p, q = sxy.shape
    a_mat = np.zeros((p + q, p + q))
    a_mat[:p, p:] = sxy
    a_mat[p:, :p] = sxy.T
    b_mat = linalg.block_diag(sx, sy)
    vals, vecs = linalg.eigh(a_mat, b_mat)
    order = np.argsort(vals)[::-1][:min(p, q)]
    vals, vecs = vals[order], vecs[:, order]
    a = vecs[:p] / np.sqrt(np.einsum("ik,ij,jk->k", vecs[:p], sx, vecs[:p]))
    b = vecs[p:] / np.sqrt(np.einsum("ik,ij,jk->k", vecs[p:], sy, vecs[p:]))
    return vals, a, b


def linear_percentile(values, pct):
    """Percentile by linear interpolation between order statistics at
    position ``(N - 1) * pct / 100``."""
    v = sorted(float(a) for a in values)
    pos = (len(v) - 1) * pct / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (pos - lo) * (v[hi] - v[lo])


def unbiased_cov(z, w):
    """Textbook unbiased sample cross-covariance by explicit centring."""
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    zc = z - z.mean(axis=0)
    wc = w - w.mean(axis=0)
    return zc.T @ wc / (z.shape[0] - 1)


def random_spd(rng, d, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0, np.log(cond), d))
    return (q * lam) @ q.T


def random_cca_instance(rng, p, q, max_rho=0.95):
    """SPD blocks with a cross block built so that every canonical
    coefficient is below ``max_rho``."""
    sx = random_spd(rng, p)
    sy = random_spd(rng, q)
    k = rng.standard_normal((p, q))
    k *= rng.uniform(0.1, max_rho) / np.linalg.norm(k, 2)
    lx = np.linalg.cholesky(sx)
    ly = np.linalg.cholesky(sy)
    return sx, sy, lx @ k @ ly.T
