"""Data-driven choice of the MT-function parameters ``(s, t)``.

The first canonical coefficient is awkward to maximise directly, so the
parameters are chosen by maximising the element-wise lower bound ``psi``
over a bounded search region with multi-start projected gradient ascent.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import ZeroVariance
from .moments import Family, MomentBatch, MtFunctionSpec, PairedSample, TransformedMoments

_BOUND_D = np.sqrt(2.0)
_GUARD_HALVINGS = 20


class RegionKind(str, enum.Enum):
    EXPONENTIAL_QUADRATIC = "exponential_quadratic"
    GAUSSIAN_PERCENTILE_BOX = "gaussian_percentile_box"


def _region_kind(kind) -> RegionKind:
    if isinstance(kind, RegionKind):
        return kind
    family = Family(kind)
    if family is Family.EXPONENTIAL:
        return RegionKind.EXPONENTIAL_QUADRATIC
    if family is Family.GAUSSIAN:
        return RegionKind.GAUSSIAN_PERCENTILE_BOX
    raise ValueError("the identity family has no parameters to select")


def _family(kind) -> Family:
    if isinstance(kind, RegionKind):
        return Family.EXPONENTIAL if kind is RegionKind.EXPONENTIAL_QUADRATIC else Family.GAUSSIAN
    return Family(kind)


@dataclass(frozen=True)
class SelectionConfig:
    """Settings of the multi-start ascent.

    ``n_starts = 1`` runs from the anchor only; extra starts are Halton
    points seeded by ``seed``.  ``min_ess`` rejects parameter points whose
    weights keep less than that fraction of the sample effective (psi is
    easily inflated by a handful of heavily weighted observations); it is
    never stricter than the anchor itself.
    """

    n_starts: int = 1
    max_iters: int = 200
    grad_step_h: float = 1e-4
    init_step: float = 0.1
    tol: float = 1e-6
    seed: int = 0
    max_halvings: int = 30
    min_ess: float = 0.1

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iters < 0 or self.max_halvings < 0:
            raise ValueError("n_starts must be >= 1 and iteration limits non-negative")
        if not 0.0 <= self.min_ess <= 1.0:
            raise ValueError("min_ess must lie in [0, 1]")
        if not (self.grad_step_h > 0 and self.init_step > 0 and self.tol > 0):
            raise ValueError("grad_step_h, init_step and tol must be positive")


def psi_objective(moments: TransformedMoments) -> float:
    """Root mean square of the pairwise coordinate correlations.

    This never exceeds the first canonical coefficient of the same moments.

    Raises
    ------
    ZeroVariance
        If any diagonal entry of ``sigma_x`` or ``sigma_y`` is not positive.
    """
    dx = np.diag(moments.sigma_x)
    dy = np.diag(moments.sigma_y)
    if np.any(dx <= 0) or np.any(dy <= 0):
        raise ZeroVariance("psi needs strictly positive variances")
    ratio = moments.sigma_xy ** 2 / np.outer(dx, dy)
    return float(np.sqrt(ratio.mean()))


def _psi_from_batch(var_x, var_y, cov_xy, degenerate):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = cov_xy ** 2 / (var_x[:, :, None] * var_y[:, None, :])
        psi = np.sqrt(ratio.mean(axis=(1, 2)))
    bad = degenerate | np.any(var_x <= 0, axis=1) | np.any(var_y <= 0, axis=1) | ~np.isfinite(psi)
    psi[bad] = -np.inf
    return psi


class PsiEvaluator:
    """psi as a function of the stacked parameter vector ``theta = (s, t)``.

    Points whose weights collapse onto one observation, or whose effective
    sample fraction falls below the floor, evaluate to ``-inf``.  With
    ``perms`` the evaluator serves every Y re-pairing at once and each call
    takes an owner index per point.
    """

    def __init__(self, sample: PairedSample, kind, sigma=None, tau=None,
                 batch: Optional[MomentBatch] = None, perms=None, min_ess: float = 0.0):
        self.kind = Family(kind)
        self.sigma = sigma
        self.tau = tau
        self.p = sample.p
        self.batch = batch if batch is not None else MomentBatch(sample, perms)
        self.floor = np.full(self.batch.n_owners, float(min_ess))
        self.n_evals = 0

    def _moments(self, thetas, owners):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.n_evals += thetas.shape[0]
        return self.batch.psi_moments(self.kind, thetas[:, :self.p], thetas[:, self.p:],
                                      self.sigma, self.tau, owners=owners)

    def __call__(self, thetas, owners=None) -> np.ndarray:
        var_x, var_y, cov_xy, degenerate, ess = self._moments(thetas, owners)
        psi = _psi_from_batch(var_x, var_y, cov_xy, degenerate)
        floor = self.floor[0] if owners is None else self.floor[owners]
        psi[ess < floor] = -np.inf
        return psi

    def relax_floor(self, anchors, owners=None):
        """Lower the floor of each owner to the effective sample fraction of
        its start point, so the start itself is always admissible."""
        ess = self._moments(anchors, owners)[4]
        idx = np.zeros(1, dtype=np.intp) if owners is None else np.asarray(owners)
        self.floor[idx] = np.minimum(self.floor[idx], ess * (1.0 - 1e-9))

    def spec(self, theta) -> MtFunctionSpec:
        theta = np.asarray(theta, dtype=float)
        return MtFunctionSpec(self.kind, theta[:self.p], theta[self.p:], self.sigma, self.tau)


def psi_gradient(evaluate, thetas, h_scale=1e-4, owners=None) -> np.ndarray:
    """Central-difference gradient with per-coordinate step ``h_scale * (1 + |theta_i|)``.

    ``thetas`` is K x d; all 2 K d probe points go through ``evaluate`` in
    one batch.  Components with a non-finite probe are set to zero.
    """
    thetas = np.atleast_2d(thetas)
    k, d = thetas.shape
    h = h_scale * (1.0 + np.abs(thetas))
    eye = np.eye(d)
    plus = thetas[:, None, :] + h[:, :, None] * eye
    minus = thetas[:, None, :] - h[:, :, None] * eye
    probes = np.concatenate([plus, minus], axis=1).reshape(-1, d)
    if owners is None:
        vals = evaluate(probes)
    else:
        vals = evaluate(probes, np.repeat(owners, 2 * d))
    vals = vals.reshape(k, 2, d)
    with np.errstate(invalid="ignore"):
        grad = (vals[:, 0] - vals[:, 1]) / (2.0 * h)
    grad[~np.isfinite(grad)] = 0.0
    return grad


def default_gaussian_widths(sample: PairedSample) -> Tuple[float, float]:
    """Gaussian widths: the mean per-coordinate standard deviation of X and of Y."""
    sd_x = sample.x_data.std(axis=0, ddof=1)
    sd_y = sample.y_data.std(axis=0, ddof=1)
    if np.any(sd_x <= 0) or np.any(sd_y <= 0):
        raise ZeroVariance("a coordinate of the sample is constant")
    return float(sd_x.mean()), float(sd_y.mean())


def _owner_index(owners, n):
    return np.zeros(n, dtype=np.intp) if owners is None else np.asarray(owners, dtype=np.intp)


class SearchRegion:
    """Feasible set for ``theta = (s, t)``.

    ``anchor`` is the designated interior point (the origin unless the
    Gaussian box had to be re-centred); it is always a member.  Regions
    built for several re-pairings of one sample take an ``owners`` index
    per point; the default owner is 0.
    """

    kind: RegionKind
    anchor: np.ndarray

    def contains(self, thetas, owners=None) -> np.ndarray:
        raise NotImplementedError

    def project(self, current, proposed, owners=None) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        return float(self.diameters()[0])

    def diameters(self, owners=None) -> np.ndarray:
        raise NotImplementedError

    def starts(self, n: int, seed: int, owner: int = 0) -> np.ndarray:
        """The anchor followed by ``n - 1`` scrambled-Halton points inside the region."""
        pts = [self.anchor[None, :]]
        if n > 1:
            u = qmc.Halton(d=self.anchor.size, scramble=True, seed=seed).random(n - 1)
            pts.append(self._from_unit_cube(u, owner))
        return np.vstack(pts)

    def _from_unit_cube(self, u, owner=0):
        raise NotImplementedError

    def ascent_direction(self, thetas, grad):
        return grad


@dataclass(frozen=True, eq=False)
class QuadraticMgfRegion(SearchRegion):
    """``{theta : J(theta) <= sqrt(2), ||theta|| <= norm_cap}`` where ``J`` is the
    second-order empirical approximation of the joint moment generating function.

    ``r_xy`` may be stacked (M x p x q), one cross moment per re-pairing.
    """

    mu_x: np.ndarray
    mu_y: np.ndarray
    r_x: np.ndarray
    r_y: np.ndarray
    r_xy: np.ndarray
    norm_cap: float
    bound_d: float = _BOUND_D
    kind: RegionKind = field(default=RegionKind.EXPONENTIAL_QUADRATIC, init=False)

    def __post_init__(self):
        b = np.concatenate([self.mu_x, self.mu_y])
        r_xy = np.asarray(self.r_xy, dtype=float)
        stack = r_xy[None] if r_xy.ndim == 2 else r_xy
        m = stack.shape[0]
        r = np.empty((m, b.size, b.size))
        p = self.mu_x.size
        r[:, :p, :p] = self.r_x
        r[:, p:, p:] = self.r_y
        r[:, :p, p:] = stack
        r[:, p:, :p] = np.transpose(stack, (0, 2, 1))
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "anchor", np.zeros(b.size))
        object.__setattr__(self, "_ellipsoids", [self._ellipsoid(r[i]) for i in range(m)])
        if self.bound_d <= 1.0:
            raise ValueError("search region does not contain the origin")

    @property
    def n_owners(self) -> int:
        return self._r.shape[0]

    def j_hat(self, thetas, owners=None) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        own = _owner_index(owners, thetas.shape[0])
        if self._r.shape[0] == 1:
            quad = np.einsum("ki,ij,kj->k", thetas, self._r[0], thetas)
        else:
            quad = np.einsum("ki,kij,kj->k", thetas, self._r[own], thetas)
        return 1.0 + thetas @ self._b + 0.5 * quad

    def contains(self, thetas, owners=None) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        return (self.j_hat(thetas, owners) <= self.bound_d) & (
            np.linalg.norm(thetas, axis=1) <= self.norm_cap)

    def project(self, current, proposed, owners=None):
        """Pull infeasible points back along the ray from the anchor (the origin)
        to the region boundary.  Along the ray ``J`` is a quadratic in the ray
        parameter, so the boundary crossing has a closed form."""
        proposed = np.atleast_2d(proposed).copy()
        own = _owner_index(owners, proposed.shape[0])
        bad = ~self.contains(proposed, own)
        if not np.any(bad):
            return proposed
        d = proposed[bad]
        ob = own[bad]
        lin = d @ self._b
        quad = 0.5 * np.einsum("ki,kij,kj->k", d, self._r[ob], d)
        slack = self.bound_d - 1.0
        # largest lam in [0, 1] with 1 + lam*lin + lam^2*quad <= bound_d
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(lin ** 2 + 4.0 * quad * slack, 0.0))
            root = np.where(quad > 0, 2.0 * slack / (lin + disc),
                            np.where(lin > 0, slack / lin, np.inf))
        lam = np.minimum(1.0, np.where(np.isfinite(root) & (root >= 0), root, 1.0))
        norms = np.linalg.norm(d, axis=1)
        lam = np.minimum(lam, np.where(norms > 0, self.norm_cap / np.where(norms > 0, norms, 1), 1.0))
        lam *= 1.0 - 1e-12
        out = d * lam[:, None]
        # guard against rounding at the boundary
        still = ~self.contains(out, ob)
        for _ in range(_GUARD_HALVINGS):
            if not np.any(still):
                break
            lam[still] *= 0.5
            out[still] = d[still] * lam[still, None]
            still = ~self.contains(out, ob)
        proposed[bad] = out
        return proposed

    def _ellipsoid(self, r):
        lam, vecs = np.linalg.eigh(r)
        lam = np.maximum(lam, 1e-12 * max(lam.max(), 1e-300))
        proj = vecs.T @ self._b
        centre = -vecs @ (proj / lam)
        kappa = self.bound_d - 1.0 + 0.5 * np.sum(proj ** 2 / lam)
        semi = np.minimum(np.sqrt(2.0 * kappa / lam), 2.0 * self.norm_cap)
        return centre, vecs, semi

    def diameters(self, owners=None) -> np.ndarray:
        per = np.array([min(2.0 * semi.max(), 2.0 * self.norm_cap)
                        for _, _, semi in self._ellipsoids])
        return per[_owner_index(owners, 1)]

    def _from_unit_cube(self, u, owner=0):
        v = 2.0 * u - 1.0
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        v = np.where(norms > 0, v * np.abs(v).max(axis=1, keepdims=True) / np.where(norms > 0, norms, 1), v)
        centre, vecs, semi = self._ellipsoids[owner]
        pts = centre + (v * semi) @ vecs.T
        return self.project(None, pts, np.full(len(pts), owner))


@dataclass(frozen=True, eq=False)
class PercentileBox(SearchRegion):
    """Rectangle between the 5th and 95th empirical percentiles of each coordinate.

    Marginal percentiles do not depend on the pairing, so one box serves
    every owner.
    """

    lo_s: np.ndarray
    hi_s: np.ndarray
    lo_t: np.ndarray
    hi_t: np.ndarray
    centred: bool = False
    kind: RegionKind = field(default=RegionKind.GAUSSIAN_PERCENTILE_BOX, init=False)
    anchor: np.ndarray = None

    def __post_init__(self):
        lo = np.concatenate([self.lo_s, self.lo_t])
        hi = np.concatenate([self.hi_s, self.hi_t])
        if np.any(lo > hi):
            raise ValueError("percentile box has lo > hi")
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        anchor = np.zeros(lo.size) if self.anchor is None else np.clip(self.anchor, lo, hi)
        object.__setattr__(self, "anchor", anchor)

    @property
    def lo(self):
        return self._lo

    @property
    def hi(self):
        return self._hi

    def contains(self, thetas, owners=None) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        return np.all((thetas >= self._lo) & (thetas <= self._hi), axis=1)

    def project(self, current, proposed, owners=None):
        return np.clip(np.atleast_2d(proposed), self._lo, self._hi)

    def diameters(self, owners=None) -> np.ndarray:
        n = 1 if owners is None else len(owners)
        return np.full(n, float(np.linalg.norm(self._hi - self._lo)))

    def _from_unit_cube(self, u, owner=0):
        return self._lo + u * (self._hi - self._lo)

    def ascent_direction(self, thetas, grad):
        grad = grad.copy()
        grad[(thetas <= self._lo) & (grad < 0)] = 0.0
        grad[(thetas >= self._hi) & (grad > 0)] = 0.0
        return grad


def build_search_region(sample: PairedSample, kind, perms=None) -> SearchRegion:
    """Search region for the exponential or Gaussian family.

    The Gaussian box is anchored at the sample mean instead of the origin
    when the origin falls outside it; this is equivalent to centring the data.
    With ``perms`` the exponential region carries one cross moment per
    Y re-pairing.
    """
    kind = _region_kind(kind)
    x, y = sample.x_data, sample.y_data
    n = sample.n
    if kind is RegionKind.EXPONENTIAL_QUADRATIC:
        max_abs = max(np.abs(x).max(), np.abs(y).max())
        norm_cap = 10.0 / max_abs if max_abs > 0 else np.inf
        if perms is None:
            r_xy = x.T @ y / n
        else:
            perms = np.atleast_2d(perms)
            r_xy = np.stack([x.T @ y[pm] for pm in perms]) / n
        return QuadraticMgfRegion(
            mu_x=x.mean(axis=0), mu_y=y.mean(axis=0),
            r_x=x.T @ x / n, r_y=y.T @ y / n, r_xy=r_xy,
            norm_cap=float(norm_cap),
        )
    lo_s, hi_s = np.percentile(x, [5, 95], axis=0)
    lo_t, hi_t = np.percentile(y, [5, 95], axis=0)
    lo = np.concatenate([lo_s, lo_t])
    hi = np.concatenate([hi_s, hi_t])
    origin_inside = bool(np.all((lo <= 0) & (hi >= 0)))
    anchor = None if origin_inside else np.concatenate([x.mean(axis=0), y.mean(axis=0)])
    return PercentileBox(lo_s, hi_s, lo_t, hi_t, centred=not origin_inside, anchor=anchor)


@dataclass
class SelectionResult:
    s_star: np.ndarray
    t_star: np.ndarray
    psi_star: float
    spec: MtFunctionSpec
    trace: List[List[Tuple[int, float, float]]]
    n_starts: int
    converged: List[bool]
    best_start: int
    n_evals: int = 0

    def to_dict(self) -> dict:
        return {
            "s_star": self.s_star.tolist(),
            "t_star": self.t_star.tolist(),
            "psi_star": self.psi_star,
            "n_starts": self.n_starts,
            "best_start": self.best_start,
            "converged": list(self.converged),
            "trace": [[list(row) for row in start] for start in self.trace],
        }


def projected_ascent(evaluate, region: SearchRegion, starts, config: SelectionConfig,
                     owners=None, record_trace: bool = True):
    """Run backtracking projected gradient ascent from every start in lock-step.

    Each iteration moves along the normalised (projected) gradient.  The
    trial length starts at ``init_step * diameter`` and is halved up to
    ``max_halvings`` times until psi strictly increases; later iterations
    start from twice the previously accepted length, capped at the same
    initial value.  A start stops when its accepted step is shorter than
    ``tol`` or when no halving increases psi.

    ``owners`` (one per start) routes each walker to its own re-pairing.

    Returns ``(thetas, psi, traces, converged)``.  Each trace row is
    ``(iteration, psi, step_norm)``; iteration 0 records the start value.
    """
    if owners is None:
        call = lambda th, idx: evaluate(th)
        grad_of = lambda th, idx: psi_gradient(evaluate, th, config.grad_step_h)
        proj = lambda cur, prop, idx: region.project(cur, prop)
    else:
        owners = np.asarray(owners, dtype=np.intp)
        call = lambda th, idx: evaluate(th, owners[idx])
        grad_of = lambda th, idx: psi_gradient(evaluate, th, config.grad_step_h, owners[idx])
        proj = lambda cur, prop, idx: region.project(cur, prop, owners[idx])

    theta = np.array(starts, dtype=float)
    n = theta.shape[0]
    every = np.arange(n)
    theta = proj(None, theta, every)
    psi = call(theta, every)
    traces = [[(0, float(psi[i]), 0.0)] for i in range(n)] if record_trace else None
    converged = np.zeros(n, dtype=bool)
    active = np.isfinite(psi)
    base_step = config.init_step * region.diameters(owners)
    if base_step.size == 1:
        base_step = np.full(n, base_step[0])
    stuck = ~(base_step > 0)
    active[stuck] = False
    converged[stuck] = True
    trial = base_step.copy()

    for it in range(1, config.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        grad = region.ascent_direction(theta[idx], grad_of(theta[idx], idx))
        gnorm = np.sqrt(np.einsum("ij,ij->i", grad, grad))
        flat = gnorm == 0
        if np.any(flat):
            converged[idx[flat]] = True
            active[idx[flat]] = False
            idx, grad, gnorm = idx[~flat], grad[~flat], gnorm[~flat]
            if idx.size == 0:
                break
        direction = grad / gnorm[:, None]

        step = trial[idx].copy()
        pending = np.arange(idx.size)
        for _ in range(config.max_halvings + 1):
            who = idx[pending]
            cur = theta[who]
            cand = proj(cur, cur + step[pending, None] * direction[pending], who)
            val = call(cand, who)
            up = val > psi[who]
            if np.any(up):
                hit = who[up]
                moved = np.sqrt(np.sum((cand[up] - theta[hit]) ** 2, axis=1))
                theta[hit] = cand[up]
                psi[hit] = val[up]
                trial[hit] = np.minimum(base_step[hit], 2.0 * step[pending[up]])
                if record_trace:
                    for i, v, m in zip(hit.tolist(), val[up].tolist(), moved.tolist()):
                        traces[i].append((it, v, m))
                done = hit[moved < config.tol]
                converged[done] = True
                active[done] = False
                pending = pending[~up]
            if pending.size == 0:
                break
            step[pending] *= 0.5
        # no ascent along the gradient within the halving budget: stationary
        stalled = idx[pending]
        converged[stalled] = True
        active[stalled] = False
    return theta, psi, traces, converged.tolist()


def _family_widths(sample, family):
    if family is Family.GAUSSIAN:
        return default_gaussian_widths(sample)
    return None, None


def select_parameters(sample: PairedSample, kind, config: Optional[SelectionConfig] = None,
                      region: Optional[SearchRegion] = None,
                      batch: Optional[MomentBatch] = None) -> SelectionResult:
    """Choose ``(s*, t*)`` maximising psi over the family's search region.

    Gaussian widths follow :func:`default_gaussian_widths`.  Points where
    the weights degenerate are rejected (psi = -inf) rather than aborting.
    The best start wins; ties go to the lowest start index.
    """
    config = config or SelectionConfig()
    family = _family(kind)
    if region is None:
        region = build_search_region(sample, family)
    sigma, tau = _family_widths(sample, family)
    evaluate = PsiEvaluator(sample, family, sigma, tau, batch=batch, min_ess=config.min_ess)
    evaluate.relax_floor(region.anchor)
    starts = region.starts(config.n_starts, config.seed)
    theta, psi, traces, converged = projected_ascent(evaluate, region, starts, config)
    best = int(np.argmax(psi))
    if not np.isfinite(psi[best]):
        # every start degenerate: fall back to the anchor point
        theta[best] = region.anchor
    spec = evaluate.spec(theta[best])
    return SelectionResult(
        s_star=spec.s, t_star=spec.t, psi_star=float(psi[best]), spec=spec,
        trace=traces, n_starts=len(starts), converged=converged, best_start=best,
        n_evals=evaluate.n_evals,
    )


def select_parameters_many(sample: PairedSample, kind, perms,
                           config: Optional[SelectionConfig] = None) -> List[MtFunctionSpec]:
    """Run :func:`select_parameters` for every Y re-pairing ``sample.y_data[perm]``.

    All re-pairings advance in lock-step through one batched evaluator,
    which is much cheaper than separate calls.  Returns one spec per row of
    ``perms``; each equals what ``select_parameters`` gives on the permuted
    sample (the widths and percentile box are pairing invariant).
    """
    config = config or SelectionConfig()
    family = _family(kind)
    perms = np.atleast_2d(np.asarray(perms, dtype=np.intp))
    m = perms.shape[0]
    region = build_search_region(sample, family, perms=perms)
    sigma, tau = _family_widths(sample, family)
    evaluate = PsiEvaluator(sample, family, sigma, tau, perms=perms, min_ess=config.min_ess)
    starts = np.vstack([region.starts(config.n_starts, config.seed, owner=i) for i in range(m)])
    owners = np.repeat(np.arange(m), config.n_starts)
    evaluate.relax_floor(np.repeat(region.anchor[None], m, axis=0), np.arange(m))
    theta, psi, _, _ = projected_ascent(evaluate, region, starts, config,
                                        owners=owners, record_trace=False)
    theta = theta.reshape(m, config.n_starts, -1)
    psi = psi.reshape(m, config.n_starts)
    specs = []
    for i in range(m):
        best = int(np.argmax(psi[i]))
        th = theta[i, best] if np.isfinite(psi[i, best]) else region.anchor
        specs.append(evaluate.spec(th))
    return specs
