"""Monte-Carlo harness for the synthetic models and the direction-alignment metric."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import MtccaError, TooManyFailures, ZeroVector
from .moments import Family, MtFunctionSpec
from .selection import SelectionConfig, select_parameters
from .significance import Reselect, permutation_test_orders
from .simulation import TRUE_DIRECTIONS, SimulationModel, generate
from .solver import mtcca

_MAX_FAILURE_SHARE = 0.05


def alignment(u, v) -> float:
    """``|u.v| / (|u| |v|)``, the cosine between two directions up to sign."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError("vectors must have the same length")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("alignment is undefined for a zero vector")
    return float(min(1.0, abs(u @ v) / (nu * nv)))


@dataclass(frozen=True)
class MethodConfig:
    """One analysis method of a Monte-Carlo study.

    ``family`` identity is linear CCA.  For the MT families ``reselect``
    chooses whether the permutation test re-runs the parameter search on
    each permuted sample or keeps the parameters chosen on the data.
    """

    label: str
    family: Family = Family.IDENTITY
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    reselect: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    @classmethod
    def lcca(cls) -> "MethodConfig":
        return cls("LCCA", Family.IDENTITY)

    @classmethod
    def mtcca(cls, family, selection: Optional[SelectionConfig] = None,
              reselect: bool = True) -> "MethodConfig":
        family = Family(family)
        return cls(f"MTCCA-{family.value}", family, selection or SelectionConfig(), reselect)


@dataclass
class MonteCarloSummary:
    method: str
    n_trials: int
    seed: int
    mean_rho: np.ndarray
    std_rho: np.ndarray
    mean_p_value: Optional[np.ndarray] = None
    rejection_rate: Optional[np.ndarray] = None
    alpha: float = 0.01
    m_permutations: int = 0
    # keyed by canonical order
    align_a_mean: Dict[int, float] = field(default_factory=dict)
    align_a_std: Dict[int, float] = field(default_factory=dict)
    align_b_mean: Dict[int, float] = field(default_factory=dict)
    align_b_std: Dict[int, float] = field(default_factory=dict)
    n_failures: int = 0

    def to_dict(self) -> dict:
        opt = lambda a: None if a is None else np.asarray(a).tolist()
        keyed = lambda d: {str(k): v for k, v in sorted(d.items())}
        return {
            "method": self.method,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "mean_rho": opt(self.mean_rho),
            "std_rho": opt(self.std_rho),
            "mean_p_value": opt(self.mean_p_value),
            "rejection_rate": opt(self.rejection_rate),
            "alpha": self.alpha,
            "m_permutations": self.m_permutations,
            "align_a_mean": keyed(self.align_a_mean),
            "align_a_std": keyed(self.align_a_std),
            "align_b_mean": keyed(self.align_b_mean),
            "align_b_std": keyed(self.align_b_std),
            "n_failures": self.n_failures,
        }


def trial_seed(seed: int, trial: int) -> int:
    """Independent integer seed for one trial, derived from ``(seed, trial)``."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _run_trial(model, methods, trial, seed, m_permutations, alpha):
    """Results of every method on one generated sample (None where a method failed)."""
    tseed = trial_seed(seed, trial)
    sample = generate(model, np.random.default_rng(tseed))
    truth = TRUE_DIRECTIONS[model.name]
    out = []
    for method in methods:
        try:
            if method.family is Family.IDENTITY:
                spec = MtFunctionSpec.identity()
                strategy = spec
            else:
                spec = select_parameters(sample, method.family, method.selection).spec
                strategy = Reselect(method.family, method.selection) if method.reselect else spec
            sol = mtcca(sample, spec)
            p_values = None
            if m_permutations > 0:
                reports = permutation_test_orders(sample, strategy, m=m_permutations, seed=tseed,
                                                  alpha=alpha, observed_rho=sol.rho)
                p_values = np.array([rep.p_value for rep in reports])
            align = {}
            for k, (a_true, b_true) in truth.items():
                if k <= sol.r:
                    align[k] = (alignment(a_true, sol.a_dirs[:, k - 1]),
                                alignment(b_true, sol.b_dirs[:, k - 1]))
            out.append((sol.rho.copy(), p_values, align))
        except MtccaError:
            out.append(None)
    return out


def _summarise(method, rows, n_trials, seed, alpha, m_permutations):
    ok = [row for row in rows if row is not None]
    failures = len(rows) - len(ok)
    rho = np.array([row[0] for row in ok])
    summary = MonteCarloSummary(
        method=method.label, n_trials=n_trials, seed=seed,
        mean_rho=rho.mean(axis=0), std_rho=rho.std(axis=0),
        alpha=alpha, m_permutations=m_permutations, n_failures=failures,
    )
    if m_permutations > 0:
        pv = np.array([row[1] for row in ok])
        summary.mean_p_value = pv.mean(axis=0)
        summary.rejection_rate = (pv < alpha).mean(axis=0)
    for k in sorted(ok[0][2]):
        a = np.array([row[2][k][0] for row in ok])
        b = np.array([row[2][k][1] for row in ok])
        summary.align_a_mean[k] = float(a.mean())
        summary.align_a_std[k] = float(a.std())
        summary.align_b_mean[k] = float(b.mean())
        summary.align_b_std[k] = float(b.std())
    return summary


def run_monte_carlo(model: SimulationModel, methods: Sequence[MethodConfig], n_trials: int,
                    seed: int = 0, m_permutations: int = 0, alpha: float = 0.01,
                    n_jobs: int = 1) -> List[MonteCarloSummary]:
    """Repeat generate, select, solve and (optionally) test over ``n_trials``
    independent samples; every method sees the same samples.

    Trial ``i`` draws from a generator seeded by ``(seed, i)``, so results do
    not depend on ``n_jobs``.  ``m_permutations = 0`` skips the permutation
    tests.  p-values are averaged raw and also reported as rejection rates
    at ``alpha``.

    Raises
    ------
    TooManyFailures
        If more than 5% of the trials of any method fail.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    methods = list(methods)
    args = [(model, methods, i, seed, m_permutations, alpha) for i in range(n_trials)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_trial_star, args))
    else:
        results = [_run_trial(*a) for a in args]
    summaries = []
    for j, method in enumerate(methods):
        rows = [res[j] for res in results]
        failures = sum(row is None for row in rows)
        if failures > _MAX_FAILURE_SHARE * n_trials:
            raise TooManyFailures(f"{method.label}: {failures} of {n_trials} trials failed")
        summaries.append(_summarise(method, rows, n_trials, seed, alpha, m_permutations))
    return summaries


def _run_trial_star(args):
    return _run_trial(*args)
