"""Permutation tests for empirical canonical correlation coefficients.

Re-pairing the rows of ``Y`` at random destroys any dependence on ``X``
while keeping both marginals, so the coefficients of permuted samples form
a null distribution for the observed one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateNull, DimensionMismatch, MtccaError
from .moments import Family, MtFunctionSpec, PairedSample
from .selection import SelectionConfig, select_parameters, select_parameters_many
from .solver import mtcca

# share of permutations allowed to fail (after one resample) before giving up
_MAX_FAILURE_SHARE = 0.05
# rough cap on the per-chunk working set of the batched re-selection, in bytes
_CHUNK_BYTES = 64e6


@dataclass(frozen=True)
class Reselect:
    """Strategy that re-runs the parameter search on every permuted sample,
    so that the null statistic matches how the observed one was obtained."""

    family: Family
    config: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self):
        family = Family(self.family)
        if family is Family.IDENTITY:
            raise ValueError("the identity family has nothing to re-select")
        object.__setattr__(self, "family", family)

    def spec_for(self, sample: PairedSample) -> MtFunctionSpec:
        return select_parameters(sample, self.family, self.config).spec


SpecStrategy = Union[MtFunctionSpec, Reselect, str, None]


def _normalise_strategy(strategy):
    if strategy is None or (isinstance(strategy, str) and strategy == "identity"):
        return MtFunctionSpec.identity()
    if isinstance(strategy, (MtFunctionSpec, Reselect)):
        return strategy
    raise TypeError(f"unsupported spec strategy {strategy!r}")


def strategy_label(strategy) -> str:
    strategy = _normalise_strategy(strategy)
    if isinstance(strategy, Reselect):
        return f"reselect:{strategy.family.value}"
    return f"fixed:{strategy.kind.value}"


@dataclass
class SignificanceReport:
    order_k: int
    theta0: float
    p_value: float
    m_permutations: int = 1000
    alpha: float = 0.01
    seed: int = 0
    null_samples: Optional[np.ndarray] = None
    n_failures: int = 0
    strategy: str = "fixed:identity"

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        out = {
            "order_k": self.order_k,
            "theta0": self.theta0,
            "p_value": self.p_value,
            "significant": self.significant,
            "m_permutations": self.m_permutations,
            "alpha": self.alpha,
            "seed": self.seed,
            "n_failures": self.n_failures,
            "strategy": self.strategy,
        }
        if self.null_samples is not None:
            out["null_samples"] = self.null_samples.tolist()
        return out


def permutation_p_value(theta0: float, null) -> float:
    """Share of null statistics at or above ``theta0`` (ties count against
    significance).  Non-finite null entries are ignored."""
    null = np.asarray(null, dtype=float)
    null = null[np.isfinite(null)]
    if null.size == 0:
        raise DegenerateNull("no valid null statistics")
    return float(np.mean(null >= theta0))


def _permutation(seed, m, n, attempt=0):
    # the stream of permutation m depends only on (seed, m)
    rng = np.random.default_rng([seed, m])
    perm = rng.permutation(n)
    for _ in range(attempt):
        perm = rng.permutation(n)
    return perm


def _rho_under(sample, strategy):
    if isinstance(strategy, Reselect):
        return mtcca(sample, strategy.spec_for(sample)).rho
    return mtcca(sample, strategy).rho


def _chunk_size(sample: PairedSample) -> int:
    p, q = sample.p, sample.q
    per_owner = 8.0 * sample.n * (3 * (p + q) + p * q + 2)
    return max(1, int(_CHUNK_BYTES // per_owner))


def null_distribution(sample: PairedSample, strategy: SpecStrategy, m: int, seed: int = 0):
    """Coefficient vectors of ``m`` Y-permuted copies of ``sample``.

    Returns ``(null, n_failures)`` where ``null`` is ``m x r``.  A permutation
    whose solve fails is redrawn once from its own stream; rows that fail
    twice are NaN.

    Raises
    ------
    DegenerateNull
        If more than 5% of the permutations fail twice.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    strategy = _normalise_strategy(strategy)
    n, r = sample.n, min(sample.p, sample.q)
    perms = np.array([_permutation(seed, i, n) for i in range(m)])
    null = np.full((m, r), np.nan)
    retry = []
    if isinstance(strategy, Reselect):
        step = _chunk_size(sample)
        for lo in range(0, m, step):
            block = perms[lo:lo + step]
            specs = select_parameters_many(sample, strategy.family, block, strategy.config)
            for j, (perm, spec) in enumerate(zip(block, specs)):
                try:
                    null[lo + j] = mtcca(sample.with_y_permuted(perm), spec).rho
                except MtccaError:
                    retry.append(lo + j)
    else:
        for i, perm in enumerate(perms):
            try:
                null[i] = mtcca(sample.with_y_permuted(perm), strategy).rho
            except MtccaError:
                retry.append(i)
    failures = 0
    for i in retry:
        try:
            null[i] = _rho_under(sample.with_y_permuted(_permutation(seed, i, n, 1)), strategy)
        except MtccaError:
            failures += 1
    if failures > _MAX_FAILURE_SHARE * m:
        raise DegenerateNull(f"{failures} of {m} permutations failed")
    return null, failures


def permutation_test_orders(sample: PairedSample, strategy: SpecStrategy = None,
                            orders: Optional[Sequence[int]] = None, m: int = 1000,
                            seed: int = 0, alpha: float = 0.01,
                            keep_null: bool = False,
                            observed_rho=None) -> List[SignificanceReport]:
    """Test several orders against one shared set of permutations.

    ``observed_rho`` may carry the already computed coefficients of the
    unpermuted sample under the same strategy; otherwise they are computed.
    """
    strategy = _normalise_strategy(strategy)
    r = min(sample.p, sample.q)
    orders = list(range(1, r + 1)) if orders is None else [int(k) for k in orders]
    for k in orders:
        if not 1 <= k <= r:
            raise DimensionMismatch(f"order {k} outside 1..{r}")
    if observed_rho is None:
        observed_rho = _rho_under(sample, strategy)
    null, failures = null_distribution(sample, strategy, m, seed)
    label = strategy_label(strategy)
    reports = []
    for k in orders:
        theta0 = float(observed_rho[k - 1])
        reports.append(SignificanceReport(
            order_k=k, theta0=theta0, p_value=permutation_p_value(theta0, null[:, k - 1]),
            m_permutations=m, alpha=alpha, seed=seed,
            null_samples=null[:, k - 1].copy() if keep_null else None,
            n_failures=failures, strategy=label,
        ))
    return reports


def permutation_test(sample: PairedSample, spec_strategy: SpecStrategy = None, k: int = 1,
                     m: int = 1000, seed: int = 0, alpha: float = 0.01,
                     keep_null: bool = False) -> SignificanceReport:
    """p-value of the k-th empirical coefficient: the share of Y-permuted
    samples whose k-th coefficient reaches the observed one.

    ``spec_strategy`` is a fixed :class:`MtFunctionSpec`, a :class:`Reselect`
    or ``None``/``"identity"`` for linear CCA.
    """
    return permutation_test_orders(sample, spec_strategy, [k], m, seed, alpha, keep_null)[0]
