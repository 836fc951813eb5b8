"""Independence tests based on (total) distance multivariance.

Two distribution-free conservative tests compare ``N`` times the squared
normalized (total) multivariance with the ``1 - alpha`` quantile of a
chi-square distribution with one degree of freedom. The bound behind them
holds for ``alpha <= 0.215``; larger levels are accepted with a warning.

Permutation and Monte-Carlo tests estimate the null distribution by
resampling and report add-one p-values ``(1 + #{T* >= T}) / (1 + B)``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import multivariance as mv
from .centering import BlockSample, broadcast_specs, centered_matrices
from .cndf import CndfSpec
from .errors import InputError, ParameterError
from .rng import make_rng, resolve_seed

__all__ = [
    "Method",
    "Statistic",
    "TestReport",
    "ALPHA_BOUND",
    "DEFAULT_RESAMPLES",
    "chi2_quantile_1df",
    "test_multivariance_conservative",
    "test_total_conservative",
    "permutation_test",
    "montecarlo_test",
    "expected_scaled_statistic_under_independence",
    "bias_constant",
]

ALPHA_BOUND = 0.215
DEFAULT_RESAMPLES = 999
# resampled statistics within this relative distance of the observed one
# count as ties (mathematically equal values may differ in the last bits)
_TIE_RTOL = 1e-10


class Method(str, enum.Enum):
    CONSERVATIVE_CHI2 = "ConservativeChi2"
    PERMUTATION = "Permutation"
    MONTE_CARLO = "MonteCarlo"


class Statistic(str, enum.Enum):
    M = "m"
    TOTAL_M = "total"
    NORMALIZED_M = "normalized"
    NORMALIZED_TOTAL_M = "normalized-total"

    @property
    def estimate_key(self) -> str:
        return {
            Statistic.M: "m2",
            Statistic.TOTAL_M: "total_m2",
            Statistic.NORMALIZED_M: "normalized_m2",
            Statistic.NORMALIZED_TOTAL_M: "normalized_total_m2",
        }[self]


@dataclass(frozen=True)
class TestReport:
    """Outcome of one independence test.

    ``statistic`` is always ``N`` times the squared statistic. Exactly one of
    ``critical_value`` (chi-square method) and ``p_value`` (resampling
    methods) is set.
    """

    __test__ = False  # not a pytest class

    statistic: float
    method: Method
    alpha: float
    reject: bool
    statistic_kind: Statistic
    critical_value: float | None = None
    p_value: float | None = None
    resamples: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        out = {
            "statistic": self.statistic,
            "statistic_kind": self.statistic_kind.value,
            "method": self.method.value,
            "alpha": self.alpha,
        }
        if self.critical_value is not None:
            out["critical_value"] = self.critical_value
        if self.p_value is not None:
            out["p_value"] = self.p_value
        out.update(reject=self.reject, resamples=self.resamples, seed=self.seed)
        return out


def chi2_quantile_1df(q: float) -> float:
    """``q``-quantile of the chi-square distribution with one degree of freedom."""
    if not 0.0 < q < 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1), got {q!r}")
    if q <= 0.5:
        # CDF is erf(sqrt(x / 2)); erfinv keeps relative accuracy for tiny q
        return 2.0 * float(special.erfinv(q)) ** 2
    return float(special.chdtri(1.0, 1.0 - q))


def _check_alpha(alpha: float, conservative: bool) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    if conservative and alpha > ALPHA_BOUND:
        warnings.warn(
            f"alpha = {alpha} exceeds {ALPHA_BOUND}; the chi-square bound is not guaranteed",
            stacklevel=3,
        )
    return alpha


def _conservative(sample: BlockSample, specs, alpha: float, kind: Statistic) -> TestReport:
    alpha = _check_alpha(alpha, conservative=True)
    if sample.N < 2:
        raise InputError("the test needs at least two observations")
    if kind is Statistic.NORMALIZED_TOTAL_M and sample.n < 2:
        raise InputError("total multivariance needs at least two blocks")
    est = mv.compute(sample, specs)
    statistic = sample.N * getattr(est, kind.estimate_key)
    crit = chi2_quantile_1df(1.0 - alpha)
    return TestReport(
        statistic=float(statistic),
        method=Method.CONSERVATIVE_CHI2,
        alpha=alpha,
        reject=bool(statistic >= crit),
        statistic_kind=kind,
        critical_value=crit,
    )


def test_multivariance_conservative(sample: BlockSample, specs, alpha: float = 0.05) -> TestReport:
    """Reject independence when ``N * normalized_m2 >= chi2_{1-alpha}(1)``.

    Only valid under the a-priori assumption that every ``n - 1`` of the
    blocks are independent.
    """
    return _conservative(sample, specs, alpha, Statistic.NORMALIZED_M)


def test_total_conservative(sample: BlockSample, specs, alpha: float = 0.05) -> TestReport:
    """Reject independence when ``N * normalized_total_m2 >= chi2_{1-alpha}(1)``."""
    return _conservative(sample, specs, alpha, Statistic.NORMALIZED_TOTAL_M)


class _PermutedStatistic:
    """Evaluates one statistic on the centred matrices under index maps.

    Block 0 stays fixed; block ``i`` is re-indexed by ``perms[i - 1]``.
    """

    def __init__(self, matrices, kind: Statistic):
        self.kind = kind
        n = len(matrices)
        b = [m.grand_mean_B for m in matrices]
        arrays = [m.A for m in matrices]
        if kind in (Statistic.NORMALIZED_M, Statistic.NORMALIZED_TOTAL_M):
            arrays = [a / v if v > 0.0 else np.zeros_like(a) for a, v in zip(arrays, b)]
        self.arrays = arrays
        self.scale = 1.0 / (2 ** n - 1 - n) if kind is Statistic.NORMALIZED_TOTAL_M else 1.0
        self.total = kind in (Statistic.TOTAL_M, Statistic.NORMALIZED_TOTAL_M)

    def __call__(self, perms: Sequence[np.ndarray] | None = None) -> float:
        arrays = self.arrays
        if perms is not None:
            arrays = [arrays[0]] + [a[np.ix_(p, p)] for a, p in zip(arrays[1:], perms)]
        if not self.total:
            prod = arrays[0] * arrays[1] if len(arrays) > 1 else arrays[0].copy()
            for a in arrays[2:]:
                prod *= a
            return float(prod.mean())
        e1 = arrays[0].copy()
        e2 = np.zeros_like(e1)
        for a in arrays[1:]:
            e2 += a * e1
            e1 += a * (1.0 + e1)
        return self.scale * float(e2.mean())


def _p_value(observed: float, resampled: np.ndarray) -> float:
    threshold = observed - _TIE_RTOL * abs(observed)
    return (1.0 + float(np.count_nonzero(resampled >= threshold))) / (1.0 + len(resampled))


def _resampling_args(resamples: int, alpha: float, seed):
    if int(resamples) != resamples or resamples < 1:
        raise ParameterError(f"resamples must be a positive integer, got {resamples!r}")
    return int(resamples), _check_alpha(alpha, conservative=False), resolve_seed(seed)


def permutation_test(
    sample: BlockSample,
    specs,
    statistic_kind: Statistic | str = Statistic.NORMALIZED_TOTAL_M,
    resamples: int = DEFAULT_RESAMPLES,
    seed=None,
    alpha: float = 0.05,
) -> TestReport:
    """Permutation test of mutual independence of the blocks.

    Every block except the first is permuted independently, which destroys
    all cross-block dependence while keeping each marginal sample. The
    centred matrices are computed once; each resample only re-indexes them.
    """
    kind = Statistic(statistic_kind)
    resamples, alpha, seed = _resampling_args(resamples, alpha, seed)
    if sample.N < 3:
        raise InputError("a permutation test needs at least three observations")
    if sample.n < 2:
        raise InputError("a permutation test needs at least two blocks")
    stat = _PermutedStatistic(centered_matrices(sample, specs), kind)
    observed = stat()
    rng = make_rng(seed)
    N = sample.N
    resampled = np.empty(resamples)
    for r in range(resamples):
        resampled[r] = stat([rng.permutation(N) for _ in range(sample.n - 1)])
    p = _p_value(observed, resampled)
    return TestReport(
        statistic=N * observed,
        method=Method.PERMUTATION,
        alpha=alpha,
        reject=bool(p <= alpha),
        statistic_kind=kind,
        p_value=p,
        resamples=resamples,
        seed=seed,
    )


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def montecarlo_test(
    sample: BlockSample,
    specs,
    marginal_samplers: Sequence[Sampler],
    statistic_kind: Statistic | str = Statistic.NORMALIZED_TOTAL_M,
    resamples: int = DEFAULT_RESAMPLES,
    seed=None,
    alpha: float = 0.05,
) -> TestReport:
    """Monte-Carlo test against known marginal laws.

    ``marginal_samplers[i](rng, N)`` must return ``N`` draws of block ``i``
    as an ``(N,)`` or ``(N, d_i)`` array. The null distribution is sampled
    from the product of the marginals.
    """
    kind = Statistic(statistic_kind)
    resamples, alpha, seed = _resampling_args(resamples, alpha, seed)
    if len(marginal_samplers) != sample.n:
        raise InputError(f"got {len(marginal_samplers)} samplers for {sample.n} blocks")
    specs = broadcast_specs(specs, sample)
    N = sample.N
    observed = getattr(mv.compute(sample, specs), kind.estimate_key)

    rng = make_rng(seed)
    draws = []
    for i, sampler in enumerate(marginal_samplers):
        x = np.asarray(sampler(rng, N * resamples), dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape != (N * resamples, sample.widths[i]):
            raise InputError(
                f"sampler {i} returned shape {x.shape}, expected ({N * resamples}, {sample.widths[i]})"
            )
        draws.append(x.reshape(resamples, N, sample.widths[i]))
    resampled = mv.compute_batch(draws, specs)[kind.estimate_key]
    p = _p_value(observed, resampled)
    return TestReport(
        statistic=N * observed,
        method=Method.MONTE_CARLO,
        alpha=alpha,
        reject=bool(p <= alpha),
        statistic_kind=kind,
        p_value=p,
        resamples=resamples,
        seed=seed,
    )


def bias_constant(N: int, n: int) -> float:
    """``((N-1)**n + (-1)**n (N-1)) / N**n``."""
    return ((N - 1) ** n + (-1) ** n * (N - 1)) / N ** n


def expected_scaled_statistic_under_independence(b: Sequence[float], N: int) -> float:
    """Mean of ``N * m2`` for independent blocks with ``b_i = E psi_i(X_i - X_i')``.

    The sample multivariance is biased upwards; this is its exact finite-N
    expectation under independence.
    """
    if N < 2:
        raise ParameterError(f"N must be at least 2, got {N}")
    b = [float(v) for v in b]
    if any(v < 0.0 for v in b):
        raise ParameterError("scale factors must be non-negative")
    return bias_constant(int(N), len(b)) * math.prod(b)
