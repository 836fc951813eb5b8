"""Data generators and power-study harness.

Generators
----------
* Bernstein's coins: two fair coins, ``A`` = first shows heads, ``B`` =
  second shows tails, ``C`` = both show the same side. The three indicators
  are pairwise independent but not mutually independent.
* Sinusoidal: two uniform marginals on ``[-pi, pi]`` with joint density
  ``(1 + sin(l x) sin(l y)) / (4 pi^2)``; the dependence gets more local as
  ``l`` grows.
* Independent uniforms on ``[0, 1]``, for size checks.

Every generator is a deterministic function of ``(seed, N, parameters)``.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import inference
from . import multivariance as mv
from .centering import BlockSample
from .cndf import CndfSpec
from .errors import ConfigError
from .oracle import FiniteDistribution
from .rng import make_rng, resolve_seed, spawn

__all__ = [
    "Generator",
    "TestKind",
    "PowerStudyConfig",
    "PowerRow",
    "bernstein_sample",
    "bernstein_distribution",
    "bernstein_population",
    "bernstein_report",
    "sinusoidal_sample",
    "sinusoidal_density",
    "independent_uniform_sample",
    "power_study",
    "rows_to_csv",
    "rows_to_json",
    "worker_count",
]


def bernstein_sample(N: int, seed=None) -> BlockSample:
    """``N`` tosses of Bernstein's coins as three 0/1 blocks ``(A, B, C)``."""
    rng = make_rng(seed)
    heads1 = rng.integers(0, 2, N)
    heads2 = rng.integers(0, 2, N)
    a = heads1
    b = 1 - heads2
    c = (heads1 == heads2).astype(int)
    return BlockSample(np.column_stack([a, b, c]))


def bernstein_distribution() -> FiniteDistribution:
    """Exact joint law of ``(A, B, C)``: four equally likely points."""
    support = [[1, 0, 1], [1, 1, 0], [0, 0, 0], [0, 1, 1]]
    return FiniteDistribution(np.array(support, dtype=float), np.full(4, 0.25))


def bernstein_population() -> dict:
    """Analytic targets for Euclidean ``psi`` (``psi(1) = 1``)."""
    return {
        "m2": 1 / 8,
        "m": 1 / (2 * math.sqrt(2)),
        "total_m2": 1 / 8,
        "total_m": 1 / (2 * math.sqrt(2)),
        "a": [0.5, 0.5, 0.5],
        "b": [0.5, 0.5, 0.5],
        "multicorrelation": 1.0,
        "normalized_m": 1.0,
        "normalized_total_m": 0.5,
        "pairwise_m2": 0.0,
    }


def bernstein_report(N: int, seed=None, specs: CndfSpec | None = None) -> dict:
    """Analytic targets next to the statistics of one simulated sample."""
    seed = resolve_seed(seed)
    specs = specs or CndfSpec.euclidean()
    sample = bernstein_sample(N, seed)
    est = mv.compute(sample, specs)
    pairs = {}
    for i, j in ((0, 1), (1, 2), (0, 2)):
        pairs["ABC"[i] + "ABC"[j]] = mv.compute(sample.select([i, j]), specs).m2
    return {
        "N": N,
        "seed": seed,
        "analytic": bernstein_population(),
        "simulated": {
            "m2": est.m2,
            "m": est.m,
            "total_m2": est.total_m2,
            "total_m": est.total_m,
            "a": list(est.a_hat),
            "b": list(est.b_hat),
            "multicorrelation": est.multicorrelation,
            "normalized_m": est.normalized_m,
            "normalized_total_m": est.normalized_total_m,
            "pairwise_m2": pairs,
        },
    }


def sinusoidal_density(x, y, l: int):
    return (1.0 + np.sin(l * np.asarray(x)) * np.sin(l * np.asarray(y))) / (4.0 * math.pi ** 2)


def _sinusoidal_rejection(N: int, l: int, rng) -> tuple[np.ndarray, int]:
    """``N`` accepted points and the number of proposals it took."""
    points, have, proposed = [], 0, 0
    while have < N:
        m = 2 * (N - have) + 16
        x = rng.uniform(-math.pi, math.pi, m)
        y = rng.uniform(-math.pi, math.pi, m)
        keep = rng.random(m) < 0.5 * (1.0 + np.sin(l * x) * np.sin(l * y))
        # count proposals only up to the N-th acceptance
        idx = np.flatnonzero(keep)[: N - have]
        proposed += int(idx[-1]) + 1 if have + len(idx) == N else m
        points.append(np.column_stack([x[idx], y[idx]]))
        have += len(idx)
    return np.vstack(points), proposed


def sinusoidal_sample(N: int, l: int, seed=None) -> BlockSample:
    """Rejection sampler for the sinusoidal density.

    Proposals are uniform on the square and accepted with probability
    ``(1 + sin(l x) sin(l y)) / 2``, so about half are kept.
    """
    if int(l) != l or l < 1:
        raise ConfigError(f"l must be a positive integer, got {l!r}")
    points, _ = _sinusoidal_rejection(N, int(l), make_rng(seed))
    return BlockSample(points)


def independent_uniform_sample(N: int, n: int = 3, seed=None) -> BlockSample:
    rng = make_rng(seed)
    return BlockSample(rng.random((N, n)))


class Generator(str, enum.Enum):
    BERNSTEIN = "bernstein"
    SINUSOIDAL = "sinusoidal"
    INDEPENDENT_UNIFORM = "uniform"


class TestKind(str, enum.Enum):
    __test__ = False

    TEST1 = "test1"
    TEST2 = "test2"
    PERMUTATION = "permutation"
    MONTE_CARLO = "montecarlo"


@dataclass(frozen=True)
class PowerStudyConfig:
    """One point of a power curve.

    ``param`` is ``l`` for the sinusoidal generator and the number of blocks
    for independent uniforms; Bernstein's coins take no parameter.
    """

    generator: Generator
    N: int
    param: int | None = None
    replications: int = 1000
    alpha: float = 0.05
    test: TestKind = TestKind.TEST2
    specs: tuple[CndfSpec, ...] = (CndfSpec.euclidean(),)
    resamples: int = inference.DEFAULT_RESAMPLES
    statistic: inference.Statistic = inference.Statistic.NORMALIZED_TOTAL_M
    seed: int = 0

    def __post_init__(self):
        for name, kind in (("generator", Generator), ("test", TestKind), ("statistic", inference.Statistic)):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError:
                choices = ", ".join(k.value for k in kind)
                raise ConfigError(f"unknown {name} {getattr(self, name)!r}; choose from {choices}") from None
        if isinstance(self.specs, CndfSpec):
            object.__setattr__(self, "specs", (self.specs,))
        else:
            object.__setattr__(self, "specs", tuple(self.specs))
        if self.N < 3:
            raise ConfigError(f"N must be at least 3, got {self.N}")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if self.test in (TestKind.PERMUTATION, TestKind.MONTE_CARLO) and self.resamples < 1:
            raise ConfigError("resampling tests need resamples >= 1")
        if self.generator is Generator.BERNSTEIN and self.param is not None:
            raise ConfigError("Bernstein's coins take no parameter")
        if self.generator is Generator.SINUSOIDAL and (self.param is None or self.param < 1):
            raise ConfigError("the sinusoidal generator needs an integer l >= 1")
        if self.generator is Generator.INDEPENDENT_UNIFORM and self.param is not None and self.param < 2:
            raise ConfigError("independent uniforms need at least two blocks")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if len(self.specs) not in (1, self.n_blocks):
            raise ConfigError(
                f"{self.generator.value} produces {self.n_blocks} blocks but {len(self.specs)} cndf specs were given"
            )

    @property
    def n_blocks(self) -> int:
        if self.generator is Generator.BERNSTEIN:
            return 3
        if self.generator is Generator.SINUSOIDAL:
            return 2
        return self.param or 3

    @property
    def psi_label(self) -> str:
        return ";".join(str(s) for s in self.specs)


@dataclass(frozen=True)
class PowerRow:
    generator: str
    param: int | None
    N: int
    test: str
    psi: str
    rate: float
    se: float
    replications: int
    seed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _draw(config: PowerStudyConfig, rng) -> BlockSample:
    if config.generator is Generator.BERNSTEIN:
        return bernstein_sample(config.N, rng)
    if config.generator is Generator.SINUSOIDAL:
        return sinusoidal_sample(config.N, config.param, rng)
    return independent_uniform_sample(config.N, config.n_blocks, rng)


def _marginal_samplers(config: PowerStudyConfig):
    if config.generator is Generator.BERNSTEIN:
        coin = lambda rng, size: rng.integers(0, 2, size).astype(float)  # noqa: E731
        return [coin] * 3
    if config.generator is Generator.SINUSOIDAL:
        unif = lambda rng, size: rng.uniform(-math.pi, math.pi, size)  # noqa: E731
        return [unif] * 2
    return [lambda rng, size: rng.random(size)] * config.n_blocks


def worker_count() -> int:
    """Worker threads for replication loops, capped by ``MULTIVARIANCE_THREADS``."""
    try:
        cap = int(os.environ.get("MULTIVARIANCE_THREADS", "0"))
    except ValueError:
        cap = 0
    cpus = os.cpu_count() or 1
    return max(1, min(cap, cpus) if cap > 0 else cpus)


def _rejections(config: PowerStudyConfig, workers: int) -> np.ndarray:
    rngs = spawn(config.seed, config.replications)
    samples = [_draw(config, rng) for rng in rngs]

    if config.test in (TestKind.TEST1, TestKind.TEST2):
        blocks = [np.stack([s.block(i) for s in samples]) for i in range(config.n_blocks)]
        stats = mv.compute_batch(blocks, list(config.specs))
        key = "normalized_m2" if config.test is TestKind.TEST1 else "normalized_total_m2"
        crit = inference.chi2_quantile_1df(1.0 - config.alpha)
        return config.N * stats[key] >= crit

    def one(k: int) -> bool:
        sub_seed = int(rngs[k].integers(0, 2 ** 63))
        if config.test is TestKind.PERMUTATION:
            report = inference.permutation_test(
                samples[k], list(config.specs), config.statistic, config.resamples, sub_seed, config.alpha
            )
        else:
            report = inference.montecarlo_test(
                samples[k], list(config.specs), _marginal_samplers(config),
                config.statistic, config.resamples, sub_seed, config.alpha,
            )
        return report.reject

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(one, range(config.replications))))
    return np.array([one(k) for k in range(config.replications)])


def power_study(configs: PowerStudyConfig | Iterable[PowerStudyConfig], workers: int | None = None) -> list[PowerRow]:
    """Rejection rate with its binomial standard error for each configuration."""
    if isinstance(configs, PowerStudyConfig):
        configs = [configs]
    workers = worker_count() if workers is None else max(1, int(workers))
    rows = []
    for config in configs:
        rejected = _rejections(config, workers)
        R = config.replications
        rate = float(np.mean(rejected))
        rows.append(
            PowerRow(
                generator=config.generator.value,
                param=config.param,
                N=config.N,
                test=config.test.value,
                psi=config.psi_label,
                rate=rate,
                se=math.sqrt(rate * (1.0 - rate) / R),
                replications=R,
                seed=config.seed,
            )
        )
    return rows


def sweep(base: PowerStudyConfig, **grid: Sequence) -> list[PowerStudyConfig]:
    """Cartesian product of field values applied to ``base``."""
    configs = [base]
    for name, values in grid.items():
        configs = [replace(c, **{name: v}) for c in configs for v in values]
    return configs


CSV_COLUMNS = ("generator", "param", "N", "test", "psi", "rate", "se", "replications", "seed")


def rows_to_csv(rows: Sequence[PowerRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        d = row.to_dict()
        writer.writerow(
            ["" if d[k] is None else (f"{d[k]:.17g}" if isinstance(d[k], float) else d[k]) for k in CSV_COLUMNS]
        )
    return buf.getvalue()


def rows_to_json(rows: Sequence[PowerRow]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2)
