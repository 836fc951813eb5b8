"""Independent reference computations.

Nothing here shares code with the fast estimators beyond scalar ``psi``
evaluation: population quantities of finite-support laws are obtained by
explicit double sums with conditional expectations taken over the marginal
supports, and the brute-force sample formula evaluates every entry of the
centred product directly from the observations.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import multivariance as mv
from .centering import BlockSample, broadcast_specs
from .cndf import CndfSpec, evaluate
from .errors import EnumerationLimitError, InputError, NumericalError
from .rng import make_rng

__all__ = [
    "FiniteDistribution",
    "population_multivariance_exact",
    "population_total_exact",
    "population_scale_factors",
    "population_statistics",
    "sample_multivariance_bruteforce",
    "total_via_subset_enumeration",
    "GaussianMCResult",
    "gaussian_multivariance_mc",
    "MAX_ENUMERATION_BLOCKS",
]

MAX_ENUMERATION_BLOCKS = 12


@dataclass(frozen=True)
class FiniteDistribution:
    """A joint law with finitely many support points.

    Each support point is a row of length ``sum(widths)`` made of ``n``
    blocks. Repeated rows are merged and their probabilities added.
    """

    support: np.ndarray
    probabilities: np.ndarray
    widths: tuple[int, ...] = field(default=())

    def __post_init__(self):
        support = np.array(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        probs = np.array(self.probabilities, dtype=float).reshape(-1)
        if support.shape[0] != probs.shape[0] or support.shape[0] == 0:
            raise InputError("support and probabilities must be non-empty and of equal length")
        if not np.all(np.isfinite(support)) or not np.all(np.isfinite(probs)):
            raise InputError("support points and probabilities must be finite")
        if np.any(probs < 0.0):
            raise InputError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        widths = tuple(int(w) for w in self.widths) or (1,) * support.shape[1]
        if sum(widths) != support.shape[1] or any(w < 1 for w in widths):
            raise InputError(f"block widths {widths} do not partition {support.shape[1]} columns")
        uniq, inverse = np.unique(support, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse.reshape(-1), probs)
        object.__setattr__(self, "support", uniq)
        object.__setattr__(self, "probabilities", merged)
        object.__setattr__(self, "widths", widths)

    @property
    def n(self) -> int:
        return len(self.widths)

    def block(self, i: int) -> np.ndarray:
        start = sum(self.widths[:i])
        return self.support[:, start:start + self.widths[i]]

    def marginal_table(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distinct values of block ``i``, their probabilities, and the map from support rows."""
        values, inverse = np.unique(self.block(i), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        probs = np.zeros(len(values))
        np.add.at(probs, inverse, self.probabilities)
        return values, probs, inverse

    def marginal(self, indices: Sequence[int]) -> "FiniteDistribution":
        """Joint law of the listed blocks."""
        cols = np.hstack([self.block(i) for i in indices])
        return FiniteDistribution(cols, self.probabilities, tuple(self.widths[i] for i in indices))

    def append_independent(self, other: "FiniteDistribution") -> "FiniteDistribution":
        """Law of ``(X, Y)`` with ``Y ~ other`` independent of ``X ~ self``."""
        rows, probs = [], []
        for x, p in zip(self.support, self.probabilities):
            for y, q in zip(other.support, other.probabilities):
                rows.append(np.concatenate([x, y]))
                probs.append(p * q)
        return FiniteDistribution(np.array(rows), np.array(probs), self.widths + other.widths)

    @classmethod
    def product(cls, *laws: "FiniteDistribution") -> "FiniteDistribution":
        out = laws[0]
        for law in laws[1:]:
            out = out.append_independent(law)
        return out

    @classmethod
    def empirical(cls, sample: BlockSample) -> "FiniteDistribution":
        """Uniform weights on the observations of ``sample``."""
        N = sample.N
        return cls(sample.data, np.full(N, 1.0 / N), sample.widths)

    @classmethod
    def from_rows(cls, rows, widths=()) -> "FiniteDistribution":
        """Rows ``[x_1, ..., x_d, probability]``."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] < 2:
            raise InputError("each row needs at least one coordinate and a probability")
        return cls(rows[:, :-1], rows[:, -1], widths)

    @classmethod
    def from_json(cls, path) -> "FiniteDistribution":
        """Load ``{"widths": [...], "rows": [[x..., p], ...]}``."""
        with open(path) as fh:
            doc = json.load(fh)
        try:
            return cls.from_rows(doc["rows"], doc.get("widths", ()))
        except (KeyError, TypeError) as exc:
            raise InputError(f"{path}: malformed distribution file ({exc})") from None

    @classmethod
    def from_csv(cls, path, widths=()) -> "FiniteDistribution":
        """One support point per line, probability in the last column; a header line is skipped."""
        rows = []
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh), start=1):
                if not rec:
                    continue
                try:
                    rows.append([float(v) for v in rec])
                except ValueError:
                    if lineno == 1:
                        continue
                    raise InputError(f"{path}:{lineno}: non-numeric entry") from None
        return cls.from_rows(rows, widths)

    def to_json(self, path) -> None:
        rows = np.hstack([self.support, self.probabilities[:, None]]).tolist()
        with open(path, "w") as fh:
            json.dump({"widths": list(self.widths), "rows": rows}, fh)


def _specs_for(dist: FiniteDistribution, specs) -> list[CndfSpec]:
    if isinstance(specs, CndfSpec):
        specs = [specs]
    specs = list(specs)
    if len(specs) == 1:
        return [specs[0].with_dimension(w) for w in dist.widths]
    if len(specs) != dist.n:
        raise InputError(f"got {len(specs)} cndf specs for {dist.n} blocks")
    return specs


def _centred_factor(dist: FiniteDistribution, i: int, spec: CndfSpec) -> np.ndarray:
    """``-psi(x-x') + E[psi|x] + E[psi|x'] - E psi`` on all pairs of support rows."""
    values, q, idx = dist.marginal_table(i)
    k = len(values)
    D = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            D[a, b] = evaluate(spec, values[a] - values[b])
    cond = [math.fsum(q[b] * D[a, b] for b in range(k)) for a in range(k)]
    mean = math.fsum(q[a] * cond[a] for a in range(k))
    m = len(idx)
    F = np.empty((m, m))
    for u in range(m):
        for v in range(m):
            a, b = idx[u], idx[v]
            F[u, v] = -D[a, b] + cond[a] + cond[b] - mean
    return F


def population_multivariance_exact(dist: FiniteDistribution, specs) -> float:
    """Squared distance multivariance of a finite law, computed exactly.

    Uses the product representation with an independent copy ``X'``: the
    expectation of the product over blocks of the doubly centred
    ``psi(X_i - X_i')``.
    """
    specs = _specs_for(dist, specs)
    factors = [_centred_factor(dist, i, s) for i, s in enumerate(specs)]
    p = dist.probabilities
    m = len(p)
    terms = []
    for u in range(m):
        for v in range(m):
            terms.append(p[u] * p[v] * math.prod(F[u, v] for F in factors))
    return math.fsum(terms)


def _subsets(n: int) -> Iterator[tuple[int, ...]]:
    for size in range(2, n + 1):
        yield from itertools.combinations(range(n), size)


def population_total_exact(dist: FiniteDistribution, specs) -> float:
    """Squared total multivariance: sum over all block subsets of size >= 2."""
    specs = _specs_for(dist, specs)
    if dist.n < 2:
        raise InputError("total multivariance needs at least two blocks")
    return math.fsum(
        population_multivariance_exact(dist.marginal(S), [specs[i] for i in S]) for S in _subsets(dist.n)
    )


def population_scale_factors(dist: FiniteDistribution, specs) -> tuple[list[float], list[float]]:
    """``(a, b)``: ``b_i = E psi(X_i - X_i')`` and ``a_i`` the ``L^n`` norm of the centred psi."""
    specs = _specs_for(dist, specs)
    n = dist.n
    a, b = [], []
    for i, spec in enumerate(specs):
        values, q, _ = dist.marginal_table(i)
        k = len(values)
        D = [[evaluate(spec, values[s] - values[t]) for t in range(k)] for s in range(k)]
        cond = [math.fsum(q[t] * D[s][t] for t in range(k)) for s in range(k)]
        mean = math.fsum(q[s] * cond[s] for s in range(k))
        b.append(mean)
        moment = math.fsum(
            q[s] * q[t] * abs(D[s][t] - cond[s] - cond[t] + mean) ** n for s in range(k) for t in range(k)
        )
        a.append(moment ** (1.0 / n) if moment > 0.0 else 0.0)
    return a, b


def population_statistics(dist: FiniteDistribution, specs) -> dict:
    """Population counterparts of every sample statistic, by subset enumeration."""
    specs = _specs_for(dist, specs)
    n = dist.n
    a, b = population_scale_factors(dist, specs)
    m2 = population_multivariance_exact(dist, specs)
    out = {"m2": m2, "a": a, "b": b}
    out["normalized_m2"] = m2 / math.prod(b) if all(v > 0 for v in b) else 0.0
    out["multicorrelation2"] = m2 / math.prod(a) if all(v > 0 for v in a) else 0.0
    if n >= 2:
        total, normalized = [], []
        for S in _subsets(n):
            mS = population_multivariance_exact(dist.marginal(S), [specs[i] for i in S])
            bS = math.prod(b[i] for i in S)
            total.append(mS)
            normalized.append(mS / bS if bS > 0 else 0.0)
        out["total_m2"] = math.fsum(total)
        out["normalized_total_m2"] = math.fsum(normalized) / (2 ** n - 1 - n)
    return out


def sample_multivariance_bruteforce(sample: BlockSample, specs) -> float:
    """Squared sample multivariance evaluated entry by entry from the raw observations.

    No centering matrix is formed: for every pair ``(j, k)`` the factor
    ``-psi(x_j - x_k) + mean_l psi(x_j - x_l) + mean_l psi(x_l - x_k) - mean psi``
    is built from direct sums over the sample.
    """
    specs = broadcast_specs(specs, sample)
    N = sample.N
    factors = []
    for i, spec in enumerate(specs):
        x = sample.block(i)
        psi = [[evaluate(spec, x[j] - x[k]) for k in range(N)] for j in range(N)]
        given_first = [math.fsum(psi[j][l] for l in range(N)) / N for j in range(N)]
        given_second = [math.fsum(psi[l][k] for l in range(N)) / N for k in range(N)]
        overall = math.fsum(itertools.chain.from_iterable(psi)) / N ** 2
        factors.append(
            [[-psi[j][k] + given_first[j] + given_second[k] - overall for k in range(N)] for j in range(N)]
        )
    return math.fsum(math.prod(F[j][k] for F in factors) for j in range(N) for k in range(N)) / N ** 2


def total_via_subset_enumeration(matrices) -> float:
    """Sum of sample multivariances over every subset of at least two blocks."""
    n = len(matrices)
    if n < 2:
        raise InputError("subset enumeration needs at least two blocks")
    if n > MAX_ENUMERATION_BLOCKS:
        raise EnumerationLimitError(f"refusing to enumerate 2**{n} subsets (limit n <= {MAX_ENUMERATION_BLOCKS})")
    return math.fsum(mv.subset_multivariance(matrices, S) for S in _subsets(n))


@dataclass(frozen=True)
class GaussianMCResult:
    estimate: float
    std_error: float
    field_samples: int
    regularized: bool = False

    def __iter__(self):
        return iter((self.estimate, self.std_error))


def _field_root(values: np.ndarray, spec: CndfSpec) -> tuple[np.ndarray, bool]:
    """Symmetric square root of the field covariance on ``values``."""
    k = len(values)
    psi0 = np.array([evaluate(spec, v) for v in values])
    K = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            K[a, b] = psi0[a] + psi0[b] - evaluate(spec, values[a] - values[b])
    K = 0.5 * (K + K.T)
    scale = max(1.0, float(np.abs(K).max()))
    lam, V = np.linalg.eigh(K)
    regularized = False
    if lam.min() < -1e-10 * scale:
        regularized = True
        lam, V = np.linalg.eigh(K + 1e-10 * np.eye(k))
        if lam.min() < -1e-8 * scale:
            raise NumericalError(f"field covariance is not positive semidefinite (eigenvalue {lam.min():g})")
    return V * np.sqrt(np.clip(lam, 0.0, None)), regularized


def gaussian_multivariance_mc(
    dist: FiniteDistribution,
    specs,
    field_samples: int = 100_000,
    seed=None,
    batch: int = 10_000,
) -> GaussianMCResult:
    """Monte-Carlo estimate of squared Gaussian multivariance of a finite law.

    For each block an independent centred Gaussian field with covariance
    ``psi(s) + psi(t) - psi(s - t)`` is drawn at the block's support points
    and centred by its marginal mean. Given the fields, the expectation over
    ``(X, X')`` is exact: it equals the square of ``E prod_i centred_i(X_i)``.
    The result averages that quantity over field draws.
    """
    specs = _specs_for(dist, specs)
    if field_samples < 2:
        raise InputError("need at least two field samples for a standard error")
    rng = make_rng(seed)
    roots, tables, regularized = [], [], False
    for i, spec in enumerate(specs):
        values, q, idx = dist.marginal_table(i)
        L, reg = _field_root(values, spec)
        regularized |= reg
        roots.append(L)
        tables.append((q, idx))

    p = dist.probabilities
    values = np.empty(field_samples)
    done = 0
    while done < field_samples:
        size = min(batch, field_samples - done)
        prod = np.ones((len(p), size))
        for L, (q, idx) in zip(roots, tables):
            G = L @ rng.standard_normal((L.shape[1], size))
            centred = G - q @ G
            prod *= centred[idx]
        values[done:done + size] = (p @ prod) ** 2
        done += size
    return GaussianMCResult(
        estimate=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(field_samples)),
        field_samples=field_samples,
        regularized=regularized,
    )
