"""Sample distance multivariance and the statistics derived from it.

All statistics are means over the ``N x N`` entries of Hadamard products of
the doubly centred distance matrices ``A_1, ..., A_n``:

* ``m2``: mean of ``A_1 * ... * A_n``
* ``total_m2``: mean of ``(1 + A_1) * ... * (1 + A_n)`` minus 1, i.e. the sum
  of ``m2`` over all block subsets of size at least two
* ``normalized_m2`` / ``normalized_total_m2``: the same with ``A_i``
  divided by ``b_hat_i`` (the grand mean of ``B_i``); the total version is
  additionally divided by ``2**n - 1 - n``
* ``multicorrelation2``: ``m2`` divided by ``a_hat_1 * ... * a_hat_n`` where
  ``a_hat_i`` is the ``n``-th root of the mean of ``|A_i|**n``

Degenerate (constant) blocks have ``b_hat = a_hat = 0``; every ratio with
such a denominator is taken to be 0.

Everything is computed in a single O(n N^2) pass. The total statistics are
accumulated through the elementary symmetric recursion so that no ``1`` is
ever added and subtracted again, which would cost relative accuracy when
the ``A_i`` are small.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .centering import BlockSample, CenteredDistanceMatrix, broadcast_specs
from .cndf import CndfSpec, _apply, cross
from .errors import InputError

__all__ = [
    "MultivarianceEstimates",
    "sample_multivariance",
    "sample_total_multivariance",
    "subset_multivariance",
    "normalized_multivariance",
    "normalized_total_multivariance",
    "multicorrelation",
    "a_hat",
    "estimates",
    "compute",
    "compute_batch",
    "cross_batch",
    "BATCH_KEYS",
]

# entries per block held in memory at once by the chunked kernels
_CHUNK_ENTRIES = 1 << 21
# cache all distance matrices in the streaming path below this many entries
_CACHE_ENTRIES = 1 << 24


@dataclass(frozen=True)
class MultivarianceEstimates:
    """All sample statistics of one sample; squared quantities are primary."""

    m2: float
    total_m2: float
    normalized_m2: float
    normalized_total_m2: float
    multicorrelation2: float
    a_hat: tuple[float, ...]
    b_hat: tuple[float, ...]
    N: int
    n: int

    @staticmethod
    def _root(value: float) -> float:
        return math.sqrt(value) if value > 0.0 else 0.0

    @property
    def m(self) -> float:
        return self._root(self.m2)

    @property
    def total_m(self) -> float:
        return self._root(self.total_m2)

    @property
    def normalized_m(self) -> float:
        return self._root(self.normalized_m2)

    @property
    def normalized_total_m(self) -> float:
        return self._root(self.normalized_total_m2)

    @property
    def multicorrelation(self) -> float:
        return self._root(self.multicorrelation2)

    @property
    def clamped(self) -> tuple[str, ...]:
        """Names of squared statistics that came out negative (rounding) and were clamped."""
        names = ("m2", "total_m2", "normalized_m2", "normalized_total_m2", "multicorrelation2")
        return tuple(k for k in names if getattr(self, k) < 0.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["a_hat"] = list(self.a_hat)
        out["b_hat"] = list(self.b_hat)
        out.update(
            m=self.m,
            total_m=self.total_m,
            normalized_m=self.normalized_m,
            normalized_total_m=self.normalized_total_m,
            multicorrelation=self.multicorrelation,
            clamped=list(self.clamped),
        )
        return out


class _Accumulator:
    """Running weighted sums over row chunks of the centred matrices."""

    def __init__(self, n: int, b_hat: Sequence[float]):
        self.n = n
        self.inv_b = [1.0 / b if b > 0.0 else 0.0 for b in b_hat]
        self.prod = 0.0
        self.total = 0.0
        self.norm_total = 0.0
        self.abs_pow = np.zeros(n)

    def add(self, chunks: Sequence[np.ndarray], row_w: np.ndarray, col_w: np.ndarray) -> None:
        def wsum(x):
            return float(row_w @ (x @ col_w))

        prod = None
        e1 = e2 = None  # sums over non-empty / size>=2 subsets of processed blocks
        ne1 = ne2 = None  # same for the b-normalized matrices
        for i, a in enumerate(chunks):
            self.abs_pow[i] += wsum(np.abs(a) ** self.n)
            na = a * self.inv_b[i]
            if prod is None:
                prod = a.copy()
                e1, e2 = a.copy(), np.zeros_like(a)
                ne1, ne2 = na, np.zeros_like(a)
                continue
            prod *= a
            e2 += a * e1
            e1 += a * (1.0 + e1)
            ne2 += na * ne1
            ne1 = ne1 + na * (1.0 + ne1)
        self.prod += wsum(prod)
        self.total += wsum(e2)
        self.norm_total += wsum(ne2)

    def result(self, b_hat: Sequence[float], N: int) -> MultivarianceEstimates:
        n = self.n
        # the mean of a single centred matrix vanishes; drop the rounding residue
        m2 = self.prod if n > 1 else 0.0
        prod_b = math.prod(b_hat)
        normalized = m2 / prod_b if prod_b > 0.0 else 0.0
        a_hat = tuple(float(v) ** (1.0 / n) if v > 0.0 else 0.0 for v in self.abs_pow)
        prod_a = math.prod(a_hat)
        mcor = m2 / prod_a if prod_a > 0.0 else 0.0
        n_subsets = 2 ** n - 1 - n
        norm_total = self.norm_total / n_subsets if n_subsets > 0 else 0.0
        return MultivarianceEstimates(
            m2=float(m2),
            total_m2=float(self.total),
            normalized_m2=float(normalized),
            normalized_total_m2=float(norm_total),
            multicorrelation2=float(mcor),
            a_hat=a_hat,
            b_hat=tuple(float(b) for b in b_hat),
            N=int(N),
            n=n,
        )


def _as_arrays(matrices) -> list[np.ndarray]:
    arrays = [m.A if isinstance(m, CenteredDistanceMatrix) else np.asarray(m, dtype=float) for m in matrices]
    if not arrays:
        raise InputError("at least one centred distance matrix is required")
    shape = arrays[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise InputError(f"centred matrices must be square, got shape {shape}")
    for a in arrays[1:]:
        if a.shape != shape:
            raise InputError(f"centred matrices have mismatched shapes {shape} and {a.shape}")
    return arrays


def _b_hats(matrices, b_hat) -> list[float]:
    if b_hat is not None:
        b_hat = [float(b) for b in b_hat]
        if len(b_hat) != len(matrices):
            raise InputError(f"got {len(b_hat)} scale factors for {len(matrices)} matrices")
        return b_hat
    out = []
    for m in matrices:
        if not isinstance(m, CenteredDistanceMatrix):
            raise InputError("b_hat must be given when passing raw arrays")
        out.append(m.grand_mean_B)
    return out


def _dense_estimates(arrays: list[np.ndarray], b_hat: Sequence[float]) -> MultivarianceEstimates:
    N = arrays[0].shape[0]
    w = np.full(N, 1.0 / N)
    acc = _Accumulator(len(arrays), b_hat)
    step = max(1, _CHUNK_ENTRIES // N)
    for lo in range(0, N, step):
        hi = min(N, lo + step)
        acc.add([a[lo:hi] for a in arrays], w[lo:hi], w)
    return acc.result(b_hat, N)


def estimates(matrices: Sequence[CenteredDistanceMatrix], b_hat=None) -> MultivarianceEstimates:
    """All statistics from precomputed centred distance matrices, in one pass."""
    arrays = _as_arrays(matrices)
    return _dense_estimates(arrays, _b_hats(matrices, b_hat))


def sample_multivariance(matrices) -> float:
    """Squared sample distance multivariance: mean of the Hadamard product of the ``A_i``."""
    arrays = _as_arrays(matrices)
    prod = arrays[0].copy()
    for a in arrays[1:]:
        prod *= a
    return float(prod.mean())


def sample_total_multivariance(matrices) -> float:
    """Squared sample total distance multivariance (requires ``n >= 2``)."""
    arrays = _as_arrays(matrices)
    if len(arrays) < 2:
        raise InputError("total multivariance needs at least two blocks")
    e1 = arrays[0].copy()
    e2 = np.zeros_like(e1)
    for a in arrays[1:]:
        e2 += a * e1
        e1 += a * (1.0 + e1)
    return float(e2.mean())


def subset_multivariance(matrices, subset: Sequence[int]) -> float:
    """Multivariance of the blocks listed in ``subset`` (0-based indices)."""
    subset = sorted(set(int(i) for i in subset))
    if not subset:
        raise InputError("subset must not be empty")
    if subset[0] < 0 or subset[-1] >= len(matrices):
        raise InputError(f"subset {subset} out of range for {len(matrices)} blocks")
    return sample_multivariance([matrices[i] for i in subset])


def normalized_multivariance(matrices, b_hat=None) -> float:
    """Squared normalized multivariance ``m2 / prod(b_hat)`` with 0/0 := 0."""
    b = _b_hats(matrices, b_hat)
    if any(v == 0.0 for v in b):
        return 0.0
    return sample_multivariance(matrices) / math.prod(b)


def normalized_total_multivariance(matrices, b_hat=None) -> float:
    """Squared normalized total multivariance, averaged over the ``2**n - 1 - n`` subsets."""
    arrays = _as_arrays(matrices)
    n = len(arrays)
    if n < 2:
        raise InputError("normalized total multivariance needs at least two blocks")
    b = _b_hats(matrices, b_hat)
    scaled = [a / v if v > 0.0 else np.zeros_like(a) for a, v in zip(arrays, b)]
    return sample_total_multivariance(scaled) / (2 ** n - 1 - n)


def a_hat(matrix, n: int) -> float:
    """``(mean |A|**n)**(1/n)``, the scale used by multicorrelation."""
    a = matrix.A if isinstance(matrix, CenteredDistanceMatrix) else np.asarray(matrix, dtype=float)
    v = float(np.mean(np.abs(a) ** n))
    return v ** (1.0 / n) if v > 0.0 else 0.0


def multicorrelation(matrices) -> float:
    """Squared sample distance multicorrelation, in ``[0, 1]`` up to rounding."""
    arrays = _as_arrays(matrices)
    n = len(arrays)
    if n < 2:
        raise InputError("multicorrelation needs at least two blocks")
    a = [a_hat(m, n) for m in arrays]
    if any(v == 0.0 for v in a):
        return 0.0
    return sample_multivariance(arrays) / math.prod(a)


def _unique_rows(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    points, counts = np.unique(data, axis=0, return_counts=True)
    return points, counts.astype(float)


def compute(
    sample: BlockSample,
    specs: CndfSpec | Sequence[CndfSpec],
    *,
    dedupe: bool = True,
) -> MultivarianceEstimates:
    """All statistics of ``sample`` without materializing N x N matrices.

    Repeated observations are merged into weighted support points (the
    sample statistics are functionals of the empirical law, so this is
    exact), and the remaining work streams over row chunks, so memory stays
    O(n * N) plus one chunk. Results agree with :func:`estimates` on the
    dense matrices up to rounding.
    """
    specs = broadcast_specs(specs, sample)
    N, n = sample.N, sample.n
    if n == 1:
        warnings.warn("a single block has zero multivariance; reporting zeros", stacklevel=2)

    points, weights = sample.data, np.full(N, 1.0 / N)
    if dedupe and N > 1:
        uniq, counts = _unique_rows(sample.data)
        if len(uniq) <= N // 2:
            points, weights = uniq, counts / N
    m = points.shape[0]
    offsets = np.cumsum((0,) + sample.widths[:-1])
    xs = [points[:, o:o + w] for o, w in zip(offsets, sample.widths)]

    step = max(1, _CHUNK_ENTRIES // m)
    bounds = [(lo, min(m, lo + step)) for lo in range(0, m, step)]
    cache = {} if m * m * n <= _CACHE_ENTRIES else None

    def dist(i, lo, hi):
        if cache is not None and (i, lo) in cache:
            return cache[i, lo]
        out = cross(specs[i], xs[i][lo:hi], xs[i])
        if cache is not None:
            cache[i, lo] = out
        return out

    rows = [np.empty(m) for _ in range(n)]
    for i in range(n):
        for lo, hi in bounds:
            rows[i][lo:hi] = dist(i, lo, hi) @ weights
    grand = [float(weights @ r) for r in rows]

    acc = _Accumulator(n, grand)
    for lo, hi in bounds:
        chunks = [(r[lo:hi, None] + r[None, :]) - g - dist(i, lo, hi) for i, (r, g) in enumerate(zip(rows, grand))]
        acc.add(chunks, weights[lo:hi], weights)
    return acc.result(grand, N)


BATCH_KEYS = ("m2", "total_m2", "normalized_m2", "normalized_total_m2", "multicorrelation2")


def compute_batch(blocks: Sequence[np.ndarray], specs) -> dict[str, np.ndarray]:
    """Statistics for a stack of ``R`` equally sized samples at once.

    Parameters
    ----------
    blocks : sequence of (R, N) or (R, N, d_i) arrays
        Block ``i`` of every replication.
    specs : CndfSpec or sequence of CndfSpec
        One spec broadcast to all blocks, or one per block.

    Returns
    -------
    dict
        Arrays of length ``R`` keyed by ``BATCH_KEYS`` plus ``b_hat`` and
        ``a_hat`` of shape ``(R, n)``.
    """
    arrays = [np.asarray(b, dtype=float) for b in blocks]
    arrays = [a[..., None] if a.ndim == 2 else a for a in arrays]
    R, N = arrays[0].shape[:2]
    if any(a.ndim != 3 or a.shape[:2] != (R, N) for a in arrays):
        raise InputError("all blocks must share the replication and sample axes")
    n = len(arrays)
    if isinstance(specs, CndfSpec):
        specs = [specs]
    specs = list(specs)
    if len(specs) == 1:
        specs = [specs[0].with_dimension(a.shape[2]) for a in arrays]
    if len(specs) != n:
        raise InputError(f"got {len(specs)} cndf specs for {n} blocks")

    for a, spec in zip(arrays, specs):
        if a.shape[2] != spec.dimension:
            raise InputError(f"block dimension {a.shape[2]} does not match cndf dimension {spec.dimension}")

    out = {k: np.empty(R) for k in BATCH_KEYS}
    out["b_hat"] = np.empty((R, n))
    out["a_hat"] = np.empty((R, n))
    if N * N > _CHUNK_ENTRIES:
        # one replication alone exceeds the dense budget; stream each one
        widths = tuple(a.shape[2] for a in arrays)
        for r in range(R):
            est = compute(BlockSample(np.concatenate([a[r] for a in arrays], axis=1), widths), specs)
            for k in BATCH_KEYS:
                out[k][r] = getattr(est, k)
            out["b_hat"][r] = est.b_hat
            out["a_hat"][r] = est.a_hat
        return out
    step = max(1, _CHUNK_ENTRIES // (N * N))
    n_subsets = 2 ** n - 1 - n
    for lo in range(0, R, step):
        hi = min(R, lo + step)
        As, bs = [], []
        for a, spec in zip(arrays, specs):
            B = cross_batch(spec, a[lo:hi])
            r = B.mean(axis=2)
            g = r.mean(axis=1)
            As.append((r[:, :, None] + r[:, None, :]) - g[:, None, None] - B)
            bs.append(g)
        b = np.stack(bs, axis=1)
        inv_b = np.where(b > 0.0, 1.0 / np.where(b > 0.0, b, 1.0), 0.0)
        prod = As[0].copy()
        e1, e2 = As[0].copy(), np.zeros_like(As[0])
        ne1, ne2 = As[0] * inv_b[:, 0, None, None], np.zeros_like(As[0])
        for i, A in enumerate(As[1:], start=1):
            nA = A * inv_b[:, i, None, None]
            prod *= A
            e2 += A * e1
            e1 += A * (1.0 + e1)
            ne2 += nA * ne1
            ne1 = ne1 + nA * (1.0 + ne1)
        m2 = prod.mean(axis=(1, 2))
        a_pow = np.stack([np.mean(np.abs(A) ** n, axis=(1, 2)) for A in As], axis=1)
        a_hat = np.where(a_pow > 0.0, a_pow, 0.0) ** (1.0 / n)
        pb = b.prod(axis=1)
        pa = a_hat.prod(axis=1)
        out["m2"][lo:hi] = m2
        out["total_m2"][lo:hi] = e2.mean(axis=(1, 2))
        out["normalized_m2"][lo:hi] = np.where(pb > 0.0, m2 / np.where(pb > 0.0, pb, 1.0), 0.0)
        out["normalized_total_m2"][lo:hi] = ne2.mean(axis=(1, 2)) / n_subsets if n_subsets else 0.0
        out["multicorrelation2"][lo:hi] = np.where(pa > 0.0, m2 / np.where(pa > 0.0, pa, 1.0), 0.0)
        out["b_hat"][lo:hi] = b
        out["a_hat"][lo:hi] = a_hat
    return out


def cross_batch(spec: CndfSpec, x: np.ndarray) -> np.ndarray:
    """Distance matrices ``(R, N, N)`` for a stack of point sets ``(R, N, d)``."""
    return _apply(spec, x[:, :, None, :] - x[:, None, :, :])
