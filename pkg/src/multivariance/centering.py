"""Block samples, distance matrices and their double centering."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cndf import CndfSpec, pairwise
from .errors import InputError

__all__ = [
    "MAX_DENSE_N",
    "BlockSample",
    "CenteredDistanceMatrix",
    "distance_matrix",
    "double_center",
    "centered_matrices",
    "broadcast_specs",
    "dump_matrix",
    "load_matrix",
]

#: Largest N for which dense N x N matrices are built.
MAX_DENSE_N = 50_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BlockSample:
    """``N`` observations of ``n`` random vectors stored side by side.

    Parameters
    ----------
    data : (N, d) array_like
        One observation per row.
    widths : sequence of int
        Dimensions ``d_1, ..., d_n`` of the blocks; consecutive column
        ranges of ``data``. Defaults to one-dimensional blocks.
    """

    data: np.ndarray
    widths: tuple[int, ...] = field(default=())

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise InputError(f"sample data must be two-dimensional, got shape {data.shape}")
        if data.shape[0] < 1:
            raise InputError("a sample needs at least one observation")
        widths = tuple(int(w) for w in self.widths) or (1,) * data.shape[1]
        if any(w < 1 for w in widths) or sum(widths) != data.shape[1]:
            raise InputError(f"block widths {widths} do not partition {data.shape[1]} columns")
        bad = ~np.isfinite(data)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise InputError(f"non-finite value at row {row}, column {col}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "widths", widths)

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray]) -> "BlockSample":
        """Stack per-block arrays (each ``(N,)`` or ``(N, d_i)``) into one sample."""
        arrays = [np.asarray(b, dtype=float) for b in blocks]
        arrays = [a[:, None] if a.ndim == 1 else a for a in arrays]
        if len({a.shape[0] for a in arrays}) != 1:
            raise InputError("all blocks must have the same number of observations")
        return cls(np.hstack(arrays), tuple(a.shape[1] for a in arrays))

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return len(self.widths)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.cumsum((0,) + self.widths[:-1]))

    def block(self, i: int) -> np.ndarray:
        """Columns of block ``i`` (0-based) as an ``(N, d_i)`` view."""
        if not 0 <= i < self.n:
            raise InputError(f"block index {i} out of range for {self.n} blocks")
        start = self.offsets[i]
        return self.data[:, start:start + self.widths[i]]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(i) for i in range(self.n)]

    def select(self, indices: Sequence[int]) -> "BlockSample":
        """Sample restricted to the given blocks, in the given order."""
        return BlockSample.from_blocks([self.block(i) for i in indices])


@dataclass(frozen=True)
class CenteredDistanceMatrix:
    """Distance matrix ``B`` of one block and its double centering ``A = -C B C``.

    ``grand_mean_B`` is the sample scale factor ``b_hat`` of the block.
    """

    B: np.ndarray
    A: np.ndarray
    row_mean_B: np.ndarray
    grand_mean_B: float

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.grand_mean_B == 0.0


def distance_matrix(sample: BlockSample, block_index: int, spec: CndfSpec) -> np.ndarray:
    """``B_jk = psi(x_j - x_k)`` for block ``block_index`` (0-based)."""
    x = sample.block(block_index)
    if x.shape[1] != spec.dimension:
        raise InputError(
            f"block {block_index} has dimension {x.shape[1]} but the cndf expects {spec.dimension}"
        )
    return pairwise(spec, x)


def double_center(B, max_n: int = MAX_DENSE_N) -> CenteredDistanceMatrix:
    """Double center a symmetric distance matrix via row and grand means.

    Runs in O(N^2); the centering matrix is never formed.
    """
    B = np.array(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InputError(f"distance matrix must be square, got shape {B.shape}")
    if B.shape[0] > max_n:
        raise InputError(f"N = {B.shape[0]} exceeds the dense matrix limit {max_n}")
    # B is symmetric, so row means double as column means; np.mean reduces
    # contiguous rows with pairwise summation
    r = B.mean(axis=1)
    g = float(r.mean())
    A = (r[:, None] + r[None, :]) - g - B
    return CenteredDistanceMatrix(_frozen(B), _frozen(A), _frozen(r), g)


def centered_matrices(
    sample: BlockSample, specs: Sequence[CndfSpec], max_n: int = MAX_DENSE_N
) -> list[CenteredDistanceMatrix]:
    """Centered distance matrices of all blocks; ``specs`` has length 1 or ``n``."""
    specs = broadcast_specs(specs, sample)
    if sample.N > max_n:
        raise InputError(f"N = {sample.N} exceeds the dense matrix limit {max_n}")
    return [double_center(distance_matrix(sample, i, s), max_n) for i, s in enumerate(specs)]


def broadcast_specs(specs, sample: BlockSample) -> list[CndfSpec]:
    """Repeat a single spec over all blocks and fix each spec's dimension."""
    if isinstance(specs, CndfSpec):
        specs = [specs]
    specs = list(specs)
    if len(specs) == 1:
        return [specs[0].with_dimension(w) for w in sample.widths]
    if len(specs) != sample.n:
        raise InputError(f"got {len(specs)} cndf specs for {sample.n} blocks")
    for i, (s, w) in enumerate(zip(specs, sample.widths)):
        if s.dimension != w:
            raise InputError(f"block {i} has dimension {w} but its cndf expects {s.dimension}")
    return specs


def dump_matrix(path, matrix: np.ndarray) -> None:
    """Write a square matrix as CSV, row-major, with a ``# N=<N>`` header."""
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"# N={matrix.shape[0]}\n")
        np.savetxt(fh, matrix, delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# N="):
            raise InputError(f"{path}: missing '# N=' header")
        size = int(header[4:])
        out = np.loadtxt(fh, delimiter=",", ndmin=2)
    if out.shape != (size, size):
        raise InputError(f"{path}: expected {size}x{size} entries, got {out.shape}")
    return out
