"""Continuous negative definite functions used as (quasi-)distances.

Three families are supported:

* ``Stable``: ``psi(x) = |x|**alpha`` with the Euclidean norm, ``0 < alpha < 2``.
  ``alpha = 1`` is plain Euclidean distance.
* ``Minkowski``: ``psi(x) = (sum_j |x_j|**p)**(1/p)``, ``1 < p <= 2``.
* ``BoundedExp``: ``psi(x) = (1 - exp(-gamma |x|)) / gamma``, ``gamma > 0``.

Parameters are validated once, when a :class:`CndfSpec` is built, so the
evaluation routines can be used inside tight loops without re-checking.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError

__all__ = [
    "Kind",
    "CndfSpec",
    "evaluate",
    "pairwise",
    "cross",
    "stable_constant",
    "suggest_gamma",
    "parse_spec",
]


class Kind(enum.Enum):
    STABLE = "stable"
    MINKOWSKI = "minkowski"
    BOUNDED_EXP = "boundedexp"


@dataclass(frozen=True)
class CndfSpec:
    """A validated cndf together with the dimension of its argument.

    Use the classmethod constructors rather than filling fields by hand.
    """

    kind: Kind
    dimension: int = 1
    alpha: float | None = None
    p: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ParameterError(f"dimension must be a positive integer, got {self.dimension!r}")
        if self.kind is Kind.STABLE:
            if self.alpha is None or not 0.0 < self.alpha < 2.0:
                raise ParameterError(f"stable exponent alpha must lie in (0, 2), got {self.alpha!r}")
        elif self.kind is Kind.MINKOWSKI:
            if self.p is None or not 1.0 < self.p <= 2.0:
                raise ParameterError(f"Minkowski exponent p must lie in (1, 2], got {self.p!r}")
        elif self.kind is Kind.BOUNDED_EXP:
            if self.gamma is None or not (self.gamma > 0.0 and math.isfinite(self.gamma)):
                raise ParameterError(f"gamma must be a positive finite number, got {self.gamma!r}")
        else:
            raise ParameterError(f"unknown cndf kind {self.kind!r}")

    @classmethod
    def stable(cls, alpha: float = 1.0, dimension: int = 1) -> "CndfSpec":
        return cls(Kind.STABLE, dimension, alpha=float(alpha))

    @classmethod
    def euclidean(cls, dimension: int = 1) -> "CndfSpec":
        return cls.stable(1.0, dimension)

    @classmethod
    def minkowski(cls, p: float, dimension: int = 1) -> "CndfSpec":
        return cls(Kind.MINKOWSKI, dimension, p=float(p))

    @classmethod
    def bounded_exp(cls, gamma: float, dimension: int = 1) -> "CndfSpec":
        return cls(Kind.BOUNDED_EXP, dimension, gamma=float(gamma))

    def with_dimension(self, dimension: int) -> "CndfSpec":
        return CndfSpec(self.kind, dimension, self.alpha, self.p, self.gamma)

    @property
    def supremum(self) -> float:
        """Least upper bound of psi (``inf`` for the unbounded families)."""
        if self.kind is Kind.BOUNDED_EXP:
            return 1.0 / self.gamma
        return math.inf

    def __str__(self) -> str:
        if self.kind is Kind.STABLE:
            return f"stable:alpha={self.alpha:g}"
        if self.kind is Kind.MINKOWSKI:
            return f"minkowski:p={self.p:g}"
        return f"boundedexp:gamma={self.gamma:.17g}"


def _apply(spec: CndfSpec, diff: np.ndarray) -> np.ndarray:
    # diff has the coordinate axis last
    if spec.kind is Kind.MINKOWSKI:
        if spec.p == 2.0:
            return np.sqrt(np.sum(diff * diff, axis=-1))
        return np.sum(np.abs(diff) ** spec.p, axis=-1) ** (1.0 / spec.p)

    if diff.shape[-1] == 1:
        r = np.abs(diff[..., 0])
    else:
        r = np.sqrt(np.sum(diff * diff, axis=-1))

    if spec.kind is Kind.STABLE:
        return r if spec.alpha == 1.0 else r ** spec.alpha
    return -np.expm1(-spec.gamma * r) / spec.gamma


def evaluate(spec: CndfSpec, x) -> float:
    """Evaluate ``psi(x)`` for a single vector of length ``spec.dimension``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.dimension:
        raise InputError(f"expected a vector of length {spec.dimension}, got length {x.shape[0]}")
    return float(_apply(spec, x))


def cross(spec: CndfSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix ``(psi(x_j - y_k))_{j,k}`` for row-stacked points ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[1] != spec.dimension or y.shape[1] != spec.dimension:
        raise InputError(
            f"points have dimension {x.shape[1]}/{y.shape[1]}, cndf expects {spec.dimension}"
        )
    return _apply(spec, x[:, None, :] - y[None, :, :])


def pairwise(spec: CndfSpec, x: np.ndarray) -> np.ndarray:
    """Symmetric distance matrix of the rows of ``x`` with an exact zero diagonal."""
    out = cross(spec, x, x)
    # symmetrize: psi(a-b) and psi(b-a) may differ in the last bit for p-norms
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return out


def stable_constant(alpha: float, d: int) -> float:
    """Normalizing constant of the Levy density ``c |t|^(-d-alpha)`` of ``|x|**alpha``.

    Only needed for documentation and diagnostics; the estimators use psi
    directly.
    """
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")
    if int(d) != d or d < 1:
        raise ParameterError(f"d must be a positive integer, got {d!r}")
    return (
        alpha
        * 2.0 ** (alpha - 1.0)
        * math.gamma((alpha + d) / 2.0)
        / (math.pi ** (d / 2.0) * math.gamma(1.0 - alpha / 2.0))
    )


def suggest_gamma(delta: float) -> float:
    """Choose ``gamma`` so that ``psi(delta)`` reaches 99% of ``sup psi``.

    Pairs further apart than ``delta`` then all get roughly the same
    distance, which focuses the statistic on dependence at scale ``delta``.
    """
    if not delta > 0.0:
        raise ParameterError(f"delta must be positive, got {delta!r}")
    return -math.log(0.01) / delta


_SPEC_RE = re.compile(r"^\s*(?P<kind>[a-z]+)\s*(?::\s*(?P<key>[a-z]+)\s*=\s*(?P<value>[^\s]+))?\s*$")


def parse_spec(text: str, dimension: int = 1) -> CndfSpec:
    """Parse ``stable:alpha=<a>``, ``minkowski:p=<p>``, ``boundedexp:gamma=<g>`` or ``euclid``."""
    m = _SPEC_RE.match(text.lower())
    if m is None:
        raise ParameterError(f"cannot parse cndf spec {text!r}")
    kind, key, value = m.group("kind"), m.group("key"), m.group("value")
    if kind in ("euclid", "euclidean") and key is None:
        return CndfSpec.euclidean(dimension)
    expected = {"stable": "alpha", "minkowski": "p", "boundedexp": "gamma"}
    if kind not in expected or key != expected[kind]:
        raise ParameterError(
            f"cannot parse cndf spec {text!r}; expected one of "
            "'euclid', 'stable:alpha=<a>', 'minkowski:p=<p>', 'boundedexp:gamma=<g>'"
        )
    try:
        number = float(value)
    except ValueError:
        raise ParameterError(f"parameter {key} in {text!r} is not a number") from None
    if kind == "stable":
        return CndfSpec.stable(number, dimension)
    if kind == "minkowski":
        return CndfSpec.minkowski(number, dimension)
    return CndfSpec.bounded_exp(number, dimension)
