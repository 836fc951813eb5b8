import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multivariance.cndf import (
    CndfSpec,
    Kind,
    cross,
    evaluate,
    pairwise,
    parse_spec,
    stable_constant,
    suggest_gamma,
)
from multivariance.errors import InputError, ParameterError

from conftest import FAMILIES


def test_zero_at_origin():
    assert evaluate(CndfSpec.euclidean(), [0.0]) == 0.0


def test_euclidean_norm():
    assert evaluate(CndfSpec.euclidean(2), [3.0, 4.0]) == 5.0


def test_stable_power():
    assert evaluate(CndfSpec.stable(1.5), [2.0]) == pytest.approx(2 ** 1.5, rel=1e-15)
    assert evaluate(CndfSpec.stable(1.5), [2.0]) == pytest.approx(2.828427, abs=1e-6)


def test_bounded_exp_reaches_99_percent_of_supremum():
    delta = 0.7
    spec = CndfSpec.bounded_exp(suggest_gamma(delta))
    assert evaluate(spec, [delta]) == pytest.approx(0.99 * spec.supremum, rel=1e-12)


def test_minkowski_matches_p_norm():
    x = [1.0, -2.0, 0.5]
    expected = (1 + 2 ** 1.5 + 0.5 ** 1.5) ** (1 / 1.5)
    assert evaluate(CndfSpec.minkowski(1.5, 3), x) == pytest.approx(expected, rel=1e-14)


def test_minkowski_p2_is_euclidean():
    x = [0.3, -1.2]
    assert evaluate(CndfSpec.minkowski(2.0, 2), x) == pytest.approx(math.hypot(*x), rel=1e-15)


def test_stable_uses_euclidean_norm_in_higher_dimension():
    x = [1.0, 2.0, 2.0]
    assert evaluate(CndfSpec.stable(0.5, 3), x) == pytest.approx(3.0 ** 0.5, rel=1e-15)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: CndfSpec.stable(0.0),
        lambda: CndfSpec.stable(2.0),
        lambda: CndfSpec.stable(-1.0),
        lambda: CndfSpec.minkowski(1.0),
        lambda: CndfSpec.minkowski(2.5),
        lambda: CndfSpec.bounded_exp(0.0),
        lambda: CndfSpec.bounded_exp(-1.0),
        lambda: CndfSpec.bounded_exp(math.inf),
        lambda: CndfSpec.euclidean(0),
    ],
)
def test_invalid_parameters_rejected_at_construction(factory):
    with pytest.raises(ParameterError):
        factory()


def test_dimension_mismatch():
    with pytest.raises(InputError):
        evaluate(CndfSpec.euclidean(2), [1.0, 2.0, 3.0])


def test_stable_constant_closed_forms():
    assert stable_constant(1.0, 1) == pytest.approx(1 / math.pi, rel=1e-14)
    assert stable_constant(1.0, 2) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_stable_constant_matches_quadrature():
    # frozen from adaptive quadrature of 1 / int_R (1 - cos t) |t|^-1.5 dt
    assert stable_constant(0.5, 1) == pytest.approx(0.1994711401993717, rel=1e-8)


def test_stable_constant_rejects_bad_alpha():
    with pytest.raises(ParameterError):
        stable_constant(2.0, 1)
    with pytest.raises(ParameterError):
        stable_constant(1.0, 0)


@pytest.mark.parametrize(
    "delta, expected", [(math.pi, 1.465871), (math.pi / 4, 5.863485), (1.0, 4.605170)]
)
def test_suggest_gamma(delta, expected):
    assert suggest_gamma(delta) == pytest.approx(expected, abs=1e-6)
    assert suggest_gamma(delta) == -math.log(0.01) / delta


@pytest.mark.parametrize("delta", [0.0, -1.0])
def test_suggest_gamma_rejects_nonpositive(delta):
    with pytest.raises(ParameterError):
        suggest_gamma(delta)


@pytest.mark.parametrize(
    "text, kind, attr, value",
    [
        ("euclid", Kind.STABLE, "alpha", 1.0),
        ("stable:alpha=0.5", Kind.STABLE, "alpha", 0.5),
        ("minkowski:p=1.5", Kind.MINKOWSKI, "p", 1.5),
        ("boundedexp:gamma=2", Kind.BOUNDED_EXP, "gamma", 2.0),
    ],
)
def test_parse_spec(text, kind, attr, value):
    spec = parse_spec(text, dimension=2)
    assert spec.kind is kind
    assert getattr(spec, attr) == value
    assert spec.dimension == 2


@pytest.mark.parametrize("text", ["", "stable", "stable:p=1", "manhattan", "boundedexp:gamma=x", "stable:alpha=2"])
def test_parse_spec_errors(text):
    with pytest.raises(ParameterError):
        parse_spec(text)


def test_str_round_trips_through_parser():
    for spec in FAMILIES:
        assert parse_spec(str(spec)) == spec


def test_pairwise_symmetric_zero_diagonal(rng):
    x = rng.normal(size=(7, 2))
    for spec in FAMILIES:
        B = pairwise(spec.with_dimension(2), x)
        assert np.array_equal(B, B.T)
        assert np.all(np.diag(B) == 0.0)
        assert B[1, 4] == pytest.approx(evaluate(spec.with_dimension(2), x[1] - x[4]), rel=1e-14)


def test_cross_shape():
    B = cross(CndfSpec.euclidean(), np.array([[0.0], [1.0]]), np.array([[0.0], [2.0], [5.0]]))
    assert B.tolist() == [[0.0, 2.0, 5.0], [1.0, 1.0, 4.0]]


spec_strategy = st.sampled_from(FAMILIES)
vectors = st.integers(1, 3).flatmap(
    lambda d: arrays(np.float64, d, elements=st.floats(-50, 50, allow_nan=False))
)


@given(spec_strategy, vectors)
def test_symmetry_and_origin(spec, x):
    spec = spec.with_dimension(len(x))
    assert evaluate(spec, x) == evaluate(spec, -x)
    assert evaluate(spec, np.zeros_like(x)) == 0.0
    assert evaluate(spec, x) >= 0.0


@given(spec_strategy, vectors, st.data())
def test_quasi_triangle(spec, x, data):
    y = data.draw(arrays(np.float64, len(x), elements=st.floats(-50, 50, allow_nan=False)))
    spec = spec.with_dimension(len(x))
    assert evaluate(spec, x - y) <= 2 * (evaluate(spec, x) + evaluate(spec, y)) + 1e-12


@given(spec_strategy, st.integers(2, 8), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_negative_definite_kernel_is_psd(spec, m, d, seed):
    spec = spec.with_dimension(d)
    xi = np.random.default_rng(seed).normal(scale=3.0, size=(m, d))
    psi = np.array([evaluate(spec, v) for v in xi])
    K = psi[:, None] + psi[None, :] - pairwise(spec, xi)
    scale = max(1.0, np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() >= -1e-9 * scale


@given(st.floats(0.01, 20), st.floats(0, 100), st.floats(0, 100))
def test_bounded_exp_monotone_and_bounded(gamma, r1, r2):
    spec = CndfSpec.bounded_exp(gamma)
    lo, hi = sorted((r1, r2))
    v_lo, v_hi = evaluate(spec, [lo]), evaluate(spec, [hi])
    assert 0.0 <= v_lo <= v_hi <= 1.0 / gamma
    if hi - lo > 1e-6 and gamma * hi < 30:
        assert v_lo < v_hi
