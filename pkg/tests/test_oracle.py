import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multivariance import multivariance as mv
from multivariance.centering import BlockSample, centered_matrices
from multivariance.cndf import CndfSpec
from multivariance.errors import EnumerationLimitError, InputError
from multivariance.experiments import bernstein_distribution
from multivariance.oracle import (
    FiniteDistribution,
    gaussian_multivariance_mc,
    population_multivariance_exact,
    population_scale_factors,
    population_statistics,
    population_total_exact,
    sample_multivariance_bruteforce,
    total_via_subset_enumeration,
)

from conftest import FAMILIES

EUCLID = CndfSpec.euclidean()


def random_law(seed, widths, m=None, values=3):
    gen = np.random.default_rng(seed)
    m = m or int(gen.integers(2, 7))
    support = gen.integers(0, values, (m, sum(widths))).astype(float)
    p = gen.dirichlet(np.ones(m))
    return FiniteDistribution(support, p / math.fsum(p), tuple(widths))


def coin(t=1.0):
    return FiniteDistribution([[0.0], [t]], [0.5, 0.5])


def test_product_law_has_zero_multivariance():
    law = FiniteDistribution.product(random_law(1, (1,)), random_law(2, (2,)), random_law(3, (1,)))
    assert abs(population_multivariance_exact(law, EUCLID)) <= 1e-12
    assert abs(population_total_exact(law, EUCLID)) <= 1e-12


def test_bernstein_population():
    law = bernstein_distribution()
    assert population_multivariance_exact(law, EUCLID) == pytest.approx(1 / 8, abs=1e-12)
    assert population_total_exact(law, EUCLID) == pytest.approx(1 / 8, abs=1e-12)
    a, b = population_scale_factors(law, EUCLID)
    assert a == pytest.approx([0.5] * 3, abs=1e-12)
    assert b == pytest.approx([0.5] * 3, abs=1e-12)
    for pair in ([0, 1], [1, 2], [0, 2]):
        assert abs(population_multivariance_exact(law.marginal(pair), EUCLID)) <= 1e-12


def test_bernstein_population_statistics():
    stats = population_statistics(bernstein_distribution(), EUCLID)
    assert stats["normalized_m2"] == pytest.approx(1.0, abs=1e-12)
    assert stats["multicorrelation2"] == pytest.approx(1.0, abs=1e-12)
    assert stats["normalized_total_m2"] == pytest.approx(0.25, abs=1e-12)


def test_empirical_law_matches_sample_statistic(rng):
    s = BlockSample(rng.normal(size=(7, 4)), (1, 2, 1))
    pop = population_multivariance_exact(FiniteDistribution.empirical(s), EUCLID)
    assert pop == pytest.approx(mv.sample_multivariance(centered_matrices(s, EUCLID)), rel=1e-10)


def test_appending_independent_block_keeps_total():
    law = bernstein_distribution()
    extended = law.append_independent(random_law(5, (2,)))
    assert population_total_exact(extended, EUCLID) == pytest.approx(population_total_exact(law, EUCLID), abs=1e-12)


def test_scale_factor_edge_cases():
    a, b = population_scale_factors(FiniteDistribution([[3.0]], [1.0]), EUCLID)
    assert a == [0.0] and b == [0.0]
    _, b = population_scale_factors(coin(2.5), EUCLID)
    assert b == [pytest.approx(1.25, rel=1e-15)]


def test_population_total_needs_two_blocks():
    with pytest.raises(InputError):
        population_total_exact(coin(), EUCLID)


def test_bruteforce_fixtures():
    two = BlockSample([[0.0, 0.0], [1.0, 1.0]])
    assert sample_multivariance_bruteforce(two, EUCLID) == pytest.approx(0.25, rel=1e-15)
    assert sample_multivariance_bruteforce(BlockSample(np.ones((4, 3))), EUCLID) == 0.0


def test_subset_enumeration_guard():
    A = np.zeros((2, 2))
    with pytest.raises(EnumerationLimitError):
        total_via_subset_enumeration([A] * 13)
    assert total_via_subset_enumeration([A] * 12) == 0.0
    with pytest.raises(InputError):
        total_via_subset_enumeration([A])


def test_two_block_enumeration_is_single_term(rng):
    mats = centered_matrices(BlockSample(rng.normal(size=(6, 2))), EUCLID)
    assert total_via_subset_enumeration(mats) == mv.sample_multivariance(mats)


def test_distribution_validation_and_merging():
    with pytest.raises(InputError):
        FiniteDistribution([[0.0], [1.0]], [0.5, 0.4])
    with pytest.raises(InputError):
        FiniteDistribution([[0.0], [1.0]], [1.5, -0.5])
    law = FiniteDistribution([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]], [0.25, 0.25, 0.5])
    assert law.support.shape == (2, 2)
    assert sorted(law.probabilities) == [0.5, 0.5]


def test_json_and_csv_formats(tmp_path):
    law = random_law(8, (2, 1))
    path = tmp_path / "law.json"
    law.to_json(path)
    assert json.loads(path.read_text())["widths"] == [2, 1]
    back = FiniteDistribution.from_json(path)
    np.testing.assert_array_equal(back.support, law.support)
    np.testing.assert_allclose(back.probabilities, law.probabilities, rtol=0, atol=0)

    csv_path = tmp_path / "law.csv"
    csv_path.write_text("a,b,p\n0,0,0.25\n0,1,0.25\n1,0,0.25\n1,1,0.25\n")
    flat = FiniteDistribution.from_csv(csv_path)
    assert flat.n == 2
    assert population_multivariance_exact(flat, EUCLID) == pytest.approx(0.0, abs=1e-15)

    bad = tmp_path / "bad.json"
    bad.write_text('{"widths": [1]}')
    with pytest.raises(InputError):
        FiniteDistribution.from_json(bad)


def test_gaussian_mc_independent_law_near_zero():
    law = FiniteDistribution.product(coin(), coin(), random_law(9, (1,)))
    est, se = gaussian_multivariance_mc(law, EUCLID, field_samples=20_000, seed=1)
    assert abs(est) <= 3 * se + 1e-15


def test_gaussian_mc_deterministic_and_validated():
    law = bernstein_distribution()
    r1 = gaussian_multivariance_mc(law, EUCLID, field_samples=500, seed=3)
    r2 = gaussian_multivariance_mc(law, EUCLID, field_samples=500, seed=3)
    assert r1 == r2
    with pytest.raises(InputError):
        gaussian_multivariance_mc(law, EUCLID, field_samples=1)


laws = st.tuples(st.integers(0, 2 ** 32 - 1), st.lists(st.integers(1, 2), min_size=2, max_size=3), st.sampled_from(FAMILIES))


@given(laws, laws)
def test_factorization_over_independent_groups(g1, g2):
    (s1, w1, spec), (s2, w2, _) = g1, g2
    left, right = random_law(s1, w1), random_law(s2, w2)
    joint = left.append_independent(right)
    expected = population_multivariance_exact(left, spec) * population_multivariance_exact(right, spec)
    got = population_multivariance_exact(joint, spec)
    assert got == pytest.approx(expected, abs=1e-12)


@given(laws, st.integers(0, 2 ** 32 - 1))
def test_appending_independent_block(g, seed):
    s, widths, spec = g
    law = random_law(s, widths)
    extra = random_law(seed, (1,), values=4)
    ext = law.append_independent(extra)
    n = law.n
    before, after = population_statistics(law, spec), population_statistics(ext, spec)
    assert abs(after["m2"]) <= 1e-12
    assert after["total_m2"] == pytest.approx(before["total_m2"], abs=1e-12)
    r = math.sqrt(2 ** n - n - 1) / math.sqrt(2 ** (n + 1) - n - 2)
    assert after["normalized_total_m2"] == pytest.approx(r ** 2 * before["normalized_total_m2"], abs=1e-12)
