import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gespfactor.errors import InsufficientSamples, ShapeMismatch, ValidationError
from gespfactor.gsp_model import GespExpansion, covariance_matrix, realize
from gespfactor.mc_verify import (
    coefficient_block,
    coefficient_stream,
    compare,
    empirical_covariance,
    max_cross_correlation,
)
from gespfactor.operator_kit import identity


def test_rademacher_draws_are_signs():
    block = coefficient_block(3, "rademacher", 100, 7)
    assert set(np.unique(block).tolist()) == {-1.0, 1.0}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32), r=st.integers(min_value=0, max_value=9),
       n=st.integers(min_value=0, max_value=5), law=st.sampled_from(["gaussian", "rademacher"]),
       stream=st.sampled_from(["data", "fill"]))
def test_single_draw_matches_block(seed, r, n, law, stream):
    block = coefficient_block(seed, law, 10, 6, stream)
    assert coefficient_stream(seed, law, r, n, stream) == block[r, n]


def test_rademacher_mean_is_centred():
    block = coefficient_block(17, "rademacher", 1000, 1000)
    assert abs(float(block.mean())) <= 0.004


def test_batches_share_their_prefix():
    small = coefficient_block(5, "gaussian", 20, 4)
    large = coefficient_block(5, "gaussian", 200, 9)
    assert np.array_equal(small, large[:20, :4])


def test_streams_are_distinct():
    data = coefficient_block(5, "gaussian", 10, 4, "data")
    fill = coefficient_block(5, "gaussian", 10, 4, "fill")
    assert not np.any(data == fill)


def test_bad_law_and_stream():
    with pytest.raises(ValidationError):
        coefficient_block(0, "cauchy", 2, 2)
    with pytest.raises(ValidationError):
        coefficient_block(0, "gaussian", 2, 2, stream="noise")


def test_empirical_covariance_of_a_constant_batch():
    emp = empirical_covariance(np.zeros((50, 3)))
    assert np.all(emp.matrix == 0.0)
    assert np.all(emp.standard_error == 0.0)
    assert emp.realizations == 50


def test_one_realization_is_not_enough():
    with pytest.raises(InsufficientSamples):
        empirical_covariance(np.ones((1, 3)))


def test_single_mode_on_two_test_functions(bank8):
    exp = GespExpansion(variances=[1.0], base=bank8.member(0), operator=identity(), grid=bank8.grid)
    batch = realize(exp, 2, bank8.samples[:, :2], 20_000)
    emp = empirical_covariance(batch)
    report = compare(emp, covariance_matrix(exp, bank8.samples[:, :2]))
    assert report.passed
    assert abs(emp.matrix[0, 0] - 1.0) <= 4 * emp.standard_error[0, 0]
    assert abs(emp.matrix[1, 1]) <= 1e-12


def test_laws_agree_within_joint_band(bank8):
    base = dict(variances=np.ones(4), base=bank8.samples[:, :4], operator=identity(), grid=bank8.grid)
    R = 20_000
    g = empirical_covariance(realize(GespExpansion(**base, law="gaussian"), 4, bank8, R))
    r = empirical_covariance(realize(GespExpansion(**base, law="rademacher"), 4, bank8, R))
    band = 4 * np.sqrt(g.standard_error ** 2 + r.standard_error ** 2) + 1e-12
    assert np.all(np.abs(g.matrix - r.matrix) <= band)


def test_compare_identical_matrices():
    report = compare(np.eye(3), np.eye(3))
    assert report.passed
    assert report.max_abs_z == 0.0
    assert report.to_dict()["pass"] is True


def test_compare_exact_mismatch_is_infinite():
    report = compare(np.eye(2), np.zeros((2, 2)))
    assert report.max_abs_z == float("inf")
    assert not report.passed


def test_compare_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        compare(np.eye(2), np.eye(3))


def test_white_noise_passes_and_rank_one_fails(bank8):
    R = 5000
    white = GespExpansion(variances=np.ones(8), base=bank8.samples, operator=identity(), grid=bank8.grid)
    report = compare(empirical_covariance(realize(white, 8, bank8, R)), np.eye(8), seed=8)
    assert report.passed
    assert report.seed == 8
    rank_one = GespExpansion(variances=[1.0], base=bank8.member(0), operator=identity(), grid=bank8.grid)
    assert not compare(empirical_covariance(realize(rank_one, 8, bank8, R)), np.eye(8)).passed


def test_error_shrinks_with_more_realizations(bank8):
    white = GespExpansion(variances=np.ones(8), base=bank8.samples, operator=identity(), grid=bank8.grid)
    coarse = compare(empirical_covariance(realize(white, 31, bank8, 100)), np.eye(8)).max_abs_error
    fine = compare(empirical_covariance(realize(white, 31, bank8, 10_000)), np.eye(8)).max_abs_error
    assert fine <= coarse / 3


def test_cross_correlation():
    data = coefficient_block(1, "gaussian", 4000, 3, "data")
    fill = coefficient_block(1, "gaussian", 4000, 3, "fill")
    assert max_cross_correlation(data, fill) <= 4 / np.sqrt(4000)
    assert max_cross_correlation(data, data) == pytest.approx(1.0)
    assert max_cross_correlation(data, fill[:, :0]) == 0.0
    with pytest.raises(ShapeMismatch):
        max_cross_correlation(data, fill[:10])
