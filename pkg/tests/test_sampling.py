import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlcsnet import oracles
from nlcsnet.autograd import DimensionError, Tensor
from nlcsnet.sampling import (
    SamplingOperator,
    block_adjoint,
    make_orthogonal_gaussian,
    measurement_count,
    pad_to_block_grid,
    sample_image,
)


@pytest.mark.parametrize("rate,expected", [(0.1, 102), (1.0, 1024), (0.01, 10), (0.04, 40), (0.2, 204), (0.3, 307)])
def test_measurement_count_at_block_32(rate, expected):
    assert measurement_count(rate, 32) == expected


def test_measurement_count_minimum_and_errors():
    assert measurement_count(1e-6, 4) == 1
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            measurement_count(bad, 32)


def test_orthogonal_gaussian_rows_are_orthonormal():
    op = make_orthogonal_gaussian(102, 32, seed=3)
    phi = op.matrix.astype(np.float64)
    assert np.abs(phi @ phi.T - np.eye(102)).max() < 1e-4
    assert op.mode == "fixed" and not op.phi.requires_grad


def test_orthogonal_gaussian_is_deterministic():
    a = make_orthogonal_gaussian(40, 32, seed=5).matrix
    b = make_orthogonal_gaussian(40, 32, seed=5).matrix
    c = make_orthogonal_gaussian(40, 32, seed=6).matrix
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_square_orthonormal_matrix_recovers_block(rng):
    op = make_orthogonal_gaussian(64, 8, seed=0)
    x = rng.random(64)
    phi = op.matrix.astype(np.float64)
    assert np.abs(phi.T @ (phi @ x) - x).max() < 1e-4


def test_too_many_rows_rejected():
    with pytest.raises(ValueError):
        make_orthogonal_gaussian(65, 8, seed=0)


def test_learned_mode_is_trainable():
    assert SamplingOperator(32, 0.1, mode="learned").phi.requires_grad


def test_pad_to_block_grid_examples(rng):
    x = rng.random((64, 64))
    padded, grid = pad_to_block_grid(x, 32)
    assert padded.shape == (1, 1, 64, 64) and (grid.h_b, grid.w_b) == (2, 2)
    y = rng.random((65, 64))
    padded, grid = pad_to_block_grid(y, 32)
    assert padded.shape == (1, 1, 96, 64) and (grid.h_b, grid.w_b) == (3, 2)
    assert grid.num_blocks == 6
    np.testing.assert_array_equal(grid.crop(padded.data)[0, 0], y)
    # reflection, not zeros
    np.testing.assert_array_equal(padded.data[0, 0, 65], y[63])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([1, 4, 8, 16]), st.integers(0, 999))
def test_crop_inverts_pad(h, w, b, seed):
    x = np.random.default_rng(seed).random((h, w)).astype(np.float32)
    padded, grid = pad_to_block_grid(x, b)
    assert padded.shape[-2] % b == 0 and padded.shape[-1] % b == 0
    np.testing.assert_array_equal(grid.crop(padded.data)[0, 0], x)


def test_sampling_zero_image():
    op = SamplingOperator(32, 0.1)
    assert np.all(sample_image(np.zeros((64, 64)), op).data == 0)


def test_sampling_matches_blockwise_products(rng):
    op = SamplingOperator(32, 0.1, seed=1)
    x = rng.random((64, 64)).astype(np.float32)
    y = sample_image(x, op)
    assert y.shape == (1, 102, 2, 2)
    np.testing.assert_allclose(y.data[0], oracles.sample_blocks(x, op.matrix, 32), atol=1e-5)


def test_sampling_is_linear(rng):
    op = SamplingOperator(16, 0.25, seed=2)
    x, z = rng.random((32, 48)), rng.random((32, 48))
    lhs = sample_image(Tensor(2.0 * x - 0.5 * z), op).data
    rhs = 2.0 * sample_image(Tensor(x), op).data - 0.5 * sample_image(Tensor(z), op).data
    assert np.abs(lhs - rhs).max() < 1e-5


def test_sampling_requires_whole_blocks():
    with pytest.raises(DimensionError):
        sample_image(np.zeros((40, 32)), SamplingOperator(32, 0.1))


def test_full_rate_adjoint_reconstructs(rng):
    op = SamplingOperator(32, 1.0, seed=4)
    x = rng.random((64, 96)).astype(np.float32)
    rec = block_adjoint(sample_image(x, op), op).data[0, 0]
    assert np.abs(rec - x).max() < 1e-4
