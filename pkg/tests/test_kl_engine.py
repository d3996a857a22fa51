import math

import numpy as np
import pytest

from gespfactor.errors import NotPositiveSemiDefinite, TooManyModes, ValidationError
from gespfactor.grid_measure import build_grid, build_measure
from gespfactor.hermite_bank import hermite_function
from gespfactor.kernels import make_kernel
from gespfactor.kl_engine import (
    assemble_covariance_matrix,
    decompose,
    mercer_profile,
    mercer_reconstruct_error,
    nystrom_eigendecompose,
    project_field,
)


@pytest.fixture(scope="module")
def gaussian_full(gl_grid, measure0):
    return decompose(make_kernel("gaussian"), gl_grid, measure0, 256)


def test_brownian_spectrum_matches_closed_form():
    grid = build_grid(1, 1.0, 512)
    measure = build_measure(grid, 0, lebesgue=True)
    decomp = decompose(make_kernel("brownian"), grid, measure, 8)
    for n in range(1, 6):
        expected = ((n - 0.5) * math.pi) ** -2
        assert decomp.eigenvalues[n - 1] == pytest.approx(expected, rel=0.01)


def test_rank_one_kernel(gl_grid, measure0):
    decomp = decompose(make_kernel("rank1"), gl_grid, measure0, 16)
    phi = hermite_function(0, gl_grid.nodes[:, 0])
    v = measure0.effective_weights
    norm_sq = float(np.sum(phi ** 2 * v))
    assert decomp.eigenvalues[0] == pytest.approx(norm_sq, rel=1e-12)
    assert decomp.rank == 1
    assert decomp.n0_size == 15
    assert decomp.null_indices.tolist() == list(range(1, 16))
    assert np.max(np.abs(decomp.f[:, 0] - phi / math.sqrt(norm_sq))) <= 1e-10


def test_zero_kernel_is_all_null(gl_grid, measure0):
    decomp = decompose(make_kernel("zero"), gl_grid, measure0, 8)
    assert decomp.rank == 0
    assert decomp.lambda_max == 0.0
    assert decomp.trace_error == 0.0


def test_negative_kernel_is_rejected(gl_grid, measure0):
    K = assemble_covariance_matrix(make_kernel("gaussian"), gl_grid, measure0)
    with pytest.raises(NotPositiveSemiDefinite):
        nystrom_eigendecompose(-K, gl_grid, measure0, 8)


@pytest.mark.parametrize("modes", [0, 257, 2.5])
def test_mode_count_is_bounded_by_the_grid(gl_grid, measure0, modes):
    with pytest.raises(TooManyModes):
        decompose(make_kernel("gaussian"), gl_grid, measure0, modes)


def test_zero_tol_must_be_positive(gl_grid, measure0):
    with pytest.raises(ValidationError):
        decompose(make_kernel("gaussian"), gl_grid, measure0, 8, zero_tol=0.0)


def test_eigenvalues_descend(gaussian_full):
    lam = gaussian_full.eigenvalues
    assert np.all(np.diff(lam) <= 0)
    assert np.all(lam >= 0)


def test_modes_are_orthonormal(gaussian_full):
    assert gaussian_full.mu_orthonormality_error <= 1e-8
    assert gaussian_full.l2_orthonormality_error <= 1e-8


@pytest.mark.parametrize("name", ["gaussian", "exponential", "rank1", "zero"])
def test_trace_and_hilbert_schmidt(gl_grid, measure0, name):
    decomp = decompose(make_kernel(name), gl_grid, measure0, 32)
    report = decomp.to_report()
    assert decomp.trace_error <= 1e-8
    assert decomp.hilbert_schmidt_holds
    assert report["pass"]["trace"]
    assert report["pass"]["hilbert_schmidt"]


def _trace_case(case, tmp_path):
    if case == "brownian":
        grid = build_grid(1, 1.0, 512)
        return make_kernel("brownian"), grid, build_measure(grid, 0, lebesgue=True)
    grid = build_grid(1, 20.0, 256)
    if case == "polynomial-growth-demo":
        return make_kernel(case), grid, build_measure(grid, 2)
    path = tmp_path / "k.csv"
    np.savetxt(path, make_kernel("gaussian").matrix(grid), fmt="%.17g", delimiter=",")
    return make_kernel("grid-file", path=path), grid, build_measure(grid, 0)


@pytest.mark.parametrize("case", ["brownian", "polynomial-growth-demo", "grid-file"])
def test_trace_identity_for_the_remaining_builtins(tmp_path, case):
    kernel, grid, measure = _trace_case(case, tmp_path)
    decomp = decompose(kernel, grid, measure, 32)
    assert decomp.trace_error <= 1e-8
    assert decomp.hilbert_schmidt_holds
    report = decomp.to_report()
    assert report["pass"]["trace"] and report["pass"]["hilbert_schmidt"]


def test_signs_are_canonical(gaussian_full):
    s = np.sqrt(gaussian_full.measure.effective_weights)
    for n in range(8):
        col = gaussian_full.f[:, n] * s
        first = np.flatnonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))[0]
        assert col[first] > 0


def test_mercer_truncation_improves(gl_grid, measure0, gaussian_full):
    K = assemble_covariance_matrix(make_kernel("gaussian"), gl_grid, measure0)
    e2 = mercer_reconstruct_error(gaussian_full, K, gl_grid, measure0, 2)
    e8 = mercer_reconstruct_error(gaussian_full, K, gl_grid, measure0, 8)
    e32 = mercer_reconstruct_error(gaussian_full, K, gl_grid, measure0, 32)
    assert e32 <= e8 <= e2
    assert mercer_reconstruct_error(gaussian_full, K, gl_grid, measure0, 256) <= 1e-8
    with pytest.raises(TooManyModes):
        mercer_reconstruct_error(gaussian_full, K, gl_grid, measure0, 300)


def test_rank_one_mercer_is_exact(gl_grid, measure0):
    kernel = make_kernel("rank1")
    decomp = decompose(kernel, gl_grid, measure0, 4)
    assert mercer_reconstruct_error(decomp, kernel, gl_grid, measure0, 1) <= 1e-8


def test_mercer_profile_sizes(gl_grid, measure0):
    decomp = decompose(make_kernel("gaussian"), gl_grid, measure0, 12)
    profile = mercer_profile(decomp, make_kernel("gaussian"), gl_grid, measure0)
    assert [row["m"] for row in profile] == [1, 2, 4, 8, 12]


def test_projection_recovers_mode_coefficients(gaussian_full):
    coeffs = project_field(gaussian_full, gaussian_full.f[:, 3])
    expected = np.zeros(256)
    expected[3] = 1.0
    assert np.max(np.abs(coeffs - expected)) <= 1e-8


def test_report_fields(gaussian_full):
    report = gaussian_full.to_report()
    assert report["modes"] == 256
    assert report["rank"] + report["n0_size"] == 256
    assert all(report["pass"].values())
