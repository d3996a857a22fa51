import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gespfactor.errors import BasisMissing, NonUniformGrid, SpectralLeakage, ValidationError
from gespfactor.grid_measure import build_grid, lebesgue_gram
from gespfactor.hermite_bank import hermite_function
from gespfactor.operator_kit import (
    BesselPotential,
    CoefficientRelabel,
    FactoredOperator,
    SpectralDiagonal,
    WeightMultiply,
    apply_to_test_function,
    bessel_potential,
    compose,
    identity,
    operator_from_records,
    stage_from_record,
    weight_multiply,
)


def test_zero_order_bessel_is_identity_on_any_grid(gl_grid, bank8):
    out = bessel_potential(bank8.samples, 0.0, gl_grid)
    assert np.array_equal(out, bank8.samples)


def test_bessel_needs_a_uniform_grid(gl_grid, bank8):
    with pytest.raises(NonUniformGrid):
        bessel_potential(bank8.samples, 1.0, gl_grid)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_bessel_roundtrip_on_bank(uniform_grid, uniform_bank8, alpha):
    up = bessel_potential(uniform_bank8.samples, alpha, uniform_grid)
    back = bessel_potential(up, -alpha, uniform_grid)
    assert np.max(np.abs(back - uniform_bank8.samples)) <= 1e-8


def test_plane_wave_is_an_eigenfunction():
    P, R, m = 128, 10.0, 3
    grid = build_grid(1, R, P, "trapezoid")
    assert P * grid.spacing == pytest.approx(2 * R * P / (P - 1), rel=1e-14)
    xi = 2 * math.pi * m / (P * grid.spacing)
    wave = np.cos(xi * grid.nodes[:, 0])
    out = bessel_potential(wave, 1.0, grid)
    assert np.max(np.abs(out - (1 + xi ** 2) * wave)) <= 1e-9 * (1 + xi ** 2)
    # one period is P * h, so a wave periodic over 2R is not an eigenfunction
    off = 3 * math.pi / R
    near = np.cos(off * grid.nodes[:, 0])
    assert np.max(np.abs(bessel_potential(near, 1.0, grid) - (1 + off ** 2) * near)) > 1e-3


def test_second_order_matches_analytic_derivative(uniform_grid):
    # (1 - d^2/dx^2) h_0 = (2 - x^2) h_0
    x = uniform_grid.nodes[:, 0]
    h0 = hermite_function(0, x)
    expected = (2 - x ** 2) * h0
    for pad in (1, 2):
        out = bessel_potential(h0, 1.0, uniform_grid, pad_factor=pad)
        assert np.max(np.abs(out - expected)) <= 1e-8


def test_top_band_energy_is_leakage():
    grid = build_grid(1, 10.0, 64, "trapezoid")
    alternating = (-1.0) ** np.arange(64)
    with pytest.raises(SpectralLeakage):
        bessel_potential(alternating, 1.0, grid)
    # smoothing direction is never rejected
    bessel_potential(alternating, -1.0, grid)


def test_diagnostics_are_recorded(uniform_grid, uniform_bank8):
    diagnostics = {}
    bessel_potential(uniform_bank8.samples, 1.0, uniform_grid, diagnostics=diagnostics)
    assert diagnostics["imag_residue"] <= 1e-9
    assert diagnostics["leakage_fraction"] <= 1e-3


def test_weight_multiply_inverse(gl_grid, bank8):
    out = weight_multiply(weight_multiply(bank8.samples, 1.0, gl_grid), -1.0, gl_grid)
    assert np.max(np.abs(out - bank8.samples)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(p=st.floats(min_value=-3.0, max_value=3.0), j=st.integers(min_value=0, max_value=7))
def test_weight_multiply_inverse_property(p, j):
    grid = build_grid(1, 8.0, 64)
    phi = hermite_function(j, grid.nodes[:, 0])
    back = weight_multiply(weight_multiply(phi, p, grid), -p, grid)
    assert np.max(np.abs(back - phi)) <= 1e-12


def test_spectral_diagonal_projects_onto_its_basis(gl_grid, bank8):
    stage = SpectralDiagonal(np.ones(8), bank8.samples, "hermite")
    h2 = bank8.member(2)
    assert np.max(np.abs(stage.forward(h2, gl_grid) - h2)) <= 1e-10
    h9 = hermite_function(9, gl_grid.nodes[:, 0])
    assert np.max(np.abs(stage.forward(h9, gl_grid))) <= 1e-10


def test_spectral_diagonal_scales_each_member(gl_grid, bank8):
    values = np.arange(8, dtype=float)
    stage = SpectralDiagonal(values, bank8.samples)
    out = stage.forward(bank8.member(3), gl_grid)
    assert np.max(np.abs(out - 3.0 * bank8.member(3))) <= 1e-10


def test_spectral_diagonal_rejects_negative_values():
    with pytest.raises(ValidationError):
        SpectralDiagonal(np.array([1.0, -0.5]))


def test_missing_basis(gl_grid, bank8):
    with pytest.raises(BasisMissing):
        apply_to_test_function(FactoredOperator((SpectralDiagonal(np.ones(2)),)), bank8.member(0), gl_grid)
    with pytest.raises(BasisMissing):
        CoefficientRelabel((0, 1)).forward(bank8.member(0), gl_grid)


def test_relabel_must_be_injective():
    with pytest.raises(ValidationError):
        CoefficientRelabel((0, 0))


def test_relabel_sends_target_members_to_sources(gl_grid, bank8):
    source = bank8.samples[:, [5, 6]]
    stage = CoefficientRelabel((1, 0), source, bank8.samples)
    out = stage.forward(bank8.member(0), gl_grid)
    assert np.max(np.abs(out - bank8.member(6))) <= 1e-10


def test_stages_apply_left_to_right(uniform_grid, uniform_bank8):
    A = FactoredOperator((WeightMultiply(0.5),))
    B = FactoredOperator((BesselPotential(-1.0),))
    op = compose(A, B)
    assert op.stages == A.stages + B.stages
    phi = uniform_bank8.samples
    expected = bessel_potential(weight_multiply(phi, 0.5, uniform_grid), -1.0, uniform_grid)
    assert np.array_equal(apply_to_test_function(op, phi, uniform_grid), expected)


def test_identity_operator(gl_grid, bank8):
    op = identity()
    assert op.is_identity
    assert np.array_equal(apply_to_test_function(op, bank8.samples, gl_grid), bank8.samples)


def test_stage_records():
    assert stage_from_record({"stage": "bessel", "alpha": 1}).to_record() == {"stage": "bessel", "alpha": 1.0}
    assert stage_from_record({"stage": "weight", "p": -1}).to_record() == {"stage": "weight", "p": -1.0}
    records = [{"stage": "weight", "p": 0.75}, {"stage": "bessel", "alpha": -0.5, "pad_factor": 2}]
    assert operator_from_records(records).describe() == records
    with pytest.raises(ValidationError):
        stage_from_record({"stage": "fourier"})


def test_records_attach_named_bases(gl_grid, bank8):
    record = {"stage": "spectral", "values": [1.0] * 8, "basis": "hermite"}
    stage = stage_from_record(record, {"hermite": bank8.samples})
    assert stage.basis is bank8.samples
    assert stage.to_record() == record


def test_bad_pad_factor():
    with pytest.raises(ValidationError):
        BesselPotential(1.0, pad_factor=0)


@pytest.mark.parametrize("alpha", [-1.0, 0.5, 1.0])
def test_bessel_is_self_adjoint_on_the_bank(uniform_grid, uniform_bank8, alpha):
    phi = uniform_bank8.samples
    moved = bessel_potential(phi, alpha, uniform_grid)
    pairs = lebesgue_gram(moved, phi, uniform_grid)
    assert np.max(np.abs(pairs - pairs.T)) <= 1e-9


def test_spectral_diagonal_is_bounded_by_its_largest_value(gl_grid, bank8):
    values = np.array([0.5, 3.0, 1.0, 0.25])
    stage = SpectralDiagonal(values, bank8.samples[:, :4])
    x = gl_grid.nodes[:, 0]
    candidates = np.column_stack([bank8.samples, np.exp(-(x - 0.7) ** 2), bank8.samples @ np.arange(1.0, 9.0)])
    out = stage.forward(candidates, gl_grid)
    norms_in = np.sqrt(np.diag(lebesgue_gram(candidates, candidates, gl_grid)))
    norms_out = np.sqrt(np.diag(lebesgue_gram(out, out, gl_grid)))
    assert np.all(norms_out <= 3.0 * norms_in * (1 + 1e-10))


def test_grouping_of_stages_does_not_matter(uniform_grid, uniform_bank8):
    A = FactoredOperator((WeightMultiply(0.5),))
    B = FactoredOperator((BesselPotential(-1.0),))
    C = FactoredOperator((SpectralDiagonal(np.linspace(2.0, 0.5, 8), uniform_bank8.samples),))
    phi = uniform_bank8.samples
    left = apply_to_test_function(compose(compose(A, B), C), phi, uniform_grid)
    right = apply_to_test_function(compose(A, compose(B, C)), phi, uniform_grid)
    staged = apply_to_test_function(compose(B, C), apply_to_test_function(A, phi, uniform_grid), uniform_grid)
    assert np.max(np.abs(left - right)) <= 1e-12
    assert np.max(np.abs(left - staged)) <= 1e-12
