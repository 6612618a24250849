import numpy as np
import pytest

from zenosim.errors import TruncationError
from zenosim.hilbert import (
    DOWN,
    UP,
    DensityOperator,
    PureState,
    SystemDims,
    build_mode_op,
    build_spin_op,
    named_state,
    partial_trace_motion,
    spin_state,
    thermal_product_state,
    thermal_weights,
    up_count_projectors,
)

DIMS2 = SystemDims(2, 4)
DIMS3 = SystemDims(3, 3)


def basis_vector(dims, spins, n):
    v = np.zeros(dims.dim, dtype=complex)
    v[dims.basis_index(spins, n)] = 1.0
    return v


def test_dimension_bookkeeping():
    assert SystemDims(2, 5).dim == 4 * 5
    assert SystemDims(3, 4, leak_level=True).dim == 27 * 4
    with pytest.raises(ValueError):
        SystemDims(4, 4)
    with pytest.raises(ValueError):
        SystemDims(2, 0)


def test_lowering_ion_one_flips_first_ion():
    lower = build_spin_op(DIMS2, 0, "lower").matrix
    psi = basis_vector(DIMS2, (UP, UP), 0)
    out = lower @ psi
    expected = basis_vector(DIMS2, (DOWN, UP), 0)
    assert np.allclose(out, expected)


def test_raise_is_adjoint_of_lower():
    for ion in range(2):
        lo = build_spin_op(DIMS2, ion, "lower").matrix
        hi = build_spin_op(DIMS2, ion, "raise").matrix
        assert np.array_equal(hi, lo.conj().T)


def test_collective_x_creates_triplet():
    sx = build_spin_op(DIMS2, 0, "x").matrix + build_spin_op(DIMS2, 1, "x").matrix
    psi = basis_vector(DIMS2, (UP, UP), 0)
    t = named_state(DIMS2, "T", 0).amplitudes
    out = sx @ psi
    # sum_i sigma_i^x |uu> = sqrt(2) |T>
    assert abs(np.vdot(t, out) - np.sqrt(2)) < 1e-12
    assert abs(np.linalg.norm(out) - np.sqrt(2)) < 1e-12


def test_project_o_requires_leak_level():
    with pytest.raises(ValueError):
        build_spin_op(DIMS2, 0, "project_o")
    dims = SystemDims(2, 2, leak_level=True)
    proj = build_spin_op(dims, 1, "project_o").matrix
    assert abs(np.trace(proj) - 3 * dims.n_fock) < 1e-12


def test_ion_index_out_of_range():
    with pytest.raises(ValueError):
        build_spin_op(DIMS2, 2, "lower")


def test_embedded_operators_on_distinct_ions_commute():
    rng = np.random.default_rng(7)
    kinds = ["lower", "raise", "x", "z"]
    for _ in range(12):
        ka, kb = rng.choice(kinds, size=2)
        a = build_spin_op(DIMS3, 0, ka).matrix
        b = build_spin_op(DIMS3, rng.integers(1, 3), kb).matrix
        assert np.linalg.norm(a @ b - b @ a) < 1e-12


def test_mode_ladder_action():
    a = build_mode_op(DIMS2, "annihilate").matrix
    psi1 = basis_vector(DIMS2, (UP, UP), 1)
    psi0 = basis_vector(DIMS2, (UP, UP), 0)
    assert np.allclose(a @ psi1, psi0)  # sqrt(1) factor
    adag = build_mode_op(DIMS2, "create").matrix
    top = basis_vector(DIMS2, (UP, UP), DIMS2.n_fock - 1)
    assert np.linalg.norm(adag @ top) == 0.0  # truncation convention
    assert np.array_equal(adag, a.conj().T)


def test_number_operator_thermal_expectation():
    dims = SystemDims(2, 16)
    nbar = 0.006
    rho = thermal_product_state(dims, spin_state(dims, "uu"), nbar)
    number = build_mode_op(dims, "number").matrix
    got = np.trace(number @ rho.matrix).real
    # independent oracle: truncated geometric series
    q = nbar / (1 + nbar)
    w = q ** np.arange(16)
    w /= w.sum()
    expected = float((np.arange(16) * w).sum())
    assert abs(got - expected) < 1e-12
    assert abs(got - nbar) < 1e-4  # truncation error only


def test_named_state_phase_conventions():
    # oracle: literal construction of the twisted states
    w = np.exp(2j * np.pi / 3)
    dims = DIMS3
    uud = basis_vector(dims, (UP, UP, DOWN), 0)
    udu = basis_vector(dims, (UP, DOWN, UP), 0)
    duu = basis_vector(dims, (DOWN, UP, UP), 0)
    wc_expected = (w * uud + udu + w.conj() * duu) / np.sqrt(3)
    assert np.allclose(named_state(dims, "Wc", 0).amplitudes, wc_expected)

    W = named_state(dims, "W", 0)
    Wc = named_state(dims, "Wc", 0)
    Wac = named_state(dims, "Wac", 0)
    assert abs(W.overlap(Wc)) < 1e-12
    assert abs(Wc.overlap(Wac)) < 1e-12


def test_triplet_singlet_orthonormal_basis():
    names = ["uu", "T", "S", "dd"]
    vecs = [named_state(DIMS2, n, 0).amplitudes for n in names]
    gram = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
    assert np.linalg.norm(gram - np.eye(4)) < 1e-12


def test_named_state_fock_support():
    t1 = named_state(DIMS2, "T", 1)
    psi = t1.amplitudes.reshape(DIMS2.spin_dim, DIMS2.n_fock)
    assert np.linalg.norm(psi[:, [0, 2, 3]]) == 0.0


def test_named_state_ion_count_mismatch():
    with pytest.raises(ValueError):
        named_state(DIMS2, "W", 0)
    with pytest.raises(ValueError):
        named_state(DIMS3, "T", 0)


def test_spin_completeness_two_ions():
    projectors = sum(
        np.outer(named_state(DIMS2, n, 0).amplitudes, named_state(DIMS2, n, 0).amplitudes.conj())
        for n in ["uu", "T", "S", "dd"]
    )
    # identity on the spin factor at fock 0
    fock0 = np.kron(np.eye(DIMS2.spin_dim), np.diag([1.0, 0, 0, 0]))
    assert np.linalg.norm(projectors - fock0) < 1e-12


def test_thermal_zero_temperature_is_pure_ground():
    dims = SystemDims(2, 5)
    rho = thermal_product_state(dims, spin_state(dims, "T"), 0.0)
    expected = named_state(dims, "T", 0).to_density().matrix
    assert np.linalg.norm(rho.matrix - expected) < 1e-12


def test_thermal_weight_level_one():
    nbar = 0.006
    w = thermal_weights(nbar, 16)
    q = nbar / (1 + nbar)
    z = sum(q**n for n in range(16))
    assert abs(w[1] - q / z) < 1e-15
    assert abs(w[1] - 0.0059288) < 1e-6  # frozen from the oracle above


def test_thermal_trace_one():
    dims = SystemDims(2, 16)
    rho = thermal_product_state(dims, spin_state(dims, "uu"), 0.01)
    assert abs(rho.trace - 1.0) < 1e-12


def test_thermal_truncation_guard():
    with pytest.raises(TruncationError):
        thermal_weights(2.0, 3)


def test_density_and_state_validation():
    with pytest.raises(ValueError):
        PureState(DIMS2, np.ones(DIMS2.dim))
    with pytest.raises(ValueError):
        DensityOperator(DIMS2, np.eye(DIMS2.dim) * (1.0 / DIMS2.dim) + 1e-3 * 1j * np.eye(DIMS2.dim))


def test_partial_trace_and_up_projectors():
    dims = SystemDims(2, 3)
    psi = named_state(dims, "T", 1)
    rho_spin = partial_trace_motion(dims, psi)
    t_spin = spin_state(dims, "T").amplitudes
    assert abs(np.vdot(t_spin, rho_spin @ t_spin) - 1.0) < 1e-12
    masks = up_count_projectors(dims)
    diag = np.abs(psi.amplitudes) ** 2
    assert abs(diag @ masks[1] - 1.0) < 1e-12
    assert diag @ masks[0] == 0.0
