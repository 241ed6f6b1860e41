import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from snaprabi.errors import InvalidArgument
from snaprabi.gates import (Gate, collective_snap, cross_kerr, dispersive_gate, gaussian_gate,
                            ideal_target, phase_rotation, projected_rabi, quadrature_eigensystem,
                            rabi_gate, second_order_rabi, snap_flip, target_generator)
from snaprabi.hilbert import MODE1, MODE2, QUBIT, Operator, SpaceDescriptor, embed

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])
PAULI = {"x": SX, "y": SY, "z": SZ}


def ladder(d):
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def quads(d):
    a = ladder(d)
    return (a + a.conj().T) / np.sqrt(2), 1j * (a.conj().T - a) / np.sqrt(2)


def full(gate, space):
    return embed(gate.unitary, space).matrix


def expect(u, psi, op):
    out = u @ psi
    return (out.conj() @ op @ out).real


def basis(d, n):
    v = np.zeros(d, complex)
    v[n] = 1
    return v


# -- rabi family -------------------------------------------------------------

def test_rabi_matches_dense_exponential():
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, 8)))
    x, _ = quads(8)
    for axis in "xyz":
        u = full(rabi_gate(0.4, axis, MODE2, space), space)
        np.testing.assert_allclose(u, expm(0.4j * np.kron(PAULI[axis], x)), atol=1e-12)


def test_rabi_zero_is_identity():
    space = SpaceDescriptor.hybrid(3, 6)
    np.testing.assert_allclose(full(rabi_gate(0.0, "x", MODE2, space), space), np.eye(36),
                               atol=1e-14)


def test_rabi_on_plus_branch_shifts_momentum_by_strength():
    d = 40
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, d)))
    _, p = quads(d)
    plus = np.array([1, 1]) / np.sqrt(2)
    psi = np.kron(plus, basis(d, 0))
    eps = 0.37
    u = full(rabi_gate(eps, "x", MODE2, space), space)
    assert expect(u, psi, np.kron(np.eye(2), p)) == pytest.approx(eps, abs=1e-10)


def test_rabi_composition_and_resource():
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, 10)))
    a, b = rabi_gate(0.2, "y", MODE2, space), rabi_gate(-0.5, "y", MODE2, space)
    np.testing.assert_allclose(full(a, space) @ full(b, space),
                               full(rabi_gate(-0.3, "y", MODE2, space), space), atol=1e-10)
    assert b.resource_strength == pytest.approx(0.5)
    assert b.noise_class == "rabi"


def test_projected_rabi_branches():
    d = 10
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, d)))
    x, _ = quads(d)
    plus, minus = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    u = full(projected_rabi(0.6, 1, MODE2, space), space)
    rng = np.random.default_rng(0)
    phi = rng.normal(size=d) + 1j * rng.normal(size=d)
    np.testing.assert_allclose(u @ np.kron(minus, phi), np.kron(minus, phi), atol=1e-12)
    np.testing.assert_allclose(u @ np.kron(plus, phi), np.kron(plus, expm(0.6j * x) @ phi),
                               atol=1e-12)
    assert projected_rabi(0.6, 1, MODE2, space).resource_strength == pytest.approx(0.3)
    np.testing.assert_allclose(full(projected_rabi(0.0, -1, MODE2, space), space), np.eye(2 * d),
                               atol=1e-14)


def test_projected_rabi_pair_is_plain_displacement():
    d = 12
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, d)))
    x, _ = quads(d)
    prod = full(projected_rabi(0.8, 1, MODE2, space), space) @ \
        full(projected_rabi(0.8, -1, MODE2, space), space)
    np.testing.assert_allclose(prod, np.kron(np.eye(2), expm(0.8j * x)), atol=1e-10)


def test_second_order_rabi_moments_on_vacuum():
    d = 60
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, d)))
    x, p = quads(d)
    t = 0.3
    plus = np.array([1, 1]) / np.sqrt(2)
    psi = np.kron(plus, basis(d, 0))
    u = full(second_order_rabi(t, MODE2, space), space)
    # e^{-itX²} P e^{itX²} = P + 2tX, so <X²> stays 1/2 and <P²> = 1/2 + 4t²·1/2
    assert expect(u, psi, np.kron(np.eye(2), x @ x)) == pytest.approx(0.5, abs=1e-10)
    assert expect(u, psi, np.kron(np.eye(2), p @ p)) == pytest.approx(0.5 + 2 * t * t, abs=1e-8)


def test_second_order_rabi_commutation_with_rabi():
    space = SpaceDescriptor(((QUBIT, 2), (MODE2, 10)))
    a = full(second_order_rabi(0.3, MODE2, space), space)
    # same axis: σ_x·X² and σ_x·X commute exactly
    b = full(rabi_gate(0.3, "x", MODE2, space), space)
    assert np.linalg.norm(a @ b - b @ a) < 1e-12
    c = full(rabi_gate(0.3, "y", MODE2, space), space)
    assert np.linalg.norm(a @ c - c @ a) > 1e-3


# -- dispersive and snap -------------------------------------------------------

def test_dispersive_is_diagonal_with_number_phase():
    d = 7
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, d)))
    eps = 0.21
    u = full(dispersive_gate(eps, "z", MODE1, space), space)
    assert np.max(np.abs(u - np.diag(np.diag(u)))) < 1e-14
    # σ_z = +1 on |0>, so the phase there is e^{iεn}
    np.testing.assert_allclose(np.diag(u)[:d], np.exp(1j * eps * np.arange(d)), atol=1e-14)
    np.testing.assert_allclose(np.diag(u)[d:], np.exp(-1j * eps * np.arange(d)), atol=1e-14)
    n = np.kron(np.eye(2), np.diag(np.arange(d)))
    np.testing.assert_allclose(u @ n, n @ u, atol=1e-12)
    np.testing.assert_allclose(full(dispersive_gate(0.0, "y", MODE1, space), space), np.eye(2 * d),
                               atol=1e-14)


def test_dispersive_y_matches_dense():
    d = 5
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, d)))
    u = full(dispersive_gate(0.7, "y", MODE1, space), space)
    np.testing.assert_allclose(u, expm(0.7j * np.kron(SY, np.diag(np.arange(d)))), atol=1e-12)


def test_snap_flip_support_and_conjugation():
    d, n = 6, 2
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, d)))
    u = full(snap_flip(n, 1, MODE1, space), space)
    proj = np.diag((np.arange(d) == n).astype(float))
    np.testing.assert_allclose(u, expm(0.5j * np.pi * np.kron(SZ, proj)), atol=1e-12)
    off = np.kron(np.eye(2), np.eye(d) - proj)
    np.testing.assert_allclose(off @ u @ off, off, atol=1e-14)
    # on the level-n block a π rotation about z sends σ_x to -σ_x (|+> <-> |->)
    blk = u.reshape(2, d, 2, d)[:, n, :, n]
    np.testing.assert_allclose(blk.conj().T @ SX @ blk, -SX, atol=1e-14)
    v = full(snap_flip(n, -1, MODE1, space), space)
    np.testing.assert_allclose(u @ v, np.eye(2 * d), atol=1e-14)
    assert snap_flip(n, 1, MODE1, space).resource_strength == pytest.approx(np.pi)


def test_snap_flip_level_out_of_range():
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, 4)))
    with pytest.raises(InvalidArgument):
        snap_flip(4, 1, MODE1, space)


def test_collective_snap_is_product_of_flips():
    d = 5
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, d)))
    prod = np.eye(2 * d)
    for n in (1, 3):
        prod = prod @ full(snap_flip(n, -1, MODE1, space), space)
    np.testing.assert_allclose(full(collective_snap([1, 3], -1, MODE1, space), space), prod,
                               atol=1e-14)


# -- gaussian gates --------------------------------------------------------------

def test_displacement_heisenberg_shift():
    d = 50
    space = SpaceDescriptor(((MODE2, d),))
    x, _ = quads(d)
    u = full(gaussian_gate("displacement", 0.7, MODE2, space), space)
    low = slice(0, 10)
    np.testing.assert_allclose((u @ x @ u.conj().T)[low, low], (x + 0.7 * np.eye(d))[low, low],
                               atol=1e-10)
    # the displaced state itself sits at -α under this operator convention
    assert expect(u, basis(d, 0), x) == pytest.approx(-0.7, abs=1e-10)
    np.testing.assert_allclose(full(gaussian_gate("displacement", 0.0, MODE2, space), space),
                               np.eye(d), atol=1e-14)


def test_complex_displacement_matches_dense():
    d = 30
    space = SpaceDescriptor(((MODE2, d),))
    a = ladder(d)
    alpha = 0.3 + 0.4j
    u = full(gaussian_gate("displacement", alpha, MODE2, space), space)
    np.testing.assert_allclose(u, expm(alpha * a.conj().T - np.conj(alpha) * a), atol=1e-12)


def test_squeezing_heisenberg_identity():
    d, r = 80, 0.6
    space = SpaceDescriptor(((MODE2, d),))
    x, _ = quads(d)
    s_pos = full(gaussian_gate("squeezing", r, MODE2, space), space)
    s_neg = full(gaussian_gate("squeezing", -r, MODE2, space), space)
    lhs = s_neg @ x @ s_pos
    low = slice(0, 10)
    np.testing.assert_allclose(lhs[low, low], np.exp(r) * x[low, low], atol=1e-8)
    assert expect(s_pos, basis(d, 0), x @ x) == pytest.approx(np.exp(2 * r) / 2, abs=1e-8)


def test_squeezing_zero_and_unknown_kind():
    space = SpaceDescriptor(((MODE2, 8),))
    np.testing.assert_allclose(full(gaussian_gate("squeezing", 0.0, MODE2, space), space),
                               np.eye(8), atol=1e-14)
    with pytest.raises(InvalidArgument):
        gaussian_gate("rotation", 1.0, MODE2, space)


def test_phase_rotation_free():
    space = SpaceDescriptor(((MODE1, 5),))
    g = phase_rotation(0.4, MODE1, space)
    np.testing.assert_allclose(np.diag(full(g, space)), np.exp(0.4j * np.arange(5)))
    assert g.resource_strength == 0.0


# -- cross-kerr and targets ------------------------------------------------------

def test_cross_kerr_phases():
    d1, d2, t = 4, 5, 0.3
    space = SpaceDescriptor.oscillators(d1, d2)
    u = full(cross_kerr(t, space), space)
    expected = np.exp(1j * t * np.outer(np.arange(d1), np.arange(d2))).ravel()
    np.testing.assert_allclose(u, np.diag(expected), atol=1e-14)
    np.testing.assert_allclose(full(cross_kerr(0.0, space), space), np.eye(d1 * d2))
    assert cross_kerr(-0.3, space).resource_strength == pytest.approx(0.3)


def test_quadrature_eigensystem_diagonalises_x():
    x, _ = quads(20)
    w, v = quadrature_eigensystem(20)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, x, atol=1e-12)


@pytest.mark.parametrize("k,l", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_ideal_target_matches_dense_exponential(k, l):
    d1, d2, t = 4, 9, 0.35
    space = SpaceDescriptor.hybrid(d1, d2)
    x, _ = quads(d2)
    n = np.diag(np.arange(d1, dtype=float))
    gen = np.kron(np.linalg.matrix_power(n, k), np.linalg.matrix_power(x, l))
    u = full(ideal_target(k, l, t, space), space)
    np.testing.assert_allclose(u, np.kron(np.eye(2), expm(1j * t * gen)), atol=1e-11)
    np.testing.assert_allclose(embed(target_generator(k, l, space), space).matrix,
                               np.kron(np.eye(2), gen), atol=1e-11)


def test_ideal_target_momentum_shift_per_level():
    d1, d2, t = 4, 60, 0.5
    space = SpaceDescriptor.oscillators(d1, d2)
    _, p = quads(d2)
    u = full(ideal_target(1, 1, t, space), space)
    for n in range(d1):
        psi = np.kron(basis(d1, n), basis(d2, 0))
        assert expect(u, psi, np.kron(np.eye(d1), p)) == pytest.approx(n * t, abs=1e-9)


def test_ideal_target_quadratic_variance_growth():
    d1, d2, t, n = 3, 80, 0.4, 2
    space = SpaceDescriptor.oscillators(d1, d2)
    _, p = quads(d2)
    u = full(ideal_target(1, 2, t, space), space)
    psi = np.kron(basis(d1, n), basis(d2, 0))
    pp = np.kron(np.eye(d1), p)
    var = expect(u, psi, pp @ pp) - expect(u, psi, pp) ** 2
    # 1/2 vacuum + 4T²n²·Var(X) with Var(X) = 1/2
    assert var == pytest.approx(0.5 + 4 * t * t * n * n * 0.5, abs=1e-8)


def test_ideal_target_zero_and_commutes_with_number():
    space = SpaceDescriptor.oscillators(5, 8)
    np.testing.assert_allclose(full(ideal_target(1, 1, 0.0, space), space), np.eye(40),
                               atol=1e-13)
    u = full(ideal_target(1, 1, 1.3, space), space)
    n1 = np.kron(np.diag(np.arange(5.0)), np.eye(8))
    assert np.max(np.abs(u @ n1 - n1 @ u)) <= 1e-12


def test_gate_validation():
    op = Operator(SpaceDescriptor(((QUBIT, 2),)), SZ, hermitian=True)
    with pytest.raises(InvalidArgument):
        Gate(op, 0.0, "none", "not unitary")
    uop = Operator(SpaceDescriptor(((QUBIT, 2),)), SZ, unitary=True)
    with pytest.raises(InvalidArgument):
        Gate(uop, -1.0, "none", "negative")
    with pytest.raises(InvalidArgument):
        Gate(uop, 0.0, "laser", "class")


@settings(max_examples=20, deadline=None)
@given(s=st.floats(-2, 2), axis=st.sampled_from("xyz"),
       which=st.sampled_from(["rabi", "rabi2", "disp", "prabi", "kerr", "target"]))
def test_gate_eigenvalues_on_unit_circle(s, axis, which):
    space = SpaceDescriptor.hybrid(4, 10)
    gate = {
        "rabi": lambda: rabi_gate(s, axis, MODE2, space),
        "rabi2": lambda: second_order_rabi(s, MODE2, space),
        "disp": lambda: dispersive_gate(s, axis, MODE1, space),
        "prabi": lambda: projected_rabi(s, 1, MODE2, space),
        "kerr": lambda: cross_kerr(s, space),
        "target": lambda: ideal_target(1, 2, s, space),
    }[which]()
    ev = np.linalg.eigvals(full(gate, space))
    assert np.max(np.abs(np.abs(ev) - 1)) <= 1e-10
