import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snaprabi.errors import InvalidArgument, NumericalPSDViolation
from snaprabi.hilbert import (MODE1, MODE2, QUBIT, DensityState, Operator, SpaceDescriptor,
                              apply_unitary, as_factor, blocks_to_block_factor,
                              diagonal_block_factors, embed, expect_local, fock_operators,
                              herm_expm, identity, lift, mode_operator, partial_trace,
                              partial_transpose, pauli, psd_sqrt, tensor, trace_norm)


def random_density(dim, rng, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


def bell_state():
    space = SpaceDescriptor(((QUBIT, 2), ("b", 2)))
    return DensityState.pure(space, np.array([0, 1, 1, 0]) / np.sqrt(2))


# -- spaces ------------------------------------------------------------------

def test_space_dims_and_order():
    s = SpaceDescriptor.hybrid(3, 5)
    assert s.labels == (QUBIT, MODE1, MODE2)
    assert s.dim == 30
    assert s.without([QUBIT]).labels == (MODE1, MODE2)
    assert s.restrict([MODE2, QUBIT]).labels == (QUBIT, MODE2)


@pytest.mark.parametrize("subs", [((QUBIT, 3),), ((MODE1, 2), (MODE1, 3)), ((MODE1, 0),)])
def test_space_rejects_bad_layouts(subs):
    with pytest.raises(InvalidArgument):
        SpaceDescriptor(subs)


# -- fock operators ----------------------------------------------------------

def test_annihilation_amplitudes_cutoff3():
    a = fock_operators(3)["annihilation"]
    assert a[0, 1] == pytest.approx(1.0)
    assert a[1, 2] == pytest.approx(np.sqrt(2))


def test_vacuum_position_variance_is_half():
    x = fock_operators(10)["position"]
    assert (x @ x)[0, 0].real == pytest.approx(0.5, abs=1e-15)


def test_commutator_identity_below_top_level():
    ops = fock_operators(10)
    a, ad = ops["annihilation"], ops["creation"]
    comm = a @ ad - ad @ a
    np.testing.assert_allclose(comm[:9, :9], np.eye(9), atol=1e-13)
    # truncation artefact: [a, a†] = 1 - D|D-1><D-1| on the last level
    assert comm[9, 9].real == pytest.approx(-9.0)


def test_quadrature_conventions():
    ops = fock_operators(6)
    a, ad = ops["annihilation"], ops["creation"]
    np.testing.assert_allclose(ops["position"], (a + ad) / np.sqrt(2))
    np.testing.assert_allclose(ops["momentum"], 1j * (ad - a) / np.sqrt(2))
    np.testing.assert_allclose(np.diag(ops["number"]).real, np.arange(6))


def test_fock_operators_rejects_small_cutoff():
    with pytest.raises(InvalidArgument):
        fock_operators(1)


# -- pauli, embed, tensor ----------------------------------------------------

def test_pauli_algebra():
    x, y, z = (pauli(a).matrix for a in "xyz")
    np.testing.assert_allclose(z, np.diag([1, -1]))
    np.testing.assert_allclose(x @ np.array([1, 0]), [0, 1])
    np.testing.assert_allclose(x @ z, -1j * y)
    assert pauli("x").hermitian and pauli("x").unitary


def test_embed_qubit_z_block_structure():
    space = SpaceDescriptor.hybrid(3, 3)
    m = embed(pauli("z"), space).matrix
    np.testing.assert_allclose(m, np.diag([1.0] * 9 + [-1.0] * 9))


def test_embed_identity():
    space = SpaceDescriptor.hybrid(3, 4)
    np.testing.assert_allclose(embed(identity(space.restrict([MODE1])), space).matrix,
                               np.eye(space.dim))


def test_embed_products_equal_kron():
    space = SpaceDescriptor.oscillators(4, 5)
    n = mode_operator("number", MODE1, 4)
    x = mode_operator("position", MODE2, 5)
    prod = embed(n, space) @ embed(x, space)
    np.testing.assert_allclose(prod.matrix, np.kron(n.matrix, x.matrix), atol=1e-14)
    np.testing.assert_allclose(tensor(n, x).matrix, prod.matrix, atol=1e-14)


def test_embed_respects_space_order_when_support_is_permuted():
    space = SpaceDescriptor.hybrid(2, 3)
    rng = np.random.default_rng(1)
    q, m2 = random_hermitian(2, rng), random_hermitian(3, rng)
    local = Operator(SpaceDescriptor(((MODE2, 3), (QUBIT, 2))), np.kron(m2, q))
    expected = np.kron(np.kron(q, np.eye(2)), m2)
    np.testing.assert_allclose(embed(local, space).matrix, expected, atol=1e-14)


def test_embed_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        embed(mode_operator("number", MODE1, 4), SpaceDescriptor.oscillators(5, 5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_embed_commutes_on_disjoint_supports(seed):
    rng = np.random.default_rng(seed)
    space = SpaceDescriptor.hybrid(3, 3)
    a = Operator(space.restrict([QUBIT]), random_hermitian(2, rng))
    b = Operator(space.restrict([MODE2]), random_hermitian(3, rng))
    ea, eb = embed(a, space).matrix, embed(b, space).matrix
    assert np.max(np.abs(ea @ eb - eb @ ea)) <= 1e-12


# -- controlled operators ----------------------------------------------------

def test_controlled_matrix_matches_direct_sum():
    rng = np.random.default_rng(2)
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, 3), (MODE2, 2)))
    blocks = np.stack([random_hermitian(4, rng) for _ in range(3)])
    op = Operator(space, control=MODE1, blocks=blocks)
    # oracle: Σ_n |n><n|_1 ⊗ B_n with B_n on (qubit, mode2), reordered by hand
    full = np.zeros((2, 3, 2, 2, 3, 2), dtype=complex)
    for n in range(3):
        b = blocks[n].reshape(2, 2, 2, 2)
        full[:, n, :, :, n, :] = b
    np.testing.assert_allclose(op.matrix, full.reshape(12, 12), atol=1e-14)
    np.testing.assert_allclose(op.controlled_on(MODE1), blocks)


def test_diagonal_form_matches_blocks():
    rng = np.random.default_rng(3)
    space = SpaceDescriptor.oscillators(3, 4)
    v = np.linalg.qr(rng.normal(size=(4, 4)))[0]
    phases = np.exp(1j * rng.normal(size=(3, 4)))
    op = Operator(space, control=MODE1, basis=v, phases=phases, unitary=True)
    expected = np.stack([v @ np.diag(p) @ v.T for p in phases])
    np.testing.assert_allclose(op.blocks, expected, atol=1e-14)
    assert op.is_unitary()
    rho = DensityState(space, random_density(12, rng))
    dense = Operator(space, op.matrix)
    np.testing.assert_allclose(apply_unitary(op, rho).matrix, apply_unitary(dense, rho).matrix,
                               atol=1e-13)
    np.testing.assert_allclose(op.dag().matrix, op.matrix.conj().T, atol=1e-14)
    x = rng.normal(size=(4, 2))
    np.testing.assert_allclose(op.block_apply(1, x), expected[1] @ x, atol=1e-14)
    np.testing.assert_allclose(op.block_apply(1, x, adjoint=True), expected[1].conj().T @ x,
                               atol=1e-14)


def test_lift_keeps_control():
    space = SpaceDescriptor.hybrid(3, 2)
    local = Operator(space.restrict([MODE1]), control=MODE1,
                     blocks=np.exp(1j * np.arange(3.0))[:, None, None], unitary=True)
    lifted = lift(local, space)
    assert lifted.control == MODE1
    np.testing.assert_allclose(lifted.matrix, embed(local, space).matrix, atol=1e-14)


def test_hermitian_flag_validated():
    with pytest.raises(InvalidArgument):
        Operator(SpaceDescriptor(((QUBIT, 2),)), np.array([[0, 1], [0, 0]]), hermitian=True)


# -- exponentials --------------------------------------------------------------

def test_herm_expm_zero_scale_is_identity():
    gen = mode_operator("position", MODE1, 6)
    np.testing.assert_allclose(herm_expm(gen, 0.0).matrix, np.eye(6), atol=1e-14)


def test_herm_expm_pauli_z():
    np.testing.assert_allclose(herm_expm(pauli("z"), np.pi / 2).matrix, np.diag([1j, -1j]),
                               atol=1e-15)


def test_herm_expm_number_eigenvalues():
    t = 0.37
    u = herm_expm(mode_operator("number", MODE1, 8), t).matrix
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(u)),
                               np.sort_complex(np.exp(1j * t * np.arange(8))), atol=1e-13)


def test_herm_expm_rejects_non_hermitian():
    with pytest.raises(InvalidArgument):
        herm_expm(mode_operator("annihilation", MODE1, 4), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(-3, 3))
def test_herm_expm_inverse_pair(seed, s):
    rng = np.random.default_rng(seed)
    gen = Operator(SpaceDescriptor(((MODE1, 6),)), random_hermitian(6, rng), hermitian=True)
    prod = herm_expm(gen, s).matrix @ herm_expm(gen, -s).matrix
    assert np.max(np.abs(prod - np.eye(6))) <= 1e-10


@pytest.mark.parametrize("d", [8, 32, 64])
def test_constructed_unitaries_are_unitary(d):
    u = herm_expm(mode_operator("position", MODE2, d, power=2), 0.8)
    assert u.is_unitary(1e-10)


# -- states --------------------------------------------------------------------

def test_state_validation():
    space = SpaceDescriptor(((MODE1, 2),))
    with pytest.raises(InvalidArgument):
        DensityState(space, np.diag([0.7, 0.7]))
    with pytest.raises(InvalidArgument):
        DensityState(space, np.diag([1.2, -0.2]))


def test_storage_forms_agree():
    rng = np.random.default_rng(4)
    space = SpaceDescriptor.hybrid(3, 4)
    f = rng.normal(size=(3, 8, 2)) + 1j * rng.normal(size=(3, 8, 2))
    f /= np.linalg.norm(f)
    bf = DensityState(space, block_factors=f, block_label=MODE1)
    # oracle: explicit sum of |n><n| ⊗ F_n F_n† in the (mode1 | qubit, mode2) grouping
    dense = np.zeros((3, 8, 3, 8), dtype=complex)
    for n in range(3):
        dense[n, :, n, :] = f[n] @ f[n].conj().T
    dense = dense.reshape(3, 2, 4, 3, 2, 4).transpose(1, 0, 2, 4, 3, 5).reshape(24, 24)
    np.testing.assert_allclose(bf.matrix, dense, atol=1e-14)
    np.testing.assert_allclose(as_factor(bf).matrix, dense, atol=1e-14)
    np.testing.assert_allclose(bf.to_blocks(MODE1).matrix, dense, atol=1e-14)
    back = blocks_to_block_factor(bf.to_blocks(MODE1))
    np.testing.assert_allclose(back.matrix, dense, atol=1e-13)
    assert bf.trace() == pytest.approx(1.0)


def test_apply_unitary_on_every_form():
    rng = np.random.default_rng(5)
    space = SpaceDescriptor.hybrid(3, 4)
    w = np.array([0.5, 0.3, 0.2])
    rest = random_density(8, rng, rank=2)
    blocks = w[:, None, None] * rest[None]
    states = [DensityState(space, blocks=blocks, block_label=MODE1)]
    states.append(blocks_to_block_factor(states[0]))
    states.append(as_factor(states[0]))
    states.append(DensityState(space, states[0].matrix))
    ops = [
        Operator(space.restrict([QUBIT, MODE2]), np.linalg.qr(rng.normal(size=(8, 8)))[0],
                 unitary=True),
        Operator(space.restrict([QUBIT, MODE1]), control=MODE1,
                 blocks=np.stack([np.linalg.qr(rng.normal(size=(2, 2)))[0] for _ in range(3)]),
                 unitary=True),
        Operator(space.restrict([MODE1]), np.linalg.qr(rng.normal(size=(3, 3)))[0],
                 unitary=True),
    ]
    for op in ops:
        u = embed(op, space).matrix
        expected = u @ states[0].matrix @ u.conj().T
        for s in states:
            np.testing.assert_allclose(apply_unitary(op, s).matrix, expected, atol=1e-13)


def test_expect_local_every_form():
    rng = np.random.default_rng(6)
    space = SpaceDescriptor.oscillators(3, 5)
    f = rng.normal(size=(3, 5, 2)) + 0j
    f /= np.linalg.norm(f)
    bf = DensityState(space, block_factors=f, block_label=MODE1)
    n1 = fock_operators(3)["number"]
    x2 = fock_operators(5)["position"]
    expected = np.trace(bf.matrix @ np.kron(n1, x2))
    for s in (bf, bf.to_blocks(MODE1), as_factor(bf), DensityState(space, bf.matrix)):
        assert expect_local(s, {MODE1: n1, MODE2: x2}) == pytest.approx(expected, abs=1e-13)


def test_diagonal_block_factors_reproduce_diagonal_blocks():
    rng = np.random.default_rng(7)
    space = SpaceDescriptor.oscillators(3, 4)
    rho = DensityState(space, random_density(12, rng))
    r = rho.matrix.reshape(3, 4, 3, 4)
    for n, g in enumerate(diagonal_block_factors(rho, MODE1)):
        np.testing.assert_allclose(g @ g.conj().T, r[n, :, n, :], atol=1e-13)


# -- partial operations --------------------------------------------------------

def test_partial_trace_product_state():
    rng = np.random.default_rng(8)
    a, b = random_density(2, rng), random_density(3, rng)
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, 3)))
    state = DensityState(space, np.kron(a, b))
    np.testing.assert_allclose(partial_trace(state, [QUBIT]).matrix, a, atol=1e-14)
    np.testing.assert_allclose(partial_trace(state, [MODE1]).matrix, b, atol=1e-14)


def test_partial_trace_bell_is_maximally_mixed():
    bell = bell_state()
    for keep in (QUBIT, "b"):
        np.testing.assert_allclose(partial_trace(bell, [keep]).matrix, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_unknown_label():
    with pytest.raises(InvalidArgument):
        partial_trace(bell_state(), ["nope"])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_partial_trace_composes(seed):
    rng = np.random.default_rng(seed)
    space = SpaceDescriptor.hybrid(2, 3)
    state = DensityState(space, random_density(12, rng))
    joint = partial_trace(state, [MODE2]).matrix
    stepwise = partial_trace(partial_trace(state, [MODE1, MODE2]), [MODE2]).matrix
    assert np.max(np.abs(joint - stepwise)) <= 1e-12


def test_partial_trace_structured_forms_match_dense():
    rng = np.random.default_rng(9)
    space = SpaceDescriptor.hybrid(3, 4)
    f = rng.normal(size=(3, 8, 3)) + 1j * rng.normal(size=(3, 8, 3))
    f /= np.linalg.norm(f)
    bf = DensityState(space, block_factors=f, block_label=MODE1)
    dense = DensityState(space, bf.matrix)
    for keep in ([MODE1], [MODE2], [QUBIT, MODE2], [MODE1, MODE2]):
        expected = partial_trace(dense, keep).matrix
        for s in (bf, bf.to_blocks(MODE1), as_factor(bf)):
            np.testing.assert_allclose(partial_trace(s, keep).matrix, expected, atol=1e-13)


def test_partial_transpose_product_is_ppt():
    rng = np.random.default_rng(10)
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, 3)))
    state = DensityState(space, np.kron(random_density(2, rng), random_density(3, rng)))
    assert np.linalg.eigvalsh(partial_transpose(state, MODE1)).min() >= -1e-10


def test_partial_transpose_bell():
    pt = partial_transpose(bell_state(), "b")
    assert np.linalg.eigvalsh(pt).min() == pytest.approx(-0.5)
    assert trace_norm(pt) == pytest.approx(2.0)


def test_partial_transpose_involution():
    rng = np.random.default_rng(11)
    space = SpaceDescriptor(((QUBIT, 2), (MODE1, 3)))
    state = DensityState(space, random_density(6, rng))
    once = DensityState(space, partial_transpose(state, MODE1), check=False)
    np.testing.assert_allclose(partial_transpose(once, MODE1), state.matrix, atol=1e-15)


# -- norms and roots -------------------------------------------------------------

def test_trace_norm_values():
    rng = np.random.default_rng(12)
    assert trace_norm(random_density(5, rng)) == pytest.approx(1.0)
    assert trace_norm(np.diag([1.0, -1.0])) == pytest.approx(2.0)
    with pytest.raises(InvalidArgument):
        trace_norm(np.array([[0, 1], [0, 0]]))


def test_psd_sqrt_values():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    with pytest.raises(NumericalPSDViolation):
        psd_sqrt(np.diag([1.0, -1e-3]))
    # tiny negative noise is clamped
    np.testing.assert_allclose(psd_sqrt(np.diag([1.0, -1e-10])), np.diag([1.0, 0.0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_psd_sqrt_squares_back(seed):
    rho = random_density(6, np.random.default_rng(seed))
    r = psd_sqrt(rho)
    assert np.max(np.abs(r @ r - rho)) <= 1e-10
