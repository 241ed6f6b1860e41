import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snaprabi.errors import InvalidArgument
from snaprabi.hilbert import (MODE1, MODE2, QUBIT, DensityState, SpaceDescriptor, as_factor,
                              blocks_to_block_factor)
from snaprabi.noise import (NoiseModel, boson_loss, choi_matrix, loss_kraus, qubit_dephasing,
                            qubit_loss)
from snaprabi.states import StateSpec, compose, make_state


def random_density(dim, rng, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def verbatim_loss(rho, eta, d):
    """Σ_l ((1-η)^l/l!) η^{n/2} a^l ρ a^{†l} η^{n/2}, summed with dense matrices."""
    a = np.diag(np.sqrt(np.arange(1, d)), 1)
    damp = np.diag(eta ** (np.arange(d) / 2))
    out = np.zeros_like(rho)
    al = np.eye(d)
    for l in range(d):
        k = damp @ al
        out += (1 - eta) ** l / math.factorial(l) * k @ rho @ k.conj().T
        al = al @ a
    return out


def hybrid_state(rng, d1=3, d2=3):
    space = SpaceDescriptor.hybrid(d1, d2)
    return DensityState(space, random_density(space.dim, rng))


# -- qubit channels --------------------------------------------------------------

def test_dephasing_limits():
    rng = np.random.default_rng(0)
    s = hybrid_state(rng)
    np.testing.assert_allclose(qubit_dephasing(s, 0.0).matrix, s.matrix)
    plus = DensityState.pure(SpaceDescriptor(((QUBIT, 2),)), np.array([1, 1]) / np.sqrt(2))
    np.testing.assert_allclose(qubit_dephasing(plus, 0.5).matrix, np.eye(2) / 2, atol=1e-15)
    diag = DensityState(SpaceDescriptor(((QUBIT, 2),)), np.diag([0.3, 0.7]))
    np.testing.assert_allclose(qubit_dephasing(diag, 0.4).matrix, diag.matrix, atol=1e-15)


def test_dephasing_formula():
    rng = np.random.default_rng(1)
    s = hybrid_state(rng)
    z = np.kron(np.diag([1, -1]), np.eye(9))
    expected = 0.7 * s.matrix + 0.3 * z @ s.matrix @ z
    np.testing.assert_allclose(qubit_dephasing(s, 0.3).matrix, expected, atol=1e-14)


def test_qubit_loss_limits():
    rng = np.random.default_rng(2)
    s = hybrid_state(rng)
    np.testing.assert_allclose(qubit_loss(s, 0.0).matrix, s.matrix)
    out = qubit_loss(s, 1.0).matrix.reshape(2, 9, 2, 9)
    # everything decays to basis state 0; the oscillators keep their reduced state
    assert np.max(np.abs(out[1, :, :, :])) < 1e-15
    osc = s.matrix.reshape(2, 9, 2, 9)
    np.testing.assert_allclose(out[0, :, 0, :], osc[0, :, 0, :] + osc[1, :, 1, :], atol=1e-14)


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_qubit_channel_ranges(bad):
    s = hybrid_state(np.random.default_rng(3))
    with pytest.raises(InvalidArgument):
        qubit_dephasing(s, bad)
    with pytest.raises(InvalidArgument):
        qubit_loss(s, bad)


# -- boson loss ------------------------------------------------------------------

def test_boson_loss_identity_and_range():
    s = hybrid_state(np.random.default_rng(4))
    np.testing.assert_allclose(boson_loss(s, 1.0, MODE1).matrix, s.matrix)
    for bad in (0.0, 1.2):
        with pytest.raises(InvalidArgument):
            boson_loss(s, bad, MODE2)
    with pytest.raises(InvalidArgument):
        boson_loss(s, 0.5, QUBIT)


def test_loss_kraus_matches_verbatim_sum():
    rng = np.random.default_rng(5)
    d, eta = 7, 0.63
    rho = random_density(d, rng)
    out = sum(k @ rho @ k.T for k in loss_kraus(eta, d))
    np.testing.assert_allclose(out, verbatim_loss(rho, eta, d), atol=1e-14)


def test_boson_loss_on_embedded_mode_matches_verbatim():
    rng = np.random.default_rng(6)
    space = SpaceDescriptor.hybrid(3, 4)
    s = DensityState(space, random_density(space.dim, rng))
    eta = 0.8
    out = boson_loss(s, eta, MODE2).matrix
    r = s.matrix.reshape(6, 4, 6, 4)
    expected = np.zeros_like(r)
    for i in range(6):
        for j in range(6):
            expected[i, :, j, :] = verbatim_loss(r[i, :, j, :], eta, 4)
    np.testing.assert_allclose(out, expected.reshape(24, 24), atol=1e-14)


def test_coherent_loss_closed_form():
    d, eta, beta = 40, 0.6, 1.2 + 0.5j
    s = make_state(StateSpec("coherent", amplitude=beta), d)
    out = boson_loss(s, eta, MODE1).matrix
    expected = make_state(StateSpec("coherent", amplitude=np.sqrt(eta) * beta), d).matrix
    np.testing.assert_allclose(out, expected, atol=1e-8)


def test_thermal_loss_closed_form():
    d, eta, nbar = 120, 0.7, 2.0
    s = make_state(StateSpec("thermal", mean_quanta=nbar), d)
    out = boson_loss(s, eta, MODE1).matrix
    expected = make_state(StateSpec("thermal", mean_quanta=eta * nbar), d).matrix
    np.testing.assert_allclose(out, expected, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), e1=st.floats(0.05, 1.0), e2=st.floats(0.05, 1.0))
def test_boson_loss_composes(seed, e1, e2):
    rng = np.random.default_rng(seed)
    s = DensityState(SpaceDescriptor(((MODE1, 6),)), random_density(6, rng))
    twice = boson_loss(boson_loss(s, e1, MODE1), e2, MODE1).matrix
    once = boson_loss(s, e1 * e2, MODE1).matrix
    assert np.max(np.abs(twice - once)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.floats(0.05, 1.0))
def test_boson_loss_modes_commute(seed, eta):
    rng = np.random.default_rng(seed)
    s = DensityState(SpaceDescriptor.oscillators(3, 4), random_density(12, rng))
    a = boson_loss(boson_loss(s, eta, MODE1), eta, MODE2).matrix
    b = boson_loss(boson_loss(s, eta, MODE2), eta, MODE1).matrix
    assert np.max(np.abs(a - b)) <= 1e-12


# -- channel properties ----------------------------------------------------------

CHANNELS = {
    "dephasing": lambda s: qubit_dephasing(s, 0.3),
    "qubit_loss": lambda s: qubit_loss(s, 0.4),
    "loss_mode1": lambda s: boson_loss(s, 0.7, MODE1),
    "loss_mode2": lambda s: boson_loss(s, 0.55, MODE2),
}


@pytest.mark.parametrize("name", sorted(CHANNELS))
def test_channels_completely_positive(name):
    space = SpaceDescriptor.hybrid(2, 2)
    choi = choi_matrix(CHANNELS[name], space)
    assert np.linalg.eigvalsh(choi).min() >= -1e-12
    # trace preservation: Tr_out of the Choi matrix is the identity
    d = space.dim
    reduced = np.einsum("iaja->ij", choi.reshape(d, d, d, d))
    np.testing.assert_allclose(reduced, np.eye(d), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(sorted(CHANNELS)))
def test_channels_trace_preserving(seed, name):
    s = hybrid_state(np.random.default_rng(seed))
    assert abs(CHANNELS[name](s).trace() - 1) <= 1e-10


# -- noise model -----------------------------------------------------------------

def test_noise_model_validation():
    for kwargs in ({"dq": -0.1}, {"dr": 2.0}, {"d_eta": 0.0}, {"losses_apply_to": ("qubit",)}):
        with pytest.raises(InvalidArgument):
            NoiseModel(**kwargs)
    assert NoiseModel().is_trivial
    assert not NoiseModel(d_eta=0.99).is_trivial


def test_noise_placement_flag():
    every = NoiseModel(dq=0.1)
    rabi_only = NoiseModel(dq=0.1, noise_rabi_only=True)
    assert every.applies_to("snap") and every.applies_to("rabi")
    assert not every.applies_to("none")
    assert rabi_only.applies_to("rabi") and not rabi_only.applies_to("snap")


def test_noise_model_storage_forms_agree():
    d1, d2 = 8, 8
    q = make_state(StateSpec("qubit_eigenstate", qubit_axis="x", qubit_sign=-1))
    s = compose(q, make_state(StateSpec("prc", mean_quanta=0.3), d1),
                make_state(StateSpec("coherent", amplitude=0.4), d2, MODE2))
    model = NoiseModel(dq=0.05, dr=0.02, d_eta=0.9)
    expected = model.apply(DensityState(s.space, s.matrix)).matrix
    for form in (s, s.to_blocks(MODE1), blocks_to_block_factor(s.to_blocks(MODE1)), as_factor(s)):
        np.testing.assert_allclose(model.apply(form).matrix, expected, atol=1e-13)


def test_noise_model_losses_restricted_to_listed_modes():
    rng = np.random.default_rng(9)
    s = DensityState(SpaceDescriptor.oscillators(3, 3), random_density(9, rng))
    only2 = NoiseModel(d_eta=0.5, losses_apply_to=(MODE2,)).apply(s).matrix
    np.testing.assert_allclose(only2, boson_loss(s, 0.5, MODE2).matrix, atol=1e-14)
