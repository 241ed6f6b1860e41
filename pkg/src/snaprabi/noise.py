"""Per-gate Kraus channels: qubit dephasing, qubit amplitude loss, boson loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument
from .hilbert import (MODE1, MODE2, QUBIT, DensityState, Operator, SpaceDescriptor,
                      apply_unitary)


@dataclass(frozen=True)
class NoiseModel:
    """Constant per-gate error levels.

    ``d_eta`` is the boson transmissivity per gate (loss fraction ``1 - d_eta``).
    The qubit ground state is basis index 0.
    """

    dq: float = 0.0
    dr: float = 0.0
    d_eta: float = 1.0
    losses_apply_to: tuple[str, ...] = (MODE1, MODE2)
    noise_rabi_only: bool = False

    def __post_init__(self):
        if not 0 <= self.dq <= 1:
            raise InvalidArgument(f"dq={self.dq} outside [0, 1]")
        if not 0 <= self.dr <= 1:
            raise InvalidArgument(f"dr={self.dr} outside [0, 1]")
        if not 0 < self.d_eta <= 1:
            raise InvalidArgument(f"d_eta={self.d_eta} outside (0, 1]")
        object.__setattr__(self, "losses_apply_to", tuple(self.losses_apply_to))
        for m in self.losses_apply_to:
            if m not in (MODE1, MODE2):
                raise InvalidArgument(f"loss mode {m!r} is not an oscillator")

    @property
    def is_trivial(self) -> bool:
        return self.dq == 0 and self.dr == 0 and self.d_eta == 1

    def applies_to(self, noise_class: str) -> bool:
        if self.noise_rabi_only:
            return noise_class == "rabi"
        return noise_class != "none"

    def apply(self, state: DensityState) -> DensityState:
        """All channels of this model, qubit first, then each lossy mode."""
        if state.kind == "block_factor":
            state = state.to_blocks(state.block_label)
        if QUBIT in state.space:
            if self.dq:
                state = qubit_dephasing(state, self.dq)
            if self.dr:
                state = qubit_loss(state, self.dr)
        if self.d_eta != 1:
            for m in self.losses_apply_to:
                if m in state.space:
                    state = boson_loss(state, self.d_eta, m)
        return state


def _add(states: list[DensityState], weights) -> DensityState:
    first = states[0]
    if first.kind == "factor":
        f = np.concatenate([np.sqrt(w) * s.factor for s, w in zip(states, weights)], axis=1)
        return DensityState(first.space, factor=f, check=False)
    if first.kind == "block_factor":
        f = np.concatenate([np.sqrt(w) * s.block_factors for s, w in zip(states, weights)], axis=2)
        return DensityState(first.space, block_factors=f, block_label=first.block_label,
                            check=False)
    if first.kind == "blocks":
        b = sum(w * s.blocks for s, w in zip(states, weights))
        return DensityState(first.space, blocks=b, block_label=first.block_label, check=False)
    m = sum(w * s.matrix for s, w in zip(states, weights))
    return DensityState(first.space, m, check=False)


def kraus_channel(state: DensityState, kraus: list[Operator]) -> DensityState:
    """Σ_k K ρ K† for operators on a subset of the state's space."""
    outs = [apply_unitary(k, state) for k in kraus]
    kinds = {o.kind for o in outs}
    if len(kinds) > 1:
        outs = [DensityState(o.space, o.matrix, check=False) for o in outs]
    return _add(outs, [1.0] * len(outs))


def _qubit_op(m) -> Operator:
    return Operator(SpaceDescriptor(((QUBIT, 2),)), np.asarray(m, dtype=complex))


def qubit_dephasing(state: DensityState, dq: float) -> DensityState:
    """ρ → (1 - dq)ρ + dq·ZρZ."""
    if not 0 <= dq <= 1:
        raise InvalidArgument(f"dq={dq} outside [0, 1]")
    if dq == 0:
        return state
    return kraus_channel(state, [_qubit_op(np.sqrt(1 - dq) * np.eye(2)),
                                 _qubit_op(np.sqrt(dq) * np.diag([1.0, -1.0]))])


def qubit_loss(state: DensityState, dr: float) -> DensityState:
    """Amplitude damping of the qubit toward basis state 0."""
    if not 0 <= dr <= 1:
        raise InvalidArgument(f"dr={dr} outside [0, 1]")
    if dr == 0:
        return state
    k0 = np.diag([1.0, np.sqrt(1 - dr)])
    k1 = np.array([[0.0, np.sqrt(dr)], [0.0, 0.0]])
    return kraus_channel(state, [_qubit_op(k0), _qubit_op(k1)])


def loss_coefficients(eta: float, cutoff: int) -> list[np.ndarray]:
    """``c[l][m]`` with K_l|m+l⟩ = c[l][m]|m⟩, K_l = √((1-η)^l/l!)·η^{n/2}·a^l."""
    out = []
    for l in range(cutoff):
        m = np.arange(cutoff - l)
        if eta == 1:
            c = np.ones(len(m)) if l == 0 else np.zeros(len(m))
        else:
            logc = (gammaln(m + l + 1) - gammaln(m + 1) - gammaln(l + 1)
                    + l * np.log1p(-eta) + m * np.log(eta))
            c = np.exp(0.5 * logc)
        out.append(c)
    return out


def loss_kraus(eta: float, cutoff: int) -> list[np.ndarray]:
    """Dense Kraus matrices of the loss channel on ``cutoff`` levels."""
    mats = []
    for l, c in enumerate(loss_coefficients(eta, cutoff)):
        k = np.zeros((cutoff, cutoff))
        k[np.arange(cutoff - l), np.arange(l, cutoff)] = c
        mats.append(k)
    return mats


def _shift_sum(arr, ax_l, ax_r, coeffs):
    """Σ_l c_l ⊗ c_l applied on the (ax_l, ax_r) index pair of ``arr``."""
    a = np.moveaxis(arr, [ax_l, ax_r], [0, 1])
    d = a.shape[0]
    out = np.zeros_like(a)
    extra = (1,) * (a.ndim - 2)
    for l, c in enumerate(coeffs):
        if not c.any():
            continue
        w = (c[:, None] * c[None, :]).reshape((d - l, d - l) + extra)
        out[: d - l, : d - l] += w * a[l:, l:]
    return np.moveaxis(out, [0, 1], [ax_l, ax_r])


def boson_loss(state: DensityState, eta: float, mode: str) -> DensityState:
    """Pure-loss channel with transmissivity ``eta`` on one oscillator."""
    if not 0 < eta <= 1:
        raise InvalidArgument(f"eta={eta} outside (0, 1]")
    if mode == QUBIT:
        raise InvalidArgument("boson loss needs an oscillator mode")
    space = state.space
    d = space.dim_of(mode)
    if eta == 1:
        return state
    coeffs = loss_coefficients(eta, d)
    if state.kind == "block_factor":
        state = state.to_blocks(state.block_label)
    if state.kind == "factor":
        local = SpaceDescriptor(((mode, d),))
        return kraus_channel(state, [Operator(local, k) for k in loss_kraus(eta, d)])
    if state.kind == "blocks":
        b = state.blocks
        if state.block_label == mode:
            out = np.zeros_like(b)
            for l, c in enumerate(coeffs):
                out[: d - l] += (c ** 2)[:, None, None] * b[l:]
            return DensityState(space, blocks=out, block_label=mode, check=False)
        rest = space.without([state.block_label])
        kr = len(rest.dims)
        arr = b.reshape((b.shape[0],) + rest.dims * 2)
        i = rest.index(mode)
        arr = _shift_sum(arr, 1 + i, 1 + kr + i, coeffs)
        return DensityState(space, blocks=arr.reshape(b.shape), block_label=state.block_label,
                            check=False)
    k = len(space.dims)
    arr = state.matrix.reshape(space.dims * 2)
    i = space.index(mode)
    arr = _shift_sum(arr, i, k + i, coeffs)
    return DensityState(space, arr.reshape(space.dim, space.dim), check=False)


def choi_matrix(channel, space: SpaceDescriptor) -> np.ndarray:
    """Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|) of a linear map on ``space``."""
    d = space.dim
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1
            phi = channel(DensityState(space, e, check=False)).matrix
            out[i * d:(i + 1) * d, j * d:(j + 1) * d] = phi
    return out
