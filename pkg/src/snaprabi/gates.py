"""Primitive unitaries used by the sequences, and the ideal targets.

Every constructor takes the full simulation ``space`` so it can read the Fock
cutoffs; the returned :class:`Gate` acts only on the subsystems it needs.
Oscillator-number-conditioned gates are built in controlled (block) form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InvalidArgument
from .hilbert import (MODE1, MODE2, QUBIT, Operator, SpaceDescriptor, fock_operators,
                      herm_expm, pauli)

NOISE_CLASSES = ("rabi", "snap", "dispersive", "kerr", "gaussian", "none")


@dataclass(frozen=True)
class Gate:
    unitary: Operator
    resource_strength: float
    noise_class: str
    label: str

    def __post_init__(self):
        if not self.unitary.unitary:
            raise InvalidArgument(f"gate {self.label!r} is not flagged unitary")
        r = self.resource_strength
        if not np.isfinite(r) or r < 0:
            raise InvalidArgument(f"bad resource strength {r!r}")
        if self.noise_class not in NOISE_CLASSES:
            raise InvalidArgument(f"unknown noise class {self.noise_class!r}")

    @property
    def support(self):
        return self.unitary.support


def _oscillator(space: SpaceDescriptor, mode: str) -> int:
    if mode == QUBIT or mode not in space:
        raise InvalidArgument(f"{mode!r} is not an oscillator of {space.labels}")
    return space.dim_of(mode)


def quadrature_power(cutoff: int, power: int) -> np.ndarray:
    return np.linalg.matrix_power(fock_operators(cutoff)["position"], power)


def _qubit_mode_generator(space, mode, qubit_part: np.ndarray, mode_part: np.ndarray) -> Operator:
    local = space.restrict([QUBIT, mode])
    if local.labels[0] == QUBIT:
        m = np.kron(qubit_part, mode_part)
    else:
        m = np.kron(mode_part, qubit_part)
    return Operator(local, m, hermitian=True)


def _number_controlled(space, mode, per_level) -> Operator:
    """exp(i·per_level(n)) with per_level(n) a 2×2 qubit Hermitian matrix."""
    d = _oscillator(space, mode)
    local = space.restrict([QUBIT, mode])
    blocks = np.stack([per_level(n) for n in range(d)])
    return Operator(local, control=mode, blocks=blocks, hermitian=True)


def rabi_gate(strength: float, pauli_axis: str, mode: str, space: SpaceDescriptor) -> Gate:
    """exp(i·strength·σ_axis·X_mode)."""
    d = _oscillator(space, mode)
    gen = _qubit_mode_generator(space, mode, pauli(pauli_axis).matrix, quadrature_power(d, 1))
    return Gate(herm_expm(gen, strength), abs(strength), "rabi",
                f"rabi_{pauli_axis}[{mode}]({strength:.6g})")


def second_order_rabi(strength: float, mode: str, space: SpaceDescriptor,
                      pauli_axis: str = "x") -> Gate:
    """exp(i·strength·σ_axis·X²_mode)."""
    d = _oscillator(space, mode)
    gen = _qubit_mode_generator(space, mode, pauli(pauli_axis).matrix, quadrature_power(d, 2))
    return Gate(herm_expm(gen, strength), abs(strength), "rabi",
                f"rabi2_{pauli_axis}[{mode}]({strength:.6g})")


def projected_rabi(strength: float, sign: int, mode: str, space: SpaceDescriptor,
                   power: int = 1) -> Gate:
    """exp(i·strength·(1 + sign·σ_x)/2·X^power).

    Only the σ_x half consumes coupling, so the resource is |strength|/2.
    """
    if sign not in (1, -1):
        raise InvalidArgument("sign must be ±1")
    d = _oscillator(space, mode)
    proj = (np.eye(2) + sign * pauli("x").matrix) / 2
    gen = _qubit_mode_generator(space, mode, proj, quadrature_power(d, power))
    return Gate(herm_expm(gen, strength), abs(strength) / 2, "rabi",
                f"prabi{'+' if sign > 0 else '-'}^{power}[{mode}]({strength:.6g})")


def dispersive_gate(strength: float, pauli_axis: str, mode: str, space: SpaceDescriptor) -> Gate:
    """exp(i·strength·σ_axis·n_mode), controlled on the oscillator number."""
    s = pauli(pauli_axis).matrix
    gen = _number_controlled(space, mode, lambda n: n * s)
    return Gate(herm_expm(gen, strength), abs(strength), "dispersive",
                f"disp_{pauli_axis}[{mode}]({strength:.6g})")


def snap_flip(fock_n: int, sign: int, mode: str, space: SpaceDescriptor) -> Gate:
    """exp(sign·i·(π/2)·Π_n·σ_z): a selective qubit π rotation on Fock level n."""
    d = _oscillator(space, mode)
    if not 0 <= fock_n < d:
        raise InvalidArgument(f"fock_n={fock_n} outside cutoff {d} of {mode}")
    return _snap({fock_n}, sign, mode, space, np.pi, f"snap{'+' if sign > 0 else '-'}[{mode}]({fock_n})")


def collective_snap(levels, sign: int, mode: str, space: SpaceDescriptor,
                    resource: float = 0.0) -> Gate:
    """exp(sign·i·(π/2)·Σ_{n∈levels} Π_n·σ_z)."""
    levels = set(int(n) for n in levels)
    d = _oscillator(space, mode)
    if any(not 0 <= n < d for n in levels):
        raise InvalidArgument("collective snap level outside cutoff")
    return _snap(levels, sign, mode, space, resource,
                 f"snapall{'+' if sign > 0 else '-'}[{mode}]({len(levels)})")


def _snap(levels, sign, mode, space, resource, label) -> Gate:
    if sign not in (1, -1):
        raise InvalidArgument("sign must be ±1")
    d = _oscillator(space, mode)
    rot = np.diag([np.exp(1j * sign * np.pi / 2), np.exp(-1j * sign * np.pi / 2)])
    blocks = np.stack([rot if n in levels else np.eye(2, dtype=complex) for n in range(d)])
    op = Operator(space.restrict([QUBIT, mode]), control=mode, blocks=blocks, unitary=True)
    return Gate(op, resource, "snap", label)


def gaussian_gate(kind: str, parameter, mode: str, space: SpaceDescriptor) -> Gate:
    """Single-mode displacement or squeezing.

    ``displacement`` with real α is exp(iαP), so exp(iαP)·X·exp(-iαP) = X + α.
    A complex α gives exp(α b† - α* b) instead. ``squeezing`` with real r is
    exp((r/2)b†² - (r/2)b²), the sign for which S[-r]·X·S[r] = e^r·X.
    """
    d = _oscillator(space, mode)
    ops = fock_operators(d)
    a, ad = ops["annihilation"], ops["creation"]
    local = space.restrict([mode])
    if kind == "displacement":
        alpha = complex(parameter)
        if alpha.imag == 0:
            gen, scale = ops["momentum"], alpha.real
        else:
            # α b† - α* b = i·G with G Hermitian
            gen, scale = -1j * (alpha * ad - np.conj(alpha) * a), 1.0
        mag = abs(alpha)
    elif kind == "squeezing":
        r = float(parameter)
        gen, scale = -1j * (ad @ ad - a @ a) / 2, r
        mag = abs(r)
    else:
        raise InvalidArgument(f"unknown gaussian gate kind {kind!r}")
    op = herm_expm(Operator(local, gen, hermitian=True), scale)
    return Gate(op, mag, "gaussian", f"{kind}[{mode}]({parameter})")


def phase_rotation(strength: float, mode: str, space: SpaceDescriptor) -> Gate:
    """exp(i·strength·n_mode); a free local rotation, costs no coupling."""
    d = _oscillator(space, mode)
    op = Operator(space.restrict([mode]), control=mode,
                  blocks=np.exp(1j * strength * np.arange(d))[:, None, None], unitary=True)
    return Gate(op, 0.0, "none", f"phase[{mode}]({strength:.6g})")


def cross_kerr(strength: float, space: SpaceDescriptor) -> Gate:
    """exp(i·strength·n_1·n_2), diagonal in the joint Fock basis."""
    d1, d2 = _oscillator(space, MODE1), _oscillator(space, MODE2)
    n1 = np.arange(d1)[:, None]
    n2 = np.arange(d2)[None, :]
    ph = np.exp(1j * strength * n1 * n2)
    blocks = ph[:, :, None] * np.eye(d2)[None]
    op = Operator(space.restrict([MODE1, MODE2]), control=MODE1, blocks=blocks, unitary=True)
    return Gate(op, abs(strength), "kerr", f"xkerr({strength:.6g})")


def quadrature_eigensystem(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and real orthogonal eigenvectors of the truncated X."""
    off = np.sqrt(np.arange(1, cutoff, dtype=float) / 2)
    return eigh_tridiagonal(np.zeros(cutoff), off)


def _diagonal_form(k: int, l: int, space: SpaceDescriptor):
    d1, d2 = _oscillator(space, MODE1), _oscillator(space, MODE2)
    w, v = quadrature_eigensystem(d2)
    # X^l shares X's eigenvectors exactly: V·diag(w^l)·Vᵀ
    gen = (np.arange(d1, dtype=float) ** k)[:, None] * (w ** l)[None, :]
    return v, gen


def target_generator(k: int, l: int, space: SpaceDescriptor) -> Operator:
    """n_1^k · X_2^l in controlled form."""
    if k < 0 or l < 0:
        raise InvalidArgument("k and l must be non-negative")
    v, gen = _diagonal_form(k, l, space)
    return Operator(space.restrict([MODE1, MODE2]), control=MODE1, basis=v, phases=gen,
                    hermitian=True)


def ideal_target(k: int, l: int, strength: float, space: SpaceDescriptor) -> Gate:
    """exp(i·T·n_1^k·X_2^l): the interaction every sequence approximates."""
    if k < 1 or l < 1:
        raise InvalidArgument("ideal_target needs k, l >= 1")
    v, gen = _diagonal_form(k, l, space)
    op = Operator(space.restrict([MODE1, MODE2]), control=MODE1, basis=v,
                  phases=np.exp(1j * strength * gen), unitary=True)
    return Gate(op, 0.0, "none", f"ideal_U{k}{l}({strength:.6g})")
