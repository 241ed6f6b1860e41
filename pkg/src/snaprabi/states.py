"""Input-state factories.

Random sampling uses ``numpy.random.Generator(PCG64(seed))``; PCG64 streams
are specified bit-for-bit by numpy, so a seed reproduces the same state on
every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import CutoffTooSmall, InvalidArgument
from .hilbert import MODE1, MODE2, QUBIT, DensityState, SpaceDescriptor

LEAKAGE_TOL = 1e-8

KINDS = ("coherent", "phase_randomized_coherent", "thermal", "fock",
         "random_superposition", "qubit_eigenstate", "vacuum")
_ALIASES = {"prc": "phase_randomized_coherent"}


@dataclass(frozen=True)
class StateSpec:
    kind: str
    amplitude: complex | None = None
    mean_quanta: float | None = None
    fock_n: int = 0
    qubit_axis: str = "z"
    qubit_sign: int = 1
    seed: int = 0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise InvalidArgument(f"unknown state kind {self.kind!r}")
        if self.mean_quanta is not None and self.mean_quanta < 0:
            raise InvalidArgument("mean_quanta must be >= 0")
        if self.fock_n < 0:
            raise InvalidArgument("fock_n must be >= 0")
        if kind == "qubit_eigenstate":
            if self.qubit_axis not in ("x", "y", "z") or self.qubit_sign not in (1, -1):
                raise InvalidArgument("qubit eigenstate needs axis in x,y,z and sign ±1")

    @property
    def beta(self) -> complex:
        """Coherent amplitude, from ``amplitude`` or else ``sqrt(mean_quanta)``."""
        if self.amplitude is not None:
            return complex(self.amplitude)
        if self.mean_quanta is None:
            raise InvalidArgument(f"{self.kind} state needs amplitude or mean_quanta")
        return complex(np.sqrt(self.mean_quanta))

    @property
    def nbar(self) -> float:
        if self.kind == "thermal":
            if self.mean_quanta is None:
                raise InvalidArgument("thermal state needs mean_quanta")
            return float(self.mean_quanta)
        if self.kind in ("coherent", "phase_randomized_coherent"):
            return abs(self.beta) ** 2
        if self.kind == "fock":
            return float(self.fock_n)
        if self.kind == "vacuum":
            return 0.0
        raise InvalidArgument(f"no mean occupation defined for {self.kind}")


def qubit_state(axis: str, sign: int) -> np.ndarray:
    """Eigenvector of σ_axis with eigenvalue ``sign`` (|0⟩ = σ_z = +1)."""
    s = 1 / np.sqrt(2)
    vecs = {
        ("z", 1): [1, 0], ("z", -1): [0, 1],
        ("x", 1): [s, s], ("x", -1): [s, -s],
        ("y", 1): [s, 1j * s], ("y", -1): [s, -1j * s],
    }
    return np.array(vecs[(axis, sign)], dtype=complex)


def poisson_weights(nbar: float, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff)
    if nbar == 0:
        return (n == 0).astype(float)
    return np.exp(-nbar + n * np.log(nbar) - gammaln(n + 1))


def thermal_weights(nbar: float, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff)
    if nbar == 0:
        return (n == 0).astype(float)
    return (nbar / (nbar + 1)) ** n / (nbar + 1)


def _check_leakage(kept: float, what: str, cutoff: int):
    if 1 - kept > LEAKAGE_TOL:
        raise CutoffTooSmall(f"{what} loses {1 - kept:.2e} of its trace at cutoff {cutoff}")


def make_state(spec: StateSpec, cutoff: int | None = None, label: str = MODE1) -> DensityState:
    """Single-subsystem state described by ``spec`` on ``cutoff`` Fock levels."""
    if spec.kind == "qubit_eigenstate":
        space = SpaceDescriptor(((QUBIT if label == MODE1 else label, 2),))
        return DensityState.pure(space, qubit_state(spec.qubit_axis, spec.qubit_sign))
    if cutoff is None or cutoff < 1:
        raise InvalidArgument("oscillator states need a positive cutoff")
    space = SpaceDescriptor(((label, cutoff),))
    kind = spec.kind
    if kind == "vacuum":
        v = np.zeros(cutoff, complex)
        v[0] = 1
        return DensityState.pure(space, v)
    if kind == "fock":
        if spec.fock_n >= cutoff:
            raise InvalidArgument(f"fock_n={spec.fock_n} needs cutoff > {spec.fock_n}")
        v = np.zeros(cutoff, complex)
        v[spec.fock_n] = 1
        return DensityState.pure(space, v)
    if kind in ("phase_randomized_coherent", "thermal"):
        if kind == "thermal":
            w = thermal_weights(spec.nbar, cutoff)
        else:
            w = poisson_weights(abs(spec.beta) ** 2, cutoff)
        _check_leakage(w.sum(), kind, cutoff)
        w = w / w.sum()
        return DensityState(space, blocks=w[:, None, None], block_label=label)
    if kind == "coherent":
        beta = spec.beta
        n = np.arange(cutoff)
        amp = np.sqrt(poisson_weights(abs(beta) ** 2, cutoff)) * np.exp(1j * np.angle(beta) * n)
        _check_leakage(float(np.sum(np.abs(amp) ** 2)), kind, cutoff)
        return DensityState.pure(space, amp)
    if kind == "random_superposition":
        return random_superposition(spec.seed, cutoff, label=label)
    raise InvalidArgument(f"unsupported kind {kind!r}")


def superposition_coefficients(seed: int, cutoff: int) -> np.ndarray:
    """Raw ``c_n`` draws, each part U[-1, 1].

    Level ``n`` takes draws ``2n`` and ``2n+1``, so a larger cutoff extends
    the same state instead of resampling it.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    parts = rng.uniform(-1.0, 1.0, (cutoff, 2))
    return parts[:, 0] + 1j * parts[:, 1]


def random_superposition(seed: int, cutoff: int, label: str = MODE1,
                         coefficients=None) -> DensityState:
    """Pure state ``Σ_n e^{-n/2} c_n |n⟩`` normalised after truncation.

    ``coefficients`` overrides the random draw (used to test the weighting).
    """
    if cutoff < 4:
        raise InvalidArgument("random_superposition needs cutoff >= 4")
    c = superposition_coefficients(seed, cutoff) if coefficients is None else \
        np.asarray(coefficients, dtype=complex)
    v = np.exp(-np.arange(cutoff) / 2) * c
    return DensityState.pure(SpaceDescriptor(((label, cutoff),)), v)


def compose(qubit: DensityState | None, mode1: DensityState, mode2: DensityState) -> DensityState:
    """Tensor product in the fixed order qubit ⊗ mode1 ⊗ mode2.

    The qubit may be None for oscillator-only spaces. Subsystems are
    relabelled to the canonical labels; mode1 block structure is kept when
    the other factors allow it.
    """
    parts = [(QUBIT, qubit), (MODE1, mode1), (MODE2, mode2)]
    parts = [(l, s) for l, s in parts if s is not None]
    for l, s in parts:
        if len(s.space.labels) != 1:
            raise InvalidArgument(f"compose expects single-subsystem factors, got {s.space}")
    space = SpaceDescriptor(tuple((l, s.space.dim) for l, s in parts))
    if all(s.kind == "factor" for _, s in parts):
        f = parts[0][1].factor
        for _, s in parts[1:]:
            f = np.einsum("ia,jb->ijab", f, s.factor).reshape(f.shape[0] * s.factor.shape[0], -1)
        return DensityState(space, factor=f)
    others = [s for l, s in parts if l != MODE1]
    if mode1.kind == "blocks" and others and all(s.kind == "factor" for s in others):
        # ρ = Σ_n |n⟩⟨n|_1 ⊗ w_n·F F†, with F the factor of the other subsystems
        f = others[0].factor
        for s in others[1:]:
            f = np.einsum("ia,jb->ijab", f, s.factor).reshape(f.shape[0] * s.factor.shape[0], -1)
        w = np.clip(mode1.blocks[:, 0, 0].real, 0.0, None)
        return DensityState(space, block_factors=np.sqrt(w)[:, None, None] * f[None],
                            block_label=MODE1)
    if mode1.kind == "blocks":
        # ρ = Σ_n |n⟩⟨n|_1 ⊗ (w_n · ρ_q ⊗ ρ_2): build on (mode1 | rest)
        rest = [s.matrix for l, s in parts if l != MODE1]
        r = rest[0]
        for m in rest[1:]:
            r = np.kron(r, m)
        w = mode1.blocks[:, 0, 0]
        return DensityState(space, blocks=w[:, None, None] * r[None], block_label=MODE1)
    m = parts[0][1].matrix
    for _, s in parts[1:]:
        m = np.kron(m, s.matrix)
    return DensityState(space, m)


def mean_number(state: DensityState) -> float:
    """⟨n⟩ of a single-mode state."""
    if len(state.space.labels) != 1:
        raise InvalidArgument("mean_number expects a single-mode state")
    n = np.arange(state.space.dim)
    if state.kind in ("blocks", "block_factor"):
        p = np.trace(state.dense_blocks(), axis1=1, axis2=2).real
    elif state.kind == "factor":
        p = np.sum(np.abs(state.factor) ** 2, axis=1)
    else:
        p = np.diag(state.matrix).real
    return float(np.dot(n, p))
