"""Gate-sequence builders for every simulation strategy, and the executor.

A :class:`GateSequence` lists gates in *application* order: ``gates[0]`` acts
first. Operator products written left to right (last factor acts first) are
therefore reversed when they are turned into a sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProjection, InvalidArgument
from .gates import (Gate, collective_snap, cross_kerr, dispersive_gate, gaussian_gate,
                    ideal_target, phase_rotation, projected_rabi, quadrature_power, rabi_gate,
                    second_order_rabi, snap_flip)
from .hilbert import (MODE1, MODE2, QUBIT, DensityState, Operator, SpaceDescriptor,
                      apply_unitary, as_factor, blocks_to_block_factor, embed, herm_expm, lift,
                      partial_trace, pauli)
from .noise import NoiseModel
from .states import StateSpec, qubit_state

DISPOSALS = ("trace_out", "project")
PROJECTION_TOL = 1e-12


@dataclass(frozen=True)
class GateSequence:
    """Ordered gates plus the qubit preparation and disposal policy.

    ``target`` is ``(k, l, T)`` when the sequence approximates
    ``ideal_target(k, l, T)``; ``None`` for qubit-level identities.
    """

    gates: tuple[Gate, ...]
    qubit_prep: StateSpec | None
    qubit_disposal: str | None
    method_label: str
    space: SpaceDescriptor
    target: tuple[int, int, float] | None = None
    total_resource: float = field(init=False)

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        if not gates:
            raise InvalidArgument("a gate sequence needs at least one gate")
        if self.qubit_prep is not None:
            if QUBIT not in self.space:
                raise InvalidArgument("qubit preparation given but the space has no qubit")
            if self.qubit_disposal not in DISPOSALS:
                raise InvalidArgument(f"qubit_disposal must be one of {DISPOSALS}")
        object.__setattr__(self, "total_resource",
                           float(sum(g.resource_strength for g in gates)))

    def __len__(self):
        return len(self.gates)

    @property
    def oscillator_space(self) -> SpaceDescriptor:
        return self.space.without([QUBIT]) if QUBIT in self.space else self.space

    def resource_breakdown(self) -> dict[str, float]:
        """Resource summed per gate noise class."""
        out: dict[str, float] = {}
        for g in self.gates:
            out[g.noise_class] = out.get(g.noise_class, 0.0) + g.resource_strength
        return out

    def disposal_for(self, noise: NoiseModel | None) -> str | None:
        """Effective disposal: projection is only exact without noise."""
        if self.qubit_prep is None:
            return None
        if noise is not None and not noise.is_trivial:
            return "trace_out"
        return self.qubit_disposal


def _require(space: SpaceDescriptor, labels):
    for label in labels:
        if label not in space:
            raise InvalidArgument(f"space {space.labels} lacks {label!r}")


def _prep(axis: str, sign: int) -> StateSpec:
    return StateSpec("qubit_eigenstate", qubit_axis=axis, qubit_sign=sign)


# --------------------------------------------------------------------------
# ideal and incremental methods
# --------------------------------------------------------------------------


def ideal_sequence(k: int, l: int, T: float, space: SpaceDescriptor) -> GateSequence:
    """The target interaction as a one-gate, qubit-free sequence."""
    osc = space.without([QUBIT]) if QUBIT in space else space
    return GateSequence((ideal_target(k, l, T, osc),), None, None, f"ideal_U{k}{l}", osc,
                        target=(k, l, float(T)))


def incremental_unit(epsilon: float, space: SpaceDescriptor, l: int = 1) -> GateSequence:
    """One dispersive–Rabi cycle ``U_x U_z U_x† U_z†``.

    Its generator to second order is ``+2ε²σ_y n_1 X_2^l``.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    if l not in (1, 2):
        raise InvalidArgument("l must be 1 or 2")
    rabi = rabi_gate if l == 1 else (lambda s, ax, m, sp: second_order_rabi(s, m, sp, ax))

    ux = rabi(epsilon, "x", MODE2, space)
    ux_dag = rabi(-epsilon, "x", MODE2, space)
    uz = dispersive_gate(epsilon, "z", MODE1, space)
    uz_dag = dispersive_gate(-epsilon, "z", MODE1, space)
    return GateSequence((uz_dag, ux_dag, uz, ux), _prep("y", 1), "trace_out",
                        "incremental_unit", space, target=(1, l, 2 * epsilon ** 2))


def incremental_generator(epsilon: float, space: SpaceDescriptor, l: int = 1) -> Operator:
    """``exp(2iε²σ_y n_1 X_2^l)`` on the full hybrid space, controlled on mode 1."""
    d1, d2 = space.dim_of(MODE1), space.dim_of(MODE2)
    loc = pauli("y").matrix
    blocks = np.stack([n * np.kron(loc, quadrature_power(d2, l)) for n in range(d1)])
    gen = Operator(space.restrict([QUBIT, MODE1, MODE2]), control=MODE1, blocks=blocks,
                   hermitian=True)
    return herm_expm(gen, 2 * epsilon ** 2)


def dispersive_rabi_method(T: float, M: int, l: int, space: SpaceDescriptor) -> GateSequence:
    """``M`` dispersive–Rabi cycles with ``ε = √(T/(2M))``; resource ``4Mε``."""
    if T < 0:
        raise InvalidArgument("dispersive_rabi_method needs T >= 0")
    if int(M) != M or M < 1:
        raise InvalidArgument("M must be a positive integer")
    eps = np.sqrt(T / (2 * M))
    unit = incremental_unit(eps, space, l)
    return GateSequence(unit.gates * int(M), unit.qubit_prep, "trace_out",
                        f"dispersive_rabi(M={M})", space, target=(1, l, float(T)))


# --------------------------------------------------------------------------
# SNAP–Rabi methods
# --------------------------------------------------------------------------


def snap_rabi_v1(T: float, N: int, space: SpaceDescriptor) -> GateSequence:
    """Selective coupling per Fock level ``n = 1…N``.

    Each level contributes ``snap(n,+)``, then ``projected_rabi(T·n, +)``,
    then ``snap(n,-)``. On the qubit ``|−⟩`` branch the result is exact for
    every level ``n ≤ N``.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    d1 = space.dim_of(MODE1)
    if int(N) != N or N < 1:
        raise InvalidArgument("N must be a positive integer")
    if N >= d1:
        raise InvalidArgument(f"N={N} must be below the mode-1 cutoff {d1}")
    gates = []
    for n in range(1, N + 1):
        gates += [snap_flip(n, 1, MODE1, space),
                  projected_rabi(T * n, 1, MODE2, space),
                  snap_flip(n, -1, MODE1, space)]
    return GateSequence(tuple(gates), _prep("x", -1), "project", f"snap_rabi_v1(N={N})", space,
                        target=(1, 1, float(T)))


def snap_rabi(T: float, N: int, k: int, l: int, include_final_snap: bool,
              space: SpaceDescriptor) -> GateSequence:
    """Improved SNAP–Rabi sequence of order ``N``.

    For ``n = 0…N-1`` a SNAP flip on level ``n`` is followed by
    ``projected_rabi(F(n)·T, -)`` with ``F(n) = 1`` (k=1) or ``2n+1`` (k=2),
    so level ``m`` collects ``m^k·T`` on the ``|−⟩`` branch. The closing
    collective SNAP returns the flipped levels to ``|−⟩``. It is a fixed
    rotation and is not counted as resource; without it the qubit is traced
    out instead of projected.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    if k not in (1, 2) or l not in (1, 2):
        raise InvalidArgument(f"(k, l) = ({k}, {l}) not supported; use k, l in {{1, 2}}")
    d1 = space.dim_of(MODE1)
    if int(N) != N or N < 1:
        raise InvalidArgument("N must be a positive integer")
    if N >= d1:
        raise InvalidArgument(f"N={N} must be below the mode-1 cutoff {d1}")
    gates = []
    for n in range(N):
        weight = 1 if k == 1 else 2 * n + 1
        gates += [snap_flip(n, 1, MODE1, space),
                  projected_rabi(weight * T, -1, MODE2, space, power=l)]
    if include_final_snap:
        gates.append(collective_snap(range(N), -1, MODE1, space))
    disposal = "project" if include_final_snap else "trace_out"
    label = f"snap_rabi(N={N},k={k},l={l}{'' if include_final_snap else ',open'})"
    return GateSequence(tuple(gates), _prep("x", -1), disposal, label, space,
                        target=(k, l, float(T)))


# --------------------------------------------------------------------------
# Kerr benchmarks (no qubit)
# --------------------------------------------------------------------------


def _oscillator_space(space: SpaceDescriptor) -> SpaceDescriptor:
    _require(space, (MODE1, MODE2))
    if QUBIT in space:
        raise InvalidArgument("Kerr sequences act on an oscillator-only space")
    return space


def kerr_linearized(t: float, alpha: float, M: int, space: SpaceDescriptor) -> GateSequence:
    """Displacement-linearised cross-Kerr, repeated ``M`` times.

    One cycle applies ``K(-t)``, ``D(-α)``, ``K(t)``, ``D(α)`` and the
    number phase ``exp(-i(α²/2)t·n_1)`` in that order, with
    ``K(t) = exp(it·n_1n_2)`` and ``D(α) = exp(iαP_2)``. Net strength ``M·t·α``.
    """
    space = _oscillator_space(space)
    if alpha <= 0:
        raise InvalidArgument("alpha must be positive")
    if int(M) != M or M < 1:
        raise InvalidArgument("M must be a positive integer")
    cycle = (cross_kerr(-t, space),
             gaussian_gate("displacement", -alpha, MODE2, space),
             cross_kerr(t, space),
             gaussian_gate("displacement", alpha, MODE2, space),
             phase_rotation(-alpha ** 2 * t / 2, MODE1, space))
    return GateSequence(cycle * int(M), None, None, f"kerr_linearized(M={M},alpha={alpha:g})",
                        space, target=(1, 1, float(M * t * alpha)))


def kerr_squeezed(t: float, r: float, space: SpaceDescriptor) -> GateSequence:
    """Squeezing-conjugated cross-Kerr approximating a ``n_1 X_2²`` coupling.

    Applies ``S(-r)``, ``K(t)``, ``S(r)``, ``K(-t·e^{2r})`` and the number
    phase ``exp(-i(t/2)(e^{2r}-1)n_1)``. With the squeezing sign fixed by
    ``S(-r)·X·S(r) = e^r·X`` the simulated strength is ``-t·sinh(2r)``.
    """
    space = _oscillator_space(space)
    gates = (gaussian_gate("squeezing", -r, MODE2, space),
             cross_kerr(t, space),
             gaussian_gate("squeezing", r, MODE2, space),
             cross_kerr(-t * np.exp(2 * r), space),
             phase_rotation(-t / 2 * (np.exp(2 * r) - 1), MODE1, space))
    return GateSequence(gates, None, None, f"kerr_squeezed(r={r:g})", space,
                        target=(1, 2, float(-t * np.sinh(2 * r))))


# --------------------------------------------------------------------------
# braiding, concatenated BCH and series syntheses
# --------------------------------------------------------------------------


def _braid(t1: float, t2: float, space) -> list[Gate]:
    # exp(-i t1 n σ_y) exp(i t2 X σ_z) exp(i t1 n σ_y), rightmost first
    return [dispersive_gate(t1, "y", MODE1, space),
            rabi_gate(t2, "z", MODE2, space),
            dispersive_gate(-t1, "y", MODE1, space)]


def braiding_conjugation(t1: float, t2: float, space: SpaceDescriptor) -> GateSequence:
    """Three gates equal to ``exp(i t2 X_2 σ_z exp(2i t1 n_1 σ_y))`` exactly."""
    _require(space, (QUBIT, MODE1, MODE2))
    return GateSequence(tuple(_braid(t1, t2, space)), _prep("z", 1), "trace_out",
                        "braiding", space)


def _composite_generator(space, coefficient, qubit_of_n, power: int = 1) -> Operator:
    """Controlled generator ``Σ_n |n⟩⟨n| ⊗ coefficient·qubit_of_n(n) ⊗ X^power``."""
    d1, d2 = space.dim_of(MODE1), space.dim_of(MODE2)
    x = quadrature_power(d2, power)
    blocks = []
    for n in range(d1):
        q = qubit_of_n(n)
        q = (q + q.conj().T) / 2
        blocks.append(coefficient * np.kron(q, x))
    return Operator(space.restrict([QUBIT, MODE1, MODE2]), control=MODE1,
                    blocks=np.stack(blocks), hermitian=True)


def _qubit_expm_y(theta: float) -> np.ndarray:
    """``exp(iθσ_y)``."""
    return np.cos(theta) * np.eye(2) + 1j * np.sin(theta) * pauli("y").matrix


def braiding_rhs(t1: float, t2: float, space: SpaceDescriptor) -> Operator:
    """Right-hand side ``exp(i t2 X_2 σ_z e^{2i t1 n_1 σ_y})`` built directly."""
    z = pauli("z").matrix
    gen = _composite_generator(space, 1.0, lambda n: z @ _qubit_expm_y(2 * t1 * n))
    return herm_expm(gen, t2)


def concatenated_bch(t1: float, t2: float, variant: str, space: SpaceDescriptor) -> GateSequence:
    """Five-gate palindromic sequence.

    ``same_sign`` approximates ``exp(2i t2 X_2 cos(2t1 n_1) σ_z)`` and
    ``opposite_sign`` approximates ``exp(2i t2 X_2 sin(2t1 n_1) σ_x)``.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    if variant not in ("same_sign", "opposite_sign"):
        raise InvalidArgument("variant must be same_sign or opposite_sign")
    s = 1 if variant == "same_sign" else -1
    gates = (dispersive_gate(-t1, "y", MODE1, space),
             rabi_gate(s * t2, "z", MODE2, space),
             dispersive_gate(2 * t1, "y", MODE1, space),
             rabi_gate(t2, "z", MODE2, space),
             dispersive_gate(-t1, "y", MODE1, space))
    return GateSequence(gates, _prep("z", 1), "trace_out", f"concatenated_bch({variant})", space)


def concatenated_bch_target(t1: float, t2: float, variant: str,
                            space: SpaceDescriptor) -> Operator:
    """The approximate closed form each variant aims at."""
    if variant == "same_sign":
        q, f = pauli("z").matrix, np.cos
    elif variant == "opposite_sign":
        q, f = pauli("x").matrix, np.sin
    else:
        raise InvalidArgument("variant must be same_sign or opposite_sign")
    gen = _composite_generator(space, 1.0, lambda n: f(2 * t1 * n) * q)
    return herm_expm(gen, 2 * t2)


def default_tau(space: SpaceDescriptor) -> float:
    """``π/(2·D_1)``: keeps ``τ·n`` inside the principal window for every level."""
    return np.pi / (2 * space.dim_of(MODE1))


def fourier_series_method(tau: float, t2: float, k_max: int,
                          space: SpaceDescriptor) -> GateSequence:
    """Fourier-series synthesis of ``exp(-i t2 τ σ_x n_1 X_2)``.

    Harmonic ``k`` contributes two braided factors with phases ``±kτ`` and
    weights ``±(-1)^k/k``. On the qubit ``|−⟩`` branch the target is
    ``ideal_target(1, 1, t2·τ)``.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    if int(k_max) != k_max or k_max < 1:
        raise InvalidArgument("k_max must be a positive integer")
    gates: list[Gate] = []
    for k in range(1, int(k_max) + 1):
        w = t2 * (-1) ** k / k
        # written product: first factor leftmost, so it is applied last
        gates = _braid(-k * tau / 2, -w, space) + gates
        gates = _braid(k * tau / 2, w, space) + gates
    return GateSequence(tuple(gates), _prep("x", -1), "trace_out",
                        f"fourier_series(kmax={k_max})", space, target=(1, 1, float(t2 * tau)))


def gaussian_delta_weights(a: float, k_range: int) -> dict[int, float]:
    """``w_k = 2k·e^{-k²}/(√π·a)`` for ``k ∈ [-k_range, k_range] \\ {0}``."""
    if a <= 0:
        raise InvalidArgument("a must be positive")
    return {k: 2 * k * np.exp(-k * k) / (np.sqrt(np.pi) * a)
            for k in range(-int(k_range), int(k_range) + 1) if k != 0}


def gaussian_delta_method(a: float, k_range: int, t2: float, tau: float,
                          space: SpaceDescriptor) -> GateSequence:
    """Smoothed-delta synthesis with the same target as the Fourier method.

    Factor ``k`` is the braided gate ``exp(i t2 w_k X_2 σ_z e^{-ikaτ n_1 σ_y})``.
    """
    _require(space, (QUBIT, MODE1, MODE2))
    weights = gaussian_delta_weights(a, k_range)
    if not weights:
        raise InvalidArgument("k_range must be at least 1")
    gates: list[Gate] = []
    for k, w in weights.items():
        gates = _braid(-k * a * tau / 2, t2 * w, space) + gates
    return GateSequence(tuple(gates), _prep("x", -1), "trace_out",
                        f"gaussian_delta(a={a:g},K={k_range})", space,
                        target=(1, 1, float(t2 * tau)))


def squeeze_enhance(inner: GateSequence, r: float, mode: str) -> GateSequence:
    """Conjugate ``inner`` by squeezing of ``mode``: ``S(-r)·inner·S(r)``.

    On mode 2 a ``X_2^l`` coupling is scaled exactly by ``e^{l·r}``. On
    mode 1 the number operator grows only approximately, by ``cosh²r``.
    """
    if abs(r) > 1.5:
        raise InvalidArgument("|r| must not exceed 1.5")
    if mode not in (MODE1, MODE2):
        raise InvalidArgument("mode must be mode1 or mode2")
    space = inner.space
    gates = ((gaussian_gate("squeezing", r, mode, space),) + inner.gates
             + (gaussian_gate("squeezing", -r, mode, space),))
    target = None
    if inner.target is not None:
        k, l, T = inner.target
        scale = np.exp(l * r) if mode == MODE2 else np.cosh(r) ** (2 * k)
        target = (k, l, float(T * scale))
    return GateSequence(gates, inner.qubit_prep, inner.qubit_disposal,
                        f"squeezed[{mode},r={r:g}]({inner.method_label})", space, target=target)


# --------------------------------------------------------------------------
# operator assembly (for verifiers)
# --------------------------------------------------------------------------


def _as_mode1_controlled(op: Operator, space: SpaceDescriptor) -> Operator | None:
    if op.control == MODE1:
        return lift(op, space)
    if MODE1 in op.support:
        blocks = op.controlled_on(MODE1)
        if blocks is None:
            return None
        return lift(Operator(op.space, control=MODE1, blocks=blocks, unitary=op.unitary), space)
    rest = space.without([MODE1])
    local = embed(op, rest).matrix
    d1 = space.dim_of(MODE1)
    return Operator(space, control=MODE1, blocks=np.broadcast_to(local, (d1,) + local.shape),
                    unitary=op.unitary)


def sequence_operator(seq: GateSequence) -> Operator:
    """Product of all gates on ``seq.space`` (blockwise in mode 1 when possible)."""
    space = seq.space
    ops = [_as_mode1_controlled(g.unitary, space) for g in seq.gates]
    if all(o is not None for o in ops):
        blocks = ops[0].blocks
        for o in ops[1:]:
            blocks = o.blocks @ blocks
        return Operator(space, control=MODE1, blocks=blocks, unitary=True)
    total = embed(seq.gates[0].unitary, space)
    for g in seq.gates[1:]:
        total = embed(g.unitary, space) @ total
    return total


def operator_distance(a: Operator, b: Operator, projector: np.ndarray | None = None) -> float:
    """Spectral-norm distance, optionally restricted to ``projector``'s range."""
    if a.control is not None and a.control == b.control and projector is None:
        return float(max(np.linalg.norm(x - y, 2) for x, y in zip(a.blocks, b.blocks)))
    diff = a.matrix - b.matrix
    if projector is not None:
        diff = diff @ projector
    return float(np.linalg.norm(diff, 2))


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def _prepend_qubit(vec: np.ndarray, state: DensityState, space: SpaceDescriptor) -> DensityState:
    if state.kind == "factor":
        f = np.einsum("q,ia->qia", vec, state.factor).reshape(space.dim, -1)
        return DensityState(space, factor=f, check=False)
    if state.kind == "block_factor":
        bf = state.block_factors
        f = np.einsum("q,nia->nqia", vec, bf).reshape(bf.shape[0], 2 * bf.shape[1], -1)
        return DensityState(space, block_factors=f, block_label=state.block_label, check=False)
    q = np.outer(vec, vec.conj())
    if state.kind == "blocks":
        blocks = np.einsum("qp,nij->nqipj", q, state.blocks)
        db = state.blocks.shape[0]
        r = 2 * state.blocks.shape[1]
        return DensityState(space, blocks=blocks.reshape(db, r, r), block_label=state.block_label,
                            check=False)
    return DensityState(space, np.kron(q, state.matrix), check=False)


def blocks_to_factor(state: DensityState, cutoff: float = 1e-15) -> DensityState:
    """Exact ``ρ = F F†`` decomposition of a block-diagonal state."""
    return as_factor(state, cutoff)


def _mode1_diagonal(gate: Gate) -> bool:
    return gate.unitary.diagonal_in(MODE1)


def _project_qubit(state: DensityState, vec: np.ndarray) -> DensityState:
    space = state.space
    out_space = space.without([QUBIT])
    qi = space.index(QUBIT)
    bra = vec.conj()
    if state.kind == "factor":
        arr = state.factor.reshape(space.dims + (-1,))
        f = np.tensordot(bra, arr, axes=(0, qi)).reshape(out_space.dim, -1)
        out = DensityState(out_space, factor=f, check=False)
    elif state.kind == "block_factor" and state.block_label != QUBIT:
        rest = state.rest_space
        bf = state.block_factors
        arr = bf.reshape((bf.shape[0],) + rest.dims + (bf.shape[2],))
        arr = np.tensordot(bra, arr, axes=(0, 1 + rest.index(QUBIT)))
        out = DensityState(out_space, block_factors=arr.reshape(bf.shape[0], rest.dim // 2, -1),
                           block_label=state.block_label, check=False)
    elif state.kind == "blocks" and state.block_label != QUBIT:
        rest = space.without([state.block_label])
        kr = len(rest.dims)
        ri = rest.index(QUBIT)
        arr = state.blocks.reshape((state.blocks.shape[0],) + rest.dims * 2)
        arr = np.tensordot(arr, bra, axes=(1 + ri, 0))
        arr = np.tensordot(arr, vec, axes=(kr + ri, 0))
        rd = rest.dim // 2
        out = DensityState(out_space, blocks=arr.reshape(-1, rd, rd),
                           block_label=state.block_label, check=False)
    else:
        k = len(space.dims)
        arr = state.matrix.reshape(space.dims * 2)
        arr = np.tensordot(arr, bra, axes=(qi, 0))
        arr = np.tensordot(arr, vec, axes=(k - 1 + qi, 0))
        out = DensityState(out_space, arr.reshape(out_space.dim, out_space.dim), check=False)
    p = out.trace()
    if p < PROJECTION_TOL:
        raise DegenerateProjection(f"qubit branch has probability {p:.3e}")
    return _scaled(out, 1 / p)


def _scaled(state: DensityState, s: float) -> DensityState:
    if state.kind == "factor":
        return DensityState(state.space, factor=state.factor * np.sqrt(s), check=False)
    if state.kind == "blocks":
        return DensityState(state.space, blocks=state.blocks * s, block_label=state.block_label,
                            check=False)
    if state.kind == "block_factor":
        return DensityState(state.space, block_factors=state.block_factors * np.sqrt(s),
                            block_label=state.block_label, check=False)
    return DensityState(state.space, state.matrix * s, check=False)


def run_sequence(state: DensityState, seq: GateSequence, noise: NoiseModel | None = None,
                 disposal: str | None = None) -> DensityState:
    """Apply ``seq`` to an oscillator state and return the oscillator output.

    The qubit is prepared per ``seq.qubit_prep`` and removed per
    ``disposal`` (default :meth:`GateSequence.disposal_for`). Noise channels
    follow every gate whose class the model covers.
    """
    osc = seq.oscillator_space
    if state.space != osc:
        raise InvalidArgument(f"input space {state.space.subsystems} does not match "
                              f"sequence space {osc.subsystems}")
    noisy = noise is not None and not noise.is_trivial
    diagonal = all(_mode1_diagonal(g) for g in seq.gates)
    mode1_blocks = state.kind in ("blocks", "block_factor") and state.block_label == MODE1
    if noisy:
        if mode1_blocks and diagonal:
            state = state.to_blocks(MODE1)
        elif state.kind != "matrix":
            state = DensityState(osc, state.matrix, check=False)
    elif mode1_blocks and diagonal:
        state = blocks_to_block_factor(state)
    elif state.kind != "factor":
        state = as_factor(state)

    vec = None
    if seq.qubit_prep is not None:
        q = seq.qubit_prep
        vec = qubit_state(q.qubit_axis, q.qubit_sign)
        state = _prepend_qubit(vec, state, seq.space)

    for gate in seq.gates:
        state = apply_unitary(gate.unitary, state)
        if noisy and noise.applies_to(gate.noise_class):
            state = noise.apply(state)

    if vec is None:
        return state
    how = disposal or seq.disposal_for(noise)
    if how not in DISPOSALS:
        raise InvalidArgument(f"disposal must be one of {DISPOSALS}")
    if how == "project":
        return _project_qubit(state, vec)
    return partial_trace(state, osc.labels)


def ideal_output(state: DensityState, k: int, l: int, T: float) -> DensityState:
    """Output of the exact target interaction on an oscillator state."""
    return run_sequence(state, ideal_sequence(k, l, T, state.space))
