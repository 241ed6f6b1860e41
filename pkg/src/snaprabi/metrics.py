"""Figures of merit: fidelity, displacement SNR, quadrature moments,
negativities, intensity correlation and the infidelity decay fit."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientData, InvalidArgument, UndefinedMetric
from .gates import Gate, ideal_target
from .hilbert import (MODE1, MODE2, DensityState, Operator, SpaceDescriptor, as_factor,
                      blocks_to_block_factor, diagonal_block_factors, embed, expect_local,
                      fock_operators, partial_trace, partial_transpose, trace_norm)
from .sequences import GateSequence, run_sequence

SATURATION_RATIO = 0.95
MEAN_FLOOR = 1e-10


# --------------------------------------------------------------------------
# fidelity
# --------------------------------------------------------------------------


def _nuclear(m: np.ndarray) -> float:
    return float(np.linalg.svd(m, compute_uv=False).sum()) if m.size else 0.0


def _factored(state: DensityState) -> DensityState:
    # explicit factors keep root fidelity exact for rank-deficient states;
    # square roots of round-off eigenvalues would otherwise add ~1e-9 each
    if state.kind == "blocks":
        return blocks_to_block_factor(state)
    if state.kind == "matrix":
        return as_factor(state)
    return state


def fidelity(rho_id: DensityState, rho_re: DensityState) -> float:
    """Uhlmann fidelity ``(Tr√(√ρ_id ρ_re √ρ_id))²``, clipped to [0, 1].

    With ``ρ_a = G Gᴴ`` and ``ρ_b = F Fᴴ`` the root fidelity is the nuclear
    norm of ``Gᴴ F``, evaluated blockwise when both states share a
    block-diagonal label.
    """
    if rho_id.space != rho_re.space:
        raise InvalidArgument("fidelity needs states on the same space")
    a, b = _factored(rho_id), _factored(rho_re)
    if a.kind == b.kind == "block_factor" and a.block_label == b.block_label:
        root = sum(_nuclear(g.conj().T @ f) for g, f in zip(a.block_factors, b.block_factors))
    else:
        if b.kind == "block_factor":
            a, b = b, a
        f = as_factor(b)
        if a.kind == "block_factor":
            rows = [g.conj().T @ fn for g, fn in
                    zip(a.block_factors, diagonal_block_factors(f, a.block_label))]
            root = _nuclear(np.concatenate(rows, axis=0))
        else:
            root = _nuclear(a.factor.conj().T @ f.factor)
    return float(min(max(root ** 2, 0.0), 1.0))


def trace_distance(a: DensityState, b: DensityState) -> float:
    if a.space != b.space:
        raise InvalidArgument("trace distance needs states on the same space")
    return 0.5 * trace_norm(a.matrix - b.matrix)


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------


def _quadratures(state: DensityState, mode: str):
    ops = fock_operators(state.space.dim_of(mode))
    return ops["position"], ops["momentum"]


def covariance_matrix(state: DensityState, modes=(MODE1, MODE2)) -> np.ndarray:
    """Symmetrised covariance of ``(X, P)`` per mode, in the order given.

    Entries are ``⟨{A, B}⟩/2 - ⟨A⟩⟨B⟩``; the vacuum gives ``𝟙/2``.
    """
    modes = list(modes)
    if not modes:
        raise InvalidArgument("covariance_matrix needs at least one mode")
    quads = []
    for m in modes:
        x, p = _quadratures(state, m)
        quads += [(m, x), (m, p)]
    means = [expect_local(state, {m: q}).real for m, q in quads]
    n = len(quads)
    cov = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            (mi, a), (mj, b) = quads[i], quads[j]
            if mi == mj:
                sym = expect_local(state, {mi: (a @ b + b @ a) / 2}).real
            else:
                sym = expect_local(state, {mi: a, mj: b}).real
            cov[i, j] = cov[j, i] = sym - means[i] * means[j]
    return cov


def min_quadrature_variance(state: DensityState, mode: str) -> float:
    """Smallest variance over all rotated quadratures of one mode."""
    return float(np.linalg.eigvalsh(covariance_matrix(state, [mode]))[0])


def _symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Moduli of the eigenvalues of ``iΩV``, one per mode, ascending."""
    omega = _symplectic_form(cov.shape[0] // 2)
    ev = np.abs(np.linalg.eigvals(1j * omega @ cov))
    return np.sort(ev)[::2]


def pt_symplectic_eigenvalue(cov: np.ndarray) -> float:
    """Smallest symplectic eigenvalue after flipping the second mode's momentum."""
    if cov.shape != (4, 4):
        raise InvalidArgument("expects a two-mode 4x4 covariance matrix")
    nus = symplectic_eigenvalues(cov)
    if nus[0] < 0.5 - 1e-6:
        warnings.warn(f"unphysical covariance matrix: symplectic eigenvalue {nus[0]:.6g} < 1/2",
                      RuntimeWarning, stacklevel=2)
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    return float(symplectic_eigenvalues(flip @ cov @ flip)[0])


def gaussian_negativity_from_cov(cov: np.ndarray) -> tuple[float, float]:
    """``(max(0, (1 - 2ν)/(4ν)), ν)`` for the partially transposed ``ν``."""
    nu = pt_symplectic_eigenvalue(cov)
    return max(0.0, (1 - 2 * nu) / (4 * nu)), nu


def gaussian_negativity(state: DensityState) -> float:
    """Negativity of the Gaussian state sharing this state's two-mode covariance."""
    return gaussian_negativity_from_cov(covariance_matrix(state, [MODE1, MODE2]))[0]


def g2_correlation(state: DensityState) -> float:
    """``⟨n_1 n_2⟩ / (⟨n_1⟩⟨n_2⟩)``."""
    n1 = fock_operators(state.space.dim_of(MODE1))["number"]
    n2 = fock_operators(state.space.dim_of(MODE2))["number"]
    m1 = expect_local(state, {MODE1: n1}).real
    m2 = expect_local(state, {MODE2: n2}).real
    if m1 <= MEAN_FLOOR or m2 <= MEAN_FLOOR:
        raise UndefinedMetric(f"g2 undefined: mean occupations {m1:.3g}, {m2:.3g}")
    return expect_local(state, {MODE1: n1, MODE2: n2}).real / (m1 * m2)


# --------------------------------------------------------------------------
# negativity
# --------------------------------------------------------------------------


def negativity_raw(state: DensityState, cut: str) -> float:
    """``(‖ρ^{T_cut}‖₁ - 1)/2`` without clamping."""
    space = state.space
    space.index(cut)
    if len(space.labels) == 1:
        return 0.0
    if state.kind == "factor" and state.factor.shape[1] == 1 and len(space.labels) == 2:
        psi = state.factor[:, 0].reshape(space.dims)
        s = np.linalg.svd(psi, compute_uv=False)
        return float((s.sum() ** 2 / np.vdot(s, s).real - 1) / 2)
    if state.kind == "block_factor" and (cut == state.block_label or
                                         len(space.labels) == 2):
        # classical in the block label: PT leaves every block positive
        return (state.trace() - 1) / 2
    if state.kind == "block_factor":
        state = state.to_blocks(state.block_label)
    if state.kind == "blocks":
        label = state.block_label
        rest = space.without([label])
        norm = 0.0
        for b in state.blocks:
            if cut == label or cut not in rest:
                norm += trace_norm(b)
            else:
                sub = DensityState(rest, b, check=False)
                norm += trace_norm(partial_transpose(sub, cut))
        return (norm - 1) / 2
    return (trace_norm(partial_transpose(state, cut)) - 1) / 2


def negativity(state: DensityState, cut: str) -> float:
    """Entanglement negativity across ``cut``, clamped at zero."""
    return max(0.0, negativity_raw(state, cut))


# --------------------------------------------------------------------------
# displacement SNR
# --------------------------------------------------------------------------


def momentum_shift_operator(unitary: Operator, space: SpaceDescriptor) -> Operator:
    """``U†P_2U - P_2`` for an oscillator unitary, kept blockwise in mode 1."""
    p = fock_operators(space.dim_of(MODE2))["momentum"]
    if unitary.control == MODE1 and unitary.space.labels == (MODE1, MODE2):
        b = unitary.blocks
        shift = np.conj(np.swapaxes(b, 1, 2)) @ p @ b - p
        return Operator(unitary.space, control=MODE1, blocks=shift, hermitian=False)
    u = embed(unitary, space).matrix
    pe = embed(Operator(space.restrict([MODE2]), p), space).matrix
    return Operator(space, u.conj().T @ pe @ u - pe)


def _as_mode1_controlled(unitary: Operator) -> Operator | None:
    if unitary.space.labels != (MODE1, MODE2):
        return None
    if unitary.control == MODE1:
        return unitary
    blocks = unitary.controlled_on(MODE1)
    if blocks is None:
        return None
    return Operator(unitary.space, control=MODE1, blocks=blocks)


def _shift_moments(unitary: Operator, state: DensityState) -> tuple[float, float]:
    """``⟨δP⟩`` and ``⟨δP²⟩`` with ``δP = U†P_2U - P_2``.

    A mode-1-controlled ``U`` makes ``δP`` block diagonal, so only the
    diagonal mode-1 blocks of the state contribute; each is handled through
    its factor without forming ``δP``.
    """
    cu = _as_mode1_controlled(unitary)
    if cu is None:
        op = momentum_shift_operator(unitary, state.space)
        m = op.matrix
        return state.expect(op).real, state.expect(Operator(op.space, m @ m)).real
    p = fock_operators(state.space.dim_of(MODE2))["momentum"]
    first = second = 0.0
    for n, g in enumerate(diagonal_block_factors(state, MODE1)):
        if not g.size:
            continue
        w = cu.block_apply(n, p @ cu.block_apply(n, g), adjoint=True) - p @ g
        first += np.vdot(g, w).real
        second += np.vdot(w, w).real
    return first, second


def _check_separable_input(state: DensityState):
    if state.kind in ("blocks", "block_factor") and state.block_label == MODE1:
        mech = partial_trace(state, [MODE2])
        off = mech.matrix - np.diag(np.diag(mech.matrix))
        if np.max(np.abs(off)) > 1e-9:
            warnings.warn("mechanical input is not phase-insensitive", RuntimeWarning,
                          stacklevel=3)


def displacement_snr(state: DensityState, channel, noise=None) -> float:
    """Momentum-shift signal-to-noise ratio, as a magnitude.

    ``channel`` is a :class:`Gate`/unitary :class:`Operator` on the two
    oscillators (exact ``δP = U†P_2U - P_2`` route) or a ``GateSequence``.
    For a sequence the signal is ``⟨P_2⟩_out - ⟨P_2⟩_in`` and the noise is the
    input variance of the ideal target's ``δP``.
    """
    space = state.space
    if space.labels != (MODE1, MODE2):
        raise InvalidArgument("displacement_snr expects a (mode1, mode2) input state")
    _check_separable_input(state)
    if isinstance(channel, Gate):
        channel = channel.unitary
    if isinstance(channel, GateSequence):
        if channel.target is None:
            raise InvalidArgument("sequence has no ideal target to reference")
        k, l, T = channel.target
        mean, second = _shift_moments(ideal_target(k, l, T, space).unitary, state)
        out = run_sequence(state, channel, noise)
        p = fock_operators(space.dim_of(MODE2))["momentum"]
        signal = expect_local(out, {MODE2: p}).real - expect_local(state, {MODE2: p}).real
    else:
        mean, second = _shift_moments(channel, state)
        signal = mean
    var = second - mean ** 2
    if var <= 1e-14:
        raise UndefinedMetric(f"δP variance {var:.3e} on the input; SNR undefined")
    return abs(signal) / math.sqrt(var)


# --------------------------------------------------------------------------
# decay fit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    decay_rate: float
    intercept: float
    r_squared: float
    points_used: int
    saturation_index: int | None

    def __iter__(self):
        return iter((self.decay_rate, self.intercept, self.r_squared))


def saturation_index(infidelities) -> int | None:
    """First index whose infidelity improved on its predecessor by less than 5%."""
    vals = list(infidelities)
    for j in range(1, len(vals)):
        if vals[j] > SATURATION_RATIO * vals[j - 1]:
            return j
    return None


def infidelity_decay_fit(points, detect_saturation: bool = False) -> DecayFit:
    """Least-squares fit of ``ln(1-F) = ln(1-F_0) + δ·R`` over ``(R, 1-F)`` pairs.

    Points with non-positive infidelity are dropped with a warning. With
    ``detect_saturation`` the fit stops before the first saturated point.
    """
    pts = sorted((float(r), float(i)) for r, i in points)
    good = []
    for r, i in pts:
        if not 0 < i < 1:
            warnings.warn(f"infidelity {i!r} at R={r!r} excluded from the fit", RuntimeWarning,
                          stacklevel=2)
            continue
        good.append((r, i))
    sat = None
    if detect_saturation:
        sat = saturation_index([i for _, i in good])
        if sat is not None:
            good = good[:sat]
    if len(good) < 3:
        raise InsufficientData(f"need at least 3 usable points, have {len(good)}")
    r = np.array([p[0] for p in good])
    y = np.log([p[1] for p in good])
    slope, intercept = np.polyfit(r, y, 1)
    resid = y - (slope * r + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, len(good), sat)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class MetricsReport:
    fidelity: float = math.nan
    snr: float = math.nan
    min_quadrature_variance: float = math.nan
    negativity: float = math.nan
    negativity_raw: float = math.nan
    gaussian_negativity: float = math.nan
    pt_symplectic_eigenvalue: float = math.nan
    g2: float = math.nan
    resource: float = math.nan
    convergence_shift: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)
