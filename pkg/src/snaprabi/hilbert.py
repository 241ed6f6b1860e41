"""Truncated Fock-space and qubit operator algebra.

Conventions: ``X = (a + a†)/√2`` and ``P = i(a† - a)/√2`` so the vacuum has
quadrature variance 1/2. Subsystem labels are free text, but the rest of the
package uses ``"qubit"``, ``"mode1"`` and ``"mode2"``.

Operators and states may be stored in structured forms to keep large
simulations cheap:

* an :class:`Operator` may be *controlled* on one subsystem, i.e. block
  diagonal in that subsystem's basis (``U = Σ_n |n⟩⟨n| ⊗ U_n``). The blocks
  are either dense or share one eigenbasis (``U_n = V·diag(φ_n)·V†``);
* a :class:`DensityState` may be a dense matrix, a factor ``F`` with
  ``ρ = F F†``, block diagonal in one subsystem (``ρ = Σ_n |n⟩⟨n| ⊗ B_n``),
  or block diagonal with factored blocks (``B_n = F_n F_n†``).

Every form can be materialised as a dense matrix via ``.matrix``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, NumericalPSDViolation

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
PSD_FAIL = 1e-6
RANK_CUTOFF = 1e-15

QUBIT = "qubit"
MODE1 = "mode1"
MODE2 = "mode2"

STATE_KINDS = ("matrix", "factor", "blocks", "block_factor")


# --------------------------------------------------------------------------
# spaces
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceDescriptor:
    """Ordered tensor-product layout of labelled subsystems."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(l), int(d)) for l, d in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        labels = [l for l, _ in subs]
        if not subs:
            raise InvalidArgument("a space needs at least one subsystem")
        if len(set(labels)) != len(labels):
            raise InvalidArgument(f"duplicate subsystem labels in {labels}")
        for label, dim in subs:
            if dim < 1:
                raise InvalidArgument(f"subsystem {label!r} has dimension {dim}")
            if label == QUBIT and dim != 2:
                raise InvalidArgument("the qubit subsystem must have dimension 2")

    @classmethod
    def hybrid(cls, d1: int, d2: int) -> "SpaceDescriptor":
        """qubit ⊗ mode1 ⊗ mode2 with the given Fock cutoffs."""
        return cls(((QUBIT, 2), (MODE1, d1), (MODE2, d2)))

    @classmethod
    def oscillators(cls, d1: int, d2: int) -> "SpaceDescriptor":
        return cls(((MODE1, d1), (MODE2, d2)))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidArgument(f"unknown subsystem {label!r}; space has {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def __contains__(self, label) -> bool:
        return label in self.labels

    def restrict(self, labels: Iterable[str]) -> "SpaceDescriptor":
        """Sub-space on ``labels``, kept in this space's order."""
        labels = set(labels)
        for l in labels:
            self.index(l)
        return SpaceDescriptor(tuple(s for s in self.subsystems if s[0] in labels))

    def without(self, labels: Iterable[str]) -> "SpaceDescriptor":
        labels = set(labels)
        return SpaceDescriptor(tuple(s for s in self.subsystems if s[0] not in labels))

    def with_cutoffs(self, **cutoffs: int) -> "SpaceDescriptor":
        return SpaceDescriptor(tuple((l, cutoffs.get(l, d)) for l, d in self.subsystems))


# --------------------------------------------------------------------------
# array kernels
# --------------------------------------------------------------------------


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _apply_dense(arr, mat, sub_dims, axes):
    """Contract ``mat`` (acting on ``sub_dims``) into ``arr`` along ``axes``."""
    k = len(axes)
    m = mat.reshape(tuple(sub_dims) * 2)
    out = np.tensordot(m, arr, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _grouped(arr, c_axis, rest_axes):
    nd = arr.ndim
    others = [i for i in range(nd) if i != c_axis and i not in rest_axes]
    perm = [c_axis, *rest_axes, *others]
    return np.transpose(arr, perm), perm


def _apply_controlled(arr, blocks, c_axis, rest_axes):
    """Apply ``Σ_n |n⟩⟨n| ⊗ blocks[n]``; ``c_axis`` indexes n."""
    a, perm = _grouped(arr, c_axis, rest_axes)
    shape = a.shape
    dc, dr = blocks.shape[0], blocks.shape[1]
    out = np.matmul(blocks, a.reshape(dc, dr, -1)).reshape(shape)
    return np.transpose(out, np.argsort(perm))


def _apply_diag_controlled(arr, basis, phases, c_axis, rest_axes):
    """Apply ``Σ_n |n⟩⟨n| ⊗ V·diag(phases[n])·V†``."""
    a, perm = _grouped(arr, c_axis, rest_axes)
    shape = a.shape
    dc, dr = phases.shape
    a = a.reshape(dc, dr, -1)
    a = np.matmul(basis.conj().T, a)
    a = phases[:, :, None] * a
    out = np.matmul(basis, a).reshape(shape)
    return np.transpose(out, np.argsort(perm))


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


class Operator:
    """Operator on ``space`` (its support), dense or controlled on one label.

    Parameters
    ----------
    space : SpaceDescriptor
        The subsystems the operator acts on; ``support`` is ``space.labels``.
    matrix : ndarray, optional
        Dense ``(space.dim, space.dim)`` matrix.
    control, blocks : optional
        Controlled form: ``blocks[n]`` acts on the remaining subsystems
        (in ``space`` order) when ``control`` is in basis state ``n``.
    control, basis, phases : optional
        Controlled form with a shared eigenbasis:
        ``blocks[n] = basis @ diag(phases[n]) @ basis†``. Blocks are then
        only built when explicitly requested.
    """

    def __init__(self, space: SpaceDescriptor, matrix=None, *, control=None, blocks=None,
                 basis=None, phases=None, hermitian=False, unitary=False):
        self.space = space
        self.hermitian = bool(hermitian)
        self.unitary = bool(unitary)
        self.basis = self.phases = None
        forms = [matrix is not None, blocks is not None, basis is not None]
        if sum(forms) != 1:
            raise InvalidArgument("give exactly one of matrix, blocks or basis+phases")
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=complex)
            if matrix.shape != (space.dim, space.dim):
                raise InvalidArgument(
                    f"matrix shape {matrix.shape} does not match space dimension {space.dim}")
            self._matrix = _readonly(matrix)
            self.control = None
            self._blocks = None
        else:
            dc = space.dim_of(control)
            dr = space.dim // dc
            self.control = control
            self._matrix = None
            if blocks is not None:
                blocks = np.asarray(blocks, dtype=complex)
                if blocks.shape != (dc, dr, dr):
                    raise InvalidArgument(f"blocks shape {blocks.shape} != {(dc, dr, dr)}")
                self._blocks = _readonly(blocks)
            else:
                basis = np.asarray(basis)
                phases = np.asarray(phases, dtype=complex)
                if basis.shape != (dr, dr) or phases.shape != (dc, dr):
                    raise InvalidArgument("basis must be (rest, rest) and phases (control, rest)")
                self.basis = _readonly(basis)
                self.phases = _readonly(phases)
                self._blocks = None
        if self.hermitian:
            err = self._hermiticity_error()
            if err > HERMITIAN_TOL * max(1.0, self._scale()):
                raise InvalidArgument(f"operator flagged Hermitian but ‖A-A†‖_max = {err:.2e}")

    @property
    def support(self) -> tuple[str, ...]:
        return self.space.labels

    @property
    def rest_space(self) -> SpaceDescriptor | None:
        if self.control is None or len(self.space.labels) == 1:
            return None
        return self.space.without([self.control])

    @property
    def blocks(self) -> np.ndarray | None:
        if self.control is None:
            return None
        if self._blocks is None:
            b = np.einsum("ij,nj,kj->nik", self.basis, self.phases, self.basis.conj())
            self._blocks = _readonly(b)
        return self._blocks

    def _scale(self):
        if self.basis is not None:
            return float(np.max(np.abs(self.phases))) if self.phases.size else 0.0
        data = self.blocks if self._matrix is None else self._matrix
        return float(np.max(np.abs(data))) if data.size else 0.0

    def _hermiticity_error(self):
        if self._matrix is not None:
            return float(np.max(np.abs(self._matrix - self._matrix.conj().T)))
        if self.basis is not None:
            return float(np.max(np.abs(self.phases.imag), initial=0.0))
        return float(np.max(np.abs(self.blocks - np.conj(np.swapaxes(self.blocks, 1, 2)))))

    @cached_property
    def matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        labels = self.space.labels
        blocks = self.blocks
        dc = blocks.shape[0]
        rest_dims = [d for l, d in self.space.subsystems if l != self.control]
        # full[n, r, n', r'] = δ_{nn'} blocks[n, r, r']
        full = np.zeros((dc, *rest_dims, dc, *rest_dims), dtype=complex)
        b = blocks.reshape(dc, *rest_dims, *rest_dims)
        k = len(rest_dims)
        for n in range(dc):
            full[(n, *([slice(None)] * k), n)] = b[n]
        # axis order is (control, rest..., control, rest...); restore space order
        order = [self.control] + [l for l in labels if l != self.control]
        src = [order.index(l) for l in labels]
        perm = src + [len(labels) + i for i in src]
        full = np.transpose(full, perm)
        return _readonly(full.reshape(self.space.dim, self.space.dim))

    def dag(self) -> "Operator":
        flags = dict(hermitian=self.hermitian, unitary=self.unitary)
        if self._matrix is not None:
            return Operator(self.space, self._matrix.conj().T, **flags)
        if self.basis is not None:
            return Operator(self.space, control=self.control, basis=self.basis,
                            phases=self.phases.conj(), **flags)
        return Operator(self.space, control=self.control,
                        blocks=np.conj(np.swapaxes(self.blocks, 1, 2)), **flags)

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.space != self.space:
            raise InvalidArgument("operator product needs identical spaces; embed first")
        unitary = self.unitary and other.unitary
        if self.control is not None and self.control == other.control:
            if self.basis is not None and other.basis is self.basis:
                return Operator(self.space, control=self.control, basis=self.basis,
                                phases=self.phases * other.phases, unitary=unitary)
            return Operator(self.space, control=self.control,
                            blocks=self.blocks @ other.blocks, unitary=unitary)
        return Operator(self.space, self.matrix @ other.matrix, unitary=unitary)

    def block_apply(self, n: int, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """``U_n @ x`` (or ``U_n† @ x``) for control level ``n``."""
        if self.control is None:
            raise InvalidArgument("block_apply needs a controlled operator")
        if self.basis is not None:
            ph = self.phases[n].conj() if adjoint else self.phases[n]
            y = self.basis.conj().T @ x
            return self.basis @ (ph.reshape((-1,) + (1,) * (y.ndim - 1)) * y)
        b = self.blocks[n]
        return (b.conj().T if adjoint else b) @ x

    def controlled_on(self, label: str, tol: float = 1e-13) -> np.ndarray | None:
        """Blocks of this operator in the basis of ``label``; None if not block diagonal."""
        if self.control == label:
            return self.blocks
        if label not in self.space:
            return None
        labels = self.space.labels
        dims = self.space.dims
        i = labels.index(label)
        k = len(labels)
        m = self.matrix.reshape(dims * 2)
        rest = [j for j in range(k) if j != i]
        m = np.transpose(m, [i, k + i, *rest, *[k + j for j in rest]])
        dc = dims[i]
        dr = self.space.dim // dc
        m = m.reshape(dc, dc, dr, dr)
        diag = m[np.arange(dc), np.arange(dc)]
        off = m.copy()
        off[np.arange(dc), np.arange(dc)] = 0
        if np.max(np.abs(off), initial=0.0) > tol:
            return None
        return diag

    def diagonal_in(self, label: str) -> bool:
        """True when the operator is block diagonal in ``label``'s basis."""
        return label not in self.space or self.control == label or \
            self.controlled_on(label) is not None

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        if self.basis is not None:
            eye = np.eye(self.basis.shape[0])
            ok_basis = np.max(np.abs(self.basis.conj().T @ self.basis - eye)) <= tol
            return bool(ok_basis and np.max(np.abs(np.abs(self.phases) - 1)) <= tol)
        if self._matrix is None:
            eye = np.eye(self.blocks.shape[1])
            prod = np.conj(np.swapaxes(self.blocks, 1, 2)) @ self.blocks
            return bool(np.max(np.abs(prod - eye)) <= tol)
        prod = self._matrix.conj().T @ self._matrix
        return bool(np.max(np.abs(prod - np.eye(self.space.dim))) <= tol)

    def __repr__(self):
        form = "dense" if self.control is None else f"controlled[{self.control}]"
        return f"Operator({self.support}, {form}, dim={self.space.dim})"


def fock_operators(cutoff: int) -> dict[str, np.ndarray]:
    """Single-mode ladder, number and quadrature matrices on ``cutoff`` levels."""
    if int(cutoff) != cutoff or cutoff < 2:
        raise InvalidArgument(f"cutoff must be an integer >= 2, got {cutoff}")
    cutoff = int(cutoff)
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    return {
        "annihilation": a,
        "creation": ad,
        "number": np.diag(np.arange(cutoff, dtype=float)).astype(complex),
        "position": (a + ad) / np.sqrt(2),
        "momentum": 1j * (ad - a) / np.sqrt(2),
    }


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis: str, label: str = QUBIT) -> Operator:
    try:
        m = _PAULI[axis]
    except KeyError:
        raise InvalidArgument(f"pauli axis must be x, y or z, got {axis!r}") from None
    return Operator(SpaceDescriptor(((label, 2),)), m, hermitian=True, unitary=True)


def mode_operator(name: str, label: str, cutoff: int, power: int = 1) -> Operator:
    """A power of one of the :func:`fock_operators` as an Operator on ``label``.

    Powers are matrix products of the truncated operator.
    """
    m = np.linalg.matrix_power(fock_operators(cutoff)[name], power)
    herm = name in ("number", "position", "momentum")
    return Operator(SpaceDescriptor(((label, cutoff),)), m, hermitian=herm)


def tensor(*ops: Operator) -> Operator:
    """Kronecker product on the concatenation of the operands' spaces."""
    space = SpaceDescriptor(tuple(s for op in ops for s in op.space.subsystems))
    m = ops[0].matrix
    for op in ops[1:]:
        m = np.kron(m, op.matrix)
    return Operator(space, m, hermitian=all(o.hermitian for o in ops),
                    unitary=all(o.unitary for o in ops))


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, np.eye(space.dim), hermitian=True, unitary=True)


def _check_support(op: Operator, space: SpaceDescriptor):
    for label, dim in op.space.subsystems:
        if label not in space:
            raise InvalidArgument(f"support label {label!r} not in target space")
        if space.dim_of(label) != dim:
            raise InvalidArgument(
                f"dimension mismatch on {label!r}: {dim} vs {space.dim_of(label)}")


def embed(op: Operator, space: SpaceDescriptor) -> Operator:
    """Extend ``op`` by identities to all of ``space`` (dense result)."""
    _check_support(op, space)
    if op.space == space and op.control is None:
        return op
    # apply op to the identity reshaped as a tensor: cheap and order-safe
    eye = np.eye(space.dim, dtype=complex).reshape(space.dims + (space.dim,))
    out = _apply_op_axes(op, eye, space, 0)
    return Operator(space, out.reshape(space.dim, space.dim),
                    hermitian=op.hermitian, unitary=op.unitary)


def lift(op: Operator, space: SpaceDescriptor) -> Operator:
    """Like :func:`embed` but keeps a controlled operator controlled.

    The result is controlled on the same label with identity-extended blocks.
    """
    if op.control is None:
        return embed(op, space)
    _check_support(op, space)
    rest = op.rest_space
    target_rest = space.without([op.control])
    if rest is None:
        blocks = np.stack([b[0, 0] * np.eye(target_rest.dim) for b in op.blocks])
    elif rest == target_rest:
        return Operator(space, control=op.control, blocks=op.blocks,
                        hermitian=op.hermitian, unitary=op.unitary)
    else:
        blocks = np.stack([embed(Operator(rest, b), target_rest).matrix for b in op.blocks])
    return Operator(space, control=op.control, blocks=blocks,
                    hermitian=op.hermitian, unitary=op.unitary)


def herm_expm(generator: Operator, scale: float) -> Operator:
    """``exp(i·scale·G)`` for Hermitian ``G`` via eigendecomposition."""
    if not generator.hermitian:
        err = generator._hermiticity_error()
        if err > HERMITIAN_TOL * max(1.0, generator._scale()):
            raise InvalidArgument("herm_expm needs a Hermitian generator")
    if generator.basis is not None:
        return Operator(generator.space, control=generator.control, basis=generator.basis,
                        phases=np.exp(1j * scale * generator.phases.real), unitary=True)
    if generator.control is not None:
        w, v = np.linalg.eigh(generator.blocks)
        ph = np.exp(1j * scale * w)
        blocks = (v * ph[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
        return Operator(generator.space, control=generator.control, blocks=blocks, unitary=True)
    w, v = np.linalg.eigh(generator.matrix)
    return Operator(generator.space, (v * np.exp(1j * scale * w)) @ v.conj().T, unitary=True)


def _apply_op_axes(op: Operator, arr, space: SpaceDescriptor, offset: int, conj: bool = False):
    """Apply ``op`` (or its complex conjugate) to the subsystem axes starting at ``offset``."""
    for label, dim in op.space.subsystems:
        if space.dim_of(label) != dim:
            raise InvalidArgument(f"dimension mismatch on {label!r}")
    if op.control is None:
        mat = op.matrix.conj() if conj else op.matrix
        axes = [offset + space.index(l) for l in op.support]
        return _apply_dense(arr, mat, op.space.dims, axes)
    c_axis = offset + space.index(op.control)
    rest_axes = [offset + space.index(l) for l in op.support if l != op.control]
    if op.basis is not None:
        basis = op.basis.conj() if conj else op.basis
        phases = op.phases.conj() if conj else op.phases
        if not rest_axes:
            return _apply_controlled(arr, phases[:, :, None], c_axis, [])
        return _apply_diag_controlled(arr, basis, phases, c_axis, rest_axes)
    blocks = op.blocks.conj() if conj else op.blocks
    return _apply_controlled(arr, blocks, c_axis, rest_axes)


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------


class DensityState:
    """Density operator on ``space`` in one of four storage forms.

    Exactly one of ``matrix``, ``factor`` (``ρ = F F†``), ``blocks`` or
    ``block_factors`` (the last two with ``block_label``) must be given.
    ``block_factors[n]`` is a ``(rest_dim, r)`` array with
    ``B_n = F_n F_n†``. ``check`` validates trace, hermiticity and positivity
    (positivity only where it is cheap).
    """

    def __init__(self, space: SpaceDescriptor, matrix=None, *, factor=None, blocks=None,
                 block_factors=None, block_label=None, check: bool = True):
        self.space = space
        given = [x is not None for x in (matrix, factor, blocks, block_factors)]
        if sum(given) != 1:
            raise InvalidArgument("give exactly one of matrix, factor, blocks, block_factors")
        self._matrix = self.factor = self.blocks = self.block_factors = None
        self.block_label = None
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=complex)
            if matrix.shape != (space.dim, space.dim):
                raise InvalidArgument(
                    f"state shape {matrix.shape} does not match space dimension {space.dim}")
            self._matrix = _readonly(matrix)
            self.kind = "matrix"
        elif factor is not None:
            factor = np.asarray(factor, dtype=complex)
            if factor.ndim == 1:
                factor = factor[:, None]
            if factor.shape[0] != space.dim:
                raise InvalidArgument("factor rows do not match space dimension")
            self.factor = _readonly(factor)
            self.kind = "factor"
        else:
            db = space.dim_of(block_label)
            dr = space.dim // db
            self.block_label = block_label
            if blocks is not None:
                blocks = np.asarray(blocks, dtype=complex)
                if blocks.shape != (db, dr, dr):
                    raise InvalidArgument(f"blocks shape {blocks.shape} != {(db, dr, dr)}")
                self.blocks = _readonly(blocks)
                self.kind = "blocks"
            else:
                bf = np.asarray(block_factors, dtype=complex)
                if bf.ndim != 3 or bf.shape[:2] != (db, dr):
                    raise InvalidArgument(f"block_factors shape {bf.shape} != {(db, dr)}+(r,)")
                self.block_factors = _readonly(bf)
                self.kind = "block_factor"
        if check:
            self.check()

    # -- construction helpers ------------------------------------------------
    @classmethod
    def pure(cls, space: SpaceDescriptor, vector) -> "DensityState":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        return cls(space, factor=v / np.linalg.norm(v))

    # -- views ---------------------------------------------------------------
    @property
    def rest_space(self) -> SpaceDescriptor | None:
        if self.block_label is None or len(self.space.labels) == 1:
            return None
        return self.space.without([self.block_label])

    def dense_blocks(self) -> np.ndarray:
        """``B_n`` for either block form."""
        if self.kind == "blocks":
            return self.blocks
        if self.kind == "block_factor":
            f = self.block_factors
            return f @ np.conj(np.swapaxes(f, 1, 2))
        raise InvalidArgument(f"{self.kind} state has no blocks")

    @cached_property
    def matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        if self.factor is not None:
            return _readonly(self.factor @ self.factor.conj().T)
        op = Operator(self.space, control=self.block_label, blocks=self.dense_blocks())
        return op.matrix

    def trace(self) -> float:
        if self.kind == "factor":
            return float(np.vdot(self.factor, self.factor).real)
        if self.kind == "block_factor":
            return float(np.vdot(self.block_factors, self.block_factors).real)
        if self.kind == "blocks":
            return float(np.trace(self.blocks, axis1=1, axis2=2).sum().real)
        return float(np.trace(self._matrix).real)

    def rank_hint(self) -> int:
        """Cheap upper bound on the rank."""
        if self.kind == "factor":
            return self.factor.shape[1]
        if self.kind == "block_factor":
            return self.block_factors.shape[0] * self.block_factors.shape[2]
        return self.space.dim

    def check(self):
        tr = self.trace()
        if abs(tr - 1) > TRACE_TOL:
            raise InvalidArgument(f"state trace {tr!r} differs from 1")
        if self.kind in ("factor", "block_factor"):
            return
        data = self._matrix if self.kind == "matrix" else self.blocks
        herm = data - np.conj(np.swapaxes(data, -1, -2))
        if np.max(np.abs(herm), initial=0.0) > HERMITIAN_TOL * 10:
            raise InvalidArgument("state is not Hermitian")
        if self.kind == "blocks":
            lo = np.linalg.eigvalsh(self.blocks).min()
        elif self.space.dim <= 400:
            lo = np.linalg.eigvalsh(self._matrix).min()
        else:
            return
        if lo < -PSD_TOL:
            raise InvalidArgument(f"state has negative eigenvalue {lo:.3e}")

    def to_blocks(self, label: str) -> "DensityState | None":
        """Dense block form in ``label``; None if the state has coherences there."""
        if self.block_label == label:
            if self.kind == "blocks":
                return self
            return DensityState(self.space, blocks=self.dense_blocks(), block_label=label,
                                check=False)
        op = Operator(self.space, self.matrix)
        b = op.controlled_on(label, tol=1e-14)
        if b is None:
            return None
        return DensityState(self.space, blocks=b, block_label=label, check=False)

    def expect(self, op: Operator) -> complex:
        """``Tr[ρ·op]`` with ``op`` on a subset of this space."""
        state = self
        if self.kind == "block_factor":
            state = as_factor(self)
        return complex(np.trace(apply_left(op, state)))

    def __repr__(self):
        return f"DensityState({self.space.labels}, dims={self.space.dims}, {self.kind})"


def _state_tensor(state: DensityState):
    return state.matrix.reshape(state.space.dims * 2)


def _block_axes_to_space(arr: np.ndarray, space: SpaceDescriptor, label: str) -> np.ndarray:
    """``(db, rest..., r)`` array to a ``(space.dim, ·)`` factor in space order."""
    arr = np.moveaxis(arr, 0, space.index(label))
    return arr.reshape(space.dim, -1)


def as_factor(state: DensityState, cutoff: float = RANK_CUTOFF) -> DensityState:
    """Exact ``ρ = F F†`` form of any state."""
    space = state.space
    if state.kind == "factor":
        return state
    if state.kind == "block_factor":
        bf = state.block_factors
        db, dr, r = bf.shape
        rest_dims = state.rest_space.dims if state.rest_space else ()
        cols = np.zeros((db, dr, db, r), dtype=complex)
        for n in range(db):
            cols[n, :, n, :] = bf[n]
        arr = cols.reshape((db,) + rest_dims + (db * r,))
        f = _block_axes_to_space(arr, space, state.block_label)
        keep = np.linalg.norm(f, axis=0) > 0
        return DensityState(space, factor=f[:, keep] if keep.any() else f[:, :1], check=False)
    if state.kind == "blocks":
        return as_factor(blocks_to_block_factor(state, cutoff))
    w, v = np.linalg.eigh(state.matrix)
    keep = w > cutoff
    return DensityState(space, factor=v[:, keep] * np.sqrt(w[keep]), check=False)


def blocks_to_block_factor(state: DensityState, cutoff: float = RANK_CUTOFF) -> DensityState:
    """Per-block eigen-factorisation; rank padded to the largest block rank."""
    if state.kind == "block_factor":
        return state
    if state.kind != "blocks":
        raise InvalidArgument("expects a block-diagonal state")
    w, v = np.linalg.eigh(state.blocks)
    w = np.where(w > cutoff, w, 0.0)
    ranks = (w > 0).sum(axis=1)
    r = max(int(ranks.max()), 1)
    order = np.argsort(-w, axis=1)[:, :r]
    w_sel = np.take_along_axis(w, order, axis=1)
    v_sel = np.take_along_axis(v, order[:, None, :], axis=2)
    f = v_sel * np.sqrt(w_sel)[:, None, :]
    return DensityState(state.space, block_factors=f, block_label=state.block_label,
                        check=False)


def apply_left(op: Operator, state: DensityState) -> np.ndarray:
    """Dense matrix ``op·ρ`` on the state's space (helper for expectations)."""
    space = state.space
    if state.kind == "factor":
        arr = state.factor.reshape(space.dims + (-1,))
        arr = _apply_op_axes(op, arr, space, offset=0)
        f = arr.reshape(space.dim, -1)
        return f @ state.factor.conj().T
    arr = _state_tensor(state)
    arr = _apply_op_axes(op, arr, space, offset=0)
    return arr.reshape(space.dim, space.dim)


def apply_unitary(op: Operator, state: DensityState) -> DensityState:
    """``U ρ U†`` preserving the state's storage form where possible.

    Also used for Kraus terms, so ``op`` need not be unitary.
    """
    space = state.space
    k = len(space.dims)
    if state.kind == "factor":
        arr = state.factor.reshape(space.dims + (-1,))
        arr = _apply_op_axes(op, arr, space, 0)
        return DensityState(space, factor=arr.reshape(space.dim, -1), check=False)
    if state.kind == "block_factor":
        out = _apply_to_block_factor(op, state)
        if out is not None:
            return out
        return apply_unitary(op, as_factor(state))
    if state.kind == "blocks":
        out = _apply_to_blocks(op, state)
        if out is not None:
            return out
        state = DensityState(space, state.matrix, check=False)
    arr = _state_tensor(state)
    arr = _apply_op_axes(op, arr, space, 0)
    arr = _apply_op_axes(op, arr, space, k, conj=True)
    return DensityState(space, arr.reshape(space.dim, space.dim), check=False)


def _label_local(op: Operator, label: str) -> Operator | None:
    """``op`` as controlled on ``label`` (None when it mixes that label's levels)."""
    if op.control == label:
        return op
    blocks = op.controlled_on(label)
    if blocks is None:
        return None
    return Operator(op.space, control=label, blocks=blocks)


def _apply_to_block_factor(op: Operator, state: DensityState) -> DensityState | None:
    label = state.block_label
    space = state.space
    rest = state.rest_space
    bf = state.block_factors
    db, dr, r = bf.shape
    if rest is None:
        return state if op.diagonal_in(label) else None
    arr = bf.reshape((db,) + rest.dims + (r,))
    if label not in op.support:
        arr = _apply_op_axes(op, arr, rest, 1)
    else:
        cop = _label_local(op, label)
        if cop is None:
            return None
        if len(op.support) == 1:
            # a phase per level cancels inside F_n F_n†
            return state
        rest_axes = [1 + rest.index(l) for l in op.support if l != label]
        if cop.basis is not None:
            arr = _apply_diag_controlled(arr, cop.basis, cop.phases, 0, rest_axes)
        else:
            arr = _apply_controlled(arr, cop.blocks, 0, rest_axes)
    return DensityState(space, block_factors=arr.reshape(db, dr, r), block_label=label,
                        check=False)


def _apply_to_blocks(op: Operator, state: DensityState) -> DensityState | None:
    label = state.block_label
    space = state.space
    rest = state.rest_space
    db = space.dim_of(label)
    if rest is None:
        # one-subsystem state: only diagonal operators keep it diagonal
        b = op.controlled_on(label)
        if b is None:
            return None
        ph = b[:, 0, 0]
        return DensityState(space, blocks=state.blocks * np.abs(ph)[:, None, None] ** 2,
                            block_label=label, check=False)
    kr = len(rest.dims)
    arr = state.blocks.reshape((db,) + rest.dims * 2)
    if label not in op.support:
        arr = _apply_op_axes(op, arr, rest, 1)
        arr = _apply_op_axes(op, arr, rest, 1 + kr, conj=True)
    else:
        cop = _label_local(op, label)
        if cop is None:
            return None
        if len(op.support) == 1:
            ph = np.abs(cop.blocks[:, 0, 0]) ** 2
            return DensityState(space, blocks=state.blocks * ph[:, None, None],
                                block_label=label, check=False)
        op_rest = [l for l in op.support if l != label]
        rest_axes = [1 + rest.index(l) for l in op_rest]
        rest_axes_r = [1 + kr + rest.index(l) for l in op_rest]
        if cop.basis is not None:
            arr = _apply_diag_controlled(arr, cop.basis, cop.phases, 0, rest_axes)
            arr = _apply_diag_controlled(arr, cop.basis.conj(), cop.phases.conj(), 0, rest_axes_r)
        else:
            arr = _apply_controlled(arr, cop.blocks, 0, rest_axes)
            arr = _apply_controlled(arr, cop.blocks.conj(), 0, rest_axes_r)
    return DensityState(space, blocks=arr.reshape(db, rest.dim, rest.dim),
                        block_label=label, check=False)


def expect_local(state: DensityState, factors: dict[str, np.ndarray]) -> complex:
    """``Tr[ρ·⊗_label M_label]`` for single-subsystem matrices ``factors``.

    Cheap in every storage form: no operator on the full space is built.
    """
    space = state.space
    factors = {l: np.asarray(m) for l, m in factors.items()}
    for label, m in factors.items():
        d = space.dim_of(label)
        if m.shape != (d, d):
            raise InvalidArgument(f"factor for {label!r} must be {d}x{d}")
    if state.kind == "factor":
        arr = state.factor.reshape(space.dims + (-1,))
        out = arr
        for label, m in factors.items():
            out = _apply_dense(out, m, (space.dim_of(label),), [space.index(label)])
        return complex(np.vdot(arr, out))
    if state.kind in ("blocks", "block_factor"):
        label = state.block_label
        db = space.dim_of(label)
        weights = np.ones(db, dtype=complex)
        if label in factors:
            weights = np.diag(factors[label]).astype(complex)
        rest_factors = {l: m for l, m in factors.items() if l != label}
        rest = state.rest_space
        if state.kind == "block_factor":
            bf = state.block_factors
            if rest is None:
                traces = np.sum(np.abs(bf) ** 2, axis=(1, 2))
            else:
                arr = bf.reshape((db,) + rest.dims + (bf.shape[2],))
                out = arr
                for l, m in rest_factors.items():
                    out = _apply_dense(out, m, (rest.dim_of(l),), [1 + rest.index(l)])
                traces = np.sum((arr.conj() * out).reshape(db, -1), axis=1)
        elif rest is None:
            traces = state.blocks[:, 0, 0]
        else:
            arr = state.blocks.reshape((db,) + rest.dims * 2)
            for l, m in rest_factors.items():
                arr = _apply_dense(arr, m, (rest.dim_of(l),), [1 + rest.index(l)])
            traces = np.trace(arr.reshape(db, rest.dim, rest.dim), axis1=1, axis2=2)
        return complex(np.dot(weights, traces))
    arr = _state_tensor(state)
    for label, m in factors.items():
        arr = _apply_dense(arr, m, (space.dim_of(label),), [space.index(label)])
    return complex(np.trace(arr.reshape(space.dim, space.dim)))


def diagonal_block_factors(state: DensityState, label: str) -> list[np.ndarray]:
    """``F_n`` with ``⟨n|ρ|n⟩ = F_n F_n†`` (operator on the rest) for each level n."""
    space = state.space
    db = space.dim_of(label)
    if state.kind == "block_factor" and state.block_label == label:
        return list(state.block_factors)
    if state.kind == "factor":
        arr = np.moveaxis(state.factor.reshape(space.dims + (-1,)), space.index(label), 0)
        return list(arr.reshape(db, space.dim // db, -1))
    if state.kind == "blocks" and state.block_label == label:
        blocks = state.blocks
    else:
        k = len(space.dims)
        i = space.index(label)
        arr = _state_tensor(state)
        rest = [j for j in range(k) if j != i]
        arr = np.transpose(arr, [i, k + i, *rest, *[k + j for j in rest]])
        dr = space.dim // db
        arr = arr.reshape(db, db, dr, dr)
        blocks = arr[np.arange(db), np.arange(db)]
    out = []
    for b in blocks:
        w, v = np.linalg.eigh((b + b.conj().T) / 2)
        keep = w > RANK_CUTOFF
        out.append(v[:, keep] * np.sqrt(w[keep]))
    return out


def partial_trace(state: DensityState, keep: Sequence[str]) -> DensityState:
    """Reduced state on ``keep`` (kept in the original subsystem order)."""
    keep = list(keep)
    if not keep:
        raise InvalidArgument("keep must be non-empty")
    for l in keep:
        state.space.index(l)
    space = state.space
    out_space = space.restrict(keep)
    if out_space == space:
        return state
    keep_idx = [space.index(l) for l in out_space.labels]
    drop_idx = [i for i in range(len(space.dims)) if i not in keep_idx]
    if state.kind == "factor":
        arr = state.factor.reshape(space.dims + (-1,))
        arr = np.transpose(arr, keep_idx + drop_idx + [len(space.dims)])
        m = arr.reshape(out_space.dim, -1)
        if m.shape[1] < out_space.dim:
            return DensityState(out_space, factor=m, check=False)
        return DensityState(out_space, m @ m.conj().T, check=False)
    if state.kind == "block_factor":
        label = state.block_label
        rest = state.rest_space
        bf = state.block_factors
        db, dr, r = bf.shape
        if label not in keep:
            cols = np.moveaxis(bf, 0, 1).reshape(dr, db * r)
            summed = DensityState(rest, factor=cols, check=False)
            return partial_trace(summed, keep)
        rest_keep = [l for l in out_space.labels if l != label]
        if not rest_keep:
            w = np.sum(np.abs(bf) ** 2, axis=(1, 2))
            return DensityState(out_space, blocks=w[:, None, None], block_label=label,
                                check=False)
        arr = bf.reshape((db,) + rest.dims + (r,))
        rk = [1 + rest.index(l) for l in rest_keep]
        rd = [1 + i for i in range(len(rest.dims)) if 1 + i not in rk]
        arr = np.transpose(arr, [0] + rk + rd + [arr.ndim - 1])
        kd = int(np.prod([rest.dim_of(l) for l in rest_keep]))
        return DensityState(out_space, block_factors=arr.reshape(db, kd, -1), block_label=label,
                            check=False)
    if state.kind == "blocks" and state.block_label not in keep:
        summed = DensityState(state.rest_space, state.blocks.sum(axis=0), check=False)
        return partial_trace(summed, keep)
    if state.kind == "blocks":
        label = state.block_label
        rest = state.rest_space
        rest_keep = [l for l in out_space.labels if l != label]
        db = space.dim_of(label)
        if not rest_keep:
            diag = np.trace(state.blocks, axis1=1, axis2=2)
            return DensityState(out_space, blocks=diag[:, None, None], block_label=label,
                                check=False)
        kr = len(rest.dims)
        arr = state.blocks.reshape((db,) + rest.dims * 2)
        rk = [rest.index(l) for l in rest_keep]
        rd = [i for i in range(kr) if i not in rk]
        sub = "".join(chr(97 + i) for i in range(2 * kr))
        letters = list(sub)
        for i in rd:
            letters[kr + i] = letters[i]
        out = "".join(sub[i] for i in rk) + "".join(letters[kr + i] for i in rk)
        red = np.einsum("Z" + "".join(letters) + "->Z" + out, arr)
        d = int(np.prod([rest.dims[i] for i in rk]))
        return DensityState(out_space, blocks=red.reshape(db, d, d), block_label=label,
                            check=False)
    arr = _state_tensor(state)
    k = len(space.dims)
    letters = [chr(97 + i) for i in range(2 * k)]
    for i in drop_idx:
        letters[k + i] = letters[i]
    out = "".join(letters[i] for i in keep_idx) + "".join(letters[k + i] for i in keep_idx)
    red = np.einsum("".join(letters) + "->" + out, arr)
    return DensityState(out_space, red.reshape(out_space.dim, out_space.dim), check=False)


def partial_transpose(state: DensityState, subsystem: str) -> np.ndarray:
    space = state.space
    i = space.index(subsystem)
    k = len(space.dims)
    arr = _state_tensor(state)
    axes = list(range(2 * k))
    axes[i], axes[k + i] = axes[k + i], axes[i]
    return np.transpose(arr, axes).reshape(space.dim, space.dim)


def trace_norm(matrix) -> float:
    matrix = np.asarray(matrix)
    if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > 1e-10:
        raise InvalidArgument("trace_norm expects a Hermitian matrix")
    return float(np.abs(np.linalg.eigvalsh(matrix)).sum())


def psd_sqrt(matrix) -> np.ndarray:
    """Hermitian square root; eigenvalues in [-1e-6, 0) are clamped to zero."""
    w, v = np.linalg.eigh(np.asarray(matrix))
    if w.size and w.min() < -PSD_FAIL:
        raise NumericalPSDViolation(f"eigenvalue {w.min():.3e} below -{PSD_FAIL}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T
