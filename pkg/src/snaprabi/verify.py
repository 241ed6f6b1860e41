"""Fast identity and property checks behind ``snaprabi verify``.

Each check returns ``(passed, detail)`` and runs in well under a second.
"""
from __future__ import annotations

import numpy as np

from .hilbert import MODE1, MODE2, QUBIT, DensityState, SpaceDescriptor
from .metrics import negativity, trace_distance
from .noise import boson_loss, qubit_dephasing, qubit_loss
from .sequences import (braiding_conjugation, braiding_rhs, ideal_output, incremental_generator,
                        incremental_unit, operator_distance, run_sequence, sequence_operator,
                        snap_rabi)
from .states import StateSpec, compose, make_state


def _braiding():
    space = SpaceDescriptor.hybrid(6, 20)
    worst = max(operator_distance(sequence_operator(braiding_conjugation(t1, t2, space)),
                                  braiding_rhs(t1, t2, space))
                for t1 in (0.0, 0.7, 1.5) for t2 in (0.0, 0.7, 1.5))
    return worst <= 1e-10, f"max distance {worst:.2e}"


def _snap_exact():
    d1, d2 = 12, 40
    w = np.exp(-np.arange(d1) / 2.0)
    w[10:] = 0
    w /= w.sum()
    m1 = DensityState(SpaceDescriptor(((MODE1, d1),)), blocks=w[:, None, None], block_label=MODE1)
    state = compose(None, m1, make_state(StateSpec("vacuum"), d2, MODE2))
    out = run_sequence(state, snap_rabi(1.0, 10, 1, 1, True, SpaceDescriptor.hybrid(d1, d2)))
    dist = trace_distance(out, ideal_output(state, 1, 1, 1.0))
    return dist <= 1e-8, f"trace distance {dist:.2e}"


def _channels_trace():
    space = SpaceDescriptor.hybrid(3, 4)
    rng = np.random.Generator(np.random.PCG64(7))
    a = rng.normal(size=(space.dim, space.dim)) + 1j * rng.normal(size=(space.dim, space.dim))
    rho = a @ a.conj().T
    state = DensityState(space, rho / np.trace(rho).real)
    outs = [qubit_dephasing(state, 0.3), qubit_loss(state, 0.3),
            boson_loss(state, 0.7, MODE1), boson_loss(state, 0.7, MODE2)]
    err = max(abs(o.trace() - 1) for o in outs)
    return err <= 1e-10, f"max trace error {err:.2e}"


def _bell():
    space = SpaceDescriptor(((QUBIT, 2), ("other", 2)))
    state = DensityState.pure(space, np.array([1, 0, 0, 1]) / np.sqrt(2))
    n = negativity(state, "other")
    return abs(n - 0.5) <= 1e-9, f"negativity {n:.12f}"


def _bch_order():
    space = SpaceDescriptor.hybrid(4, 16)
    eps = (0.1, 0.05, 0.025)
    res = []
    for e in eps:
        exact = incremental_generator(e, space)
        res.append(operator_distance(sequence_operator(incremental_unit(e, space)), exact))
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    return abs(slope - 3) <= 0.3, f"residual exponent {slope:.3f}"


CHECKS = [
    ("braiding identity", _braiding),
    ("snap_rabi exactness", _snap_exact),
    ("channels trace preserving", _channels_trace),
    ("Bell-pair negativity", _bell),
    ("incremental-unit error order", _bch_order),
]
