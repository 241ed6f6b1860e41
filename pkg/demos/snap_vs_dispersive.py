"""How fast each synthesis of exp(iT n1 X2) approaches the target as it spends more gates.

SNAP–Rabi handles one Fock level per step, so its error falls off with the
Poisson tail of the input. The dispersive–Rabi product shrinks its error only
as 1/M. Run: python demos/snap_vs_dispersive.py
"""
from snaprabi.hilbert import MODE2, SpaceDescriptor
from snaprabi.metrics import fidelity
from snaprabi.sequences import dispersive_rabi_method, ideal_output, run_sequence, snap_rabi
from snaprabi.states import StateSpec, compose, make_state

T = 1.0
D1, D2 = 16, 69

space = SpaceDescriptor.hybrid(D1, D2)
probe = compose(None, make_state(StateSpec("prc", mean_quanta=1.0), D1),
                make_state(StateSpec("vacuum"), D2, MODE2))
target = ideal_output(probe, 1, 1, T)

print("SNAP-Rabi: one extra Fock level per step")
print(f"{'N':>4} {'resource':>10} {'1-F':>10}")
for n in (2, 4, 6, 8, 10):
    seq = snap_rabi(T, n, 1, 1, True, space)
    print(f"{n:>4} {seq.total_resource:>10.2f} {1 - fidelity(target, run_sequence(probe, seq)):>10.2e}")

print("\nDispersive-Rabi: M repetitions of a four-gate cycle")
print(f"{'M':>4} {'resource':>10} {'1-F':>10}")
for m in (4, 16, 64, 166):
    seq = dispersive_rabi_method(T, m, 1, space)
    print(f"{m:>4} {seq.total_resource:>10.2f} {1 - fidelity(target, run_sequence(probe, seq)):>10.2e}")

print("\nAt M = 166 the dispersive product spends what SNAP-Rabi spends at N = 10,")
print("and its error is still more than five orders of magnitude larger.")
