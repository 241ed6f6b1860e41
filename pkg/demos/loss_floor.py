"""Boson loss puts a floor under the SNAP–Rabi error.

Every extra order removes part of the truncation error but adds gates, and
each gate loses a little amplitude. Past a few orders the second effect wins.
The floor rises with the loss rate. This drives the CLI, so it also shows
the row format. Run: python demos/loss_floor.py
"""
import json

from snaprabi.runner import format_rows, parse_config, run_experiment

for loss in (1e-4, 1e-3, 1e-2):
    config = parse_config(json.dumps({
        "method": "snap_rabi", "target": [1, 1, 1.0], "resources": [2, 4, 6, 8],
        "optical_state": {"kind": "prc", "mean_quanta": 1.0},
        "noise": {"d_eta": 1 - loss}, "metrics": ["fidelity"]}))
    rows = run_experiment(config)
    curve = "  ".join(f"N={r['resource_param']}: {1 - r['fidelity']:.2e}" for r in rows)
    print(f"loss {loss:g} per gate  {curve}")

print("\nfirst row as CSV:")
print(format_rows(rows[:1], "csv"))
