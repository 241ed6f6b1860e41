"""Qubit-mediated simulation of two-oscillator nonlinear couplings on truncated Fock spaces."""
from .errors import (ConfigError, CutoffTooSmall, DegenerateProjection, InsufficientData,
                     InvalidArgument, NumericalPSDViolation, UndefinedMetric)
from .hilbert import MODE1, MODE2, QUBIT, DensityState, Operator, SpaceDescriptor
from .noise import NoiseModel
from .states import StateSpec, compose, make_state, random_superposition
from .gates import Gate, ideal_target
from .sequences import GateSequence, run_sequence

__version__ = "0.1.0"
