"""Instruction-level data-flow graph fingerprints for detecting target computations."""

__version__ = "0.1.0"
