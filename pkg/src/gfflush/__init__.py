"""Algebraic seed recovery for LFSR-obfuscated scan chains."""

from .attack import (
    CoefficientSystem,
    ModelMismatchError,
    SeedSolution,
    brute_force_seeds,
    build_system,
    coefficient_row,
    enumerate_seeds,
    misr_build_system,
    recover,
    solve_seed,
    verify_seed,
)
from .gf2 import BitMatrix, BitVector
from .scansim import ContractError, LfsrSpec, MisrSpec, Oracle, ScanChainSpec, ScanDesign

__version__ = "0.1.0"
