"""Cycle-accurate model of an LFSR-obfuscated scan chain.

Timing convention: positions in a chain are numbered from the scan-in side.
The bit injected at cycle ``m`` sits at position ``p`` during cycle ``m + p``
and appears on scan-out at cycle ``m + N``.  Locking gate ``j`` of a direct
chain sits at position ``j * b`` and is keyed by LFSR stage ``j``; in MISR
mode chain ``i`` has a gate at every position ``r`` keyed by stage
``r + i * N``.

The shadow chain holds the key enable back: the gate at position ``p`` only
fires from cycle ``lam + p`` onwards, so every bit injected before cycle
``lam`` (and every bit resident at reset) leaves the chain unkeyed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .gf2 import BitMatrix, BitVector, mat_pow, mat_vec_mul


@dataclass(frozen=True)
class LfsrSpec:
    """Fibonacci LFSR: f_i <- f_{i+1}, f_{lam-1} <- sum_j c_j f_j."""

    lam: int
    taps: BitVector

    def __post_init__(self) -> None:
        if self.lam < 2:
            raise ValueError("LFSR needs at least 2 stages")
        if self.taps.length != self.lam:
            raise ValueError(f"taps has length {self.taps.length}, expected {self.lam}")
        if self.taps.bits == 0:
            raise ValueError("taps must not be all zero")

    def transition_matrix(self) -> BitMatrix:
        lam = self.lam
        rows = [1 << (i + 1) for i in range(lam - 1)]
        rows.append(self.taps.bits)
        return BitMatrix(lam, lam, tuple(rows))


@dataclass(frozen=True)
class ScanChainSpec:
    n: int
    num_gates: int
    b: int = 1
    shadow: bool = True

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError("gate spacing b must be at least 1")
        if self.n != self.num_gates * self.b:
            raise ValueError(f"chain length {self.n} != num_gates * b = {self.num_gates * self.b}")


@dataclass(frozen=True)
class MisrSpec:
    h: int
    taps: BitVector

    def __post_init__(self) -> None:
        if self.h < 1:
            raise ValueError("MISR length h must be at least 1")
        if self.taps.length != self.h:
            raise ValueError(f"MISR taps has length {self.taps.length}, expected {self.h}")


@dataclass(frozen=True)
class ScanDesign:
    """Everything the attacker knows about the locked scan path (not the seed)."""

    lfsr: LfsrSpec
    chain: ScanChainSpec
    misr: Optional[MisrSpec] = None

    def __post_init__(self) -> None:
        if self.misr is None:
            if self.chain.num_gates != self.lfsr.lam:
                raise ValueError("direct scan needs one gate per LFSR stage")
        else:
            if self.chain.b != 1 or self.chain.num_gates != self.chain.n:
                raise ValueError("MISR chains carry a gate on every flip-flop (b = 1)")
            if self.lfsr.lam != self.misr.h * self.chain.n:
                raise ValueError(
                    f"lambda = {self.lfsr.lam} must equal h * N = {self.misr.h * self.chain.n}"
                )

    @classmethod
    def direct(cls, taps: BitVector, b: int = 1, shadow: bool = True) -> ScanDesign:
        lam = taps.length
        return cls(LfsrSpec(lam, taps), ScanChainSpec(lam * b, lam, b, shadow))

    @classmethod
    def with_misr(
        cls, taps: BitVector, h: int, misr_taps: Optional[BitVector] = None, shadow: bool = False
    ) -> ScanDesign:
        lam = taps.length
        if lam % h:
            raise ValueError(f"lambda = {lam} is not a multiple of h = {h}")
        n = lam // h
        if misr_taps is None:
            misr_taps = BitVector(h, (1 << h) - 1)
        return cls(LfsrSpec(lam, taps), ScanChainSpec(n, n, 1, shadow), MisrSpec(h, misr_taps))

    @property
    def lam(self) -> int:
        return self.lfsr.lam

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def b(self) -> int:
        return self.chain.b

    @property
    def h(self) -> Optional[int]:
        return None if self.misr is None else self.misr.h

    @property
    def shadow(self) -> bool:
        return self.chain.shadow


def _lfsr_next(bits: int, taps: int, lam: int) -> int:
    fb = (bits & taps).bit_count() & 1
    return (bits >> 1) | (fb << (lam - 1))


def lfsr_step(spec: LfsrSpec, state: BitVector) -> BitVector:
    if state.length != spec.lam:
        raise ValueError(f"state has length {state.length}, expected {spec.lam}")
    return BitVector(spec.lam, _lfsr_next(state.bits, spec.taps.bits, spec.lam))


def lfsr_state_at(spec: LfsrSpec, seed: BitVector, t: int) -> BitVector:
    """LFSR contents after ``t`` steps from ``seed``, via the transition matrix power."""
    if seed.length != spec.lam:
        raise ValueError(f"seed has length {seed.length}, expected {spec.lam}")
    return mat_vec_mul(mat_pow(spec.transition_matrix(), t), seed)


class ContractError(RuntimeError):
    """An oracle or attack operation was called outside its precondition."""


class Oracle:
    """Working scan path with the secret seed loaded, driven one clock at a time."""

    def __init__(self, design: ScanDesign, seed: BitVector):
        if seed.length != design.lam:
            raise ValueError(f"seed has length {seed.length}, expected {design.lam}")
        self.design = design
        self.lfsr = seed.bits
        nchains = 1 if design.misr is None else design.misr.h
        self.chains = [0] * nchains
        self.misr = 0
        self.cycle = 0
        self._taps = design.lfsr.taps.bits
        self._chain_mask = (1 << design.n) - 1
        self._top = design.n - 1
        self._gate_positions = [j * design.b for j in range(design.chain.num_gates)]

    @property
    def lfsr_state(self) -> BitVector:
        return BitVector(self.design.lam, self.lfsr)

    def _enabled(self) -> int:
        # positions whose gate is live this cycle
        if not self.design.shadow:
            return self._chain_mask
        live = self.cycle - self.design.lam + 1
        if live <= 0:
            return 0
        return self._chain_mask if live > self._top else (1 << live) - 1

    def _keys(self, i: int) -> int:
        d = self.design
        if d.misr is not None:
            return (self.lfsr >> (i * d.n)) & self._chain_mask
        if d.b == 1:
            return self.lfsr
        mask = 0
        f = self.lfsr
        for pos in self._gate_positions:
            mask |= (f & 1) << pos
            f >>= 1
        return mask

    def step(self, scan_in: int = 0) -> int:
        """Advance one clock; returns scan-out bits (bit ``i`` for chain ``i``)."""
        enabled = self._enabled()
        out = 0
        for i, c in enumerate(self.chains):
            out |= ((c >> self._top) & 1) << i
            c = ((c << 1) | ((scan_in >> i) & 1)) & self._chain_mask
            self.chains[i] = c ^ (self._keys(i) & enabled)
        misr = self.design.misr
        if misr is not None:
            h = misr.h
            fb = (self.misr >> (h - 1)) & 1
            self.misr = ((self.misr << 1) & ((1 << h) - 1)) ^ out ^ (misr.taps.bits if fb else 0)
        self.lfsr = _lfsr_next(self.lfsr, self._taps, self.design.lam)
        self.cycle += 1
        return out

    def flush_scan(self, num_outputs: int) -> BitVector:
        """Shift zeros in; bit ``m`` of the result belongs to the ``m``-th zero injected."""
        if self.design.misr is not None:
            raise ContractError("flush_scan needs direct scan-out access (no MISR)")
        n = self.design.n
        bits = 0
        for k in range(num_outputs + n):
            o = self.step(0)
            if k >= n:
                bits |= o << (k - n)
        return BitVector(num_outputs, bits)

    def misr_round(self) -> BitVector:
        """Reset the MISR, clock 2N zeros through all chains, read the signature."""
        if self.design.misr is None:
            raise ContractError("misr_round needs a MISR")
        self.misr = 0
        for _ in range(2 * self.design.n):
            self.step(0)
        return BitVector(self.design.misr.h, self.misr)

    def run_rounds(self, rounds: int) -> list[BitVector]:
        return [self.misr_round() for _ in range(rounds)]
