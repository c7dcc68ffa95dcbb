"""Seed recovery by flushing zeros and solving the resulting GF(2) system.

Every key bit seen by a locking gate is a linear form in the seed.  Because
the LFSR only shifts between feedback steps, stage ``j`` at cycle ``t`` equals
stage 0 at cycle ``t + j``, so all of those forms are drawn from the single
row sequence ``w_k = e_0 T^k`` (see :class:`RowStream`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .gf2 import BitMatrix, BitVector, in_span, solve_affine
from .scansim import ContractError, LfsrSpec, Oracle, ScanDesign

DEFAULT_CAP = 1 << 20
BRUTE_FORCE_MAX_LAMBDA = 20


class ModelMismatchError(RuntimeError):
    """The observed outputs admit no seed: symbolic model and oracle disagree."""


@dataclass(frozen=True)
class CoefficientSystem:
    """``a_matrix @ seed == observations``.

    ``meta[k]`` is the scan-in index (direct scan) or test round (MISR) that
    produced equation ``k``.
    """

    a_matrix: BitMatrix
    observations: BitVector
    meta: tuple[int, ...]
    mode: str

    def __post_init__(self) -> None:
        if self.a_matrix.nrows != self.observations.length:
            raise ValueError("one observation per equation required")
        if len(self.meta) != self.a_matrix.nrows:
            raise ValueError("one meta entry per equation required")


@dataclass(frozen=True)
class SeedSolution:
    particular: BitVector
    kernel_basis: tuple[BitVector, ...]
    rank: int

    @property
    def lam(self) -> int:
        return self.particular.length

    @property
    def nullity(self) -> int:
        return len(self.kernel_basis)

    @property
    def candidate_count(self) -> int:
        return 1 << self.nullity

    @property
    def unique(self) -> bool:
        return not self.kernel_basis

    def contains(self, seed: BitVector) -> bool:
        return in_span(self.kernel_basis, seed ^ self.particular)


class RowStream:
    """Lazily extended rows ``w_k = e_0 T^k`` packed as ints.

    ``w_k . s`` is LFSR stage 0 at cycle ``k``; stage ``j`` at cycle ``t`` is
    ``w_{t+j} . s``.
    """

    def __init__(self, spec: LfsrSpec):
        self.lam = spec.lam
        self._taps = spec.taps.bits
        self._top = 1 << (spec.lam - 1)
        self._rows = [1]

    def _extend(self, k: int) -> None:
        rows = self._rows
        taps, top = self._taps, self._top
        w = rows[-1]
        for _ in range(k + 1 - len(rows)):
            # w T: shift stage i -> i+1, last stage feeds back through the taps
            w = ((w & ~top) << 1) ^ (taps if w & top else 0)
            rows.append(w)

    def __getitem__(self, k: int) -> int:
        if k < 0:
            raise IndexError(k)
        if k >= len(self._rows):
            self._extend(k)
        return self._rows[k]


def collected_indices(design: ScanDesign) -> range:
    """Scan-in indices whose outputs form the direct-scan system."""
    if design.shadow:
        return range(design.n, design.n + design.lam)
    return range(design.lam)


def _check_direct(design: ScanDesign) -> None:
    if design.misr is not None:
        raise ContractError("direct-scan operation called on a MISR design")


def coefficient_row(design: ScanDesign, m: int, stream: Optional[RowStream] = None) -> BitVector:
    """Row ``a`` with ``o_m == a . seed``: sum over gates j of row j of T^(m + j b)."""
    _check_direct(design)
    if m < 0:
        raise ContractError("scan-in index must be non-negative")
    if design.shadow and m < design.n:
        raise ContractError(f"with a shadow chain only outputs m >= N = {design.n} are fully keyed")
    w = stream if stream is not None else RowStream(design.lfsr)
    step = design.b + 1
    acc = 0
    for j in range(design.lam):
        acc ^= w[m + j * step]
    return BitVector(design.lam, acc)


def direct_matrix(design: ScanDesign, stream: Optional[RowStream] = None) -> BitMatrix:
    _check_direct(design)
    w = stream if stream is not None else RowStream(design.lfsr)
    idx = collected_indices(design)
    lam, step = design.lam, design.b + 1
    rows: list[int] = []
    for k, m in enumerate(idx):
        if k < step:
            rows.append(coefficient_row(design, m, w).bits)
        else:
            # a_m = a_{m-step} - w_{m-step} + w_{m-step+lam*step}
            prev = m - step
            rows.append(rows[k - step] ^ w[prev] ^ w[prev + lam * step])
    return BitMatrix(len(rows), lam, tuple(rows))


def observe_direct(design: ScanDesign, oracle: Oracle) -> BitVector:
    if oracle.cycle != 0:
        raise ContractError("oracle must be fresh (cycle 0) to keep the time base")
    idx = collected_indices(design)
    out = oracle.flush_scan(idx.stop)
    return BitVector(len(idx), out.bits >> idx.start)


def build_system(design: ScanDesign, oracle: Oracle) -> CoefficientSystem:
    _check_direct(design)
    obs = observe_direct(design, oracle)
    return CoefficientSystem(direct_matrix(design), obs, tuple(collected_indices(design)), "direct")


def _im_row(design: ScanDesign, w: RowStream, chain: int, t: int) -> int:
    """Linear form of chain ``chain``'s scan-out at global cycle ``t``."""
    n, lam = design.n, design.lam
    inj = t - n
    if design.shadow and inj < lam:
        return 0
    base = inj + chain * n
    acc = 0
    # gate r touched this bit at cycle inj + r; earlier than cycle 0 never happened
    for r in range(max(0, -inj), n):
        acc ^= w[base + 2 * r]
    return acc


def misr_matrix(design: ScanDesign, stream: Optional[RowStream] = None) -> tuple[BitMatrix, tuple[int, ...]]:
    """Signature rows for N back-to-back rounds, h rows per round."""
    if design.misr is None:
        raise ContractError("misr_matrix needs a MISR design")
    w = stream if stream is not None else RowStream(design.lfsr)
    n, h = design.n, design.misr.h
    d = design.misr.taps.to_list()
    rows: list[int] = []
    meta: list[int] = []
    for rho in range(n):
        regs = [0] * h
        t0 = 2 * n * rho
        for k in range(2 * n):
            t = t0 + k
            fb = regs[h - 1]
            nxt = [0] * h
            for i in range(h):
                v = _im_row(design, w, i, t)
                if i:
                    v ^= regs[i - 1]
                if d[i]:
                    v ^= fb
                nxt[i] = v
            regs = nxt
        rows.extend(regs)
        meta.extend([rho] * h)
    return BitMatrix(len(rows), design.lam, tuple(rows)), tuple(meta)


def observe_misr(design: ScanDesign, oracle: Oracle) -> BitVector:
    if oracle.cycle != 0:
        raise ContractError("oracle must be fresh (cycle 0) to keep the time base")
    h = design.misr.h
    bits = 0
    for rho, sig in enumerate(oracle.run_rounds(design.n)):
        bits |= sig.bits << (rho * h)
    return BitVector(design.n * h, bits)


def misr_build_system(design: ScanDesign, oracle: Oracle) -> CoefficientSystem:
    if design.misr is None:
        raise ContractError("misr_build_system needs a MISR design")
    obs = observe_misr(design, oracle)
    a, meta = misr_matrix(design)
    return CoefficientSystem(a, obs, meta, "misr")


def observe(design: ScanDesign, oracle: Oracle) -> BitVector:
    if design.misr is None:
        return observe_direct(design, oracle)
    return observe_misr(design, oracle)


def attack_system(design: ScanDesign, oracle: Oracle) -> CoefficientSystem:
    if design.misr is None:
        return build_system(design, oracle)
    return misr_build_system(design, oracle)


def solve_seed(system: CoefficientSystem) -> SeedSolution:
    sol = solve_affine(system.a_matrix, system.observations)
    if sol.particular is None:
        raise ModelMismatchError(
            f"inconsistent {system.mode} system ({system.a_matrix.nrows} equations, rank {sol.rank})"
        )
    return SeedSolution(sol.particular, tuple(sol.kernel), sol.rank)


def enumerate_seeds(sol: SeedSolution, cap: int = DEFAULT_CAP) -> tuple[list[BitVector], bool]:
    """Candidates ``particular + span(kernel)``, at most ``cap`` of them.

    Returns ``(candidates, exhausted)``; ``exhausted`` is False when the cap
    cut the enumeration short.
    """
    total = sol.candidate_count
    count = min(total, cap)
    lam = sol.lam
    basis = [v.bits for v in sol.kernel_basis]
    x = sol.particular.bits
    out = []
    # Gray-code walk: one basis XOR per candidate
    for i in range(count):
        if i:
            x ^= basis[(i & -i).bit_length() - 1]
        out.append(BitVector(lam, x))
    return out, count == total


def verify_seed(design: ScanDesign, candidate: BitVector, system: CoefficientSystem) -> bool:
    """Replay the flush protocol on a fresh oracle holding ``candidate``."""
    return observe(design, Oracle(design, candidate)) == system.observations


def brute_force_seeds(design: ScanDesign, observations: BitVector) -> list[BitVector]:
    """Every seed whose simulated observations match, by exhaustive simulation.

    All ``2**lam`` seeds run at once, bit-sliced: each signal is an int whose
    bit ``k`` is that signal's value under seed ``k``.  No linear algebra.
    """
    lam = design.lam
    if lam > BRUTE_FORCE_MAX_LAMBDA:
        raise ValueError(f"brute force limited to lambda <= {BRUTE_FORCE_MAX_LAMBDA}")
    lanes = 1 << lam
    every = (1 << lanes) - 1
    stages = []
    for j in range(lam):
        period = 1 << (j + 1)
        half = 1 << j
        repeat = every // ((1 << period) - 1)
        stages.append((((1 << half) - 1) << half) * repeat)
    taps = design.lfsr.taps.to_list()
    n = design.n
    match = every

    def lfsr_advance() -> None:
        fb = 0
        for j in range(lam):
            if taps[j]:
                fb ^= stages[j]
        del stages[0]
        stages.append(fb)

    def live(cycle: int, pos: int) -> bool:
        return not design.shadow or cycle >= lam + pos

    if design.misr is None:
        idx = collected_indices(design)
        if observations.length != len(idx):
            raise ValueError("observation count does not match the flush protocol")
        chain = [0] * n
        gates = {j * design.b: j for j in range(lam)}
        for cycle in range(idx.stop + n):
            out = chain[-1]
            chain = [0] + chain[:-1]
            for pos, j in gates.items():
                if live(cycle, pos):
                    chain[pos] ^= stages[j]
            lfsr_advance()
            m = cycle - n
            if m in idx:
                want = observations[m - idx.start]
                match &= out if want else ~out
        return _lanes_to_seeds(match & every, lam)

    h = design.misr.h
    d = design.misr.taps.to_list()
    if observations.length != n * h:
        raise ValueError("observation count does not match N rounds of h bits")
    chains = [[0] * n for _ in range(h)]
    cycle = 0
    for rho in range(n):
        regs = [0] * h
        for _ in range(2 * n):
            outs = []
            for i in range(h):
                c = chains[i]
                outs.append(c[-1])
                c = [0] + c[:-1]
                for r in range(n):
                    if live(cycle, r):
                        c[r] ^= stages[r + i * n]
                chains[i] = c
            fb = regs[h - 1]
            regs = [
                outs[i] ^ (regs[i - 1] if i else 0) ^ (fb if d[i] else 0) for i in range(h)
            ]
            lfsr_advance()
            cycle += 1
        for i in range(h):
            want = observations[rho * h + i]
            match &= regs[i] if want else ~regs[i]
    return _lanes_to_seeds(match & every, lam)


def _lanes_to_seeds(match: int, lam: int) -> list[BitVector]:
    seeds = []
    while match:
        low = match & -match
        seeds.append(BitVector(lam, low.bit_length() - 1))
        match ^= low
    return seeds


def candidate_set(sol: SeedSolution, cap: int = DEFAULT_CAP) -> set[int]:
    cands, _ = enumerate_seeds(sol, cap)
    return {c.bits for c in cands}


def recover(design: ScanDesign, oracle: Oracle) -> tuple[CoefficientSystem, SeedSolution]:
    """Run the whole attack against a fresh oracle."""
    system = attack_system(design, oracle)
    return system, solve_seed(system)


__all__: Sequence[str] = [
    "DEFAULT_CAP",
    "CoefficientSystem",
    "ModelMismatchError",
    "RowStream",
    "SeedSolution",
    "attack_system",
    "brute_force_seeds",
    "build_system",
    "coefficient_row",
    "collected_indices",
    "direct_matrix",
    "enumerate_seeds",
    "misr_build_system",
    "misr_matrix",
    "observe",
    "recover",
    "solve_seed",
    "verify_seed",
]
