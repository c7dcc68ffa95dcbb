"""Dense linear algebra over GF(2).

Vectors and matrix rows are bit-packed into Python integers: bit ``j`` of a
row is column ``j``.  Row addition is a single ``^`` on machine words, which
is what makes elimination on 1000x1000 systems cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence


class DimensionError(ValueError):
    """Operand shapes do not conform."""


@dataclass(frozen=True)
class BitVector:
    """Fixed-length vector over GF(2); element ``i`` is bit ``i`` of ``bits``."""

    length: int
    bits: int = 0

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError("bits set beyond vector length")

    @classmethod
    def zeros(cls, length: int) -> BitVector:
        return cls(length, 0)

    @classmethod
    def from_bits(cls, values: Iterable[int]) -> BitVector:
        bits = 0
        n = 0
        for i, v in enumerate(values):
            if v not in (0, 1, True, False):
                raise ValueError(f"element {i} is not a bit: {v!r}")
            bits |= int(v) << i
            n = i + 1
        return cls(n, bits)

    @classmethod
    def from_str(cls, text: str) -> BitVector:
        """Parse ``"0110"``; the first character is element 0."""
        return cls.from_bits(int(ch) for ch in text.strip())

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not -self.length <= i < self.length:
            raise IndexError(i)
        return (self.bits >> (i % self.length)) & 1

    def __iter__(self) -> Iterator[int]:
        return (int(b) for b in self.to_list())

    def __xor__(self, other: BitVector) -> BitVector:
        if self.length != other.length:
            raise DimensionError(f"length {self.length} vs {other.length}")
        return BitVector(self.length, self.bits ^ other.bits)

    def dot(self, other: BitVector) -> int:
        if self.length != other.length:
            raise DimensionError(f"length {self.length} vs {other.length}")
        return (self.bits & other.bits).bit_count() & 1

    def weight(self) -> int:
        return self.bits.bit_count()

    def to_list(self) -> list[int]:
        return [(self.bits >> i) & 1 for i in range(self.length)]

    def __str__(self) -> str:
        return "".join(str(b) for b in self.to_list())


@dataclass(frozen=True)
class BitMatrix:
    """Row-major matrix over GF(2); ``data[i]`` is row ``i`` packed as an int."""

    nrows: int
    ncols: int
    data: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.data) != self.nrows:
            raise ValueError(f"expected {self.nrows} rows, got {len(self.data)}")
        limit = self.ncols
        for i, row in enumerate(self.data):
            if row < 0 or row >> limit:
                raise ValueError(f"row {i} has bits beyond column {limit - 1}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> BitMatrix:
        if not rows:
            return cls(0, 0, ())
        ncols = len(rows[0])
        packed = []
        for r in rows:
            if len(r) != ncols:
                raise DimensionError("ragged rows")
            packed.append(BitVector.from_bits(r).bits)
        return cls(len(rows), ncols, tuple(packed))

    @classmethod
    def from_vectors(cls, vectors: Sequence[BitVector], ncols: Optional[int] = None) -> BitMatrix:
        if ncols is None:
            if not vectors:
                raise ValueError("ncols required for an empty vector list")
            ncols = vectors[0].length
        if any(v.length != ncols for v in vectors):
            raise DimensionError("vector lengths differ from ncols")
        return cls(len(vectors), ncols, tuple(v.bits for v in vectors))

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> BitMatrix:
        return cls(nrows, ncols, (0,) * nrows)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def row(self, i: int) -> BitVector:
        return BitVector(self.ncols, self.data[i])

    def rows(self) -> list[BitVector]:
        return [BitVector(self.ncols, r) for r in self.data]

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        if not 0 <= j < self.ncols:
            raise IndexError(j)
        return (self.data[i] >> j) & 1

    def to_lists(self) -> list[list[int]]:
        return [[(r >> j) & 1 for j in range(self.ncols)] for r in self.data]

    def transpose(self) -> BitMatrix:
        out = [0] * self.ncols
        for i, r in enumerate(self.data):
            while r:
                low = r & -r
                out[low.bit_length() - 1] |= 1 << i
                r ^= low
        return BitMatrix(self.ncols, self.nrows, tuple(out))

    def __matmul__(self, other):
        if isinstance(other, BitMatrix):
            return mat_mul(self, other)
        if isinstance(other, BitVector):
            return mat_vec_mul(self, other)
        return NotImplemented


def identity(n: int) -> BitMatrix:
    if n < 1:
        raise ValueError("identity dimension must be at least 1")
    return BitMatrix(n, n, tuple(1 << i for i in range(n)))


def mat_vec_mul(m: BitMatrix, v: BitVector) -> BitVector:
    if m.ncols != v.length:
        raise DimensionError(f"matrix has {m.ncols} columns, vector has length {v.length}")
    x = v.bits
    out = 0
    for i, r in enumerate(m.data):
        if (r & x).bit_count() & 1:
            out |= 1 << i
    return BitVector(m.nrows, out)


def vec_mat_mul(v: BitVector, m: BitMatrix) -> BitVector:
    """Row vector times matrix: XOR of the rows of ``m`` selected by ``v``."""
    if v.length != m.nrows:
        raise DimensionError(f"vector has length {v.length}, matrix has {m.nrows} rows")
    return BitVector(m.ncols, _combine(m.data, v.bits))


def _combine(rows: Sequence[int], select: int) -> int:
    acc = 0
    while select:
        low = select & -select
        acc ^= rows[low.bit_length() - 1]
        select ^= low
    return acc


def mat_mul(lhs: BitMatrix, rhs: BitMatrix) -> BitMatrix:
    if lhs.ncols != rhs.nrows:
        raise DimensionError(f"cannot multiply {lhs.shape} by {rhs.shape}")
    rows = rhs.data
    return BitMatrix(lhs.nrows, rhs.ncols, tuple(_combine(rows, r) for r in lhs.data))


def mat_pow(m: BitMatrix, e: int) -> BitMatrix:
    """``m ** e`` by square-and-multiply."""
    if m.nrows != m.ncols:
        raise DimensionError(f"matrix power needs a square matrix, got {m.shape}")
    if e < 0:
        raise ValueError("exponent must be non-negative")
    result = identity(m.nrows)
    base = m
    while e:
        if e & 1:
            result = mat_mul(result, base)
        e >>= 1
        if e:
            base = mat_mul(base, base)
    return result


class RowReduction(NamedTuple):
    rref: BitMatrix
    rank: int
    pivot_cols: list[int]


def _eliminate(rows: list[int], ncols: int) -> list[int]:
    """Reduce ``rows`` in place to RREF over the first ``ncols`` columns.

    Bits at positions >= ncols ride along (augmented columns).  Returns the
    pivot columns; pivot ``k`` lives in ``rows[k]``.
    """
    pivots: list[int] = []
    nrows = len(rows)
    top = 0
    for col in range(ncols):
        if top == nrows:
            break
        bit = 1 << col
        for p in range(top, nrows):
            if rows[p] & bit:
                break
        else:
            continue
        rows[top], rows[p] = rows[p], rows[top]
        prow = rows[top]
        for r in range(nrows):
            if r != top and rows[r] & bit:
                rows[r] ^= prow
        pivots.append(col)
        top += 1
    return pivots


def row_reduce(m: BitMatrix) -> RowReduction:
    rows = list(m.data)
    pivots = _eliminate(rows, m.ncols)
    return RowReduction(BitMatrix(m.nrows, m.ncols, tuple(rows)), len(pivots), pivots)


def rank(m: BitMatrix) -> int:
    return row_reduce(m).rank


def solve_linear(a: BitMatrix, o: BitVector) -> Optional[BitVector]:
    """One solution of ``a @ x == o`` with free variables set to 0, else None."""
    if a.nrows != o.length:
        raise DimensionError(f"{a.nrows} equations but {o.length} observations")
    n = a.ncols
    aug = n
    rows = [r | (((o.bits >> i) & 1) << aug) for i, r in enumerate(a.data)]
    pivots = _eliminate(rows, n)
    # rows past the pivot block have zero coefficients; a set RHS bit there is 0 = 1
    for r in rows[len(pivots):]:
        if r >> aug:
            return None
    x = 0
    for k, col in enumerate(pivots):
        if rows[k] >> aug:
            x |= 1 << col
    return BitVector(n, x)


def null_space_basis(a: BitMatrix) -> list[BitVector]:
    red = row_reduce(a)
    rows = red.rref.data
    pivot_set = set(red.pivot_cols)
    basis = []
    for free in range(a.ncols):
        if free in pivot_set:
            continue
        v = 1 << free
        fbit = 1 << free
        for k, col in enumerate(red.pivot_cols):
            if rows[k] & fbit:
                v |= 1 << col
        basis.append(BitVector(a.ncols, v))
    return basis


def in_span(vectors: Sequence[BitVector], v: BitVector) -> bool:
    """True if ``v`` is a GF(2) combination of ``vectors``."""
    rows = [u.bits for u in vectors]
    pivots = _eliminate(rows, v.length)
    x = v.bits
    for k, col in enumerate(pivots):
        if (x >> col) & 1:
            x ^= rows[k]
    return x == 0


class AffineSolution(NamedTuple):
    particular: Optional[BitVector]
    kernel: list[BitVector]
    rank: int


def solve_affine(a: BitMatrix, o: BitVector) -> AffineSolution:
    """Full solution set of ``a @ x == o`` from a single elimination.

    ``particular`` is None when the system is inconsistent; ``kernel`` is
    always a basis of the null space of ``a``.
    """
    if a.nrows != o.length:
        raise DimensionError(f"{a.nrows} equations but {o.length} observations")
    n = a.ncols
    rows = [r | (((o.bits >> i) & 1) << n) for i, r in enumerate(a.data)]
    pivots = _eliminate(rows, n)
    k = len(pivots)
    consistent = all(not (r >> n) for r in rows[k:])
    particular = None
    if consistent:
        x = 0
        for i, col in enumerate(pivots):
            if rows[i] >> n:
                x |= 1 << col
        particular = BitVector(n, x)
    pivot_set = set(pivots)
    kernel = []
    for free in range(n):
        if free in pivot_set:
            continue
        fbit = 1 << free
        v = fbit
        for i, col in enumerate(pivots):
            if rows[i] & fbit:
                v |= 1 << col
        kernel.append(BitVector(n, v))
    return AffineSolution(particular, kernel, k)
