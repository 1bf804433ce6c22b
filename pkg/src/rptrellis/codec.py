"""Sliding-block decoder built from a random permutation and an inverse CDF,
plus the matched trellis (Viterbi) encoder and a brute-force oracle.

A decoder of length ``L`` and rate ``R`` looks at an L-bit shift register.
Each output symbol shifts ``R`` fresh bits in and emits
``labels[register]``, where ``labels[i] = F^{-1}(b(perm[i]))`` and
``b`` reads the register as a binary fraction (newest bit first) shifted
to the middle of its dyadic cell.  Registers are plain integers with the
newest bit in the most significant position.

The encoder starts from the all-zero register, ties in the path metric go
to the lowest predecessor register, and the reported MSE covers every
symbol including warm-up.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ratedist import ReproductionDistribution, inverse_cdf_of_reproduction
from .sources import make_rng

__all__ = [
    "IDENTITY_SEED",
    "DEFAULT_MEMORY_BUDGET",
    "MAX_L",
    "MemoryBudgetError",
    "SlidingBlockDecoder",
    "TrellisSpec",
    "EncodingResult",
    "b_expansion",
    "b_values",
    "build_decoder",
    "decode",
    "simulate",
    "viterbi_encode",
    "exhaustive_encode",
    "write_bits",
    "read_bits",
]

IDENTITY_SEED = -1
"""Reserved ``permutation_seed`` that selects the identity permutation."""

DEFAULT_MEMORY_BUDGET = 1 << 30
MAX_L = 28
EXHAUSTIVE_MAX_BITS = 24


class MemoryBudgetError(MemoryError):
    pass


def b_expansion(u) -> float:
    """Binary fraction of the bit vector ``u`` (u[0] has weight 1/2) plus half an LSB."""
    bits = np.asarray(u, dtype=np.int64).ravel()
    if bits.size == 0:
        raise ValueError("bit vector must be non-empty")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bit vector entries must be 0 or 1")
    L = bits.size
    reg = 0
    for bit in bits:
        reg = (reg << 1) | int(bit)
    return (reg + 0.5) / float(1 << L)


def b_values(L: int) -> np.ndarray:
    """b of every L-bit register, indexed by the register integer."""
    return (np.arange(1 << L, dtype=np.float64) + 0.5) / float(1 << L)


def _register_from(initial, L):
    if initial is None:
        return 0
    if isinstance(initial, (int, np.integer)):
        reg = int(initial)
    else:
        bits = np.asarray(initial, dtype=np.int64).ravel()
        if bits.size != L or np.any((bits != 0) & (bits != 1)):
            raise ValueError(f"initial register must be {L} bits")
        reg = 0
        for bit in bits:
            reg = (reg << 1) | int(bit)
    if not 0 <= reg < (1 << L):
        raise ValueError(f"initial register {reg} out of range for L={L}")
    return reg


@dataclass(frozen=True, eq=False)
class SlidingBlockDecoder:
    L: int
    R: int
    permutation: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    reproduction: ReproductionDistribution
    permutation_seed: int

    @property
    def num_states(self) -> int:
        return 1 << (self.L - self.R)

    def trellis(self) -> "TrellisSpec":
        return TrellisSpec.from_decoder(self)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "R": self.R,
            "permutation_seed": self.permutation_seed,
            "reproduction": self.reproduction.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> "SlidingBlockDecoder":
        repro = ReproductionDistribution.from_dict(d["reproduction"])
        return build_decoder(repro, int(d["L"]), int(d["R"]), int(d["permutation_seed"]), memory_budget)

    @classmethod
    def from_json(cls, text: str, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> "SlidingBlockDecoder":
        return cls.from_dict(json.loads(text), memory_budget)


@dataclass(frozen=True)
class TrellisSpec:
    """Explicit trellis tables: ``next_state[s, sym]`` and ``branch_label[s, sym]``.

    Meant for inspection and small-L tests; the encoder itself works off
    the label table directly.
    """

    L: int
    R: int
    num_states: int
    branches_per_state: int
    next_state: np.ndarray = field(repr=False)
    branch_label: np.ndarray = field(repr=False)

    @classmethod
    def from_decoder(cls, dec: SlidingBlockDecoder) -> "TrellisSpec":
        L, R = dec.L, dec.R
        S, B = 1 << (L - R), 1 << R
        s = np.arange(S, dtype=np.int64)[:, None]
        sym = np.arange(B, dtype=np.int64)[None, :]
        # register after the step: sym on top, the old state below it
        reg = (sym << (L - R)) | s
        return cls(L, R, S, B, reg >> R, dec.labels[reg])


def _check_LR(L, R):
    if not (isinstance(L, (int, np.integer)) and isinstance(R, (int, np.integer))):
        raise TypeError("L and R must be integers")
    if not 1 <= R < L <= MAX_L:
        raise ValueError(f"need 1 <= R < L <= {MAX_L}, got L={L}, R={R}")


def build_decoder(reproduction: ReproductionDistribution, L: int, R: int, permutation_seed: int,
                  memory_budget: int = DEFAULT_MEMORY_BUDGET) -> SlidingBlockDecoder:
    """Label table ``labels[i] = F^{-1}(b(perm[i]))`` for a seeded random permutation.

    ``permutation_seed == IDENTITY_SEED`` gives the identity permutation.
    The permutation is a Fisher-Yates shuffle driven by the Philox stream
    of ``permutation_seed``.
    """
    _check_LR(L, R)
    size = 1 << L
    need = size * 16  # permutation + labels, 8 bytes each
    if need > memory_budget:
        raise MemoryBudgetError(f"L={L} needs {need} bytes for its tables, budget is {memory_budget}")
    if permutation_seed == IDENTITY_SEED:
        perm = np.arange(size, dtype=np.int64)
    else:
        if permutation_seed < 0:
            raise ValueError(f"permutation seeds must be >= 0 (or IDENTITY_SEED), got {permutation_seed}")
        perm = make_rng(permutation_seed).permutation(size).astype(np.int64)
    labels = np.asarray(inverse_cdf_of_reproduction(reproduction, b_values(L)[perm]), dtype=np.float64)
    if not np.all(np.isfinite(labels)):
        raise ValueError("label table has non-finite entries")
    perm.setflags(write=False)
    labels.setflags(write=False)
    return SlidingBlockDecoder(int(L), int(R), perm, labels, reproduction, int(permutation_seed))


def _symbols(dec, bits):
    sym = np.asarray(bits)
    if sym.ndim != 1:
        raise ValueError("symbol sequence must be one-dimensional")
    if sym.size and (not np.issubdtype(sym.dtype, np.integer)):
        if not np.all(sym == np.floor(sym)):
            raise ValueError("symbols must be integers")
    sym = sym.astype(np.int64)
    if sym.size and (sym.min() < 0 or sym.max() >= (1 << dec.R)):
        raise ValueError(f"symbols must lie in [0, {1 << dec.R})")
    return sym


def decode(decoder: SlidingBlockDecoder, bits, initial_register=0) -> np.ndarray:
    """Decoder output for a sequence of R-bit symbols.

    ``initial_register`` is either an integer or an L-bit vector (newest
    bit first); the first output already includes the first symbol.
    """
    sym = _symbols(decoder, bits)
    reg0 = _register_from(initial_register, decoder.L)
    if sym.size == 0:
        return np.empty(0)
    regs = _kernels.decode_registers(sym, decoder.L, decoder.R, reg0)
    return decoder.labels[regs]


def simulate(decoder: SlidingBlockDecoder, n: int, seed: int) -> np.ndarray:
    """Drive the decoder with fair coin flips: a random initial register, then n symbols."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    reg0 = int(rng.integers(0, 1 << decoder.L))
    sym = rng.integers(0, 1 << decoder.R, size=n, dtype=np.int64)
    return decode(decoder, sym, reg0)


@dataclass(frozen=True, eq=False)
class EncodingResult:
    bits: np.ndarray = field(repr=False)
    reproduction: np.ndarray = field(repr=False)
    mse: float
    snr_db: float
    metric: float = float("nan")

    @property
    def n(self) -> int:
        return int(self.bits.size)


def _result(x, sym, xhat, variance, metric=float("nan")):
    err = x - xhat
    mse = math.fsum(err * err) / x.size
    if not variance > 0:
        snr = math.nan
    else:
        snr = 10.0 * math.log10(variance / mse) if mse > 0 else math.inf
    return EncodingResult(sym, xhat, mse, snr, metric)


def _prepare_input(x):
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.size < 1:
        raise ValueError("x must be a non-empty 1-D sequence")
    if np.isnan(x).any():
        raise ValueError("x contains NaN")
    return x


def backpointer_bytes(L: int, R: int, n: int) -> int:
    return n * (((1 << (L - R)) * R + 7) // 8)


def viterbi_encode(decoder: SlidingBlockDecoder, x, source_variance: float | None = None,
                   memory_budget: int = DEFAULT_MEMORY_BUDGET, scratch_dir: str | None = None,
                   chunk: int = 1 << 16) -> EncodingResult:
    """Full-search Viterbi encoding of ``x`` from the all-zero register.

    Survivors are stored as packed R-bit backpointers, one row per step.
    If they do not fit in ``memory_budget`` they are written to a
    memory-mapped scratch file instead; the search stays exact either way.
    ``source_variance`` feeds the SNR (default: the sample variance of x).
    """
    x = _prepare_input(x)
    L, R, n = decoder.L, decoder.R, x.size
    S = decoder.num_states
    row_bytes = (S * R + 7) // 8
    total = backpointer_bytes(L, R, n)
    scratch = None
    if total <= memory_budget:
        backptr = np.zeros((n, row_bytes), dtype=np.uint8)
    else:
        fd, scratch = tempfile.mkstemp(prefix="viterbi-", suffix=".bp", dir=scratch_dir)
        os.close(fd)
        backptr = np.memmap(scratch, dtype=np.uint8, mode="w+", shape=(n, row_bytes))
    try:
        metric = np.full(S, np.inf)
        metric[0] = 0.0
        offset = 0.0
        labels = np.ascontiguousarray(decoder.labels)
        for t0 in range(0, n, chunk):
            offset += _kernels.viterbi_forward(x[t0:t0 + chunk], labels, L, R, backptr, t0, metric)
        final = int(np.argmin(metric))
        regs = _kernels.viterbi_traceback(backptr, L, R, final, n)
        best = offset + float(metric[final])
    finally:
        if scratch is not None:
            del backptr
            os.unlink(scratch)
    sym = (regs >> (L - R)).astype(np.int64)
    xhat = decoder.labels[regs]
    var = float(np.var(x)) if source_variance is None else float(source_variance)
    return _result(x, sym, xhat, var, best)


def exhaustive_encode(decoder: SlidingBlockDecoder, x, source_variance: float | None = None) -> EncodingResult:
    """Brute force over all 2^(nR) symbol sequences from the all-zero register."""
    x = _prepare_input(x)
    if x.size * decoder.R > EXHAUSTIVE_MAX_BITS:
        raise ValueError(f"exhaustive search limited to n*R <= {EXHAUSTIVE_MAX_BITS}")
    best, sym = _kernels.exhaustive_search(x, np.ascontiguousarray(decoder.labels), decoder.L, decoder.R, 0)
    xhat = decode(decoder, sym, 0)
    var = float(np.var(x)) if source_variance is None else float(source_variance)
    return _result(x, sym.astype(np.int64), xhat, var, float(best))


# Packed symbol files: 8-byte magic, then little-endian uint32 R and
# uint64 symbol count, then the symbols' bits (R per symbol, least
# significant bit first) packed little-endian within each byte.
_MAGIC = b"RPTBITS1"
_HEADER = struct.Struct("<8sIQ")


def write_bits(path, symbols, R: int) -> None:
    sym = np.asarray(symbols, dtype=np.int64)
    if sym.size and (sym.min() < 0 or sym.max() >= (1 << R)):
        raise ValueError("symbol out of range")
    bits = ((sym[:, None] >> np.arange(R)) & 1).astype(np.uint8).ravel()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, R, sym.size))
        fh.write(np.packbits(bits, bitorder="little").tobytes())


def read_bits(path):
    """Returns ``(symbols, R)``."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated bit file header")
        magic, R, n = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError("not a packed symbol file")
        payload = np.frombuffer(fh.read(), dtype=np.uint8)
    nbits = n * R
    if payload.size * 8 < nbits:
        raise ValueError("truncated bit file payload")
    bits = np.unpackbits(payload, bitorder="little")[:nbits].astype(np.int64).reshape(n, R)
    return (bits << np.arange(R)).sum(axis=1), int(R)
