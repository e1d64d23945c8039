"""Block encodings that trade stuck-at errors for harmless ones.

Three reversible transforms operate on a 512-bit block holding 16 32-bit
words (16 float32 weights, or 64 uint8 weights grouped 4 per word):

* remap      — permute the 16 word slots by XOR-ing slot indices with a
               4-bit key, so data lands on cells whose stuck state agrees.
* invert     — complement the whole block; turns a single mismatching
               stuck cell into a matching one.
* switch     — rotate each weight word so its most significant bits sit on
               cells that would otherwise corrupt them (rotate by 4 for
               8-bit weights, by 10 for 32-bit weights).

A block's chosen combination is recorded in 6 fault-free auxiliary bits:
key (4) then invert flag then switch flag, giving the 64-point search
space enumerated by `ALL_CONFIGS`.  An error-correcting-pointers baseline
(`ecp_correct`) and the storage-overhead formulas live here too.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .bitops import as_bit_array
from .memory import AUX_BITS, PAYLOAD_BITS, FaultMap, apply_faults

REMAP_SLOTS = 16
SLOT_BITS = 32
KEY_BITS = 4
N_CONFIGS = 64


class Precision(enum.Enum):
    """Weight storage width; fixes word size and the switch rotation."""

    FP32 = "fp32"
    U8 = "u8"

    @property
    def word_bits(self) -> int:
        return 32 if self is Precision.FP32 else 8

    @property
    def weights_per_block(self) -> int:
        return PAYLOAD_BITS // self.word_bits

    @property
    def rotation(self) -> int:
        # 8-bit weights swap their 4 MSBs with their 4 LSBs; 32-bit weights
        # rotate the 10 MSBs down (any rotation > 5 clears the exponent).
        return 10 if self is Precision.FP32 else 4


@dataclass(frozen=True, order=True)
class EncodingConfig:
    """One point of the encoding search space: (xor_key, invert, switch)."""

    xor_key: int
    invert: bool = False
    switch: bool = False

    def __post_init__(self):
        if not 0 <= self.xor_key < (1 << KEY_BITS):
            raise ValueError(f"xor_key must be a 4-bit value, got {self.xor_key}")

    @property
    def aux_code(self) -> int:
        """6-bit integer form: key in bits 0-3, invert bit 4, switch bit 5."""
        return self.xor_key | (int(self.invert) << 4) | (int(self.switch) << 5)

    def aux(self) -> np.ndarray:
        """The 6 auxiliary bits, LSB of the code first."""
        code = self.aux_code
        return np.array([(code >> i) & 1 for i in range(AUX_BITS)], dtype=np.uint8)

    @classmethod
    def from_aux_code(cls, code: int) -> "EncodingConfig":
        if not 0 <= code < N_CONFIGS:
            raise ValueError(f"aux code must be in [0, 64), got {code}")
        return cls(xor_key=code & 0xF, invert=bool(code & 0x10), switch=bool(code & 0x20))

    @classmethod
    def from_aux(cls, bits: np.ndarray) -> "EncodingConfig":
        bits = as_bit_array(bits, AUX_BITS)
        code = int(np.dot(bits.astype(np.int64), 1 << np.arange(AUX_BITS)))
        return cls.from_aux_code(code)


#: All 64 configurations in ascending aux-code order.  The nested scheme
#: spaces are prefixes of this ordering: identity, remap-only (16),
#: remap+invert (32), full (64).
ALL_CONFIGS: tuple[EncodingConfig, ...] = tuple(EncodingConfig.from_aux_code(c) for c in range(N_CONFIGS))
REMAP_CONFIGS = ALL_CONFIGS[:16]
REMAP_INVERT_CONFIGS = ALL_CONFIGS[:32]
IDENTITY_CONFIG = ALL_CONFIGS[0]


def remap(payload: np.ndarray, xor_key: int) -> np.ndarray:
    """Permute the 16 32-bit slots: output slot (i XOR key) = input slot i.

    Self-inverse for any fixed key.  Accepts batched payloads (last axis).
    """
    if not 0 <= xor_key < (1 << KEY_BITS):
        raise ValueError(f"xor_key must be a 4-bit value, got {xor_key}")
    payload = as_bit_array(payload, PAYLOAD_BITS)
    slots = payload.reshape(payload.shape[:-1] + (REMAP_SLOTS, SLOT_BITS))
    perm = np.arange(REMAP_SLOTS) ^ xor_key
    return slots[..., perm, :].reshape(payload.shape)


def invert(payload: np.ndarray) -> np.ndarray:
    """Complement every payload bit; self-inverse."""
    payload = as_bit_array(payload, PAYLOAD_BITS)
    return payload ^ 1


def switch_bits(payload: np.ndarray, precision: Precision,
                direction: Literal["encode", "decode"] = "encode") -> np.ndarray:
    """Rotate each weight word left by the precision's rotation on encode,
    right on decode.  Word boundaries are respected."""
    if direction not in ("encode", "decode"):
        raise ValueError(f"direction must be 'encode' or 'decode', got {direction!r}")
    payload = as_bit_array(payload, PAYLOAD_BITS)
    width = precision.word_bits
    rot = precision.rotation if direction == "encode" else -precision.rotation
    words = payload.reshape(payload.shape[:-1] + (PAYLOAD_BITS // width, width))
    # bit index == significance, so a value rotate-left by r shifts bit k to
    # position (k + r) mod width, i.e. np.roll along the word axis.
    return np.roll(words, rot, axis=-1).reshape(payload.shape)


def encode(payload: np.ndarray, config: EncodingConfig, precision: Precision) -> np.ndarray:
    """Apply remap, then optional inversion, then optional bit switching."""
    out = remap(payload, config.xor_key)
    if config.invert:
        out = invert(out)
    if config.switch:
        out = switch_bits(out, precision, "encode")
    return out


def decode(payload: np.ndarray, config: EncodingConfig, precision: Precision) -> np.ndarray:
    """Exact inverse of :func:`encode` for the same config and precision."""
    out = as_bit_array(payload, PAYLOAD_BITS)
    if config.switch:
        out = switch_bits(out, precision, "decode")
    if config.invert:
        out = invert(out)
    return remap(out, config.xor_key)


def ecp_correct(desired: np.ndarray, fault_map: FaultMap, offset: int = 0, n: int = 1) -> np.ndarray:
    """Readout of a 512-bit block under an n-pointer error-correcting scheme.

    Each pointer repairs one stuck cell whose value disagrees with the
    desired bit; pointers are spent on mismatches in ascending bit order.
    Pointer storage itself is modeled as fault-free.
    """
    desired = as_bit_array(desired, PAYLOAD_BITS)
    if desired.ndim != 1:
        raise ValueError("ecp_correct expects a single block")
    if n < 0:
        raise ValueError("pointer count must be non-negative")
    readout = apply_faults(desired, fault_map, offset)
    positions, values = fault_map.slice_range(offset, PAYLOAD_BITS)
    mismatched = positions[values != desired[positions]]
    fixed = mismatched[:n]
    readout[fixed] = desired[fixed]
    return readout


def ecp_overhead(n: int, d: int) -> float:
    """Storage overhead of n error-correcting pointers over a d-bit block:
    (1 + n + n*ceil(log2 d)) / d."""
    if d <= 0:
        raise ValueError("block size must be positive")
    if d < 2 or d & (d - 1):
        raise ValueError(f"block size must be a power of two >= 2, got {d}")
    if n < 0:
        raise ValueError("pointer count must be non-negative")
    return (1 + n + n * math.ceil(math.log2(d))) / d


def craft_overhead(aux_bits: int, data_bits: int) -> float:
    """Auxiliary-bit storage overhead: aux_bits / data_bits."""
    if data_bits <= 0:
        raise ValueError("data_bits must be positive")
    if aux_bits < 0:
        raise ValueError("aux_bits must be non-negative")
    return aux_bits / data_bits
